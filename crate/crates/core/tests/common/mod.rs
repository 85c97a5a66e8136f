//! Shared oracles for the integration tests. Nothing here calls the engine's
//! own matching or congruence logic; checks are full scans of public state.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap, HashSet};

use mba_core::egraph::{ClassId, EGraph, ENode, Label};
use mba_core::expr::{BitWidth, Expr, Name, Op};
use mba_core::rewrite::{apply_match, new_node_estimate, parse_rules, search, Pattern, Rule};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const DEFAULT_RULES: &str = include_str!("../../rules/default.rules");

pub fn default_rules() -> Vec<Rule> {
    parse_rules(DEFAULT_RULES).unwrap()
}

/// Full-scan check of a rebuilt e-graph: canonical ids, sorted duplicate-free
/// classes, hashcons agreement, global node uniqueness (which makes
/// congruence closure hold), and parent bookkeeping.
pub fn assert_invariants(g: &EGraph) {
    assert!(g.is_clean(), "graph not rebuilt");
    let mut seen: HashMap<ENode, ClassId> = HashMap::new();
    let mut total = 0;
    for class in g.classes() {
        assert_eq!(g.find(class.id).unwrap(), class.id, "stored class is not canonical");
        assert!(!class.nodes.is_empty(), "empty class {}", class.id);
        assert!(
            class.nodes.windows(2).all(|w| w[0] < w[1]),
            "class {} nodes unsorted or duplicated",
            class.id
        );
        for node in &class.nodes {
            total += 1;
            for &c in &node.children {
                assert_eq!(g.find(c).unwrap(), c, "non-canonical child in class {}", class.id);
                let child = g.class(c).expect("child class exists");
                assert!(
                    child
                        .parents()
                        .iter()
                        .any(|(p, pc)| g.canonicalize(p) == *node && g.find(*pc).unwrap() == class.id),
                    "class {c} lacks parent entry for {node}"
                );
            }
            assert_eq!(g.lookup(node), Some(class.id), "hashcons disagrees for {node}");
            if let Some(other) = seen.insert(node.clone(), class.id) {
                panic!("congruent node {node} in classes {other} and {}", class.id);
            }
        }
    }
    assert_eq!(total, g.node_count(), "hashcons size differs from node total");
}

/// Naive congruence closure over a flat list of added nodes. Element `i` is
/// the node added by the `i`-th add, with children given as element indices.
#[derive(Default)]
pub struct Partition {
    nodes: Vec<(Label, Vec<usize>)>,
    unions: Vec<(usize, usize)>,
}

impl Partition {
    pub fn push(&mut self, label: Label, children: Vec<usize>) -> usize {
        self.nodes.push((label, children));
        self.nodes.len() - 1
    }

    pub fn union(&mut self, a: usize, b: usize) {
        self.unions.push((a, b));
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    /// Block number of every element.
    pub fn blocks(&self) -> Vec<usize> {
        let n = self.nodes.len();
        let mut block: Vec<usize> = (0..n).collect();
        let merge = |block: &mut Vec<usize>, a: usize, b: usize| {
            let (keep, gone) = (block[a].min(block[b]), block[a].max(block[b]));
            if keep == gone {
                return false;
            }
            block.iter_mut().filter(|x| **x == gone).for_each(|x| *x = keep);
            true
        };
        loop {
            let mut changed = false;
            for &(a, b) in &self.unions {
                changed |= merge(&mut block, a, b);
            }
            for i in 0..n {
                for j in i + 1..n {
                    let (li, ci) = &self.nodes[i];
                    let (lj, cj) = &self.nodes[j];
                    if li == lj
                        && ci.len() == cj.len()
                        && ci.iter().zip(cj).all(|(&x, &y)| block[x] == block[y])
                    {
                        changed |= merge(&mut block, i, j);
                    }
                }
            }
            if !changed {
                return block;
            }
        }
    }

    /// Asserts `g` groups the elements exactly as the oracle does.
    pub fn assert_agrees(&self, g: &EGraph, ids: &[ClassId]) {
        let block = self.blocks();
        for i in 0..ids.len() {
            for j in i + 1..ids.len() {
                let same_g = g.find(ids[i]).unwrap() == g.find(ids[j]).unwrap();
                assert_eq!(
                    same_g,
                    block[i] == block[j],
                    "elements {i} and {j} disagree with the oracle"
                );
            }
        }
    }
}

/// Random operations on e-graphs with invariant and oracle checks after every
/// rebuild. A fresh graph is started whenever `max_nodes` is reached.
pub struct Stress {
    pub adds: usize,
    pub unions: usize,
    pub applications: usize,
    pub rebuilds: usize,
    pub graphs: usize,
}

struct Tracked {
    g: EGraph,
    oracle: Partition,
    ids: Vec<ClassId>,
}

impl Tracked {
    fn new() -> Self {
        Tracked {
            g: EGraph::new(BitWidth::W8),
            oracle: Partition::default(),
            ids: Vec::new(),
        }
    }

    fn add(&mut self, label: Label, children: Vec<usize>) -> usize {
        let node = ENode {
            label: label.clone(),
            children: children.iter().map(|&c| self.ids[c]).collect(),
        };
        let id = self.g.add(node).unwrap();
        self.ids.push(id);
        self.oracle.push(label, children)
    }

    fn rebuild_and_check(&mut self) {
        self.g.rebuild();
        assert_invariants(&self.g);
        self.oracle.assert_agrees(&self.g, &self.ids);
    }

    /// Element whose class is `class`; every class has one because every
    /// node enters through `add`.
    fn element_of(&self, class: ClassId) -> usize {
        (0..self.ids.len())
            .find(|&i| self.g.find(self.ids[i]).unwrap() == class)
            .expect("every class holds an element")
    }

    /// Records the nodes a rule application added, mirroring `instantiate`.
    fn record_rhs(&mut self, pat: &Pattern, bound: &BTreeMap<Name, usize>) -> usize {
        let (label, children) = match pat {
            Pattern::Hole(v) => return bound[v],
            Pattern::Var(name) => (Label::Var(name.clone()), vec![]),
            Pattern::Const(c) => (Label::Const(self.g.width().reduce(*c)), vec![]),
            Pattern::Op(op, kids) => (
                Label::Op(*op),
                kids.iter().map(|k| self.record_rhs(k, bound)).collect(),
            ),
        };
        let node = ENode {
            label: label.clone(),
            children: children.iter().map(|&c| self.ids[c]).collect(),
        };
        let id = self.g.lookup(&node).expect("applied right-hand side is present");
        self.ids.push(id);
        self.oracle.push(label, children)
    }
}

fn random_label(rng: &mut impl Rng, elements: usize) -> (Label, usize) {
    const LEAVES: [&str; 3] = ["x", "y", "z"];
    if elements == 0 || rng.gen_bool(0.3) {
        if rng.gen_bool(0.7) {
            (Label::Var(LEAVES.choose(rng).unwrap().to_string().into()), 0)
        } else {
            (Label::Const(rng.gen_range(0..4)), 0)
        }
    } else {
        let op = *Op::ALL.choose(rng).unwrap();
        (Label::Op(op), op.arity())
    }
}

pub fn stress(seed: u64, operations: usize, max_nodes: usize) -> Stress {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rules = default_rules();
    let mut stats = Stress {
        adds: 0,
        unions: 0,
        applications: 0,
        rebuilds: 0,
        graphs: 1,
    };
    let mut t = Tracked::new();
    for _ in 0..operations {
        if t.g.node_count() >= max_nodes {
            t.rebuild_and_check();
            t = Tracked::new();
            stats.graphs += 1;
        }
        let roll: f64 = rng.gen();
        let n = t.ids.len();
        if roll < 0.5 || n < 2 {
            let (label, arity) = random_label(&mut rng, n);
            let children = (0..arity).map(|_| rng.gen_range(0..n)).collect();
            t.add(label, children);
            stats.adds += 1;
        } else if roll < 0.75 {
            let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
            t.g.union(t.ids[a], t.ids[b]).unwrap();
            t.oracle.union(a, b);
            stats.unions += 1;
        } else if roll < 0.9 {
            t.rebuild_and_check();
            stats.rebuilds += 1;
            let rule = rules.choose(&mut rng).unwrap();
            let matches = search(&t.g, rule);
            let Some(m) = matches.choose(&mut rng) else {
                continue;
            };
            if t.g.node_count() + new_node_estimate(&t.g, &rule.rhs, &m.subst) > max_nodes {
                continue;
            }
            let root = t.element_of(m.root);
            let bound: BTreeMap<Name, usize> = m
                .subst
                .bindings()
                .iter()
                .map(|(v, c)| (v.clone(), t.element_of(*c)))
                .collect();
            apply_match(&mut t.g, rule, m).unwrap();
            t.g.rebuild();
            let rhs = t.record_rhs(&rule.rhs, &bound);
            t.oracle.union(root, rhs);
            stats.applications += 1;
        } else {
            t.rebuild_and_check();
            stats.rebuilds += 1;
        }
    }
    t.rebuild_and_check();
    stats.rebuilds += 1;
    stats
}

/// Every match of `pat` found by trying all assignments of holes to classes
/// and instantiating bottom-up through the hashcons.
pub fn brute_force_matches(g: &EGraph, pat: &Pattern) -> HashSet<(ClassId, Vec<(Name, ClassId)>)> {
    fn instance(g: &EGraph, pat: &Pattern, env: &BTreeMap<Name, ClassId>) -> Option<ClassId> {
        let node = match pat {
            Pattern::Hole(v) => return Some(env[v]),
            Pattern::Var(name) => ENode::leaf(Label::Var(name.clone())),
            Pattern::Const(c) => ENode::leaf(Label::Const(g.width().reduce(*c))),
            Pattern::Op(op, kids) => ENode::op(
                *op,
                kids.iter().map(|k| instance(g, k, env)).collect::<Option<Vec<_>>>()?,
            ),
        };
        g.lookup(&node)
    }
    let holes: Vec<Name> = pat.holes().into_iter().collect();
    let classes: Vec<ClassId> = g.classes().map(|c| c.id).collect();
    let mut out = HashSet::new();
    let mut choice = vec![0usize; holes.len()];
    loop {
        let env: BTreeMap<Name, ClassId> =
            holes.iter().cloned().zip(choice.iter().map(|&i| classes[i])).collect();
        if let Some(root) = instance(g, pat, &env) {
            out.insert((root, env.into_iter().collect()));
        }
        // odometer over class choices
        let mut k = 0;
        loop {
            if k == choice.len() {
                return out;
            }
            choice[k] += 1;
            if choice[k] < classes.len() {
                break;
            }
            choice[k] = 0;
            k += 1;
        }
    }
}

/// Strategy for expressions over `vars` with at most `depth` nesting.
pub fn arb_expr(vars: &'static [&'static str], depth: u32) -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        4 => proptest::sample::select(vars).prop_map(Expr::var),
        1 => any::<u64>().prop_map(Expr::Const),
        1 => (0u64..16).prop_map(Expr::Const),
    ];
    leaf.prop_recursive(depth, 64, 2, |inner| {
        prop_oneof![
            (proptest::sample::select(&[Op::Neg, Op::Not][..]), inner.clone())
                .prop_map(|(op, a)| Expr::unary(op, a)),
            (
                proptest::sample::select(&[Op::Add, Op::Sub, Op::Mul, Op::And, Op::Or, Op::Xor][..]),
                inner.clone(),
                inner
            )
                .prop_map(|(op, a, b)| Expr::binary(op, a, b)),
        ]
    })
}

pub fn env(pairs: &[(&str, u64)]) -> BTreeMap<Name, u64> {
    pairs.iter().map(|&(k, v)| (Name::from(k), v)).collect()
}
