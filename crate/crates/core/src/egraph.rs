//! Hashconsed e-graph with union-find canonicalization and deferred
//! congruence repair.

use std::collections::hash_map::Entry;
use std::collections::HashMap;
use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::expr::{BitWidth, Expr, Name, Op};

/// Canonical or non-canonical e-class identifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ClassId(u32);

impl ClassId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for ClassId {
    fn from(i: usize) -> Self {
        ClassId(u32::try_from(i).expect("class id overflow"))
    }
}

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EGraphError {
    #[error("e-graph capacity of {cap} nodes exceeded")]
    CapacityExceeded { cap: usize },
    #[error("invalid e-class id {0}")]
    InvalidId(ClassId),
}

/// Node label. The derived order is the tie-break order used by extraction.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Const(u64),
    Var(Name),
    Op(Op),
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Const(v) => write!(f, "{v}"),
            Label::Var(name) => f.write_str(name),
            Label::Op(op) => f.write_str(op.label()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ENode {
    pub label: Label,
    pub children: Vec<ClassId>,
}

impl ENode {
    pub fn leaf(label: Label) -> Self {
        ENode {
            label,
            children: Vec::new(),
        }
    }

    pub fn op(op: Op, children: Vec<ClassId>) -> Self {
        debug_assert_eq!(op.arity(), children.len());
        ENode {
            label: Label::Op(op),
            children,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

impl fmt::Display for ENode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.label)?;
        if !self.children.is_empty() {
            f.write_char('(')?;
            for (i, c) in self.children.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{c}")?;
            }
            f.write_char(')')?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct EClass {
    pub id: ClassId,
    /// Sorted and duplicate-free once the graph is rebuilt.
    pub nodes: Vec<ENode>,
    parents: Vec<(ENode, ClassId)>,
}

impl EClass {
    pub fn parents(&self) -> &[(ENode, ClassId)] {
        &self.parents
    }
}

#[derive(Clone, Debug)]
pub struct EGraph {
    width: BitWidth,
    union_find: Vec<ClassId>,
    memo: HashMap<ENode, ClassId>,
    classes: Vec<Option<EClass>>,
    pending: Vec<(ENode, ClassId)>,
    capacity: Option<usize>,
    clean: bool,
}

impl EGraph {
    pub fn new(width: BitWidth) -> Self {
        EGraph {
            width,
            union_find: Vec::new(),
            memo: HashMap::new(),
            classes: Vec::new(),
            pending: Vec::new(),
            capacity: None,
            clean: true,
        }
    }

    /// Hard cap on the number of e-nodes; `add` fails beyond it.
    pub fn with_capacity_limit(mut self, cap: usize) -> Self {
        self.capacity = Some(cap);
        self
    }

    pub fn width(&self) -> BitWidth {
        self.width
    }

    /// Number of canonical e-nodes. Exact only in the rebuilt state.
    pub fn node_count(&self) -> usize {
        self.memo.len()
    }

    pub fn class_count(&self) -> usize {
        self.classes.iter().flatten().count()
    }

    pub fn is_clean(&self) -> bool {
        self.clean && self.pending.is_empty()
    }

    /// Live classes in increasing id order.
    pub fn classes(&self) -> impl Iterator<Item = &EClass> {
        self.classes.iter().flatten()
    }

    /// The class with canonical id `id`.
    pub fn class(&self, id: ClassId) -> Option<&EClass> {
        self.classes.get(id.index()).and_then(Option::as_ref)
    }

    pub fn find(&self, id: ClassId) -> Result<ClassId, EGraphError> {
        if id.index() >= self.union_find.len() {
            return Err(EGraphError::InvalidId(id));
        }
        Ok(self.canonical(id))
    }

    pub(crate) fn canonical(&self, mut id: ClassId) -> ClassId {
        while self.union_find[id.index()] != id {
            id = self.union_find[id.index()];
        }
        id
    }

    fn find_compress(&mut self, id: ClassId) -> ClassId {
        let root = self.canonical(id);
        let mut cur = id;
        while cur != root {
            let next = self.union_find[cur.index()];
            self.union_find[cur.index()] = root;
            cur = next;
        }
        root
    }

    pub fn canonicalize(&self, node: &ENode) -> ENode {
        ENode {
            label: node.label.clone(),
            children: node.children.iter().map(|&c| self.canonical(c)).collect(),
        }
    }

    /// Class already holding `node` (after canonicalizing its children).
    pub fn lookup(&self, node: &ENode) -> Option<ClassId> {
        self.memo
            .get(&self.canonicalize(node))
            .map(|&id| self.canonical(id))
    }

    pub fn add(&mut self, node: ENode) -> Result<ClassId, EGraphError> {
        for &c in &node.children {
            self.find(c)?;
        }
        let node = self.canonicalize(&node);
        if let Some(&id) = self.memo.get(&node) {
            return Ok(self.canonical(id));
        }
        if let Some(cap) = self.capacity {
            if self.memo.len() >= cap {
                return Err(EGraphError::CapacityExceeded { cap });
            }
        }
        let id = ClassId::from(self.classes.len());
        self.union_find.push(id);
        let mut children = node.children.clone();
        children.sort_unstable();
        children.dedup();
        for child in children {
            self.classes[child.index()]
                .as_mut()
                .expect("canonical child")
                .parents
                .push((node.clone(), id));
        }
        self.classes.push(Some(EClass {
            id,
            nodes: vec![node.clone()],
            parents: Vec::new(),
        }));
        self.memo.insert(node, id);
        Ok(id)
    }

    /// Inserts `expr` bottom-up and returns the class of its root.
    pub fn add_expr(&mut self, expr: &Expr) -> Result<ClassId, EGraphError> {
        let node = match expr {
            Expr::Var(name) => ENode::leaf(Label::Var(name.clone())),
            Expr::Const(v) => ENode::leaf(Label::Const(self.width.reduce(*v))),
            Expr::Op(op, children) => {
                let ids = children
                    .iter()
                    .map(|c| self.add_expr(c))
                    .collect::<Result<Vec<_>, _>>()?;
                ENode::op(*op, ids)
            }
        };
        self.add(node)
    }

    /// Merges two classes. The smaller canonical id becomes the
    /// representative. Call [`EGraph::rebuild`] before matching again.
    pub fn union(&mut self, a: ClassId, b: ClassId) -> Result<(ClassId, bool), EGraphError> {
        self.find(a)?;
        self.find(b)?;
        Ok(self.union_roots(a, b))
    }

    fn union_roots(&mut self, a: ClassId, b: ClassId) -> (ClassId, bool) {
        let a = self.find_compress(a);
        let b = self.find_compress(b);
        if a == b {
            return (a, false);
        }
        let (root, other) = if a < b { (a, b) } else { (b, a) };
        self.union_find[other.index()] = root;
        let merged = self.classes[other.index()].take().expect("live class");
        self.pending.extend(merged.parents.iter().cloned());
        let class = self.classes[root.index()].as_mut().expect("live class");
        class.nodes.extend(merged.nodes);
        class.parents.extend(merged.parents);
        self.clean = false;
        (root, true)
    }

    /// Restores the hashcons and congruence invariants. Returns the number of
    /// congruence merges performed.
    pub fn rebuild(&mut self) -> usize {
        if self.is_clean() {
            return 0;
        }
        let mut repairs = 0;
        loop {
            while let Some((node, class)) = self.pending.pop() {
                self.memo.remove(&node);
                let node = self.canonicalize(&node);
                let class = self.find_compress(class);
                match self.memo.get(&node) {
                    Some(&other) => {
                        if self.union_roots(other, class).1 {
                            repairs += 1;
                        }
                    }
                    None => {
                        self.memo.insert(node, class);
                    }
                }
            }
            let conflicts = self.rebuild_classes();
            if conflicts.is_empty() && self.pending.is_empty() {
                break;
            }
            for (a, b) in conflicts {
                if self.union_roots(a, b).1 {
                    repairs += 1;
                }
            }
        }
        self.clean = true;
        repairs
    }

    /// Recanonicalizes every class and regenerates the hashcons and parent
    /// lists. Returns pairs of classes found holding the same node.
    fn rebuild_classes(&mut self) -> Vec<(ClassId, ClassId)> {
        for i in 0..self.classes.len() {
            let Some(mut nodes) = self.classes[i].as_mut().map(|c| std::mem::take(&mut c.nodes))
            else {
                continue;
            };
            for node in &mut nodes {
                for child in &mut node.children {
                    *child = self.canonical(*child);
                }
            }
            nodes.sort_unstable();
            nodes.dedup();
            let class = self.classes[i].as_mut().unwrap();
            class.nodes = nodes;
            class.parents.clear();
        }

        self.memo.clear();
        let mut conflicts = Vec::new();
        let mut parents: Vec<(ClassId, ENode, ClassId)> = Vec::new();
        for class in self.classes.iter().flatten() {
            for node in &class.nodes {
                match self.memo.entry(node.clone()) {
                    Entry::Occupied(o) => conflicts.push((*o.get(), class.id)),
                    Entry::Vacant(v) => {
                        v.insert(class.id);
                    }
                }
                let mut children = node.children.clone();
                children.sort_unstable();
                children.dedup();
                for child in children {
                    parents.push((child, node.clone(), class.id));
                }
            }
        }
        for (child, node, id) in parents {
            self.classes[child.index()]
                .as_mut()
                .expect("canonical child")
                .parents
                .push((node, id));
        }
        conflicts
    }

    /// Text snapshot, one `class <id>: {node, node, ...}` line per class.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for class in self.classes() {
            let nodes: Vec<String> = class.nodes.iter().map(ToString::to_string).collect();
            writeln!(out, "class {}: {{{}}}", class.id, nodes.join(", ")).unwrap();
        }
        out
    }

    /// Graphviz rendering with one dashed cluster per e-class.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph egraph {\n  compound=true;\n  clusterrank=local;\n");
        for class in self.classes() {
            writeln!(out, "  subgraph cluster_{} {{\n    style=dashed;", class.id).unwrap();
            for (i, node) in class.nodes.iter().enumerate() {
                writeln!(out, "    \"{}.{}\" [label=\"{}\"];", class.id, i, node.label).unwrap();
            }
            out.push_str("  }\n");
        }
        for class in self.classes() {
            for (i, node) in class.nodes.iter().enumerate() {
                for &child in &node.children {
                    let child = self.canonical(child);
                    writeln!(
                        out,
                        "  \"{}.{}\" -> \"{}.0\" [lhead=cluster_{}];",
                        class.id, i, child, child
                    )
                    .unwrap();
                }
            }
        }
        out.push_str("}\n");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn graph_of(exprs: &[&str]) -> (EGraph, Vec<ClassId>) {
        let mut g = EGraph::new(BitWidth::W64);
        let ids = exprs
            .iter()
            .map(|s| g.add_expr(&parse(s, BitWidth::W64).unwrap()).unwrap())
            .collect();
        (g, ids)
    }

    #[test]
    fn x_plus_y_has_three_classes() {
        let (g, _) = graph_of(&["x + y"]);
        assert_eq!(g.class_count(), 3);
        assert_eq!(g.node_count(), 3);
    }

    #[test]
    fn hashcons_idempotence() {
        let (g, ids) = graph_of(&["x + y", "x + y"]);
        assert_eq!(ids[0], ids[1]);
        assert_eq!(g.node_count(), 3);
    }

    #[test]
    fn shared_subterms() {
        let (g, _) = graph_of(&["(x + y) + (x + y)"]);
        assert_eq!(g.class_count(), 4);
        assert_eq!(g.node_count(), 4);
    }

    #[test]
    fn empty_graph() {
        let g = EGraph::new(BitWidth::W8);
        assert_eq!(g.node_count(), 0);
        assert_eq!(g.class_count(), 0);
    }

    #[test]
    fn self_union_and_idempotence() {
        let (mut g, ids) = graph_of(&["x", "y"]);
        assert_eq!(g.union(ids[0], ids[0]), Ok((ids[0], false)));
        assert_eq!(g.union(ids[0], ids[1]), Ok((ids[0], true)));
        assert_eq!(g.union(ids[1], ids[0]), Ok((ids[0], false)));
        assert_eq!(g.find(ids[1]), Ok(ids[0]));
    }

    #[test]
    fn invalid_ids() {
        let (mut g, _) = graph_of(&["x"]);
        let bogus = ClassId::from(7);
        assert_eq!(g.find(bogus), Err(EGraphError::InvalidId(bogus)));
        assert_eq!(g.union(bogus, ClassId::from(0)), Err(EGraphError::InvalidId(bogus)));
        assert!(g.add(ENode::op(Op::Not, vec![bogus])).is_err());
    }

    #[test]
    fn congruence_after_union() {
        let (mut g, ids) = graph_of(&["~a", "~b", "a", "b"]);
        g.union(ids[2], ids[3]).unwrap();
        assert_ne!(g.find(ids[0]), g.find(ids[1]));
        assert_eq!(g.rebuild(), 1);
        assert_eq!(g.find(ids[0]), g.find(ids[1]));
        assert_eq!(g.rebuild(), 0);
        assert_eq!(g.node_count(), 3);
    }

    #[test]
    fn upward_congruence_chains() {
        let (mut g, ids) = graph_of(&["~~~a", "~~~b", "a", "b"]);
        g.union(ids[2], ids[3]).unwrap();
        assert_eq!(g.rebuild(), 3);
        assert_eq!(g.find(ids[0]), g.find(ids[1]));
    }

    #[test]
    fn figure_one_union() {
        let (mut g, ids) = graph_of(&["x + y", "y * 1", "y"]);
        g.union(ids[1], ids[2]).unwrap();
        g.rebuild();
        let y = g.find(ids[2]).unwrap();
        let class = g.class(y).unwrap();
        let labels: Vec<String> = class.nodes.iter().map(|n| n.label.to_string()).collect();
        assert_eq!(labels, ["y", "*"]);
        // The multiplication node now refers to its own class.
        assert!(class.nodes[1].children.contains(&y));
    }

    #[test]
    fn capacity_limit() {
        let mut g = EGraph::new(BitWidth::W64).with_capacity_limit(2);
        let e = parse("x + y", BitWidth::W64).unwrap();
        assert_eq!(g.add_expr(&e), Err(EGraphError::CapacityExceeded { cap: 2 }));
        // existing nodes still resolve at capacity
        assert!(g.add_expr(&Expr::var("x")).is_ok());
    }

    #[test]
    fn dump_format() {
        let (g, _) = graph_of(&["x + y"]);
        assert_eq!(g.dump(), "class 0: {x}\nclass 1: {y}\nclass 2: {+(0, 1)}\n");
        assert!(g.to_dot().contains("subgraph cluster_2"));
    }
}
