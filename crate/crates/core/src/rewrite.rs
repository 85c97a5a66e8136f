//! Rewrite rules, e-matching and rule application.
//!
//! Rule files hold one rule per line:
//!
//! ```text
//! # comment
//! addor : ?a + ?b => (?a | ?b) + (?a & ?b)
//! mulid : ?y * 1 <=> ?y
//! ```
//!
//! A `<=>` rule expands into two directed rules, the reverse one named
//! `<name>-rev`.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use thiserror::Error;

use crate::egraph::{ClassId, EGraph, EGraphError, ENode, Label};
use crate::expr::{parse_tree, BitWidth, Expr, Name, Op, ParseError, Tree};

/// An expression tree whose leaves may also be pattern variables (`?a`).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Pattern {
    Hole(Name),
    Var(Name),
    Const(u64),
    Op(Op, Vec<Pattern>),
}

impl Pattern {
    pub fn parse(text: &str) -> Result<Pattern, ParseError> {
        parse_tree(text, true).map(Pattern::from_tree)
    }

    fn from_tree(tree: Tree) -> Pattern {
        match tree {
            Tree::Var(name) => Pattern::Var(name),
            Tree::Hole(name) => Pattern::Hole(name),
            Tree::Const(v) => Pattern::Const(v),
            Tree::Op(op, children) => {
                Pattern::Op(op, children.into_iter().map(Pattern::from_tree).collect())
            }
        }
    }

    /// Pattern variables, sorted by name.
    pub fn holes(&self) -> BTreeSet<Name> {
        let mut out = BTreeSet::new();
        self.collect_holes(&mut out);
        out
    }

    fn collect_holes(&self, out: &mut BTreeSet<Name>) {
        match self {
            Pattern::Hole(name) => {
                out.insert(name.clone());
            }
            Pattern::Op(_, children) => children.iter().for_each(|c| c.collect_holes(out)),
            _ => {}
        }
    }

    /// The pattern as a plain expression, with `?a` turned into a variable
    /// named `?a`. Used to evaluate both sides of a rule.
    pub fn to_expr(&self, width: BitWidth) -> Expr {
        match self {
            Pattern::Hole(name) => Expr::Var(Name::from(format!("?{name}"))),
            Pattern::Var(name) => Expr::Var(name.clone()),
            Pattern::Const(v) => Expr::Const(width.reduce(*v)),
            Pattern::Op(op, children) => {
                Expr::Op(*op, children.iter().map(|c| c.to_expr(width)).collect())
            }
        }
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pattern::Hole(name) => write!(f, "?{name}"),
            Pattern::Var(name) => f.write_str(name),
            Pattern::Const(v) => write!(f, "{v}"),
            Pattern::Op(op, children) => match children.as_slice() {
                [a] => write!(f, "({} {a})", op.symbol()),
                [a, b] => write!(f, "({a} {} {b})", op.symbol()),
                _ => unreachable!(),
            },
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RuleError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("rule `{rule}`: right-hand side uses unbound variable `?{var}`")]
    UnboundRhsVar { rule: String, var: Name },
    #[error("line {line}: duplicate rule name `{name}`")]
    DuplicateName { line: usize, name: String },
}

/// A directed rewrite `lhs => rhs`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rule {
    pub name: String,
    pub lhs: Pattern,
    pub rhs: Pattern,
    /// Set when the rule came from a `<=>` declaration.
    pub bidirectional: bool,
}

impl Rule {
    pub fn new(name: impl Into<String>, lhs: Pattern, rhs: Pattern) -> Result<Rule, RuleError> {
        let name = name.into();
        let bound = lhs.holes();
        if let Some(var) = rhs.holes().into_iter().find(|v| !bound.contains(v)) {
            return Err(RuleError::UnboundRhsVar { rule: name, var });
        }
        Ok(Rule {
            name,
            lhs,
            rhs,
            bidirectional: false,
        })
    }

    /// Parses `lhs => rhs` (without a name).
    pub fn parse(name: &str, text: &str) -> Result<Rule, RuleError> {
        let rules = parse_rule_line(name, text, 1)?;
        match <[Rule; 1]>::try_from(rules) {
            Ok([rule]) => Ok(rule),
            Err(_) => Err(RuleError::Syntax {
                line: 1,
                message: "expected a directed rule".into(),
            }),
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} : {} => {}", self.name, self.lhs, self.rhs)
    }
}

fn is_rule_name(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

fn parse_rule_line(name: &str, body: &str, line: usize) -> Result<Vec<Rule>, RuleError> {
    let syntax = |message: String| RuleError::Syntax { line, message };
    let (arrow, bidirectional) = match body.find("<=>") {
        Some(i) => (i, true),
        None => (
            body.find("=>")
                .ok_or_else(|| syntax("expected `=>` or `<=>`".into()))?,
            false,
        ),
    };
    let rhs_start = arrow + if bidirectional { 3 } else { 2 };
    // columns are reported relative to the text after the rule name
    let side = |text: &str, offset: usize| {
        Pattern::parse(text)
            .map_err(|e| syntax(format!("column {}: {}", offset + e.column, e.message)))
    };
    let lhs = side(&body[..arrow], 0)?;
    let rhs = side(&body[rhs_start..], body[..rhs_start].chars().count())?;
    let mut rules = vec![Rule::new(name, lhs.clone(), rhs.clone())?];
    if bidirectional {
        rules.push(Rule::new(format!("{name}-rev"), rhs, lhs)?);
        for rule in &mut rules {
            rule.bidirectional = true;
        }
    }
    Ok(rules)
}

/// Parses a rule file. Blank lines and lines starting with `#` are skipped.
pub fn parse_rules(text: &str) -> Result<Vec<Rule>, RuleError> {
    let mut rules = Vec::new();
    let mut names = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (name, body) = trimmed.split_once(':').ok_or_else(|| RuleError::Syntax {
            line,
            message: "expected `name : lhs => rhs`".into(),
        })?;
        let name = name.trim();
        if !is_rule_name(name) {
            return Err(RuleError::Syntax {
                line,
                message: format!("invalid rule name `{name}`"),
            });
        }
        if !names.insert(name.to_string()) {
            return Err(RuleError::DuplicateName {
                line,
                name: name.to_string(),
            });
        }
        rules.extend(parse_rule_line(name, body, line)?);
    }
    Ok(rules)
}

/// Bindings of pattern variables to classes, sorted by variable name.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Subst(Vec<(Name, ClassId)>);

impl Subst {
    pub fn get(&self, var: &str) -> Option<ClassId> {
        self.0
            .binary_search_by(|(name, _)| (**name).cmp(var))
            .ok()
            .map(|i| self.0[i].1)
    }

    pub fn bindings(&self) -> &[(Name, ClassId)] {
        &self.0
    }

    fn bind(&self, var: &Name, id: ClassId) -> Subst {
        let mut out = self.clone();
        let at = out.0.partition_point(|(name, _)| name < var);
        out.0.insert(at, (var.clone(), id));
        out
    }
}

impl fmt::Display for Subst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (name, id)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "?{name} -> {id}")?;
        }
        f.write_str("}")
    }
}

/// A place where a pattern occurs: the class it was found in and the
/// bindings that instantiate it.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Match {
    pub root: ClassId,
    pub subst: Subst,
}

fn match_class(g: &EGraph, pat: &Pattern, class: ClassId, subst: Subst, out: &mut Vec<Subst>) {
    let class = g.canonical(class);
    let nodes = &g.class(class).expect("canonical class").nodes;
    match pat {
        Pattern::Hole(var) => match subst.get(var) {
            Some(bound) if g.canonical(bound) == class => out.push(subst),
            Some(_) => {}
            None => out.push(subst.bind(var, class)),
        },
        Pattern::Var(name) => {
            if nodes.iter().any(|n| matches!(&n.label, Label::Var(v) if v == name)) {
                out.push(subst);
            }
        }
        Pattern::Const(c) => {
            let c = g.width().reduce(*c);
            if nodes.iter().any(|n| n.label == Label::Const(c)) {
                out.push(subst);
            }
        }
        Pattern::Op(op, kids) => {
            for node in nodes.iter().filter(|n| n.label == Label::Op(*op)) {
                let mut partial = vec![subst.clone()];
                for (kid, &child) in kids.iter().zip(&node.children) {
                    let mut next = Vec::new();
                    for s in partial {
                        match_class(g, kid, child, s, &mut next);
                    }
                    partial = next;
                    if partial.is_empty() {
                        break;
                    }
                }
                out.extend(partial);
            }
        }
    }
}

/// All matches of `pat` in `g`, ordered by root id and then bindings.
/// The graph should be rebuilt.
pub fn ematch(g: &EGraph, pat: &Pattern) -> Vec<Match> {
    let mut matches = Vec::new();
    for class in g.classes() {
        let mut substs = Vec::new();
        match_class(g, pat, class.id, Subst::default(), &mut substs);
        substs.sort();
        substs.dedup();
        matches.extend(substs.into_iter().map(|subst| Match {
            root: class.id,
            subst,
        }));
    }
    matches
}

/// Matches of a rule's left-hand side. A rule whose left-hand side is a lone
/// pattern variable does not fire on classes that contain a constant, so
/// constants are left as they are.
pub fn search(g: &EGraph, rule: &Rule) -> Vec<Match> {
    let mut matches = ematch(g, &rule.lhs);
    if matches!(rule.lhs, Pattern::Hole(_)) {
        matches.retain(|m| {
            !g.class(m.root)
                .is_some_and(|c| c.nodes.iter().any(|n| matches!(n.label, Label::Const(_))))
        });
    }
    matches
}

fn instantiate(g: &mut EGraph, pat: &Pattern, subst: &Subst) -> Result<ClassId, EGraphError> {
    match pat {
        Pattern::Hole(var) => {
            let id = subst.get(var).expect("rule right-hand side bound by left-hand side");
            g.find(id)
        }
        Pattern::Var(name) => g.add(ENode::leaf(Label::Var(name.clone()))),
        Pattern::Const(c) => {
            let c = g.width().reduce(*c);
            g.add(ENode::leaf(Label::Const(c)))
        }
        Pattern::Op(op, kids) => {
            let children = kids
                .iter()
                .map(|k| instantiate(g, k, subst))
                .collect::<Result<Vec<_>, _>>()?;
            g.add(ENode::op(*op, children))
        }
    }
}

/// Adds the rule's right-hand side under `m.subst` and merges it with the
/// matched class. Returns whether the graph changed. The graph must be
/// rebuilt before the next round of matching.
pub fn apply_match(g: &mut EGraph, rule: &Rule, m: &Match) -> Result<bool, EGraphError> {
    let before = g.node_count();
    let id = instantiate(g, &rule.rhs, &m.subst)?;
    let (_, merged) = g.union(m.root, id)?;
    Ok(merged || g.node_count() != before)
}

#[derive(Clone, PartialEq, Eq, Hash)]
enum Slot {
    Existing(ClassId),
    Fresh(usize),
}

/// Upper bound on the number of e-nodes `apply_match` would add.
pub fn new_node_estimate(g: &EGraph, pat: &Pattern, subst: &Subst) -> usize {
    fn walk(
        g: &EGraph,
        pat: &Pattern,
        subst: &Subst,
        fresh: &mut HashMap<(Label, Vec<Slot>), usize>,
    ) -> Slot {
        let (label, children) = match pat {
            Pattern::Hole(var) => return Slot::Existing(g.canonical(subst.get(var).unwrap())),
            Pattern::Var(name) => (Label::Var(name.clone()), Vec::new()),
            Pattern::Const(c) => (Label::Const(g.width().reduce(*c)), Vec::new()),
            Pattern::Op(op, kids) => (
                Label::Op(*op),
                kids.iter().map(|k| walk(g, k, subst, fresh)).collect::<Vec<_>>(),
            ),
        };
        let existing: Option<Vec<ClassId>> = children
            .iter()
            .map(|s| match s {
                Slot::Existing(id) => Some(*id),
                Slot::Fresh(_) => None,
            })
            .collect();
        if let Some(ids) = existing {
            let node = ENode {
                label: label.clone(),
                children: ids,
            };
            if let Some(id) = g.lookup(&node) {
                return Slot::Existing(id);
            }
        }
        let next = fresh.len();
        Slot::Fresh(*fresh.entry((label, children)).or_insert(next))
    }
    let mut fresh = HashMap::new();
    walk(g, pat, subst, &mut fresh);
    fresh.len()
}
