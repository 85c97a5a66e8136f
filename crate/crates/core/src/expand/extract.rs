//! Term extraction: depth-capped maximizing extraction for obfuscation and
//! the classic minimizing extraction.

use thiserror::Error;

use crate::egraph::{ClassId, EGraph, ENode, Label};
use crate::expr::Expr;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExtractError {
    #[error("no term for e-class {0} within the extraction depth")]
    Unextractable(ClassId),
    #[error("smallest extractable term has {estimate} nodes, above the limit of {limit}")]
    OutputTooLarge { estimate: u64, limit: u64 },
}

#[derive(Clone, Copy, Debug)]
enum Choice {
    Node(usize),
    Carry,
}

#[derive(Clone, Copy, Debug)]
struct Cell {
    cost: u64,
    choice: Choice,
}

/// Round-indexed table: `rounds[r][class]` is the largest term rooted in
/// `class` with depth at most `r` and at most `budget` nodes.
struct MaxTable {
    rounds: Vec<Vec<Option<Cell>>>,
}

fn node_cost(node: &ENode, prev: &[Option<Cell>]) -> Option<u64> {
    node.children.iter().try_fold(1u64, |acc, c| {
        prev[c.index()].map(|cell| acc.saturating_add(cell.cost))
    })
}

impl MaxTable {
    fn build(g: &EGraph, rounds: usize, budget: u64) -> MaxTable {
        let slots = g.classes().map(|c| c.id.index() + 1).max().unwrap_or(0);
        let mut table = Vec::with_capacity(rounds + 1);

        let mut base = vec![None; slots];
        for class in g.classes() {
            if let Some(i) = class.nodes.iter().position(ENode::is_leaf) {
                base[class.id.index()] = Some(Cell {
                    cost: 1,
                    choice: Choice::Node(i),
                });
            }
        }
        table.push(base);

        for r in 1..=rounds {
            let prev = &table[r - 1];
            let mut cur = vec![None; slots];
            for class in g.classes() {
                let mut best: Option<Cell> = None;
                for (i, node) in class.nodes.iter().enumerate() {
                    let Some(cost) = node_cost(node, prev) else {
                        continue;
                    };
                    if cost <= budget && best.is_none_or(|b| cost > b.cost) {
                        best = Some(Cell {
                            cost,
                            choice: Choice::Node(i),
                        });
                    }
                }
                if let Some(carried) = prev[class.id.index()] {
                    if best.is_none_or(|b| carried.cost > b.cost) {
                        best = Some(Cell {
                            cost: carried.cost,
                            choice: Choice::Carry,
                        });
                    }
                }
                cur[class.id.index()] = best;
            }
            table.push(cur);
        }
        MaxTable { rounds: table }
    }

    fn cost(&self, round: usize, class: ClassId) -> Option<u64> {
        self.rounds[round][class.index()].map(|c| c.cost)
    }

    fn term(&self, g: &EGraph, mut round: usize, class: ClassId) -> Expr {
        loop {
            let cell = self.rounds[round][class.index()].expect("defined cell");
            match cell.choice {
                Choice::Carry => round -= 1,
                Choice::Node(i) => {
                    let node = &g.class(class).unwrap().nodes[i];
                    return build(node, |child| self.term(g, round - 1, child));
                }
            }
        }
    }
}

fn build(node: &ENode, mut child: impl FnMut(ClassId) -> Expr) -> Expr {
    match &node.label {
        Label::Var(name) => Expr::Var(name.clone()),
        Label::Const(v) => Expr::Const(*v),
        Label::Op(op) => Expr::Op(*op, node.children.iter().map(|&c| child(c)).collect()),
    }
}

/// Size of the term [`extract_max`] would return, without building it.
pub fn max_cost(g: &EGraph, root: ClassId, rounds: usize, budget: u64) -> Option<u64> {
    let root = g.canonical(root);
    MaxTable::build(g, rounds, budget).cost(rounds, root)
}

/// Extracts the largest term in `root`'s class whose depth is at most
/// `rounds` and whose size is at most `max_nodes`.
///
/// A class may contain itself through cycles, so unbounded maximization has
/// no answer. Capping depth makes the search a finite dynamic program over
/// `(class, depth)`; at equal cost the first node in class order wins. The
/// result size is nondecreasing in `rounds`.
pub fn extract_max(
    g: &EGraph,
    root: ClassId,
    rounds: usize,
    max_nodes: u64,
) -> Result<Expr, ExtractError> {
    let root = g.canonical(root);
    let table = MaxTable::build(g, rounds, max_nodes);
    if table.cost(rounds, root).is_some() {
        return Ok(table.term(g, rounds, root));
    }
    match MaxTable::build(g, rounds, u64::MAX).cost(rounds, root) {
        Some(_) => Err(ExtractError::OutputTooLarge {
            estimate: min_cost(g, root).unwrap_or(u64::MAX),
            limit: max_nodes,
        }),
        None => Err(ExtractError::Unextractable(root)),
    }
}

fn min_table(g: &EGraph) -> Vec<Option<(u64, usize)>> {
    let slots = g.classes().map(|c| c.id.index() + 1).max().unwrap_or(0);
    let mut best: Vec<Option<(u64, usize)>> = vec![None; slots];
    let mut changed = true;
    while changed {
        changed = false;
        for class in g.classes() {
            for (i, node) in class.nodes.iter().enumerate() {
                let cost = node.children.iter().try_fold(1u64, |acc, c| {
                    best[c.index()].map(|(cost, _)| acc.saturating_add(cost))
                });
                let Some(cost) = cost else { continue };
                if best[class.id.index()].is_none_or(|(b, _)| cost < b) {
                    best[class.id.index()] = Some((cost, i));
                    changed = true;
                }
            }
        }
    }
    best
}

fn min_cost(g: &EGraph, root: ClassId) -> Option<u64> {
    min_table(g)[g.canonical(root).index()].map(|(c, _)| c)
}

/// Extracts the smallest term (by AST size) in `root`'s class.
pub fn extract_min(g: &EGraph, root: ClassId) -> Result<Expr, ExtractError> {
    fn term(g: &EGraph, best: &[Option<(u64, usize)>], class: ClassId) -> Expr {
        let (_, i) = best[class.index()].expect("children of a chosen node have costs");
        build(&g.class(class).unwrap().nodes[i], |c| term(g, best, g.canonical(c)))
    }
    let root = g.canonical(root);
    let best = min_table(g);
    if best[root.index()].is_none() {
        return Err(ExtractError::Unextractable(root));
    }
    Ok(term(g, &best, root))
}
