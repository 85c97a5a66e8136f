//! Complexity metrics for expressions and corpus-level averages.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{Expr, Name};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub ast_size: usize,
    /// Variable occurrences, not distinct variables.
    pub var_count: usize,
    pub const_count: usize,
    pub op_count: usize,
    /// Parent/child operator edges whose operators lie in different
    /// categories (arithmetic vs. boolean).
    pub mba_alternation: usize,
    /// Shannon entropy in bits of all node labels.
    pub entropy_tokens: f64,
    /// Shannon entropy in bits of leaf labels only.
    pub entropy_leaves: f64,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Token {
    Op(&'static str),
    Var(Name),
    Const(u64),
}

#[derive(Default)]
struct Tally {
    vars: usize,
    consts: usize,
    ops: usize,
    alternation: usize,
    tokens: BTreeMap<Token, usize>,
    leaves: BTreeMap<Token, usize>,
}

impl Tally {
    fn visit(&mut self, e: &Expr) {
        match e {
            Expr::Var(name) => {
                self.vars += 1;
                self.leaf(Token::Var(name.clone()));
            }
            Expr::Const(v) => {
                self.consts += 1;
                self.leaf(Token::Const(*v));
            }
            Expr::Op(op, children) => {
                self.ops += 1;
                *self.tokens.entry(Token::Op(op.label())).or_default() += 1;
                for child in children {
                    if let Expr::Op(inner, _) = child {
                        if inner.category() != op.category() {
                            self.alternation += 1;
                        }
                    }
                    self.visit(child);
                }
            }
        }
    }

    fn leaf(&mut self, token: Token) {
        *self.leaves.entry(token.clone()).or_default() += 1;
        *self.tokens.entry(token).or_default() += 1;
    }
}

fn shannon(counts: &BTreeMap<Token, usize>) -> f64 {
    if counts.len() <= 1 {
        return 0.0;
    }
    let total = counts.values().sum::<usize>() as f64;
    counts
        .values()
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.log2()
        })
        .sum()
}

pub fn measure(e: &Expr) -> MetricsReport {
    let mut tally = Tally::default();
    tally.visit(e);
    MetricsReport {
        ast_size: tally.vars + tally.consts + tally.ops,
        var_count: tally.vars,
        const_count: tally.consts,
        op_count: tally.ops,
        mba_alternation: tally.alternation,
        entropy_tokens: shannon(&tally.tokens),
        entropy_leaves: shannon(&tally.leaves),
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("cannot aggregate an empty corpus")]
pub struct EmptyCorpus;

/// Per-metric arithmetic means.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricMeans {
    pub ast_size: f64,
    pub var_count: f64,
    pub const_count: f64,
    pub op_count: f64,
    pub mba_alternation: f64,
    pub entropy_tokens: f64,
    pub entropy_leaves: f64,
}

impl MetricMeans {
    fn of<'a>(reports: impl ExactSizeIterator<Item = &'a MetricsReport>) -> Self {
        let n = reports.len() as f64;
        let mut sum = MetricMeans::default();
        for r in reports {
            sum.ast_size += r.ast_size as f64;
            sum.var_count += r.var_count as f64;
            sum.const_count += r.const_count as f64;
            sum.op_count += r.op_count as f64;
            sum.mba_alternation += r.mba_alternation as f64;
            sum.entropy_tokens += r.entropy_tokens;
            sum.entropy_leaves += r.entropy_leaves;
        }
        MetricMeans {
            ast_size: sum.ast_size / n,
            var_count: sum.var_count / n,
            const_count: sum.const_count / n,
            op_count: sum.op_count / n,
            mba_alternation: sum.mba_alternation / n,
            entropy_tokens: sum.entropy_tokens / n,
            entropy_leaves: sum.entropy_leaves / n,
        }
    }

    fn csv_row(&self, variant: &str) -> String {
        format!(
            "{variant},{:.2},{:.2},{:.2},{:.2},{:.2},{:.2}\n",
            self.ast_size,
            self.var_count,
            self.const_count,
            self.op_count,
            self.mba_alternation,
            self.entropy_tokens
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub count: usize,
    pub original: MetricMeans,
    pub obfuscated: MetricMeans,
}

pub const CSV_HEADER: &str =
    "variant,ast_size,var_count,const_count,op_count,mba_alternation,entropy";

impl AggregateReport {
    /// Two rows, `original` and `obfuscated`, two decimals. The entropy
    /// column is token entropy.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{CSV_HEADER}").unwrap();
        out.push_str(&self.original.csv_row("original"));
        out.push_str(&self.obfuscated.csv_row("obfuscated"));
        out
    }
}

/// Averages (original, obfuscated) metric pairs.
pub fn aggregate(pairs: &[(MetricsReport, MetricsReport)]) -> Result<AggregateReport, EmptyCorpus> {
    if pairs.is_empty() {
        return Err(EmptyCorpus);
    }
    Ok(AggregateReport {
        count: pairs.len(),
        original: MetricMeans::of(pairs.iter().map(|(a, _)| a)),
        obfuscated: MetricMeans::of(pairs.iter().map(|(_, b)| b)),
    })
}

/// One line of the per-expression JSON output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObfuscationRecord {
    pub input: String,
    pub output: String,
    pub stop: String,
    pub metrics_in: MetricsReport,
    pub metrics_out: MetricsReport,
}
