//! Equality expansion: grow an e-graph from the input with sound rewrite
//! rules until a resource limit fires, then extract the most complex
//! equivalent term.

mod extract;

pub use extract::{extract_max, extract_min, max_cost, ExtractError};

use std::fmt;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::egraph::{EGraph, EGraphError};
use crate::expr::{BitWidth, Expr};
use crate::metrics::{measure, MetricsReport};
use crate::rewrite::{apply_match, new_node_estimate, search, Rule};

/// Deepest extraction allowed; keeps printed output within the parser's
/// nesting limit.
pub const MAX_EXTRACTION_ROUNDS: usize = 120;

#[derive(Clone, Debug, PartialEq)]
pub struct ExpansionConfig {
    pub width: BitWidth,
    /// Soft cap on canonical e-nodes. Applications that would cross it are
    /// skipped.
    pub node_limit: Option<usize>,
    /// Maximum number of match/apply/rebuild rounds.
    pub iter_limit: Option<usize>,
    pub time_limit: Option<Duration>,
    /// Stop early once the extractor yields a term at least this large.
    /// Checked once per round.
    pub target_ast_size: Option<usize>,
    /// Depth cap for the maximizing extractor.
    pub extraction_rounds: usize,
    /// Largest term the extractor may produce.
    pub max_output_nodes: usize,
    /// Reserved for randomized tie-breaking; the default policy is
    /// deterministic and ignores it.
    pub seed: u64,
}

impl Default for ExpansionConfig {
    fn default() -> Self {
        ExpansionConfig {
            width: BitWidth::W64,
            node_limit: Some(3000),
            iter_limit: Some(30),
            time_limit: Some(Duration::from_secs(2)),
            target_ast_size: None,
            extraction_rounds: 64,
            max_output_nodes: 50_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("at least one of node limit, iteration limit or time limit must be set")]
    Unbounded,
    #[error("{0} must be positive")]
    NotPositive(&'static str),
    #[error("extraction rounds must be at most {MAX_EXTRACTION_ROUNDS}")]
    TooManyRounds,
}

impl ExpansionConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.node_limit.is_none() && self.iter_limit.is_none() && self.time_limit.is_none() {
            return Err(ConfigError::Unbounded);
        }
        let positive = [
            ("node limit", self.node_limit.is_none_or(|n| n > 0)),
            ("iteration limit", self.iter_limit.is_none_or(|n| n > 0)),
            ("time limit", self.time_limit.is_none_or(|t| !t.is_zero())),
            ("target size", self.target_ast_size.is_none_or(|n| n > 0)),
            ("extraction rounds", self.extraction_rounds > 0),
            ("max output nodes", self.max_output_nodes > 0),
        ];
        if let Some((what, _)) = positive.iter().find(|(_, ok)| !ok) {
            return Err(ConfigError::NotPositive(what));
        }
        if self.extraction_rounds > MAX_EXTRACTION_ROUNDS {
            return Err(ConfigError::TooManyRounds);
        }
        Ok(())
    }

    /// Hard e-graph capacity: four times the node limit.
    fn capacity(&self) -> Option<usize> {
        self.node_limit.map(|n| n.saturating_mul(4))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    NodeLimit,
    IterLimit,
    TimeLimit,
    TargetSizeReached,
    /// A full round changed nothing.
    Saturated,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::NodeLimit => "NodeLimit",
            StopReason::IterLimit => "IterLimit",
            StopReason::TimeLimit => "TimeLimit",
            StopReason::TargetSizeReached => "TargetSizeReached",
            StopReason::Saturated => "Saturated",
        })
    }
}

#[derive(Clone, Debug)]
pub struct ExpansionReport {
    pub output: Expr,
    pub stop: StopReason,
    pub iterations: usize,
    pub final_node_count: usize,
    pub final_class_count: usize,
    pub elapsed: Duration,
    pub metrics_in: MetricsReport,
    pub metrics_out: MetricsReport,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExpandError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    EGraph(#[from] EGraphError),
    #[error(transparent)]
    Extract(#[from] ExtractError),
}

struct Clock {
    start: Instant,
    limit: Option<Duration>,
}

impl Clock {
    fn expired(&self) -> bool {
        self.limit.is_some_and(|l| self.start.elapsed() >= l)
    }
}

/// Grows an e-graph from `input` and returns the most complex equivalent
/// term the configuration allows.
///
/// Each round matches every rule against the rebuilt graph, applies all
/// matches, then rebuilds. The outcome is deterministic unless the time
/// limit fires.
pub fn expand(
    input: &Expr,
    rules: &[Rule],
    cfg: &ExpansionConfig,
) -> Result<ExpansionReport, ExpandError> {
    cfg.validate()?;
    let clock = Clock {
        start: Instant::now(),
        limit: cfg.time_limit,
    };
    let mut g = EGraph::new(cfg.width);
    if let Some(cap) = cfg.capacity() {
        g = g.with_capacity_limit(cap);
    }
    let root = g.add_expr(input)?;
    let budget = cfg.max_output_nodes as u64;

    let mut iterations = 0;
    let stop = loop {
        iterations += 1;
        let mut timed_out = false;

        let mut batches = Vec::with_capacity(rules.len());
        for rule in rules {
            if clock.expired() {
                timed_out = true;
                break;
            }
            batches.push((rule, search(&g, rule)));
        }

        let mut changed = false;
        let mut skipped = false;
        'apply: for (rule, matches) in &batches {
            for m in matches {
                if clock.expired() {
                    timed_out = true;
                    break 'apply;
                }
                if let Some(limit) = cfg.node_limit {
                    let extra = new_node_estimate(&g, &rule.rhs, &m.subst);
                    if g.node_count() + extra > limit {
                        skipped = true;
                        continue;
                    }
                }
                changed |= apply_match(&mut g, rule, m)?;
            }
        }
        g.rebuild();

        if timed_out {
            break StopReason::TimeLimit;
        }
        if skipped {
            break StopReason::NodeLimit;
        }
        if !changed {
            break StopReason::Saturated;
        }
        if let Some(target) = cfg.target_ast_size {
            let size = max_cost(&g, root, cfg.extraction_rounds, budget).unwrap_or(0);
            if size >= target as u64 {
                break StopReason::TargetSizeReached;
            }
        }
        if cfg.node_limit.is_some_and(|limit| g.node_count() >= limit) {
            break StopReason::NodeLimit;
        }
        if cfg.iter_limit.is_some_and(|limit| iterations >= limit) {
            break StopReason::IterLimit;
        }
        if clock.expired() {
            break StopReason::TimeLimit;
        }
    };

    let output = extract_max(&g, root, cfg.extraction_rounds, budget)?;
    Ok(ExpansionReport {
        metrics_in: measure(input),
        metrics_out: measure(&output),
        output,
        stop,
        iterations,
        final_node_count: g.node_count(),
        final_class_count: g.class_count(),
        elapsed: clock.start.elapsed(),
    })
}
