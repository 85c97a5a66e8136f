//! Mixed boolean-arithmetic (MBA) obfuscation by equality expansion.
//!
//! An input expression is inserted into an e-graph, grown with sound rewrite
//! rules until a resource limit is hit, and the most complex equivalent term
//! is extracted. Equivalence follows from rule soundness, which [`verify`]
//! checks exhaustively at small widths.

pub mod expr;
pub mod egraph;
pub mod rewrite;
pub mod metrics;
pub mod expand;
pub mod verify;
pub mod cli;
pub mod corpus;
