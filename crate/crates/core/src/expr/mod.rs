//! The MBA expression language.
//!
//! Expressions are finite trees over variables, fixed-width constants and the
//! operator set `+ - * neg & | ^ ~`. All arithmetic is two's complement modulo
//! `2^bits`.

mod parse;

pub use parse::{parse, ParseError};
pub(crate) use parse::{parse_tree, Tree};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use thiserror::Error;

/// Interned-by-refcount identifier used for variables and pattern variables.
pub type Name = Arc<str>;

/// Assignment of values to variables.
pub type Environment = BTreeMap<Name, u64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Category {
    Arithmetic,
    Boolean,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Neg,
    And,
    Or,
    Xor,
    Not,
}

impl Op {
    pub const ALL: [Op; 8] = [
        Op::Add,
        Op::Sub,
        Op::Mul,
        Op::Neg,
        Op::And,
        Op::Or,
        Op::Xor,
        Op::Not,
    ];

    pub fn arity(self) -> usize {
        match self {
            Op::Neg | Op::Not => 1,
            _ => 2,
        }
    }

    pub fn category(self) -> Category {
        match self {
            Op::Add | Op::Sub | Op::Mul | Op::Neg => Category::Arithmetic,
            Op::And | Op::Or | Op::Xor | Op::Not => Category::Boolean,
        }
    }

    /// Surface symbol. Negation and subtraction share `-`.
    pub fn symbol(self) -> &'static str {
        match self {
            Op::Add => "+",
            Op::Sub | Op::Neg => "-",
            Op::Mul => "*",
            Op::And => "&",
            Op::Or => "|",
            Op::Xor => "^",
            Op::Not => "~",
        }
    }

    /// Label that distinguishes unary from binary minus.
    pub fn label(self) -> &'static str {
        match self {
            Op::Neg => "neg",
            other => other.symbol(),
        }
    }

    /// Applies the operator on full 64-bit words. Every operator is a
    /// congruence modulo `2^k` for all `k <= 64`, so masking the result
    /// gives the narrower-width answer.
    #[inline]
    pub fn apply(self, args: &[u64]) -> u64 {
        match self {
            Op::Add => args[0].wrapping_add(args[1]),
            Op::Sub => args[0].wrapping_sub(args[1]),
            Op::Mul => args[0].wrapping_mul(args[1]),
            Op::Neg => args[0].wrapping_neg(),
            Op::And => args[0] & args[1],
            Op::Or => args[0] | args[1],
            Op::Xor => args[0] ^ args[1],
            Op::Not => !args[0],
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unsupported bit width {0} (expected one of 4, 8, 16, 32, 64)")]
pub struct InvalidBitWidth(pub u32);

/// Evaluation width in bits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitWidth(u32);

impl BitWidth {
    pub const W4: BitWidth = BitWidth(4);
    pub const W8: BitWidth = BitWidth(8);
    pub const W16: BitWidth = BitWidth(16);
    pub const W32: BitWidth = BitWidth(32);
    pub const W64: BitWidth = BitWidth(64);

    pub fn new(bits: u32) -> Result<Self, InvalidBitWidth> {
        match bits {
            4 | 8 | 16 | 32 | 64 => Ok(BitWidth(bits)),
            _ => Err(InvalidBitWidth(bits)),
        }
    }

    pub fn bits(self) -> u32 {
        self.0
    }

    pub fn mask(self) -> u64 {
        if self.0 == 64 {
            u64::MAX
        } else {
            (1u64 << self.0) - 1
        }
    }

    #[inline]
    pub fn reduce(self, value: u64) -> u64 {
        value & self.mask()
    }
}

impl Default for BitWidth {
    fn default() -> Self {
        BitWidth::W64
    }
}

impl fmt::Display for BitWidth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for BitWidth {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bits: u32 = s.parse().map_err(|e| format!("{e}"))?;
        BitWidth::new(bits).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    UnboundVariable(Name),
}

/// An MBA expression tree.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Expr {
    Var(Name),
    Const(u64),
    Op(Op, Vec<Expr>),
}

impl Expr {
    pub fn var(name: &str) -> Expr {
        Expr::Var(Name::from(name))
    }

    pub fn constant(value: u64, width: BitWidth) -> Expr {
        Expr::Const(width.reduce(value))
    }

    pub fn unary(op: Op, arg: Expr) -> Expr {
        assert_eq!(op.arity(), 1, "{op:?} is not unary");
        Expr::Op(op, vec![arg])
    }

    pub fn binary(op: Op, lhs: Expr, rhs: Expr) -> Expr {
        assert_eq!(op.arity(), 2, "{op:?} is not binary");
        Expr::Op(op, vec![lhs, rhs])
    }

    pub fn children(&self) -> &[Expr] {
        match self {
            Expr::Op(_, children) => children,
            _ => &[],
        }
    }

    /// Number of AST nodes.
    pub fn size(&self) -> usize {
        1 + self.children().iter().map(Expr::size).sum::<usize>()
    }

    /// Depth in edges; a leaf has depth 0.
    pub fn depth(&self) -> usize {
        self.children().iter().map(|c| c.depth() + 1).max().unwrap_or(0)
    }

    pub fn free_vars(&self) -> BTreeSet<Name> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<Name>) {
        match self {
            Expr::Var(name) => {
                if !out.contains(name) {
                    out.insert(name.clone());
                }
            }
            Expr::Const(_) => {}
            Expr::Op(_, children) => children.iter().for_each(|c| c.collect_vars(out)),
        }
    }

    /// Evaluates under two's-complement semantics at `width`.
    pub fn evaluate(&self, env: &Environment, width: BitWidth) -> Result<u64, EvalError> {
        Ok(width.reduce(self.eval_raw(env)?))
    }

    fn eval_raw(&self, env: &Environment) -> Result<u64, EvalError> {
        match self {
            Expr::Var(name) => env
                .get(name)
                .copied()
                .ok_or_else(|| EvalError::UnboundVariable(name.clone())),
            Expr::Const(v) => Ok(*v),
            Expr::Op(op, children) => match children.as_slice() {
                [a] => Ok(op.apply(&[a.eval_raw(env)?])),
                [a, b] => Ok(op.apply(&[a.eval_raw(env)?, b.eval_raw(env)?])),
                _ => unreachable!("operator with {} children", children.len()),
            },
        }
    }
}

/// Fully parenthesized canonical form, e.g. `((x | y) + (x & y))` or `(- x)`.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Var(name) => f.write_str(name),
            Expr::Const(v) => write!(f, "{v}"),
            Expr::Op(op, children) => match children.as_slice() {
                [a] => write!(f, "({} {a})", op.symbol()),
                [a, b] => write!(f, "({a} {} {b})", op.symbol()),
                _ => unreachable!(),
            },
        }
    }
}

/// Whether `s` matches `[a-zA-Z_][a-zA-Z0-9_]*`.
pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(pairs: &[(&str, u64)]) -> Environment {
        pairs.iter().map(|(k, v)| (Name::from(*k), *v)).collect()
    }

    #[test]
    fn operator_taxonomy() {
        for op in Op::ALL {
            let unary = matches!(op, Op::Neg | Op::Not);
            assert_eq!(op.arity() == 1, unary);
        }
        assert_eq!(Op::Mul.category(), Category::Arithmetic);
        assert_eq!(Op::Not.category(), Category::Boolean);
    }

    #[test]
    fn wraparound_add() {
        let e = parse("x + y", BitWidth::W8).unwrap();
        assert_eq!(e.evaluate(&env(&[("x", 200), ("y", 100)]), BitWidth::W8), Ok(44));
    }

    #[test]
    fn complement() {
        let e = parse("~x", BitWidth::W8).unwrap();
        assert_eq!(e.evaluate(&env(&[("x", 5)]), BitWidth::W8), Ok(250));
    }

    #[test]
    fn negation_is_twos_complement() {
        let e = parse("-x", BitWidth::W4).unwrap();
        assert_eq!(e.evaluate(&env(&[("x", 1)]), BitWidth::W4), Ok(15));
    }

    #[test]
    fn unbound_variable() {
        let e = parse("x + z", BitWidth::W8).unwrap();
        assert_eq!(
            e.evaluate(&env(&[("x", 1)]), BitWidth::W8),
            Err(EvalError::UnboundVariable(Name::from("z")))
        );
    }

    #[test]
    fn add_or_and_identity_exhaustive_8bit() {
        let lhs = parse("(x | y) + (x & y)", BitWidth::W8).unwrap();
        let rhs = parse("x + y", BitWidth::W8).unwrap();
        for x in 0..256u64 {
            for y in 0..256u64 {
                let e = env(&[("x", x), ("y", y)]);
                assert_eq!(lhs.evaluate(&e, BitWidth::W8), rhs.evaluate(&e, BitWidth::W8));
            }
        }
    }

    #[test]
    fn free_vars_examples() {
        let names = |s: &str| -> Vec<String> {
            parse(s, BitWidth::W8)
                .unwrap()
                .free_vars()
                .iter()
                .map(|n| n.to_string())
                .collect()
        };
        assert_eq!(names("x + y"), ["x", "y"]);
        assert!(names("7").is_empty());
        assert_eq!(names("(x | y) + (x & y)"), ["x", "y"]);
    }

    #[test]
    fn printing() {
        let sum = Expr::binary(Op::Add, Expr::var("x"), Expr::var("y"));
        assert_eq!(sum.to_string(), "(x + y)");
        assert_eq!(Expr::unary(Op::Neg, Expr::var("x")).to_string(), "(- x)");
    }

    #[test]
    fn bitwidth_validation() {
        assert!(BitWidth::new(12).is_err());
        assert_eq!(BitWidth::W4.mask(), 0xf);
        assert_eq!(BitWidth::W64.mask(), u64::MAX);
        assert_eq!("16".parse::<BitWidth>(), Ok(BitWidth::W16));
    }

    #[test]
    fn identifiers() {
        assert!(is_identifier("_x9"));
        assert!(!is_identifier("9x"));
        assert!(!is_identifier(""));
    }
}
