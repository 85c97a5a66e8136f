//! Solver-free equivalence checking.
//!
//! Rules are checked over every assignment at small widths and with seeded
//! random trials at wide ones. Expressions are compiled to a shared DAG and
//! evaluated over batches of environments, so checking a 50k-node output
//! costs time proportional to its distinct subterms.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::expr::{BitWidth, Environment, Expr, Name, Op};
use crate::rewrite::Rule;

/// Largest number of environments enumerated exhaustively.
pub const MAX_EXHAUSTIVE_CASES: u64 = 1 << 24;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Counterexample {
    pub env: Environment,
    pub lhs: u64,
    pub rhs: u64,
}

impl fmt::Display for Counterexample {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (name, value)) in self.env.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{name}: {value}")?;
        }
        write!(f, "}} gives {} vs {}", self.lhs, self.rhs)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CheckResult {
    pub passed: bool,
    pub counterexample: Option<Counterexample>,
    pub cases_checked: u64,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum VerifyError {
    #[error("{vars} variables at {width} bits exceed the exhaustive case budget")]
    TooManyCases { vars: usize, width: BitWidth },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Instr {
    Input(usize),
    Const(u64),
    Unary(Op, usize),
    Binary(Op, usize, usize),
}

/// Straight-line program over shared subterms of one or more expressions.
#[derive(Debug)]
pub(crate) struct Program {
    instrs: Vec<Instr>,
    roots: Vec<usize>,
}

impl Program {
    /// Compiles `exprs` with variables bound to the positions in `vars`.
    pub(crate) fn compile(exprs: &[&Expr], vars: &[Name]) -> Program {
        let slots: HashMap<&str, usize> =
            vars.iter().enumerate().map(|(i, v)| (&**v, i)).collect();
        let mut prog = Program {
            instrs: Vec::new(),
            roots: Vec::new(),
        };
        let mut memo = HashMap::new();
        for e in exprs {
            let root = prog.lower(e, &slots, &mut memo);
            prog.roots.push(root);
        }
        prog
    }

    fn lower(
        &mut self,
        e: &Expr,
        slots: &HashMap<&str, usize>,
        memo: &mut HashMap<Instr, usize>,
    ) -> usize {
        let instr = match e {
            Expr::Var(name) => Instr::Input(slots[&**name]),
            Expr::Const(v) => Instr::Const(*v),
            Expr::Op(op, children) => match children.as_slice() {
                [a] => Instr::Unary(*op, self.lower(a, slots, memo)),
                [a, b] => {
                    let a = self.lower(a, slots, memo);
                    let b = self.lower(b, slots, memo);
                    Instr::Binary(*op, a, b)
                }
                _ => unreachable!(),
            },
        };
        *memo.entry(instr).or_insert_with(|| {
            self.instrs.push(instr);
            self.instrs.len() - 1
        })
    }

    #[cfg(test)]
    pub(crate) fn len(&self) -> usize {
        self.instrs.len()
    }

    /// Lanes per batch, sized so one batch buffer stays around 8 MiB.
    fn lanes(&self) -> usize {
        ((1usize << 20) / self.instrs.len().max(1)).clamp(1, 1024)
    }

    /// Evaluates on `lanes` environments; `input(var, lane)` supplies values.
    /// Returns root values lane-major: `out[lane * roots + r]`.
    fn run(&self, lanes: usize, input: impl Fn(usize, usize) -> u64) -> Vec<u64> {
        let mut regs = vec![0u64; self.instrs.len() * lanes];
        for (i, instr) in self.instrs.iter().enumerate() {
            let (done, rest) = regs.split_at_mut(i * lanes);
            let dst = &mut rest[..lanes];
            let reg = |j: usize| &done[j * lanes..(j + 1) * lanes];
            match *instr {
                Instr::Input(v) => dst.iter_mut().enumerate().for_each(|(l, d)| *d = input(v, l)),
                Instr::Const(c) => dst.fill(c),
                Instr::Unary(op, a) => {
                    let a = reg(a);
                    match op {
                        Op::Neg => dst.iter_mut().zip(a).for_each(|(d, &x)| *d = x.wrapping_neg()),
                        _ => dst.iter_mut().zip(a).for_each(|(d, &x)| *d = !x),
                    }
                }
                Instr::Binary(op, a, b) => {
                    let (a, b) = (reg(a), reg(b));
                    let it = dst.iter_mut().zip(a.iter().zip(b));
                    match op {
                        Op::Add => it.for_each(|(d, (&x, &y))| *d = x.wrapping_add(y)),
                        Op::Sub => it.for_each(|(d, (&x, &y))| *d = x.wrapping_sub(y)),
                        Op::Mul => it.for_each(|(d, (&x, &y))| *d = x.wrapping_mul(y)),
                        Op::And => it.for_each(|(d, (&x, &y))| *d = x & y),
                        Op::Or => it.for_each(|(d, (&x, &y))| *d = x | y),
                        Op::Xor => it.for_each(|(d, (&x, &y))| *d = x ^ y),
                        Op::Neg | Op::Not => unreachable!(),
                    }
                }
            }
        }
        let mut out = Vec::with_capacity(lanes * self.roots.len());
        for l in 0..lanes {
            out.extend(self.roots.iter().map(|&r| regs[r * lanes + l]));
        }
        out
    }

    /// Evaluates every root on a single environment given by slot values.
    #[cfg(test)]
    pub(crate) fn eval(&self, values: &[u64], width: BitWidth) -> Vec<u64> {
        self.run(1, |v, _| values[v])
            .into_iter()
            .map(|x| width.reduce(x))
            .collect()
    }
}

/// Compares two expressions (root 0 and root 1 of `prog`) over the given
/// environments. `env_of(k)` yields the slot values for case `k`.
fn compare(
    prog: &Program,
    vars: &[Name],
    cases: u64,
    width: BitWidth,
    env_of: impl Fn(u64, usize) -> u64 + Sync,
) -> CheckResult {
    let lanes = prog.lanes() as u64;
    let chunks = cases.div_ceil(lanes);
    let first_failure = (0..chunks).into_par_iter().find_map_first(|chunk| {
        let start = chunk * lanes;
        let n = (cases - start).min(lanes) as usize;
        let out = prog.run(n, |v, l| env_of(start + l as u64, v));
        (0..n).find_map(|l| {
            let (a, b) = (width.reduce(out[2 * l]), width.reduce(out[2 * l + 1]));
            (a != b).then_some((start + l as u64, a, b))
        })
    });
    match first_failure {
        None => CheckResult {
            passed: true,
            counterexample: None,
            cases_checked: cases,
        },
        Some((k, lhs, rhs)) => CheckResult {
            passed: false,
            counterexample: Some(Counterexample {
                env: vars
                    .iter()
                    .enumerate()
                    .map(|(v, name)| (name.clone(), width.reduce(env_of(k, v))))
                    .collect(),
                lhs,
                rhs,
            }),
            cases_checked: k + 1,
        },
    }
}

/// Number of environments for `vars` variables, if within the exhaustive
/// budget.
fn exhaustive_cases(vars: usize, width: BitWidth) -> Option<u64> {
    let bits = vars as u64 * u64::from(width.bits());
    (bits <= 24).then(|| 1u64 << bits)
}

fn exhaustive(a: &Expr, b: &Expr, vars: &[Name], width: BitWidth, cases: u64) -> CheckResult {
    let prog = Program::compile(&[a, b], vars);
    let bits = width.bits();
    let mask = width.mask();
    // variable 0 varies fastest
    compare(&prog, vars, cases, width, |k, v| (k >> (bits * v as u32)) & mask)
}

fn random(a: &Expr, b: &Expr, vars: &[Name], width: BitWidth, trials: u64, seed: u64) -> CheckResult {
    let prog = Program::compile(&[a, b], vars);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = vars.len().max(1);
    let values: Vec<u64> = (0..trials * n as u64)
        .map(|_| width.reduce(rng.gen::<u64>()))
        .collect();
    compare(&prog, vars, trials, width, |k, v| values[k as usize * n + v])
}

fn rule_sides(rule: &Rule, width: BitWidth) -> (Expr, Expr, Vec<Name>) {
    let lhs = rule.lhs.to_expr(width);
    let rhs = rule.rhs.to_expr(width);
    let vars = union_vars(&lhs, &rhs);
    (lhs, rhs, vars)
}

fn union_vars(a: &Expr, b: &Expr) -> Vec<Name> {
    let mut vars: BTreeSet<Name> = a.free_vars();
    vars.extend(b.free_vars());
    vars.into_iter().collect()
}

/// Checks `lhs == rhs` for every assignment of the rule's variables at
/// `width`. Reports the first counterexample in enumeration order, where the
/// alphabetically first variable varies fastest.
pub fn check_rule(rule: &Rule, width: BitWidth) -> Result<CheckResult, VerifyError> {
    let (lhs, rhs, vars) = rule_sides(rule, width);
    let cases = exhaustive_cases(vars.len(), width).ok_or(VerifyError::TooManyCases {
        vars: vars.len(),
        width,
    })?;
    Ok(exhaustive(&lhs, &rhs, &vars, width, cases))
}

/// Checks a rule on `trials` seeded random assignments.
pub fn check_rule_random(rule: &Rule, width: BitWidth, trials: u64, seed: u64) -> CheckResult {
    let (lhs, rhs, vars) = rule_sides(rule, width);
    random(&lhs, &rhs, &vars, width, trials.max(1), seed)
}

/// Checks that `a` and `b` agree, exhaustively when the variables admit at
/// most 2^24 environments and on `trials` random environments otherwise.
pub fn check_equivalence(a: &Expr, b: &Expr, width: BitWidth, trials: u64, seed: u64) -> CheckResult {
    let vars = union_vars(a, b);
    match exhaustive_cases(vars.len(), width) {
        Some(cases) => exhaustive(a, b, &vars, width, cases),
        None => random(a, b, &vars, width, trials.max(1), seed),
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("rule `{rule}` is unsound at {width} bits: {counterexample}")]
pub struct UnsoundRule {
    pub rule: String,
    pub width: BitWidth,
    pub counterexample: Counterexample,
}

/// Trials used for the 64-bit pass of [`admit_rule`].
pub const ADMISSION_TRIALS: u64 = 10_000;

/// The admission check every rule must pass: exhaustive at 4 and 8 bits
/// (random when the rule has too many variables) plus random 64-bit trials.
pub fn admit_rule(rule: &Rule, seed: u64) -> Result<(), UnsoundRule> {
    let checks = [BitWidth::W4, BitWidth::W8].into_iter().map(|w| {
        let result = check_rule(rule, w)
            .unwrap_or_else(|_| check_rule_random(rule, w, ADMISSION_TRIALS, seed));
        (w, result)
    });
    let wide = std::iter::once_with(|| {
        (
            BitWidth::W64,
            check_rule_random(rule, BitWidth::W64, ADMISSION_TRIALS, seed),
        )
    });
    for (width, result) in checks.chain(wide) {
        if let Some(counterexample) = result.counterexample {
            return Err(UnsoundRule {
                rule: rule.name.clone(),
                width,
                counterexample,
            });
        }
    }
    Ok(())
}
