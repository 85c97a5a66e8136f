//! Seeded generator for the sample benchmark corpus.

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::expr::{Expr, Op};

/// Seed the shipped `data/corpus.txt` was generated with.
pub const SAMPLE_SEED: u64 = 2024;
pub const SAMPLE_SIZE: usize = 100;

const BINARY: [Op; 6] = [Op::Add, Op::Sub, Op::Mul, Op::And, Op::Or, Op::Xor];
const UNARY: [Op; 2] = [Op::Not, Op::Neg];
/// Tree sizes 3..=15, weighted toward small expressions.
const SIZES: [usize; 13] = [3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15];
const SIZE_WEIGHTS: [u32; 13] = [14, 14, 13, 11, 9, 8, 6, 5, 4, 3, 2, 1, 1];
const VARS: [&str; 3] = ["x", "y", "z"];

fn leaf(rng: &mut impl Rng, vars: &[&str]) -> Expr {
    if rng.gen_bool(0.04) {
        Expr::Const(rng.gen_range(1..16))
    } else {
        Expr::var(vars.choose(rng).unwrap())
    }
}

/// Random tree with exactly `size` nodes.
fn tree(rng: &mut impl Rng, size: usize, vars: &[&str]) -> Expr {
    match size {
        0 => unreachable!(),
        1 => leaf(rng, vars),
        2 => Expr::unary(*UNARY.choose(rng).unwrap(), leaf(rng, vars)),
        _ if rng.gen_bool(0.2) => Expr::unary(*UNARY.choose(rng).unwrap(), tree(rng, size - 1, vars)),
        _ => {
            let left = rng.gen_range(1..size - 1);
            let op = *BINARY.choose(rng).unwrap();
            let lhs = tree(rng, left, vars);
            let rhs = tree(rng, size - 1 - left, vars);
            Expr::binary(op, lhs, rhs)
        }
    }
}

/// `n` random expressions of 3 to 15 nodes, each using at least two distinct
/// variables. One in ten draws from a pool of three variables.
pub fn sample_corpus(n: usize, seed: u64) -> Vec<Expr> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let size_dist = WeightedIndex::new(SIZE_WEIGHTS).unwrap();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let pool = if rng.gen_bool(0.12) { &VARS[..] } else { &VARS[..2] };
        let size = SIZES[size_dist.sample(&mut rng)];
        let e = tree(&mut rng, size, pool);
        if e.free_vars().len() >= 2 {
            out.push(e);
        }
    }
    out
}
