//! Sources of user-side randomness.
//!
//! Protocol code draws every random choice through [`Coins`]. In normal runs
//! the coins come from a seeded RNG ([`RngCoins`]); the auditor swaps in an
//! [`Explorer`] that walks every branch of the choice tree with its exact
//! probability, so the privacy audit exercises the real protocol code.

use num_bigint::BigInt;
use rand::Rng;

use crate::error::{Error, Result};
use crate::ratio::{one, Rational};

pub trait Coins {
    /// Uniform draw from `0..n`. `n` must be positive.
    fn uniform(&mut self, n: usize) -> usize;

    /// Draw `i` with probability `weights[i] / sum(weights)`. The sum must be positive.
    fn weighted(&mut self, weights: &[u128]) -> usize;
}

impl<C: Coins + ?Sized> Coins for &mut C {
    fn uniform(&mut self, n: usize) -> usize {
        (**self).uniform(n)
    }

    fn weighted(&mut self, weights: &[u128]) -> usize {
        (**self).weighted(weights)
    }
}

/// Coins backed by any `rand` generator.
pub struct RngCoins<R>(pub R);

impl<R: Rng> Coins for RngCoins<R> {
    fn uniform(&mut self, n: usize) -> usize {
        assert!(n > 0, "uniform draw from an empty range");
        self.0.random_range(0..n)
    }

    fn weighted(&mut self, weights: &[u128]) -> usize {
        let total: u128 = weights.iter().sum();
        assert!(total > 0, "weighted draw with zero total weight");
        let mut x = self.0.random_range(0..total);
        for (i, &w) in weights.iter().enumerate() {
            if x < w {
                return i;
            }
            x -= w;
        }
        unreachable!("draw below total weight always lands in a bucket")
    }
}

/// Replays a fixed list of choices. Panics when the script runs out.
#[derive(Debug, Clone)]
pub struct ScriptedCoins {
    script: Vec<usize>,
    pos: usize,
}

impl ScriptedCoins {
    pub fn new(script: Vec<usize>) -> Self {
        Self { script, pos: 0 }
    }

    pub fn consumed(&self) -> usize {
        self.pos
    }

    fn next(&mut self, arity: usize) -> usize {
        let choice = *self
            .script
            .get(self.pos)
            .unwrap_or_else(|| panic!("script exhausted at draw {}", self.pos));
        assert!(
            choice < arity,
            "scripted choice {choice} out of range {arity} at draw {}",
            self.pos
        );
        self.pos += 1;
        choice
    }
}

impl Coins for ScriptedCoins {
    fn uniform(&mut self, n: usize) -> usize {
        self.next(n)
    }

    fn weighted(&mut self, weights: &[u128]) -> usize {
        let c = self.next(weights.len());
        assert!(weights[c] > 0, "scripted choice {c} has zero weight");
        c
    }
}

#[derive(Debug, Clone)]
enum Options {
    Uniform(usize),
    Weighted(Vec<u128>),
}

impl Options {
    fn len(&self) -> usize {
        match self {
            Options::Uniform(n) => *n,
            Options::Weighted(w) => w.len(),
        }
    }

    fn viable(&self, i: usize) -> bool {
        match self {
            Options::Uniform(n) => i < *n,
            Options::Weighted(w) => w.get(i).is_some_and(|&x| x > 0),
        }
    }

    fn first_from(&self, start: usize) -> Option<usize> {
        (start..self.len()).find(|&i| self.viable(i))
    }

    fn probability(&self, i: usize) -> Rational {
        match self {
            Options::Uniform(n) => Rational::new(BigInt::from(1), BigInt::from(*n)),
            Options::Weighted(w) => {
                let total: u128 = w.iter().sum();
                Rational::new(BigInt::from(w[i]), BigInt::from(total))
            }
        }
    }
}

#[derive(Debug, Clone)]
struct Frame {
    options: Options,
    choice: usize,
}

/// Depth-first walker over every path of a coin-driven computation.
///
/// The computation is re-run once per leaf; earlier frames replay recorded
/// choices and the first unseen draw opens a new frame at its first viable
/// option.
#[derive(Debug, Default)]
pub struct Explorer {
    frames: Vec<Frame>,
    pos: usize,
}

impl Explorer {
    fn draw(&mut self, options: Options) -> usize {
        if self.pos < self.frames.len() {
            let frame = &self.frames[self.pos];
            debug_assert_eq!(
                frame.options.len(),
                options.len(),
                "nondeterministic replay at draw {}",
                self.pos
            );
            self.pos += 1;
            return frame.choice;
        }
        let choice = options
            .first_from(0)
            .expect("draw with no viable option");
        self.frames.push(Frame { options, choice });
        self.pos += 1;
        choice
    }

    fn path_probability(&self) -> Rational {
        self.frames[..self.pos]
            .iter()
            .fold(one(), |acc, f| acc * f.options.probability(f.choice))
    }

    /// Moves to the next unexplored path. Returns false when all are done.
    fn advance(&mut self) -> bool {
        self.frames.truncate(self.pos);
        while let Some(frame) = self.frames.last_mut() {
            if let Some(next) = frame.options.first_from(frame.choice + 1) {
                frame.choice = next;
                return true;
            }
            self.frames.pop();
        }
        false
    }
}

impl Coins for Explorer {
    fn uniform(&mut self, n: usize) -> usize {
        assert!(n > 0, "uniform draw from an empty range");
        self.draw(Options::Uniform(n))
    }

    fn weighted(&mut self, weights: &[u128]) -> usize {
        self.draw(Options::Weighted(weights.to_vec()))
    }
}

/// Runs `f` on every coin path, handing each result and its exact
/// probability to `sink`. Fails once more than `cap` paths are visited.
pub fn explore<T, F, S>(cap: u128, mut f: F, mut sink: S) -> Result<u128>
where
    F: FnMut(&mut Explorer) -> Result<T>,
    S: FnMut(T, Rational),
{
    let mut ex = Explorer::default();
    let mut leaves: u128 = 0;
    loop {
        ex.pos = 0;
        let out = f(&mut ex)?;
        leaves += 1;
        if leaves > cap {
            return Err(Error::CapExceeded { count: leaves, cap });
        }
        sink(out, ex.path_probability());
        if !ex.advance() {
            return Ok(leaves);
        }
    }
}

/// Uniformly random permutation of `0..n` (Fisher–Yates).
pub fn permutation<C: Coins + ?Sized>(coins: &mut C, n: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = coins.uniform(i + 1);
        p.swap(i, j);
    }
    p
}

/// Uniformly random `k`-subset of `items`, returned in input order.
pub fn subset<C: Coins + ?Sized, T: Copy>(coins: &mut C, items: &[T], k: usize) -> Vec<T> {
    let total = crate::combin::binomial(items.len() as u64, k as u64);
    let total = usize::try_from(total).expect("subset count fits usize");
    let rank = coins.uniform(total);
    crate::combin::unrank_combination(items.len(), k, rank as u128)
        .into_iter()
        .map(|i| items[i])
        .collect()
}
