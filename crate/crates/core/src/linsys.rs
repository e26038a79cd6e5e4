//! Exact Gaussian elimination over the rationals.

use num_traits::Zero;

use crate::ratio::Rational;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Solved {
    /// Unique solution.
    Unique(Vec<Rational>),
    /// Consistent but with `free` free variables.
    Underdetermined { free: usize },
    Inconsistent,
}

/// Solves `rows * x = rhs`.
pub(crate) fn solve(mut rows: Vec<Vec<Rational>>, mut rhs: Vec<Rational>, vars: usize) -> Solved {
    debug_assert_eq!(rows.len(), rhs.len());
    let mut pivots = Vec::new();
    let mut rank = 0;
    for col in 0..vars {
        let Some(p) = (rank..rows.len()).find(|&r| !rows[r][col].is_zero()) else {
            continue;
        };
        rows.swap(rank, p);
        rhs.swap(rank, p);
        let inv = rows[rank][col].recip();
        for v in rows[rank].iter_mut() {
            *v = &*v * &inv;
        }
        rhs[rank] = &rhs[rank] * &inv;
        for r in 0..rows.len() {
            if r == rank || rows[r][col].is_zero() {
                continue;
            }
            let factor = rows[r][col].clone();
            let pivot = rows[rank].clone();
            for (v, p) in rows[r].iter_mut().zip(&pivot) {
                *v -= &factor * p;
            }
            let delta = &factor * &rhs[rank];
            rhs[r] -= delta;
        }
        pivots.push(col);
        rank += 1;
    }
    if rhs[rank..].iter().any(|v| !v.is_zero()) {
        return Solved::Inconsistent;
    }
    if rank < vars {
        return Solved::Underdetermined { free: vars - rank };
    }
    let mut x = vec![Rational::zero(); vars];
    for (r, &c) in pivots.iter().enumerate() {
        x[c] = rhs[r].clone();
    }
    Solved::Unique(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ratio::{int, rat};

    fn row(v: &[i64]) -> Vec<Rational> {
        v.iter().map(|&x| rat(x, 1)).collect()
    }

    #[test]
    fn unique() {
        // x + y = 3, x - y = 1
        let s = solve(vec![row(&[1, 1]), row(&[1, -1])], vec![int(3), int(1)], 2);
        assert_eq!(s, Solved::Unique(vec![int(2), int(1)]));
    }

    #[test]
    fn fractions_and_redundant_rows() {
        // 2x = 1, 4x = 2
        let s = solve(vec![row(&[2]), row(&[4])], vec![int(1), int(2)], 1);
        assert_eq!(s, Solved::Unique(vec![rat(1, 2)]));
    }

    #[test]
    fn underdetermined_and_inconsistent() {
        let s = solve(vec![row(&[1, 1])], vec![int(1)], 2);
        assert_eq!(s, Solved::Underdetermined { free: 1 });
        let s = solve(vec![row(&[1, 1]), row(&[2, 2])], vec![int(1), int(3)], 2);
        assert_eq!(s, Solved::Inconsistent);
    }
}
