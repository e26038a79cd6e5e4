//! Prime-field arithmetic and fixed-length symbol vectors.
//!
//! Messages are handled as vectors of `F_q` symbols. Every protocol step is
//! `F_q`-linear per symbol, so no extension-field tower is needed.

use std::fmt;

use rand::Rng;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};

/// Order `q` of a prime field. Restricted to `q < 2^32` so products fit in `u64`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PrimeOrder(u64);

impl PrimeOrder {
    pub fn new(q: u64) -> Result<Self> {
        if q >= 1 << 32 || !is_prime(q) {
            return Err(Error::NotPrime(q));
        }
        Ok(Self(q))
    }

    #[inline]
    pub fn get(self) -> u64 {
        self.0
    }

    pub fn element(self, value: u64) -> FieldElement {
        FieldElement {
            value: value % self.0,
            q: self,
        }
    }

    pub fn zero(self) -> FieldElement {
        self.element(0)
    }

    pub fn one(self) -> FieldElement {
        self.element(1)
    }

    /// The nonzero elements `1..q`, in increasing order.
    pub fn units(self) -> impl Iterator<Item = FieldElement> {
        (1..self.0).map(move |v| self.element(v))
    }

    pub fn unit_count(self) -> u64 {
        self.0 - 1
    }

    fn check(self, other: PrimeOrder) -> Result<()> {
        if self != other {
            return Err(Error::FieldMismatch {
                left: self.0,
                right: other.0,
            });
        }
        Ok(())
    }
}

impl fmt::Display for PrimeOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2u64;
    while d * d <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FieldElement {
    value: u64,
    q: PrimeOrder,
}

impl FieldElement {
    #[inline]
    pub fn value(self) -> u64 {
        self.value
    }

    #[inline]
    pub fn order(self) -> PrimeOrder {
        self.q
    }

    pub fn is_zero(self) -> bool {
        self.value == 0
    }

    pub fn try_add(self, rhs: FieldElement) -> Result<FieldElement> {
        self.q.check(rhs.q)?;
        Ok(self.q.element(self.value + rhs.value))
    }

    pub fn try_sub(self, rhs: FieldElement) -> Result<FieldElement> {
        self.q.check(rhs.q)?;
        Ok(self.q.element(self.value + self.q.0 - rhs.value))
    }

    pub fn try_mul(self, rhs: FieldElement) -> Result<FieldElement> {
        self.q.check(rhs.q)?;
        Ok(self.q.element(self.value * rhs.value))
    }


    /// Multiplicative inverse via Fermat: `a^(q-2)`.
    pub fn inverse(self) -> Result<FieldElement> {
        if self.value == 0 {
            return Err(Error::NoInverse);
        }
        Ok(self.q.element(pow_mod(self.value, self.q.0 - 2, self.q.0)))
    }
}

impl std::ops::Neg for FieldElement {
    type Output = FieldElement;

    fn neg(self) -> FieldElement {
        self.q.element(self.q.0 - self.value)
    }
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value)
    }
}

impl Serialize for FieldElement {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u64(self.value)
    }
}

fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1 % m;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = acc * base % m;
        }
        base = base * base % m;
        exp >>= 1;
    }
    acc
}

/// A message (or combination of messages) as `len` symbols over `F_q`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SymbolVector {
    q: PrimeOrder,
    symbols: Vec<u64>,
}

impl SymbolVector {
    pub fn from_values(q: PrimeOrder, values: impl IntoIterator<Item = u64>) -> Result<Self> {
        let symbols: Vec<u64> = values.into_iter().map(|v| v % q.0).collect();
        if symbols.is_empty() {
            return Err(Error::InvalidParams("symbol vector must be nonempty".into()));
        }
        Ok(Self { q, symbols })
    }

    pub fn zeros(q: PrimeOrder, len: usize) -> Self {
        assert!(len >= 1, "symbol vectors have length >= 1");
        Self {
            q,
            symbols: vec![0; len],
        }
    }

    pub fn random<R: Rng + ?Sized>(q: PrimeOrder, len: usize, rng: &mut R) -> Self {
        assert!(len >= 1, "symbol vectors have length >= 1");
        Self {
            q,
            symbols: (0..len).map(|_| rng.random_range(0..q.0)).collect(),
        }
    }

    pub fn order(&self) -> PrimeOrder {
        self.q
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<FieldElement> {
        self.symbols.get(i).map(|&v| self.q.element(v))
    }

    pub fn values(&self) -> &[u64] {
        &self.symbols
    }

    fn check(&self, other: &SymbolVector) -> Result<()> {
        self.q.check(other.q)?;
        if self.len() != other.len() {
            return Err(Error::LengthMismatch {
                left: self.len(),
                right: other.len(),
            });
        }
        Ok(())
    }

    /// Componentwise `c * x + y`.
    pub fn axpy(c: FieldElement, x: &SymbolVector, y: &SymbolVector) -> Result<SymbolVector> {
        x.check(y)?;
        x.q.check(c.q)?;
        let q = x.q.0;
        let symbols = x
            .symbols
            .iter()
            .zip(&y.symbols)
            .map(|(&a, &b)| (c.value * a + b) % q)
            .collect();
        Ok(SymbolVector { q: x.q, symbols })
    }

    pub fn try_sub(&self, rhs: &SymbolVector) -> Result<SymbolVector> {
        SymbolVector::axpy(self.q.element(self.q.0 - 1), rhs, self)
    }

    pub fn scale(&self, c: FieldElement) -> Result<SymbolVector> {
        self.q.check(c.q)?;
        let q = self.q.0;
        Ok(SymbolVector {
            q: self.q,
            symbols: self.symbols.iter().map(|&a| a * c.value % q).collect(),
        })
    }
}

impl Serialize for SymbolVector {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.symbols.serialize(s)
    }
}

/// Free-function forms of the element operations.
pub fn fe_add(a: FieldElement, b: FieldElement) -> Result<FieldElement> {
    a.try_add(b)
}

pub fn fe_mul(a: FieldElement, b: FieldElement) -> Result<FieldElement> {
    a.try_mul(b)
}

pub fn fe_inv(a: FieldElement) -> Result<FieldElement> {
    a.inverse()
}

pub fn vec_axpy(c: FieldElement, x: &SymbolVector, y: &SymbolVector) -> Result<SymbolVector> {
    SymbolVector::axpy(c, x, y)
}

/// Rank over `F_q` of the given rows (each row reduced mod `q`).
pub fn rank_mod(q: PrimeOrder, rows: &[Vec<u64>]) -> usize {
    let p = q.0;
    let mut m: Vec<Vec<u64>> = rows
        .iter()
        .map(|r| r.iter().map(|v| v % p).collect())
        .collect();
    let cols = m.iter().map(Vec::len).max().unwrap_or(0);
    let mut rank = 0;
    for col in 0..cols {
        let Some(pivot) = (rank..m.len()).find(|&r| m[r].get(col).copied().unwrap_or(0) != 0)
        else {
            continue;
        };
        m.swap(rank, pivot);
        let inv = pow_mod(m[rank][col], p - 2, p);
        for v in m[rank].iter_mut() {
            *v = *v * inv % p;
        }
        for r in 0..m.len() {
            if r == rank {
                continue;
            }
            let factor = m[r].get(col).copied().unwrap_or(0);
            if factor == 0 {
                continue;
            }
            let pivot_row = m[rank].clone();
            for (c, pv) in pivot_row.iter().enumerate() {
                m[r][c] = (m[r][c] + p - factor * pv % p) % p;
            }
        }
        rank += 1;
    }
    rank
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn f(q: u64, v: u64) -> FieldElement {
        PrimeOrder::new(q).unwrap().element(v)
    }

    fn sv(q: u64, v: &[u64]) -> SymbolVector {
        SymbolVector::from_values(PrimeOrder::new(q).unwrap(), v.iter().copied()).unwrap()
    }

    #[test]
    fn rejects_composites() {
        for q in [0, 1, 4, 6, 9, 15] {
            assert_eq!(PrimeOrder::new(q), Err(Error::NotPrime(q)));
        }
        assert!(PrimeOrder::new(2).is_ok());
        assert!(PrimeOrder::new(7919).is_ok());
    }

    #[test]
    fn add_examples() {
        assert_eq!(fe_add(f(3, 2), f(3, 2)).unwrap(), f(3, 1));
        for x in 0..3 {
            assert_eq!(fe_add(f(3, 0), f(3, x)).unwrap(), f(3, x));
        }
        assert_eq!(fe_add(f(5, 4), f(5, 3)).unwrap(), f(5, 2));
    }

    #[test]
    fn mul_examples() {
        assert_eq!(fe_mul(f(3, 2), f(3, 2)).unwrap(), f(3, 1));
        for x in 0..3 {
            assert_eq!(fe_mul(f(3, 1), f(3, x)).unwrap(), f(3, x));
        }
        assert_eq!(fe_mul(f(7, 3), f(7, 5)).unwrap(), f(7, 1));
    }

    #[test]
    fn inv_examples() {
        assert_eq!(fe_inv(f(3, 2)).unwrap(), f(3, 2));
        assert_eq!(fe_inv(f(5, 3)).unwrap(), f(5, 2));
        assert_eq!(fe_inv(f(2, 1)).unwrap(), f(2, 1));
        assert_eq!(fe_inv(f(5, 0)), Err(Error::NoInverse));
    }

    #[test]
    fn mismatched_orders_error() {
        assert!(matches!(
            fe_add(f(3, 1), f(5, 1)),
            Err(Error::FieldMismatch { left: 3, right: 5 })
        ));
        assert!(fe_mul(f(3, 1), f(5, 1)).is_err());
        assert!(vec_axpy(f(5, 1), &sv(3, &[1]), &sv(3, &[1])).is_err());
        assert!(matches!(
            vec_axpy(f(3, 1), &sv(3, &[1, 2]), &sv(3, &[1])),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn axpy_examples() {
        assert_eq!(
            vec_axpy(f(3, 1), &sv(3, &[1, 2]), &sv(3, &[2, 2])).unwrap(),
            sv(3, &[0, 1])
        );
        let y = sv(3, &[2, 1, 0]);
        assert_eq!(vec_axpy(f(3, 0), &sv(3, &[1, 1, 1]), &y).unwrap(), y);
        assert_eq!(
            vec_axpy(f(3, 2), &sv(3, &[1, 0, 1, 2]), &sv(3, &[0, 0, 0, 0])).unwrap(),
            sv(3, &[2, 0, 2, 1])
        );
    }

    #[test]
    fn field_axioms_exhaustive() {
        for q in [2u64, 3, 5, 7] {
            let all: Vec<_> = (0..q).map(|v| f(q, v)).collect();
            let zero = f(q, 0);
            let one = f(q, 1);
            for &a in &all {
                assert_eq!(a.try_add(zero).unwrap(), a);
                assert_eq!(a.try_mul(one).unwrap(), a);
                assert_eq!(a.try_add(-a).unwrap(), zero);
                if !a.is_zero() {
                    assert_eq!(a.try_mul(a.inverse().unwrap()).unwrap(), one);
                }
                for &b in &all {
                    assert_eq!(a.try_add(b).unwrap(), b.try_add(a).unwrap());
                    assert_eq!(a.try_mul(b).unwrap(), b.try_mul(a).unwrap());
                    assert_eq!(a.try_sub(b).unwrap().try_add(b).unwrap(), a);
                    for &c in &all {
                        let l = a.try_add(b).unwrap().try_add(c).unwrap();
                        let r = a.try_add(b.try_add(c).unwrap()).unwrap();
                        assert_eq!(l, r);
                        let l = a.try_mul(b).unwrap().try_mul(c).unwrap();
                        let r = a.try_mul(b.try_mul(c).unwrap()).unwrap();
                        assert_eq!(l, r);
                        let l = a.try_mul(b.try_add(c).unwrap()).unwrap();
                        let r = a
                            .try_mul(b)
                            .unwrap()
                            .try_add(a.try_mul(c).unwrap())
                            .unwrap();
                        assert_eq!(l, r);
                    }
                }
            }
        }
    }

    #[test]
    fn rank_over_small_fields() {
        let q2 = PrimeOrder::new(2).unwrap();
        // rows {1,2},{2,3},{1,3}: dependent in characteristic 2 only
        let rows = vec![vec![1, 1, 0], vec![0, 1, 1], vec![1, 0, 1]];
        assert_eq!(rank_mod(q2, &rows), 2);
        assert_eq!(rank_mod(PrimeOrder::new(3).unwrap(), &rows), 3);
        assert_eq!(rank_mod(q2, &[]), 0);
    }

    fn vec_strategy(len: usize) -> impl Strategy<Value = Vec<u64>> {
        proptest::collection::vec(0u64..7, len)
    }

    proptest! {
        #[test]
        fn axpy_is_linear(
            c in 0u64..7, d in 0u64..7,
            x1 in vec_strategy(6), x2 in vec_strategy(6),
            y1 in vec_strategy(6), y2 in vec_strategy(6),
        ) {
            let q = PrimeOrder::new(7).unwrap();
            let c = q.element(c);
            let d = q.element(d);
            let v = |s: &Vec<u64>| SymbolVector::from_values(q, s.iter().copied()).unwrap();
            let (x1, x2, y1, y2) = (v(&x1), v(&x2), v(&y1), v(&y2));
            // axpy(c, d*x1 + x2, d*y1 + y2) == d*axpy(c, x1, y1) + axpy(c, x2, y2)
            let x = SymbolVector::axpy(d, &x1, &x2).unwrap();
            let y = SymbolVector::axpy(d, &y1, &y2).unwrap();
            let lhs = SymbolVector::axpy(c, &x, &y).unwrap();
            let a = SymbolVector::axpy(c, &x1, &y1).unwrap();
            let b = SymbolVector::axpy(c, &x2, &y2).unwrap();
            let rhs = SymbolVector::axpy(d, &a, &b).unwrap();
            prop_assert_eq!(lhs, rhs);
        }
    }
}
