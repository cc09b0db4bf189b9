//! Scalar abstraction shared by the deterministic solvers.
//!
//! Everything that only needs field arithmetic (Green's functions, Kalikow
//! averages, gambler's ruin, covariance) is written against [`Scalar`], so the
//! same code runs in `f32`, `f64` or exact [`BigRational`] arithmetic.

use std::fmt::Debug;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Num, Signed, ToPrimitive};

pub trait Scalar:
    Num + Signed + Clone + Debug + PartialOrd + Send + Sync + 'static
{
    /// Exact conversion from a double (rounding for `f32`).
    fn from_f64(x: f64) -> Self;

    fn to_f64(&self) -> f64;

    fn from_ratio(num: i64, den: i64) -> Self;

    /// True when arithmetic is exact; iterative solvers are disabled for
    /// exact types.
    fn is_exact() -> bool {
        false
    }

    fn from_usize(n: usize) -> Self {
        Self::from_ratio(n as i64, 1)
    }
}

impl Scalar for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn from_ratio(num: i64, den: i64) -> Self {
        num as f64 / den as f64
    }
}

impl Scalar for f32 {
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    fn to_f64(&self) -> f64 {
        *self as f64
    }
    fn from_ratio(num: i64, den: i64) -> Self {
        (num as f64 / den as f64) as f32
    }
}

impl Scalar for BigRational {
    fn from_f64(x: f64) -> Self {
        BigRational::from_float(x).expect("finite double")
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or_else(|| {
            // Very large numerators/denominators: go through logs of magnitude.
            let n = self.numer().to_f64().unwrap_or(f64::INFINITY);
            let d = self.denom().to_f64().unwrap_or(f64::INFINITY);
            n / d
        })
    }
    fn from_ratio(num: i64, den: i64) -> Self {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }
    fn is_exact() -> bool {
        true
    }
}

/// Compensated (Neumaier) summation for floating types; exact types simply add.
#[derive(Clone, Debug)]
pub struct KahanSum<S: Scalar> {
    sum: S,
    comp: S,
}

impl<S: Scalar> Default for KahanSum<S> {
    fn default() -> Self {
        Self { sum: S::zero(), comp: S::zero() }
    }
}

impl<S: Scalar> KahanSum<S> {
    pub fn add(&mut self, x: S) {
        if S::is_exact() {
            self.sum = self.sum.clone() + x;
            return;
        }
        let t = self.sum.clone() + x.clone();
        if self.sum.abs() >= x.abs() {
            self.comp = self.comp.clone() + ((self.sum.clone() - t.clone()) + x);
        } else {
            self.comp = self.comp.clone() + ((x - t.clone()) + self.sum.clone());
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &KahanSum<S>) {
        self.add(other.sum.clone());
        self.add(other.comp.clone());
    }

    pub fn value(&self) -> S {
        self.sum.clone() + self.comp.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rational_roundtrip_is_exact() {
        let x = 0.1f64;
        let r = <BigRational as Scalar>::from_f64(x);
        assert_eq!(Scalar::to_f64(&r), x);
        assert!(BigRational::is_exact());
    }

    #[test]
    fn kahan_recovers_small_terms() {
        let mut k = KahanSum::<f64>::default();
        k.add(1.0);
        for _ in 0..10_000 {
            k.add(1e-16);
        }
        assert!((k.value() - (1.0 + 1e-12)).abs() < 1e-20);
    }
}
