//! Renormalization scales `a_k, b_k, α_k, N_k, N'_k`, the audit of their
//! growth conditions, `Ξ_k`, the bad-box probability recursion and good/bad
//! classification of 0-boxes (per environment) and k-boxes (from verdict maps).

use std::collections::BTreeMap;
use std::sync::Arc;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::environment::{alpha_d, EnvironmentLaw, Quenched};
use crate::error::{Error, Result};
use crate::green::{KilledChain, SolvePolicy};
use crate::lattice::{make_box_with_lateral, Point, Side};
use crate::rng::{env_seed, mix};
use crate::scalar::Scalar;
use crate::stats::{wilson, MCEstimate, Z95};
use crate::walker::run_until_exit_stream;

pub const MAX_K: u64 = 10_000;
/// Upper limit on the total number of bits held by the `N_k, N'_k` tables.
pub const SEQUENCE_BIT_BUDGET: f64 = 2e9;
/// `c^* = (128/11) ζ(3)`.
pub const C7_CONSTANT: f64 = 128.0 / 11.0 * 1.202_056_903_159_594_2;

/// Relative padding applied to library logarithms to make them enclosures.
const LOG_PAD: f64 = 1e-14;

/// Enclosure `[lo, hi]` of `ln x` for a positive big integer.
pub fn ln_bounds(x: &BigUint) -> (f64, f64) {
    assert!(!x.is_zero(), "logarithm of zero");
    let bits = x.bits();
    let shift = bits.saturating_sub(53);
    let top = (x >> shift).to_u64().expect("53-bit mantissa") as f64;
    let s = shift as f64 * std::f64::consts::LN_2;
    let lo = (top.ln() + s) * (1.0 - LOG_PAD);
    let hi = if shift == 0 { top.ln() } else { (top + 1.0).ln() + s } * (1.0 + LOG_PAD) + f64::MIN_POSITIVE;
    (lo, hi)
}

fn rational(x: f64) -> BigRational {
    <BigRational as Scalar>::from_f64(x)
}

fn ratf(x: &BigRational) -> f64 {
    <BigRational as Scalar>::to_f64(x)
}

fn big(x: &BigUint) -> BigRational {
    BigRational::from_integer(BigInt::from(x.clone()))
}

fn floor_u(x: &BigRational) -> BigUint {
    x.floor().to_integer().to_biguint().unwrap_or_default()
}

/// The sequences `a_k, b_k, α_k, N_k, N'_k` for `k = 0..=k_max`, with
/// `a_0 = 2`, `a_{k+1} = (k+1+K)^3`, `b_k = a_k (k+1+K)^2`, `N'_0 = NL/2`.
#[derive(Clone, Debug)]
pub struct ScaleSequence {
    pub epsilon: f64,
    pub theta: f64,
    pub l: u64,
    pub nl: BigUint,
    pub big_k: BigUint,
    /// Set when `K` was supplied instead of `22[ε⁻⁶]`; audits of such
    /// sequences say nothing about the small-ε regime.
    pub k_overridden: bool,
    pub k_max: u64,
    pub a: Vec<BigUint>,
    pub b: Vec<BigUint>,
    pub alpha: Vec<BigUint>,
    pub n: Vec<BigUint>,
    pub n_prime: Vec<BigUint>,
}

/// `22 [ε⁻⁶]` in exact arithmetic.
pub fn default_k(epsilon: f64) -> BigUint {
    let inv = BigRational::one() / rational(epsilon);
    let mut p = BigRational::one();
    for _ in 0..6 {
        p = p * inv.clone();
    }
    floor_u(&p) * 22u32
}

/// `L = 2[θ/ε]`.
pub fn scale_l(theta: f64, epsilon: f64) -> u64 {
    floor_u(&(rational(theta) / rational(epsilon))).to_u64().unwrap_or(u64::MAX / 2) * 2
}

pub fn make_scale_sequence(epsilon: f64, theta: f64, k_max: u64, k_override: Option<u64>) -> Result<ScaleSequence> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::invalid(format!("ε must lie in (0,1), got {epsilon}")));
    }
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(Error::invalid(format!("θ must be positive, got {theta}")));
    }
    if k_max > MAX_K {
        return Err(Error::budget(format!("k_max = {k_max} exceeds the limit {MAX_K}")));
    }
    let l = scale_l(theta, epsilon);
    if l == 0 {
        return Err(Error::invalid(format!("L = 2[θ/ε] vanishes for θ={theta}, ε={epsilon}")));
    }
    let nl = BigUint::from(l).pow(4);
    let (big_k, k_overridden) = match k_override {
        Some(k) => (BigUint::from(k), true),
        None => (default_k(epsilon), false),
    };
    let log_bits = |x: &BigUint| x.bits() as f64;
    let per_step = 5.0 * (log_bits(&big_k) + (k_max as f64 + 2.0).log2() + 1.0);
    let est = (k_max as f64 + 1.0).powi(2) * per_step + 2.0 * (k_max as f64 + 1.0) * log_bits(&nl);
    if est > SEQUENCE_BIT_BUDGET {
        return Err(Error::budget(format!(
            "materializing N_k up to k={k_max} needs about {est:.2e} bits, above {SEQUENCE_BIT_BUDGET:.0e}"
        )));
    }
    let cnt = k_max as usize + 1;
    let shifted = |k: u64| &big_k + BigUint::from(k);
    let mut a = Vec::with_capacity(cnt + 1);
    a.push(BigUint::from(2u32));
    for k in 0..cnt as u64 {
        a.push(shifted(k + 1).pow(3));
    }
    let b: Vec<BigUint> = (0..cnt).map(|k| &a[k] * shifted(k as u64 + 1).pow(2)).collect();
    let alpha: Vec<BigUint> = (0..cnt).map(|k| shifted(k as u64 + 1).pow(5)).collect();
    let mut n_prime = Vec::with_capacity(cnt);
    n_prime.push(&nl / 2u32);
    for k in 1..cnt {
        let next = &b[k - 1] * &n_prime[k - 1];
        n_prime.push(next);
    }
    let n: Vec<BigUint> = (0..cnt).map(|k| &a[k] * &n_prime[k]).collect();
    a.truncate(cnt);
    Ok(ScaleSequence { epsilon, theta, l, nl, big_k, k_overridden, k_max, a, b, alpha, n, n_prime })
}

impl ScaleSequence {
    /// `N_k = a_k N'_k`, `N'_{k+1} = b_k N'_k`, `N_{k+1} = α_k N_k` and
    /// `α_k a_k = a_{k+1} b_k`, all exact. Returns the first failing `k`.
    pub fn identity_violation(&self) -> Option<u64> {
        for k in 0..=self.k_max as usize {
            if self.n[k] != &self.a[k] * &self.n_prime[k] {
                return Some(k as u64);
            }
            if k < self.k_max as usize {
                if self.n_prime[k + 1] != &self.b[k] * &self.n_prime[k] {
                    return Some(k as u64);
                }
                if self.n[k + 1] != &self.alpha[k] * &self.n[k] || &self.alpha[k] * &self.a[k] != &self.a[k + 1] * &self.b[k]
                {
                    return Some(k as u64);
                }
            }
        }
        None
    }

    /// One row per `k`: `k,a_k,b_k,alpha_k,N_k,N'_k` in decimal.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,a,b,alpha,N,N_prime\n");
        for k in 0..=self.k_max as usize {
            out.push_str(&format!(
                "{k},{},{},{},{},{}\n",
                self.a[k], self.b[k], self.alpha[k], self.n[k], self.n_prime[k]
            ));
        }
        out
    }
}

/// Outcome of one condition over the materialized range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub name: String,
    pub holds: bool,
    /// Smallest `k` at which the condition fails, if any.
    pub first_violation: Option<u64>,
    /// `k` values where the interval enclosure could not decide.
    pub undecided: Vec<u64>,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct C7Report {
    /// `Π_{k=1}^{k_max} (1 - 8 a_{k-1}/b_{k-1})` from the exact rational product.
    pub product_direct: f64,
    /// Same product from `Π (1 - 8/(k+K)^2)` in floating point.
    pub product_closed: f64,
    pub product_gap: f64,
    /// Lower bound on the infinite product (tail bounded by `8/(k_max+K)`).
    pub infinite_lower: f64,
    /// Smallest `c` with `infinite_lower >= 1 - c ε³`.
    pub c_eps3: f64,
    /// Smallest `c` with `infinite_lower >= 1 - c ε⁶`.
    pub c_eps6: f64,
    pub holds_eps3: bool,
    pub holds_eps6: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionAudit {
    pub epsilon: f64,
    pub big_k: String,
    pub k_overridden: bool,
    pub k_max: u64,
    pub label: String,
    pub conditions: Vec<ConditionCheck>,
    /// Smallest `c_*` with `Σ_{i<=j} log α_{i-1} <= c_* j² log ε⁻¹` on the range.
    pub c_star_c6: f64,
    pub c7: C7Report,
    pub reference_c7_constant: f64,
}

impl ConditionAudit {
    pub fn check(&self, name: &str) -> Option<&ConditionCheck> {
        self.conditions.iter().find(|c| c.name == name)
    }

    pub fn all_hold(&self, names: &[&str]) -> bool {
        names.iter().all(|n| self.check(n).is_some_and(|c| c.holds))
    }
}

fn simple_check(name: &str, failing: Option<u64>, detail: String) -> ConditionCheck {
    ConditionCheck { name: name.into(), holds: failing.is_none(), first_violation: failing, undecided: vec![], detail }
}

/// The C5 left side `2/a_k + (1/12) log(a_{k-1})/a_{k-1} + NL/α_{k-1}` as an
/// exact rational enclosure, against `1/(k+1)²`.
fn c5_at(seq: &ScaleSequence, k: usize) -> (BigRational, BigRational, BigRational) {
    let (lo, hi) = ln_bounds(&seq.a[k - 1]);
    let prev = big(&seq.a[k - 1]);
    let base = BigRational::from_integer(2.into()) / big(&seq.a[k]) + big(&seq.nl) / big(&seq.alpha[k - 1]);
    let twelve = BigRational::from_integer(12.into());
    let lhs_lo = base.clone() + rational(lo) / (twelve.clone() * prev.clone());
    let lhs_hi = base + rational(hi) / (twelve * prev);
    let rhs = BigRational::new(1.into(), BigInt::from((k as u64 + 1).pow(2)));
    (lhs_lo, lhs_hi, rhs)
}

fn c7_report(seq: &ScaleSequence) -> C7Report {
    let kk = seq.big_k.to_f64().unwrap_or(f64::INFINITY);
    let mut num = BigInt::one();
    let mut den = BigInt::one();
    let eight = BigInt::from(8);
    for k in 1..=seq.k_max as usize {
        let a = BigInt::from(seq.a[k - 1].clone());
        let b = BigInt::from(seq.b[k - 1].clone());
        num *= &b - &eight * &a;
        den *= b;
    }
    let product_direct = if seq.k_max == 0 { 1.0 } else { ratf(&BigRational::new(num, den)) };
    let log_closed: f64 = (1..=seq.k_max).map(|k| (-8.0 / (k as f64 + kk).powi(2)).ln_1p()).sum();
    let product_closed = log_closed.exp();
    let tail = 8.0 / (seq.k_max as f64 + kk);
    let infinite_lower = if product_direct > 0.0 { product_direct * (1.0 - tail).max(0.0) } else { product_direct };
    let e3 = seq.epsilon.powi(3);
    let e6 = seq.epsilon.powi(6);
    C7Report {
        product_direct,
        product_closed,
        product_gap: (product_direct - product_closed).abs(),
        infinite_lower,
        c_eps3: (1.0 - infinite_lower) / e3,
        c_eps6: (1.0 - infinite_lower) / e6,
        holds_eps3: infinite_lower >= 1.0 - C7_CONSTANT * e3,
        holds_eps6: infinite_lower >= 1.0 - C7_CONSTANT * e6,
    }
}

/// Audit of C1–C7 on `k <= k_max`. C1–C3 and C5 are exact; C4 is reported
/// as its supremum on the range; C6 and C7 report their smallest constants.
pub fn verify_conditions(seq: &ScaleSequence) -> ConditionAudit {
    let km = seq.k_max as usize;
    let c1_ok = seq.a[0] == BigUint::from(2u32) && &seq.n_prime[0] * 2u32 == seq.nl;
    let c1 = simple_check("C1", (!c1_ok).then_some(0), format!("a_0 = {}, 2N'_0 = {}", seq.a[0], &seq.n_prime[0] * 2u32));

    let c2_fail = (1..=km).find(|&k| seq.a[k] <= seq.a[k - 1]).map(|k| k as u64);
    let c2 = simple_check("C2", c2_fail, "a_k strictly increasing".into());

    let c3_fail = (0..=km).find(|&k| &seq.a[k] * 22u32 > seq.b[k]).map(|k| k as u64);
    let c3 = simple_check("C3", c3_fail, "22 a_k <= b_k".into());

    let ratios: Vec<f64> = (0..=km).map(|k| ln_bounds(&seq.alpha[k]).1 / seq.a[k].to_f64().unwrap_or(f64::INFINITY)).collect();
    let (arg, sup) = ratios.iter().enumerate().fold((0, f64::NEG_INFINITY), |acc, (i, v)| if *v > acc.1 { (i, *v) } else { acc });
    let tail_start = km / 2 + 1;
    let tail_monotone = (tail_start..=km).all(|k| ratios[k] <= ratios[k - 1]);
    let c4 = ConditionCheck {
        name: "C4".into(),
        holds: sup.is_finite() && tail_monotone,
        first_violation: None,
        undecided: vec![],
        detail: format!("sup log α_k / a_k = {sup:.6e} at k = {arg}; nonincreasing over the upper half: {tail_monotone}"),
    };

    let mut c5_fail = None;
    let mut c5_undecided = Vec::new();
    let mut worst = f64::INFINITY;
    for k in 1..=km {
        let (lo, hi, rhs) = c5_at(seq, k);
        worst = worst.min(ratf(&((rhs.clone() - hi.clone()) / rhs.clone())));
        if hi < rhs {
            continue;
        }
        if lo >= rhs {
            c5_fail.get_or_insert(k as u64);
        } else {
            c5_undecided.push(k as u64);
        }
    }
    let c5 = ConditionCheck {
        name: "C5".into(),
        holds: c5_fail.is_none() && c5_undecided.is_empty(),
        first_violation: c5_fail,
        undecided: c5_undecided,
        detail: format!("smallest relative margin (1/(k+1)² - lhs)(k+1)² = {worst:.6e}"),
    };

    let log_inv = -seq.epsilon.ln();
    let mut acc = 0.0;
    let mut c_star = 0.0f64;
    for j in 1..=km {
        acc += ln_bounds(&seq.alpha[j - 1]).1;
        c_star = c_star.max(acc / ((j * j) as f64 * log_inv));
    }
    let c6 = ConditionCheck {
        name: "C6".into(),
        holds: c_star.is_finite(),
        first_violation: None,
        undecided: vec![],
        detail: format!("smallest c_* on the range: {c_star:.6e}"),
    };

    let c7r = c7_report(seq);
    let c7_fail = (1..=km).find(|&k| &seq.a[k - 1] * 8u32 >= seq.b[k - 1]).map(|k| k as u64);
    let c7 = ConditionCheck {
        name: "C7".into(),
        holds: c7_fail.is_none() && c7r.infinite_lower > 0.0,
        first_violation: c7_fail,
        undecided: vec![],
        detail: format!(
            "product {:.15e}, infinite-product lower bound {:.15e}, smallest c for ε³: {:.6e}",
            c7r.product_direct, c7r.infinite_lower, c7r.c_eps3
        ),
    };

    let label = if seq.k_overridden {
        format!("K OVERRIDDEN to {} (not 22[ε⁻⁶]); desk-scale arithmetic only", seq.big_k)
    } else {
        format!("K = 22[ε⁻⁶] = {}", seq.big_k)
    };
    ConditionAudit {
        epsilon: seq.epsilon,
        big_k: seq.big_k.to_string(),
        k_overridden: seq.k_overridden,
        k_max: seq.k_max,
        label,
        conditions: vec![c1, c2, c3, c4, c5, c6, c7],
        c_star_c6: c_star,
        c7: c7r,
        reference_c7_constant: C7_CONSTANT,
    }
}

/// `Ξ_k = Π_{j=1}^k (1 - 1/(j+1)²)` as `(numerator, denominator)` in lowest
/// terms, by running the product.
fn xi_parts(k: u64) -> (u128, u128) {
    let (mut p, mut q) = (1u128, 1u128);
    for j in 1..=k as u128 {
        let s = (j + 1) * (j + 1);
        p *= s - 1;
        q *= s;
        let g = p.gcd(&q);
        p /= g;
        q /= g;
    }
    (p, q)
}

pub fn xi_k(k: u64) -> BigRational {
    let (p, q) = xi_parts(k);
    BigRational::new(BigInt::from(p), BigInt::from(q))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct XiReport {
    pub k_max: u64,
    /// `Ξ_k > 1/2` for every `k <= k_max`, exactly.
    pub above_half: bool,
    /// `Ξ_k < Ξ_{k-1}` for every `1 <= k <= k_max`, exactly.
    pub decreasing: bool,
    pub last: f64,
    pub last_gap: f64,
}

/// Exact sweep of `Ξ_0, …, Ξ_{k_max}`.
pub fn xi_sweep(k_max: u64) -> XiReport {
    let (mut p, mut q) = (1u128, 1u128);
    let mut above_half = true;
    let mut decreasing = true;
    for j in 1..=k_max as u128 {
        let s = (j + 1) * (j + 1);
        let (np, nq) = (p * (s - 1), q * s);
        let g = np.gcd(&nq);
        let (np, nq) = (np / g, nq / g);
        decreasing &= np * q < p * nq;
        above_half &= 2 * np > nq;
        p = np;
        q = nq;
    }
    let last = p as f64 / q as f64;
    XiReport { k_max, above_half, decreasing, last, last_gap: last - 0.5 }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BadProbReport {
    pub m0: f64,
    pub d: usize,
    /// `m_k = m0 - 12d Σ_{j=1}^k log N_j / 2^j`.
    pub m: Vec<f64>,
    /// `log` of the bound `e^{-m_k 2^k}`.
    pub log_bound: Vec<f64>,
    /// Certified lower bound on `2^k(m_{k-1} - m_k) - 6d log(2N_k)`.
    pub implication_slack: Vec<f64>,
    pub implication_holds: bool,
    pub partial_sums: Vec<f64>,
    /// `max_{60 < k <= k_max} |S_k - S_60|`, if the range reaches past 60.
    pub cauchy_after_60: Option<f64>,
    /// `6d log(2N_k) / 2^k`.
    pub union_ratio: Vec<f64>,
    /// Smallest rank from which `union_ratio` decreases strictly to `k_max`.
    pub union_ratio_monotone_from: u64,
    pub inf_m: f64,
    pub inf_positive: bool,
}

pub fn bad_prob_recursion(seq: &ScaleSequence, d: usize, m0: f64) -> Result<BadProbReport> {
    if !(m0 > 0.0 && m0.is_finite()) {
        return Err(Error::invalid(format!("m0 must be positive, got {m0}")));
    }
    let km = seq.k_max as usize;
    let df = d as f64;
    let ln2 = std::f64::consts::LN_2;
    let mut m = vec![m0];
    let mut sums = vec![0.0];
    let mut slack = vec![f64::NAN];
    let mut union_ratio = Vec::with_capacity(km + 1);
    for k in 0..=km {
        let (lo, hi) = ln_bounds(&seq.n[k]);
        let scale = 0.5f64.powi(k as i32);
        union_ratio.push(6.0 * df * (hi + ln2) * scale);
        if k == 0 {
            continue;
        }
        let s = sums[k - 1] + lo * scale;
        sums.push(s);
        m.push(m0 - 12.0 * df * s);
        // 2^k (m_{k-1} - m_k) = 12d log N_k, so the slack is 6d (2 log N_k - log 2N_k).
        slack.push(12.0 * df * lo - 6.0 * df * (hi + ln2 * (1.0 + LOG_PAD)));
    }
    let log_bound: Vec<f64> = m.iter().enumerate().map(|(k, v)| -v * 2f64.powi(k as i32)).collect();
    let implication_holds = slack.iter().skip(1).all(|s| *s >= 0.0);
    let cauchy_after_60 = (km > 60).then(|| sums[61..].iter().map(|s| (s - sums[60]).abs()).fold(0.0, f64::max));
    let mut from = km;
    while from > 0 && union_ratio[from - 1] > union_ratio[from] {
        from -= 1;
    }
    let inf_m = m.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(BadProbReport {
        m0,
        d,
        m,
        log_bound,
        implication_slack: slack,
        implication_holds,
        partial_sums: sums,
        cauchy_after_60,
        union_ratio,
        union_ratio_monotone_from: from as u64,
        inf_m,
        inf_positive: inf_m > 0.0,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BoxStatus {
    Good,
    Bad,
    Inconclusive,
}

/// Constants entering the 0-box thresholds. They are not known explicitly,
/// so every verdict records the values used.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Box0Constants {
    pub c2: f64,
    pub c4: f64,
    pub delta: f64,
    /// Power of `λ` dividing `c4` in the exit-time threshold.
    pub lambda_power: f64,
}

impl Default for Box0Constants {
    fn default() -> Self {
        Self { c2: 1.0, c4: 1.0, delta: 0.25, lambda_power: 2.0 }
    }
}

/// Geometry of a 0-box: `B_M` with `M = N_0` and middle-frontal depth `N'_0`.
/// `lateral` and `window` are `25M³` and `M³` unless truncated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Box0Geometry {
    pub m: i64,
    pub n_prime: i64,
    pub lateral: i64,
    /// Transverse half-width of the middle-frontal part that is inspected.
    pub window: i64,
}

impl Box0Geometry {
    /// `M = NL`, `N'_0 = NL/2` from `L = 2[θ/ε]`.
    pub fn from_scales(theta: f64, epsilon: f64) -> Result<Self> {
        let l = scale_l(theta, epsilon) as i64;
        if l == 0 {
            return Err(Error::invalid("L = 2[θ/ε] vanishes"));
        }
        let m = l.checked_pow(4).ok_or_else(|| Error::budget("NL overflows"))?;
        Self::full(m)
    }

    pub fn full(m: i64) -> Result<Self> {
        if m < 2 || m % 2 != 0 {
            return Err(Error::invalid(format!("0-box scale must be even and >= 2, got {m}")));
        }
        let cube = m.checked_pow(3).ok_or_else(|| Error::budget("box lateral extent overflows"))?;
        let lateral = cube.checked_mul(25).ok_or_else(|| Error::budget("box lateral extent overflows"))?;
        Ok(Self { m, n_prime: m / 2, lateral, window: cube })
    }

    pub fn truncated(self, lateral: i64, window: i64) -> Result<Self> {
        if !(1 <= window && window <= lateral) {
            return Err(Error::invalid(format!("need 1 <= window <= lateral, got window={window}, lateral={lateral}")));
        }
        Ok(Self { lateral, window, ..self })
    }

    pub fn is_truncated(&self) -> bool {
        self.m.checked_pow(3).map_or(true, |c| self.window < c || self.lateral < 25 * c)
    }

    pub fn shape(&self) -> BoxShape {
        BoxShape { m: self.m, lateral: self.lateral }
    }

    fn in_frontal_part(&self, rel: &[i64]) -> bool {
        rel[0] >= self.m - self.n_prime && rel[0] < self.m && rel[1..].iter().all(|s| s.abs() < self.window)
    }

    fn frontal_part_count(&self, d: usize) -> u128 {
        self.n_prime as u128 * ((2 * self.window - 1) as u128).pow(d as u32 - 1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Box0Method {
    /// Exact solve when the box fits the site budget, sampling otherwise.
    Auto,
    Exact,
    MonteCarlo { n_starts: u64, n_walks: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Box0Evidence {
    pub method: String,
    pub env_seed: u64,
    pub epsilon: f64,
    pub lambda: f64,
    pub geometry: Box0Geometry,
    pub constants: Box0Constants,
    pub frontal_threshold: f64,
    pub time_threshold: f64,
    pub frontal_inf: f64,
    /// 95% interval of the worst frontal probability (degenerate when exact).
    pub frontal_ci: (f64, f64),
    pub frontal_argmin: Point,
    pub time_inf: f64,
    pub time_ci: (f64, f64),
    pub frontal_ok: BoxStatus,
    pub time_ok: BoxStatus,
    /// Fraction of the middle-frontal part inspected.
    pub coverage: f64,
    pub truncated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubBoxEvidence {
    pub sub_level: usize,
    pub intersecting: u128,
    pub listed: u128,
    pub bad: usize,
    pub inconclusive: usize,
    /// Center of a k-box meeting every bad (and inconclusive) sub-box.
    pub cover: Option<Point>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Evidence {
    Level0(Box0Evidence),
    LevelK(SubBoxEvidence),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxVerdict {
    pub level: usize,
    pub center: Point,
    pub verdict: BoxStatus,
    pub evidence: Evidence,
}

/// `(1 - e^{-(c2/2)/ε}, (1/λ - c4 ε^{α(d)-δ}/λ^p) N'_0)`; the time threshold
/// is infinite when `λ <= 0`.
pub fn box0_thresholds(d: usize, epsilon: f64, lambda: f64, n_prime: i64, c: &Box0Constants) -> (f64, f64) {
    let frontal = 1.0 - (-(c.c2 / 2.0) / epsilon).exp();
    let time = if lambda > 0.0 {
        (1.0 / lambda - c.c4 / lambda.powf(c.lambda_power) * epsilon.powf(alpha_d(d) - c.delta)) * n_prime as f64
    } else {
        f64::INFINITY
    };
    (frontal, time)
}

fn combine(a: BoxStatus, b: BoxStatus) -> BoxStatus {
    match (a, b) {
        (BoxStatus::Bad, _) | (_, BoxStatus::Bad) => BoxStatus::Bad,
        (BoxStatus::Good, BoxStatus::Good) => BoxStatus::Good,
        _ => BoxStatus::Inconclusive,
    }
}

const MC_DEFAULT: (u64, u64) = (64, 2_000);

/// Good/bad verdict for the 0-box centered at `center` in the environment
/// `Quenched(law, env_seed)`.
pub fn classify_box0(
    law: &EnvironmentLaw,
    env_seed: u64,
    center: &[i64],
    geometry: &Box0Geometry,
    constants: &Box0Constants,
    method: Box0Method,
    policy: &SolvePolicy,
) -> Result<BoxVerdict> {
    let d = law.dim();
    if center.len() != d {
        return Err(Error::invalid("box center dimension does not match the law"));
    }
    let domain = make_box_with_lateral(geometry.m, geometry.lateral, center, u128::MAX)?;
    let fits = domain.site_count() <= policy.site_budget;
    let method = match method {
        Box0Method::Auto if fits => Box0Method::Exact,
        Box0Method::Auto => Box0Method::MonteCarlo { n_starts: MC_DEFAULT.0, n_walks: MC_DEFAULT.1 },
        Box0Method::Exact if !fits => {
            return Err(Error::budget(format!(
                "0-box has {} sites, above the site budget {}",
                domain.site_count(),
                policy.site_budget
            )))
        }
        m => m,
    };
    let lambda = law.lambda();
    let (f_thr, t_thr) = box0_thresholds(d, law.epsilon(), lambda, geometry.n_prime, constants);
    let env = Quenched::new(law, env_seed);
    let rel = |p: &[i64]| -> Point { p.iter().zip(center).map(|(a, b)| a - b).collect() };
    let total = geometry.frontal_part_count(d);
    let mut ev = Box0Evidence {
        method: String::new(),
        env_seed,
        epsilon: law.epsilon(),
        lambda,
        geometry: *geometry,
        constants: *constants,
        frontal_threshold: f_thr,
        time_threshold: t_thr,
        frontal_inf: f64::INFINITY,
        frontal_ci: (0.0, 0.0),
        frontal_argmin: vec![],
        time_inf: f64::INFINITY,
        time_ci: (0.0, 0.0),
        frontal_ok: BoxStatus::Inconclusive,
        time_ok: BoxStatus::Inconclusive,
        coverage: 1.0,
        truncated: geometry.is_truncated(),
    };
    match method {
        Box0Method::Exact | Box0Method::Auto => {
            let sites = Arc::new(domain.materialize(policy.site_budget)?);
            let chain = KilledChain::<f64>::new(sites.clone(), &env)?;
            let solver = chain.factor(policy)?;
            let front = solver.exit_probability(|j| sites.side(j) == Side::Frontal)?;
            let time = solver.apply(vec![1.0; sites.len()])?;
            for k in 0..sites.len() {
                let r = rel(sites.point(k));
                if !geometry.in_frontal_part(&r) {
                    continue;
                }
                if front[k] < ev.frontal_inf {
                    ev.frontal_inf = front[k];
                    ev.frontal_argmin = sites.point(k).to_vec();
                }
                if r[0] == geometry.m - geometry.n_prime {
                    ev.time_inf = ev.time_inf.min(time[k]);
                }
            }
            ev.method = "exact".into();
            ev.frontal_ci = (ev.frontal_inf, ev.frontal_inf);
            ev.time_ci = (ev.time_inf, ev.time_inf);
            ev.frontal_ok = if ev.frontal_inf >= f_thr { BoxStatus::Good } else { BoxStatus::Bad };
            ev.time_ok = if ev.time_inf > t_thr { BoxStatus::Good } else { BoxStatus::Bad };
        }
        Box0Method::MonteCarlo { n_starts, n_walks } => {
            if n_starts == 0 || n_walks == 0 {
                return Err(Error::invalid("Monte Carlo box classification needs n_starts, n_walks >= 1"));
            }
            let starts = sample_starts(geometry, center, n_starts, env_seed);
            let step_cap = policy.max_sweeps as u64 * 100;
            let rows: Result<Vec<(bool, u64, f64, f64, MCEstimate)>> = starts
                .par_iter()
                .enumerate()
                .map(|(i, (x, back))| {
                    let mut hits = 0u64;
                    let mut times = Vec::with_capacity(n_walks as usize);
                    for w in 0..n_walks {
                        let o = run_until_exit_stream(&env, &domain, x, mix(env_seed, i as u64), w, step_cap)?;
                        if o.cap_hit {
                            return Err(Error::budget("walk hit the step cap inside a 0-box"));
                        }
                        hits += u64::from(o.exit_side == Some(Side::Frontal));
                        times.push(o.exit_time as f64);
                    }
                    let (lo, hi) = wilson(hits, n_walks, Z95);
                    Ok((*back, hits, lo, hi, MCEstimate::from_samples(&times)))
                })
                .collect();
            let rows = rows?;
            let mut f_status = BoxStatus::Good;
            let mut t_status = BoxStatus::Good;
            for ((x, _), (back, hits, lo, hi, t)) in starts.iter().zip(&rows) {
                let p = *hits as f64 / n_walks as f64;
                if p < ev.frontal_inf {
                    ev.frontal_inf = p;
                    ev.frontal_ci = (*lo, *hi);
                    ev.frontal_argmin = x.clone();
                }
                f_status = combine(f_status, if *lo >= f_thr { BoxStatus::Good } else if *hi < f_thr { BoxStatus::Bad } else { BoxStatus::Inconclusive });
                if *back {
                    let (tlo, thi) = (t.mean - Z95 * t.stderr, t.mean + Z95 * t.stderr);
                    if t.mean < ev.time_inf {
                        ev.time_inf = t.mean;
                        ev.time_ci = (tlo, thi);
                    }
                    t_status = combine(t_status, if tlo > t_thr { BoxStatus::Good } else if thi <= t_thr { BoxStatus::Bad } else { BoxStatus::Inconclusive });
                }
            }
            ev.method = format!("monte_carlo({n_starts} starts x {n_walks} walks)");
            ev.frontal_ok = f_status;
            ev.time_ok = t_status;
            ev.coverage = starts.len() as f64 / total as f64;
        }
    }
    let verdict = combine(ev.frontal_ok, ev.time_ok);
    Ok(BoxVerdict { level: 0, center: center.to_vec(), verdict, evidence: Evidence::Level0(ev) })
}

/// Start points for sampled classification: half on the back side of the
/// middle-frontal part, half anywhere in it, chosen by hashing.
fn sample_starts(g: &Box0Geometry, center: &[i64], n: u64, seed: u64) -> Vec<(Point, bool)> {
    let d = center.len();
    (0..n)
        .map(|i| {
            let back = i % 2 == 0;
            let mut h = mix(seed ^ 0x5eed_b0c5, i);
            let mut p = center.to_vec();
            p[0] += if back {
                g.m - g.n_prime
            } else {
                h = mix(h, 0);
                g.m - g.n_prime + (h % g.n_prime as u64) as i64
            };
            for c in p.iter_mut().take(d).skip(1) {
                h = mix(h, 1);
                *c += (h % (2 * g.window - 1) as u64) as i64 - (g.window - 1);
            }
            (p, back)
        })
        .collect()
}

/// Shape of a box `B_M(x)` with transverse half-width `lateral` (`25M³` at
/// real scales).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxShape {
    pub m: i64,
    pub lateral: i64,
}

impl BoxShape {
    /// Inclusive interior offsets along `axis`.
    pub fn extent(&self, axis: usize) -> (i64, i64) {
        if axis == 0 {
            ((-self.m).div_euclid(2) + 1, self.m - 1)
        } else {
            (1 - self.lateral, self.lateral - 1)
        }
    }
}

/// Level-k verdicts keyed by box center. Centers without an entry take
/// `default` when one is given; otherwise the map must list them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerdictMap {
    pub level: usize,
    pub shape: BoxShape,
    pub entries: BTreeMap<Point, BoxStatus>,
    pub default: Option<BoxStatus>,
}

/// Range of centers of level-k boxes meeting the parent box, per axis.
fn meeting_range(parent: &BoxShape, parent_center: &[i64], child: &BoxShape) -> Vec<(i64, i64)> {
    (0..parent_center.len())
        .map(|i| {
            let (plo, phi) = parent.extent(i);
            let (clo, chi) = child.extent(i);
            (parent_center[i] + plo - chi, parent_center[i] + phi - clo)
        })
        .collect()
}

/// Center of a box of `shape` meeting every box centered in `centers`, if
/// one exists: per axis the spread must not exceed twice the width minus 2.
pub fn common_cover(shape: &BoxShape, centers: &[&Point]) -> Option<Point> {
    let first = centers.first()?;
    (0..first.len())
        .map(|i| {
            let (lo, hi) = shape.extent(i);
            let reach = hi - lo;
            let mn = centers.iter().map(|c| c[i]).min().unwrap();
            let mx = centers.iter().map(|c| c[i]).max().unwrap();
            (mx - mn <= 2 * reach).then_some(mx - reach)
        })
        .collect()
}

/// Level-(k+1) verdict: good iff a single level-k box meets every bad level-k
/// box meeting the parent. Inconclusive sub-boxes are counted as bad for a
/// good verdict and ignored for a bad one.
pub fn classify_box_k(map: &VerdictMap, parent: &BoxShape, parent_center: &[i64], budget: u128) -> Result<BoxVerdict> {
    let range = meeting_range(parent, parent_center, &map.shape);
    let intersecting: u128 = range.iter().map(|(a, b)| (b - a + 1) as u128).product();
    let inside = |p: &Point| p.len() == range.len() && p.iter().zip(&range).all(|(v, (a, b))| a <= v && v <= b);
    let listed: Vec<(&Point, BoxStatus)> = map.entries.iter().filter(|(p, _)| inside(p)).map(|(p, s)| (p, *s)).collect();
    let mut ev = SubBoxEvidence {
        sub_level: map.level,
        intersecting,
        listed: listed.len() as u128,
        bad: 0,
        inconclusive: 0,
        cover: None,
    };
    let verdict = |ev: SubBoxEvidence, v: BoxStatus| BoxVerdict {
        level: map.level + 1,
        center: parent_center.to_vec(),
        verdict: v,
        evidence: Evidence::LevelK(ev),
    };
    if map.default.is_none() && (listed.len() as u128) < intersecting {
        return Ok(verdict(ev, BoxStatus::Inconclusive));
    }
    match map.default {
        Some(BoxStatus::Good) | None => {}
        Some(s) => {
            // Every unlisted box shares the default status; the set is a full
            // rectangle minus the listed entries, which we enumerate.
            if intersecting > budget {
                return Err(Error::budget(format!("{intersecting} sub-boxes exceed the enumeration budget {budget}")));
            }
            let mut all: Vec<(Point, BoxStatus)> = Vec::with_capacity(intersecting as usize);
            enumerate_rect(&range, &mut |p| {
                let st = map.entries.get(p).copied().unwrap_or(s);
                all.push((p.to_vec(), st));
            });
            return Ok(decide(map, all.iter().map(|(p, s)| (p, *s)).collect(), ev, verdict));
        }
    }
    ev.listed = listed.len() as u128;
    Ok(decide(map, listed, ev, verdict))
}

fn decide(
    map: &VerdictMap,
    statuses: Vec<(&Point, BoxStatus)>,
    mut ev: SubBoxEvidence,
    verdict: impl Fn(SubBoxEvidence, BoxStatus) -> BoxVerdict,
) -> BoxVerdict {
    let bad: Vec<&Point> = statuses.iter().filter(|(_, s)| *s == BoxStatus::Bad).map(|(p, _)| *p).collect();
    let doubtful: Vec<&Point> = statuses.iter().filter(|(_, s)| *s != BoxStatus::Good).map(|(p, _)| *p).collect();
    ev.bad = bad.len();
    ev.inconclusive = doubtful.len() - bad.len();
    if doubtful.is_empty() {
        return verdict(ev, BoxStatus::Good);
    }
    if let Some(c) = common_cover(&map.shape, &doubtful) {
        ev.cover = Some(c);
        return verdict(ev, BoxStatus::Good);
    }
    if common_cover(&map.shape, &bad).is_none() && !bad.is_empty() {
        return verdict(ev, BoxStatus::Bad);
    }
    ev.cover = common_cover(&map.shape, &bad);
    verdict(ev, BoxStatus::Inconclusive)
}

fn enumerate_rect(range: &[(i64, i64)], f: &mut impl FnMut(&[i64])) {
    let mut cur: Vec<i64> = range.iter().map(|r| r.0).collect();
    loop {
        f(&cur);
        let mut i = 0;
        loop {
            if i == range.len() {
                return;
            }
            if cur[i] < range[i].1 {
                cur[i] += 1;
                break;
            }
            cur[i] = range[i].0;
            i += 1;
        }
    }
}

/// Classifies every 0-box meeting a 1-box of shape `parent` at
/// `parent_center` in one environment, then the 1-box itself.
#[allow(clippy::too_many_arguments)]
pub fn classify_window(
    law: &EnvironmentLaw,
    env_seed: u64,
    geometry: &Box0Geometry,
    parent: &BoxShape,
    parent_center: &[i64],
    constants: &Box0Constants,
    method: Box0Method,
    policy: &SolvePolicy,
    budget: u128,
) -> Result<(BoxVerdict, VerdictMap)> {
    let range = meeting_range(parent, parent_center, &geometry.shape());
    let count: u128 = range.iter().map(|(a, b)| (b - a + 1) as u128).product();
    if count > budget {
        return Err(Error::budget(format!("{count} level-0 boxes exceed the window budget {budget}")));
    }
    let mut centers = Vec::with_capacity(count as usize);
    enumerate_rect(&range, &mut |p| centers.push(p.to_vec()));
    let verdicts: Result<Vec<BoxVerdict>> = centers
        .par_iter()
        .map(|c| classify_box0(law, env_seed, c, geometry, constants, method, policy))
        .collect();
    let entries = centers.into_iter().zip(verdicts?).map(|(c, v)| (c, v.verdict)).collect();
    let map = VerdictMap { level: 0, shape: geometry.shape(), entries, default: None };
    let v = classify_box_k(&map, parent, parent_center, budget)?;
    Ok((v, map))
}

/// Fraction of bad 0-boxes at the origin over `n_envs` environments.
pub fn bad_fraction(
    law: &EnvironmentLaw,
    geometry: &Box0Geometry,
    constants: &Box0Constants,
    method: Box0Method,
    policy: &SolvePolicy,
    n_envs: u64,
    seed: u64,
) -> Result<Vec<BoxVerdict>> {
    let origin = vec![0; law.dim()];
    (0..n_envs)
        .into_par_iter()
        .map(|i| classify_box0(law, env_seed(seed, i), &origin, geometry, constants, method, policy))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::EnvironmentLaw;

    #[test]
    fn concrete_scales_at_one_half() {
        let s = make_scale_sequence(0.5, 0.5, 10, None).unwrap();
        assert_eq!(s.big_k, BigUint::from(1408u32));
        assert_eq!(s.a[0], BigUint::from(2u32));
        assert_eq!(s.a[1], BigUint::from(1409u32).pow(3));
        assert_eq!(s.alpha[0], BigUint::from(1409u32).pow(5));
        assert_eq!(s.l, 2);
        assert_eq!(s.nl, BigUint::from(16u32));
        assert_eq!(s.n[0], BigUint::from(16u32));
        assert_eq!(s.identity_violation(), None);
        assert!(!s.k_overridden);
    }

    #[test]
    fn default_k_is_exact_at_awkward_epsilon() {
        // 0.1 is slightly above 1/10 in binary, so ε⁻⁶ is slightly below 10⁶.
        assert_eq!(default_k(0.1), BigUint::from(22u64 * 999_999));
        assert_eq!(default_k(0.25), BigUint::from(22u64 * 4096));
    }

    #[test]
    fn conditions_hold_for_the_concrete_choice() {
        let s = make_scale_sequence(0.5, 0.5, 200, None).unwrap();
        let audit = verify_conditions(&s);
        assert!(audit.all_hold(&["C1", "C2", "C3", "C4", "C5", "C6", "C7"]), "{audit:#?}");
        assert!(audit.c7.holds_eps6 && audit.c7.holds_eps3);
        assert!(audit.c7.product_gap < 1e-12);
        assert!(audit.c_star_c6 > 0.0);
    }

    #[test]
    fn tiny_k_breaks_c5_at_the_first_level() {
        let s = make_scale_sequence(0.5, 0.5, 20, Some(1)).unwrap();
        let audit = verify_conditions(&s);
        let c5 = audit.check("C5").unwrap();
        assert!(!c5.holds);
        assert_eq!(c5.first_violation, Some(1));
        assert!(audit.label.contains("OVERRIDDEN"));
        // 1 - 8/(1+1)² < 0
        assert_eq!(audit.check("C7").unwrap().first_violation, Some(1));
    }

    #[test]
    fn c5_by_hand_at_k_one() {
        // K = 1: 2/8 + (1/12) ln2/2 + 16/32
        let s = make_scale_sequence(0.5, 0.5, 1, Some(1)).unwrap();
        let (lo, hi, rhs) = c5_at(&s, 1);
        let v = 0.25 + std::f64::consts::LN_2 / 24.0 + 0.5;
        assert!(ratf(&lo) <= v && v <= ratf(&hi));
        assert_eq!(rhs, BigRational::new(1.into(), 4.into()));
    }

    #[test]
    fn log_enclosure() {
        for x in [1u64, 2, 3, 1 << 52, (1 << 53) + 1, u64::MAX] {
            let (lo, hi) = ln_bounds(&BigUint::from(x));
            let v = (x as f64).ln();
            assert!(lo <= v && v <= hi, "{x}");
            assert!(hi - lo < 1e-12 * v.max(1.0));
        }
        let big = BigUint::from(3u32).pow(1000);
        let (lo, hi) = ln_bounds(&big);
        let v = 1000.0 * 3f64.ln();
        assert!(lo <= v && v <= hi);
    }

    #[test]
    fn xi_closed_form() {
        assert_eq!(xi_k(0), BigRational::one());
        assert_eq!(xi_k(1), BigRational::new(3.into(), 4.into()));
        for k in [2u64, 7, 100] {
            assert_eq!(xi_k(k), BigRational::new((k + 2).into(), (2 * (k + 1)).into()));
        }
        let r = xi_sweep(10_000);
        assert!(r.above_half && r.decreasing);
        assert!((r.last_gap - 1.0 / (2.0 * 10_001.0)).abs() < 1e-15);
    }

    #[test]
    fn recursion_is_consistent() {
        let s = make_scale_sequence(0.5, 0.5, 100, None).unwrap();
        let r = bad_prob_recursion(&s, 2, 1e4).unwrap();
        assert!(r.implication_holds);
        assert!(r.cauchy_after_60.unwrap() < 1e-12);
        assert!(r.inf_positive);
        assert!(r.union_ratio_monotone_from <= 1);
        assert!(bad_prob_recursion(&s, 2, 1.0).unwrap().inf_m < 0.0);
    }

    fn strong_drift() -> EnvironmentLaw {
        EnvironmentLaw::homogeneous_drift(2, 0.5, 0.0625, 0).unwrap()
    }

    fn small_geometry() -> Box0Geometry {
        Box0Geometry::full(16).unwrap().truncated(40, 8).unwrap()
    }

    #[test]
    fn drifted_box_is_good() {
        let c = Box0Constants { c2: 3.0, c4: 1.0, ..Default::default() };
        let v = classify_box0(&strong_drift(), 1, &[0, 0], &small_geometry(), &c, Box0Method::Exact, &SolvePolicy::default())
            .unwrap();
        assert_eq!(v.verdict, BoxStatus::Good, "{v:#?}");
        let Evidence::Level0(ev) = &v.evidence else { panic!() };
        assert!(ev.truncated);
        assert!(ev.time_inf < 8.0 / 0.0625);
    }

    #[test]
    fn symmetric_box_is_bad() {
        let law = EnvironmentLaw::ssrw(2);
        let v = classify_box0(&law, 1, &[0, 0], &small_geometry(), &Box0Constants::default(), Box0Method::Exact, &SolvePolicy::default())
            .unwrap();
        assert_eq!(v.verdict, BoxStatus::Bad);
        let Evidence::Level0(ev) = &v.evidence else { panic!() };
        assert!(ev.frontal_inf < 0.9);
    }

    #[test]
    fn sampled_classification_agrees_and_repeats() {
        let c = Box0Constants { c2: 3.0, ..Default::default() };
        let m = Box0Method::MonteCarlo { n_starts: 6, n_walks: 400 };
        let p = SolvePolicy::default();
        let a = classify_box0(&strong_drift(), 3, &[0, 0], &small_geometry(), &c, m, &p).unwrap();
        let b = classify_box0(&strong_drift(), 3, &[0, 0], &small_geometry(), &c, m, &p).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.verdict, BoxStatus::Bad);
        let Evidence::Level0(ev) = &a.evidence else { panic!() };
        assert!(ev.coverage < 1.0);
    }

    fn map_with(bad: &[Point]) -> VerdictMap {
        VerdictMap {
            level: 0,
            shape: BoxShape { m: 4, lateral: 2 },
            entries: bad.iter().map(|p| (p.clone(), BoxStatus::Bad)).collect(),
            default: Some(BoxStatus::Good),
        }
    }

    const PARENT: BoxShape = BoxShape { m: 88, lateral: 10 };

    #[test]
    fn sub_box_rule() {
        let good = classify_box_k(&map_with(&[]), &PARENT, &[0, 0], 1 << 20).unwrap();
        assert_eq!(good.verdict, BoxStatus::Good);
        let one = classify_box_k(&map_with(&[vec![10, 0]]), &PARENT, &[0, 0], 1 << 20).unwrap();
        assert_eq!(one.verdict, BoxStatus::Good);
        // e1 width of the sub-box is 5, so centers 8 apart can share a cover, 9 apart cannot.
        let near = classify_box_k(&map_with(&[vec![0, 0], vec![8, 0]]), &PARENT, &[0, 0], 1 << 20).unwrap();
        assert_eq!(near.verdict, BoxStatus::Good);
        let far = classify_box_k(&map_with(&[vec![0, 0], vec![40, 0]]), &PARENT, &[0, 0], 1 << 20).unwrap();
        assert_eq!(far.verdict, BoxStatus::Bad);
        let far_out = classify_box_k(&map_with(&[vec![0, 0], vec![400, 0]]), &PARENT, &[0, 0], 1 << 20).unwrap();
        assert_eq!(far_out.verdict, BoxStatus::Good);
    }

    #[test]
    fn incomplete_map_is_inconclusive() {
        let mut m = map_with(&[]);
        m.default = None;
        let v = classify_box_k(&m, &PARENT, &[0, 0], 1 << 20).unwrap();
        assert_eq!(v.verdict, BoxStatus::Inconclusive);
    }

    #[test]
    fn real_window_on_a_drifted_law() {
        let geo = Box0Geometry::full(4).unwrap().truncated(3, 2).unwrap();
        let parent = BoxShape { m: 8, lateral: 4 };
        let c = Box0Constants { c2: 0.2, c4: 1.0, ..Default::default() };
        let (v, map) = classify_window(&strong_drift(), 5, &geo, &parent, &[0, 0], &c, Box0Method::Exact, &SolvePolicy::default(), 1 << 16)
            .unwrap();
        assert_eq!(map.entries.len(), 15 * 11);
        assert_ne!(v.verdict, BoxStatus::Inconclusive);
    }
}
