//! Environment laws on Ω_ε, site sampling, local drift and the drift
//! conditions.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Direction, Point};
use crate::rng::{site_hash, unit_f64};
use crate::scalar::Scalar;

/// Tolerance for the simplex and zero-sum invariants.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// Jump probabilities indexed by direction (`e1, -e1, e2, -e2, ...`).
#[derive(Clone, Debug, PartialEq)]
pub struct ProbVector<S = f64> {
    pub weights: Vec<S>,
}

impl<S: Scalar> ProbVector<S> {
    pub fn uniform(dim: usize) -> Self {
        Self { weights: vec![S::from_ratio(1, 2 * dim as i64); 2 * dim] }
    }

    pub fn dim(&self) -> usize {
        self.weights.len() / 2
    }

    pub fn get(&self, e: Direction) -> &S {
        &self.weights[e.index()]
    }

    /// Checks nonnegativity and normalization.
    pub fn validate(&self) -> Result<()> {
        let mut sum = S::zero();
        for w in &self.weights {
            if *w < S::zero() {
                return Err(Error::invalid("negative jump weight"));
            }
            sum = sum + w.clone();
        }
        if (sum - S::one()).abs().to_f64() > SIMPLEX_TOL {
            return Err(Error::invalid("jump weights do not sum to 1"));
        }
        Ok(())
    }
}

/// Local drift `d = Σ_e ω(e) e`.
pub fn local_drift<S: Scalar>(p: &ProbVector<S>) -> Vec<S> {
    (0..p.dim())
        .map(|i| p.weights[2 * i].clone() - p.weights[2 * i + 1].clone())
        .collect()
}

/// One support point of a site law: perturbation `ξ` and its probability.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupportEntry {
    pub xi: Vec<f64>,
    pub prob: f64,
}

/// Serializable description of an environment law.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LawSpec {
    pub d: usize,
    pub epsilon: f64,
    pub support: Vec<SupportEntry>,
    pub master_seed: u64,
}

/// I.i.d. product law with finite site support inside Ω_ε.
#[derive(Clone, Debug)]
pub struct EnvironmentLaw {
    spec: LawSpec,
    cum_prob: Vec<f64>,
    weights: Vec<Vec<f64>>,
    cumulative: Vec<Vec<f64>>,
}

impl EnvironmentLaw {
    pub fn new(spec: LawSpec) -> Result<Self> {
        let d = spec.d;
        if d < 2 {
            return Err(Error::invalid(format!("dimension must be at least 2, got {d}")));
        }
        if !(spec.epsilon > 0.0 && spec.epsilon < 1.0) {
            return Err(Error::invalid(format!("epsilon must lie in (0,1), got {}", spec.epsilon)));
        }
        if spec.support.is_empty() {
            return Err(Error::invalid("law support is empty"));
        }
        let band = 1.0 / (4.0 * d as f64);
        let mut total = 0.0;
        for (i, s) in spec.support.iter().enumerate() {
            if s.xi.len() != 2 * d {
                return Err(Error::invalid(format!("support entry {i}: xi must have 2d = {} entries", 2 * d)));
            }
            if !(s.prob >= 0.0 && s.prob.is_finite()) {
                return Err(Error::invalid(format!("support entry {i}: negative probability")));
            }
            let sum: f64 = s.xi.iter().sum();
            if sum.abs() > SIMPLEX_TOL {
                return Err(Error::invalid(format!("support entry {i}: xi does not sum to zero ({sum:e})")));
            }
            if let Some(v) = s.xi.iter().find(|v| v.abs() > band * (1.0 + 1e-12)) {
                return Err(Error::invalid(format!(
                    "support entry {i}: |xi| = {} exceeds 1/(4d) = {band}, vector leaves the Ω_ε band",
                    v.abs()
                )));
            }
            total += s.prob;
        }
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::invalid(format!("support probabilities sum to {total}, not 1")));
        }
        let mut acc = 0.0;
        let mut cum_prob: Vec<f64> = spec
            .support
            .iter()
            .map(|s| {
                acc += s.prob;
                acc
            })
            .collect();
        *cum_prob.last_mut().unwrap() = 1.0;
        let base = 1.0 / (2.0 * d as f64);
        let weights: Vec<Vec<f64>> = spec
            .support
            .iter()
            .map(|s| s.xi.iter().map(|x| base + spec.epsilon * x).collect())
            .collect();
        let cumulative = weights
            .iter()
            .map(|w| {
                let mut a = 0.0;
                let mut c: Vec<f64> = w
                    .iter()
                    .map(|x| {
                        a += x;
                        a
                    })
                    .collect();
                *c.last_mut().unwrap() = 1.0;
                c
            })
            .collect();
        Ok(Self { spec, cum_prob, weights, cumulative })
    }

    /// Deterministic law with a single perturbation.
    pub fn point_mass(d: usize, epsilon: f64, xi: Vec<f64>, master_seed: u64) -> Result<Self> {
        Self::new(LawSpec { d, epsilon, support: vec![SupportEntry { xi, prob: 1.0 }], master_seed })
    }

    /// The simple symmetric random walk, as a law with `ξ ≡ 0`.
    pub fn ssrw(d: usize) -> Self {
        Self::point_mass(d, 0.5, vec![0.0; 2 * d], 0).expect("valid ssrw law")
    }

    /// Homogeneous law with `ξ(e1) = -ξ(-e1) = a`.
    pub fn homogeneous_drift(d: usize, epsilon: f64, a: f64, master_seed: u64) -> Result<Self> {
        let mut xi = vec![0.0; 2 * d];
        xi[0] = a;
        xi[1] = -a;
        Self::point_mass(d, epsilon, xi, master_seed)
    }

    pub fn spec(&self) -> &LawSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.d
    }

    pub fn epsilon(&self) -> f64 {
        self.spec.epsilon
    }

    pub fn master_seed(&self) -> u64 {
        self.spec.master_seed
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        let mut l = self.clone();
        l.spec.master_seed = seed;
        l
    }

    pub fn support_len(&self) -> usize {
        self.spec.support.len()
    }

    pub fn prob(&self, i: usize) -> f64 {
        self.spec.support[i].prob
    }

    pub fn xi(&self, i: usize) -> &[f64] {
        &self.spec.support[i].xi
    }

    pub fn weights(&self, i: usize) -> &[f64] {
        &self.weights[i]
    }

    pub fn cumulative(&self, i: usize) -> &[f64] {
        &self.cumulative[i]
    }

    pub fn is_deterministic(&self) -> bool {
        self.spec.support.iter().filter(|s| s.prob > 0.0).count() == 1
    }

    /// Jump probabilities of support point `i`, `1/(2d) + ε ξ`, evaluated in `S`
    /// from the exact binary values of ε and ξ.
    pub fn prob_vector<S: Scalar>(&self, i: usize) -> ProbVector<S> {
        let base = S::from_ratio(1, 2 * self.dim() as i64);
        let eps = S::from_f64(self.epsilon());
        ProbVector {
            weights: self.xi(i).iter().map(|x| base.clone() + eps.clone() * S::from_f64(*x)).collect(),
        }
    }

    /// Support index at `site` for the environment keyed by `seed`.
    #[inline]
    pub fn sample_index_with(&self, seed: u64, site: &[i64]) -> usize {
        if self.cum_prob.len() == 1 {
            return 0;
        }
        let u = unit_f64(site_hash(seed, site));
        self.cum_prob.iter().position(|&c| u < c).unwrap_or(self.cum_prob.len() - 1)
    }

    pub fn sample_index(&self, site: &[i64]) -> usize {
        self.sample_index_with(self.master_seed(), site)
    }

    /// The site vector `ω(site)` under this law's master seed.
    pub fn sample_site(&self, site: &[i64]) -> ProbVector<f64> {
        ProbVector { weights: self.weights(self.sample_index(site)).to_vec() }
    }

    /// `λ = E(d(0))·e1`, exact over the support in `S`.
    pub fn lambda_in<S: Scalar>(&self) -> S {
        let eps = S::from_f64(self.epsilon());
        let mut acc = S::zero();
        for s in &self.spec.support {
            let de = S::from_f64(s.xi[0]) - S::from_f64(s.xi[1]);
            acc = acc + S::from_f64(s.prob) * eps.clone() * de;
        }
        acc
    }

    pub fn lambda(&self) -> f64 {
        law_lambda(self)
    }

    /// `E(ξ(0,e))` per direction.
    pub fn mean_xi(&self) -> Vec<f64> {
        let mut m = vec![0.0; 2 * self.dim()];
        for s in &self.spec.support {
            for (a, x) in m.iter_mut().zip(&s.xi) {
                *a += s.prob * x;
            }
        }
        m
    }
}

/// `λ = E(d(0))·e1` computed over the finite support.
pub fn law_lambda(law: &EnvironmentLaw) -> f64 {
    law.spec
        .support
        .iter()
        .map(|s| s.prob * law.epsilon() * (s.xi[0] - s.xi[1]))
        .sum()
}

/// Membership of every support vector in the Ω_ε band.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OmegaAudit {
    pub max_deviation: f64,
    pub bound: f64,
    pub member: bool,
    pub min_weight: f64,
    pub kappa: f64,
}

pub fn omega_audit(law: &EnvironmentLaw) -> OmegaAudit {
    let d = law.dim() as f64;
    let base = 1.0 / (2.0 * d);
    let mut max_deviation: f64 = 0.0;
    let mut min_weight = f64::INFINITY;
    for i in 0..law.support_len() {
        for w in law.weights(i) {
            max_deviation = max_deviation.max((w - base).abs());
            min_weight = min_weight.min(*w);
        }
    }
    let bound = law.epsilon() / (4.0 * d);
    OmegaAudit {
        max_deviation,
        bound,
        member: max_deviation <= bound * (1.0 + 1e-12),
        min_weight,
        kappa: 1.0 / (4.0 * d),
    }
}

/// Two-outcome law with `E(d(0))·e1 = lambda_target`.
///
/// Outcome A has `ξ(±e1) = ±(u+s)` and transverse `ξ(±e_i) = ±ν`; outcome B
/// has `ξ(±e1) = ±(u-s)` and transverse `ξ(±e_i) = ∓ν`, each with probability
/// 1/2. Here `u = λ/(2ε)` and `s = min(u, 1/(4d) - u)`.
pub fn build_two_point_law(
    d: usize,
    epsilon: f64,
    lambda_target: f64,
    transverse_noise: f64,
    seed: u64,
) -> Result<(EnvironmentLaw, OmegaAudit)> {
    if d < 2 {
        return Err(Error::invalid(format!("dimension must be at least 2, got {d}")));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::invalid(format!("epsilon must lie in (0,1), got {epsilon}")));
    }
    let ceiling = epsilon / (2.0 * d as f64);
    if !(lambda_target >= 0.0) || lambda_target > ceiling * (1.0 + 1e-12) {
        return Err(Error::invalid(format!(
            "lambda_target = {lambda_target} exceeds the drift ceiling: within Ω_ε the drift satisfies \
             |d(x)·e1| <= ε/(2d) = {ceiling}"
        )));
    }
    let band = 1.0 / (4.0 * d as f64);
    if !(0.0..=band).contains(&transverse_noise) {
        return Err(Error::invalid(format!(
            "transverse_noise = {transverse_noise} outside [0, 1/(4d)] = [0, {band}]"
        )));
    }
    let u = (lambda_target / (2.0 * epsilon)).min(band);
    let s = u.min(band - u);
    let make = |u1: f64, nu: f64| {
        let mut xi = vec![0.0; 2 * d];
        xi[0] = u1;
        xi[1] = -u1;
        for i in 1..d {
            xi[2 * i] = nu;
            xi[2 * i + 1] = -nu;
        }
        xi
    };
    let support = if s == 0.0 && transverse_noise == 0.0 {
        vec![SupportEntry { xi: make(u, 0.0), prob: 1.0 }]
    } else {
        vec![
            SupportEntry { xi: make(u + s, transverse_noise), prob: 0.5 },
            SupportEntry { xi: make(u - s, -transverse_noise), prob: 0.5 },
        ]
    };
    let law = EnvironmentLaw::new(LawSpec { d, epsilon, support, master_seed: seed })?;
    let audit = omega_audit(&law);
    Ok((law, audit))
}

/// `α(d)` exponent table: 2, 2.5, 3.
pub fn alpha_d(d: usize) -> f64 {
    match d {
        0..=2 => 2.0,
        3 => 2.5,
        _ => 3.0,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ConditionKind {
    Qld,
    Ld { eta: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub holds: bool,
    pub lambda: f64,
    pub threshold: f64,
    pub in_band: bool,
}

pub fn condition_threshold(d: usize, epsilon: f64, kind: ConditionKind) -> f64 {
    match kind {
        ConditionKind::Qld => epsilon * epsilon,
        ConditionKind::Ld { eta } => epsilon.powf(alpha_d(d) - eta),
    }
}

pub fn check_condition(law: &EnvironmentLaw, kind: ConditionKind) -> Result<ConditionReport> {
    if let ConditionKind::Ld { eta } = kind {
        if !(eta > 0.0 && eta < 1.0) {
            return Err(Error::invalid(format!("eta must lie in (0,1), got {eta}")));
        }
    }
    let lambda = law_lambda(law);
    let threshold = condition_threshold(law.dim(), law.epsilon(), kind);
    let in_band = omega_audit(law).member;
    // relative slack for the binary representation of λ = ε² style inputs
    let holds = in_band && lambda >= threshold * (1.0 - 1e-12);
    Ok(ConditionReport { holds, lambda, threshold, in_band })
}

/// Walk kernel read by simulators: cumulative jump weights at a site.
pub trait Kernel: Sync {
    fn dim(&self) -> usize;
    fn cumulative(&self, site: &[i64]) -> &[f64];
}

/// One quenched environment drawn from `law`, keyed by `seed`.
#[derive(Clone, Copy, Debug)]
pub struct Quenched<'a> {
    pub law: &'a EnvironmentLaw,
    pub seed: u64,
}

impl<'a> Quenched<'a> {
    pub fn new(law: &'a EnvironmentLaw, seed: u64) -> Self {
        Self { law, seed }
    }

    pub fn index(&self, site: &[i64]) -> usize {
        self.law.sample_index_with(self.seed, site)
    }

    pub fn weights(&self, site: &[i64]) -> &'a [f64] {
        self.law.weights(self.index(site))
    }
}

impl Kernel for Quenched<'_> {
    fn dim(&self) -> usize {
        self.law.dim()
    }
    #[inline]
    fn cumulative(&self, site: &[i64]) -> &[f64] {
        self.law.cumulative(self.index(site))
    }
}

/// Fixed environment given site by site, with a default vector elsewhere.
#[derive(Clone, Debug)]
pub struct TableEnvironment {
    dim: usize,
    table: HashMap<Point, Vec<f64>>,
    default: Vec<f64>,
}

fn cumulate(w: &[f64]) -> Vec<f64> {
    let mut a = 0.0;
    let mut c: Vec<f64> = w
        .iter()
        .map(|x| {
            a += x;
            a
        })
        .collect();
    *c.last_mut().unwrap() = 1.0;
    c
}

impl TableEnvironment {
    pub fn new(dim: usize, default: &[f64]) -> Self {
        Self { dim, table: HashMap::new(), default: cumulate(default) }
    }

    pub fn insert(&mut self, site: Point, weights: &[f64]) {
        self.table.insert(site, cumulate(weights));
    }
}

impl Kernel for TableEnvironment {
    fn dim(&self) -> usize {
        self.dim
    }
    fn cumulative(&self, site: &[i64]) -> &[f64] {
        self.table.get(site).unwrap_or(&self.default)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::BigRational;

    #[test]
    fn ssrw_two_point_is_deterministic() {
        let (law, audit) = build_two_point_law(2, 0.2, 0.0, 0.0, 1).unwrap();
        assert!(law.is_deterministic());
        assert!(law.xi(0).iter().all(|x| *x == 0.0));
        assert!(audit.member);
        let p = law.sample_site(&[3, 4]);
        assert!(p.weights.iter().all(|w| *w == 0.25));
    }

    #[test]
    fn qld_example_holds() {
        let (law, _) = build_two_point_law(2, 0.2, 0.04, 0.0, 1).unwrap();
        assert!((law.lambda() - 0.04).abs() < 1e-16);
        assert!(check_condition(&law, ConditionKind::Qld).unwrap().holds);
    }

    #[test]
    fn drift_ceiling_rejected() {
        let err = build_two_point_law(2, 0.2, 0.06, 0.0, 1).unwrap_err();
        assert!(err.to_string().contains("ε/(2d) = 0.05"));
        assert!(build_two_point_law(2, 0.3, 0.09, 0.0, 1).is_err());
    }

    #[test]
    fn hand_built_lambda() {
        let law = EnvironmentLaw::homogeneous_drift(2, 0.1, 0.125, 0).unwrap();
        assert!((law_lambda(&law) - 0.025).abs() < 1e-17);
        let exact: BigRational = law.lambda_in();
        assert_eq!(exact, <BigRational as Scalar>::from_f64(0.1) * <BigRational as Scalar>::from_ratio(1, 4));
    }

    #[test]
    fn conditions_examples() {
        // d=3, ε=0.2, η=0.5: threshold ε^2 = 0.04. λ=0.05 itself exceeds the
        // drift ceiling ε/6, so the largest feasible λ is used for the law.
        let t = condition_threshold(3, 0.2, ConditionKind::Ld { eta: 0.5 });
        assert!((t - 0.04).abs() < 1e-15 && 0.05 >= t);
        assert!(build_two_point_law(3, 0.2, 0.05, 0.0, 0).is_err());
        let (l3, _) = build_two_point_law(3, 0.2, 0.2 / 6.0, 0.0, 0).unwrap();
        assert!(!check_condition(&l3, ConditionKind::Ld { eta: 0.5 }).unwrap().holds);
        let (l3b, _) = build_two_point_law(3, 0.1, 0.1 / 6.0, 0.0, 0).unwrap();
        assert!(check_condition(&l3b, ConditionKind::Ld { eta: 0.5 }).unwrap().holds);
        let l4 = EnvironmentLaw::ssrw(4);
        assert!(!check_condition(&l4, ConditionKind::Qld).unwrap().holds);
        assert!(!check_condition(&l4, ConditionKind::Ld { eta: 0.5 }).unwrap().holds);
        assert!(check_condition(&l4, ConditionKind::Ld { eta: 1.5 }).is_err());
    }

    #[test]
    fn local_drift_examples() {
        let u = ProbVector::<f64>::uniform(3);
        assert!(local_drift(&u).iter().all(|x| *x == 0.0));
        let a = 0.05;
        let mut p = ProbVector::<f64>::uniform(2);
        p.weights[0] += a;
        p.weights[1] -= a;
        let dr = local_drift(&p);
        assert!((dr[0] - 2.0 * a).abs() < 1e-16 && dr[1] == 0.0);
    }

    #[test]
    fn sampling_is_pure() {
        let (law, _) = build_two_point_law(2, 0.2, 0.03, 0.02, 99).unwrap();
        assert_eq!(law.sample_site(&[5, -7]), law.sample_site(&[5, -7]));
    }

    #[test]
    fn site_drift_mean_matches_lambda() {
        let (law, _) = build_two_point_law(2, 0.2, 0.03, 0.02, 5).unwrap();
        let n = 1_000_000i64;
        let (mut s, mut s2) = (0.0, 0.0);
        for i in 0..n {
            let site = [i % 1000, i / 1000];
            let x = local_drift(&law.sample_site(&site))[0];
            s += x;
            s2 += x * x;
        }
        let mean = s / n as f64;
        let sd = ((s2 / n as f64 - mean * mean) / (n - 1) as f64).sqrt();
        assert!((mean - law.lambda()).abs() <= 4.0 * sd, "mean {mean} vs {}", law.lambda());
    }

    #[test]
    fn rejects_bad_support() {
        let bad = LawSpec {
            d: 2,
            epsilon: 0.2,
            support: vec![SupportEntry { xi: vec![0.1, 0.0, 0.0, 0.0], prob: 1.0 }],
            master_seed: 0,
        };
        assert!(EnvironmentLaw::new(bad).is_err());
        let wide = LawSpec {
            d: 2,
            epsilon: 0.2,
            support: vec![SupportEntry { xi: vec![0.2, -0.2, 0.0, 0.0], prob: 1.0 }],
            master_seed: 0,
        };
        assert!(EnvironmentLaw::new(wide).is_err());
    }
}
