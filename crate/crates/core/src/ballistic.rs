//! Ballisticity probes: the gambler's-ruin oracle, the polynomial condition
//! and `(T)_γ` probes, annealed Green drifts, the `p±` thresholds and the
//! rescaled walks `Y`, `Z` coupled to the right with a one-dimensional walk.

use std::collections::HashMap;
use std::sync::Arc;

use num_traits::pow;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::environment::{alpha_d, EnvironmentLaw, Quenched};
use crate::error::{Error, Result};
use crate::green::{phat, slab_exit, SlabExit, SlabOptions};
use crate::lattice::{make_box, make_slab, middle_frontal, Direction, Domain, Point, Side};
use crate::linalg::BandMatrix;
use crate::rng::{env_seed, walk_rng};
use crate::scalar::Scalar;
use crate::stats::{linear_fit, LinearFit, MCEstimate, ProportionEstimate};
use crate::walker::{estimate_exit_distribution, DEFAULT_STEP_CAP};

/// Length-scale constants: `L = 2[θ/ε]`, `N = L³`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleParams {
    pub theta: f64,
    pub eta: f64,
    pub delta: f64,
}

impl Default for ScaleParams {
    fn default() -> Self {
        Self { theta: 0.5, eta: 0.5, delta: 0.25 }
    }
}

impl ScaleParams {
    pub fn scale_l(&self, epsilon: f64) -> i64 {
        2 * (self.theta / epsilon).floor() as i64
    }

    pub fn scale_n(&self, epsilon: f64) -> i64 {
        self.scale_l(epsilon).pow(3)
    }
}

/// `M₀ = exp(100 + 4d (log κ)²)` with `κ = 1/(4d)`, returned as `log M₀`.
pub fn log_m0(d: usize) -> f64 {
    let kappa = 1.0 / (4.0 * d as f64);
    100.0 + 4.0 * d as f64 * kappa.ln().powi(2)
}

fn check_gambler<S: Scalar>(a: i64, b: i64, p: &S) -> Result<()> {
    if a < 1 || b < 1 {
        return Err(Error::invalid(format!("gambler's ruin needs a, b >= 1, got a={a}, b={b}")));
    }
    if !(*p > S::zero() && *p < S::one()) {
        return Err(Error::invalid(format!("gambler's ruin needs p in (0,1), got {}", p.to_f64())));
    }
    Ok(())
}

/// Probability that the walk from 0 with right-jump probability `p` leaves
/// `[-a, b]` through `-a`: `ρ^a(1-ρ^b)/(1-ρ^{a+b})`, `ρ = (1-p)/p`, and
/// `b/(a+b)` at `p = 1/2`.
pub fn gambler_exit_left<S: Scalar>(a: i64, b: i64, p: S) -> Result<S> {
    check_gambler(a, b, &p)?;
    let half = S::from_ratio(1, 2);
    if p == half {
        return Ok(S::from_ratio(b, a + b));
    }
    let rho = (S::one() - p.clone()) / p;
    let ra = pow(rho.clone(), a as usize);
    let rb = pow(rho.clone(), b as usize);
    Ok(ra.clone() * (S::one() - rb.clone()) / (S::one() - ra * rb))
}

/// The same probability as `q^a (p^b - q^b) / (p^{a+b} - q^{a+b})`.
pub fn gambler_exit_left_alt<S: Scalar>(a: i64, b: i64, p: S) -> Result<S> {
    check_gambler(a, b, &p)?;
    if p == S::from_ratio(1, 2) {
        return Ok(S::from_ratio(b, a + b));
    }
    let q = S::one() - p.clone();
    let (pa, pb) = (pow(p.clone(), a as usize), pow(p.clone(), b as usize));
    let (qa, qb) = (pow(q.clone(), a as usize), pow(q, b as usize));
    Ok(qa.clone() * (pb.clone() - qb.clone()) / (pa * pb - qa * qb))
}

/// The same probability by a linear solve of the absorbing chain on `{-a,…,b}`.
pub fn gambler_chain_solve<S: Scalar>(a: i64, b: i64, p: S) -> Result<S> {
    check_gambler(a, b, &p)?;
    // unknowns u_i, i = -a+1..b-1; u_i - p u_{i+1} - q u_{i-1} = q 1{i=-a+1}
    let n = (a + b - 1) as usize;
    let q = S::one() - p.clone();
    let mut m = BandMatrix::zeros(n, 1);
    let mut rhs = vec![S::zero(); n];
    for k in 0..n {
        m.add(k, k, S::one());
        if k + 1 < n {
            m.add(k, k + 1, -p.clone());
        }
        if k > 0 {
            m.add(k, k - 1, -q.clone());
        }
    }
    rhs[0] = q;
    m.factor()?.solve(&mut rhs);
    Ok(rhs[(a - 1) as usize].clone())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StartEstimate {
    pub start: Point,
    /// Non-frontal exit probability from `start`.
    pub non_frontal: ProportionEstimate,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PolynomialReport {
    pub m: i64,
    pub k: f64,
    /// `M^{-K}`.
    pub threshold: f64,
    pub sup_estimate: f64,
    pub sup_wilson_hi: f64,
    pub max_wilson_lo: f64,
    pub verdict: Verdict,
    pub starts: Vec<StartEstimate>,
    /// Sampled starting points over `|B*_M|`.
    pub coverage: f64,
    pub log_m0: f64,
    /// True when `M < M₀`, i.e. always at desk scale.
    pub below_m0: bool,
    pub n_walks: u64,
}

/// Annealed estimate of `sup_{x ∈ B*_M} P_x(X_{T_{B_M}} ∉ ∂₊B_M)` over every
/// longitudinal level of `B*_M` and `extra_transverse` random transverse
/// offsets per level (plus the axis). Pass when every Wilson upper bound is
/// below `M^{-K}`, fail when some Wilson lower bound is above it.
pub fn polynomial_condition_probe(
    law: &EnvironmentLaw,
    m: i64,
    k: f64,
    n_walks: u64,
    extra_transverse: usize,
    seed: u64,
) -> Result<PolynomialReport> {
    let d = law.dim();
    let origin = vec![0i64; d];
    let mf = middle_frontal(m, &origin)?;
    let domain = make_box(m, &origin, u128::MAX)?;
    let mut rng = walk_rng(seed, 0x504b);
    let mut starts: Vec<Point> = Vec::new();
    for t in m / 2..m {
        let mut axis = origin.clone();
        axis[0] = t;
        starts.push(axis);
        for _ in 0..extra_transverse {
            let mut y = origin.clone();
            y[0] = t;
            for c in y.iter_mut().skip(1) {
                *c = rng.random_range(-(mf.lateral() - 1)..mf.lateral());
            }
            starts.push(y);
        }
    }
    let threshold = (m as f64).powf(-k);
    let mut out = Vec::with_capacity(starts.len());
    for (i, s) in starts.iter().enumerate() {
        let dist = estimate_exit_distribution(law, &domain, s, n_walks, DEFAULT_STEP_CAP, env_seed(seed, i as u64))?;
        let frontal = dist.side(Side::Frontal).count;
        out.push(StartEstimate { start: s.clone(), non_frontal: ProportionEstimate::new(n_walks - frontal, n_walks) });
    }
    let sup_estimate = out.iter().map(|s| s.non_frontal.estimate.mean).fold(0.0, f64::max);
    let sup_wilson_hi = out.iter().map(|s| s.non_frontal.wilson_hi).fold(0.0, f64::max);
    let max_wilson_lo = out.iter().map(|s| s.non_frontal.wilson_lo).fold(0.0, f64::max);
    let verdict = if sup_wilson_hi <= threshold {
        Verdict::Pass
    } else if max_wilson_lo > threshold {
        Verdict::Fail
    } else {
        Verdict::Inconclusive
    };
    let lm0 = log_m0(d);
    Ok(PolynomialReport {
        m,
        k,
        threshold,
        sup_estimate,
        sup_wilson_hi,
        max_wilson_lo,
        verdict,
        coverage: out.len() as f64 / mf.site_count() as f64,
        starts: out,
        log_m0: lm0,
        below_m0: (m as f64).ln() < lm0,
        n_walks,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TGammaRow {
    pub m: i64,
    /// `P_0(X_{T_{U_{e1,M}}}·e1 < 0)`.
    pub left_exit: ProportionEstimate,
    pub censored: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TGammaReport {
    pub gamma: f64,
    pub rows: Vec<TGammaRow>,
    /// Fit of `-log P` against `M^γ` on the uncensored prefix.
    pub fit: Option<LinearFit>,
    pub slope_ci: Option<(f64, f64)>,
    /// Heuristic support: positive slope. Only the direction e1 is probed.
    pub supports_condition: bool,
}

/// Slope of `-log P_0(X_{T_{U_{e1,M}}}·e1 < 0)` against `M^γ`.
pub fn t_gamma_probe(law: &EnvironmentLaw, gamma: f64, m_list: &[i64], n_walks: u64, seed: u64) -> Result<TGammaReport> {
    if m_list.len() < 3 || m_list.windows(2).any(|w| w[0] >= w[1]) || m_list[0] < 1 {
        return Err(Error::invalid("M_list must be increasing with at least three positive values"));
    }
    let d = law.dim();
    let origin = vec![0i64; d];
    let mut rows = Vec::new();
    for (i, &m) in m_list.iter().enumerate() {
        let cap = 25 * m.pow(3);
        let slab = make_slab(Direction::e1(), m, &origin, cap)?;
        let dist = estimate_exit_distribution(law, &slab, &origin, n_walks, DEFAULT_STEP_CAP, env_seed(seed, i as u64))?;
        let left = dist.side(Side::Back);
        rows.push(TGammaRow { m, censored: left.count == 0, left_exit: left });
    }
    tgamma_fit(gamma, rows)
}

fn tgamma_fit(gamma: f64, rows: Vec<TGammaRow>) -> Result<TGammaReport> {
    let prefix: Vec<&TGammaRow> = rows.iter().take_while(|r| !r.censored).collect();
    let xs: Vec<f64> = prefix.iter().map(|r| (r.m as f64).powf(gamma)).collect();
    let ys: Vec<f64> = prefix.iter().map(|r| -r.left_exit.estimate.mean.ln()).collect();
    let fit = linear_fit(&xs, &ys);
    let slope_ci = fit.filter(|f| f.slope_stderr.is_finite()).map(|f| {
        (f.slope - crate::stats::Z95 * f.slope_stderr, f.slope + crate::stats::Z95 * f.slope_stderr)
    });
    let supports_condition = match (fit, slope_ci) {
        (_, Some((lo, _))) => lo > 0.0,
        (Some(f), None) => f.slope > 0.0,
        _ => false,
    };
    Ok(TGammaReport { gamma, rows, fit, slope_ci, supports_condition })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GreenDriftReport {
    /// `E(G_U[d·e1](0))` over environments.
    pub estimate: MCEstimate,
    pub values: Vec<f64>,
    pub l: i64,
    /// Environments whose slab solve hit the maximum transverse cap.
    pub flagged: usize,
}

/// Annealed mean of `G_U[d·e1](0)` on the slab `|y·e1| < L`, each value
/// computed exactly in one environment.
pub fn annealed_green_drift(
    law: &EnvironmentLaw,
    l: i64,
    n_envs: u64,
    seed: u64,
    opts: &SlabOptions,
) -> Result<GreenDriftReport> {
    if n_envs == 0 {
        return Err(Error::invalid("n_envs must be >= 1"));
    }
    let origin = vec![0i64; law.dim()];
    let res: Result<Vec<_>> = (0..n_envs)
        .into_par_iter()
        .map(|i| {
            let env = Quenched::new(law, env_seed(seed, i));
            phat::<f64>(&env, &origin, l, opts)
        })
        .collect();
    let res = res?;
    let values: Vec<f64> = res.iter().map(|r| r.green_drift).collect();
    Ok(GreenDriftReport {
        estimate: MCEstimate::from_samples(&values),
        flagged: res.iter().filter(|r| r.flagged).count(),
        values,
        l,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Thresholds {
    pub p_minus: f64,
    pub p_plus: f64,
    pub raw_minus: f64,
    pub raw_plus: f64,
    pub two_p_minus_1: f64,
    pub two_p_plus_1: f64,
    /// `ε^{exponent}`, by default `ε^{α(d)-2-δ}`.
    pub offset: f64,
    pub exponent: f64,
    pub green: GreenDriftReport,
}

/// `p∓ = (1/2 + (E(G_U[d·e1](0)) ∓ ε^{α(d)-2-δ}) / (2L))` clamped to `[0,1]`.
pub fn p_plus_minus(
    law: &EnvironmentLaw,
    delta: f64,
    l: i64,
    n_envs: u64,
    seed: u64,
    exponent_override: Option<f64>,
    opts: &SlabOptions,
) -> Result<Thresholds> {
    let green = annealed_green_drift(law, l, n_envs, seed, opts)?;
    Ok(thresholds_from(law, delta, l, exponent_override, green))
}

pub fn thresholds_from(
    law: &EnvironmentLaw,
    delta: f64,
    l: i64,
    exponent_override: Option<f64>,
    green: GreenDriftReport,
) -> Thresholds {
    let exponent = exponent_override.unwrap_or(alpha_d(law.dim()) - 2.0 - delta);
    let offset = law.epsilon().powf(exponent);
    let g = green.estimate.mean;
    let raw_minus = 0.5 + (g - offset) / (2.0 * l as f64);
    let raw_plus = 0.5 + (g + offset) / (2.0 * l as f64);
    let p_minus = raw_minus.max(0.0);
    let p_plus = raw_plus.min(1.0);
    Thresholds {
        p_minus,
        p_plus,
        raw_minus,
        raw_plus,
        two_p_minus_1: 2.0 * p_minus - 1.0,
        two_p_plus_1: 2.0 * p_plus - 1.0,
        offset,
        exponent,
        green,
    }
}

/// Slab exits of one environment, cached per rescale point.
pub struct PhatCache<'a> {
    env: Quenched<'a>,
    l: i64,
    opts: SlabOptions,
    map: HashMap<Point, Arc<SlabExit<f64>>>,
}

impl<'a> PhatCache<'a> {
    pub fn new(env: Quenched<'a>, l: i64, opts: SlabOptions) -> Self {
        Self { env, l, opts, map: HashMap::new() }
    }

    pub fn get(&mut self, x: &[i64]) -> Result<Arc<SlabExit<f64>>> {
        if let Some(s) = self.map.get(x) {
            return Ok(s.clone());
        }
        let s = Arc::new(slab_exit::<f64>(&self.env, x, self.l, &self.opts)?);
        self.map.insert(x.to_vec(), s.clone());
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RescaledTrajectory {
    /// `Y_k = X_{W_k}`.
    pub y_points: Vec<Point>,
    /// `Z_k = X_{V_k}` for `k` up to the box exit (frozen afterwards).
    pub z_points: Vec<Point>,
    /// `W_k` as step counts of `X`.
    pub w_times: Vec<u64>,
    /// Index `k` with `V_k = T_B`, if the box was left.
    pub box_exit_index: Option<usize>,
    pub box_exit_side: Option<Side>,
    /// Companion walk `y_k`.
    pub companion: Vec<i64>,
    /// `S_m`: first `k` with `y_k >= m`.
    pub companion_hit: Option<usize>,
    /// `p̂(Y_k)` at every visited rescale point.
    pub phat: Vec<f64>,
    /// `p <= p̂(Y_k)` held at every visited point (up to the box exit).
    pub hypothesis_held: bool,
    /// Steps with the companion moving right while `Y` moved left, plus
    /// indices where `Y_k·e1 < L y_k + Y_0·e1` before the box exit.
    pub violations: usize,
    /// Some slab solve reached its maximum transverse cap.
    pub flagged: bool,
}

#[derive(Clone, Debug)]
pub struct CouplingParams {
    pub l: i64,
    /// Companion target `m` in `S_m` (`N/2` in the scheme).
    pub target: i64,
    pub p: f64,
    pub max_jumps: usize,
}

/// Samples the excursion of `X` from `x` through the slab conditioned to
/// leave on the chosen side (Doob transform by the exit probabilities).
/// Returns the landing point, the step count and, if `X` leaves `domain`
/// during the excursion, the first outside point.
fn conditioned_excursion<R: Rng>(
    slab: &SlabExit<f64>,
    x: &[i64],
    right: bool,
    domain: &Domain,
    rng: &mut R,
) -> (Point, u64, Option<Point>) {
    let sites = &slab.sites;
    let n = sites.len();
    let m = 2 * sites.dim();
    let h = if right { &slab.right } else { &slab.left };
    let target = if right { Side::Frontal } else { Side::Back };
    let hv = |j: usize| {
        if j < n {
            h[j]
        } else if sites.side(j) == target {
            1.0
        } else {
            0.0
        }
    };
    let mut k = sites.index_of(x).expect("slab source is interior");
    let mut steps = 0u64;
    let mut left_domain = None;
    let mut w = vec![0.0; m];
    loop {
        let mut total = 0.0;
        for (e, we) in w.iter_mut().enumerate() {
            *we = slab.chain.weight(k, e) * hv(sites.neighbor(k, e));
            total += *we;
        }
        let u: f64 = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = m - 1;
        for (e, we) in w.iter().enumerate() {
            acc += we;
            if u < acc && *we > 0.0 {
                pick = e;
                break;
            }
        }
        let j = sites.neighbor(k, pick);
        steps += 1;
        let p = sites.point(j);
        if left_domain.is_none() && !domain.contains(p) {
            left_domain = Some(p.to_vec());
        }
        if j >= n {
            return (p.to_vec(), steps, left_domain);
        }
        k = j;
    }
}

/// Runs `X` from `start` through successive slab exits, recording `Y`, `Z`
/// (frozen at the exit from `domain`) and the companion walk coupled to the
/// right: with a shared uniform `U`, `Y` moves right iff `U < p̂(Y_k)` and the
/// companion iff `U < p`. `Y` stops at the box exit; the companion runs on
/// until it hits its target or `max_jumps` is reached.
pub fn coupled_rescaled_run(
    cache: &mut PhatCache<'_>,
    domain: &Domain,
    start: &[i64],
    params: &CouplingParams,
    master_seed: u64,
    stream_id: u64,
) -> Result<RescaledTrajectory> {
    if !(0.0..=1.0).contains(&params.p) {
        return Err(Error::invalid(format!("companion probability must lie in [0,1], got {}", params.p)));
    }
    if !domain.contains(start) {
        return Err(Error::invalid("coupled run must start inside the box"));
    }
    let l = params.l;
    let mut rng = walk_rng(master_seed, stream_id);
    let mut y = start.to_vec();
    let mut tr = RescaledTrajectory {
        y_points: vec![y.clone()],
        z_points: vec![y.clone()],
        w_times: vec![0],
        box_exit_index: None,
        box_exit_side: None,
        companion: vec![0],
        companion_hit: if params.target <= 0 { Some(0) } else { None },
        phat: Vec::new(),
        hypothesis_held: true,
        violations: 0,
        flagged: false,
    };
    let mut comp = 0i64;
    let mut time = 0u64;
    for k in 0..params.max_jumps {
        if tr.box_exit_index.is_some() && tr.companion_hit.is_some() {
            break;
        }
        if tr.box_exit_index.is_some() {
            // only the companion matters once Z is frozen
            comp += if rng.random::<f64>() < params.p { 1 } else { -1 };
            tr.companion.push(comp);
            if tr.companion_hit.is_none() && comp >= params.target {
                tr.companion_hit = Some(k + 1);
            }
            continue;
        }
        let slab = cache.get(&y)?;
        tr.flagged |= slab.flagged;
        let ph = slab.right[slab.source_index];
        tr.phat.push(ph);
        if params.p > ph {
            tr.hypothesis_held = false;
        }
        let u: f64 = rng.random();
        let y_right = u < ph;
        let c_right = u < params.p;
        if c_right && !y_right {
            tr.violations += 1;
        }
        let (land, steps, exit) = conditioned_excursion(&slab, &y, y_right, domain, &mut rng);
        time += steps;
        comp += if c_right { 1 } else { -1 };
        y = land;
        tr.y_points.push(y.clone());
        tr.w_times.push(time);
        tr.companion.push(comp);
        if tr.companion_hit.is_none() && comp >= params.target {
            tr.companion_hit = Some(k + 1);
        }
        match exit {
            Some(p) => {
                tr.box_exit_side = domain.classify(&p);
                tr.z_points.push(p);
                tr.box_exit_index = Some(k + 1);
            }
            None => {
                tr.z_points.push(y.clone());
                if y[0] < l * comp + start[0] {
                    tr.violations += 1;
                }
            }
        }
    }
    Ok(tr)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CouplingSummary {
    pub runs: usize,
    pub environments: usize,
    pub p: f64,
    /// Runs where `p <= p̂` was established at every visited point.
    pub certified_runs: usize,
    pub violations: usize,
    /// Certified runs with `T^Z_B > S_{N/2}`.
    pub order_violations: usize,
    pub flagged_runs: usize,
    pub frontal_exits: usize,
    pub min_phat_margin: f64,
    pub distinct_points: usize,
}

/// `runs_per_env` coupled runs in each of `n_envs` environments, started at
/// `start` inside `domain`.
#[allow(clippy::too_many_arguments)]
pub fn coupling_certificate(
    law: &EnvironmentLaw,
    domain: &Domain,
    start: &[i64],
    params: &CouplingParams,
    n_envs: u64,
    runs_per_env: u64,
    seed: u64,
    opts: &SlabOptions,
) -> Result<CouplingSummary> {
    let per_env: Result<Vec<(Vec<RescaledTrajectory>, usize)>> = (0..n_envs)
        .into_par_iter()
        .map(|i| {
            let env = Quenched::new(law, env_seed(seed, i));
            let mut cache = PhatCache::new(env, params.l, *opts);
            let runs = (0..runs_per_env)
                .map(|r| coupled_rescaled_run(&mut cache, domain, start, params, seed, i * runs_per_env + r))
                .collect::<Result<Vec<_>>>()?;
            Ok((runs, cache.len()))
        })
        .collect();
    let per_env = per_env?;
    let mut s = CouplingSummary {
        runs: 0,
        environments: n_envs as usize,
        p: params.p,
        certified_runs: 0,
        violations: 0,
        order_violations: 0,
        flagged_runs: 0,
        frontal_exits: 0,
        min_phat_margin: f64::INFINITY,
        distinct_points: 0,
    };
    for (runs, points) in &per_env {
        s.distinct_points += points;
        for t in runs {
            s.runs += 1;
            s.violations += t.violations;
            s.flagged_runs += t.flagged as usize;
            s.frontal_exits += (t.box_exit_side == Some(Side::Frontal)) as usize;
            let upto = t.box_exit_index.unwrap_or(t.phat.len()).min(t.phat.len());
            for ph in &t.phat[..upto] {
                s.min_phat_margin = s.min_phat_margin.min(ph - params.p);
            }
            if t.hypothesis_held {
                s.certified_runs += 1;
                if let (Some(tz), Some(sm)) = (t.box_exit_index, t.companion_hit) {
                    if tz > sm && t.box_exit_side != Some(Side::Frontal) {
                        s.order_violations += 1;
                    }
                }
            }
        }
    }
    Ok(s)
}

/// Monte Carlo mean of `S_m = inf{k : y_k >= m}` for the walk with right
/// probability `p > 1/2`.
pub fn companion_hitting_mc(p: f64, m: i64, n: u64, seed: u64) -> Result<MCEstimate> {
    if !(p > 0.5 && p <= 1.0) || m < 1 || n == 0 {
        return Err(Error::invalid("companion hitting time needs p in (1/2,1], m >= 1, n >= 1"));
    }
    let samples: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = walk_rng(seed, i);
            let (mut y, mut k) = (0i64, 0u64);
            while y < m {
                y += if rng.random::<f64>() < p { 1 } else { -1 };
                k += 1;
            }
            k as f64
        })
        .collect();
    Ok(MCEstimate::from_samples(&samples))
}

/// `E(S_m)` by the first-step recursion `E_i = 1 + p E_{i+1} + q E_{i-1}`
/// on `{-A,…,m}` with `E_m = 0` and a reflecting barrier at `-A`.
pub fn companion_hitting_exact(p: f64, m: i64, barrier: i64) -> Result<f64> {
    if !(p > 0.5 && p <= 1.0) || m < 1 || barrier < 1 {
        return Err(Error::invalid("companion hitting time needs p in (1/2,1], m >= 1, barrier >= 1"));
    }
    let n = (m + barrier) as usize;
    let q = 1.0 - p;
    let mut a = BandMatrix::<f64>::zeros(n, 1);
    for k in 0..n {
        a.add(k, k, 1.0);
        if k + 1 < n {
            a.add(k, k + 1, -p);
        }
        if k == 0 {
            a.add(0, 1.min(n - 1), -q);
        } else {
            a.add(k, k - 1, -q);
        }
    }
    let mut rhs = vec![1.0; n];
    a.factor()?.solve(&mut rhs);
    Ok(rhs[barrier as usize])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::build_two_point_law;
    use num_rational::BigRational;

    #[test]
    fn gambler_reference_values() {
        assert_eq!(gambler_exit_left(2, 3, 0.5).unwrap(), 0.6);
        let r = gambler_exit_left(2, 3, BigRational::from_ratio(3, 5)).unwrap();
        assert_eq!(r, BigRational::from_ratio(76, 211));
        let alt = gambler_exit_left_alt(2, 3, BigRational::from_ratio(3, 5)).unwrap();
        assert_eq!(alt, r);
        let chain = gambler_chain_solve(2, 3, BigRational::from_ratio(3, 5)).unwrap();
        assert_eq!(chain, r);
        assert!(gambler_exit_left(2, 3, 0.0).is_err());
        assert!(gambler_exit_left(0, 3, 0.4).is_err());
    }

    #[test]
    fn gambler_monotonicity() {
        for a in 1..8 {
            for b in 1..8 {
                for i in 1..9 {
                    let p = i as f64 / 10.0;
                    let v = gambler_exit_left(a, b, p).unwrap();
                    assert!(gambler_exit_left(a, b, p + 0.1).unwrap() < v);
                    assert!(gambler_exit_left(a, b + 1, p).unwrap() > v);
                    assert!(gambler_exit_left(a + 1, b, p).unwrap() < v);
                }
            }
        }
    }

    #[test]
    fn l_and_m0() {
        let s = ScaleParams::default();
        assert_eq!(s.scale_l(0.1), 10);
        assert_eq!(s.scale_n(0.1), 1000);
        let k: f64 = 1.0 / 8.0;
        assert!((log_m0(2) - (100.0 + 8.0 * k.ln().powi(2))).abs() < 1e-12);
    }

    #[test]
    fn polynomial_probe_verdicts() {
        let strong = EnvironmentLaw::homogeneous_drift(2, 0.9, 0.125, 1).unwrap();
        let r = polynomial_condition_probe(&strong, 8, 2.0, 400, 1, 5).unwrap();
        assert_eq!(r.verdict, Verdict::Pass, "{:?}", r.sup_wilson_hi);
        assert!(r.below_m0);
        let ssrw = EnvironmentLaw::ssrw(2);
        let r = polynomial_condition_probe(&ssrw, 4, 1.0, 400, 0, 5).unwrap();
        assert_eq!(r.verdict, Verdict::Fail);
    }

    #[test]
    fn t_gamma_slopes() {
        let drift = EnvironmentLaw::homogeneous_drift(2, 0.5, 0.1, 1).unwrap();
        let r = t_gamma_probe(&drift, 1.0, &[2, 4, 6, 8], 4000, 3).unwrap();
        assert!(r.supports_condition, "{:?}", r.fit);
        let ssrw = EnvironmentLaw::ssrw(2);
        let r = t_gamma_probe(&ssrw, 1.0, &[2, 4, 6], 4000, 3).unwrap();
        assert!(r.fit.unwrap().slope.abs() < 0.1);
    }

    #[test]
    fn censored_prefix() {
        let mk = |m, c| TGammaRow { m, left_exit: ProportionEstimate::new(c, 100), censored: c == 0 };
        let r = tgamma_fit(1.0, vec![mk(1, 40), mk(2, 20), mk(3, 8), mk(4, 0), mk(5, 1)]).unwrap();
        assert_eq!(r.fit.unwrap().n, 3);
        assert!(r.rows[3].censored);
    }

    #[test]
    fn green_drift_trivial_cases() {
        let opts = SlabOptions { leak_tol: 1e-12, ..SlabOptions::default() };
        let ssrw = EnvironmentLaw::ssrw(2);
        let r = annealed_green_drift(&ssrw, 4, 3, 1, &opts).unwrap();
        assert!(r.estimate.mean.abs() < 1e-15);
        let hom = EnvironmentLaw::homogeneous_drift(2, 0.2, 0.1, 1).unwrap();
        let r = annealed_green_drift(&hom, 4, 2, 1, &opts).unwrap();
        let env = Quenched::new(&hom, 0);
        let dom = crate::lattice::make_strip(Direction::e1(), -3, 3, &[0, 0], 1 << 8).unwrap();
        let t = crate::green::green_operator_apply::<f64>(&env, &dom, |_| 1.0, &[0, 0], &opts.policy).unwrap();
        assert!((r.estimate.mean - hom.lambda() * t).abs() < 1e-9 * t);
    }

    #[test]
    fn thresholds_and_clamping() {
        let ssrw = EnvironmentLaw::ssrw(2);
        let opts = SlabOptions::default();
        let t = p_plus_minus(&ssrw, 0.25, 4, 2, 1, None, &opts).unwrap();
        assert!(t.p_minus <= 0.5 && 0.5 <= t.p_plus);
        let t = p_plus_minus(&ssrw, 0.25, 4, 2, 1, Some(-5.0), &opts).unwrap();
        assert_eq!(t.p_minus, 0.0);
        assert_eq!(t.p_plus, 1.0);
    }

    #[test]
    fn companion_hitting_identity() {
        let (p, m) = (0.6, 5);
        let exact = companion_hitting_exact(p, m, 200).unwrap();
        assert!((exact - m as f64 / (2.0 * p - 1.0)).abs() < 1e-9);
        let mc = companion_hitting_mc(p, m, 20_000, 4).unwrap();
        assert!(mc.agrees_with(exact, 0.0, 3.0), "{mc:?}");
    }

    #[test]
    fn zero_companion_probability_is_vacuous() {
        let (law, _) = build_two_point_law(2, 0.05, 0.012, 0.0, 2).unwrap();
        let l = 10;
        let dom = make_box(4 * l, &[0, 0], u128::MAX).unwrap();
        let params = CouplingParams { l, target: 2, p: 0.0, max_jumps: 60 };
        let mut cache = PhatCache::new(Quenched::new(&law, 1), l, SlabOptions::default());
        let t = coupled_rescaled_run(&mut cache, &dom, &[2 * l, 0], &params, 9, 0).unwrap();
        assert!(t.companion.windows(2).all(|w| w[1] == w[0] - 1));
        assert_eq!(t.violations, 0);
        for w in t.y_points.windows(2) {
            assert_eq!((w[1][0] - w[0][0]).abs(), l);
        }
    }

    #[test]
    fn homogeneous_coupling_matches_gambler() {
        // p = p̂ everywhere: Y·e1/L and the companion exit [-a, b] alike
        let law = EnvironmentLaw::homogeneous_drift(2, 0.2, 0.05, 1).unwrap();
        let l = 3;
        let opts = SlabOptions { leak_tol: 1e-12, ..SlabOptions::default() };
        let ph = phat::<f64>(&Quenched::new(&law, 0), &[0, 0], l, &opts).unwrap().direct;
        let dom = make_box(6 * l, &[0, 0], u128::MAX).unwrap();
        let params = CouplingParams { l, target: 3, p: ph, max_jumps: 10_000 };
        let mut cache = PhatCache::new(Quenched::new(&law, 0), l, opts);
        let n = 2000;
        let mut back = 0;
        for i in 0..n {
            let t = coupled_rescaled_run(&mut cache, &dom, &[3 * l, 0], &params, 7, i).unwrap();
            assert_eq!(t.violations, 0);
            if t.box_exit_side == Some(Side::Back) {
                back += 1;
            }
        }
        // start at 3L, back face at -3L (a = 6 jumps), frontal at 6L (b = 3 jumps)
        let exact = gambler_exit_left(6, 3, ph).unwrap();
        let est = ProportionEstimate::new(back, n);
        let se = (exact * (1.0 - exact) / n as f64).sqrt();
        assert!((est.estimate.mean - exact).abs() <= 3.0 * se + 1e-3, "{} vs {exact}", est.estimate.mean);
    }
}
