//! Kalikow's auxiliary environment `ω_B^x(y,e) = E(g_B(x,y) ω(y,e)) / E(g_B(x,y))`
//! by exact enumeration of the environment on a finite connected domain (or
//! by sampling), with checks of Kalikow's formula, its exit-law corollary,
//! the hitting-probability drift representation and the `ε²/d` drift bound.

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::environment::{check_condition, local_drift, ConditionKind, EnvironmentLaw, ProbVector};
use crate::error::{Error, Result};
use crate::green::{GreenRow, KilledChain, SolvePolicy};
use crate::lattice::{make_explicit, Direction, Domain, Point, Sites};
use crate::rng::{env_seed, walk_rng};
use crate::scalar::{KahanSum, Scalar};

/// Default bound on `|support|^|B|` for exact enumeration.
pub const DEFAULT_ENUMERATION_CAP: u128 = 1 << 20;

const CHUNK: u64 = 32;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum KalikowMode {
    Exact { cap: u128 },
    MonteCarlo { n: u64, seed: u64 },
}

impl KalikowMode {
    pub fn exact() -> Self {
        KalikowMode::Exact { cap: DEFAULT_ENUMERATION_CAP }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Provenance {
    /// Number of enumerated configurations.
    Exact { configs: u64 },
    /// Sample size and delta-method standard errors of `ω_B^x(y,e)`, site by
    /// site in direction order.
    MonteCarlo { n: u64, stderr: Vec<Vec<f64>> },
}

/// Kalikow's environment on `B` seen from `base_point`.
#[derive(Clone)]
pub struct KalikowEnvironment<S> {
    pub base_point: Point,
    pub domain: Domain,
    pub sites: Arc<Sites>,
    /// `ω_B^x(y,·)` for every interior `y`, in `Sites` order.
    pub vectors: Vec<ProbVector<S>>,
    /// Annealed Green's function `E(g_B(x,·))` on `B ∪ ∂B`.
    pub mean_green: Vec<S>,
    /// Annealed exit time `E_x(T_B)`, from an independent column solve.
    pub mean_exit_time: S,
    pub provenance: Provenance,
}

impl<S: Scalar> KalikowEnvironment<S> {
    pub fn vector_at(&self, y: &[i64]) -> Option<&ProbVector<S>> {
        self.sites.index_of(y).map(|k| &self.vectors[k])
    }

    /// Drift `Σ_e ω_B^x(y,e) e` at an interior site.
    pub fn drift(&self, y: &[i64]) -> Option<Vec<S>> {
        self.vector_at(y).map(local_drift)
    }

    pub fn chain(&self) -> Result<KilledChain<S>> {
        let w = self.vectors.iter().flat_map(|v| v.weights.iter().cloned()).collect();
        KilledChain::from_weights(self.sites.clone(), w)
    }

    /// `g_B(x, ·, ω_B^x)` by one Green solve in the Kalikow environment.
    pub fn green_row(&self) -> Result<GreenRow<S>> {
        let chain = self.chain()?;
        let k = self.base_index();
        let row = chain.factor(&SolvePolicy::default())?.green_row(k)?;
        Ok(row)
    }

    pub fn base_index(&self) -> usize {
        self.sites.index_of(&self.base_point).expect("base point is interior")
    }

    pub fn min_weight(&self) -> S {
        self.vectors
            .iter()
            .flat_map(|v| v.weights.iter())
            .cloned()
            .fold(S::one(), |a, b| if b < a { b } else { a })
    }
}

/// Per-base-point sums over configurations.
#[derive(Clone)]
struct PerBase<S: Scalar> {
    green: Vec<KahanSum<S>>,
    green_omega: Vec<KahanSum<S>>,
    time: KahanSum<S>,
    f_green: Vec<KahanSum<S>>,
    f_omega: Vec<KahanSum<S>>,
    m_gg: Vec<f64>,
    m_go: Vec<f64>,
    m_oo: Vec<f64>,
}

#[derive(Clone)]
struct Acc<S: Scalar> {
    weight: KahanSum<S>,
    count: u64,
    per: Vec<PerBase<S>>,
}

fn kahan_vec<S: Scalar>(n: usize) -> Vec<KahanSum<S>> {
    vec![KahanSum::default(); n]
}

impl<S: Scalar> Acc<S> {
    fn new(bases: usize, sites: &Sites, with_f: bool, moments: bool) -> Self {
        let (n, t, m) = (sites.len(), sites.total_len(), 2 * sites.dim());
        let fsz = if with_f { n } else { 0 };
        let msz = if moments { n * m } else { 0 };
        let per = PerBase {
            green: kahan_vec(t),
            green_omega: kahan_vec(n * m),
            time: KahanSum::default(),
            f_green: kahan_vec(fsz),
            f_omega: kahan_vec(fsz * m),
            m_gg: vec![0.0; if moments { n } else { 0 }],
            m_go: vec![0.0; msz],
            m_oo: vec![0.0; msz],
        };
        Self { weight: KahanSum::default(), count: 0, per: vec![per; bases] }
    }

    fn merge(&mut self, o: &Acc<S>) {
        self.weight.merge(&o.weight);
        self.count += o.count;
        for (a, b) in self.per.iter_mut().zip(&o.per) {
            for (x, y) in a.green.iter_mut().zip(&b.green) {
                x.merge(y);
            }
            for (x, y) in a.green_omega.iter_mut().zip(&b.green_omega) {
                x.merge(y);
            }
            a.time.merge(&b.time);
            for (x, y) in a.f_green.iter_mut().zip(&b.f_green) {
                x.merge(y);
            }
            for (x, y) in a.f_omega.iter_mut().zip(&b.f_omega) {
                x.merge(y);
            }
            for (x, y) in a.m_gg.iter_mut().zip(&b.m_gg) {
                *x += y;
            }
            for (x, y) in a.m_go.iter_mut().zip(&b.m_go) {
                *x += y;
            }
            for (x, y) in a.m_oo.iter_mut().zip(&b.m_oo) {
                *x += y;
            }
        }
    }
}

struct Setup<S> {
    sites: Arc<Sites>,
    bases: Vec<usize>,
    vectors: Vec<ProbVector<S>>,
    probs: Vec<S>,
}

fn setup<S: Scalar>(law: &EnvironmentLaw, domain: &Domain, xs: &[Point]) -> Result<Setup<S>> {
    if domain.dim() != law.dim() {
        return Err(Error::invalid("domain and law dimensions differ"));
    }
    if !domain.is_connected() {
        return Err(Error::invalid("Kalikow's environment needs a connected domain"));
    }
    let sites = Arc::new(domain.materialize(SolvePolicy::default().site_budget)?);
    let bases = xs
        .iter()
        .map(|x| sites.index_of(x).ok_or_else(|| Error::invalid(format!("base point {x:?} is not in the domain"))))
        .collect::<Result<Vec<_>>>()?;
    let vectors = (0..law.support_len()).map(|i| law.prob_vector::<S>(i)).collect();
    let probs = (0..law.support_len()).map(|i| S::from_f64(law.prob(i))).collect();
    Ok(Setup { sites, bases, vectors, probs })
}

/// Adds one configuration (support index per interior site) with `weight`.
fn accumulate_config<S: Scalar>(
    st: &Setup<S>,
    idx: &[usize],
    weight: S,
    with_f: bool,
    moments: bool,
    acc: &mut Acc<S>,
) -> Result<()> {
    let sites = &st.sites;
    let (n, m) = (sites.len(), 2 * sites.dim());
    let w: Vec<S> = idx.iter().flat_map(|&i| st.vectors[i].weights.iter().cloned()).collect();
    let chain = KilledChain::from_weights(sites.clone(), w)?;
    let solver = chain.factor(&SolvePolicy::default())?;
    let times = solver.solve(vec![S::one(); n])?;
    acc.weight.add(weight.clone());
    acc.count += 1;
    for (b, &xi) in st.bases.iter().enumerate() {
        let row = solver.green_row(xi)?;
        let per = &mut acc.per[b];
        for (s, g) in per.green.iter_mut().zip(&row.values) {
            s.add(weight.clone() * g.clone());
        }
        for k in 0..n {
            let g = &row.values[k];
            for e in 0..m {
                per.green_omega[k * m + e].add(weight.clone() * g.clone() * chain.weight(k, e).clone());
            }
            if moments {
                let gf = g.to_f64();
                per.m_gg[k] += gf * gf;
                for e in 0..m {
                    let go = gf * chain.weight(k, e).to_f64();
                    per.m_go[k * m + e] += gf * go;
                    per.m_oo[k * m + e] += go * go;
                }
            }
        }
        per.time.add(weight.clone() * times[xi].clone());
    }
    if with_f {
        for y in 0..n {
            let h = chain.hitting_probability(y)?;
            // Σ_e ω(y,e) (1 - P_{y+e}(H_y < T_B))
            let mut dsum = S::zero();
            for e in 0..m {
                let j = sites.neighbor(y, e);
                let hz = if j < n { h[j].clone() } else { S::zero() };
                dsum = dsum + chain.weight(y, e).clone() * (S::one() - hz);
            }
            for (b, &xi) in st.bases.iter().enumerate() {
                let t = weight.clone() * h[xi].clone() / dsum.clone();
                let per = &mut acc.per[b];
                per.f_green[y].add(t.clone());
                for e in 0..m {
                    per.f_omega[y * m + e].add(t.clone() * chain.weight(y, e).clone());
                }
            }
        }
    }
    Ok(())
}

fn enumerate<S: Scalar>(
    law: &EnvironmentLaw,
    st: &Setup<S>,
    mode: KalikowMode,
    with_f: bool,
) -> Result<Acc<S>> {
    let n = st.sites.len();
    let s = law.support_len() as u128;
    let moments = matches!(mode, KalikowMode::MonteCarlo { .. });
    let total: u64 = match mode {
        KalikowMode::Exact { cap } => {
            let count = (0..n).try_fold(1u128, |a, _| a.checked_mul(s).filter(|v| *v <= cap));
            match count {
                Some(c) => c as u64,
                None => {
                    return Err(Error::budget(format!(
                        "exact enumeration needs {s}^{n} configurations, above the cap {cap}; use Monte Carlo mode"
                    )))
                }
            }
        }
        KalikowMode::MonteCarlo { n: samples, .. } => {
            if samples == 0 {
                return Err(Error::invalid("Monte Carlo mode needs n >= 1"));
            }
            samples
        }
    };
    let chunks: Vec<u64> = (0..total.div_ceil(CHUNK)).collect();
    let parts: Vec<Result<Acc<S>>> = chunks
        .par_iter()
        .map(|&c| {
            let mut acc = Acc::new(st.bases.len(), &st.sites, with_f, moments);
            let mut idx = vec![0usize; n];
            for cfg in c * CHUNK..((c + 1) * CHUNK).min(total) {
                let weight = match mode {
                    KalikowMode::Exact { .. } => {
                        let mut r = cfg;
                        let mut p = S::one();
                        for slot in idx.iter_mut() {
                            *slot = (r % s as u64) as usize;
                            r /= s as u64;
                            p = p * st.probs[*slot].clone();
                        }
                        p
                    }
                    KalikowMode::MonteCarlo { seed, .. } => {
                        let es = env_seed(seed, cfg);
                        for (k, slot) in idx.iter_mut().enumerate() {
                            *slot = law.sample_index_with(es, st.sites.point(k));
                        }
                        S::one()
                    }
                };
                if weight.is_zero() {
                    continue;
                }
                accumulate_config(st, &idx, weight, with_f, moments, &mut acc)?;
            }
            Ok(acc)
        })
        .collect();
    let mut acc = Acc::new(st.bases.len(), &st.sites, with_f, moments);
    for p in parts {
        acc.merge(&p?);
    }
    Ok(acc)
}

fn ratio_vectors<S: Scalar>(num: &[KahanSum<S>], den: &[KahanSum<S>], m: usize) -> Vec<ProbVector<S>> {
    den.iter()
        .enumerate()
        .map(|(k, g)| {
            let g = g.value();
            assert!(g > S::zero(), "annealed Green's function vanishes inside a connected domain");
            ProbVector { weights: (0..m).map(|e| num[k * m + e].value() / g.clone()).collect() }
        })
        .collect()
}

fn build_environments<S: Scalar>(
    domain: &Domain,
    xs: &[Point],
    st: &Setup<S>,
    acc: &Acc<S>,
    mode: KalikowMode,
) -> Vec<KalikowEnvironment<S>> {
    let (n, m) = (st.sites.len(), 2 * st.sites.dim());
    let total = acc.weight.value();
    xs.iter()
        .zip(&acc.per)
        .map(|(x, per)| {
            let vectors = ratio_vectors(&per.green_omega, &per.green[..n], m);
            let provenance = match mode {
                KalikowMode::Exact { .. } => Provenance::Exact { configs: acc.count },
                KalikowMode::MonteCarlo { .. } => {
                    let nf = acc.count as f64;
                    let stderr = (0..n)
                        .map(|k| {
                            let b = per.green[k].value().to_f64() / nf;
                            (0..m)
                                .map(|e| {
                                    let r = vectors[k].weights[e].to_f64();
                                    let v = (per.m_oo[k * m + e] - 2.0 * r * per.m_go[k * m + e]
                                        + r * r * per.m_gg[k])
                                        / nf;
                                    (v.max(0.0) / nf).sqrt() / b
                                })
                                .collect()
                        })
                        .collect();
                    Provenance::MonteCarlo { n: acc.count, stderr }
                }
            };
            KalikowEnvironment {
                base_point: x.clone(),
                domain: domain.clone(),
                sites: st.sites.clone(),
                vectors,
                mean_green: per.green.iter().map(|g| g.value() / total.clone()).collect(),
                mean_exit_time: per.time.value() / total.clone(),
                provenance,
            }
        })
        .collect()
}

/// Kalikow's environment seen from `x`.
pub fn kalikow_environment<S: Scalar>(
    law: &EnvironmentLaw,
    domain: &Domain,
    x: &[i64],
    mode: KalikowMode,
) -> Result<KalikowEnvironment<S>> {
    Ok(kalikow_environments(law, domain, &[x.to_vec()], mode)?.remove(0))
}

/// Kalikow's environments for several base points from one enumeration.
pub fn kalikow_environments<S: Scalar>(
    law: &EnvironmentLaw,
    domain: &Domain,
    xs: &[Point],
    mode: KalikowMode,
) -> Result<Vec<KalikowEnvironment<S>>> {
    let st = setup::<S>(law, domain, xs)?;
    let acc = enumerate(law, &st, mode, false)?;
    Ok(build_environments(domain, xs, &st, &acc, mode))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FormulaReport {
    /// `max_y |E(g_B(x,y)) - g_B(x,y,ω_B^x)|` over `B ∪ ∂B`.
    pub max_abs_error: f64,
    pub sites_checked: usize,
    pub configs: u64,
}

fn config_count(p: &Provenance) -> u64 {
    match p {
        Provenance::Exact { configs } => *configs,
        Provenance::MonteCarlo { n, .. } => *n,
    }
}

/// Compares the annealed Green's function with the Green's function of
/// Kalikow's walk on `B ∪ ∂B`.
pub fn verify_kalikow_formula<S: Scalar>(
    law: &EnvironmentLaw,
    domain: &Domain,
    x: &[i64],
    mode: KalikowMode,
) -> Result<FormulaReport> {
    let k = kalikow_environment::<S>(law, domain, x, mode)?;
    formula_report(&k)
}

pub fn formula_report<S: Scalar>(k: &KalikowEnvironment<S>) -> Result<FormulaReport> {
    let row = k.green_row()?;
    let max_abs_error = row
        .values
        .iter()
        .zip(&k.mean_green)
        .map(|(a, b)| (a.clone() - b.clone()).abs().to_f64())
        .fold(0.0, f64::max);
    Ok(FormulaReport { max_abs_error, sites_checked: row.values.len(), configs: config_count(&k.provenance) })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CorollaryReport {
    /// `|E_x(T_B) - E_{x,ω_B^x}(T_B)|`.
    pub time_error: f64,
    /// `Σ_{y∈∂B} |P_x(X_{T_B}=y) - P_{x,ω_B^x}(X_{T_B}=y)|`.
    pub exit_law_error: f64,
    pub annealed_time: f64,
    pub kalikow_time: f64,
}

/// Exit time and exit law of the annealed walk against Kalikow's walk.
pub fn verify_kalikow_corollary<S: Scalar>(
    law: &EnvironmentLaw,
    domain: &Domain,
    x: &[i64],
    mode: KalikowMode,
) -> Result<CorollaryReport> {
    let k = kalikow_environment::<S>(law, domain, x, mode)?;
    corollary_report(&k)
}

pub fn corollary_report<S: Scalar>(k: &KalikowEnvironment<S>) -> Result<CorollaryReport> {
    let chain = k.chain()?;
    let n = k.sites.len();
    let solver = chain.factor(&SolvePolicy::default())?;
    let xi = k.base_index();
    let kal_time = solver.solve(vec![S::one(); n])?[xi].clone();
    let row = solver.green_row(xi)?;
    let mut exit = KahanSum::<S>::default();
    for (a, b) in row.boundary().iter().zip(&k.mean_green[n..]) {
        exit.add((a.clone() - b.clone()).abs());
    }
    Ok(CorollaryReport {
        time_error: (kal_time.clone() - k.mean_exit_time.clone()).abs().to_f64(),
        exit_law_error: exit.value().to_f64(),
        annealed_time: k.mean_exit_time.to_f64(),
        kalikow_time: kal_time.to_f64(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DriftMethod {
    /// From the Kalikow vectors `ω_B^x(y,·)`.
    Direct,
    /// From `E[d(y,ω) / Σ_e ω(y,e) f(y,y+e)] / E[1 / Σ_e ω(y,e) f(y,y+e)]`
    /// with `f(y,z) = P_z(T_B ≤ H_y) / P_x(H_y < T_B)`.
    FFormula,
}

/// Drifts of Kalikow's walk at every interior site, by both methods, plus
/// the f-representation of `E(g_B(x,·))` on the interior.
pub struct DriftTable<S> {
    pub sites: Arc<Sites>,
    pub direct: Vec<Vec<S>>,
    pub f_formula: Vec<Vec<S>>,
    pub f_green_error: f64,
}

pub fn kalikow_drift_table<S: Scalar>(
    law: &EnvironmentLaw,
    domain: &Domain,
    x: &[i64],
    mode: KalikowMode,
) -> Result<DriftTable<S>> {
    let xs = [x.to_vec()];
    let st = setup::<S>(law, domain, &xs)?;
    let acc = enumerate(law, &st, mode, true)?;
    let (n, m) = (st.sites.len(), 2 * st.sites.dim());
    let per = &acc.per[0];
    let direct = ratio_vectors(&per.green_omega, &per.green[..n], m).iter().map(local_drift).collect();
    let f_formula = ratio_vectors(&per.f_omega, &per.f_green, m).iter().map(local_drift).collect();
    let f_green_error = per.green[..n]
        .iter()
        .zip(&per.f_green)
        .map(|(a, b)| (a.value() - b.value()).abs().to_f64())
        .fold(0.0, f64::max)
        / acc.weight.value().to_f64();
    Ok(DriftTable { sites: st.sites.clone(), direct, f_formula, f_green_error })
}

/// `d_{B,x}(y)` by the chosen method.
pub fn kalikow_drift<S: Scalar>(
    law: &EnvironmentLaw,
    domain: &Domain,
    x: &[i64],
    y: &[i64],
    method: DriftMethod,
    mode: KalikowMode,
) -> Result<Vec<S>> {
    match method {
        DriftMethod::Direct => {
            let k = kalikow_environment::<S>(law, domain, x, mode)?;
            k.drift(y).ok_or_else(|| Error::invalid("drift site is not in the domain"))
        }
        DriftMethod::FFormula => {
            let t = kalikow_drift_table::<S>(law, domain, x, mode)?;
            let k = t.sites.index_of(y).ok_or_else(|| Error::invalid("drift site is not in the domain"))?;
            Ok(t.f_formula[k].clone())
        }
    }
}

/// Connected lattice animal of `size` sites containing the origin, grown by
/// adding uniformly chosen outer neighbours.
pub fn random_connected_domain(d: usize, size: usize, seed: u64) -> Result<Domain> {
    if size == 0 {
        return Err(Error::invalid("domain size must be >= 1"));
    }
    let mut rng = walk_rng(seed, 0x4b41_4c49);
    let mut set: BTreeSet<Point> = BTreeSet::from([vec![0; d]]);
    while set.len() < size {
        let frontier: BTreeSet<Point> = set
            .iter()
            .flat_map(|p| Direction::all(d).map(move |e| e.shifted(p)))
            .filter(|q| !set.contains(q))
            .collect();
        let pick = rng.random_range(0..frontier.len());
        let q = frontier.into_iter().nth(pick).expect("nonempty frontier");
        set.insert(q);
    }
    make_explicit(d, set)
}

/// `count` random connected domains with sizes uniform in `1..=max_size`.
pub fn sample_domains(d: usize, max_size: usize, count: usize, seed: u64) -> Result<Vec<Domain>> {
    let mut rng = walk_rng(seed, 0x5349_5a45);
    (0..count)
        .map(|i| {
            let size = rng.random_range(1..=max_size);
            random_connected_domain(d, size, env_seed(seed, i as u64))
        })
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DriftBoundReport {
    pub lambda: f64,
    pub epsilon: f64,
    /// `max |d_{B,x}(y)·e1 - λ|` over all sampled triples.
    pub max_deviation: f64,
    /// `ε²/d`.
    pub bound: f64,
    pub margin: f64,
    pub holds: bool,
    pub triples: usize,
    pub domains: usize,
    /// Smallest `d_{B,0}(y)·e1` over the sample: a witness for Kalikow's
    /// coefficient over the sampled family only, not its infimum.
    pub kalikow_witness: f64,
    /// `λ - ε²/d`.
    pub witness_floor: f64,
    pub witness_holds: bool,
    /// Diagnostic: `λ - (2/(3d))ε² + (2/3)ε⁴ <= d·e1 <= λ + (2/(3d))ε² + (1/(3d))ε³`.
    pub sharp_range: (f64, f64),
    pub sharp_violations: usize,
    /// Diagnostic: `λ ± (4/(4-ε²)) ε E|d·e1| + (2ε²/(4-ε²)) λ`.
    pub intermediate_range: (f64, f64),
    pub intermediate_violations: usize,
}

/// Checks `|d_{B,x}(y)·e1 - λ| <= ε²/d` for every `x, y` in each domain.
/// Domains are expected to contain the origin for the witness.
pub fn drift_bound_report(law: &EnvironmentLaw, domains: &[Domain], mode: KalikowMode) -> Result<DriftBoundReport> {
    let cond = check_condition(law, ConditionKind::Qld)?;
    if !cond.holds {
        return Err(Error::invalid(format!(
            "the drift bound needs λ >= ε²: λ = {}, ε² = {}",
            cond.lambda, cond.threshold
        )));
    }
    let d = law.dim() as f64;
    let eps = law.epsilon();
    let lambda = law.lambda();
    let bound = eps * eps / d;
    let mean_abs: f64 = (0..law.support_len())
        .map(|i| law.prob(i) * (law.weights(i)[0] - law.weights(i)[1]).abs())
        .sum();
    let sharp = (
        lambda - 2.0 / (3.0 * d) * eps.powi(2) + 2.0 / 3.0 * eps.powi(4),
        lambda + 2.0 / (3.0 * d) * eps.powi(2) + eps.powi(3) / (3.0 * d),
    );
    let q = 4.0 - eps * eps;
    let spread = 4.0 / q * eps * mean_abs;
    let shift = 2.0 * eps * eps / q * lambda;
    let inter = (lambda - spread + shift, lambda + spread + shift);
    let origin = vec![0i64; law.dim()];
    let per_domain: Vec<Result<(f64, usize, f64, usize, usize)>> = domains
        .par_iter()
        .map(|dom| {
            let sites = dom.materialize(SolvePolicy::default().site_budget)?;
            let xs: Vec<Point> = (0..sites.len()).map(|k| sites.point(k).to_vec()).collect();
            let envs = kalikow_environments::<f64>(law, dom, &xs, mode)?;
            let mut dev: f64 = 0.0;
            let mut witness = f64::INFINITY;
            let (mut triples, mut sv, mut iv) = (0, 0, 0);
            for env in &envs {
                for v in &env.vectors {
                    let de1 = v.weights[0] - v.weights[1];
                    dev = dev.max((de1 - lambda).abs());
                    triples += 1;
                    if de1 < sharp.0 || de1 > sharp.1 {
                        sv += 1;
                    }
                    if de1 < inter.0 || de1 > inter.1 {
                        iv += 1;
                    }
                    if env.base_point == origin {
                        witness = witness.min(de1);
                    }
                }
            }
            Ok((dev, triples, witness, sv, iv))
        })
        .collect();
    let mut max_deviation: f64 = 0.0;
    let mut kalikow_witness = f64::INFINITY;
    let (mut triples, mut sharp_violations, mut intermediate_violations) = (0, 0, 0);
    for r in per_domain {
        let (dev, t, w, sv, iv) = r?;
        max_deviation = max_deviation.max(dev);
        kalikow_witness = kalikow_witness.min(w);
        triples += t;
        sharp_violations += sv;
        intermediate_violations += iv;
    }
    let witness_floor = lambda - bound;
    Ok(DriftBoundReport {
        lambda,
        epsilon: eps,
        max_deviation,
        bound,
        margin: bound - max_deviation,
        holds: max_deviation <= bound + 1e-12,
        triples,
        domains: domains.len(),
        kalikow_witness,
        witness_floor,
        witness_holds: kalikow_witness >= witness_floor - 1e-12,
        sharp_range: sharp,
        sharp_violations,
        intermediate_range: inter,
        intermediate_violations,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TruncationReport {
    pub steps: usize,
    pub nondecreasing: bool,
    pub bounded: bool,
    /// `max_y (E(g_B(x,y)) - g^{(k)}_B(x,y,ω_B^x))` at the last step.
    pub final_gap: f64,
}

/// Runs `g^{(k+1)}(y) = 1_x(y) + Σ_e g^{(k)}(y-e) ω_B^x(y-e,e)` from
/// `g^{(0)} = 1_x` and checks monotonicity and the bound by `E(g_B(x,·))`.
pub fn monotone_truncation<S: Scalar>(k: &KalikowEnvironment<S>, steps: usize) -> Result<TruncationReport> {
    let chain = k.chain()?;
    let n = k.sites.len();
    let xi = k.base_index();
    let tol = if S::is_exact() { 0.0 } else { 1e-12 };
    let unit = |i: usize| if i == xi { S::one() } else { S::zero() };
    let mut g: Vec<S> = (0..k.sites.total_len()).map(unit).collect();
    let (mut nondecreasing, mut bounded) = (true, true);
    let check = |g: &[S]| g.iter().zip(&k.mean_green).all(|(a, b)| (a.clone() - b.clone()).to_f64() <= tol);
    bounded &= check(&g);
    for _ in 0..steps {
        let pushed = chain.push_forward(&g[..n]);
        let next: Vec<S> = pushed.into_iter().enumerate().map(|(i, p)| unit(i) + p).collect();
        nondecreasing &= next.iter().zip(&g).all(|(a, b)| (b.clone() - a.clone()).to_f64() <= tol);
        g = next;
        bounded &= check(&g);
    }
    let final_gap = g
        .iter()
        .zip(&k.mean_green)
        .map(|(a, b)| (b.clone() - a.clone()).to_f64())
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(TruncationReport { steps, nondecreasing, bounded, final_gap })
}
