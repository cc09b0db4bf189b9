//! Killed Green's functions, Green operators, the p̂ exit identity and the
//! SSRW Green kernels.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::environment::{Quenched, TableEnvironment};
use crate::error::{Error, Result};
use crate::lattice::{make_strip, Direction, Domain, Point, Shape, Side, Sites};
use crate::linalg::{sor_omega, sor_solve, BandLu, BandMatrix, SorParams, SparseRows};
use crate::scalar::{KahanSum, Scalar};
use crate::spectral::ProductGreen;

/// Jump weights of a fixed environment, evaluated in `S`.
pub trait SiteWeights<S>: Sync {
    fn dim(&self) -> usize;
    fn weights_at(&self, site: &[i64]) -> Vec<S>;
}

impl<S: Scalar> SiteWeights<S> for Quenched<'_> {
    fn dim(&self) -> usize {
        self.law.dim()
    }
    fn weights_at(&self, site: &[i64]) -> Vec<S> {
        self.law.prob_vector::<S>(self.index(site)).weights
    }
}

/// Simple symmetric random walk kernel.
#[derive(Clone, Copy, Debug)]
pub struct Uniform(pub usize);

impl<S: Scalar> SiteWeights<S> for Uniform {
    fn dim(&self) -> usize {
        self.0
    }
    fn weights_at(&self, _site: &[i64]) -> Vec<S> {
        vec![S::from_ratio(1, 2 * self.0 as i64); 2 * self.0]
    }
}

/// Weights supplied by a closure.
pub struct FnWeights<F> {
    pub dim: usize,
    pub f: F,
}

impl<S, F> SiteWeights<S> for FnWeights<F>
where
    F: Fn(&[i64]) -> Vec<S> + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn weights_at(&self, site: &[i64]) -> Vec<S> {
        (self.f)(site)
    }
}

impl SiteWeights<f64> for TableEnvironment {
    fn dim(&self) -> usize {
        crate::environment::Kernel::dim(self)
    }
    fn weights_at(&self, site: &[i64]) -> Vec<f64> {
        let c = crate::environment::Kernel::cumulative(self, site);
        let mut prev = 0.0;
        c.iter()
            .map(|x| {
                let w = x - prev;
                prev = *x;
                w
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveMethod {
    Direct,
    Iterative,
}

/// When to use banded LU and when to iterate.
#[derive(Clone, Copy, Debug)]
pub struct SolvePolicy {
    /// Banded LU is used while `n · bw²` stays below this.
    pub direct_flops: f64,
    /// Residual tolerance of the iterative solver.
    pub tol: f64,
    pub max_sweeps: usize,
    pub site_budget: u128,
}

impl Default for SolvePolicy {
    fn default() -> Self {
        Self { direct_flops: 3e9, tol: 1e-13, max_sweeps: 200_000, site_budget: 4_000_000 }
    }
}

/// Kernel of the walk killed on leaving a materialized domain.
pub struct KilledChain<S> {
    sites: Arc<Sites>,
    w: Vec<S>,
}

impl<S: Scalar> KilledChain<S> {
    /// Reads the environment on the interior; rejects zero weights.
    pub fn new(sites: Arc<Sites>, env: &impl SiteWeights<S>) -> Result<Self> {
        let m = 2 * sites.dim();
        let mut w = Vec::with_capacity(sites.len() * m);
        for k in 0..sites.len() {
            let v = env.weights_at(sites.point(k));
            if v.len() != m {
                return Err(Error::invalid("environment dimension does not match the domain"));
            }
            if v.iter().any(|x| *x <= S::zero()) {
                return Err(Error::invalid(format!(
                    "kernel is not elliptic at {:?}: a jump weight is zero",
                    sites.point(k)
                )));
            }
            w.extend(v);
        }
        Ok(Self { sites, w })
    }

    /// Chain from raw weights laid out site by site in direction order.
    pub fn from_weights(sites: Arc<Sites>, w: Vec<S>) -> Result<Self> {
        if w.len() != sites.len() * 2 * sites.dim() {
            return Err(Error::invalid("weight table does not match the domain"));
        }
        if w.iter().any(|x| *x <= S::zero()) {
            return Err(Error::invalid("kernel is not elliptic: a jump weight is zero"));
        }
        Ok(Self { sites, w })
    }

    pub fn sites(&self) -> &Arc<Sites> {
        &self.sites
    }

    #[inline]
    pub fn weight(&self, k: usize, e: usize) -> &S {
        &self.w[k * 2 * self.sites.dim() + e]
    }

    pub fn factor(&self, policy: &SolvePolicy) -> Result<ChainSolver<'_, S>> {
        let n = self.sites.len();
        let bw = self.sites.bandwidth();
        let flops = n as f64 * (bw as f64).powi(2);
        if S::is_exact() || flops <= policy.direct_flops {
            let mut a = BandMatrix::zeros(n, bw);
            let m = 2 * self.sites.dim();
            for k in 0..n {
                a.add(k, k, S::one());
                for e in 0..m {
                    let j = self.sites.neighbor(k, e);
                    if j < n {
                        a.add(k, j, -self.weight(k, e).clone());
                    }
                }
            }
            return Ok(ChainSolver { chain: self, kind: SolverKind::Direct(a.factor()?) });
        }
        let (a, at) = self.sparse();
        let bounds = extents(&self.sites);
        let params = SorParams { omega: sor_omega(&bounds), tol: policy.tol, max_sweeps: policy.max_sweeps };
        Ok(ChainSolver { chain: self, kind: SolverKind::Iterative { a, at, params } })
    }

    fn sparse(&self) -> (SparseRows<S>, SparseRows<S>) {
        let n = self.sites.len();
        let m = 2 * self.sites.dim();
        let mut a = SparseRows { diag: vec![S::one(); n], offsets: vec![0], cols: vec![], vals: vec![] };
        let mut at = a.clone();
        for k in 0..n {
            for e in 0..m {
                let j = self.sites.neighbor(k, e);
                if j < n {
                    a.cols.push(j);
                    a.vals.push(-self.weight(k, e).clone());
                }
                // column k of A: sites z = k - e with weight w_z(e)
                let opp = e ^ 1;
                let z = self.sites.neighbor(k, opp);
                if z < n {
                    at.cols.push(z);
                    at.vals.push(-self.weight(z, e).clone());
                }
            }
            a.offsets.push(a.cols.len());
            at.offsets.push(at.cols.len());
        }
        (a, at)
    }

    /// Pushes interior masses one step: `out[j] += Σ_{k,e: nb(k,e)=j} mass[k] w_k(e)`.
    pub fn push_forward(&self, mass: &[S]) -> Vec<S> {
        let n = self.sites.len();
        let m = 2 * self.sites.dim();
        let mut out = vec![S::zero(); self.sites.total_len()];
        for k in 0..n {
            if mass[k].is_zero() {
                continue;
            }
            for e in 0..m {
                let j = self.sites.neighbor(k, e);
                out[j] = out[j].clone() + mass[k].clone() * self.weight(k, e).clone();
            }
        }
        out
    }

    /// `P_z(H_target < T_B)` for every interior `z` (equal to 1 at the target),
    /// by a direct solve with the target row made absorbing.
    pub fn hitting_probability(&self, target: usize) -> Result<Vec<S>> {
        let n = self.sites.len();
        if target >= n {
            return Err(Error::invalid("hitting target must be an interior site"));
        }
        let m = 2 * self.sites.dim();
        let mut a = BandMatrix::zeros(n, self.sites.bandwidth());
        for k in 0..n {
            a.add(k, k, S::one());
            if k == target {
                continue;
            }
            for e in 0..m {
                let j = self.sites.neighbor(k, e);
                if j < n {
                    a.add(k, j, -self.weight(k, e).clone());
                }
            }
        }
        let mut rhs = vec![S::zero(); n];
        rhs[target] = S::one();
        a.factor()?.solve(&mut rhs);
        Ok(rhs)
    }

    /// One-step probability of leaving into boundary sites accepted by `pick`.
    pub fn exit_rhs(&self, pick: impl Fn(usize) -> bool) -> Vec<S> {
        let n = self.sites.len();
        let m = 2 * self.sites.dim();
        (0..n)
            .map(|k| {
                let mut acc = S::zero();
                for e in 0..m {
                    let j = self.sites.neighbor(k, e);
                    if j >= n && pick(j) {
                        acc = acc + self.weight(k, e).clone();
                    }
                }
                acc
            })
            .collect()
    }
}

fn extents(sites: &Sites) -> Vec<usize> {
    let d = sites.dim();
    let mut lo = vec![i64::MAX; d];
    let mut hi = vec![i64::MIN; d];
    for k in 0..sites.len() {
        for (i, v) in sites.point(k).iter().enumerate() {
            lo[i] = lo[i].min(*v);
            hi[i] = hi[i].max(*v);
        }
    }
    lo.iter().zip(&hi).map(|(a, b)| (b - a + 1) as usize).collect()
}

enum SolverKind<S> {
    Direct(BandLu<S>),
    Iterative { a: SparseRows<S>, at: SparseRows<S>, params: SorParams },
}

/// A factored (or iteration-ready) killed chain.
pub struct ChainSolver<'c, S> {
    chain: &'c KilledChain<S>,
    kind: SolverKind<S>,
}

impl<S: Scalar> ChainSolver<'_, S> {
    pub fn method(&self) -> SolveMethod {
        match self.kind {
            SolverKind::Direct(_) => SolveMethod::Direct,
            SolverKind::Iterative { .. } => SolveMethod::Iterative,
        }
    }

    pub fn chain(&self) -> &KilledChain<S> {
        self.chain
    }

    /// Solves `(I - P_B) u = rhs` on the interior.
    pub fn solve(&self, mut rhs: Vec<S>) -> Result<Vec<S>> {
        match &self.kind {
            SolverKind::Direct(lu) => {
                lu.solve(&mut rhs);
                Ok(rhs)
            }
            SolverKind::Iterative { a, params, .. } => {
                let mut x = rhs.clone();
                sor_solve(a, &rhs, &mut x, *params)?;
                Ok(x)
            }
        }
    }

    /// Solves `(I - P_B)ᵀ u = rhs` on the interior.
    pub fn solve_transpose(&self, mut rhs: Vec<S>) -> Result<Vec<S>> {
        match &self.kind {
            SolverKind::Direct(lu) => {
                lu.solve_transpose(&mut rhs);
                Ok(rhs)
            }
            SolverKind::Iterative { at, params, .. } => {
                let mut x = rhs.clone();
                sor_solve(at, &rhs, &mut x, *params)?;
                Ok(x)
            }
        }
    }

    /// Green row `g_B(x, ·)` over interior and boundary.
    pub fn green_row(&self, source: usize) -> Result<GreenRow<S>> {
        let sites = self.chain.sites.clone();
        let n = sites.len();
        if source >= n {
            return Err(Error::invalid("green row source must be an interior site"));
        }
        let mut e = vec![S::zero(); n];
        e[source] = S::one();
        let interior = self.solve_transpose(e)?;
        let mut values = self.chain.push_forward(&interior);
        for (v, g) in values.iter_mut().zip(interior) {
            *v = g;
        }
        Ok(GreenRow { source: sites.point(source).to_vec(), source_index: source, values, sites, method: self.method() })
    }

    /// `G_B[f](x)` for every interior `x`.
    pub fn apply(&self, f: Vec<S>) -> Result<Vec<S>> {
        self.solve(f)
    }

    /// Probability of leaving through the boundary sites accepted by `pick`,
    /// for every interior start.
    pub fn exit_probability(&self, pick: impl Fn(usize) -> bool) -> Result<Vec<S>> {
        self.solve(self.chain.exit_rhs(pick))
    }
}

/// Green's function `g_B(x, ·)` from one source, on `B ∪ ∂B`.
#[derive(Clone)]
pub struct GreenRow<S> {
    pub source: Point,
    pub source_index: usize,
    /// Interior sites first, then boundary sites, in `Sites` order.
    pub values: Vec<S>,
    pub sites: Arc<Sites>,
    pub method: SolveMethod,
}

impl<S: Scalar> GreenRow<S> {
    pub fn value(&self, y: &[i64]) -> S {
        match self.sites.any_index_of(y) {
            Some(k) => self.values[k].clone(),
            None => S::zero(),
        }
    }

    pub fn interior(&self) -> &[S] {
        &self.values[..self.sites.len()]
    }

    pub fn boundary(&self) -> &[S] {
        &self.values[self.sites.len()..]
    }

    /// Total absorption mass on the boundary.
    pub fn boundary_mass(&self) -> S {
        let mut s = KahanSum::default();
        for v in self.boundary() {
            s.add(v.clone());
        }
        s.value()
    }

    pub fn side_mass(&self, side: Side) -> S {
        let n = self.sites.len();
        let mut s = KahanSum::default();
        for (b, v) in self.boundary().iter().enumerate() {
            if self.sites.side(n + b) == side {
                s.add(v.clone());
            }
        }
        s.value()
    }

    /// `Σ_y g(x,y) f(y)` over the interior.
    pub fn apply(&self, f: impl Fn(&[i64]) -> S) -> S {
        let mut s = KahanSum::default();
        for (k, g) in self.interior().iter().enumerate() {
            s.add(g.clone() * f(self.sites.point(k)));
        }
        s.value()
    }
}

/// Max residual of `g(y) = 1_x(y) + Σ_e g(y-e) ω(y-e, e)` over `B ∪ ∂B`.
pub fn green_recursion_error<S: Scalar>(chain: &KilledChain<S>, row: &GreenRow<S>) -> f64 {
    let pushed = chain.push_forward(row.interior());
    let mut err: f64 = 0.0;
    for (k, (g, p)) in row.values.iter().zip(pushed).enumerate() {
        let one = if k == row.source_index { S::one() } else { S::zero() };
        err = err.max((g.clone() - one - p).abs().to_f64());
    }
    err
}

/// Green row of an environment on a materialized domain.
pub fn green_row<S: Scalar>(
    env: &impl SiteWeights<S>,
    domain: &Domain,
    x: &[i64],
    policy: &SolvePolicy,
) -> Result<GreenRow<S>> {
    let sites = Arc::new(domain.materialize(policy.site_budget)?);
    let k = sites.index_of(x).ok_or_else(|| Error::invalid("green row source is not interior"))?;
    let chain = KilledChain::new(sites, env)?;
    let solver = chain.factor(policy)?;
    solver.green_row(k)
}

/// `G_B[f](x) = Σ_y g_B(x,y) f(y)`, solved as one linear system.
pub fn green_operator_apply<S: Scalar>(
    env: &impl SiteWeights<S>,
    domain: &Domain,
    f: impl Fn(&[i64]) -> S,
    x: &[i64],
    policy: &SolvePolicy,
) -> Result<S> {
    let sites = Arc::new(domain.materialize(policy.site_budget)?);
    let k = sites.index_of(x).ok_or_else(|| Error::invalid("source is not interior"))?;
    let rhs: Vec<S> = (0..sites.len()).map(|j| f(sites.point(j))).collect();
    let chain = KilledChain::new(sites, env)?;
    let u = chain.factor(policy)?.apply(rhs)?;
    Ok(u[k].clone())
}

/// SSRW Green row `g_{0,B}(x, ·)`.
pub fn ssrw_green_killed(domain: &Domain, x: &[i64], policy: &SolvePolicy) -> Result<GreenRow<f64>> {
    green_row(&Uniform(domain.dim()), domain, x, policy)
}

/// Exit solve on the slab `|(y-x)·e1| < L` with absorbing hyperplanes at
/// `x·e1 ± L`, grown transversally until the lateral leakage from `x` is
/// below the tolerance.
pub struct SlabExit<S> {
    pub sites: Arc<Sites>,
    pub chain: KilledChain<S>,
    /// `P_z(exit through x·e1 + L)` for every interior `z`.
    pub right: Vec<S>,
    /// `P_z(exit through x·e1 - L)` for every interior `z`.
    pub left: Vec<S>,
    pub cap: i64,
    pub leakage: f64,
    pub flagged: bool,
    pub method: SolveMethod,
    pub source_index: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct SlabOptions {
    pub leak_tol: f64,
    pub cap0: Option<i64>,
    pub max_cap: i64,
    pub policy: SolvePolicy,
}

impl Default for SlabOptions {
    fn default() -> Self {
        Self { leak_tol: 1e-6, cap0: None, max_cap: 1 << 14, policy: SolvePolicy::default() }
    }
}

pub fn slab_exit<S: Scalar>(
    env: &impl SiteWeights<S>,
    x: &[i64],
    l: i64,
    opts: &SlabOptions,
) -> Result<SlabExit<S>> {
    if l < 1 {
        return Err(Error::invalid(format!("slab half-width L must be >= 1, got {l}")));
    }
    let mut cap = opts.cap0.unwrap_or(4 * l).max(1);
    loop {
        let dom = make_strip(Direction::e1(), -(l - 1), l - 1, x, cap)?;
        let sites = Arc::new(dom.materialize(opts.policy.site_budget)?);
        let chain = KilledChain::new(sites.clone(), env)?;
        let solver = chain.factor(&opts.policy)?;
        let n = sites.len();
        let right = solver.exit_probability(|j| sites.side(j) == Side::Frontal)?;
        let left = solver.exit_probability(|j| sites.side(j) == Side::Back)?;
        let method = solver.method();
        drop(solver);
        let k = sites.index_of(x).expect("center is interior");
        let leakage = (S::one() - right[k].clone() - left[k].clone()).to_f64().max(0.0);
        let done = leakage <= opts.leak_tol;
        if done || 2 * cap > opts.max_cap {
            debug_assert_eq!(right.len(), n);
            return Ok(SlabExit {
                sites,
                chain,
                right,
                left,
                cap,
                leakage,
                flagged: !done,
                method,
                source_index: k,
            });
        }
        cap *= 2;
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PhatResult {
    /// Absorption probability at `x·e1 + L` before `x·e1 - L`.
    pub direct: f64,
    /// `1/2 + G_U[d·e1](x) / (2L)`.
    pub identity: f64,
    pub green_drift: f64,
    pub leakage: f64,
    pub cap: i64,
    pub flagged: bool,
    pub method: SolveMethod,
}

/// p̂ by a column absorption solve and by the Green-operator identity from an
/// independent transposed solve.
pub fn phat<S: Scalar>(env: &impl SiteWeights<S>, x: &[i64], l: i64, opts: &SlabOptions) -> Result<PhatResult> {
    let slab = slab_exit(env, x, l, opts)?;
    let solver = slab.chain.factor(&opts.policy)?;
    let row = solver.green_row(slab.source_index)?;
    let mut g = KahanSum::default();
    for (k, gv) in row.interior().iter().enumerate() {
        let drift = slab.chain.weight(k, 0).clone() - slab.chain.weight(k, 1).clone();
        g.add(gv.clone() * drift);
    }
    let gd = g.value();
    let identity = S::from_ratio(1, 2) + gd.clone() / S::from_ratio(2 * l, 1);
    Ok(PhatResult {
        direct: slab.right[slab.source_index].to_f64(),
        identity: identity.to_f64(),
        green_drift: gd.to_f64(),
        leakage: slab.leakage,
        cap: slab.cap,
        flagged: slab.flagged,
        method: slab.method,
    })
}

/// Optional-stopping check: `E_x(X_{T_B}·e1) - x·e1` against `G_B[d·e1](x)`.
pub fn optional_stopping_gap<S: Scalar>(
    env: &impl SiteWeights<S>,
    domain: &Domain,
    x: &[i64],
    policy: &SolvePolicy,
) -> Result<f64> {
    let sites = Arc::new(domain.materialize(policy.site_budget)?);
    let k = sites.index_of(x).ok_or_else(|| Error::invalid("source is not interior"))?;
    let chain = KilledChain::new(sites.clone(), env)?;
    let solver = chain.factor(policy)?;
    let n = sites.len();
    // E_z(X_T·e1) by a column solve with boundary data y·e1
    let m = 2 * sites.dim();
    let rhs: Vec<S> = (0..n)
        .map(|z| {
            let mut acc = S::zero();
            for e in 0..m {
                let j = sites.neighbor(z, e);
                if j >= n {
                    acc = acc + chain.weight(z, e).clone() * S::from_ratio(sites.point(j)[0], 1);
                }
            }
            acc
        })
        .collect();
    let exit_mean = solver.solve(rhs)?[k].clone();
    let drift: Vec<S> = (0..n).map(|z| chain.weight(z, 0).clone() - chain.weight(z, 1).clone()).collect();
    let gd = solver.solve(drift)?[k].clone();
    Ok((exit_mean - S::from_ratio(x[0], 1) - gd).abs().to_f64())
}

/// Product-of-intervals description of a strip, or `None` for other shapes.
fn strip_intervals(domain: &Domain) -> Option<Vec<(i64, i64)>> {
    match domain.shape() {
        Shape::Strip { .. } => Some(domain.bounds()),
        _ => None,
    }
}

/// `Σ_{y∈U} g_{0,U}(c, y)^{2/(2-α)}` from the domain center `c`.
pub fn green_power_sum(domain: &Domain, alpha: f64, policy: &SolvePolicy) -> Result<f64> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::invalid(format!("alpha must lie in [0,1), got {alpha}")));
    }
    let p = 2.0 / (2.0 - alpha);
    if let (Some(iv), Shape::Strip { dir, .. }) = (strip_intervals(domain), domain.shape()) {
        return Ok(strip_power_sum(&iv, domain.center(), dir.axis, p));
    }
    let row = ssrw_green_killed(domain, domain.center(), policy)?;
    let mut s = KahanSum::default();
    for g in row.interior() {
        s.add(g.powf(p));
    }
    Ok(s.value())
}

/// Same sum evaluated from an explicit Green row (for cross-checks).
pub fn power_sum_of_row(row: &GreenRow<f64>, alpha: f64) -> f64 {
    let p = 2.0 / (2.0 - alpha);
    let mut s = KahanSum::default();
    for g in row.interior() {
        s.add(g.powf(p));
    }
    s.value()
}

/// Power sum over a strip whose transverse intervals are symmetric about the
/// source: the Green row depends on the sorted absolute transverse offsets.
fn strip_power_sum(intervals: &[(i64, i64)], source: &[i64], axis: usize, p: f64) -> f64 {
    let d = intervals.len();
    let pg = ProductGreen::new(intervals, source);
    let trans: Vec<usize> = (0..d).filter(|&i| i != axis).collect();
    let cap = intervals[trans[0]].1 - source[trans[0]];
    debug_assert!(trans.iter().all(|&i| intervals[i].1 - source[i] == cap && source[i] - intervals[i].0 == cap));
    let (tlo, thi) = intervals[axis];
    let nodes = pg.nodes();
    let w = pg.node_weights();
    // weighted longitudinal kernels, one per t
    let long: Vec<Vec<f64>> = (tlo..=thi)
        .map(|t| pg.axis_column(axis, t).iter().zip(w).map(|(q, w)| q * w).collect())
        .collect();
    let trans_cols: Vec<Vec<f64>> = (0..=cap).map(|a| pg.axis_column(trans[0], source[trans[0]] + a)).collect();
    let tuples = sorted_tuples(trans.len(), cap as usize);
    let parts: Vec<f64> = tuples
        .par_iter()
        .map(|(tuple, mult)| {
            let mut prod = vec![1.0; nodes];
            for &a in tuple {
                for (p, q) in prod.iter_mut().zip(&trans_cols[a]) {
                    *p *= q;
                }
            }
            let mut s = KahanSum::default();
            for lk in &long {
                let g: f64 = lk.iter().zip(&prod).map(|(a, b)| a * b).sum();
                s.add(g.max(0.0).powf(p));
            }
            s.value() * *mult as f64
        })
        .collect();
    let mut total = KahanSum::default();
    for v in parts {
        total.add(v);
    }
    total.value()
}

/// Nondecreasing tuples in `[0, cap]^k` with the number of signed
/// permutations each represents.
fn sorted_tuples(k: usize, cap: usize) -> Vec<(Vec<usize>, u64)> {
    fn rec(k: usize, cap: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<(Vec<usize>, u64)>) {
        if cur.len() == k {
            out.push((cur.clone(), multiplicity(cur)));
            return;
        }
        for a in start..=cap {
            cur.push(a);
            rec(k, cap, a, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(k, cap, 0, &mut Vec::new(), &mut out);
    out
}

fn multiplicity(t: &[usize]) -> u64 {
    let fact = |n: usize| (1..=n as u64).product::<u64>();
    let mut m = fact(t.len());
    let mut i = 0;
    while i < t.len() {
        let mut j = i;
        while j < t.len() && t[j] == t[i] {
            j += 1;
        }
        m /= fact(j - i);
        i = j;
    }
    let nonzero = t.iter().filter(|&&a| a > 0).count() as u32;
    m * 2u64.pow(nonzero)
}

/// Full-lattice SSRW Green's function with a truncation error bar.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FullGreen {
    /// Extrapolated value.
    pub value: f64,
    pub at_r: f64,
    pub at_2r: f64,
    /// Size of the extrapolation correction, used as the error bar.
    pub error: f64,
    pub radius: i64,
}

/// `g_{p0}(y, 0)` from killed Green's functions on the l∞-balls of radius
/// `R` and `2R`, extrapolated with the `R^{2-d}` tail.
pub fn ssrw_green_full(d: usize, y: &[i64], radius: i64) -> Result<FullGreen> {
    if d < 3 {
        return Err(Error::invalid("the full-lattice Green's function is infinite for d = 2 (recurrent walk)"));
    }
    if y.len() != d || radius < 1 {
        return Err(Error::invalid("bad point dimension or radius"));
    }
    if y.iter().any(|v| v.abs() >= radius) {
        return Err(Error::invalid("point must lie well inside the ball"));
    }
    let origin = vec![0i64; d];
    let ball = |r: i64| ProductGreen::new(&vec![(-r, r); d], &origin).value(y);
    let at_r = ball(radius);
    let at_2r = ball(2 * radius);
    let factor = 2f64.powi(d as i32 - 2) - 1.0;
    let correction = (at_2r - at_r) / factor;
    Ok(FullGreen { value: at_2r + correction, at_r, at_2r, error: correction.abs(), radius })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::build_two_point_law;
    use crate::lattice::{make_explicit, make_rectangle, make_slab};
    use num_rational::BigRational;

    #[test]
    fn single_site_green() {
        let dom = make_explicit(2, vec![vec![0, 0]]).unwrap();
        let row = ssrw_green_killed(&dom, &[0, 0], &SolvePolicy::default()).unwrap();
        assert_eq!(row.value(&[0, 0]), 1.0);
        for e in Direction::all(2) {
            assert_eq!(row.value(&e.shifted(&[0, 0])), 0.25);
        }
    }

    #[test]
    fn exact_rational_recursion_and_mass() {
        let (law, _) = build_two_point_law(2, 0.2, 0.03, 0.01, 3).unwrap();
        let env = Quenched::new(&law, 17);
        let dom = make_rectangle(&[-1, -1], &[2, 1]).unwrap();
        let sites = Arc::new(dom.materialize(100).unwrap());
        let chain = KilledChain::<BigRational>::new(sites, &env).unwrap();
        let solver = chain.factor(&SolvePolicy::default()).unwrap();
        let row = solver.green_row(0).unwrap();
        assert_eq!(green_recursion_error(&chain, &row), 0.0);
        assert_eq!(row.boundary_mass(), BigRational::from_ratio(1, 1));
    }

    #[test]
    fn slab_exit_time_matches_projection() {
        let l = 6;
        let dom = make_slab(Direction::e1(), l, &[0, 0], 80).unwrap();
        let t = green_operator_apply(&Uniform(2), &dom, |_| 1.0, &[0, 0], &SolvePolicy::default()).unwrap();
        let exact = 2.0 * (l * (l + 1)) as f64;
        assert!((t - exact).abs() / exact < 1e-6, "{t} vs {exact}");
    }

    #[test]
    fn transverse_symmetry() {
        let dom = make_slab(Direction::e1(), 3, &[0, 0, 0], 5).unwrap();
        let row = ssrw_green_killed(&dom, &[0, 0, 0], &SolvePolicy::default()).unwrap();
        for y in [[1, 2, 3], [-2, 1, -4]] {
            let g = row.value(&y);
            assert!((g - row.value(&[y[0], -y[1], y[2]])).abs() < 1e-14);
            assert!((g - row.value(&[y[0], y[1], -y[2]])).abs() < 1e-14);
            assert!((g - row.value(&[y[0], y[2], y[1]])).abs() < 1e-14);
        }
    }

    #[test]
    fn spectral_matches_direct() {
        let dom = make_slab(Direction::e1(), 4, &[0, 0, 0], 4).unwrap();
        let row = ssrw_green_killed(&dom, &[0, 0, 0], &SolvePolicy::default()).unwrap();
        let pg = ProductGreen::new(&dom.bounds(), &[0, 0, 0]);
        let mut worst: f64 = 0.0;
        for k in 0..row.sites.len() {
            let y = row.sites.point(k);
            worst = worst.max((pg.value(y) - row.values[k]).abs());
        }
        assert!(worst < 1e-12, "{worst}");
        for alpha in [0.0, 0.5] {
            let direct = power_sum_of_row(&row, alpha);
            let fast = green_power_sum(&dom, alpha, &SolvePolicy::default()).unwrap();
            assert!((direct - fast).abs() / direct < 1e-11, "{direct} {fast}");
        }
    }

    #[test]
    fn ssrw_phat_is_half() {
        let opts = SlabOptions { leak_tol: 1e-14, ..SlabOptions::default() };
        let r = phat::<f64>(&Uniform(2), &[0, 0], 5, &opts).unwrap();
        assert!((r.direct - 0.5).abs() < 1e-12);
        assert!(r.green_drift.abs() < 1e-15);
        assert!(!r.flagged);
    }

    #[test]
    fn sor_path_agrees_with_direct() {
        let (law, _) = build_two_point_law(2, 0.2, 0.04, 0.02, 9).unwrap();
        let env = Quenched::new(&law, 1);
        let dom = make_slab(Direction::e1(), 5, &[0, 0], 12).unwrap();
        let direct = ssrw_like_exit_time(&env, &dom, &SolvePolicy::default());
        let iter = ssrw_like_exit_time(&env, &dom, &SolvePolicy { direct_flops: 0.0, ..SolvePolicy::default() });
        assert!((direct - iter).abs() < 1e-10 * direct);
    }

    fn ssrw_like_exit_time(env: &Quenched<'_>, dom: &Domain, policy: &SolvePolicy) -> f64 {
        green_operator_apply::<f64>(env, dom, |_| 1.0, &[0, 0], policy).unwrap()
    }

    #[test]
    fn full_green_watson_value() {
        let g = ssrw_green_full(3, &[0, 0, 0], 25).unwrap();
        // Watson's constant for the simple cubic lattice
        let watson = 1.516_386_059_151_978;
        assert!((g.value - watson).abs() < g.error, "{g:?}");
        assert!(ssrw_green_full(2, &[0, 0], 10).is_err());
    }

    #[test]
    fn tuple_multiplicities_cover_the_cube() {
        let cap = 3;
        let total: u64 = sorted_tuples(3, cap).iter().map(|(_, m)| m).sum();
        assert_eq!(total, (2 * cap as u64 + 1).pow(3));
    }
}
