//! Trajectory simulation and Monte Carlo estimators.
//!
//! Every walk draws its steps from `walk_rng(master_seed, stream_id)` and, in
//! annealed runs, its environment from `env_seed(master_seed, stream_id)`, so
//! results do not depend on how walks are scheduled across threads.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::environment::{EnvironmentLaw, Kernel, Quenched};
use crate::error::{Error, Result};
use crate::lattice::{Domain, Point, Side};
use crate::rng::{env_seed, walk_rng};
use crate::stats::{MCEstimate, ProportionEstimate};

pub const DEFAULT_STEP_CAP: u64 = 10_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryOutcome {
    pub exit_point: Point,
    /// `None` when the step cap was reached first.
    pub exit_side: Option<Side>,
    pub exit_time: u64,
    pub displacement: Vec<i64>,
    pub cap_hit: bool,
}

/// One step from `x`; returns the direction index taken.
#[inline]
pub fn step<K: Kernel + ?Sized, R: Rng + ?Sized>(env: &K, x: &mut [i64], rng: &mut R) -> usize {
    let cum = env.cumulative(x);
    let u: f64 = rng.random();
    let mut e = cum.len() - 1;
    for (i, c) in cum.iter().enumerate() {
        if u < *c {
            e = i;
            break;
        }
    }
    x[e / 2] += if e % 2 == 0 { 1 } else { -1 };
    e
}

/// Runs the quenched walk from `start` until it leaves `domain` or the step
/// cap is reached.
pub fn run_until_exit<K: Kernel + ?Sized, R: Rng + ?Sized>(
    env: &K,
    domain: &Domain,
    start: &[i64],
    rng: &mut R,
    step_cap: u64,
) -> Result<TrajectoryOutcome> {
    if !domain.contains(start) {
        return Err(Error::invalid(format!("start {start:?} is not an interior point of the domain")));
    }
    if step_cap == 0 {
        return Err(Error::invalid("step_cap must be >= 1"));
    }
    let mut x = start.to_vec();
    let mut t = 0u64;
    let mut side = None;
    while t < step_cap {
        step(env, &mut x, rng);
        t += 1;
        if let Some(s) = domain.classify(&x) {
            side = Some(s);
            break;
        }
    }
    let displacement = x.iter().zip(start).map(|(a, b)| a - b).collect();
    Ok(TrajectoryOutcome { exit_point: x, exit_side: side, exit_time: t, displacement, cap_hit: side.is_none() })
}

/// `run_until_exit` with the step stream `(master_seed, stream_id)`.
pub fn run_until_exit_stream<K: Kernel + ?Sized>(
    env: &K,
    domain: &Domain,
    start: &[i64],
    master_seed: u64,
    stream_id: u64,
    step_cap: u64,
) -> Result<TrajectoryOutcome> {
    let mut rng = walk_rng(master_seed, stream_id);
    run_until_exit(env, domain, start, &mut rng, step_cap)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExitDistribution {
    pub sides: BTreeMap<Side, ProportionEstimate>,
    pub cap_fraction: f64,
    pub n_walks: u64,
    pub mean_exit_time: MCEstimate,
}

impl ExitDistribution {
    pub fn side(&self, s: Side) -> ProportionEstimate {
        self.sides.get(&s).copied().unwrap_or_else(|| ProportionEstimate::new(0, self.n_walks))
    }

    fn from_outcomes(outcomes: &[TrajectoryOutcome]) -> Self {
        let n = outcomes.len() as u64;
        let mut counts: BTreeMap<Side, u64> = BTreeMap::new();
        let mut capped = 0u64;
        for o in outcomes {
            match o.exit_side {
                Some(s) => *counts.entry(s).or_default() += 1,
                None => capped += 1,
            }
        }
        let sides = Side::ALL
            .iter()
            .filter_map(|s| counts.get(s).map(|&c| (*s, ProportionEstimate::new(c, n))))
            .collect();
        let times: Vec<f64> = outcomes.iter().map(|o| o.exit_time as f64).collect();
        ExitDistribution {
            sides,
            cap_fraction: capped as f64 / n as f64,
            n_walks: n,
            mean_exit_time: MCEstimate::from_samples(&times),
        }
    }
}

/// Annealed exit law: walk `i` runs in a fresh environment keyed by
/// `env_seed(master_seed, i)`.
pub fn estimate_exit_distribution(
    law: &EnvironmentLaw,
    domain: &Domain,
    start: &[i64],
    n_walks: u64,
    step_cap: u64,
    master_seed: u64,
) -> Result<ExitDistribution> {
    if n_walks == 0 {
        return Err(Error::invalid("n_walks must be >= 1"));
    }
    let outcomes: Result<Vec<_>> = (0..n_walks)
        .into_par_iter()
        .map(|i| {
            let env = Quenched::new(law, env_seed(master_seed, i));
            run_until_exit_stream(&env, domain, start, master_seed, i, step_cap)
        })
        .collect();
    Ok(ExitDistribution::from_outcomes(&outcomes?))
}

/// Exit law in one fixed environment.
pub fn estimate_exit_distribution_quenched<K: Kernel>(
    env: &K,
    domain: &Domain,
    start: &[i64],
    n_walks: u64,
    step_cap: u64,
    master_seed: u64,
) -> Result<ExitDistribution> {
    if n_walks == 0 {
        return Err(Error::invalid("n_walks must be >= 1"));
    }
    let outcomes: Result<Vec<_>> = (0..n_walks)
        .into_par_iter()
        .map(|i| run_until_exit_stream(env, domain, start, master_seed, i, step_cap))
        .collect();
    Ok(ExitDistribution::from_outcomes(&outcomes?))
}

/// Annealed estimate of `X_n·e1 / n` over independent walks.
pub fn estimate_velocity(law: &EnvironmentLaw, n_steps: u64, n_walks: u64, master_seed: u64) -> Result<MCEstimate> {
    if n_steps == 0 || n_walks == 0 {
        return Err(Error::invalid("n_steps and n_walks must be >= 1"));
    }
    let d = law.dim();
    let samples: Vec<f64> = (0..n_walks)
        .into_par_iter()
        .map(|i| {
            let env = Quenched::new(law, env_seed(master_seed, i));
            let mut rng = walk_rng(master_seed, i);
            let mut x = vec![0i64; d];
            for _ in 0..n_steps {
                step(&env, &mut x, &mut rng);
            }
            x[0] as f64 / n_steps as f64
        })
        .collect();
    Ok(MCEstimate::from_samples(&samples))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HittingRow {
    pub n: i64,
    /// `T_n / n` over the walks that reached level `n`.
    pub estimate: MCEstimate,
    pub capped: u64,
    pub cap_fraction: f64,
}

/// Annealed `T_n/n` for each level in `n_list`, with `T_b` the hitting time of
/// the hyperplane `x·e1 = b`. Walks that exhaust the step cap are counted as
/// capped for every level they did not reach.
pub fn estimate_hitting_ratios(
    law: &EnvironmentLaw,
    n_list: &[i64],
    n_walks: u64,
    step_cap: u64,
    master_seed: u64,
) -> Result<Vec<HittingRow>> {
    if n_list.is_empty() || n_list.windows(2).any(|w| w[0] >= w[1]) || n_list[0] < 1 {
        return Err(Error::invalid("n_list must be a nonempty increasing list of positive levels"));
    }
    if n_walks == 0 {
        return Err(Error::invalid("n_walks must be >= 1"));
    }
    let d = law.dim();
    let per_walk: Vec<Vec<Option<u64>>> = (0..n_walks)
        .into_par_iter()
        .map(|i| {
            let env = Quenched::new(law, env_seed(master_seed, i));
            let mut rng = walk_rng(master_seed, i);
            let mut x = vec![0i64; d];
            let mut hits = vec![None; n_list.len()];
            let mut next = 0;
            let mut t = 0u64;
            while next < n_list.len() && t < step_cap {
                step(&env, &mut x, &mut rng);
                t += 1;
                while next < n_list.len() && x[0] == n_list[next] {
                    hits[next] = Some(t);
                    next += 1;
                }
            }
            hits
        })
        .collect();
    Ok(n_list
        .iter()
        .enumerate()
        .map(|(j, &n)| {
            let samples: Vec<f64> = per_walk.iter().filter_map(|h| h[j]).map(|t| t as f64 / n as f64).collect();
            let capped = n_walks - samples.len() as u64;
            let estimate = if samples.is_empty() {
                MCEstimate { mean: f64::NAN, stderr: f64::NAN, n: 0, ci_level: 0.95 }
            } else {
                MCEstimate::from_samples(&samples)
            };
            HittingRow { n, estimate, capped, cap_fraction: capped as f64 / n_walks as f64 }
        })
        .collect())
}

/// Positions along one trajectory; used for visualization and tests.
pub fn trajectory<K: Kernel>(env: &K, start: &[i64], n_steps: u64, master_seed: u64, stream_id: u64) -> Vec<Point> {
    let mut rng = walk_rng(master_seed, stream_id);
    let mut x = start.to_vec();
    let mut out = vec![x.clone()];
    for _ in 0..n_steps {
        step(env, &mut x, &mut rng);
        out.push(x.clone());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::build_two_point_law;
    use crate::lattice::{make_explicit, make_slab, Direction};

    #[test]
    fn single_site_exits_in_one_step() {
        let law = EnvironmentLaw::ssrw(2);
        let env = Quenched::new(&law, 0);
        let dom = make_explicit(2, vec![vec![0, 0]]).unwrap();
        for s in 0..20 {
            let o = run_until_exit_stream(&env, &dom, &[0, 0], 1, s, 100).unwrap();
            assert_eq!(o.exit_time, 1);
            assert!(!o.cap_hit);
        }
    }

    #[test]
    fn rejects_exterior_start() {
        let law = EnvironmentLaw::ssrw(2);
        let env = Quenched::new(&law, 0);
        let dom = make_explicit(2, vec![vec![0, 0]]).unwrap();
        assert!(run_until_exit_stream(&env, &dom, &[1, 0], 1, 0, 10).is_err());
    }

    #[test]
    fn determinism() {
        let (law, _) = build_two_point_law(2, 0.2, 0.04, 0.01, 3).unwrap();
        let env = Quenched::new(&law, 5);
        let dom = make_slab(Direction::e1(), 6, &[0, 0], 20).unwrap();
        let a = run_until_exit_stream(&env, &dom, &[0, 0], 9, 4, 10_000).unwrap();
        let b = run_until_exit_stream(&env, &dom, &[0, 0], 9, 4, 10_000).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ssrw_slab_right_exit() {
        let l = 4;
        let law = EnvironmentLaw::ssrw(2);
        let dom = make_slab(Direction::e1(), l, &[0, 0], 1000).unwrap();
        let dist = estimate_exit_distribution(&law, &dom, &[0, 0], 20_000, DEFAULT_STEP_CAP, 1).unwrap();
        let exact = (l + 1) as f64 / (2 * l + 1) as f64;
        let p = dist.side(Side::Frontal).estimate;
        assert!((p.mean - exact).abs() <= 3.0 * p.stderr, "{p:?} vs {exact}");
        let total: f64 = dist.sides.values().map(|s| s.estimate.mean).sum::<f64>() + dist.cap_fraction;
        assert!((total - 1.0).abs() < 1e-15);
    }

    #[test]
    fn homogeneous_velocity_equals_drift() {
        let law = EnvironmentLaw::homogeneous_drift(2, 0.5, 0.1, 0).unwrap();
        let v = estimate_velocity(&law, 2000, 2000, 3).unwrap();
        assert!((v.mean - law.lambda()).abs() <= 3.0 * v.stderr, "{v:?}");
        let ssrw = estimate_velocity(&EnvironmentLaw::ssrw(3), 1000, 2000, 3).unwrap();
        assert!(ssrw.mean.abs() <= 3.0 * ssrw.stderr);
    }

    #[test]
    fn homogeneous_hitting_ratio() {
        let law = EnvironmentLaw::homogeneous_drift(2, 0.5, 0.1, 0).unwrap();
        let rows = estimate_hitting_ratios(&law, &[100, 1000], 2000, DEFAULT_STEP_CAP, 8).unwrap();
        let r = &rows[1];
        assert_eq!(r.capped, 0);
        assert!((r.estimate.mean - 1.0 / law.lambda()).abs() <= 3.0 * r.estimate.stderr, "{r:?}");
    }

    #[test]
    fn ssrw_hitting_gets_capped() {
        let law = EnvironmentLaw::ssrw(2);
        let rows = estimate_hitting_ratios(&law, &[1, 200], 200, 2000, 8).unwrap();
        assert!(rows[1].cap_fraction > rows[0].cap_fraction);
        assert!(rows[1].cap_fraction > 0.5);
    }

    #[test]
    fn single_walk_proportion() {
        let law = EnvironmentLaw::ssrw(2);
        let dom = make_slab(Direction::e1(), 2, &[0, 0], 50).unwrap();
        let dist = estimate_exit_distribution(&law, &dom, &[0, 0], 1, 10_000, 1).unwrap();
        let p = dist.side(Side::Frontal).estimate;
        assert!(p.mean == 0.0 || p.mean == 1.0);
        assert!(p.stderr.is_finite());
    }
}
