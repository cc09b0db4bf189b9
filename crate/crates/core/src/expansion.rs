//! Low-disorder velocity expansion around the simple symmetric walk:
//! `v = d₀ + ε d₁ + ε² d₂ + …` with `d₂ = Σ_e (Σ_e' C_{e,e'} J_e') e`,
//! `C` the covariance of `ξ(0,·)` and `J_e = g(e,0) - g(0,0)`.

use num_traits::Signed;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::environment::{check_condition, ConditionKind, EnvironmentLaw};
use crate::error::{Error, Result};
use crate::green::ssrw_green_full;
use crate::lattice::Direction;
use crate::rng::env_seed;
use crate::scalar::Scalar;
use crate::stats::{linear_fit, LinearFit};
use crate::walker::estimate_velocity;

/// `C_{e,e'} = Cov(ξ(0,e), ξ(0,e'))`, exact over the support.
pub fn covariance_matrix<S: Scalar>(law: &EnvironmentLaw) -> Vec<Vec<S>> {
    let m = 2 * law.dim();
    let mut mean = vec![S::zero(); m];
    let mut second = vec![vec![S::zero(); m]; m];
    for i in 0..law.support_len() {
        let p = S::from_f64(law.prob(i));
        let xi: Vec<S> = law.xi(i).iter().map(|x| S::from_f64(*x)).collect();
        for a in 0..m {
            mean[a] = mean[a].clone() + p.clone() * xi[a].clone();
            for b in 0..m {
                second[a][b] = second[a][b].clone() + p.clone() * xi[a].clone() * xi[b].clone();
            }
        }
    }
    (0..m)
        .map(|a| (0..m).map(|b| second[a][b].clone() - mean[a].clone() * mean[b].clone()).collect())
        .collect()
}

/// `Σ_e v(e) e` for a vector indexed by direction.
fn direction_sum<S: Scalar>(v: &[S]) -> Vec<S> {
    (0..v.len() / 2).map(|i| v[2 * i].clone() - v[2 * i + 1].clone()).collect()
}

/// `d₁ = Σ_e E(ξ(0,e)) e`.
pub fn first_order<S: Scalar>(law: &EnvironmentLaw) -> Vec<S> {
    let m = 2 * law.dim();
    let mut mean = vec![S::zero(); m];
    for i in 0..law.support_len() {
        let p = S::from_f64(law.prob(i));
        for (a, x) in mean.iter_mut().zip(law.xi(i)) {
            *a = a.clone() + p.clone() * S::from_f64(*x);
        }
    }
    direction_sum(&mean)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExpansionReport {
    pub d0: Vec<f64>,
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
    pub c: Vec<Vec<f64>>,
    pub j: Vec<f64>,
    /// Truncation error bar of each `J_e`.
    pub j_error: f64,
    /// `max_{e,e'} |J_e - J_e'|`.
    pub j_anisotropy: f64,
    pub row_sum_max: f64,
    pub symmetry_max: f64,
    /// Bound on `|d₂|∞` implied by the row sums of `C` and the spread of `J`.
    pub d2_bound: f64,
    pub radius: i64,
    /// `|ε d₁·e1 - λ|` in exact arithmetic.
    pub lambda_gap: f64,
}

/// `d₀, d₁, d₂` for the expansion around the simple symmetric walk, with `J`
/// from the full-lattice Green's function truncated at radii `R` and `2R`.
pub fn expansion_terms(law: &EnvironmentLaw, radius: i64) -> Result<ExpansionReport> {
    let d = law.dim();
    if d < 3 {
        return Err(Error::invalid("J_e is undefined for d = 2: the simple random walk is recurrent"));
    }
    let m = 2 * d;
    let c = covariance_matrix::<f64>(law);
    let origin = vec![0i64; d];
    let g0 = ssrw_green_full(d, &origin, radius)?;
    let dirs: Vec<Direction> = Direction::all(d).collect();
    let ge: Vec<_> = dirs.par_iter().map(|e| ssrw_green_full(d, &e.shifted(&origin), radius)).collect();
    let ge = ge.into_iter().collect::<Result<Vec<_>>>()?;
    let j: Vec<f64> = ge.iter().map(|g| g.value - g0.value).collect();
    let j_error = ge.iter().map(|g| g.error).fold(0.0, f64::max) + g0.error;
    let j_anisotropy = j.iter().map(|a| j.iter().map(|b| (a - b).abs()).fold(0.0, f64::max)).fold(0.0, f64::max);
    let cj: Vec<f64> = (0..m).map(|a| (0..m).map(|b| c[a][b] * j[b]).sum()).collect();
    let d2 = direction_sum(&cj);
    let row_sum_max = c.iter().map(|r| r.iter().sum::<f64>().abs()).fold(0.0, f64::max);
    let symmetry_max = (0..m)
        .flat_map(|a| (0..m).map(move |b| (a, b)))
        .map(|(a, b)| (c[a][b] - c[b][a]).abs())
        .fold(0.0, f64::max);
    let c_max = c.iter().flatten().map(|x| x.abs()).fold(0.0, f64::max);
    let j_max = j.iter().map(|x| x.abs()).fold(0.0, f64::max);
    let abs_sum: f64 = (0..m).map(|a| (0..m).map(|b| (c[a][b] * j[b]).abs()).sum::<f64>()).fold(0.0, f64::max);
    let d2_bound =
        2.0 * (row_sum_max * j_max + m as f64 * c_max * j_anisotropy) + 4.0 * m as f64 * f64::EPSILON * abs_sum;
    let exact_d1 = first_order::<num_rational::BigRational>(law);
    let eps = <num_rational::BigRational as Scalar>::from_f64(law.epsilon());
    let lambda_gap = (eps * exact_d1[0].clone() - law.lambda_in::<num_rational::BigRational>()).abs().to_f64();
    Ok(ExpansionReport {
        d0: vec![0.0; d],
        d1: first_order::<f64>(law),
        d2,
        c,
        j,
        j_error,
        j_anisotropy,
        row_sum_max,
        symmetry_max,
        d2_bound,
        radius,
        lambda_gap,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridRow {
    pub epsilon: f64,
    pub lambda: f64,
    pub velocity: f64,
    pub residual: f64,
    pub stderr: f64,
    /// `|v̂ - λ| <= ε²/d + 3σ`.
    pub within_qld: bool,
    /// `|v̂ - λ| <= ε/(2d) + 3σ`.
    pub within_ceiling: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SimulationTable {
    pub rows: Vec<GridRow>,
    /// Fit of `log|v̂ - λ|` against `log ε` over residuals beyond `4σ`.
    pub fit: Option<LinearFit>,
    /// No residual is distinguishable from zero: the fit is censored, which
    /// is consistent with the expansion.
    pub censored: bool,
}

/// Simulated velocities against `λ(ε)` over an ε-grid.
pub fn expansion_vs_simulation(
    family: impl Fn(f64) -> Result<EnvironmentLaw> + Sync,
    condition: Option<ConditionKind>,
    grid: &[f64],
    n_steps: u64,
    n_walks: u64,
    seed: u64,
) -> Result<SimulationTable> {
    if grid.iter().any(|e| !(*e > 0.0 && *e <= 0.4)) {
        return Err(Error::invalid("the ε-grid must lie in (0, 0.4]"));
    }
    let rows: Result<Vec<GridRow>> = grid
        .par_iter()
        .enumerate()
        .map(|(i, &eps)| {
            let law = family(eps)?;
            if let Some(kind) = condition {
                let rep = check_condition(&law, kind)?;
                if !rep.holds {
                    return Err(Error::invalid(format!("law at ε = {eps} does not satisfy its declared condition")));
                }
            }
            let v = estimate_velocity(&law, n_steps, n_walks, env_seed(seed, i as u64))?;
            let lambda = law.lambda();
            let d = law.dim() as f64;
            let residual = v.mean - lambda;
            Ok(GridRow {
                epsilon: eps,
                lambda,
                velocity: v.mean,
                residual,
                stderr: v.stderr,
                within_qld: residual.abs() <= eps * eps / d + 3.0 * v.stderr,
                within_ceiling: residual.abs() <= eps / (2.0 * d) + 3.0 * v.stderr,
            })
        })
        .collect();
    let rows = rows?;
    let resolved: Vec<&GridRow> = rows.iter().filter(|r| r.residual.abs() > 4.0 * r.stderr).collect();
    let xs: Vec<f64> = resolved.iter().map(|r| r.epsilon.ln()).collect();
    let ys: Vec<f64> = resolved.iter().map(|r| r.residual.abs().ln()).collect();
    let fit = linear_fit(&xs, &ys);
    Ok(SimulationTable { censored: fit.is_none(), rows, fit })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{build_two_point_law, LawSpec, SupportEntry};
    use num_rational::BigRational;

    fn flip(d: usize, a: f64) -> EnvironmentLaw {
        let mut x = vec![0.0; 2 * d];
        x[0] = a;
        x[1] = -a;
        let y: Vec<f64> = x.iter().map(|v| -v).collect();
        EnvironmentLaw::new(LawSpec {
            d,
            epsilon: 0.2,
            support: vec![SupportEntry { xi: x, prob: 0.5 }, SupportEntry { xi: y, prob: 0.5 }],
            master_seed: 0,
        })
        .unwrap()
    }

    #[test]
    fn covariance_of_a_flip() {
        let a = 0.05;
        let c = covariance_matrix::<BigRational>(&flip(3, a));
        let a2 = <BigRational as Scalar>::from_f64(a);
        assert_eq!(c[0][0], a2.clone() * a2.clone());
        assert_eq!(c[0][1], -(a2.clone() * a2));
        for row in &c {
            assert_eq!(row.iter().cloned().fold(BigRational::from_ratio(0, 1), |s, x| s + x), BigRational::from_ratio(0, 1));
        }
    }

    #[test]
    fn point_mass_has_zero_covariance() {
        let law = EnvironmentLaw::homogeneous_drift(3, 0.2, 0.05, 0).unwrap();
        let c = covariance_matrix::<f64>(&law);
        assert!(c.iter().flatten().all(|x| *x == 0.0));
        let r = expansion_terms(&law, 8).unwrap();
        assert!(r.d2.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn second_order_vanishes_for_zero_sum_laws() {
        let (law, _) = build_two_point_law(3, 0.2, 0.03, 0.02, 1).unwrap();
        let r = expansion_terms(&law, 12).unwrap();
        assert!(r.row_sum_max < 1e-14 && r.symmetry_max < 1e-14);
        assert!(r.j_anisotropy <= r.j_error.max(1e-13));
        assert!(r.d2.iter().all(|x| x.abs() <= r.d2_bound && x.abs() < 1e-6), "{r:?}");
        assert_eq!(r.lambda_gap, 0.0);
        assert!(r.j[0] < 0.0);
    }

    #[test]
    fn planar_expansion_rejected() {
        let (law, _) = build_two_point_law(2, 0.2, 0.04, 0.0, 1).unwrap();
        assert!(expansion_terms(&law, 8).is_err());
    }

    #[test]
    fn homogeneous_family_is_censored() {
        let fam = |eps: f64| EnvironmentLaw::homogeneous_drift(2, eps, 0.1, 0);
        let t = expansion_vs_simulation(fam, None, &[0.1, 0.2, 0.3], 400, 400, 2).unwrap();
        for r in &t.rows {
            assert!(r.residual.abs() <= 3.0 * r.stderr + 1e-12 || r.stderr == 0.0, "{r:?}");
            assert!(r.within_ceiling);
        }
    }
}
