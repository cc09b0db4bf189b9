//! Linear solvers for killed-chain systems `(I - P_B) u = f`.
//!
//! `I - P_B` is a nonsingular M-matrix for a uniformly elliptic kernel on a
//! finite domain, so banded LU without pivoting is stable. Large float
//! systems fall back to successive over-relaxation.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Square matrix stored by diagonals within `±bw` of the main diagonal.
#[derive(Clone, Debug)]
pub struct BandMatrix<S> {
    n: usize,
    bw: usize,
    data: Vec<S>,
}

impl<S: Scalar> BandMatrix<S> {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self { n, bw, data: vec![S::zero(); n * (2 * bw + 1)] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(i.abs_diff(j) <= self.bw);
        i * (2 * self.bw + 1) + (j + self.bw - i)
    }

    pub fn get(&self, i: usize, j: usize) -> S {
        if i.abs_diff(j) > self.bw {
            return S::zero();
        }
        self.data[self.slot(i, j)].clone()
    }

    pub fn add(&mut self, i: usize, j: usize, v: S) {
        let s = self.slot(i, j);
        self.data[s] = self.data[s].clone() + v;
    }

    /// In-place LU factorization without pivoting.
    pub fn factor(mut self) -> Result<BandLu<S>> {
        let (n, bw) = (self.n, self.bw);
        let w = 2 * bw + 1;
        for k in 0..n {
            let pivot = self.data[k * w + bw].clone();
            if pivot.is_zero() {
                return Err(Error::Numerical(format!("zero pivot at row {k}")));
            }
            let last = (k + bw).min(n - 1);
            for i in k + 1..=last {
                let ik = i * w + (k + bw - i);
                if self.data[ik].is_zero() {
                    continue;
                }
                let l = self.data[ik].clone() / pivot.clone();
                self.data[ik] = l.clone();
                for j in k + 1..=last {
                    let kj = k * w + (j + bw - k);
                    if self.data[kj].is_zero() {
                        continue;
                    }
                    let ij = i * w + (j + bw - i);
                    self.data[ij] = self.data[ij].clone() - l.clone() * self.data[kj].clone();
                }
            }
        }
        Ok(BandLu { n, bw, data: self.data })
    }
}

/// Banded LU factors (unit lower triangle and upper triangle, shared storage).
#[derive(Clone, Debug)]
pub struct BandLu<S> {
    n: usize,
    bw: usize,
    data: Vec<S>,
}

impl<S: Scalar> BandLu<S> {
    #[inline]
    fn at(&self, i: usize, j: usize) -> &S {
        &self.data[i * (2 * self.bw + 1) + (j + self.bw - i)]
    }

    /// Solves `A x = b` in place.
    pub fn solve(&self, b: &mut [S]) {
        let (n, bw) = (self.n, self.bw);
        for i in 0..n {
            let mut acc = b[i].clone();
            for j in i.saturating_sub(bw)..i {
                let l = self.at(i, j);
                if !l.is_zero() {
                    acc = acc - l.clone() * b[j].clone();
                }
            }
            b[i] = acc;
        }
        for i in (0..n).rev() {
            let mut acc = b[i].clone();
            for j in i + 1..=(i + bw).min(n - 1) {
                let u = self.at(i, j);
                if !u.is_zero() {
                    acc = acc - u.clone() * b[j].clone();
                }
            }
            b[i] = acc / self.at(i, i).clone();
        }
    }

    /// Solves `Aᵀ x = b` in place.
    pub fn solve_transpose(&self, b: &mut [S]) {
        let (n, bw) = (self.n, self.bw);
        // Uᵀ z = b (forward), column-oriented
        for i in 0..n {
            let zi = b[i].clone() / self.at(i, i).clone();
            b[i] = zi.clone();
            if zi.is_zero() {
                continue;
            }
            for j in i + 1..=(i + bw).min(n - 1) {
                let u = self.at(i, j);
                if !u.is_zero() {
                    b[j] = b[j].clone() - u.clone() * zi.clone();
                }
            }
        }
        // Lᵀ x = z (backward, unit diagonal)
        for i in (0..n).rev() {
            let xi = b[i].clone();
            if xi.is_zero() {
                continue;
            }
            for j in i.saturating_sub(bw)..i {
                let l = self.at(i, j);
                if !l.is_zero() {
                    b[j] = b[j].clone() - l.clone() * xi.clone();
                }
            }
        }
    }
}

/// Compressed sparse rows with the diagonal kept separately.
#[derive(Clone, Debug)]
pub struct SparseRows<S> {
    pub diag: Vec<S>,
    pub offsets: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<S>,
}

impl<S: Scalar> SparseRows<S> {
    pub fn n(&self) -> usize {
        self.diag.len()
    }

    /// Max-norm residual relative to `‖x‖∞ + ‖b‖∞`.
    fn residual_max(&self, x: &[S], b: &[S]) -> f64 {
        let scale = x.iter().chain(b).map(|v| v.abs().to_f64()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let mut r: f64 = 0.0;
        for i in 0..self.n() {
            let mut acc = self.diag[i].clone() * x[i].clone();
            for k in self.offsets[i]..self.offsets[i + 1] {
                acc = acc + self.vals[k].clone() * x[self.cols[k]].clone();
            }
            r = r.max((acc - b[i].clone()).abs().to_f64());
        }
        r / scale
    }
}

/// Successive over-relaxation settings.
#[derive(Clone, Copy, Debug)]
pub struct SorParams {
    pub omega: f64,
    pub tol: f64,
    pub max_sweeps: usize,
}

/// Relaxation factor from the Jacobi radius of the killed SSRW on a box with
/// the given side lengths (an upper bound for elliptic perturbations).
pub fn sor_omega(extents: &[usize]) -> f64 {
    let d = extents.len() as f64;
    let rho: f64 = extents
        .iter()
        .map(|&m| (std::f64::consts::PI / (m as f64 + 1.0)).cos())
        .sum::<f64>()
        / d;
    2.0 / (1.0 + (1.0 - rho * rho).max(0.0).sqrt())
}

/// Solves `A x = b` by SOR; returns the number of sweeps used.
pub fn sor_solve<S: Scalar>(a: &SparseRows<S>, b: &[S], x: &mut [S], p: SorParams) -> Result<usize> {
    let n = a.n();
    let omega = S::from_f64(p.omega);
    let one = S::one();
    let check_every = 10;
    for sweep in 1..=p.max_sweeps {
        for i in 0..n {
            let mut acc = b[i].clone();
            for k in a.offsets[i]..a.offsets[i + 1] {
                acc = acc - a.vals[k].clone() * x[a.cols[k]].clone();
            }
            let gs = acc / a.diag[i].clone();
            x[i] = (one.clone() - omega.clone()) * x[i].clone() + omega.clone() * gs;
        }
        if sweep % check_every == 0 && a.residual_max(x, b) <= p.tol {
            return Ok(sweep);
        }
    }
    let r = a.residual_max(x, b);
    if r <= p.tol {
        return Ok(p.max_sweeps);
    }
    Err(Error::Numerical(format!("SOR did not converge: residual {r:e} after {} sweeps", p.max_sweeps)))
}
