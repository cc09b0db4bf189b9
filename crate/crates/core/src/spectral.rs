//! Killed SSRW Green's functions on products of intervals.
//!
//! In continuous time the coordinates of the rate-one SSRW are independent
//! walks jumping at rate `1/d`, and a product domain kills the walk when any
//! coordinate leaves its interval. Expected visit counts of the discrete walk
//! equal expected occupation times of this process, so
//!
//! ```text
//! g(x, y) = ∫_0^∞ Π_j p_t^{(j)}(x_j, y_j) dt,
//! ```
//!
//! with each one-dimensional killed kernel diagonalized by the sine basis.
//! The time integral is evaluated with the trapezoid rule in `u = log t`,
//! which converges geometrically because the integrand is analytic in a
//! strip around the real `u` axis.

const DEFAULT_STEP: f64 = 0.2;
const U_MIN: f64 = -36.0;

#[derive(Clone, Debug)]
struct AxisTable {
    lo: i64,
    len: usize,
    // q[node * len + j] = p_t(src -> lo + j)
    q: Vec<f64>,
}

/// Quadrature representation of the killed SSRW Green's function from one
/// source on `Π_j [lo_j, hi_j]`.
#[derive(Clone, Debug)]
pub struct ProductGreen {
    axes: Vec<AxisTable>,
    weights: Vec<f64>,
}

impl ProductGreen {
    /// `intervals[j] = (lo_j, hi_j)` inclusive; `source` must be inside.
    pub fn new(intervals: &[(i64, i64)], source: &[i64]) -> Self {
        Self::with_step(intervals, source, DEFAULT_STEP)
    }

    pub fn with_step(intervals: &[(i64, i64)], source: &[i64], h: f64) -> Self {
        let d = intervals.len();
        assert_eq!(d, source.len());
        assert!(
            intervals.iter().zip(source).all(|((a, b), s)| a <= s && s <= b),
            "source outside the product domain"
        );
        let rate = 1.0 / d as f64;
        let slowest: f64 = intervals
            .iter()
            .map(|(a, b)| {
                let m = (b - a + 1) as f64;
                rate * (1.0 - (std::f64::consts::PI / (m + 1.0)).cos())
            })
            .sum();
        let u_max = (60.0 / slowest).ln();
        let n_nodes = ((u_max - U_MIN) / h).ceil() as usize + 1;
        let times: Vec<f64> = (0..n_nodes).map(|k| (U_MIN + k as f64 * h).exp()).collect();
        let weights: Vec<f64> = times.iter().map(|t| h * t).collect();
        let axes = intervals
            .iter()
            .zip(source)
            .map(|(&(lo, hi), &src)| axis_table(lo, hi, src, rate, &times))
            .collect();
        Self { axes, weights }
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn nodes(&self) -> usize {
        self.weights.len()
    }

    /// `g(source, y)`; zero outside the domain.
    pub fn value(&self, y: &[i64]) -> f64 {
        let mut idx = Vec::with_capacity(self.dim());
        for (a, &v) in self.axes.iter().zip(y) {
            let j = v - a.lo;
            if j < 0 || j as usize >= a.len {
                return 0.0;
            }
            idx.push(j as usize);
        }
        let mut g = 0.0;
        for (k, w) in self.weights.iter().enumerate() {
            let mut p = *w;
            for (a, &j) in self.axes.iter().zip(&idx) {
                p *= a.q[k * a.len + j];
            }
            g += p;
        }
        g
    }

    /// Per-node kernel of one axis at absolute coordinate `v`.
    pub fn axis_column(&self, axis: usize, v: i64) -> Vec<f64> {
        let a = &self.axes[axis];
        let j = (v - a.lo) as usize;
        (0..self.nodes()).map(|k| a.q[k * a.len + j]).collect()
    }

    pub fn node_weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn axis_range(&self, axis: usize) -> (i64, i64) {
        let a = &self.axes[axis];
        (a.lo, a.lo + a.len as i64 - 1)
    }
}

fn axis_table(lo: i64, hi: i64, src: i64, rate: f64, times: &[f64]) -> AxisTable {
    let len = (hi - lo + 1) as usize;
    let m1 = (len + 1) as f64;
    let norm = 2.0 / m1;
    let s = (src - lo) as usize;
    // phi_k(s) phi_k(j) for all modes k and positions j
    let mut modes = Vec::with_capacity(len);
    for k in 1..=len {
        let theta = std::f64::consts::PI * k as f64 / m1;
        let rate_k = rate * (1.0 - theta.cos());
        let amp: Vec<f64> = (0..len)
            .map(|j| norm * (theta * (s + 1) as f64).sin() * (theta * (j + 1) as f64).sin())
            .collect();
        modes.push((rate_k, amp));
    }
    let mut q = vec![0.0; times.len() * len];
    for (n, &t) in times.iter().enumerate() {
        let row = &mut q[n * len..(n + 1) * len];
        for (rate_k, amp) in &modes {
            let decay = (-rate_k * t).exp();
            if decay == 0.0 {
                continue;
            }
            for (r, a) in row.iter_mut().zip(amp) {
                *r += a * decay;
            }
        }
    }
    AxisTable { lo, len, q }
}
