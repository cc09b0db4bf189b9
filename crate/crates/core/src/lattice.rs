//! Integer lattice geometry: directions, slabs, boxes and their boundary
//! decomposition, middle-frontal parts, and the level-k cell partition.

use std::collections::{HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A lattice point; the length of the vector is the dimension.
pub type Point = Vec<i64>;

/// One of the 2d unit vectors. `axis` is zero-based internally.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Direction {
    pub axis: usize,
    pub positive: bool,
}

impl Direction {
    pub const fn new(axis: usize, positive: bool) -> Self {
        Self { axis, positive }
    }

    pub const fn e1() -> Self {
        Self::new(0, true)
    }

    /// Position in the canonical ordering `e1, -e1, e2, -e2, ...`.
    pub fn index(self) -> usize {
        2 * self.axis + usize::from(!self.positive)
    }

    pub fn from_index(i: usize) -> Self {
        Self::new(i / 2, i % 2 == 0)
    }

    pub fn sign(self) -> i64 {
        if self.positive {
            1
        } else {
            -1
        }
    }

    pub fn opposite(self) -> Self {
        Self::new(self.axis, !self.positive)
    }

    pub fn all(dim: usize) -> impl Iterator<Item = Direction> {
        (0..2 * dim).map(Direction::from_index)
    }

    /// Inner product `e · v`.
    pub fn dot(self, v: &[i64]) -> i64 {
        self.sign() * v[self.axis]
    }

    pub fn step(self, x: &mut [i64]) {
        x[self.axis] += self.sign();
    }

    pub fn shifted(self, x: &[i64]) -> Point {
        let mut y = x.to_vec();
        self.step(&mut y);
        y
    }
}

/// Boundary side labels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    Frontal,
    Back,
    Lateral,
    Other,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Frontal, Side::Back, Side::Lateral, Side::Other];

    pub fn name(self) -> &'static str {
        match self {
            Side::Frontal => "frontal",
            Side::Back => "back",
            Side::Lateral => "lateral",
            Side::Other => "other",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Shape {
    /// Interior: `lo <= (y-c)·l <= hi`, transverse offsets within `±cap`.
    Strip { dir: Direction, lo: i64, hi: i64, cap: i64 },
    /// Interior: `-M/2 < (y-c)·e1 < M`, `|(y-c)·e_i| < 25 M^3` for `i >= 2`.
    Box { m: i64, lateral: i64 },
    Explicit { sites: HashSet<Point> },
}

/// A finite subset of Z^d with boundary-side classification.
#[derive(Clone, Debug, PartialEq)]
pub struct Domain {
    dim: usize,
    center: Point,
    shape: Shape,
}

fn check_dim(dim: usize) -> Result<()> {
    if dim < 2 {
        return Err(Error::invalid(format!("dimension must be at least 2, got {dim}")));
    }
    Ok(())
}

/// Slab `U_{l,M}(x)`: interior `-M <= (y-x)·l < M`, transversally cut at `cap`.
pub fn make_slab(dir: Direction, m: i64, center: &[i64], cap: i64) -> Result<Domain> {
    if m < 1 {
        return Err(Error::invalid(format!("slab half-width must be >= 1, got {m}")));
    }
    make_strip(dir, -m, m - 1, center, cap)
}

/// General strip `lo <= (y-x)·l <= hi` with transverse cap.
pub fn make_strip(dir: Direction, lo: i64, hi: i64, center: &[i64], cap: i64) -> Result<Domain> {
    check_dim(center.len())?;
    if dir.axis >= center.len() {
        return Err(Error::invalid("direction axis outside the lattice dimension"));
    }
    if lo > hi {
        return Err(Error::invalid(format!("empty strip: lo={lo} > hi={hi}")));
    }
    if cap < 1 {
        return Err(Error::invalid(format!("transverse cap must be >= 1, got {cap}")));
    }
    Ok(Domain { dim: center.len(), center: center.to_vec(), shape: Shape::Strip { dir, lo, hi, cap } })
}

/// Box `B_M(x)` aligned with e1. Fails if its site count exceeds `site_budget`.
pub fn make_box(m: i64, center: &[i64], site_budget: u128) -> Result<Domain> {
    let lateral = m
        .checked_pow(3)
        .and_then(|c| c.checked_mul(25))
        .ok_or_else(|| Error::budget(format!("box scale M={m} overflows the lateral extent")))?;
    make_box_with_lateral(m, lateral, center, site_budget)
}

/// `B_M(x)` with the transverse half-width `25 M^3` replaced by `lateral`.
pub fn make_box_with_lateral(m: i64, lateral: i64, center: &[i64], site_budget: u128) -> Result<Domain> {
    check_dim(center.len())?;
    if m < 1 {
        return Err(Error::invalid(format!("box scale must be >= 1, got {m}")));
    }
    if lateral < 1 {
        return Err(Error::invalid(format!("box lateral extent must be >= 1, got {lateral}")));
    }
    let dom = Domain { dim: center.len(), center: center.to_vec(), shape: Shape::Box { m, lateral } };
    let count = dom.site_count();
    if count > site_budget {
        return Err(Error::budget(format!(
            "box B_M with M={m}, d={} has {count} sites, above the site budget {site_budget}",
            center.len()
        )));
    }
    Ok(dom)
}

/// Domain given by an explicit finite site set (absolute coordinates).
pub fn make_explicit(dim: usize, sites: impl IntoIterator<Item = Point>) -> Result<Domain> {
    check_dim(dim)?;
    let sites: HashSet<Point> = sites.into_iter().collect();
    if sites.is_empty() {
        return Err(Error::invalid("explicit domain must be nonempty"));
    }
    if sites.iter().any(|p| p.len() != dim) {
        return Err(Error::invalid("explicit domain point with wrong dimension"));
    }
    Ok(Domain { dim, center: vec![0; dim], shape: Shape::Explicit { sites } })
}

/// Axis-aligned rectangle `Π [lo_i, hi_i]` as an explicit domain.
pub fn make_rectangle(lo: &[i64], hi: &[i64]) -> Result<Domain> {
    let dim = lo.len();
    let mut pts = Vec::new();
    let mut cur = lo.to_vec();
    if lo.iter().zip(hi).any(|(a, b)| a > b) {
        return Err(Error::invalid("empty rectangle"));
    }
    loop {
        pts.push(cur.clone());
        let mut i = 0;
        loop {
            if i == dim {
                return make_explicit(dim, pts);
            }
            if cur[i] < hi[i] {
                cur[i] += 1;
                break;
            }
            cur[i] = lo[i];
            i += 1;
        }
    }
}

impl Domain {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn center(&self) -> &[i64] {
        &self.center
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    /// Returns `None` for interior points and the side label otherwise.
    #[inline]
    pub fn classify(&self, y: &[i64]) -> Option<Side> {
        let c = &self.center;
        match &self.shape {
            Shape::Strip { dir, lo, hi, cap } => {
                let t = dir.sign() * (y[dir.axis] - c[dir.axis]);
                if t > *hi {
                    return Some(Side::Frontal);
                }
                if t < *lo {
                    return Some(Side::Back);
                }
                for i in 0..self.dim {
                    if i != dir.axis && (y[i] - c[i]).abs() > *cap {
                        return Some(Side::Lateral);
                    }
                }
                None
            }
            Shape::Box { m, lateral } => {
                let t = y[0] - c[0];
                if t >= *m {
                    return Some(Side::Frontal);
                }
                if 2 * t <= -*m {
                    return Some(Side::Back);
                }
                for i in 1..self.dim {
                    if (y[i] - c[i]).abs() >= *lateral {
                        return Some(Side::Lateral);
                    }
                }
                None
            }
            Shape::Explicit { sites } => {
                if sites.contains(y) {
                    None
                } else {
                    Some(Side::Other)
                }
            }
        }
    }

    #[inline]
    pub fn contains(&self, y: &[i64]) -> bool {
        self.classify(y).is_none()
    }

    /// Inclusive per-axis ranges of interior coordinates (absolute).
    pub fn bounds(&self) -> Vec<(i64, i64)> {
        let c = &self.center;
        match &self.shape {
            Shape::Strip { dir, lo, hi, cap } => (0..self.dim)
                .map(|i| {
                    if i == dir.axis {
                        if dir.positive {
                            (c[i] + lo, c[i] + hi)
                        } else {
                            (c[i] - hi, c[i] - lo)
                        }
                    } else {
                        (c[i] - cap, c[i] + cap)
                    }
                })
                .collect(),
            Shape::Box { m, lateral } => (0..self.dim)
                .map(|i| {
                    if i == 0 {
                        // smallest t with 2t > -M
                        (c[0] + (-m).div_euclid(2) + 1, c[0] + m - 1)
                    } else {
                        (c[i] - lateral + 1, c[i] + lateral - 1)
                    }
                })
                .collect(),
            Shape::Explicit { sites } => {
                let mut b = vec![(i64::MAX, i64::MIN); self.dim];
                for p in sites {
                    for (i, v) in p.iter().enumerate() {
                        b[i].0 = b[i].0.min(*v);
                        b[i].1 = b[i].1.max(*v);
                    }
                }
                b
            }
        }
    }

    /// Number of interior sites.
    pub fn site_count(&self) -> u128 {
        match &self.shape {
            Shape::Explicit { sites } => sites.len() as u128,
            _ => self.bounds().iter().map(|(a, b)| (b - a + 1) as u128).product(),
        }
    }

    /// True if the interior is nearest-neighbour connected.
    pub fn is_connected(&self) -> bool {
        match &self.shape {
            Shape::Explicit { sites } => {
                let start = match sites.iter().next() {
                    Some(p) => p.clone(),
                    None => return false,
                };
                let mut seen: HashSet<Point> = HashSet::from([start.clone()]);
                let mut queue = VecDeque::from([start]);
                while let Some(p) = queue.pop_front() {
                    for e in Direction::all(self.dim) {
                        let q = e.shifted(&p);
                        if sites.contains(&q) && seen.insert(q.clone()) {
                            queue.push_back(q);
                        }
                    }
                }
                seen.len() == sites.len()
            }
            _ => true,
        }
    }

    /// Materialize the interior, its outer boundary and the neighbour table.
    pub fn materialize(&self, site_budget: u128) -> Result<Sites> {
        let count = self.site_count();
        if count > site_budget {
            return Err(Error::budget(format!(
                "domain has {count} interior sites, above the site budget {site_budget}"
            )));
        }
        Sites::build(self)
    }
}

enum SiteIndex {
    Grid { lo: Vec<i64>, hi: Vec<i64>, stride: Vec<usize> },
    Map(HashMap<Point, usize>),
}

/// Materialized domain: interior sites `0..n`, boundary sites indexed after
/// them, neighbour table in direction order.
pub struct Sites {
    dim: usize,
    n: usize,
    coords: Vec<i64>,
    boundary_coords: Vec<i64>,
    boundary_side: Vec<Side>,
    neighbors: Vec<usize>,
    index: SiteIndex,
    bandwidth: usize,
}

impl Sites {
    fn build(domain: &Domain) -> Result<Self> {
        let dim = domain.dim;
        let bounds = domain.bounds();
        // shortest axes vary fastest, which keeps the bandwidth small
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by_key(|&i| (bounds[i].1 - bounds[i].0, i));

        let (coords, index) = match &domain.shape {
            Shape::Explicit { sites } => {
                let mut pts: Vec<&Point> = sites.iter().collect();
                pts.sort_by(|a, b| {
                    order.iter().rev().map(|&i| a[i]).cmp(order.iter().rev().map(|&i| b[i]))
                });
                let mut map = HashMap::with_capacity(pts.len());
                let mut coords = Vec::with_capacity(pts.len() * dim);
                for (k, p) in pts.into_iter().enumerate() {
                    map.insert(p.clone(), k);
                    coords.extend_from_slice(p);
                }
                (coords, SiteIndex::Map(map))
            }
            _ => {
                let lo: Vec<i64> = bounds.iter().map(|b| b.0).collect();
                let hi: Vec<i64> = bounds.iter().map(|b| b.1).collect();
                let mut stride = vec![0usize; dim];
                let mut s = 1usize;
                for &i in &order {
                    stride[i] = s;
                    s *= (hi[i] - lo[i] + 1) as usize;
                }
                let n = s;
                let mut coords = vec![0i64; n * dim];
                for k in 0..n {
                    for i in 0..dim {
                        let ext = (hi[i] - lo[i] + 1) as usize;
                        coords[k * dim + i] = lo[i] + ((k / stride[i]) % ext) as i64;
                    }
                }
                (coords, SiteIndex::Grid { lo, hi, stride })
            }
        };
        let n = coords.len() / dim;
        let mut sites = Sites {
            dim,
            n,
            coords,
            boundary_coords: Vec::new(),
            boundary_side: Vec::new(),
            neighbors: vec![0; n * 2 * dim],
            index,
            bandwidth: 0,
        };
        let mut bmap: HashMap<Point, usize> = HashMap::new();
        let mut y = vec![0i64; dim];
        let mut bw = 0usize;
        for k in 0..n {
            for e in Direction::all(dim) {
                y.copy_from_slice(&sites.coords[k * dim..(k + 1) * dim]);
                e.step(&mut y);
                let slot = match sites.index_of(&y) {
                    Some(j) => {
                        bw = bw.max(j.abs_diff(k));
                        j
                    }
                    None => {
                        let next = bmap.len();
                        let b = *bmap.entry(y.clone()).or_insert_with(|| {
                            sites.boundary_coords.extend_from_slice(&y);
                            sites.boundary_side.push(domain.classify(&y).unwrap_or(Side::Other));
                            next
                        });
                        n + b
                    }
                };
                sites.neighbors[k * 2 * dim + e.index()] = slot;
            }
        }
        sites.bandwidth = bw;
        Ok(sites)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of interior sites.
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn boundary_len(&self) -> usize {
        self.boundary_side.len()
    }

    /// Total number of indexed sites (interior followed by boundary).
    pub fn total_len(&self) -> usize {
        self.n + self.boundary_len()
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    /// Coordinates of site `k` (interior if `k < len()`, boundary otherwise).
    pub fn point(&self, k: usize) -> &[i64] {
        if k < self.n {
            &self.coords[k * self.dim..(k + 1) * self.dim]
        } else {
            let b = k - self.n;
            &self.boundary_coords[b * self.dim..(b + 1) * self.dim]
        }
    }

    /// Side label of boundary site `k` (`k >= len()`).
    pub fn side(&self, k: usize) -> Side {
        self.boundary_side[k - self.n]
    }

    /// Neighbour of interior site `k` in direction index `e`.
    #[inline]
    pub fn neighbor(&self, k: usize, e: usize) -> usize {
        self.neighbors[k * 2 * self.dim + e]
    }

    /// Interior index of a point.
    pub fn index_of(&self, y: &[i64]) -> Option<usize> {
        match &self.index {
            SiteIndex::Grid { lo, hi, stride } => {
                let mut k = 0usize;
                for i in 0..self.dim {
                    if y[i] < lo[i] || y[i] > hi[i] {
                        return None;
                    }
                    k += (y[i] - lo[i]) as usize * stride[i];
                }
                Some(k)
            }
            SiteIndex::Map(m) => m.get(y).copied(),
        }
    }

    /// Index among all sites (interior or boundary).
    pub fn any_index_of(&self, y: &[i64]) -> Option<usize> {
        if let Some(k) = self.index_of(y) {
            return Some(k);
        }
        (0..self.boundary_len()).map(|b| self.n + b).find(|&k| self.point(k) == y)
    }
}

/// Middle-frontal part `B*_M(x)`: `M/2 <= (y-x)·e1 < M`, `|(y-x)·e_i| < M^3`.
#[derive(Clone, Debug, PartialEq)]
pub struct MiddleFrontal {
    pub m: i64,
    pub center: Point,
}

pub fn middle_frontal(m: i64, center: &[i64]) -> Result<MiddleFrontal> {
    check_dim(center.len())?;
    if m < 2 || m % 2 != 0 {
        return Err(Error::invalid(format!("middle-frontal part needs an even M >= 2, got {m}")));
    }
    Ok(MiddleFrontal { m, center: center.to_vec() })
}

impl MiddleFrontal {
    pub fn lateral(&self) -> i64 {
        self.m.pow(3)
    }

    pub fn contains(&self, y: &[i64]) -> bool {
        let t = y[0] - self.center[0];
        2 * t >= self.m
            && t < self.m
            && (1..self.center.len()).all(|i| (y[i] - self.center[i]).abs() < self.lateral())
    }

    /// Membership in the back side `∂₋B*_M`: `(y-x)·e1 = M/2`.
    pub fn in_back(&self, y: &[i64]) -> bool {
        self.contains(y) && 2 * (y[0] - self.center[0]) == self.m
    }

    pub fn site_count(&self) -> u128 {
        let d = self.center.len() as u32;
        (self.m as u128 / 2) * ((2 * self.lateral() - 1) as u128).pow(d - 1)
    }
}

/// Cell index of `x` in the level-k partition with longitudinal pitch `N'_k`
/// and transverse pitch `2 N_k^3 - 1`.
pub fn partition_index(n_prime: i64, n: i64, x: &[i64]) -> Result<Vec<i64>> {
    if n_prime < 1 || n < 1 {
        return Err(Error::invalid("partition pitches must be >= 1"));
    }
    let pitch = n
        .checked_pow(3)
        .map(|c| 2 * c - 1)
        .ok_or_else(|| Error::budget("transverse pitch overflows i64"))?;
    Ok(x.iter()
        .enumerate()
        .map(|(i, &v)| if i == 0 { v.div_euclid(n_prime) } else { v.div_euclid(pitch) })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slab_classification() {
        let s = make_slab(Direction::e1(), 2, &[0, 0], 3).unwrap();
        assert_eq!(s.classify(&[1, 0]), None);
        assert_eq!(s.classify(&[2, 0]), Some(Side::Frontal));
        assert_eq!(s.classify(&[-3, 0]), Some(Side::Back));
        assert_eq!(s.classify(&[0, 4]), Some(Side::Lateral));
        assert_eq!(s.site_count(), 28);
        let s1 = make_slab(Direction::e1(), 1, &[0, 0], 1).unwrap();
        assert_eq!(s1.bounds()[0], (-1, 0));
    }

    #[test]
    fn slab_rejects_bad_input() {
        assert!(make_slab(Direction::e1(), 0, &[0, 0], 3).is_err());
        assert!(make_slab(Direction::e1(), 2, &[0, 0], 0).is_err());
        assert!(make_slab(Direction::e1(), 2, &[0], 1).is_err());
    }

    #[test]
    fn negative_direction_slab() {
        let s = make_slab(Direction::new(0, false), 2, &[0, 0], 3).unwrap();
        assert_eq!(s.classify(&[-2, 0]), Some(Side::Frontal));
        assert_eq!(s.classify(&[3, 0]), Some(Side::Back));
        assert_eq!(s.classify(&[2, 0]), None);
    }

    #[test]
    fn box_classification() {
        let b = make_box(2, &[0, 0], u128::MAX).unwrap();
        assert_eq!(b.classify(&[2, 0]), Some(Side::Frontal));
        assert_eq!(b.classify(&[0, 200]), Some(Side::Lateral));
        assert_eq!(b.classify(&[-1, 0]), Some(Side::Back));
        assert_eq!(b.classify(&[0, 199]), None);
        // (3M/2 - 1)(50 M^3 - 1)
        assert_eq!(b.site_count(), 2 * 399);
        assert!(matches!(make_box(2, &[0, 0], 10), Err(Error::Budget(_))));
    }

    #[test]
    fn corner_precedence_frontal_first() {
        let b = make_box(2, &[0, 0], u128::MAX).unwrap();
        assert_eq!(b.classify(&[2, 200]), Some(Side::Frontal));
        assert_eq!(b.classify(&[-1, 200]), Some(Side::Back));
    }

    #[test]
    fn middle_frontal_examples() {
        let mf = middle_frontal(4, &[0, 0]).unwrap();
        assert!(mf.contains(&[2, 0]) && mf.in_back(&[2, 0]));
        assert!(!mf.contains(&[2, 64]));
        assert!(!mf.contains(&[4, 0]));
        assert!(middle_frontal(5, &[0, 0]).is_err());
    }

    #[test]
    fn partition_examples() {
        assert_eq!(partition_index(5, 2, &[7, 0]).unwrap(), vec![1, 0]);
        assert_eq!(partition_index(5, 2, &[-1, 0]).unwrap(), vec![-1, 0]);
        assert_eq!(partition_index(5, 2, &[0, 15]).unwrap(), vec![0, 1]);
        assert_eq!(partition_index(5, 2, &[0, 14]).unwrap(), vec![0, 0]);
    }

    #[test]
    fn materialized_neighbors_are_consistent() {
        let s = make_slab(Direction::e1(), 2, &[1, -1], 3).unwrap();
        let sites = s.materialize(1000).unwrap();
        assert_eq!(sites.len(), 28);
        for k in 0..sites.len() {
            for e in Direction::all(2) {
                let j = sites.neighbor(k, e.index());
                assert_eq!(sites.point(j), e.shifted(sites.point(k)).as_slice());
                assert_eq!(j < sites.len(), s.contains(sites.point(j)));
            }
        }
        // shortest axis fastest: 4 longitudinal sites, so bandwidth 4
        assert_eq!(sites.bandwidth(), 4);
    }

    #[test]
    fn explicit_connectivity() {
        let a = make_explicit(2, vec![vec![0, 0], vec![1, 0], vec![1, 1]]).unwrap();
        assert!(a.is_connected());
        let b = make_explicit(2, vec![vec![0, 0], vec![2, 0]]).unwrap();
        assert!(!b.is_connected());
        let r = make_rectangle(&[-1, -1], &[1, 1]).unwrap();
        assert_eq!(r.site_count(), 9);
        assert_eq!(r.materialize(100).unwrap().boundary_len(), 12);
    }
}
