//! Composite Gauss–Legendre grids and matrix-valued functions sampled on them.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::matcore::{ensure_finite, zeros, CMatrix, C64};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    a: f64,
    b: f64,
    radius: f64,
}

impl Interval {
    pub fn finite(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::Invalid(format!("interval [{a}, {b}] is empty or non-finite")));
        }
        Ok(Interval { a, b, radius: 0.0 })
    }

    /// (−∞, ∞) truncated to [−R, R]; infinite endpoints may be given as ±inf.
    pub fn truncated(a: f64, b: f64, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::Invalid(format!("truncation radius {radius} must be positive")));
        }
        let lo = if a.is_finite() { a } else { -radius };
        let hi = if b.is_finite() { b } else { radius };
        if !(lo < hi) || a.is_nan() || b.is_nan() {
            return Err(Error::Invalid(format!("interval [{lo}, {hi}] is empty")));
        }
        Ok(Interval { a: lo, b: hi, radius: if a.is_finite() && b.is_finite() { 0.0 } else { radius } })
    }

    pub fn real_line(radius: f64) -> Result<Self> {
        Self::truncated(f64::NEG_INFINITY, f64::INFINITY, radius)
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn is_truncated(&self) -> bool {
        self.radius > 0.0
    }

    pub fn len(&self) -> f64 {
        self.b - self.a
    }

    pub fn contains(&self, x: f64) -> bool {
        let slack = 1e-12 * (1.0 + self.a.abs().max(self.b.abs()));
        x >= self.a - slack && x <= self.b + slack
    }
}

/// Gauss–Legendre rule on [−1, 1] plus the interpolation/integration data
/// needed for product quadrature on a panel.
#[derive(Debug)]
struct RefPanel {
    t: Vec<f64>,
    w: Vec<f64>,
    bary: Vec<f64>,
    /// left[i*q + j] = ∫_{−1}^{t_i} ℓ_j
    left: Vec<f64>,
    /// diff[i*q + j] = ℓ_j'(t_i)
    diff: Vec<f64>,
}

pub fn gauss_legendre(q: usize) -> (Vec<f64>, Vec<f64>) {
    let mut t = vec![0.0; q];
    let mut w = vec![0.0; q];
    for i in 0..q {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (q as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(q, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre(q, x);
        t[q - 1 - i] = x;
        w[q - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (t, w)
}

fn legendre(q: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=q {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    if q == 0 {
        return (1.0, 0.0);
    }
    let dp = q as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

impl RefPanel {
    fn new(q: usize) -> Self {
        let (t, w) = gauss_legendre(q);
        let bary: Vec<f64> = (0..q)
            .map(|j| 1.0 / (0..q).filter(|&k| k != j).map(|k| t[j] - t[k]).product::<f64>())
            .collect();
        let mut left = vec![0.0; q * q];
        for i in 0..q {
            let half = (t[i] + 1.0) / 2.0;
            for (tk, wk) in t.iter().zip(&w) {
                let s = -1.0 + half * (tk + 1.0);
                for j in 0..q {
                    left[i * q + j] += wk * half * lagrange(&t, j, s);
                }
            }
        }
        let mut diff = vec![0.0; q * q];
        for i in 0..q {
            for j in (0..q).filter(|&j| j != i) {
                diff[i * q + j] = bary[j] / bary[i] / (t[i] - t[j]);
            }
            diff[i * q + i] = -(0..q).filter(|&j| j != i).map(|j| diff[i * q + j]).sum::<f64>();
        }
        RefPanel { t, w, bary, left, diff }
    }

    /// Lagrange basis values at s ∈ [−1,1] (barycentric form).
    fn basis(&self, s: f64) -> Vec<f64> {
        if let Some(k) = self.t.iter().position(|&tk| tk == s) {
            let mut e = vec![0.0; self.t.len()];
            e[k] = 1.0;
            return e;
        }
        let terms: Vec<f64> = self.t.iter().zip(&self.bary).map(|(tk, bk)| bk / (s - tk)).collect();
        let denom: f64 = terms.iter().sum();
        terms.into_iter().map(|v| v / denom).collect()
    }
}

fn lagrange(t: &[f64], j: usize, s: f64) -> f64 {
    t.iter()
        .enumerate()
        .filter(|&(k, _)| k != j)
        .map(|(_, &tk)| (s - tk) / (t[j] - tk))
        .product()
}

/// Composite Gauss–Legendre rule: P panels × q nodes.
#[derive(Debug)]
pub struct Grid {
    interval: Interval,
    breaks: Vec<f64>,
    q: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    reference: RefPanel,
}

pub type QuadRule = Grid;

impl Grid {
    pub fn uniform(interval: Interval, panels: usize, q: usize) -> Result<Arc<Grid>> {
        Self::with_breakpoints(interval, &[], panels, q)
    }

    /// Panels are aligned with every breakpoint strictly inside the interval;
    /// the remaining panels are spread in proportion to segment length.
    pub fn with_breakpoints(interval: Interval, breakpoints: &[f64], panels: usize, q: usize) -> Result<Arc<Grid>> {
        if q < 2 || panels == 0 {
            return Err(Error::Invalid(format!("grid needs q ≥ 2 and P ≥ 1 (got q={q}, P={panels})")));
        }
        let (a, b) = (interval.a(), interval.b());
        let mut cuts: Vec<f64> = breakpoints.iter().cloned().filter(|&x| x > a && x < b).collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup_by(|x, y| (*x - *y).abs() < 1e-12);
        let mut seg_ends = vec![a];
        seg_ends.extend(cuts);
        seg_ends.push(b);
        let nseg = seg_ends.len() - 1;
        let total = panels.max(nseg);
        let len = b - a;
        let mut counts: Vec<usize> = seg_ends
            .windows(2)
            .map(|s| (((s[1] - s[0]) / len) * total as f64).floor().max(1.0) as usize)
            .collect();
        while counts.iter().sum::<usize>() < total {
            // Hand out the remainder to the segments with the widest panels.
            let k = (0..nseg)
                .max_by(|&i, &j| {
                    let wi = (seg_ends[i + 1] - seg_ends[i]) / counts[i] as f64;
                    let wj = (seg_ends[j + 1] - seg_ends[j]) / counts[j] as f64;
                    wi.total_cmp(&wj).then(j.cmp(&i))
                })
                .unwrap();
            counts[k] += 1;
        }
        let mut breaks = vec![a];
        for (s, &m) in seg_ends.windows(2).zip(&counts) {
            for k in 1..=m {
                breaks.push(if k == m { s[1] } else { s[0] + (s[1] - s[0]) * k as f64 / m as f64 });
            }
        }
        Ok(Self::from_breaks(interval, breaks, q))
    }

    fn from_breaks(interval: Interval, breaks: Vec<f64>, q: usize) -> Arc<Grid> {
        let reference = RefPanel::new(q);
        let mut nodes = Vec::with_capacity((breaks.len() - 1) * q);
        let mut weights = Vec::with_capacity(nodes.capacity());
        for p in breaks.windows(2) {
            let (mid, half) = ((p[0] + p[1]) / 2.0, (p[1] - p[0]) / 2.0);
            for (t, w) in reference.t.iter().zip(&reference.w) {
                nodes.push(mid + half * t);
                weights.push(half * w);
            }
        }
        Arc::new(Grid { interval, breaks, q, nodes, weights, reference })
    }

    /// Same layout with every panel split in two.
    pub fn refined(&self) -> Arc<Grid> {
        let mut breaks = vec![self.breaks[0]];
        for p in self.breaks.windows(2) {
            breaks.push((p[0] + p[1]) / 2.0);
            breaks.push(p[1]);
        }
        Self::from_breaks(self.interval, breaks, self.q)
    }

    pub fn interval(&self) -> Interval {
        self.interval
    }

    pub fn a(&self) -> f64 {
        self.interval.a()
    }

    pub fn b(&self) -> f64 {
        self.interval.b()
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn panels(&self) -> usize {
        self.breaks.len() - 1
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn node(&self, i: usize) -> f64 {
        self.nodes[i]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn panel_of(&self, i: usize) -> usize {
        i / self.q
    }

    pub fn panel_nodes(&self, p: usize) -> std::ops::Range<usize> {
        p * self.q..(p + 1) * self.q
    }

    fn half_width(&self, p: usize) -> f64 {
        (self.breaks[p + 1] - self.breaks[p]) / 2.0
    }

    /// ∫ from the start of node i's panel to x_i of the j-th basis function
    /// of the same panel (j is a local index).
    pub fn left_weight(&self, i: usize, j_local: usize) -> f64 {
        let (p, li) = (i / self.q, i % self.q);
        self.half_width(p) * self.reference.left[li * self.q + j_local]
    }

    /// ∫ from x_i to the end of its panel of the j-th local basis function.
    pub fn right_weight(&self, i: usize, j_local: usize) -> f64 {
        let (p, li) = (i / self.q, i % self.q);
        self.half_width(p) * (self.reference.w[j_local] - self.reference.left[li * self.q + j_local])
    }

    pub fn same_rule(&self, other: &Grid) -> bool {
        self.q == other.q && self.breaks == other.breaks
    }

    pub fn locate(&self, x: f64) -> Result<usize> {
        if !self.interval.contains(x) {
            return Err(Error::OutOfRange { x, a: self.a(), b: self.b() });
        }
        let k = self.breaks.partition_point(|&b| b <= x);
        Ok(k.saturating_sub(1).min(self.panels() - 1))
    }

    /// Panel index and Lagrange weights for evaluating at x.
    pub fn interp(&self, x: f64) -> Result<(usize, Vec<f64>)> {
        let p = self.locate(x)?;
        if let Some(k) = self.panel_nodes(p).position(|j| self.nodes[j] == x) {
            let mut e = vec![0.0; self.q];
            e[k] = 1.0;
            return Ok((p, e));
        }
        let (lo, hi) = (self.breaks[p], self.breaks[p + 1]);
        let s = (2.0 * x - lo - hi) / (hi - lo);
        Ok((p, self.reference.basis(s)))
    }

    pub fn integrate(&self, f: impl Fn(usize) -> C64) -> C64 {
        (0..self.len()).map(|i| self.weights[i] * f(i)).sum()
    }
}

/// Matrix-valued function stored at the nodes of a grid; off-node values use
/// the per-panel interpolating polynomial of degree q−1.
#[derive(Clone, Debug)]
pub struct GridFn {
    grid: Arc<Grid>,
    rows: usize,
    cols: usize,
    values: Vec<CMatrix>,
}

impl GridFn {
    pub fn new(grid: Arc<Grid>, rows: usize, cols: usize, values: Vec<CMatrix>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Shape(format!("{} values for {} nodes", values.len(), grid.len())));
        }
        for (i, v) in values.iter().enumerate() {
            if v.shape() != (rows, cols) {
                return Err(Error::Shape(format!(
                    "value at node {i} is {}x{}, expected {rows}x{cols}",
                    v.nrows(),
                    v.ncols()
                )));
            }
            ensure_finite(v)?;
        }
        Ok(GridFn { grid, rows, cols, values })
    }

    pub fn from_fn(grid: Arc<Grid>, rows: usize, cols: usize, f: impl Fn(f64) -> CMatrix) -> Result<Self> {
        let values = grid.nodes().iter().map(|&x| f(x)).collect();
        Self::new(grid, rows, cols, values)
    }

    pub fn zeros(grid: Arc<Grid>, rows: usize, cols: usize) -> Self {
        let values = vec![zeros(rows, cols); grid.len()];
        GridFn { grid, rows, cols, values }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn values(&self) -> &[CMatrix] {
        &self.values
    }

    pub fn at(&self, i: usize) -> &CMatrix {
        &self.values[i]
    }

    pub fn eval(&self, x: f64) -> Result<CMatrix> {
        let (p, basis) = self.grid.interp(x)?;
        let mut out = zeros(self.rows, self.cols);
        for (j, l) in self.grid.panel_nodes(p).zip(basis) {
            if l != 0.0 {
                out += &self.values[j] * C64::new(l, 0.0);
            }
        }
        Ok(out)
    }

    /// Derivative of the per-panel interpolant, sampled at the nodes.
    pub fn derivative(&self) -> GridFn {
        let g = &self.grid;
        let q = g.q;
        let values = (0..g.len())
            .map(|i| {
                let (p, li) = (i / q, i % q);
                let scale = 1.0 / g.half_width(p);
                let mut acc = zeros(self.rows, self.cols);
                for (lj, j) in g.panel_nodes(p).enumerate() {
                    acc += &self.values[j] * C64::new(g.reference.diff[li * q + lj] * scale, 0.0);
                }
                acc
            })
            .collect();
        GridFn { grid: g.clone(), rows: self.rows, cols: self.cols, values }
    }

    pub fn integral(&self) -> CMatrix {
        let mut acc = zeros(self.rows, self.cols);
        for (v, &w) in self.values.iter().zip(self.grid.weights()) {
            acc += v * C64::new(w, 0.0);
        }
        acc
    }

    pub fn map(&self, rows: usize, cols: usize, f: impl Fn(usize, &CMatrix) -> CMatrix) -> Result<Self> {
        let values = self.values.iter().enumerate().map(|(i, v)| f(i, v)).collect();
        Self::new(self.grid.clone(), rows, cols, values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_rule_is_exact_to_degree_2q_minus_1() {
        let (t, w) = gauss_legendre(8);
        for deg in 0..16 {
            let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
            let got: f64 = t.iter().zip(&w).map(|(x, w)| w * x.powi(deg)).sum();
            assert!((got - exact).abs() < 1e-14, "degree {deg}");
        }
    }

    #[test]
    fn weights_sum_to_length_and_nodes_increase() {
        let g = Grid::with_breakpoints(Interval::finite(-2.0, 3.0).unwrap(), &[0.0, 1.0], 7, 8).unwrap();
        let s: f64 = g.weights().iter().sum();
        assert!((s - 5.0).abs() < 1e-12);
        assert!(g.nodes().windows(2).all(|p| p[0] < p[1]));
        assert!(g.breaks().contains(&0.0) && g.breaks().contains(&1.0));
    }

    #[test]
    fn partial_weights_integrate_polynomials() {
        let g = Grid::uniform(Interval::finite(0.0, 1.0).unwrap(), 3, 6).unwrap();
        let f = |x: f64| 1.0 + x - 2.0 * x.powi(4);
        let anti = |x: f64| x + x * x / 2.0 - 0.4 * x.powi(5);
        for i in 0..g.len() {
            let p = g.panel_of(i);
            let (lo, hi) = (g.breaks()[p], g.breaks()[p + 1]);
            let xi = g.node(i);
            let l: f64 = g.panel_nodes(p).enumerate().map(|(lj, j)| g.left_weight(i, lj) * f(g.node(j))).sum();
            let r: f64 = g.panel_nodes(p).enumerate().map(|(lj, j)| g.right_weight(i, lj) * f(g.node(j))).sum();
            assert!((l - (anti(xi) - anti(lo))).abs() < 1e-14);
            assert!((r - (anti(hi) - anti(xi))).abs() < 1e-14);
        }
    }

    #[test]
    fn gridfn_interpolates_and_reproduces_nodes() {
        let g = Grid::uniform(Interval::finite(0.0, 2.0).unwrap(), 4, 8).unwrap();
        let f = GridFn::from_fn(g.clone(), 1, 1, |x| crate::matcore::scalar(C64::new(x.sin(), x))).unwrap();
        for i in [0, 5, 17, 31] {
            assert_eq!(f.eval(g.node(i)).unwrap(), *f.at(i));
        }
        let v = f.eval(1.2345).unwrap()[(0, 0)];
        assert!((v - C64::new(1.2345f64.sin(), 1.2345)).norm() < 1e-10);
        assert!(f.eval(2.5).is_err());
    }

    #[test]
    fn derivative_of_interpolant() {
        let g = Grid::uniform(Interval::finite(0.0, 2.0).unwrap(), 4, 10).unwrap();
        let f = GridFn::from_fn(g.clone(), 1, 1, |x| crate::matcore::scalar(C64::new(x.sin(), 0.0))).unwrap();
        let d = f.derivative();
        for i in 0..g.len() {
            assert!((d.at(i)[(0, 0)].re - g.node(i).cos()).abs() < 1e-9);
        }
    }

    #[test]
    fn refined_grid_doubles_panels() {
        let g = Grid::with_breakpoints(Interval::finite(0.0, 1.0).unwrap(), &[0.3], 4, 8).unwrap();
        let r = g.refined();
        assert_eq!(r.panels(), 2 * g.panels());
        assert!(g.breaks().iter().all(|b| r.breaks().iter().any(|c| (b - c).abs() < 1e-15)));
    }
}
