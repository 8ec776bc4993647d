//! Brute-force Nyström oracle: dense discretization of a matrix kernel on the
//! quadrature grid, with no use of the semi-separable structure.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::matcore::{det, eye, trace, zeros, CMatrix, DetValue, C64};
use crate::par::{self, Exec};
use crate::volterra::{self, Side};

/// Dense factorization cap on P·q·n.
pub const MAX_DIM: usize = 6000;

/// Discretized operator, √w-balanced: block (i,j) ≈ √wᵢ K(xᵢ,xⱼ) √wⱼ.
#[derive(Clone, Debug)]
pub struct DiscOp {
    grid: Arc<Grid>,
    n: usize,
    mat: CMatrix,
}

impl DiscOp {
    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.mat
    }
}

fn check_size(grid: &Grid, n: usize) -> Result<usize> {
    let size = grid.len() * n;
    if size > MAX_DIM {
        return Err(Error::TooLarge(size, MAX_DIM));
    }
    Ok(size)
}

fn assemble(exec: Exec, grid: &Arc<Grid>, n: usize, block: impl Fn(usize, usize) -> Result<CMatrix> + Sync + Send) -> Result<DiscOp> {
    let size = check_size(grid, n)?;
    let len = grid.len();
    let rows = par::try_map_range(exec, len, |i| {
        (0..len)
            .map(|j| {
                let b = block(i, j)?;
                if b.shape() != (n, n) {
                    return Err(Error::Shape(format!("kernel block ({i},{j}) is {:?}, expected {n}x{n}", b.shape())));
                }
                Ok(b)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut mat = zeros(size, size);
    for (i, row) in rows.iter().enumerate() {
        for (j, b) in row.iter().enumerate() {
            mat.view_mut((i * n, j * n), (n, n)).copy_from(b);
        }
    }
    Ok(DiscOp { grid: grid.clone(), n, mat })
}

/// Plain √w Nyström for a kernel given as a function of (x, x').
pub fn discretize(kernel: impl Fn(f64, f64) -> Result<CMatrix> + Sync + Send, grid: &Arc<Grid>, n: usize) -> Result<DiscOp> {
    discretize_with(Exec::default(), kernel, grid, n)
}

pub fn discretize_with(
    exec: Exec,
    kernel: impl Fn(f64, f64) -> Result<CMatrix> + Sync + Send,
    grid: &Arc<Grid>,
    n: usize,
) -> Result<DiscOp> {
    let (x, w) = (grid.nodes(), grid.weights());
    assemble(exec, grid, n, |i, j| Ok(kernel(x[i], x[j])? * C64::new((w[i] * w[j]).sqrt(), 0.0)))
}

/// Plain √w Nyström for a kernel given at node pairs.
pub fn discretize_nodes(exec: Exec, kernel: impl Fn(usize, usize) -> CMatrix + Sync + Send, grid: &Arc<Grid>, n: usize) -> Result<DiscOp> {
    let w = grid.weights();
    assemble(exec, grid, n, |i, j| Ok(kernel(i, j) * C64::new((w[i] * w[j]).sqrt(), 0.0)))
}

/// Nyström for kernels with a jump across x = x': inside the panel containing
/// xᵢ the integral is split at xᵢ and each triangle uses its own smooth branch
/// (`lower` for x' < x, `upper` for x' > x), evaluated at all node pairs.
/// The result is the √w similarity transform of the one-sided product rule.
pub fn discretize_split_nodes(
    exec: Exec,
    lower: impl Fn(usize, usize) -> CMatrix + Sync + Send,
    upper: impl Fn(usize, usize) -> CMatrix + Sync + Send,
    grid: &Arc<Grid>,
    n: usize,
) -> Result<DiscOp> {
    let w = grid.weights();
    assemble(exec, grid, n, |i, j| {
        let (pi, pj) = (grid.panel_of(i), grid.panel_of(j));
        let scale = |v: f64| C64::new(v, 0.0);
        Ok(if pi == pj {
            let lj = j - pj * grid.q();
            let sym = (w[i] / w[j]).sqrt();
            lower(i, j) * scale(grid.left_weight(i, lj) * sym) + upper(i, j) * scale(grid.right_weight(i, lj) * sym)
        } else if j < i {
            lower(i, j) * scale((w[i] * w[j]).sqrt())
        } else {
            upper(i, j) * scale((w[i] * w[j]).sqrt())
        })
    })
}

/// Richardson step for values converging as h³ (kink kernels), from a grid and its refinement.
pub fn extrapolate_h3(coarse: C64, fine: C64) -> C64 {
    fine + (fine - coarse) / 7.0
}

#[derive(Clone, Copy, Debug)]
pub struct Converged {
    pub value: DetValue,
    /// relative change over the last doubling
    pub shift: f64,
    pub panels: usize,
}

/// Doubles the panel count, starting from `grid`, until two successive
/// determinants differ by less than `tol` (relative) or `max_panels` is reached.
pub fn converged_det(grid: &Arc<Grid>, max_panels: usize, tol: f64, det_on: impl Fn(&Arc<Grid>) -> Result<DetValue>) -> Result<Converged> {
    let mut g = grid.clone();
    let mut prev = det_on(&g)?;
    loop {
        let fine = g.refined();
        let cur = det_on(&fine)?;
        let shift = crate::matcore::rel_dev(cur.value, prev.value);
        if shift < tol || fine.panels() * 2 > max_panels {
            return Ok(Converged { value: cur, shift, panels: fine.panels() });
        }
        g = fine;
        prev = cur;
    }
}

/// det(I − αD)
pub fn oracle_det(d: &DiscOp, alpha: C64) -> Result<DetValue> {
    let size = d.mat.nrows();
    det(&(eye(size) - &d.mat * alpha))
}

pub fn oracle_trace(d: &DiscOp) -> C64 {
    trace(&d.mat)
}

/// tr of the difference of two discretized kernels: the diagonal quadrature
/// sum Σ wᵢ tr(K₂(xᵢ,xᵢ) − K₁(xᵢ,xᵢ)).
pub fn oracle_resolvent_trace_diff(d2: &DiscOp, d1: &DiscOp) -> Result<C64> {
    if !d2.grid.same_rule(&d1.grid) || d2.n != d1.n {
        return Err(Error::Shape("resolvent kernels discretized on different rules".into()));
    }
    Ok(trace(&d2.mat) - trace(&d1.mat))
}

/// Applies the operator to nodal values g (n×m per node), undoing the √w balance.
pub fn apply(d: &DiscOp, g: &[CMatrix]) -> Vec<CMatrix> {
    let (n, w) = (d.n, d.grid.weights());
    let m = g[0].ncols();
    let mut stacked = zeros(d.mat.nrows(), m);
    for (j, gj) in g.iter().enumerate() {
        stacked.view_mut((j * n, 0), (n, m)).copy_from(&(gj * C64::new(w[j].sqrt(), 0.0)));
    }
    let out = &d.mat * stacked;
    (0..g.len())
        .map(|i| out.view((i * n, 0), (n, m)).into_owned() / C64::new(w[i].sqrt(), 0.0))
        .collect()
}

/// ∫ₐˣ lower(x,x')g(x')dx' + ∫ₓᵇ upper(x,x')g(x')dx' at every node, by product quadrature.
pub fn apply_split(
    grid: &Grid,
    lower: impl Fn(usize, usize) -> CMatrix,
    upper: impl Fn(usize, usize) -> CMatrix,
    g: &[CMatrix],
) -> Vec<CMatrix> {
    let l = volterra::apply(grid, Side::Left, g, lower);
    let u = volterra::apply(grid, Side::Right, g, upper);
    l.into_iter().zip(u).map(|(a, b)| a + b).collect()
}
