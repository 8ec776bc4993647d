//! Product-quadrature solver for matrix Volterra equations of the second kind.
//!
//! The partial-panel integral ∫ over [x_i, end of panel] (or [start, x_i]) is
//! done with the interpolating polynomial of the integrand, so each panel is
//! one dense block solve; panels are swept away from the anchored endpoint.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::matcore::{zeros, CMatrix, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    /// y(x) = g(x) + ∫_x^b k(x,x') y(x') dx'
    Right,
    /// y(x) = g(x) + ∫_a^x k(x,x') y(x') dx'
    Left,
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub y: Vec<CMatrix>,
    /// max over panels of ‖block residual‖ / (1 + ‖rhs‖)
    pub residual: f64,
}

pub fn solve(grid: &Grid, side: Side, g: &[CMatrix], kernel: impl Fn(usize, usize) -> CMatrix) -> Result<Solution> {
    let q = grid.q();
    let npan = grid.panels();
    if g.len() != grid.len() {
        return Err(Error::Shape(format!("{} right-hand sides for {} nodes", g.len(), grid.len())));
    }
    let (n, m) = g[0].shape();
    let mut y = vec![zeros(n, m); grid.len()];
    let mut residual: f64 = 0.0;
    let order: Vec<usize> = match side {
        Side::Right => (0..npan).rev().collect(),
        Side::Left => (0..npan).collect(),
    };
    for (step, &p) in order.iter().enumerate() {
        let done = &order[..step];
        let range = grid.panel_nodes(p);
        let mut rhs = zeros(q * n, m);
        let mut sys = zeros(q * n, q * n);
        for (li, i) in range.clone().enumerate() {
            let mut r = g[i].clone();
            for &pp in done {
                for j in grid.panel_nodes(pp) {
                    r += kernel(i, j) * &y[j] * C64::new(grid.weight(j), 0.0);
                }
            }
            rhs.view_mut((li * n, 0), (n, m)).copy_from(&r);
            for (lj, j) in range.clone().enumerate() {
                let w = match side {
                    Side::Right => grid.right_weight(i, lj),
                    Side::Left => grid.left_weight(i, lj),
                };
                let mut blk = kernel(i, j) * C64::new(-w, 0.0);
                if li == lj {
                    for d in 0..n {
                        blk[(d, d)] += 1.0;
                    }
                }
                sys.view_mut((li * n, lj * n), (n, n)).copy_from(&blk);
            }
        }
        let sol = sys
            .clone()
            .lu()
            .solve(&rhs)
            .ok_or(Error::Volterra(f64::INFINITY))?;
        let res = crate::matcore::max_abs(&(&sys * &sol - &rhs)) / (1.0 + crate::matcore::max_abs(&rhs));
        if !res.is_finite() {
            return Err(Error::Volterra(res));
        }
        residual = residual.max(res);
        for (li, i) in range.enumerate() {
            y[i] = sol.view((li * n, 0), (n, m)).into_owned();
        }
    }
    Ok(Solution { y, residual })
}

/// ∫ over the one-sided range of k(i,j) y_j at every node, with the same
/// quadrature as `solve` (used for derivatives and substitution checks).
pub fn apply(grid: &Grid, side: Side, y: &[CMatrix], kernel: impl Fn(usize, usize) -> CMatrix) -> Vec<CMatrix> {
    let (n_out, m) = (kernel(0, 0).nrows(), y[0].ncols());
    (0..grid.len())
        .map(|i| {
            let p = grid.panel_of(i);
            let mut acc = zeros(n_out, m);
            for (lj, j) in grid.panel_nodes(p).enumerate() {
                let w = match side {
                    Side::Right => grid.right_weight(i, lj),
                    Side::Left => grid.left_weight(i, lj),
                };
                acc += kernel(i, j) * &y[j] * C64::new(w, 0.0);
            }
            let others: Box<dyn Iterator<Item = usize>> = match side {
                Side::Right => Box::new(p + 1..grid.panels()),
                Side::Left => Box::new(0..p),
            };
            for pp in others {
                for j in grid.panel_nodes(pp) {
                    acc += kernel(i, j) * &y[j] * C64::new(grid.weight(j), 0.0);
                }
            }
            acc
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Interval;
    use crate::matcore::scalar;

    #[test]
    fn exponential_from_left_volterra() {
        // y(x) = 1 + ∫_0^x y  →  e^x
        let g = Grid::uniform(Interval::finite(0.0, 2.0).unwrap(), 8, 8).unwrap();
        let rhs = vec![scalar(C64::new(1.0, 0.0)); g.len()];
        let s = solve(&g, Side::Left, &rhs, |_, _| scalar(C64::new(1.0, 0.0))).unwrap();
        for i in 0..g.len() {
            assert!((s.y[i][(0, 0)].re - g.node(i).exp()).abs() < 1e-12);
        }
        assert!(s.residual < 1e-14);
    }

    #[test]
    fn cosh_from_right_volterra() {
        // y(x) = 1 + ∫_x^b (x'−x) y(x') dx'  →  cosh(b−x)
        let b = 1.5;
        let g = Grid::uniform(Interval::finite(0.0, b).unwrap(), 6, 8).unwrap();
        let rhs = vec![scalar(C64::new(1.0, 0.0)); g.len()];
        let nodes = g.nodes().to_vec();
        let s = solve(&g, Side::Right, &rhs, |i, j| scalar(C64::new(nodes[j] - nodes[i], 0.0))).unwrap();
        for i in 0..g.len() {
            assert!((s.y[i][(0, 0)].re - (b - g.node(i)).cosh()).abs() < 1e-12);
        }
    }
}
