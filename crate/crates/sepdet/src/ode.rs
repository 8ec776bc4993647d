//! Classic RK4 for linear matrix ODEs y' = M(x) y, with per-gap step doubling.

use crate::error::{Error, Result};
use crate::matcore::{max_abs, CMatrix, C64};

const MAX_SUBSTEPS: usize = 1 << 14;

/// Integrates through `points` (monotone, either direction) and returns y at
/// every point. Each gap starts at `min_sub` substeps and doubles until two
/// successive resolutions agree to `tol` relative.
pub fn propagate(
    points: &[f64],
    y0: CMatrix,
    coef: impl Fn(f64) -> Result<CMatrix>,
    tol: f64,
    min_sub: usize,
) -> Result<Vec<CMatrix>> {
    let mut out = Vec::with_capacity(points.len());
    let mut y = y0;
    out.push(y.clone());
    for gap in points.windows(2) {
        let (x0, x1) = (gap[0], gap[1]);
        let mut n = min_sub.max(1);
        let mut prev = steps(&coef, &y, x0, x1, n)?;
        loop {
            n *= 2;
            if n > MAX_SUBSTEPS {
                return Err(Error::StepUnderflow(x0));
            }
            let next = steps(&coef, &y, x0, x1, n)?;
            let dev = max_abs(&(&next - &prev)) / max_abs(&next).max(1.0);
            prev = next;
            if dev <= tol {
                break;
            }
        }
        y = prev;
        out.push(y.clone());
    }
    Ok(out)
}

fn steps(coef: &impl Fn(f64) -> Result<CMatrix>, y0: &CMatrix, x0: f64, x1: f64, n: usize) -> Result<CMatrix> {
    let h = (x1 - x0) / n as f64;
    let hc = C64::new(h, 0.0);
    let mut y = y0.clone();
    let mut m0 = coef(x0)?;
    for s in 0..n {
        let x = x0 + h * s as f64;
        let mh = coef(x + h / 2.0)?;
        let m1 = coef(if s + 1 == n { x1 } else { x + h })?;
        let k1 = &m0 * &y;
        let k2 = &mh * (&y + &k1 * (hc / 2.0));
        let k3 = &mh * (&y + &k2 * (hc / 2.0));
        let k4 = &m1 * (&y + &k3 * hc);
        y += (k1 + (k2 + k3) * C64::new(2.0, 0.0) + k4) * (hc / 6.0);
        m0 = m1;
    }
    if y.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::StepUnderflow(x0));
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::{c, from_real_rows};

    #[test]
    fn rotation_generator() {
        // y' = [[0,1],[-1,0]] y, y(0)=I  →  rotation by x
        let m = from_real_rows(&[vec![0.0, 1.0], vec![-1.0, 0.0]]).unwrap();
        let pts: Vec<f64> = (0..=10).map(|k| k as f64 * 0.3).collect();
        let ys = propagate(&pts, CMatrix::identity(2, 2), |_| Ok(m.clone()), 1e-13, 4).unwrap();
        for (x, y) in pts.iter().zip(&ys) {
            assert!((y[(0, 0)] - c(x.cos(), 0.0)).norm() < 1e-12);
            assert!((y[(0, 1)] - c(x.sin(), 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn backward_direction() {
        let pts = [1.0, 0.5, 0.0];
        let ys = propagate(&pts, CMatrix::identity(1, 1), |x| Ok(CMatrix::from_element(1, 1, c(x, 0.0))), 1e-13, 4)
            .unwrap();
        // y = exp((x²−1)/2)
        assert!((ys[2][(0, 0)].re - (-0.5f64).exp()).abs() < 1e-12);
    }
}
