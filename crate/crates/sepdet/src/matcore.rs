//! Dense complex matrices, Hermitian spectral calculus and determinants.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;

pub const I: C64 = C64::new(0.0, 1.0);

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn real(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn zeros(r: usize, cols: usize) -> CMatrix {
    CMatrix::zeros(r, cols)
}

pub fn eye(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn scalar(v: C64) -> CMatrix {
    CMatrix::from_element(1, 1, v)
}

pub fn diag(d: &[C64]) -> CMatrix {
    CMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(d))
}

pub fn from_rows(rows: &[Vec<C64>]) -> Result<CMatrix> {
    let r = rows.len();
    let cols = rows.first().map_or(0, |row| row.len());
    if rows.iter().any(|row| row.len() != cols) {
        return Err(Error::Shape("ragged matrix rows".into()));
    }
    let m = CMatrix::from_fn(r, cols, |i, j| rows[i][j]);
    ensure_finite(&m)?;
    Ok(m)
}

pub fn from_real_rows(rows: &[Vec<f64>]) -> Result<CMatrix> {
    let rows: Vec<Vec<C64>> = rows.iter().map(|r| r.iter().map(|&x| real(x)).collect()).collect();
    from_rows(&rows)
}

pub fn ensure_finite(m: &CMatrix) -> Result<()> {
    if m.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite)
    }
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.norm()))
}

pub fn trace(m: &CMatrix) -> C64 {
    m.diagonal().iter().sum()
}

pub fn adjoint(m: &CMatrix) -> CMatrix {
    m.adjoint()
}

/// Relative deviation |a−b| / max(|a|,|b|,floor).
pub fn rel_dev(a: C64, b: C64) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(1e-300)
}

pub fn rel_dev_mat(a: &CMatrix, b: &CMatrix) -> f64 {
    max_abs(&(a - b)) / max_abs(a).max(max_abs(b)).max(1e-300)
}

/// Square root with Im ≥ 0; on the real axis the nonnegative root.
pub fn sqrt_imnonneg(z: C64) -> C64 {
    let mut s = z.sqrt();
    if s.im < 0.0 || (s.im == 0.0 && s.re < 0.0) {
        s = -s;
    }
    s
}

#[derive(Clone, Debug, PartialEq)]
pub struct HermMatrix(CMatrix);

impl HermMatrix {
    pub fn new(m: CMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Shape(format!("{}x{} matrix is not square", m.nrows(), m.ncols())));
        }
        ensure_finite(&m)?;
        let dev = max_abs(&(&m - m.adjoint()));
        if dev > 1e-12 * (1.0 + max_abs(&m)) {
            return Err(Error::NotHermitian(dev));
        }
        Ok(HermMatrix(m))
    }

    pub fn from_real_diag(d: &[f64]) -> Self {
        let d: Vec<C64> = d.iter().map(|&x| real(x)).collect();
        HermMatrix(diag(&d))
    }

    pub fn zeros(n: usize) -> Self {
        HermMatrix(zeros(n, n))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralParam {
    z: C64,
    sqrt_z: C64,
}

impl SpectralParam {
    pub fn new(z: C64) -> Result<Self> {
        if !(z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(SpectralParam { z, sqrt_z: sqrt_imnonneg(z) })
    }

    pub fn z(&self) -> C64 {
        self.z
    }

    pub fn sqrt_z(&self) -> C64 {
        self.sqrt_z
    }

    pub fn conj(&self) -> Self {
        SpectralParam { z: self.z.conj(), sqrt_z: sqrt_imnonneg(self.z.conj()) }
    }

    /// Rejects points on [0, ∞) (closer than `tol`).
    pub fn off_cut(&self, tol: f64) -> Result<Self> {
        if self.z.im.abs() < tol && self.z.re > -tol {
            return Err(Error::BranchPoint(self.z.im.abs()));
        }
        Ok(*self)
    }
}

#[derive(Clone, Debug)]
pub struct HermEig {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl HermEig {
    /// Q f(Λ) Q* for a scalar function applied to the eigenvalues.
    pub fn apply(&self, f: impl Fn(f64) -> C64) -> CMatrix {
        let d: Vec<C64> = self.values.iter().map(|&l| f(l)).collect();
        &self.vectors * diag(&d) * self.vectors.adjoint()
    }

    pub fn try_apply(&self, f: impl Fn(f64) -> Result<C64>) -> Result<CMatrix> {
        let d = self.values.iter().map(|&l| f(l)).collect::<Result<Vec<_>>>()?;
        Ok(&self.vectors * diag(&d) * self.vectors.adjoint())
    }
}

pub fn herm_eig(m: &HermMatrix) -> Result<HermEig> {
    let a = m.matrix();
    let n = a.nrows();
    if n == 0 {
        return Ok(HermEig { values: vec![], vectors: zeros(0, 0) });
    }
    let eig = SymmetricEigen::try_new(a.clone(), 1e-15, 10_000)
        .ok_or(Error::EigenNoConvergence(f64::NAN))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(n, n, |r, col| eig.eigenvectors[(r, order[col])]);
    let d: Vec<C64> = values.iter().map(|&l| real(l)).collect();
    let residual = max_abs(&(&vectors * diag(&d) * vectors.adjoint() - a));
    if residual > 1e-12 * (1.0 + max_abs(a)) * n as f64 {
        return Err(Error::EigenNoConvergence(residual));
    }
    Ok(HermEig { values, vectors })
}

/// Scalar branch (α² − z)^{1/2} = −i·[z − α²]^{1/2}, Im[z − α²]^{1/2} ≥ 0.
pub fn shift_sqrt(alpha: f64, z: C64) -> Result<C64> {
    let w = z - alpha * alpha;
    if w.norm() < 1e-12 {
        return Err(Error::BranchPoint(w.norm()));
    }
    Ok(-I * sqrt_imnonneg(w))
}

/// (A² − z)^{1/2}, the form entering the determinant formula.
pub fn branch_sqrt_shift(a: &HermMatrix, z: &SpectralParam) -> Result<CMatrix> {
    herm_eig(a)?.try_apply(|l| shift_sqrt(l, z.z()))
}

/// Wavenumber matrix k(z) = [z − A²]^{1/2} with Im ≥ 0 on each eigenvalue.
pub fn wavenumber(a: &HermMatrix, z: &SpectralParam) -> Result<CMatrix> {
    herm_eig(a)?.try_apply(|l| {
        let w = z.z() - l * l;
        if w.norm() < 1e-12 {
            return Err(Error::BranchPoint(w.norm()));
        }
        Ok(sqrt_imnonneg(w))
    })
}

pub fn gz_scalar(alpha: f64, z: C64) -> Result<C64> {
    Ok(alpha / shift_sqrt(alpha, z)?)
}

/// g_z(A) = A (A² − z)^{−1/2}.
pub fn gz_apply(a: &HermMatrix, z: &SpectralParam) -> Result<CMatrix> {
    herm_eig(a)?.try_apply(|l| gz_scalar(l, z.z()))
}

pub fn eig_count_below(a: &HermMatrix, lambda: f64) -> Result<usize> {
    Ok(herm_eig(a)?.values.iter().filter(|&&l| l <= lambda).count())
}

/// Determinant carried as value together with log-magnitude and phase.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetValue {
    pub value: C64,
    pub ln_abs: f64,
    pub phase: f64,
}

impl DetValue {
    pub fn one() -> Self {
        DetValue { value: real(1.0), ln_abs: 0.0, phase: 0.0 }
    }

    pub fn ratio(&self, other: &DetValue) -> DetValue {
        let ln_abs = self.ln_abs - other.ln_abs;
        let phase = wrap_phase(self.phase - other.phase);
        DetValue { value: C64::from_polar(ln_abs.exp(), phase), ln_abs, phase }
    }
}

pub fn det(m: &CMatrix) -> Result<DetValue> {
    if !m.is_square() {
        return Err(Error::Shape(format!("determinant of {}x{} matrix", m.nrows(), m.ncols())));
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(DetValue::one());
    }
    let lu = m.clone().lu();
    let u = lu.u();
    let sign = lu.p().determinant::<f64>();
    let mut ln_abs = 0.0;
    let mut phase = if sign < 0.0 { std::f64::consts::PI } else { 0.0 };
    for i in 0..n {
        let p = u[(i, i)];
        if p == C64::new(0.0, 0.0) {
            return Ok(DetValue { value: real(0.0), ln_abs: f64::NEG_INFINITY, phase: 0.0 });
        }
        ln_abs += p.norm().ln();
        phase += p.arg();
    }
    let phase = wrap_phase(phase);
    Ok(DetValue { value: C64::from_polar(ln_abs.exp(), phase), ln_abs, phase })
}

pub fn det_one_minus(m: &CMatrix) -> Result<DetValue> {
    if !m.is_square() {
        return Err(Error::Shape(format!("det(I−M) of {}x{} matrix", m.nrows(), m.ncols())));
    }
    det(&(eye(m.nrows()) - m))
}

/// Wraps into (−π, π].
pub fn wrap_phase(p: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut r = p.rem_euclid(two_pi);
    if r > std::f64::consts::PI {
        r -= two_pi;
    }
    r
}

pub fn inverse(m: &CMatrix) -> Result<CMatrix> {
    m.clone()
        .try_inverse()
        .ok_or_else(|| Error::IllConditioned { what: "matrix inverse".into(), cond: f64::INFINITY })
}

/// 2-norm condition number from singular values.
pub fn cond(m: &CMatrix) -> f64 {
    if m.nrows() == 0 {
        return 1.0;
    }
    let sv = m.singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Inverse guarded by a condition-number cap.
pub fn checked_inverse(m: &CMatrix, what: &str, cap: f64) -> Result<CMatrix> {
    let k = cond(m);
    if !(k <= cap) {
        return Err(Error::IllConditioned { what: what.into(), cond: k });
    }
    inverse(m)
}

/// Polar pieces of a Hermitian matrix: |M|^{1/2} and U_M = sgn(M), sgn(0) = 0.
pub fn herm_polar(m: &HermMatrix) -> Result<(CMatrix, CMatrix)> {
    let e = herm_eig(m)?;
    let scale = 1e-14 * (1.0 + e.values.iter().fold(0.0f64, |a, v| a.max(v.abs())));
    let abs_half = e.apply(|l| real(l.abs().sqrt()));
    let sgn = e.apply(|l| {
        if l.abs() <= scale {
            real(0.0)
        } else {
            real(l.signum())
        }
    });
    Ok((abs_half, sgn))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn det_one_minus_hand_checked() {
        let m = from_real_rows(&[vec![0.1, 0.2], vec![0.3, 0.4]]).unwrap();
        let d = det_one_minus(&m).unwrap();
        assert!((d.value - real(0.48)).norm() < 1e-15);
        assert!((d.ln_abs - 0.48f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn det_saturation_and_empty() {
        let d = det_one_minus(&diag(&[real(1.0), real(0.0)])).unwrap();
        assert_eq!(d.value.norm(), 0.0);
        assert_eq!(det_one_minus(&zeros(3, 3)).unwrap().value, real(1.0));
    }

    #[test]
    fn det_phase_tracks_permutation_sign() {
        let m = from_real_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let d = det(&m).unwrap();
        assert!((d.value - real(-1.0)).norm() < 1e-15);
    }

    #[test]
    fn sqrt_branch_convention() {
        assert!((sqrt_imnonneg(real(-1.0)) - I).norm() < 1e-15);
        assert_eq!(sqrt_imnonneg(real(4.0)), real(2.0));
        let s = sqrt_imnonneg(c(-1.0, -1e-3));
        assert!(s.im > 0.0);
        let s = sqrt_imnonneg(c(3.0, -2.0));
        assert!(s.im >= 0.0 && (s * s - c(3.0, -2.0)).norm() < 1e-14);
    }

    #[test]
    fn spectral_param_invariants() {
        for z in [c(-1.0, 0.0), c(2.0, 0.5), c(-3.0, -4.0), c(0.0, 1.0)] {
            let p = SpectralParam::new(z).unwrap();
            assert!(p.sqrt_z().im >= 0.0);
            assert!((p.sqrt_z() * p.sqrt_z() - z).norm() <= 1e-14 * z.norm());
        }
        assert!(SpectralParam::new(real(2.0)).unwrap().off_cut(1e-12).is_err());
    }

    #[test]
    fn herm_eig_examples() {
        let e = herm_eig(&HermMatrix::new(eye(2)).unwrap()).unwrap();
        assert_eq!(e.values, vec![1.0, 1.0]);
        let e = herm_eig(&HermMatrix::from_real_diag(&[2.0, -1.0])).unwrap();
        assert!((e.values[0] + 1.0).abs() < 1e-15 && (e.values[1] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn herm_rejects_asymmetric() {
        let m = from_real_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(HermMatrix::new(m), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn branch_sqrt_examples() {
        let z = SpectralParam::new(real(-1.0)).unwrap();
        let s = branch_sqrt_shift(&HermMatrix::from_real_diag(&[1.0]), &z).unwrap();
        assert!((s[(0, 0)] - real(2f64.sqrt())).norm() < 1e-14);
        let s = branch_sqrt_shift(&HermMatrix::zeros(3), &z).unwrap();
        assert!(max_abs(&(s - eye(3))) < 1e-14);
        let s = branch_sqrt_shift(&HermMatrix::from_real_diag(&[-1.0, 2.0]), &z).unwrap();
        assert!((s[(0, 0)] - real(2f64.sqrt())).norm() < 1e-14);
        assert!((s[(1, 1)] - real(5f64.sqrt())).norm() < 1e-14);
        let z = SpectralParam::new(real(1.0)).unwrap();
        assert!(branch_sqrt_shift(&HermMatrix::from_real_diag(&[1.0]), &z).is_err());
    }

    #[test]
    fn gz_examples() {
        let z = SpectralParam::new(real(-1.0)).unwrap();
        let g = gz_apply(&HermMatrix::from_real_diag(&[1.0]), &z).unwrap();
        assert!((g[(0, 0)] - real(0.5f64.sqrt())).norm() < 1e-14);
        let g = gz_apply(&HermMatrix::from_real_diag(&[-1.0, 1.0]), &z).unwrap();
        assert!(trace(&g).norm() < 1e-15);
        let g = gz_apply(&HermMatrix::zeros(2), &z).unwrap();
        assert_eq!(max_abs(&g), 0.0);
    }

    #[test]
    fn eig_count_examples() {
        assert_eq!(eig_count_below(&HermMatrix::from_real_diag(&[-1.0, 2.0]), 0.0).unwrap(), 1);
        assert_eq!(eig_count_below(&HermMatrix::from_real_diag(&[1.0, 2.0]), 0.0).unwrap(), 0);
        assert_eq!(eig_count_below(&HermMatrix::new(eye(3)).unwrap(), 1.0).unwrap(), 3);
    }

    #[test]
    fn polar_reconstructs() {
        let m = HermMatrix::new(from_real_rows(&[vec![1.0, 2.0], vec![2.0, -3.0]]).unwrap()).unwrap();
        let (h, u) = herm_polar(&m).unwrap();
        assert!(max_abs(&(&u * &h * &h - m.matrix())) < 1e-13);
        let (h, u) = herm_polar(&HermMatrix::zeros(2)).unwrap();
        assert_eq!(max_abs(&h) + max_abs(&u), 0.0);
    }
}
