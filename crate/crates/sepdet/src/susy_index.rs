//! The model operator D_A = d/dt + A(t), its supersymmetric pair
//! H₁ = D_A*D_A, H₂ = D_A D_A*, and the determinant, trace, spectral-shift and
//! index computations built on them.
//!
//! A(t) = A₋ + Σ s_k(t) M_k with scalar steps s_k rising from 0 to 1, so
//! A₊ = A₋ + Σ M_k. Then V₁ = A² − A', V₂ = A² + A', and both potentials tend
//! to A±² at ±∞; Jost solutions use those asymptotes.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFn, Interval};
use crate::matcore::{
    branch_sqrt_shift, checked_inverse, det, eye, gz_apply, gz_scalar, herm_eig, herm_polar, max_abs, real, rel_dev, trace,
    wavenumber, wrap_phase, zeros, CMatrix, DetValue, HermMatrix, SpectralParam, C64, I,
};
use crate::nystrom;
use crate::ode;
use crate::par::{self, Exec};
use crate::schrodinger::{bs_oracle_det, wronskian, JostPair, Numerics, COND_CAP};
use crate::semisep::{ReducedDet, SemiSepKernel};
use crate::volterra::{self, Side};

/// Largest phase increment accepted between neighbouring path samples.
const MAX_PHASE_STEP: f64 = 0.3;
const MAX_BISECT_DEPTH: u32 = 40;

#[derive(Clone, Debug, PartialEq)]
pub enum StepShape {
    /// (1 + tanh((t − center)/width)) / 2
    Tanh { center: f64, width: f64 },
    /// C³ polynomial step on [center − width, center + width]
    Smooth { center: f64, width: f64 },
    /// piecewise linear through (t, s); 0 before and s_last after (s_last should be 1)
    Table { t: Vec<f64>, s: Vec<f64> },
}

impl StepShape {
    pub fn value(&self, t: f64) -> f64 {
        match self {
            StepShape::Tanh { center, width } => 0.5 * (1.0 + ((t - center) / width).tanh()),
            StepShape::Smooth { center, width } => {
                let x = ((t - center) / width * 0.5 + 0.5).clamp(0.0, 1.0);
                x.powi(4) * (35.0 - 84.0 * x + 70.0 * x * x - 20.0 * x.powi(3))
            }
            StepShape::Table { t: ts, s } => {
                if t <= ts[0] {
                    return s[0];
                }
                if t >= ts[ts.len() - 1] {
                    return s[s.len() - 1];
                }
                let k = ts.partition_point(|&v| v <= t).clamp(1, ts.len() - 1);
                s[k - 1] + (s[k] - s[k - 1]) * (t - ts[k - 1]) / (ts[k] - ts[k - 1])
            }
        }
    }

    pub fn deriv(&self, t: f64) -> f64 {
        match self {
            StepShape::Tanh { center, width } => 0.5 / width / ((t - center) / width).cosh().powi(2),
            StepShape::Smooth { center, width } => {
                let x = (t - center) / width * 0.5 + 0.5;
                if !(0.0..=1.0).contains(&x) {
                    return 0.0;
                }
                140.0 * (x * (1.0 - x)).powi(3) * 0.5 / width
            }
            StepShape::Table { t: ts, s } => {
                if t < ts[0] || t > ts[ts.len() - 1] {
                    return 0.0;
                }
                let k = ts.partition_point(|&v| v <= t).clamp(1, ts.len() - 1);
                (s[k] - s[k - 1]) / (ts[k] - ts[k - 1])
            }
        }
    }

    /// Support of s', when compact.
    fn support(&self) -> Option<(f64, f64)> {
        match self {
            StepShape::Tanh { .. } => None,
            StepShape::Smooth { center, width } => Some((center - width, center + width)),
            StepShape::Table { t, .. } => Some((t[0], t[t.len() - 1])),
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        match self {
            StepShape::Tanh { .. } => vec![],
            StepShape::Smooth { center, width } => vec![center - width, center + width],
            StepShape::Table { t, .. } => t.clone(),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            StepShape::Tanh { width, .. } | StepShape::Smooth { width, .. } if !(*width > 0.0) => {
                Err(Error::Invalid("step width must be positive".into()))
            }
            StepShape::Table { t, s } => {
                if t.len() < 2 || t.len() != s.len() || t.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::Invalid("step table needs ≥ 2 increasing abscissae with matching values".into()));
                }
                if s[0] != 0.0 || (s[s.len() - 1] - 1.0).abs() > 1e-12 {
                    return Err(Error::Invalid("step table must rise from 0 to 1".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// A(t) = A₋ + B(t) sampled on a grid adapted to the steps.
#[derive(Clone, Debug)]
pub struct AProfile {
    a_minus: HermMatrix,
    a_plus: HermMatrix,
    terms: Vec<(StepShape, HermMatrix)>,
    a: GridFn,
    b: GridFn,
    db: GridFn,
}

impl AProfile {
    pub fn new(a_minus: HermMatrix, terms: Vec<(StepShape, HermMatrix)>, num: &Numerics) -> Result<Self> {
        let n = a_minus.dim();
        let mut a_plus = a_minus.matrix().clone();
        for (s, m) in &terms {
            s.validate()?;
            if m.dim() != n {
                return Err(Error::Shape(format!("step coefficient is {0}x{0}, A₋ is {n}x{n}", m.dim())));
            }
            a_plus += m.matrix();
        }
        let a_plus = HermMatrix::new(a_plus)?;
        let supports: Vec<Option<(f64, f64)>> = terms.iter().map(|(s, _)| s.support()).collect();
        let interval = if supports.is_empty() {
            Interval::finite(-1.0, 1.0)?
        } else if supports.iter().all(|s| s.is_some()) {
            let lo = supports.iter().flatten().map(|s| s.0).fold(f64::INFINITY, f64::min);
            let hi = supports.iter().flatten().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
            Interval::finite(lo, hi)?
        } else {
            Interval::real_line(num.radius)?
        };
        let bps: Vec<f64> = terms.iter().flat_map(|(s, _)| s.breakpoints()).collect();
        let grid = Grid::with_breakpoints(interval, &bps, num.panels, num.q)?;
        Self::on_grid(a_minus, a_plus, terms, grid)
    }

    fn on_grid(a_minus: HermMatrix, a_plus: HermMatrix, terms: Vec<(StepShape, HermMatrix)>, grid: Arc<Grid>) -> Result<Self> {
        let n = a_minus.dim();
        let b_of = |t: f64| terms.iter().fold(zeros(n, n), |acc, (s, m)| acc + m.matrix() * real(s.value(t)));
        let db_of = |t: f64| terms.iter().fold(zeros(n, n), |acc, (s, m)| acc + m.matrix() * real(s.deriv(t)));
        let b = GridFn::from_fn(grid.clone(), n, n, b_of)?;
        let db = GridFn::from_fn(grid, n, n, db_of)?;
        let a = b.map(n, n, |_, v| v + a_minus.matrix())?;
        Ok(AProfile { a_minus, a_plus, terms, a, b, db })
    }

    /// The same profile on the grid with every panel halved.
    pub fn refined(&self) -> Result<Self> {
        Self::on_grid(self.a_minus.clone(), self.a_plus.clone(), self.terms.clone(), self.grid().refined())
    }

    pub fn constant(a: HermMatrix, num: &Numerics) -> Result<Self> {
        Self::new(a, vec![], num)
    }

    /// A(t) = A₋ + (A₊ − A₋)(1 + tanh t)/2.
    pub fn tanh_step(a_minus: HermMatrix, a_plus: HermMatrix, num: &Numerics) -> Result<Self> {
        let m = HermMatrix::new(a_plus.matrix() - a_minus.matrix())?;
        Self::new(a_minus, vec![(StepShape::Tanh { center: 0.0, width: 1.0 }, m)], num)
    }

    pub fn dim(&self) -> usize {
        self.a_minus.dim()
    }

    pub fn a_minus(&self) -> &HermMatrix {
        &self.a_minus
    }

    pub fn a_plus(&self) -> &HermMatrix {
        &self.a_plus
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.a.grid()
    }

    pub fn a_values(&self) -> &GridFn {
        &self.a
    }

    pub fn b_values(&self) -> &GridFn {
        &self.b
    }

    pub fn deriv_values(&self) -> &GridFn {
        &self.db
    }

    pub fn a_at(&self, t: f64) -> CMatrix {
        let n = self.dim();
        self.terms.iter().fold(self.a_minus.matrix().clone(), |acc, (s, m)| acc + m.matrix() * real(s.value(t)))
            + zeros(n, n)
    }

    /// ∫‖A'(t)‖₁ dt on the grid.
    pub fn deriv_trace_norm(&self) -> Result<f64> {
        let g = self.grid();
        let mut acc = 0.0;
        for i in 0..g.len() {
            let e = herm_eig(&HermMatrix::new(self.db.at(i).clone())?)?;
            acc += g.weight(i) * e.values.iter().map(|l| l.abs()).sum::<f64>();
        }
        Ok(acc)
    }

    /// max |B(tᵢ) − ∫ₐ^{tᵢ} B'|.
    pub fn consistency_dev(&self) -> f64 {
        let g = self.grid();
        let n = self.dim();
        let cum = volterra::apply(g, Side::Left, self.db.values(), |_, _| eye(n));
        cum.iter().zip(self.b.values()).map(|(c, b)| max_abs(&(b - c))).fold(0.0, f64::max)
    }

    /// min |σ(A₊) ∪ σ(A₋)|
    pub fn min_abs_asymptotic_eig(&self) -> Result<f64> {
        let lm = herm_eig(&self.a_minus)?.values;
        let lp = herm_eig(&self.a_plus)?.values;
        Ok(lm.iter().chain(&lp).map(|l| l.abs()).fold(f64::INFINITY, f64::min))
    }

    pub fn build_susy(&self) -> Result<SusyPair> {
        SusyPair::new(self)
    }
}

/// Seeded 2-step profile with non-commuting Hermitian coefficients and
/// asymptotic eigenvalues bounded away from 0.
pub fn random_profile(n: usize, seed: u64, num: &Numerics) -> Result<AProfile> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut herm = |scale: f64| {
        let m = CMatrix::from_fn(n, n, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        HermMatrix::new((&m + m.adjoint()) * real(0.5 * scale)).expect("Hermitian part")
    };
    for _ in 0..64 {
        let a_minus = herm(1.5);
        let m1 = herm(1.0);
        let m2 = herm(1.0);
        let terms = vec![
            (StepShape::Tanh { center: -1.0, width: 0.5 }, m1),
            (StepShape::Tanh { center: 1.0, width: 0.7 }, m2),
        ];
        let p = AProfile::new(a_minus, terms, num)?;
        if p.min_abs_asymptotic_eig()? > 0.2 {
            return Ok(p);
        }
    }
    Err(Error::Invalid("no admissible random profile for this seed".into()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Which {
    H1,
    H2,
}

/// V₁ = A² − A', V₂ = A² + A' with their common asymptotes.
#[derive(Clone, Debug)]
pub struct SusyPair {
    pub v1: GridFn,
    pub v2: GridFn,
    pub q_minus: HermMatrix,
    pub q_plus: HermMatrix,
    a_minus: HermMatrix,
    da: GridFn,
}

impl SusyPair {
    fn new(p: &AProfile) -> Result<Self> {
        let n = p.dim();
        let sq = |h: &HermMatrix| HermMatrix::new(h.matrix() * h.matrix());
        let a2 = p.a.map(n, n, |_, a| a * a)?;
        let v1 = a2.map(n, n, |i, a2| a2 - p.db.at(i))?;
        let v2 = a2.map(n, n, |i, a2| a2 + p.db.at(i))?;
        Ok(SusyPair {
            v1,
            v2,
            q_minus: sq(&p.a_minus)?,
            q_plus: sq(&p.a_plus)?,
            a_minus: p.a_minus.clone(),
            da: p.db.clone(),
        })
    }

    pub fn dim(&self) -> usize {
        self.a_minus.dim()
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.v1.grid()
    }

    /// max |V₂ − V₁ − 2A'| over nodes.
    pub fn identity_dev(&self) -> f64 {
        (0..self.grid().len())
            .map(|i| max_abs(&(self.v2.at(i) - self.v1.at(i) - self.da.at(i) * real(2.0))))
            .fold(0.0, f64::max)
    }

    pub fn jost(&self, which: Which, z: SpectralParam) -> Result<JostPair> {
        let v = match which {
            Which::H1 => &self.v1,
            Which::H2 => &self.v2,
        };
        JostPair::solve(self.grid(), v.values(), &self.q_minus, &self.q_plus, z)
    }

    /// −2U_{A'}|A'|^{1/2} G₁(z) |A'|^{1/2} in semi-separable form.
    pub fn bs_kernel(&self, z: SpectralParam) -> Result<SemiSepKernel> {
        let pair = self.jost(Which::H1, z)?;
        self.bs_kernel_from(&pair)
    }

    pub fn bs_kernel_from(&self, pair: &JostPair) -> Result<SemiSepKernel> {
        let g = self.grid().clone();
        let n = self.dim();
        let (w1i, w2i) = (pair.w1_inv(), pair.w2_inv());
        let mut vals = [vec![], vec![], vec![], vec![]];
        for i in 0..g.len() {
            let (half, sgn) = herm_polar(&HermMatrix::new(self.da.at(i).clone())?)?;
            let left = &sgn * &half * real(-2.0);
            vals[0].push(&left * pair.at_z.plus.value(i));
            vals[1].push(-(w1i * pair.at_zbar.minus.value(i).adjoint() * &half));
            vals[2].push(&left * pair.at_z.minus.value(i));
            vals[3].push(w2i * pair.at_zbar.plus.value(i).adjoint() * &half);
        }
        let [f1, g1, f2, g2] = vals.map(|v| GridFn::new(g.clone(), n, n, v));
        SemiSepKernel::new(f1?, g1?, f2?, g2?)
    }

    /// det(I − K(z)) by the Volterra-only reduction path.
    pub fn det_lhs(&self, z: SpectralParam) -> Result<DetValue> {
        self.bs_kernel(z)?.det_h1(real(1.0))
    }

    /// −d/dz ln det(I − K(z)) from a 4-point central difference of log ratios.
    pub fn log_det_derivative(&self, z: SpectralParam) -> Result<C64> {
        let h = 1e-3 * z.z().norm().max(1.0);
        let at = |s: f64| self.det_lhs(SpectralParam::new(z.z() + h * s)?);
        let ln_ratio = |p: DetValue, m: DetValue| {
            let r = p.ratio(&m);
            C64::new(r.ln_abs, r.phase)
        };
        let d1 = ln_ratio(at(1.0)?, at(-1.0)?);
        let d2 = ln_ratio(at(2.0)?, at(-2.0)?);
        Ok(-(d1 * 8.0 - d2) / (12.0 * h))
    }

    /// ∫ tr(G₂(z,t,t) − G₁(z,t,t)) dt from the Weyl m-functions.
    pub fn green_diag_trace(&self, z: SpectralParam) -> Result<C64> {
        let p1 = self.jost(Which::H1, z)?;
        let p2 = self.jost(Which::H2, z)?;
        let g = self.grid();
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..g.len() {
            acc += trace(&(p2.green_diag_weyl(i)? - p1.green_diag_weyl(i)?)) * g.weight(i);
        }
        Ok(acc)
    }
}

pub fn build_susy(profile: &AProfile) -> Result<SusyPair> {
    profile.build_susy()
}

pub fn susy_bs_kernel(profile: &AProfile, z: SpectralParam) -> Result<SemiSepKernel> {
    profile.build_susy()?.bs_kernel(z)
}

#[derive(Clone, Debug)]
pub struct DetFormula {
    pub lhs_reduced: C64,
    /// Nyström value extrapolated from the grid and its refinement
    pub lhs_oracle: C64,
    /// |oracle(2P) − oracle(P)|, the raw refinement shift
    pub oracle_shift: f64,
    pub rhs: C64,
    pub rel_err: f64,
    pub reduced: ReducedDet,
}

/// det(z⁻¹[(A₊² − z)^{1/2} + A₊][A₋ − (A₋² − z)^{1/2}]), sign fixed by the constant path.
pub fn det_formula_rhs(a_minus: &HermMatrix, a_plus: &HermMatrix, z: SpectralParam) -> Result<C64> {
    if z.z().norm() < 1e-8 {
        return Err(Error::Invalid("determinant formula needs |z| ≥ 1e-8".into()));
    }
    let sp = branch_sqrt_shift(a_plus, &z)?;
    let sm = branch_sqrt_shift(a_minus, &z)?;
    let m = (sp + a_plus.matrix()) * (a_minus.matrix() - sm) / z.z();
    Ok(det(&m)?.value)
}

pub fn det_formula(profile: &AProfile, z: SpectralParam, exec: Exec) -> Result<DetFormula> {
    let susy = profile.build_susy()?;
    let kernel = susy.bs_kernel(z)?;
    let reduced = kernel.reduced_det(real(1.0))?;
    let coarse = bs_oracle_det(&kernel, exec)?.value;
    let fine = bs_oracle_det(&profile.refined()?.build_susy()?.bs_kernel(z)?, exec)?.value;
    let lhs_oracle = nystrom::extrapolate_h3(coarse, fine);
    let rhs = det_formula_rhs(&profile.a_minus, &profile.a_plus, z)?;
    let lhs_reduced = reduced.value();
    Ok(DetFormula {
        lhs_reduced,
        lhs_oracle,
        oracle_shift: (fine - coarse).norm(),
        rhs,
        rel_err: rel_dev(lhs_reduced, rhs).max(rel_dev(lhs_oracle, rhs)),
        reduced,
    })
}

#[derive(Clone, Copy, Debug)]
pub struct TraceFormula {
    /// ∫ tr(G₂ − G₁) on the diagonal
    pub green_diag: C64,
    /// −d/dz ln det(I − K(z))
    pub log_deriv: C64,
    /// (2z)⁻¹ tr(g_z(A₊) − g_z(A₋))
    pub rhs: C64,
    pub rel_err: f64,
}

pub fn trace_formula_rhs(a_minus: &HermMatrix, a_plus: &HermMatrix, z: SpectralParam) -> Result<C64> {
    Ok(trace(&(gz_apply(a_plus, &z)? - gz_apply(a_minus, &z)?)) / (z.z() * 2.0))
}

pub fn trace_formula(profile: &AProfile, z: SpectralParam) -> Result<TraceFormula> {
    let susy = profile.build_susy()?;
    let green_diag = susy.green_diag_trace(z)?;
    let log_deriv = susy.log_det_derivative(z)?;
    let rhs = trace_formula_rhs(&profile.a_minus, &profile.a_plus, z)?;
    // relative to the largest value, so that A₊ = A₋ (all zero) is not penalized
    let scale = green_diag.norm().max(log_deriv.norm()).max(rhs.norm()).max(1e-300);
    let rel_err = [(green_diag - log_deriv).norm(), (green_diag - rhs).norm(), (log_deriv - rhs).norm()]
        .into_iter()
        .fold(0.0, f64::max)
        / scale;
    Ok(TraceFormula { green_diag, log_deriv, rhs, rel_err })
}

/// ξ(·; A₊, A₋) = #{σ(A₋) ≤ λ} − #{σ(A₊) ≤ λ} as a step function.
#[derive(Clone, Debug, PartialEq)]
pub struct XiStep {
    minus: Vec<f64>,
    plus: Vec<f64>,
    /// sorted distinct eigenvalues of A₋ and A₊
    pub breaks: Vec<f64>,
    /// value on [breaks[k], breaks[k+1]); 0 outside
    pub values: Vec<i64>,
}

impl XiStep {
    pub fn new(a_plus: &HermMatrix, a_minus: &HermMatrix) -> Result<Self> {
        let minus = herm_eig(a_minus)?.values;
        let plus = herm_eig(a_plus)?.values;
        let mut breaks: Vec<f64> = minus.iter().chain(&plus).copied().collect();
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        let mut s = XiStep { minus, plus, breaks, values: vec![] };
        s.values = s.breaks.windows(2).map(|w| s.at(0.5 * (w[0] + w[1]))).collect();
        Ok(s)
    }

    pub fn from_profile(p: &AProfile) -> Result<Self> {
        Self::new(&p.a_plus, &p.a_minus)
    }

    pub fn at(&self, lambda: f64) -> i64 {
        let count = |v: &[f64]| v.iter().filter(|&&l| l <= lambda).count() as i64;
        count(&self.minus) - count(&self.plus)
    }

    /// (a, b, value) for the nonzero steps.
    pub fn intervals(&self) -> impl Iterator<Item = (f64, f64, i64)> + '_ {
        self.breaks.windows(2).zip(&self.values).filter(|(_, &v)| v != 0).map(|(w, &v)| (w[0], w[1], v))
    }

    /// Smallest gap between distinct eigenvalues (1 when there is none).
    pub fn min_gap(&self) -> f64 {
        self.breaks.windows(2).map(|w| w[1] - w[0]).fold(1.0, f64::min)
    }

    pub fn is_eigenvalue(&self, lambda: f64) -> bool {
        self.breaks.iter().any(|&b| b == lambda)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct GzTrace {
    pub direct: C64,
    pub via_xi: C64,
}

/// tr(g_z(A₊) − g_z(A₋)) directly and as −z∫ξ(ν)(ν² − z)^{−3/2}dν, the latter
/// summed in closed form: −z(ν² − z)^{−3/2} = d/dν g_z(ν).
pub fn gz_trace(profile: &AProfile, z: SpectralParam) -> Result<GzTrace> {
    let direct = trace(&(gz_apply(&profile.a_plus, &z)? - gz_apply(&profile.a_minus, &z)?));
    let step = XiStep::from_profile(profile)?;
    let mut via_xi = C64::new(0.0, 0.0);
    for (a, b, v) in step.intervals() {
        via_xi += (gz_scalar(b, z.z())? - gz_scalar(a, z.z())?) * v as f64;
    }
    Ok(GzTrace { direct, via_xi })
}

/// Follows arg f along the polyline, bisecting steps that turn by more than
/// MAX_PHASE_STEP, and returns the accumulated argument at the endpoint
/// (starting from the principal argument at the first vertex).
pub fn unwound_arg(path: &[C64], f: impl Fn(C64) -> Result<DetValue>) -> Result<f64> {
    fn walk(f: &dyn Fn(C64) -> Result<DetValue>, z0: C64, p0: f64, z1: C64, p1: f64, depth: u32) -> Result<f64> {
        let step = wrap_phase(p1 - p0);
        if step.abs() <= MAX_PHASE_STEP {
            return Ok(step);
        }
        if depth >= MAX_BISECT_DEPTH {
            return Err(Error::Unwind { re: z1.re, im: z1.im });
        }
        let zm = 0.5 * (z0 + z1);
        let pm = f(zm)?.phase;
        Ok(walk(f, z0, p0, zm, pm, depth + 1)? + walk(f, zm, pm, z1, p1, depth + 1)?)
    }
    let first = path.first().ok_or_else(|| Error::Invalid("empty path".into()))?;
    let mut p = f(*first)?.phase;
    let mut arg = p;
    for w in path.windows(2) {
        let p1 = f(w[1])?.phase;
        arg += walk(&f, w[0], p, w[1], p1, 0)?;
        p = p1;
    }
    Ok(arg)
}

/// λ + it for t geometric from y down to eps. Each of the `factors` scalar
/// factors a − λ − it turns by at most ½ ln(ratio) per step, so the phase of
/// the product can't alias a full turn between vertices even when both ends
/// sit on the same branch.
fn vertical_path(l: f64, y: f64, eps: f64, factors: usize) -> Vec<C64> {
    let ln_ratio = 0.4 / factors.max(1) as f64;
    let steps = ((y / eps).ln() / ln_ratio).ceil().max(1.0) as usize;
    (0..=steps).map(|k| C64::new(l, y * (eps / y).powf(k as f64 / steps as f64))).collect()
}

/// det((A₊ − z)(A₋ − z)⁻¹)
fn finite_perturbation_det(a_plus: &HermMatrix, a_minus: &HermMatrix, z: C64) -> Result<DetValue> {
    let n = a_plus.dim();
    let ap = det(&(a_plus.matrix() - eye(n) * z))?;
    let am = det(&(a_minus.matrix() - eye(n) * z))?;
    Ok(ap.ratio(&am))
}

#[derive(Clone, Debug)]
pub struct XiA {
    pub step: XiStep,
    pub lambdas: Vec<f64>,
    pub counting: Vec<i64>,
    /// π⁻¹ Im ln det((A₊ − λ − iε)(A₋ − λ − iε)⁻¹), unwound from λ + iY
    pub boundary: Vec<f64>,
    pub eps: f64,
}

pub fn xi_a(profile: &AProfile, lambdas: &[f64]) -> Result<XiA> {
    let step = XiStep::from_profile(profile)?;
    let eps = 1e-6 * step.min_gap();
    let spread = step.breaks.iter().fold(1.0f64, |m, b| m.max(b.abs()));
    let y = 1e4 * spread;
    let mut counting = Vec::with_capacity(lambdas.len());
    let mut boundary = Vec::with_capacity(lambdas.len());
    for &l0 in lambdas {
        let l = if step.is_eigenvalue(l0) { l0 + 1e-12 } else { l0 };
        counting.push(step.at(l));
        let arg = unwound_arg(&vertical_path(l, y, eps, 2 * profile.dim()), |z| {
            finite_perturbation_det(&profile.a_plus, &profile.a_minus, z)
        })?;
        boundary.push(arg / PI);
    }
    Ok(XiA { step, lambdas: lambdas.to_vec(), counting, boundary, eps })
}

/// d/dz ln det((A₊ − z)(A₋ − z)⁻¹) by differences, against ∫ξ(λ)(λ − z)⁻²dλ in closed form.
pub fn xi_a_resolvent_check(profile: &AProfile, z: C64) -> Result<(C64, C64)> {
    let h = 1e-3 * z.norm().max(1.0);
    let at = |s: f64| finite_perturbation_det(&profile.a_plus, &profile.a_minus, z + h * s);
    let ln_ratio = |p: DetValue, m: DetValue| {
        let r = p.ratio(&m);
        C64::new(r.ln_abs, r.phase)
    };
    let lhs = (ln_ratio(at(1.0)?, at(-1.0)?) * 8.0 - ln_ratio(at(2.0)?, at(-2.0)?)) / (12.0 * h);
    let step = XiStep::from_profile(profile)?;
    let rhs = step
        .intervals()
        .map(|(a, b, v)| (C64::new(1.0, 0.0) / (a - z) - C64::new(1.0, 0.0) / (b - z)) * v as f64)
        .sum();
    Ok((lhs, rhs))
}

/// ξ(λ; H₂, H₁) = π⁻¹∫_{−√λ}^{√λ} ξ(ν; A₊, A₋)(λ − ν²)^{−1/2}dν, closed form per step.
pub fn xi_h_via_abel(step: &XiStep, lambdas: &[f64]) -> Vec<f64> {
    lambdas
        .iter()
        .map(|&l| {
            if l <= 0.0 {
                return 0.0;
            }
            let s = l.sqrt();
            let asin = |nu: f64| (nu / s).clamp(-1.0, 1.0).asin();
            step.intervals().map(|(a, b, v)| v as f64 * (asin(b) - asin(a))).sum::<f64>() / PI
        })
        .collect()
}

/// ξ(λ; H₂, H₁) = π⁻¹ Im ln det(I − K(λ + iε)), the branch fixed at z = −1
/// and unwound along −1 → −1 + i → λ + i → λ + iε.
pub fn xi_h_via_boundary(profile: &AProfile, lambdas: &[f64], eps: f64, exec: Exec) -> Result<Vec<f64>> {
    if !(eps > 0.0) {
        return Err(Error::Invalid("ε must be positive".into()));
    }
    let susy = profile.build_susy()?;
    let start = susy.det_lhs(SpectralParam::new(real(-1.0))?)?;
    if start.phase.abs() > 1e-8 || start.value.re <= 0.0 {
        return Err(Error::Unwind { re: -1.0, im: 0.0 });
    }
    par::try_map_range(exec, lambdas.len(), |k| {
        let l = lambdas[k];
        if l <= 0.0 {
            return Ok(0.0);
        }
        let path = [real(-1.0), C64::new(-1.0, 1.0), C64::new(l, 1.0), C64::new(l, eps)];
        Ok(unwound_arg(&path, |z| susy.det_lhs(SpectralParam::new(z)?))? / PI)
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IndexVia {
    pub xi_a0: i64,
    pub xi_h0plus: i64,
    pub winding: i64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IndexReport {
    pub index: i64,
    pub via: IndexVia,
    /// raw values before rounding: ξ_H(0₊) extrapolation and the winding number
    pub raw: (f64, f64),
}

fn exact_integer(x: f64, what: &str) -> Result<i64> {
    let r = x.round();
    if (x - r).abs() > 1e-6 {
        return Err(Error::Invalid(format!("{what} = {x} is not an integer")));
    }
    Ok(r as i64)
}

/// Fredholm gate: 0 must lie in the resolvent set of A₊ and A₋.
pub fn fredholm_gate(profile: &AProfile) -> Result<f64> {
    let m = profile.min_abs_asymptotic_eig()?;
    if !(m > 1e-10) {
        return Err(Error::NotFredholm(m));
    }
    Ok(m)
}

pub fn fredholm_index(profile: &AProfile) -> Result<IndexReport> {
    let gap = fredholm_gate(profile)?;
    let step = XiStep::from_profile(profile)?;
    let xi_a0 = step.at(0.0);
    let (l1, l2) = ((gap / 2.0).powi(2), (gap / 4.0).powi(2));
    let v = xi_h_via_abel(&step, &[l1, l2]);
    let (s1, s2) = (l1.sqrt(), l2.sqrt());
    let h0 = (s1 * v[1] - s2 * v[0]) / (s1 - s2);
    let eps = 1e-10 * gap;
    let y = 1e4 * step.breaks.iter().fold(1.0f64, |m, b| m.max(b.abs()));
    let winding = unwound_arg(&vertical_path(0.0, y, eps, 2 * profile.dim()), |z| {
        finite_perturbation_det(&profile.a_plus, &profile.a_minus, z)
    })? / PI;
    let via = IndexVia {
        xi_a0,
        xi_h0plus: exact_integer(h0, "ξ_H(0₊)")?,
        winding: exact_integer(winding, "winding number")?,
    };
    if via.xi_h0plus != xi_a0 || via.winding != xi_a0 {
        return Err(Error::Invalid(format!("index routes disagree: {via:?}")));
    }
    Ok(IndexReport { index: xi_a0, via, raw: (h0, winding) })
}

/// (dim ker D_A, dim ker D_A*) from decaying solutions of f' = ∓A f:
/// subspaces decaying at each end are propagated to the midpoint and intersected.
pub fn kernel_dims(profile: &AProfile) -> Result<(usize, usize)> {
    fredholm_gate(profile)?;
    let g = profile.grid();
    let (a, b) = (g.a(), g.b());
    let mid = 0.5 * (a + b);
    let n = profile.dim();
    let em = herm_eig(&profile.a_minus)?;
    let ep = herm_eig(&profile.a_plus)?;
    let cols = |e: &crate::matcore::HermEig, pick: &dyn Fn(f64) -> bool| -> CMatrix {
        let idx: Vec<usize> = (0..n).filter(|&k| pick(e.values[k])).collect();
        CMatrix::from_fn(n, idx.len(), |r, c| e.vectors[(r, idx[c])])
    };
    let transport = |y0: CMatrix, from: f64, sign: f64| -> Result<CMatrix> {
        if y0.ncols() == 0 {
            return Ok(y0);
        }
        let pts: Vec<f64> = (0..=64).map(|k| from + (mid - from) * k as f64 / 64.0).collect();
        let ys = ode::propagate(&pts, y0, |t| Ok(profile.a_at(t) * real(sign)), 1e-12, 4)?;
        Ok(ys[ys.len() - 1].clone())
    };
    let intersect = |u: CMatrix, v: CMatrix| -> usize {
        let (p, q) = (u.ncols(), v.ncols());
        if p == 0 || q == 0 {
            return 0;
        }
        let orth = |m: CMatrix| {
            let k = m.ncols();
            m.svd(true, false).u.expect("left singular vectors").columns(0, k).into_owned()
        };
        let (u, v) = (orth(u), orth(v));
        let mut w = zeros(n, p + q);
        w.columns_mut(0, p).copy_from(&u);
        w.columns_mut(p, q).copy_from(&v);
        let rank = w.singular_values().iter().filter(|&&s| s > 1e-6).count();
        p + q - rank
    };
    // ker D_A: f' = −A f; decays at −∞ on σ(A₋) < 0, at +∞ on σ(A₊) > 0
    let ker_d = intersect(transport(cols(&em, &|l| l < 0.0), a, -1.0)?, transport(cols(&ep, &|l| l > 0.0), b, -1.0)?);
    // ker D_A*: f' = A f; decays at −∞ on σ(A₋) > 0, at +∞ on σ(A₊) < 0
    let ker_dstar = intersect(transport(cols(&em, &|l| l > 0.0), a, 1.0)?, transport(cols(&ep, &|l| l < 0.0), b, 1.0)?);
    Ok((ker_d, ker_dstar))
}

#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityResiduals {
    /// f₂,± from their own Volterra equations vs (D_A f₁,±)[±ik± + A±]⁻¹
    pub jost_map: f64,
    /// W((D_A f₁,₋(z̄))*, D_A f₁,₊) against z·W(f₁,₋(z̄)*, f₁,₊)
    pub wronskian_scaling: f64,
    /// f₂,± against the Volterra relations through the H₁ solution kernel
    pub volterra_link: f64,
    /// Wronskians of the f₂ family from those of f₁ plus the A' integrals
    pub wronskian_transfer: f64,
}

impl IdentityResiduals {
    pub fn max(&self) -> f64 {
        self.jost_map.max(self.wronskian_scaling).max(self.volterra_link).max(self.wronskian_transfer)
    }
}

fn node_rel(a: &CMatrix, b: &CMatrix) -> f64 {
    max_abs(&(a - b)) / max_abs(a).max(max_abs(b)).max(1e-300)
}

pub fn identity_suite(profile: &AProfile, z: SpectralParam) -> Result<IdentityResiduals> {
    let susy = profile.build_susy()?;
    let g = susy.grid().clone();
    let len = g.len();
    let n = susy.dim();
    let p1 = susy.jost(Which::H1, z)?;
    let p2 = susy.jost(Which::H2, z)?;
    let zv = z.z();
    let a = |i: usize| profile.a.at(i);
    let da = |i: usize| profile.db.at(i);

    // Jost map
    let kp = wavenumber(&profile.a_plus, &z)?;
    let km = wavenumber(&profile.a_minus, &z)?;
    let rp = checked_inverse(&(&kp * I + profile.a_plus.matrix()), "ik₊ + A₊", COND_CAP)?;
    let rm = checked_inverse(&(profile.a_minus.matrix() - &km * I), "−ik₋ + A₋", COND_CAP)?;
    let mut jost_map: f64 = 0.0;
    for i in 0..len {
        let (f, df) = (p1.at_z.plus.value(i), p1.at_z.plus.deriv(i));
        jost_map = jost_map.max(node_rel(&p2.at_z.plus.value(i), &((df + a(i) * f) * &rp)));
        let (f, df) = (p1.at_z.minus.value(i), p1.at_z.minus.deriv(i));
        jost_map = jost_map.max(node_rel(&p2.at_z.minus.value(i), &((df + a(i) * f) * &rm)));
    }

    // Wronskian scaling at five spread nodes
    let mut wronskian_scaling: f64 = 0.0;
    for s in 0..5 {
        let i = s * (len - 1) / 4;
        let (fm, dfm) = (p1.at_zbar.minus.value(i), p1.at_zbar.minus.deriv(i));
        let (fp, dfp) = (p1.at_z.plus.value(i), p1.at_z.plus.deriv(i));
        let a2 = a(i) * a(i);
        let dm = (&dfm + a(i) * &fm).adjoint();
        let ddm = ((&a2 - eye(n) * zv.conj()) * &fm + a(i) * &dfm).adjoint();
        let dp = &dfp + a(i) * &fp;
        let ddp = (&a2 - eye(n) * zv) * &fp + a(i) * &dfp;
        let lhs = wronskian(&dm, &ddm, &dp, &ddp);
        let rhs = wronskian(&fm.adjoint(), &dfm.adjoint(), &fp, &dfp) * zv;
        wronskian_scaling = wronskian_scaling.max(node_rel(&lhs, &rhs));
    }

    // Volterra relations with g(t,t') = f₁₊(t)W₁⁻¹f₁₋(z̄,t')* + f₁₋(t)W₂⁻¹f₁₊(z̄,t')*
    let f1p: Vec<CMatrix> = (0..len).map(|i| p1.at_z.plus.value(i)).collect();
    let f1m: Vec<CMatrix> = (0..len).map(|i| p1.at_z.minus.value(i)).collect();
    let f1m_bar: Vec<CMatrix> = (0..len).map(|i| p1.at_zbar.minus.value(i).adjoint() * da(i) * real(2.0)).collect();
    let f1p_bar: Vec<CMatrix> = (0..len).map(|i| p1.at_zbar.plus.value(i).adjoint() * da(i) * real(2.0)).collect();
    let f2p: Vec<CMatrix> = (0..len).map(|i| p2.at_z.plus.value(i)).collect();
    let f2m: Vec<CMatrix> = (0..len).map(|i| p2.at_z.minus.value(i)).collect();
    let kern = |i: usize, j: usize| &f1p[i] * p1.w1_inv() * &f1m_bar[j] + &f1m[i] * p1.w2_inv() * &f1p_bar[j];
    let ip = volterra::apply(&g, Side::Right, &f2p, kern);
    let im = volterra::apply(&g, Side::Left, &f2m, kern);
    let mut volterra_link: f64 = 0.0;
    for i in 0..len {
        volterra_link = volterra_link.max(node_rel(&f2p[i], &(&f1p[i] - &ip[i])));
        volterra_link = volterra_link.max(node_rel(&f2m[i], &(&f1m[i] + &im[i])));
    }

    // Wronskian transfer
    let mut sp = zeros(n, n);
    let mut sm = zeros(n, n);
    for i in 0..len {
        sp += &f1m_bar[i] * &f2p[i] * real(g.weight(i));
        sm += &f1p_bar[i] * &f2m[i] * real(g.weight(i));
    }
    let wronskian_transfer = node_rel(&p2.w1, &(&p1.w1 - sp)).max(node_rel(&p2.w2, &(&p1.w2 + sm)));

    Ok(IdentityResiduals { jost_map, wronskian_scaling, volterra_link, wronskian_transfer })
}

/// Nyström trace of K(z) against the trace of its semi-separable form.
pub fn bs_kernel_trace_check(profile: &AProfile, z: SpectralParam, exec: Exec) -> Result<(C64, C64)> {
    let k = susy_bs_kernel(profile, z)?;
    let n = profile.dim();
    let d = nystrom::discretize_split_nodes(exec, |i, j| k.lower_node(i, j), |i, j| k.upper_node(i, j), k.grid(), n)?;
    Ok((nystrom::oracle_trace(&d), k.kernel_trace().via_g1f1))
}
