//! Matrix Schrödinger operators −d²/dx² + V on the line: Jost solutions and
//! functions, the Birman–Schwinger kernel, Weyl m-functions and Green's functions.
//!
//! Jost solutions are computed for a potential that equals constant Hermitian
//! matrices Q₋ / Q₊ to the left / right of the grid (Q± = 0 for short-range
//! potentials, A±² for the supersymmetric pair). In the eigenbasis of Q± each
//! channel c has wavenumber k_c = [z − q_c]^{1/2}, and the stabilized variables
//! m = f̃ e^{∓iκt}, d = f̃' e^{∓iκt} solve bounded Volterra equations.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFn, Interval};
use crate::matcore::{
    checked_inverse, det, diag, eye, herm_eig, herm_polar, rel_dev, rel_dev_mat, sqrt_imnonneg, zeros, CMatrix,
    DetValue, HermMatrix, SpectralParam, C64, I,
};
use crate::nystrom;
use crate::ode;
use crate::par::{self, Exec};
use crate::semisep::{ReducedDet, SemiSepKernel};
use crate::volterra::{self, Side};

/// Condition cap for inverting Jost values and Wronskians.
pub const COND_CAP: f64 = 1e12;

#[derive(Clone, Debug, PartialEq)]
pub enum Shape {
    Zero,
    /// height on [lo, hi]
    Square { height: f64, lo: f64, hi: f64 },
    /// height·exp(−((x−center)/width)²)
    Gaussian { height: f64, center: f64, width: f64 },
    /// height·sech²((x−center)/width)
    Sech2 { height: f64, center: f64, width: f64 },
    /// piecewise linear through (x, y), zero outside
    Table { x: Vec<f64>, y: Vec<f64> },
}

impl Shape {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Shape::Zero => 0.0,
            Shape::Square { height, lo, hi } => {
                if x >= *lo && x <= *hi {
                    *height
                } else {
                    0.0
                }
            }
            Shape::Gaussian { height, center, width } => height * (-((x - center) / width).powi(2)).exp(),
            Shape::Sech2 { height, center, width } => height / ((x - center) / width).cosh().powi(2),
            Shape::Table { x: xs, y } => {
                if xs.is_empty() || x < xs[0] || x > xs[xs.len() - 1] {
                    return 0.0;
                }
                let k = xs.partition_point(|&v| v <= x).clamp(1, xs.len() - 1);
                let (x0, x1) = (xs[k - 1], xs[k]);
                if x1 == x0 {
                    return y[k];
                }
                y[k - 1] + (y[k] - y[k - 1]) * (x - x0) / (x1 - x0)
            }
        }
    }

    /// Compact support, if any (Zero has empty support).
    pub fn support(&self) -> Option<(f64, f64)> {
        match self {
            Shape::Square { lo, hi, .. } => Some((*lo, *hi)),
            Shape::Table { x, .. } if !x.is_empty() => Some((x[0], x[x.len() - 1])),
            _ => None,
        }
    }

    pub fn is_compact(&self) -> bool {
        matches!(self, Shape::Zero | Shape::Square { .. } | Shape::Table { .. })
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            Shape::Square { lo, hi, .. } => vec![*lo, *hi],
            Shape::Table { x, .. } => x.clone(),
            _ => vec![],
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Invalid(m.to_string()));
        match self {
            Shape::Square { height, lo, hi } if !(lo < hi) || !height.is_finite() => bad("square needs lo < hi"),
            Shape::Gaussian { width, .. } | Shape::Sech2 { width, .. } if !(*width > 0.0) => bad("width must be positive"),
            Shape::Table { x, y } if x.len() != y.len() || x.len() < 2 || x.windows(2).any(|w| w[1] < w[0]) => {
                bad("table needs ≥ 2 nondecreasing nodes with matching values")
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum PotentialSpec {
    Scalar(Shape),
    /// diag(shape₁(x), …, shapeₙ(x))
    Diag(Vec<Shape>),
    /// Σ shape_k(x)·M_k with Hermitian M_k
    Dense(Vec<(Shape, CMatrix)>),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Numerics {
    pub radius: f64,
    pub panels: usize,
    pub q: usize,
}

impl Default for Numerics {
    fn default() -> Self {
        Numerics { radius: 10.0, panels: 32, q: 8 }
    }
}

impl PotentialSpec {
    fn shapes(&self) -> Vec<&Shape> {
        match self {
            PotentialSpec::Scalar(s) => vec![s],
            PotentialSpec::Diag(v) => v.iter().collect(),
            PotentialSpec::Dense(v) => v.iter().map(|(s, _)| s).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            PotentialSpec::Scalar(_) => 1,
            PotentialSpec::Diag(v) => v.len(),
            PotentialSpec::Dense(v) => v.first().map_or(1, |(_, m)| m.nrows()),
        }
    }

    pub fn is_compact(&self) -> bool {
        self.shapes().iter().all(|s| s.is_compact())
    }

    pub fn eval(&self, x: f64) -> CMatrix {
        match self {
            PotentialSpec::Scalar(s) => CMatrix::from_element(1, 1, C64::new(s.eval(x), 0.0)),
            PotentialSpec::Diag(v) => diag(&v.iter().map(|s| C64::new(s.eval(x), 0.0)).collect::<Vec<_>>()),
            PotentialSpec::Dense(v) => {
                let n = self.dim();
                v.iter().fold(zeros(n, n), |acc, (s, m)| acc + m * C64::new(s.eval(x), 0.0))
            }
        }
    }

    /// Builds on the support hull for compact potentials, else on [−R, R].
    pub fn build(&self, num: &Numerics) -> Result<MatrixPotential> {
        self.build_with_radius(num, num.radius)
    }

    pub fn build_with_radius(&self, num: &Numerics, radius: f64) -> Result<MatrixPotential> {
        let shapes = self.shapes();
        if shapes.is_empty() {
            return Err(Error::Invalid("potential has no components".into()));
        }
        for s in &shapes {
            s.validate()?;
        }
        if let PotentialSpec::Dense(v) = self {
            let n = self.dim();
            for (_, m) in v {
                if m.shape() != (n, n) {
                    return Err(Error::Shape("dense potential coefficients differ in size".into()));
                }
                HermMatrix::new(m.clone())?;
            }
        }
        let compact = self.is_compact();
        let interval = if compact {
            let sup: Vec<(f64, f64)> = shapes.iter().filter_map(|s| s.support()).collect();
            if sup.is_empty() {
                Interval::finite(0.0, 1.0)?
            } else {
                let lo = sup.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
                let hi = sup.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
                Interval::finite(lo, hi)?
            }
        } else {
            Interval::real_line(radius)?
        };
        let bps: Vec<f64> = shapes.iter().flat_map(|s| s.breakpoints()).collect();
        let grid = Grid::with_breakpoints(interval, &bps, num.panels, num.q)?;
        MatrixPotential::new(GridFn::from_fn(grid, self.dim(), self.dim(), |x| self.eval(x))?, compact)
    }
}

#[derive(Clone, Debug)]
pub struct MatrixPotential {
    n: usize,
    v: GridFn,
    compact: bool,
}

#[derive(Clone, Debug)]
pub struct FactorizedPotential {
    /// u = |V|^{1/2} U_V
    pub u: GridFn,
    /// v = |V|^{1/2}
    pub v: GridFn,
}

impl MatrixPotential {
    pub fn new(v: GridFn, compact: bool) -> Result<Self> {
        let (n, m) = v.shape();
        if n != m {
            return Err(Error::Shape("potential must be square".into()));
        }
        for val in v.values() {
            HermMatrix::new(val.clone())?;
        }
        Ok(MatrixPotential { n, v, compact })
    }

    pub fn zero(n: usize, interval: Interval, num: &Numerics) -> Result<Self> {
        let grid = Grid::uniform(interval, num.panels, num.q)?;
        Self::new(GridFn::zeros(grid, n, n), true)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.v.grid()
    }

    pub fn values(&self) -> &GridFn {
        &self.v
    }

    pub fn is_compact(&self) -> bool {
        self.compact
    }

    /// ∫‖V(x)‖₁ dx (trace norm).
    pub fn l1_norm(&self) -> Result<f64> {
        let g = self.grid();
        let mut acc = 0.0;
        for i in 0..g.len() {
            let e = herm_eig(&HermMatrix::new(self.v.at(i).clone())?)?;
            acc += g.weight(i) * e.values.iter().map(|l| l.abs()).sum::<f64>();
        }
        Ok(acc)
    }

    pub fn factorize(&self) -> Result<FactorizedPotential> {
        let g = self.grid().clone();
        let mut us = Vec::with_capacity(g.len());
        let mut vs = Vec::with_capacity(g.len());
        for val in self.v.values() {
            let (half, sgn) = herm_polar(&HermMatrix::new(val.clone())?)?;
            us.push(&half * sgn);
            vs.push(half);
        }
        Ok(FactorizedPotential { u: GridFn::new(g.clone(), self.n, self.n, us)?, v: GridFn::new(g, self.n, self.n, vs)? })
    }

    /// The potential interpolated onto the grid with every panel halved.
    pub fn refined(&self) -> Result<Self> {
        let fine = self.grid().refined();
        let vals = fine.nodes().iter().map(|&x| self.v.eval(x)).collect::<Result<Vec<_>>>()?;
        Self::new(GridFn::new(fine, self.n, self.n, vals)?, self.compact)
    }

    pub fn jost(&self, z: SpectralParam) -> Result<JostBundle> {
        JostBundle::new(self, z)
    }

    /// −u(x)G₀(z,x,x')v(x') in semi-separable form; exponentials centered at
    /// the grid midpoint (the products do not depend on the center).
    pub fn bs_kernel(&self, z: SpectralParam) -> Result<SemiSepKernel> {
        let z = z.off_cut(1e-14)?;
        let k = z.sqrt_z();
        let fac = self.factorize()?;
        let g = self.grid().clone();
        let x0 = 0.5 * (g.a() + g.b());
        let n = self.n;
        let half = I / (k * 2.0);
        let mut vals = [vec![], vec![], vec![], vec![]];
        for i in 0..g.len() {
            let e = (I * k * (g.node(i) - x0)).exp();
            let (u, v) = (fac.u.at(i), fac.v.at(i));
            vals[0].push(-u * e);
            vals[1].push(v * (half / e));
            vals[2].push(-u / e);
            vals[3].push(v * (half * e));
        }
        let [f1, g1, f2, g2] = vals.map(|v| GridFn::new(g.clone(), n, n, v));
        SemiSepKernel::new(f1?, g1?, f2?, g2?)
    }

    /// det(I − K(z)) by the reduction and by the Nyström oracle, against det F(z).
    pub fn verify_jost_identity(&self, z: SpectralParam, exec: Exec) -> Result<JostIdentity> {
        let kernel = self.bs_kernel(z)?;
        let reduced = kernel.reduced_det(C64::new(1.0, 0.0))?;
        let coarse = bs_oracle_det(&kernel, exec)?.value;
        let fine = bs_oracle_det(&self.refined()?.bs_kernel(z)?, exec)?.value;
        let lhs_oracle = nystrom::extrapolate_h3(coarse, fine);
        let jost = self.jost(z)?;
        let rhs = jost.det_f();
        let lhs_reduced = reduced.value();
        Ok(JostIdentity {
            lhs_reduced,
            lhs_oracle,
            rhs: rhs.value,
            rel_err: rel_dev(lhs_reduced, rhs.value).max(rel_dev(lhs_oracle, rhs.value)),
            oracle_shift: (fine - coarse).norm(),
            reduced,
            jost_consistency: jost.consistency(),
        })
    }

    pub fn weyl_m(&self, z: SpectralParam, x0: f64) -> Result<WeylM> {
        let bundle = self.jost(z)?;
        bundle.weyl_m(x0)
    }

    /// θ_α, φ_α with θ(x₀)=φ'(x₀)=cos α, −φ(x₀)=θ'(x₀)=sin α.
    pub fn fundamental_system(&self, z: C64, x0: f64, alpha: &HermMatrix) -> Result<FundamentalSystem> {
        let g = self.grid().clone();
        if !g.interval().contains(x0) {
            return Err(Error::OutOfRange { x: x0, a: g.a(), b: g.b() });
        }
        let n = self.n;
        let e = herm_eig(alpha)?;
        let cos = e.apply(|l| C64::new(l.cos(), 0.0));
        let sin = e.apply(|l| C64::new(l.sin(), 0.0));
        let mut y0 = zeros(2 * n, 2 * n);
        y0.view_mut((0, 0), (n, n)).copy_from(&cos);
        y0.view_mut((0, n), (n, n)).copy_from(&(-&sin));
        y0.view_mut((n, 0), (n, n)).copy_from(&sin);
        y0.view_mut((n, n), (n, n)).copy_from(&cos);
        let coef = |x: f64| -> Result<CMatrix> {
            let mut m = zeros(2 * n, 2 * n);
            m.view_mut((0, n), (n, n)).copy_from(&eye(n));
            m.view_mut((n, 0), (n, n)).copy_from(&(self.v.eval(x)? - eye(n) * z));
            Ok(m)
        };
        let nodes = g.nodes();
        let split = nodes.partition_point(|&x| x < x0);
        let mut fwd = vec![x0];
        fwd.extend_from_slice(&nodes[split..]);
        let mut bwd = vec![x0];
        bwd.extend(nodes[..split].iter().rev());
        let yf = ode::propagate(&fwd, y0.clone(), coef, 1e-12, 4)?;
        let yb = ode::propagate(&bwd, y0, coef, 1e-12, 4)?;
        let mut ys: Vec<CMatrix> = yb[1..].iter().rev().cloned().collect();
        ys.extend_from_slice(&yf[1..]);
        let block = |r: usize, c: usize| {
            GridFn::new(g.clone(), n, n, ys.iter().map(|y| y.view((r * n, c * n), (n, n)).into_owned()).collect())
        };
        Ok(FundamentalSystem { theta: block(0, 0)?, phi: block(0, 1)?, theta_d: block(1, 0)?, phi_d: block(1, 1)? })
    }

    /// det F(z) along a path, with the phase unwound in path order.
    pub fn det_profile(&self, zs: &[C64], exec: Exec) -> Result<Vec<ProfilePoint>> {
        let dets = par::try_map_range(exec, zs.len(), |i| Ok::<_, Error>(self.jost(SpectralParam::new(zs[i])?)?.det_f()))?;
        Ok(unwind(zs, &dets))
    }

    /// Real-axis bound states: sign changes of det F(λ) on a λ-grid below 0,
    /// refined by bisection.
    pub fn bound_states(&self, lambdas: &[f64], tol: f64) -> Result<Vec<f64>> {
        let f = |l: f64| -> Result<f64> { Ok(self.jost(SpectralParam::new(C64::new(l, 0.0))?)?.det_f().value.re) };
        let vals = lambdas.iter().map(|&l| f(l)).collect::<Result<Vec<_>>>()?;
        let mut roots = vec![];
        for k in 1..lambdas.len() {
            if vals[k - 1].signum() != vals[k].signum() {
                roots.push(bisect(&f, lambdas[k - 1], lambdas[k], vals[k - 1], tol)?);
            }
        }
        Ok(roots)
    }

    /// Shooting residual u'(b) + κu(b) for −u'' + Vu = Eu started as e^{κx}
    /// on the left (scalar potentials; E < 0, κ = √−E).
    pub fn shooting_mismatch(&self, energy: f64) -> Result<f64> {
        if self.n != 1 || energy >= 0.0 {
            return Err(Error::Invalid("shooting oracle needs a scalar potential and E < 0".into()));
        }
        let kappa = (-energy).sqrt();
        let g = self.grid();
        let mut pts = vec![g.a()];
        pts.extend_from_slice(g.nodes());
        pts.push(g.b());
        let y0 = CMatrix::from_column_slice(2, 1, &[C64::new(1.0, 0.0), C64::new(kappa, 0.0)]);
        let ys = ode::propagate(
            &pts,
            y0,
            |x| {
                let v = self.v.eval(x)?[(0, 0)];
                Ok(CMatrix::from_row_slice(2, 2, &[C64::new(0.0, 0.0), C64::new(1.0, 0.0), v - energy, C64::new(0.0, 0.0)]))
            },
            1e-12,
            4,
        )?;
        let y = &ys[ys.len() - 1];
        // normalize away the exponential growth across the interval
        Ok(((y[(1, 0)] + y[(0, 0)] * kappa) / y[(0, 0)].norm().max(1e-300)).re)
    }
}

pub(crate) fn bisect(f: &impl Fn(f64) -> Result<f64>, mut lo: f64, mut hi: f64, mut flo: f64, tol: f64) -> Result<f64> {
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid)?;
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Unwinds det phases in path order.
pub fn unwind(zs: &[C64], dets: &[DetValue]) -> Vec<ProfilePoint> {
    let mut out: Vec<ProfilePoint> = Vec::with_capacity(zs.len());
    for (z, d) in zs.iter().zip(dets) {
        let arg = match out.last() {
            None => d.phase,
            Some(prev) => prev.arg + crate::matcore::wrap_phase(d.phase - prev.arg),
        };
        out.push(ProfilePoint { z: *z, det: d.value, ln_abs: d.ln_abs, arg });
    }
    out
}

/// Nyström det(I − K) for a kernel given by its factors (branch-wise product weights).
pub fn bs_oracle_det(kernel: &SemiSepKernel, exec: Exec) -> Result<DetValue> {
    let n = kernel.dims().0;
    let d = nystrom::discretize_split_nodes(exec, |i, j| kernel.lower_node(i, j), |i, j| kernel.upper_node(i, j), kernel.grid(), n)?;
    nystrom::oracle_det(&d, C64::new(1.0, 0.0))
}

#[derive(Clone, Copy, Debug)]
pub struct ProfilePoint {
    pub z: C64,
    pub det: C64,
    pub ln_abs: f64,
    pub arg: f64,
}

#[derive(Clone, Debug)]
pub struct JostIdentity {
    pub lhs_reduced: C64,
    /// Nyström value extrapolated from the grid and its refinement
    pub lhs_oracle: C64,
    pub rhs: C64,
    pub rel_err: f64,
    /// |oracle(2P) − oracle(P)|
    pub oracle_shift: f64,
    pub reduced: ReducedDet,
    pub jost_consistency: f64,
}

#[derive(Clone, Debug)]
pub struct FundamentalSystem {
    pub theta: GridFn,
    pub phi: GridFn,
    pub theta_d: GridFn,
    pub phi_d: GridFn,
}

#[derive(Clone, Debug)]
pub struct WeylM {
    pub m_plus: CMatrix,
    pub m_minus: CMatrix,
    /// [m₋ − m₊]⁻¹ = G(z,x₀,x₀)
    pub green_diag: CMatrix,
}

/// sin(w)/w, accurate near 0.
fn sinc(w: C64) -> C64 {
    if w.norm() < 1e-4 {
        C64::new(1.0, 0.0) - w * w / 6.0
    } else {
        w.sin() / w
    }
}

/// One Jost solution family (f₊ or f₋) in stabilized form.
#[derive(Clone, Debug)]
pub struct JostBranch {
    sign: f64,
    p: CMatrix,
    k: Vec<C64>,
    m: GridFn,
    d: GridFn,
    residual: f64,
}

impl JostBranch {
    fn solve(grid: &Arc<Grid>, v: &[CMatrix], q: &HermMatrix, z: C64, sign: f64) -> Result<Self> {
        let n = q.dim();
        let (p, qs) = eigenbasis(q)?;
        let k = qs
            .iter()
            .map(|&qc| {
                let w = z - qc;
                if w.norm() < 1e-12 {
                    Err(Error::BranchPoint(w.norm()))
                } else {
                    Ok(sqrt_imnonneg(w))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let pa = p.adjoint();
        let wt: Vec<CMatrix> = v.iter().map(|vi| &pa * (vi - q.matrix()) * &p).collect();
        let x = grid.nodes();
        let side = if sign > 0.0 { Side::Right } else { Side::Left };
        let mut m = vec![zeros(n, n); grid.len()];
        let mut d = vec![zeros(n, n); grid.len()];
        let mut residual: f64 = 0.0;
        let mut done = vec![false; n];
        for c0 in 0..n {
            if done[c0] {
                continue;
            }
            let kc = k[c0];
            let cols: Vec<usize> = (c0..n).filter(|&c| !done[c] && (k[c] - kc).norm() <= 1e-14 * (1.0 + kc.norm())).collect();
            for &c in &cols {
                done[c] = true;
            }
            let mut rhs0 = zeros(n, cols.len());
            for (l, &c) in cols.iter().enumerate() {
                rhs0[(c, l)] = C64::new(1.0, 0.0);
            }
            let rhs = vec![rhs0.clone(); grid.len()];
            let kern = |i: usize, j: usize, f: &dyn Fn(C64, f64) -> C64| -> CMatrix {
                let tau = sign * (x[j] - x[i]);
                let e = (I * kc * tau).exp();
                CMatrix::from_fn(n, n, |r, s| f(k[r], tau) * e * wt[j][(r, s)])
            };
            let kappa = |kr: C64, tau: f64| sinc(kr * tau) * tau;
            let cosk = |kr: C64, tau: f64| (kr * tau).cos();
            let sol = volterra::solve(grid, side, &rhs, |i, j| kern(i, j, &kappa))?;
            residual = residual.max(sol.residual);
            let dint = volterra::apply(grid, side, &sol.y, |i, j| kern(i, j, &cosk));
            let d0 = &rhs0 * (I * kc * sign);
            for i in 0..grid.len() {
                for (l, &c) in cols.iter().enumerate() {
                    m[i].set_column(c, &sol.y[i].column(l));
                    let di = &d0 - &dint[i] * C64::new(sign, 0.0);
                    d[i].set_column(c, &di.column(l));
                }
            }
        }
        Ok(JostBranch {
            sign,
            p,
            k,
            m: GridFn::new(grid.clone(), n, n, m)?,
            d: GridFn::new(grid.clone(), n, n, d)?,
            residual,
        })
    }

    fn phase(&self, t: f64) -> CMatrix {
        diag(&self.k.iter().map(|&kc| (I * kc * (self.sign * t)).exp()).collect::<Vec<_>>())
    }

    /// f(t_i) = P m e^{±iκt} P*
    pub fn value(&self, i: usize) -> CMatrix {
        let t = self.m.grid().node(i);
        &self.p * self.m.at(i) * self.phase(t) * self.p.adjoint()
    }

    pub fn deriv(&self, i: usize) -> CMatrix {
        let t = self.m.grid().node(i);
        &self.p * self.d.at(i) * self.phase(t) * self.p.adjoint()
    }

    pub fn value_at(&self, t: f64) -> Result<(CMatrix, CMatrix)> {
        let ph = self.phase(t);
        let pa = self.p.adjoint();
        Ok((&self.p * self.m.eval(t)? * &ph * &pa, &self.p * self.d.eval(t)? * ph * pa))
    }

    /// f' f⁻¹ at node i (exponentials cancel).
    pub fn log_deriv(&self, i: usize) -> Result<CMatrix> {
        Ok(&self.p * self.d.at(i) * checked_inverse(self.m.at(i), "Jost solution", COND_CAP)? * self.p.adjoint())
    }

    pub fn log_deriv_at(&self, t: f64) -> Result<CMatrix> {
        Ok(&self.p * self.d.eval(t)? * checked_inverse(&self.m.eval(t)?, "Jost solution", COND_CAP)? * self.p.adjoint())
    }

    pub fn stabilized(&self) -> (&GridFn, &GridFn) {
        (&self.m, &self.d)
    }

    pub fn wavenumbers(&self) -> &[C64] {
        &self.k
    }

    pub fn residual(&self) -> f64 {
        self.residual
    }
}

/// Eigenbasis of Q; diagonal Q keeps the identity basis (exact channel decoupling).
fn eigenbasis(q: &HermMatrix) -> Result<(CMatrix, Vec<f64>)> {
    let m = q.matrix();
    let n = q.dim();
    let off = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).all(|(i, j)| m[(i, j)] == C64::new(0.0, 0.0));
    if off {
        return Ok((eye(n), (0..n).map(|i| m[(i, i)].re).collect()));
    }
    let e = herm_eig(q)?;
    Ok((e.vectors, e.values))
}

/// Jost solutions f±(z,·) of −f'' + Vf = zf on the grid, for a potential
/// equal to Q∓ beyond the left/right end.
#[derive(Clone, Debug)]
pub struct JostSolutions {
    z: SpectralParam,
    grid: Arc<Grid>,
    pub plus: JostBranch,
    pub minus: JostBranch,
}

impl JostSolutions {
    pub fn solve(grid: &Arc<Grid>, v: &[CMatrix], q_minus: &HermMatrix, q_plus: &HermMatrix, z: SpectralParam) -> Result<Self> {
        let plus = JostBranch::solve(grid, v, q_plus, z.z(), 1.0)?;
        let minus = JostBranch::solve(grid, v, q_minus, z.z(), -1.0)?;
        Ok(JostSolutions { z, grid: grid.clone(), plus, minus })
    }

    pub fn z(&self) -> SpectralParam {
        self.z
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn residual(&self) -> f64 {
        self.plus.residual.max(self.minus.residual)
    }
}

/// W(φ, ψ) = φψ' − φ'ψ
pub fn wronskian(phi: &CMatrix, dphi: &CMatrix, psi: &CMatrix, dpsi: &CMatrix) -> CMatrix {
    phi * dpsi - dphi * psi
}

/// Jost solutions at z and z̄, with the Wronskians and the Green's function.
#[derive(Clone, Debug)]
pub struct JostPair {
    pub at_z: Arc<JostSolutions>,
    pub at_zbar: Arc<JostSolutions>,
    /// W(f₋(z̄)*, f₊(z))
    pub w1: CMatrix,
    /// W(f₊(z̄)*, f₋(z))
    pub w2: CMatrix,
    w1_inv: CMatrix,
    w2_inv: CMatrix,
}

impl JostPair {
    pub fn solve(grid: &Arc<Grid>, v: &[CMatrix], q_minus: &HermMatrix, q_plus: &HermMatrix, z: SpectralParam) -> Result<Self> {
        let at_z = Arc::new(JostSolutions::solve(grid, v, q_minus, q_plus, z)?);
        let at_zbar = if z.z().im == 0.0 {
            at_z.clone()
        } else {
            Arc::new(JostSolutions::solve(grid, v, q_minus, q_plus, z.conj())?)
        };
        let mid = grid.len() / 2;
        let w1 = Self::w1_at(&at_z, &at_zbar, mid);
        let w2 = Self::w2_at(&at_z, &at_zbar, mid);
        let eig_err = |w: &CMatrix| -> Error {
            Error::Eigenvalue { re: z.z().re, im: z.z().im, cond: crate::matcore::cond(w) }
        };
        let w1_inv = checked_inverse(&w1, "W1", COND_CAP).map_err(|_| eig_err(&w1))?;
        let w2_inv = checked_inverse(&w2, "W2", COND_CAP).map_err(|_| eig_err(&w2))?;
        Ok(JostPair { at_z, at_zbar, w1, w2, w1_inv, w2_inv })
    }

    fn w1_at(z: &JostSolutions, zb: &JostSolutions, i: usize) -> CMatrix {
        wronskian(&zb.minus.value(i).adjoint(), &zb.minus.deriv(i).adjoint(), &z.plus.value(i), &z.plus.deriv(i))
    }

    fn w2_at(z: &JostSolutions, zb: &JostSolutions, i: usize) -> CMatrix {
        wronskian(&zb.plus.value(i).adjoint(), &zb.plus.deriv(i).adjoint(), &z.minus.value(i), &z.minus.deriv(i))
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.at_z.grid
    }

    pub fn w1_inv(&self) -> &CMatrix {
        &self.w1_inv
    }

    pub fn w2_inv(&self) -> &CMatrix {
        &self.w2_inv
    }

    /// Relative variation of W₁ across 5 spread nodes.
    pub fn wronskian_spread(&self) -> f64 {
        let len = self.grid().len();
        (0..5)
            .map(|s| rel_dev_mat(&Self::w1_at(&self.at_z, &self.at_zbar, s * (len - 1) / 4), &self.w1))
            .fold(0.0, f64::max)
    }

    /// G(z,t_i,t_j) at nodes: −f₊(t)W₁⁻¹f₋(z̄,t')* for t ≥ t', f₋(t)W₂⁻¹f₊(z̄,t')* for t < t'.
    pub fn green_node(&self, i: usize, j: usize) -> CMatrix {
        if i >= j {
            self.green_lower(i, j)
        } else {
            self.green_upper(i, j)
        }
    }

    pub fn green_lower(&self, i: usize, j: usize) -> CMatrix {
        -(self.at_z.plus.value(i) * &self.w1_inv * self.at_zbar.minus.value(j).adjoint())
    }

    pub fn green_upper(&self, i: usize, j: usize) -> CMatrix {
        self.at_z.minus.value(i) * &self.w2_inv * self.at_zbar.plus.value(j).adjoint()
    }

    pub fn green(&self, t: f64, tp: f64) -> Result<CMatrix> {
        if t >= tp {
            let (fp, _) = self.at_z.plus.value_at(t)?;
            let (fm, _) = self.at_zbar.minus.value_at(tp)?;
            Ok(-(fp * &self.w1_inv * fm.adjoint()))
        } else {
            let (fm, _) = self.at_z.minus.value_at(t)?;
            let (fp, _) = self.at_zbar.plus.value_at(tp)?;
            Ok(fm * &self.w2_inv * fp.adjoint())
        }
    }

    /// ∂ₜG(t,t')|_{t=t'⁺} − ∂ₜG|_{t=t'⁻} at node i (should be −I).
    pub fn green_jump(&self, i: usize) -> CMatrix {
        let up = -(self.at_z.plus.deriv(i) * &self.w1_inv * self.at_zbar.minus.value(i).adjoint());
        let down = self.at_z.minus.deriv(i) * &self.w2_inv * self.at_zbar.plus.value(i).adjoint();
        up - down
    }

    /// G(z,t,t) = [m₋ − m₊]⁻¹ at node i.
    pub fn green_diag_weyl(&self, i: usize) -> Result<CMatrix> {
        let diff = self.at_z.minus.log_deriv(i)? - self.at_z.plus.log_deriv(i)?;
        checked_inverse(&diff, "m₋ − m₊", COND_CAP)
    }
}

/// Jost data for a short-range potential (Q± = 0).
#[derive(Clone, Debug)]
pub struct JostBundle {
    pub z: SpectralParam,
    pub pair: JostPair,
    /// F(z) = I − (2ik)⁻¹∫ e^{−ikx}V f₊
    pub jost_f: CMatrix,
    /// F(z) = I − (2ik)⁻¹∫ f₋(z̄)* V e^{ikx}
    pub jost_f_dual: CMatrix,
    /// (2ik)⁻¹ W(f₋(z̄)*, f₊(z))
    pub jost_f_wronskian: CMatrix,
    /// F(z̄)*, from the solutions at z̄
    pub jost_f_bar_adj: CMatrix,
    pub wronskian_spread: f64,
}

impl JostBundle {
    pub fn new(v: &MatrixPotential, z: SpectralParam) -> Result<Self> {
        let z = z.off_cut(1e-14)?;
        let n = v.dim();
        let zero = HermMatrix::zeros(n);
        let pair = JostPair::solve(v.grid(), v.values().values(), &zero, &zero, z)?;
        let k = z.sqrt_z();
        let g = v.grid();
        let vv = v.values();
        let jost = |sols: &JostSolutions, k: C64| -> CMatrix {
            let (m, _) = sols.plus.stabilized();
            let mut acc = zeros(n, n);
            for i in 0..g.len() {
                acc += vv.at(i) * m.at(i) * C64::new(g.weight(i), 0.0);
            }
            eye(n) - acc / (I * k * 2.0)
        };
        let jost_f = jost(&pair.at_z, k);
        let (mbar, _) = pair.at_zbar.minus.stabilized();
        let mut acc = zeros(n, n);
        for i in 0..g.len() {
            acc += mbar.at(i).adjoint() * vv.at(i) * C64::new(g.weight(i), 0.0);
        }
        let jost_f_dual = eye(n) - acc / (I * k * 2.0);
        let jost_f_wronskian = &pair.w1 / (I * k * 2.0);
        let jost_f_bar_adj = jost(&pair.at_zbar, z.conj().sqrt_z()).adjoint();
        let wronskian_spread = pair.wronskian_spread();
        Ok(JostBundle { z, pair, jost_f, jost_f_dual, jost_f_wronskian, jost_f_bar_adj, wronskian_spread })
    }

    pub fn det_f(&self) -> DetValue {
        det(&self.jost_f).expect("square")
    }

    /// Max relative disagreement among the three F(z) representations.
    pub fn consistency(&self) -> f64 {
        rel_dev_mat(&self.jost_f, &self.jost_f_dual).max(rel_dev_mat(&self.jost_f, &self.jost_f_wronskian))
    }

    /// |det F(z) − conj det F(z̄)| relative.
    pub fn conjugation_dev(&self) -> f64 {
        let a = self.det_f().value;
        let b = det(&self.jost_f_bar_adj).expect("square").value;
        rel_dev(a, b)
    }

    pub fn weyl_m(&self, x0: f64) -> Result<WeylM> {
        let m_plus = self.pair.at_z.plus.log_deriv_at(x0)?;
        let m_minus = self.pair.at_z.minus.log_deriv_at(x0)?;
        let green_diag = checked_inverse(&(&m_minus - &m_plus), "m₋ − m₊", COND_CAP)?;
        Ok(WeylM { m_plus, m_minus, green_diag })
    }

    pub fn max_residual(&self) -> f64 {
        self.pair.at_z.residual().max(self.pair.at_zbar.residual())
    }
}

/// Scalar square barrier v₀ on [0, 1]: F(z) = (f₊'(0) + ik f₊(0)) / (2ik) by matching.
pub fn square_barrier_jost(v0: f64, z: C64) -> C64 {
    let k = sqrt_imnonneg(z);
    let p = sqrt_imnonneg(z - v0);
    let e = (I * k).exp();
    let sinc_p = sinc(p);
    let f0 = e * p.cos() - I * k * e * sinc_p;
    let df0 = e * p * p * sinc_p + I * k * e * p.cos();
    (df0 + I * k * f0) / (I * k * 2.0)
}

/// |det(I − K(iy)) − 1| for each y and the fitted log-log slope.
pub fn large_z_decay(v: &MatrixPotential, ys: &[f64]) -> Result<(Vec<f64>, f64)> {
    let devs = ys
        .iter()
        .map(|&y| {
            let k = v.bs_kernel(SpectralParam::new(C64::new(0.0, y))?)?;
            Ok((k.reduced_det(C64::new(1.0, 0.0))?.value() - 1.0).norm())
        })
        .collect::<Result<Vec<f64>>>()?;
    let lx: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let ly: Vec<f64> = devs.iter().map(|d| d.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let slope = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / lx.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    Ok((devs, slope))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::{c, max_abs, real};

    fn barrier() -> MatrixPotential {
        PotentialSpec::Scalar(Shape::Square { height: 2.0, lo: 0.0, hi: 1.0 })
            .build(&Numerics { radius: 1.0, panels: 16, q: 8 })
            .unwrap()
    }

    #[test]
    fn free_jost_is_identity() {
        let v = MatrixPotential::zero(2, Interval::finite(-1.0, 1.0).unwrap(), &Numerics::default()).unwrap();
        let b = v.jost(SpectralParam::new(real(-1.0)).unwrap()).unwrap();
        assert!(max_abs(&(&b.jost_f - eye(2))) < 1e-15);
        let f = b.pair.at_z.plus.value(5);
        let x = v.grid().node(5);
        assert!((f[(0, 0)] - real((-x).exp())).norm() < 1e-14);
    }

    #[test]
    fn barrier_matches_matching_formula() {
        let v = barrier();
        for z in [real(-1.0), real(-4.0), c(-1.0, 1.0)] {
            let b = v.jost(SpectralParam::new(z).unwrap()).unwrap();
            let exact = square_barrier_jost(2.0, z);
            assert!(rel_dev(b.jost_f[(0, 0)], exact) < 1e-12, "{z}: {} vs {exact}", b.jost_f[(0, 0)]);
            assert!(b.consistency() < 1e-12);
            assert!(b.wronskian_spread < 1e-12);
            assert!(b.conjugation_dev() < 1e-12);
        }
    }

    #[test]
    fn bs_kernel_value() {
        let v = PotentialSpec::Scalar(Shape::Square { height: 1.0, lo: 0.0, hi: 1.0 })
            .build(&Numerics { radius: 1.0, panels: 4, q: 8 })
            .unwrap();
        let k = v.bs_kernel(SpectralParam::new(real(-1.0)).unwrap()).unwrap();
        let val = k.kernel_eval(0.0, 1.0).unwrap()[(0, 0)];
        assert!((val - real(-0.5 * (-1.0f64).exp())).norm() < 1e-12);
    }

    #[test]
    fn barrier_jost_identity() {
        let v = barrier();
        for z in [real(-1.0), real(-4.0), c(-1.0, 1.0)] {
            let r = v.verify_jost_identity(SpectralParam::new(z).unwrap(), Exec::default()).unwrap();
            assert!(r.rel_err < 1e-6, "{z}: {r:?}");
        }
    }

    #[test]
    fn free_green_and_weyl() {
        let v = MatrixPotential::zero(1, Interval::finite(-2.0, 2.0).unwrap(), &Numerics { radius: 1.0, panels: 4, q: 8 }).unwrap();
        let b = v.jost(SpectralParam::new(real(-1.0)).unwrap()).unwrap();
        let g = b.pair.green(0.3, -0.4).unwrap()[(0, 0)];
        assert!((g - real(0.5 * (-0.7f64).exp())).norm() < 1e-13);
        let w = b.weyl_m(0.1).unwrap();
        assert!((w.m_plus[(0, 0)] - real(-1.0)).norm() < 1e-13);
        assert!((w.m_minus[(0, 0)] - real(1.0)).norm() < 1e-13);
        assert!((b.pair.green_jump(7)[(0, 0)] + 1.0).norm() < 1e-13);
    }
}
