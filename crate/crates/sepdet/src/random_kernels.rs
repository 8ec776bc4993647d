//! Seeded random smooth semi-separable kernels.
//!
//! Every entry is a trigonometric polynomial of degree ≤ 3 in the rescaled
//! variable, with complex coefficients drawn from a ChaCha stream. Kernels are
//! built so that F₁G₁ = F₂G₂ on the diagonal (continuous, hence trace class).

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::grid::Grid;
use crate::matcore::{eye, herm_eig, zeros, CMatrix, HermMatrix, C64};
use crate::semisep::SemiSepKernel;

const DEGREE: usize = 3;
const ROTATION: f64 = 2.0;

/// Smooth matrix-valued function on [a,b] with trig-polynomial entries.
#[derive(Clone, Debug)]
struct TrigMatrix {
    rows: usize,
    cols: usize,
    a: f64,
    len: f64,
    /// per entry: (cos coefficients, sin coefficients), m = 0..=DEGREE
    coef: Vec<([C64; DEGREE + 1], [C64; DEGREE + 1])>,
}

impl TrigMatrix {
    /// Entries normalized so that |entry(x)| ≤ `bound`.
    fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize, a: f64, b: f64, bound: f64) -> Self {
        let mut draw = || C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let coef = (0..rows * cols)
            .map(|_| {
                let mut cs = [C64::default(); DEGREE + 1];
                let mut ss = [C64::default(); DEGREE + 1];
                for m in 0..=DEGREE {
                    cs[m] = draw();
                    ss[m] = if m == 0 { C64::default() } else { draw() };
                }
                let total: f64 = cs.iter().chain(&ss).map(|v| v.norm()).sum();
                let s = bound / total.max(1e-300);
                (cs.map(|v| v * s), ss.map(|v| v * s))
            })
            .collect();
        TrigMatrix { rows, cols, a, len: b - a, coef }
    }

    fn eval(&self, x: f64) -> CMatrix {
        let t = std::f64::consts::PI * (x - self.a) / self.len;
        CMatrix::from_fn(self.rows, self.cols, |i, j| {
            let (cs, ss) = &self.coef[i * self.cols + j];
            (0..=DEGREE)
                .map(|m| cs[m] * (m as f64 * t).cos() + ss[m] * (m as f64 * t).sin())
                .sum()
        })
    }
}

/// C(x) = L(x)[I_s 0]E(x)⁻¹ (n×r) and B(x) = E(x)[0; I_d]M(x) (r×n), so C(x)B(x) = 0.
#[derive(Clone, Debug)]
struct NullPair {
    l: TrigMatrix,
    m: TrigMatrix,
    t: TrigMatrix,
    s: usize,
    r: usize,
}

impl NullPair {
    fn random(rng: &mut ChaCha8Rng, n: usize, r: usize, a: f64, b: f64, scale: f64) -> Self {
        let d = (r.saturating_sub(n)).max(1).min(r - 1);
        let s = r - d;
        NullPair {
            l: TrigMatrix::random(rng, n, s, a, b, scale),
            m: TrigMatrix::random(rng, d, n, a, b, scale),
            t: TrigMatrix::random(rng, r, r, a, b, 1.0),
            s,
            r,
        }
    }

    fn eval(&self, x: f64) -> (CMatrix, CMatrix) {
        let r = self.r;
        // E(x) = exp(iκ·herm(T(x))) is unitary, so E⁻¹ = E* and C(x)B(x') is O(1) off the diagonal.
        let t = self.t.eval(x);
        let h = HermMatrix::new((&t + t.adjoint()) * C64::new(0.5, 0.0)).expect("Hermitian part");
        let e = herm_eig(&h).expect("small Hermitian eigenproblem").apply(|l| C64::from_polar(1.0, ROTATION * l));
        let e_inv = e.adjoint();
        let mut top = zeros(self.s, r);
        top.view_mut((0, 0), (self.s, self.s)).copy_from(&eye(self.s));
        let mut bot = zeros(r, r - self.s);
        bot.view_mut((self.s, 0), (r - self.s, r - self.s)).copy_from(&eye(r - self.s));
        let c = self.l.eval(x) * top * e_inv;
        let b = e * bot * self.m.eval(x);
        (c, b)
    }
}

/// Random trace-class semi-separable kernel of dims (n, n₁, n₂), n₁, n₂ ≥ 1.
pub fn continuous_diagonal(grid: Arc<Grid>, (n, n1, n2): (usize, usize, usize), seed: u64, scale: f64) -> Result<SemiSepKernel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (a, b) = (grid.a(), grid.b());
    let pair = NullPair::random(&mut rng, n, n1 + n2, a, b, scale);
    SemiSepKernel::from_fns(grid, (n, n1, n2), |x| {
        let (c, bm) = pair.eval(x);
        [
            c.columns(0, n1).into_owned(),
            bm.rows(0, n1).into_owned(),
            c.columns(n1, n2).into_owned(),
            -bm.rows(n1, n2).into_owned(),
        ]
    })
}

/// Random Volterra kernel F₁(x)G₁(x') on x' < x (F₂ = G₂ = 0) with
/// F₁(x)G₁(x) = 0, so the operator is trace class with zero trace.
pub fn pure_volterra(grid: Arc<Grid>, (n, n1): (usize, usize), seed: u64, scale: f64) -> Result<SemiSepKernel> {
    assert!(n1 >= 2, "a nonzero pure Volterra kernel with vanishing diagonal needs n1 >= 2");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (a, b) = (grid.a(), grid.b());
    let pair = NullPair::random(&mut rng, n, n1, a, b, scale);
    SemiSepKernel::from_fns(grid, (n, n1, 0), |x| {
        let (c, bm) = pair.eval(x);
        [c, bm, zeros(n, 0), zeros(0, n)]
    })
}

/// Deterministic dims for suite member `k`: cycles through {1,2,3}³.
pub fn suite_dims(k: usize) -> (usize, usize, usize) {
    (1 + k % 3, 1 + (k / 3) % 3, 1 + (k / 9) % 3)
}
