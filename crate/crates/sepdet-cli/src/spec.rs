//! TOML job specifications and their conversion into library objects.

use serde::Deserialize;

use sepdet::matcore::{CMatrix, HermMatrix, C64};
use sepdet::schrodinger::{Numerics, PotentialSpec, Shape};
use sepdet::susy_index::{self, AProfile, StepShape};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    VerifyReduction,
    Jost,
    Det,
    TraceFormula,
    DetFormula,
    Ssf,
    Index,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::VerifyReduction => "verify-reduction",
            Command::Jost => "jost",
            Command::Det => "det",
            Command::TraceFormula => "trace-formula",
            Command::DetFormula => "det-formula",
            Command::Ssf => "ssf",
            Command::Index => "index",
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobSpec {
    pub command: Option<Command>,
    #[serde(default)]
    pub numerics: NumericsSpec,
    pub potential: Option<PotentialToml>,
    pub profile: Option<ProfileToml>,
    pub kernel: Option<KernelToml>,
    #[serde(default)]
    pub z_points: Vec<Num>,
    #[serde(default)]
    pub lambda_points: Vec<f64>,
    pub output: Option<OutputSpec>,
}

/// Overridden by `--out` / `--format`; a relative path is taken from the spec file's directory.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub path: Option<std::path::PathBuf>,
    pub format: Option<crate::table::Format>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericsSpec {
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "default_panels")]
    pub panels: usize,
    #[serde(default = "default_q")]
    pub q: usize,
    /// distances from the real axis for boundary sweeps
    #[serde(default)]
    pub eps: Vec<f64>,
    /// pass threshold for the row's headline error; per-command default when absent
    pub tol: Option<f64>,
}

fn default_radius() -> f64 {
    12.0
}
fn default_panels() -> usize {
    32
}
fn default_q() -> usize {
    8
}

impl Default for NumericsSpec {
    fn default() -> Self {
        NumericsSpec { radius: default_radius(), panels: default_panels(), q: default_q(), eps: vec![], tol: None }
    }
}

impl NumericsSpec {
    pub fn validate(&self) -> Result<Numerics, CliError> {
        if !(self.radius > 0.0) || self.panels == 0 || self.q == 0 {
            return Err(CliError::Spec("numerics: radius, panels and q must be positive".into()));
        }
        if self.eps.iter().any(|e| !(*e > 0.0)) || self.tol.is_some_and(|t| !(t > 0.0)) {
            return Err(CliError::Spec("numerics: eps and tol must be positive".into()));
        }
        Ok(Numerics { radius: self.radius, panels: self.panels, q: self.q })
    }
}

/// A real number or an [re, im] pair.
#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(untagged)]
pub enum Num {
    Real(f64),
    Complex([f64; 2]),
}

impl Num {
    pub fn value(self) -> C64 {
        match self {
            Num::Real(r) => C64::new(r, 0.0),
            Num::Complex([re, im]) => C64::new(re, im),
        }
    }
}

/// A scalar (1×1) or a list of rows.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum MatrixToml {
    Scalar(Num),
    Rows(Vec<Vec<Num>>),
}

impl MatrixToml {
    pub fn to_matrix(&self) -> Result<CMatrix, CliError> {
        match self {
            MatrixToml::Scalar(v) => Ok(CMatrix::from_element(1, 1, v.value())),
            MatrixToml::Rows(rows) => {
                let n = rows.len();
                if n == 0 || rows.iter().any(|r| r.len() != rows[0].len()) {
                    return Err(CliError::Spec("matrix rows must be nonempty and of equal length".into()));
                }
                Ok(CMatrix::from_fn(n, rows[0].len(), |i, j| rows[i][j].value()))
            }
        }
    }

    pub fn to_herm(&self) -> Result<HermMatrix, CliError> {
        Ok(HermMatrix::new(self.to_matrix()?)?)
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ShapeToml {
    Zero,
    Square { height: f64, lo: f64, hi: f64 },
    Gaussian { height: f64, center: f64, width: f64 },
    Sech2 { height: f64, center: f64, width: f64 },
    Table { x: Vec<f64>, y: Vec<f64> },
}

impl ShapeToml {
    fn to_shape(&self) -> Shape {
        match self.clone() {
            ShapeToml::Zero => Shape::Zero,
            ShapeToml::Square { height, lo, hi } => Shape::Square { height, lo, hi },
            ShapeToml::Gaussian { height, center, width } => Shape::Gaussian { height, center, width },
            ShapeToml::Sech2 { height, center, width } => Shape::Sech2 { height, center, width },
            ShapeToml::Table { x, y } => Shape::Table { x, y },
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenseTerm {
    pub shape: ShapeToml,
    pub matrix: MatrixToml,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PotentialToml {
    Zero {
        #[serde(default = "one")]
        dim: usize,
    },
    Square { height: f64, lo: f64, hi: f64 },
    Gaussian { height: f64, center: f64, width: f64 },
    Sech2 { height: f64, center: f64, width: f64 },
    Table { x: Vec<f64>, y: Vec<f64> },
    MatrixDiag { components: Vec<ShapeToml> },
    MatrixDense { terms: Vec<DenseTerm> },
}

fn one() -> usize {
    1
}

impl PotentialToml {
    pub fn to_spec(&self) -> Result<PotentialSpec, CliError> {
        let scalar = |s: ShapeToml| PotentialSpec::Scalar(s.to_shape());
        Ok(match self.clone() {
            PotentialToml::Zero { dim: 1 } => PotentialSpec::Scalar(Shape::Zero),
            PotentialToml::Zero { dim } => PotentialSpec::Diag(vec![Shape::Zero; dim]),
            PotentialToml::Square { height, lo, hi } => scalar(ShapeToml::Square { height, lo, hi }),
            PotentialToml::Gaussian { height, center, width } => scalar(ShapeToml::Gaussian { height, center, width }),
            PotentialToml::Sech2 { height, center, width } => scalar(ShapeToml::Sech2 { height, center, width }),
            PotentialToml::Table { x, y } => scalar(ShapeToml::Table { x, y }),
            PotentialToml::MatrixDiag { components } => PotentialSpec::Diag(components.iter().map(|c| c.to_shape()).collect()),
            PotentialToml::MatrixDense { terms } => PotentialSpec::Dense(
                terms.iter().map(|t| Ok((t.shape.to_shape(), t.matrix.to_matrix()?))).collect::<Result<_, CliError>>()?,
            ),
        })
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepToml {
    #[serde(default = "tanh_kind")]
    pub kind: String,
    #[serde(default)]
    pub center: f64,
    #[serde(default = "unit")]
    pub width: f64,
    pub matrix: MatrixToml,
}

fn tanh_kind() -> String {
    "tanh".into()
}
fn unit() -> f64 {
    1.0
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileToml {
    /// tanh-step | smooth-bump | table | constant | steps | random
    pub b_kind: String,
    pub a_minus: Option<MatrixToml>,
    pub a_plus: Option<MatrixToml>,
    #[serde(default)]
    pub center: f64,
    #[serde(default = "unit")]
    pub width: f64,
    pub t: Option<Vec<f64>>,
    pub s: Option<Vec<f64>>,
    pub steps: Option<Vec<StepToml>>,
    pub dim: Option<usize>,
    pub seed: Option<u64>,
}

impl ProfileToml {
    pub fn build(&self, num: &Numerics) -> Result<AProfile, CliError> {
        let need = |m: &Option<MatrixToml>, what: &str| -> Result<HermMatrix, CliError> {
            m.as_ref().ok_or_else(|| CliError::Spec(format!("profile: `{what}` is required for b_kind = {:?}", self.b_kind)))?.to_herm()
        };
        let jump = || -> Result<HermMatrix, CliError> {
            Ok(HermMatrix::new(need(&self.a_plus, "a_plus")?.matrix() - need(&self.a_minus, "a_minus")?.matrix())?)
        };
        let shape = |kind: &str, center: f64, width: f64| -> Result<StepShape, CliError> {
            match kind {
                "tanh" => Ok(StepShape::Tanh { center, width }),
                "smooth" => Ok(StepShape::Smooth { center, width }),
                other => Err(CliError::Spec(format!("profile: unknown step kind {other:?} (tanh | smooth)"))),
            }
        };
        let profile = match self.b_kind.as_str() {
            "constant" => AProfile::constant(need(&self.a_minus, "a_minus")?, num)?,
            "tanh-step" => AProfile::new(need(&self.a_minus, "a_minus")?, vec![(shape("tanh", self.center, self.width)?, jump()?)], num)?,
            "smooth-bump" => {
                AProfile::new(need(&self.a_minus, "a_minus")?, vec![(shape("smooth", self.center, self.width)?, jump()?)], num)?
            }
            "table" => {
                let (t, s) = match (&self.t, &self.s) {
                    (Some(t), Some(s)) => (t.clone(), s.clone()),
                    _ => return Err(CliError::Spec("profile: table needs `t` and `s`".into())),
                };
                AProfile::new(need(&self.a_minus, "a_minus")?, vec![(StepShape::Table { t, s }, jump()?)], num)?
            }
            "steps" => {
                let steps = self.steps.as_ref().ok_or_else(|| CliError::Spec("profile: steps needs `steps`".into()))?;
                let terms = steps
                    .iter()
                    .map(|st| Ok((shape(&st.kind, st.center, st.width)?, st.matrix.to_herm()?)))
                    .collect::<Result<Vec<_>, CliError>>()?;
                AProfile::new(need(&self.a_minus, "a_minus")?, terms, num)?
            }
            "random" => susy_index::random_profile(self.dim.unwrap_or(2), self.seed.unwrap_or(0), num)?,
            other => {
                return Err(CliError::Spec(format!(
                    "profile: unknown b_kind {other:?} (tanh-step | smooth-bump | table | constant | steps | random)"
                )))
            }
        };
        Ok(profile)
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelToml {
    /// continuous | volterra
    #[serde(default = "continuous")]
    pub kind: String,
    pub seeds: Vec<u64>,
    /// (n, n₁, n₂); cycles through {1,2,3}³ by seed when absent
    pub dims: Option<[usize; 3]>,
    #[serde(default = "unit_interval")]
    pub interval: [f64; 2],
    #[serde(default = "unit_alpha")]
    pub alpha: Num,
    #[serde(default = "unit")]
    pub scale: f64,
    /// cap on the oracle's panel doubling
    #[serde(default = "max_panels")]
    pub max_panels: usize,
}

fn continuous() -> String {
    "continuous".into()
}
fn unit_interval() -> [f64; 2] {
    [0.0, 1.0]
}
fn unit_alpha() -> Num {
    Num::Real(1.0)
}
fn max_panels() -> usize {
    64
}

pub fn parse(text: &str) -> Result<JobSpec, CliError> {
    toml::from_str(text).map_err(|e| CliError::Spec(e.to_string()))
}
