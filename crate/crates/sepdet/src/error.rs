use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite matrix entry")]
    NonFinite,
    #[error("matrix is not Hermitian (deviation {0:.3e})")]
    NotHermitian(f64),
    #[error("Hermitian eigensolver did not converge (residual {0:.3e})")]
    EigenNoConvergence(f64),
    #[error("spectral parameter too close to a branch point (distance {0:.3e})")]
    BranchPoint(f64),
    #[error("point {x} outside the interval [{a}, {b}]")]
    OutOfRange { x: f64, a: f64, b: f64 },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("Volterra solve failed: residual {0:.3e}")]
    Volterra(f64),
    #[error("ODE step size underflow near x = {0}")]
    StepUnderflow(f64),
    #[error("{what} is ill-conditioned (condition estimate {cond:.3e})")]
    IllConditioned { what: String, cond: f64 },
    #[error("z = {re}{im:+}i is (numerically) an eigenvalue: Wronskian condition {cond:.3e}")]
    Eigenvalue { re: f64, im: f64, cond: f64 },
    #[error("not Fredholm: 0 is (numerically) in the spectrum of A± (min |eigenvalue| = {0:.3e})")]
    NotFredholm(f64),
    #[error("discretization of size {0} exceeds the dense cap {1}; reduce grid or dimension")]
    TooLarge(usize, usize),
    #[error("truncation tail check failed (shift {0:.3e} at 1.5R); increase R")]
    Tail(f64),
    #[error("phase unwinding failed near z = {re}{im:+}i")]
    Unwind { re: f64, im: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
