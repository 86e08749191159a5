use thiserror::Error;

/// Failures raised anywhere in the library. Variants carry enough context to
/// print a useful message without a backtrace.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unknown catalog id `{0}`")]
    UnknownCatalogId(String),
    #[error("potential `{id}` requires parameter `{key}`")]
    MissingParam { id: String, key: String },
    #[error("invalid parameter `{key}`: {reason}")]
    InvalidParam { key: String, reason: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("trajectory left the box |x| <= {bound} at tau = {tau}")]
    TrajectoryEscaped { tau: f64, bound: f64 },
    #[error("time step too large: {0}")]
    TimeStepTooLarge(String),
    #[error("mixed Hessian determinant {det} below floor {floor}")]
    DeterminantDegenerate { det: f64, floor: f64 },
    #[error("phase undersampled: max gradient / hbar = {ratio:.3} exceeds {limit:.3}")]
    UndersampledPhase { ratio: f64, limit: f64 },
    #[error("amplitude a1 dropped to {value:.3e}, below the 1/2 guard")]
    AmplitudeGuard { value: f64 },
    #[error("reference propagator not converged: Richardson difference {diff:.3e} > {tol:.3e}")]
    RichardsonFailed { diff: f64, tol: f64 },
    #[error("wavefunction mass {mass:.3e} reached the boundary strip")]
    WrapAround { mass: f64 },
    #[error("power iteration did not converge in {iters} steps (eigen-residual {rel:.3e})")]
    NormNotConverged { iters: usize, rel: f64 },
    #[error("operator mismatch: {0}")]
    OperatorMismatch(String),
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
