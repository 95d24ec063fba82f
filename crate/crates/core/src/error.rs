use thiserror::Error;

/// Errors raised by the laboratory. Variants map onto the failure modes of
/// the individual modules; `exit_code` gives the CLI contract.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("field is not Hermitian: defect {defect:e} exceeds {threshold:e}")]
    HermitianViolation { defect: f64, threshold: f64 },

    #[error("grid mismatch between operands")]
    GridMismatch,

    #[error("adaptive quadrature failed to reach tolerance {tol:e} (estimate {estimate:e}, error {error:e})")]
    QuadratureFailure { tol: f64, estimate: f64, error: f64 },

    #[error("noise spectrum not resolved: support radius {support:.4} exceeds largest lattice wavenumber {max_wavenumber:.4}")]
    UnresolvedSpectrum { support: f64, max_wavenumber: f64 },

    #[error("invalid covariance spec: {0}")]
    InvalidCovariance(String),

    #[error("CFL violation: {what} = {value:.4} exceeds {limit:.4}; reduce dt")]
    CflViolation { what: &'static str, value: f64, limit: f64 },

    #[error("solver kappa {solver:e} does not match the noise kappa_grid {noise:e}")]
    KappaMismatch { solver: f64, noise: f64 },

    #[error("vorticity has nonzero mean {mean:e} (threshold {threshold:e})")]
    NonzeroMeanVorticity { mean: f64, threshold: f64 },

    #[error("field has nonzero mean {mean:e} (threshold {threshold:e}); homogeneous negative-order norm undefined")]
    MeanNotZero { mean: f64, threshold: f64 },

    #[error("mass drift {drift:e} exceeds {threshold:e}")]
    MassDrift { drift: f64, threshold: f64 },

    #[error("parameter out of range: {0}")]
    ParameterOutOfRange(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("mild identity defect {defect:e} exceeds {threshold:e}")]
    IdentityDefect { defect: f64, threshold: f64 },

    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("malformed field file: {0}")]
    FieldFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code: 2 for usage/config problems, 1 for everything that
    /// happens once a valid configuration is running.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::Json(_)
            | Error::ParameterOutOfRange(_)
            | Error::InvalidConfig(_)
            | Error::InvalidGrid(_)
            | Error::InvalidCovariance(_) => 2,
            _ => 1,
        }
    }

    /// Variant name, used as a stable tag in CLI diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidGrid(_) => "InvalidGrid",
            Error::HermitianViolation { .. } => "HermitianViolation",
            Error::GridMismatch => "GridMismatch",
            Error::QuadratureFailure { .. } => "QuadratureFailure",
            Error::UnresolvedSpectrum { .. } => "UnresolvedSpectrum",
            Error::InvalidCovariance(_) => "InvalidCovariance",
            Error::CflViolation { .. } => "CflViolation",
            Error::KappaMismatch { .. } => "KappaMismatch",
            Error::NonzeroMeanVorticity { .. } => "NonzeroMeanVorticity",
            Error::MeanNotZero { .. } => "MeanNotZero",
            Error::MassDrift { .. } => "MassDrift",
            Error::ParameterOutOfRange(_) => "ParameterOutOfRange",
            Error::DegenerateFit(_) => "DegenerateFit",
            Error::IdentityDefect { .. } => "IdentityDefect",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::Config(_) => "Config",
            Error::FieldFormat(_) => "FieldFormat",
            Error::Io(_) => "Io",
            Error::Json(_) => "Json",
            Error::Csv(_) => "Csv",
        }
    }
}
