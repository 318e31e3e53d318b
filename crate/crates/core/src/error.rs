use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("nearest point is not unique: two minimizers at distance {distance} differ by {gap:e}")]
    AmbiguousProjection { distance: f64, gap: f64 },

    #[error("first reflector is a continuum ({count} near-minimizers)")]
    ContinuumReflector { count: usize },

    #[error("point at distance {distance} lies outside the collar of half-width {limit}")]
    OutsideCollar { distance: f64, limit: f64 },

    #[error("time {t} outside the observation window [0, {horizon}]")]
    OutOfWindow { t: f64, horizon: f64 },

    #[error("source ball overlaps the obstacle (clearance {clearance})")]
    Overlap { clearance: f64 },

    #[error("point at distance {distance} from the ball centre is not outside the ball of radius {radius}")]
    InsideBall { distance: f64, radius: f64 },

    #[error("computational box too small: {0}")]
    DomainTooSmall(String),

    #[error("grid too coarse: {0}")]
    ResolutionTooCoarse(String),

    #[error("field blow-up at step {step}: max |E| = {max_field:e}")]
    NumericBlowup { step: usize, max_field: f64 },

    #[error("ball quadrature weights sum to {sum}, expected {expected}")]
    DegenerateQuadrature { sum: f64, expected: f64 },

    #[error("indicator never stabilises positive: {0}")]
    NoPositiveWindow(String),

    #[error("normalized sequence is not Cauchy: spread {spread:e} exceeds {tolerance:e}")]
    Divergent { spread: f64, tolerance: f64 },

    #[error("degenerate Hessian at reflector: det = {det:e}")]
    DegenerateHessian { det: f64 },

    #[error("surface quadrature did not converge: last relative change {change:e}")]
    QuadratureNotConverged { change: f64 },

    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),

    #[error("curvature system is singular (lambda_1 = lambda_2 = {lambda})")]
    SingularSystem { lambda: f64 },

    #[error("finite-difference step {step} exceeds the collar limit {limit}")]
    StepTooLarge { step: f64, limit: f64 },

    #[error("missing artifact {}", .0.display())]
    MissingArtifact(PathBuf),

    #[error("malformed record file: {0}")]
    MalformedRecord(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::AmbiguousProjection { .. } => "AmbiguousProjection",
            Error::ContinuumReflector { .. } => "ContinuumReflector",
            Error::OutsideCollar { .. } => "OutsideCollar",
            Error::OutOfWindow { .. } => "OutOfWindow",
            Error::Overlap { .. } => "Overlap",
            Error::InsideBall { .. } => "InsideBall",
            Error::DomainTooSmall(_) => "DomainTooSmall",
            Error::ResolutionTooCoarse(_) => "ResolutionTooCoarse",
            Error::NumericBlowup { .. } => "NumericBlowup",
            Error::DegenerateQuadrature { .. } => "DegenerateQuadrature",
            Error::NoPositiveWindow(_) => "NoPositiveWindow",
            Error::Divergent { .. } => "Divergent",
            Error::DegenerateHessian { .. } => "DegenerateHessian",
            Error::QuadratureNotConverged { .. } => "QuadratureNotConverged",
            Error::HypothesisViolated(_) => "HypothesisViolated",
            Error::SingularSystem { .. } => "SingularSystem",
            Error::StepTooLarge { .. } => "StepTooLarge",
            Error::MissingArtifact(_) => "MissingArtifact",
            Error::MalformedRecord(_) => "MalformedRecord",
            Error::Config(_) => "Config",
            Error::Io(_) => "Io",
        }
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
