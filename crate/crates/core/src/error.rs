use alloc::string::String;

/// Errors raised by the numerical and combinatorial routines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("elements belong to different presentations")]
    PresentationMismatch,
    #[error("invalid presentation: {0}")]
    InvalidPresentation(String),
    #[error("unknown generator token `{0}`")]
    BadToken(String),
    #[error("step distribution violates {property}: {detail}")]
    Validation { property: &'static str, detail: String },
    #[error("state budget exceeded: attempted {attempted} states, budget {budget}")]
    Budget { attempted: u64, budget: u64 },
    #[error("ball radius {radius} too small; need at least {needed}")]
    RadiusTooSmall { radius: usize, needed: usize },
    #[error("{what} did not converge after {iterations} iterations")]
    NoConvergence { what: &'static str, iterations: usize },
    #[error("supercritical r = {r} for this truncation")]
    Supercritical { r: f64 },
    #[error("not covered by the table: {0}")]
    Coverage(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error("no sign change in [{lo}, {hi}]: endpoint values {f_lo} and {f_hi}")]
    NoBracket { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("not applicable: {0}")]
    NotApplicable(String),
}

pub type Result<T> = core::result::Result<T, Error>;
