use thiserror::Error;

/// Errors raised by the numerical engines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("time {t} lies outside the interval ({start}, +inf)")]
    OutsideInterval { t: f64, start: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("non-finite coefficient value at t={t}, x={x:?}: {what}")]
    NonFinite { t: f64, x: Vec<f64>, what: String },

    #[error("Lyapunov certificate unavailable: {reason} (witness t={t}, x={x:?})")]
    CertificateUnavailable { reason: String, t: f64, x: Vec<f64> },

    #[error("integrator step size underflow at t={t}; the span is too stiff, try a smaller span")]
    Stiff { t: f64 },

    #[error("quadrature did not reach tolerance {tol:e} (estimated error {err:e})")]
    Quadrature { tol: f64, err: f64 },

    #[error("no evolution system of measures: fitted dichotomy rate {omega} is not negative")]
    NoEvolutionMeasure { omega: f64 },

    #[error("matrix is not Hurwitz (spectral abscissa {abscissa})")]
    NotHurwitz { abscissa: f64 },

    #[error("path blow-up at step {step} (path {path})")]
    BlowUp { step: usize, path: usize },

    #[error("unbounded test function needs a registered Lyapunov certificate")]
    UnboundedIntegrand,

    #[error("refused: {0}")]
    Refused(String),

    #[error("unknown catalog entry `{0}`")]
    UnknownCatalogEntry(String),

    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
