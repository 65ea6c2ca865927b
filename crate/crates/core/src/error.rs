use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("decay-class violation: {0}")]
    DecayClass(String),

    #[error("unsupported dimension {found}: {context}")]
    UnsupportedDimension { found: usize, context: &'static str },

    #[error("flux is not guaranteed finite for decay exponent mu = {mu} (need mu > 2)")]
    FluxNotFinite { mu: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("quadrature did not reach tolerance {requested:e} (achieved {achieved:e})")]
    Quadrature { requested: f64, achieved: f64 },

    #[error("integrability error: {0}")]
    Integrability(String),

    #[error("not a gauge pair: loop integral of the difference is {residual:e} (tolerance {tol:e})")]
    NotAGaugePair { residual: f64, tol: f64 },

    #[error("gauge function has no radial limit in direction {direction:?}: {detail}")]
    NoLimit { direction: [f64; 3], detail: String },

    #[error("grid does not cover the effective support: {0}")]
    DomainCoverage(String),

    #[error("resolution error: {0}")]
    Resolution(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("time step too large: {0}")]
    StepSize(String),

    #[error("scattering window too small: Cook residual {residual:e} exceeds {tol:e}")]
    WindowTooSmall { residual: f64, tol: f64 },

    #[error("gauge-model violation: phase difference varies by {deviation:e} across the lattice")]
    GaugeModel { deviation: f64 },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of a numerical tolerance, as opposed to invalid input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Quadrature { .. }
                | Error::Integrability(_)
                | Error::NotAGaugePair { .. }
                | Error::NoLimit { .. }
                | Error::Resolution(_)
                | Error::StepSize(_)
                | Error::WindowTooSmall { .. }
                | Error::GaugeModel { .. }
                | Error::DecayClass(_)
        )
    }
}
