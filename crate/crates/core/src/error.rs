use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("potential supports no bound states (lambda = {lambda:.4})")]
    NoBoundStates { lambda: f64 },

    #[error("state index {n} out of range 0..={n_max}")]
    StateOutOfRange { n: usize, n_max: usize },

    #[error("grid too coarse: spacing {spacing:.3e} m exceeds {limit:.3e} m")]
    GridTooCoarse { spacing: f64, limit: f64 },

    #[error("quadrature did not converge: achieved relative tolerance {achieved:.3e}")]
    QuadratureNotConverged { achieved: f64 },

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("ODE step rejected: {0}")]
    StepRejected(String),

    #[error("fit failed: {0}")]
    Fit(String),

}

impl Error {
    /// True for failures of a numerical procedure, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::QuadratureNotConverged { .. }
                | Error::Calibration(_)
                | Error::StepRejected(_)
                | Error::Fit(_)
        )
    }
}
