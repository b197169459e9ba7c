use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument fell outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("{what} did not converge within {iterations} iterations")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
    },

    /// The tail radius landed at or below the first point of a Riemann grid,
    /// so the grid is empty.
    #[error("largest radius {r_star:.6e} does not exceed the first grid radius {first:.6e}")]
    GridBelowStart { r_star: f64, first: f64 },

    #[error("could not bracket the noise scale: {0}")]
    Bracket(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
