use thiserror::Error;

/// Errors raised across the solver stack.
#[derive(Debug, Error)]
pub enum Error {
    /// Input has the wrong shape (non-square matrix, mismatched grids, ...).
    #[error("structural error: {0}")]
    Structure(String),

    /// A precondition on the coupling matrix does not hold.
    #[error("coupling error: {0}")]
    Coupling(String),

    /// Invalid solver or experiment configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// A non-finite value appeared during time stepping.
    #[error("numerical divergence at t={t}: component {component}, node {node} (value {value})")]
    Divergence {
        t: f64,
        component: usize,
        node: usize,
        value: f64,
    },

    /// An iterative solve did not reach its tolerance.
    #[error("no convergence: {message}; last residuals {history:?}")]
    Convergence { message: String, history: Vec<f64> },

    /// A requested quantity is outside the available data.
    #[error("out of range: {0}")]
    Range(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
