use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A value lies outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// A caller broke an input contract (non-normalised weights, NaN objective, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("state error: {0}")]
    State(String),

    /// The negative Hessian at the MAP could not be repaired to positive definite.
    #[error("Hessian could not be repaired to positive definite: {matrix:?}")]
    IrreparableHessian { matrix: Vec<Vec<f64>> },

    /// Kendall's tau is undefined for a constant column.
    #[error("column '{asset}' is constant; Kendall's tau is undefined")]
    ConstantColumn { asset: String },

    #[error("start-up error: {0}")]
    StartUp(String),
}

impl Error {
    /// Stable machine-readable code, used by the CLI error artifact.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Domain(_) => "E_DOMAIN",
            Error::Unsupported(_) => "E_UNSUPPORTED",
            Error::Config(_) => "E_CONFIG",
            Error::Contract(_) => "E_CONTRACT",
            Error::Numerical(_) => "E_NUMERICAL",
            Error::State(_) => "E_STATE",
            Error::IrreparableHessian { .. } => "E_HESSIAN",
            Error::ConstantColumn { .. } => "E_CONSTANT_COLUMN",
            Error::StartUp(_) => "E_STARTUP",
        }
    }
}
