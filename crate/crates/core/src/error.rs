use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Attribute vectors, parameters, or scenario shapes disagree with the
    /// attribute schema.
    #[error("schema mismatch: {0}")]
    Schema(String),

    /// A precondition on caller-supplied data failed.
    #[error("invalid input: {0}")]
    Input(String),

    /// An attribute carries no usable variation, so its coefficient cannot
    /// be estimated.
    #[error("attribute `{attribute}` has no variation in the data; its coefficient is not identified")]
    Identification { attribute: String },

    /// The likelihood improves without bound; no finite estimate exists.
    #[error("perfect separation: |{parameter}| exceeded the cap {cap} while the likelihood kept improving")]
    Separation { parameter: String, cap: f64 },

    /// A matrix required to be invertible was not.
    #[error("singular matrix: {0}")]
    Singular(String),

    /// Regressor columns are linearly dependent.
    #[error("collinear input columns: {}", columns.join(", "))]
    Collinearity { columns: Vec<String> },

    /// A quantity violates the economic restrictions it needs (for example a
    /// non-negative price coefficient, under which demand slopes upward and
    /// revenue is unbounded).
    #[error("economic validity: {0}")]
    EconomicValidity(String),
}

impl Error {
    pub fn schema(msg: impl Into<String>) -> Self {
        Error::Schema(msg.into())
    }

    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }
}
