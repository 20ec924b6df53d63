use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A group assignment does not match the dataset's group sizes.
    #[error("assignment shape error: {0}")]
    AssignmentShape(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("covariance matrix is not positive semi-definite: {0}")]
    Covariance(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A kernel the statistic needs (a variance, a covariance inverse) is
    /// degenerate on this dataset.
    #[error("degenerate statistic: {kernel} ({detail})")]
    Degenerate { kernel: &'static str, detail: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("enumeration too large: {count} group assignments exceed the cap of {cap}")]
    EnumerationTooLarge { count: f64, cap: u64 },

    #[error("permutation {index}: {source}")]
    Permutation {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("csv input: {0}")]
    Csv(String),
}

impl Error {
    pub(crate) fn degenerate(kernel: &'static str, detail: impl Into<String>) -> Self {
        Error::Degenerate {
            kernel,
            detail: detail.into(),
        }
    }

    /// True for errors caused by the data rather than by how the library was
    /// called.
    pub fn is_statistical(&self) -> bool {
        match self {
            Error::Degenerate { .. }
            | Error::InsufficientData(_)
            | Error::Covariance(_)
            | Error::EnumerationTooLarge { .. } => true,
            Error::Permutation { source, .. } => source.is_statistical(),
            _ => false,
        }
    }
}
