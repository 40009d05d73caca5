use std::path::PathBuf;

/// Errors raised across the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// The rotation angle is too close to π for the logarithm to pick a unique branch.
    #[error("rotation angle {angle} rad is within {margin:e} of pi; log map is ill-defined")]
    NearPi { angle: f64, margin: f64 },

    /// A 4×4 matrix handed to `vee` does not have the se(3) structure.
    #[error("matrix is not an element of se(3): {0}")]
    NotInAlgebra(String),

    /// A 4×4 matrix does not describe a rigid transform.
    #[error("matrix is not a rigid transform: {0}")]
    NotRigid(String),

    #[error("covariance is singular or indefinite (min eigenvalue {min_eigenvalue:e})")]
    SingularCovariance { min_eigenvalue: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A contact point passed to the push model is not on the footprint boundary.
    #[error("contact point is {distance:.3} mm from the footprint boundary")]
    ContactOffBoundary { distance: f64 },

    #[error("{path}: line {line}: {message}")]
    Config {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("simulation aborted: {0}")]
    Aborted(String),

    #[error("{}: {source}", path.display())]
    File {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn file(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::File {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
