use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),
    #[error("design parameters not admissible: {0}")]
    Admissibility(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("point {point:?} lies outside the domain")]
    Domain { point: [f64; 3] },
    #[error("empty-lattice cutoff {cutoff} too small for {bands} bands at k={k:?}; need cutoff >= {required}")]
    Shell {
        k: [f64; 3],
        bands: usize,
        cutoff: i32,
        required: i32,
    },
    #[error("ill-conditioned {entity} system on element {element} (degree {degree}): condition estimate {condition:.3e}")]
    Conditioning {
        element: usize,
        entity: &'static str,
        degree: usize,
        condition: f64,
    },
    #[error("mesh error: {0}")]
    Mesh(String),
    #[error("internal error: {0}")]
    Internal(String),
    #[error("in loop {iteration}: {source}")]
    InLoop {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn in_loop(self, iteration: usize) -> Self {
        Error::InLoop {
            iteration,
            source: Box::new(self),
        }
    }

    /// The innermost error, with loop context stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::InLoop { source, .. } => source.root(),
            other => other,
        }
    }
}
