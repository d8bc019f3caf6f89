use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("index out of bounds: {0}")]
    Index(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("format error at byte {offset}: {msg}")]
    Format { offset: u64, msg: String },

    #[error("shape mismatch in layer `{layer}`: expected {expected:?}, found {found:?}")]
    LayerShape {
        layer: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("invalid probe: {0}")]
    InvalidProbe(String),

    #[error("degenerate photon scaling: all amplitudes are zero")]
    DegenerateScale,

    #[error("solver diverged at iteration {iteration}: loss {loss:e} exceeds {limit:e}")]
    Diverged {
        iteration: usize,
        loss: f64,
        limit: f64,
    },

    #[error("training produced a non-finite loss at step {step}")]
    NonFiniteLoss { step: usize },

    #[error("guidance blow-up at step {step} (zeta = {zeta:e})")]
    GuidanceBlowup { step: usize, zeta: f64 },

    #[error("undefined reference: {0}")]
    UndefinedReference(String),

    #[error("autodiff error: {0}")]
    Autodiff(String),

    #[error("missing ids: {0:?}")]
    MissingIds(Vec<String>),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the error stems from user configuration rather than a runtime failure.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}
