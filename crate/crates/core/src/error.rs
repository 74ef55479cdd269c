use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numerical failure in layer {layer:?}: {message}")]
    Numerical {
        layer: Option<usize>,
        message: String,
    },

    #[error("fit did not converge after {iterations} iterations (rms {residual_rms:.3e})")]
    FitNotConverged {
        iterations: usize,
        residual_rms: f64,
        best: Vec<f64>,
    },

    #[error("degenerate spectrum: {0}")]
    DegenerateSpectrum(String),

    #[error("pole search failed: {0}")]
    PoleSearch(String),

    #[error("config error at {pointer}: {message}")]
    Config { pointer: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn numerical(layer: Option<usize>, msg: impl Into<String>) -> Self {
        Error::Numerical {
            layer,
            message: msg.into(),
        }
    }

    pub(crate) fn config(pointer: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            pointer: pointer.into(),
            message: msg.into(),
        }
    }
}
