use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("non-finite value from mode {mode} at t = {time}: {what}")]
    NonFinite { mode: usize, time: f64, what: &'static str },

    #[error("integration diverged at t = {time}: {detail}")]
    Divergence { time: f64, detail: String },

    #[error("non-finite NLP evaluation at node {node}: {detail}")]
    NlpNonFinite { node: usize, detail: String },

    #[error("mesh error: {0}")]
    Mesh(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("singular dynamics: {0}")]
    Singular(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
