use std::path::PathBuf;

/// Every failure the pipeline can report.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unknown montage label `{0}`")]
    Montage(String),
    #[error("filter design: {0}")]
    FilterDesign(String),
    #[error("windowing: {0}")]
    Window(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("index {index} out of range (len {len})")]
    Index { index: usize, len: usize },
    #[error("component {0} has an all-zero weight column")]
    DegenerateComponent(usize),
    #[error("value out of range: {0}")]
    Range(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid state: {0}")]
    State(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("registry: {0}")]
    Registry(String),
    #[error("incompatible model: {0}")]
    Compatibility(String),
    #[error("model file: {0}")]
    ModelFormat(String),
    #[error("config: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
