use std::path::PathBuf;

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("non-finite value encountered: {0}")]
    Numeric(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("malformed file: {0}")]
    Format(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("expected exactly {expected} tiles, got {actual}")]
    Arity { expected: usize, actual: usize },

    #[error("tile {index}: rgb is {rgb_width}x{rgb_height} but ir is {ir_width}x{ir_height}")]
    Alignment {
        index: usize,
        rgb_width: usize,
        rgb_height: usize,
        ir_width: usize,
        ir_height: usize,
    },

    #[error("no class has ground truth; mean AP is undefined")]
    EmptyEvaluation,

    #[error("{}: {cause}", path.display())]
    Io {
        path: PathBuf,
        cause: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            cause: source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
