use std::io;
use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: bad magic at offset {offset}: expected {expected:#010x}, found {found:#010x}", path.display())]
    BadMagic { path: PathBuf, offset: u64, expected: u32, found: u32 },
    #[error("{}: truncated at offset {offset}: need {needed} more bytes", path.display())]
    Truncated { path: PathBuf, offset: u64, needed: u64 },
    #[error("{} holds {images} images but {} holds {labels} labels", images_path.display(), labels_path.display())]
    CountMismatch { images_path: PathBuf, labels_path: PathBuf, images: u64, labels: u64 },
    #[error("{}: {message} at offset {offset}", path.display())]
    BadValue { path: PathBuf, offset: u64, message: String },
    #[error("{}: unsupported format version {found} (supported: {supported})", path.display())]
    Version { path: PathBuf, found: u32, supported: u32 },
    #[error("{}: no column named {column:?}", path.display())]
    MissingColumn { path: PathBuf, column: String },
    #[error("{}: line {line}, column {column:?}: {value:?} is not a finite number", path.display())]
    NonNumeric { path: PathBuf, line: u64, column: String, value: String },
    #[error("{}: no data rows", path.display())]
    EmptyFile { path: PathBuf },
    #[error("{}: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },
    #[error("config: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Json { path: PathBuf, source: serde_json::Error },
    #[error(transparent)]
    Core(#[from] wnll_core::Error),
    #[error("{0}")]
    Threshold(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit status: 1 for a missed accuracy threshold, 3 for
    /// numerical failures, 2 for everything caused by inputs or settings.
    pub fn exit_code(&self) -> i32 {
        use wnll_core::Error as E;
        match self {
            Error::Threshold(_) => 1,
            Error::Core(
                E::NotConverged { .. }
                | E::NonFiniteLoss { .. }
                | E::Diverged { .. }
                | E::AllBatchesSkipped { .. }
                | E::UncoveredComponent { .. },
            ) => 3,
            _ => 2,
        }
    }
}
