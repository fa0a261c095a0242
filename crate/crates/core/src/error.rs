use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Unified error type for the crate.
///
/// Variants group roughly into data errors (ingestion, schema, model inputs)
/// and protocol errors (framing, channel, guest state). The CLI maps the
/// groups to distinct exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv parse error: {0}")]
    Csv(#[from] csv::Error),

    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("row {row}: expected {expected} columns, found {found}")]
    ColumnCount {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("row {row}, column {column}: unknown category token {token:?}")]
    UnknownCategory {
        row: usize,
        column: String,
        token: String,
    },

    #[error("row {row}, column {column}: cannot parse {token:?} as a number")]
    BadNumber {
        row: usize,
        column: String,
        token: String,
    },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("train fraction must be in (0, 1), got {0}")]
    BadFraction(f64),

    #[error("invalid partition: {0}")]
    Partition(String),

    #[error("k must be at least 1")]
    KZero,

    #[error("k = {k} exceeds training size {n}")]
    KTooLarge { k: usize, n: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("column index {index} out of range for {columns} columns")]
    IndexOutOfRange { index: usize, columns: usize },

    #[error("model snapshot: {0}")]
    Snapshot(String),

    #[error("{players} players exceeds enumeration cap {cap}")]
    CapExceeded { players: usize, cap: usize },

    #[error("game must have at least one player")]
    NoPlayers,

    #[error("value function returned a non-finite value for mask {mask:#b}")]
    NonFinite { mask: u32 },

    #[error("player column sets overlap at column {column}")]
    OverlappingGroups { column: usize },

    #[error("rank agreement needs at least 3 common players, got {0}")]
    TooFewPlayers(usize),

    #[error("player {0:?} not present in report")]
    PlayerNotFound(String),

    #[error("sample size {requested} exceeds population {available}")]
    SampleTooLarge { requested: usize, available: usize },

    #[error("pseudonym key must be nonempty")]
    EmptyKey,

    #[error("bad frame: {0}")]
    BadFrame(String),

    #[error("frame length {len} exceeds maximum {max}")]
    FrameTooLarge { len: usize, max: usize },

    #[error("truncated frame")]
    Truncated,

    #[error("unknown message type byte {0}")]
    UnknownMessageType(u8),

    #[error("unsupported protocol version {0}")]
    VersionMismatch(u8),

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("guest error [{code}]: {detail}")]
    Guest { code: String, detail: String },

    #[error("channel failure: {0}")]
    Channel(String),

    #[error("instance {0} not found")]
    InstanceNotFound(String),
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// True for errors originating in the wire protocol or channel layer.
    pub fn is_protocol(&self) -> bool {
        matches!(
            self,
            Error::BadFrame(_)
                | Error::FrameTooLarge { .. }
                | Error::Truncated
                | Error::UnknownMessageType(_)
                | Error::VersionMismatch(_)
                | Error::Protocol(_)
                | Error::Guest { .. }
                | Error::Channel(_)
        )
    }
}
