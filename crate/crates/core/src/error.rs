use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate local frame: consecutive track points share a horizontal position")]
    DegenerateFrame,

    #[error("degenerate trajectory `{0}`: zero horizontal path length")]
    DegenerateTrajectory(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("unknown flow id {id}; valid ids: {valid:?}")]
    UnknownFlow { id: usize, valid: Vec<usize> },

    #[error("invalid time bin {weekday}:{bin}; valid bins: weekdays {weekdays:?}, bins 0..{bins_per_day}")]
    InvalidTimeBin {
        weekday: u8,
        bin: usize,
        weekdays: Vec<u8>,
        bins_per_day: usize,
    },

    #[error("{stage}: {message}")]
    Stage { stage: &'static str, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
