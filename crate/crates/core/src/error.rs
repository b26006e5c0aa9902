use chrono::NaiveDate;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse failure class, used by the command-line front end to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numerical,
    MissingStage,
}

impl ErrorClass {
    /// Machine-parsable tag printed by the command-line front end.
    pub fn tag(self) -> &'static str {
        match self {
            ErrorClass::Config => "E_CONFIG",
            ErrorClass::Data => "E_DATA",
            ErrorClass::Numerical => "E_NUMERICAL",
            ErrorClass::MissingStage => "E_MISSING_STAGE",
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Config => 2,
            ErrorClass::Data | ErrorClass::MissingStage => 3,
            ErrorClass::Numerical => 4,
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("holiday table does not cover {0}")]
    CalendarCoverage(NaiveDate),

    #[error("missing observation for year {year} on {date}")]
    MissingDate { year: i32, date: NaiveDate },

    #[error("invalid data: {0}")]
    Data(String),

    #[error("unknown demand file layout `{0}`")]
    UnknownLayout(String),

    #[error("{rejected} of {total} rows rejected in {path}")]
    TooManyRejects {
        path: String,
        rejected: usize,
        total: usize,
    },

    #[error("incomplete days: {}", format_missing_hours(.0))]
    IncompleteDay(Vec<(NaiveDate, u8)>),

    #[error("missing mobility category `{0}`")]
    MissingCategory(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("sampler diverged: {0}")]
    Divergence(String),

    #[error("period `{0}` has no retained days in the evaluation window")]
    EmptyPeriod(String),

    #[error("insufficient history: {0}")]
    InsufficientHistory(String),

    #[error("panel is empty: {0}")]
    EmptyPanel(String),

    #[error("rank deficient design, collinear columns: {}", .0.join(", "))]
    RankDeficient(Vec<String>),

    #[error("degenerate sample: {0}")]
    Degenerate(String),

    #[error("stage `{stage}` has no output in {dir}; run it first")]
    MissingStage { stage: String, dir: String },

    #[error("output of stage `{stage}` does not match its manifest: {detail}")]
    StaleStage { stage: String, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn format_missing_hours(missing: &[(NaiveDate, u8)]) -> String {
    let shown: Vec<String> = missing.iter().take(10).map(|(d, h)| format!("({d}, {h})")).collect();
    if missing.len() > shown.len() {
        format!("{} ... ({} total)", shown.join(" "), missing.len())
    } else {
        shown.join(" ")
    }
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) | Error::UnknownLayout(_) => ErrorClass::Config,
            Error::Numerical(_) | Error::Divergence(_) | Error::RankDeficient(_) | Error::Degenerate(_) => {
                ErrorClass::Numerical
            }
            Error::MissingStage { .. } => ErrorClass::MissingStage,
            _ => ErrorClass::Data,
        }
    }
}
