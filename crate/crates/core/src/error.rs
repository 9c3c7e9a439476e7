use thiserror::Error;

/// Errors raised anywhere in the fitting pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid dataset: {0}")]
    Data(String),
    #[error("time {t} outside spline domain [{a}, {b}]{context}")]
    Domain {
        t: f64,
        a: f64,
        b: f64,
        context: String,
    },
    #[error("interior knots collide at quantile {quantile} (value {value}); use fewer knots or the equally-spaced rule")]
    DuplicateKnot { quantile: f64, value: f64 },
    #[error("subject {subject} has {m} observations but the basis has {d} functions; filter subjects with too few visits")]
    TooFewObservations { subject: String, m: usize, d: usize },
    #[error("subject {subject}: observation {obs} has leverage {leverage} (saturated fit)")]
    SaturatedFit {
        subject: String,
        obs: usize,
        leverage: f64,
    },
    #[error(
        "rank-deficient design for subject {subject}; filter subjects with too few distinct visits"
    )]
    RankDeficient { subject: String },
    #[error("no adjacent observation pairs at scaled distance 1 (kappa = {kappa}, tol = {tol}); review kappa or the tolerance")]
    NoAdjacentPairs { kappa: f64, tol: f64 },
    #[error("matrix not positive definite: {0}")]
    NotPositiveDefinite(String),
    #[error("singular linear system: {0}")]
    Singular(String),
    #[error("group {group} has {rows} pooled observations, fewer than {d} basis functions")]
    GroupTooSmall { group: usize, rows: usize, d: usize },
    #[error("selection failed: {0}")]
    Selection(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("partition sizes differ: {0} vs {1}")]
    PartitionMismatch(usize, usize),
    #[error("csv error at row {row}: {message}")]
    CsvRow { row: usize, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag used in error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Data(_) => "data",
            Error::Domain { .. } => "domain",
            Error::DuplicateKnot { .. } => "duplicate_knot",
            Error::TooFewObservations { .. } => "too_few_observations",
            Error::SaturatedFit { .. } => "saturated_fit",
            Error::RankDeficient { .. } => "rank_deficient",
            Error::NoAdjacentPairs { .. } => "no_adjacent_pairs",
            Error::NotPositiveDefinite(_) => "not_positive_definite",
            Error::Singular(_) => "singular",
            Error::GroupTooSmall { .. } => "group_too_small",
            Error::Selection(_) => "selection",
            Error::Degenerate(_) => "degenerate",
            Error::PartitionMismatch(..) => "partition_mismatch",
            Error::CsvRow { .. } => "csv_row",
            Error::Csv(_) => "csv",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
