use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("design matrix is rank deficient; collinear columns: {}", .columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    #[error("no observations with positive weight")]
    EmptySample,

    #[error("fixed-effect demeaning did not converge after {iterations} sweeps (max group mean {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("cluster-robust covariance needs at least 2 clusters, found {found}")]
    TooFewClusters { found: usize },

    #[error("model is underidentified: {instruments} excluded instruments for {endogenous} endogenous regressors")]
    Underidentified {
        instruments: usize,
        endogenous: usize,
    },

    #[error("first stage is rank deficient; instruments carry no independent variation for: {}", .columns.join(", "))]
    FirstStageRankDeficient { columns: Vec<String> },

    #[error("no import-growth series for industries: {}", .codes.join(", "))]
    MissingIndustry { codes: Vec<String> },

    #[error("schema error in {file}: {message}")]
    Schema { file: String, message: String },

    #[error("missing input from stage `{stage}`: {}", .path.display())]
    MissingStage { stage: String, path: PathBuf },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn schema(file: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            file: file.into(),
            message: message.into(),
        }
    }

    /// Process exit status: 2 for configuration and missing-stage errors, 3
    /// for data and schema errors, 4 for estimation failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::MissingStage { .. } => 2,
            Error::Schema { .. }
            | Error::Csv(_)
            | Error::Json(_)
            | Error::Validation(_)
            | Error::MissingIndustry { .. } => 3,
            e if e.is_estimation() => 4,
            _ => 1,
        }
    }

    /// True for failures raised while fitting a model (as opposed to I/O,
    /// configuration or schema problems).
    pub fn is_estimation(&self) -> bool {
        matches!(
            self,
            Error::RankDeficient { .. }
                | Error::EmptySample
                | Error::NonConvergence { .. }
                | Error::TooFewClusters { .. }
                | Error::Underidentified { .. }
                | Error::FirstStageRankDeficient { .. }
        )
    }
}
