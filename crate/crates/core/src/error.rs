use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, MlcmError>;

/// Every failure the library can report. Indices inside variants are 1-based
/// (models, CSV lines, rows and columns) so they line up with what a user sees
/// in the input files.
#[derive(Debug, Error)]
pub enum MlcmError {
    #[error("prediction set is empty")]
    EmptyPredictionSet,

    #[error("matrix has no {0}")]
    EmptyMatrix(&'static str),

    #[error("model {model} has shape {found_rows}x{found_cols}, expected {rows}x{cols}")]
    DimensionMismatch {
        model: usize,
        rows: usize,
        cols: usize,
        found_rows: usize,
        found_cols: usize,
    },

    #[error("ground truth has shape {found_rows}x{found_cols}, expected {rows}x{cols}")]
    TruthShapeMismatch {
        rows: usize,
        cols: usize,
        found_rows: usize,
        found_cols: usize,
    },

    #[error("score matrix is {score_rows}x{score_cols} but truth is {truth_rows}x{truth_cols}")]
    ShapeMismatch {
        score_rows: usize,
        score_cols: usize,
        truth_rows: usize,
        truth_cols: usize,
    },

    #[error("{}: entry ({row}, {col}) = {value} is not 0 or 1", source_name(.model))]
    NonBinaryEntry {
        /// `None` when the offending matrix is the ground truth.
        model: Option<usize>,
        row: usize,
        col: usize,
        value: f64,
    },

    #[error("score entry ({row}, {col}) = {value} is not finite or outside [0, 1]")]
    InvalidScore { row: usize, col: usize, value: f64 },

    #[error("{}: line {line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{}: line {line}: row has {found} fields, expected {expected}", path.display())]
    RaggedRow {
        path: PathBuf,
        line: u64,
        expected: usize,
        found: usize,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{kind} node {index} has zero degree")]
    SingularDegree { kind: &'static str, index: usize },

    #[error("linear solve failed: {0}")]
    SolverFailure(String),

    #[error("no convergence after {iters} iterations (last change {last_change:e})")]
    NonConvergence { iters: usize, last_change: f64 },

    #[error("every instance has an empty relevant or irrelevant label set")]
    AllInstancesDegenerate,

    #[error("ground truth needs at least one positive and one negative entry")]
    DegenerateTruth,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("infeasible synthetic spec: {0}")]
    InfeasibleSpec(String),

    #[error("unknown method `{0}` (expected one of mv, bgcm-br, mlcm-r, mlcm-a)")]
    UnknownMethod(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

fn source_name(model: &Option<usize>) -> String {
    match model {
        Some(k) => format!("model {k}"),
        None => "ground truth".to_string(),
    }
}

impl MlcmError {
    /// Stable machine-readable tag, used by the CLI's error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            MlcmError::EmptyPredictionSet => "empty_prediction_set",
            MlcmError::EmptyMatrix(_) => "empty_matrix",
            MlcmError::DimensionMismatch { .. } => "dimension_mismatch",
            MlcmError::TruthShapeMismatch { .. } => "truth_shape_mismatch",
            MlcmError::ShapeMismatch { .. } => "shape_mismatch",
            MlcmError::NonBinaryEntry { .. } => "non_binary_entry",
            MlcmError::InvalidScore { .. } => "invalid_score",
            MlcmError::Parse { .. } => "parse_error",
            MlcmError::RaggedRow { .. } => "ragged_row",
            MlcmError::Io { .. } => "io_error",
            MlcmError::SingularDegree { .. } => "singular_degree",
            MlcmError::SolverFailure(_) => "solver_failure",
            MlcmError::NonConvergence { .. } => "non_convergence",
            MlcmError::AllInstancesDegenerate => "all_instances_degenerate",
            MlcmError::DegenerateTruth => "degenerate_truth",
            MlcmError::InvalidConfig(_) => "invalid_config",
            MlcmError::InfeasibleSpec(_) => "infeasible_spec",
            MlcmError::UnknownMethod(_) => "unknown_method",
            MlcmError::Json(_) => "json_error",
        }
    }
}
