//! Domain types shared by every combiner: binary label matrices, the set of
//! base-model predictions, real-valued score matrices and the solver
//! configuration.

use std::fmt;
use std::ops::Deref;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{MlcmError, Result};

/// Slack allowed on the `[0, 1]` bound of a [`ScoreMatrix`].
pub const SCORE_RANGE_SLACK: f64 = 1e-12;

/// An `n x l` matrix of 0/1 label indicators.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMatrix {
    data: DMatrix<u8>,
}

impl LabelMatrix {
    /// Builds a label matrix from a row-major slice of 0/1 values.
    pub fn from_row_slice(rows: usize, cols: usize, values: &[u8]) -> Result<Self> {
        Self::check_dims(rows, cols)?;
        if values.len() != rows * cols {
            return Err(MlcmError::InvalidConfig(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|&v| v > 1) {
            return Err(MlcmError::NonBinaryEntry {
                model: None,
                row: pos / cols + 1,
                col: pos % cols + 1,
                value: f64::from(values[pos]),
            });
        }
        Ok(Self {
            data: DMatrix::from_row_slice(rows, cols, values),
        })
    }

    /// Builds a label matrix by evaluating `f(i, j)` for every entry.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> bool) -> Result<Self> {
        Self::check_dims(rows, cols)?;
        Ok(Self {
            data: DMatrix::from_fn(rows, cols, |i, j| u8::from(f(i, j))),
        })
    }

    /// Converts a real matrix whose entries must all be exactly 0 or 1.
    /// `model` is the 1-based model index used in error reports, `None` for
    /// ground truth.
    pub fn from_dense(values: &DMatrix<f64>, model: Option<usize>) -> Result<Self> {
        Self::check_dims(values.nrows(), values.ncols())?;
        for i in 0..values.nrows() {
            for j in 0..values.ncols() {
                let v = values[(i, j)];
                if v != 0.0 && v != 1.0 {
                    return Err(MlcmError::NonBinaryEntry {
                        model,
                        row: i + 1,
                        col: j + 1,
                        value: v,
                    });
                }
            }
        }
        Ok(Self {
            data: values.map(|v| v as u8),
        })
    }

    fn check_dims(rows: usize, cols: usize) -> Result<()> {
        if rows == 0 {
            return Err(MlcmError::EmptyMatrix("rows"));
        }
        if cols == 0 {
            return Err(MlcmError::EmptyMatrix("columns"));
        }
        Ok(())
    }

    pub fn nrows(&self) -> usize {
        self.data.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.data.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.data.shape()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[(row, col)] == 1
    }

    /// Number of relevant labels in `row`.
    pub fn row_count(&self, row: usize) -> usize {
        self.data.row(row).iter().map(|&v| usize::from(v)).sum()
    }

    pub fn to_f64(&self) -> DMatrix<f64> {
        self.data.map(f64::from)
    }

    /// Entry-wise complement (`1 - z`).
    pub fn complement(&self) -> Self {
        Self {
            data: self.data.map(|v| 1 - v),
        }
    }

    /// Reorders rows so that row `i` of the result is row `perm[i]` of `self`.
    pub fn select_rows(&self, perm: &[usize]) -> Self {
        Self {
            data: self.data.select_rows(perm),
        }
    }

    /// Reorders columns so that column `j` of the result is column `perm[j]`.
    pub fn select_columns(&self, perm: &[usize]) -> Self {
        Self {
            data: self.data.select_columns(perm),
        }
    }

    pub fn as_matrix(&self) -> &DMatrix<u8> {
        &self.data
    }
}

/// Binary predictions of `m >= 1` base models, all of identical shape.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PredictionSet {
    models: Vec<LabelMatrix>,
}

impl PredictionSet {
    pub fn new(models: Vec<LabelMatrix>) -> Result<Self> {
        let first = models.first().ok_or(MlcmError::EmptyPredictionSet)?;
        let (rows, cols) = first.shape();
        for (k, y) in models.iter().enumerate().skip(1) {
            let (found_rows, found_cols) = y.shape();
            if (found_rows, found_cols) != (rows, cols) {
                return Err(MlcmError::DimensionMismatch {
                    model: k + 1,
                    rows,
                    cols,
                    found_rows,
                    found_cols,
                });
            }
        }
        Ok(Self { models })
    }

    /// Number of base models.
    pub fn m(&self) -> usize {
        self.models.len()
    }

    /// Number of instances.
    pub fn n(&self) -> usize {
        self.models[0].nrows()
    }

    /// Number of labels.
    pub fn l(&self) -> usize {
        self.models[0].ncols()
    }

    pub fn models(&self) -> &[LabelMatrix] {
        &self.models
    }

    pub fn model(&self, k: usize) -> &LabelMatrix {
        &self.models[k]
    }

    /// Applies the same row permutation to every model.
    pub fn select_rows(&self, perm: &[usize]) -> Self {
        Self {
            models: self.models.iter().map(|y| y.select_rows(perm)).collect(),
        }
    }

    /// Applies the same column permutation to every model.
    pub fn select_columns(&self, perm: &[usize]) -> Self {
        Self {
            models: self.models.iter().map(|y| y.select_columns(perm)).collect(),
        }
    }
}

/// Checks raw base-model outputs (and optionally the ground truth) against
/// the shape and binarity invariants.
pub fn validate(
    models: &[DMatrix<f64>],
    truth: Option<&DMatrix<f64>>,
) -> Result<(PredictionSet, Option<LabelMatrix>)> {
    let first = models.first().ok_or(MlcmError::EmptyPredictionSet)?;
    let (rows, cols) = first.shape();
    let mut out = Vec::with_capacity(models.len());
    for (k, y) in models.iter().enumerate() {
        let (found_rows, found_cols) = y.shape();
        if (found_rows, found_cols) != (rows, cols) {
            return Err(MlcmError::DimensionMismatch {
                model: k + 1,
                rows,
                cols,
                found_rows,
                found_cols,
            });
        }
        out.push(LabelMatrix::from_dense(y, Some(k + 1))?);
    }
    let set = PredictionSet::new(out)?;
    let truth = truth
        .map(|z| {
            check_truth_shape(&set, z.shape())?;
            LabelMatrix::from_dense(z, None)
        })
        .transpose()?;
    Ok((set, truth))
}

/// Errors unless `truth_shape` equals the prediction shape.
pub fn check_truth_shape(set: &PredictionSet, truth_shape: (usize, usize)) -> Result<()> {
    let (found_rows, found_cols) = truth_shape;
    if (found_rows, found_cols) != (set.n(), set.l()) {
        return Err(MlcmError::TruthShapeMismatch {
            rows: set.n(),
            cols: set.l(),
            found_rows,
            found_cols,
        });
    }
    Ok(())
}

/// Real relevance scores, finite and inside `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreMatrix(DMatrix<f64>);

impl ScoreMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        for i in 0..values.nrows() {
            for j in 0..values.ncols() {
                let v = values[(i, j)];
                if !(-SCORE_RANGE_SLACK..=1.0 + SCORE_RANGE_SLACK).contains(&v) {
                    return Err(MlcmError::InvalidScore {
                        row: i + 1,
                        col: j + 1,
                        value: v,
                    });
                }
            }
        }
        Ok(Self(values))
    }

    /// Affine min-max rescale of the whole matrix onto `[0, 1]`. Order
    /// preserving; a constant matrix is clamped into range instead.
    pub fn rescaled(values: &DMatrix<f64>) -> Result<Self> {
        let lo = values.min();
        let hi = values.max();
        if !(lo.is_finite() && hi.is_finite()) {
            return Self::new(values.clone());
        }
        let out = if hi > lo {
            let span = hi - lo;
            values.map(|v| ((v - lo) / span).clamp(0.0, 1.0))
        } else {
            values.map(|v| v.clamp(0.0, 1.0))
        };
        Self::new(out)
    }

    pub fn from_labels(labels: &LabelMatrix) -> Self {
        Self(labels.to_f64())
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }
}

impl Deref for ScoreMatrix {
    type Target = DMatrix<f64>;

    fn deref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// Simple averaging: entry `(i, l)` is the fraction of models that predict
/// label `l` on instance `i`. This is the MV baseline and the MLCM-a start.
pub fn average_predictions(set: &PredictionSet) -> ScoreMatrix {
    let (n, l) = (set.n(), set.l());
    let mut votes = DMatrix::<u32>::zeros(n, l);
    for y in set.models() {
        votes += y.as_matrix().map(u32::from);
    }
    let m = set.m() as f64;
    ScoreMatrix(votes.map(|c| f64::from(c) / m))
}

/// How metrics treat equal scores on a (relevant, irrelevant) pair.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TiePolicy {
    /// A tie counts as a misordered pair.
    #[default]
    Strict,
    /// A tie counts as half a correctly ordered pair.
    Half,
}

impl fmt::Display for TiePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TiePolicy::Strict => "strict",
            TiePolicy::Half => "half",
        })
    }
}

impl FromStr for TiePolicy {
    type Err = MlcmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strict" => Ok(TiePolicy::Strict),
            "half" => Ok(TiePolicy::Half),
            other => Err(MlcmError::InvalidConfig(format!(
                "unknown tie policy `{other}` (expected strict or half)"
            ))),
        }
    }
}

/// Solver parameters shared by the consensus methods.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConsensusConfig {
    /// Weight anchoring group nodes to their own label in the consensus graph.
    pub alpha: f64,
    /// Upper bound on MLCM-a outer iterations.
    pub iters: usize,
    /// Max-abs change below which an iteration stops early.
    pub tol: f64,
    /// Diagonal loading added to the MLCM-a covariance estimate.
    pub ridge: f64,
    pub tie_policy: TiePolicy,
    /// Estimate the MLCM-a covariance from column-centered scores.
    pub center: bool,
    pub seed: u64,
}

impl Default for ConsensusConfig {
    fn default() -> Self {
        Self {
            alpha: 2.0,
            iters: 20,
            tol: 1e-8,
            ridge: 1e-6,
            tie_policy: TiePolicy::Strict,
            center: false,
            seed: 0,
        }
    }
}

impl ConsensusConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(MlcmError::InvalidConfig(format!(
                "alpha must be positive and finite, got {}",
                self.alpha
            )));
        }
        if self.iters == 0 {
            return Err(MlcmError::InvalidConfig("iters must be at least 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(MlcmError::InvalidConfig(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err(MlcmError::InvalidConfig(format!(
                "ridge must be non-negative, got {}",
                self.ridge
            )));
        }
        Ok(())
    }
}
