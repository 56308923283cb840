//! Combine binary multilabel predictions from several base models into one
//! relevance-score matrix.
//!
//! * [`types::average_predictions`]: majority voting (MV).
//! * [`mlcmr::mlcm_r`]: consensus over a bipartite instance/label graph, aimed
//!   at ranking loss; [`mlcmr::bgcm_binary_relevance`] is its per-label baseline.
//! * [`mlcma::mlcm_a`]: covariance-regularized averaging, aimed at microAUC.
//! * [`metrics`]: microAUC, one error, ranking loss and average precision.
//! * [`synth`] and [`bench`]: synthetic data and a seeded comparison harness.

pub mod bench;
pub mod error;
pub mod io;
pub mod metrics;
pub mod mlcma;
pub mod mlcmr;
pub mod synth;
pub mod types;

pub use error::{MlcmError, Result};
pub use types::{
    average_predictions, validate, ConsensusConfig, LabelMatrix, PredictionSet, ScoreMatrix, TiePolicy,
};
