//! Datasets and metrics: sampled corpora with an in-distribution /
//! out-of-distribution length split, total variation against the exact
//! process, `Acc_closed`, and recognition accuracy over members and
//! corrupted negatives.

mod corrupt;
mod dataset;
mod metrics;

pub use corrupt::{corrupt_once, enumerate_bodies, malformed_framings, negatives_from};
pub use dataset::{generate_dataset, split_seed, DatasetKind, DatasetRecord, Split, SplitSpec};
pub use metrics::{
    acc_closed, compiled_predictions, max_tv_over_prefixes, network_predictions, recognition_accuracy, tv_distance,
    AccClosedReport, Aligned, Bucket, MetricsReport, RecognitionReport, SplitMetrics, TvReport,
};

use thiserror::Error;

use crate::constructions::ConstructError;
use crate::lang_core::LangError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("distribution lengths differ: {0} vs {1}")]
    Length(usize, usize),
    #[error("distribution sums to {0}, not 1")]
    NotNormalized(f64),
    #[error("no qualifying positions")]
    Empty,
    #[error("ood_factor must exceed 1, got {0}")]
    OodFactor(f64),
    #[error("{0}")]
    Network(String),
    #[error(transparent)]
    Construct(#[from] ConstructError),
    #[error(transparent)]
    Lang(#[from] LangError),
}
