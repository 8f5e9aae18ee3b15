//! Density-based local outlier detection in feature subspaces.
//!
//! The central scorer, [`gloss()`], builds one k-nearest-neighbour table on
//! all features and measures, for every candidate subspace, how far each
//! point lies from its global neighbours when only that subspace's features
//! are considered. Local-LoOP, plain LoOP and LOF are provided as baselines,
//! along with a contrast-based subspace search, synthetic data generators and
//! ROC evaluation.

pub mod data;
pub mod density;
pub mod error;
pub mod eval;
pub mod gloss;
pub mod neighbors;
pub mod search;
pub mod synth;

pub use data::{load_csv, read_csv, save_csv, write_csv, CsvOptions, Dataset, Subspace};
pub use density::{
    local_loop_scores, lof_scores, loop_scores, LoopParams, ScoreVector, SATURATED_FACTOR,
};
pub use error::{Error, Result};
pub use eval::{roc_auc, run_experiment, Algorithm, ExperimentConfig, ExperimentReport, RocCurve};
pub use gloss::{gloss, gloss_with, Normalisation, ScoreMatrix, SubspaceSource};
pub use neighbors::{knn_table, DistanceMetric, NeighborhoodTable};
pub use search::{search_subspaces, SearchMode, SearchOutcome, SearchParams};
pub use synth::{generate, SynthConfig, SyntheticData};
