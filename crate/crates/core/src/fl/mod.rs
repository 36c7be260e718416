//! Federated training harness: data, partitioning, the softmax model, the
//! server round loop and the evaluation metrics.

mod btr;
mod dataset;
mod idx;
mod model;
mod partition;
mod sim;

pub use btr::{btr_trials, btr_with, BtrSummary};
pub use dataset::{synth_dataset, synth_split, Dataset};
pub use idx::{load_idx_dataset, parse_idx, IdxTensor};
pub use model::{local_update, ModelState};
pub use partition::{dirichlet_partition, iid_partition};
pub use sim::{
    detection_accuracy, run_federated, DataSpec, Optimizer, Partition, RoundLog, TrainingConfig,
    TrainingSummary,
};
