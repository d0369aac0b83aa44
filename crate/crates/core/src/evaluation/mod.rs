//! Unsupervised cluster accuracy: the best map from clusters to ground-truth
//! classes, either injective (each class claimed by at most one cluster) or
//! many-to-one (each cluster takes its majority class).

mod assignment;
mod report;

pub use assignment::{
    brute_force_accuracy, cluster_accuracy, hungarian, AssignmentMode, AssignmentResult, LabelPair, BRUTE_FORCE_LIMIT,
};
pub use report::{evaluate_model, evaluate_predictions, ChannelReport, EvaluationReport};
