//! Mutual-information scoring of interfaces from logged transitions.

mod dataset;
mod exact;
mod tuba;

pub use dataset::{build_transition_dataset, Normalization, TransitionDataset, TransitionSample, FINAL_STATE};
pub use exact::{chain_rule_check, exact_discrete_mi, DiscreteMi, JointTable};
pub use tuba::{
    fit_tuba, fit_tuba_with, mimi_evaluate, mimi_evaluate_with, score_dataset, seed_averaged_dataset,
    seed_averaged_score, tuba_objective, EstimatorConfig, EstimatorPair, MiScore, Objective,
    SeedAveragedScore, MIN_SAMPLES,
};
