//! Bayesian optimization of interface parameters against the MI score.

mod acquisition;
mod gp;
mod rundir;
mod train;

pub use acquisition::{
    acquisition, confidence_bound, expected_improvement, normal_cdf, normal_pdf,
    probability_of_improvement, AcquisitionKind, UCB_KAPPA,
};
pub use gp::{kernel, log_marginal_likelihood, Embedding, GpModel, Hyperparams, GP_RESTARTS, JITTER};
pub use rundir::{
    interface_log_name, load_manifest, load_run, save_run, save_run_noted, ManifestEntry, RunManifest, MANIFEST_FILE,
};
pub use train::{
    evaluate_interface, mimi_train, mimi_train_with_hook, propose_next, reset_stream, IterationRecord,
    Observation, Proposal, RunHistory, TrainConfig, Trainer, EPISODES_PER_INTERFACE, N_CANDIDATES, N_LOCAL,
};
