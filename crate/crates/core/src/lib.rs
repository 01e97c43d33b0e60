//! Unsupervised scoring and optimization of human-machine interfaces.
//!
//! An interface maps raw user commands to environment actions. This crate
//! scores an interface by a variational lower bound on the mutual
//! information between commands and the state transitions they induce,
//! and learns interface parameters by Bayesian optimization of that score,
//! with the user in the loop.
//!
//! - [`numerics`]: dense nets, gradients, optimizer, seeded RNG.
//! - [`mi_estimator`]: transition datasets and the TUBA bound.
//! - [`envs`]: cursor and lander tasks with their parametric interfaces.
//! - [`sim_user`]: a noisily-rational simulated user.
//! - [`optimizer`]: GP surrogate, acquisitions, and the training loop.
//! - [`offline`]: episode logs, Spearman correlation, offline scoring.

pub mod envs;
pub mod error;
pub mod mi_estimator;
pub mod numerics;
pub mod offline;
pub mod optimizer;
pub mod sim_user;

pub use error::{Error, Result};
