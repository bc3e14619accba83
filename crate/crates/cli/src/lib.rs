//! Configuration, checkpoints, the training loop and the `synth`, `train`,
//! `eval` and `predict` commands behind the `odcs` binary.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod train;

pub use checkpoint::Checkpoint;
pub use commands::{cmd_eval, cmd_predict, cmd_synth, cmd_train, TrainSummary};
pub use config::TrainConfig;
pub use error::{CliError, Result};
