//! Attack protocols, ASV trials and the end-to-end experiment.

mod asv;
mod attacker;
mod experiment;
mod protocol;

pub use asv::{asv_trials, Condition};
pub use attacker::{train_attacker, Attacker, AttackerConfig};
pub use experiment::{run_experiment, ExperimentConfig, ExperimentSummary};
pub use protocol::{run_protocol, sex_scores, Attack, Protocol, ProtocolOutcome};
