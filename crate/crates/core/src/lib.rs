//! Thompson sampling with stochastic-approximation Langevin updates (TS-SA),
//! baseline bandit policies, and a seeded regret harness.
//!
//! Rewards on arm `a` follow `N(<phi_a, theta_a>, sigma^2)` (or a two-component
//! mixture). TS-SA keeps one Langevin iterate per arm, refreshed by a single
//! noisy gradient step on a window of recent rewards and averaged into the
//! running estimate with a decaying weight.

pub mod config;
pub mod diagnostics;
pub mod environment;
pub mod error;
pub mod harness;
pub mod output;
pub mod policy;
pub mod reward;
pub mod rng;
pub mod sampler;

pub use config::{parse_config, parse_config_str, to_toml_string};
pub use environment::{ArmReward, BanditInstance, EnvironmentKind};
pub use error::{Error, Result};
pub use harness::{
    aggregate, run_experiment, run_experiment_with_threads, run_trial, AggregateTrace,
    EnvironmentSpec, ExperimentSpec, OutputSpec, RegretTrace, RunSettings,
};
pub use output::write_csv;
pub use policy::{Agent, Policy, PolicyConfig, TsSaConfig};
pub use reward::{LinearGaussianModel, MixtureGaussianReward};
pub use rng::{provision_stream, Stream};
pub use sampler::{decision_sample, sa_step_size, ts_sa_update, SaSchedule};
