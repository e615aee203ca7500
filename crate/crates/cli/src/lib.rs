//! Experiment drivers on top of the `subrigid` core crate: scenario
//! generation, ensemble statistics of rigidity extents and load, and the
//! decentralized control run.

pub mod config;
pub mod control_run;
pub mod ensemble;
pub mod error;
pub mod scenario;

pub use config::ScenarioConfig;
pub use control_run::{run_control_experiment, ControlRun};
pub use ensemble::{run_ensemble_experiment, EnsembleReport};
pub use error::{CliError, Result};
pub use scenario::{generate_scenario, scenario_rng, Generated};
