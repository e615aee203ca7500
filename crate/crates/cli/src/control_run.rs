//! The decentralized control run: rigidity maintenance with range-only
//! localization, logged tick by tick.

use std::io::Write;

use serde::{Deserialize, Serialize};
use subrigid::rigidity::Framework;
use subrigid::simnet::{step_simulation, TickMetrics, World};

use crate::config::ScenarioConfig;
use crate::error::Result;
use crate::scenario::{generate_scenario, scenario_rng, Generated};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RunOutcome {
    Completed,
    RigidityLost { time: f64, error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlRun {
    pub generated: Generated,
    /// Extents frozen at the start.
    pub extents: Vec<usize>,
    pub rows: Vec<TickMetrics>,
    pub outcome: RunOutcome,
    /// True positions and topology when the run stopped.
    pub final_framework: Framework,
}

/// Stream of the scenario RNG that places the robots; the simulation's own
/// noise comes from a separate stream.
const PLACEMENT_STREAM: u64 = 0;
const NOISE_STREAM: u64 = 1;

/// Generates the initial rigid framework from the config and runs the
/// controller for `duration` seconds. A zero duration yields no rows.
///
/// Losing rigidity ends the run early with [`RunOutcome::RigidityLost`];
/// other failures are errors.
pub fn run_control_experiment(config: &ScenarioConfig, mut trace: Option<&mut dyn Write>) -> Result<ControlRun> {
    config.validate()?;
    let generated = generate_scenario(config, &mut scenario_rng(config.seed, PLACEMENT_STREAM))?;
    let noise_seed = {
        use rand::Rng;
        scenario_rng(config.seed, NOISE_STREAM).random::<u64>()
    };
    let mut world = World::new(generated.framework.clone(), config.sim_params(), noise_seed)?;
    let extents = (0..config.n).map(|i| world.state().extents().get(i)).collect();
    let mut rows = Vec::new();
    let mut outcome = RunOutcome::Completed;
    if config.duration > 0.0 {
        rows.push(world.metrics()?);
        // stop once within a microsecond of the horizon
        while world.time() < config.duration - 1e-6 {
            match step_simulation(&world, trace.as_mut().map(|w| &mut **w as &mut dyn Write)) {
                Ok((next, metrics, _)) => {
                    rows.push(metrics);
                    world = next;
                }
                Err(e @ subrigid::Error::RigidityLost { .. }) => {
                    outcome = RunOutcome::RigidityLost { time: world.time(), error: e.to_string() };
                    break;
                }
                Err(e) => return Err(e.into()),
            }
        }
    }
    Ok(ControlRun { generated, extents, rows, outcome, final_framework: world.snapshot() })
}

pub fn write_control_csv(rows: &[TickMetrics], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TickMetrics::HEADER)?;
    for row in rows {
        w.write_record(row.row())?;
    }
    w.flush()?;
    Ok(())
}
