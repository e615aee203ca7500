//! Random deployments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use subrigid::graph::{disk_proximity_graph, is_connected};
use subrigid::rigidity::{is_infinitesimally_rigid, Framework, DEFAULT_TOL};

use crate::config::ScenarioConfig;
use crate::error::{CliError, Result};

/// ChaCha8 seeded with `seed`, on its own `stream`. Streams never overlap,
/// so network `k` of an ensemble draws the same numbers whatever order the
/// networks are evaluated in.
pub fn scenario_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A framework with the number of draws it took.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generated {
    pub framework: Framework,
    pub attempts: usize,
    pub rejected_disconnected: usize,
    pub rejected_flexible: usize,
}

/// Uniform positions in the region joined by the disk model, redrawn until
/// connected (and rigid when the config asks for it).
pub fn generate_scenario(config: &ScenarioConfig, rng: &mut impl Rng) -> Result<Generated> {
    generate_with_range(config, config.range, rng)
}

pub fn generate_with_range(config: &ScenarioConfig, range: f64, rng: &mut impl Rng) -> Result<Generated> {
    let (mut disconnected, mut flexible) = (0, 0);
    for attempt in 1..=config.max_attempts {
        let coords: Vec<f64> = (0..config.n)
            .flat_map(|_| config.region.iter().map(|&side| side * rng.random::<f64>()).collect::<Vec<_>>())
            .collect();
        let graph = disk_proximity_graph(&coords, config.dim, range);
        if !is_connected(&graph) {
            disconnected += 1;
            continue;
        }
        let framework = Framework::new(graph, config.dim, coords)?;
        if config.require_rigid && !is_infinitesimally_rigid(&framework, DEFAULT_TOL)? {
            flexible += 1;
            continue;
        }
        return Ok(Generated { framework, attempts: attempt, rejected_disconnected: disconnected, rejected_flexible: flexible });
    }
    Err(CliError::RejectionBudget { attempts: config.max_attempts })
}
