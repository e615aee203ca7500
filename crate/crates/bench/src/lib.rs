//! Fixtures shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use subrigid::graph::{disk_proximity_graph, is_connected};
use subrigid::rigidity::{is_infinitesimally_rigid, Framework, DEFAULT_TOL};

/// Rigid disk framework of `n` robots in a `side × side` square.
pub fn rigid_disk_framework(seed: u64, n: usize, side: f64, range: f64) -> Framework {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let coords: Vec<f64> = (0..2 * n).map(|_| rng.random_range(0.0..side)).collect();
        let g = disk_proximity_graph(&coords, 2, range);
        if !is_connected(&g) {
            continue;
        }
        let fw = Framework::new(g, 2, coords).expect("valid coordinates");
        if is_infinitesimally_rigid(&fw, DEFAULT_TOL).expect("eigen test") {
            return fw;
        }
    }
}
