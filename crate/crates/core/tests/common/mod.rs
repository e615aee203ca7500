#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use subrigid::graph::{disk_proximity_graph, is_connected, Graph};
use subrigid::rigidity::{is_infinitesimally_rigid, Framework, DEFAULT_TOL};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_coords(rng: &mut impl Rng, n: usize, dim: usize, side: f64) -> Vec<f64> {
    (0..n * dim).map(|_| rng.random_range(0.0..side)).collect()
}

/// Random graph on random points, with each edge kept with probability `p`.
pub fn random_framework(rng: &mut impl Rng, n: usize, dim: usize, p: f64) -> Framework {
    let coords = uniform_coords(rng, n, dim, 10.0);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random_bool(p) {
                edges.push((i, j));
            }
        }
    }
    Framework::new(Graph::from_edges(n, edges).unwrap(), dim, coords).unwrap()
}

/// Connected random framework (resampled until connected).
pub fn random_connected_framework(rng: &mut impl Rng, n: usize, dim: usize, p: f64) -> Framework {
    loop {
        let fw = random_framework(rng, n, dim, p);
        if is_connected(fw.graph()) {
            return fw;
        }
    }
}

/// Rigid disk-proximity framework in a `side × side` square.
pub fn random_rigid_disk_framework(rng: &mut impl Rng, n: usize, side: f64, range: f64) -> Framework {
    loop {
        let coords = uniform_coords(rng, n, 2, side);
        let g = disk_proximity_graph(&coords, 2, range);
        if !is_connected(&g) {
            continue;
        }
        let fw = Framework::new(g, 2, coords).unwrap();
        if is_infinitesimally_rigid(&fw, DEFAULT_TOL).unwrap() {
            return fw;
        }
    }
}
