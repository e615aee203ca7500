//! Hop-limited subframeworks, rigidity extents and communication load.
//!
//! The subframework centered at `i` with extent `h` is the framework induced
//! by every node within `h` hops of `i`. A connected framework is
//! infinitesimally rigid exactly when some choice of extents makes every
//! subframework rigid, which turns a global property into `n` local ones.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{bfs_ball, GeodesicTable, Graph};
use crate::rigidity::{is_rigid_of, Framework};

/// The framework induced by the `extent`-hop ball around `center`.
///
/// Local index `k` refers to global node `vertices[k]`; `vertices` is sorted
/// so the local ordering is deterministic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subframework {
    pub center: usize,
    pub extent: usize,
    pub dim: usize,
    pub vertices: Vec<usize>,
    /// Hop distance from the center, per local vertex.
    pub hops: Vec<usize>,
    /// Induced edges in local indices, `(a, b)` with `a < b`, sorted.
    pub edges: Vec<(usize, usize)>,
    /// `dim` coordinates per local vertex.
    pub coords: Vec<f64>,
}

impl Subframework {
    /// Assembles a subframework from `(global id, hops)` members and an edge
    /// oracle; used both on the full graph and on reconstructed local views.
    pub fn from_members<F>(
        center: usize,
        extent: usize,
        dim: usize,
        mut members: Vec<(usize, usize)>,
        position: impl Fn(usize) -> Vec<f64>,
        adjacent: F,
    ) -> Self
    where
        F: Fn(usize, usize) -> bool,
    {
        members.sort_unstable();
        let vertices: Vec<usize> = members.iter().map(|&(v, _)| v).collect();
        let hops = members.iter().map(|&(_, h)| h).collect();
        let coords = vertices.iter().flat_map(|&v| position(v)).collect();
        let mut edges = Vec::new();
        for a in 0..vertices.len() {
            for b in (a + 1)..vertices.len() {
                if adjacent(vertices[a], vertices[b]) {
                    edges.push((a, b));
                }
            }
        }
        Subframework { center, extent, dim, vertices, hops, edges, coords }
    }

    #[inline]
    pub fn node_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn local_index(&self, global: usize) -> Option<usize> {
        self.vertices.binary_search(&global).ok()
    }

    #[inline]
    pub fn point(&self, local: usize) -> &[f64] {
        &self.coords[local * self.dim..(local + 1) * self.dim]
    }

    pub fn contains(&self, global: usize) -> bool {
        self.local_index(global).is_some()
    }

    /// Edges in global ids.
    pub fn global_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().map(|&(a, b)| (self.vertices[a], self.vertices[b]))
    }

    /// Normalized infinitesimal rigidity; subframeworks with at most `d`
    /// nodes count as not rigid.
    pub fn is_rigid(&self, tol: f64) -> Result<bool> {
        if self.node_count() <= self.dim {
            return Ok(false);
        }
        is_rigid_of(&self.edges, &self.coords, self.dim, tol)
    }

    pub fn to_framework(&self) -> Result<Framework> {
        let g = Graph::from_edges(self.node_count(), self.edges.iter().copied())?;
        Framework::new(g, self.dim, self.coords.clone())
    }
}

pub fn extract_subframework(fw: &Framework, center: usize, extent: usize) -> Result<Subframework> {
    if extent == 0 {
        return Err(Error::InvalidParams("subframework extent must be at least one hop".into()));
    }
    let ball = bfs_ball(fw.graph(), center, extent)?;
    Ok(subframework_from_ball(fw, center, extent, ball))
}

fn subframework_from_ball(fw: &Framework, center: usize, extent: usize, ball: Vec<(usize, usize)>) -> Subframework {
    let g = fw.graph();
    Subframework::from_members(
        center,
        extent,
        fw.dim(),
        ball,
        |v| fw.point(v).to_vec(),
        |a, b| g.has_edge(a, b),
    )
}

/// Minimal extent `η_i` making the subframework at `center` rigid, searched
/// linearly from one hop up to the center's eccentricity. `None` when no
/// extent works, which happens exactly when the center's component is not
/// rigid.
pub fn rigidity_extent(fw: &Framework, center: usize, tol: f64) -> Result<Option<usize>> {
    let full = bfs_ball(fw.graph(), center, usize::MAX)?;
    let ecc = full.last().map_or(0, |&(_, h)| h);
    for h in 1..=ecc {
        let ball: Vec<_> = full.iter().copied().take_while(|&(_, d)| d <= h).collect();
        if ball.len() <= fw.dim() {
            continue;
        }
        if subframework_from_ball(fw, center, h, ball).is_rigid(tol)? {
            return Ok(Some(h));
        }
    }
    Ok(None)
}

/// Per-node extents `h_i`, with `worst_case = max h_i`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtentAssignment {
    pub extents: Vec<usize>,
    pub worst_case: usize,
}

impl ExtentAssignment {
    /// Checks `1 ≤ h_i ≤ ε_i` against the geodesic table.
    pub fn new(extents: Vec<usize>, table: &GeodesicTable) -> Result<Self> {
        if extents.len() != table.node_count() {
            return Err(Error::DimensionMismatch { expected: table.node_count(), got: extents.len() });
        }
        for (i, &h) in extents.iter().enumerate() {
            let ecc = table.eccentricity(i);
            if h == 0 || h > ecc.max(1) {
                return Err(Error::InvalidParams(format!(
                    "extent {h} of node {i} outside [1, {}]",
                    ecc.max(1)
                )));
            }
        }
        Ok(Self::unchecked(extents))
    }

    pub(crate) fn unchecked(extents: Vec<usize>) -> Self {
        let worst_case = extents.iter().copied().max().unwrap_or(0);
        ExtentAssignment { extents, worst_case }
    }

    /// `h_i = 1` everywhere.
    pub fn one_hop(n: usize) -> Self {
        Self::unchecked(vec![1; n])
    }

    /// `h_i = ε_i` (at least one hop).
    pub fn eccentricities(table: &GeodesicTable) -> Self {
        Self::unchecked(table.eccentricities().into_iter().map(|e| e.max(1)).collect())
    }

    #[inline]
    pub fn get(&self, i: usize) -> usize {
        self.extents[i]
    }

    pub fn len(&self) -> usize {
        self.extents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.extents.is_empty()
    }
}

/// Rigidity extents of every node, or `None` if some node has none.
pub fn rigidity_extents(fw: &Framework, tol: f64) -> Result<Option<ExtentAssignment>> {
    let mut extents = Vec::with_capacity(fw.node_count());
    for i in 0..fw.node_count() {
        match rigidity_extent(fw, i, tol)? {
            Some(h) => extents.push(h),
            None => return Ok(None),
        }
    }
    Ok(Some(ExtentAssignment::unchecked(extents)))
}

/// `η = max_i η_i`.
pub fn worst_case_extent(fw: &Framework, tol: f64) -> Result<Option<usize>> {
    Ok(rigidity_extents(fw, tol)?.map(|a| a.worst_case))
}

/// `ℐ_i = {j | g_ij ≤ h_j}`: the centers whose subframeworks contain `i`.
pub fn inclusion_group(table: &GeodesicTable, i: usize, extents: &ExtentAssignment) -> Vec<usize> {
    table
        .row(i)
        .iter()
        .enumerate()
        .filter(|&(j, g)| g.is_some_and(|g| g <= extents.get(j)))
        .map(|(j, _)| j)
        .collect()
}

/// Subframeworks for every center under the given extents.
pub fn all_subframeworks(fw: &Framework, extents: &ExtentAssignment) -> Result<Vec<Subframework>> {
    (0..fw.node_count()).map(|i| extract_subframework(fw, i, extents.get(i))).collect()
}

/// Every subframework under `extents` is infinitesimally rigid.
pub fn verify_subframework_rigidity(fw: &Framework, extents: &ExtentAssignment, tol: f64) -> Result<bool> {
    for i in 0..fw.node_count() {
        if !extract_subframework(fw, i, extents.get(i))?.is_rigid(tol)? {
            return Ok(false);
        }
    }
    Ok(true)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadReport {
    /// `ℓ_i` per center.
    pub per_node: Vec<f64>,
    /// `ℓ = Σ ℓ_i`.
    pub total: f64,
    /// `ℓ / 2m`.
    pub standardized: f64,
    /// Nonzero coefficients `(j, c_ij)` per center `i`.
    pub coefficients: Vec<Vec<(usize, usize)>>,
}

/// `c_ij = max{0, h_i − g_ij}`.
#[inline]
pub fn load_coefficient(extent: usize, hops: usize) -> usize {
    extent.saturating_sub(hops)
}

/// Communication load `ℓ = Σ_i Σ_{j∈V_i} c_ij δ_j`.
///
/// With `weights` (one per edge, in edge order) the degree `δ_j` becomes the
/// weighted degree `Σ_{l∈N_j} w_jl`.
pub fn communication_load(
    g: &Graph,
    table: &GeodesicTable,
    extents: &ExtentAssignment,
    weights: Option<&[f64]>,
) -> Result<LoadReport> {
    let n = g.node_count();
    if extents.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: extents.len() });
    }
    let degrees: Vec<f64> = match weights {
        None => (0..n).map(|j| g.degree(j) as f64).collect(),
        Some(w) => {
            if w.len() != g.edge_count() {
                return Err(Error::DimensionMismatch { expected: g.edge_count(), got: w.len() });
            }
            let mut deg = vec![0.0; n];
            for (&(a, b), &wk) in g.edges().iter().zip(w) {
                deg[a] += wk;
                deg[b] += wk;
            }
            deg
        }
    };
    let mut per_node = Vec::with_capacity(n);
    let mut coefficients = Vec::with_capacity(n);
    for i in 0..n {
        let h = extents.get(i);
        let mut row = Vec::new();
        let mut li = 0.0;
        for (j, hops) in table.row(i).iter().enumerate() {
            if let Some(g_ij) = *hops {
                let c = load_coefficient(h, g_ij);
                if c > 0 {
                    li += c as f64 * degrees[j];
                    row.push((j, c));
                }
            }
        }
        per_node.push(li);
        coefficients.push(row);
    }
    let total: f64 = per_node.iter().sum();
    let m = g.edge_count();
    let standardized = if m == 0 { 0.0 } else { total / (2.0 * m as f64) };
    Ok(LoadReport { per_node, total, standardized, coefficients })
}
