//! Gradient-based rigidity maintenance.
//!
//! Each robot descends `J = k_φ φ + k_ℓ ℓ + k_ψ ψ` where
//!
//! * `φ = Σ_j ρ_j^{-q}` penalizes small rigidity eigenvalues of the
//!   subframeworks (weighted by the logistic link weights),
//! * `ℓ = Σ_j Σ_{k∈V_j} c_jk δ̃_k` is the communication load with weighted
//!   degrees `δ̃_k`,
//! * `ψ = Σ_{{i,j}∈E} ‖x_i − x_j‖^{-p}` keeps neighbors apart.
//!
//! Hop counts, subframework membership and the edge set are frozen inside a
//! step; only the link weights and bearings vary with position, so every
//! gradient here is the exact derivative of the corresponding potential
//! evaluated on the frozen structure.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{disk_proximity_graph, GeodesicTable, Graph};
use crate::rigidity::{
    bearing, normalized_rho_of, rigidity_eigenpair, rigidity_matrix_of, symmetric_rigidity_matrix,
    Framework, RigidityEigenpair,
};
use crate::subframework::{inclusion_group, load_coefficient, ExtentAssignment, Subframework};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControlParams {
    /// Communication range `Ω` (m).
    pub range: f64,
    /// Logistic steepness `β` (1/m).
    pub steepness: f64,
    /// Exponent `q` of the rigidity potential.
    pub rigidity_exponent: f64,
    /// Exponent `p` of the collision potential.
    pub collision_exponent: f64,
    pub gain_rigidity: f64,
    pub gain_load: f64,
    pub gain_collision: f64,
    /// Integration step (s).
    pub dt: f64,
    /// Largest distance any robot may travel in one step (m); the step is
    /// shortened below `dt` when the fastest robot would exceed it.
    pub max_displacement: f64,
    /// Links whose weight falls below this are dropped.
    pub weight_prune_threshold: f64,
    /// Use the logistic weights in `S_j` (otherwise `W = I`).
    pub weighted_rigidity: bool,
    /// Relative zero-eigenvalue tolerance.
    pub tol: f64,
    /// Step halvings allowed before a step that loses rigidity is an error.
    pub max_step_halvings: u32,
    pub refresh_topology: bool,
}

impl Default for ControlParams {
    fn default() -> Self {
        ControlParams {
            range: 40.0,
            steepness: 0.5,
            rigidity_exponent: 1.0,
            collision_exponent: 2.0,
            gain_rigidity: 1.0,
            gain_load: 1.0,
            gain_collision: 1.0,
            dt: 0.05,
            max_displacement: 1.0,
            weight_prune_threshold: 0.01,
            weighted_rigidity: true,
            tol: crate::rigidity::DEFAULT_TOL,
            max_step_halvings: 8,
            refresh_topology: true,
        }
    }
}

impl ControlParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("range", self.range),
            ("steepness", self.steepness),
            ("rigidity_exponent", self.rigidity_exponent),
            ("collision_exponent", self.collision_exponent),
            ("dt", self.dt),
            ("tol", self.tol),
            ("max_displacement", self.max_displacement),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || v.is_nan() || (v.is_infinite() && name != "max_displacement") {
                return Err(Error::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("gain_rigidity", self.gain_rigidity),
            ("gain_load", self.gain_load),
            ("gain_collision", self.gain_collision),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParams(format!("{name} must be non-negative, got {v}")));
            }
        }
        if !(self.weight_prune_threshold > 0.0 && self.weight_prune_threshold < 1.0) {
            return Err(Error::InvalidParams(format!(
                "weight_prune_threshold must lie in (0, 1), got {}",
                self.weight_prune_threshold
            )));
        }
        Ok(())
    }
}

/// Logistic link weight `(1 + e^{-β(Ω − ‖x_i − x_j‖)})^{-1}`.
#[inline]
pub fn edge_weight(xi: &[f64], xj: &[f64], range: f64, steepness: f64) -> f64 {
    logistic(steepness * (range - dist(xi, xj)))
}

/// Never exactly zero, so far links still yield a positive weight matrix.
#[inline]
fn logistic(z: f64) -> f64 {
    (1.0 / (1.0 + (-z).exp())).max(f64::MIN_POSITIVE)
}

#[inline]
fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[inline]
fn axpy(acc: &mut [f64], alpha: f64, v: &[f64]) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a += alpha * b;
    }
}

/// Per-edge weights of a subframework, in its local edge order.
pub fn subframework_weights(sf: &Subframework, params: &ControlParams) -> Vec<f64> {
    sf.edges
        .iter()
        .map(|&(a, b)| edge_weight(sf.point(a), sf.point(b), params.range, params.steepness))
        .collect()
}

/// `(ρ_j, ν_j)` of a subframework's (weighted or normalized) `S_j`.
pub fn subframework_eigenpair(sf: &Subframework, params: &ControlParams) -> Result<RigidityEigenpair> {
    let r = rigidity_matrix_of(&sf.edges, &sf.coords, sf.dim)?;
    let w = if params.weighted_rigidity {
        subframework_weights(sf, params)
    } else {
        vec![1.0; sf.edges.len()]
    };
    let s = symmetric_rigidity_matrix(&r, &w)?;
    rigidity_eigenpair(&s, sf.dim)
}

/// `∂φ_j/∂x_k` for every local vertex `k` of the subframework, flattened.
///
/// Uses `∂ρ/∂x = νᵀ (∂S/∂x) ν` with `νᵀSν = Σ_e w_e σ_e²`,
/// `σ_e = r_abᵀ(ν_a − ν_b)`, differentiating both the bearing and the weight.
pub fn rigidity_potential_terms(
    sf: &Subframework,
    eig: &RigidityEigenpair,
    params: &ControlParams,
) -> Result<Vec<f64>> {
    if !eig.is_positive(params.tol) {
        return Err(Error::RigidityLost { center: sf.center, rho: eig.rho });
    }
    let d = sf.dim;
    let q = params.rigidity_exponent;
    let dphi_drho = -q * eig.rho.powf(-(q + 1.0));
    let mut grad = vec![0.0; sf.coords.len()];
    let mut term = vec![0.0; d];
    for &(a, b) in &sf.edges {
        let (r, len) = bearing(sf.point(a), sf.point(b));
        let dnu: Vec<f64> = (0..d).map(|c| eig.nu[a * d + c] - eig.nu[b * d + c]).collect();
        let sigma: f64 = r.iter().zip(&dnu).map(|(x, y)| x * y).sum();
        let (w, dw_dlen) = if params.weighted_rigidity {
            let w = logistic(params.steepness * (params.range - len));
            (w, -params.steepness * w * (1.0 - w))
        } else {
            (1.0, 0.0)
        };
        // ∂(w σ²)/∂x_a; the x_b derivative is its negative
        for c in 0..d {
            term[c] = dw_dlen * sigma * sigma * r[c] + w * 2.0 * sigma * (dnu[c] - sigma * r[c]) / len;
        }
        axpy(&mut grad[a * d..(a + 1) * d], dphi_drho, &term);
        axpy(&mut grad[b * d..(b + 1) * d], -dphi_drho, &term);
    }
    Ok(grad)
}

/// `ℓ_j` and `∂ℓ_j/∂x_k` for every local vertex `k`, flattened.
///
/// Only vertices strictly inside the ball (`c_jk > 0`) contribute, and all
/// their neighbors lie in the subframework, so the local edge set suffices.
pub fn load_terms(sf: &Subframework, params: &ControlParams) -> (f64, Vec<f64>) {
    let d = sf.dim;
    let coeff = |k: usize| load_coefficient(sf.extent, sf.hops[k]) as f64;
    let mut value = 0.0;
    let mut grad = vec![0.0; sf.coords.len()];
    for &(a, b) in &sf.edges {
        let c = coeff(a) + coeff(b);
        if c == 0.0 {
            continue;
        }
        let (r, len) = bearing(sf.point(a), sf.point(b));
        let w = logistic(params.steepness * (params.range - len));
        value += c * w;
        let dw = -params.steepness * w * (1.0 - w);
        axpy(&mut grad[a * d..(a + 1) * d], c * dw, &r);
        axpy(&mut grad[b * d..(b + 1) * d], -c * dw, &r);
    }
    (value, grad)
}

/// `ψ = Σ_{{i,j}∈E} ‖x_i − x_j‖^{-p}`.
pub fn collision_potential(fw: &Framework, p: f64) -> Result<f64> {
    let mut psi = 0.0;
    for &(i, j) in fw.graph().edges() {
        let len = dist(fw.point(i), fw.point(j));
        if len <= 0.0 {
            return Err(Error::Coincident(i, j));
        }
        psi += len.powf(-p);
    }
    Ok(psi)
}

/// `∂ψ/∂x_i = −Σ_{j∈N_i} p ‖x_i − x_j‖^{-(p+2)} (x_i − x_j)`.
pub fn collision_gradient(fw: &Framework, i: usize, p: f64) -> Result<Vec<f64>> {
    let xi = fw.point(i);
    let mut grad = vec![0.0; fw.dim()];
    for &j in fw.graph().neighbors(i) {
        collision_term(&mut grad, xi, fw.point(j), p).ok_or(Error::Coincident(i.min(j), i.max(j)))?;
    }
    Ok(grad)
}

/// Adds one neighbor's contribution to `∂ψ/∂x_i`; `None` if coincident.
pub(crate) fn collision_term(grad: &mut [f64], xi: &[f64], xj: &[f64], p: f64) -> Option<()> {
    let len = dist(xi, xj);
    if len <= 0.0 {
        return None;
    }
    let scale = -p * len.powf(-(p + 2.0));
    for c in 0..grad.len() {
        grad[c] += scale * (xi[c] - xj[c]);
    }
    Some(())
}

/// Everything the controller needs at one instant.
///
/// The extents are fixed when the state is first built and carried through
/// every step; subframework memberships follow the current topology.
#[derive(Debug, Clone)]
pub struct ControlState {
    framework: Framework,
    extents: ExtentAssignment,
    table: GeodesicTable,
    subframeworks: Vec<Subframework>,
    weights: Vec<f64>,
    eigenpairs: Vec<RigidityEigenpair>,
    time: f64,
}

impl ControlState {
    /// Fails with [`Error::RigidityLost`] if any subframework is not rigid and
    /// with [`Error::Disconnected`] if the graph is not connected.
    pub fn new(framework: Framework, extents: ExtentAssignment, params: &ControlParams) -> Result<Self> {
        Self::at_time(framework, extents, params, 0.0)
    }

    fn at_time(framework: Framework, extents: ExtentAssignment, params: &ControlParams, time: f64) -> Result<Self> {
        let n = framework.node_count();
        if extents.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: extents.len() });
        }
        let table = GeodesicTable::new(framework.graph());
        if !table.is_connected() {
            return Err(Error::Disconnected);
        }
        let g = framework.graph();
        let mut subframeworks = Vec::with_capacity(n);
        let mut eigenpairs = Vec::with_capacity(n);
        for j in 0..n {
            let h = extents.get(j);
            let members: Vec<(usize, usize)> = table
                .row(j)
                .iter()
                .enumerate()
                .filter_map(|(k, hops)| hops.filter(|&g| g <= h).map(|g| (k, g)))
                .collect();
            let sf = Subframework::from_members(
                j,
                h,
                framework.dim(),
                members,
                |v| framework.point(v).to_vec(),
                |a, b| g.has_edge(a, b),
            );
            let eig = match subframework_eigenpair(&sf, params) {
                Ok(e) => e,
                Err(Error::FrameworkTooSmall { .. }) => return Err(Error::RigidityLost { center: j, rho: 0.0 }),
                Err(e) => return Err(e),
            };
            if !eig.is_positive(params.tol) {
                return Err(Error::RigidityLost { center: j, rho: eig.rho });
            }
            subframeworks.push(sf);
            eigenpairs.push(eig);
        }
        let weights = g
            .edges()
            .iter()
            .map(|&(a, b)| edge_weight(framework.point(a), framework.point(b), params.range, params.steepness))
            .collect();
        Ok(ControlState { framework, extents, table, subframeworks, weights, eigenpairs, time })
    }

    /// Same structure, new positions.
    pub fn with_coords(&self, coords: Vec<f64>, params: &ControlParams) -> Result<Self> {
        Self::at_time(self.framework.with_coords(coords)?, self.extents.clone(), params, self.time)
    }

    pub fn framework(&self) -> &Framework {
        &self.framework
    }

    pub fn extents(&self) -> &ExtentAssignment {
        &self.extents
    }

    pub fn geodesics(&self) -> &GeodesicTable {
        &self.table
    }

    pub fn subframeworks(&self) -> &[Subframework] {
        &self.subframeworks
    }

    pub fn eigenpairs(&self) -> &[RigidityEigenpair] {
        &self.eigenpairs
    }

    /// Link weights in edge order.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// `ρ_j` per center.
    pub fn rhos(&self) -> Vec<f64> {
        self.eigenpairs.iter().map(|e| e.rho).collect()
    }

    pub fn degenerate_count(&self) -> usize {
        self.eigenpairs.iter().filter(|e| e.degenerate).count()
    }

    pub fn inclusion_group(&self, i: usize) -> Vec<usize> {
        inclusion_group(&self.table, i, &self.extents)
    }

    pub fn rigidity_potential(&self, params: &ControlParams) -> f64 {
        self.eigenpairs.iter().map(|e| e.rho.powf(-params.rigidity_exponent)).sum()
    }

    /// Weighted communication load `ℓ`.
    pub fn load(&self, params: &ControlParams) -> f64 {
        self.subframeworks.iter().map(|sf| load_terms(sf, params).0).sum()
    }

    pub fn collision_potential(&self, params: &ControlParams) -> Result<f64> {
        collision_potential(&self.framework, params.collision_exponent)
    }

    /// `J = k_φ φ + k_ℓ ℓ + k_ψ ψ`.
    pub fn objective(&self, params: &ControlParams) -> Result<f64> {
        Ok(params.gain_rigidity * self.rigidity_potential(params)
            + params.gain_load * self.load(params)
            + params.gain_collision * self.collision_potential(params)?)
    }

    /// Normalized rigidity eigenvalue of the whole framework.
    pub fn framework_rho(&self) -> Result<f64> {
        let fw = &self.framework;
        if fw.node_count() <= fw.dim() {
            return Ok(0.0);
        }
        Ok(normalized_rho_of(fw.graph().edges(), fw.coords(), fw.dim())?.0)
    }

    /// `∂φ/∂x_i = Σ_{j∈ℐ_i} ∂φ_j/∂x_i`.
    pub fn rigidity_gradient(&self, i: usize, params: &ControlParams) -> Result<Vec<f64>> {
        let d = self.framework.dim();
        let mut grad = vec![0.0; d];
        for j in self.inclusion_group(i) {
            let sf = &self.subframeworks[j];
            let k = sf.local_index(i).expect("i belongs to every subframework of its inclusion group");
            let terms = rigidity_potential_terms(sf, &self.eigenpairs[j], params)?;
            axpy(&mut grad, 1.0, &terms[k * d..(k + 1) * d]);
        }
        Ok(grad)
    }

    /// `∂ℓ/∂x_i = Σ_{j∈ℐ_i} Σ_{k∈V_j} c_jk ∂δ̃_k/∂x_i`.
    pub fn load_gradient(&self, i: usize, params: &ControlParams) -> Vec<f64> {
        let d = self.framework.dim();
        let mut grad = vec![0.0; d];
        for j in self.inclusion_group(i) {
            let sf = &self.subframeworks[j];
            let k = sf.local_index(i).expect("i belongs to every subframework of its inclusion group");
            let (_, terms) = load_terms(sf, params);
            axpy(&mut grad, 1.0, &terms[k * d..(k + 1) * d]);
        }
        grad
    }

    pub fn collision_gradient(&self, i: usize, params: &ControlParams) -> Result<Vec<f64>> {
        collision_gradient(&self.framework, i, params.collision_exponent)
    }

    /// Per-center contributions `(∂φ_j/∂x_k, ∂ℓ_j/∂x_k)` scattered into
    /// global flat arrays, summed in center order.
    pub fn potential_gradients(&self, params: &ControlParams) -> Result<(Vec<f64>, Vec<f64>)> {
        let d = self.framework.dim();
        let mut dphi = vec![0.0; self.framework.coords().len()];
        let mut dload = vec![0.0; dphi.len()];
        for (sf, eig) in self.subframeworks.iter().zip(&self.eigenpairs) {
            let rt = rigidity_potential_terms(sf, eig, params)?;
            let (_, lt) = load_terms(sf, params);
            for (k, &v) in sf.vertices.iter().enumerate() {
                axpy(&mut dphi[v * d..(v + 1) * d], 1.0, &rt[k * d..(k + 1) * d]);
                axpy(&mut dload[v * d..(v + 1) * d], 1.0, &lt[k * d..(k + 1) * d]);
            }
        }
        Ok((dphi, dload))
    }

    /// Velocity commands `u_i = −∂J/∂x_i`, flattened.
    pub fn control_inputs(&self, params: &ControlParams) -> Result<Vec<f64>> {
        let d = self.framework.dim();
        let (dphi, dload) = self.potential_gradients(params)?;
        let mut u = vec![0.0; dphi.len()];
        for i in 0..self.framework.node_count() {
            let dpsi = self.collision_gradient(i, params)?;
            for c in 0..d {
                let k = i * d + c;
                u[k] = -(params.gain_rigidity * dphi[k] + params.gain_load * dload[k] + params.gain_collision * dpsi[c]);
            }
        }
        Ok(u)
    }

    /// Smallest distance between adjacent robots.
    pub fn min_link_distance(&self) -> f64 {
        let fw = &self.framework;
        fw.graph()
            .edges()
            .iter()
            .map(|&(a, b)| dist(fw.point(a), fw.point(b)))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Outcome of one control step.
#[derive(Debug, Clone)]
pub struct StepReport {
    /// Step actually taken after any halvings.
    pub dt: f64,
    pub halvings: u32,
    pub edges_added: usize,
    pub edges_removed: usize,
    /// Topology changes held back because they would break a subframework.
    pub changes_deferred: usize,
}

/// Moves every robot along `u` for `dt` (shortened so nobody travels more
/// than `max_displacement`), halving the step while any subframework would
/// lose rigidity.
pub fn integrate(
    state: &ControlState,
    inputs: &[f64],
    params: &ControlParams,
) -> Result<(ControlState, f64, u32)> {
    let d = state.framework.dim();
    let top_speed = inputs
        .chunks(d)
        .map(|u| u.iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    let mut dt = if top_speed * params.dt > params.max_displacement {
        params.max_displacement / top_speed
    } else {
        params.dt
    };
    let mut last_err = None;
    for halvings in 0..=params.max_step_halvings {
        let coords: Vec<f64> = state.framework.coords().iter().zip(inputs).map(|(x, u)| x + dt * u).collect();
        match state.with_coords(coords, params) {
            Ok(mut next) => {
                next.time = state.time + dt;
                return Ok((next, dt, halvings));
            }
            Err(e @ (Error::RigidityLost { .. } | Error::Coincident(..))) => last_err = Some(e),
            Err(e) => return Err(e),
        }
        dt *= 0.5;
    }
    Err(last_err.expect("at least one attempt was made"))
}

/// Topology implied by the positions: existing links survive while their
/// weight stays at or above the prune threshold; new links form inside the
/// range.
pub fn target_topology(fw: &Framework, params: &ControlParams) -> Graph {
    let disk = disk_proximity_graph(fw.coords(), fw.dim(), params.range);
    let kept = fw.graph().edges().iter().copied().filter(|&(a, b)| {
        edge_weight(fw.point(a), fw.point(b), params.range, params.steepness) >= params.weight_prune_threshold
    });
    Graph::from_edges(fw.node_count(), kept.chain(disk.edges().iter().copied())).expect("valid edges")
}

/// Applies the topology change toward [`target_topology`], admitting only
/// changes that keep the graph connected and every subframework rigid. Returns the new state with
/// `(added, removed, deferred)` counts.
pub fn refresh_topology(state: ControlState, params: &ControlParams) -> Result<(ControlState, usize, usize, usize)> {
    let target = target_topology(&state.framework, params);
    if &target == state.framework.graph() {
        return Ok((state, 0, 0, 0));
    }
    let current = state.framework.graph();
    let removals: Vec<_> = current.edges().iter().copied().filter(|&(a, b)| !target.has_edge(a, b)).collect();
    let additions: Vec<_> = target.edges().iter().copied().filter(|&(a, b)| !current.has_edge(a, b)).collect();
    let attempt = |edges: Vec<(usize, usize)>| -> Result<Option<ControlState>> {
        let g = Graph::from_edges(state.framework.node_count(), edges)?;
        match ControlState::at_time(state.framework.with_graph(g)?, state.extents.clone(), params, state.time) {
            Ok(s) => Ok(Some(s)),
            Err(Error::RigidityLost { .. } | Error::Disconnected) => Ok(None),
            Err(e) => Err(e),
        }
    };
    if let Some(next) = attempt(target.edges().to_vec())? {
        return Ok((next, additions.len(), removals.len(), 0));
    }
    // admit changes one at a time in a fixed order: removals, then additions
    let mut accepted = state.clone();
    let (mut added, mut removed, mut deferred) = (0, 0, 0);
    for (edge, is_addition) in removals.iter().map(|&e| (e, false)).chain(additions.iter().map(|&e| (e, true))) {
        let g = accepted.framework.graph();
        let edges: Vec<_> = if is_addition {
            g.edges().iter().copied().chain(std::iter::once(edge)).collect()
        } else {
            g.edges().iter().copied().filter(|&e| e != edge).collect()
        };
        let g = Graph::from_edges(g.node_count(), edges)?;
        match ControlState::at_time(accepted.framework.with_graph(g)?, accepted.extents.clone(), params, accepted.time) {
            Ok(s) => {
                accepted = s;
                if is_addition {
                    added += 1;
                } else {
                    removed += 1;
                }
            }
            Err(Error::RigidityLost { .. } | Error::Disconnected) => deferred += 1,
            Err(e) => return Err(e),
        }
    }
    Ok((accepted, added, removed, deferred))
}

/// One Euler step of `ẋ_i = −∂J/∂x_i` followed by the topology refresh.
pub fn control_step(state: &ControlState, params: &ControlParams) -> Result<(ControlState, StepReport)> {
    let inputs = state.control_inputs(params)?;
    apply_inputs(state, &inputs, params)
}

/// Integrates externally computed inputs (e.g. assembled from messages).
pub fn apply_inputs(state: &ControlState, inputs: &[f64], params: &ControlParams) -> Result<(ControlState, StepReport)> {
    let (moved, dt, halvings) = integrate(state, inputs, params)?;
    let (next, edges_added, edges_removed, changes_deferred) = if params.refresh_topology {
        refresh_topology(moved, params)?
    } else {
        (moved, 0, 0, 0)
    };
    Ok((next, StepReport { dt, halvings, edges_added, edges_removed, changes_deferred }))
}

/// Stacks per-node vectors into a `DVector` (used by tests and benches).
pub fn stack(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}
