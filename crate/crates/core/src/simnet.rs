//! Synchronous message-passing execution of the controller and the filters.
//!
//! Every robot is an [`Agent`] that sees only its own state and its inbox.
//! The engine owns the world, moves messages one hop per round and checks
//! every delivery against the communication graph. A control tick runs the
//! exchange in two waves: positions flood out to the inclusion groups, then
//! each center returns its gradient contributions along the recorded paths.

use std::collections::BTreeMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::control::{
    apply_inputs, collision_term, load_terms, rigidity_potential_terms, subframework_eigenpair, ControlParams,
    ControlState, StepReport,
};
use crate::error::{Error, Result};
use crate::graph::{GeodesicTable, Graph};
use crate::localization::{anchor_update, filter_update, FilterState, NeighborEstimate};
use crate::rigidity::{Framework, DEFAULT_TOL};
use crate::subframework::{communication_load, inclusion_group, rigidity_extents, ExtentAssignment, Subframework};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MessageKind {
    PositionFlood,
    GradientReturn,
    EstimateBroadcast,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Payload {
    /// The origin's position and the ids of its neighbors.
    Position { position: Vec<f64>, neighbors: Vec<usize> },
    /// `∂φ_j/∂x_i` and `∂ℓ_j/∂x_i` from center `j` for member `i`.
    Gradient { rigidity: Vec<f64>, load: Vec<f64> },
    Estimate { position: Vec<f64> },
}

/// One message on one link.
///
/// For a flood, `path` lists the nodes it has visited, origin first and
/// sender last, and `ttl` counts the hops it may still be forwarded. For a
/// gradient return, `path` is the whole route from the center to the target
/// and `ttl` the hops left after this delivery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub kind: MessageKind,
    pub origin: usize,
    pub target: Option<usize>,
    pub sender: usize,
    pub receiver: usize,
    pub payload: Payload,
    pub ttl: usize,
    pub path: Vec<usize>,
}

#[derive(Serialize)]
struct TraceRecord {
    round: usize,
    kind: MessageKind,
    origin: usize,
    target: Option<usize>,
    sender: usize,
    receiver: usize,
    ttl: usize,
}

/// Message counts for one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub round: usize,
    pub inbox: Vec<usize>,
    pub outbox: Vec<usize>,
    /// `(center, member)` pairs completed by the end of this round.
    pub completed: usize,
}

/// When center `center` finished its contribution for `member`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairRecord {
    pub center: usize,
    pub member: usize,
    pub round: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExchangeLog {
    pub rounds: Vec<RoundLog>,
    pub worst_case_extent: usize,
    /// Round at which the last pair completed.
    pub completion_round: usize,
    pub pairs: Vec<PairRecord>,
    pub messages: usize,
}

/// Exchange log plus the control input each agent assembled.
#[derive(Debug, Clone)]
pub struct ExchangeOutcome {
    pub log: ExchangeLog,
    /// `u_i` per node, flattened.
    pub inputs: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Known {
    position: Vec<f64>,
    neighbors: Vec<usize>,
    /// Flood path from the origin up to the node that handed it over.
    path: Vec<usize>,
}

#[derive(Debug, Clone)]
struct Contribution {
    center: usize,
    rigidity: Vec<f64>,
    load: Vec<f64>,
}

/// A robot's view of the exchange.
#[derive(Debug, Clone)]
pub struct Agent {
    id: usize,
    extent: usize,
    ttl: usize,
    position: Vec<f64>,
    neighbors: Vec<usize>,
    known: BTreeMap<usize, Known>,
    contributions: Vec<Contribution>,
    computed: bool,
}

impl Agent {
    fn new(id: usize, extent: usize, ttl: usize, position: Vec<f64>, neighbors: Vec<usize>) -> Self {
        Agent { id, extent, ttl, position, neighbors, known: BTreeMap::new(), contributions: Vec::new(), computed: false }
    }

    fn flood_to(&self, neighbor: usize) -> Message {
        Message {
            kind: MessageKind::PositionFlood,
            origin: self.id,
            target: None,
            sender: self.id,
            receiver: neighbor,
            payload: Payload::Position { position: self.position.clone(), neighbors: self.neighbors.clone() },
            ttl: self.ttl - 1,
            path: vec![self.id],
        }
    }

    fn start(&self) -> Vec<Message> {
        if self.ttl == 0 {
            return Vec::new();
        }
        self.neighbors.iter().map(|&k| self.flood_to(k)).collect()
    }

    /// Processes one round's inbox; pure in `(self, inbox)`.
    fn step(&self, round: usize, inbox: &[Message], params: &ControlParams) -> Result<(Agent, Vec<Message>)> {
        let mut next = self.clone();
        let mut outbox = Vec::new();
        for msg in inbox {
            match (&msg.kind, &msg.payload) {
                (MessageKind::PositionFlood, Payload::Position { position, neighbors }) => {
                    if msg.origin == self.id || next.known.contains_key(&msg.origin) {
                        continue;
                    }
                    next.known.insert(
                        msg.origin,
                        Known { position: position.clone(), neighbors: neighbors.clone(), path: msg.path.clone() },
                    );
                    if msg.ttl > 0 {
                        let mut path = msg.path.clone();
                        path.push(self.id);
                        for &k in &self.neighbors {
                            if k != msg.sender {
                                outbox.push(Message {
                                    sender: self.id,
                                    receiver: k,
                                    ttl: msg.ttl - 1,
                                    path: path.clone(),
                                    ..msg.clone()
                                });
                            }
                        }
                    }
                }
                (MessageKind::GradientReturn, Payload::Gradient { rigidity, load }) => {
                    if msg.ttl == 0 {
                        next.contributions.push(Contribution {
                            center: msg.origin,
                            rigidity: rigidity.clone(),
                            load: load.clone(),
                        });
                    } else {
                        let hop = msg.path[msg.path.len() - msg.ttl];
                        outbox.push(Message { sender: self.id, receiver: hop, ttl: msg.ttl - 1, ..msg.clone() });
                    }
                }
                _ => {
                    return Err(Error::ProtocolViolation(format!(
                        "agent {} cannot handle {:?} during the exchange",
                        self.id, msg.kind
                    )))
                }
            }
        }
        if round == self.extent && !self.computed {
            outbox.extend(next.compute_contributions(params)?);
            next.computed = true;
        }
        Ok((next, outbox))
    }

    /// The subframework this agent centers, rebuilt from flood payloads.
    fn local_subframework(&self) -> Subframework {
        let d = self.position.len();
        let mut members = vec![(self.id, 0)];
        members.extend(self.known.iter().filter(|(_, k)| k.path.len() <= self.extent).map(|(&v, k)| (v, k.path.len())));
        let position = |v: usize| if v == self.id { self.position.clone() } else { self.known[&v].position.clone() };
        let neighbors_of = |v: usize| if v == self.id { &self.neighbors } else { &self.known[&v].neighbors };
        Subframework::from_members(self.id, self.extent, d, members, position, |a, b| {
            neighbors_of(a).binary_search(&b).is_ok()
        })
    }

    fn compute_contributions(&mut self, params: &ControlParams) -> Result<Vec<Message>> {
        let sf = self.local_subframework();
        let eig = match subframework_eigenpair(&sf, params) {
            Ok(e) => e,
            Err(Error::FrameworkTooSmall { .. }) => return Err(Error::RigidityLost { center: self.id, rho: 0.0 }),
            Err(e) => return Err(e),
        };
        let rigidity = rigidity_potential_terms(&sf, &eig, params)?;
        let (_, load) = load_terms(&sf, params);
        let d = sf.dim;
        let mut out = Vec::new();
        for (k, &v) in sf.vertices.iter().enumerate() {
            let payload = Payload::Gradient {
                rigidity: rigidity[k * d..(k + 1) * d].to_vec(),
                load: load[k * d..(k + 1) * d].to_vec(),
            };
            if v == self.id {
                if let Payload::Gradient { rigidity, load } = payload {
                    self.contributions.push(Contribution { center: self.id, rigidity, load });
                }
                continue;
            }
            let mut route = vec![self.id];
            route.extend(self.known[&v].path.iter().rev());
            out.push(Message {
                kind: MessageKind::GradientReturn,
                origin: self.id,
                target: Some(v),
                sender: self.id,
                receiver: route[1],
                payload,
                ttl: route.len() - 2,
                path: route,
            });
        }
        Ok(out)
    }

    /// `u_i` from the returned contributions and the neighbors' positions.
    fn control_input(&self, params: &ControlParams) -> Result<Vec<f64>> {
        let d = self.position.len();
        let mut contributions: Vec<&Contribution> = self.contributions.iter().collect();
        contributions.sort_by_key(|c| c.center);
        let mut dphi = vec![0.0; d];
        let mut dload = vec![0.0; d];
        for c in contributions {
            for k in 0..d {
                dphi[k] += c.rigidity[k];
                dload[k] += c.load[k];
            }
        }
        let mut dpsi = vec![0.0; d];
        for &j in &self.neighbors {
            let xj = &self
                .known
                .get(&j)
                .ok_or_else(|| Error::ProtocolViolation(format!("agent {} never heard from neighbor {j}", self.id)))?
                .position;
            collision_term(&mut dpsi, &self.position, xj, params.collision_exponent)
                .ok_or(Error::Coincident(self.id.min(j), self.id.max(j)))?;
        }
        Ok((0..d)
            .map(|k| -(params.gain_rigidity * dphi[k] + params.gain_load * dload[k] + params.gain_collision * dpsi[k]))
            .collect())
    }
}

/// Rejects any delivery that does not follow a link or contradicts its own
/// routing record.
fn check_delivery(graph: &Graph, msg: &Message) -> Result<()> {
    let violation = |what: &str| Err(Error::ProtocolViolation(format!("{what}: {msg:?}")));
    if msg.receiver >= graph.node_count() || !graph.has_edge(msg.sender, msg.receiver) {
        return violation("message crosses a non-edge");
    }
    if msg.path.windows(2).any(|w| !graph.has_edge(w[0], w[1])) {
        return violation("path visits non-adjacent nodes");
    }
    match msg.kind {
        MessageKind::PositionFlood if msg.path.last() != Some(&msg.sender) || msg.path[0] != msg.origin => {
            violation("flood path does not end at its sender")
        }
        MessageKind::GradientReturn => {
            let at = msg.path.len().checked_sub(msg.ttl + 1);
            if at.map(|a| msg.path[a]) != Some(msg.receiver) || (msg.ttl == 0 && msg.target != Some(msg.receiver)) {
                violation("gradient off its route")
            } else {
                Ok(())
            }
        }
        MessageKind::EstimateBroadcast if msg.sender != msg.origin => violation("estimate relayed"),
        _ => Ok(()),
    }
}

fn trace_delivery(trace: &mut Option<&mut dyn Write>, round: usize, msg: &Message) -> Result<()> {
    if let Some(w) = trace.as_mut() {
        let rec = TraceRecord {
            round,
            kind: msg.kind,
            origin: msg.origin,
            target: msg.target,
            sender: msg.sender,
            receiver: msg.receiver,
            ttl: msg.ttl,
        };
        let line = serde_json::to_string(&rec).expect("trace records serialize");
        writeln!(w, "{line}").map_err(|e| Error::InvalidParams(format!("trace write failed: {e}")))?;
    }
    Ok(())
}

/// Hop limit of node `i`'s position flood: the largest extent among the
/// centers whose subframeworks contain it.
pub fn flood_ttl(table: &GeodesicTable, i: usize, extents: &ExtentAssignment) -> usize {
    inclusion_group(table, i, extents).into_iter().map(|j| extents.get(j)).max().unwrap_or(0)
}

/// Runs one gradient exchange on `fw` (positions as the agents believe
/// them) with fixed `extents`.
///
/// Fails with [`Error::ProtocolViolation`] if a delivery leaves the graph or
/// some `(center, member)` pair is still open after `2η` rounds.
pub fn run_exchange_phase(
    fw: &Framework,
    extents: &ExtentAssignment,
    params: &ControlParams,
    mut trace: Option<&mut dyn Write>,
) -> Result<ExchangeOutcome> {
    let n = fw.node_count();
    if extents.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: extents.len() });
    }
    let graph = fw.graph();
    let table = GeodesicTable::new(graph);
    if !table.is_connected() {
        return Err(Error::Disconnected);
    }
    let eta = (0..n).map(|j| extents.get(j)).max().unwrap_or(0);

    let mut pairs = Vec::new();
    let mut pair_index = BTreeMap::new();
    for j in 0..n {
        for (i, hops) in table.row(j).iter().enumerate() {
            if hops.is_some_and(|g| g <= extents.get(j)) {
                pair_index.insert((j, i), pairs.len());
                pairs.push(PairRecord { center: j, member: i, round: None });
            }
        }
    }

    let mut agents: Vec<Agent> = (0..n)
        .map(|i| {
            Agent::new(i, extents.get(i), flood_ttl(&table, i, extents), fw.point(i).to_vec(), graph.neighbors(i).to_vec())
        })
        .collect();
    let mut in_flight: Vec<Message> = agents.iter().flat_map(Agent::start).collect();
    let mut rounds = Vec::new();
    let mut completed = 0;
    let mut completion_round = 0;
    let mut messages = 0;
    let mut round = 0;
    while !in_flight.is_empty() || agents.iter().any(|a| !a.computed) {
        round += 1;
        if round > 2 * eta {
            let open = pairs.iter().filter(|p| p.round.is_none()).count();
            return Err(Error::ProtocolViolation(format!("{open} contributions undelivered after {} rounds", 2 * eta)));
        }
        let mut inboxes: Vec<Vec<Message>> = vec![Vec::new(); n];
        for msg in in_flight.drain(..) {
            check_delivery(graph, &msg)?;
            trace_delivery(&mut trace, round, &msg)?;
            messages += 1;
            if msg.kind == MessageKind::GradientReturn && msg.ttl == 0 {
                let slot = pair_index[&(msg.origin, msg.receiver)];
                pairs[slot].round = Some(round);
                completed += 1;
                completion_round = round;
            }
            inboxes[msg.receiver].push(msg);
        }
        let mut outbox_sizes = vec![0; n];
        for (i, inbox) in inboxes.iter_mut().enumerate() {
            // first arrival wins; ties go to the lowest sender
            inbox.sort_by_key(|m| (m.origin, m.sender));
            let was_computed = agents[i].computed;
            let (next, outbox) = agents[i].step(round, inbox, params)?;
            if next.computed && !was_computed {
                pairs[pair_index[&(i, i)]].round = Some(round);
                completed += 1;
                completion_round = completion_round.max(round);
            }
            outbox_sizes[i] = outbox.len();
            agents[i] = next;
            in_flight.extend(outbox);
        }
        rounds.push(RoundLog { round, inbox: inboxes.iter().map(Vec::len).collect(), outbox: outbox_sizes, completed });
    }
    if completed != pairs.len() {
        return Err(Error::ProtocolViolation(format!("{} of {} contributions delivered", completed, pairs.len())));
    }
    let mut inputs = Vec::with_capacity(n * fw.dim());
    for agent in &agents {
        inputs.extend(agent.control_input(params)?);
    }
    Ok(ExchangeOutcome {
        log: ExchangeLog { rounds, worst_case_extent: eta, completion_round, pairs, messages },
        inputs,
    })
}

/// One-hop exchange of position estimates; returns, per node, its
/// neighbors' broadcasts in neighbor order.
pub fn broadcast_estimates(
    graph: &Graph,
    estimates: &[Vec<f64>],
    trace: &mut Option<&mut dyn Write>,
) -> Result<Vec<Vec<NeighborEstimate>>> {
    let mut received: Vec<Vec<NeighborEstimate>> = vec![Vec::new(); graph.node_count()];
    for i in 0..graph.node_count() {
        for &k in graph.neighbors(i) {
            let msg = Message {
                kind: MessageKind::EstimateBroadcast,
                origin: i,
                target: None,
                sender: i,
                receiver: k,
                payload: Payload::Estimate { position: estimates[i].clone() },
                ttl: 0,
                path: vec![i],
            };
            check_delivery(graph, &msg)?;
            trace_delivery(trace, 1, &msg)?;
            if let Payload::Estimate { position } = msg.payload {
                received[k].push(NeighborEstimate::new(i, position));
            }
        }
    }
    // senders were visited in increasing order, so each list is sorted
    Ok(received)
}

/// Knobs of a decentralized run beyond the controller's own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimParams {
    pub control: ControlParams,
    /// Standard deviation of range measurements (m); zero means noiseless.
    pub range_noise: f64,
    /// Standard deviation of anchor position fixes (m).
    pub anchor_noise: f64,
    pub anchors: Vec<usize>,
    /// Initial estimates lie uniformly within this distance of the truth (m).
    pub initial_error: f64,
    /// Covariance added to every filter each tick (m²).
    pub process_noise: f64,
    /// `λ_P` in the motion inflation `λ_P dt² ‖u_i‖² I`.
    pub motion_inflation: f64,
    /// Feed the controller true positions instead of estimates.
    pub ground_truth: bool,
    /// Recompute the inputs centrally each tick and fail on any mismatch.
    pub audit: bool,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            control: ControlParams::default(),
            range_noise: 0.1,
            anchor_noise: 0.1,
            anchors: vec![0, 1],
            initial_error: 1.0,
            process_noise: 1e-2,
            motion_inflation: 1.0,
            ground_truth: false,
            audit: false,
        }
    }
}

/// Range variance used by the filters when measurements are exact; it only
/// keeps the innovation covariance invertible.
pub const NOISELESS_VARIANCE: f64 = 1e-4;

impl SimParams {
    pub fn validate(&self, n: usize) -> Result<()> {
        self.control.validate()?;
        for (name, v) in [
            ("range_noise", self.range_noise),
            ("anchor_noise", self.anchor_noise),
            ("initial_error", self.initial_error),
            ("process_noise", self.process_noise),
            ("motion_inflation", self.motion_inflation),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParams(format!("{name} must be non-negative, got {v}")));
            }
        }
        if let Some(&a) = self.anchors.iter().find(|&&a| a >= n) {
            return Err(Error::NodeOutOfRange { node: a, n });
        }
        Ok(())
    }

    /// Variance the filters assume for one range.
    pub fn range_variance(&self) -> f64 {
        if self.range_noise > 0.0 {
            self.range_noise * self.range_noise
        } else {
            NOISELESS_VARIANCE
        }
    }

    /// Variance the anchors assume per axis of a fix.
    pub fn anchor_variance(&self) -> f64 {
        (self.anchor_noise * self.anchor_noise).max(1e-6)
    }
}

/// Per-tick measurements of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickMetrics {
    pub time: f64,
    pub min_rho: f64,
    pub mean_rho: f64,
    pub max_rho: f64,
    /// Normalized rigidity eigenvalue of the whole framework.
    pub framework_rho: f64,
    /// Weighted load `ℓ` over `2m₀`, twice the initial edge count.
    pub standardized_load: f64,
    /// Hop-count load (unit weights) over `2m₀`.
    pub hop_load: f64,
    pub edges: usize,
    pub min_distance: f64,
    pub max_localization_error: f64,
    pub exchange_rounds: usize,
    pub step_halvings: u32,
}

impl TickMetrics {
    pub const HEADER: [&'static str; 12] = [
        "t",
        "min_rho",
        "mean_rho",
        "max_rho",
        "framework_rho",
        "standardized_load",
        "hop_load",
        "edges",
        "min_distance",
        "max_localization_error",
        "exchange_rounds",
        "step_halvings",
    ];

    /// Values in [`Self::HEADER`] order.
    pub fn row(&self) -> Vec<String> {
        vec![
            format!("{}", self.time),
            format!("{:e}", self.min_rho),
            format!("{:e}", self.mean_rho),
            format!("{:e}", self.max_rho),
            format!("{:e}", self.framework_rho),
            format!("{}", self.standardized_load),
            format!("{}", self.hop_load),
            self.edges.to_string(),
            format!("{}", self.min_distance),
            format!("{:e}", self.max_localization_error),
            self.exchange_rounds.to_string(),
            self.step_halvings.to_string(),
        ]
    }
}

/// Ground truth plus every robot's filter, advanced tick by tick.
#[derive(Debug, Clone)]
pub struct World {
    state: ControlState,
    filters: Vec<FilterState>,
    params: SimParams,
    rng: ChaCha8Rng,
    ticks: u64,
    initial_edges: usize,
    last_rounds: usize,
    last_halvings: u32,
}

impl World {
    /// Freezes the extents at the rigidity extents of `framework`.
    pub fn new(framework: Framework, params: SimParams, seed: u64) -> Result<Self> {
        let n = framework.node_count();
        params.validate(n)?;
        let extents = rigidity_extents(&framework, DEFAULT_TOL)?.ok_or_else(|| {
            let center = (0..n)
                .find(|&i| crate::subframework::rigidity_extent(&framework, i, DEFAULT_TOL).ok().flatten().is_none())
                .unwrap_or(0);
            Error::RigidityLost { center, rho: 0.0 }
        })?;
        Self::with_extents(framework, extents, params, seed)
    }

    pub fn with_extents(framework: Framework, extents: ExtentAssignment, params: SimParams, seed: u64) -> Result<Self> {
        let n = framework.node_count();
        params.validate(n)?;
        let state = ControlState::new(framework, extents, &params.control)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fw = state.framework();
        let prior = params.initial_error.max(params.range_noise).max(0.1).powi(2);
        let mut filters = Vec::with_capacity(n);
        for i in 0..n {
            let estimate = if params.ground_truth || params.initial_error == 0.0 {
                fw.point(i).to_vec()
            } else {
                perturb(&mut rng, fw.point(i), params.initial_error)
            };
            filters.push(FilterState::new(i, estimate, prior, params.range_variance(), params.anchors.contains(&i))?);
        }
        let initial_edges = state.framework().graph().edge_count();
        Ok(World { state, filters, params, rng, ticks: 0, initial_edges, last_rounds: 0, last_halvings: 0 })
    }

    pub fn state(&self) -> &ControlState {
        &self.state
    }

    pub fn params(&self) -> &SimParams {
        &self.params
    }

    pub fn filters(&self) -> &[FilterState] {
        &self.filters
    }

    pub fn time(&self) -> f64 {
        self.state.time()
    }

    pub fn ticks(&self) -> u64 {
        self.ticks
    }

    /// True positions and topology, for diagnostics.
    pub fn snapshot(&self) -> Framework {
        self.state.framework().clone()
    }

    /// Positions the controller acts on.
    pub fn believed_positions(&self) -> Vec<f64> {
        if self.params.ground_truth {
            self.state.framework().coords().to_vec()
        } else {
            self.filters.iter().flat_map(|f| f.estimate.iter().copied()).collect()
        }
    }

    pub fn max_localization_error(&self) -> f64 {
        if self.params.ground_truth {
            return 0.0;
        }
        let est: Vec<Vec<f64>> = self.filters.iter().map(|f| f.estimate.clone()).collect();
        crate::localization::max_position_error(&est, self.state.framework().coords())
    }

    pub fn metrics(&self) -> Result<TickMetrics> {
        let state = &self.state;
        let params = &self.params.control;
        let rhos = state.rhos();
        let m = state.framework().graph().edge_count();
        let two_m0 = 2.0 * self.initial_edges.max(1) as f64;
        let hop_load = communication_load(state.framework().graph(), state.geodesics(), state.extents(), None)?;
        Ok(TickMetrics {
            time: state.time(),
            min_rho: rhos.iter().copied().fold(f64::INFINITY, f64::min),
            mean_rho: rhos.iter().sum::<f64>() / rhos.len() as f64,
            max_rho: rhos.iter().copied().fold(0.0, f64::max),
            framework_rho: state.framework_rho()?,
            standardized_load: state.load(params) / two_m0,
            hop_load: hop_load.total / two_m0,
            edges: m,
            min_distance: min_pairwise_distance(state.framework()),
            max_localization_error: self.max_localization_error(),
            exchange_rounds: self.last_rounds,
            step_halvings: self.last_halvings,
        })
    }
}

fn perturb(rng: &mut ChaCha8Rng, x: &[f64], radius: f64) -> Vec<f64> {
    // uniform in the ball by rejection from the cube
    loop {
        let offset: Vec<f64> = x.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
        if offset.iter().map(|v| v * v).sum::<f64>() <= 1.0 {
            return x.iter().zip(offset).map(|(a, o)| a + radius * o).collect();
        }
    }
}

fn min_pairwise_distance(fw: &Framework) -> f64 {
    let n = fw.node_count();
    let mut best = f64::INFINITY;
    for i in 0..n {
        for j in (i + 1)..n {
            let d2: f64 = fw.point(i).iter().zip(fw.point(j)).map(|(a, b)| (a - b).powi(2)).sum();
            best = best.min(d2.sqrt());
        }
    }
    best
}

/// One localization round on the true framework `truth`: estimates go out
/// one hop, every robot ranges its neighbors (with `range_noise`), inflates
/// its covariance by `process_noise` and updates; anchors then take an
/// absolute fix.
pub fn estimation_phase(
    truth: &Framework,
    filters: &[FilterState],
    params: &SimParams,
    rng: &mut impl Rng,
    trace: &mut Option<&mut dyn Write>,
) -> Result<Vec<FilterState>> {
    let estimates: Vec<Vec<f64>> = filters.iter().map(|f| f.estimate.clone()).collect();
    let received = broadcast_estimates(truth.graph(), &estimates, trace)?;
    let mut updated = Vec::with_capacity(filters.len());
    for (i, filter) in filters.iter().enumerate() {
        let ranges: Vec<f64> = received[i]
            .iter()
            .map(|nb| {
                let exact = distance(truth.point(i), truth.point(nb.id));
                if params.range_noise > 0.0 {
                    let e: f64 = rng.sample(StandardNormal);
                    exact + params.range_noise * e
                } else {
                    exact
                }
            })
            .collect();
        let mut filter = filter.clone();
        filter.inflate(params.process_noise);
        filter = filter_update(&filter, &ranges, &received[i])?;
        if filter.is_anchor {
            let fix: Vec<f64> = truth
                .point(i)
                .iter()
                .map(|&x| {
                    if params.anchor_noise > 0.0 {
                        let e: f64 = rng.sample(StandardNormal);
                        x + params.anchor_noise * e
                    } else {
                        x
                    }
                })
                .collect();
            filter = anchor_update(&filter, &fix, params.anchor_variance())?;
        }
        updated.push(filter);
    }
    Ok(updated)
}

/// Advances the world by one control tick: ranging, estimate broadcast,
/// filter updates, the gradient exchange on believed positions, the motion
/// of the true robots and the topology refresh.
///
/// On error the input world is untouched, so it serves as the diagnostic
/// snapshot.
pub fn step_simulation(world: &World, trace: Option<&mut dyn Write>) -> Result<(World, TickMetrics, StepReport)> {
    let mut next = world.clone();
    let mut trace = trace;
    let params = &world.params;
    let fw = world.state.framework();
    let d = fw.dim();

    if !params.ground_truth {
        next.filters = estimation_phase(fw, &next.filters, params, &mut next.rng, &mut trace)?;
    }

    let believed = fw.with_coords(next.believed_positions())?;
    let exchange = run_exchange_phase(&believed, world.state.extents(), &params.control, trace)?;
    if params.audit {
        let central = ControlState::new(believed.clone(), world.state.extents().clone(), &params.control)?
            .control_inputs(&params.control)?;
        if central != exchange.inputs {
            return Err(Error::ProtocolViolation("decentralized inputs differ from the centralized ones".into()));
        }
    }

    let (moved, report) = apply_inputs(&world.state, &exchange.inputs, &params.control)?;
    if !params.ground_truth && params.motion_inflation > 0.0 {
        for (filter, u) in next.filters.iter_mut().zip(exchange.inputs.chunks(d)) {
            let speed2: f64 = u.iter().map(|v| v * v).sum();
            filter.inflate(params.motion_inflation * report.dt * report.dt * speed2);
        }
    }
    next.state = moved;
    next.ticks += 1;
    next.last_rounds = exchange.log.completion_round;
    next.last_halvings = report.halvings;
    let metrics = next.metrics()?;
    if !(metrics.framework_rho > params.control.tol) {
        return Err(Error::ProtocolViolation(format!(
            "framework rho {:e} with every subframework rigid",
            metrics.framework_rho
        )));
    }
    Ok((next, metrics, report))
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}
