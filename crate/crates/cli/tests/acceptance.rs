//! Acceptance suite: one test per criterion, each printing a single
//! `[criterion N] PASS|FAIL ...` line before asserting.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use subrigid::control::{ControlParams, ControlState};
use subrigid::graph::{disk_proximity_graph, is_connected, GeodesicTable, Graph};
use subrigid::localization::{congruence_error, max_position_error, FilterState};
use subrigid::rigidity::{diameter_eigenvalue_bound, is_infinitesimally_rigid, rigidity_report, Framework, DEFAULT_TOL};
use subrigid::simnet::{estimation_phase, run_exchange_phase, SimParams};
use subrigid::subframework::{communication_load, rigidity_extents, verify_subframework_rigidity, ExtentAssignment};
use subrigid_cli::control_run::{write_control_csv, RunOutcome};
use subrigid_cli::ensemble::write_ensemble_csv;
use subrigid_cli::{run_control_experiment, run_ensemble_experiment, ScenarioConfig};

fn report(criterion: u32, pass: bool, detail: String) {
    println!("[criterion {criterion}] {} {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {criterion}: {detail}");
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random points in a 10-unit box with each pair joined with probability `p`.
fn random_framework(r: &mut ChaCha8Rng, n: usize, dim: usize, p: f64) -> Framework {
    let coords: Vec<f64> = (0..n * dim).map(|_| r.random_range(0.0..10.0)).collect();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if r.random_bool(p) {
                edges.push((i, j));
            }
        }
    }
    Framework::new(Graph::from_edges(n, edges).unwrap(), dim, coords).unwrap()
}

fn random_connected_framework(r: &mut ChaCha8Rng, n: usize, dim: usize, p: f64) -> Framework {
    loop {
        let fw = random_framework(r, n, dim, p);
        if is_connected(fw.graph()) {
            return fw;
        }
    }
}

fn random_rigid_disk_framework(r: &mut ChaCha8Rng, n: usize, side: f64, range: f64) -> Framework {
    loop {
        let coords: Vec<f64> = (0..2 * n).map(|_| r.random_range(0.0..side)).collect();
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

#[test]
fn criterion_1_rank_and_eigenvalue_tests_agree() {
    let start = Instant::now();
    let mut r = rng(1);
    let (mut agree, mut rigid) = (0, 0);
    let total = 1200;
    for k in 0..total {
        let dim = if k % 2 == 0 { 2 } else { 3 };
        let n = r.random_range(4..=15);
        let p = r.random_range(0.15..0.95);
        let rep = rigidity_report(&random_framework(&mut r, n, dim, p), DEFAULT_TOL).unwrap();
        agree += usize::from(rep.rigid == rep.rank_rigid);
        rigid += usize::from(rep.rigid);
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        1,
        agree == total && secs < 30.0 && rigid > 0 && rigid < total,
        format!("{agree}/{total} agree ({rigid} rigid) in {secs:.2} s"),
    );
}

#[test]
fn criterion_2_eigenvalue_respects_the_diameter_bound() {
    let mut r = rng(2);
    let (mut violations, mut worst_ratio) = (0, 0.0f64);
    let total = 600;
    for k in 0..total {
        let n = r.random_range(4..=20);
        let p = [0.15, 0.3, 0.6, 0.9][k % 4];
        let fw = random_connected_framework(&mut r, n, 2, p);
        let rho = rigidity_report(&fw, DEFAULT_TOL).unwrap().rho;
        let diameter = GeodesicTable::new(fw.graph()).diameter().unwrap();
        let bound = diameter_eigenvalue_bound(fw.graph().edge_count(), diameter);
        if rho > bound {
            violations += 1;
        }
        worst_ratio = worst_ratio.max(rho / bound);
    }
    report(2, violations == 0, format!("{violations} violations over {total} frameworks, max rho/bound {worst_ratio:.3}"));
}

#[test]
fn criterion_3_subframework_rigidity_is_equivalent_to_rigidity() {
    let mut r = rng(3);
    let (mut counterexamples, mut rigid_count) = (0, 0);
    let total = 320;
    for k in 0..total {
        let n = r.random_range(4..=12);
        let p = [0.25, 0.4, 0.6][k % 3];
        let fw = random_connected_framework(&mut r, n, 2, p);
        let rigid = is_infinitesimally_rigid(&fw, DEFAULT_TOL).unwrap();
        let table = GeodesicTable::new(fw.graph());
        let at_eccentricity = verify_subframework_rigidity(&fw, &ExtentAssignment::eccentricities(&table), DEFAULT_TOL).unwrap();
        if rigid != at_eccentricity {
            counterexamples += 1;
        }
        if rigid {
            rigid_count += 1;
            match rigidity_extents(&fw, DEFAULT_TOL).unwrap() {
                Some(ext) if verify_subframework_rigidity(&fw, &ext, DEFAULT_TOL).unwrap() => {}
                _ => counterexamples += 1,
            }
        }
    }
    report(
        3,
        counterexamples == 0 && rigid_count > 0 && rigid_count < total,
        format!("{counterexamples} counterexamples over {total} frameworks ({rigid_count} rigid)"),
    );
}

/// `ℓ = Σ_i Σ_j max(0, h_i − g_ij) δ_j` from Floyd–Warshall distances.
fn brute_force_load(g: &Graph, extents: &[usize]) -> f64 {
    let n = g.node_count();
    let inf = usize::MAX / 4;
    let mut d = vec![vec![inf; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0;
    }
    for &(a, b) in g.edges() {
        d[a][b] = 1;
        d[b][a] = 1;
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    let mut load = 0.0;
    for i in 0..n {
        for j in 0..n {
            if d[i][j] < extents[i] {
                load += ((extents[i] - d[i][j]) * g.degree(j)) as f64;
            }
        }
    }
    load
}

#[test]
fn criterion_4_load_identities() {
    let mut r = rng(4);
    let mut failures = Vec::new();
    for k in 0..200 {
        let n = r.random_range(3..=20);
        let fw = random_connected_framework(&mut r, n, 2, [0.2, 0.5, 0.8][k % 3]);
        let g = fw.graph();
        let table = GeodesicTable::new(g);
        let lower = communication_load(g, &table, &ExtentAssignment::one_hop(g.node_count()), None).unwrap();
        if lower.total != 2.0 * g.edge_count() as f64 {
            failures.push(format!("one-hop load {} != 2m = {}", lower.total, 2 * g.edge_count()));
        }
        let ecc = ExtentAssignment::eccentricities(&table);
        let upper = communication_load(g, &table, &ecc, None).unwrap();
        let oracle = brute_force_load(g, &table.eccentricities());
        if upper.total != oracle {
            failures.push(format!("eccentricity load {} != oracle {oracle}", upper.total));
        }
    }
    let path = Graph::path(3);
    let table = GeodesicTable::new(&path);
    let hand = communication_load(&path, &table, &ExtentAssignment::new(vec![2, 1, 2], &table).unwrap(), None).unwrap();
    if hand.total != 10.0 || hand.per_node != vec![4.0, 2.0, 4.0] {
        failures.push(format!("path example gave {:?}", hand.per_node));
    }
    report(4, failures.is_empty(), format!("200 random graphs + path example; failures: {failures:?}"));
}

fn central_difference(state: &ControlState, params: &ControlParams, f: impl Fn(&ControlState) -> f64) -> Vec<f64> {
    let h = 1e-6 * 40.0;
    let base = state.framework().coords().to_vec();
    (0..base.len())
        .map(|k| {
            let mut plus = base.clone();
            plus[k] += h;
            let mut minus = base.clone();
            minus[k] -= h;
            (f(&state.with_coords(plus, params).unwrap()) - f(&state.with_coords(minus, params).unwrap())) / (2.0 * h)
        })
        .collect()
}

fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = numeric.iter().map(|v| v * v).sum::<f64>().sqrt();
    diff / norm.max(1e-300)
}

#[test]
fn criterion_5_gradients_match_finite_differences() {
    let params = ControlParams { range: 20.0, ..Default::default() };
    let mut r = rng(5);
    let (mut checked, mut skipped_gap) = (0, 0);
    let mut worst = [0.0f64; 3];
    while checked < 120 {
        let fw = random_rigid_disk_framework(&mut r, 6 + checked % 9, 40.0, params.range);
        let ext = rigidity_extents(&fw, DEFAULT_TOL).unwrap().unwrap();
        let state = ControlState::new(fw, ext, &params).unwrap();
        if state.eigenpairs().iter().any(|e| e.gap <= 1e-3 * e.rho) {
            skipped_gap += 1;
            continue;
        }
        let n = state.framework().node_count();
        let stack = |per_node: &dyn Fn(usize) -> Vec<f64>| (0..n).flat_map(per_node).collect::<Vec<f64>>();
        let dphi = stack(&|i| state.rigidity_gradient(i, &params).unwrap());
        let dload = stack(&|i| state.load_gradient(i, &params));
        let dpsi = stack(&|i| state.collision_gradient(i, &params).unwrap());
        let errors = [
            relative_error(&dphi, &central_difference(&state, &params, |s| s.rigidity_potential(&params))),
            relative_error(&dload, &central_difference(&state, &params, |s| s.load(&params))),
            relative_error(&dpsi, &central_difference(&state, &params, |s| s.collision_potential(&params).unwrap())),
        ];
        for (w, e) in worst.iter_mut().zip(errors) {
            *w = w.max(e);
        }
        checked += 1;
    }
    report(
        5,
        worst.iter().all(|&e| e <= 1e-4),
        format!(
            "{checked} configurations ({skipped_gap} skipped for eigenvalue gap); worst relative error phi {:.1e}, load {:.1e}, collision {:.1e}",
            worst[0], worst[1], worst[2]
        ),
    );
}

#[test]
fn criterion_6_exchange_completes_within_twice_the_worst_case_extent() {
    let params = ControlParams { range: 20.0, ..Default::default() };
    let mut r = rng(6);
    let (mut late, mut max_eta, mut max_round) = (0, 0, 0);
    let total = 220;
    for _ in 0..total {
        let n = r.random_range(8..=30);
        let fw = random_rigid_disk_framework(&mut r, n, 50.0, params.range);
        let ext = rigidity_extents(&fw, DEFAULT_TOL).unwrap().unwrap();
        let eta = ext.worst_case;
        match run_exchange_phase(&fw, &ext, &params, None) {
            Ok(out) if out.log.completion_round <= 2 * eta && out.log.pairs.iter().all(|p| p.round.is_some()) => {
                max_round = max_round.max(out.log.completion_round);
            }
            _ => late += 1,
        }
        max_eta = max_eta.max(eta);
    }
    // a wheel has every extent equal to one
    let mut coords = vec![0.0, 0.0];
    for k in 0..7 {
        let a = std::f64::consts::TAU / 7.0 * k as f64;
        coords.extend([10.0 * a.cos(), 10.0 * a.sin()]);
    }
    let mut edges: Vec<(usize, usize)> = (1..=7).map(|k| (0, k)).collect();
    edges.extend((1..=7).map(|k| (k, k % 7 + 1)));
    let wheel = Framework::new(Graph::from_edges(8, edges).unwrap(), 2, coords).unwrap();
    let one_hop = rigidity_extents(&wheel, DEFAULT_TOL).unwrap().unwrap();
    let rounds = run_exchange_phase(&wheel, &one_hop, &params, None).unwrap().log.completion_round;
    report(
        6,
        late == 0 && one_hop.worst_case == 1 && rounds == 2,
        format!("{late}/{total} late; eta up to {max_eta}, slowest exchange {max_round} rounds; one-hop case {rounds} rounds"),
    );
}

#[test]
fn criterion_7_ensemble_statistics() {
    let start = Instant::now();
    let config = ScenarioConfig::ensemble();
    let ens = run_ensemble_experiment(&config).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let modes: Vec<usize> = ens.groups.iter().map(|g| g.diameter_mode).collect();
    let modes_ok = modes.iter().zip([7usize, 9, 10]).all(|(&m, want)| m.abs_diff(want) <= 1);
    let frac = ens.fraction_eta_at_most_5;
    let counts: Vec<usize> = ens.groups.iter().map(|g| g.networks).collect();
    report(
        7,
        modes_ok && (0.75..=0.95).contains(&frac) && secs <= 600.0 && counts == vec![250; 3],
        format!(
            "diameter modes {modes:?} (ranges {:?}), eta <= 5 in {:.1}% of {} networks, moderate load in {:.1}% of those, {secs:.1} s",
            config.ensemble_ranges,
            100.0 * frac,
            ens.records.len(),
            100.0 * ens.fraction_moderate_load
        ),
    );
}

#[test]
fn criterion_8_control_run_envelope() {
    let config = ScenarioConfig::default();
    let run = run_control_experiment(&config, None).unwrap();
    let rows = &run.rows;
    let completed = run.outcome == RunOutcome::Completed && rows.last().is_some_and(|r| r.time >= config.duration - 1e-6);
    let positive = rows.iter().all(|r| r.min_rho > 0.0);
    let framework_positive = rows.iter().all(|r| r.framework_rho > 0.0);
    let rho0 = rows[0].min_rho;
    let rho25 = rows.iter().rev().find(|r| r.time <= 25.0).unwrap().min_rho;
    let peak = rows.iter().max_by(|a, b| a.standardized_load.total_cmp(&b.standardized_load)).unwrap();
    let end = rows.last().unwrap().standardized_load;
    let reduction = 1.0 - end / peak.standardized_load;
    report(
        8,
        completed && positive && framework_positive && rho25 >= 2.0 * rho0 && (0.25..=0.55).contains(&reduction),
        format!(
            "{:?} at t = {:.1} s; min rho {rho0:.3} -> {rho25:.3} at 25 s (x{:.2}), lowest {:.3}; load peak {:.3} at {:.1} s -> {end:.3} ({:.0}% reduction); framework rho >= {:.3}",
            run.outcome,
            rows.last().map_or(0.0, |r| r.time),
            rho25 / rho0,
            rows.iter().map(|r| r.min_rho).fold(f64::INFINITY, f64::min),
            peak.standardized_load,
            peak.time,
            100.0 * reduction,
            rows.iter().map(|r| r.framework_rho).fold(f64::INFINITY, f64::min),
        ),
    );
}

/// Rounds needed for noiseless, static n = 60 frameworks; calibrated on
/// seeds 0..18, where the slowest took about 4600.
const LOCALIZATION_BUDGET: usize = 10_000;

fn static_estimation(fw: &Framework, anchors: Vec<usize>, seed: u64, stop: impl Fn(&[Vec<f64>]) -> bool) -> (usize, Vec<Vec<f64>>) {
    let params = SimParams { range_noise: 0.0, anchor_noise: 0.0, anchors: anchors.clone(), ..Default::default() };
    let range = params.control.range;
    let mut r = rng(seed);
    let mut filters: Vec<FilterState> = (0..fw.node_count())
        .map(|i| {
            let angle: f64 = r.random_range(0.0..std::f64::consts::TAU);
            let radius: f64 = r.random_range(0.0..0.1 * range);
            let x = fw.point(i);
            let estimate = vec![x[0] + radius * angle.cos(), x[1] + radius * angle.sin()];
            FilterState::new(i, estimate, (0.1 * range).powi(2), params.range_variance(), anchors.contains(&i)).unwrap()
        })
        .collect();
    let estimates = |f: &[FilterState]| f.iter().map(|s| s.estimate.clone()).collect::<Vec<_>>();
    for round in 0..LOCALIZATION_BUDGET {
        if stop(&estimates(&filters)) {
            return (round, estimates(&filters));
        }
        filters = estimation_phase(fw, &filters, &params, &mut r, &mut None).unwrap();
    }
    (LOCALIZATION_BUDGET, estimates(&filters))
}

#[test]
fn criterion_9_localization_converges() {
    let config = ScenarioConfig::default();
    let mut details = Vec::new();
    let mut pass = true;
    for seed in 0..4 {
        let mut r = rng(900 + seed);
        let fw = random_rigid_disk_framework(&mut r, config.n, 100.0, config.range);
        let truth = fw.coords().to_vec();
        let (rounds, est) = static_estimation(&fw, vec![0, 1], seed, |e| max_position_error(e, &truth) < 1e-3);
        let err = max_position_error(&est, &truth);
        pass &= err < 1e-3;
        details.push(format!("anchored seed {seed}: {rounds} rounds, error {err:.2e} m"));
    }
    for seed in 0..2 {
        let mut r = rng(950 + seed);
        let fw = random_rigid_disk_framework(&mut r, config.n, 100.0, config.range);
        let truth = fw.coords().to_vec();
        let (rounds, est) = static_estimation(&fw, vec![], seed, |e| congruence_error(e, &truth) < 1e-3);
        let congruence = congruence_error(&est, &truth);
        pass &= congruence < 1e-3;
        details.push(format!(
            "anchor-free seed {seed}: {rounds} rounds, congruence {congruence:.2e} m, absolute {:.2} m",
            max_position_error(&est, &truth)
        ));
    }
    report(9, pass, format!("budget {LOCALIZATION_BUDGET} rounds; {}", details.join("; ")));
}

#[test]
fn criterion_10_same_seed_same_bytes() {
    let control = ScenarioConfig { duration: 10.0, ..ScenarioConfig::default() };
    let csv = |cfg: &ScenarioConfig| {
        let run = run_control_experiment(cfg, None).unwrap();
        let mut buf = Vec::new();
        write_control_csv(&run.rows, &mut buf).unwrap();
        buf
    };
    let (a, b) = (csv(&control), csv(&control));
    let ensemble = ScenarioConfig { ensemble_count: 12, ..ScenarioConfig::ensemble() };
    let ens_csv = || {
        let mut buf = Vec::new();
        write_ensemble_csv(&run_ensemble_experiment(&ensemble).unwrap(), &mut buf).unwrap();
        buf
    };
    let (c, d) = (ens_csv(), ens_csv());
    report(
        10,
        a == b && c == d && a.len() > 100 && c.len() > 100,
        format!("control CSV {} bytes identical: {}; ensemble CSV {} bytes identical: {}", a.len(), a == b, c.len(), c == d),
    );
}
