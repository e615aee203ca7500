//! Ensemble statistics of rigidity extents and communication load.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use subrigid::graph::GeodesicTable;
use subrigid::rigidity::{Framework, DEFAULT_TOL};
use subrigid::subframework::{communication_load, rigidity_extents, ExtentAssignment};

use crate::config::ScenarioConfig;
use crate::error::{CliError, Result};
use crate::scenario::{generate_with_range, scenario_rng};

/// Structural numbers of one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkRecord {
    pub range: f64,
    pub index: usize,
    pub attempts: usize,
    pub nodes: usize,
    pub edges: usize,
    pub diameter: usize,
    /// `None` when some subframework never becomes rigid.
    pub worst_case_extent: Option<usize>,
    /// Load with every extent at its rigidity extent.
    pub load: Option<f64>,
    pub standardized_load: Option<f64>,
    /// Load with every extent at its eccentricity.
    pub upper_bound_load: f64,
    pub upper_bound_standardized: f64,
}

impl NetworkRecord {
    pub const HEADER: [&'static str; 11] = [
        "range",
        "index",
        "attempts",
        "nodes",
        "edges",
        "diameter",
        "worst_case_extent",
        "load",
        "standardized_load",
        "upper_bound_load",
        "upper_bound_standardized",
    ];

    pub fn row(&self) -> Vec<String> {
        let opt = |v: Option<String>| v.unwrap_or_default();
        vec![
            self.range.to_string(),
            self.index.to_string(),
            self.attempts.to_string(),
            self.nodes.to_string(),
            self.edges.to_string(),
            self.diameter.to_string(),
            opt(self.worst_case_extent.map(|v| v.to_string())),
            opt(self.load.map(|v| v.to_string())),
            opt(self.standardized_load.map(|v| v.to_string())),
            self.upper_bound_load.to_string(),
            self.upper_bound_standardized.to_string(),
        ]
    }
}

/// Diameter, extents and loads of a connected framework.
pub fn analyze_network(fw: &Framework, range: f64, index: usize, attempts: usize) -> Result<NetworkRecord> {
    let g = fw.graph();
    let table = GeodesicTable::new(g);
    let diameter = table.diameter()?;
    let two_m = 2.0 * g.edge_count() as f64;
    let extents = rigidity_extents(fw, DEFAULT_TOL)?;
    let load = match &extents {
        Some(ext) => Some(communication_load(g, &table, ext, None)?.total),
        None => None,
    };
    let upper = communication_load(g, &table, &ExtentAssignment::eccentricities(&table), None)?.total;
    Ok(NetworkRecord {
        range,
        index,
        attempts,
        nodes: fw.node_count(),
        edges: g.edge_count(),
        diameter,
        worst_case_extent: extents.map(|e| e.worst_case),
        load,
        standardized_load: load.map(|l| l / two_m),
        upper_bound_load: upper,
        upper_bound_standardized: upper / two_m,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub range: f64,
    pub networks: usize,
    pub draws: usize,
    pub rejected_disconnected: usize,
    pub rejected_flexible: usize,
    pub diameter_histogram: BTreeMap<usize, usize>,
    pub diameter_mode: usize,
    pub extent_histogram: BTreeMap<usize, usize>,
    pub fraction_eta_at_most_5: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub seed: u64,
    pub n: usize,
    pub region: Vec<f64>,
    pub groups: Vec<GroupSummary>,
    pub fraction_eta_at_most_5: f64,
    /// Among networks with `η ≤ 5`, the share with `1 ≤ ℓ/2m ≤ 4`.
    pub fraction_moderate_load: f64,
    pub records: Vec<NetworkRecord>,
}

fn mode(hist: &BTreeMap<usize, usize>) -> usize {
    // ties go to the smaller value
    hist.iter().fold((0, 0), |best, (&v, &c)| if c > best.1 { (v, c) } else { best }).0
}

fn fraction(count: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        count as f64 / total as f64
    }
}

/// Draws `ensemble_count` rigid networks per range in `ensemble_ranges` and
/// collects their statistics. Network `k` of group `g` uses stream
/// `g·2³² + k` of the configured seed; results are in group, index order.
pub fn run_ensemble_experiment(config: &ScenarioConfig) -> Result<EnsembleReport> {
    config.validate()?;
    let draw_config = ScenarioConfig { require_rigid: true, ..config.clone() };
    let mut groups = Vec::new();
    let mut records = Vec::new();
    for (g, &range) in config.ensemble_ranges.iter().enumerate() {
        let results: Vec<Result<(NetworkRecord, usize, usize)>> = (0..config.ensemble_count)
            .into_par_iter()
            .map(|k| {
                let mut rng = scenario_rng(config.seed, ((g as u64) << 32) + k as u64);
                let gen = generate_with_range(&draw_config, range, &mut rng)?;
                let rec = analyze_network(&gen.framework, range, k, gen.attempts)?;
                Ok((rec, gen.rejected_disconnected, gen.rejected_flexible))
            })
            .collect();
        let mut summary = GroupSummary {
            range,
            networks: 0,
            draws: 0,
            rejected_disconnected: 0,
            rejected_flexible: 0,
            diameter_histogram: BTreeMap::new(),
            diameter_mode: 0,
            extent_histogram: BTreeMap::new(),
            fraction_eta_at_most_5: 0.0,
        };
        for result in results {
            let (rec, disconnected, flexible) = result?;
            summary.networks += 1;
            summary.draws += rec.attempts;
            summary.rejected_disconnected += disconnected;
            summary.rejected_flexible += flexible;
            *summary.diameter_histogram.entry(rec.diameter).or_default() += 1;
            let eta = rec.worst_case_extent.ok_or_else(|| {
                CliError::InvalidConfig(format!("network {k} of range {range} has no rigidity extent", k = rec.index))
            })?;
            *summary.extent_histogram.entry(eta).or_default() += 1;
            records.push(rec);
        }
        summary.diameter_mode = mode(&summary.diameter_histogram);
        let small: usize = summary.extent_histogram.range(..=5).map(|(_, c)| c).sum();
        summary.fraction_eta_at_most_5 = fraction(small, summary.networks);
        groups.push(summary);
    }
    let small: Vec<&NetworkRecord> = records.iter().filter(|r| r.worst_case_extent.is_some_and(|e| e <= 5)).collect();
    let moderate = small.iter().filter(|r| r.standardized_load.is_some_and(|l| (1.0..=4.0).contains(&l))).count();
    Ok(EnsembleReport {
        seed: config.seed,
        n: config.n,
        region: config.region.clone(),
        fraction_eta_at_most_5: fraction(small.len(), records.len()),
        fraction_moderate_load: fraction(moderate, small.len()),
        groups,
        records,
    })
}

/// One CSV row per network.
pub fn write_ensemble_csv(report: &EnsembleReport, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(NetworkRecord::HEADER)?;
    for rec in &report.records {
        w.write_record(rec.row())?;
    }
    w.flush()?;
    Ok(())
}
