//! Experiment configuration.
//!
//! Values are layered: a per-verb preset, then command-line flags, then the
//! config file, each overriding the previous one key by key.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use subrigid::control::ControlParams;
use subrigid::simnet::SimParams;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub n: usize,
    /// Side lengths of the deployment box (m), one per dimension.
    pub region: Vec<f64>,
    /// Communication range Ω (m); also the controller's range.
    pub range: f64,
    pub dim: usize,
    /// Resample until the framework is infinitesimally rigid.
    pub require_rigid: bool,
    /// Draws allowed per framework before giving up.
    pub max_attempts: usize,
    /// Networks per range group in the ensemble.
    pub ensemble_count: usize,
    pub ensemble_ranges: Vec<f64>,
    /// Simulated time of the control run (s).
    pub duration: f64,
    /// Range measurement standard deviation (m).
    pub range_noise: f64,
    pub anchor_noise: f64,
    pub anchors: Vec<usize>,
    pub initial_error: f64,
    pub process_noise: f64,
    pub motion_inflation: f64,
    pub ground_truth: bool,
    /// CSV output (per network or per tick).
    pub output: Option<PathBuf>,
    /// JSON output (per-network records, reports, frameworks).
    pub records: Option<PathBuf>,
    /// JSON-lines message trace of the control run.
    pub trace: Option<PathBuf>,
    pub control: ControlParams,
}

impl Default for ScenarioConfig {
    /// The control-run scenario: 60 robots in 100 × 100 m, Ω = 40 m.
    fn default() -> Self {
        let sim = SimParams::default();
        ScenarioConfig {
            seed: 1,
            n: 60,
            region: vec![100.0, 100.0],
            range: 40.0,
            dim: 2,
            require_rigid: true,
            max_attempts: 10_000,
            ensemble_count: 250,
            ensemble_ranges: vec![25.0, 20.0, 17.5],
            duration: 200.0,
            range_noise: sim.range_noise,
            anchor_noise: sim.anchor_noise,
            anchors: sim.anchors,
            initial_error: sim.initial_error,
            process_noise: sim.process_noise,
            motion_inflation: sim.motion_inflation,
            ground_truth: false,
            output: None,
            records: None,
            trace: None,
            control: calibrated_control(),
        }
    }
}

/// Controller settings used for the 200 s run.
pub fn calibrated_control() -> ControlParams {
    ControlParams { range: 40.0, gain_rigidity: 7.0, rigidity_exponent: 1.0, ..ControlParams::default() }
}

impl ScenarioConfig {
    /// The ensemble scenario: 250 networks of 100 robots per range group.
    pub fn ensemble() -> Self {
        ScenarioConfig { n: 100, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CliError::InvalidConfig(msg));
        if !(2..=3).contains(&self.dim) {
            return bad(format!("dim must be 2 or 3, got {}", self.dim));
        }
        if self.region.len() != self.dim {
            return bad(format!("region needs {} side lengths, got {}", self.dim, self.region.len()));
        }
        if self.region.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return bad(format!("region sides must be positive, got {:?}", self.region));
        }
        if self.n == 0 {
            return bad("n must be positive".into());
        }
        if !(self.range > 0.0 && self.range.is_finite()) {
            return bad(format!("range must be positive, got {}", self.range));
        }
        if self.ensemble_ranges.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
            return bad(format!("ensemble ranges must be positive, got {:?}", self.ensemble_ranges));
        }
        if self.max_attempts == 0 {
            return bad("max_attempts must be positive".into());
        }
        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            return bad(format!("duration must be non-negative, got {}", self.duration));
        }
        self.sim_params().validate(self.n).map_err(|e| CliError::InvalidConfig(e.to_string()))
    }

    /// Controller parameters with the scenario's range.
    pub fn control_params(&self) -> ControlParams {
        ControlParams { range: self.range, ..self.control.clone() }
    }

    pub fn sim_params(&self) -> SimParams {
        SimParams {
            control: self.control_params(),
            range_noise: self.range_noise,
            anchor_noise: self.anchor_noise,
            anchors: self.anchors.clone(),
            initial_error: self.initial_error,
            process_noise: self.process_noise,
            motion_inflation: self.motion_inflation,
            ground_truth: self.ground_truth,
            audit: false,
        }
    }

    /// Layers `overrides` (flags, then the file) over `self`.
    pub fn merged(&self, overrides: &[toml::Table]) -> Result<Self> {
        let mut base = toml::Table::try_from(self).map_err(|e| CliError::InvalidConfig(e.to_string()))?;
        for layer in overrides {
            merge_tables(&mut base, layer);
        }
        let merged: ScenarioConfig =
            toml::Value::Table(base).try_into().map_err(|e: toml::de::Error| CliError::InvalidConfig(e.to_string()))?;
        merged.validate()?;
        Ok(merged)
    }
}

fn merge_tables(base: &mut toml::Table, layer: &toml::Table) {
    for (key, value) in layer {
        match (base.get_mut(key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(l)) => merge_tables(b, l),
            _ => {
                base.insert(key.clone(), value.clone());
            }
        }
    }
}

/// Reads a TOML config file as an override layer.
pub fn read_config_file(path: &Path) -> Result<toml::Table> {
    let text = std::fs::read_to_string(path)?;
    text.parse::<toml::Table>().map_err(|e| CliError::InvalidConfig(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        ScenarioConfig::default().validate().unwrap();
        ScenarioConfig::ensemble().validate().unwrap();
    }

    #[test]
    fn later_layers_win_key_by_key() {
        let flags: toml::Table = "n = 30\nseed = 5".parse().unwrap();
        let file: toml::Table = "n = 12\n[control]\nsteepness = 2.0".parse().unwrap();
        let cfg = ScenarioConfig::default().merged(&[flags, file]).unwrap();
        assert_eq!(cfg.n, 12);
        assert_eq!(cfg.seed, 5);
        assert_eq!(cfg.control.steepness, 2.0);
        assert_eq!(cfg.control.dt, ScenarioConfig::default().control.dt);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        let typo: toml::Table = "nn = 3".parse().unwrap();
        assert!(matches!(ScenarioConfig::default().merged(&[typo]), Err(CliError::InvalidConfig(_))));
        let dim: toml::Table = "dim = 4".parse().unwrap();
        assert!(matches!(ScenarioConfig::default().merged(&[dim]), Err(CliError::InvalidConfig(_))));
        let region: toml::Table = "region = [100.0]".parse().unwrap();
        assert!(ScenarioConfig::default().merged(&[region]).is_err());
        let anchors: toml::Table = "n = 3\nanchors = [5]".parse().unwrap();
        assert!(ScenarioConfig::default().merged(&[anchors]).is_err());
    }

    #[test]
    fn scenario_range_drives_the_controller() {
        let cfg = ScenarioConfig { range: 25.0, ..Default::default() };
        assert_eq!(cfg.control_params().range, 25.0);
        assert_eq!(cfg.sim_params().control.range, 25.0);
    }
}
