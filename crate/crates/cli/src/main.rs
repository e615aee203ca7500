use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use subrigid::graph::GeodesicTable;
use subrigid::rigidity::{rigidity_report, Framework, DEFAULT_TOL};
use subrigid::subframework::{communication_load, rigidity_extents};
use subrigid_cli::config::{read_config_file, ScenarioConfig};
use subrigid_cli::control_run::{write_control_csv, RunOutcome};
use subrigid_cli::ensemble::write_ensemble_csv;
use subrigid_cli::{generate_scenario, run_control_experiment, run_ensemble_experiment, scenario_rng, CliError};

/// Subframework rigidity experiments.
#[derive(Parser)]
#[command(name = "subrigid", version)]
struct Cli {
    /// TOML file whose keys override the command-line flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Draw one framework and write it as JSON.
    Gen(Flags),
    /// Extent and load statistics over random rigid networks.
    Ensemble(Flags),
    /// Decentralized rigidity-maintenance run with localization.
    Control(Flags),
    /// Rigidity report, extents and load of a framework JSON file.
    Audit {
        input: PathBuf,
    },
}

/// Scenario fields; any flag left out keeps the verb's preset.
#[derive(Args, Default)]
struct Flags {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n: Option<usize>,
    /// Side lengths of the region, one per dimension.
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    region: Option<Vec<f64>>,
    #[arg(long)]
    range: Option<f64>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    require_rigid: Option<bool>,
    #[arg(long)]
    max_attempts: Option<usize>,
    #[arg(long)]
    ensemble_count: Option<usize>,
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    ensemble_ranges: Option<Vec<f64>>,
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long)]
    range_noise: Option<f64>,
    #[arg(long)]
    anchor_noise: Option<f64>,
    #[arg(long, num_args = 0.., value_delimiter = ',')]
    anchors: Option<Vec<usize>>,
    #[arg(long)]
    initial_error: Option<f64>,
    #[arg(long)]
    ground_truth: bool,
    #[arg(long)]
    dt: Option<f64>,
    /// CSV output path.
    #[arg(long)]
    output: Option<PathBuf>,
    /// JSON output path.
    #[arg(long)]
    records: Option<PathBuf>,
    /// JSON-lines message trace.
    #[arg(long)]
    trace: Option<PathBuf>,
}

impl Flags {
    fn to_table(&self) -> toml::Table {
        let mut t = toml::Table::new();
        let mut put = |k: &str, v: Option<toml::Value>| {
            if let Some(v) = v {
                t.insert(k.to_string(), v);
            }
        };
        let floats = |v: &Vec<f64>| toml::Value::Array(v.iter().map(|&x| toml::Value::Float(x)).collect());
        let path = |p: &PathBuf| toml::Value::String(p.display().to_string());
        put("seed", self.seed.map(|v| toml::Value::Integer(v as i64)));
        put("n", self.n.map(|v| toml::Value::Integer(v as i64)));
        put("region", self.region.as_ref().map(floats));
        put("range", self.range.map(toml::Value::Float));
        put("dim", self.dim.map(|v| toml::Value::Integer(v as i64)));
        put("require_rigid", self.require_rigid.map(toml::Value::Boolean));
        put("max_attempts", self.max_attempts.map(|v| toml::Value::Integer(v as i64)));
        put("ensemble_count", self.ensemble_count.map(|v| toml::Value::Integer(v as i64)));
        put("ensemble_ranges", self.ensemble_ranges.as_ref().map(floats));
        put("duration", self.duration.map(toml::Value::Float));
        put("range_noise", self.range_noise.map(toml::Value::Float));
        put("anchor_noise", self.anchor_noise.map(toml::Value::Float));
        put(
            "anchors",
            self.anchors.as_ref().map(|a| toml::Value::Array(a.iter().map(|&x| toml::Value::Integer(x as i64)).collect())),
        );
        put("initial_error", self.initial_error.map(toml::Value::Float));
        put("ground_truth", self.ground_truth.then_some(toml::Value::Boolean(true)));
        put("output", self.output.as_ref().map(path));
        put("records", self.records.as_ref().map(path));
        put("trace", self.trace.as_ref().map(path));
        if let Some(dt) = self.dt {
            let mut control = toml::Table::new();
            control.insert("dt".into(), toml::Value::Float(dt));
            t.insert("control".into(), toml::Value::Table(control));
        }
        t
    }
}

fn resolve(preset: ScenarioConfig, flags: &Flags, file: Option<&PathBuf>) -> Result<ScenarioConfig, CliError> {
    let mut layers = vec![flags.to_table()];
    if let Some(path) = file {
        layers.push(read_config_file(path)?);
    }
    preset.merged(&layers)
}

fn create(path: &PathBuf) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_json(path: Option<&PathBuf>, value: &impl serde::Serialize) -> Result<(), CliError> {
    match path {
        Some(p) => {
            let mut w = create(p)?;
            serde_json::to_writer_pretty(&mut w, value)?;
            writeln!(w)?;
            w.flush()?;
        }
        None => println!("{}", serde_json::to_string_pretty(value)?),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    let file = cli.config.as_ref();
    match cli.verb {
        Verb::Gen(flags) => {
            let cfg = resolve(ScenarioConfig::default(), &flags, file)?;
            let gen = generate_scenario(&cfg, &mut scenario_rng(cfg.seed, 0))?;
            eprintln!(
                "drew {} framework(s): {} disconnected, {} flexible",
                gen.attempts, gen.rejected_disconnected, gen.rejected_flexible
            );
            let json = gen.framework.to_json();
            match cfg.records.as_ref().or(cfg.output.as_ref()) {
                Some(p) => std::fs::write(p, json + "\n")?,
                None => println!("{json}"),
            }
        }
        Verb::Ensemble(flags) => {
            let cfg = resolve(ScenarioConfig::ensemble(), &flags, file)?;
            let report = run_ensemble_experiment(&cfg)?;
            for g in &report.groups {
                eprintln!(
                    "range {}: {} networks from {} draws, diameter mode {}, eta <= 5 in {:.1}%",
                    g.range,
                    g.networks,
                    g.draws,
                    g.diameter_mode,
                    100.0 * g.fraction_eta_at_most_5
                );
            }
            match cfg.output.as_ref() {
                Some(p) => write_ensemble_csv(&report, create(p)?)?,
                None => write_ensemble_csv(&report, std::io::stdout().lock())?,
            }
            if let Some(p) = cfg.records.as_ref() {
                write_json(Some(p), &report)?;
            }
        }
        Verb::Control(flags) => {
            let cfg = resolve(ScenarioConfig::default(), &flags, file)?;
            let mut trace = cfg.trace.as_ref().map(create).transpose()?;
            let run = run_control_experiment(&cfg, trace.as_mut().map(|w| w as &mut dyn Write))?;
            if let Some(mut t) = trace {
                t.flush()?;
            }
            match cfg.output.as_ref() {
                Some(p) => write_control_csv(&run.rows, create(p)?)?,
                None => write_control_csv(&run.rows, std::io::stdout().lock())?,
            }
            if let Some(p) = cfg.records.as_ref() {
                write_json(Some(p), &run)?;
            }
            if let RunOutcome::RigidityLost { time, error } = &run.outcome {
                eprintln!("rigidity lost at t = {time}: {error}");
                return Ok(ExitCode::from(2));
            }
        }
        Verb::Audit { input } => {
            let text = std::fs::read_to_string(&input)?;
            let fw = Framework::from_json(&text).map_err(|e| CliError::InvalidConfig(format!("{}: {e}", input.display())))?;
            let report = rigidity_report(&fw, DEFAULT_TOL)?;
            let table = GeodesicTable::new(fw.graph());
            let mut out = serde_json::json!({ "rigidity": report, "connected": table.is_connected() });
            if table.is_connected() {
                if let Some(ext) = rigidity_extents(&fw, DEFAULT_TOL)? {
                    let load = communication_load(fw.graph(), &table, &ext, None)?;
                    out["extents"] = serde_json::to_value(&ext)?;
                    out["load"] = serde_json::json!({ "total": load.total, "standardized": load.standardized });
                }
            }
            println!("{}", serde_json::to_string_pretty(&out)?);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
