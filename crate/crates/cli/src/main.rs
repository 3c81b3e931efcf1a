//! `affine-qmle`: simulate, fit, run Monte Carlo experiments, render RMSE
//! tables and check stationarity conditions.

mod config;
mod error;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use affine_qmle::asymptotics::analyze;
use affine_qmle::contrast::Contrast;
use affine_qmle::models::stationarity_check_point;
use affine_qmle::montecarlo::{render_table, run_experiment, ExperimentConfig, RmseRow, RmseTable};
use affine_qmle::noise::NoiseSpec;
use affine_qmle::optimize::fit;
use affine_qmle::simulate::simulate;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use config::{FitConfig, SimulateConfig, StationarityConfig};
use error::CliError;

#[derive(Parser)]
#[command(name = "affine-qmle", version, about = "Laplacian and Gaussian QMLE for affine causal time series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON config file.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set sizes=[1000] --set model.family=garch`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output path (stdout when absent).
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate trajectories and write them as one-column CSV.
    Simulate(Common),
    /// Fit a model to a trajectory CSV and write the estimate as JSON.
    Fit {
        #[command(flatten)]
        common: Common,
        /// Trajectory CSV (one value per row, `#` comments allowed).
        #[arg(long)]
        data: PathBuf,
    },
    /// Run a Monte Carlo experiment and write the RMSE table as CSV.
    Experiment {
        #[command(flatten)]
        common: Common,
        /// Worker threads (default: available parallelism).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Render an RMSE CSV as a text grid.
    Table {
        /// RMSE CSV written by `experiment`.
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Test a parameter against the Lipschitz stationarity condition.
    CheckStationarity(Common),
}

#[derive(Serialize)]
struct RunManifest {
    command: String,
    config_digest: String,
    seed: u64,
    tool_version: String,
    wall_time: f64,
}

fn overrides(common: &Common, seed_key: &str) -> Result<Vec<(String, serde_json::Value)>, CliError> {
    let mut out = common
        .set
        .iter()
        .map(|s| config::parse_override(s))
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(seed) = common.seed {
        out.push((seed_key.to_string(), serde_json::Value::from(seed)));
    }
    Ok(out)
}

fn write_output(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| CliError::Io(format!("{}: {e}", p.display()))),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

fn write_manifest(out: &Path, command: &str, digest: String, seed: u64, start: Instant) -> Result<(), CliError> {
    let m = RunManifest {
        command: command.to_string(),
        config_digest: digest,
        seed,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        wall_time: start.elapsed().as_secs_f64(),
    };
    let path = manifest_path(out);
    let text = serde_json::to_string_pretty(&m).expect("manifest serializes");
    fs::write(&path, text + "\n").map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn trajectory_csv(header: &str, data: &[f64]) -> String {
    let mut s = String::with_capacity(data.len() * 20 + header.len() + 8);
    s.push_str("# ");
    s.push_str(header);
    s.push_str("\nx\n");
    for x in data {
        s.push_str(&format!("{x}\n"));
    }
    s
}

fn sized_path(out: &Path, n: usize) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match out.extension() {
        Some(ext) => format!("{stem}_n{n}.{}", ext.to_string_lossy()),
        None => format!("{stem}_n{n}"),
    };
    out.with_file_name(name)
}

fn cmd_simulate(common: &Common, start: Instant) -> Result<(), CliError> {
    let cfg: SimulateConfig = config::load(common.config.as_deref(), &overrides(common, "seed")?)?;
    if cfg.sizes.is_empty() {
        return Err(CliError::Config("sizes: at least one sample size is required".into()));
    }
    if let Some(n) = cfg.sizes.iter().find(|&&n| n == 0) {
        return Err(CliError::Config(format!("sizes: sample size must be positive, got {n}")));
    }
    let spec = cfg.model.build().map_err(|e| CliError::at("model", e))?;
    spec.check_theta(&cfg.theta).map_err(|e| CliError::at("theta", e))?;
    let noise = NoiseSpec::new(cfg.noise);
    let mut stdout_text = String::new();
    for &n in &cfg.sizes {
        let tr = simulate(&spec, &cfg.theta, &noise, n, cfg.seed, cfg.burn_in).map_err(|e| match e {
            affine_qmle::QmleError::Numeric(_) => CliError::from(e),
            other => CliError::at("theta", other),
        })?;
        let header = format!(
            "seed={} model={} noise={} n={} burn_in={} theta={:?}",
            tr.seed, tr.model_tag, tr.noise_tag, tr.n, tr.burn_in, cfg.theta
        );
        let text = trajectory_csv(&header, &tr.data);
        match &common.out {
            Some(out) => {
                let path = if cfg.sizes.len() == 1 { out.clone() } else { sized_path(out, n) };
                write_output(Some(&path), &text)?;
                write_manifest(&path, "simulate", config::digest(&cfg), cfg.seed, start)?;
            }
            None => stdout_text.push_str(&text),
        }
    }
    if common.out.is_none() {
        write_output(None, &stdout_text)?;
    }
    Ok(())
}

fn read_trajectory(path: &Path) -> Result<Vec<f64>, CliError> {
    let file = fs::File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).has_headers(true).from_reader(file);
    let mut data = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = rec.get(0).unwrap_or("").trim();
        let x: f64 = field
            .parse()
            .map_err(|_| CliError::Config(format!("data: row {}: {field:?} is not a number", i + 1)))?;
        data.push(x);
    }
    Ok(data)
}

fn cmd_fit(common: &Common, data_path: &Path, start: Instant) -> Result<(), CliError> {
    let cfg: FitConfig = config::load(common.config.as_deref(), &overrides(common, "optim.seed")?)?;
    let spec = cfg.model.build().map_err(|e| CliError::at("model", e))?;
    cfg.optim.validate().map_err(|e| CliError::at("optim", e))?;
    if !(cfg.level > 0.0 && cfg.level < 1.0) {
        return Err(CliError::Config(format!("level: must lie in (0, 1), got {}", cfg.level)));
    }
    let data = read_trajectory(data_path)?;
    let noise = cfg.noise.map(NoiseSpec::new);
    let contrast = Contrast::of_kind(cfg.contrast, noise.as_ref());
    let mut result = fit(&contrast, &spec, &data, &cfg.optim).map_err(|e| match e {
        affine_qmle::QmleError::Numeric(_) => CliError::from(e),
        other => CliError::at("data", other),
    })?;
    match analyze(&result, &spec, &data, cfg.level) {
        Ok(a) => result.asymptotics = Some(a),
        Err(e) => eprintln!("warning: no sandwich covariance: {e}"),
    }
    if !result.converged {
        eprintln!("warning: optimizer did not converge within the evaluation budget");
    }
    let text = serde_json::to_string_pretty(&result).expect("result serializes") + "\n";
    write_output(common.out.as_deref(), &text)?;
    if let Some(out) = &common.out {
        write_manifest(out, "fit", config::digest(&cfg), cfg.optim.seed, start)?;
    }
    Ok(())
}

fn table_csv(table: &RmseTable) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in &table.rows {
        w.serialize(row)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

fn read_table(path: &Path) -> Result<RmseTable, CliError> {
    let file = fs::File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut rdr = csv::Reader::from_reader(file);
    let rows = rdr.deserialize::<RmseRow>().collect::<Result<Vec<_>, _>>()?;
    Ok(RmseTable { rows })
}

fn cmd_experiment(common: &Common, workers: Option<usize>, start: Instant) -> Result<(), CliError> {
    let cfg: ExperimentConfig = config::load(common.config.as_deref(), &overrides(common, "seed")?)?;
    if workers == Some(0) {
        return Err(CliError::Config("workers: must be at least 1".into()));
    }
    // validation errors carry the offending key as their prefix
    cfg.validate().map_err(|e| match e {
        affine_qmle::QmleError::Input(m) => CliError::Config(m),
        other => CliError::from(other),
    })?;
    let table = run_experiment(&cfg, workers)?;
    for row in table.unreliable_cells() {
        eprintln!(
            "warning: unreliable cell {} {} n={} {} {}: {} of {} replications failed",
            row.model, row.component, row.n, row.noise, row.contrast, row.failures, row.reps
        );
    }
    write_output(common.out.as_deref(), &table_csv(&table)?)?;
    if let Some(out) = &common.out {
        write_manifest(out, "experiment", config::digest(&cfg), cfg.seed, start)?;
    }
    Ok(())
}

fn cmd_table(input: &Path, out: Option<&Path>, start: Instant) -> Result<(), CliError> {
    let table = read_table(input)?;
    write_output(out, &render_table(&table))?;
    if let Some(out) = out {
        let digest = config::digest(&table);
        write_manifest(out, "table", digest, 0, start)?;
    }
    Ok(())
}

fn cmd_check(common: &Common, start: Instant) -> Result<(), CliError> {
    let cfg: StationarityConfig = config::load(common.config.as_deref(), &overrides(common, "seed")?)?;
    let spec = cfg.model.build().map_err(|e| CliError::at("model", e))?;
    let rep = stationarity_check_point(&spec, &cfg.theta, cfg.r, &NoiseSpec::new(cfg.noise)).map_err(|e| {
        let key = if matches!(e, affine_qmle::QmleError::Input(ref m) if m.contains("moment order")) { "r" } else { "theta" };
        CliError::at(key, e)
    })?;
    let line = format!(
        "member={} margin={:.6} r={} lipschitz_f_sum={:.6} lipschitz_m_sum={:.6} moment_norm={:.6} tail_bound={:.3e}\n",
        rep.member, rep.margin, rep.r, rep.lipschitz_f_sum, rep.lipschitz_m_sum, rep.moment_norm, rep.tail_bound
    );
    print!("{line}");
    if let Some(out) = &common.out {
        let text = serde_json::to_string_pretty(&rep).expect("report serializes") + "\n";
        write_output(Some(out), &text)?;
        write_manifest(out, "check-stationarity", config::digest(&cfg), 0, start)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let start = Instant::now();
    match &cli.command {
        Command::Simulate(c) => cmd_simulate(c, start),
        Command::Fit { common, data } => cmd_fit(common, data, start),
        Command::Experiment { common, workers } => cmd_experiment(common, *workers, start),
        Command::Table { input, out } => cmd_table(input, out.as_deref(), start),
        Command::CheckStationarity(c) => cmd_check(c, start),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
