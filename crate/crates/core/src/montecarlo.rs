//! Replicated simulate-then-fit experiments and RMSE tables.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contrast::{Contrast, ContrastKind};
use crate::error::{QmleError, Result};
use crate::models::{simulation_gate, ArmaScale, Family, ModelSpec, Orders, ParamBox, ParamVector};
use crate::noise::{NoiseLaw, NoiseSpec};
use crate::optimize::{fit, OptimConfig};
use crate::simulate::{simulate_stream, DEFAULT_BURN_IN};

/// Serializable description of a model and its parameter box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub family: Family,
    #[serde(default)]
    pub orders: Orders,
    /// Known scale of a pure ARMA model; estimated when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation_lag: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<Vec<f64>>,
}

impl ModelConfig {
    pub fn new(family: Family, orders: Orders) -> Self {
        ModelConfig {
            family,
            orders,
            fixed_scale: None,
            truncation_lag: None,
            lower: None,
            upper: None,
        }
    }

    pub fn build(&self) -> Result<ModelSpec> {
        let scale = match self.fixed_scale {
            Some(s) => ArmaScale::Fixed(s),
            None => ArmaScale::Estimated,
        };
        let param_box = match (&self.lower, &self.upper) {
            (Some(l), Some(u)) => Some(ParamBox::new(l.clone(), u.clone())?),
            (None, None) => None,
            _ => return Err(QmleError::input("lower and upper must be given together")),
        };
        let spec = ModelSpec::with_box(self.family, self.orders, scale, param_box)?;
        match self.truncation_lag {
            Some(lag) => spec.with_truncation_lag(lag),
            None => Ok(spec),
        }
    }
}

/// A labelled model with its true parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkModel {
    pub label: &'static str,
    pub model: ModelConfig,
    pub theta0: Vec<f64>,
}

/// The five simulation designs: ARMA(1,1), ARCH(1), GARCH(1,1),
/// ARMA(1,1)-GARCH(1,1) and ARMA(1,1)-APARCH(1,1). The moving-average sign
/// follows `Q(L) = 1 − b₁L`, so an MA coefficient of 0.6 is `b₁ = −0.6`.
pub fn benchmark_models() -> Vec<BenchmarkModel> {
    let arma = ModelConfig {
        fixed_scale: Some(1.0),
        ..ModelConfig::new(Family::Arma, Orders::arma(1, 1))
    };
    vec![
        BenchmarkModel {
            label: "ARMA(1,1)",
            model: arma,
            theta0: vec![0.4, -0.6],
        },
        BenchmarkModel {
            label: "ARCH(1)",
            model: ModelConfig::new(Family::Arch, Orders::new(0, 0, 1, 0)),
            theta0: vec![0.4, 0.2],
        },
        BenchmarkModel {
            label: "GARCH(1,1)",
            model: ModelConfig::new(Family::Garch, Orders::new(0, 0, 1, 1)),
            theta0: vec![0.2, 0.4, 0.2],
        },
        BenchmarkModel {
            label: "ARMA(1,1)-GARCH(1,1)",
            model: ModelConfig::new(Family::ArmaGarch, Orders::new(1, 1, 1, 1)),
            theta0: vec![0.2, 0.4, 0.1, 0.4, -0.6],
        },
        BenchmarkModel {
            label: "ARMA(1,1)-APARCH(1,1)",
            model: ModelConfig::new(Family::ArmaAparch, Orders::new(1, 1, 1, 1)),
            theta0: vec![1.2, 0.2, 0.4, 0.5, 0.1, 0.4, -0.6],
        },
    ]
}

fn default_contrasts() -> Vec<ContrastKind> {
    vec![ContrastKind::GaussianQl, ContrastKind::LaplacianQl]
}

fn default_burn_in() -> usize {
    DEFAULT_BURN_IN
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Row label in the table; defaults to the family name.
    #[serde(default)]
    pub label: Option<String>,
    pub model: ModelConfig,
    pub theta0: Vec<f64>,
    pub noises: Vec<NoiseLaw>,
    pub sizes: Vec<usize>,
    pub replications: usize,
    #[serde(default = "default_contrasts")]
    pub contrasts: Vec<ContrastKind>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub optim: OptimConfig,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
}

impl ExperimentConfig {
    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.model.family.to_string())
    }

    /// Validates the config. Error messages start with the offending key.
    pub fn validate(&self) -> Result<ModelSpec> {
        let key = |k: &str, e: QmleError| QmleError::input(format!("{k}: {e}"));
        let spec = self.model.build().map_err(|e| key("model", e))?;
        if self.replications == 0 {
            return Err(QmleError::input("replications: must be at least 1"));
        }
        if self.sizes.is_empty() {
            return Err(QmleError::input("sizes: at least one sample size is required"));
        }
        if self.sizes.iter().any(|&n| n == 0) {
            return Err(QmleError::input("sizes: sample sizes must be positive"));
        }
        if self.sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(QmleError::input("sizes: must be strictly increasing"));
        }
        if self.noises.is_empty() {
            return Err(QmleError::input("noises: at least one noise law is required"));
        }
        if self.contrasts.is_empty() {
            return Err(QmleError::input("contrasts: at least one contrast is required"));
        }
        self.optim.validate().map_err(|e| key("optim", e))?;
        spec.check_theta(&self.theta0).map_err(|e| key("theta0", e))?;
        for law in &self.noises {
            simulation_gate(&spec, &self.theta0, &NoiseSpec::new(*law)).map_err(|e| key("theta0", e))?;
        }
        Ok(spec)
    }
}

/// Estimates of one replication: one entry per contrast, `None` on failure.
#[derive(Debug, Clone, PartialEq)]
pub struct Replication {
    pub noise: NoiseLaw,
    pub n: usize,
    pub rep: usize,
    pub estimates: Vec<Option<Vec<f64>>>,
}

/// Stream index of a replication: independent of every other cell and of
/// the order in which replications run.
pub fn replication_stream(noise: NoiseLaw, size_index: usize, rep: usize) -> u64 {
    let law = NoiseLaw::ALL.iter().position(|l| *l == noise).unwrap_or(0) as u64;
    (law << 56) | ((size_index as u64) << 40) | rep as u64
}

fn pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        if w == 0 {
            return Err(QmleError::input("workers must be at least 1"));
        }
        b = b.num_threads(w);
    }
    b.build().map_err(|e| QmleError::numeric(format!("cannot start worker pool: {e}")))
}

/// Runs every replication and returns the raw estimates in a fixed order
/// (noise, size, replication).
pub fn run_replications(config: &ExperimentConfig, workers: Option<usize>) -> Result<Vec<Replication>> {
    let spec = config.validate()?;
    let mut tasks = Vec::new();
    for &noise in &config.noises {
        for (si, &n) in config.sizes.iter().enumerate() {
            for rep in 0..config.replications {
                tasks.push((noise, si, n, rep));
            }
        }
    }
    let run_one = |&(noise, si, n, rep): &(NoiseLaw, usize, usize, usize)| {
        let law = NoiseSpec::new(noise);
        let stream = replication_stream(noise, si, rep);
        let estimates = match simulate_stream(&spec, &config.theta0, &law, n, config.seed, stream, config.burn_in) {
            Ok(path) => config
                .contrasts
                .iter()
                .map(|&kind| {
                    let contrast = Contrast::of_kind(kind, Some(&law));
                    match fit(&contrast, &spec, &path.data, &config.optim) {
                        Ok(r) if r.converged => Some(r.theta_hat.values),
                        _ => None,
                    }
                })
                .collect(),
            Err(_) => vec![None; config.contrasts.len()],
        };
        Replication { noise, n, rep, estimates }
    };
    let pool = pool(workers)?;
    Ok(pool.install(|| tasks.par_iter().map(run_one).collect()))
}

/// Componentwise root-mean-square error around `theta0`.
pub fn rmse(estimates: &[ParamVector], theta0: &[f64]) -> Result<Vec<f64>> {
    if estimates.is_empty() {
        return Err(QmleError::input("rmse needs at least one estimate"));
    }
    let rows: Vec<&[f64]> = estimates.iter().map(|p| p.values.as_slice()).collect();
    rmse_values(&rows, theta0)
}

fn rmse_values(rows: &[&[f64]], theta0: &[f64]) -> Result<Vec<f64>> {
    if rows.is_empty() {
        return Err(QmleError::input("rmse needs at least one estimate"));
    }
    if let Some(r) = rows.iter().find(|r| r.len() != theta0.len()) {
        return Err(QmleError::input(format!(
            "estimate has {} components, θ₀ has {}",
            r.len(),
            theta0.len()
        )));
    }
    let k = rows.len() as f64;
    Ok((0..theta0.len())
        .map(|i| (rows.iter().map(|r| (r[i] - theta0[i]).powi(2)).sum::<f64>() / k).sqrt())
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmseRow {
    pub model: String,
    pub component: String,
    pub n: usize,
    pub noise: NoiseLaw,
    pub contrast: ContrastKind,
    /// NaN when every replication of the cell failed.
    pub rmse: f64,
    pub reps: usize,
    pub failures: usize,
}

impl RmseRow {
    /// More than 20% of the replications failed.
    pub fn unreliable(&self) -> bool {
        self.failures * 5 > self.reps
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RmseTable {
    pub rows: Vec<RmseRow>,
}

impl RmseTable {
    pub fn get(&self, component: &str, n: usize, noise: NoiseLaw, contrast: ContrastKind) -> Option<&RmseRow> {
        self.rows
            .iter()
            .find(|r| r.component == component && r.n == n && r.noise == noise && r.contrast == contrast)
    }

    pub fn unreliable_cells(&self) -> impl Iterator<Item = &RmseRow> {
        self.rows.iter().filter(|r| r.unreliable())
    }
}

/// Aggregates replications into RMSE rows ordered by
/// (component, n, noise, contrast) in config order.
pub fn aggregate(config: &ExperimentConfig, spec: &ModelSpec, reps: &[Replication]) -> Result<RmseTable> {
    let names = spec.component_names();
    let label = config.label();
    let mut rows = Vec::new();
    for (ci, name) in names.iter().enumerate() {
        for &n in &config.sizes {
            for &noise in &config.noises {
                for (ki, &kind) in config.contrasts.iter().enumerate() {
                    // summed in replication order so the result is bit-identical
                    // however the replications were collected
                    let mut cell: Vec<&Replication> = reps.iter().filter(|r| r.n == n && r.noise == noise).collect();
                    cell.sort_by_key(|r| r.rep);
                    let ok: Vec<&[f64]> = cell.iter().filter_map(|r| r.estimates[ki].as_deref()).collect();
                    let value = if ok.is_empty() { f64::NAN } else { rmse_values(&ok, &config.theta0)?[ci] };
                    rows.push(RmseRow {
                        model: label.clone(),
                        component: name.clone(),
                        n,
                        noise,
                        contrast: kind,
                        rmse: value,
                        reps: cell.len(),
                        failures: cell.len() - ok.len(),
                    });
                }
            }
        }
    }
    Ok(RmseTable { rows })
}

pub fn run_experiment(config: &ExperimentConfig, workers: Option<usize>) -> Result<RmseTable> {
    let spec = config.validate()?;
    let reps = run_replications(config, workers)?;
    aggregate(config, &spec, &reps)
}

fn unique_in_order<T: Clone + PartialEq>(items: impl Iterator<Item = T>) -> Vec<T> {
    let mut out: Vec<T> = Vec::new();
    for x in items {
        if !out.contains(&x) {
            out.push(x);
        }
    }
    out
}

/// Renders a grid: one block per model, rows (component, n), columns
/// (noise, contrast). Unreliable cells are marked with `*`.
pub fn render_table(table: &RmseTable) -> String {
    let mut out = String::new();
    let models = unique_in_order(table.rows.iter().map(|r| r.model.clone()));
    for model in models {
        let rows: Vec<&RmseRow> = table.rows.iter().filter(|r| r.model == model).collect();
        let columns: Vec<(NoiseLaw, ContrastKind)> = unique_in_order(rows.iter().map(|r| (r.noise, r.contrast)));
        let keys = unique_in_order(rows.iter().map(|r| (r.component.clone(), r.n)));
        let comp_width = keys.iter().map(|k| k.0.len()).max().unwrap_or(0).max(9);
        let _ = writeln!(out, "{model}");
        let _ = write!(out, "{:<comp_width$} {:>6}", "component", "n");
        for (noise, kind) in &columns {
            let _ = write!(out, " {:>14}", format!("{noise}/{kind}"));
        }
        out.push('\n');
        let mut seen_components = BTreeSet::new();
        for (component, n) in &keys {
            let shown = if seen_components.insert(component.clone()) { component.as_str() } else { "" };
            let _ = write!(out, "{shown:<comp_width$} {n:>6}");
            for (noise, kind) in &columns {
                let cell = rows
                    .iter()
                    .find(|r| &r.component == component && r.n == *n && r.noise == *noise && r.contrast == *kind);
                let text = match cell {
                    None => "-".to_string(),
                    Some(r) if r.rmse.is_nan() => format!("NA{}", if r.unreliable() { "*" } else { "" }),
                    Some(r) => format!("{:.3}{}", r.rmse, if r.unreliable() { "*" } else { "" }),
                };
                let _ = write!(out, " {text:>14}");
            }
            out.push('\n');
        }
        out.push('\n');
    }
    if table.rows.iter().any(|r| r.unreliable()) {
        out.push_str("* more than 20% of the replications failed in this cell\n");
    }
    out
}
