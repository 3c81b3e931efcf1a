//! Box-constrained Nelder–Mead maximisation of the quasi-log-likelihood with
//! deterministic multi-start.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::asymptotics::Asymptotics;
use crate::contrast::{quasi_loglik, Contrast, ContrastKind};
use crate::error::{QmleError, Result};
use crate::models::{ModelSpec, ParamBox, ParamVector};
use crate::noise::stream_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimConfig {
    pub n_starts: usize,
    /// Evaluation budget per start; `None` means `20000·d`.
    pub max_evals: Option<usize>,
    /// Relative spread of contrast values across the simplex at convergence.
    pub simplex_tol: f64,
    /// Simplex diameter (max-norm) at convergence.
    pub param_tol: f64,
    pub seed: u64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            n_starts: 5,
            max_evals: None,
            simplex_tol: 1e-10,
            param_tol: 1e-6,
            seed: 0,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_starts == 0 {
            return Err(QmleError::input("n_starts must be at least 1"));
        }
        if self.max_evals == Some(0) {
            return Err(QmleError::input("max_evals must be positive"));
        }
        if !(self.simplex_tol > 0.0) {
            return Err(QmleError::input("simplex_tol must be positive"));
        }
        if !(self.param_tol > 0.0) {
            return Err(QmleError::input("param_tol must be positive"));
        }
        Ok(())
    }

    pub fn budget(&self, dim: usize) -> usize {
        self.max_evals.unwrap_or(20_000 * dim.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub contrast: ContrastKind,
    pub theta_hat: ParamVector,
    pub contrast_value: f64,
    pub n_evals: usize,
    pub converged: bool,
    pub start_index: usize,
    pub n_obs: usize,
    /// Contrast value at each start's initial point.
    pub initial_values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub asymptotics: Option<Asymptotics>,
}

/// Initial points: the box centre, then Cranley–Patterson rotated Halton points.
pub fn start_points(b: &ParamBox, n_starts: usize, seed: u64) -> Vec<Vec<f64>> {
    let d = b.dim();
    let mut rng = stream_rng(seed, u64::MAX);
    let shift: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
    let mut points = vec![b.center()];
    for k in 1..n_starts {
        let p = (0..d)
            .map(|i| {
                let u = (radical_inverse(k as u64, PRIMES[i % PRIMES.len()]) + shift[i]).fract();
                // keep starts off the faces
                let u = 0.05 + 0.9 * u;
                b.lower[i] + u * b.width(i)
            })
            .collect();
        points.push(p);
    }
    points
}

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn radical_inverse(mut k: u64, base: u64) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut acc = 0.0;
    while k > 0 {
        acc += (k % base) as f64 * inv;
        k /= base;
        inv /= base as f64;
    }
    acc
}

/// Maximises `contrast` over the spec's box.
pub fn fit(contrast: &Contrast, spec: &ModelSpec, data: &[f64], config: &OptimConfig) -> Result<EstimateResult> {
    config.validate()?;
    let d = spec.dim();
    if data.len() < 10 * d.max(1) {
        return Err(QmleError::input(format!(
            "need at least {} observations to fit {} parameters, got {}",
            10 * d.max(1),
            d,
            data.len()
        )));
    }
    if d == 0 {
        let value = quasi_loglik(contrast, spec, &[], data)?;
        return Ok(EstimateResult {
            contrast: contrast.kind,
            theta_hat: spec.param_vector(Vec::new())?,
            contrast_value: value,
            n_evals: 1,
            converged: true,
            start_index: 0,
            n_obs: data.len(),
            initial_values: vec![value],
            asymptotics: None,
        });
    }
    let objective = |theta: &[f64]| quasi_loglik(contrast, spec, theta, data);
    let budget = config.budget(d);
    let mut best: Option<(usize, LocalRun)> = None;
    let mut n_evals = 0;
    let mut initial_values = Vec::with_capacity(config.n_starts);
    for (k, start) in start_points(&spec.param_box, config.n_starts, config.seed)
        .into_iter()
        .enumerate()
    {
        let run = maximize_from(&objective, start, &spec.param_box, config, budget)?;
        n_evals += run.evals;
        initial_values.push(run.initial_value);
        let better = match &best {
            None => true,
            Some((_, b)) => run.value > b.value,
        };
        if better {
            best = Some((k, run));
        }
    }
    let (start_index, run) = best.expect("at least one start");
    if !run.value.is_finite() {
        return Err(QmleError::numeric(format!(
            "contrast is -inf at every start for {} (best θ = {:?})",
            spec.family, run.x
        )));
    }
    Ok(EstimateResult {
        contrast: contrast.kind,
        theta_hat: spec.param_vector(run.x)?,
        contrast_value: run.value,
        n_evals,
        converged: run.converged,
        start_index,
        n_obs: data.len(),
        initial_values,
        asymptotics: None,
    })
}

#[derive(Debug, Clone)]
struct LocalRun {
    x: Vec<f64>,
    value: f64,
    initial_value: f64,
    evals: usize,
    converged: bool,
}

const MAX_RESTARTS: usize = 8;

/// Nelder–Mead from `start`, restarted from the incumbent until a restart
/// no longer moves it.
fn maximize_from<F>(objective: &F, start: Vec<f64>, b: &ParamBox, cfg: &OptimConfig, budget: usize) -> Result<LocalRun>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let evals = std::cell::Cell::new(0usize);
    let mut eval = |x: &[f64]| -> Result<f64> {
        evals.set(evals.get() + 1);
        let v = objective(x)?;
        if v.is_nan() {
            return Err(QmleError::numeric(format!("contrast is NaN at θ = {x:?}")));
        }
        // minimise the negated contrast; -inf (divergent filter) becomes +inf
        Ok(-v)
    };
    let mut x = start;
    b.project(&mut x);
    let mut fx = eval(&x)?;
    let initial_value = -fx;
    let mut converged = false;
    let mut remaining = budget.saturating_sub(1);
    for restart in 0..MAX_RESTARTS {
        let step_scale = if restart == 0 { 0.1 } else { 0.02 };
        let before = evals.get();
        let (nx, nf, ok) = nelder_mead(&mut eval, &x, fx, b, cfg, step_scale, remaining)?;
        remaining = remaining.saturating_sub(evals.get() - before);
        let moved = max_dist(&nx, &x);
        let gain = fx - nf;
        x = nx;
        fx = nf;
        if !ok {
            converged = false;
            break;
        }
        converged = true;
        if restart > 0 && gain <= cfg.simplex_tol * fx.abs().max(1.0) && moved <= cfg.param_tol {
            break;
        }
        if remaining == 0 {
            break;
        }
    }
    Ok(LocalRun {
        x,
        value: -fx,
        initial_value,
        evals: evals.get(),
        converged,
    })
}

fn max_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// One Nelder–Mead run with adaptive coefficients; infeasible trial points
/// are clamped onto the box. Returns `(x, f(x), converged)`.
fn nelder_mead<E>(
    eval: &mut E,
    x0: &[f64],
    f0: f64,
    b: &ParamBox,
    cfg: &OptimConfig,
    step_scale: f64,
    budget: usize,
) -> Result<(Vec<f64>, f64, bool)>
where
    E: FnMut(&[f64]) -> Result<f64>,
{
    let d = x0.len();
    let dn = d as f64;
    let (alpha, gamma, rho, sigma) = if d <= 2 {
        (1.0, 2.0, 0.5, 0.5)
    } else {
        (1.0, 1.0 + 2.0 / dn, 0.75 - 1.0 / (2.0 * dn), 1.0 - 1.0 / dn)
    };
    let mut used = 0usize;
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(d + 1);
    simplex.push((x0.to_vec(), f0));
    for i in 0..d {
        let mut v = x0.to_vec();
        let w = b.width(i);
        let h = step_scale * if w > 0.0 { w } else { 1.0 };
        v[i] = if v[i] + h <= b.upper[i] { v[i] + h } else { v[i] - h };
        b.project(&mut v);
        let f = eval(&v)?;
        used += 1;
        simplex.push((v, f));
    }
    let project = |mut v: Vec<f64>| {
        b.project(&mut v);
        v
    };
    loop {
        simplex.sort_by(|p, q| p.1.total_cmp(&q.1));
        let fbest = simplex[0].1;
        let fworst = simplex[d].1;
        let diameter = simplex[1..]
            .iter()
            .map(|(v, _)| max_dist(v, &simplex[0].0))
            .fold(0.0, f64::max);
        let spread = fworst - fbest;
        let flat = spread <= cfg.simplex_tol * fbest.abs().max(1.0);
        if (flat && diameter <= cfg.param_tol) || diameter <= 1e-14 {
            let best = simplex.swap_remove(0);
            return Ok((best.0, best.1, true));
        }
        if used >= budget {
            let best = simplex.swap_remove(0);
            return Ok((best.0, best.1, false));
        }
        let mut centroid = vec![0.0; d];
        for (v, _) in &simplex[..d] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / dn;
            }
        }
        let along = |t: f64, worst: &[f64]| -> Vec<f64> {
            centroid.iter().zip(worst).map(|(c, w)| c + t * (c - w)).collect()
        };
        let worst = simplex[d].0.clone();
        let xr = project(along(alpha, &worst));
        let fr = eval(&xr)?;
        used += 1;
        if fr < fbest {
            let xe = project(along(alpha * gamma, &worst));
            let fe = eval(&xe)?;
            used += 1;
            simplex[d] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[d - 1].1 {
            simplex[d] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < fworst {
            let xc = project(along(alpha * rho, &worst));
            let fc = eval(&xc)?;
            (xc, fc)
        } else {
            let xc = project(along(-rho, &worst));
            let fc = eval(&xc)?;
            (xc, fc)
        };
        used += 1;
        if fc < fr.min(fworst) {
            simplex[d] = (xc, fc);
            continue;
        }
        let best = simplex[0].0.clone();
        for (v, f) in simplex.iter_mut().skip(1) {
            let shrunk: Vec<f64> = best.iter().zip(v.iter()).map(|(bb, x)| bb + sigma * (x - bb)).collect();
            *f = eval(&shrunk)?;
            *v = shrunk;
            used += 1;
        }
    }
}
