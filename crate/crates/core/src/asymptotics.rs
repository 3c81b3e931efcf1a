//! Γ_F / Γ_M estimation, the sandwich covariance and Wald intervals.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::contrast::{residuals, ContrastKind};
use crate::error::{QmleError, Result};
use crate::models::{filter_series, ModelSpec};
use crate::optimize::EstimateResult;

/// Per-observation gradients of `f̂_θ^t` and `log M̂_θ^t` (rows are t).
#[derive(Debug, Clone)]
pub struct Gradients {
    pub location: Vec<Vec<f64>>,
    pub log_scale: Vec<Vec<f64>>,
    pub scale: Vec<f64>,
    /// Components whose difference had to be one-sided.
    pub boundary: Vec<usize>,
}

/// Central finite differences with `h_i = 1e-5·max(1, |θ_i|)`; one-sided at
/// the faces of the box.
pub fn gradients(spec: &ModelSpec, theta: &[f64], data: &[f64]) -> Result<Gradients> {
    spec.check_theta(theta)?;
    let d = theta.len();
    let n = data.len();
    let base = filter_series(spec, theta, data)?;
    let mut location = vec![vec![0.0; d]; n];
    let mut log_scale = vec![vec![0.0; d]; n];
    let mut boundary = Vec::new();
    let b = &spec.param_box;
    for i in 0..d {
        let h = 1e-5 * theta[i].abs().max(1.0);
        let up_ok = theta[i] + h <= b.upper[i];
        let down_ok = theta[i] - h >= b.lower[i];
        let shifted = |delta: f64| {
            let mut t = theta.to_vec();
            t[i] += delta;
            filter_series(spec, &t, data)
        };
        let (hi, lo, width) = match (up_ok, down_ok) {
            (true, true) => (shifted(h)?, shifted(-h)?, 2.0 * h),
            (true, false) => {
                boundary.push(i);
                (shifted(h)?, base.clone(), h)
            }
            (false, true) => {
                boundary.push(i);
                (base.clone(), shifted(-h)?, h)
            }
            (false, false) => {
                // degenerate box direction: the gradient is not identified
                boundary.push(i);
                continue;
            }
        };
        for t in 0..n {
            location[t][i] = (hi.location[t] - lo.location[t]) / width;
            log_scale[t][i] = (hi.scale[t].ln() - lo.scale[t].ln()) / width;
        }
    }
    Ok(Gradients {
        location,
        log_scale,
        scale: base.scale,
        boundary,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GammaMatrices {
    pub gamma_f: DMatrix<f64>,
    pub gamma_m: DMatrix<f64>,
    pub warnings: Vec<String>,
}

/// Empirical `Γ̂_F = mean(M̂⁻² ∇f̂ ∇f̂ᵀ)` and `Γ̂_M = mean(∇log M̂ ∇log M̂ᵀ)`.
pub fn gamma_matrices(spec: &ModelSpec, theta: &[f64], data: &[f64]) -> Result<GammaMatrices> {
    if data.is_empty() {
        return Err(QmleError::input("data must contain at least one observation"));
    }
    let g = gradients(spec, theta, data)?;
    let d = theta.len();
    let n = data.len() as f64;
    let mut gf = DMatrix::zeros(d, d);
    let mut gm = DMatrix::zeros(d, d);
    for t in 0..data.len() {
        let inv_m2 = 1.0 / (g.scale[t] * g.scale[t]);
        let df = &g.location[t];
        let dl = &g.log_scale[t];
        for i in 0..d {
            for j in 0..=i {
                gf[(i, j)] += inv_m2 * df[i] * df[j];
                gm[(i, j)] += dl[i] * dl[j];
            }
        }
    }
    for i in 0..d {
        for j in 0..=i {
            gf[(i, j)] /= n;
            gm[(i, j)] /= n;
            gf[(j, i)] = gf[(i, j)];
            gm[(j, i)] = gm[(i, j)];
        }
    }
    let names = spec.component_names();
    let warnings = g
        .boundary
        .iter()
        .map(|&i| format!("{} = {} is on the boundary of the parameter box; one-sided differences used", names[i], theta[i]))
        .collect();
    Ok(GammaMatrices {
        gamma_f: gf,
        gamma_m: gm,
        warnings,
    })
}

fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Epanechnikov kernel estimate of the residual density at zero with
/// bandwidth `0.9·min(sd, IQR/1.34)·n^{-1/5}`.
pub fn g0_estimate(residuals: &[f64]) -> Result<f64> {
    let n = residuals.len();
    if n < 100 {
        return Err(QmleError::input(format!(
            "density at zero needs at least 100 residuals, got {n}"
        )));
    }
    if residuals.iter().any(|r| !r.is_finite()) {
        return Err(QmleError::input("residuals contain non-finite values"));
    }
    let nf = n as f64;
    let mean = residuals.iter().sum::<f64>() / nf;
    let sd = (residuals.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (nf - 1.0)).sqrt();
    let mut sorted = residuals.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    if !(spread > 0.0) {
        return Err(QmleError::numeric("residuals have zero spread; density at zero is undefined"));
    }
    let h = 0.9 * spread * nf.powf(-0.2);
    let sum: f64 = residuals
        .iter()
        .map(|r| {
            let u = r / h;
            if u.abs() <= 1.0 {
                0.75 * (1.0 - u * u)
            } else {
                0.0
            }
        })
        .sum();
    let g0 = sum / (nf * h);
    if !(g0 > 0.0) {
        return Err(QmleError::numeric("estimated density at zero is not positive"));
    }
    Ok(g0)
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, x| a.max(x.abs()))
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Inverse of a symmetric matrix, refusing condition numbers ≥ 1e12.
fn invert_symmetric(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let d = m.nrows();
    if d == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(symmetrize(m.clone()));
    let (imin, lmin) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &v)| if v.abs() < acc.1.abs() { (i, v) } else { acc });
    let lmax = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if !(lmin.abs() > 0.0) || lmax / lmin.abs() >= 1e12 {
        let dir: Vec<String> = eig.eigenvectors.column(imin).iter().map(|x| format!("{x:.4}")).collect();
        return Err(QmleError::Singular(format!(
            "{what} is singular (eigenvalue {lmin:e}, condition ≥ 1e12) along direction [{}]",
            dir.join(", ")
        )));
    }
    let inv_diag = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v));
    Ok(symmetrize(&eig.eigenvectors * inv_diag * eig.eigenvectors.transpose()))
}

/// Laplacian-QMLE sandwich
/// `(Γ_M + 2g₀Γ_F)⁻¹ ((σ²−1)Γ_M + Γ_F) (Γ_M + 2g₀Γ_F)⁻¹`.
///
/// When `‖Γ_F‖ < 1e-12` this is evaluated as `(σ²−1)Γ_M⁻¹` directly.
pub fn sandwich(gamma_f: &DMatrix<f64>, gamma_m: &DMatrix<f64>, sigma2: f64, g0: f64) -> Result<DMatrix<f64>> {
    check_square(gamma_f, gamma_m)?;
    if !(g0 > 0.0 && sigma2 > 0.0) {
        return Err(QmleError::input("g0 and sigma² must be positive"));
    }
    if max_abs(gamma_f) < 1e-12 {
        return Ok(invert_symmetric(gamma_m, "Γ_M")? * (sigma2 - 1.0));
    }
    let bread = gamma_m + gamma_f * (2.0 * g0);
    let inv = invert_symmetric(&bread, "bread matrix Γ_M + 2g(0)Γ_F")?;
    let meat = gamma_m * (sigma2 - 1.0) + gamma_f;
    Ok(symmetrize(&inv * meat * &inv))
}

/// Gaussian-QMLE sandwich `J⁻¹ I J⁻¹` with `J = Γ_F/σ² + 2Γ_M` and
/// `I = Γ_F/σ² + (κ − 1)Γ_M`, where κ is the kurtosis of the standardised
/// innovations and σ² their second moment.
pub fn gaussian_sandwich(
    gamma_f: &DMatrix<f64>,
    gamma_m: &DMatrix<f64>,
    sigma2: f64,
    kurtosis: f64,
) -> Result<DMatrix<f64>> {
    check_square(gamma_f, gamma_m)?;
    if !(sigma2 > 0.0) {
        return Err(QmleError::input("sigma² must be positive"));
    }
    let gf = gamma_f / sigma2;
    let j = &gf + gamma_m * 2.0;
    let inv = invert_symmetric(&j, "Gaussian information matrix Γ_F/σ² + 2Γ_M")?;
    let i = &gf + gamma_m * (kurtosis - 1.0);
    Ok(symmetrize(&inv * i * &inv))
}

fn check_square(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<()> {
    if !a.is_square() || a.shape() != b.shape() {
        return Err(QmleError::input("Γ_F and Γ_M must be square matrices of equal size"));
    }
    Ok(())
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(p)
}

/// Wald intervals `θ̂_i ± z·√(cov_ii / n)`. Negative diagonals are clamped to
/// zero and reported in the returned warnings.
pub fn wald_intervals(
    theta_hat: &[f64],
    covariance: &DMatrix<f64>,
    n: usize,
    level: f64,
) -> Result<(Vec<[f64; 2]>, Vec<String>)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(QmleError::input(format!("confidence level must lie in (0, 1), got {level}")));
    }
    if n == 0 {
        return Err(QmleError::input("sample size must be positive"));
    }
    if covariance.nrows() != theta_hat.len() || !covariance.is_square() {
        return Err(QmleError::input("covariance dimension does not match θ̂"));
    }
    let z = normal_quantile(0.5 * (1.0 + level));
    let mut warnings = Vec::new();
    let intervals = theta_hat
        .iter()
        .enumerate()
        .map(|(i, &th)| {
            let mut v = covariance[(i, i)];
            if v < 0.0 {
                warnings.push(format!("negative variance {v:e} for component {i} clamped to 0"));
                v = 0.0;
            }
            let half = z * (v / n as f64).sqrt();
            [th - half, th + half]
        })
        .collect();
    Ok((intervals, warnings))
}

/// Serializable asymptotic summary attached to a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Asymptotics {
    pub gamma_f: Vec<Vec<f64>>,
    pub gamma_m: Vec<Vec<f64>>,
    pub g0_hat: f64,
    pub sigma2_hat: f64,
    pub covariance: Vec<Vec<f64>>,
    pub level: f64,
    pub intervals: Vec<[f64; 2]>,
    pub warnings: Vec<String>,
    pub residuals: Vec<f64>,
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

pub fn from_rows(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let d = rows.len();
    DMatrix::from_fn(d, d, |i, j| rows[i][j])
}

/// Residual diagnostics, Γ̂ matrices, sandwich and Wald intervals for a fit.
pub fn analyze(result: &EstimateResult, spec: &ModelSpec, data: &[f64], level: f64) -> Result<Asymptotics> {
    let theta = &result.theta_hat.values;
    let resid = residuals(spec, theta, data)?;
    let n = resid.len() as f64;
    let sigma2 = resid.iter().map(|r| r * r).sum::<f64>() / n;
    let g0 = g0_estimate(&resid)?;
    let gm = gamma_matrices(spec, theta, data)?;
    let mut warnings = gm.warnings.clone();
    let cov = match result.contrast {
        ContrastKind::LaplacianQl => sandwich(&gm.gamma_f, &gm.gamma_m, sigma2, g0)?,
        ContrastKind::GaussianQl => {
            let m4 = resid.iter().map(|r| r.powi(4)).sum::<f64>() / n;
            gaussian_sandwich(&gm.gamma_f, &gm.gamma_m, sigma2, m4 / (sigma2 * sigma2))?
        }
    };
    let (intervals, w) = wald_intervals(theta, &cov, data.len(), level)?;
    warnings.extend(w);
    Ok(Asymptotics {
        gamma_f: to_rows(&gm.gamma_f),
        gamma_m: to_rows(&gm.gamma_m),
        g0_hat: g0,
        sigma2_hat: sigma2,
        covariance: to_rows(&cov),
        level,
        intervals,
        warnings,
        residuals: resid,
    })
}

/// Confidence intervals from the asymptotics attached to `result`.
pub fn confidence_intervals(result: &EstimateResult, level: f64) -> Result<Vec<[f64; 2]>> {
    let a = result
        .asymptotics
        .as_ref()
        .ok_or_else(|| QmleError::input("fit has no sandwich covariance attached"))?;
    Ok(wald_intervals(&result.theta_hat.values, &from_rows(&a.covariance), result.n_obs, level)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ArmaScale, Family, Orders};
    use crate::noise::{NoiseLaw, NoiseSpec};
    use crate::simulate::simulate;

    /// Acklam's rational approximation of the normal quantile.
    fn acklam(p: f64) -> f64 {
        let a = [-3.969683028665376e1, 2.209460984245205e2, -2.759285104469687e2, 1.383577518672690e2, -3.066479806614716e1, 2.506628277459239];
        let b = [-5.447609879822406e1, 1.615858368580409e2, -1.556989798598866e2, 6.680131188771972e1, -1.328068155288572e1];
        let c = [-7.784894002430293e-3, -3.223964580411365e-1, -2.400758277161838, -2.549732539343734, 4.374664141464968, 2.938163982698783];
        let d = [7.784695709041462e-3, 3.224671290700398e-1, 2.445134137142996, 3.754408661907416];
        let pl = 0.02425;
        if p < pl {
            let q = (-2.0 * p.ln()).sqrt();
            (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5])
                / ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)
        } else if p <= 1.0 - pl {
            let q = p - 0.5;
            let r = q * q;
            (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q
                / (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0)
        } else {
            -acklam(1.0 - p)
        }
    }

    #[test]
    fn quantile_matches_rational_approximation() {
        for p in [0.6, 0.9, 0.975, 0.995, 0.01] {
            assert!((normal_quantile(p) - acklam(p)).abs() < 1e-8, "{p}");
        }
    }

    #[test]
    fn scalar_sandwich() {
        let v = sandwich(&DMatrix::from_element(1, 1, 1.0), &DMatrix::from_element(1, 1, 2.0), 2.0, 0.5).unwrap();
        assert!((v[(0, 0)] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn pure_scale_sandwich_is_exact() {
        let gm = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let v = sandwich(&DMatrix::zeros(2, 2), &gm, 2.0, 0.5).unwrap();
        let want = gm.clone().try_inverse().unwrap();
        assert!((v - want).abs().max() < 1e-12);
    }

    #[test]
    fn pure_location_sandwich() {
        let gf = DMatrix::from_row_slice(2, 2, &[1.5, 0.2, 0.2, 0.8]);
        let v = sandwich(&gf, &DMatrix::zeros(2, 2), 2.0, 0.5).unwrap();
        let want = gf.clone().try_inverse().unwrap() / (4.0 * 0.25);
        assert!((v - want).abs().max() < 1e-12);
    }

    #[test]
    fn singular_bread_names_direction() {
        let gf = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let err = sandwich(&gf, &DMatrix::zeros(2, 2), 2.0, 0.5).unwrap_err();
        match err {
            QmleError::Singular(m) => assert!(m.contains("direction")),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn wald_interval_arithmetic() {
        let cov = DMatrix::from_element(1, 1, 1.0 / 3.0);
        let (ci, _) = wald_intervals(&[0.4], &cov, 1200, 0.95).unwrap();
        let half = acklam(0.975) * (1.0f64 / 3600.0).sqrt();
        assert!((ci[0][0] - (0.4 - half)).abs() < 1e-8);
        assert!((ci[0][1] - 0.4 - 0.03267).abs() < 1e-5);
        let (deg, _) = wald_intervals(&[0.7], &DMatrix::zeros(1, 1), 10, 0.95).unwrap();
        assert_eq!(deg[0], [0.7, 0.7]);
        let (_, w) = wald_intervals(&[0.7], &DMatrix::from_element(1, 1, -1e-14), 10, 0.95).unwrap();
        assert_eq!(w.len(), 1);
    }

    #[test]
    fn volatility_models_have_zero_gamma_f() {
        let s = ModelSpec::new(Family::Garch, Orders::new(0, 0, 1, 1), ArmaScale::Estimated).unwrap();
        let th = [0.2, 0.4, 0.2];
        let tr = simulate(&s, &th, &NoiseSpec::new(NoiseLaw::Laplace), 500, 3, 100).unwrap();
        let g = gamma_matrices(&s, &th, &tr.data).unwrap();
        assert!(g.gamma_f.iter().all(|x| *x == 0.0));
        assert!(g.gamma_m[(0, 0)] > 0.0);
    }

    #[test]
    fn constant_scale_gamma_m() {
        let s = ModelSpec::new(Family::Arma, Orders::arma(0, 0), ArmaScale::Estimated).unwrap();
        let data = NoiseSpec::new(NoiseLaw::Gaussian).sample(1, 50);
        let g = gamma_matrices(&s, &[1.7], &data).unwrap();
        assert!((g.gamma_m[(0, 0)] - 1.0 / (1.7 * 1.7)).abs() < 1e-8);
    }

    #[test]
    fn arma11_gradients_match_analytic_recursion() {
        let s = ModelSpec::new(Family::Arma, Orders::arma(1, 1), ArmaScale::Fixed(1.0)).unwrap();
        let (a, b) = (0.4, -0.6);
        let tr = simulate(&s, &[a, b], &NoiseSpec::new(NoiseLaw::Laplace), 2000, 8, 100).unwrap();
        let g = gradients(&s, &[a, b], &tr.data).unwrap();
        // f_t = a X_{t-1} − b ε_{t-1}, ε = X − f
        let (mut f, mut da, mut db, mut xprev, mut eprev) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (t, &x) in tr.data.iter().enumerate() {
            let (nda, ndb) = (xprev + b * da, -eprev + b * db);
            da = nda;
            db = ndb;
            f = a * xprev - b * eprev;
            let scale = 1.0f64.max(da.abs());
            assert!((g.location[t][0] - da).abs() / scale < 1e-6, "t={t}");
            let scale = 1.0f64.max(db.abs());
            assert!((g.location[t][1] - db).abs() / scale < 1e-6, "t={t}");
            xprev = x;
            eprev = x - f;
        }
        let _ = f;
    }

    #[test]
    fn g0_of_laplace_sample() {
        let z = NoiseSpec::new(NoiseLaw::Laplace).sample(4, 200_000);
        let g = g0_estimate(&z).unwrap();
        assert!((g - 0.5).abs() < 0.05 * 0.5, "{g}");
        assert!(g0_estimate(&[0.0; 200]).is_err());
        assert!(g0_estimate(&[0.1; 20]).is_err());
    }
}
