//! Laplacian and Gaussian quasi-log-likelihoods on the truncated filter.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{QmleError, Result};
use crate::models::{filter_series, Filter, ModelSpec};
use crate::noise::NoiseSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ContrastKind {
    #[serde(rename = "LQL")]
    LaplacianQl,
    #[serde(rename = "GQL")]
    GaussianQl,
}

impl ContrastKind {
    pub fn label(self) -> &'static str {
        match self {
            ContrastKind::LaplacianQl => "LQL",
            ContrastKind::GaussianQl => "GQL",
        }
    }
}

impl fmt::Display for ContrastKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ContrastKind {
    type Err = QmleError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lql" | "laplacian" | "laplace" => Ok(ContrastKind::LaplacianQl),
            "gql" | "gaussian" | "gauss" => Ok(ContrastKind::GaussianQl),
            _ => Err(QmleError::input(format!("unknown contrast {s:?} (expected LQL or GQL)"))),
        }
    }
}

/// A contrast together with the Gaussian scale calibration.
///
/// For [`ContrastKind::GaussianQl`] the scale entering the Gaussian density is
/// `M′ = calibration · M`. With innovations normalised to `E|ζ| = 1`, the
/// calibration `σ_ζ` makes `X_t = M′ ζ′` with `Var ζ′ = 1`, so the Gaussian
/// fit targets the same θ as the Laplacian one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Contrast {
    pub kind: ContrastKind,
    pub calibration: f64,
    /// Adds the `−½ log 2π` per-observation constant to the Gaussian value.
    pub normalizing_constant: bool,
}

impl Contrast {
    pub fn laplacian() -> Self {
        Contrast {
            kind: ContrastKind::LaplacianQl,
            calibration: 1.0,
            normalizing_constant: false,
        }
    }

    pub fn gaussian() -> Self {
        Contrast {
            kind: ContrastKind::GaussianQl,
            calibration: 1.0,
            normalizing_constant: false,
        }
    }

    /// Gaussian contrast calibrated to the innovation law: `M′ = (σ_ζ / E|ζ|)·M`.
    pub fn gaussian_for(noise: &NoiseSpec) -> Self {
        Contrast {
            calibration: noise.variance().sqrt(),
            ..Contrast::gaussian()
        }
    }

    pub fn of_kind(kind: ContrastKind, noise: Option<&NoiseSpec>) -> Self {
        match (kind, noise) {
            (ContrastKind::LaplacianQl, _) => Contrast::laplacian(),
            (ContrastKind::GaussianQl, Some(n)) => Contrast::gaussian_for(n),
            (ContrastKind::GaussianQl, None) => Contrast::gaussian(),
        }
    }

    pub fn with_normalizing_constant(mut self, on: bool) -> Self {
        self.normalizing_constant = on;
        self
    }

    /// Per-observation term `−q̂_t` given the residual and the model scale.
    #[inline]
    fn term(&self, resid: f64, m: f64) -> f64 {
        match self.kind {
            ContrastKind::LaplacianQl => -(m.ln() + resid.abs() / m),
            ContrastKind::GaussianQl => {
                let mc = self.calibration * m;
                let z = resid / mc;
                let base = -0.5 * (2.0 * mc.ln() + z * z);
                if self.normalizing_constant {
                    base - 0.5 * (2.0 * PI).ln()
                } else {
                    base
                }
            }
        }
    }
}

fn check_data(data: &[f64]) -> Result<()> {
    if data.is_empty() {
        return Err(QmleError::input("data must contain at least one observation"));
    }
    if let Some(i) = data.iter().position(|x| !x.is_finite()) {
        return Err(QmleError::input(format!(
            "observation {} is not finite ({})",
            i + 1,
            data[i]
        )));
    }
    Ok(())
}

/// The truncated quasi-log-likelihood `L̂_n(θ)`.
///
/// Returns `−∞` when the residual recursion diverges (possible only for
/// non-invertible MA parts inside a user-supplied box).
pub fn quasi_loglik(contrast: &Contrast, spec: &ModelSpec, theta: &[f64], data: &[f64]) -> Result<f64> {
    check_data(data)?;
    spec.check_theta(theta)?;
    if !(contrast.calibration > 0.0 && contrast.calibration.is_finite()) {
        return Err(QmleError::input("Gaussian calibration must be positive"));
    }
    let floor = spec.scale_floor * (1.0 - 1e-12);
    let mut filter = Filter::new(spec, theta)?.with_capacity(data.len());
    let mut total = 0.0;
    for (t, &x) in data.iter().enumerate() {
        let (f, m) = filter.next_pair();
        if m < floor {
            return Err(QmleError::numeric(format!(
                "conditional scale {m} fell below the floor {} at t = {} (θ = {theta:?})",
                spec.scale_floor,
                t + 1
            )));
        }
        let term = contrast.term(x - f, m);
        if term.is_nan() {
            return Err(QmleError::numeric(format!(
                "contrast term is NaN at t = {} (θ = {theta:?})",
                t + 1
            )));
        }
        if term == f64::NEG_INFINITY || !f.is_finite() {
            return Ok(f64::NEG_INFINITY);
        }
        total += term;
        filter.observe(x);
    }
    Ok(total)
}

/// Standardised residuals `ζ̂_t = (X_t − f̂_t) / M̂_t`.
pub fn residuals(spec: &ModelSpec, theta: &[f64], data: &[f64]) -> Result<Vec<f64>> {
    check_data(data)?;
    spec.check_theta(theta)?;
    let series = filter_series(spec, theta, data)?;
    Ok(data
        .iter()
        .zip(series.location.iter().zip(&series.scale))
        .map(|(x, (f, m))| (x - f) / m)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ArmaScale, Family, Orders};

    fn constant_scale() -> ModelSpec {
        ModelSpec::new(Family::Arma, Orders::arma(0, 0), ArmaScale::Estimated).unwrap()
    }

    #[test]
    fn laplacian_constant_model_closed_form() {
        let data = [0.5, -1.5, 2.0, -0.25];
        let s = constant_scale();
        let sigma = 1.3;
        let v = quasi_loglik(&Contrast::laplacian(), &s, &[sigma], &data).unwrap();
        let abs_sum: f64 = data.iter().map(|x: &f64| x.abs()).sum();
        let want = -(data.len() as f64) * sigma.ln() - abs_sum / sigma;
        assert!((v - want).abs() < 1e-12);
    }

    #[test]
    fn gaussian_constant_model_closed_form() {
        let data = [0.5, -1.5, 2.0, -0.25];
        let s = constant_scale();
        let sigma = 0.8;
        let v = quasi_loglik(&Contrast::gaussian(), &s, &[sigma], &data).unwrap();
        let sq: f64 = data.iter().map(|x| x * x).sum();
        let want = -0.5 * (4.0 * (sigma * sigma).ln() + sq / (sigma * sigma));
        assert!((v - want).abs() < 1e-12);
        let with_const = quasi_loglik(
            &Contrast::gaussian().with_normalizing_constant(true),
            &s,
            &[sigma],
            &data,
        )
        .unwrap();
        assert!((with_const - v + 2.0 * (2.0 * PI).ln()).abs() < 1e-12);
    }

    #[test]
    fn residuals_of_identity_model() {
        let s = ModelSpec::new(Family::Arma, Orders::arma(0, 0), ArmaScale::Fixed(1.0)).unwrap();
        let data = vec![0.3, -2.0, 1.25];
        assert_eq!(residuals(&s, &[], &data).unwrap(), data);
    }

    #[test]
    fn rejects_nan_and_empty_data() {
        let s = constant_scale();
        assert!(matches!(
            quasi_loglik(&Contrast::laplacian(), &s, &[1.0], &[1.0, f64::NAN]),
            Err(QmleError::Input(_))
        ));
        assert!(quasi_loglik(&Contrast::laplacian(), &s, &[1.0], &[]).is_err());
    }

    #[test]
    fn location_equivariance_of_intercept_free_shift() {
        // ARMA(0,0) with estimated scale: shifting the data by c and the
        // location by c is the same as leaving both alone.
        let s = constant_scale();
        let data = [0.1, -0.7, 1.9, 0.4];
        let shifted: Vec<f64> = data.iter().map(|x| x + 3.0).collect();
        let a = quasi_loglik(&Contrast::laplacian(), &s, &[0.9], &data).unwrap();
        let series = filter_series(&s, &[0.9], &shifted).unwrap();
        let b: f64 = shifted
            .iter()
            .zip(series.location.iter().zip(&series.scale))
            .map(|(x, (f, m))| -(m.ln() + (x - 3.0 - f).abs() / m))
            .sum();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn contrast_names_parse() {
        assert_eq!("LQL".parse::<ContrastKind>().unwrap(), ContrastKind::LaplacianQl);
        assert_eq!("gaussian".parse::<ContrastKind>().unwrap(), ContrastKind::GaussianQl);
        assert!("median".parse::<ContrastKind>().is_err());
    }
}
