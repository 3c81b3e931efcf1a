//! Membership tests for the stationarity region `Θ(r)` and the weaker gate
//! used before simulating.

use serde::{Deserialize, Serialize};

use super::coeffs::{lipschitz_coefficients, polynomial_is_stable};
use super::{ModelSpec, ParamBox, VolatilityKind};
use crate::error::{QmleError, Result};
use crate::noise::NoiseSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationarityReport {
    pub r: f64,
    pub member: bool,
    /// `1 − [Σ α_j(f) + (E|ζ|^r)^{1/r} Σ α_j(M)]`, sums truncated at the model's lag.
    pub margin: f64,
    pub lipschitz_f_sum: f64,
    pub lipschitz_m_sum: f64,
    pub moment_norm: f64,
    /// Bound on what the lags beyond the truncation could subtract from the margin.
    pub tail_bound: f64,
}

/// Lipschitz-sum test of `Θ(r)` over a region (a point is a degenerate box).
pub fn stationarity_check(
    spec: &ModelSpec,
    region: &ParamBox,
    r: f64,
    noise: &NoiseSpec,
) -> Result<StationarityReport> {
    if !(r >= 1.0) {
        return Err(QmleError::input(format!("moment order r must be >= 1, got {r}")));
    }
    let (lf, lm) = lipschitz_coefficients(spec, region)?;
    let f_sum = lf.sum();
    let m_sum = lm.sum();
    let norm = noise.moment_norm(r);
    let scaled_m = if m_sum == 0.0 { 0.0 } else { norm * m_sum };
    let margin = 1.0 - (f_sum + scaled_m);
    let m_tail = lm.tail_bound();
    let tail_bound = lf.tail_bound() + if m_tail == 0.0 { 0.0 } else { norm * m_tail };
    Ok(StationarityReport {
        r,
        member: margin > 0.0,
        margin,
        lipschitz_f_sum: f_sum,
        lipschitz_m_sum: m_sum,
        moment_norm: norm,
        tail_bound,
    })
}

pub fn stationarity_check_point(
    spec: &ModelSpec,
    theta: &[f64],
    r: f64,
    noise: &NoiseSpec,
) -> Result<StationarityReport> {
    spec.check_constraints(theta)?;
    stationarity_check(spec, &ParamBox::point(theta), r, noise)
}

/// Lags used for the fractional-moment sums of GARCH-type recursions.
const GATE_LAGS: usize = 2000;

/// Sufficient condition for a strictly stationary causal solution, used to
/// refuse simulating divergent recursions.
///
/// The ARMA part must be causal and invertible. The volatility part must
/// contract in a fractional moment: for some `s ∈ (0, 1]`,
/// `E|ζ|^{δs} Σ_j ((b_j⁺)^s + (b_j⁻)^s) / 2 < 1`. Every member of `Θ(1)`
/// passes (take `s = 1/δ`).
pub fn simulation_gate(spec: &ModelSpec, theta: &[f64], noise: &NoiseSpec) -> Result<()> {
    spec.check_constraints(theta)?;
    let p = spec.decode(theta);
    if !polynomial_is_stable(p.a) {
        return Err(QmleError::Stationarity(format!(
            "AR polynomial with coefficients {:?} is not causal",
            p.a
        )));
    }
    if !polynomial_is_stable(p.b) {
        return Err(QmleError::Stationarity(format!(
            "MA polynomial with coefficients {:?} is not invertible",
            p.b
        )));
    }
    let kind = spec.family.volatility();
    if kind == VolatilityKind::Constant {
        return Ok(());
    }
    let expansion_spec;
    let spec_for_expansion = if kind == VolatilityKind::ArchInf {
        spec
    } else {
        expansion_spec = spec.clone().with_truncation_lag(spec.truncation_lag.max(GATE_LAGS))?;
        &expansion_spec
    };
    let (delta, plus, minus) = super::coeffs::volatility_expansion(spec_for_expansion, theta);
    let mut best = f64::INFINITY;
    for k in 1..=20 {
        let s = k as f64 / 20.0;
        let moment = noise.abs_moment(delta * s);
        if !moment.is_finite() {
            continue;
        }
        let sum: f64 = plus
            .iter()
            .zip(&minus)
            .map(|(bp, bm)| 0.5 * (bp.max(0.0).powf(s) + bm.max(0.0).powf(s)))
            .sum();
        let value = moment * sum;
        best = best.min(value);
        if value < 1.0 {
            return Ok(());
        }
    }
    Err(QmleError::Stationarity(format!(
        "volatility recursion does not contract under {} noise (smallest fractional-moment sum {best:.4})",
        noise.law
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ArmaScale, Family, Orders};
    use crate::noise::NoiseLaw;
    use std::f64::consts::PI;

    #[test]
    fn arch1_margin_under_gaussian_noise() {
        let s = ModelSpec::new(Family::Arch, Orders::new(0, 0, 1, 0), ArmaScale::Estimated).unwrap();
        let rep = stationarity_check_point(&s, &[0.4, 0.2], 2.0, &NoiseSpec::new(NoiseLaw::Gaussian))
            .unwrap();
        let want = 1.0 - (PI / 2.0).sqrt() * 0.2f64.sqrt();
        assert!((rep.margin - want).abs() < 1e-12);
        assert!(rep.member);
        assert!((rep.margin - 0.4395).abs() < 1e-4);
    }

    #[test]
    fn ar1_boundaries() {
        let s = ModelSpec::new(Family::Arma, Orders::arma(1, 0), ArmaScale::Fixed(1.0)).unwrap();
        let lap = NoiseSpec::new(NoiseLaw::Laplace);
        let white = stationarity_check_point(&s, &[0.0], 1.0, &lap).unwrap();
        assert_eq!(white.margin, 1.0);
        assert!(white.member);
        let unit = stationarity_check_point(&s, &[1.0], 1.0, &lap).unwrap();
        assert_eq!(unit.margin, 0.0);
        assert!(!unit.member);
    }

    #[test]
    fn r_below_one_is_rejected() {
        let s = ModelSpec::new(Family::Arma, Orders::arma(1, 0), ArmaScale::Fixed(1.0)).unwrap();
        let err = stationarity_check_point(&s, &[0.1], 0.5, &NoiseSpec::new(NoiseLaw::Laplace));
        assert!(matches!(err, Err(QmleError::Input(_))));
    }

    #[test]
    fn gate_accepts_garch_with_unit_second_moment_boundary() {
        // α₁σ² + β = 1 under Laplace noise: no variance, yet strictly stationary.
        let s = ModelSpec::new(Family::Garch, Orders::new(0, 0, 1, 1), ArmaScale::Estimated).unwrap();
        simulation_gate(&s, &[0.2, 0.4, 0.2], &NoiseSpec::new(NoiseLaw::Laplace)).unwrap();
    }

    #[test]
    fn gate_rejects_explosive_models() {
        let s = ModelSpec::new(Family::Arch, Orders::new(0, 0, 1, 0), ArmaScale::Estimated).unwrap();
        let err = simulation_gate(&s, &[0.4, 2.0], &NoiseSpec::new(NoiseLaw::Uniform));
        assert!(matches!(err, Err(QmleError::Stationarity(_))));
        let arma = ModelSpec::new(Family::Arma, Orders::arma(1, 0), ArmaScale::Fixed(1.0)).unwrap();
        assert!(simulation_gate(&arma, &[1.0], &NoiseSpec::new(NoiseLaw::Gaussian)).is_err());
    }
}
