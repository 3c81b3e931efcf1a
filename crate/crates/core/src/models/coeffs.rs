//! Power-series coefficients and Lipschitz coefficient sequences.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{ModelSpec, ParamBox, VolatilityKind};
use crate::error::{QmleError, Result};

/// Roots closer than this to the unit circle count as being on it.
const UNIT_ROOT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CoeffKind {
    Psi,
    BPlus,
    BMinus,
    LipschitzF,
    LipschitzM,
}

/// Coefficients indexed from lag 1: `values[j - 1]` is the lag-`j` term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoeffSequence {
    pub kind: CoeffKind,
    pub values: Vec<f64>,
}

impl CoeffSequence {
    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn abs_sum(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum()
    }

    /// Extrapolated contribution of lags beyond the stored ones.
    ///
    /// Geometric extrapolation when the last coefficients decay at a ratio
    /// below one, power-law extrapolation otherwise; infinite when neither
    /// tail is summable.
    pub fn tail_bound(&self) -> f64 {
        let v: Vec<f64> = self.values.iter().map(|x| x.abs()).collect();
        let n = v.len();
        if n == 0 || v[n - 1] == 0.0 {
            return 0.0;
        }
        let last = v[n - 1];
        let window = n.min(6);
        let mut ratio: f64 = 0.0;
        for k in n - window + 1..n {
            if v[k - 1] > 0.0 {
                ratio = ratio.max(v[k] / v[k - 1]);
            }
        }
        if ratio < 0.99 {
            return last * ratio / (1.0 - ratio);
        }
        let half = n / 2;
        if half == 0 || v[half - 1] <= 0.0 {
            return f64::INFINITY;
        }
        let decay = -(last / v[half - 1]).ln() / (n as f64 / half as f64).ln();
        if decay > 1.0 {
            last * n as f64 / (decay - 1.0)
        } else {
            f64::INFINITY
        }
    }
}

/// True when `1 − Σ c_i x^i` has no root in the closed unit disk.
pub fn polynomial_is_stable(coeffs: &[f64]) -> bool {
    let k = coeffs
        .iter()
        .rposition(|c| *c != 0.0)
        .map_or(0, |i| i + 1);
    if k == 0 {
        return true;
    }
    // Roots of 1 − Σ c_i x^i are the reciprocals of the companion eigenvalues.
    let mut companion = DMatrix::<f64>::zeros(k, k);
    for (j, c) in coeffs[..k].iter().enumerate() {
        companion[(0, j)] = *c;
    }
    for i in 1..k {
        companion[(i, i - 1)] = 1.0;
    }
    companion
        .complex_eigenvalues()
        .iter()
        .all(|z| z.norm() < 1.0 - UNIT_ROOT_TOL)
}

/// First `lags` coefficients of `P(x)/Q(x) = 1 + Σ ψ_j x^j` with
/// `P = 1 − Σ a_i x^i` and `Q = 1 − Σ b_i x^i`.
pub fn arma_psi(a: &[f64], b: &[f64], lags: usize) -> Result<CoeffSequence> {
    if !polynomial_is_stable(b) {
        return Err(QmleError::Stationarity(format!(
            "MA polynomial with coefficients {b:?} has a root in the closed unit disk"
        )));
    }
    Ok(CoeffSequence {
        kind: CoeffKind::Psi,
        values: psi_unchecked(a, b, lags),
    })
}

fn psi_unchecked(a: &[f64], b: &[f64], lags: usize) -> Vec<f64> {
    // Q·Ψ = P  ⇒  ψ_j = −a_j + Σ_k b_k ψ_{j−k},  ψ_0 = 1.
    let mut psi = vec![0.0; lags + 1];
    psi[0] = 1.0;
    for j in 1..=lags {
        let mut v = if j <= a.len() { -a[j - 1] } else { 0.0 };
        for (k, bk) in b.iter().enumerate() {
            let lag = k + 1;
            if lag <= j {
                v += bk * psi[j - lag];
            }
        }
        psi[j] = v;
    }
    psi.remove(0);
    psi
}

/// `b₀` and the sequences `b_i^±` of the ARCH(∞) form of
/// `σ^δ = ω + Σ α_i (|ε| − γ_i ε)^δ + Σ β_j σ^δ_{t−j}`.
#[derive(Debug, Clone, PartialEq)]
pub struct AparchCoefficients {
    pub b0: f64,
    pub plus: CoeffSequence,
    pub minus: CoeffSequence,
}

pub fn aparch_coefficients(
    delta: f64,
    omega: f64,
    alpha: &[f64],
    gamma: &[f64],
    beta: &[f64],
    lags: usize,
) -> Result<AparchCoefficients> {
    let sum_beta: f64 = beta.iter().sum();
    if sum_beta >= 1.0 {
        return Err(QmleError::Stationarity(format!(
            "sum of beta coefficients is {sum_beta}, must be < 1"
        )));
    }
    if alpha.len() != gamma.len() {
        return Err(QmleError::input("alpha and gamma must have the same length"));
    }
    let (plus, minus) = aparch_sequences(delta, alpha, gamma, beta, lags);
    Ok(AparchCoefficients {
        b0: omega / (1.0 - sum_beta),
        plus: CoeffSequence {
            kind: CoeffKind::BPlus,
            values: plus,
        },
        minus: CoeffSequence {
            kind: CoeffKind::BMinus,
            values: minus,
        },
    })
}

fn aparch_sequences(
    delta: f64,
    alpha: &[f64],
    gamma: &[f64],
    beta: &[f64],
    lags: usize,
) -> (Vec<f64>, Vec<f64>) {
    let mut plus = vec![0.0; lags + 1];
    let mut minus = vec![0.0; lags + 1];
    for i in 1..=lags {
        let (mut bp, mut bm) = if i <= alpha.len() {
            let (a, g) = (alpha[i - 1], gamma[i - 1]);
            (a * (1.0 - g).powf(delta), a * (1.0 + g).powf(delta))
        } else {
            (0.0, 0.0)
        };
        for (k, be) in beta.iter().enumerate() {
            let lag = k + 1;
            if lag < i {
                bp += be * plus[i - lag];
                bm += be * minus[i - lag];
            }
        }
        plus[i] = bp;
        minus[i] = bm;
    }
    plus.remove(0);
    minus.remove(0);
    (plus, minus)
}

/// Volatility-part expansion coefficients `b_j` of `σ^δ_t = b₀ + Σ b_j^± |ε_{t−j}^±|^δ`
/// at a single θ, together with δ.
pub(crate) fn volatility_expansion(spec: &ModelSpec, theta: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    let p = spec.decode(theta);
    let lags = spec.truncation_lag;
    match spec.family.volatility() {
        VolatilityKind::Constant => (2.0, vec![0.0; lags], vec![0.0; lags]),
        VolatilityKind::Arch | VolatilityKind::Garch => {
            let zeros = vec![0.0; p.alpha.len()];
            let (plus, _) = aparch_sequences(2.0, p.alpha, &zeros, p.beta, lags);
            (2.0, plus.clone(), plus)
        }
        VolatilityKind::Aparch => {
            let (plus, minus) = aparch_sequences(p.delta, p.alpha, p.gamma, p.beta, lags);
            (p.delta, plus, minus)
        }
        VolatilityKind::ArchInf => {
            let c: Vec<f64> = (1..=lags)
                .map(|j| p.arch_scale * (j as f64).powf(-p.arch_decay))
                .collect();
            (2.0, c.clone(), c)
        }
    }
}

fn corners(lower: &[f64], upper: &[f64], idx: &[usize]) -> Vec<Vec<f64>> {
    let free: Vec<usize> = idx
        .iter()
        .copied()
        .filter(|&i| upper[i] > lower[i])
        .collect();
    assert!(free.len() <= 20, "too many free volatility components for corner enumeration");
    (0..1usize << free.len())
        .map(|mask| {
            let mut theta = lower.to_vec();
            for (bit, &i) in free.iter().enumerate() {
                if mask >> bit & 1 == 1 {
                    theta[i] = upper[i];
                }
            }
            theta
        })
        .collect()
}

/// sup over the region of `α_j(M^ε)`, the Lipschitz coefficients of the
/// volatility map with respect to past innovations.
fn volatility_lipschitz(spec: &ModelSpec, region: &ParamBox) -> Vec<f64> {
    let lags = spec.truncation_lag;
    let l = spec.layout();
    let (lo, hi) = (&region.lower, &region.upper);
    match spec.family.volatility() {
        VolatilityKind::Constant => vec![0.0; lags],
        VolatilityKind::Arch => {
            let mut v = vec![0.0; lags];
            for (k, i) in l.alpha.clone().enumerate().take(lags) {
                v[k] = hi[i].sqrt();
            }
            v
        }
        VolatilityKind::ArchInf => {
            let s = hi[l.arch_scale.expect("archinf layout")];
            let d = lo[l.arch_decay.expect("archinf layout")];
            (1..=lags).map(|j| (s * (j as f64).powf(-d)).sqrt()).collect()
        }
        VolatilityKind::Garch | VolatilityKind::Aparch => {
            // b_j^{1/δ} is monotone in each of α, β, |γ| and δ, so the sup
            // over the box is attained at a corner.
            let mut idx: Vec<usize> = l.alpha.clone().chain(l.gamma.clone()).chain(l.beta.clone()).collect();
            idx.extend(l.delta);
            let mut sup = vec![0.0f64; lags];
            for theta in corners(lo, hi, &idx) {
                let (delta, plus, minus) = volatility_expansion(spec, &theta);
                for (s, (bp, bm)) in sup.iter_mut().zip(plus.iter().zip(&minus)) {
                    *s = s.max(bp.max(*bm).max(0.0).powf(1.0 / delta));
                }
            }
            sup
        }
    }
}

/// sup over the ARMA sub-box of `|ψ_j|`, evaluated on a grid that includes the corners.
fn psi_sup(spec: &ModelSpec, region: &ParamBox) -> Result<Vec<f64>> {
    let lags = spec.truncation_lag;
    let l = spec.layout();
    let idx: Vec<usize> = l.a.clone().chain(l.b.clone()).collect();
    let free: Vec<usize> = idx
        .iter()
        .copied()
        .filter(|&i| region.upper[i] > region.lower[i])
        .collect();
    let per_dim = if free.is_empty() {
        1
    } else {
        ((2000f64).powf(1.0 / free.len() as f64).floor() as usize).clamp(2, 21)
    };
    let total = per_dim.pow(free.len() as u32);
    let mut sup = vec![0.0f64; lags];
    let mut theta = region.lower.clone();
    for cell in 0..total {
        let mut rem = cell;
        for &i in &free {
            let k = rem % per_dim;
            rem /= per_dim;
            let frac = k as f64 / (per_dim - 1) as f64;
            theta[i] = region.lower[i] + frac * (region.upper[i] - region.lower[i]);
        }
        let a = &theta[l.a.clone()];
        let b = &theta[l.b.clone()];
        let psi = arma_psi(a, b, lags)?;
        for (s, v) in sup.iter_mut().zip(&psi.values) {
            *s = s.max(v.abs());
        }
    }
    Ok(sup)
}

/// Upper bounds of `α_j^{(0)}(f, Θ)` and `α_j^{(0)}(M, Θ)` for `j = 1..J` over `region`.
pub fn lipschitz_coefficients(
    spec: &ModelSpec,
    region: &ParamBox,
) -> Result<(CoeffSequence, CoeffSequence)> {
    if region.dim() != spec.dim() {
        return Err(QmleError::input(format!(
            "region has {} components, model needs {}",
            region.dim(),
            spec.dim()
        )));
    }
    spec.check_constraints(&region.lower)
        .and_then(|_| spec.check_constraints(&region.upper))?;
    let lags = spec.truncation_lag;
    let vol = volatility_lipschitz(spec, region);
    let (lf, lm) = if spec.family.has_arma() {
        let psi = psi_sup(spec, region)?;
        // ε_{t−k} = Σ_i ψ_i X̃_{t−k−i} with ψ_0 = 1
        let psi_at = |i: usize| if i == 0 { 1.0 } else { psi[i - 1] };
        let lm: Vec<f64> = (1..=lags)
            .map(|j| (1..=j).map(|k| vol[k - 1] * psi_at(j - k)).sum())
            .collect();
        (psi, lm)
    } else {
        (vec![0.0; lags], vol)
    };
    Ok((
        CoeffSequence {
            kind: CoeffKind::LipschitzF,
            values: lf,
        },
        CoeffSequence {
            kind: CoeffKind::LipschitzM,
            values: lm,
        },
    ))
}
