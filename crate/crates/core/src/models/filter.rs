//! Truncated conditional location/scale `(f̂_θ^t, M̂_θ^t)`.
//!
//! Pre-sample observations and innovations are zero. Volatility states
//! before `t = 1` are set to `b₀ = ω / (1 − Σβ)`, which is exactly the value
//! of the ARCH(∞) expansion evaluated on an all-zero past.

use super::{ModelSpec, VolatilityKind};
use crate::error::{QmleError, Result};

#[derive(Debug, Clone)]
pub struct Filter {
    kind: VolatilityKind,
    a: Vec<f64>,
    b: Vec<f64>,
    omega: f64,
    inv_delta: f64,
    delta: f64,
    alpha: Vec<f64>,
    alpha_pos: Vec<f64>,
    alpha_neg: Vec<f64>,
    beta: Vec<f64>,
    arch_inf: Vec<f64>,
    sigma: f64,
    b0: f64,
    x: Vec<f64>,
    eps: Vec<f64>,
    vol: Vec<f64>,
    pending: Option<(f64, f64)>,
}

impl Filter {
    /// Starts a filter at `t = 1`. θ must satisfy the family constraints
    /// (box membership is not required).
    pub fn new(spec: &ModelSpec, theta: &[f64]) -> Result<Self> {
        spec.check_constraints(theta)?;
        Ok(Self::new_unchecked(spec, theta))
    }

    pub(crate) fn new_unchecked(spec: &ModelSpec, theta: &[f64]) -> Self {
        let p = spec.decode(theta);
        let kind = spec.family.volatility();
        let delta = p.delta;
        let (alpha_pos, alpha_neg) = match kind {
            VolatilityKind::Aparch => p
                .alpha
                .iter()
                .zip(p.gamma)
                .map(|(a, g)| (a * (1.0 - g).powf(delta), a * (1.0 + g).powf(delta)))
                .unzip(),
            _ => (Vec::new(), Vec::new()),
        };
        let arch_inf = if kind == VolatilityKind::ArchInf {
            (1..=spec.truncation_lag)
                .map(|j| p.arch_scale * (j as f64).powf(-p.arch_decay))
                .collect()
        } else {
            Vec::new()
        };
        let b0 = p.omega / (1.0 - p.beta.iter().sum::<f64>());
        Filter {
            kind,
            a: p.a.to_vec(),
            b: p.b.to_vec(),
            omega: p.omega,
            inv_delta: 1.0 / delta,
            delta,
            alpha: p.alpha.to_vec(),
            alpha_pos,
            alpha_neg,
            beta: p.beta.to_vec(),
            arch_inf,
            sigma: p.sigma,
            b0,
            x: Vec::new(),
            eps: Vec::new(),
            vol: Vec::new(),
            pending: None,
        }
    }

    pub fn with_capacity(mut self, n: usize) -> Self {
        self.x.reserve(n);
        self.eps.reserve(n);
        self.vol.reserve(n);
        self
    }

    /// Number of observations consumed so far.
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// `(f̂, M̂)` for the next time index.
    pub fn next_pair(&mut self) -> (f64, f64) {
        let t = self.x.len();
        let mut f = 0.0;
        for (i, a) in self.a.iter().enumerate() {
            if t > i {
                f += a * self.x[t - 1 - i];
            }
        }
        for (j, b) in self.b.iter().enumerate() {
            if t > j {
                f -= b * self.eps[t - 1 - j];
            }
        }
        let lagged_vol = |vol: &[f64], j: usize| if t > j { vol[t - 1 - j] } else { self.b0 };
        let (state, m) = match self.kind {
            VolatilityKind::Constant => (self.sigma, self.sigma),
            VolatilityKind::Arch | VolatilityKind::Garch => {
                let mut s2 = self.omega;
                for (i, al) in self.alpha.iter().enumerate() {
                    if t > i {
                        let e = self.eps[t - 1 - i];
                        s2 += al * e * e;
                    }
                }
                for (j, be) in self.beta.iter().enumerate() {
                    s2 += be * lagged_vol(&self.vol, j);
                }
                (s2, s2.sqrt())
            }
            VolatilityKind::Aparch => {
                let mut sd = self.omega;
                for i in 0..self.alpha_pos.len() {
                    if t > i {
                        let e = self.eps[t - 1 - i];
                        if e > 0.0 {
                            sd += self.alpha_pos[i] * e.powf(self.delta);
                        } else if e < 0.0 {
                            sd += self.alpha_neg[i] * (-e).powf(self.delta);
                        }
                    }
                }
                for (j, be) in self.beta.iter().enumerate() {
                    sd += be * lagged_vol(&self.vol, j);
                }
                (sd, sd.powf(self.inv_delta))
            }
            VolatilityKind::ArchInf => {
                let mut s2 = self.omega;
                for (i, c) in self.arch_inf.iter().enumerate().take(t) {
                    let e = self.eps[t - 1 - i];
                    s2 += c * e * e;
                }
                (s2, s2.sqrt())
            }
        };
        self.pending = Some((f, state));
        (f, m)
    }

    /// Feeds the observation matching the last [`Filter::next_pair`] call.
    pub fn observe(&mut self, x: f64) {
        let (f, state) = self
            .pending
            .take()
            .expect("observe must follow next_pair");
        self.x.push(x);
        self.eps.push(x - f);
        self.vol.push(state);
    }

    /// Innovations `ε̂_t = X_t − f̂_t` seen so far.
    pub fn innovations(&self) -> &[f64] {
        &self.eps
    }
}

/// Per-time conditional locations and scales over a full sample.
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredSeries {
    pub location: Vec<f64>,
    pub scale: Vec<f64>,
}

/// Runs the filter over `data`, returning `(f̂_t, M̂_t)` for `t = 1..n`.
pub fn filter_series(spec: &ModelSpec, theta: &[f64], data: &[f64]) -> Result<FilteredSeries> {
    spec.check_constraints(theta)?;
    Ok(filter_series_unchecked(spec, theta, data))
}

pub(crate) fn filter_series_unchecked(spec: &ModelSpec, theta: &[f64], data: &[f64]) -> FilteredSeries {
    let mut filter = Filter::new_unchecked(spec, theta).with_capacity(data.len());
    let mut location = Vec::with_capacity(data.len());
    let mut scale = Vec::with_capacity(data.len());
    for &x in data {
        let (f, m) = filter.next_pair();
        location.push(f);
        scale.push(m);
        filter.observe(x);
    }
    FilteredSeries { location, scale }
}

/// `(f̂_θ^t, M̂_θ^t)` computed from `history = X_1..X_{t−1}` (1-based `t`).
pub fn conditional_pair(
    spec: &ModelSpec,
    theta: &[f64],
    history: &[f64],
    t: usize,
) -> Result<(f64, f64)> {
    spec.check_theta(theta)?;
    if t == 0 || t - 1 > history.len() {
        return Err(QmleError::input(format!(
            "time index {t} out of range for a history of length {}",
            history.len()
        )));
    }
    let mut filter = Filter::new_unchecked(spec, theta);
    for &x in &history[..t - 1] {
        filter.next_pair();
        filter.observe(x);
    }
    Ok(filter.next_pair())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ArmaScale, Family, Orders};

    fn arch1() -> ModelSpec {
        ModelSpec::new(Family::Arch, Orders::new(0, 0, 1, 0), ArmaScale::Estimated).unwrap()
    }

    #[test]
    fn arch_substitution() {
        let (f, m) = conditional_pair(&arch1(), &[0.4, 0.2], &[1.0], 2).unwrap();
        assert_eq!(f, 0.0);
        assert!((m - 0.6f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn arma_first_step_is_zero() {
        let s = ModelSpec::new(Family::Arma, Orders::arma(1, 1), ArmaScale::Fixed(1.0)).unwrap();
        let (f, m) = conditional_pair(&s, &[0.4, -0.6], &[], 1).unwrap();
        assert_eq!((f, m), (0.0, 1.0));
    }

    #[test]
    fn arma_mean_recursion() {
        // X_t = 0.4 X_{t-1} + ε_t + 0.6 ε_{t-1}
        let s = ModelSpec::new(Family::Arma, Orders::arma(1, 1), ArmaScale::Fixed(1.0)).unwrap();
        let data = [1.0, 2.0, -0.5];
        let series = filter_series(&s, &[0.4, -0.6], &data).unwrap();
        // ε1 = 1, f2 = 0.4·1 + 0.6·1 = 1.0, ε2 = 1, f3 = 0.8 + 0.6 = 1.4
        assert_eq!(series.location[0], 0.0);
        assert!((series.location[1] - 1.0).abs() < 1e-15);
        assert!((series.location[2] - 1.4).abs() < 1e-15);
    }

    #[test]
    fn garch_constant_history_fixed_point() {
        let s = ModelSpec::new(Family::Garch, Orders::new(0, 0, 1, 1), ArmaScale::Estimated).unwrap();
        let hist = vec![1.0; 100];
        let (_, m) = conditional_pair(&s, &[0.2, 0.4, 0.2], &hist, 101).unwrap();
        assert!((m * m - 0.75).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_time_index() {
        let s = arch1();
        assert!(matches!(
            conditional_pair(&s, &[0.4, 0.2], &[1.0], 3),
            Err(QmleError::Input(_))
        ));
        assert!(conditional_pair(&s, &[0.4, 0.2], &[1.0], 0).is_err());
        assert!(matches!(
            conditional_pair(&s, &[0.4, 5.0], &[1.0], 1),
            Err(QmleError::Constraint(_))
        ));
    }

    #[test]
    fn scale_never_below_floor() {
        let s = ModelSpec::new(Family::ArmaAparch, Orders::new(1, 1, 1, 1), ArmaScale::Fixed(1.0))
            .unwrap();
        let theta = [1.0, 0.01, 0.0, 0.0, 0.0, 0.9, -0.9];
        let data: Vec<f64> = (0..200).map(|i| ((i * 37 % 11) as f64 - 5.0) * 0.3).collect();
        let series = filter_series(&s, &theta, &data).unwrap();
        assert!(series.scale.iter().all(|m| *m >= s.scale_floor));
    }
}
