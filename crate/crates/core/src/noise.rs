//! Symmetric innovation laws rescaled to unit mean absolute value.
//!
//! Every law is stored in its "raw" standard form `Z` together with the
//! constant `c = E|Z|`; the innovation used everywhere else is `ζ = Z / c`,
//! so `E|ζ| = 1` holds by construction.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::gamma::gamma;

use crate::error::{QmleError, Result};

const MIX_OUTER_WEIGHT: f64 = 0.05;
const MIX_CENTER_WEIGHT: f64 = 0.90;
const MIX_OUTER_MEAN: f64 = 2.0;
const MIX_OUTER_SD: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseLaw {
    Laplace,
    Gaussian,
    Uniform,
    #[serde(rename = "student3")]
    StudentT3,
    #[serde(rename = "gaussmix")]
    GaussMix,
}

impl NoiseLaw {
    pub const ALL: [NoiseLaw; 5] = [
        NoiseLaw::Laplace,
        NoiseLaw::Gaussian,
        NoiseLaw::StudentT3,
        NoiseLaw::Uniform,
        NoiseLaw::GaussMix,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NoiseLaw::Laplace => "laplace",
            NoiseLaw::Gaussian => "gaussian",
            NoiseLaw::Uniform => "uniform",
            NoiseLaw::StudentT3 => "student3",
            NoiseLaw::GaussMix => "gaussmix",
        }
    }
}

impl fmt::Display for NoiseLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NoiseLaw {
    type Err = QmleError;

    fn from_str(s: &str) -> Result<Self> {
        NoiseLaw::ALL
            .into_iter()
            .find(|law| law.name() == s)
            .ok_or_else(|| {
                QmleError::input(format!(
                    "unknown noise law {s:?} (expected laplace, gaussian, uniform, student3 or gaussmix)"
                ))
            })
    }
}

/// Standard normal density.
fn phi(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Standard normal distribution function.
pub(crate) fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// `E|N(mu, sd^2)|`.
fn folded_normal_mean(mu: f64, sd: f64) -> f64 {
    sd * (2.0 / PI).sqrt() * (-mu * mu / (2.0 * sd * sd)).exp() + mu * (1.0 - 2.0 * normal_cdf(-mu / sd))
}

/// Returns `c = E|Z_raw|` for the standard form of `law`.
pub fn normalization_constant(law: NoiseLaw) -> f64 {
    match law {
        NoiseLaw::Laplace => 1.0,
        NoiseLaw::Gaussian => (2.0 / PI).sqrt(),
        NoiseLaw::Uniform => 0.5,
        NoiseLaw::StudentT3 => 2.0 * 3f64.sqrt() / PI,
        NoiseLaw::GaussMix => {
            MIX_CENTER_WEIGHT * (2.0 / PI).sqrt()
                + 2.0 * MIX_OUTER_WEIGHT * folded_normal_mean(MIX_OUTER_MEAN, MIX_OUTER_SD)
        }
    }
}

/// An innovation law normalised so that `E|ζ| = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub law: NoiseLaw,
    /// The constant `c` with `ζ = Z_raw / c`.
    pub scale: f64,
}

impl NoiseSpec {
    pub fn new(law: NoiseLaw) -> Self {
        NoiseSpec {
            law,
            scale: normalization_constant(law),
        }
    }

    fn raw_density(&self, z: f64) -> f64 {
        match self.law {
            NoiseLaw::Laplace => 0.5 * (-z.abs()).exp(),
            NoiseLaw::Gaussian => phi(z),
            NoiseLaw::Uniform => {
                if z.abs() <= 1.0 {
                    0.5
                } else {
                    0.0
                }
            }
            NoiseLaw::StudentT3 => 6.0 * 3f64.sqrt() / (PI * (3.0 + z * z).powi(2)),
            NoiseLaw::GaussMix => {
                MIX_CENTER_WEIGHT * phi(z)
                    + MIX_OUTER_WEIGHT / MIX_OUTER_SD
                        * (phi((z + MIX_OUTER_MEAN) / MIX_OUTER_SD)
                            + phi((z - MIX_OUTER_MEAN) / MIX_OUTER_SD))
            }
        }
    }

    fn raw_cdf(&self, z: f64) -> f64 {
        match self.law {
            NoiseLaw::Laplace => {
                if z < 0.0 {
                    0.5 * z.exp()
                } else {
                    1.0 - 0.5 * (-z).exp()
                }
            }
            NoiseLaw::Gaussian => normal_cdf(z),
            NoiseLaw::Uniform => ((z + 1.0) / 2.0).clamp(0.0, 1.0),
            NoiseLaw::StudentT3 => {
                let u = z / 3f64.sqrt();
                0.5 + (u / (1.0 + u * u) + u.atan()) / PI
            }
            NoiseLaw::GaussMix => {
                MIX_CENTER_WEIGHT * normal_cdf(z)
                    + MIX_OUTER_WEIGHT
                        * (normal_cdf((z + MIX_OUTER_MEAN) / MIX_OUTER_SD)
                            + normal_cdf((z - MIX_OUTER_MEAN) / MIX_OUTER_SD))
            }
        }
    }

    /// Density of the normalised innovation at `x`.
    pub fn density(&self, x: f64) -> f64 {
        self.scale * self.raw_density(self.scale * x)
    }

    /// Distribution function of the normalised innovation.
    pub fn cdf(&self, x: f64) -> f64 {
        self.raw_cdf(self.scale * x)
    }

    /// `σ_ζ² = Var(ζ)`.
    pub fn variance(&self) -> f64 {
        let raw = match self.law {
            NoiseLaw::Laplace => 2.0,
            NoiseLaw::Gaussian => 1.0,
            NoiseLaw::Uniform => 1.0 / 3.0,
            NoiseLaw::StudentT3 => 3.0,
            NoiseLaw::GaussMix => {
                MIX_CENTER_WEIGHT
                    + 2.0 * MIX_OUTER_WEIGHT * (MIX_OUTER_MEAN.powi(2) + MIX_OUTER_SD.powi(2))
            }
        };
        raw / (self.scale * self.scale)
    }

    /// `g(0)`, the density of `ζ` at zero.
    pub fn density_at_zero(&self) -> f64 {
        self.density(0.0)
    }

    /// `E|ζ|^r` for `r > 0`; infinite when the moment does not exist.
    pub fn abs_moment(&self, r: f64) -> f64 {
        let raw = match self.law {
            NoiseLaw::Laplace => gamma(r + 1.0),
            NoiseLaw::Gaussian => 2f64.powf(r / 2.0) * gamma((r + 1.0) / 2.0) / PI.sqrt(),
            NoiseLaw::Uniform => 1.0 / (r + 1.0),
            NoiseLaw::StudentT3 => {
                if r >= 3.0 {
                    return f64::INFINITY;
                }
                3f64.powf(r / 2.0) * gamma((r + 1.0) / 2.0) * gamma((3.0 - r) / 2.0)
                    / (PI.sqrt() * gamma(1.5))
            }
            NoiseLaw::GaussMix => {
                // Gaussian tails: the integrand is below 1e-300 well before |z| = 40.
                let upper = 40.0;
                let half = quadrature::integrate(
                    |z: f64| z.powf(r) * self.raw_density(z),
                    0.0,
                    upper,
                    1e-14,
                );
                2.0 * half.integral
            }
        };
        raw / self.scale.powf(r)
    }

    /// `(E|ζ|^r)^{1/r}`, exact for `r ∈ {1, 2}`.
    pub fn moment_norm(&self, r: f64) -> f64 {
        if r == 1.0 {
            1.0
        } else if r == 2.0 {
            self.variance().sqrt()
        } else {
            self.abs_moment(r).powf(1.0 / r)
        }
    }

    /// One draw of the normalised innovation.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let raw = match self.law {
            NoiseLaw::Laplace => {
                let e: f64 = Exp1.sample(rng);
                if rng.random::<bool>() {
                    e
                } else {
                    -e
                }
            }
            NoiseLaw::Gaussian => StandardNormal.sample(rng),
            NoiseLaw::Uniform => rng.random_range(-1.0..1.0),
            NoiseLaw::StudentT3 => {
                let t = StudentT::new(3.0).expect("3 degrees of freedom is valid");
                t.sample(rng)
            }
            NoiseLaw::GaussMix => {
                let u: f64 = rng.random();
                let z: f64 = StandardNormal.sample(rng);
                if u < MIX_OUTER_WEIGHT {
                    -MIX_OUTER_MEAN + MIX_OUTER_SD * z
                } else if u < 2.0 * MIX_OUTER_WEIGHT {
                    MIX_OUTER_MEAN + MIX_OUTER_SD * z
                } else {
                    z
                }
            }
        };
        raw / self.scale
    }

    /// `n` i.i.d. draws from the stream keyed by `seed`.
    pub fn sample(&self, seed: u64, n: usize) -> Vec<f64> {
        let mut rng = stream_rng(seed, 0);
        self.sample_with(&mut rng, n)
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.draw(rng)).collect()
    }
}

/// Counter-based generator for the independent stream `(seed, stream)`.
///
/// Streams with different indices never overlap, so replications can be
/// generated in any order or in parallel.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_match_closed_forms() {
        assert_eq!(normalization_constant(NoiseLaw::Laplace), 1.0);
        assert!((normalization_constant(NoiseLaw::Gaussian) - 0.797_884_560_802_865_4).abs() < 1e-15);
        assert!((normalization_constant(NoiseLaw::StudentT3) - 1.102_657_790_843_584).abs() < 1e-12);
        assert_eq!(normalization_constant(NoiseLaw::Uniform), 0.5);
    }

    #[test]
    fn variances_and_densities() {
        let lap = NoiseSpec::new(NoiseLaw::Laplace);
        assert_eq!(lap.variance(), 2.0);
        assert_eq!(lap.density_at_zero(), 0.5);
        let g = NoiseSpec::new(NoiseLaw::Gaussian);
        assert!((g.variance() - PI / 2.0).abs() < 1e-14);
        assert!((g.density_at_zero() - 1.0 / PI).abs() < 1e-15);
        let u = NoiseSpec::new(NoiseLaw::Uniform);
        assert!((u.variance() - 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(u.density_at_zero(), 0.25);
        let t = NoiseSpec::new(NoiseLaw::StudentT3);
        assert!((t.density_at_zero() - 4.0 / (PI * PI)).abs() < 1e-15);
        assert!((t.variance() - PI * PI / 4.0).abs() < 1e-13);
    }

    #[test]
    fn abs_moment_agrees_with_norms() {
        for law in NoiseLaw::ALL {
            let spec = NoiseSpec::new(law);
            assert!((spec.abs_moment(1.0) - 1.0).abs() < 1e-10, "{law}");
            assert!((spec.abs_moment(2.0) - spec.variance()).abs() < 1e-9, "{law}");
        }
        assert!(NoiseSpec::new(NoiseLaw::StudentT3).abs_moment(3.0).is_infinite());
    }

    #[test]
    fn sampling_is_deterministic() {
        for law in NoiseLaw::ALL {
            let spec = NoiseSpec::new(law);
            let a = spec.sample(7, 64);
            let b = spec.sample(7, 64);
            assert_eq!(a, b);
            assert_ne!(a, spec.sample(8, 64));
        }
        assert!(NoiseSpec::new(NoiseLaw::Laplace).sample(1, 0).is_empty());
    }

    #[test]
    fn parses_config_names() {
        for law in NoiseLaw::ALL {
            assert_eq!(law.name().parse::<NoiseLaw>().unwrap(), law);
        }
        assert!("cauchy".parse::<NoiseLaw>().is_err());
    }
}
