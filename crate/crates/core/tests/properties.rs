use affine_qmle::asymptotics::{g0_estimate, gamma_matrices};
use affine_qmle::contrast::{quasi_loglik, residuals, Contrast};
use affine_qmle::models::{arma_psi, ArmaScale, Family, ModelSpec, Orders, ParamVector};
use affine_qmle::montecarlo::{aggregate, rmse, run_replications, ExperimentConfig, ModelConfig};
use affine_qmle::noise::{stream_rng, NoiseLaw, NoiseSpec};
use affine_qmle::optimize::OptimConfig;
use affine_qmle::simulate::{simulate, simulate_stream};
use affine_qmle::QmleError;
use proptest::prelude::*;
use rand::Rng;

fn arch1() -> ModelSpec {
    ModelSpec::new(Family::Arch, Orders::new(0, 0, 1, 0), ArmaScale::Estimated).unwrap()
}

fn arma11() -> ModelSpec {
    ModelSpec::new(Family::Arma, Orders::arma(1, 1), ArmaScale::Fixed(1.0)).unwrap()
}

#[test]
fn arch_contrast_prefers_true_parameter() {
    let s = arch1();
    let noise = NoiseSpec::new(NoiseLaw::Laplace);
    for seed in 0..20 {
        let tr = simulate(&s, &[0.4, 0.2], &noise, 100_000, seed, 500).unwrap();
        let at_truth = quasi_loglik(&Contrast::laplacian(), &s, &[0.4, 0.2], &tr.data).unwrap();
        let off = quasi_loglik(&Contrast::laplacian(), &s, &[0.4, 0.3], &tr.data).unwrap();
        assert!(at_truth > off, "seed {seed}");
    }
}

#[test]
fn arma_residuals_recover_innovations() {
    let s = arma11();
    let path = simulate_stream(&s, &[0.4, -0.6], &NoiseSpec::new(NoiseLaw::Laplace), 10_000, 3, 0, 0).unwrap();
    let r = residuals(&s, &[0.4, -0.6], &path.data).unwrap();
    let worst = r[100..]
        .iter()
        .zip(&path.innovations[100..])
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-6, "{worst}");
}

#[test]
fn residuals_at_truth_have_unit_absolute_mean() {
    let s = ModelSpec::new(Family::Garch, Orders::new(0, 0, 1, 1), ArmaScale::Estimated).unwrap();
    let th = [0.2, 0.4, 0.2];
    for law in NoiseLaw::ALL {
        let n = 50_000;
        let tr = simulate(&s, &th, &NoiseSpec::new(law), n, 9, 500).unwrap();
        let r = residuals(&s, &th, &tr.data).unwrap();
        let m = r.iter().map(|x| x.abs()).sum::<f64>() / n as f64;
        let sd = (r.iter().map(|x| (x.abs() - m).powi(2)).sum::<f64>() / n as f64).sqrt();
        assert!((m - 1.0).abs() < 4.0 * sd / (n as f64).sqrt(), "{law}: {m}");
    }
}

#[test]
fn laplacian_contrast_is_continuous_along_segments() {
    let s = ModelSpec::new(Family::ArmaGarch, Orders::new(1, 1, 1, 1), ArmaScale::Estimated).unwrap();
    let tr = simulate(&s, &[0.2, 0.4, 0.1, 0.4, -0.6], &NoiseSpec::new(NoiseLaw::Gaussian), 500, 1, 200).unwrap();
    let mut rng = stream_rng(4, 0);
    let b = &s.param_box;
    for _ in 0..10 {
        let p: Vec<f64> = (0..s.dim()).map(|i| b.lower[i] + rng.random::<f64>() * b.width(i)).collect();
        let q: Vec<f64> = (0..s.dim()).map(|i| b.lower[i] + rng.random::<f64>() * b.width(i)).collect();
        let at = |t: f64| -> f64 {
            let th: Vec<f64> = p.iter().zip(&q).map(|(x, y)| x + t * (y - x)).collect();
            quasi_loglik(&Contrast::laplacian(), &s, &th, &tr.data).unwrap()
        };
        let steps = 2000;
        let values: Vec<f64> = (0..=steps).map(|k| at(k as f64 / steps as f64)).collect();
        let jumps: Vec<f64> = values.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
        let typical = {
            let mut j = jumps.clone();
            j.sort_by(f64::total_cmp);
            j[j.len() / 2]
        };
        // halving the step must roughly halve the largest increment: no jumps
        let max_jump = jumps.iter().cloned().fold(0.0, f64::max);
        let k = jumps.iter().position(|j| *j == max_jump).unwrap();
        let t0 = k as f64 / steps as f64;
        let half = (at(t0 + 0.5 / steps as f64) - at(t0)).abs();
        assert!(half <= 0.75 * max_jump + 50.0 * typical + 1e-9, "jump {max_jump} half {half}");
    }
}

#[test]
fn scale_calibration_recovers_constant_scale() {
    // Gaussian fit of the constant-scale model with the variance calibration:
    // M′ = σ_ζ·σ is fitted to √mean X², so σ̂ estimates σ.
    let s = ModelSpec::new(Family::Arma, Orders::arma(0, 0), ArmaScale::Estimated).unwrap();
    let noise = NoiseSpec::new(NoiseLaw::Laplace);
    let sigma = 1.7;
    let n = 200_000;
    let data: Vec<f64> = noise.sample(12, n).iter().map(|z| sigma * z).collect();
    let r = affine_qmle::optimize::fit(&Contrast::gaussian_for(&noise), &s, &data, &OptimConfig::default()).unwrap();
    assert!((r.theta_hat.values[0] - sigma).abs() < 0.02, "{:?}", r.theta_hat);
}

#[test]
fn gamma_f_matches_long_run_oracle_for_arma11() {
    let s = arma11();
    let (a, b) = (0.4, -0.6);
    let noise = NoiseSpec::new(NoiseLaw::Laplace);
    let tr = simulate(&s, &[a, b], &noise, 100_000, 21, 500).unwrap();
    let g = gamma_matrices(&s, &[a, b], &tr.data).unwrap();

    // E[∂f ∂fᵀ] from a 10⁶-step path with the hand-derived recursions
    // ∂f_t/∂a = X_{t−1} + b ∂f_{t−1}/∂a, ∂f_t/∂b = −ε_{t−1} + b ∂f_{t−1}/∂b.
    let long = simulate_stream(&s, &[a, b], &noise, 1_000_000, 22, 0, 500).unwrap();
    let (mut da, mut db, mut xprev, mut eprev) = (0.0, 0.0, 0.0, 0.0);
    let mut m = [[0.0; 2]; 2];
    for (x, e) in long.data.iter().zip(&long.innovations) {
        let nda = xprev + b * da;
        let ndb = -eprev + b * db;
        da = nda;
        db = ndb;
        m[0][0] += da * da;
        m[0][1] += da * db;
        m[1][1] += db * db;
        xprev = *x;
        eprev = *e;
    }
    let n = long.data.len() as f64;
    for (i, j) in [(0, 0), (0, 1), (1, 1)] {
        let want = m[i][j] / n;
        let got = g.gamma_f[(i, j)];
        assert!((got - want).abs() <= 0.05 * want.abs(), "Γ_F[{i}{j}] {got} vs {want}");
    }
    assert!(g.gamma_m.iter().all(|x| *x == 0.0));
}

#[test]
fn g0_for_uniform_and_gaussian() {
    for (law, want) in [(NoiseLaw::Uniform, 0.25), (NoiseLaw::Gaussian, 1.0 / std::f64::consts::PI)] {
        let z = NoiseSpec::new(law).sample(31, 1_000_000);
        let g = g0_estimate(&z).unwrap();
        assert!((g - want).abs() < 0.05 * want, "{law}: {g}");
    }
}

#[test]
fn doubling_burn_in_keeps_final_point_distribution() {
    let s = ModelSpec::new(Family::Garch, Orders::new(0, 0, 1, 1), ArmaScale::Estimated).unwrap();
    let noise = NoiseSpec::new(NoiseLaw::Gaussian);
    let last = |burn: usize, offset: u64| -> Vec<f64> {
        let mut v: Vec<f64> = (0..10_000u64)
            .map(|k| {
                let p = simulate_stream(&s, &[0.2, 0.4, 0.2], &noise, 1, 77, offset + k, burn).unwrap();
                p.data[0]
            })
            .collect();
        v.sort_by(f64::total_cmp);
        v
    };
    let a = last(500, 0);
    let b = last(1000, 1 << 20);
    // two-sample Kolmogorov–Smirnov statistic against its 1% critical value
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    let crit = 1.63 * (2.0 / 10_000.0f64).sqrt();
    assert!(d < crit, "KS {d} vs {crit}");
}

#[test]
fn rmse_matches_two_pass_recomputation() {
    let mut rng = stream_rng(5, 0);
    let theta0 = [0.3, -0.2, 1.1];
    let est: Vec<ParamVector> = (0..37)
        .map(|_| {
            ParamVector::new(
                vec!["a".into(), "b".into(), "c".into()],
                theta0.iter().map(|t| t + rng.random_range(-0.5..0.5)).collect(),
            )
        })
        .collect();
    let got = rmse(&est, &theta0).unwrap();
    for i in 0..3 {
        let sq: Vec<f64> = est.iter().map(|p| (p.values[i] - theta0[i]).powi(2)).collect();
        let mean = sq.iter().sum::<f64>() / sq.len() as f64;
        assert!((got[i] - mean.sqrt()).abs() < 1e-14);
    }
}

#[test]
fn replication_order_does_not_matter() {
    let cfg = ExperimentConfig {
        label: None,
        model: ModelConfig::new(Family::Arch, Orders::new(0, 0, 1, 0)),
        theta0: vec![0.4, 0.2],
        noises: vec![NoiseLaw::Gaussian],
        sizes: vec![200],
        replications: 6,
        contrasts: vec![affine_qmle::contrast::ContrastKind::LaplacianQl],
        seed: 8,
        optim: OptimConfig::default(),
        burn_in: 100,
    };
    let spec = cfg.validate().unwrap();
    let reps = run_replications(&cfg, Some(1)).unwrap();
    let mut reversed = reps.clone();
    reversed.reverse();
    assert_eq!(aggregate(&cfg, &spec, &reps).unwrap(), aggregate(&cfg, &spec, &reversed).unwrap());
}

#[test]
fn garch_variance_matches_stationary_formula() {
    // uniform noise: σ_ζ² = 4/3, so α σ_ζ² + β = 0.733 < 1 and
    // E X² = σ_ζ² ω / (1 − α σ_ζ² − β)
    let s = ModelSpec::new(Family::Garch, Orders::new(0, 0, 1, 1), ArmaScale::Estimated).unwrap();
    let noise = NoiseSpec::new(NoiseLaw::Uniform);
    let v = noise.variance();
    let want = v * 0.2 / (1.0 - 0.4 * v - 0.2);
    let tr = simulate(&s, &[0.2, 0.4, 0.2], &noise, 400_000, 2, 500).unwrap();
    let got = tr.data.iter().map(|x| x * x).sum::<f64>() / tr.data.len() as f64;
    assert!((got - want).abs() < 0.03 * want, "{got} vs {want}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn psi_inverts_the_moving_average(a in -0.9f64..0.9, b in -0.9f64..0.9) {
        // Σ ψ_j ε_{t−j} driven through P(L) must give back Q(L)ε
        let psi = arma_psi(&[a], &[b], 60).unwrap();
        let mut coeffs = vec![1.0];
        coeffs.extend(psi.values.iter().copied());
        // (1 − bL)·(1 + Σψ_j L^j) = 1 − aL
        let lead = coeffs[1] - b * coeffs[0];
        prop_assert!((lead + a).abs() < 1e-12);
        for j in 2..coeffs.len() {
            prop_assert!((coeffs[j] - b * coeffs[j - 1]).abs() < 1e-12);
        }
    }

    #[test]
    fn residuals_invert_simulation_from_zero_past(w in 0.05f64..2.0, al in 0.0f64..0.9, be in 0.0f64..0.5, seed in 0u64..1000) {
        let s = ModelSpec::new(Family::Garch, Orders::new(0, 0, 1, 1), ArmaScale::Estimated).unwrap();
        let th = [w, al, be];
        // parameters outside the stationarity region are rejected up front
        let path = match simulate_stream(&s, &th, &NoiseSpec::new(NoiseLaw::Gaussian), 200, seed, 0, 0) {
            Ok(p) => p,
            Err(QmleError::Stationarity(_)) => return Err(TestCaseError::reject("non-stationary")),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        let r = residuals(&s, &th, &path.data).unwrap();
        for (x, z) in r.iter().zip(&path.innovations) {
            prop_assert!((x - z).abs() <= 1e-12 * z.abs().max(1.0));
        }
    }
}
