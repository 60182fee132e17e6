//! Population covariances checked against simulations that do not share the
//! library's sampling code.

use endocomp::seed::derive_seed;
use endocomp::{generate_sample, sample_c, theoretical_c, DgpSpec, EndogeneityMechanism};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

fn scalar(beta: f64, mechanism: EndogeneityMechanism) -> DgpSpec {
    DgpSpec {
        beta: vec![beta],
        x_cov: vec![vec![1.0]],
        noise_sd: 1.0,
        mechanism,
    }
}

fn cov(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (n - 1.0)
}

#[test]
fn measurement_error_covariance_oracle() {
    // x_obs = x_true + η, u = e − η·β with β = 1, σ_η = 0.5.
    let mut rng = ChaCha20Rng::seed_from_u64(2024);
    let n = 100_000;
    let (mut x, mut u) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for _ in 0..n {
        let xt: f64 = rng.sample(StandardNormal);
        let eta: f64 = 0.5 * rng.sample::<f64, _>(StandardNormal);
        let e: f64 = rng.sample(StandardNormal);
        x.push(xt + eta);
        u.push(e - eta);
    }
    let oracle = cov(&x, &u);
    // Frozen closed form, confirmed by the oracle draw within 4 standard errors.
    let frozen = -0.25;
    assert!((oracle - frozen).abs() < 0.02, "oracle {oracle}");
    let c = theoretical_c(&scalar(
        1.0,
        EndogeneityMechanism::MeasurementError { eta_sd: vec![0.5] },
    ))
    .unwrap();
    assert_eq!(c[0], frozen);
}

/// Solves `y = βx + u`, `x = αy + v` by fixed-point iteration instead of the
/// closed-form reduced form.
fn structural_fixed_point(alpha: f64, beta: f64, u: f64, v: f64) -> (f64, f64) {
    let (mut x, mut y) = (0.0, 0.0);
    for _ in 0..200 {
        y = beta * x + u;
        x = alpha * y + v;
    }
    (x, y)
}

#[test]
fn simultaneity_covariance_and_variance_oracle() {
    let (alpha, beta) = (0.4, 0.5);
    let mut rng = ChaCha20Rng::seed_from_u64(77);
    let n = 100_000;
    let (mut xs, mut us) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for _ in 0..n {
        let u: f64 = rng.sample(StandardNormal);
        let v: f64 = rng.sample(StandardNormal);
        let (x, _) = structural_fixed_point(alpha, beta, u, v);
        xs.push(x);
        us.push(u);
    }
    let c_oracle = cov(&xs, &us);
    let var_oracle = cov(&xs, &xs);
    assert!((c_oracle - 0.5).abs() < 0.02, "{c_oracle}");
    assert!((var_oracle - 1.8125).abs() < 0.04, "{var_oracle}");

    let spec = scalar(beta, EndogeneityMechanism::Simultaneity { alpha });
    assert!((theoretical_c(&spec).unwrap()[0] - 0.5).abs() < 1e-15);
    assert!((spec.observed_x_cov()[(0, 0)] - 1.8125).abs() < 1e-14);
}

#[test]
fn large_sample_covariances() {
    let exo = generate_sample(&scalar(1.0, EndogeneityMechanism::Exogenous), 100_000, 5).unwrap();
    assert!(sample_c(&exo).unwrap().amax() < 0.02);

    let spec = scalar(1.0, EndogeneityMechanism::LinearErrorCorrelation { gamma: vec![0.5] });
    let s = generate_sample(&spec, 100_000, 7).unwrap();
    let c = sample_c(&s).unwrap()[0];
    assert!((c - 0.5).abs() < 0.02, "{c}");
}

fn mechanism_grid() -> Vec<DgpSpec> {
    let cov2 = vec![vec![1.0, 0.3], vec![0.3, 2.0]];
    vec![
        scalar(1.0, EndogeneityMechanism::Exogenous),
        DgpSpec {
            beta: vec![1.0, -1.0],
            x_cov: cov2.clone(),
            noise_sd: 0.7,
            mechanism: EndogeneityMechanism::LinearErrorCorrelation { gamma: vec![0.5, -0.2] },
        },
        DgpSpec {
            beta: vec![1.0, 2.0],
            x_cov: cov2.clone(),
            noise_sd: 1.0,
            mechanism: EndogeneityMechanism::OmittedVariable {
                delta: 1.5,
                loading: vec![0.4, -0.3],
            },
        },
        DgpSpec {
            beta: vec![1.0, 0.5],
            x_cov: cov2,
            noise_sd: 1.0,
            mechanism: EndogeneityMechanism::MeasurementError { eta_sd: vec![0.5, 0.8] },
        },
        scalar(0.5, EndogeneityMechanism::Simultaneity { alpha: 0.4 }),
        scalar(-1.2, EndogeneityMechanism::Simultaneity { alpha: 0.6 }),
    ]
}

#[test]
fn mechanism_oracle_agreement() {
    let reps = 200;
    let n = 2000;
    for (k, spec) in mechanism_grid().into_iter().enumerate() {
        let c_true = theoretical_c(&spec).unwrap();
        let p = spec.p();
        let draws: Vec<Vec<f64>> = (0..reps)
            .map(|i| {
                let s = generate_sample(&spec, n, derive_seed(1000 + k as u64, i)).unwrap();
                sample_c(&s).unwrap().as_slice().to_vec()
            })
            .collect();
        for j in 0..p {
            let col: Vec<f64> = draws.iter().map(|d| d[j]).collect();
            let mean = col.iter().sum::<f64>() / reps as f64;
            let se = (cov(&col, &col) / reps as f64).sqrt();
            assert!(
                (mean - c_true[j]).abs() <= 4.0 * se,
                "{} coef {j}: mean {mean} vs {} (se {se})",
                spec.mechanism.name(),
                c_true[j]
            );
        }
    }
}

#[test]
fn generation_is_a_pure_function() {
    for spec in mechanism_grid() {
        let a = generate_sample(&spec, 64, 99).unwrap();
        let b = generate_sample(&spec, 64, 99).unwrap();
        assert_eq!(a, b);
        let bits = |s: &endocomp::Sample| s.y.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        let r = &a.y - &a.x * spec.beta_vector() - &a.u;
        assert!(r.amax() <= 1e-10 * a.y.amax().max(1.0));
    }
}
