//! The OLS bias functional and the comparative cancellation criterion.
//!
//! Under endogeneity the OLS estimator satisfies `β̂ = β + (XᵀX)⁻¹Xᵀu`, so
//! for two systems `B` and `A`
//!
//! ```text
//! E[β̂_A] − E[β̂_B] = (β_A − β_B) + E[(X_AᵀX_A)⁻¹X_Aᵀu_A] − E[(X_BᵀX_B)⁻¹X_Bᵀu_B]
//! ```
//!
//! and the measured change equals the true change whenever the two bias
//! terms agree. [`proposition_check`] estimates every term of that identity
//! by Monte Carlo, using independent random streams for the coefficient
//! means and the bias terms, so the identity residual is a genuine
//! statistical check rather than a rounding artefact.
//!
//! The finite-sample bias is `E[(XᵀX)⁻¹Xᵀu]`; its probability limit is
//! `Σx⁻¹c`, where `Σx` is the covariance of the observed design and `c` the
//! population regressor/error covariance. Replications are evaluated in
//! parallel but always reduced in replication order, so results are
//! bit-identical at any thread count.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dgp::{generate_sample, sample_c, theoretical_c, DgpSpec, Sample};
use crate::error::{Error, Result};
use crate::estimate::{ols_fit, QrDesign};
use crate::seed::derive_seed;

/// Fraction of skipped (rank-deficient) replications above which a result
/// is flagged invalid.
pub const MAX_SKIP_FRACTION: f64 = 0.01;

const STREAM_BETA_B: u64 = 0;
const STREAM_BETA_A: u64 = 1;
const STREAM_BIAS_B: u64 = 2;
const STREAM_BIAS_A: u64 = 3;

/// Two systems (or two periods of one system) to compare.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioPair {
    /// Before / system B.
    pub spec_b: DgpSpec,
    /// After / system A.
    pub spec_a: DgpSpec,
    pub n_b: usize,
    pub n_a: usize,
    pub reps: usize,
    pub master_seed: u64,
}

impl ScenarioPair {
    pub fn validate(&self) -> Result<()> {
        self.spec_b.validate()?;
        self.spec_a.validate()?;
        let p = self.spec_b.p();
        if self.spec_a.p() != p {
            return Err(Error::IncompatiblePair(format!(
                "spec_b has {p} regressors, spec_a has {}",
                self.spec_a.p()
            )));
        }
        if self.reps < 2 {
            return Err(Error::IncompatiblePair(format!(
                "reps = {} but at least 2 are required",
                self.reps
            )));
        }
        for n in [self.n_b, self.n_a] {
            if n < p + 1 {
                return Err(Error::SampleTooSmall { n, required: p + 1 });
            }
        }
        Ok(())
    }
}

/// Monte Carlo mean of a vector quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: Vec<f64>,
    pub mc_se: Vec<f64>,
    /// Replications that contributed.
    pub reps: usize,
    /// Replications skipped as rank deficient.
    pub skipped: usize,
}

impl MeanEstimate {
    pub fn is_valid(&self) -> bool {
        skip_ok(self.reps, self.skipped)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasTerm {
    /// Monte Carlo mean of `(XᵀX)⁻¹Xᵀu`.
    pub finite_sample: Vec<f64>,
    /// `Σx_obs⁻¹·c`.
    pub asymptotic: Vec<f64>,
    pub mc_se: Vec<f64>,
    pub reps: usize,
    pub skipped: usize,
}

impl BiasTerm {
    pub fn is_valid(&self) -> bool {
        skip_ok(self.reps, self.skipped)
    }
}

fn skip_ok(used: usize, skipped: usize) -> bool {
    let total = used + skipped;
    total > 0 && (skipped as f64) <= MAX_SKIP_FRACTION * total as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    #[serde(rename = "criterion holds")]
    CriterionHolds,
    #[serde(rename = "violated")]
    Violated,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::CriterionHolds => "criterion holds",
            Verdict::Violated => "violated",
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Every term of the comparative identity, side by side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropositionReport {
    pub mean_beta_b: MeanEstimate,
    pub mean_beta_a: MeanEstimate,
    /// `β_A − β_B`.
    pub true_diff: Vec<f64>,
    /// `mean_beta_a − mean_beta_b`.
    pub measured_diff: Vec<f64>,
    pub mc_se_diff: Vec<f64>,
    pub bias_b: BiasTerm,
    pub bias_a: BiasTerm,
    /// `bias_a − bias_b` (finite-sample).
    pub criterion_gap: Vec<f64>,
    pub gap_mc_se: Vec<f64>,
    /// `bias_a − bias_b` (asymptotic).
    pub asymptotic_gap: Vec<f64>,
    /// `measured_diff − true_diff − criterion_gap`; statistically zero for
    /// every pair.
    pub identity_residual: Vec<f64>,
    /// Combined MC standard error of the four estimates in the residual.
    pub identity_mc_se: Vec<f64>,
    /// `‖identity_residual‖ ≤ tol_multiplier · identity_mc_se` componentwise.
    pub identity_holds: bool,
    pub tol_multiplier: f64,
    pub verdict: Verdict,
    /// False when any component skipped more than 1% of replications.
    pub valid: bool,
}

struct Replicated<T> {
    values: Vec<T>,
    skipped: usize,
}

/// Runs `f` on `reps` independent samples with sub-seeds
/// `derive_seed(seed, i)`. Rank-deficient replications are skipped and
/// counted. The returned values are in replication order.
fn replicate<T, F>(spec: &DgpSpec, n: usize, reps: usize, seed: u64, f: F) -> Result<Replicated<T>>
where
    T: Send,
    F: Fn(&Sample) -> Result<T> + Sync,
{
    spec.validate()?;
    if reps < 2 {
        return Err(Error::InsufficientReplications {
            usable: reps,
            requested: reps,
        });
    }
    let outcomes: Vec<Result<Option<T>>> = (0..reps)
        .into_par_iter()
        .map(|i| {
            let sample = generate_sample(spec, n, derive_seed(seed, i as u64))?;
            match f(&sample) {
                Ok(v) => Ok(Some(v)),
                Err(Error::RankDeficient { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect();
    let mut values = Vec::with_capacity(reps);
    let mut skipped = 0;
    for o in outcomes {
        match o? {
            Some(v) => values.push(v),
            None => skipped += 1,
        }
    }
    if values.len() < 2 {
        return Err(Error::InsufficientReplications {
            usable: values.len(),
            requested: reps,
        });
    }
    Ok(Replicated { values, skipped })
}

/// Mean and standard error of the mean, reduced in slice order.
fn mean_and_se(values: &[DVector<f64>]) -> (DVector<f64>, DVector<f64>) {
    let k = values.len() as f64;
    let p = values[0].len();
    let mut mean = DVector::zeros(p);
    for v in values {
        mean += v;
    }
    mean /= k;
    let mut ss = DVector::<f64>::zeros(p);
    for v in values {
        let d = v - &mean;
        ss += d.component_mul(&d);
    }
    let se = ss.map(|s| (s / (k - 1.0) / k).sqrt());
    (mean, se)
}

fn to_vec(v: &DVector<f64>) -> Vec<f64> {
    v.as_slice().to_vec()
}

/// `Σx_obs⁻¹·c` for `spec`.
pub fn asymptotic_bias(spec: &DgpSpec) -> Result<DVector<f64>> {
    let c = theoretical_c(spec)?;
    let cov = spec.observed_x_cov();
    let chol = nalgebra::Cholesky::new(cov).ok_or_else(|| Error::InvalidSpec {
        field: "x_cov".into(),
        message: "observed design covariance is not positive definite".into(),
    })?;
    Ok(chol.solve(&c))
}

/// Finite-sample and asymptotic OLS bias for one system.
pub fn bias_term(spec: &DgpSpec, n: usize, reps: usize, seed: u64) -> Result<BiasTerm> {
    let asymptotic = asymptotic_bias(spec)?;
    let rep = replicate(spec, n, reps, seed, |s| Ok(QrDesign::new(&s.x)?.solve(&s.u)))?;
    let (mean, se) = mean_and_se(&rep.values);
    Ok(BiasTerm {
        finite_sample: to_vec(&mean),
        asymptotic: to_vec(&asymptotic),
        mc_se: to_vec(&se),
        reps: rep.values.len(),
        skipped: rep.skipped,
    })
}

/// Monte Carlo mean and standard error of the OLS coefficients.
pub fn mc_expectation_beta(spec: &DgpSpec, n: usize, reps: usize, seed: u64) -> Result<MeanEstimate> {
    let rep = replicate(spec, n, reps, seed, |s| Ok(ols_fit(&s.x, &s.y)?.beta_hat))?;
    let (mean, se) = mean_and_se(&rep.values);
    Ok(MeanEstimate {
        mean: to_vec(&mean),
        mc_se: to_vec(&se),
        reps: rep.values.len(),
        skipped: rep.skipped,
    })
}

fn combine_se(parts: &[&[f64]]) -> Vec<f64> {
    (0..parts[0].len())
        .map(|j| parts.iter().map(|s| s[j] * s[j]).sum::<f64>().sqrt())
        .collect()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn bias_pair(pair: &ScenarioPair) -> Result<(BiasTerm, BiasTerm)> {
    let seed_b = derive_seed(pair.master_seed, STREAM_BIAS_B);
    let seed_a = derive_seed(pair.master_seed, STREAM_BIAS_A);
    let (b, a) = rayon::join(
        || bias_term(&pair.spec_b, pair.n_b, pair.reps, seed_b),
        || bias_term(&pair.spec_a, pair.n_a, pair.reps, seed_a),
    );
    Ok((b?, a?))
}

/// Estimates both sides of the comparative identity and decides whether the
/// bias terms cancel at `tol_multiplier` Monte Carlo standard errors.
pub fn proposition_check(pair: &ScenarioPair, tol_multiplier: f64) -> Result<PropositionReport> {
    pair.validate()?;
    if !(tol_multiplier.is_finite() && tol_multiplier > 0.0) {
        return Err(Error::IncompatiblePair(format!(
            "tol_multiplier must be positive, got {tol_multiplier}"
        )));
    }
    let seed_b = derive_seed(pair.master_seed, STREAM_BETA_B);
    let seed_a = derive_seed(pair.master_seed, STREAM_BETA_A);
    let ((mean_b, mean_a), biases) = rayon::join(
        || {
            rayon::join(
                || mc_expectation_beta(&pair.spec_b, pair.n_b, pair.reps, seed_b),
                || mc_expectation_beta(&pair.spec_a, pair.n_a, pair.reps, seed_a),
            )
        },
        || bias_pair(pair),
    );
    let (mean_b, mean_a) = (mean_b?, mean_a?);
    let (bias_b, bias_a) = biases?;

    let true_diff = sub(&pair.spec_a.beta, &pair.spec_b.beta);
    let measured_diff = sub(&mean_a.mean, &mean_b.mean);
    let mc_se_diff = combine_se(&[&mean_a.mc_se, &mean_b.mc_se]);
    let criterion_gap = sub(&bias_a.finite_sample, &bias_b.finite_sample);
    let gap_mc_se = combine_se(&[&bias_a.mc_se, &bias_b.mc_se]);
    let asymptotic_gap = sub(&bias_a.asymptotic, &bias_b.asymptotic);
    let identity_residual = sub(&sub(&measured_diff, &true_diff), &criterion_gap);
    let identity_mc_se = combine_se(&[&mean_a.mc_se, &mean_b.mc_se, &bias_a.mc_se, &bias_b.mc_se]);
    let identity_holds = identity_residual
        .iter()
        .zip(&identity_mc_se)
        .all(|(r, s)| r.abs() <= tol_multiplier * s);
    let verdict = gap_verdict(&criterion_gap, &gap_mc_se, tol_multiplier);
    let valid = mean_b.is_valid() && mean_a.is_valid() && bias_b.is_valid() && bias_a.is_valid();

    Ok(PropositionReport {
        mean_beta_b: mean_b,
        mean_beta_a: mean_a,
        true_diff,
        measured_diff,
        mc_se_diff,
        bias_b,
        bias_a,
        criterion_gap,
        gap_mc_se,
        asymptotic_gap,
        identity_residual,
        identity_mc_se,
        identity_holds,
        tol_multiplier,
        verdict,
        valid,
    })
}

fn gap_verdict(gap: &[f64], gap_se: &[f64], tol_multiplier: f64) -> Verdict {
    let gap_norm = gap.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    let se_max = gap_se.iter().fold(0.0f64, |m, s| m.max(*s));
    if gap_norm <= tol_multiplier * se_max {
        Verdict::CriterionHolds
    } else {
        Verdict::Violated
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapEstimate {
    /// Finite-sample `bias_a − bias_b`.
    pub gap: Vec<f64>,
    pub mc_se: Vec<f64>,
    pub asymptotic: Vec<f64>,
}

/// Only the bias-term difference of [`proposition_check`], computed on the
/// same random streams.
pub fn criterion_gap(pair: &ScenarioPair) -> Result<GapEstimate> {
    pair.validate()?;
    let (b, a) = bias_pair(pair)?;
    Ok(GapEstimate {
        gap: sub(&a.finite_sample, &b.finite_sample),
        mc_se: combine_se(&[&a.mc_se, &b.mc_se]),
        asymptotic: sub(&a.asymptotic, &b.asymptotic),
    })
}

/// Joint expectation `E[(XᵀX)⁻¹ĉ]` against the product of expectations
/// `E[(XᵀX)⁻¹]·E[ĉ]`, with `ĉ` the per-replication sample covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorizationReport {
    pub joint: DVector<f64>,
    pub joint_mc_se: DVector<f64>,
    pub product: DVector<f64>,
    pub product_mc_se: DVector<f64>,
    /// `joint − product`.
    pub gap: DVector<f64>,
    pub gap_mc_se: DVector<f64>,
    /// Monte Carlo mean of the inverse Gram matrices.
    pub mean_gram_inverse: DMatrix<f64>,
    pub mean_c: DVector<f64>,
    pub reps: usize,
    pub skipped: usize,
}

/// Standard errors for the product and the gap use the first-order (delta
/// method) linearization of `Ḡ·c̄` around the replication means.
pub fn factorization_check(spec: &DgpSpec, n: usize, reps: usize, seed: u64) -> Result<FactorizationReport> {
    let rep = replicate(spec, n, reps, seed, |s| {
        let g = QrDesign::new(&s.x)?.gram_inverse();
        let c = sample_c(s)?;
        Ok((g, c))
    })?;
    let k = rep.values.len() as f64;
    let p = spec.p();

    let mut g_bar = DMatrix::<f64>::zeros(p, p);
    let mut c_bar = DVector::<f64>::zeros(p);
    for (g, c) in &rep.values {
        g_bar += g;
        c_bar += c;
    }
    g_bar /= k;
    c_bar /= k;

    let joint_vals: Vec<DVector<f64>> = rep.values.iter().map(|(g, c)| g * c).collect();
    let (joint, joint_mc_se) = mean_and_se(&joint_vals);
    let product = &g_bar * &c_bar;

    // Influence of replication i on Ḡ·c̄ is G_i·c̄ + Ḡ·c_i (up to constants).
    let product_infl: Vec<DVector<f64>> = rep.values.iter().map(|(g, c)| g * &c_bar + &g_bar * c).collect();
    let (_, product_mc_se) = mean_and_se(&product_infl);
    let gap_infl: Vec<DVector<f64>> = joint_vals.iter().zip(&product_infl).map(|(j, pi)| j - pi).collect();
    let (_, gap_mc_se) = mean_and_se(&gap_infl);

    Ok(FactorizationReport {
        gap: &joint - &product,
        joint,
        joint_mc_se,
        product,
        product_mc_se,
        gap_mc_se,
        mean_gram_inverse: g_bar,
        mean_c: c_bar,
        reps: rep.values.len(),
        skipped: rep.skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::EndogeneityMechanism;

    fn scalar(beta: f64, mechanism: EndogeneityMechanism) -> DgpSpec {
        DgpSpec {
            beta: vec![beta],
            x_cov: vec![vec![1.0]],
            noise_sd: 1.0,
            mechanism,
        }
    }

    #[test]
    fn mean_and_se_known_values() {
        let vals: Vec<DVector<f64>> = [1.0, 2.0, 3.0, 4.0]
            .iter()
            .map(|&v| DVector::from_element(1, v))
            .collect();
        let (m, se) = mean_and_se(&vals);
        assert_eq!(m[0], 2.5);
        // sample variance 5/3, se = sqrt(5/3/4)
        assert!((se[0] - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn asymptotic_bias_closed_forms() {
        let a = asymptotic_bias(&scalar(1.0, EndogeneityMechanism::Exogenous)).unwrap();
        assert_eq!(a[0], 0.0);
        let a = asymptotic_bias(&scalar(
            1.0,
            EndogeneityMechanism::LinearErrorCorrelation { gamma: vec![0.5] },
        ))
        .unwrap();
        assert!((a[0] - 0.5).abs() < 1e-15);
        let a = asymptotic_bias(&scalar(
            1.0,
            EndogeneityMechanism::MeasurementError { eta_sd: vec![0.5] },
        ))
        .unwrap();
        assert!((a[0] + 0.2).abs() < 1e-15);
        let a = asymptotic_bias(&scalar(0.5, EndogeneityMechanism::Simultaneity { alpha: 0.4 })).unwrap();
        assert!((a[0] - 0.5 / 1.8125).abs() < 1e-15);
    }

    #[test]
    fn minimal_replications() {
        let spec = scalar(1.0, EndogeneityMechanism::LinearErrorCorrelation { gamma: vec![0.5] });
        let m = mc_expectation_beta(&spec, 20, 2, 1).unwrap();
        assert!(m.mc_se[0].is_finite() && m.mc_se[0] > 0.0);
        assert_eq!(m.reps, 2);
        let f = factorization_check(&spec, 20, 2, 1).unwrap();
        assert!(f.joint.iter().all(|v| v.is_finite()));
        assert!(f.gap_mc_se.iter().all(|v| v.is_finite()));
        assert!(matches!(
            mc_expectation_beta(&spec, 20, 1, 1),
            Err(Error::InsufficientReplications { .. })
        ));
    }

    #[test]
    fn incompatible_pair() {
        let b = scalar(1.0, EndogeneityMechanism::Exogenous);
        let a = DgpSpec {
            beta: vec![1.0, 1.0],
            x_cov: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            noise_sd: 1.0,
            mechanism: EndogeneityMechanism::Exogenous,
        };
        let pair = ScenarioPair {
            spec_b: b,
            spec_a: a,
            n_b: 10,
            n_a: 10,
            reps: 10,
            master_seed: 0,
        };
        assert!(matches!(proposition_check(&pair, 4.0), Err(Error::IncompatiblePair(_))));
    }

    #[test]
    fn skip_accounting() {
        assert!(skip_ok(100, 1));
        assert!(!skip_ok(100, 2));
        assert!(skip_ok(5, 0));
    }

    #[test]
    fn verdict_rule() {
        assert_eq!(gap_verdict(&[0.01], &[0.01], 4.0), Verdict::CriterionHolds);
        assert_eq!(gap_verdict(&[0.3], &[0.01], 4.0), Verdict::Violated);
        assert_eq!(gap_verdict(&[0.0, 0.05], &[0.001, 0.02], 4.0), Verdict::CriterionHolds);
    }

    #[test]
    fn determinism_across_thread_counts() {
        let pair = ScenarioPair {
            spec_b: scalar(1.0, EndogeneityMechanism::LinearErrorCorrelation { gamma: vec![0.5] }),
            spec_a: scalar(1.5, EndogeneityMechanism::LinearErrorCorrelation { gamma: vec![0.8] }),
            n_b: 50,
            n_a: 60,
            reps: 64,
            master_seed: 99,
        };
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| proposition_check(&pair, 4.0).unwrap())
        };
        let one = run(1);
        let four = run(4);
        assert_eq!(one, four);
        let bits = |r: &PropositionReport| r.measured_diff.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&one), bits(&four));
    }
}
