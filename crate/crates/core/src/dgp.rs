//! Data-generating processes with controllable endogeneity.
//!
//! A [`DgpSpec`] describes one system: the true coefficients, the regressor
//! covariance, the idiosyncratic noise scale and an [`EndogeneityMechanism`].
//! All primitive shocks are mean-zero Gaussian, which makes the population
//! covariance between regressors and error ([`theoretical_c`]) closed-form for
//! every mechanism.
//!
//! [`generate_sample`] exposes the latent error `u` alongside the observed
//! design so that oracle quantities such as `(XᵀX)⁻¹Xᵀu` can be computed
//! directly.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

const SYMMETRY_RTOL: f64 = 1e-12;

/// Source of correlation between the regressors and the regression error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EndogeneityMechanism {
    /// `u = e`, independent of `x`.
    Exogenous,
    /// `u = γᵀx + e`.
    LinearErrorCorrelation { gamma: Vec<f64> },
    /// `u = δ·w + e` with `Cov(x, w) = loading` and `Var(w) = 1`.
    OmittedVariable { delta: f64, loading: Vec<f64> },
    /// Classical additive measurement error: the estimator sees `x_true + η`
    /// and the error against the observed design is `u = e − ηᵀβ`.
    MeasurementError { eta_sd: Vec<f64> },
    /// Two-equation feedback `y = βx + u`, `x = α·y + v`; scalar only.
    /// `x_cov` holds `Var(v)`.
    Simultaneity { alpha: f64 },
}

impl EndogeneityMechanism {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Exogenous => "exogenous",
            Self::LinearErrorCorrelation { .. } => "linear_error_correlation",
            Self::OmittedVariable { .. } => "omitted_variable",
            Self::MeasurementError { .. } => "measurement_error",
            Self::Simultaneity { .. } => "simultaneity",
        }
    }
}

/// Generative description of one system (one period, or one of the two
/// systems under comparison).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpSpec {
    /// True coefficient vector; its length is the regressor count `p`.
    pub beta: Vec<f64>,
    /// Regressor covariance, row-major `p×p`.
    pub x_cov: Vec<Vec<f64>>,
    /// Standard deviation of the idiosyncratic disturbance `e`.
    pub noise_sd: f64,
    pub mechanism: EndogeneityMechanism,
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> Error {
    Error::InvalidSpec {
        field: field.into(),
        message: message.into(),
    }
}

fn check_finite(field: &str, values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(invalid(format!("{field}[{i}]"), "must be finite")),
        None => Ok(()),
    }
}

fn check_len(field: &str, values: &[f64], p: usize) -> Result<()> {
    if values.len() != p {
        return Err(invalid(field, format!("expected length {p}, got {}", values.len())));
    }
    check_finite(field, values)
}

impl DgpSpec {
    /// Regressor count.
    pub fn p(&self) -> usize {
        self.beta.len()
    }

    pub fn beta_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.beta)
    }

    /// `x_cov` as a matrix. Assumes the shape has been validated.
    pub fn x_cov_matrix(&self) -> DMatrix<f64> {
        let p = self.p();
        DMatrix::from_fn(p, p, |i, j| self.x_cov[i][j])
    }

    /// Checks every invariant and returns the Cholesky factor of the matrix
    /// the sampler draws from (the `(p+1)×(p+1)` block covariance for the
    /// omitted-variable mechanism, `x_cov` otherwise).
    fn sampling_factor(&self) -> Result<DMatrix<f64>> {
        let p = self.p();
        if p == 0 {
            return Err(invalid("beta", "at least one regressor is required"));
        }
        check_finite("beta", &self.beta)?;
        if self.x_cov.len() != p {
            return Err(invalid("x_cov", format!("expected {p} rows, got {}", self.x_cov.len())));
        }
        for (i, row) in self.x_cov.iter().enumerate() {
            check_len(&format!("x_cov[{i}]"), row, p)?;
        }
        let cov = self.x_cov_matrix();
        let scale = cov.amax();
        for i in 0..p {
            for j in 0..i {
                if (cov[(i, j)] - cov[(j, i)]).abs() > SYMMETRY_RTOL * scale {
                    return Err(invalid("x_cov", "not symmetric"));
                }
            }
        }
        if !(self.noise_sd.is_finite() && self.noise_sd > 0.0) {
            return Err(invalid("noise_sd", "must be finite and positive"));
        }

        let block = match &self.mechanism {
            EndogeneityMechanism::Exogenous => None,
            EndogeneityMechanism::LinearErrorCorrelation { gamma } => {
                check_len("mechanism.gamma", gamma, p)?;
                None
            }
            EndogeneityMechanism::OmittedVariable { delta, loading } => {
                check_len("mechanism.loading", loading, p)?;
                check_finite("mechanism.delta", &[*delta])?;
                let mut b = DMatrix::zeros(p + 1, p + 1);
                b.view_mut((0, 0), (p, p)).copy_from(&cov);
                for (j, &l) in loading.iter().enumerate() {
                    b[(j, p)] = l;
                    b[(p, j)] = l;
                }
                b[(p, p)] = 1.0;
                Some(b)
            }
            EndogeneityMechanism::MeasurementError { eta_sd } => {
                check_len("mechanism.eta_sd", eta_sd, p)?;
                if let Some(i) = eta_sd.iter().position(|&s| s < 0.0) {
                    return Err(invalid(format!("mechanism.eta_sd[{i}]"), "must be >= 0"));
                }
                None
            }
            EndogeneityMechanism::Simultaneity { alpha } => {
                if p != 1 {
                    return Err(invalid("mechanism", "simultaneity requires p = 1"));
                }
                check_finite("mechanism.alpha", &[*alpha])?;
                if (alpha * self.beta[0]).abs() >= 1.0 {
                    return Err(invalid(
                        "mechanism.alpha",
                        "|alpha * beta| must be < 1 for a stable reduced form",
                    ));
                }
                None
            }
        };

        let cov_factor = Cholesky::new(cov)
            .ok_or_else(|| invalid("x_cov", "not positive definite"))?
            .unpack();
        match block {
            None => Ok(cov_factor),
            Some(b) => Cholesky::new(b).map(Cholesky::unpack).ok_or_else(|| {
                invalid(
                    "mechanism.loading",
                    "joint covariance of (x, w) is not positive definite",
                )
            }),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.sampling_factor().map(|_| ())
    }

    /// Covariance of the design the estimator actually sees. Differs from
    /// `x_cov` under measurement error (adds `diag(η²)`) and simultaneity
    /// (reduced-form variance of `x`).
    pub fn observed_x_cov(&self) -> DMatrix<f64> {
        let mut cov = self.x_cov_matrix();
        match &self.mechanism {
            EndogeneityMechanism::MeasurementError { eta_sd } => {
                for (j, s) in eta_sd.iter().enumerate() {
                    cov[(j, j)] += s * s;
                }
            }
            EndogeneityMechanism::Simultaneity { alpha } => {
                let k = 1.0 - alpha * self.beta[0];
                let sv2 = cov[(0, 0)];
                let su2 = self.noise_sd * self.noise_sd;
                cov[(0, 0)] = (sv2 + alpha * alpha * su2) / (k * k);
            }
            _ => {}
        }
        cov
    }
}

/// Mechanism internals retained for oracle computations and instruments.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Latents {
    /// Omitted regressor `w`.
    pub omitted: Option<DVector<f64>>,
    /// Measurement noise `η`, `n×p`.
    pub measurement_noise: Option<DMatrix<f64>>,
    /// Structural shock `v` of the `x` equation under simultaneity.
    pub structural: Option<DVector<f64>>,
}

/// One realized dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// Observed design, `n×p`.
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    /// Error against the observed design: `y = x·β + u`.
    pub u: DVector<f64>,
    pub latents: Latents,
    pub n: usize,
    pub seed: u64,
}

/// Draws `n` i.i.d. rows from `spec`. A pure function of `(spec, n, seed)`.
pub fn generate_sample(spec: &DgpSpec, n: usize, seed: u64) -> Result<Sample> {
    let factor = spec.sampling_factor()?;
    let p = spec.p();
    if n < p + 1 {
        return Err(Error::SampleTooSmall { n, required: p + 1 });
    }

    let mut rng = rng_from_seed(seed);
    let mut normal = move || -> f64 { rng.sample(StandardNormal) };
    let beta = spec.beta_vector();
    let sd = spec.noise_sd;

    let mut x = DMatrix::<f64>::zeros(n, p);
    let mut u = DVector::<f64>::zeros(n);
    let mut latents = Latents::default();

    match &spec.mechanism {
        EndogeneityMechanism::Exogenous | EndogeneityMechanism::LinearErrorCorrelation { .. } => {
            let gamma = match &spec.mechanism {
                EndogeneityMechanism::LinearErrorCorrelation { gamma } => Some(DVector::from_column_slice(gamma)),
                _ => None,
            };
            let mut z = DVector::<f64>::zeros(p);
            for i in 0..n {
                z.iter_mut().for_each(|v| *v = normal());
                let xi = &factor * &z;
                let e = sd * normal();
                x.row_mut(i).copy_from(&xi.transpose());
                u[i] = match &gamma {
                    Some(g) => g.dot(&xi) + e,
                    None => e,
                };
            }
        }
        EndogeneityMechanism::OmittedVariable { delta, .. } => {
            let mut w = DVector::<f64>::zeros(n);
            let mut z = DVector::<f64>::zeros(p + 1);
            for i in 0..n {
                z.iter_mut().for_each(|v| *v = normal());
                let xw = &factor * &z;
                let e = sd * normal();
                x.row_mut(i).copy_from(&xw.rows(0, p).transpose());
                w[i] = xw[p];
                u[i] = delta * w[i] + e;
            }
            latents.omitted = Some(w);
        }
        EndogeneityMechanism::MeasurementError { eta_sd } => {
            let mut eta = DMatrix::<f64>::zeros(n, p);
            let mut z = DVector::<f64>::zeros(p);
            for i in 0..n {
                z.iter_mut().for_each(|v| *v = normal());
                let x_true = &factor * &z;
                let e = sd * normal();
                let mut noise_dot_beta = 0.0;
                for j in 0..p {
                    let eta_ij = eta_sd[j] * normal();
                    eta[(i, j)] = eta_ij;
                    x[(i, j)] = x_true[j] + eta_ij;
                    noise_dot_beta += eta_ij * beta[j];
                }
                u[i] = e - noise_dot_beta;
            }
            latents.measurement_noise = Some(eta);
        }
        EndogeneityMechanism::Simultaneity { alpha } => {
            let sv = factor[(0, 0)];
            let k = 1.0 - alpha * beta[0];
            let mut v = DVector::<f64>::zeros(n);
            for i in 0..n {
                v[i] = sv * normal();
                u[i] = sd * normal();
                x[(i, 0)] = (v[i] + alpha * u[i]) / k;
            }
            latents.structural = Some(v);
        }
    }

    let y = &x * &beta + &u;
    Ok(Sample {
        x,
        y,
        u,
        latents,
        n,
        seed,
    })
}

/// Closed-form population `Cov(x_j, u)` for the observed design.
pub fn theoretical_c(spec: &DgpSpec) -> Result<DVector<f64>> {
    spec.validate()?;
    let p = spec.p();
    Ok(match &spec.mechanism {
        EndogeneityMechanism::Exogenous => DVector::zeros(p),
        EndogeneityMechanism::LinearErrorCorrelation { gamma } => {
            spec.x_cov_matrix() * DVector::from_column_slice(gamma)
        }
        EndogeneityMechanism::OmittedVariable { delta, loading } => DVector::from_column_slice(loading) * *delta,
        EndogeneityMechanism::MeasurementError { eta_sd } => {
            DVector::from_fn(p, |j, _| -eta_sd[j] * eta_sd[j] * spec.beta[j])
        }
        EndogeneityMechanism::Simultaneity { alpha } => {
            let su2 = spec.noise_sd * spec.noise_sd;
            DVector::from_element(1, alpha * su2 / (1.0 - alpha * spec.beta[0]))
        }
    })
}

/// Empirical covariance (divisor `n − 1`) between each column of `x` and `u`.
pub fn sample_c(sample: &Sample) -> Result<DVector<f64>> {
    let n = sample.x.nrows();
    if n < 2 || sample.u.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "sample has {n} design rows and {} errors",
            sample.u.len()
        )));
    }
    Ok(column_covariances(&sample.x, &sample.u))
}

pub(crate) fn column_covariances(x: &DMatrix<f64>, u: &DVector<f64>) -> DVector<f64> {
    let n = x.nrows();
    let u_mean = u.mean();
    DVector::from_fn(x.ncols(), |j, _| {
        let col = x.column(j);
        let x_mean = col.mean();
        col.iter()
            .zip(u.iter())
            .map(|(a, b)| (a - x_mean) * (b - u_mean))
            .sum::<f64>()
            / (n as f64 - 1.0)
    })
}
