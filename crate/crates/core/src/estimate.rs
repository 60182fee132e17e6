//! Dense least squares: OLS, two-stage least squares, and the comparative
//! difference estimator.
//!
//! Coefficients always come from a Householder QR factorization of the
//! design. `(XᵀX)⁻¹` is only formed (as `R⁻¹R⁻ᵀ`) for covariance estimates.

use nalgebra::{DMatrix, DVector, Dyn, QR};

use crate::error::{Error, Result};

/// Designs whose 2-norm condition number exceeds this are rejected.
pub const CONDITION_GATE: f64 = 1e12;

/// First-stage canonical correlations below this flag a weak instrument.
pub const WEAK_INSTRUMENT_THRESHOLD: f64 = 1e-8;

/// A factored full-column-rank design.
pub(crate) struct QrDesign {
    qr: QR<f64, Dyn, Dyn>,
    r: DMatrix<f64>,
    condition_number: f64,
}

impl QrDesign {
    pub(crate) fn new(x: &DMatrix<f64>) -> Result<Self> {
        let (n, p) = x.shape();
        if p == 0 || n < p {
            return Err(Error::ShapeMismatch(format!(
                "design is {n}x{p}; need at least as many rows as columns and one column"
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::ShapeMismatch("design has non-finite entries".into()));
        }
        let qr = x.clone().qr();
        let r = qr.r();
        let sv = r.clone().singular_values();
        let (smax, smin) = (sv.max(), sv.min());
        let condition_number = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        if condition_number.is_nan() || condition_number > CONDITION_GATE {
            return Err(Error::RankDeficient { condition_number });
        }
        Ok(Self {
            qr,
            r,
            condition_number,
        })
    }

    pub(crate) fn condition_number(&self) -> f64 {
        self.condition_number
    }

    /// Least-squares solution of `x·b ≈ y`.
    pub(crate) fn solve(&self, y: &DVector<f64>) -> DVector<f64> {
        let p = self.r.ncols();
        let mut qty = y.clone();
        self.qr.q_tr_mul(&mut qty);
        self.r
            .solve_upper_triangular(&qty.rows(0, p).into_owned())
            .expect("triangular factor is nonsingular after the condition gate")
    }

    /// `(XᵀX)⁻¹ = R⁻¹R⁻ᵀ`, symmetrized.
    pub(crate) fn gram_inverse(&self) -> DMatrix<f64> {
        let p = self.r.ncols();
        let r_inv = self
            .r
            .solve_upper_triangular(&DMatrix::identity(p, p))
            .expect("triangular factor is nonsingular after the condition gate");
        let g = &r_inv * r_inv.transpose();
        (&g + g.transpose()) * 0.5
    }

    /// Thin `Q`, `n×p`.
    fn q(&self) -> DMatrix<f64> {
        self.qr.q()
    }
}

/// First-stage diagnostics of a 2SLS fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FirstStage {
    /// Smallest canonical correlation between the regressors and instruments.
    pub min_canonical_correlation: f64,
    /// `min_canonical_correlation < WEAK_INSTRUMENT_THRESHOLD`. Reported, not fatal.
    pub weak_instrument: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub beta_hat: DVector<f64>,
    /// `y − x·beta_hat`, always against the original design.
    pub residuals: DVector<f64>,
    /// `‖residuals‖² / (n − p)`; NaN for an exactly determined system.
    pub sigma2_hat: f64,
    pub cov_hat: DMatrix<f64>,
    /// 2-norm condition number of the (second-stage) design.
    pub condition_number: f64,
    pub n: usize,
    pub p: usize,
    /// Present for 2SLS fits only.
    pub first_stage: Option<FirstStage>,
}

fn check_rows(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::ShapeMismatch(format!(
            "design has {} rows but response has {}",
            x.nrows(),
            y.len()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::ShapeMismatch("response has non-finite entries".into()));
    }
    Ok(())
}

fn residual_variance(residuals: &DVector<f64>, n: usize, p: usize) -> f64 {
    if n > p {
        residuals.norm_squared() / (n - p) as f64
    } else {
        f64::NAN
    }
}

/// Ordinary least squares of `y` on `x`. No intercept is added.
pub fn ols_fit(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<FitResult> {
    check_rows(x, y)?;
    let design = QrDesign::new(x)?;
    let (n, p) = x.shape();
    let beta_hat = design.solve(y);
    let residuals = y - x * &beta_hat;
    let sigma2_hat = residual_variance(&residuals, n, p);
    let cov_hat = design.gram_inverse() * sigma2_hat;
    Ok(FitResult {
        beta_hat,
        residuals,
        sigma2_hat,
        cov_hat,
        condition_number: design.condition_number(),
        n,
        p,
        first_stage: None,
    })
}

/// Two-stage least squares with instruments `z` (`q ≥ p` columns).
///
/// The regressors are projected onto the column space of `z` and `y` is
/// regressed on the projection. With `q = p` this is `(ZᵀX)⁻¹Zᵀy`; with
/// `z = x` it reproduces [`ols_fit`].
pub fn tsls_fit(x: &DMatrix<f64>, z: &DMatrix<f64>, y: &DVector<f64>) -> Result<FitResult> {
    check_rows(x, y)?;
    let (n, p) = x.shape();
    let q = z.ncols();
    if z.nrows() != n {
        return Err(Error::ShapeMismatch(format!(
            "instruments have {} rows but design has {n}",
            z.nrows()
        )));
    }
    if q < p {
        return Err(Error::ShapeMismatch(format!(
            "under-identified: {q} instruments for {p} regressors"
        )));
    }

    let z_design = QrDesign::new(z)?;
    let x_design = QrDesign::new(x)?;
    let qz = z_design.q();
    let projected = &qz * (qz.transpose() * x);

    let canonical = (x_design.q().transpose() * &qz).singular_values();
    let min_canonical_correlation = canonical.min();

    let second = QrDesign::new(&projected)?;
    let beta_hat = second.solve(y);
    let residuals = y - x * &beta_hat;
    let sigma2_hat = residual_variance(&residuals, n, p);
    let cov_hat = second.gram_inverse() * sigma2_hat;
    Ok(FitResult {
        beta_hat,
        residuals,
        sigma2_hat,
        cov_hat,
        condition_number: second.condition_number(),
        n,
        p,
        first_stage: Some(FirstStage {
            min_canonical_correlation,
            weak_instrument: min_canonical_correlation < WEAK_INSTRUMENT_THRESHOLD,
        }),
    })
}

/// Change in coefficients between two independent fits.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffResult {
    /// `beta_hat_A − beta_hat_B`.
    pub diff: DVector<f64>,
    /// `cov_hat_A + cov_hat_B`.
    pub cov: DMatrix<f64>,
    pub z_scores: DVector<f64>,
}

impl DiffResult {
    pub fn standard_errors(&self) -> DVector<f64> {
        self.cov.diagonal().map(f64::sqrt)
    }
}

pub fn diff_estimator(fit_b: &FitResult, fit_a: &FitResult) -> Result<DiffResult> {
    if fit_b.beta_hat.len() != fit_a.beta_hat.len() {
        return Err(Error::ShapeMismatch(format!(
            "before fit has {} coefficients, after fit has {}",
            fit_b.beta_hat.len(),
            fit_a.beta_hat.len()
        )));
    }
    let diff = &fit_a.beta_hat - &fit_b.beta_hat;
    let cov = &fit_a.cov_hat + &fit_b.cov_hat;
    let z_scores = DVector::from_fn(diff.len(), |j, _| {
        let se = cov[(j, j)].sqrt();
        if diff[j] == 0.0 {
            0.0
        } else {
            diff[j] / se
        }
    });
    Ok(DiffResult { diff, cov, z_scores })
}
