//! Simulation and estimation toolkit for endogeneity in comparative
//! regression studies.
//!
//! OLS coefficients are biased when regressors correlate with the error, but
//! a before/after (or system-vs-system) comparison only needs the *change*
//! in coefficients. That change is measured without bias whenever the two
//! sides carry the same bias term `E[(XᵀX)⁻¹Xᵀu]`. This crate generates data
//! with controlled endogeneity ([`dgp`]), fits OLS and 2SLS ([`estimate`]),
//! estimates every term of the comparative identity by Monte Carlo
//! ([`bias`]), splits observed series around an event ([`eventsplit`]) and
//! runs reproducible experiments from JSON configs ([`runner`]).
//!
//! ```
//! use endocomp::{proposition_check, DgpSpec, EndogeneityMechanism, ScenarioPair, Verdict};
//!
//! let side = |beta: f64| DgpSpec {
//!     beta: vec![beta],
//!     x_cov: vec![vec![1.0]],
//!     noise_sd: 1.0,
//!     mechanism: EndogeneityMechanism::LinearErrorCorrelation { gamma: vec![0.5] },
//! };
//! let pair = ScenarioPair {
//!     spec_b: side(1.0),
//!     spec_a: side(1.5),
//!     n_b: 200,
//!     n_a: 200,
//!     reps: 200,
//!     master_seed: 1,
//! };
//! let report = proposition_check(&pair, 4.0).unwrap();
//! // Each side is biased by about 0.5 ...
//! assert!((report.mean_beta_b.mean[0] - 1.5).abs() < 0.05);
//! // ... but the change is measured correctly.
//! assert!((report.measured_diff[0] - 0.5).abs() < 0.05);
//! assert_eq!(report.verdict, Verdict::CriterionHolds);
//! ```
//!
//! The `book/` directory at the repository root walks through the concepts;
//! its code listings are compiled and run as doc-tests of this crate.

pub mod bias;
pub mod dgp;
pub mod error;
pub mod estimate;
pub mod eventsplit;
pub mod runner;
pub mod seed;

pub use bias::{
    bias_term, criterion_gap, factorization_check, mc_expectation_beta, proposition_check, BiasTerm,
    FactorizationReport, GapEstimate, MeanEstimate, PropositionReport, ScenarioPair, Verdict,
};
pub use dgp::{generate_sample, sample_c, theoretical_c, DgpSpec, EndogeneityMechanism, Latents, Sample};
pub use error::{Error, Result};
pub use estimate::{diff_estimator, ols_fit, tsls_fit, DiffResult, FirstStage, FitResult};
pub use eventsplit::{comparative_study, split_at_event, ComparativeStudy, SplitSpec, TimeSeriesDataset};

// Book chapters are compiled as doc-tests so their listings stay in sync
// with the API.
#[cfg(doctest)]
pub mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/data-generation.md")]
    pub mod data_generation {}
    #[doc = include_str!("../../../book/src/estimators.md")]
    pub mod estimators {}
    #[doc = include_str!("../../../book/src/comparative-criterion.md")]
    pub mod comparative_criterion {}
    #[doc = include_str!("../../../book/src/factorization.md")]
    pub mod factorization {}
    #[doc = include_str!("../../../book/src/event-splitting.md")]
    pub mod event_splitting {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    pub mod experiments {}
}
