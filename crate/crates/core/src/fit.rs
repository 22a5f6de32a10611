//! One-call model fitting: point estimate, covariance, standard errors and
//! Wald intervals, plus the diagnostics a front end reports.

use nalgebra::{DMatrix, DVector};

use crate::data::{effective_indices, FitSpec, HPolicy, SurvivalSample};
use crate::error::Result;
use crate::inference::{covariance, wald_ci, CovarianceResult};
use crate::km::fit_censoring_km;
use crate::score::{slope_matrix, ScoreContext, SmoothingMatrix};
use crate::solver::{fit_iterative, fit_smoothed, SolveReport};

/// A fitted model with inference attached.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub coefficients: DVector<f64>,
    /// Coefficient covariance n⁻¹·Σ̂.
    pub covariance: DMatrix<f64>,
    pub se: Vec<f64>,
    pub ci: Vec<(f64, f64)>,
    pub level: f64,
    pub report: SolveReport,
    pub n: usize,
    pub n_effective: usize,
    pub n_events_effective: usize,
    pub floored_weights: usize,
}

/// Fit the model under `spec` and attach sandwich-based inference.
pub fn fit(spec: &FitSpec, sample: &SurvivalSample, level: f64) -> Result<FitResult> {
    let (report, sigma) = match spec.h_policy {
        HPolicy::FixedIdentity => {
            let report = fit_smoothed(spec, sample, None)?;
            let curve = fit_censoring_km(sample);
            let ctx = ScoreContext::new(sample, spec, &curve)?;
            let h = SmoothingMatrix::identity(ctx.dim, ctx.n_total);
            let a_hat = slope_matrix(&report.beta_hat, &ctx, &h)?;
            let cov: CovarianceResult = covariance(&report.beta_hat, spec, sample, &h, &a_hat)?;
            (report, cov.sigma)
        }
        HPolicy::Iterative => fit_iterative(spec, sample)?,
    };

    let var_beta = &sigma / sample.n() as f64;
    let se = (0..report.beta_hat.len())
        .map(|j| var_beta[(j, j)].max(0.0).sqrt())
        .collect();
    let ci = wald_ci(&report.beta_hat, &var_beta, level);

    let curve = fit_censoring_km(sample);
    let ctx = ScoreContext::new(sample, spec, &curve)?;
    let eff = effective_indices(sample, spec.t0)?;
    let n_events_effective = eff
        .iter()
        .filter(|&&i| sample.subjects[i].is_event())
        .count();

    Ok(FitResult {
        coefficients: report.beta_hat.clone(),
        covariance: var_beta,
        se,
        ci,
        level,
        report,
        n: sample.n(),
        n_effective: eff.len(),
        n_events_effective,
        floored_weights: ctx.floored_weights,
    })
}
