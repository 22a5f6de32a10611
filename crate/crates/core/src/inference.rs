//! Resampling-based score variance, sandwich covariance, standard errors
//! and Wald intervals.

use nalgebra::{DMatrix, DVector};

use crate::data::{FitSpec, SurvivalSample};
use crate::error::{Error, Result};
use crate::km::fit_perturbed_km;
use crate::normal::std_normal_quantile;
use crate::rng::{Purpose, Stream};
use crate::score::{u_smoothed_perturbed, ScoreContext, SmoothingMatrix};

/// Law of the resampling multipliers (positive, mean 1, variance 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MultiplierLaw {
    Exponential,
}

/// Sandwich covariance output.
#[derive(Debug, Clone)]
pub struct CovarianceResult {
    /// Asymptotic covariance Σ̂ of √n(β̂ − β).
    pub sigma: DMatrix<f64>,
    /// Coefficient covariance n⁻¹·Σ̂.
    pub var_beta: DMatrix<f64>,
    pub se: Vec<f64>,
    pub resample_m: usize,
    pub multiplier_law: MultiplierLaw,
}

/// Multiplier vector for perturbation replicate `k`; entry i is drawn from
/// the stream keyed by (seed, replicate, subject), so a permutation of
/// subjects permutes the draws with them.
fn multipliers(seed: u64, replicate: usize, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            Stream::new(seed, Purpose::Multiplier, &[replicate as u64, i as u64]).exponential()
        })
        .collect()
}

/// Middle matrix V̂: n times the sample covariance of the m perturbed scores
/// evaluated at `beta_hat`, so V̂ estimates the variance of √n·Ũ.
pub fn resample_v(
    beta_hat: &DVector<f64>,
    spec: &FitSpec,
    sample: &SurvivalSample,
    h: &SmoothingMatrix,
) -> Result<DMatrix<f64>> {
    let m = spec.resample_m;
    let n = sample.n();
    let dim = beta_hat.len();

    let mut scores = Vec::with_capacity(m);
    for k in 0..m {
        let eta = multipliers(spec.seed, k, n);
        let curve = fit_perturbed_km(sample, &eta)?;
        let ctx = ScoreContext::new(sample, spec, &curve)?;
        scores.push(u_smoothed_perturbed(beta_hat, &ctx, h, &eta)?);
    }

    let mut mean = DVector::zeros(dim);
    for s in &scores {
        mean += s;
    }
    mean /= m as f64;

    let mut cov = DMatrix::zeros(dim, dim);
    for s in &scores {
        let d = s - &mean;
        cov.syger(1.0, &d, &d, 1.0);
    }
    cov.fill_upper_triangle_with_lower_triangle();
    cov /= (m - 1) as f64;
    if cov.amax() == 0.0 {
        return Err(Error::DegenerateResamples);
    }
    Ok(cov * n as f64)
}

/// Σ̂ = Â⁻¹ V̂ Â⁻ᵀ, symmetrized against round-off.
pub fn sandwich(a_hat: &DMatrix<f64>, v_hat: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let lu = a_hat.clone().lu();
    let left = lu.solve(v_hat).ok_or(Error::SingularSlope)?;
    let s_t = lu.solve(&left.transpose()).ok_or(Error::SingularSlope)?;
    if s_t.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSlope);
    }
    Ok((&s_t + s_t.transpose()) * 0.5)
}

/// Full covariance pass at a solved β̂.
pub fn covariance(
    beta_hat: &DVector<f64>,
    spec: &FitSpec,
    sample: &SurvivalSample,
    h: &SmoothingMatrix,
    a_hat: &DMatrix<f64>,
) -> Result<CovarianceResult> {
    let v_hat = resample_v(beta_hat, spec, sample, h)?;
    let sigma = sandwich(a_hat, &v_hat)?;
    let var_beta = &sigma / sample.n() as f64;
    let se = (0..beta_hat.len())
        .map(|j| var_beta[(j, j)].max(0.0).sqrt())
        .collect();
    Ok(CovarianceResult {
        sigma,
        var_beta,
        se,
        resample_m: spec.resample_m,
        multiplier_law: MultiplierLaw::Exponential,
    })
}

/// Per-coefficient Wald confidence intervals at the given level.
pub fn wald_ci(beta_hat: &DVector<f64>, var_beta: &DMatrix<f64>, level: f64) -> Vec<(f64, f64)> {
    assert!(level > 0.0 && level < 1.0, "level must be in (0,1)");
    let z = std_normal_quantile((1.0 + level) / 2.0);
    (0..beta_hat.len())
        .map(|j| {
            let se = var_beta[(j, j)].max(0.0).sqrt();
            (beta_hat[j] - z * se, beta_hat[j] + z * se)
        })
        .collect()
}
