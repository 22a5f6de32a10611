//! Point estimation: the LP-based non-smooth estimator, Newton–Raphson on
//! the smoothed score at fixed bandwidth, and the full iterative algorithm
//! that alternates coefficient and covariance updates.

use nalgebra::{DMatrix, DVector};

use crate::data::{FitSpec, HPolicy, SurvivalSample};
use crate::error::{Error, Result};
use crate::inference::{resample_v, sandwich};
use crate::km::fit_censoring_km;
use crate::lad::solve_weighted_lad;
use crate::score::{pseudo_rows, slope_matrix, u_nonsmooth, u_smoothed, ScoreContext, SmoothingMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    NonSmoothLP,
    SmoothedFixedH,
    SmoothedIterative,
}

/// Outcome of a point-estimation run.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub beta_hat: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Max-abs value of the relevant estimating function at `beta_hat`.
    pub final_score_norm: f64,
    pub method: SolveMethod,
    /// Set when the iterative policy lost positive definiteness and the fit
    /// fell back to the fixed-identity bandwidth.
    pub fell_back_to_fixed_h: bool,
}

fn check_identifiable(ctx: &ScoreContext) -> Result<()> {
    let needed = ctx.dim;
    let have = ctx.n_weighted_events();
    if have < needed {
        return Err(Error::Unidentifiable {
            reason: format!("only {have} weighted events beyond t0, need at least {needed}"),
        });
    }
    Ok(())
}

/// Non-smooth estimator: weighted LAD with the two large-M pseudo-rows,
/// solved to LP optimality.
pub fn fit_nonsmooth(spec: &FitSpec, sample: &SurvivalSample) -> Result<SolveReport> {
    let curve = fit_censoring_km(sample);
    let ctx = ScoreContext::new(sample, spec, &curve)?;
    check_identifiable(&ctx)?;

    let mut rows: Vec<(Vec<f64>, f64, f64)> = Vec::with_capacity(ctx.eff.len() + 2);
    for (k, x) in ctx.x_rows.iter().enumerate() {
        if ctx.w[k] > 0.0 {
            rows.push((x.iter().copied().collect(), ctx.y[k], ctx.w[k]));
        }
    }
    let (a, b) = pseudo_rows(&ctx);
    rows.push((a.iter().copied().collect(), spec.big_m, 1.0));
    rows.push((b.iter().copied().collect(), spec.big_m, 1.0));

    let fit = solve_weighted_lad(&rows)?;
    let beta = DVector::from_vec(fit.beta);
    if spec.big_m - beta.dot(&a) < 0.0 || spec.big_m - beta.dot(&b) < 0.0 {
        return Err(Error::BigMTooSmall { big_m: spec.big_m });
    }
    let score = u_nonsmooth(&beta, &ctx);
    Ok(SolveReport {
        beta_hat: beta,
        iterations: fit.pivots,
        converged: true,
        final_score_norm: score.amax(),
        method: SolveMethod::NonSmoothLP,
        fell_back_to_fixed_h: false,
    })
}

/// One damped Newton update; halves the step up to 10 times if the l2 score
/// norm does not decrease, then accepts the best candidate seen.
fn newton_step(
    beta: &DVector<f64>,
    u: &DVector<f64>,
    ctx: &ScoreContext,
    h: &SmoothingMatrix,
    used_pinv: &mut bool,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let a = slope_matrix(beta, ctx, h)?;
    let step = match a.clone().lu().solve(u) {
        Some(s) if s.iter().all(|v| v.is_finite()) => s,
        _ => {
            if *used_pinv {
                return Err(Error::SingularSlope);
            }
            *used_pinv = true;
            let pinv = a
                .svd(true, true)
                .pseudo_inverse(1e-12)
                .map_err(|_| Error::SingularSlope)?;
            &pinv * u
        }
    };

    let base_norm = u.norm();
    let mut scale = 1.0;
    let mut best: Option<(f64, DVector<f64>, DVector<f64>)> = None;
    for _ in 0..=10 {
        let cand = beta - scale * &step;
        let u_cand = u_smoothed(&cand, ctx, h)?;
        let norm = u_cand.norm();
        if best.as_ref().is_none_or(|(bn, _, _)| norm < *bn) {
            best = Some((norm, cand, u_cand));
        }
        if norm < base_norm {
            break;
        }
        scale *= 0.5;
    }
    let (_, cand, u_cand) = best.unwrap();
    Ok((cand, u_cand))
}

fn newton_solve(
    init: DVector<f64>,
    ctx: &ScoreContext,
    h: &SmoothingMatrix,
    spec: &FitSpec,
) -> Result<(DVector<f64>, usize, f64)> {
    let mut beta = init;
    let mut u = u_smoothed(&beta, ctx, h)?;
    let mut used_pinv = false;
    for iter in 1..=spec.max_iter {
        let (next, u_next) = newton_step(&beta, &u, ctx, h, &mut used_pinv)?;
        let delta = (&next - &beta).amax();
        beta = next;
        u = u_next;
        if delta <= spec.tol || u.amax() <= spec.tol {
            return Ok((beta, iter, u.amax()));
        }
    }
    Err(Error::MaxIterExceeded {
        max_iter: spec.max_iter,
    })
}

/// Smoothed estimator at the fixed bandwidth H = n⁻¹·I.
///
/// `init` defaults to the non-smooth estimator when not supplied.
pub fn fit_smoothed(
    spec: &FitSpec,
    sample: &SurvivalSample,
    init: Option<DVector<f64>>,
) -> Result<SolveReport> {
    let curve = fit_censoring_km(sample);
    let ctx = ScoreContext::new(sample, spec, &curve)?;
    check_identifiable(&ctx)?;
    let init = match init {
        Some(b) => {
            if b.len() != ctx.dim || b.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidSpec("initial coefficients invalid".into()));
            }
            b
        }
        None => fit_nonsmooth(spec, sample)?.beta_hat,
    };
    let h = SmoothingMatrix::identity(ctx.dim, ctx.n_total);
    let (beta, iterations, score_norm) = newton_solve(init, &ctx, &h, spec)?;
    Ok(SolveReport {
        beta_hat: beta,
        iterations,
        converged: true,
        final_score_norm: score_norm,
        method: SolveMethod::SmoothedFixedH,
        fell_back_to_fixed_h: false,
    })
}

/// Full iterative algorithm: initialize at the non-smooth estimate, then
/// alternate a Newton coefficient update with a sandwich covariance update,
/// feeding the covariance back into the bandwidth.
///
/// Returns the coefficient report and the asymptotic covariance Σ̂, with
/// Var(β̂) = n⁻¹·Σ̂. If the covariance loses positive definiteness the fit
/// falls back to the fixed-identity bandwidth and says so in the report.
pub fn fit_iterative(
    spec: &FitSpec,
    sample: &SurvivalSample,
) -> Result<(SolveReport, DMatrix<f64>)> {
    let curve = fit_censoring_km(sample);
    let ctx = ScoreContext::new(sample, spec, &curve)?;
    check_identifiable(&ctx)?;
    let n = ctx.n_total;

    let mut beta = fit_nonsmooth(spec, sample)?.beta_hat;
    let mut sigma = DMatrix::identity(ctx.dim, ctx.dim);
    let mut h = SmoothingMatrix::from_sigma(&sigma, n);
    let mut used_pinv = false;
    let mut u = u_smoothed(&beta, &ctx, &h)?;

    let mut iterations = 0;
    let mut converged = false;
    for iter in 1..=spec.max_iter {
        iterations = iter;
        let (beta_next, u_next) = newton_step(&beta, &u, &ctx, &h, &mut used_pinv)?;

        let a_hat = slope_matrix(&beta_next, &ctx, &h)?;
        let v_hat = resample_v(&beta_next, spec, sample, &h)?;
        let sigma_next = sandwich(&a_hat, &v_hat)?;
        if sigma_next.clone().cholesky().is_none() {
            // Lost positive definiteness: report and redo under FixedIdentity.
            let mut fixed = spec.clone();
            fixed.h_policy = HPolicy::FixedIdentity;
            let mut report = fit_smoothed(&fixed, sample, Some(beta_next))?;
            report.method = SolveMethod::SmoothedIterative;
            report.fell_back_to_fixed_h = true;
            let h_fixed = SmoothingMatrix::identity(ctx.dim, n);
            let a_fixed = slope_matrix(&report.beta_hat, &ctx, &h_fixed)?;
            let v_fixed = resample_v(&report.beta_hat, &fixed, sample, &h_fixed)?;
            let sigma_fixed = sandwich(&a_fixed, &v_fixed)?;
            return Ok((report, sigma_fixed));
        }

        let beta_delta = (&beta_next - &beta).amax();
        let sigma_delta = (&sigma_next - &sigma).amax() / sigma.amax().max(1.0);
        beta = beta_next;
        u = u_next;
        sigma = sigma_next;
        h = SmoothingMatrix::from_sigma(&sigma, n);
        if beta_delta <= spec.tol && sigma_delta <= 1e-4 {
            converged = true;
            break;
        }
    }

    let report = SolveReport {
        final_score_norm: u.amax(),
        beta_hat: beta,
        iterations,
        converged,
        method: SolveMethod::SmoothedIterative,
        fell_back_to_fixed_h: false,
    };
    Ok((report, sigma))
}
