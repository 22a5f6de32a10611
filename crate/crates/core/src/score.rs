//! Estimating-function evaluations: the non-smooth score, its L1 objective,
//! the induced-smoothed score, its analytic slope matrix, and the
//! multiplier-perturbed smoothed score.

use nalgebra::{DMatrix, DVector};

use crate::data::{effective_indices, validate_sample, FitSpec, SurvivalSample, Weighting};
use crate::error::{Error, Result};
use crate::km::{ipcw_weight, StepSurvival};
use crate::normal::{std_normal_cdf, std_normal_pdf};

/// The O(n⁻¹)-scaled smoothing matrix H.
#[derive(Debug, Clone)]
pub struct SmoothingMatrix {
    h: DMatrix<f64>,
}

impl SmoothingMatrix {
    /// H = n⁻¹·Σ.
    pub fn from_sigma(sigma: &DMatrix<f64>, n: usize) -> Self {
        SmoothingMatrix {
            h: sigma / n as f64,
        }
    }

    /// H = n⁻¹·I.
    pub fn identity(dim: usize, n: usize) -> Self {
        SmoothingMatrix {
            h: DMatrix::identity(dim, dim) / n as f64,
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.h
    }

    /// Quadratic form x'Hx.
    pub fn quad(&self, x: &DVector<f64>) -> f64 {
        (x.transpose() * &self.h * x)[(0, 0)]
    }
}

/// Precomputed per-subject quantities entering every estimating function:
/// design rows, residual-life responses y = log(Z - t0) and IPCW weights,
/// restricted to the effective subjects (Z > t0).
#[derive(Debug, Clone)]
pub struct ScoreContext {
    pub x_rows: Vec<DVector<f64>>,
    pub y: Vec<f64>,
    pub w: Vec<f64>,
    /// Original sample indices of the effective subjects.
    pub eff: Vec<usize>,
    pub n_total: usize,
    pub dim: usize,
    pub tau: f64,
    pub t0: f64,
    pub scheme: Weighting,
    /// Number of uncensored effective subjects whose Ĝ(Z) hit the floor.
    pub floored_weights: usize,
}

impl ScoreContext {
    pub fn new(sample: &SurvivalSample, spec: &FitSpec, curve: &StepSurvival) -> Result<Self> {
        spec.validate()?;
        validate_sample(sample)?;
        let eff = effective_indices(sample, spec.t0)?;
        let dim = sample.dim();
        let mut x_rows = Vec::with_capacity(eff.len());
        let mut y = Vec::with_capacity(eff.len());
        let mut w = Vec::with_capacity(eff.len());
        let mut floored_weights = 0;
        for &i in &eff {
            let row = DVector::from_vec(sample.design_row(i));
            if row.iter().all(|&x| x == 0.0) {
                return Err(Error::ZeroSmoothingScale { index: i });
            }
            x_rows.push(row);
            y.push((sample.subjects[i].time - spec.t0).ln());
            let (wi, fl) = ipcw_weight(i, spec.t0, curve, sample, spec.weighting, spec.g_floor);
            w.push(wi);
            floored_weights += usize::from(fl);
        }
        Ok(ScoreContext {
            x_rows,
            y,
            w,
            eff,
            n_total: sample.n(),
            dim,
            tau: spec.tau,
            t0: spec.t0,
            scheme: spec.weighting,
            floored_weights,
        })
    }

    /// Number of effective subjects with positive weight (events beyond t0).
    pub fn n_weighted_events(&self) -> usize {
        self.w.iter().filter(|&&w| w > 0.0).count()
    }

    fn check_dim(&self, beta: &DVector<f64>) {
        assert_eq!(beta.len(), self.dim, "coefficient dimension mismatch");
    }
}

/// Non-smooth weighted score, averaged over the full sample size.
pub fn u_nonsmooth(beta: &DVector<f64>, ctx: &ScoreContext) -> DVector<f64> {
    ctx.check_dim(beta);
    let mut acc = DVector::zeros(ctx.dim);
    for (k, x) in ctx.x_rows.iter().enumerate() {
        let ind = if ctx.y[k] <= x.dot(beta) { 1.0 } else { 0.0 };
        let summand = match ctx.scheme {
            Weighting::Li => ind * ctx.w[k] - ctx.tau,
            Weighting::Kim => ctx.w[k] * (ind - ctx.tau),
        };
        acc.axpy(summand, x, 1.0);
    }
    acc / ctx.n_total as f64
}

/// Sums defining the two pseudo-observation rows of the L1 objective.
///
/// The first bounds the weighted design sum, the second the τ-scaled sum;
/// under the Kim scheme the latter carries the IPCW weight as well, so the
/// objective's subgradient stays proportional to the matching score.
pub fn pseudo_rows(ctx: &ScoreContext) -> (DVector<f64>, DVector<f64>) {
    let mut a = DVector::zeros(ctx.dim);
    let mut b = DVector::zeros(ctx.dim);
    for (k, x) in ctx.x_rows.iter().enumerate() {
        a.axpy(-ctx.w[k], x, 1.0);
        match ctx.scheme {
            Weighting::Li => b.axpy(2.0 * ctx.tau, x, 1.0),
            Weighting::Kim => b.axpy(2.0 * ctx.tau * ctx.w[k], x, 1.0),
        }
    }
    (a, b)
}

/// Weighted LAD objective with the two large-M pseudo-observation terms.
pub fn l1_objective(beta: &DVector<f64>, ctx: &ScoreContext, big_m: f64) -> Result<f64> {
    ctx.check_dim(beta);
    let mut main = 0.0;
    for (k, x) in ctx.x_rows.iter().enumerate() {
        main += ctx.w[k] * (ctx.y[k] - x.dot(beta)).abs();
    }
    main /= ctx.n_total as f64;
    let (a, b) = pseudo_rows(ctx);
    let arg_a = big_m - beta.dot(&a);
    let arg_b = big_m - beta.dot(&b);
    if arg_a < 0.0 || arg_b < 0.0 {
        return Err(Error::BigMTooSmall { big_m });
    }
    Ok(main + arg_a + arg_b)
}

fn smoothing_scale(ctx: &ScoreContext, h: &SmoothingMatrix, k: usize) -> Result<f64> {
    let q = h.quad(&ctx.x_rows[k]);
    if q <= 0.0 {
        return Err(Error::ZeroSmoothingScale { index: ctx.eff[k] });
    }
    Ok(q.sqrt())
}

/// Induced-smoothed score: the indicator replaced by Φ at bandwidth √(x'Hx).
pub fn u_smoothed(beta: &DVector<f64>, ctx: &ScoreContext, h: &SmoothingMatrix) -> Result<DVector<f64>> {
    ctx.check_dim(beta);
    let mut acc = DVector::zeros(ctx.dim);
    for (k, x) in ctx.x_rows.iter().enumerate() {
        let sigma = smoothing_scale(ctx, h, k)?;
        let phi = std_normal_cdf((x.dot(beta) - ctx.y[k]) / sigma);
        let summand = match ctx.scheme {
            Weighting::Li => phi * ctx.w[k] - ctx.tau,
            Weighting::Kim => ctx.w[k] * (phi - ctx.tau),
        };
        acc.axpy(summand, x, 1.0);
    }
    Ok(acc / ctx.n_total as f64)
}

/// Multiplier-perturbed smoothed score.
///
/// `ctx` must be built with the perturbed curve Ĝ*; `eta` is indexed by the
/// full sample and scales each effective summand, including the −τ term.
pub fn u_smoothed_perturbed(
    beta: &DVector<f64>,
    ctx: &ScoreContext,
    h: &SmoothingMatrix,
    eta: &[f64],
) -> Result<DVector<f64>> {
    ctx.check_dim(beta);
    if eta.len() != ctx.n_total {
        return Err(Error::LengthMismatch {
            expected: ctx.n_total,
            found: eta.len(),
        });
    }
    let mut acc = DVector::zeros(ctx.dim);
    for (k, x) in ctx.x_rows.iter().enumerate() {
        let sigma = smoothing_scale(ctx, h, k)?;
        let phi = std_normal_cdf((x.dot(beta) - ctx.y[k]) / sigma);
        let summand = match ctx.scheme {
            Weighting::Li => phi * ctx.w[k] - ctx.tau,
            Weighting::Kim => ctx.w[k] * (phi - ctx.tau),
        };
        acc.axpy(eta[ctx.eff[k]] * summand, x, 1.0);
    }
    Ok(acc / ctx.n_total as f64)
}

/// Analytic Jacobian of the smoothed score at `beta`.
///
/// Positive-semidefinite by construction; the Newton step β − Â⁻¹Ũ descends
/// with this sign convention.
pub fn slope_matrix(
    beta: &DVector<f64>,
    ctx: &ScoreContext,
    h: &SmoothingMatrix,
) -> Result<DMatrix<f64>> {
    ctx.check_dim(beta);
    let mut acc = DMatrix::zeros(ctx.dim, ctx.dim);
    for (k, x) in ctx.x_rows.iter().enumerate() {
        if ctx.w[k] == 0.0 {
            continue;
        }
        let sigma = smoothing_scale(ctx, h, k)?;
        let dens = std_normal_pdf((x.dot(beta) - ctx.y[k]) / sigma);
        let scale = ctx.w[k] * dens / sigma;
        acc.syger(scale, x, x, 1.0);
    }
    acc.fill_upper_triangle_with_lower_triangle();
    Ok(acc / ctx.n_total as f64)
}
