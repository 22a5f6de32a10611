//! Survival-data representations, validation and risk-set selection.

use crate::error::{Error, Result};

/// One observed subject: time Z = min(T, C), event indicator and covariates.
#[derive(Debug, Clone)]
pub struct Subject {
    /// Observed time Z, in the same units as the follow-up time t0.
    pub time: f64,
    /// 1 = event, 0 = censored.
    pub status: u8,
    /// Covariate row, excluding the intercept.
    pub covariates: Vec<f64>,
}

impl Subject {
    pub fn new(time: f64, status: u8, covariates: Vec<f64>) -> Self {
        Subject {
            time,
            status,
            covariates,
        }
    }

    #[inline]
    pub fn is_event(&self) -> bool {
        self.status == 1
    }
}

/// A sample of independent subjects sharing a covariate dimension.
#[derive(Debug, Clone)]
pub struct SurvivalSample {
    pub subjects: Vec<Subject>,
    /// Prepend a constant-1 column when building design rows.
    pub intercept: bool,
    pub covariate_names: Vec<String>,
}

impl SurvivalSample {
    pub fn new(subjects: Vec<Subject>, intercept: bool, covariate_names: Vec<String>) -> Self {
        SurvivalSample {
            subjects,
            intercept,
            covariate_names,
        }
    }

    pub fn n(&self) -> usize {
        self.subjects.len()
    }

    /// Covariate dimension p (without intercept).
    pub fn p(&self) -> usize {
        self.subjects.first().map_or(0, |s| s.covariates.len())
    }

    /// Coefficient dimension: p plus the intercept column if present.
    pub fn dim(&self) -> usize {
        self.p() + usize::from(self.intercept)
    }

    /// Design row for subject `i`, with intercept column if configured.
    pub fn design_row(&self, i: usize) -> Vec<f64> {
        let s = &self.subjects[i];
        let mut row = Vec::with_capacity(self.dim());
        if self.intercept {
            row.push(1.0);
        }
        row.extend_from_slice(&s.covariates);
        row
    }

    pub fn n_events(&self) -> usize {
        self.subjects.iter().filter(|s| s.is_event()).count()
    }
}

/// Check all sample invariants; returns `Ok(())` iff the sample is usable.
pub fn validate_sample(sample: &SurvivalSample) -> Result<()> {
    let p = sample.p();
    let mut any_event = false;
    for (i, s) in sample.subjects.iter().enumerate() {
        if s.covariates.len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                found: s.covariates.len(),
                index: i,
            });
        }
        if !s.time.is_finite() {
            return Err(Error::NonFiniteValue {
                what: "time",
                index: i,
            });
        }
        if s.time <= 0.0 {
            return Err(Error::NonPositiveTime {
                index: i,
                time: s.time,
            });
        }
        if s.status > 1 {
            return Err(Error::InvalidSpec(format!(
                "subject {i} has status {} outside {{0,1}}",
                s.status
            )));
        }
        if s.covariates.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteValue {
                what: "covariates",
                index: i,
            });
        }
        any_event |= s.is_event();
    }
    if !any_event {
        return Err(Error::NoEvents);
    }
    Ok(())
}

/// Indices with Z_i > t0, in original order.
///
/// The strict inequality keeps log(Z_i - t0) finite for every selected
/// subject; ties with t0 are excluded.
pub fn effective_indices(sample: &SurvivalSample, t0: f64) -> Result<Vec<usize>> {
    let idx: Vec<usize> = sample
        .subjects
        .iter()
        .enumerate()
        .filter(|(_, s)| s.time > t0)
        .map(|(i, _)| i)
        .collect();
    if idx.is_empty() {
        return Err(Error::EmptyRiskSet { t0 });
    }
    Ok(idx)
}

/// Weighting scheme selecting where the IPCW enters the estimating function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weighting {
    /// Weight δ·Ĝ(t0)/Ĝ(Z) applied to the indicator term only.
    Li,
    /// Weight δ/Ĝ(Z) applied to the whole (indicator − τ) term.
    Kim,
}

/// Smoothing-bandwidth policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HPolicy {
    /// H = n⁻¹·I throughout.
    FixedIdentity,
    /// H = n⁻¹·Σ̂, updated between Newton and covariance passes.
    Iterative,
}

/// Fit configuration: quantile level, follow-up time, solver and resampling
/// controls.
#[derive(Debug, Clone)]
pub struct FitSpec {
    pub tau: f64,
    pub t0: f64,
    pub weighting: Weighting,
    pub h_policy: HPolicy,
    pub max_iter: usize,
    pub tol: f64,
    pub resample_m: usize,
    pub seed: u64,
    pub big_m: f64,
    pub g_floor: f64,
}

impl FitSpec {
    pub fn new(tau: f64, t0: f64) -> Self {
        FitSpec {
            tau,
            t0,
            weighting: Weighting::Li,
            h_policy: HPolicy::FixedIdentity,
            max_iter: 100,
            tol: 1e-8,
            resample_m: 200,
            seed: 0,
            big_m: 1e6,
            g_floor: 1e-10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::InvalidSpec(format!("tau = {} not in (0,1)", self.tau)));
        }
        if !(self.t0 >= 0.0 && self.t0.is_finite()) {
            return Err(Error::InvalidSpec(format!("t0 = {} must be >= 0", self.t0)));
        }
        if self.tol <= 0.0 {
            return Err(Error::InvalidSpec("tol must be > 0".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidSpec("max_iter must be >= 1".into()));
        }
        if self.resample_m < 2 {
            return Err(Error::InvalidSpec("resample_m must be >= 2".into()));
        }
        if self.big_m <= 0.0 {
            return Err(Error::InvalidSpec("big_m must be > 0".into()));
        }
        if !(self.g_floor > 0.0 && self.g_floor < 1.0) {
            return Err(Error::InvalidSpec("g_floor must be in (0,1)".into()));
        }
        Ok(())
    }
}
