//! Monte Carlo harness: Weibull truth calibration, censoring calibration,
//! data generation, and the PE/ESE/SD/CP summary grid, plus a paired
//! non-smooth vs smoothed comparison.

use rayon::prelude::*;

use crate::data::{FitSpec, Subject, SurvivalSample};
use crate::error::{Error, Result};
use crate::fit::fit;
use crate::normal::std_normal_quantile;
use crate::rng::{replicate_seed, Purpose, Stream};
use crate::solver::{fit_nonsmooth, fit_smoothed};

/// Covariate-generating law for the simulation designs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovariateLaw {
    /// Binary with success probability 0.5.
    Bernoulli,
    /// Uniform on (0, 1).
    Uniform,
}

/// A Weibull data-generating configuration.
#[derive(Debug, Clone)]
pub struct SimScenario {
    pub n: usize,
    pub tau: f64,
    pub t0_list: Vec<f64>,
    /// Weibull exponent in S(t) = exp{-(ρt)^κ}.
    pub kappa: f64,
    /// Intercept at t0 = 0 (log median-scale lifetime of the x = 0 group).
    pub beta0_base: f64,
    /// Slope at t0 = 0.
    pub beta1_base: f64,
    pub censor_target: f64,
    pub covariate_law: CovariateLaw,
    pub reps: usize,
    pub seed: u64,
}

impl SimScenario {
    /// Benchmark default: n = 200, τ = 0.5, log(5) baseline intercept.
    pub fn new() -> Self {
        SimScenario {
            n: 200,
            tau: 0.5,
            t0_list: vec![0.0],
            kappa: 2.0,
            beta0_base: 5.0f64.ln(),
            beta1_base: 0.0,
            censor_target: 0.0,
            covariate_law: CovariateLaw::Bernoulli,
            reps: 500,
            seed: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::InvalidSpec(format!("tau = {} not in (0,1)", self.tau)));
        }
        if self.kappa <= 0.0 {
            return Err(Error::InvalidSpec("kappa must be > 0".into()));
        }
        if !(0.0..=0.95).contains(&self.censor_target) {
            return Err(Error::InvalidSpec(
                "censor_target must be in [0, 0.95]".into(),
            ));
        }
        if self.reps == 0 {
            return Err(Error::InvalidSpec("reps must be >= 1".into()));
        }
        if self.n == 0 {
            return Err(Error::InvalidSpec("n must be >= 1".into()));
        }
        if self.t0_list.is_empty() {
            return Err(Error::InvalidSpec("t0_list must be nonempty".into()));
        }
        Ok(())
    }

    /// Weibull rate for covariate value x.
    fn rate(&self, x: f64) -> f64 {
        solve_weibull_rate(self.tau, self.kappa, self.beta0_base + self.beta1_base * x)
    }
}

impl Default for SimScenario {
    fn default() -> Self {
        Self::new()
    }
}

/// Rate ρ so that the τ-th quantile of the Weibull lifetime is
/// exp(target_quantile_log): ρ = (−log(1−τ))^{1/κ} / exp(target).
pub fn solve_weibull_rate(tau: f64, kappa: f64, target_quantile_log: f64) -> f64 {
    (-(1.0 - tau).ln()).powf(1.0 / kappa) / target_quantile_log.exp()
}

/// True regression coefficients of the residual-life quantile model at t0,
/// for the two-group design with rates `rho0` (x = 0) and `rho1` (x = 1).
pub fn true_coefficients(
    tau: f64,
    kappa: f64,
    rho0: f64,
    rho1: f64,
    t0: f64,
) -> Result<(f64, f64)> {
    let resid_quantile = |rho: f64| -> Result<f64> {
        let q = ((rho * t0).powf(kappa) - (1.0 - tau).ln()).powf(1.0 / kappa) / rho - t0;
        if q <= 0.0 {
            return Err(Error::NonPositiveResidualQuantile { t0 });
        }
        Ok(q)
    };
    let beta0 = resid_quantile(rho0)?.ln();
    let beta1 = resid_quantile(rho1)?.ln() - beta0;
    Ok((beta0, beta1))
}

/// Adaptive Simpson quadrature.
fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(a: f64, fa: f64, b: f64, fb: f64, fm: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(a, fa, m, fm, flm);
        let right = simpson(m, fm, b, fb, frm);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            left + right + (left + right - whole) / 15.0
        } else {
            recurse(f, a, fa, m, fm, flm, left, tol / 2.0, depth - 1)
                + recurse(f, m, fm, b, fb, frm, right, tol / 2.0, depth - 1)
        }
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = simpson(a, fa, b, fb, fm);
    recurse(f, a, fa, b, fb, fm, whole, tol, 48)
}

/// Marginal survival of the lifetime under the scenario's covariate mixture.
fn marginal_survival(scenario: &SimScenario, u: f64) -> f64 {
    let surv = |x: f64| (-((scenario.rate(x) * u).powf(scenario.kappa))).exp();
    match scenario.covariate_law {
        CovariateLaw::Bernoulli => 0.5 * (surv(0.0) + surv(1.0)),
        CovariateLaw::Uniform => {
            // Composite Simpson over the covariate; the integrand is smooth.
            let panels = 128;
            let h = 1.0 / panels as f64;
            let mut acc = surv(0.0) + surv(1.0);
            for k in 1..panels {
                let x = k as f64 * h;
                acc += if k % 2 == 1 { 4.0 } else { 2.0 } * surv(x);
            }
            acc * h / 3.0
        }
    }
}

/// Upper bound c of the Uniform(0, c) censoring law reaching the target
/// censoring proportion; `f64::INFINITY` when the target is zero.
pub fn calibrate_censoring(scenario: &SimScenario) -> Result<f64> {
    scenario.validate()?;
    if scenario.censor_target == 0.0 {
        return Ok(f64::INFINITY);
    }
    let target = scenario.censor_target;
    // P(C < T) = (1/c)·∫_0^c S_T(u) du, strictly decreasing in c from 1 to 0.
    let prop = |c: f64| -> f64 {
        adaptive_simpson(&|u| marginal_survival(scenario, u), 0.0, c, 1e-8) / c
    };
    let mut hi = 1.0;
    let mut grow = 0;
    while prop(hi) > target {
        hi *= 2.0;
        grow += 1;
        if grow > 60 {
            return Err(Error::TargetUnreachable { target });
        }
    }
    let mut lo = 0.0;
    while (hi - lo) > 1e-6 * hi {
        let mid = 0.5 * (lo + hi);
        if prop(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Generate one replicate dataset; deterministic in (seed, replicate).
///
/// `censor_bound` is the calibrated c (infinite sentinel = no censoring).
pub fn generate_dataset(
    scenario: &SimScenario,
    replicate: usize,
    censor_bound: f64,
) -> SurvivalSample {
    let rep = replicate as u64;
    let mut subjects = Vec::with_capacity(scenario.n);
    for i in 0..scenario.n {
        let id = i as u64;
        let x = match scenario.covariate_law {
            CovariateLaw::Bernoulli => {
                let u = Stream::new(scenario.seed, Purpose::Covariate, &[rep, id]).uniform_open();
                if u < 0.5 {
                    1.0
                } else {
                    0.0
                }
            }
            CovariateLaw::Uniform => {
                Stream::new(scenario.seed, Purpose::Covariate, &[rep, id]).uniform_open()
            }
        };
        let u = Stream::new(scenario.seed, Purpose::EventTime, &[rep, id]).uniform_open();
        let t = (-u.ln()).powf(1.0 / scenario.kappa) / scenario.rate(x);
        let c = if censor_bound.is_finite() {
            censor_bound
                * Stream::new(scenario.seed, Purpose::CensorTime, &[rep, id]).uniform_open()
        } else {
            f64::INFINITY
        };
        let (z, status) = if t <= c { (t, 1) } else { (c, 0) };
        subjects.push(Subject::new(z, status, vec![x]));
    }
    SurvivalSample::new(subjects, true, vec!["x1".into()])
}

/// One fitted replicate cell.
#[derive(Debug, Clone)]
pub struct RepFit {
    pub beta: Vec<f64>,
    pub se: Vec<f64>,
}

/// Per-replicate, per-t0 outcome; `fit` is None when the replicate failed
/// (unidentifiable or non-converged).
#[derive(Debug, Clone)]
pub struct RepRecord {
    pub rep: usize,
    pub t0: f64,
    pub fit: Option<RepFit>,
}

/// Summary cell of the simulation grid.
#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub t0: f64,
    pub cens: f64,
    pub coef: String,
    pub pe: f64,
    pub ese: f64,
    /// None when fewer than two replicates were usable.
    pub sd: Option<f64>,
    pub cp: f64,
    pub n_failed: usize,
    /// Set when more than 20% of the cell's replicates failed.
    pub unidentifiable: bool,
}

/// The PE/ESE/SD/CP grid over (t0, coefficient).
#[derive(Debug, Clone)]
pub struct SimSummary {
    pub rows: Vec<SummaryRow>,
    pub reps: usize,
}

impl SimSummary {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("t0\tcens\tcoef\tPE\tESE\tSD\tCP\tn_failed\n");
        for r in &self.rows {
            let sd = r
                .sd
                .map_or_else(|| "NA".to_string(), |v| format!("{v:.6}"));
            out.push_str(&format!(
                "{}\t{}\t{}\t{:.6}\t{:.6}\t{}\t{:.4}\t{}\n",
                r.t0, r.cens, r.coef, r.pe, r.ese, sd, r.cp, r.n_failed
            ));
        }
        out
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_sd(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let m = mean(xs);
    Some(
        (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt(),
    )
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let ma = mean(a);
    let mb = mean(b);
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    sab / (saa.sqrt() * sbb.sqrt())
}

/// Build the per-replicate FitSpec for a harness cell.
fn cell_spec(template: &FitSpec, scenario: &SimScenario, t0: f64, rep: usize) -> FitSpec {
    let mut fs = template.clone();
    fs.tau = scenario.tau;
    fs.t0 = t0;
    fs.seed = replicate_seed(scenario.seed, rep as u64);
    fs
}

/// Per-replicate fit records over the scenario grid, in replicate order.
pub fn monte_carlo_records(scenario: &SimScenario, spec: &FitSpec) -> Result<Vec<RepRecord>> {
    scenario.validate()?;
    spec.validate()?;
    let c = calibrate_censoring(scenario)?;
    let records: Vec<Vec<RepRecord>> = (0..scenario.reps)
        .into_par_iter()
        .map(|rep| {
            let sample = generate_dataset(scenario, rep, c);
            scenario
                .t0_list
                .iter()
                .map(|&t0| {
                    let fs = cell_spec(spec, scenario, t0, rep);
                    let outcome = fit(&fs, &sample, 0.95).ok().and_then(|r| {
                        if r.report.converged {
                            Some(RepFit {
                                beta: r.coefficients.iter().copied().collect(),
                                se: r.se.clone(),
                            })
                        } else {
                            None
                        }
                    });
                    RepRecord {
                        rep,
                        t0,
                        fit: outcome,
                    }
                })
                .collect()
        })
        .collect();
    Ok(records.into_iter().flatten().collect())
}

/// Run the Monte Carlo grid and aggregate PE/ESE/SD/CP per (t0, coefficient).
pub fn run_monte_carlo(scenario: &SimScenario, spec: &FitSpec) -> Result<SimSummary> {
    let records = monte_carlo_records(scenario, spec)?;
    let rho0 = scenario.rate(0.0);
    let rho1 = scenario.rate(1.0);
    let z = std_normal_quantile(0.975);
    let dim = 2;
    let coef_names = ["beta0", "beta1"];

    let mut rows = Vec::new();
    for &t0 in &scenario.t0_list {
        let truths = true_coefficients(scenario.tau, scenario.kappa, rho0, rho1, t0)?;
        let truths = [truths.0, truths.1];
        let cell: Vec<&RepRecord> = records.iter().filter(|r| r.t0 == t0).collect();
        let used: Vec<&RepFit> = cell.iter().filter_map(|r| r.fit.as_ref()).collect();
        let n_failed = cell.len() - used.len();
        debug_assert_eq!(cell.len(), scenario.reps);
        let unidentifiable = n_failed as f64 > 0.2 * cell.len() as f64;
        for j in 0..dim {
            let est: Vec<f64> = used.iter().map(|f| f.beta[j]).collect();
            let ses: Vec<f64> = used.iter().map(|f| f.se[j]).collect();
            let covered = used
                .iter()
                .filter(|f| (f.beta[j] - truths[j]).abs() <= z * f.se[j])
                .count();
            let (pe, ese, sd, cp) = if est.is_empty() {
                (f64::NAN, f64::NAN, None, f64::NAN)
            } else {
                (
                    mean(&est),
                    mean(&ses),
                    sample_sd(&est),
                    covered as f64 / est.len() as f64,
                )
            };
            rows.push(SummaryRow {
                t0,
                cens: scenario.censor_target,
                coef: coef_names[j].to_string(),
                pe,
                ese,
                sd,
                cp,
                n_failed,
                unidentifiable,
            });
        }
    }
    Ok(SimSummary {
        rows,
        reps: scenario.reps,
    })
}

/// One paired replicate: non-smooth and induced-smoothed estimates.
#[derive(Debug, Clone)]
pub struct ComparePair {
    pub rep: usize,
    pub t0: f64,
    pub nonsmooth: Vec<f64>,
    pub smoothed: Vec<f64>,
}

/// Per-(t0, coefficient) summary of the paired comparison.
#[derive(Debug, Clone)]
pub struct CompareCell {
    pub t0: f64,
    pub coef: String,
    pub mean_nonsmooth: f64,
    pub sd_nonsmooth: f64,
    pub mean_smoothed: f64,
    pub sd_smoothed: f64,
    pub correlation: f64,
}

#[derive(Debug, Clone)]
pub struct CompareResult {
    pub pairs: Vec<ComparePair>,
    pub cells: Vec<CompareCell>,
    pub n_failed: usize,
}

impl CompareResult {
    pub fn pairs_tsv(&self) -> String {
        let mut out = String::from("rep\tt0\tcoef\tnonsmooth\tsmoothed\n");
        for p in &self.pairs {
            for (j, (ns, is_)) in p.nonsmooth.iter().zip(&p.smoothed).enumerate() {
                out.push_str(&format!(
                    "{}\t{}\tbeta{}\t{:.6}\t{:.6}\n",
                    p.rep, p.t0, j, ns, is_
                ));
            }
        }
        out
    }

    pub fn cells_tsv(&self) -> String {
        let mut out =
            String::from("t0\tcoef\tmean_NS\tSD_NS\tmean_IS\tSD_IS\tcorr\tn_failed\n");
        for c in &self.cells {
            out.push_str(&format!(
                "{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.4}\t{}\n",
                c.t0,
                c.coef,
                c.mean_nonsmooth,
                c.sd_nonsmooth,
                c.mean_smoothed,
                c.sd_smoothed,
                c.correlation,
                self.n_failed
            ));
        }
        out
    }
}

/// Paired per-replicate estimates from both solvers on shared datasets.
pub fn compare_estimators(scenario: &SimScenario, spec: &FitSpec) -> Result<CompareResult> {
    scenario.validate()?;
    spec.validate()?;
    let c = calibrate_censoring(scenario)?;
    let outcomes: Vec<Vec<Option<ComparePair>>> = (0..scenario.reps)
        .into_par_iter()
        .map(|rep| {
            let sample = generate_dataset(scenario, rep, c);
            scenario
                .t0_list
                .iter()
                .map(|&t0| {
                    let fs = cell_spec(spec, scenario, t0, rep);
                    let ns = fit_nonsmooth(&fs, &sample).ok()?;
                    let is_ = fit_smoothed(&fs, &sample, Some(ns.beta_hat.clone())).ok()?;
                    Some(ComparePair {
                        rep,
                        t0,
                        nonsmooth: ns.beta_hat.iter().copied().collect(),
                        smoothed: is_.beta_hat.iter().copied().collect(),
                    })
                })
                .collect()
        })
        .collect();

    let flat: Vec<Option<ComparePair>> = outcomes.into_iter().flatten().collect();
    let n_failed = flat.iter().filter(|p| p.is_none()).count();
    let pairs: Vec<ComparePair> = flat.into_iter().flatten().collect();

    let mut cells = Vec::new();
    for &t0 in &scenario.t0_list {
        let cell: Vec<&ComparePair> = pairs.iter().filter(|p| p.t0 == t0).collect();
        if cell.is_empty() {
            continue;
        }
        let dim = cell[0].nonsmooth.len();
        for j in 0..dim {
            let ns: Vec<f64> = cell.iter().map(|p| p.nonsmooth[j]).collect();
            let is_: Vec<f64> = cell.iter().map(|p| p.smoothed[j]).collect();
            cells.push(CompareCell {
                t0,
                coef: format!("beta{j}"),
                mean_nonsmooth: mean(&ns),
                sd_nonsmooth: sample_sd(&ns).unwrap_or(f64::NAN),
                mean_smoothed: mean(&is_),
                sd_smoothed: sample_sd(&is_).unwrap_or(f64::NAN),
                correlation: correlation(&ns, &is_),
            });
        }
    }
    Ok(CompareResult {
        pairs,
        cells,
        n_failed,
    })
}
