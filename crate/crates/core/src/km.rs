//! Kaplan–Meier estimation of the censoring survival curve G(·) and the
//! IPCW weights built from it.
//!
//! Censoring is the "event" here: the product-limit runs over censoring
//! times (δ = 0), while the risk set counts everyone still under
//! observation.

use crate::data::{SurvivalSample, Weighting};
use crate::error::{Error, Result};

/// Right-continuous nonincreasing step function on [0, ∞), starting at 1.
#[derive(Debug, Clone)]
pub struct StepSurvival {
    /// Strictly increasing jump locations.
    pub jump_times: Vec<f64>,
    /// Post-jump values; `values[k]` holds on [jump_times[k], jump_times[k+1]).
    pub values: Vec<f64>,
}

impl StepSurvival {
    /// Constant-1 curve (no censoring mass).
    pub fn ones() -> Self {
        StepSurvival {
            jump_times: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Right-continuous evaluation; 1 below the first jump.
    pub fn eval(&self, t: f64) -> f64 {
        let k = self.jump_times.partition_point(|&jt| jt <= t);
        if k == 0 {
            1.0
        } else {
            self.values[k - 1]
        }
    }
}

/// Product-limit estimate of the censoring survival function.
pub fn fit_censoring_km(sample: &SurvivalSample) -> StepSurvival {
    let ones = vec![1.0; sample.n()];
    weighted_censoring_km(sample, &ones)
}

/// Multiplier-perturbed product-limit estimate G*(·).
pub fn fit_perturbed_km(sample: &SurvivalSample, eta: &[f64]) -> Result<StepSurvival> {
    if eta.len() != sample.n() {
        return Err(Error::LengthMismatch {
            expected: sample.n(),
            found: eta.len(),
        });
    }
    if let Some(i) = eta.iter().position(|&e| !(e > 0.0)) {
        return Err(Error::NonPositiveMultiplier { index: i });
    }
    Ok(weighted_censoring_km(sample, eta))
}

fn weighted_censoring_km(sample: &SurvivalSample, weights: &[f64]) -> StepSurvival {
    let n = sample.n();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        sample.subjects[a]
            .time
            .partial_cmp(&sample.subjects[b].time)
            .unwrap()
            .then(a.cmp(&b))
    });

    // Suffix sums give the weighted risk set at each sorted position.
    let mut risk_after = vec![0.0; n + 1];
    for j in (0..n).rev() {
        risk_after[j] = risk_after[j + 1] + weights[order[j]];
    }

    let mut jump_times = Vec::new();
    let mut values = Vec::new();
    let mut surv = 1.0;
    let mut j = 0;
    while j < n {
        let t = sample.subjects[order[j]].time;
        let risk = risk_after[j];
        let mut censor_mass = 0.0;
        let mut k = j;
        while k < n && sample.subjects[order[k]].time == t {
            if !sample.subjects[order[k]].is_event() {
                censor_mass += weights[order[k]];
            }
            k += 1;
        }
        if censor_mass > 0.0 {
            surv *= 1.0 - censor_mass / risk;
            if surv < 0.0 {
                surv = 0.0;
            }
            jump_times.push(t);
            values.push(surv);
        }
        j = k;
    }
    StepSurvival { jump_times, values }
}

/// IPCW weight of subject `i` for the estimating functions at `t0`.
///
/// Returns the weight together with a flag marking a floored denominator
/// (an uncensored subject whose Ĝ(Z) fell to the floor); the caller reports
/// the degeneracy but proceeds with the floored weight.
pub fn ipcw_weight(
    i: usize,
    t0: f64,
    curve: &StepSurvival,
    sample: &SurvivalSample,
    scheme: Weighting,
    floor: f64,
) -> (f64, bool) {
    let s = &sample.subjects[i];
    if !s.is_event() {
        return (0.0, false);
    }
    let g_z = curve.eval(s.time);
    let floored = g_z <= floor;
    let g = g_z.max(floor);
    let w = match scheme {
        Weighting::Li => curve.eval(t0) / g,
        Weighting::Kim => 1.0 / g,
    };
    (w, floored)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Subject;
    use approx::assert_abs_diff_eq;

    fn sample(times: &[f64], status: &[u8]) -> SurvivalSample {
        let subjects = times
            .iter()
            .zip(status)
            .map(|(&t, &d)| Subject::new(t, d, vec![]))
            .collect();
        SurvivalSample::new(subjects, true, vec![])
    }

    #[test]
    fn no_censoring_gives_unit_curve() {
        let g = fit_censoring_km(&sample(&[1.0, 2.0, 3.0], &[1, 1, 1]));
        assert!(g.jump_times.is_empty());
        for t in [0.0, 1.0, 2.5, 100.0] {
            assert_eq!(g.eval(t), 1.0);
        }
    }

    #[test]
    fn hand_product_limit() {
        // Risk set at time 2 is {2, 3}; one censoring there.
        let g = fit_censoring_km(&sample(&[1.0, 2.0, 3.0], &[1, 0, 1]));
        assert_eq!(g.eval(1.9), 1.0);
        assert_eq!(g.eval(2.0), 0.5);
        assert_eq!(g.eval(3.0), 0.5);
    }

    #[test]
    fn hand_product_limit_all_censored() {
        let g = fit_censoring_km(&sample(&[1.0, 2.0], &[0, 0]));
        assert_abs_diff_eq!(g.eval(1.0), 0.5, epsilon = 1e-15);
        assert_eq!(g.eval(1.5), 0.5);
        assert_eq!(g.eval(2.0), 0.0);
    }

    #[test]
    fn eval_at_zero_is_one() {
        let g = fit_censoring_km(&sample(&[1.0, 2.0], &[0, 1]));
        assert_eq!(g.eval(0.0), 1.0);
    }

    #[test]
    fn unit_multipliers_match_plain_fit_bitwise() {
        let s = sample(&[1.0, 2.0, 2.0, 3.5, 4.0], &[1, 0, 1, 0, 1]);
        let plain = fit_censoring_km(&s);
        let pert = fit_perturbed_km(&s, &[1.0; 5]).unwrap();
        assert_eq!(plain.jump_times, pert.jump_times);
        assert_eq!(plain.values, pert.values);
    }

    #[test]
    fn weighted_hand_example() {
        let s = sample(&[1.0, 2.0, 3.0], &[1, 0, 1]);
        let g = fit_perturbed_km(&s, &[1.0, 2.0, 1.0]).unwrap();
        assert_abs_diff_eq!(g.eval(2.0), 1.0 / 3.0, epsilon = 1e-15);
        assert_eq!(g.eval(1.0), 1.0);
    }

    #[test]
    fn single_censored_subject_drops_to_zero() {
        let s = sample(&[1.0], &[0]);
        let g = fit_perturbed_km(&s, &[5.0]).unwrap();
        assert_eq!(g.eval(1.0), 0.0);
        assert_eq!(g.eval(0.5), 1.0);
    }

    #[test]
    fn perturbed_validates_input() {
        let s = sample(&[1.0, 2.0], &[1, 0]);
        assert!(matches!(
            fit_perturbed_km(&s, &[1.0]),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(matches!(
            fit_perturbed_km(&s, &[1.0, 0.0]),
            Err(Error::NonPositiveMultiplier { index: 1 })
        ));
    }

    #[test]
    fn ipcw_examples() {
        // No censoring: every event weight is 1 under the Li scheme.
        let s = sample(&[1.0, 2.0, 3.0], &[1, 1, 1]);
        let g = fit_censoring_km(&s);
        let (w, fl) = ipcw_weight(0, 0.0, &g, &s, Weighting::Li, 1e-10);
        assert_eq!(w, 1.0);
        assert!(!fl);

        let s = sample(&[1.0, 2.0, 3.0], &[1, 0, 1]);
        let g = fit_censoring_km(&s);
        // Censored subject gets weight 0.
        assert_eq!(ipcw_weight(1, 0.0, &g, &s, Weighting::Li, 1e-10).0, 0.0);
        // Event at Z = 3: G(0) = 1, G(3) = 0.5.
        let (w, _) = ipcw_weight(2, 0.0, &g, &s, Weighting::Li, 1e-10);
        assert_abs_diff_eq!(w, 2.0, epsilon = 1e-15);
        // Kim scheme drops the G(t0) numerator.
        let (w, _) = ipcw_weight(2, 0.0, &g, &s, Weighting::Kim, 1e-10);
        assert_abs_diff_eq!(w, 2.0, epsilon = 1e-15);
    }
}
