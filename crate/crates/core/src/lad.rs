//! Weighted least-absolute-deviation regression solved as a linear program
//! with a dense revised simplex.
//!
//! Residuals are split into positive and negative parts, coefficients into
//! positive and negative components. The initial basis is the residual part
//! matching each row's sign at β = 0, so no phase-1 is needed. Problem sizes
//! here are small (hundreds of rows, a handful of coefficients).

use crate::error::{Error, Result};

const RC_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-11;

/// A solved LAD problem: the minimizer and the simplex pivot count.
#[derive(Debug, Clone)]
pub struct LadFit {
    pub beta: Vec<f64>,
    pub pivots: usize,
}

/// Minimize Σ_i w_i |y_i − x_i'β| over β.
///
/// `rows` holds (design row, response, weight) triples; weights must be
/// nonnegative and rows must share a dimension.
pub fn solve_weighted_lad(rows: &[(Vec<f64>, f64, f64)]) -> Result<LadFit> {
    let n = rows.len();
    assert!(n > 0, "empty LAD problem");
    let d = rows[0].0.len();
    debug_assert!(rows.iter().all(|(x, _, _)| x.len() == d));

    // Variable layout: [beta+ (d), beta- (d), u (n), v (n)].
    let n_beta = 2 * d;
    let n_vars = n_beta + 2 * n;
    let col_x = |j: usize, i: usize| -> f64 {
        if j < d {
            rows[i].0[j]
        } else {
            -rows[i].0[j - d]
        }
    };
    let cost = |j: usize| -> f64 {
        if j < n_beta {
            0.0
        } else if j < n_beta + n {
            rows[j - n_beta].2
        } else {
            rows[j - n_beta - n].2
        }
    };

    // Initial basis: u_i when y_i >= 0, otherwise v_i.
    let mut basis: Vec<usize> = (0..n)
        .map(|i| {
            if rows[i].1 >= 0.0 {
                n_beta + i
            } else {
                n_beta + n + i
            }
        })
        .collect();
    let mut in_basis = vec![false; n_vars];
    for &j in &basis {
        in_basis[j] = true;
    }
    let mut binv = vec![vec![0.0; n]; n];
    for i in 0..n {
        binv[i][i] = if rows[i].1 >= 0.0 { 1.0 } else { -1.0 };
    }
    let mut xb: Vec<f64> = rows.iter().map(|(_, y, _)| y.abs()).collect();

    let max_iter = 200 * (n + n_beta) + 2000;
    let bland_after = max_iter / 2;
    let mut dual = vec![0.0; n];
    let mut dir = vec![0.0; n];

    for iter in 0..max_iter {
        let bland = iter >= bland_after;

        // Dual prices y' = c_B' B^{-1}.
        for r in 0..n {
            let mut acc = 0.0;
            for i in 0..n {
                acc += cost(basis[i]) * binv[i][r];
            }
            dual[r] = acc;
        }

        // Pricing: most negative reduced cost (or first, under Bland's rule).
        let mut entering = None;
        let mut best_rc = -RC_TOL;
        'price: for j in 0..n_vars {
            if in_basis[j] {
                continue;
            }
            let rc = if j < n_beta {
                let mut acc = 0.0;
                for i in 0..n {
                    acc -= dual[i] * col_x(j, i);
                }
                acc
            } else if j < n_beta + n {
                cost(j) - dual[j - n_beta]
            } else {
                cost(j) + dual[j - n_beta - n]
            };
            if rc < best_rc {
                entering = Some(j);
                best_rc = rc;
                if bland {
                    break 'price;
                }
            }
        }
        let Some(enter) = entering else {
            return Ok(LadFit {
                beta: extract_beta(&basis, &xb, d),
                pivots: iter,
            });
        };

        // Direction B^{-1} A_enter.
        if enter < n_beta {
            for r in 0..n {
                let mut acc = 0.0;
                for i in 0..n {
                    acc += binv[r][i] * col_x(enter, i);
                }
                dir[r] = acc;
            }
        } else if enter < n_beta + n {
            let i = enter - n_beta;
            for r in 0..n {
                dir[r] = binv[r][i];
            }
        } else {
            let i = enter - n_beta - n;
            for r in 0..n {
                dir[r] = -binv[r][i];
            }
        }

        // Ratio test; ties broken by smallest basis variable index.
        let mut leave: Option<usize> = None;
        let mut theta = f64::INFINITY;
        for r in 0..n {
            if dir[r] > PIVOT_TOL {
                let ratio = xb[r] / dir[r];
                let better = match leave {
                    None => true,
                    Some(lr) => {
                        ratio < theta - 1e-12
                            || (ratio < theta + 1e-12 && basis[r] < basis[lr])
                    }
                };
                if better {
                    leave = Some(r);
                    theta = ratio;
                }
            }
        }
        let Some(lr) = leave else {
            return Err(Error::Unidentifiable {
                reason: "LAD linear program is unbounded".into(),
            });
        };

        // Pivot: eliminate on row lr.
        let piv = dir[lr];
        for c in 0..n {
            binv[lr][c] /= piv;
        }
        xb[lr] = theta;
        for r in 0..n {
            if r != lr && dir[r].abs() > 0.0 {
                let f = dir[r];
                for c in 0..n {
                    binv[r][c] -= f * binv[lr][c];
                }
                xb[r] -= f * theta;
                if xb[r] < 0.0 {
                    xb[r] = 0.0;
                }
            }
        }
        in_basis[basis[lr]] = false;
        in_basis[enter] = true;
        basis[lr] = enter;
    }

    Err(Error::Unidentifiable {
        reason: "LAD simplex exceeded its iteration budget".into(),
    })
}

fn extract_beta(basis: &[usize], xb: &[f64], d: usize) -> Vec<f64> {
    let mut beta = vec![0.0; d];
    for (r, &j) in basis.iter().enumerate() {
        if j < d {
            beta[j] += xb[r];
        } else if j < 2 * d {
            beta[j - d] -= xb[r];
        }
    }
    beta
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn lad_objective(rows: &[(Vec<f64>, f64, f64)], beta: &[f64]) -> f64 {
        rows.iter()
            .map(|(x, y, w)| {
                let fit: f64 = x.iter().zip(beta).map(|(a, b)| a * b).sum();
                w * (y - fit).abs()
            })
            .sum()
    }

    #[test]
    fn intercept_only_recovers_weighted_median() {
        let rows: Vec<_> = [1.0, 2.0, 5.0, 9.0, 10.0]
            .iter()
            .map(|&y| (vec![1.0], y, 1.0))
            .collect();
        let beta = solve_weighted_lad(&rows).unwrap().beta;
        assert_abs_diff_eq!(beta[0], 5.0, epsilon = 1e-12);
    }

    #[test]
    fn matches_grid_oracle_on_line_fit() {
        // Chosen so the optimum is a unique vertex, not a face of ties.
        let data = [(0.0, 1.0), (1.0, 2.3), (2.0, 2.8), (3.0, 4.6), (4.0, 5.1)];
        let rows: Vec<_> = data
            .iter()
            .map(|&(x, y)| (vec![1.0, x], y, 1.0))
            .collect();
        let beta = solve_weighted_lad(&rows).unwrap().beta;

        // Brute-force grid oracle at resolution 1e-4 around a coarse sweep.
        let mut best = (f64::INFINITY, 0.0, 0.0);
        fn scan(
            rows: &[(Vec<f64>, f64, f64)],
            best: &mut (f64, f64, f64),
            b0_range: (f64, f64),
            b1_range: (f64, f64),
            step: f64,
        ) {
            let mut b0 = b0_range.0;
            while b0 <= b0_range.1 {
                let mut b1 = b1_range.0;
                while b1 <= b1_range.1 {
                    let obj = lad_objective(rows, &[b0, b1]);
                    if obj < best.0 {
                        *best = (obj, b0, b1);
                    }
                    b1 += step;
                }
                b0 += step;
            }
        }
        scan(&rows, &mut best, (-1.0, 3.0), (-1.0, 3.0), 0.01);
        let fine0 = (best.1 - 0.02, best.1 + 0.02);
        let fine1 = (best.2 - 0.02, best.2 + 0.02);
        scan(&rows, &mut best, fine0, fine1, 1e-4);

        assert!(
            solve_weighted_lad(&rows)
                .map(|f| lad_objective(&rows, &f.beta))
                .unwrap()
                <= best.0 + 1e-10
        );
        assert_abs_diff_eq!(beta[0], best.1, epsilon = 2e-4);
        assert_abs_diff_eq!(beta[1], best.2, epsilon = 2e-4);
    }

    #[test]
    fn weights_scale_invariance() {
        let rows: Vec<_> = [(0.0, 0.3), (1.0, 1.9), (2.0, 4.2), (3.0, 5.9)]
            .iter()
            .map(|&(x, y)| (vec![1.0, x], y, 1.0))
            .collect();
        let doubled: Vec<_> = rows
            .iter()
            .map(|(x, y, w)| (x.clone(), *y, 2.0 * w))
            .collect();
        let b1 = solve_weighted_lad(&rows).unwrap().beta;
        let b2 = solve_weighted_lad(&doubled).unwrap().beta;
        for j in 0..2 {
            assert_abs_diff_eq!(b1[j], b2[j], epsilon = 1e-10);
        }
    }

    #[test]
    fn zero_weight_rows_are_ignored() {
        let mut rows: Vec<_> = [(0.0, 1.0), (1.0, 2.0), (2.0, 3.0)]
            .iter()
            .map(|&(x, y)| (vec![1.0, x], y, 1.0))
            .collect();
        let base = solve_weighted_lad(&rows).unwrap().beta;
        rows.push((vec![1.0, 5.0], -100.0, 0.0));
        let with_junk = solve_weighted_lad(&rows).unwrap().beta;
        for j in 0..2 {
            assert_abs_diff_eq!(base[j], with_junk[j], epsilon = 1e-9);
        }
    }

    #[test]
    fn column_scaling_equivariance() {
        let rows: Vec<_> = [(0.5, 1.0), (1.5, 2.4), (2.5, 2.9), (3.5, 4.8), (4.0, 5.0)]
            .iter()
            .map(|&(x, y)| (vec![1.0, x], y, 1.0))
            .collect();
        let c = 3.0;
        let scaled: Vec<_> = rows
            .iter()
            .map(|(x, y, w)| (vec![x[0], c * x[1]], *y, *w))
            .collect();
        let b = solve_weighted_lad(&rows).unwrap().beta;
        let bs = solve_weighted_lad(&scaled).unwrap().beta;
        assert_abs_diff_eq!(bs[0], b[0], epsilon = 1e-9);
        assert_abs_diff_eq!(bs[1], b[1] / c, epsilon = 1e-9);
    }
}
