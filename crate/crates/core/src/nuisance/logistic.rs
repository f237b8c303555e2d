//! Weighted quasi-logistic regression by iteratively reweighted least
//! squares.
//!
//! The solver targets the weighted score equation
//! `sum_i w_i phi_i (y_i - expit(theta' phi_i)) = 0` directly, so responses
//! need not be binary: pseudo-outcomes in `[0, 1]` are handled as fractional
//! responses through the same quasi-score. Newton steps are component-capped,
//! step-halved on quasi-likelihood decrease, and ridge-damped when the
//! working matrix is singular; separation shows up as `converged = false`
//! rather than an error.

use alloc::vec;
use alloc::vec::Vec;

use super::{DesignMatrix, FitError};
use crate::math;

const MAX_ITER: usize = 100;
const SCORE_TOL: f64 = 1e-10;
const STEP_CAP: f64 = 10.0;
const COEF_SANITY: f64 = 1e3;
const BASE_RIDGE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct FittedLogistic {
    pub coefficients: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub weighted: bool,
}

impl FittedLogistic {
    #[inline]
    pub fn linear_predictor(&self, row: &[f64]) -> f64 {
        dot(&self.coefficients, row)
    }

    #[inline]
    pub fn predict(&self, row: &[f64]) -> f64 {
        math::expit(self.linear_predictor(row))
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// log(1 + e^x) without overflow.
#[inline]
fn softplus(x: f64) -> f64 {
    let ax = math::abs(x);
    x.max(0.0) + libm::log1p(math::exp(-ax))
}

/// In-place Cholesky solve of `a x = b` for symmetric `a` (row-major,
/// upper triangle used); returns `false` when `a` is not positive definite.
fn cholesky_solve(a: &mut [f64], b: &mut [f64], n: usize) -> bool {
    // decompose: a = L L' stored in the lower triangle
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return false;
                }
                a[i * n + i] = math::sqrt(s);
            } else {
                a[i * n + j] = s / a[j * n + j];
            }
        }
    }
    // forward then backward substitution
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= a[i * n + k] * b[k];
        }
        b[i] = s / a[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in (i + 1)..n {
            s -= a[k * n + i] * b[k];
        }
        b[i] = s / a[i * n + i];
    }
    true
}

fn quasi_loglik(design: &DesignMatrix, y: &[f64], w: &[f64], theta: &[f64]) -> f64 {
    let mut ll = 0.0;
    for i in 0..design.nrow {
        if w[i] == 0.0 {
            continue;
        }
        let eta = dot(theta, design.row(i)).clamp(-500.0, 500.0);
        ll += w[i] * (y[i] * eta - softplus(eta));
    }
    ll
}

/// Maximum-quasi-likelihood fit of a logistic model with case weights.
pub fn fit_logistic_irls(
    design: &DesignMatrix,
    y: &[f64],
    w: &[f64],
) -> Result<FittedLogistic, FitError> {
    let n = design.nrow;
    let p = design.ncol;
    if y.len() != n || w.len() != n {
        return Err(FitError::DimensionMismatch);
    }
    if !w.iter().any(|&wi| wi > 0.0) {
        return Err(FitError::NoPositiveWeight);
    }

    let mut theta = vec![0.0; p];
    let mut probs = vec![0.0; n];
    let mut score = vec![0.0; p];
    let mut hess = vec![0.0; p * p];
    let mut ll = quasi_loglik(design, y, w, &theta);
    let mut converged = false;
    let mut iterations = 0;

    for iter in 0..MAX_ITER {
        iterations = iter + 1;
        // score and working hessian at theta
        score.iter_mut().for_each(|s| *s = 0.0);
        hess.iter_mut().for_each(|h| *h = 0.0);
        for i in 0..n {
            if w[i] == 0.0 {
                continue;
            }
            let row = design.row(i);
            let pr = math::expit(dot(&theta, row));
            probs[i] = pr;
            let r = w[i] * (y[i] - pr);
            let v = w[i] * pr * (1.0 - pr);
            for c in 0..p {
                score[c] += r * row[c];
                let vc = v * row[c];
                if vc != 0.0 {
                    for d in 0..=c {
                        hess[c * p + d] += vc * row[d];
                    }
                }
            }
        }
        // mirror the lower triangle
        for c in 0..p {
            for d in (c + 1)..p {
                hess[c * p + d] = hess[d * p + c];
            }
        }

        let max_score = score.iter().fold(0.0f64, |m, &s| m.max(math::abs(s)));
        if max_score <= SCORE_TOL {
            converged = true;
            break;
        }

        // solve (H + ridge I) delta = score, escalating the ridge on failure
        let mut ridge = 0.0;
        let mut delta = loop {
            let mut a = hess.clone();
            for c in 0..p {
                a[c * p + c] += ridge;
            }
            let mut b = score.clone();
            if cholesky_solve(&mut a, &mut b, p) {
                break b;
            }
            ridge = if ridge == 0.0 { BASE_RIDGE } else { ridge * 100.0 };
            if ridge > 1e6 {
                // hopeless working matrix: bail out with the current fit
                return Ok(FittedLogistic { coefficients: theta, converged: false, iterations, weighted: is_weighted(w) });
            }
        };

        // trust region: cap each component
        let max_step = delta.iter().fold(0.0f64, |m, &d| m.max(math::abs(d)));
        if max_step > STEP_CAP {
            let scale = STEP_CAP / max_step;
            delta.iter_mut().for_each(|d| *d *= scale);
        }

        // step-halving on quasi-likelihood decrease
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let cand: Vec<f64> =
                theta.iter().zip(delta.iter()).map(|(t, d)| t + step * d).collect();
            let cand_ll = quasi_loglik(design, y, w, &cand);
            if cand_ll >= ll - 1e-12 {
                theta = cand;
                ll = cand_ll;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }

    // a score-stationary point at absurd coefficient magnitude is separation,
    // not a finite MLE
    if converged && theta.iter().any(|t| math::abs(*t) > COEF_SANITY) {
        converged = false;
    }
    Ok(FittedLogistic { coefficients: theta, converged, iterations, weighted: is_weighted(w) })
}

fn is_weighted(w: &[f64]) -> bool {
    w.iter().any(|&wi| wi != 1.0)
}

/// Per-column weighted score residual `sum_i w_i phi_ic (y_i - p_i)` of a fit.
pub fn score_residuals(design: &DesignMatrix, y: &[f64], w: &[f64], fit: &FittedLogistic) -> Vec<f64> {
    let mut score = vec![0.0; design.ncol];
    for i in 0..design.nrow {
        if w[i] == 0.0 {
            continue;
        }
        let row = design.row(i);
        let r = w[i] * (y[i] - fit.predict(row));
        for c in 0..design.ncol {
            score[c] += r * row[c];
        }
    }
    score
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{expit, logit};
    use alloc::string::ToString;

    fn design_from(x: Vec<f64>, nrow: usize, ncol: usize) -> DesignMatrix {
        DesignMatrix {
            x,
            nrow,
            ncol,
            labels: (0..ncol).map(|c| c.to_string()).collect(),
            rows: (0..nrow).collect(),
        }
    }

    #[test]
    fn intercept_only_recovers_logit_of_mean() {
        let n = 8;
        let d = design_from(vec![1.0; n], n, 1);
        let y = vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]; // mean 0.25
        let fit = fit_logistic_irls(&d, &y, &vec![1.0; n]).unwrap();
        assert!(fit.converged);
        assert!((fit.coefficients[0] - logit(0.25)).abs() < 1e-9);
    }

    #[test]
    fn weighted_intercept_recovers_weighted_mean() {
        let d = design_from(vec![1.0, 1.0], 2, 1);
        let y = vec![1.0, 0.0];
        let fit = fit_logistic_irls(&d, &y, &[3.0, 1.0]).unwrap();
        assert!((fit.predict(&[1.0]) - 0.75).abs() < 1e-10);
        assert!(fit.weighted);
    }

    #[test]
    fn separation_reports_nonconvergence_without_crash() {
        // separating covariate on a small scale: the score cannot reach
        // tolerance within the iteration budget
        let mut x = Vec::new();
        for i in 0..8 {
            let v = if i < 4 { -0.01 } else { 0.01 };
            x.extend_from_slice(&[1.0, v]);
        }
        let d = design_from(x, 8, 2);
        let y = vec![0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0];
        let fit = fit_logistic_irls(&d, &y, &vec![1.0; 8]).unwrap();
        assert!(!fit.converged);
        assert!(fit.coefficients.iter().all(|c| c.is_finite()));
    }

    #[test]
    fn saturated_design_reproduces_cell_means() {
        // two binary cells with distinct means, weights varying
        // design: intercept + indicator
        let mut x = Vec::new();
        let mut y = Vec::new();
        let mut w = Vec::new();
        // cell 0: 10 rows, mean 0.3 of fractional responses
        for i in 0..10 {
            x.extend_from_slice(&[1.0, 0.0]);
            y.push(if i < 3 { 0.9 } else { 0.0428571428571428 * 1.0 });
            w.push(1.0 + (i % 3) as f64);
        }
        // cell 1: 6 rows
        for i in 0..6 {
            x.extend_from_slice(&[1.0, 1.0]);
            y.push(if i % 2 == 0 { 0.8 } else { 0.4 });
            w.push(2.0);
        }
        let d = design_from(x, 16, 2);
        let fit = fit_logistic_irls(&d, &y, &w).unwrap();
        assert!(fit.converged);
        // weighted cell means computed by brute force
        let (mut s0, mut t0, mut s1, mut t1) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..16 {
            let cell1 = d.row(i)[1] == 1.0;
            if cell1 {
                s1 += w[i] * y[i];
                t1 += w[i];
            } else {
                s0 += w[i] * y[i];
                t0 += w[i];
            }
        }
        assert!((fit.predict(&[1.0, 0.0]) - s0 / t0).abs() < 1e-10);
        assert!((fit.predict(&[1.0, 1.0]) - s1 / t1).abs() < 1e-10);
        // score residuals vanish column-wise
        for r in score_residuals(&d, &y, &w, &fit) {
            assert!(r.abs() <= 1e-8);
        }
    }

    #[test]
    fn pure_cell_is_recovered_exactly_enough() {
        // saturated over one binary with an all-survivor cell
        let mut x = Vec::new();
        for _ in 0..12 {
            x.extend_from_slice(&[1.0, 1.0]);
        }
        for _ in 0..12 {
            x.extend_from_slice(&[1.0, 0.0]);
        }
        let d = design_from(x, 24, 2);
        let mut y = vec![1.0; 12];
        y.extend(vec![0.25; 12]);
        let fit = fit_logistic_irls(&d, &y, &vec![1.0; 24]).unwrap();
        assert!((fit.predict(&[1.0, 1.0]) - 1.0).abs() < 1e-10);
        assert!((fit.predict(&[1.0, 0.0]) - 0.25).abs() < 1e-10);
    }

    #[test]
    fn zero_weight_rows_are_ignored() {
        let d = design_from(vec![1.0, 1.0, 1.0], 3, 1);
        let y = vec![1.0, 1.0, 0.0];
        let fit = fit_logistic_irls(&d, &y, &[0.0, 0.0, 1.0]).unwrap();
        assert!(fit.predict(&[1.0]) < 1e-6);
    }

    #[test]
    fn all_zero_weights_error() {
        let d = design_from(vec![1.0], 1, 1);
        assert_eq!(
            fit_logistic_irls(&d, &[1.0], &[0.0]).unwrap_err(),
            FitError::NoPositiveWeight
        );
    }

    #[test]
    fn logistic_recovers_known_coefficients() {
        // deterministic fractional responses equal to the true probabilities:
        // the quasi-score is solved exactly by the generating coefficients
        let truth = [-0.4, 0.9, -1.3];
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..50 {
            let x1 = (i % 5) as f64 / 4.0;
            let x2 = ((i / 5) % 5) as f64 / 4.0 - 0.5;
            x.extend_from_slice(&[1.0, x1, x2]);
            y.push(expit(truth[0] + truth[1] * x1 + truth[2] * x2));
        }
        let d = design_from(x, 50, 3);
        let fit = fit_logistic_irls(&d, &y, &vec![1.0; 50]).unwrap();
        assert!(fit.converged);
        for (est, tr) in fit.coefficients.iter().zip(truth.iter()) {
            assert!((est - tr).abs() < 1e-6, "{est} vs {tr}");
        }
    }
}
