//! Efficient-influence-function machinery for the structured intervention
//! class, driven by the backward T/Q recursion
//!
//! ```text
//! T_J = Y_J,    Q_j = E(T_{j+1} | l̄_j, ā_j, Y_j = 1),
//! T_j = sum_k c_k h_k Q_j^{A_j = a*_k} + c_f h_f Q_j + c_p h_p sum_a p*(a) Q_j^{A_j = a}
//! ```
//!
//! with the per-subject influence value
//!
//! ```text
//! U = sum_{j=1..J} I(C_j = 0) (T_j - Q_{j-1}) prod_{k<j} [q_k/f_k · 1/(1-λ_k)] + T_0 - psi
//! ```
//!
//! where the censoring factors appear only when censoring models are
//! supplied and every interval term is gated by the uncensored indicator.
//! `T_j = 0` whenever `Y_j = 0`; by monotonicity `Q_j = Y_j Q_j(·, Y_j=1)`,
//! so regressions behind `q_hat` are fit on at-risk rows only.

use alloc::vec;
use alloc::vec::Vec;
use thiserror::Error;

use crate::data::{HistoryView, Panel};
use crate::intervene::{ReferenceDist, StructuredSpec};
use crate::math;

#[derive(Debug, Error, PartialEq)]
pub enum EifError {
    #[error("missing counterfactual Q evaluation at level {0}")]
    MissingCounterfactual(f64),
    #[error("panel subject {0} lacks a record at interval {1}")]
    MissingRecord(usize, usize),
    #[error("need at least 2 influence values")]
    TooFewValues,
}

/// Q evaluations needed by the T template at one `(subject, j)`.
#[derive(Debug, Clone)]
pub struct TqEvals {
    /// `Q_j` at the observed treatment.
    pub q_obs: f64,
    /// `(level, Q_j at that level)` pairs for the touched counterfactuals.
    pub q_at: Vec<(f64, f64)>,
}

impl TqEvals {
    fn at(&self, level: f64) -> Result<f64, EifError> {
        self.q_at
            .iter()
            .find(|(l, _)| *l == level)
            .map(|(_, v)| *v)
            .ok_or(EifError::MissingCounterfactual(level))
    }
}

/// Evaluates the (generalized, multi-point-term) T template at interval `j`.
///
/// `alive` is `Y_j`; a dead subject contributes `T_j = 0` regardless of the
/// evaluations.
pub fn t_from_q(
    spec: &StructuredSpec,
    evals: &TqEvals,
    history: &HistoryView<'_>,
    alive: bool,
) -> Result<f64, EifError> {
    if !alive {
        return Ok(0.0);
    }
    let mut t = 0.0;
    for pt in &spec.point_terms {
        let h = pt.h.eval(history);
        if h != 0.0 {
            t += pt.c * h * evals.at(pt.a_star)?;
        }
    }
    if let Some(obs) = &spec.observed {
        let h = obs.h.eval(history);
        if h != 0.0 {
            t += obs.c * h * evals.q_obs;
        }
    }
    if let Some(rt) = &spec.reference {
        let h = rt.h.eval(history);
        if h != 0.0 {
            let p = rt.p_star.masses(history, &spec.support);
            let mut mix = 0.0;
            for (&level, &mass) in spec.support.iter().zip(p.iter()) {
                if mass != 0.0 {
                    mix += mass * evals.at(level)?;
                }
            }
            t += rt.c * h * mix;
        }
    }
    Ok(t)
}

/// Treatment levels the template touches beyond the observed one.
pub fn touched_levels(spec: &StructuredSpec) -> Vec<f64> {
    let mut levels: Vec<f64> = spec.point_terms.iter().map(|p| p.a_star).collect();
    if let Some(rt) = &spec.reference {
        match &rt.p_star {
            ReferenceDist::Table(t) => {
                for (i, &m) in t.iter().enumerate() {
                    if m != 0.0 {
                        levels.push(spec.support[i]);
                    }
                }
            }
            _ => levels.extend_from_slice(&spec.support),
        }
    }
    levels.sort_by(|a, b| a.partial_cmp(b).unwrap());
    levels.dedup();
    levels
}

/// Nuisance evaluations feeding the influence function.
pub struct EifInputs<'a> {
    pub spec: &'a StructuredSpec,
    pub panel: &'a Panel,
    /// Fitted observed-process masses over the spec support at `(subject, j)`.
    pub f_hat: &'a dyn Fn(usize, usize) -> Vec<f64>,
    /// Fitted censoring hazard `P(C_{j+1}=1 | ·)` at `(subject, j)`; `None`
    /// when the panel is censoring-free.
    pub censor_hazard: Option<&'a dyn Fn(usize, usize) -> f64>,
    /// Fitted `Q_j(l̄_j, ā_{j-1}, A_j = t)` at `(subject, j, t)`; `t = None`
    /// means the observed treatment.
    pub q_hat: &'a dyn Fn(usize, usize, Option<f64>) -> f64,
}

/// Influence value of one subject, with its decomposition retained.
#[derive(Debug, Clone)]
pub struct EifValue {
    pub value: f64,
    /// `(Y_J - Q_{J-1}) W_{J-1}` (0 when gated off by censoring).
    pub terminal: f64,
    /// `(T_j - Q_{j-1}) W_{j-1}` for `j = 1..J-1`.
    pub interval_terms: Vec<f64>,
    pub t0: f64,
}

#[derive(Debug, Clone)]
pub struct EifSummary {
    /// `mean(T_0)` — the plug-in solving the empirical EIF equation.
    pub psi_hat: f64,
    pub values: Vec<EifValue>,
    /// Number of probability clamps that changed a denominator or hazard.
    pub clamp_activations: usize,
}

/// Evaluates the influence function for every subject.
pub fn evaluate_eif(inputs: &EifInputs<'_>) -> Result<EifSummary, EifError> {
    let panel = inputs.panel;
    let spec = inputs.spec;
    let horizon = panel.horizon;
    let n = panel.n_subjects();
    let levels = touched_levels(spec);
    let support = &spec.support;

    let mut clamp_activations = 0usize;
    let mut t0s = vec![0.0; n];
    let mut raw = Vec::with_capacity(n);

    for s in 0..n {
        let traj = &panel.subjects[s];
        let n_rec = traj.records.len();

        // T_j for every interval with a record, plus T at death
        let mut t_vals = vec![0.0; horizon + 1];
        for j in 0..=horizon {
            if j == horizon {
                t_vals[j] = match traj.survived_to_horizon() {
                    Some(true) => 1.0,
                    _ => 0.0,
                };
            } else if traj.at_risk(j) {
                let h = panel.history(s, j).map_err(|_| EifError::MissingRecord(s, j))?;
                let q_obs = (inputs.q_hat)(s, j, None);
                let q_at: Vec<(f64, f64)> =
                    levels.iter().map(|&l| (l, (inputs.q_hat)(s, j, Some(l)))).collect();
                t_vals[j] = t_from_q(spec, &TqEvals { q_obs, q_at }, &h, true)?;
            }
            // dead or censored: T stays 0 (dead is correct, censored is gated off)
        }
        t0s[s] = t_vals[0];

        // cumulative log weights along the observed records
        let mut log_w = 0.0;
        let mut w_zero = false;
        let mut w = vec![1.0; n_rec]; // W_j for j < n_rec
        for j in 0..n_rec {
            let h = panel.history(s, j).map_err(|_| EifError::MissingRecord(s, j))?;
            let mut f = (inputs.f_hat)(s, j);
            for m in f.iter_mut() {
                let c = math::clamp_prob(*m);
                if c != *m {
                    clamp_activations += 1;
                    *m = c;
                }
            }
            let total: f64 = f.iter().sum();
            for m in f.iter_mut() {
                *m /= total;
            }
            let q = spec.evaluate(&h, &f).expect("spec must evaluate on observed histories");
            let rec = &traj.records[j];
            let idx = support
                .iter()
                .position(|&l| l == rec.treatment)
                .expect("observed treatment outside the spec support");
            let ratio = q[idx] / f[idx];
            if ratio == 0.0 {
                w_zero = true;
            } else {
                log_w += math::ln(ratio);
            }
            if let Some(ch) = inputs.censor_hazard {
                let lam = ch(s, j);
                let lam_c = lam.clamp(0.0, 1.0 - math::PROB_EPS);
                if lam_c != lam {
                    clamp_activations += 1;
                }
                log_w -= math::ln(1.0 - lam_c);
            }
            w[j] = if w_zero { 0.0 } else { math::exp(log_w) };
        }

        // interval terms j = 1..J, each gated by I(C_j = 0)
        let mut interval_terms = Vec::with_capacity(horizon.saturating_sub(1));
        let mut terminal = 0.0;
        for j in 1..=horizon {
            let term = if j <= n_rec && !traj.records[j - 1].censored_next {
                let q_prev = (inputs.q_hat)(s, j - 1, None);
                (t_vals[j] - q_prev) * w[j - 1]
            } else {
                0.0
            };
            if j == horizon {
                terminal = term;
            } else {
                interval_terms.push(term);
            }
        }

        raw.push(EifValue { value: 0.0, terminal, interval_terms, t0: t_vals[0] });
    }

    let psi_hat = math::mean(&t0s);
    for v in &mut raw {
        let mut acc = math::KahanSum::new();
        for &t in &v.interval_terms {
            acc.add(t);
        }
        acc.add(v.terminal);
        acc.add(v.t0);
        acc.add(-psi_hat);
        v.value = acc.value();
    }

    Ok(EifSummary { psi_hat, values: raw, clamp_activations })
}

/// Variance of the estimator from influence values: `var(U)/n`, with the
/// 95% CI half-width `z * sqrt(var(U)/n)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EifVariance {
    pub variance_of_mean: f64,
    pub ci_halfwidth: f64,
}

pub fn eif_variance(values: &[f64]) -> Result<EifVariance, EifError> {
    if values.len() < 2 {
        return Err(EifError::TooFewValues);
    }
    let v = math::sample_variance(values) / values.len() as f64;
    Ok(EifVariance { variance_of_mean: v, ci_halfwidth: math::Z_95 * math::sqrt(v) })
}

/// Closed-form point-treatment (J = 1) influence values.
///
/// Inputs are the observed row `(y, a, l*)`, the fitted outcome regression at
/// the observed treatment `m_obs` and at treatment 1 `m_at1`, the fitted
/// propensity `f1 = f(1 | L)`, and the current `psi`.
pub mod point {
    use crate::math;

    /// Treat-on-indication with no intervention otherwise (the `delta = 0`
    /// multiplicative shift).
    pub fn example1(y: f64, a: f64, lstar: f64, m_obs: f64, m_at1: f64, f1: f64, psi: f64) -> f64 {
        example3(y, a, lstar, m_obs, m_at1, f1, 0.0, psi)
    }

    /// Representative intervention through the coarsening `R = I(A >= cut)`:
    /// `r` is the observed coarsened treatment, `m_*` condition on `R`.
    pub fn example2(y: f64, r: f64, m_obs: f64, m_at1: f64, f_r1: f64, psi: f64) -> f64 {
        let ind = if r == 1.0 { 1.0 } else { 0.0 };
        ind / math::clamp_prob(f_r1) * (y - m_obs) + m_at1 - psi
    }

    /// Multiplicative shift at `delta`.
    pub fn example3(
        y: f64,
        a: f64,
        lstar: f64,
        m_obs: f64,
        m_at1: f64,
        f1: f64,
        delta: f64,
        psi: f64,
    ) -> f64 {
        let f_obs = a * f1 + (1.0 - a) * (1.0 - f1);
        let q_obs = (1.0 - delta) * lstar * a + (lstar * delta + 1.0 - lstar) * f_obs;
        q_obs / math::clamp_prob(f_obs) * (y - m_obs)
            + m_obs * (lstar * delta + 1.0 - lstar)
            + m_at1 * lstar * (1.0 - delta)
            - psi
    }
}
