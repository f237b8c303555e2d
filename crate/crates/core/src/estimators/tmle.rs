//! Targeted maximum likelihood with sample splitting and cross-fitting.
//!
//! For each fold `m`: nuisances (treatment, censoring, and the backward Q
//! regressions) are trained on the out-of-fold subjects; on the fold itself
//! the Q predictions are fluctuated through a per-interval logistic
//! intercept `gamma_j` solving the weighted score
//!
//! ```text
//! P_n^m[ Y_j W_j (T_{j+1} - expit(logit Q_j + gamma_j)) ] = 0
//! ```
//!
//! inside a backward pass that rebuilds `T` from the fluctuated `Q`. The
//! point estimate averages fold means of `T_0`; the confidence interval
//! comes from the sample variance of the influence values evaluated at the
//! fold-specific, targeted nuisances.

use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use super::{
    ess, fit_model, fit_treatment_and_censoring, weight_table, Diagnostics, EstimError,
    EstimateOptions, EstimateResult, FittedModel, ModelBundle, NuisanceFits,
};
use crate::data::{require_valid, Panel};
use crate::eif::{eif_variance, evaluate_eif, t_from_q, touched_levels, EifInputs, TqEvals};
use crate::intervene::InterventionSpec;
use crate::math;
use crate::nuisance::kfold;

const GAMMA_CAP: f64 = 30.0;

/// Fold-specific fitted state kept for the influence-function pass.
struct FoldArtifacts {
    nuis: NuisanceFits,
    q_models: Vec<FittedModel>,
    gamma: Vec<f64>,
}

fn targeted_pred(
    model: &FittedModel,
    gamma: f64,
    panel: &Panel,
    s: usize,
    j: usize,
    a_override: Option<f64>,
) -> f64 {
    let base = model.predict(panel, s, j, a_override);
    math::expit(math::logit(math::clamp_prob(base)) + gamma)
}

/// Solves the one-dimensional fluctuation score by safeguarded bisection on
/// a geometrically widened bracket; returns `(gamma, fell_back)`.
fn solve_gamma(base_logit: &[f64], resp: &[f64], w: &[f64]) -> (f64, bool) {
    let g = |gamma: f64| -> f64 {
        let mut acc = 0.0;
        for i in 0..resp.len() {
            acc += w[i] * (resp[i] - math::expit(base_logit[i] + gamma));
        }
        acc
    };
    let wsum: f64 = w.iter().sum();
    if wsum <= 0.0 {
        return (0.0, false);
    }
    let tol = 1e-10 * wsum.max(1.0);
    let g0 = g(0.0);
    if math::abs(g0) <= tol {
        return (0.0, false);
    }
    // g is strictly decreasing in gamma
    let (mut lo, mut hi) = if g0 > 0.0 { (0.0, 1.0) } else { (-1.0, 0.0) };
    let mut width = 1.0;
    while g(hi) > 0.0 {
        if hi >= GAMMA_CAP {
            return (0.0, true);
        }
        width *= 2.0;
        lo = hi;
        hi = (hi + width).min(GAMMA_CAP);
    }
    while g(lo) < 0.0 {
        if lo <= -GAMMA_CAP {
            return (0.0, true);
        }
        width *= 2.0;
        hi = lo;
        lo = (lo - width).max(-GAMMA_CAP);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let gm = g(mid);
        if math::abs(gm) <= tol || hi - lo < 1e-14 {
            return (mid, false);
        }
        if gm > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (0.5 * (lo + hi), false)
}

/// Cross-fit TMLE of counterfactual survival for a structured intervention.
pub fn estimate_tmle_crossfit(
    panel: &Panel,
    spec: &InterventionSpec,
    bundle: &ModelBundle,
    m_folds: usize,
    opts: &EstimateOptions,
) -> Result<EstimateResult, EstimError> {
    estimate_tmle_detailed(panel, spec, bundle, m_folds, opts).map(|(r, _)| r)
}

/// Cross-fit TMLE together with the per-subject influence values behind its
/// confidence interval.
pub fn estimate_tmle_detailed(
    panel: &Panel,
    spec: &InterventionSpec,
    bundle: &ModelBundle,
    m_folds: usize,
    opts: &EstimateOptions,
) -> Result<(EstimateResult, alloc::vec::Vec<crate::eif::EifValue>), EstimError> {
    require_valid(panel)?;
    let Some(structured) = spec.as_structured() else {
        return Err(EstimError::UnsupportedSpec("cross-fit TMLE"));
    };
    let n = panel.n_subjects();
    if n == 0 {
        return Err(EstimError::EmptyPanel);
    }
    let horizon = panel.horizon;
    let levels = touched_levels(structured);
    let folds = kfold(&panel.ids, m_folds, opts.seed)?;

    let mut artifacts: Vec<FoldArtifacts> = Vec::with_capacity(m_folds);
    let mut fold_means = Vec::with_capacity(m_folds);
    let mut gamma_fallbacks = 0usize;
    let mut nonconverged = 0usize;
    let mut positivity_exact = 0usize;
    let mut positivity_near = 0usize;
    let mut clamp_activations = 0usize;
    let mut truncated = 0usize;
    let mut max_weight = 0.0f64;
    let mut ess_acc = vec![Vec::new(); horizon];

    for m in 0..m_folds {
        let train_idx: Vec<usize> = (0..n).filter(|&s| folds.fold_of[s] != m).collect();
        let eval_idx: Vec<usize> = (0..n).filter(|&s| folds.fold_of[s] == m).collect();
        if train_idx.is_empty() || eval_idx.is_empty() {
            return Err(EstimError::BundleShape("empty TMLE fold".to_string()));
        }
        let train = panel.subset(&train_idx);

        // ---- out-of-fold nuisances ----
        let nuis = fit_treatment_and_censoring(&train, bundle, opts.seed)?;
        nonconverged += nuis.nonconverged;

        // training-side backward recursion (unweighted regressions)
        let cv_labels = super::cv_fold_labels(&train, &bundle.learner_mode, opts.seed)?;
        let mut q_models: Vec<Option<FittedModel>> = (0..horizon).map(|_| None).collect();
        let mut t_train = vec![0.0; train.n_subjects()];
        for j in (0..horizon).rev() {
            let rows: Vec<usize> = (0..train.n_subjects())
                .filter(|&s| {
                    train.subjects[s].at_risk(j) && !train.subjects[s].records[j].censored_next
                })
                .collect();
            if rows.is_empty() {
                return Err(EstimError::ZeroWeightInterval(j));
            }
            let resp: Vec<f64> = rows
                .iter()
                .map(|&s| train_response(&train, &t_train, s, j))
                .collect();
            let w = vec![1.0; rows.len()];
            let model = fit_model(
                &train,
                &bundle.outcome_formulas[j],
                j,
                &rows,
                &resp,
                &w,
                &bundle.learner_mode,
                &cv_labels,
            )?;
            if !model.converged() {
                nonconverged += 1;
            }
            for s in 0..train.n_subjects() {
                if !train.subjects[s].at_risk(j) {
                    continue;
                }
                let h = train.history(s, j)?;
                let q_obs = model.predict(&train, s, j, None);
                let q_at: Vec<(f64, f64)> =
                    levels.iter().map(|&l| (l, model.predict(&train, s, j, Some(l)))).collect();
                t_train[s] = t_from_q(structured, &TqEvals { q_obs, q_at }, &h, true)?;
            }
            q_models[j] = Some(model);
        }
        let q_models: Vec<FittedModel> = q_models.into_iter().map(|q| q.unwrap()).collect();

        // ---- in-fold targeting ----
        let eval = panel.subset(&eval_idx);
        let hazard_fn = |s: usize, j: usize| nuis.censor_hazard(&eval, s, j).unwrap_or(0.0);
        let wt = weight_table(
            &eval,
            spec,
            &|s, j| nuis.f1(&eval, s, j),
            nuis.censoring.as_ref().map(|_| &hazard_fn as &dyn Fn(usize, usize) -> f64),
            opts.weight_cap_percentile,
        )?;
        clamp_activations += wt.clamp_activations;
        truncated += wt.truncated;
        max_weight = max_weight.max(wt.max_weight);

        let (pe, pn) = super::positivity_counts(&eval, spec, &nuis)?;
        positivity_exact += pe;
        positivity_near += pn;

        let mut gamma = vec![0.0; horizon];
        let mut t_eval = vec![0.0; eval.n_subjects()];
        for j in (0..horizon).rev() {
            let rows: Vec<usize> = (0..eval.n_subjects())
                .filter(|&s| {
                    eval.subjects[s].at_risk(j) && !eval.subjects[s].records[j].censored_next
                })
                .collect();
            let base_logit: Vec<f64> = rows
                .iter()
                .map(|&s| math::logit(math::clamp_prob(q_models[j].predict(&eval, s, j, None))))
                .collect();
            let resp: Vec<f64> =
                rows.iter().map(|&s| train_response(&eval, &t_eval, s, j)).collect();
            let w: Vec<f64> = rows.iter().map(|&s| wt.w[s][j]).collect();
            ess_acc[j].extend(w.iter().copied());
            let (gj, fell_back) = solve_gamma(&base_logit, &resp, &w);
            if fell_back {
                gamma_fallbacks += 1;
            }
            gamma[j] = gj;
            for s in 0..eval.n_subjects() {
                if !eval.subjects[s].at_risk(j) {
                    continue;
                }
                let h = eval.history(s, j)?;
                let q_obs = targeted_pred(&q_models[j], gj, &eval, s, j, None);
                let q_at: Vec<(f64, f64)> = levels
                    .iter()
                    .map(|&l| (l, targeted_pred(&q_models[j], gj, &eval, s, j, Some(l))))
                    .collect();
                t_eval[s] = t_from_q(structured, &TqEvals { q_obs, q_at }, &h, true)?;
            }
        }
        fold_means.push(math::mean(&t_eval));
        artifacts.push(FoldArtifacts { nuis, q_models, gamma });
    }

    let psi_hat = math::mean(&fold_means);

    // ---- influence values at the fold-specific targeted nuisances ----
    let f_hat = |s: usize, j: usize| -> Vec<f64> {
        let a = &artifacts[folds.fold_of[s]];
        let f1 = a.nuis.f1(panel, s, j);
        vec![1.0 - f1, f1]
    };
    let q_hat = |s: usize, j: usize, a: Option<f64>| -> f64 {
        let art = &artifacts[folds.fold_of[s]];
        targeted_pred(&art.q_models[j], art.gamma[j], panel, s, j, a)
    };
    let censor_hazard = |s: usize, j: usize| -> f64 {
        let a = &artifacts[folds.fold_of[s]];
        a.nuis.censor_hazard(panel, s, j).unwrap_or(0.0)
    };
    let has_censoring = bundle.censoring_formulas.is_some();
    let summary = evaluate_eif(&EifInputs {
        spec: structured,
        panel,
        f_hat: &f_hat,
        censor_hazard: if has_censoring {
            Some(&censor_hazard as &dyn Fn(usize, usize) -> f64)
        } else {
            None
        },
        q_hat: &q_hat,
    })?;
    let values: Vec<f64> = summary.values.iter().map(|v| v.value).collect();
    let var = eif_variance(&values)?;

    Ok((EstimateResult {
        psi_hat,
        ci_low: Some(psi_hat - var.ci_halfwidth),
        ci_high: Some(psi_hat + var.ci_halfwidth),
        method: "tmle".to_string(),
        delta: spec.delta(),
        n,
        horizon,
        diagnostics: Diagnostics {
            max_weight,
            clamp_activations: clamp_activations + summary.clamp_activations,
            positivity_exact,
            positivity_near,
            ess_per_interval: ess_acc.iter().map(|w| ess(w)).collect(),
            nonconverged_fits: nonconverged,
            gamma_fallbacks,
            truncated_weights: truncated,
            bootstrap_redraws: 0,
        },
    }, summary.values))
}

/// Pseudo-outcome `T_{j+1}` during a backward pass (horizon survival at the
/// end, 0 at death, the recursion value otherwise).
fn train_response(panel: &Panel, t: &[f64], s: usize, j: usize) -> f64 {
    let rec = &panel.subjects[s].records[j];
    match rec.alive_next {
        Some(false) => 0.0,
        Some(true) => {
            if j + 1 == panel.horizon {
                1.0
            } else {
                t[s]
            }
        }
        None => unreachable!("uncensored record carries a survival status"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_zero_is_a_fixed_point() {
        // responses already on the fluctuation path: score at 0 vanishes
        let base: Vec<f64> = vec![-0.3, 0.1, 0.7, -1.2];
        let resp: Vec<f64> = base.iter().map(|&b| math::expit(b)).collect();
        let w = vec![1.0, 2.0, 0.5, 1.5];
        let (g, fb) = solve_gamma(&base, &resp, &w);
        assert_eq!(g, 0.0);
        assert!(!fb);
    }

    #[test]
    fn gamma_solve_hits_the_score_root() {
        let base: Vec<f64> = vec![-0.5, 0.2, 0.9, -1.0, 0.0];
        let truth = 0.8;
        let resp: Vec<f64> = base.iter().map(|&b| math::expit(b + truth)).collect();
        let w = vec![1.0; 5];
        let (g, fb) = solve_gamma(&base, &resp, &w);
        assert!(!fb);
        assert!((g - truth).abs() < 1e-8);
        // residual at the solution
        let resid: f64 = resp
            .iter()
            .zip(base.iter())
            .map(|(&r, &b)| r - math::expit(b + g))
            .sum::<f64>()
            / 5.0;
        assert!(resid.abs() <= 1e-8);
    }

    #[test]
    fn no_bracket_falls_back_to_zero() {
        // all responses at 1: g(gamma) > 0 for every finite gamma
        let base = vec![0.0, 0.0];
        let resp = vec![1.0, 1.0];
        let w = vec![1.0, 1.0];
        let (g, fb) = solve_gamma(&base, &resp, &w);
        assert_eq!(g, 0.0);
        assert!(fb);
    }
}
