//! Iterated-conditional-expectation estimators: the weighted ICE algorithm
//! (backward weighted quasi-logistic regressions of the T pseudo-outcomes)
//! and the singly robust ICE special case with unit observational weights.

use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use super::{
    cv_fold_labels, ess, fit_model, fit_treatment_and_censoring, positivity_counts,
    weight_table, Diagnostics, EstimError, EstimateOptions, EstimateResult, FittedModel,
    ModelBundle, NuisanceFits, WeightTable,
};
use crate::data::{require_valid, Panel};
use crate::eif::{t_from_q, touched_levels, TqEvals};
use crate::intervene::{evaluate_q, InterventionSpec};
use crate::math;

/// Backward recursion output: per-subject `T_0`, the fitted outcome models,
/// and fit diagnostics.
pub(crate) struct IceFit {
    pub t0: Vec<f64>,
    pub outcome_models: Vec<FittedModel>,
    pub nonconverged: usize,
    pub ess_per_interval: Vec<f64>,
}

/// Pseudo-outcome for the regression at interval `j`: `T_{j+1}` (which is
/// `Y_J` at the horizon and 0 at death).
fn response_at(panel: &Panel, t: &[f64], s: usize, j: usize) -> f64 {
    let traj = &panel.subjects[s];
    let rec = &traj.records[j];
    debug_assert!(!rec.censored_next);
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

/// Runs the backward ICE/weighted-ICE recursion.
///
/// `weights` carries the cumulative observational weights (`None` means the
/// unit-weight ICE special case). For general (non-structured) specs the
/// T-step integrates `Q` over `q(· | history, f_hat)`, which requires fitted
/// propensities in `nuis`.
pub(crate) fn backward_ice(
    panel: &Panel,
    spec: &InterventionSpec,
    bundle: &ModelBundle,
    weights: Option<&WeightTable>,
    nuis: Option<&NuisanceFits>,
    seed: u64,
) -> Result<IceFit, EstimError> {
    let n = panel.n_subjects();
    let horizon = panel.horizon;
    let fold_of = cv_fold_labels(panel, &bundle.learner_mode, seed)?;
    let structured = spec.as_structured();
    if structured.is_none() && nuis.is_none() {
        return Err(EstimError::UnsupportedSpec("general specs need fitted propensities"));
    }
    let levels: Vec<f64> = match structured {
        Some(s) => touched_levels(s),
        None => spec.support().to_vec(),
    };

    let mut t = vec![0.0; n];
    let mut outcome_models: Vec<Option<FittedModel>> = (0..horizon).map(|_| None).collect();
    let mut nonconverged = 0usize;
    let mut ess_per_interval = vec![0.0; horizon];

    for j in (0..horizon).rev() {
        // regression rows: at risk with an observable pseudo-outcome
        let rows: Vec<usize> = (0..n)
            .filter(|&s| {
                panel.subjects[s].at_risk(j) && !panel.subjects[s].records[j].censored_next
            })
            .collect();
        if rows.is_empty() {
            return Err(EstimError::ZeroWeightInterval(j));
        }
        let resp: Vec<f64> = rows.iter().map(|&s| response_at(panel, &t, s, j)).collect();
        let w: Vec<f64> = match weights {
            Some(wt) => rows.iter().map(|&s| wt.w[s][j]).collect(),
            None => vec![1.0; rows.len()],
        };
        if !w.iter().any(|&x| x > 0.0) {
            return Err(EstimError::ZeroWeightInterval(j));
        }
        ess_per_interval[j] = ess(&w);
        let model = fit_model(
            panel,
            &bundle.outcome_formulas[j],
            j,
            &rows,
            &resp,
            &w,
            &bundle.learner_mode,
            &fold_of,
        )?;
        if !model.converged() {
            nonconverged += 1;
        }

        // T_j for every subject at risk at j (censored-next ones included:
        // their T_j feeds the j-1 regression)
        for s in 0..n {
            if !panel.subjects[s].at_risk(j) {
                continue;
            }
            let h = panel.history(s, j)?;
            let q_obs = model.predict(panel, s, j, None);
            let q_at: Vec<(f64, f64)> =
                levels.iter().map(|&l| (l, model.predict(panel, s, j, Some(l)))).collect();
            t[s] = match structured {
                Some(sp) => {
                    t_from_q(sp, &TqEvals { q_obs, q_at }, &h, true)?
                }
                None => {
                    let nuis = nuis.expect("checked above");
                    let f1 = nuis.f1(panel, s, j);
                    let q = evaluate_q(spec, &h, &[1.0 - f1, f1])?;
                    let mut mix = 0.0;
                    for (idx, &mass) in q.iter().enumerate() {
                        if mass != 0.0 {
                            let level = spec.support()[idx];
                            let qv = q_at
                                .iter()
                                .find(|(l, _)| *l == level)
                                .map(|(_, v)| *v)
                                .unwrap_or(q_obs);
                            mix += mass * qv;
                        }
                    }
                    mix
                }
            };
        }
        outcome_models[j] = Some(model);
    }

    Ok(IceFit {
        t0: t,
        outcome_models: outcome_models.into_iter().map(|m| m.unwrap()).collect(),
        nonconverged,
        ess_per_interval,
    })
}

/// Weighted ICE (the multiply robust estimator): backward regressions
/// weighted by cumulative `q/f` and censoring factors.
pub fn estimate_wice(
    panel: &Panel,
    spec: &InterventionSpec,
    bundle: &ModelBundle,
    opts: &EstimateOptions,
) -> Result<EstimateResult, EstimError> {
    require_valid(panel)?;
    if spec.as_structured().is_none() {
        return Err(EstimError::UnsupportedSpec("weighted ICE"));
    }
    run_ice_family(panel, spec, bundle, opts, true, "wice")
}

/// Fitted state behind a weighted-ICE run, for influence-function
/// diagnostics.
pub struct WiceParts {
    pub nuisance: NuisanceFits,
    pub outcome_models: Vec<FittedModel>,
    pub weights: WeightTable,
}

/// Weighted ICE together with its fitted nuisances and weight table.
pub fn estimate_wice_detailed(
    panel: &Panel,
    spec: &InterventionSpec,
    bundle: &ModelBundle,
    opts: &EstimateOptions,
) -> Result<(EstimateResult, WiceParts), EstimError> {
    require_valid(panel)?;
    if spec.as_structured().is_none() {
        return Err(EstimError::UnsupportedSpec("weighted ICE"));
    }
    if panel.n_subjects() == 0 {
        return Err(EstimError::EmptyPanel);
    }
    let nuis = fit_treatment_and_censoring(panel, bundle, opts.seed)?;
    let hazard_fn = |s: usize, j: usize| nuis.censor_hazard(panel, s, j).unwrap_or(0.0);
    let wt = weight_table(
        panel,
        spec,
        &|s, j| nuis.f1(panel, s, j),
        nuis.censoring.as_ref().map(|_| &hazard_fn as &dyn Fn(usize, usize) -> f64),
        opts.weight_cap_percentile,
    )?;
    let fit = backward_ice(panel, spec, bundle, Some(&wt), Some(&nuis), opts.seed)?;
    let psi = math::mean(&fit.t0);
    let (positivity_exact, positivity_near) = positivity_counts(panel, spec, &nuis)?;
    let result = EstimateResult {
        psi_hat: psi,
        ci_low: None,
        ci_high: None,
        method: "wice".to_string(),
        delta: spec.delta(),
        n: panel.n_subjects(),
        horizon: panel.horizon,
        diagnostics: Diagnostics {
            max_weight: wt.max_weight,
            clamp_activations: wt.clamp_activations,
            positivity_exact,
            positivity_near,
            ess_per_interval: fit.ess_per_interval.clone(),
            nonconverged_fits: fit.nonconverged + nuis.nonconverged,
            gamma_fallbacks: 0,
            truncated_weights: wt.truncated,
            bootstrap_redraws: 0,
        },
    };
    Ok((result, WiceParts { nuisance: nuis, outcome_models: fit.outcome_models, weights: wt }))
}

/// Singly robust ICE: the weighted ICE algorithm with observational weights
/// set to 1.
pub fn estimate_ice(
    panel: &Panel,
    spec: &InterventionSpec,
    bundle: &ModelBundle,
    opts: &EstimateOptions,
) -> Result<EstimateResult, EstimError> {
    require_valid(panel)?;
    run_ice_family(panel, spec, bundle, opts, false, "ice")
}

fn run_ice_family(
    panel: &Panel,
    spec: &InterventionSpec,
    bundle: &ModelBundle,
    opts: &EstimateOptions,
    weighted: bool,
    method: &str,
) -> Result<EstimateResult, EstimError> {
    if panel.n_subjects() == 0 {
        return Err(EstimError::EmptyPanel);
    }
    let (psi, mut diagnostics) = ice_point(panel, spec, bundle, opts, weighted)?;

    let mut ci = None;
    if let Some(b) = opts.bootstrap {
        let interval = super::bootstrap_ci(
            &mut |p: &Panel| ice_point(p, spec, bundle, opts, weighted).map(|(v, _)| v),
            panel,
            b,
            opts.seed,
        )?;
        diagnostics.bootstrap_redraws = interval.redraws;
        ci = Some((interval.low, interval.high));
    }

    Ok(EstimateResult {
        psi_hat: psi,
        ci_low: ci.map(|c| c.0),
        ci_high: ci.map(|c| c.1),
        method: method.to_string(),
        delta: spec.delta(),
        n: panel.n_subjects(),
        horizon: panel.horizon,
        diagnostics,
    })
}

pub(crate) fn ice_point(
    panel: &Panel,
    spec: &InterventionSpec,
    bundle: &ModelBundle,
    opts: &EstimateOptions,
    weighted: bool,
) -> Result<(f64, Diagnostics), EstimError> {
    let needs_propensity = weighted || spec.as_structured().is_none();
    let nuis = if needs_propensity {
        Some(fit_treatment_and_censoring(panel, bundle, opts.seed)?)
    } else {
        None
    };
    let wt = if weighted {
        let nuis = nuis.as_ref().unwrap();
        let hazard_fn = |s: usize, j: usize| nuis.censor_hazard(panel, s, j).unwrap_or(0.0);
        Some(weight_table(
            panel,
            spec,
            &|s, j| nuis.f1(panel, s, j),
            nuis.censoring.as_ref().map(|_| &hazard_fn as &dyn Fn(usize, usize) -> f64),
            opts.weight_cap_percentile,
        )?)
    } else {
        None
    };

    let fit = backward_ice(panel, spec, bundle, wt.as_ref(), nuis.as_ref(), opts.seed)?;
    let psi = math::mean(&fit.t0);

    let (positivity_exact, positivity_near) = match &nuis {
        Some(nuis) => positivity_counts(panel, spec, nuis)?,
        None => (0, 0),
    };
    let diagnostics = Diagnostics {
        max_weight: wt.as_ref().map_or(1.0, |w| w.max_weight),
        clamp_activations: wt.as_ref().map_or(0, |w| w.clamp_activations),
        positivity_exact,
        positivity_near,
        ess_per_interval: fit.ess_per_interval,
        nonconverged_fits: fit.nonconverged + nuis.as_ref().map_or(0, |n| n.nonconverged),
        gamma_fallbacks: 0,
        truncated_weights: wt.as_ref().map_or(0, |w| w.truncated),
        bootstrap_redraws: 0,
    };
    Ok((psi, diagnostics))
}
