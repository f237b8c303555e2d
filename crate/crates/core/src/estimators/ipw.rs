//! Inverse-probability-weighted estimator: a product of weighted discrete
//! hazards, `psi = prod_j Upsilon_j` with `Upsilon_j` solving
//! `P_n[ Y_j W_j (Y_{j+1} - Upsilon_j) ] = 0`.

use alloc::string::ToString;
use alloc::vec::Vec;

use super::{
    ess, fit_treatment_and_censoring, positivity_counts, weight_table, Diagnostics,
    EstimError, EstimateOptions, EstimateResult, ModelBundle,
};
use crate::data::{require_valid, Panel};
use crate::intervene::InterventionSpec;

pub fn estimate_ipw(
    panel: &Panel,
    spec: &InterventionSpec,
    bundle: &ModelBundle,
    opts: &EstimateOptions,
) -> Result<EstimateResult, EstimError> {
    require_valid(panel)?;
    if panel.n_subjects() == 0 {
        return Err(EstimError::EmptyPanel);
    }
    let (psi, mut diagnostics) = ipw_point(panel, spec, bundle, opts)?;

    let mut ci = None;
    if let Some(b) = opts.bootstrap {
        let interval = super::bootstrap_ci(
            &mut |p: &Panel| ipw_point(p, spec, bundle, opts).map(|(v, _)| v),
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
        method: "ipw".to_string(),
        delta: spec.delta(),
        n: panel.n_subjects(),
        horizon: panel.horizon,
        diagnostics,
    })
}

pub(crate) fn ipw_point(
    panel: &Panel,
    spec: &InterventionSpec,
    bundle: &ModelBundle,
    opts: &EstimateOptions,
) -> Result<(f64, Diagnostics), EstimError> {
    let nuis = fit_treatment_and_censoring(panel, bundle, opts.seed)?;
    let hazard_fn = |s: usize, j: usize| nuis.censor_hazard(panel, s, j).unwrap_or(0.0);
    let wt = weight_table(
        panel,
        spec,
        &|s, j| nuis.f1(panel, s, j),
        nuis.censoring.as_ref().map(|_| &hazard_fn as &dyn Fn(usize, usize) -> f64),
        opts.weight_cap_percentile,
    )?;

    let mut psi = 1.0;
    let mut ess_per_interval = Vec::with_capacity(panel.horizon);
    for j in 0..panel.horizon {
        // at-risk rows with an observed Y_{j+1}
        let mut num = 0.0;
        let mut den = 0.0;
        let mut ws = Vec::new();
        for s in 0..panel.n_subjects() {
            let traj = &panel.subjects[s];
            if !traj.at_risk(j) || traj.records[j].censored_next {
                continue;
            }
            let w = wt.w[s][j];
            let y_next = match traj.records[j].alive_next {
                Some(true) => 1.0,
                _ => 0.0,
            };
            num += w * y_next;
            den += w;
            ws.push(w);
        }
        if den <= 0.0 {
            return Err(EstimError::ZeroWeightInterval(j));
        }
        ess_per_interval.push(ess(&ws));
        psi *= num / den;
    }

    let (positivity_exact, positivity_near) = positivity_counts(panel, spec, &nuis)?;
    let diagnostics = Diagnostics {
        max_weight: wt.max_weight,
        clamp_activations: wt.clamp_activations,
        positivity_exact,
        positivity_near,
        ess_per_interval,
        nonconverged_fits: nuis.nonconverged,
        gamma_fallbacks: 0,
        truncated_weights: wt.truncated,
        bootstrap_redraws: 0,
    };
    Ok((psi, diagnostics))
}
