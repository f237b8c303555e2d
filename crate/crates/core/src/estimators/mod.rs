//! Estimators of counterfactual survival under an intervention treatment
//! distribution: IPW, ICE, weighted ICE, and cross-fit TMLE, with censoring
//! handled by inverse-probability-of-censoring factors and subject-level
//! bootstrap intervals.

mod bootstrap;
mod ice;
mod ipw;
mod tmle;

pub use bootstrap::{bootstrap_ci, BootstrapInterval};
pub use ice::{estimate_ice, estimate_wice, estimate_wice_detailed, WiceParts};
pub use ipw::estimate_ipw;
pub use tmle::{estimate_tmle_crossfit, estimate_tmle_detailed};

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use thiserror::Error;

use crate::data::{DataError, Panel};
use crate::eif::EifError;
use crate::intervene::{evaluate_q, InterventionSpec, SpecError};
use crate::math;
use crate::nuisance::{
    build_design_expanded, fit_ensemble, fit_logistic_irls, kfold, EnsembleConfig, EnsembleModel,
    ExpandedFormula, FitError, FittedLogistic, FormulaSpec,
};

#[derive(Debug, Error)]
pub enum EstimError {
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Eif(#[from] EifError),
    #[error("bundle shape: {0}")]
    BundleShape(String),
    #[error("zero total weight among at-risk subjects at interval {0}")]
    ZeroWeightInterval(usize),
    #[error("{0} requires a structured intervention spec")]
    UnsupportedSpec(&'static str),
    #[error("{failures} of {attempts} bootstrap resamples failed (over 10%)")]
    BootstrapFailures { failures: usize, attempts: usize },
    #[error("panel has no subjects")]
    EmptyPanel,
}

/// How nuisance regressions are fit.
#[derive(Debug, Clone, PartialEq)]
pub enum LearnerMode {
    /// Weighted quasi-logistic regression on the formula's design.
    Parametric,
    /// Cross-validated stacking over the formula's columns as raw features.
    Ensemble(EnsembleConfig),
}

/// Per-interval nuisance model specifications.
#[derive(Debug, Clone)]
pub struct ModelBundle {
    pub treatment_formulas: Vec<FormulaSpec>,
    /// Present exactly when the panel has censoring to adjust for.
    pub censoring_formulas: Option<Vec<FormulaSpec>>,
    pub outcome_formulas: Vec<FormulaSpec>,
    pub learner_mode: LearnerMode,
    /// Observed treatment is deterministic once initiated: propensities are
    /// fit among not-yet-treated rows and `f(1) = 1` afterwards.
    pub treatment_absorbing: bool,
}

impl ModelBundle {
    pub fn check_shape(&self, panel: &Panel) -> Result<(), EstimError> {
        let j = panel.horizon;
        if self.treatment_formulas.len() != j {
            return Err(EstimError::BundleShape(alloc::format!(
                "need {j} treatment formulas, got {}",
                self.treatment_formulas.len()
            )));
        }
        if self.outcome_formulas.len() != j {
            return Err(EstimError::BundleShape(alloc::format!(
                "need {j} outcome formulas, got {}",
                self.outcome_formulas.len()
            )));
        }
        if let Some(c) = &self.censoring_formulas {
            if c.len() != j {
                return Err(EstimError::BundleShape(alloc::format!(
                    "need {j} censoring formulas, got {}",
                    c.len()
                )));
            }
        }
        Ok(())
    }
}

/// A fitted nuisance regression: predicts a probability from a subject's
/// history at an interval, optionally overriding the current treatment.
#[derive(Debug, Clone)]
pub enum FittedModel {
    Logistic { expanded: ExpandedFormula, fit: FittedLogistic },
    Ensemble { expanded: ExpandedFormula, model: EnsembleModel },
}

impl FittedModel {
    pub fn predict(&self, panel: &Panel, subject: usize, j: usize, a_override: Option<f64>) -> f64 {
        let mut buf = Vec::new();
        match self {
            FittedModel::Logistic { expanded, fit } => {
                expanded.row(panel, subject, j, a_override, &mut buf);
                fit.predict(&buf)
            }
            FittedModel::Ensemble { expanded, model } => {
                expanded.row(panel, subject, j, a_override, &mut buf);
                model.predict(&buf[1..]) // drop the intercept column
            }
        }
    }

    fn converged(&self) -> bool {
        match self {
            FittedModel::Logistic { fit, .. } => fit.converged,
            FittedModel::Ensemble { .. } => true,
        }
    }
}

/// Fits one probability regression at interval `j` over the given rows.
pub(crate) fn fit_model(
    panel: &Panel,
    formula: &FormulaSpec,
    j: usize,
    rows: &[usize],
    response: &[f64],
    weights: &[f64],
    mode: &LearnerMode,
    fold_of: &[usize],
) -> Result<FittedModel, EstimError> {
    let expanded = formula.expand(panel)?;
    let design = build_design_expanded(panel, &expanded, j, rows, None);
    match mode {
        LearnerMode::Parametric => {
            let fit = fit_logistic_irls(&design, response, weights)?;
            Ok(FittedModel::Logistic { expanded, fit })
        }
        LearnerMode::Ensemble(cfg) => {
            let ncol = design.ncol;
            let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(rows.len()); ncol - 1];
            for i in 0..design.nrow {
                let r = design.row(i);
                for c in 1..ncol {
                    columns[c - 1].push(r[c]);
                }
            }
            let row_folds: Vec<usize> = rows.iter().map(|&s| fold_of[s]).collect();
            let model = fit_ensemble(&columns, response, weights, &row_folds, cfg)?;
            Ok(FittedModel::Ensemble { expanded, model })
        }
    }
}

/// Internal fold labels used for ensemble cross-validation when fitting on
/// the full sample (not the TMLE splits).
pub(crate) fn cv_fold_labels(panel: &Panel, mode: &LearnerMode, seed: u64) -> Result<Vec<usize>, EstimError> {
    match mode {
        LearnerMode::Parametric => Ok(vec![0; panel.n_subjects()]),
        LearnerMode::Ensemble(cfg) => {
            let folds = kfold(&panel.ids, cfg.cv_folds.min(panel.n_subjects()), seed)?;
            Ok(folds.fold_of)
        }
    }
}

/// Fitted treatment and censoring processes for a panel.
#[derive(Debug, Clone)]
pub struct NuisanceFits {
    pub propensity: Vec<FittedModel>,
    pub censoring: Option<Vec<FittedModel>>,
    pub treatment_absorbing: bool,
    pub nonconverged: usize,
}

impl NuisanceFits {
    /// `P(A_j = 1 | measured past)` for an at-risk row.
    pub fn f1(&self, panel: &Panel, subject: usize, j: usize) -> f64 {
        if self.treatment_absorbing && j > 0 {
            let prev = panel.subjects[subject].records[j - 1].treatment;
            if prev == 1.0 {
                return 1.0;
            }
        }
        self.propensity[j].predict(panel, subject, j, None)
    }

    /// `P(C_{j+1} = 1 | measured past incl. A_j)` when censoring models exist.
    pub fn censor_hazard(&self, panel: &Panel, subject: usize, j: usize) -> Option<f64> {
        self.censoring.as_ref().map(|m| m[j].predict(panel, subject, j, None))
    }
}

/// Maximum-likelihood fits of the per-interval treatment (and censoring)
/// models over the at-risk rows.
pub fn fit_treatment_and_censoring(
    panel: &Panel,
    bundle: &ModelBundle,
    seed: u64,
) -> Result<NuisanceFits, EstimError> {
    bundle.check_shape(panel)?;
    let fold_of = cv_fold_labels(panel, &bundle.learner_mode, seed)?;
    let mut propensity = Vec::with_capacity(panel.horizon);
    let mut censoring = bundle.censoring_formulas.as_ref().map(|_| Vec::with_capacity(panel.horizon));
    let mut nonconverged = 0usize;

    for j in 0..panel.horizon {
        let at_risk = panel.at_risk_rows(j);
        if at_risk.is_empty() {
            return Err(EstimError::ZeroWeightInterval(j));
        }
        // propensity: among not-yet-treated rows when treatment is absorbing
        let rows: Vec<usize> = if bundle.treatment_absorbing && j > 0 {
            at_risk
                .iter()
                .copied()
                .filter(|&s| panel.subjects[s].records[j - 1].treatment == 0.0)
                .collect()
        } else {
            at_risk.clone()
        };
        if rows.is_empty() {
            return Err(EstimError::ZeroWeightInterval(j));
        }
        let response: Vec<f64> = rows.iter().map(|&s| panel.subjects[s].records[j].treatment).collect();
        let weights = vec![1.0; rows.len()];
        let model = fit_model(
            panel,
            &bundle.treatment_formulas[j],
            j,
            &rows,
            &response,
            &weights,
            &bundle.learner_mode,
            &fold_of,
        )?;
        if !model.converged() {
            nonconverged += 1;
        }
        propensity.push(model);

        if let (Some(cens_formulas), Some(cens_fits)) =
            (bundle.censoring_formulas.as_ref(), censoring.as_mut())
        {
            let response: Vec<f64> = at_risk
                .iter()
                .map(|&s| if panel.subjects[s].records[j].censored_next { 1.0 } else { 0.0 })
                .collect();
            let weights = vec![1.0; at_risk.len()];
            let model = fit_model(
                panel,
                &cens_formulas[j],
                j,
                &at_risk,
                &response,
                &weights,
                &bundle.learner_mode,
                &fold_of,
            )?;
            if !model.converged() {
                nonconverged += 1;
            }
            cens_fits.push(model);
        }
    }
    Ok(NuisanceFits {
        propensity,
        censoring,
        treatment_absorbing: bundle.treatment_absorbing,
        nonconverged,
    })
}

/// Cumulative observational weights `W_j = prod_{k<=j} q_k/f_k · 1/(1-λ_k)`
/// along each subject's observed records.
#[derive(Debug, Clone)]
pub struct WeightTable {
    /// `w[s][j]` for `j < records(s)`; 0 when the spec puts no mass on the
    /// observed treatment.
    pub w: Vec<Vec<f64>>,
    pub max_weight: f64,
    pub clamp_activations: usize,
    pub truncated: usize,
}

/// Builds the weight table from already-fitted propensities (and hazards).
///
/// `f1_of(s, j)` is the fitted `P(A_j = 1 | ·)`; `hazard_of` the fitted
/// censoring hazard when applicable. `cap_percentile`, when set, truncates
/// each interval's weights at that percentile (an opt-in estimand change,
/// always surfaced in diagnostics).
pub fn weight_table(
    panel: &Panel,
    spec: &InterventionSpec,
    f1_of: &dyn Fn(usize, usize) -> f64,
    hazard_of: Option<&dyn Fn(usize, usize) -> f64>,
    cap_percentile: Option<f64>,
) -> Result<WeightTable, EstimError> {
    let n = panel.n_subjects();
    let mut w: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut clamp_activations = 0usize;
    for s in 0..n {
        let n_rec = panel.subjects[s].records.len();
        let mut ws = Vec::with_capacity(n_rec);
        let mut log_w = 0.0;
        let mut zero = false;
        for j in 0..n_rec {
            let h = panel.history(s, j)?;
            let f1 = f1_of(s, j);
            // q is evaluated at the clamped process so q/f is exactly 1
            // whenever the spec leaves f untouched
            let f1_c = math::clamp_prob(f1);
            if f1_c != f1 {
                clamp_activations += 1;
            }
            let f = [1.0 - f1_c, f1_c];
            let q = evaluate_q(spec, &h, &f)?;
            let a = panel.subjects[s].records[j].treatment;
            let idx = if a == 1.0 { 1 } else { 0 };
            let ratio = q[idx] / f[idx];
            if ratio == 0.0 {
                zero = true;
            } else if !zero {
                log_w += math::ln(ratio);
            }
            if let Some(hz) = hazard_of {
                let lam = hz(s, j);
                let lam_c = lam.clamp(0.0, 1.0 - math::PROB_EPS);
                if lam_c != lam {
                    clamp_activations += 1;
                }
                log_w -= math::ln(1.0 - lam_c);
            }
            ws.push(if zero { 0.0 } else { math::exp(log_w) });
        }
        w.push(ws);
    }

    let mut truncated = 0usize;
    if let Some(p) = cap_percentile {
        for j in 0..panel.horizon {
            let mut vals: Vec<f64> =
                (0..n).filter(|&s| j < w[s].len()).map(|s| w[s][j]).collect();
            if vals.len() < 2 {
                continue;
            }
            vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let cap = percentile_sorted(&vals, p);
            for s in 0..n {
                if j < w[s].len() && w[s][j] > cap {
                    w[s][j] = cap;
                    truncated += 1;
                }
            }
        }
    }

    let max_weight = w.iter().flat_map(|ws| ws.iter().copied()).fold(0.0f64, f64::max);
    Ok(WeightTable { w, max_weight, clamp_activations, truncated })
}

/// Order statistic at probability `p` (R type-1): the ceil(p·n)-th smallest.
pub(crate) fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = libm::ceil(p * n as f64) as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Point estimate with interval and diagnostics.
#[derive(Debug, Clone)]
pub struct EstimateResult {
    pub psi_hat: f64,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub method: String,
    pub delta: Option<f64>,
    pub n: usize,
    pub horizon: usize,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, Default)]
pub struct Diagnostics {
    pub max_weight: f64,
    pub clamp_activations: usize,
    pub positivity_exact: usize,
    pub positivity_near: usize,
    /// Effective sample size `(Σw)²/Σw²` of the at-risk rows per interval.
    pub ess_per_interval: Vec<f64>,
    pub nonconverged_fits: usize,
    pub gamma_fallbacks: usize,
    pub truncated_weights: usize,
    pub bootstrap_redraws: usize,
}

/// Options shared by the estimator entry points.
#[derive(Debug, Clone)]
pub struct EstimateOptions {
    pub seed: u64,
    /// Percentile cap on observational weights (off by default).
    pub weight_cap_percentile: Option<f64>,
    /// Subject-level bootstrap replicates for the interval; `None` skips it.
    pub bootstrap: Option<usize>,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        EstimateOptions { seed: 0, weight_cap_percentile: None, bootstrap: None }
    }
}

pub(crate) fn ess(weights: &[f64]) -> f64 {
    let s: f64 = weights.iter().sum();
    let s2: f64 = weights.iter().map(|w| w * w).sum();
    if s2 == 0.0 {
        0.0
    } else {
        s * s / s2
    }
}

/// Positivity counters against the fitted propensities at the default
/// diagnostic threshold.
pub(crate) fn positivity_counts(
    panel: &Panel,
    spec: &InterventionSpec,
    nuis: &NuisanceFits,
) -> Result<(usize, usize), EstimError> {
    let report = crate::intervene::check_positivity(
        spec,
        panel,
        |s, j| {
            let f1 = nuis.f1(panel, s, j);
            vec![1.0 - f1, f1]
        },
        0.01,
    )?;
    let exact = report.exact_count();
    Ok((exact, report.violations.len() - exact))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::intervene::make_multiplicative_shift;

    #[test]
    fn hand_computed_weight_table_on_p2() {
        // delta = 0.5 multiplicative shift on indicator column 0, hand-set
        // propensities and censoring hazards; weights worked out by hand:
        //   subject 0: j0 l*=1,a=1,f1=.5 -> q1=.75, ratio 1.5; ipcw 1/.9
        //              j1 l*=0,a=0       -> ratio 1;          ipcw 1/.8
        //   subject 1: j0 l*=0,a=0       -> ratio 1;          ipcw 1/.8
        //              j1 l*=1,a=1,f1=.6 -> q1=.8, ratio 4/3; ipcw 1/.9
        //   subject 2: j0 l*=1,a=0,f1=.4 -> q0=.3/.6=.5;      ipcw 1/.9
        //              j1 l*=1,a=1,f1=.5 -> q1=.75, ratio 1.5; ipcw 1/.75
        let panel = fixtures::panel_p2();
        let spec =
            InterventionSpec::Structured(make_multiplicative_shift(0.5, 0).unwrap());
        let f1 = |s: usize, j: usize| -> f64 {
            [[0.5, 0.25], [0.2, 0.6], [0.4, 0.5]][s][j]
        };
        let lam = |s: usize, j: usize| -> f64 {
            [[0.1, 0.2], [0.2, 0.1], [0.1, 0.25]][s][j]
        };
        let wt = weight_table(&panel, &spec, &f1, Some(&lam), None).unwrap();

        let expect = [
            [1.5 / 0.9, 1.5 / 0.9 / 0.8],
            [1.0 / 0.8, (1.0 / 0.8) * (4.0 / 3.0) / 0.9],
            [0.5 / 0.9, (0.5 / 0.9) * 1.5 / 0.75],
        ];
        for s in 0..3 {
            for j in 0..2 {
                assert!(
                    (wt.w[s][j] - expect[s][j]).abs() < 1e-12,
                    "s={s} j={j}: {} vs {}",
                    wt.w[s][j],
                    expect[s][j]
                );
            }
        }
        assert_eq!(wt.clamp_activations, 0);
    }

    #[test]
    fn zero_q_mass_zeroes_the_tail() {
        // static "never treat" puts zero mass on an observed a=1
        let panel = fixtures::panel_p2();
        let spec = InterventionSpec::Structured(crate::intervene::make_static(0.0, vec![0.0, 1.0]));
        let wt = weight_table(&panel, &spec, &|_, _| 0.5, None, None).unwrap();
        // subject 0 treats at j=0: weight 0 from the start
        assert_eq!(wt.w[0][0], 0.0);
        assert_eq!(wt.w[0][1], 0.0);
        // subject 1 treats at j=1 only
        assert!((wt.w[1][0] - 2.0).abs() < 1e-12);
        assert_eq!(wt.w[1][1], 0.0);
    }

    #[test]
    fn weight_cap_truncates_and_reports() {
        let panel = fixtures::panel_p2();
        let spec =
            InterventionSpec::Structured(make_multiplicative_shift(0.1, 0).unwrap());
        let f1 = |_s: usize, _j: usize| 0.05;
        let uncapped = weight_table(&panel, &spec, &f1, None, None).unwrap();
        let capped = weight_table(&panel, &spec, &f1, None, Some(0.5)).unwrap();
        assert!(capped.max_weight <= uncapped.max_weight);
        assert!(capped.truncated > 0);
    }
}
