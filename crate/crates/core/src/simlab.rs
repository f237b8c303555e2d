//! Simulation laboratory: the two benchmark data-generating programs, the
//! model (mis)specification switches, and a replicate harness with
//! bias/SE/RMSE/coverage summaries.
//!
//! Both programs state their generic interval-`j` conditionals once; the
//! explicit baseline draws coincide with the generic formulas evaluated
//! with all lags-before-time-0 at 0, so interval 0 needs no special case.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::estimators::{
    estimate_ice, estimate_ipw, estimate_tmle_crossfit, estimate_wice, EstimError,
    EstimateOptions, EstimateResult, LearnerMode, ModelBundle,
};
use crate::intervene::{make_multiplicative_shift, InterventionSpec, SpecError};
use crate::math::{self, expit};
use crate::nuisance::{EnsembleConfig, FormulaSpec};
use crate::oracle::{
    enumerate_gformula, generate_panel, mc_truth, Dgp, GenCtx, OracleError, DEFAULT_ENUM_BOUND,
};
use crate::seed::derive_seed;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Estim(#[from] EstimError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("scenario {id}: {failed} of {total} replicates failed (over 5%)")]
    ScenarioFailed { id: String, failed: usize, total: usize },
    #[error("unknown misspecification tag `{0}`")]
    UnknownTag(String),
}

/// Study 1: five intervals, three binary time-varying confounders
/// `(l*, l1, l2)`, informative censoring, non-absorbing treatment.
#[derive(Debug, Clone, Copy)]
pub struct Study1Dgp {
    pub horizon: usize,
    pub censoring: bool,
}

impl Default for Study1Dgp {
    fn default() -> Self {
        Study1Dgp { horizon: 5, censoring: true }
    }
}

impl Dgp for Study1Dgp {
    fn horizon(&self) -> usize {
        self.horizon
    }
    fn schema(&self) -> Vec<String> {
        vec![String::from("lstar"), String::from("l1"), String::from("l2")]
    }
    fn indicator_index(&self) -> usize {
        0
    }
    fn covariate_support(&self, _coord: usize) -> Option<Vec<f64>> {
        Some(vec![0.0, 1.0])
    }
    fn covariate_pmf(&self, coord: usize, ctx: &GenCtx<'_>) -> Option<Vec<f64>> {
        let a1 = ctx.treat(1);
        let p1 = match coord {
            0 => expit(-1.0 - a1 + ctx.cov(0, 1) - ctx.cov(1, 1) + ctx.cov(2, 1)),
            1 => expit(-1.0 + a1 + ctx.cov(1, 1) - ctx.cov(2, 1)),
            _ => expit(1.0 + a1 + ctx.cov(0, 0) + ctx.cov(2, 1)),
        };
        Some(vec![1.0 - p1, p1])
    }
    fn treatment_prob(&self, ctx: &GenCtx<'_>) -> f64 {
        expit(-1.0 - 2.0 * ctx.cov(0, 0) - ctx.cov(1, 0) + ctx.cov(2, 0) + 2.0 * ctx.treat(1))
    }
    fn censor_prob(&self, ctx: &GenCtx<'_>) -> f64 {
        if self.censoring {
            expit(-2.0 + ctx.cov(1, 0) - ctx.cov(2, 0))
        } else {
            0.0
        }
    }
    fn survival_prob(&self, ctx: &GenCtx<'_>) -> f64 {
        expit(1.0 + 3.0 * ctx.treat(0) - 2.0 * ctx.cov(0, 0) + ctx.cov(1, 0) - ctx.cov(2, 0))
    }
    fn has_censoring(&self) -> bool {
        self.censoring
    }
}

/// Which variable the baseline indication formula's bare `L_0` refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineDriver {
    /// The continuous process at baseline, `L_{10}` (default reading).
    L10,
    /// The binary baseline covariate `L_0^1`.
    L01,
}

/// Which variable multiplies `l*` in the survival model's interaction term.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutcomeInteraction {
    /// The binary baseline covariate (reproduces the published truth).
    BaselineBinary,
    /// The current continuous process `L_1`.
    CurrentL1,
}

/// Study 2: five intervals, continuous covariates, nonlinear censoring and
/// survival models, treatment absorbing once initiated.
///
/// Schema: `(l01, l02, l1, lstar)` with the two baselines carried forward
/// every interval.
#[derive(Debug, Clone, Copy)]
pub struct Study2Dgp {
    pub horizon: usize,
    pub censoring: bool,
    pub baseline_indicator_driver: BaselineDriver,
    pub outcome_interaction: OutcomeInteraction,
}

impl Default for Study2Dgp {
    fn default() -> Self {
        Study2Dgp {
            horizon: 5,
            censoring: true,
            baseline_indicator_driver: BaselineDriver::L10,
            outcome_interaction: OutcomeInteraction::BaselineBinary,
        }
    }
}

fn draw_normal(rng: &mut ChaCha12Rng) -> f64 {
    let u1: f64 = rng.random::<f64>().max(1e-300);
    let u2: f64 = rng.random();
    math::sqrt(-2.0 * math::ln(u1)) * math::cos(2.0 * core::f64::consts::PI * u2)
}

impl Dgp for Study2Dgp {
    fn horizon(&self) -> usize {
        self.horizon
    }
    fn schema(&self) -> Vec<String> {
        vec![
            String::from("l01"),
            String::from("l02"),
            String::from("l1"),
            String::from("lstar"),
        ]
    }
    fn indicator_index(&self) -> usize {
        3
    }
    fn covariate_support(&self, coord: usize) -> Option<Vec<f64>> {
        match coord {
            0 | 3 => Some(vec![0.0, 1.0]),
            _ => None,
        }
    }
    fn covariate_pmf(&self, coord: usize, ctx: &GenCtx<'_>) -> Option<Vec<f64>> {
        match coord {
            0 => {
                let p1 = if ctx.j() == 0 { 0.5 } else { ctx.cov(0, 1) };
                Some(vec![1.0 - p1, p1])
            }
            3 => {
                let l1_term = if ctx.j() == 0 {
                    match self.baseline_indicator_driver {
                        BaselineDriver::L10 => ctx.cov(2, 0),
                        BaselineDriver::L01 => ctx.cov(0, 0),
                    }
                } else {
                    ctx.cov(2, 0)
                };
                let p1 = expit(
                    1.5 - ctx.treat(1) - 0.5 * l1_term
                        + ctx.cov(3, 1)
                        + ctx.cov(0, 0)
                        + 0.25 * ctx.cov(1, 0),
                );
                Some(vec![1.0 - p1, p1])
            }
            _ => None,
        }
    }
    fn draw_covariate(&self, coord: usize, ctx: &GenCtx<'_>, rng: &mut ChaCha12Rng) -> f64 {
        match coord {
            1 => {
                if ctx.j() == 0 {
                    draw_normal(rng)
                } else {
                    ctx.cov(1, 1)
                }
            }
            2 => {
                let mean = 2.0 + ctx.treat(1) - ctx.cov(3, 1) + 0.5 * ctx.cov(2, 1) + ctx.cov(0, 0);
                mean + draw_normal(rng)
            }
            _ => {
                let pmf = self.covariate_pmf(coord, ctx).expect("binary coordinate");
                if rng.random::<f64>() < pmf[1] {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
    fn treatment_prob(&self, ctx: &GenCtx<'_>) -> f64 {
        if ctx.j() > 0 && ctx.treat(1) == 1.0 {
            return 1.0;
        }
        let (l01, l02, l1, lstar) = (ctx.cov(0, 0), ctx.cov(1, 0), ctx.cov(2, 0), ctx.cov(3, 0));
        expit(-3.0 + lstar - 0.5 * l1 + 0.25 * lstar * l1 + 0.5 * l01 + 0.25 * l02
            + 0.5 * math::abs(l02))
    }
    fn censor_prob(&self, ctx: &GenCtx<'_>) -> f64 {
        if !self.censoring {
            return 0.0;
        }
        let (l02, l1, lstar) = (ctx.cov(1, 0), ctx.cov(2, 0), ctx.cov(3, 0));
        expit(
            -4.0 - ctx.treat(0) - lstar - 0.5 * math::sqrt(math::abs(l1 * l02))
                + 1.5 * math::abs(l1) / (1.0 + math::exp(l02)),
        )
    }
    fn survival_prob(&self, ctx: &GenCtx<'_>) -> f64 {
        let (l01, l02, l1, lstar) = (ctx.cov(0, 0), ctx.cov(1, 0), ctx.cov(2, 0), ctx.cov(3, 0));
        let inter = match self.outcome_interaction {
            OutcomeInteraction::BaselineBinary => l01,
            OutcomeInteraction::CurrentL1 => l1,
        };
        expit(-1.0 + 2.0 * ctx.treat(0) - 2.0 * lstar + 0.25 * lstar * inter + 0.5 * l01
            + 0.75 * math::powf(math::abs(l1 + l02), 1.5))
    }
    fn has_censoring(&self) -> bool {
        self.censoring
    }
}

/// Observational panel from Study 1 (censoring active).
pub fn gen_study1(n: usize, seed: u64) -> crate::data::Panel {
    generate_panel(&Study1Dgp::default(), n, seed)
}

/// Observational panel from Study 2 (censoring active).
pub fn gen_study2(n: usize, seed: u64) -> crate::data::Panel {
    generate_panel(&Study2Dgp::default(), n, seed)
}

fn repeat_formula(terms: &[&str], j: usize) -> Vec<FormulaSpec> {
    let f = FormulaSpec::parse(terms).expect("fixed formula parses");
    vec![f; j]
}

/// Correctly specified parametric bundle for Study 1.
pub fn study1_bundle(dgp: &Study1Dgp) -> ModelBundle {
    let j = dgp.horizon;
    ModelBundle {
        treatment_formulas: repeat_formula(&["lstar", "l1", "l2", "a@1"], j),
        censoring_formulas: if dgp.censoring {
            Some(repeat_formula(&["l1", "l2"], j))
        } else {
            None
        },
        outcome_formulas: repeat_formula(&["saturated(a, lstar, l1, l2)"], j),
        learner_mode: LearnerMode::Parametric,
        treatment_absorbing: false,
    }
}

/// Ensemble-learning bundle for Study 2.
pub fn study2_bundle(dgp: &Study2Dgp, ensemble: EnsembleConfig) -> ModelBundle {
    let j = dgp.horizon;
    ModelBundle {
        treatment_formulas: repeat_formula(&["lstar", "l1", "l01", "l02"], j),
        censoring_formulas: if dgp.censoring {
            Some(repeat_formula(&["a", "lstar", "l1", "l01", "l02"], j))
        } else {
            None
        },
        outcome_formulas: repeat_formula(&["a", "lstar", "l1", "l01", "l02"], j),
        learner_mode: LearnerMode::Ensemble(ensemble),
        treatment_absorbing: true,
    }
}

/// Estimation scenarios of the misspecification grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelScenario {
    AllCorrect,
    /// Only the outcome regressions correct: treatment models drop the lag
    /// and the censoring process is ignored entirely.
    OutcomeOnly,
    /// Only treatment and censoring correct: outcome regressions keep main
    /// terms only.
    TreatmentCensoringOnly,
    /// Treatment models correct before interval `k`, outcome models correct
    /// from `k` on; the complements misspecified.
    KSplit(usize),
}

impl ModelScenario {
    pub fn parse(tag: &str) -> Result<ModelScenario, SimError> {
        match tag {
            "all_correct" => Ok(ModelScenario::AllCorrect),
            "outcome_only" => Ok(ModelScenario::OutcomeOnly),
            "treatment_censoring_only" => Ok(ModelScenario::TreatmentCensoringOnly),
            _ => match tag.strip_prefix("ksplit:").and_then(|k| k.parse::<usize>().ok()) {
                Some(k) => Ok(ModelScenario::KSplit(k)),
                None => Err(SimError::UnknownTag(tag.into())),
            },
        }
    }

    pub fn tag(&self) -> String {
        match self {
            ModelScenario::AllCorrect => "all_correct".into(),
            ModelScenario::OutcomeOnly => "outcome_only".into(),
            ModelScenario::TreatmentCensoringOnly => "treatment_censoring_only".into(),
            ModelScenario::KSplit(k) => format!("ksplit:{k}"),
        }
    }
}

fn study1_misspec_treatment() -> FormulaSpec {
    FormulaSpec::parse(&["lstar", "l1", "l2"]).expect("fixed formula").tagged("drop a@1")
}

fn study1_misspec_outcome() -> FormulaSpec {
    FormulaSpec::parse(&["a", "lstar", "l1", "l2"]).expect("fixed formula").tagged("mains only")
}

/// Applies a misspecification scenario to a (correct) Study-1-style bundle.
pub fn misspecify(bundle: &ModelBundle, scenario: &ModelScenario) -> ModelBundle {
    let mut out = bundle.clone();
    match scenario {
        ModelScenario::AllCorrect => {}
        ModelScenario::OutcomeOnly => {
            out.treatment_formulas =
                bundle.treatment_formulas.iter().map(|_| study1_misspec_treatment()).collect();
            out.censoring_formulas = None;
        }
        ModelScenario::TreatmentCensoringOnly => {
            out.outcome_formulas =
                bundle.outcome_formulas.iter().map(|_| study1_misspec_outcome()).collect();
        }
        ModelScenario::KSplit(k) => {
            for j in 0..out.treatment_formulas.len() {
                if j >= *k {
                    out.treatment_formulas[j] = study1_misspec_treatment();
                }
                if j < *k {
                    out.outcome_formulas[j] = study1_misspec_outcome();
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DgpId {
    Study1 { horizon: usize, censoring: bool },
    Study2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorId {
    Ipw,
    Ice,
    Wice,
    Tmle,
}

impl EstimatorId {
    pub fn parse(s: &str) -> Option<EstimatorId> {
        match s {
            "ipw" => Some(EstimatorId::Ipw),
            "ice" => Some(EstimatorId::Ice),
            "wice" => Some(EstimatorId::Wice),
            "tmle" => Some(EstimatorId::Tmle),
            _ => None,
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            EstimatorId::Ipw => "ipw",
            EstimatorId::Ice => "ice",
            EstimatorId::Wice => "wice",
            EstimatorId::Tmle => "tmle",
        }
    }
}

/// One cell of the simulation grid.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub id: String,
    pub dgp: DgpId,
    pub n: usize,
    pub delta: f64,
    pub estimator: EstimatorId,
    pub scenario: ModelScenario,
    pub replicates: usize,
    pub seed: u64,
    /// TMLE folds (and the ensemble's internal CV folds).
    pub folds: usize,
    pub bootstrap: Option<usize>,
    /// Fixed truth; when absent it is computed by the oracle.
    pub truth_override: Option<f64>,
    /// Monte Carlo draws when the truth needs simulation.
    pub truth_draws: usize,
}

impl ScenarioConfig {
    pub fn new(id: &str, dgp: DgpId, n: usize, delta: f64, estimator: EstimatorId) -> Self {
        ScenarioConfig {
            id: id.into(),
            dgp,
            n,
            delta,
            estimator,
            scenario: ModelScenario::AllCorrect,
            replicates: 200,
            seed: 0,
            folds: 2,
            bootstrap: None,
            truth_override: None,
            truth_draws: 1_000_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReplicateRecord {
    pub rep: usize,
    pub psi: f64,
    pub ci: Option<(f64, f64)>,
    pub error: Option<String>,
}

/// Bias/SE/RMSE/coverage summary of a scenario (population formulas, so
/// `rmse^2 = bias^2 + se^2` holds identically).
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub truth: f64,
    pub bias: f64,
    pub se: f64,
    pub rmse: f64,
    pub coverage: Option<f64>,
    pub mean_ci_width: Option<f64>,
    pub reps_done: usize,
    pub reps_failed: usize,
}

/// Ground truth for a scenario: exact enumeration for the discrete Study-1
/// law, Monte Carlo for Study 2.
pub fn scenario_truth(cfg: &ScenarioConfig) -> Result<f64, SimError> {
    if let Some(t) = cfg.truth_override {
        return Ok(t);
    }
    match &cfg.dgp {
        DgpId::Study1 { horizon, censoring } => {
            let dgp = Study1Dgp { horizon: *horizon, censoring: *censoring };
            let spec = InterventionSpec::Structured(make_multiplicative_shift(
                cfg.delta,
                dgp.indicator_index(),
            )?);
            Ok(enumerate_gformula(&dgp, &spec, DEFAULT_ENUM_BOUND)?)
        }
        DgpId::Study2 => {
            let dgp = Study2Dgp::default();
            let spec = InterventionSpec::Structured(make_multiplicative_shift(
                cfg.delta,
                dgp.indicator_index(),
            )?);
            Ok(mc_truth(&dgp, &spec, cfg.truth_draws, derive_seed(cfg.seed, 0x72, 0))?.psi)
        }
    }
}

/// Runs a single replicate: generate, estimate, report.
pub fn run_replicate(cfg: &ScenarioConfig, rep: usize) -> ReplicateRecord {
    let rep_seed = derive_seed(cfg.seed, 0x5EED, rep as u64);
    let result: Result<EstimateResult, EstimError> = (|| {
        let (panel, spec, bundle) = match &cfg.dgp {
            DgpId::Study1 { horizon, censoring } => {
                let dgp = Study1Dgp { horizon: *horizon, censoring: *censoring };
                let panel = generate_panel(&dgp, cfg.n, rep_seed);
                let spec = InterventionSpec::Structured(make_multiplicative_shift(
                    cfg.delta,
                    dgp.indicator_index(),
                )?);
                let bundle = misspecify(&study1_bundle(&dgp), &cfg.scenario);
                (panel, spec, bundle)
            }
            DgpId::Study2 => {
                let dgp = Study2Dgp::default();
                let panel = generate_panel(&dgp, cfg.n, rep_seed);
                let spec = InterventionSpec::Structured(make_multiplicative_shift(
                    cfg.delta,
                    dgp.indicator_index(),
                )?);
                let ensemble = EnsembleConfig::default().with_cv_folds(cfg.folds);
                let bundle = study2_bundle(&dgp, ensemble);
                (panel, spec, bundle)
            }
        };
        let opts = EstimateOptions {
            seed: derive_seed(rep_seed, 0xE57, 0),
            weight_cap_percentile: None,
            bootstrap: cfg.bootstrap,
        };
        match cfg.estimator {
            EstimatorId::Ipw => estimate_ipw(&panel, &spec, &bundle, &opts),
            EstimatorId::Ice => estimate_ice(&panel, &spec, &bundle, &opts),
            EstimatorId::Wice => estimate_wice(&panel, &spec, &bundle, &opts),
            EstimatorId::Tmle => estimate_tmle_crossfit(&panel, &spec, &bundle, cfg.folds, &opts),
        }
    })();
    match result {
        Ok(r) => ReplicateRecord {
            rep,
            psi: r.psi_hat,
            ci: r.ci_low.zip(r.ci_high),
            error: None,
        },
        Err(e) => ReplicateRecord { rep, psi: f64::NAN, ci: None, error: Some(format!("{e}")) },
    }
}

/// Reduces replicate records to a metrics row against the truth.
pub fn aggregate(truth: f64, records: &[ReplicateRecord]) -> MetricsRow {
    let ok: Vec<&ReplicateRecord> = records.iter().filter(|r| r.error.is_none()).collect();
    let psis: Vec<f64> = ok.iter().map(|r| r.psi).collect();
    let bias = math::mean(&psis) - truth;
    let se = math::sqrt(math::population_variance(&psis));
    let rmse = {
        let mut acc = math::KahanSum::new();
        for &p in &psis {
            acc.add((p - truth) * (p - truth));
        }
        math::sqrt(acc.value() / psis.len() as f64)
    };
    let with_ci: Vec<&&ReplicateRecord> = ok.iter().filter(|r| r.ci.is_some()).collect();
    let (coverage, width) = if with_ci.is_empty() {
        (None, None)
    } else {
        let covered = with_ci
            .iter()
            .filter(|r| {
                let (lo, hi) = r.ci.unwrap();
                lo <= truth && truth <= hi
            })
            .count();
        let mean_width: f64 = with_ci.iter().map(|r| r.ci.unwrap().1 - r.ci.unwrap().0).sum::<f64>()
            / with_ci.len() as f64;
        (Some(covered as f64 / with_ci.len() as f64), Some(mean_width))
    };
    MetricsRow {
        truth,
        bias,
        se,
        rmse,
        coverage,
        mean_ci_width: width,
        reps_done: ok.len(),
        reps_failed: records.len() - ok.len(),
    }
}

/// Runs a scenario serially; more than 5% replicate failures fails the
/// scenario. (Callers wanting parallelism run [`run_replicate`] per index
/// and [`aggregate`] themselves.)
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<(MetricsRow, Vec<ReplicateRecord>), SimError> {
    let truth = scenario_truth(cfg)?;
    let records: Vec<ReplicateRecord> =
        (0..cfg.replicates).map(|rep| run_replicate(cfg, rep)).collect();
    let row = aggregate(truth, &records);
    if row.reps_failed * 20 > cfg.replicates {
        return Err(SimError::ScenarioFailed {
            id: cfg.id.clone(),
            failed: row.reps_failed,
            total: cfg.replicates,
        });
    }
    Ok((row, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::validate_panel;

    #[test]
    fn study1_marginals_match_coefficients() {
        let n = 200_000;
        let panel = gen_study1(n, 42);
        assert!(validate_panel(&panel).is_empty());

        // P(L10 = 1) ~ expit(-1)
        let l1_mean = panel.subjects.iter().map(|t| t.records[0].covariates[1]).sum::<f64>()
            / n as f64;
        assert!((l1_mean - expit(-1.0)).abs() < 0.005, "{l1_mean}");

        // P(A_0 = 1 | l* = 0, l1 = 0, l2 = 1) ~ expit(0) = 0.5
        let cell: Vec<&crate::data::Trajectory> = panel
            .subjects
            .iter()
            .filter(|t| t.records[0].covariates == vec![0.0, 0.0, 1.0])
            .collect();
        let a_mean =
            cell.iter().map(|t| t.records[0].treatment).sum::<f64>() / cell.len() as f64;
        assert!((a_mean - 0.5).abs() < 0.01, "{a_mean}");
    }

    #[test]
    fn study2_marginals_and_monotone_treatment() {
        let n = 120_000;
        let panel = gen_study2(n, 43);
        assert!(validate_panel(&panel).is_empty());

        // E[L10] = 2 + P(L01 = 1) = 2.5
        let l1_mean = panel.subjects.iter().map(|t| t.records[0].covariates[2]).sum::<f64>()
            / n as f64;
        assert!((l1_mean - 2.5).abs() < 0.01, "{l1_mean}");

        // treatment absorbing along every trajectory
        for t in &panel.subjects {
            let mut prev = 0.0;
            for r in &t.records {
                assert!(r.treatment >= prev);
                prev = r.treatment;
            }
        }
    }

    #[test]
    fn study2_truth_smoke() {
        // full-precision reproduction of the published value is an
        // acceptance criterion; this is a fast guard
        let dgp = Study2Dgp::default();
        let spec =
            InterventionSpec::Structured(make_multiplicative_shift(0.5, 3).unwrap());
        let mc = mc_truth(&dgp, &spec, 60_000, 7).unwrap();
        assert!((mc.psi - 0.629).abs() < 0.009, "psi = {}", mc.psi);
    }

    #[test]
    fn misspecify_examples() {
        let dgp = Study1Dgp::default();
        let correct = study1_bundle(&dgp);

        let outcome_only = misspecify(&correct, &ModelScenario::OutcomeOnly);
        assert!(outcome_only.censoring_formulas.is_none());
        assert_eq!(outcome_only.treatment_formulas[0], study1_misspec_treatment());
        assert_eq!(outcome_only.outcome_formulas, correct.outcome_formulas);

        let tc_only = misspecify(&correct, &ModelScenario::TreatmentCensoringOnly);
        assert_eq!(tc_only.treatment_formulas, correct.treatment_formulas);
        assert!(tc_only.censoring_formulas.is_some());
        assert_eq!(tc_only.outcome_formulas[0], study1_misspec_outcome());

        let unchanged = misspecify(&correct, &ModelScenario::AllCorrect);
        assert_eq!(unchanged.outcome_formulas, correct.outcome_formulas);
        assert_eq!(unchanged.treatment_formulas, correct.treatment_formulas);

        let k2 = misspecify(&correct, &ModelScenario::KSplit(2));
        assert_eq!(k2.treatment_formulas[0], correct.treatment_formulas[0]);
        assert_eq!(k2.treatment_formulas[2], study1_misspec_treatment());
        assert_eq!(k2.outcome_formulas[1], study1_misspec_outcome());
        assert_eq!(k2.outcome_formulas[2], correct.outcome_formulas[2]);

        assert!(ModelScenario::parse("ksplit:3").is_ok());
        assert!(matches!(ModelScenario::parse("nope"), Err(SimError::UnknownTag(_))));
    }

    #[test]
    fn scenario_runs_deterministically() {
        let mut cfg = ScenarioConfig::new(
            "det",
            DgpId::Study1 { horizon: 2, censoring: true },
            250,
            0.5,
            EstimatorId::Ipw,
        );
        cfg.replicates = 4;
        cfg.seed = 99;
        let (row_a, recs_a) = run_scenario(&cfg).unwrap();
        let (row_b, recs_b) = run_scenario(&cfg).unwrap();
        assert_eq!(row_a, row_b);
        assert_eq!(recs_a[2].psi, recs_b[2].psi);
        assert_eq!(row_a.reps_failed, 0);

        // rmse^2 = bias^2 + se^2 with population formulas
        let lhs = row_a.rmse * row_a.rmse;
        let rhs = row_a.bias * row_a.bias + row_a.se * row_a.se;
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn study1_truth_is_monotone_in_delta() {
        let mut last = f64::INFINITY;
        for delta in [0.25, 0.5, 0.75, 1.0] {
            let cfg = ScenarioConfig::new(
                "truth",
                DgpId::Study1 { horizon: 5, censoring: true },
                1,
                delta,
                EstimatorId::Ipw,
            );
            let t = scenario_truth(&cfg).unwrap();
            assert!(t < last, "psi should fall as delta rises");
            last = t;
        }
    }
}
