//! TOML configuration: intervention + model bundles for `estimate`, and the
//! scenario grid for `simulate`.

use anyhow::{bail, Context, Result};
use gsurv_core::data::Panel;
use gsurv_core::estimators::{LearnerMode, ModelBundle};
use gsurv_core::intervene::{
    make_dynamic, make_grace_period, make_grace_uniform, make_multiplicative_shift,
    make_odds_shift, make_representative, make_static, InterventionSpec,
};
use gsurv_core::nuisance::{EnsembleConfig, FormulaSpec};
use gsurv_core::simlab::{DgpId, EstimatorId, ModelScenario, ScenarioConfig};
use serde::Deserialize;
use std::path::Path;
use std::sync::Arc;

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct EstimateFile {
    #[serde(default)]
    pub intervention: Option<InterventionCfg>,
    #[serde(default)]
    pub models: Option<ModelsCfg>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterventionCfg {
    pub kind: String,
    pub delta: Option<f64>,
    pub m: Option<usize>,
    pub a_star: Option<f64>,
    pub threshold: Option<f64>,
    /// Indicator column name; defaults to the panel's indicator.
    pub indicator: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelsCfg {
    pub treatment: Option<Vec<String>>,
    pub censoring: Option<Vec<String>>,
    pub outcome: Option<Vec<String>>,
    #[serde(default)]
    pub treatment_by_interval: Option<Vec<Vec<String>>>,
    #[serde(default)]
    pub censoring_by_interval: Option<Vec<Vec<String>>>,
    #[serde(default)]
    pub outcome_by_interval: Option<Vec<Vec<String>>>,
    pub learner: Option<String>,
    pub ensemble_cv_folds: Option<usize>,
    #[serde(default)]
    pub absorbing_treatment: bool,
}

pub fn load_estimate_file(path: &Path) -> Result<EstimateFile> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    Ok(toml::from_str(&text)?)
}

/// Builds the intervention spec from config (CLI `--delta` wins when given).
pub fn build_spec(
    cfg: Option<&InterventionCfg>,
    cli_delta: Option<f64>,
    panel: &Panel,
) -> Result<InterventionSpec> {
    let indicator_index = match cfg.and_then(|c| c.indicator.as_deref()) {
        Some(name) => panel
            .schema
            .iter()
            .position(|c| c == name)
            .with_context(|| format!("indicator column `{name}` not in the panel schema"))?,
        None => panel.indicator_index,
    };
    let kind = cfg.map(|c| c.kind.as_str()).unwrap_or("mult_shift");
    let delta = cli_delta.or(cfg.and_then(|c| c.delta));
    Ok(match kind {
        "mult_shift" => {
            let delta = delta.context("mult_shift needs delta")?;
            InterventionSpec::Structured(make_multiplicative_shift(delta, indicator_index)?)
        }
        "odds_shift" => {
            let delta = delta.context("odds_shift needs delta")?;
            InterventionSpec::General(make_odds_shift(delta)?)
        }
        "grace" => {
            let m = cfg.and_then(|c| c.m).context("grace needs m")?;
            InterventionSpec::Structured(make_grace_period(m, indicator_index))
        }
        "grace_uniform" => {
            let m = cfg.and_then(|c| c.m).context("grace_uniform needs m")?;
            InterventionSpec::Structured(make_grace_uniform(m, indicator_index))
        }
        "representative" => {
            let threshold = cfg.and_then(|c| c.threshold).context("representative needs threshold")?;
            InterventionSpec::General(make_representative(vec![0.0, 1.0], threshold))
        }
        "static" => {
            let a_star = cfg.and_then(|c| c.a_star).context("static needs a_star")?;
            InterventionSpec::Structured(make_static(a_star, vec![0.0, 1.0]))
        }
        "dynamic" => {
            // the built-in declarative rule: treat iff indicated
            InterventionSpec::Structured(make_dynamic(Arc::new(
                move |h: &gsurv_core::data::HistoryView<'_>| h.covariate(indicator_index, 0),
            )))
        }
        other => bail!("unknown intervention kind `{other}`"),
    })
}

fn parse_formula(terms: &[String]) -> Result<FormulaSpec> {
    let refs: Vec<&str> = terms.iter().map(|s| s.as_str()).collect();
    Ok(FormulaSpec::parse(&refs)?)
}

fn per_interval(
    uniform: Option<&Vec<String>>,
    by_interval: Option<&Vec<Vec<String>>>,
    fallback: &[String],
    horizon: usize,
    what: &str,
) -> Result<Vec<FormulaSpec>> {
    if let Some(rows) = by_interval {
        if rows.len() != horizon {
            bail!("{what}_by_interval needs {horizon} entries, got {}", rows.len());
        }
        return rows.iter().map(|r| parse_formula(r)).collect();
    }
    let terms = uniform.cloned().unwrap_or_else(|| fallback.to_vec());
    let f = parse_formula(&terms)?;
    Ok(vec![f; horizon])
}

/// Builds the model bundle; defaults are main-terms formulas over the
/// schema, a treatment lag in the propensity model, and censoring models
/// exactly when the panel has censored records.
pub fn build_bundle(cfg: Option<&ModelsCfg>, panel: &Panel) -> Result<ModelBundle> {
    let horizon = panel.horizon;
    let mains: Vec<String> = panel.schema.clone();
    let mut treat_default = mains.clone();
    treat_default.push("a@1".into());
    let mut outcome_default = vec!["a".to_string()];
    outcome_default.extend(mains.iter().cloned());
    let mut censor_default = vec!["a".to_string()];
    censor_default.extend(mains.iter().cloned());

    let has_censoring =
        panel.subjects.iter().any(|t| t.records.iter().any(|r| r.censored_next));

    let treatment_formulas = per_interval(
        cfg.and_then(|c| c.treatment.as_ref()),
        cfg.and_then(|c| c.treatment_by_interval.as_ref()),
        &treat_default,
        horizon,
        "treatment",
    )?;
    let outcome_formulas = per_interval(
        cfg.and_then(|c| c.outcome.as_ref()),
        cfg.and_then(|c| c.outcome_by_interval.as_ref()),
        &outcome_default,
        horizon,
        "outcome",
    )?;
    let censoring_formulas = if cfg.map_or(has_censoring, |c| {
        c.censoring.is_some() || c.censoring_by_interval.is_some() || has_censoring
    }) {
        Some(per_interval(
            cfg.and_then(|c| c.censoring.as_ref()),
            cfg.and_then(|c| c.censoring_by_interval.as_ref()),
            &censor_default,
            horizon,
            "censoring",
        )?)
    } else {
        None
    };

    let learner_mode = match cfg.and_then(|c| c.learner.as_deref()).unwrap_or("parametric") {
        "parametric" => LearnerMode::Parametric,
        "ensemble" => {
            let folds = cfg.and_then(|c| c.ensemble_cv_folds).unwrap_or(5);
            LearnerMode::Ensemble(EnsembleConfig::default().with_cv_folds(folds))
        }
        other => bail!("unknown learner `{other}`"),
    };

    Ok(ModelBundle {
        treatment_formulas,
        censoring_formulas,
        outcome_formulas,
        learner_mode,
        treatment_absorbing: cfg.map_or(false, |c| c.absorbing_treatment),
    })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridFile {
    pub grid: GridDefaults,
    #[serde(rename = "scenario")]
    pub scenarios: Vec<GridScenario>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridDefaults {
    pub seed: u64,
    #[serde(default = "default_reps")]
    pub replicates: usize,
}

fn default_reps() -> usize {
    200
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridScenario {
    pub id: String,
    pub dgp: String,
    pub n: usize,
    pub delta: f64,
    pub estimator: String,
    #[serde(default = "default_models")]
    pub models: String,
    pub replicates: Option<usize>,
    pub seed: Option<u64>,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default)]
    pub bootstrap: usize,
    pub truth: Option<f64>,
    #[serde(default = "default_truth_draws")]
    pub truth_draws: usize,
}

fn default_models() -> String {
    "all_correct".into()
}

fn default_folds() -> usize {
    2
}

fn default_truth_draws() -> usize {
    1_000_000
}

pub fn load_grid(path: &Path) -> Result<Vec<ScenarioConfig>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    let file: GridFile = toml::from_str(&text)?;
    file.scenarios
        .iter()
        .map(|s| {
            let dgp = match s.dgp.as_str() {
                "study1" => DgpId::Study1 { horizon: 5, censoring: true },
                "study1_j3" => DgpId::Study1 { horizon: 3, censoring: false },
                "study2" => DgpId::Study2,
                other => bail!("unknown dgp `{other}`"),
            };
            let estimator = EstimatorId::parse(&s.estimator)
                .with_context(|| format!("unknown estimator `{}`", s.estimator))?;
            let mut cfg = ScenarioConfig::new(&s.id, dgp, s.n, s.delta, estimator);
            cfg.scenario = ModelScenario::parse(&s.models)?;
            cfg.replicates = s.replicates.unwrap_or(file.grid.replicates);
            cfg.seed = s.seed.unwrap_or(file.grid.seed);
            cfg.folds = s.folds;
            cfg.bootstrap = if s.bootstrap > 0 { Some(s.bootstrap) } else { None };
            cfg.truth_override = s.truth;
            cfg.truth_draws = s.truth_draws;
            Ok(cfg)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use gsurv_core::fixtures;

    #[test]
    fn default_bundle_matches_panel_shape() {
        let p1 = fixtures::panel_p1();
        let bundle = build_bundle(None, &p1).unwrap();
        assert_eq!(bundle.treatment_formulas.len(), 2);
        assert!(bundle.censoring_formulas.is_some()); // P1 has a censored record
    }

    #[test]
    fn grid_parses_and_maps() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("grid.toml");
        std::fs::write(
            &path,
            r#"
[grid]
seed = 7
replicates = 10

[[scenario]]
id = "a"
dgp = "study1"
n = 100
delta = 0.5
estimator = "wice"
models = "outcome_only"

[[scenario]]
id = "b"
dgp = "study2"
n = 50
delta = 0.5
estimator = "tmle"
folds = 3
replicates = 4
"#,
        )
        .unwrap();
        let grid = load_grid(&path).unwrap();
        assert_eq!(grid.len(), 2);
        assert_eq!(grid[0].replicates, 10);
        assert_eq!(grid[0].scenario, ModelScenario::OutcomeOnly);
        assert_eq!(grid[1].replicates, 4);
        assert_eq!(grid[1].folds, 3);
    }

    #[test]
    fn spec_kinds_build() {
        let p1 = fixtures::panel_p1();
        for kind in ["mult_shift", "odds_shift", "grace", "grace_uniform", "representative", "static", "dynamic"] {
            let cfg = InterventionCfg {
                kind: kind.into(),
                delta: Some(0.5),
                m: Some(1),
                a_star: Some(1.0),
                threshold: Some(1.0),
                indicator: None,
            };
            build_spec(Some(&cfg), None, &p1).unwrap();
        }
        assert!(build_spec(
            Some(&InterventionCfg {
                kind: "nope".into(),
                delta: None,
                m: None,
                a_star: None,
                threshold: None,
                indicator: None
            }),
            None,
            &p1
        )
        .is_err());
    }
}
