//! Nuisance-model machinery: declarative regression formulas, weighted
//! quasi-logistic fitting, a small gradient-boosting learner, and the
//! cross-validated convex-stacking ensemble.
//!
//! Formula atoms are `a` (treatment in the current interval), `a@k`
//! (treatment lagged `k` intervals), a covariate name, or `name@k`;
//! `x:y` denotes an interaction column and `saturated(v1, v2, ...)`
//! expands to all main effects and all higher-order products of the listed
//! binary variables. Lags reaching before time 0 read as 0.

mod boost;
mod ensemble;
mod logistic;

pub use boost::BoostedStumps;
pub use ensemble::{
    fit_ensemble, kfold, EnsembleConfig, EnsembleModel, FittedMember, FoldAssignment, LearnerKind,
};
pub use logistic::{fit_logistic_irls, score_residuals, FittedLogistic};

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use thiserror::Error;

use crate::data::Panel;

#[derive(Debug, Error, PartialEq)]
pub enum FitError {
    #[error("unknown column `{0}` in formula")]
    UnknownColumn(String),
    #[error("cannot parse formula term `{0}`")]
    BadTerm(String),
    #[error("saturated expansion over {0} variables exceeds the supported limit")]
    SaturatedTooWide(usize),
    #[error("no rows with positive weight")]
    NoPositiveWeight,
    #[error("design and response dimensions disagree")]
    DimensionMismatch,
    #[error("need at least {0} folds")]
    TooFewFolds(usize),
    #[error("more folds than subjects ({folds} > {n})")]
    FoldsExceedSubjects { folds: usize, n: usize },
    #[error("every ensemble member failed to train")]
    AllMembersFailed,
}

/// A variable reference: treatment or a named covariate, with a lag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Var {
    Treatment,
    Covariate(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarRef {
    pub var: Var,
    pub lag: usize,
}

impl VarRef {
    fn parse(s: &str) -> Result<VarRef, FitError> {
        let (name, lag) = match s.split_once('@') {
            Some((n, l)) => {
                let lag = l.trim().parse::<usize>().map_err(|_| FitError::BadTerm(s.to_string()))?;
                (n.trim(), lag)
            }
            None => (s.trim(), 0),
        };
        if name.is_empty() {
            return Err(FitError::BadTerm(s.to_string()));
        }
        let var = if name == "a" { Var::Treatment } else { Var::Covariate(name.to_string()) };
        Ok(VarRef { var, lag })
    }

    fn label(&self) -> String {
        let base = match &self.var {
            Var::Treatment => "a".to_string(),
            Var::Covariate(c) => c.clone(),
        };
        if self.lag == 0 {
            base
        } else {
            format!("{base}@{}", self.lag)
        }
    }
}

/// Declarative regression design: a term list or a saturated expansion.
#[derive(Debug, Clone, PartialEq)]
pub struct FormulaSpec {
    pub terms: Vec<Vec<VarRef>>,
    pub saturated: bool,
    pub misspecification_tag: Option<String>,
}

impl FormulaSpec {
    /// Parses term strings; a single `saturated(v1, v2, ...)` entry selects
    /// the saturated expansion.
    pub fn parse(terms: &[&str]) -> Result<FormulaSpec, FitError> {
        if terms.len() == 1 {
            let t = terms[0].trim();
            if let Some(inner) = t.strip_prefix("saturated(").and_then(|s| s.strip_suffix(')')) {
                let vars = inner
                    .split(',')
                    .map(VarRef::parse)
                    .collect::<Result<Vec<_>, _>>()?;
                if vars.len() > 16 {
                    return Err(FitError::SaturatedTooWide(vars.len()));
                }
                return Ok(FormulaSpec { terms: vec![vars], saturated: true, misspecification_tag: None });
            }
        }
        let parsed = terms
            .iter()
            .map(|t| t.split(':').map(VarRef::parse).collect::<Result<Vec<_>, _>>())
            .collect::<Result<Vec<_>, _>>()?;
        Ok(FormulaSpec { terms: parsed, saturated: false, misspecification_tag: None })
    }

    pub fn tagged(mut self, tag: &str) -> FormulaSpec {
        self.misspecification_tag = Some(tag.to_string());
        self
    }

    /// Resolves names against the panel schema and expands to concrete
    /// product columns (intercept first).
    pub fn expand(&self, panel: &Panel) -> Result<ExpandedFormula, FitError> {
        let resolve = |v: &VarRef| -> Result<ResolvedVar, FitError> {
            match &v.var {
                Var::Treatment => Ok(ResolvedVar { index: None, lag: v.lag, label: v.label() }),
                Var::Covariate(name) => {
                    let idx = panel
                        .column(name)
                        .map_err(|_| FitError::UnknownColumn(name.clone()))?;
                    Ok(ResolvedVar { index: Some(idx), lag: v.lag, label: v.label() })
                }
            }
        };
        let mut columns =
            vec![ProductColumn { factors: Vec::new(), label: "(intercept)".to_string() }];
        if self.saturated {
            let vars = self.terms[0].iter().map(resolve).collect::<Result<Vec<_>, _>>()?;
            let k = vars.len();
            let mut subsets: Vec<u32> = (1u32..(1 << k)).collect();
            subsets.sort_by_key(|s| (s.count_ones(), *s));
            for s in subsets {
                let factors: Vec<ResolvedVar> =
                    (0..k).filter(|i| s & (1 << i) != 0).map(|i| vars[i].clone()).collect();
                let label = factors.iter().map(|f| f.label.clone()).collect::<Vec<_>>().join(":");
                columns.push(ProductColumn { factors, label });
            }
        } else {
            for term in &self.terms {
                let factors = term.iter().map(resolve).collect::<Result<Vec<_>, _>>()?;
                let label = factors.iter().map(|f| f.label.clone()).collect::<Vec<_>>().join(":");
                columns.push(ProductColumn { factors, label });
            }
        }
        Ok(ExpandedFormula { columns })
    }
}

#[derive(Debug, Clone)]
struct ResolvedVar {
    /// Covariate index in the schema, or `None` for treatment.
    index: Option<usize>,
    lag: usize,
    label: String,
}

#[derive(Debug, Clone)]
pub struct ProductColumn {
    factors: Vec<ResolvedVar>,
    pub label: String,
}

/// Formula resolved against a schema; evaluation needs only a trajectory.
#[derive(Debug, Clone)]
pub struct ExpandedFormula {
    columns: Vec<ProductColumn>,
}

impl ExpandedFormula {
    pub fn ncol(&self) -> usize {
        self.columns.len()
    }

    pub fn labels(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.label.as_str()).collect()
    }

    /// Evaluates one design row at `(subject, j)`, optionally overriding the
    /// current-interval treatment (counterfactual evaluation).
    pub fn row(
        &self,
        panel: &Panel,
        subject: usize,
        j: usize,
        treatment_override: Option<f64>,
        out: &mut Vec<f64>,
    ) {
        out.clear();
        let traj = &panel.subjects[subject];
        for col in &self.columns {
            let mut v = 1.0;
            for f in &col.factors {
                let value = if f.lag > j {
                    0.0
                } else {
                    let rec = &traj.records[j - f.lag];
                    match f.index {
                        None => {
                            if f.lag == 0 {
                                treatment_override.unwrap_or(rec.treatment)
                            } else {
                                rec.treatment
                            }
                        }
                        Some(idx) => rec.covariates[idx],
                    }
                };
                v *= value;
                if v == 0.0 {
                    break;
                }
            }
            out.push(v);
        }
    }
}

/// Dense row-major design matrix over a set of at-risk rows.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    pub x: Vec<f64>,
    pub nrow: usize,
    pub ncol: usize,
    pub labels: Vec<String>,
    /// Subject index behind each row.
    pub rows: Vec<usize>,
}

impl DesignMatrix {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.ncol..(i + 1) * self.ncol]
    }
}

/// Builds the design for `formula` over the given subjects at interval `j`.
pub fn build_design(
    panel: &Panel,
    formula: &FormulaSpec,
    j: usize,
    rows: &[usize],
    treatment_override: Option<f64>,
) -> Result<DesignMatrix, FitError> {
    let expanded = formula.expand(panel)?;
    Ok(build_design_expanded(panel, &expanded, j, rows, treatment_override))
}

pub fn build_design_expanded(
    panel: &Panel,
    expanded: &ExpandedFormula,
    j: usize,
    rows: &[usize],
    treatment_override: Option<f64>,
) -> DesignMatrix {
    let ncol = expanded.ncol();
    let mut x = Vec::with_capacity(rows.len() * ncol);
    let mut buf = Vec::with_capacity(ncol);
    for &s in rows {
        expanded.row(panel, s, j, treatment_override, &mut buf);
        x.extend_from_slice(&buf);
    }
    DesignMatrix {
        x,
        nrow: rows.len(),
        ncol,
        labels: expanded.labels().iter().map(|s| s.to_string()).collect(),
        rows: rows.to_vec(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn term_expansion_on_p1() {
        let p1 = fixtures::panel_p1();
        let f = FormulaSpec::parse(&["a", "lstar"]).unwrap();
        let d = build_design(&p1, &f, 0, &p1.at_risk_rows(0), None).unwrap();
        assert_eq!(d.ncol, 3);
        assert_eq!(d.labels, vec!["(intercept)", "a", "lstar"]);
        // subject 10: a=1, lstar=1
        assert_eq!(d.row(0), &[1.0, 1.0, 1.0]);
        // subject 11: a=0, lstar=0
        assert_eq!(d.row(1), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn saturated_two_binaries_gives_four_columns() {
        let p1 = fixtures::panel_p1();
        let f = FormulaSpec::parse(&["saturated(a, lstar)"]).unwrap();
        let d = build_design(&p1, &f, 0, &p1.at_risk_rows(0), None).unwrap();
        assert_eq!(d.ncol, 4);
        assert_eq!(d.labels, vec!["(intercept)", "a", "lstar", "a:lstar"]);
        assert_eq!(d.row(0), &[1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn unknown_column_is_a_schema_error() {
        let p1 = fixtures::panel_p1();
        let f = FormulaSpec::parse(&["nope"]).unwrap();
        assert_eq!(
            build_design(&p1, &f, 0, &[0], None).unwrap_err(),
            FitError::UnknownColumn("nope".into())
        );
    }

    #[test]
    fn lags_and_interactions() {
        let p1 = fixtures::panel_p1();
        let f = FormulaSpec::parse(&["a@1", "lstar@1", "a:lstar"]).unwrap();
        let d = build_design(&p1, &f, 1, &p1.at_risk_rows(1), None).unwrap();
        // at-risk at j=1: subjects 10 and 12
        // subject 10: a@1=1, lstar@1=1, a=1 * lstar(j=1)=0
        assert_eq!(d.row(0), &[1.0, 1.0, 1.0, 0.0]);
        // subject 12: a@1=0, lstar@1=1, a=0 * lstar=1
        assert_eq!(d.row(1), &[1.0, 0.0, 1.0, 0.0]);
        // lag at j=0 reads 0
        let d0 = build_design(&p1, &f, 0, &[0], None).unwrap();
        assert_eq!(d0.row(0)[1], 0.0);
    }

    #[test]
    fn treatment_override_swaps_only_current() {
        let p1 = fixtures::panel_p1();
        let f = FormulaSpec::parse(&["a", "a@1"]).unwrap();
        let d = build_design(&p1, &f, 1, &[0], Some(0.0)).unwrap();
        assert_eq!(d.row(0), &[1.0, 0.0, 1.0]);
    }
}
