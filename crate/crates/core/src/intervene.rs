//! Intervention treatment distributions and generalized positivity.
//!
//! Two representations are provided. [`StructuredSpec`] covers the class
//!
//! ```text
//! q(a_j | past) = sum_k c_k h_k(past) I(a_j = a*_k)
//!              +  c_f h_f(past) f(a_j | past)
//!              +  c_p h_p(past) p*(a_j | past)
//! ```
//!
//! where the history functions read only `(l̄_j, ā_{j-1})` and `p*` is a
//! known distribution. This is the class for which the backward T/Q
//! recursion and the multiply robust estimators apply; the template is
//! generalized to a list of point terms so that grace-period rules (point
//! masses at both levels) fit without a degenerate `p*`. [`GeneralSpec`]
//! wraps an arbitrary `q(history, f)` for interventions outside the class
//! (odds shifts, representative interventions); those are served by the
//! oracle, IPW and ICE paths only.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use thiserror::Error;

use crate::data::{HistoryView, Panel};

#[derive(Debug, Error, PartialEq)]
pub enum SpecError {
    #[error("delta {0} outside the valid domain {1}")]
    DeltaOutOfDomain(f64, &'static str),
    #[error("evaluated q is not a probability distribution (sum {sum}, min {min})")]
    NotADistribution { sum: f64, min: f64 },
    #[error("positivity failure: no observed mass at or above the threshold")]
    EmptyConditioningEvent,
    #[error("treatment level {0} not in the declared support")]
    LevelNotInSupport(f64),
    #[error("input f is not a probability distribution over the support")]
    BadObservedDistribution,
}

/// Measurable function of the measured past `(l̄_j, ā_{j-1})`.
#[derive(Clone)]
pub enum HistoryFn {
    One,
    Constant(f64),
    /// `l*_{j-lag}` (0 when the lag reaches before time 0).
    Indicator { index: usize, lag: usize },
    /// `1 - l*_j`.
    NotIndicated { index: usize },
    /// `l*_j · delta + 1 - l*_j` — the observed-term weight of a multiplicative shift.
    MultShiftObserved { index: usize, delta: f64 },
    /// `(1 - l*_{j-m}) · l*_j` — the observed-term gate of a grace period.
    GraceObserved { index: usize, m: usize },
    /// `a_{j-1} + (1 - a_{j-1}) · I(elapsed(j) >= m)`: forced initiation once
    /// the grace window is exhausted or treatment already started.
    GraceForced { index: usize, m: usize },
    /// `(1 - a_{j-1}) · I(no indication by j)`.
    NeverIndicated { index: usize },
    /// `(1 - a_{j-1}) · I(0 <= elapsed(j) < m)`: inside an open grace window.
    InGraceWindow { index: usize, m: usize },
    Custom(Arc<dyn Fn(&HistoryView<'_>) -> f64 + Send + Sync>),
}

impl core::fmt::Debug for HistoryFn {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            HistoryFn::One => write!(f, "One"),
            HistoryFn::Constant(c) => write!(f, "Constant({c})"),
            HistoryFn::Indicator { index, lag } => write!(f, "Indicator({index}@{lag})"),
            HistoryFn::NotIndicated { index } => write!(f, "NotIndicated({index})"),
            HistoryFn::MultShiftObserved { index, delta } => {
                write!(f, "MultShiftObserved({index}, {delta})")
            }
            HistoryFn::GraceObserved { index, m } => write!(f, "GraceObserved({index}, {m})"),
            HistoryFn::GraceForced { index, m } => write!(f, "GraceForced({index}, {m})"),
            HistoryFn::NeverIndicated { index } => write!(f, "NeverIndicated({index})"),
            HistoryFn::InGraceWindow { index, m } => write!(f, "InGraceWindow({index}, {m})"),
            HistoryFn::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// Intervals since the first indication by `j`, if any.
fn elapsed_since_indication(h: &HistoryView<'_>, index: usize) -> Option<usize> {
    (0..=h.j).find(|&t| h.covariate(index, h.j - t) == 1.0).map(|t| h.j - t)
}

impl HistoryFn {
    pub fn eval(&self, h: &HistoryView<'_>) -> f64 {
        match self {
            HistoryFn::One => 1.0,
            HistoryFn::Constant(c) => *c,
            HistoryFn::Indicator { index, lag } => h.covariate(*index, *lag),
            HistoryFn::NotIndicated { index } => 1.0 - h.covariate(*index, 0),
            HistoryFn::MultShiftObserved { index, delta } => {
                let l = h.covariate(*index, 0);
                l * delta + 1.0 - l
            }
            HistoryFn::GraceObserved { index, m } => {
                (1.0 - h.covariate(*index, *m)) * h.covariate(*index, 0)
            }
            HistoryFn::GraceForced { index, m } => {
                let a_prev = h.treatment_lag(1);
                let forced = match elapsed_since_indication(h, *index) {
                    Some(e) if e >= *m => 1.0,
                    _ => 0.0,
                };
                a_prev + (1.0 - a_prev) * forced
            }
            HistoryFn::NeverIndicated { index } => {
                let a_prev = h.treatment_lag(1);
                let never = if elapsed_since_indication(h, *index).is_none() { 1.0 } else { 0.0 };
                (1.0 - a_prev) * never
            }
            HistoryFn::InGraceWindow { index, m } => {
                let a_prev = h.treatment_lag(1);
                let open = match elapsed_since_indication(h, *index) {
                    Some(e) if e < *m => 1.0,
                    _ => 0.0,
                };
                (1.0 - a_prev) * open
            }
            HistoryFn::Custom(f) => f(h),
        }
    }
}

/// Known reference distribution `p*` over the treatment support.
#[derive(Clone)]
pub enum ReferenceDist {
    /// Fixed masses, aligned with the spec's support.
    Table(Vec<f64>),
    /// Binary initiation with `p*(1) = 1/(m + 1 - elapsed)`: drawing uniformly
    /// over the remaining intervals of an open grace window.
    GraceUniform { index: usize, m: usize },
    Custom(Arc<dyn Fn(&HistoryView<'_>) -> Vec<f64> + Send + Sync>),
}

impl core::fmt::Debug for ReferenceDist {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ReferenceDist::Table(t) => write!(f, "Table({t:?})"),
            ReferenceDist::GraceUniform { index, m } => write!(f, "GraceUniform({index}, {m})"),
            ReferenceDist::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl ReferenceDist {
    pub fn masses(&self, h: &HistoryView<'_>, support: &[f64]) -> Vec<f64> {
        match self {
            ReferenceDist::Table(t) => t.clone(),
            ReferenceDist::GraceUniform { index, m } => {
                debug_assert_eq!(support, &[0.0, 1.0]);
                let p1 = match elapsed_since_indication(h, *index) {
                    Some(e) if e < *m => 1.0 / (*m + 1 - e) as f64,
                    // outside the window the term's gate is 0; any proper
                    // distribution will do
                    _ => 1.0,
                };
                vec![1.0 - p1, p1]
            }
            ReferenceDist::Custom(f) => f(h),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PointTerm {
    pub c: f64,
    pub h: HistoryFn,
    pub a_star: f64,
}

#[derive(Debug, Clone)]
pub struct ObservedTerm {
    pub c: f64,
    pub h: HistoryFn,
}

#[derive(Debug, Clone)]
pub struct ReferenceTerm {
    pub c: f64,
    pub h: HistoryFn,
    pub p_star: ReferenceDist,
}

/// Intervention distribution in the structured (T/Q-recursion) class.
#[derive(Debug, Clone)]
pub struct StructuredSpec {
    pub support: Vec<f64>,
    pub point_terms: Vec<PointTerm>,
    pub observed: Option<ObservedTerm>,
    pub reference: Option<ReferenceTerm>,
    pub label: String,
    /// Primary intervention parameter where one exists, for reporting.
    pub delta: Option<f64>,
}

/// Arbitrary intervention distribution `q(history, f)`.
#[derive(Clone)]
pub struct GeneralSpec {
    pub support: Vec<f64>,
    pub q: Arc<dyn Fn(&HistoryView<'_>, &[f64]) -> Result<Vec<f64>, SpecError> + Send + Sync>,
    pub label: String,
    pub delta: Option<f64>,
}

impl core::fmt::Debug for GeneralSpec {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "GeneralSpec({})", self.label)
    }
}

#[derive(Debug, Clone)]
pub enum InterventionSpec {
    Structured(StructuredSpec),
    General(GeneralSpec),
}

impl InterventionSpec {
    pub fn support(&self) -> &[f64] {
        match self {
            InterventionSpec::Structured(s) => &s.support,
            InterventionSpec::General(g) => &g.support,
        }
    }

    pub fn label(&self) -> &str {
        match self {
            InterventionSpec::Structured(s) => &s.label,
            InterventionSpec::General(g) => &g.label,
        }
    }

    pub fn delta(&self) -> Option<f64> {
        match self {
            InterventionSpec::Structured(s) => s.delta,
            InterventionSpec::General(g) => g.delta,
        }
    }

    pub fn as_structured(&self) -> Option<&StructuredSpec> {
        match self {
            InterventionSpec::Structured(s) => Some(s),
            InterventionSpec::General(_) => None,
        }
    }
}

fn support_index(support: &[f64], level: f64) -> Result<usize, SpecError> {
    support
        .iter()
        .position(|&s| s == level)
        .ok_or(SpecError::LevelNotInSupport(level))
}

const DIST_TOL: f64 = 1e-9;

fn check_distribution(masses: &[f64]) -> Result<(), SpecError> {
    let sum: f64 = masses.iter().sum();
    let min = masses.iter().cloned().fold(f64::INFINITY, f64::min);
    if (sum - 1.0).abs() > DIST_TOL || min < -DIST_TOL {
        return Err(SpecError::NotADistribution { sum, min });
    }
    Ok(())
}

impl StructuredSpec {
    /// Evaluates `q(· | history)` at the observed treatment process `f`.
    pub fn evaluate(&self, h: &HistoryView<'_>, f: &[f64]) -> Result<Vec<f64>, SpecError> {
        if f.len() != self.support.len() {
            return Err(SpecError::BadObservedDistribution);
        }
        let mut masses = vec![0.0; self.support.len()];
        for pt in &self.point_terms {
            let idx = support_index(&self.support, pt.a_star)?;
            masses[idx] += pt.c * pt.h.eval(h);
        }
        if let Some(obs) = &self.observed {
            let w = obs.c * obs.h.eval(h);
            if w != 0.0 {
                for (m, &fa) in masses.iter_mut().zip(f.iter()) {
                    *m += w * fa;
                }
            }
        }
        if let Some(rt) = &self.reference {
            let w = rt.c * rt.h.eval(h);
            if w != 0.0 {
                let p = rt.p_star.masses(h, &self.support);
                for (m, &pa) in masses.iter_mut().zip(p.iter()) {
                    *m += w * pa;
                }
            }
        }
        check_distribution(&masses)?;
        Ok(masses)
    }
}

impl GeneralSpec {
    pub fn evaluate(&self, h: &HistoryView<'_>, f: &[f64]) -> Result<Vec<f64>, SpecError> {
        if f.len() != self.support.len() {
            return Err(SpecError::BadObservedDistribution);
        }
        let masses = (self.q)(h, f)?;
        check_distribution(&masses)?;
        Ok(masses)
    }
}

/// Evaluates any intervention spec at a history and an observed treatment
/// distribution over the spec's support.
pub fn evaluate_q(
    spec: &InterventionSpec,
    h: &HistoryView<'_>,
    f: &[f64],
) -> Result<Vec<f64>, SpecError> {
    match spec {
        InterventionSpec::Structured(s) => s.evaluate(h, f),
        InterventionSpec::General(g) => g.evaluate(h, f),
    }
}

/// Multiplicative shift: among the indicated (`l* = 1`), the probability of
/// NOT initiating is multiplied by `delta`; elsewhere no intervention.
pub fn make_multiplicative_shift(delta: f64, indicator_index: usize) -> Result<StructuredSpec, SpecError> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(SpecError::DeltaOutOfDomain(delta, "[0, 1]"));
    }
    Ok(StructuredSpec {
        support: vec![0.0, 1.0],
        point_terms: vec![PointTerm {
            c: 1.0 - delta,
            h: HistoryFn::Indicator { index: indicator_index, lag: 0 },
            a_star: 1.0,
        }],
        observed: Some(ObservedTerm {
            c: 1.0,
            h: HistoryFn::MultShiftObserved { index: indicator_index, delta },
        }),
        reference: None,
        label: format!("mult_shift(delta={delta})"),
        delta: Some(delta),
    })
}

/// Odds shift: the propensity odds are multiplied by `delta`.
pub fn make_odds_shift(delta: f64) -> Result<GeneralSpec, SpecError> {
    if delta <= 0.0 || !delta.is_finite() {
        return Err(SpecError::DeltaOutOfDomain(delta, "(0, inf)"));
    }
    Ok(GeneralSpec {
        support: vec![0.0, 1.0],
        q: Arc::new(move |_h, f| {
            let denom = delta * f[1] + f[0];
            let q1 = if denom > 0.0 { delta * f[1] / denom } else { 0.0 };
            Ok(vec![1.0 - q1, q1])
        }),
        label: format!("odds_shift(delta={delta})"),
        delta: Some(delta),
    })
}

/// Grace period: start treatment within `m` intervals of an indication, no
/// intervention inside the window, never start before an indication.
///
/// The template is a valid distribution only on histories where the
/// indication is monotone (`l*_{j-m} = 1` implies `l*_j = 1`); elsewhere
/// evaluation reports `NotADistribution`.
pub fn make_grace_period(m: usize, indicator_index: usize) -> StructuredSpec {
    StructuredSpec {
        support: vec![0.0, 1.0],
        point_terms: vec![
            PointTerm {
                c: 1.0,
                h: HistoryFn::Indicator { index: indicator_index, lag: m },
                a_star: 1.0,
            },
            PointTerm {
                c: 1.0,
                h: HistoryFn::NotIndicated { index: indicator_index },
                a_star: 0.0,
            },
        ],
        observed: Some(ObservedTerm {
            c: 1.0,
            h: HistoryFn::GraceObserved { index: indicator_index, m },
        }),
        reference: None,
        label: format!("grace(m={m})"),
        delta: None,
    }
}

/// Grace period with uniform initiation: inside an open window the
/// initiation probability is `1/(m + 1 - elapsed)`, so initiation time is
/// uniform over the window. Exercises the reference-term (`p*`) pathway.
pub fn make_grace_uniform(m: usize, indicator_index: usize) -> StructuredSpec {
    StructuredSpec {
        support: vec![0.0, 1.0],
        point_terms: vec![
            PointTerm {
                c: 1.0,
                h: HistoryFn::GraceForced { index: indicator_index, m },
                a_star: 1.0,
            },
            PointTerm {
                c: 1.0,
                h: HistoryFn::NeverIndicated { index: indicator_index },
                a_star: 0.0,
            },
        ],
        observed: None,
        reference: Some(ReferenceTerm {
            c: 1.0,
            h: HistoryFn::InGraceWindow { index: indicator_index, m },
            p_star: ReferenceDist::GraceUniform { index: indicator_index, m },
        }),
        label: format!("grace_uniform(m={m})"),
        delta: None,
    }
}

/// Representative intervention: redraw treatment from the observed process
/// conditioned on being at or above `threshold`.
pub fn make_representative(support: Vec<f64>, threshold: f64) -> GeneralSpec {
    let sup = support.clone();
    GeneralSpec {
        support,
        q: Arc::new(move |_h, f| {
            let total: f64 = sup
                .iter()
                .zip(f.iter())
                .filter(|(&a, _)| a >= threshold)
                .map(|(_, &fa)| fa)
                .sum();
            if total <= 0.0 {
                return Err(SpecError::EmptyConditioningEvent);
            }
            Ok(sup
                .iter()
                .zip(f.iter())
                .map(|(&a, &fa)| if a >= threshold { fa / total } else { 0.0 })
                .collect())
        }),
        label: format!("representative(threshold={threshold})"),
        delta: Some(threshold),
    }
}

/// Static deterministic rule: always assign `a_star`.
pub fn make_static(a_star: f64, support: Vec<f64>) -> StructuredSpec {
    StructuredSpec {
        support,
        point_terms: vec![PointTerm { c: 1.0, h: HistoryFn::One, a_star }],
        observed: None,
        reference: None,
        label: format!("static(a={a_star})"),
        delta: None,
    }
}

/// Dynamic deterministic rule on a binary treatment: point mass at
/// `rule(history)`.
pub fn make_dynamic(rule: Arc<dyn Fn(&HistoryView<'_>) -> f64 + Send + Sync>) -> StructuredSpec {
    let rule0 = rule.clone();
    StructuredSpec {
        support: vec![0.0, 1.0],
        point_terms: vec![
            PointTerm {
                c: 1.0,
                h: HistoryFn::Custom(Arc::new(move |h| 1.0 - rule0(h))),
                a_star: 0.0,
            },
            PointTerm {
                c: 1.0,
                h: HistoryFn::Custom(Arc::new(move |h| rule(h))),
                a_star: 1.0,
            },
        ],
        observed: None,
        reference: None,
        label: String::from("dynamic"),
        delta: None,
    }
}

/// One generalized-positivity finding: `q` puts mass on a level whose
/// estimated observed-process mass is zero (`exact`) or below the threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct PositivityViolation {
    pub subject: u64,
    pub interval: usize,
    pub level: f64,
    pub q_mass: f64,
    pub f_mass: f64,
    pub exact: bool,
}

#[derive(Debug, Clone, Default)]
pub struct PositivityReport {
    pub violations: Vec<PositivityViolation>,
    pub near_violation_threshold: f64,
}

impl PositivityReport {
    pub fn exact_count(&self) -> usize {
        self.violations.iter().filter(|v| v.exact).count()
    }
}

const Q_MASS_TOL: f64 = 1e-12;

/// Scans every at-risk subject-interval for generalized positivity
/// violations of `q` against the fitted observed process.
///
/// `fitted_f(subject, j)` returns the estimated treatment distribution over
/// the spec's support for an at-risk row.
pub fn check_positivity(
    spec: &InterventionSpec,
    panel: &Panel,
    fitted_f: impl Fn(usize, usize) -> Vec<f64>,
    threshold: f64,
) -> Result<PositivityReport, SpecError> {
    let mut report = PositivityReport { violations: Vec::new(), near_violation_threshold: threshold };
    let support = spec.support().to_vec();
    for j in 0..panel.horizon {
        for s in panel.at_risk_rows(j) {
            let h = panel.history(s, j).expect("at-risk row has a record");
            let f = fitted_f(s, j);
            let q = evaluate_q(spec, &h, &f)?;
            for (idx, &level) in support.iter().enumerate() {
                if q[idx] > Q_MASS_TOL && f[idx] < threshold {
                    report.violations.push(PositivityViolation {
                        subject: panel.ids[s],
                        interval: j,
                        level,
                        q_mass: q[idx],
                        f_mass: f[idx],
                        exact: f[idx] == 0.0,
                    });
                }
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{history_at, IntervalRecord, Trajectory};
    use crate::fixtures;

    fn one_interval_history(lstar: f64) -> Trajectory {
        Trajectory::new(
            vec![IntervalRecord::new(vec![lstar, 0.0], 0.0, false, Some(true))],
            1,
        )
    }

    /// trajectory with indicator values per interval and given treatments
    fn traj_with(lstars: &[f64], treatments: &[f64]) -> Trajectory {
        let recs: Vec<IntervalRecord> = lstars
            .iter()
            .zip(treatments.iter())
            .map(|(&l, &a)| IntervalRecord::new(vec![l, 0.0], a, false, Some(true)))
            .collect();
        let horizon = recs.len();
        Trajectory::new(recs, horizon)
    }

    #[test]
    fn mult_shift_examples() {
        let t = one_interval_history(1.0);
        let h = history_at(&t, 0).unwrap();

        // delta = 1: no intervention
        let s = make_multiplicative_shift(1.0, 0).unwrap();
        let q = s.evaluate(&h, &[0.7, 0.3]).unwrap();
        assert!((q[1] - 0.3).abs() < 1e-15 && (q[0] - 0.7).abs() < 1e-15);

        // delta = 0: always treat the indicated
        let s = make_multiplicative_shift(0.0, 0).unwrap();
        let q = s.evaluate(&h, &[0.7, 0.3]).unwrap();
        assert!((q[1] - 1.0).abs() < 1e-15);

        // delta = 0.5, l* = 1, f(1) = 0.3
        let s = make_multiplicative_shift(0.5, 0).unwrap();
        let q = s.evaluate(&h, &[0.7, 0.3]).unwrap();
        assert!((q[0] - 0.35).abs() < 1e-15);
        assert!((q[1] - 0.65).abs() < 1e-15);

        // delta = 0.25, l* = 1, f(1) = 0.1
        let s = make_multiplicative_shift(0.25, 0).unwrap();
        let q = s.evaluate(&h, &[0.9, 0.1]).unwrap();
        assert!((q[1] - 0.775).abs() < 1e-15);

        // risk-ratio identity: q(0)/f(0) = delta when l* = 1
        assert!((q[0] / 0.9 - 0.25).abs() < 1e-15);

        assert!(make_multiplicative_shift(1.5, 0).is_err());
        assert!(make_multiplicative_shift(-0.1, 0).is_err());
    }

    #[test]
    fn mult_shift_untouched_when_not_indicated() {
        let t = one_interval_history(0.0);
        let h = history_at(&t, 0).unwrap();
        let s = make_multiplicative_shift(0.25, 0).unwrap();
        let q = s.evaluate(&h, &[0.6, 0.4]).unwrap();
        assert!((q[1] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn odds_shift_examples() {
        let t = one_interval_history(1.0);
        let h = history_at(&t, 0).unwrap();

        let s = make_odds_shift(1.0).unwrap();
        let q = s.evaluate(&h, &[0.7, 0.3]).unwrap();
        assert!((q[1] - 0.3).abs() < 1e-12);

        let s = make_odds_shift(2.0).unwrap();
        let q = s.evaluate(&h, &[0.7, 0.3]).unwrap();
        assert!((q[1] - 0.6 / 1.3).abs() < 1e-12);

        let s = make_odds_shift(3.0).unwrap();
        let q = s.evaluate(&h, &[0.5, 0.5]).unwrap();
        assert!((q[1] - 0.75).abs() < 1e-12);

        // positivity preserved by construction
        let q = s.evaluate(&h, &[1.0, 0.0]).unwrap();
        assert_eq!(q[1], 0.0);

        assert!(make_odds_shift(0.0).is_err());
        assert!(make_odds_shift(-2.0).is_err());
    }

    #[test]
    fn odds_shift_monotone_in_delta() {
        let t = one_interval_history(1.0);
        let h = history_at(&t, 0).unwrap();
        let mut last = 0.0;
        for delta in [0.5, 1.0, 2.0, 4.0, 8.0] {
            let q = make_odds_shift(delta).unwrap().evaluate(&h, &[0.7, 0.3]).unwrap();
            assert!(q[1] > last);
            last = q[1];
        }
    }

    #[test]
    fn grace_period_examples() {
        // m = 1; histories over two intervals of the indicator
        let spec = make_grace_period(1, 0);

        // indicated at j-1: forced treatment
        let t = traj_with(&[1.0, 1.0], &[0.0, 0.0]);
        let h = history_at(&t, 1).unwrap();
        let q = spec.evaluate(&h, &[0.6, 0.4]).unwrap();
        assert!((q[1] - 1.0).abs() < 1e-15);

        // never indicated: forced no-treatment
        let t = traj_with(&[0.0, 0.0], &[0.0, 0.0]);
        let h = history_at(&t, 1).unwrap();
        let q = spec.evaluate(&h, &[0.6, 0.4]).unwrap();
        assert!((q[1] - 0.0).abs() < 1e-15);

        // inside the window: no intervention
        let t = traj_with(&[0.0, 1.0], &[0.0, 0.0]);
        let h = history_at(&t, 1).unwrap();
        let q = spec.evaluate(&h, &[0.6, 0.4]).unwrap();
        assert!((q[1] - 0.4).abs() < 1e-15);

        // m = 0 at an indicated history: degenerate treat
        let spec0 = make_grace_period(0, 0);
        let t = one_interval_history(1.0);
        let h = history_at(&t, 0).unwrap();
        let q = spec0.evaluate(&h, &[0.9, 0.1]).unwrap();
        assert!((q[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn grace_rejects_non_monotone_indication() {
        // l*_{j-1} = 1 but l*_j = 0: the template double-counts, which the
        // distribution check must surface.
        let spec = make_grace_period(1, 0);
        let t = traj_with(&[1.0, 0.0], &[0.0, 0.0]);
        let h = history_at(&t, 1).unwrap();
        assert!(matches!(
            spec.evaluate(&h, &[0.6, 0.4]),
            Err(SpecError::NotADistribution { .. })
        ));
    }

    #[test]
    fn grace_uniform_window_masses() {
        let spec = make_grace_uniform(2, 0);
        // indication at j=0, now at j=1 (elapsed 1, window m=2): p*(1) = 1/2
        let t = traj_with(&[1.0, 1.0], &[0.0, 0.0]);
        let h = history_at(&t, 1).unwrap();
        let q = spec.evaluate(&h, &[0.6, 0.4]).unwrap();
        assert!((q[1] - 0.5).abs() < 1e-15);
        // elapsed 2 = m: forced
        let t = traj_with(&[1.0, 1.0, 1.0], &[0.0, 0.0, 0.0]);
        let h = history_at(&t, 2).unwrap();
        let q = spec.evaluate(&h, &[0.6, 0.4]).unwrap();
        assert!((q[1] - 1.0).abs() < 1e-15);
        // already treated: stays treated
        let t = traj_with(&[1.0, 1.0], &[1.0, 0.0]);
        let h = history_at(&t, 1).unwrap();
        let q = spec.evaluate(&h, &[0.6, 0.4]).unwrap();
        assert!((q[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn representative_examples() {
        let t = one_interval_history(1.0);
        let h = history_at(&t, 0).unwrap();

        let s = make_representative(vec![0.0, 1.0], 1.0);
        let q = s.evaluate(&h, &[0.4, 0.6]).unwrap();
        assert!((q[1] - 1.0).abs() < 1e-15);

        let s = make_representative(vec![0.0, 1.0, 2.0], 1.0);
        let q = s.evaluate(&h, &[0.2, 0.3, 0.5]).unwrap();
        assert!((q[0] - 0.0).abs() < 1e-15);
        assert!((q[1] - 0.375).abs() < 1e-15);
        assert!((q[2] - 0.625).abs() < 1e-15);

        assert_eq!(
            s.evaluate(&h, &[1.0, 0.0, 0.0]),
            Err(SpecError::EmptyConditioningEvent)
        );
    }

    #[test]
    fn static_and_dynamic_examples() {
        let t = one_interval_history(0.0);
        let h = history_at(&t, 0).unwrap();

        let s = make_static(1.0, vec![0.0, 1.0]);
        let q = s.evaluate(&h, &[0.5, 0.5]).unwrap();
        assert!((q[1] - 1.0).abs() < 1e-15);
        // independent of f
        let q = s.evaluate(&h, &[0.8, 0.2]).unwrap();
        assert!((q[1] - 1.0).abs() < 1e-15);

        // treat iff l* = 1
        let rule = make_dynamic(Arc::new(|h: &HistoryView<'_>| h.covariate(0, 0)));
        let q = rule.evaluate(&h, &[0.5, 0.5]).unwrap();
        assert!((q[0] - 1.0).abs() < 1e-15);
        let t1 = one_interval_history(1.0);
        let h1 = history_at(&t1, 0).unwrap();
        let q = rule.evaluate(&h1, &[0.5, 0.5]).unwrap();
        assert!((q[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn history_functions_never_read_f() {
        // perturbing f changes q only through the observed term: for a spec
        // with h_f = 0 the evaluation is invariant in f.
        let t = one_interval_history(1.0);
        let h = history_at(&t, 0).unwrap();
        let mut s = make_multiplicative_shift(0.3, 0).unwrap();
        s.observed = Some(ObservedTerm { c: 1.0, h: HistoryFn::Constant(0.0) });
        // not a distribution anymore, so compare raw masses of the point part
        let err1 = s.evaluate(&h, &[0.5, 0.5]);
        let err2 = s.evaluate(&h, &[0.9, 0.1]);
        match (err1, err2) {
            (Err(SpecError::NotADistribution { sum: s1, .. }), Err(SpecError::NotADistribution { sum: s2, .. })) => {
                assert!((s1 - s2).abs() < 1e-15);
            }
            (Ok(q1), Ok(q2)) => assert_eq!(q1, q2),
            other => panic!("inconsistent evaluations: {other:?}"),
        }
    }

    #[test]
    fn positivity_examples() {
        let panel = fixtures::panel_p1();

        // static always-treat against a fitted f that is zero somewhere
        let spec = InterventionSpec::Structured(make_static(1.0, vec![0.0, 1.0]));
        let report = check_positivity(
            &spec,
            &panel,
            |s, _j| if s == 0 { vec![1.0, 0.0] } else { vec![0.5, 0.5] },
            0.01,
        )
        .unwrap();
        assert!(report.exact_count() >= 1);
        assert!(report.violations.iter().all(|v| v.q_mass > 0.0));

        // multiplicative shift with l* = 0 everywhere: q = f, no violations
        let mut p0 = panel.clone();
        for t in &mut p0.subjects {
            for r in &mut t.records {
                r.covariates[0] = 0.0;
            }
        }
        let spec = InterventionSpec::Structured(make_multiplicative_shift(0.25, 0).unwrap());
        let report = check_positivity(&spec, &p0, |_s, _j| vec![1.0, 0.0], 0.01).unwrap();
        assert!(report.violations.is_empty());

        // odds shift: no exact violations possible
        let spec = InterventionSpec::General(make_odds_shift(4.0).unwrap());
        let report = check_positivity(&spec, &panel, |_s, _j| vec![1.0, 0.0], 0.01).unwrap();
        assert_eq!(report.exact_count(), 0);
    }
}
