//! Longitudinal observed-data structures.
//!
//! A subject's follow-up is a sequence of interval records ordered as
//! `(L_j, A_j, C_{j+1}, Y_{j+1})`: covariates measured at the start of
//! interval `j`, the treatment taken during it, then the censoring and
//! survival indicators realized at its end. Records stop at the first event
//! (death or censoring) or at the horizon, so nothing after an event is ever
//! representable as "observed". `Y_0 = 1` by definition: every subject is at
//! risk at baseline.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DataError {
    #[error("interval {j} out of range for trajectory with {len} records")]
    IntervalOutOfRange { j: usize, len: usize },
    #[error("unknown covariate column `{0}`")]
    UnknownColumn(String),
    #[error("panel failed validation: {0} violation(s), first: {1}")]
    InvalidPanel(usize, String),
}

/// One follow-up interval: covariates, treatment, and end-of-interval status.
///
/// `alive_next` is `None` exactly when the subject was censored during the
/// interval; survival status is then unobserved, not zero.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalRecord {
    pub covariates: Vec<f64>,
    pub treatment: f64,
    pub censored_next: bool,
    pub alive_next: Option<bool>,
}

impl IntervalRecord {
    pub fn new(covariates: Vec<f64>, treatment: f64, censored_next: bool, alive_next: Option<bool>) -> Self {
        Self { covariates, treatment, censored_next, alive_next }
    }
}

/// One subject's records, at most `horizon` of them.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub records: Vec<IntervalRecord>,
    pub horizon: usize,
}

impl Trajectory {
    pub fn new(records: Vec<IntervalRecord>, horizon: usize) -> Self {
        Self { records, horizon }
    }

    /// Covariate vector at baseline (interval 0).
    pub fn baseline_covariates(&self) -> &[f64] {
        &self.records[0].covariates
    }

    /// Whether the subject is observed alive and uncensored entering interval `j`.
    pub fn at_risk(&self, j: usize) -> bool {
        j < self.records.len()
    }

    /// Survival indicator `Y_j` for `j >= 1`; `None` if unobserved (censored earlier).
    pub fn survival(&self, j: usize) -> Option<bool> {
        if j == 0 {
            return Some(true);
        }
        if j <= self.records.len() {
            return self.records[j - 1].alive_next;
        }
        // No record at j-1: the subject either died or was censored earlier.
        for rec in &self.records {
            match rec.alive_next {
                Some(false) => return Some(false),
                None => return None,
                Some(true) => {}
            }
        }
        None
    }

    /// `Y_J` at the trajectory horizon, with death absorbing: 1 only when the
    /// subject is observed alive through the full horizon.
    pub fn survived_to_horizon(&self) -> Option<bool> {
        match self.survival(self.horizon) {
            Some(v) => Some(v),
            None => {
                // censored before horizon unless death was observed first
                if self.records.iter().any(|r| r.alive_next == Some(false)) {
                    Some(false)
                } else {
                    None
                }
            }
        }
    }
}

/// View of the measured past at interval `j`: covariate vectors through `j`
/// and treatments through `j-1` (the treatment at `j` itself is not part of
/// its own history).
#[derive(Debug, Clone, Copy)]
pub struct HistoryView<'a> {
    traj: &'a Trajectory,
    pub j: usize,
}

impl<'a> HistoryView<'a> {
    /// Covariate `index` lagged by `lag` intervals; lags reaching before
    /// time 0 read as 0.
    pub fn covariate(&self, index: usize, lag: usize) -> f64 {
        if lag > self.j {
            0.0
        } else {
            self.traj.records[self.j - lag].covariates[index]
        }
    }

    /// Treatment lagged by `lag >= 1` intervals (`A_{j-lag}`); 0 before time 0.
    pub fn treatment_lag(&self, lag: usize) -> f64 {
        debug_assert!(lag >= 1, "A_j is not part of the history at j");
        if lag > self.j {
            0.0
        } else {
            self.traj.records[self.j - lag].treatment
        }
    }

    /// Number of past treatments (the prefix `A_0..A_{j-1}`).
    pub fn treatment_prefix_len(&self) -> usize {
        self.j
    }

    /// Number of covariate vectors in view (`L_0..L_j`).
    pub fn covariate_prefix_len(&self) -> usize {
        self.j + 1
    }

    /// Whether the indicated condition held at `j - lag`, with lags before
    /// time 0 reading as "not indicated".
    pub fn indicator(&self, index: usize, lag: usize) -> f64 {
        self.covariate(index, lag)
    }
}

/// Prefix view of a trajectory's measured past at interval `j`.
///
/// Requires the record at `j` to exist (the subject is at risk there).
pub fn history_at(traj: &Trajectory, j: usize) -> Result<HistoryView<'_>, DataError> {
    if j >= self_len(traj) {
        return Err(DataError::IntervalOutOfRange { j, len: traj.records.len() });
    }
    Ok(HistoryView { traj, j })
}

fn self_len(traj: &Trajectory) -> usize {
    traj.records.len()
}

/// The whole dataset: trajectories sharing a schema and horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub ids: Vec<u64>,
    pub subjects: Vec<Trajectory>,
    pub horizon: usize,
    pub schema: Vec<String>,
    /// Index of the binary indicator coordinate `L*` within the schema.
    pub indicator_index: usize,
}

impl Panel {
    pub fn new(
        ids: Vec<u64>,
        subjects: Vec<Trajectory>,
        horizon: usize,
        schema: Vec<String>,
        indicator_index: usize,
    ) -> Self {
        Self { ids, subjects, horizon, schema, indicator_index }
    }

    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }

    pub fn column(&self, name: &str) -> Result<usize, DataError> {
        self.schema
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| DataError::UnknownColumn(name.into()))
    }

    /// Subject indices at risk (alive, uncensored) entering interval `j`.
    pub fn at_risk_rows(&self, j: usize) -> Vec<usize> {
        (0..self.subjects.len()).filter(|&s| self.subjects[s].at_risk(j)).collect()
    }

    pub fn history(&self, subject: usize, j: usize) -> Result<HistoryView<'_>, DataError> {
        history_at(&self.subjects[subject], j)
    }

    /// Panel restricted to the given subjects (fold splits, bootstrap resamples).
    pub fn subset(&self, subject_idx: &[usize]) -> Panel {
        Panel {
            ids: subject_idx.iter().map(|&s| self.ids[s]).collect(),
            subjects: subject_idx.iter().map(|&s| self.subjects[s].clone()).collect(),
            horizon: self.horizon,
            schema: self.schema.clone(),
            indicator_index: self.indicator_index,
        }
    }
}

/// A single invariant violation, identified by subject id, interval and rule.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub subject: u64,
    pub interval: usize,
    pub rule: String,
}

impl Violation {
    fn new(subject: u64, interval: usize, rule: impl Into<String>) -> Self {
        Self { subject, interval, rule: rule.into() }
    }
}

/// Checks every trajectory invariant; violations are data, not errors.
pub fn validate_panel(panel: &Panel) -> Vec<Violation> {
    let mut out = Vec::new();
    for (s, traj) in panel.subjects.iter().enumerate() {
        let id = panel.ids[s];
        if traj.horizon != panel.horizon {
            out.push(Violation::new(id, 0, "horizon mismatch"));
        }
        if traj.records.is_empty() {
            out.push(Violation::new(id, 0, "empty trajectory"));
            continue;
        }
        if traj.records.len() > panel.horizon {
            out.push(Violation::new(id, traj.records.len() - 1, "records beyond horizon"));
        }
        let mut ended = false;
        for (j, rec) in traj.records.iter().enumerate() {
            if ended {
                out.push(Violation::new(id, j, "record after event"));
            }
            if rec.covariates.len() != panel.schema.len() {
                out.push(Violation::new(id, j, "schema length"));
            }
            if rec.covariates.iter().any(|v| !v.is_finite()) {
                out.push(Violation::new(id, j, "non-finite covariate"));
            }
            if let Some(&l) = rec.covariates.get(panel.indicator_index) {
                if l != 0.0 && l != 1.0 {
                    out.push(Violation::new(id, j, "indicator not binary"));
                }
            }
            if rec.treatment != 0.0 && rec.treatment != 1.0 {
                out.push(Violation::new(id, j, "treatment not binary"));
            }
            match (rec.censored_next, rec.alive_next) {
                (true, Some(_)) => {
                    out.push(Violation::new(id, j, "survival recorded after censoring"));
                }
                (false, None) => {
                    out.push(Violation::new(id, j, "missing survival status"));
                }
                _ => {}
            }
            if rec.censored_next || rec.alive_next == Some(false) {
                ended = true;
            }
        }
        // Monotone survival: a record at j implies Y_j = 1, so a record
        // following alive_next = 0 is both "record after event" and a
        // monotonicity breach.
        for j in 1..traj.records.len() {
            if traj.records[j - 1].alive_next == Some(false)
                && traj.records[j].alive_next == Some(true)
            {
                out.push(Violation::new(id, j, "monotone survival"));
            }
        }
        if !ended && traj.records.len() < panel.horizon {
            out.push(Violation::new(id, traj.records.len() - 1, "truncated before horizon without event"));
        }
    }
    out
}

/// Validation as a hard precondition: errors with a summary when violations exist.
pub fn require_valid(panel: &Panel) -> Result<(), DataError> {
    let violations = validate_panel(panel);
    if violations.is_empty() {
        Ok(())
    } else {
        let first = &violations[0];
        Err(DataError::InvalidPanel(
            violations.len(),
            format!("subject {}, j={}, {}", first.subject, first.interval, first.rule),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use alloc::vec;

    #[test]
    fn fixture_panel_is_valid() {
        let p1 = fixtures::panel_p1();
        assert!(validate_panel(&p1).is_empty());
    }

    #[test]
    fn survival_after_death_is_flagged() {
        let mut p1 = fixtures::panel_p1();
        // subject dies at Y_1 = 0 but a live record follows
        p1.subjects[0] = Trajectory::new(
            vec![
                IntervalRecord::new(vec![1.0, 0.0], 0.0, false, Some(false)),
                IntervalRecord::new(vec![1.0, 0.0], 1.0, false, Some(true)),
            ],
            2,
        );
        let v = validate_panel(&p1);
        assert!(v.iter().any(|x| x.rule == "monotone survival" && x.interval == 1));
        assert!(v.iter().any(|x| x.rule == "record after event"));
    }

    #[test]
    fn record_after_censoring_is_flagged() {
        let mut p1 = fixtures::panel_p1();
        p1.subjects[1] = Trajectory::new(
            vec![
                IntervalRecord::new(vec![0.0, 1.0], 0.0, true, None),
                IntervalRecord::new(vec![0.0, 1.0], 0.0, false, Some(true)),
            ],
            2,
        );
        let v = validate_panel(&p1);
        assert!(v.iter().any(|x| x.rule == "record after event"));
    }

    #[test]
    fn history_prefix_lengths() {
        let p1 = fixtures::panel_p1();
        let traj = &p1.subjects[0];
        let h0 = history_at(traj, 0).unwrap();
        assert_eq!(h0.treatment_prefix_len(), 0);
        assert_eq!(h0.covariate_prefix_len(), 1);
        let h1 = history_at(traj, 1).unwrap();
        assert_eq!(h1.treatment_prefix_len(), 1);
        assert_eq!(h1.covariate_prefix_len(), 2);
    }

    #[test]
    fn history_beyond_censoring_errors() {
        let traj = Trajectory::new(
            vec![IntervalRecord::new(vec![0.0, 0.0], 0.0, true, None)],
            4,
        );
        assert!(matches!(
            history_at(&traj, 3),
            Err(DataError::IntervalOutOfRange { j: 3, len: 1 })
        ));
    }

    #[test]
    fn lags_before_time_zero_read_zero() {
        let p1 = fixtures::panel_p1();
        let h = p1.history(0, 0).unwrap();
        assert_eq!(h.treatment_lag(1), 0.0);
        assert_eq!(h.covariate(0, 2), 0.0);
    }
}
