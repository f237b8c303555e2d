//! Cross-validated convex stacking over a small learner library, plus
//! subject-level fold assignment.
//!
//! Member predictions are combined with simplex weights chosen to minimize
//! cross-validated log-loss; the optimizer starts at the best single member
//! and moves toward simplex vertices, so the stacked CV loss can never
//! exceed the best member's.

use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;

use super::logistic::{fit_logistic_irls, FittedLogistic};
use super::{BoostedStumps, DesignMatrix, FitError};
use crate::math;
use crate::seed::stream_rng;

const KFOLD_STREAM: u64 = 0xF01D;
const WEIGHT_TOL: f64 = 1e-8;
const PRED_EPS: f64 = 1e-6;

/// Subject-level fold assignment: `fold_of[subject_index] in 0..m`.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldAssignment {
    pub fold_of: Vec<usize>,
    pub m: usize,
}

impl FoldAssignment {
    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.m];
        for &f in &self.fold_of {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Deterministic subject-level k-fold split.
///
/// Subjects are ordered by id, shuffled by a seed-derived stream and dealt
/// round-robin, so the assignment is invariant to the panel's subject order
/// and fold sizes differ by at most one.
pub fn kfold(ids: &[u64], m: usize, seed: u64) -> Result<FoldAssignment, FitError> {
    let n = ids.len();
    if m < 2 {
        return Err(FitError::TooFewFolds(2));
    }
    if m > n {
        return Err(FitError::FoldsExceedSubjects { folds: m, n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (ids[i], i));
    let mut rng = stream_rng(seed, KFOLD_STREAM, 0);
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let mut fold_of = vec![0usize; n];
    for (pos, &idx) in order.iter().enumerate() {
        fold_of[idx] = pos % m;
    }
    Ok(FoldAssignment { fold_of, m })
}

/// Base learners available to the ensemble.
#[derive(Debug, Clone, PartialEq)]
pub enum LearnerKind {
    /// Intercept + main effects of the features.
    LogisticMains,
    /// Intercept + mains + all pairwise products.
    LogisticPairwise,
    /// Depth-1 gradient boosting on the raw features.
    BoostedStumps { rounds: usize, learning_rate: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleConfig {
    pub learners: Vec<LearnerKind>,
    pub cv_folds: usize,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            learners: vec![
                LearnerKind::LogisticMains,
                LearnerKind::LogisticPairwise,
                LearnerKind::BoostedStumps { rounds: 200, learning_rate: 0.1 },
            ],
            cv_folds: 5,
        }
    }
}

impl EnsembleConfig {
    pub fn with_cv_folds(mut self, folds: usize) -> Self {
        self.cv_folds = folds;
        self
    }
}

#[derive(Debug, Clone)]
pub enum FittedMember {
    Logistic { kind: LearnerKind, fit: FittedLogistic },
    Stumps(BoostedStumps),
}

impl FittedMember {
    pub fn predict(&self, features: &[f64]) -> f64 {
        match self {
            FittedMember::Logistic { kind, fit } => {
                let row = expand_row(features, kind);
                fit.predict(&row)
            }
            FittedMember::Stumps(model) => model.predict(features),
        }
    }
}

fn expand_row(features: &[f64], kind: &LearnerKind) -> Vec<f64> {
    let k = features.len();
    let mut row = Vec::with_capacity(1 + k + k * (k - 1) / 2);
    row.push(1.0);
    row.extend_from_slice(features);
    if matches!(kind, LearnerKind::LogisticPairwise) {
        for i in 0..k {
            for j in (i + 1)..k {
                row.push(features[i] * features[j]);
            }
        }
    }
    row
}

fn fit_member(
    kind: &LearnerKind,
    columns: &[Vec<f64>],
    y: &[f64],
    w: &[f64],
    rows: &[usize],
) -> Result<FittedMember, FitError> {
    match kind {
        LearnerKind::BoostedStumps { rounds, learning_rate } => {
            let sub: Vec<Vec<f64>> = columns
                .iter()
                .map(|c| rows.iter().map(|&i| c[i]).collect())
                .collect();
            let ysub: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
            let wsub: Vec<f64> = rows.iter().map(|&i| w[i]).collect();
            Ok(FittedMember::Stumps(BoostedStumps::fit(&sub, &ysub, &wsub, *rounds, *learning_rate)))
        }
        _ => {
            let mut feat_buf = Vec::with_capacity(columns.len());
            let mut x = Vec::new();
            for &i in rows {
                feat_buf.clear();
                feat_buf.extend(columns.iter().map(|c| c[i]));
                x.extend_from_slice(&expand_row(&feat_buf, kind));
            }
            let ncol = if rows.is_empty() { 1 } else { x.len() / rows.len() };
            let design = DesignMatrix {
                x,
                nrow: rows.len(),
                ncol,
                labels: Vec::new(),
                rows: rows.to_vec(),
            };
            let ysub: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
            let wsub: Vec<f64> = rows.iter().map(|&i| w[i]).collect();
            let fit = fit_logistic_irls(&design, &ysub, &wsub)?;
            Ok(FittedMember::Logistic { kind: kind.clone(), fit })
        }
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleModel {
    pub members: Vec<FittedMember>,
    /// Convex weights aligned with `members`.
    pub weights: Vec<f64>,
    /// Cross-validated log-loss per surviving member.
    pub cv_losses: Vec<f64>,
    /// Cross-validated log-loss of the stacked combination.
    pub cv_loss: f64,
    /// Members dropped because training failed.
    pub dropped: usize,
}

impl EnsembleModel {
    /// Stacked prediction, clamped to `(eps, 1 - eps)` with `eps = 1e-6`.
    pub fn predict(&self, features: &[f64]) -> f64 {
        let p: f64 = self
            .members
            .iter()
            .zip(self.weights.iter())
            .map(|(m, w)| w * m.predict(features))
            .sum();
        p.clamp(PRED_EPS, 1.0 - PRED_EPS)
    }
}

fn log_loss(p: &[f64], y: &[f64], w: &[f64]) -> f64 {
    let mut acc = math::KahanSum::new();
    let mut wsum = 0.0;
    for i in 0..y.len() {
        let pi = p[i].clamp(1e-12, 1.0 - 1e-12);
        acc.add(-w[i] * (y[i] * math::ln(pi) + (1.0 - y[i]) * math::ln(1.0 - pi)));
        wsum += w[i];
    }
    acc.value() / wsum
}

/// Fits the learner library with cross-validated convex stacking.
///
/// `row_folds[i]` is the fold of row `i` (derived from the subject-level
/// assignment); member `k`'s CV prediction for a row comes from a fit that
/// excluded the row's fold.
pub fn fit_ensemble(
    columns: &[Vec<f64>],
    y: &[f64],
    w: &[f64],
    row_folds: &[usize],
    config: &EnsembleConfig,
) -> Result<EnsembleModel, FitError> {
    let n = y.len();
    if columns.iter().any(|c| c.len() != n) || row_folds.len() != n || w.len() != n {
        return Err(FitError::DimensionMismatch);
    }
    if config.cv_folds < 2 {
        return Err(FitError::TooFewFolds(2));
    }
    let mut folds_present: Vec<usize> = row_folds.to_vec();
    folds_present.sort_unstable();
    folds_present.dedup();

    // honest per-member CV predictions
    let mut survivors: Vec<&LearnerKind> = Vec::new();
    let mut cv_preds: Vec<Vec<f64>> = Vec::new();
    let mut dropped = 0usize;
    'members: for kind in &config.learners {
        let mut pred = vec![0.0; n];
        for &v in &folds_present {
            let train: Vec<usize> = (0..n).filter(|&i| row_folds[i] != v).collect();
            let test: Vec<usize> = (0..n).filter(|&i| row_folds[i] == v).collect();
            if train.is_empty() || test.is_empty() {
                continue;
            }
            let member = match fit_member(kind, columns, y, w, &train) {
                Ok(m) => m,
                Err(_) => {
                    dropped += 1;
                    continue 'members;
                }
            };
            let mut feat = Vec::with_capacity(columns.len());
            for &i in &test {
                feat.clear();
                feat.extend(columns.iter().map(|c| c[i]));
                pred[i] = member.predict(&feat);
            }
        }
        survivors.push(kind);
        cv_preds.push(pred);
    }
    if survivors.is_empty() {
        return Err(FitError::AllMembersFailed);
    }

    let k = survivors.len();
    let cv_losses: Vec<f64> = cv_preds.iter().map(|p| log_loss(p, y, w)).collect();

    // convex weights: start at the best single member, move toward vertices
    let best = (0..k)
        .min_by(|&a, &b| cv_losses[a].partial_cmp(&cv_losses[b]).unwrap())
        .unwrap();
    let mut weights = vec![0.0; k];
    weights[best] = 1.0;
    let mut mix: Vec<f64> = cv_preds[best].clone();
    let mut loss = cv_losses[best];
    if k > 1 {
        for _sweep in 0..200 {
            let mut improved = 0.0;
            for target in 0..k {
                // line search on w' = (1-t) w + t e_target
                let (t, l) = line_search(&mix, &cv_preds[target], y, w, loss);
                if l < loss - 1e-15 {
                    improved += loss - l;
                    for i in 0..n {
                        mix[i] = (1.0 - t) * mix[i] + t * cv_preds[target][i];
                    }
                    for w in weights.iter_mut() {
                        *w *= 1.0 - t;
                    }
                    weights[target] += t;
                    loss = l;
                }
            }
            if improved < WEIGHT_TOL {
                break;
            }
        }
        let total: f64 = weights.iter().sum();
        for w in weights.iter_mut() {
            *w /= total;
        }
    }

    // final members trained on everything
    let all: Vec<usize> = (0..n).collect();
    let mut members = Vec::with_capacity(k);
    for kind in &survivors {
        members.push(fit_member(kind, columns, y, w, &all)?);
    }

    Ok(EnsembleModel { members, weights, cv_losses, cv_loss: loss, dropped })
}

/// Golden-section search for `t in [0, 1]` minimizing the log-loss of
/// `(1-t)·mix + t·vertex`.
fn line_search(mix: &[f64], vertex: &[f64], y: &[f64], w: &[f64], loss_at_zero: f64) -> (f64, f64) {
    let eval = |t: f64| -> f64 {
        let mut acc = math::KahanSum::new();
        let mut wsum = 0.0;
        for i in 0..y.len() {
            let p = ((1.0 - t) * mix[i] + t * vertex[i]).clamp(1e-12, 1.0 - 1e-12);
            acc.add(-w[i] * (y[i] * math::ln(p) + (1.0 - y[i]) * math::ln(1.0 - p)));
            wsum += w[i];
        }
        acc.value() / wsum
    };
    let inv_phi = 0.618_033_988_749_894_8;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = eval(x1);
    let mut f2 = eval(x2);
    for _ in 0..60 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = eval(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = eval(x2);
        }
    }
    let t = 0.5 * (lo + hi);
    let ft = eval(t);
    let candidates = [(0.0, loss_at_zero), (t, ft), (1.0, eval(1.0))];
    candidates
        .iter()
        .cloned()
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::expit;
    use crate::seed::stream_rng;
    use rand::Rng;

    #[test]
    fn kfold_partition_sizes_and_determinism() {
        let ids: Vec<u64> = (0..10).collect();
        let f = kfold(&ids, 2, 42).unwrap();
        assert_eq!(f.fold_sizes(), vec![5, 5]);
        assert_eq!(f, kfold(&ids, 2, 42).unwrap());

        let ids5: Vec<u64> = (0..5).collect();
        let mut sizes = kfold(&ids5, 2, 1).unwrap().fold_sizes();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![2, 3]);

        assert!(kfold(&ids5, 7, 1).is_err());
        assert!(kfold(&ids5, 1, 1).is_err());
    }

    #[test]
    fn kfold_invariant_to_subject_order() {
        let ids: Vec<u64> = vec![30, 10, 20, 50, 40, 60];
        let f = kfold(&ids, 3, 9).unwrap();
        let ids_sorted: Vec<u64> = vec![10, 20, 30, 40, 50, 60];
        let g = kfold(&ids_sorted, 3, 9).unwrap();
        // same id lands in the same fold regardless of order
        for (i, &id) in ids.iter().enumerate() {
            let pos = ids_sorted.iter().position(|&x| x == id).unwrap();
            assert_eq!(f.fold_of[i], g.fold_of[pos]);
        }
    }

    fn synthetic(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>, Vec<usize>) {
        let mut rng = stream_rng(seed, 1, 1);
        let mut x1 = Vec::with_capacity(n);
        let mut x2 = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let a: f64 = rng.random_range(-2.0..2.0);
            let b: f64 = rng.random_range(-2.0..2.0);
            let p = expit(-0.3 + 0.8 * a - 0.5 * b + 0.6 * a * b);
            x1.push(a);
            x2.push(b);
            y.push(if rng.random::<f64>() < p { 1.0 } else { 0.0 });
        }
        let folds: Vec<usize> = (0..n).map(|i| i % 3).collect();
        (vec![x1, x2], y, folds)
    }

    #[test]
    fn single_member_gets_all_weight() {
        let (cols, y, folds) = synthetic(300, 5);
        let cfg = EnsembleConfig { learners: vec![LearnerKind::LogisticMains], cv_folds: 3 };
        let model = fit_ensemble(&cols, &y, &vec![1.0; y.len()], &folds, &cfg).unwrap();
        assert_eq!(model.weights, vec![1.0]);
    }

    #[test]
    fn duplicate_members_predict_identically_regardless_of_split() {
        let (cols, y, folds) = synthetic(300, 6);
        let cfg = EnsembleConfig {
            learners: vec![LearnerKind::LogisticMains, LearnerKind::LogisticMains],
            cv_folds: 3,
        };
        let model = fit_ensemble(&cols, &y, &vec![1.0; y.len()], &folds, &cfg).unwrap();
        let p = model.predict(&[0.5, -1.0]);
        let p0 = model.members[0].predict(&[0.5, -1.0]);
        assert!((p - p0.clamp(1e-6, 1.0 - 1e-6)).abs() < 1e-12);
        let wsum: f64 = model.weights.iter().sum();
        assert!((wsum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stacked_cv_loss_never_worse_than_best_member() {
        let (cols, y, folds) = synthetic(600, 7);
        let model = fit_ensemble(&cols, &y, &vec![1.0; y.len()], &folds, &EnsembleConfig::default()).unwrap();
        let best = model.cv_losses.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(model.cv_loss <= best + 1e-8);
        let wsum: f64 = model.weights.iter().sum();
        assert!((wsum - 1.0).abs() < 1e-12);
        assert!(model.weights.iter().all(|&w| w >= 0.0));
    }

    #[test]
    fn predictions_are_clamped() {
        let (cols, y, folds) = synthetic(200, 8);
        let model = fit_ensemble(&cols, &y, &vec![1.0; y.len()], &folds, &EnsembleConfig::default()).unwrap();
        let p = model.predict(&[50.0, -50.0]);
        assert!(p >= 1e-6 && p <= 1.0 - 1e-6);
    }
}
