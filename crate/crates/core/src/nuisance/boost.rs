//! Gradient-boosted depth-1 trees (stumps) for binary/fractional responses
//! under log-loss, with histogram-binned split search.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;

const MAX_BINS: usize = 32;
const LEAF_CLIP: f64 = 4.0;
const HESS_RIDGE: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct Stump {
    pub feature: usize,
    pub threshold: f64,
    /// Leaf values with the learning rate already applied.
    pub left: f64,
    pub right: f64,
}

#[derive(Debug, Clone)]
pub struct BoostedStumps {
    pub base_score: f64,
    pub stumps: Vec<Stump>,
}

impl BoostedStumps {
    pub fn predict(&self, features: &[f64]) -> f64 {
        let mut f = self.base_score;
        for s in &self.stumps {
            f += if features[s.feature] <= s.threshold { s.left } else { s.right };
        }
        math::expit(f)
    }

    /// Fits `rounds` Newton-boosted stumps over column-major features with
    /// case weights.
    pub fn fit(
        columns: &[Vec<f64>],
        y: &[f64],
        w: &[f64],
        rounds: usize,
        learning_rate: f64,
    ) -> BoostedStumps {
        let n = y.len();
        let nfeat = columns.len();
        debug_assert!(columns.iter().all(|c| c.len() == n));
        debug_assert_eq!(w.len(), n);

        // candidate thresholds per feature: distinct-value midpoints, or
        // quantile cuts when there are many distinct values
        let mut thresholds: Vec<Vec<f64>> = Vec::with_capacity(nfeat);
        for col in columns {
            let mut vals = col.clone();
            vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
            vals.dedup();
            let cuts = if vals.len() <= 1 {
                Vec::new()
            } else if vals.len() <= MAX_BINS + 1 {
                vals.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
            } else {
                (1..=MAX_BINS)
                    .map(|k| {
                        let pos = k * (vals.len() - 1) / (MAX_BINS + 1);
                        0.5 * (vals[pos] + vals[pos + 1])
                    })
                    .collect::<Vec<f64>>()
            };
            let mut cuts = cuts;
            cuts.dedup();
            thresholds.push(cuts);
        }
        // bin index of each row per feature (position of first threshold >= x)
        let bin_index: Vec<Vec<u16>> = (0..nfeat)
            .map(|f| {
                columns[f]
                    .iter()
                    .map(|&x| {
                        thresholds[f].iter().position(|&t| x <= t).unwrap_or(thresholds[f].len())
                            as u16
                    })
                    .collect()
            })
            .collect();

        let wsum: f64 = w.iter().sum();
        let ybar: f64 = y.iter().zip(w.iter()).map(|(yi, wi)| yi * wi).sum::<f64>() / wsum;
        let base_score = math::logit(ybar);
        let mut f = vec![base_score; n];
        let mut stumps = Vec::with_capacity(rounds);

        let mut grad = vec![0.0; n];
        let mut hess = vec![0.0; n];
        for _ in 0..rounds {
            for i in 0..n {
                let p = math::expit(f[i]);
                grad[i] = w[i] * (y[i] - p);
                hess[i] = w[i] * p * (1.0 - p);
            }
            let gtot: f64 = grad.iter().sum();
            let htot: f64 = hess.iter().sum();
            let base_obj = gtot * gtot / (htot + HESS_RIDGE);

            let mut best: Option<(f64, usize, usize, f64, f64)> = None; // gain, feat, cut, gl, hl
            for feat in 0..nfeat {
                let ncuts = thresholds[feat].len();
                if ncuts == 0 {
                    continue;
                }
                let mut gbin = vec![0.0; ncuts + 1];
                let mut hbin = vec![0.0; ncuts + 1];
                for i in 0..n {
                    let b = bin_index[feat][i] as usize;
                    gbin[b] += grad[i];
                    hbin[b] += hess[i];
                }
                let mut gl = 0.0;
                let mut hl = 0.0;
                for cut in 0..ncuts {
                    gl += gbin[cut];
                    hl += hbin[cut];
                    let gr = gtot - gl;
                    let hr = htot - hl;
                    let gain =
                        gl * gl / (hl + HESS_RIDGE) + gr * gr / (hr + HESS_RIDGE) - base_obj;
                    if best.map_or(gain > 1e-12, |b| gain > b.0) {
                        best = Some((gain, feat, cut, gl, hl));
                    }
                }
            }
            let Some((_, feat, cut, gl, hl)) = best else {
                break; // nothing improves the objective
            };
            let gr = gtot - gl;
            let hr = htot - hl;
            let left =
                learning_rate * (gl / (hl + HESS_RIDGE)).clamp(-LEAF_CLIP, LEAF_CLIP);
            let right =
                learning_rate * (gr / (hr + HESS_RIDGE)).clamp(-LEAF_CLIP, LEAF_CLIP);
            let threshold = thresholds[feat][cut];
            for i in 0..n {
                f[i] += if (bin_index[feat][i] as usize) <= cut { left } else { right };
            }
            stumps.push(Stump { feature: feat, threshold, left, right });
        }

        BoostedStumps { base_score, stumps }
    }
}
