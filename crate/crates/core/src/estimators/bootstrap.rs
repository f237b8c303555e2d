//! Subject-level percentile bootstrap.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use rand::Rng;

use super::{percentile_sorted, EstimError};
use crate::data::Panel;
use crate::seed::stream_rng;

const BOOT_STREAM: u64 = 0xB007;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapInterval {
    pub low: f64,
    pub high: f64,
    /// Resamples redrawn because the estimator failed on them.
    pub redraws: usize,
}

/// Percentile bootstrap over subject resamples.
///
/// Resampling is with replacement at the trajectory level; a failing
/// resample is redrawn (and counted), with more than 10% failures an error.
/// Fully deterministic given the seed.
pub fn bootstrap_ci(
    estimate: &mut dyn FnMut(&Panel) -> Result<f64, EstimError>,
    panel: &Panel,
    b: usize,
    seed: u64,
) -> Result<BootstrapInterval, EstimError> {
    if b < 2 {
        return Err(EstimError::BundleShape(String::from("bootstrap needs B >= 2")));
    }
    let n = panel.n_subjects();
    if n == 0 {
        return Err(EstimError::EmptyPanel);
    }
    let max_failures = b / 10;
    let mut redraws = 0usize;
    let mut stats = Vec::with_capacity(b);
    for rep in 0..b {
        let mut rng = stream_rng(seed, BOOT_STREAM, rep as u64);
        loop {
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let resample = panel.subset(&idx);
            match estimate(&resample) {
                Ok(v) => {
                    stats.push(v);
                    break;
                }
                Err(_) => {
                    redraws += 1;
                    if redraws > max_failures {
                        return Err(EstimError::BootstrapFailures {
                            failures: redraws,
                            attempts: b + redraws,
                        });
                    }
                }
            }
        }
    }
    stats.sort_by(|a, b| a.partial_cmp(b).unwrap_or_else(|| panic!("{}", format!("non-finite bootstrap statistic {a} vs {b}"))));
    Ok(BootstrapInterval {
        low: percentile_sorted(&stats, 0.025),
        high: percentile_sorted(&stats, 0.975),
        redraws,
    })
}
