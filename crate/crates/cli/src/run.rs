//! Parallel scenario execution and result emission.

use anyhow::{bail, Result};
use gsurv_core::simlab::{aggregate, run_replicate, scenario_truth, MetricsRow, ScenarioConfig};
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

pub const RESULT_COLUMNS: &[&str] = &[
    "scenario_id",
    "dgp",
    "estimator",
    "scenario",
    "n",
    "delta",
    "truth",
    "bias",
    "se",
    "rmse",
    "coverage",
    "width",
    "reps",
];

pub struct ScenarioOutcome {
    pub cfg: ScenarioConfig,
    pub row: MetricsRow,
    pub failed: bool,
}

/// Runs every scenario with replicate-level parallelism; truths shared per
/// `(dgp, delta)` are computed once.
pub fn run_grid(grid: &[ScenarioConfig], quiet: bool) -> Result<Vec<ScenarioOutcome>> {
    // truth cache keyed on the dgp/delta/draws triple
    let mut truths: BTreeMap<String, f64> = BTreeMap::new();
    let mut outcomes = Vec::with_capacity(grid.len());
    for cfg in grid {
        let key = format!("{:?}|{}|{}|{:?}", cfg.dgp, cfg.delta, cfg.truth_draws, cfg.truth_override);
        let truth = match truths.get(&key) {
            Some(&t) => t,
            None => {
                let t = scenario_truth(cfg)?;
                truths.insert(key, t);
                t
            }
        };
        let records: Vec<_> =
            (0..cfg.replicates).into_par_iter().map(|rep| run_replicate(cfg, rep)).collect();
        for r in &records {
            if let Some(err) = &r.error {
                eprintln!("scenario {}: replicate {} failed: {err}", cfg.id, r.rep);
            }
        }
        let row = aggregate(truth, &records);
        let failed = row.reps_failed * 20 > cfg.replicates;
        if !quiet {
            eprintln!(
                "scenario {:<28} truth={:.4} bias={:+.4} se={:.4} rmse={:.4}{}{}",
                cfg.id,
                row.truth,
                row.bias,
                row.se,
                row.rmse,
                row.coverage.map(|c| format!(" cover={c:.3}")).unwrap_or_default(),
                if failed { "  [FAILED]" } else { "" },
            );
        }
        outcomes.push(ScenarioOutcome { cfg: cfg.clone(), row, failed });
    }
    Ok(outcomes)
}

pub fn write_results(outcomes: &[ScenarioOutcome], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(RESULT_COLUMNS)?;
    for o in outcomes {
        let (dgp, jtag) = match &o.cfg.dgp {
            gsurv_core::simlab::DgpId::Study1 { horizon, censoring } => (
                if *censoring { "study1".to_string() } else { format!("study1_j{horizon}_nc") },
                *horizon,
            ),
            gsurv_core::simlab::DgpId::Study2 => ("study2".to_string(), 5),
        };
        let _ = jtag;
        w.write_record(&[
            o.cfg.id.clone(),
            dgp,
            o.cfg.estimator.tag().to_string(),
            o.cfg.scenario.tag(),
            o.cfg.n.to_string(),
            format!("{}", o.cfg.delta),
            format!("{}", o.row.truth),
            format!("{}", o.row.bias),
            format!("{}", o.row.se),
            format!("{}", o.row.rmse),
            o.row.coverage.map(|c| format!("{c}")).unwrap_or_default(),
            o.row.mean_ci_width.map(|v| format!("{v}")).unwrap_or_default(),
            o.row.reps_done.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn check_failures(outcomes: &[ScenarioOutcome]) -> Result<()> {
    let failed: Vec<&str> =
        outcomes.iter().filter(|o| o.failed).map(|o| o.cfg.id.as_str()).collect();
    if !failed.is_empty() {
        bail!("{} scenario(s) failed: {}", failed.len(), failed.join(", "));
    }
    Ok(())
}

/// Configures the global worker pool from `--jobs` or `GSURV_JOBS`.
pub fn configure_jobs(jobs: Option<usize>) -> Result<()> {
    let jobs = jobs.or_else(|| {
        std::env::var("GSURV_JOBS").ok().and_then(|v| v.parse().ok())
    });
    if let Some(n) = jobs {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

/// Writes per-subject influence components as CSV `(id, term, value)`;
/// term 0 is `T_0`, terms `1..J-1` the interval corrections, `J` the
/// terminal term.
pub fn write_eif_dump(
    ids: &[u64],
    values: &[gsurv_core::eif::EifValue],
    horizon: usize,
    path: &Path,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["id", "term", "value"])?;
    for (s, v) in values.iter().enumerate() {
        let id = ids[s].to_string();
        w.write_record(&[id.clone(), "0".into(), format!("{}", v.t0)])?;
        for (i, t) in v.interval_terms.iter().enumerate() {
            w.write_record(&[id.clone(), (i + 1).to_string(), format!("{t}")])?;
        }
        w.write_record(&[id, horizon.to_string(), format!("{}", v.terminal)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn print_json(value: &serde_json::Value, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => std::fs::write(p, text + "\n")?,
        None => {
            let mut stdout = std::io::stdout().lock();
            writeln!(stdout, "{text}")?;
        }
    }
    Ok(())
}
