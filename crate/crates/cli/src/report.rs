//! Pivoted comparison tables from a results CSV: one section per DGP, rows
//! by estimator/scenario/delta, BIAS/SE/RMSE (x100) blocks per sample size.

use anyhow::{bail, Context, Result};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone)]
pub struct ResultRow {
    pub scenario_id: String,
    pub dgp: String,
    pub estimator: String,
    pub scenario: String,
    pub n: usize,
    pub delta: f64,
    pub truth: f64,
    pub bias: f64,
    pub se: f64,
    pub rmse: f64,
    pub coverage: Option<f64>,
    pub width: Option<f64>,
    pub reps: usize,
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path)
        .with_context(|| format!("cannot open {}", path.display()))?;
    let headers = r.headers()?.clone();
    let idx = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .with_context(|| format!("results file lacks column `{name}`"))
    };
    let (i_id, i_dgp, i_est, i_scen, i_n, i_delta, i_truth, i_bias, i_se, i_rmse, i_cov, i_w, i_reps) = (
        idx("scenario_id")?,
        idx("dgp")?,
        idx("estimator")?,
        idx("scenario")?,
        idx("n")?,
        idx("delta")?,
        idx("truth")?,
        idx("bias")?,
        idx("se")?,
        idx("rmse")?,
        idx("coverage")?,
        idx("width")?,
        idx("reps")?,
    );
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        rows.push(ResultRow {
            scenario_id: rec[i_id].to_string(),
            dgp: rec[i_dgp].to_string(),
            estimator: rec[i_est].to_string(),
            scenario: rec[i_scen].to_string(),
            n: rec[i_n].parse()?,
            delta: rec[i_delta].parse()?,
            truth: rec[i_truth].parse()?,
            bias: rec[i_bias].parse()?,
            se: rec[i_se].parse()?,
            rmse: rec[i_rmse].parse()?,
            coverage: if rec[i_cov].is_empty() { None } else { Some(rec[i_cov].parse()?) },
            width: if rec[i_w].is_empty() { None } else { Some(rec[i_w].parse()?) },
            reps: rec[i_reps].parse()?,
        });
    }
    Ok(rows)
}

/// Renders the pivoted text table (values multiplied by 100 at rendering
/// only; stored numbers stay raw probabilities).
pub fn render(rows: &[ResultRow]) -> String {
    let mut out = String::new();
    if rows.is_empty() {
        return out;
    }
    let mut by_dgp: BTreeMap<&str, Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        by_dgp.entry(r.dgp.as_str()).or_default().push(r);
    }
    for (dgp, group) in by_dgp {
        let mut ns: Vec<usize> = group.iter().map(|r| r.n).collect();
        ns.sort_unstable();
        ns.dedup();
        let truth = group[0].truth;
        let _ = writeln!(out, "dgp: {dgp}  (truth at first row {:.3}; all values x100)", truth);
        let _ = write!(out, "{:<32}", "estimator / scenario / delta");
        for n in &ns {
            let _ = write!(out, "| {:^23} ", format!("n={n}"));
        }
        let _ = writeln!(out);
        let _ = write!(out, "{:<32}", "");
        for _ in &ns {
            let _ = write!(out, "| {:>7}{:>8}{:>8} ", "BIAS", "SE", "RMSE");
        }
        let _ = writeln!(out);

        let mut keys: Vec<(String, String, String)> = group
            .iter()
            .map(|r| (r.estimator.clone(), r.scenario.clone(), format!("{}", r.delta)))
            .collect();
        keys.sort();
        keys.dedup();
        for (est, scen, delta) in keys {
            let _ = write!(out, "{:<32}", format!("{est} / {scen} / d={delta}"));
            for n in &ns {
                let cell = group.iter().find(|r| {
                    r.estimator == est
                        && r.scenario == scen
                        && format!("{}", r.delta) == delta
                        && r.n == *n
                });
                match cell {
                    Some(r) => {
                        let _ = write!(
                            out,
                            "| {:>7.2}{:>8.2}{:>8.2} ",
                            100.0 * r.bias,
                            100.0 * r.se,
                            100.0 * r.rmse
                        );
                    }
                    None => {
                        let _ = write!(out, "| {:>23} ", "-");
                    }
                }
            }
            let _ = writeln!(out);
        }
        let _ = writeln!(out);
    }
    out
}

/// Writes the pivoted table as CSV (same x100 convention).
pub fn write_report_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    let mut ns: Vec<usize> = rows.iter().map(|r| r.n).collect();
    ns.sort_unstable();
    ns.dedup();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["dgp".to_string(), "estimator".to_string(), "scenario".to_string(), "delta".to_string()];
    for n in &ns {
        header.push(format!("bias_x100_n{n}"));
        header.push(format!("se_x100_n{n}"));
        header.push(format!("rmse_x100_n{n}"));
    }
    w.write_record(&header)?;
    let mut keys: Vec<(String, String, String, String)> = rows
        .iter()
        .map(|r| (r.dgp.clone(), r.estimator.clone(), r.scenario.clone(), format!("{}", r.delta)))
        .collect();
    keys.sort();
    keys.dedup();
    for (dgp, est, scen, delta) in keys {
        let mut record = vec![dgp.clone(), est.clone(), scen.clone(), delta.clone()];
        for n in &ns {
            let cell = rows.iter().find(|r| {
                r.dgp == dgp
                    && r.estimator == est
                    && r.scenario == scen
                    && format!("{}", r.delta) == delta
                    && r.n == *n
            });
            match cell {
                Some(r) => {
                    record.push(format!("{}", 100.0 * r.bias));
                    record.push(format!("{}", 100.0 * r.se));
                    record.push(format!("{}", 100.0 * r.rmse));
                }
                None => {
                    record.extend([String::new(), String::new(), String::new()]);
                }
            }
        }
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

pub fn schema_check(path: &Path) -> Result<()> {
    let r = csv::Reader::from_path(path)?;
    let headers = r.into_records();
    drop(headers);
    let mut r = csv::Reader::from_path(path)?;
    let h = r.headers()?;
    for required in crate::run::RESULT_COLUMNS {
        if !h.iter().any(|c| c == *required) {
            bail!("results file lacks column `{required}`");
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_results_render_empty() {
        assert_eq!(render(&[]), "");
    }

    #[test]
    fn mixed_dgps_get_sections() {
        let mk = |dgp: &str, est: &str, n: usize| ResultRow {
            scenario_id: "x".into(),
            dgp: dgp.into(),
            estimator: est.into(),
            scenario: "all_correct".into(),
            n,
            delta: 0.5,
            truth: 0.6,
            bias: -0.015,
            se: 0.0435,
            rmse: 0.046,
            coverage: None,
            width: None,
            reps: 100,
        };
        let rows = vec![mk("study1", "ice", 500), mk("study2", "tmle", 500), mk("study2", "tmle", 1000)];
        let text = render(&rows);
        assert!(text.contains("dgp: study1"));
        assert!(text.contains("dgp: study2"));
        assert!(text.contains("-1.50"));
        assert!(text.contains("4.35"));
    }
}
