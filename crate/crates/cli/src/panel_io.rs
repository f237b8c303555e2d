//! Panel CSV format: one row per subject-interval with columns
//! `id, j, <covariates by schema name>, a, c_next, y_next`. Trailing
//! intervals after an event are omitted; `y_next` is empty on censored
//! records. UTF-8 with a header row.

use anyhow::{bail, Context, Result};
use gsurv_core::data::{IntervalRecord, Panel, Trajectory};
use std::collections::BTreeMap;
use std::path::Path;

pub fn write_panel(panel: &Panel, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("cannot create {}", path.display()))?;
    let mut header = vec!["id".to_string(), "j".to_string()];
    header.extend(panel.schema.iter().cloned());
    header.extend(["a".to_string(), "c_next".to_string(), "y_next".to_string()]);
    w.write_record(&header)?;
    for (s, traj) in panel.subjects.iter().enumerate() {
        for (j, rec) in traj.records.iter().enumerate() {
            let mut row = vec![panel.ids[s].to_string(), j.to_string()];
            row.extend(rec.covariates.iter().map(|v| format_float(*v)));
            row.push(format_float(rec.treatment));
            row.push(if rec.censored_next { "1".into() } else { "0".into() });
            row.push(match rec.alive_next {
                Some(true) => "1".into(),
                Some(false) => "0".into(),
                None => String::new(),
            });
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn format_float(v: f64) -> String {
    // shortest round-trip representation
    let mut buf = ryu_like(v);
    if buf.ends_with(".0") {
        buf.truncate(buf.len() - 2);
    }
    buf
}

fn ryu_like(v: f64) -> String {
    let s = format!("{v}");
    if s.parse::<f64>() == Ok(v) {
        s
    } else {
        format!("{v:.17}")
    }
}

/// Reads a panel; `indicator` names the binary indication column (defaults
/// to a column called `lstar`, else the first column), `horizon` overrides
/// the inferred `max(j) + 1`.
pub fn read_panel(path: &Path, indicator: Option<&str>, horizon: Option<usize>) -> Result<Panel> {
    let mut r = csv::Reader::from_path(path)
        .with_context(|| format!("cannot open {}", path.display()))?;
    let headers = r.headers()?.clone();
    let cols: Vec<&str> = headers.iter().collect();
    if cols.len() < 5 || cols[0] != "id" || cols[1] != "j" {
        bail!("panel header must start with `id, j` and end with `a, c_next, y_next`");
    }
    let k = cols.len();
    if cols[k - 3] != "a" || cols[k - 2] != "c_next" || cols[k - 1] != "y_next" {
        bail!("panel header must end with `a, c_next, y_next`");
    }
    let schema: Vec<String> = cols[2..k - 3].iter().map(|s| s.to_string()).collect();
    if schema.is_empty() {
        bail!("panel needs at least one covariate column");
    }

    let mut rows: BTreeMap<u64, Vec<(usize, IntervalRecord)>> = BTreeMap::new();
    let mut max_j = 0usize;
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let id: u64 = rec[0].parse().with_context(|| format!("row {}: bad id", line + 2))?;
        let j: usize = rec[1].parse().with_context(|| format!("row {}: bad j", line + 2))?;
        max_j = max_j.max(j);
        let covs: Vec<f64> = (0..schema.len())
            .map(|c| {
                rec[2 + c]
                    .parse::<f64>()
                    .with_context(|| format!("row {}: bad value in {}", line + 2, schema[c]))
            })
            .collect::<Result<_>>()?;
        let a: f64 = rec[k - 3].parse().with_context(|| format!("row {}: bad a", line + 2))?;
        let c_next = match &rec[k - 2] {
            "0" => false,
            "1" => true,
            other => bail!("row {}: bad c_next `{other}`", line + 2),
        };
        let y_next = match &rec[k - 1] {
            "" => None,
            "0" => Some(false),
            "1" => Some(true),
            other => bail!("row {}: bad y_next `{other}`", line + 2),
        };
        rows.entry(id).or_default().push((j, IntervalRecord::new(covs, a, c_next, y_next)));
    }
    let horizon = horizon.unwrap_or(max_j + 1);

    let indicator_index = match indicator {
        Some(name) => schema
            .iter()
            .position(|c| c == name)
            .with_context(|| format!("indicator column `{name}` not in schema {schema:?}"))?,
        None => schema.iter().position(|c| c == "lstar").unwrap_or(0),
    };

    let mut ids = Vec::with_capacity(rows.len());
    let mut subjects = Vec::with_capacity(rows.len());
    for (id, mut recs) in rows {
        recs.sort_by_key(|(j, _)| *j);
        for (pos, (j, _)) in recs.iter().enumerate() {
            if *j != pos {
                bail!("subject {id}: intervals not contiguous from 0 (found j={j} at position {pos})");
            }
        }
        ids.push(id);
        subjects.push(Trajectory::new(recs.into_iter().map(|(_, r)| r).collect(), horizon));
    }
    Ok(Panel::new(ids, subjects, horizon, schema, indicator_index))
}
