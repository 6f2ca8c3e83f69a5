//! Report and baseline tables.
//!
//! Columns: `arm,seed,minade1,minade5,minade10,fde,hitrate_5_2m`. Each arm's
//! per-seed rows are followed by a row whose seed column reads `median`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use trajkit_core::baselines::{constant_velocity_baseline, physics_oracle};
use trajkit_core::metrics::{MetricReport, PredictionSet};
use trajkit_core::scene::Instance;

use crate::ablation::RunRecord;
use crate::config::METRIC_NAMES;
use crate::error::{Error, Result};

pub const MEDIAN_LABEL: &str = "median";

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub arm: String,
    pub seed: String,
    pub values: [f64; 5],
}

impl ReportRow {
    pub fn from_report(arm: &str, seed: String, r: &MetricReport) -> Self {
        Self {
            arm: arm.to_string(),
            seed,
            values: [r.minade1, r.minade5, r.minade10, r.fde, r.hitrate_5_2m],
        }
    }
}

/// Median; the mean of the two middle values for even counts.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Per-seed rows ordered by arm then seed, each arm closed by its median row.
pub fn report_rows(records: &[RunRecord]) -> Result<Vec<ReportRow>> {
    let mut by_arm: BTreeMap<&str, Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        by_arm.entry(&r.arm).or_default().push(r);
    }
    let mut rows = Vec::new();
    for (arm, mut runs) in by_arm {
        runs.sort_by_key(|r| r.seed);
        if runs.windows(2).any(|w| w[0].seed == w[1].seed) {
            return Err(Error::Config(format!(
                "arm {arm:?} has two records for one seed"
            )));
        }
        let per_seed: Vec<ReportRow> = runs
            .iter()
            .map(|r| ReportRow::from_report(arm, r.seed.to_string(), &r.report))
            .collect();
        let mut med = [0.0; 5];
        for (j, m) in med.iter_mut().enumerate() {
            *m = median(&per_seed.iter().map(|row| row.values[j]).collect::<Vec<_>>())
                .expect("arm has runs");
        }
        rows.extend(per_seed);
        rows.push(ReportRow {
            arm: arm.to_string(),
            seed: MEDIAN_LABEL.into(),
            values: med,
        });
    }
    Ok(rows)
}

/// Constant-velocity and physics-oracle rows over a dataset.
pub fn baseline_rows(instances: &[Instance]) -> Result<Vec<ReportRow>> {
    let gts: Vec<_> = instances.iter().map(|i| i.ground_truth.clone()).collect();
    let cv: Vec<_> = instances
        .iter()
        .map(|i| PredictionSet::single(constant_velocity_baseline(i)))
        .collect();
    let oracle: Vec<_> = instances
        .iter()
        .map(|i| PredictionSet::single(physics_oracle(i).1))
        .collect();
    Ok(vec![
        ReportRow::from_report(
            "constant_velocity",
            "-".into(),
            &MetricReport::evaluate(&cv, &gts)?,
        ),
        ReportRow::from_report(
            "physics_oracle",
            "-".into(),
            &MetricReport::evaluate(&oracle, &gts)?,
        ),
    ])
}

pub fn to_csv(rows: &[ReportRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["arm", "seed"];
    header.extend(METRIC_NAMES);
    w.write_record(&header)?;
    for row in rows {
        let mut rec = vec![row.arm.clone(), row.seed.clone()];
        rec.extend(row.values.iter().map(|v| format!("{v:.6}")));
        w.write_record(&rec)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Config(format!("csv flush: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv of UTF-8 fields"))
}

pub fn write_csv(rows: &[ReportRow], path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, to_csv(rows)?).map_err(|e| Error::io(path, e))
}

pub fn read_csv(path: &Path) -> Result<Vec<ReportRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let bad = |m: String| Error::Parse {
            path: path.to_path_buf(),
            message: m,
        };
        if rec.len() != 7 {
            return Err(bad(format!("expected 7 columns, got {}", rec.len())));
        }
        let mut values = [0.0; 5];
        for (j, v) in values.iter_mut().enumerate() {
            *v = rec[j + 2]
                .parse()
                .map_err(|e| bad(format!("column {}: {e}", METRIC_NAMES[j])))?;
        }
        rows.push(ReportRow {
            arm: rec[0].to_string(),
            seed: rec[1].to_string(),
            values,
        });
    }
    Ok(rows)
}

/// Every `*.json` run record in `dir`, in file-name order.
pub fn load_records(dir: &Path) -> Result<Vec<RunRecord>> {
    let mut paths: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&text).map_err(|e| Error::Parse {
                path: p.clone(),
                message: e.to_string(),
            })
        })
        .collect()
}
