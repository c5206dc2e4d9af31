//! Forgetting report: collects per-run summaries into one CSV and
//! appends mean and standard deviation rows over seeds per
//! (method, domain, metric).

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("no run directories given")]
    NoRuns,
    #[error("{0} has no summary.csv")]
    MissingSummary(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub seed: String,
    pub domain: String,
    pub metric: String,
    pub pretrain: f64,
    #[serde(rename = "final")]
    pub final_value: f64,
    pub delta: f64,
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>, ReportError> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in reader.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Builds the aggregate report over run directories. Per-run rows come
/// first, then `seed=mean` and `seed=std` rows per (method, domain,
/// metric) group.
pub fn forgetting_report(run_dirs: &[&Path]) -> Result<String, ReportError> {
    if run_dirs.is_empty() {
        return Err(ReportError::NoRuns);
    }
    let mut rows = Vec::new();
    for dir in run_dirs {
        let path = dir.join("summary.csv");
        if !path.exists() {
            return Err(ReportError::MissingSummary(dir.display().to_string()));
        }
        rows.extend(read_summary(&path)?);
    }
    let mut groups: BTreeMap<(String, String, String), Vec<&SummaryRow>> = BTreeMap::new();
    for row in &rows {
        groups
            .entry((row.method.clone(), row.domain.clone(), row.metric.clone()))
            .or_default()
            .push(row);
    }
    let mut out = String::from("method,seed,domain,metric,pretrain,final,delta\n");
    for row in &rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            row.method, row.seed, row.domain, row.metric, row.pretrain, row.final_value, row.delta
        ));
    }
    for ((method, domain, metric), members) in &groups {
        let pre: Vec<f64> = members.iter().map(|r| r.pretrain).collect();
        let fin: Vec<f64> = members.iter().map(|r| r.final_value).collect();
        let delta: Vec<f64> = members.iter().map(|r| r.delta).collect();
        let (pre_m, pre_s) = mean_std(&pre);
        let (fin_m, fin_s) = mean_std(&fin);
        let (delta_m, delta_s) = mean_std(&delta);
        out.push_str(&format!("{method},mean,{domain},{metric},{pre_m},{fin_m},{delta_m}\n"));
        out.push_str(&format!("{method},std,{domain},{metric},{pre_s},{fin_s},{delta_s}\n"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_run(dir: &Path, method: &str, seed: u64, final_value: f64) {
        std::fs::create_dir_all(dir).unwrap();
        std::fs::write(
            dir.join("summary.csv"),
            format!(
                "method,seed,domain,metric,pretrain,final,delta\n{method},{seed},general,token_acc,0.9,{final_value},{}\n",
                final_value - 0.9
            ),
        )
        .unwrap();
    }

    #[test]
    fn zero_runs_is_an_error() {
        assert!(matches!(forgetting_report(&[]), Err(ReportError::NoRuns)));
    }

    #[test]
    fn single_run_single_domain_gives_one_data_row() {
        let tmp = tempfile::tempdir().unwrap();
        let run = tmp.path().join("r");
        write_run(&run, "uniform", 1, 0.8);
        let report = forgetting_report(&[&run]).unwrap();
        let data: Vec<_> = report.lines().skip(1).collect();
        // one per-run row plus mean and std rows
        assert_eq!(data.len(), 3);
        assert!(data[0].starts_with("uniform,1,general,token_acc,"));
        assert!(data[1].starts_with("uniform,mean,"));
        assert!(data[2].starts_with("uniform,std,"));
    }

    #[test]
    fn aggregates_mean_and_std_over_seeds() {
        let tmp = tempfile::tempdir().unwrap();
        let a = tmp.path().join("a");
        let b = tmp.path().join("b");
        write_run(&a, "recap", 1, 0.8);
        write_run(&b, "recap", 2, 0.6);
        let report = forgetting_report(&[&a, &b]).unwrap();
        let mean_row = report.lines().find(|l| l.contains(",mean,")).unwrap();
        let fields: Vec<_> = mean_row.split(',').collect();
        let fin: f64 = fields[5].parse().unwrap();
        assert!((fin - 0.7).abs() < 1e-12);
        let std_row = report.lines().find(|l| l.contains(",std,")).unwrap();
        let sd: f64 = std_row.split(',').nth(5).unwrap().parse().unwrap();
        assert!((sd - (0.02f64).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn retention_delta_of_identical_runs_is_zero_spread() {
        let tmp = tempfile::tempdir().unwrap();
        let run = tmp.path().join("r");
        write_run(&run, "uniform", 1, 0.9);
        let report = forgetting_report(&[&run]).unwrap();
        let row = report.lines().nth(1).unwrap();
        let delta: f64 = row.split(',').nth(6).unwrap().parse().unwrap();
        assert_eq!(delta, 0.0);
    }
}
