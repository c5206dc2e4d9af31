//! File formats: loss-stream CSV (`step,objective,value`), scheduler
//! signal JSONL, metric JSONL, and the offline scheduler replay behind
//! `sched-sim`.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;

use recap_core::scheduler::SchedulerError;
use recap_core::window::ObjectiveId;
use recap_core::{CConvention, Scheduler, SchedulerConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed stream file: {0}")]
    MalformedStreams(String),
    #[error(transparent)]
    Scheduler(#[from] SchedulerError),
}

/// Loss streams keyed by step: one optional value per objective, with
/// objectives listed in first-appearance order.
#[derive(Debug, Clone, PartialEq)]
pub struct LossStreams {
    pub objectives: Vec<String>,
    pub rows: BTreeMap<u64, Vec<Option<f64>>>,
}

#[derive(Debug, Deserialize, Serialize)]
struct StreamRow {
    step: u64,
    objective: String,
    value: f64,
}

pub fn read_streams_csv(path: &Path) -> Result<LossStreams, IoError> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut objectives: Vec<String> = Vec::new();
    let mut last_step: BTreeMap<String, u64> = BTreeMap::new();
    let mut rows: BTreeMap<u64, Vec<Option<f64>>> = BTreeMap::new();
    for record in reader.deserialize() {
        let row: StreamRow = record?;
        if !row.value.is_finite() {
            return Err(IoError::MalformedStreams(format!(
                "non-finite value at step {} for {}",
                row.step, row.objective
            )));
        }
        if let Some(&prev) = last_step.get(&row.objective) {
            if row.step < prev {
                return Err(IoError::MalformedStreams(format!(
                    "steps decrease for {} ({} after {})",
                    row.objective, row.step, prev
                )));
            }
        }
        last_step.insert(row.objective.clone(), row.step);
        let k = match objectives.iter().position(|o| *o == row.objective) {
            Some(k) => k,
            None => {
                objectives.push(row.objective.clone());
                for values in rows.values_mut() {
                    values.push(None);
                }
                objectives.len() - 1
            }
        };
        let width = objectives.len();
        let values = rows.entry(row.step).or_insert_with(|| vec![None; width]);
        if values.len() < width {
            values.resize(width, None);
        }
        values[k] = Some(row.value);
    }
    if objectives.is_empty() {
        return Err(IoError::MalformedStreams("no data rows".into()));
    }
    // pad early rows created before later objectives appeared
    let width = objectives.len();
    for values in rows.values_mut() {
        values.resize(width, None);
    }
    Ok(LossStreams { objectives, rows })
}

pub fn write_streams_csv(path: &Path, objectives: &[String], series: &[Vec<f64>]) -> Result<(), IoError> {
    let mut writer = csv::Writer::from_path(path)?;
    let steps = series.iter().map(|s| s.len()).max().unwrap_or(0);
    for step in 0..steps {
        for (k, name) in objectives.iter().enumerate() {
            if let Some(&value) = series[k].get(step) {
                writer.serialize(StreamRow { step: step as u64, objective: name.clone(), value })?;
            }
        }
    }
    writer.flush()?;
    Ok(())
}

/// One `sched-sim` output line: the window signals and weight of one
/// objective at one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalRecord {
    pub step: u64,
    pub objective: String,
    pub mu: f64,
    pub mu_prev: f64,
    pub sigma: f64,
    pub c: f64,
    pub i: f64,
    pub s: f64,
    pub lambda: f64,
}

/// Replays recorded loss streams through the scheduler. Emits one
/// record per objective per step once that objective's window is
/// ready; earlier steps only feed the windows.
pub fn run_sched_sim(streams: &LossStreams, config: SchedulerConfig) -> Result<Vec<SignalRecord>, IoError> {
    let objectives: Vec<ObjectiveId> = streams
        .objectives
        .iter()
        .enumerate()
        .map(|(k, name)| ObjectiveId::new(name.clone(), k))
        .collect();
    let mut scheduler = Scheduler::new(objectives, config)?;
    let mut out = Vec::new();
    for (&step, values) in &streams.rows {
        let weights = scheduler.step_partial(values)?;
        for (k, signals) in scheduler.signals().iter().enumerate() {
            if let Some(sig) = signals {
                out.push(SignalRecord {
                    step,
                    objective: streams.objectives[k].clone(),
                    mu: sig.mu,
                    mu_prev: sig.mu_prev,
                    sigma: sig.sigma,
                    c: sig.c,
                    i: sig.i,
                    s: sig.s,
                    lambda: weights.weights[k],
                });
            }
        }
    }
    Ok(out)
}

pub fn parse_c_convention(name: &str) -> Option<CConvention> {
    match name {
        "improvement-up" => Some(CConvention::ImprovementUp),
        "paper-formula" => Some(CConvention::PaperFormula),
        _ => None,
    }
}

/// One metrics line. `tag` carries the objective or domain the value
/// belongs to, empty for run-level metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub step: u64,
    pub run: String,
    pub name: String,
    pub value: f64,
    pub tag: String,
}

/// Append-only JSONL writer that enforces non-decreasing steps per
/// (run, name) pair.
pub struct MetricWriter<W: std::io::Write> {
    out: W,
    last_step: BTreeMap<(String, String), u64>,
}

impl<W: std::io::Write> MetricWriter<W> {
    pub fn new(out: W) -> Self {
        Self { out, last_step: BTreeMap::new() }
    }

    pub fn write(&mut self, record: &MetricRecord) -> Result<(), IoError> {
        let key = (record.run.clone(), record.name.clone());
        if let Some(&prev) = self.last_step.get(&key) {
            assert!(
                record.step >= prev,
                "metric steps must be non-decreasing per (run, name): {key:?} {} after {prev}",
                record.step
            );
        }
        self.last_step.insert(key, record.step);
        serde_json::to_writer(&mut self.out, record)?;
        self.out.write_all(b"\n")?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<(), IoError> {
        self.out.flush()?;
        Ok(())
    }
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricRecord>, IoError> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(IoError::Json))
        .collect()
}

pub fn write_signal_records(path: &Path, records: &[SignalRecord]) -> Result<(), IoError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}
