//! Results files: full JSON plus a table-shaped CSV of the aggregates.

use std::fmt::Write as _;

use curenewton::harness::{Aggregate, ExperimentConfig, ExperimentOutcome, RoundLog, RuntimeRow, Stat};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const RESULTS_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunKind {
    Batch,
    Sequential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultsFile {
    pub version: u32,
    pub kind: RunKind,
    pub config: ExperimentConfig,
    pub rounds: Vec<RoundLog>,
    pub aggregates: Vec<Aggregate>,
}

impl ResultsFile {
    pub fn new(kind: RunKind, config: ExperimentConfig, outcome: ExperimentOutcome) -> Self {
        Self {
            version: RESULTS_VERSION,
            kind,
            config,
            rounds: outcome.rounds,
            aggregates: outcome.aggregates,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("results serialize");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let file: Self = serde_json::from_str(text).map_err(|e| CliError::Format(format!("results json: {e}")))?;
        if file.version != RESULTS_VERSION {
            return Err(CliError::Format(format!(
                "results version {} is not {RESULTS_VERSION}",
                file.version
            )));
        }
        Ok(file)
    }
}

const STAT_COLUMNS: [&str; 6] = ["acc_erased", "acc_retained", "acc_test", "js_div", "update_norm", "wall_time_seconds"];
const OPT_COLUMNS: [&str; 2] = ["mia_acc", "alpha"];

fn header() -> String {
    let mut cols = vec!["method".to_string(), "round".into(), "runs".into()];
    for c in STAT_COLUMNS.iter().chain(&OPT_COLUMNS) {
        cols.push(format!("{c}_mean"));
        cols.push(format!("{c}_std"));
    }
    cols.join(",")
}

fn stat_cells(s: Option<&Stat>) -> String {
    match s {
        Some(s) => format!("{},{}", s.mean, s.std),
        None => ",".into(),
    }
}

/// One row per method and round: mean and standard deviation across seeds.
pub fn aggregates_to_csv(aggs: &[Aggregate]) -> String {
    let mut out = header();
    out.push('\n');
    for a in aggs {
        let stats = [
            Some(&a.acc_erased),
            Some(&a.acc_retained),
            Some(&a.acc_test),
            Some(&a.js_div),
            Some(&a.update_norm),
            Some(&a.wall_time_seconds),
            a.mia_acc.as_ref(),
            a.alpha.as_ref(),
        ];
        let cells: Vec<String> = stats.iter().map(|s| stat_cells(*s)).collect();
        writeln!(out, "{},{},{},{}", a.method, a.round, a.runs, cells.join(",")).expect("string write");
    }
    out
}

/// Parses the CSV written by [`aggregates_to_csv`]. Optional columns count
/// as observed in every run when present.
pub fn aggregates_from_csv(text: &str) -> Result<Vec<Aggregate>, CliError> {
    let bad = |m: String| CliError::Format(format!("results csv: {m}"));
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let head = reader.headers().map_err(|e| bad(e.to_string()))?.iter().collect::<Vec<_>>().join(",");
    if head != header() {
        return Err(bad("unexpected header".into()));
    }
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let num = |k: usize| -> Result<f64, CliError> {
            rec[k].parse().map_err(|_| bad(format!("bad number {:?}", &rec[k])))
        };
        let runs: usize = rec[2].parse().map_err(|_| bad("bad run count".into()))?;
        let stat = |k: usize| -> Result<Option<Stat>, CliError> {
            if rec[k].is_empty() && rec[k + 1].is_empty() {
                return Ok(None);
            }
            Ok(Some(Stat {
                mean: num(k)?,
                std: num(k + 1)?,
                count: runs,
            }))
        };
        let need = |k: usize| stat(k)?.ok_or_else(|| bad(format!("missing value in column {k}")));
        out.push(Aggregate {
            method: rec[0].to_string(),
            round: rec[1].parse().map_err(|_| bad("bad round".into()))?,
            runs,
            acc_erased: need(3)?,
            acc_retained: need(5)?,
            acc_test: need(7)?,
            js_div: need(9)?,
            update_norm: need(11)?,
            wall_time_seconds: need(13)?,
            mia_acc: stat(15)?,
            alpha: stat(17)?,
        });
    }
    Ok(out)
}

pub fn runtime_to_csv(rows: &[RuntimeRow]) -> String {
    let mut out = String::from("method,runs,failures,seconds_mean,seconds_std\n");
    for r in rows {
        let (n, cells) = match &r.seconds {
            Some(s) => (s.count, format!("{},{}", s.mean, s.std)),
            None => (0, ",".into()),
        };
        writeln!(out, "{},{n},{},{cells}", r.method, r.failures).expect("string write");
    }
    out
}

pub fn runtime_table(rows: &[RuntimeRow]) -> String {
    let mut out = format!("{:<16} {:>14} {:>12} {:>5}\n", "method", "mean (s)", "std (s)", "runs");
    for r in rows {
        match &r.seconds {
            Some(s) => writeln!(out, "{:<16} {:>14.6} {:>12.6} {:>5}", r.method, s.mean, s.std, s.count),
            None => writeln!(out, "{:<16} {:>14} {:>12} {:>5}", r.method, "failed", "-", 0),
        }
        .expect("string write");
    }
    out
}
