//! CSV result files. Every file has a fixed header and column order, floats
//! use [`fmt_f64`], tasks/phases/rounds are 1-based, and every line ends in
//! `\n`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{compute_acc, compute_ft, fmt_f64, AccuracyMatrix, EvalMode};
use crate::error::{Error, Result};
use crate::fedcl::{ExperimentOutput, Method, RoundRecord, TipRecord};
use crate::subspace::CostLedger;

/// Results of one method, restricted to the requested evaluation modes.
#[derive(Debug, Clone)]
pub struct MethodResult {
    pub method: Method,
    pub accuracy: Vec<AccuracyMatrix>,
    pub tip: Option<TipRecord>,
    pub cost: CostLedger,
    pub rounds: Vec<RoundRecord>,
}

impl MethodResult {
    pub fn from_output(method: Method, out: &ExperimentOutput, modes: &[EvalMode]) -> Self {
        MethodResult {
            method,
            accuracy: out
                .accuracy
                .iter()
                .filter(|m| modes.contains(&m.mode))
                .cloned()
                .collect(),
            tip: out.tip.clone(),
            cost: out.cost.clone(),
            rounds: out.rounds.clone(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ResultBundle {
    pub methods: Vec<MethodResult>,
}

/// One row of `metrics.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub method: String,
    pub mode: String,
    /// 1-based number of tasks learned.
    pub task_phase: usize,
    pub acc: f64,
    pub ft: f64,
    /// Present only for methods that predict task identity.
    pub tip_accuracy: Option<f64>,
}

pub const METRICS_HEADER: &str = "method,mode,task_phase,acc,ft,tip_accuracy";

impl ResultBundle {
    pub fn metrics_rows(&self) -> Result<Vec<MetricsRow>> {
        let mut rows = Vec::new();
        for m in &self.methods {
            for acc in &m.accuracy {
                for phase in 1..=acc.completed_phases() {
                    rows.push(MetricsRow {
                        method: m.method.as_str().into(),
                        mode: acc.mode.as_str().into(),
                        task_phase: phase,
                        acc: compute_acc(acc, phase)?,
                        ft: compute_ft(acc, phase)?,
                        tip_accuracy: m
                            .tip
                            .as_ref()
                            .and_then(|t| t.per_phase_accuracy.get(phase - 1).copied()),
                    });
                }
            }
        }
        Ok(rows)
    }
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// Writes `metrics.csv`, `accuracy_matrix_<mode>.csv`, `cost.csv`,
/// `rounds.csv`, `votes.csv` and `confusion.csv` into `dir`.
pub fn emit_results(bundle: &ResultBundle, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut s = format!("{METRICS_HEADER}\n");
    for r in bundle.metrics_rows()? {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.method,
            r.mode,
            r.task_phase,
            fmt_f64(r.acc),
            fmt_f64(r.ft),
            opt(r.tip_accuracy)
        );
    }
    write(dir, "metrics.csv", &s)?;

    let mut modes: Vec<EvalMode> = bundle
        .methods
        .iter()
        .flat_map(|m| m.accuracy.iter().map(|a| a.mode))
        .collect();
    modes.sort_unstable();
    modes.dedup();
    for mode in modes {
        let mut s = String::from("method,task,phase,acc\n");
        for m in &bundle.methods {
            if let Some(acc) = m.accuracy.iter().find(|a| a.mode == mode) {
                for t in 0..acc.num_tasks() {
                    for i in t..acc.num_tasks() {
                        if let Some(v) = acc.get(t, i) {
                            let _ = writeln!(s, "{},{},{},{}", m.method.as_str(), t + 1, i + 1, fmt_f64(v));
                        }
                    }
                }
            }
        }
        write(dir, &format!("accuracy_matrix_{}.csv", mode.as_str()), &s)?;
    }

    let mut s = String::from("method,task,uploaded_basis_floats,reference_floats,stored_floats\n");
    for m in &bundle.methods {
        let c = &m.cost;
        for t in 0..c.num_tasks() {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                m.method.as_str(),
                t + 1,
                c.per_task_uploaded_basis_floats[t],
                c.per_task_reference_floats[t],
                c.per_task_stored_floats[t]
            );
        }
    }
    write(dir, "cost.csv", &s)?;

    let mut s = String::from("method,task,round,participants,mean_loss,checksum\n");
    for m in &bundle.methods {
        for r in &m.rounds {
            let participants: Vec<String> = r.participants.iter().map(|c| (c + 1).to_string()).collect();
            let _ = writeln!(
                s,
                "{},{},{},{},{},{:016x}",
                m.method.as_str(),
                r.task + 1,
                r.round + 1,
                participants.join(" "),
                fmt_f64(r.mean_loss),
                r.checksum
            );
        }
    }
    write(dir, "rounds.csv", &s)?;

    let mut votes = String::from("method,phase,sample_id,true_task,predicted_task,fallback,client_votes\n");
    let mut confusion = String::from("method,phase,true_task,predicted_task,count\n");
    for m in &bundle.methods {
        let Some(tip) = &m.tip else { continue };
        for v in &tip.votes {
            let cv: Vec<String> = v.client_votes.iter().map(|c| (c + 1).to_string()).collect();
            let _ = writeln!(
                votes,
                "{},{},{},{},{},{},{}",
                m.method.as_str(),
                v.phase + 1,
                v.sample_id,
                v.true_task + 1,
                v.predicted_task + 1,
                u8::from(v.fallback),
                cv.join(" ")
            );
        }
        for (phase, mat) in tip.confusion.iter().enumerate() {
            for (t, row) in mat.iter().enumerate() {
                for (p, &count) in row.iter().enumerate() {
                    let _ = writeln!(confusion, "{},{},{},{},{}", m.method.as_str(), phase + 1, t + 1, p + 1, count);
                }
            }
        }
    }
    write(dir, "votes.csv", &votes)?;
    write(dir, "confusion.csv", &confusion)?;
    Ok(())
}

fn field<'a>(rec: &'a csv::StringRecord, i: usize, path: &Path) -> Result<&'a str> {
    rec.get(i)
        .ok_or_else(|| Error::parse(path, format!("missing column {i} in {rec:?}")))
}

fn num<T: std::str::FromStr>(s: &str, path: &Path) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e| Error::parse(path, format!("{s:?}: {e}")))
}

/// Parses a `metrics.csv` written by [`emit_results`].
pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::parse(path, e))?;
    let header = rdr.headers().map_err(|e| Error::parse(path, e))?.clone();
    if header.iter().collect::<Vec<_>>().join(",") != METRICS_HEADER {
        return Err(Error::parse(path, format!("unexpected header {header:?}")));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::parse(path, e))?;
        let tip = field(&rec, 5, path)?;
        rows.push(MetricsRow {
            method: field(&rec, 0, path)?.to_string(),
            mode: field(&rec, 1, path)?.to_string(),
            task_phase: num(field(&rec, 2, path)?, path)?,
            acc: num(field(&rec, 3, path)?, path)?,
            ft: num(field(&rec, 4, path)?, path)?,
            tip_accuracy: if tip.is_empty() { None } else { Some(num(tip, path)?) },
        });
    }
    Ok(rows)
}
