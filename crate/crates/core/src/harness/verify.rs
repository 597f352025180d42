//! Re-checks the invariants of an emitted result directory.

use std::collections::BTreeMap;
use std::path::Path;

use super::{compute_acc, compute_ft, read_metrics, AccuracyMatrix, EvalMode};
use crate::error::{Error, Result};

/// `(method, phase) → (true task, predicted task) → count`.
type ConfusionCounts = BTreeMap<(String, usize), BTreeMap<(usize, usize), usize>>;

fn table(path: &Path) -> Result<Vec<csv::StringRecord>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::parse(path, e))?;
    rdr.records()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::parse(path, e))
}

fn get<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, path: &Path) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    let s = rec
        .get(i)
        .ok_or_else(|| Error::parse(path, format!("missing column {i}")))?;
    s.parse().map_err(|e| Error::parse(path, format!("{s:?}: {e}")))
}

/// Returns one message per violated invariant; an empty list means the
/// directory is consistent.
pub fn verify_results(dir: &Path) -> Result<Vec<String>> {
    let mut problems = Vec::new();
    let metrics = read_metrics(&dir.join("metrics.csv"))?;

    for r in &metrics {
        if !(0.0..=1.0).contains(&r.acc) {
            problems.push(format!("{}/{} phase {}: acc {} outside [0, 1]", r.method, r.mode, r.task_phase, r.acc));
        }
        if !(-1.0..=1.0).contains(&r.ft) {
            problems.push(format!("{}/{} phase {}: ft {} outside [-1, 1]", r.method, r.mode, r.task_phase, r.ft));
        }
    }

    // ACC/FT recomputed from the raw matrices must match bit for bit.
    for mode in EvalMode::ALL {
        let path = dir.join(format!("accuracy_matrix_{}.csv", mode.as_str()));
        if !path.exists() {
            continue;
        }
        let mut per_method: BTreeMap<String, Vec<(usize, usize, f64)>> = BTreeMap::new();
        for rec in table(&path)? {
            let method: String = get(&rec, 0, &path)?;
            per_method
                .entry(method)
                .or_default()
                .push((get(&rec, 1, &path)?, get(&rec, 2, &path)?, get(&rec, 3, &path)?));
        }
        for (method, entries) in per_method {
            let n = entries.iter().map(|e| e.1).max().unwrap_or(0);
            let mut m = AccuracyMatrix::new(n, mode);
            for &(t, i, v) in &entries {
                if t == 0 || i == 0 {
                    problems.push(format!("{}: task/phase must be 1-based", path.display()));
                    continue;
                }
                if let Err(e) = m.set(t - 1, i - 1, v) {
                    problems.push(format!("{method}/{}: {e}", mode.as_str()));
                }
            }
            for phase in 1..=m.completed_phases() {
                let row = metrics
                    .iter()
                    .find(|r| r.method == method && r.mode == mode.as_str() && r.task_phase == phase);
                let Some(row) = row else {
                    problems.push(format!("{method}/{} phase {phase} missing from metrics.csv", mode.as_str()));
                    continue;
                };
                let (acc, ft) = (compute_acc(&m, phase)?, compute_ft(&m, phase)?);
                if acc.to_bits() != row.acc.to_bits() || ft.to_bits() != row.ft.to_bits() {
                    problems.push(format!(
                        "{method}/{} phase {phase}: metrics ({}, {}) != recomputed ({acc}, {ft})",
                        mode.as_str(),
                        row.acc,
                        row.ft
                    ));
                }
            }
        }
    }

    // Confusion matrices: diagonal fraction is the reported TIP accuracy, row
    // sums are the per-task test counts, and votes.csv aggregates to them.
    let cpath = dir.join("confusion.csv");
    let mut confusion: ConfusionCounts = BTreeMap::new();
    for rec in table(&cpath)? {
        let key = (get::<String>(&rec, 0, &cpath)?, get::<usize>(&rec, 1, &cpath)?);
        confusion
            .entry(key)
            .or_default()
            .insert((get(&rec, 2, &cpath)?, get(&rec, 3, &cpath)?), get(&rec, 4, &cpath)?);
    }
    let mut test_counts: BTreeMap<(String, usize), usize> = BTreeMap::new();
    for ((method, phase), cells) in &confusion {
        let total: usize = cells.values().sum();
        let diag: usize = cells.iter().filter(|((t, p), _)| t == p).map(|(_, c)| c).sum();
        let frac = if total == 0 { 0.0 } else { diag as f64 / total as f64 };
        let reported = metrics
            .iter()
            .find(|r| &r.method == method && r.task_phase == *phase)
            .and_then(|r| r.tip_accuracy);
        match reported {
            Some(v) if v.to_bits() == frac.to_bits() => {}
            other => problems.push(format!(
                "{method} phase {phase}: confusion diagonal {frac} != reported TIP accuracy {other:?}"
            )),
        }
        let mut rows: BTreeMap<usize, usize> = BTreeMap::new();
        for ((t, _), c) in cells {
            *rows.entry(*t).or_default() += c;
        }
        for (t, sum) in rows {
            let known = test_counts.entry((method.clone(), t)).or_insert(sum);
            if *known != sum {
                problems.push(format!(
                    "{method}: task {t} has {sum} test samples at phase {phase}, {known} earlier"
                ));
            }
        }
    }
    let vpath = dir.join("votes.csv");
    let mut from_votes: ConfusionCounts = BTreeMap::new();
    for rec in table(&vpath)? {
        let key = (get::<String>(&rec, 0, &vpath)?, get::<usize>(&rec, 1, &vpath)?);
        *from_votes
            .entry(key)
            .or_default()
            .entry((get(&rec, 3, &vpath)?, get(&rec, 4, &vpath)?))
            .or_default() += 1;
    }
    let nonzero = |m: &ConfusionCounts| {
        m.iter()
            .map(|(k, cells)| (k.clone(), cells.iter().filter(|(_, &c)| c > 0).map(|(a, &b)| (*a, b)).collect::<Vec<_>>()))
            .collect::<BTreeMap<_, _>>()
    };
    if nonzero(&confusion) != nonzero(&from_votes) {
        problems.push("votes.csv does not aggregate to confusion.csv".into());
    }

    // Stored floats only grow.
    let spath = dir.join("cost.csv");
    let mut last: BTreeMap<String, usize> = BTreeMap::new();
    for rec in table(&spath)? {
        let method: String = get(&rec, 0, &spath)?;
        let stored: usize = get(&rec, 4, &spath)?;
        if let Some(prev) = last.insert(method.clone(), stored) {
            if stored < prev {
                problems.push(format!("{method}: stored floats fell from {prev} to {stored}"));
            }
        }
    }

    // Rounds count 1..E within each task.
    let rpath = dir.join("rounds.csv");
    let mut expected: BTreeMap<(String, usize), usize> = BTreeMap::new();
    for rec in table(&rpath)? {
        let key = (get::<String>(&rec, 0, &rpath)?, get::<usize>(&rec, 1, &rpath)?);
        let round: usize = get(&rec, 2, &rpath)?;
        let next = expected.entry(key.clone()).or_insert(1);
        if round != *next {
            problems.push(format!("{} task {}: round {round}, expected {next}", key.0, key.1));
        }
        *next = round + 1;
    }
    Ok(problems)
}
