//! Directory export of task streams:
//!
//! ```text
//! <dir>/manifest.csv             regime,num_tasks
//! <dir>/task_<t>/inputs.csv      one sample per row, d₀ columns
//! <dir>/task_<t>/labels.csv      one label per row
//! <dir>/task_<t>/split.csv       index,split (train rows first, then test)
//! ```
//!
//! Floats are written with 17 significant digits so reloading is bit-exact.

use std::fs;
use std::path::Path;

use super::{Regime, TaskDataset, TaskStream};
use crate::error::{Error, Result};
use crate::harness::fmt_f64;
use crate::linalg::DenseMatrix;

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn export_stream(stream: &TaskStream, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write(
        &dir.join("manifest.csv"),
        &format!("regime,num_tasks\n{},{}\n", stream.regime.as_str(), stream.num_tasks()),
    )?;
    for task in &stream.tasks {
        let tdir = dir.join(format!("task_{}", task.task_id + 1));
        fs::create_dir_all(&tdir).map_err(|e| Error::io(&tdir, e))?;

        let d = task.input_dim();
        let mut inputs = (0..d).map(|i| format!("x{i}")).collect::<Vec<_>>().join(",");
        inputs.push('\n');
        for j in 0..task.len() {
            let row: Vec<String> = (0..d).map(|i| fmt_f64(task.inputs[(i, j)])).collect();
            inputs.push_str(&row.join(","));
            inputs.push('\n');
        }
        write(&tdir.join("inputs.csv"), &inputs)?;

        let mut labels = String::from("label\n");
        for l in &task.labels {
            labels.push_str(&format!("{l}\n"));
        }
        write(&tdir.join("labels.csv"), &labels)?;

        let mut split = String::from("index,split\n");
        for i in &task.train {
            split.push_str(&format!("{i},train\n"));
        }
        for i in &task.test {
            split.push_str(&format!("{i},test\n"));
        }
        write(&tdir.join("split.csv"), &split)?;
    }
    Ok(())
}

fn records(path: &Path) -> Result<Vec<csv::StringRecord>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::parse(path, e))?;
    rdr.records()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::parse(path, e))
}

fn parse<T: std::str::FromStr>(path: &Path, s: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    s.trim()
        .parse()
        .map_err(|e| Error::parse(path, format!("{s:?}: {e}")))
}

pub fn load_stream(dir: &Path) -> Result<TaskStream> {
    let manifest_path = dir.join("manifest.csv");
    let manifest = records(&manifest_path)?;
    let row = manifest
        .first()
        .ok_or_else(|| Error::parse(&manifest_path, "empty manifest"))?;
    let regime = match row.get(0) {
        Some("class_incremental") => Regime::ClassIncremental,
        Some("domain_incremental") => Regime::DomainIncremental,
        other => return Err(Error::parse(&manifest_path, format!("unknown regime {other:?}"))),
    };
    let num_tasks: usize = parse(&manifest_path, row.get(1).unwrap_or(""))?;

    let mut tasks = Vec::with_capacity(num_tasks);
    for t in 0..num_tasks {
        let tdir = dir.join(format!("task_{}", t + 1));
        let ipath = tdir.join("inputs.csv");
        let rows = records(&ipath)?;
        let n = rows.len();
        let d = rows.first().map_or(0, |r| r.len());
        let mut inputs = DenseMatrix::zeros(d, n);
        for (j, r) in rows.iter().enumerate() {
            if r.len() != d {
                return Err(Error::parse(&ipath, format!("row {j} has {} columns", r.len())));
            }
            for (i, v) in r.iter().enumerate() {
                inputs[(i, j)] = parse(&ipath, v)?;
            }
        }
        let lpath = tdir.join("labels.csv");
        let labels: Vec<usize> = records(&lpath)?
            .iter()
            .map(|r| parse(&lpath, r.get(0).unwrap_or("")))
            .collect::<Result<_>>()?;
        if labels.len() != n {
            return Err(Error::parse(&lpath, format!("{} labels for {n} samples", labels.len())));
        }
        let spath = tdir.join("split.csv");
        let mut train = Vec::new();
        let mut test = Vec::new();
        for r in records(&spath)? {
            let i: usize = parse(&spath, r.get(0).unwrap_or(""))?;
            match r.get(1) {
                Some("train") => train.push(i),
                Some("test") => test.push(i),
                other => return Err(Error::parse(&spath, format!("unknown split {other:?}"))),
            }
        }
        let mut classes = labels.clone();
        classes.sort_unstable();
        classes.dedup();
        tasks.push(TaskDataset {
            task_id: t,
            inputs,
            labels,
            classes,
            train,
            test,
        });
    }
    Ok(TaskStream { tasks, regime })
}
