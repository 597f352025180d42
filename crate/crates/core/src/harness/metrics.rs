//! Average accuracy and forgetting over a per-phase accuracy record.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// Ground-truth task routes each sample to its task's head rows.
    TaskAware,
    /// Argmax over every head row seen so far.
    AgnosticNoTip,
    /// Predicted task routes the sample to that task's head rows.
    AgnosticTip,
}

impl EvalMode {
    pub const ALL: [EvalMode; 3] = [EvalMode::TaskAware, EvalMode::AgnosticNoTip, EvalMode::AgnosticTip];

    pub fn as_str(self) -> &'static str {
        match self {
            EvalMode::TaskAware => "task_aware",
            EvalMode::AgnosticNoTip => "agnostic_no_tip",
            EvalMode::AgnosticTip => "agnostic_tip",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.as_str() == s)
    }
}

/// `acc[t][i]`: accuracy on task `t` after training tasks `0..=i` (0-based),
/// defined only for `i ≥ t`.
#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyMatrix {
    pub mode: EvalMode,
    entries: Vec<Vec<Option<f64>>>,
}

impl AccuracyMatrix {
    pub fn new(num_tasks: usize, mode: EvalMode) -> Self {
        AccuracyMatrix {
            mode,
            entries: vec![vec![None; num_tasks]; num_tasks],
        }
    }

    /// Builds a matrix from `rows[t][i]`, keeping only the `i ≥ t` entries.
    pub fn from_rows(mode: EvalMode, rows: &[Vec<f64>]) -> Result<Self> {
        let mut m = AccuracyMatrix::new(rows.len(), mode);
        for (t, row) in rows.iter().enumerate() {
            for (i, &v) in row.iter().enumerate().skip(t) {
                m.set(t, i, v)?;
            }
        }
        Ok(m)
    }

    pub fn num_tasks(&self) -> usize {
        self.entries.len()
    }

    pub fn set(&mut self, task: usize, phase: usize, acc: f64) -> Result<()> {
        let n = self.num_tasks();
        if task >= n || phase >= n || phase < task {
            return Err(Error::State(format!(
                "accuracy entry ({task}, {phase}) outside lower-triangular {n}×{n} record"
            )));
        }
        if !(0.0..=1.0).contains(&acc) {
            return Err(Error::Input(format!("accuracy {acc} outside [0, 1]")));
        }
        self.entries[task][phase] = Some(acc);
        Ok(())
    }

    pub fn get(&self, task: usize, phase: usize) -> Option<f64> {
        self.entries.get(task)?.get(phase).copied().flatten()
    }

    fn require(&self, task: usize, phase: usize) -> Result<f64> {
        self.get(task, phase).ok_or_else(|| {
            Error::State(format!(
                "accuracy of task {} after phase {} not recorded",
                task + 1,
                phase + 1
            ))
        })
    }

    /// Number of leading phases whose column is complete.
    pub fn completed_phases(&self) -> usize {
        (0..self.num_tasks())
            .take_while(|&i| (0..=i).all(|t| self.get(t, i).is_some()))
            .count()
    }
}

/// `(1/T) Σ_t acc[t][T]` after `T ≥ 1` tasks.
pub fn compute_acc(m: &AccuracyMatrix, tasks: usize) -> Result<f64> {
    if tasks == 0 || tasks > m.num_tasks() {
        return Err(Error::State(format!(
            "ACC after {tasks} tasks on a {}-task record",
            m.num_tasks()
        )));
    }
    let last = tasks - 1;
    let mut sum = 0.0;
    for t in 0..tasks {
        sum += m.require(t, last)?;
    }
    Ok(sum / tasks as f64)
}

/// `(1/T) Σ_{t<T} (max_{i<T} acc[t][i] − acc[t][T])`, zero for a single task.
///
/// The prefactor is `1/T` although only `T − 1` tasks contribute; the common
/// `1/(T−1)` normalisation is not applied. Negative values (backward transfer)
/// are kept.
pub fn compute_ft(m: &AccuracyMatrix, tasks: usize) -> Result<f64> {
    if tasks == 0 || tasks > m.num_tasks() {
        return Err(Error::State(format!(
            "FT after {tasks} tasks on a {}-task record",
            m.num_tasks()
        )));
    }
    for i in 0..tasks {
        for t in 0..=i {
            m.require(t, i)?;
        }
    }
    if tasks == 1 {
        return Ok(0.0);
    }
    let last = tasks - 1;
    let mut sum = 0.0;
    for t in 0..last {
        let best = (t..last)
            .map(|i| m.require(t, i))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max);
        sum += best - m.require(t, last)?;
    }
    Ok(sum / tasks as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_example() {
        let m = AccuracyMatrix::from_rows(EvalMode::TaskAware, &[vec![0.9, 0.8], vec![0.0, 0.7]]).unwrap();
        assert_eq!(compute_acc(&m, 2).unwrap(), 0.75);
        // 0.9 − 0.8 is not exactly 0.1 in binary floating point
        assert!((compute_ft(&m, 2).unwrap() - 0.05).abs() <= 1e-15);
    }

    #[test]
    fn single_task() {
        let m = AccuracyMatrix::from_rows(EvalMode::TaskAware, &[vec![0.37]]).unwrap();
        assert_eq!(compute_acc(&m, 1).unwrap(), 0.37);
        assert_eq!(compute_ft(&m, 1).unwrap(), 0.0);
    }

    #[test]
    fn perfect_and_constant() {
        let ones = vec![vec![1.0; 3]; 3];
        let m = AccuracyMatrix::from_rows(EvalMode::TaskAware, &ones).unwrap();
        assert_eq!(compute_acc(&m, 3).unwrap(), 1.0);
        assert_eq!(compute_ft(&m, 3).unwrap(), 0.0);
    }

    #[test]
    fn negative_forgetting_kept() {
        let m = AccuracyMatrix::from_rows(EvalMode::TaskAware, &[vec![0.6, 0.8], vec![0.0, 0.5]]).unwrap();
        assert!(compute_ft(&m, 2).unwrap() < 0.0);
    }

    #[test]
    fn incomplete_is_state_error() {
        let mut m = AccuracyMatrix::new(2, EvalMode::TaskAware);
        m.set(0, 0, 0.5).unwrap();
        assert!(matches!(compute_acc(&m, 2), Err(Error::State(_))));
        assert!(matches!(compute_ft(&m, 2), Err(Error::State(_))));
        assert_eq!(m.completed_phases(), 1);
    }

    #[test]
    fn upper_triangle_rejected() {
        let mut m = AccuracyMatrix::new(2, EvalMode::TaskAware);
        assert!(m.set(1, 0, 0.5).is_err());
        assert!(m.set(0, 1, 1.5).is_err());
    }
}
