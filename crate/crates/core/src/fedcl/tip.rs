//! Task-identity prediction from subspace relevance.
//!
//! A reference vector `ω^(τ)` records, for one client and task `τ`, how strongly
//! that task's final-layer activations project onto every task's final-layer
//! basis. At inference the same profile (the relevance vector) is computed for
//! a test input, each client votes for the task whose reference is most
//! cosine-similar, and the plurality wins.

use super::Method;
use crate::error::{Error, Result};
use crate::linalg::{dot, norm2, DenseMatrix};
use crate::model::ModelParams;
use crate::subspace::{ProjectionMemory, SubspaceBasis};

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceVector {
    pub client_id: usize,
    pub task_id: usize,
    /// One non-negative entry per task seen so far.
    pub values: Vec<f64>,
}

/// `store[k]` holds client `k`'s reference vectors, one per completed task.
pub type ReferenceStore = Vec<Vec<ReferenceVector>>;

#[derive(Debug, Clone, PartialEq)]
pub struct TaskVote {
    pub client_id: usize,
    /// Cosine similarity against each of the client's references.
    pub similarities: Vec<f64>,
    pub vote: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskPrediction {
    pub task: usize,
    pub votes: Vec<TaskVote>,
    /// The relevance vector had zero norm; the most recent task was returned.
    pub fallback: bool,
}

/// `‖U Uᵀ a‖₂` for each column `a`, computed as `‖Uᵀ a‖₂` (equal for
/// orthonormal `U`).
fn projected_norms(basis: &SubspaceBasis, acts: &DenseMatrix) -> Result<Vec<f64>> {
    if basis.is_empty() {
        return Ok(vec![0.0; acts.cols()]);
    }
    let coeffs = basis.basis.t_matmul(acts)?;
    Ok(coeffs.transpose().as_slice().chunks(coeffs.rows().max(1)).map(norm2).collect())
}

/// Relevance vectors for every column of `features`: row `j` of the result is
/// `[‖U_0ᵀ a_j‖, …, ‖U_{T−1}ᵀ a_j‖]`.
pub fn relevance_vector(final_bases: &[SubspaceBasis], features: &DenseMatrix) -> Result<Vec<Vec<f64>>> {
    let per_task: Vec<Vec<f64>> = final_bases
        .iter()
        .map(|b| projected_norms(b, features))
        .collect::<Result<_>>()?;
    Ok((0..features.cols())
        .map(|j| per_task.iter().map(|v| v[j]).collect())
        .collect())
}

/// Appends this client's reference for `task` and zero-extends the older ones.
///
/// Entry `j` of the new vector is the mean over activation columns of
/// `‖U_j U_jᵀ a‖₂`. `final_bases` must cover tasks `0..=task`.
pub fn update_references(
    client_id: usize,
    current_acts: &DenseMatrix,
    old_refs: &[ReferenceVector],
    final_bases: &[SubspaceBasis],
    task: usize,
) -> Result<Vec<ReferenceVector>> {
    if final_bases.len() != task + 1 {
        return Err(Error::State(format!(
            "update_references for task {task} needs {} final bases, got {}",
            task + 1,
            final_bases.len()
        )));
    }
    let n = current_acts.cols().max(1) as f64;
    let values = final_bases
        .iter()
        .map(|b| projected_norms(b, current_acts).map(|v| v.iter().sum::<f64>() / n))
        .collect::<Result<Vec<f64>>>()?;
    let mut refs: Vec<ReferenceVector> = old_refs
        .iter()
        .map(|r| {
            let mut r = r.clone();
            r.values.resize(task + 1, 0.0);
            r
        })
        .collect();
    refs.push(ReferenceVector {
        client_id,
        task_id: task,
        values,
    });
    Ok(refs)
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = norm2(a);
    let nb = norm2(b);
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot(a, b) / (na * nb)
}

/// First index of the maximum; NaN never wins.
fn argmax_lowest(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Votes of the given clients for one relevance vector: each voter picks the
/// task whose reference is most cosine-similar, then the plurality wins (ties
/// to the lower task). An all-zero relevance vector falls back to the latest
/// task.
pub fn vote(relevance: &[f64], refs: &ReferenceStore, voters: &[usize]) -> TaskPrediction {
    let num_tasks = relevance.len();
    if norm2(relevance) == 0.0 || num_tasks == 0 {
        return TaskPrediction {
            task: num_tasks.saturating_sub(1),
            votes: Vec::new(),
            fallback: true,
        };
    }
    let votes: Vec<TaskVote> = voters
        .iter()
        .map(|&k| {
            let similarities: Vec<f64> = refs[k]
                .iter()
                .map(|r| cosine(relevance, &r.values))
                .collect();
            TaskVote {
                client_id: k,
                vote: argmax_lowest(&similarities),
                similarities,
            }
        })
        .collect();
    let mut tally = vec![0usize; num_tasks];
    for v in &votes {
        tally[v.vote] += 1;
    }
    let task = argmax_lowest(&tally.iter().map(|&c| c as f64).collect::<Vec<_>>());
    TaskPrediction {
        task,
        votes,
        fallback: false,
    }
}

fn check_refs(memory: &ProjectionMemory, refs: &ReferenceStore) -> Result<usize> {
    let t = memory.per_task_final.len();
    if t == 0 {
        return Err(Error::State("task prediction needs at least one completed task".into()));
    }
    for client in refs {
        if client.len() != t || client.iter().any(|r| r.values.len() != t) {
            return Err(Error::State(format!(
                "reference store not aligned with {t} completed tasks"
            )));
        }
    }
    Ok(t)
}

/// Predicts the task of every column of `inputs`, using the listed voters.
pub fn predict_tasks(
    inputs: &DenseMatrix,
    global_params: &ModelParams,
    memory: &ProjectionMemory,
    refs: &ReferenceStore,
    voters: &[usize],
) -> Result<Vec<TaskPrediction>> {
    check_refs(memory, refs)?;
    let features = global_params.features(inputs)?;
    Ok(relevance_vector(&memory.per_task_final, &features)?
        .iter()
        .map(|rel| vote(rel, refs, voters))
        .collect())
}

/// Predicts the task of a single `d₀ × 1` input with every client voting.
pub fn predict_task(
    test_input: &DenseMatrix,
    global_params: &ModelParams,
    memory: &ProjectionMemory,
    refs: &ReferenceStore,
) -> Result<TaskPrediction> {
    if test_input.cols() != 1 {
        return Err(Error::Input(format!(
            "predict_task takes one sample, got {} columns",
            test_input.cols()
        )));
    }
    let voters: Vec<usize> = (0..refs.len()).collect();
    Ok(predict_tasks(test_input, global_params, memory, refs, &voters)?.remove(0))
}

impl Method {
    pub fn uses_tip(self) -> bool {
        matches!(self, Method::Fedprotip)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn basis(cols: &[Vec<f64>]) -> SubspaceBasis {
        SubspaceBasis::new(0, DenseMatrix::from_columns(cols[0].len(), cols)).unwrap()
    }

    fn store(per_client: &[&[&[f64]]]) -> ReferenceStore {
        per_client
            .iter()
            .enumerate()
            .map(|(k, refs)| {
                refs.iter()
                    .enumerate()
                    .map(|(t, v)| ReferenceVector {
                        client_id: k,
                        task_id: t,
                        values: v.to_vec(),
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn contained_unit_activations_give_unit_reference() {
        let u = basis(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let acts = DenseMatrix::from_columns(3, &[vec![1.0, 0.0, 0.0], vec![s, s, 0.0]]);
        let refs = update_references(0, &acts, &[], &[u], 0).unwrap();
        assert_eq!(refs.len(), 1);
        assert!((refs[0].values[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn orthogonal_activations_give_zero_entry() {
        let u1 = basis(&[vec![1.0, 0.0, 0.0]]);
        let u2 = basis(&[vec![0.0, 1.0, 0.0]]);
        let acts = DenseMatrix::from_columns(3, &[vec![3.0, 0.0, 4.0]]);
        let old = update_references(0, &acts, &[], std::slice::from_ref(&u1), 0).unwrap();
        let refs = update_references(0, &acts, &old, &[u1, u2], 1).unwrap();
        assert_eq!(refs[1].values, vec![3.0, 0.0]);
        // zero padding of the older vector
        assert_eq!(refs[0].values, vec![3.0, 0.0]);
        assert_eq!(refs[0].task_id, 0);
    }

    #[test]
    fn update_needs_all_bases() {
        let u1 = basis(&[vec![1.0, 0.0]]);
        let acts = DenseMatrix::zeros(2, 1);
        assert!(update_references(0, &acts, &[], &[u1], 1).is_err());
    }

    #[test]
    fn single_task_always_predicted() {
        let refs = store(&[&[&[0.7]], &[&[0.1]]]);
        let p = vote(&[3.0], &refs, &[0, 1]);
        assert_eq!(p.task, 0);
        assert!(!p.fallback);
    }

    #[test]
    fn parallel_relevance_has_unit_similarity() {
        let r2 = [0.2, 0.9];
        let refs = store(&[&[&[1.0, 0.0], &r2], &[&[0.8, 0.0], &r2]]);
        let p = vote(&[0.4, 1.8], &refs, &[0, 1]);
        assert_eq!(p.task, 1);
        for v in &p.votes {
            assert!((v.similarities[1] - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn plurality_and_ties() {
        // clients 0 and 1 vote task 0, client 2 votes task 1
        let refs = store(&[
            &[&[1.0, 0.0], &[0.0, 1.0]],
            &[&[1.0, 0.0], &[0.0, 1.0]],
            &[&[0.0, 1.0], &[1.0, 0.0]],
        ]);
        let p = vote(&[1.0, 0.1], &refs, &[0, 1, 2]);
        assert_eq!(p.votes.iter().map(|v| v.vote).collect::<Vec<_>>(), vec![0, 0, 1]);
        assert_eq!(p.task, 0);
        // 1-1 tie goes to the lower task
        let p = vote(&[1.0, 0.1], &refs, &[0, 2]);
        assert_eq!(p.task, 0);
        // equal similarity inside one client goes to the lower task
        let refs = store(&[&[&[1.0, 0.0], &[1.0, 0.0]]]);
        assert_eq!(vote(&[1.0, 1.0], &refs, &[0]).votes[0].vote, 0);
    }

    #[test]
    fn zero_relevance_falls_back_to_latest() {
        let refs = store(&[&[&[1.0, 0.0, 0.0], &[0.5, 0.5, 0.0], &[0.1, 0.1, 1.0]]]);
        let p = vote(&[0.0, 0.0, 0.0], &refs, &[0]);
        assert!(p.fallback);
        assert_eq!(p.task, 2);
    }
}
