use super::ClientExtraction;
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::model::ModelParams;
use crate::subspace::{merge_into_global, ProjectionMemory, SubspaceBasis};

/// Elementwise convex combination `Σ p_k W_k`.
///
/// Accumulated as `W_1 + Σ_{k>1} p_k (W_k − W_1)` in client order: equal in
/// exact arithmetic, but blocks that no client changed come back bit-for-bit
/// instead of picking up rounding from `Σ p_k ≠ 1`.
pub fn server_aggregate(client_params: &[ModelParams], weights: &[f64]) -> Result<ModelParams> {
    if client_params.is_empty() || client_params.len() != weights.len() {
        return Err(Error::Contract {
            op: "server_aggregate",
            detail: format!(
                "{} client models with {} weights",
                client_params.len(),
                weights.len()
            ),
        });
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > 1e-12 || weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::Contract {
            op: "server_aggregate",
            detail: format!("weights must be non-negative and sum to 1 (sum = {sum:.17})"),
        });
    }
    let first = &client_params[0];
    let same_shape = |a: &ModelParams| {
        a.head.shape() == first.head.shape()
            && a.head_task_offsets == first.head_task_offsets
            && a.hidden_weights.len() == first.hidden_weights.len()
            && a
                .hidden_weights
                .iter()
                .zip(&first.hidden_weights)
                .all(|(x, y)| x.shape() == y.shape())
    };
    if !client_params.iter().all(same_shape) {
        return Err(Error::dim("server_aggregate", "identical model shapes", "mismatched client models"));
    }

    let combine = |pick: &dyn Fn(&ModelParams) -> &DenseMatrix| -> DenseMatrix {
        let anchor = pick(first);
        let mut offset = DenseMatrix::zeros(anchor.rows(), anchor.cols());
        for (p, &w) in client_params.iter().zip(weights).skip(1) {
            for ((o, v), a) in offset.as_mut_slice().iter_mut().zip(pick(p).as_slice()).zip(anchor.as_slice()) {
                *o += w * (v - a);
            }
        }
        let mut out = anchor.clone();
        for (o, d) in out.as_mut_slice().iter_mut().zip(offset.as_slice()) {
            *o += d;
        }
        out
    };
    let hidden_weights = (0..first.hidden_weights.len())
        .map(|l| combine(&|p: &ModelParams| &p.hidden_weights[l]))
        .collect();
    let head = combine(&|p: &ModelParams| &p.head);
    Ok(ModelParams {
        activation: first.activation,
        hidden_weights,
        head,
        head_task_offsets: first.head_task_offsets.clone(),
    })
}

/// Merges every layer's client bases (ascending client id) into the global
/// memory and records the final-layer directions new to this task.
pub fn end_of_task_merge(
    memory: &ProjectionMemory,
    extractions: &[ClientExtraction],
    drop_tol: f64,
) -> Result<ProjectionMemory> {
    let mut next = memory.clone();
    let final_layer = memory.final_layer();
    let mut new_final = SubspaceBasis::empty(final_layer, memory.merged[final_layer].dim());
    for l in 0..memory.num_layers() {
        let client_bases: Vec<SubspaceBasis> =
            extractions.iter().map(|e| e.bases[l].clone()).collect();
        let old_rank = memory.merged[l].rank();
        next.merged[l] = merge_into_global(&memory.merged[l], &client_bases, drop_tol)?;
        if l == final_layer {
            let added: Vec<usize> = (old_rank..next.merged[l].rank()).collect();
            new_final.basis = next.merged[l].basis.select_columns(&added);
        }
    }
    next.per_task_final.push(new_final);
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Activation, ModelSpec};

    fn scalar_model(w: f64) -> ModelParams {
        let spec = ModelSpec {
            layer_dims: vec![1, 1],
            activation: Activation::Relu,
            freeze_first_n_layers: 0,
        };
        let mut p = ModelParams::init(&spec, 0).unwrap().expand_head(1, 0).unwrap();
        p.hidden_weights[0] = DenseMatrix::from_rows(&[vec![w, w]]);
        p.head = DenseMatrix::from_rows(&[vec![w]]);
        p
    }

    #[test]
    fn midpoint() {
        let a = scalar_model(0.0);
        let b = scalar_model(2.0);
        let m = server_aggregate(&[a, b], &[0.5, 0.5]).unwrap();
        assert_eq!(m.hidden_weights[0].as_slice(), &[1.0, 1.0]);
        assert_eq!(m.head.as_slice(), &[1.0]);
    }

    #[test]
    fn weighted_hand_case() {
        let m = server_aggregate(&[scalar_model(4.0), scalar_model(0.0)], &[0.25, 0.75]).unwrap();
        assert_eq!(m.head.as_slice(), &[1.0]);
    }

    #[test]
    fn single_client_identity() {
        let a = scalar_model(0.37);
        let m = server_aggregate(std::slice::from_ref(&a), &[1.0]).unwrap();
        assert_eq!(m, a);
    }

    #[test]
    fn weight_sum_violation() {
        let a = scalar_model(1.0);
        let err = server_aggregate(&[a.clone(), a], &[0.5, 0.6]).unwrap_err();
        assert!(matches!(err, Error::Contract { .. }));
    }
}
