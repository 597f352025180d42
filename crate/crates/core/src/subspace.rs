//! Task-subspace memory.
//!
//! After each task, clients compress the activations entering every layer into
//! a few orthonormal "core" directions; the server merges them into one global
//! basis per layer. Later tasks train only in the orthogonal complement of
//! those bases. The final feature layer additionally keeps one basis per task,
//! which drives task-identity prediction.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fedcl::ReferenceVector;
use crate::linalg::{
    exact_svd, norm2, orthogonalize_against, orthonormality_error, orthonormalize_columns, project_onto_complement,
    sketch_svd, DenseMatrix, RandomizedSvdConfig, ORTHONORMAL_TOL,
};

/// Orthonormal basis (`d_l × r_l`) for the input space of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceBasis {
    pub layer_index: usize,
    pub basis: DenseMatrix,
}

impl SubspaceBasis {
    pub fn empty(layer_index: usize, dim: usize) -> Self {
        SubspaceBasis {
            layer_index,
            basis: DenseMatrix::zeros(dim, 0),
        }
    }

    /// Wraps `basis`, checking orthonormality.
    pub fn new(layer_index: usize, basis: DenseMatrix) -> Result<Self> {
        let err = orthonormality_error(&basis);
        if err > ORTHONORMAL_TOL {
            return Err(Error::Contract {
                op: "SubspaceBasis::new",
                detail: format!("columns not orthonormal (error {err:.3e})"),
            });
        }
        Ok(SubspaceBasis { layer_index, basis })
    }

    pub fn dim(&self) -> usize {
        self.basis.rows()
    }

    pub fn rank(&self) -> usize {
        self.basis.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.rank() == 0
    }

    /// Number of floats needed to ship or store the basis.
    pub fn float_count(&self) -> usize {
        self.dim() * self.rank()
    }
}

/// How the cumulative-spectrum threshold is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EnergyMode {
    /// Fraction of `Σσᵢ`.
    #[default]
    SumFraction,
    /// Fraction of `Σσᵢ²` (Frobenius energy).
    SquaredSumFraction,
}

/// Settings for core-basis extraction at the end of each task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractionConfig {
    /// One threshold per extracted layer (hidden layers, then the final
    /// feature layer). A single value applies to every layer.
    #[serde(default = "default_epsilon")]
    pub epsilon_per_layer: Vec<f64>,
    #[serde(default)]
    pub energy_mode: EnergyMode,
    /// Activations collected per client (`m`).
    #[serde(default = "default_m")]
    pub sample_count_m: usize,
    /// Activations kept after random subsampling (`m^s`).
    #[serde(default = "default_ms")]
    pub subsample_count_ms: usize,
    /// Upper bound on the rank resolved by the SVD; `None` resolves the full spectrum.
    #[serde(default)]
    pub rank_budget: Option<usize>,
    #[serde(default = "default_oversampling")]
    pub oversampling: usize,
    #[serde(default = "default_power_iterations")]
    pub power_iterations: usize,
    /// Residual norm below which a merged column counts as redundant.
    #[serde(default = "default_drop_tol")]
    pub merge_drop_tol: f64,
}

fn default_epsilon() -> Vec<f64> {
    vec![0.7]
}
fn default_m() -> usize {
    125
}
fn default_ms() -> usize {
    100
}
fn default_oversampling() -> usize {
    10
}
fn default_power_iterations() -> usize {
    2
}
fn default_drop_tol() -> f64 {
    crate::linalg::DEFAULT_DROP_TOL
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        ExtractionConfig {
            epsilon_per_layer: default_epsilon(),
            energy_mode: EnergyMode::SumFraction,
            sample_count_m: default_m(),
            subsample_count_ms: default_ms(),
            rank_budget: None,
            oversampling: default_oversampling(),
            power_iterations: default_power_iterations(),
            merge_drop_tol: default_drop_tol(),
        }
    }
}

impl ExtractionConfig {
    pub fn epsilon_for(&self, layer: usize) -> f64 {
        match self.epsilon_per_layer.len() {
            1 => self.epsilon_per_layer[0],
            _ => self.epsilon_per_layer[layer],
        }
    }

    pub fn validate(&self, extracted_layers: usize) -> Result<()> {
        let n = self.epsilon_per_layer.len();
        if n != 1 && n != extracted_layers {
            return Err(Error::Config(format!(
                "epsilon_per_layer has {n} entries; expected 1 or {extracted_layers}"
            )));
        }
        if let Some(e) = self
            .epsilon_per_layer
            .iter()
            .find(|e| !(**e > 0.0 && **e <= 1.0))
        {
            return Err(Error::Config(format!("epsilon {e} outside (0, 1]")));
        }
        if self.subsample_count_ms > self.sample_count_m || self.subsample_count_ms == 0 {
            return Err(Error::Config(format!(
                "subsample_count_ms ({}) must be in 1..=sample_count_m ({})",
                self.subsample_count_ms, self.sample_count_m
            )));
        }
        if self.rank_budget == Some(0) {
            return Err(Error::Config("rank_budget must be at least 1".into()));
        }
        Ok(())
    }

    /// SVD settings for a given layer and stream seed.
    pub fn svd_config(&self, seed: u64) -> RandomizedSvdConfig {
        RandomizedSvdConfig {
            target_rank: self.rank_budget.unwrap_or(usize::MAX),
            oversampling: self.oversampling,
            power_iterations: self.power_iterations,
            seed,
        }
    }
}

/// Global basis per extracted layer plus the unmerged per-task bases of the
/// final feature layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMemory {
    pub merged: Vec<SubspaceBasis>,
    pub per_task_final: Vec<SubspaceBasis>,
}

impl ProjectionMemory {
    /// Empty memory for layers with the given input dimensions.
    pub fn new(layer_input_dims: &[usize]) -> Self {
        ProjectionMemory {
            merged: layer_input_dims
                .iter()
                .enumerate()
                .map(|(l, &d)| SubspaceBasis::empty(l, d))
                .collect(),
            per_task_final: Vec::new(),
        }
    }

    pub fn num_layers(&self) -> usize {
        self.merged.len()
    }

    pub fn final_layer(&self) -> usize {
        self.merged.len() - 1
    }

    pub fn merged_ranks(&self) -> Vec<usize> {
        self.merged.iter().map(SubspaceBasis::rank).collect()
    }

    pub fn stored_floats(&self) -> usize {
        self.merged.iter().map(SubspaceBasis::float_count).sum::<usize>()
            + self
                .per_task_final
                .iter()
                .map(SubspaceBasis::float_count)
                .sum::<usize>()
    }
}

/// `a − Φ(Φᵀa)`; on an empty memory the activations come back unchanged.
pub fn subtract_known_subspace(
    activations: &DenseMatrix,
    merged: &SubspaceBasis,
) -> Result<DenseMatrix> {
    project_onto_complement(activations, &merged.basis)
}

/// Smallest `r` whose leading singular values reach `epsilon` of the total mass.
/// Values below `1e-12 · σ_max` are treated as zero.
pub(crate) fn threshold_rank(s: &[f64], total_mass: f64, epsilon: f64, mode: EnergyMode) -> usize {
    let s_max = s.first().copied().unwrap_or(0.0);
    if s_max <= 0.0 || total_mass <= 0.0 {
        return 0;
    }
    let cutoff = s_max * 1e-12;
    let target = epsilon * total_mass;
    let mut cum = 0.0;
    for (i, &sigma) in s.iter().enumerate() {
        if sigma <= cutoff {
            return i;
        }
        cum += match mode {
            EnergyMode::SumFraction => sigma,
            EnergyMode::SquaredSumFraction => sigma * sigma,
        };
        if cum >= target {
            return i + 1;
        }
    }
    s.iter().take_while(|&&v| v > cutoff).count()
}

/// Thresholded core basis of (already complement-projected) activations.
///
/// When the requested sketch covers the smaller matrix dimension the SVD is
/// exact; otherwise a randomized SVD resolves `rank_budget` directions. In
/// squared mode the total energy is the exact Frobenius norm; in sum mode it is
/// the sum of the resolved singular values.
pub fn extract_core_bases(
    layer_index: usize,
    projected_acts: &DenseMatrix,
    epsilon: f64,
    mode: EnergyMode,
    svd_cfg: &RandomizedSvdConfig,
) -> Result<SubspaceBasis> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::Contract {
            op: "extract_core_bases",
            detail: format!("epsilon {epsilon} outside (0, 1]"),
        });
    }
    let d = projected_acts.rows();
    if projected_acts.cols() == 0 || d == 0 {
        return Ok(SubspaceBasis::empty(layer_index, d));
    }
    let min_dim = d.min(projected_acts.cols());
    let target = svd_cfg.target_rank.min(min_dim);
    let width = target.saturating_add(svd_cfg.oversampling).min(min_dim);
    let svd = if width >= min_dim {
        exact_svd(projected_acts)?
    } else {
        sketch_svd(projected_acts, width, svd_cfg.power_iterations, svd_cfg.seed)?.truncate(target)
    };
    let total = match mode {
        EnergyMode::SumFraction => svd.s.iter().sum::<f64>(),
        EnergyMode::SquaredSumFraction => {
            let f = projected_acts.frobenius_norm();
            f * f
        }
    };
    let r = threshold_rank(&svd.s, total, epsilon, mode);
    Ok(SubspaceBasis {
        layer_index,
        basis: svd.u.leading_columns(r),
    })
}

/// Merges client bases into the global basis of one layer.
///
/// An empty global basis is initialised from the first client's basis; every
/// further column is orthogonalized against the running basis and appended if
/// its residual norm reaches `drop_tol`. Clients are processed in the given
/// order.
pub fn merge_into_global(
    merged: &SubspaceBasis,
    client_bases: &[SubspaceBasis],
    drop_tol: f64,
) -> Result<SubspaceBasis> {
    let d = merged.dim();
    if let Some(bad) = client_bases.iter().find(|b| b.dim() != d) {
        return Err(Error::dim("merge_into_global", format!("{d} rows"), format!("{} rows", bad.dim())));
    }
    let mut current = merged.basis.clone();
    let mut rest = client_bases;
    if current.cols() == 0 {
        if let Some((first, tail)) = client_bases.split_first() {
            current = orthonormalize_columns(&first.basis, drop_tol);
            rest = tail;
        }
    }
    let mut cols: Vec<Vec<f64>> = current.columns().collect();
    for client in rest {
        for mut v in client.basis.columns() {
            orthogonalize_against(&mut v, &cols);
            let n = norm2(&v);
            if n >= drop_tol && n.is_finite() {
                v.iter_mut().for_each(|x| *x /= n);
                cols.push(v);
            }
        }
    }
    let current = DenseMatrix::from_columns(d, &cols);
    Ok(SubspaceBasis {
        layer_index: merged.layer_index,
        basis: current,
    })
}

/// Per-task communication and storage counts (in floats).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CostLedger {
    pub per_task_uploaded_basis_floats: Vec<usize>,
    pub per_task_reference_floats: Vec<usize>,
    pub per_task_stored_floats: Vec<usize>,
}

impl CostLedger {
    pub fn new(num_tasks: usize) -> Self {
        CostLedger {
            per_task_uploaded_basis_floats: vec![0; num_tasks],
            per_task_reference_floats: vec![0; num_tasks],
            per_task_stored_floats: vec![0; num_tasks],
        }
    }

    pub fn num_tasks(&self) -> usize {
        self.per_task_uploaded_basis_floats.len()
    }

    /// Adds `Σ d_l·r_l` over `bases` and the reference-vector lengths to `task`.
    pub fn record_cost(
        &mut self,
        task: usize,
        bases: &[SubspaceBasis],
        references: &[ReferenceVector],
    ) -> Result<()> {
        if task >= self.num_tasks() {
            return Err(Error::State(format!(
                "task {task} beyond ledger horizon {}",
                self.num_tasks()
            )));
        }
        self.per_task_uploaded_basis_floats[task] +=
            bases.iter().map(SubspaceBasis::float_count).sum::<usize>();
        self.per_task_reference_floats[task] +=
            references.iter().map(|r| r.values.len()).sum::<usize>();
        Ok(())
    }

    pub fn set_stored(&mut self, task: usize, floats: usize) {
        self.per_task_stored_floats[task] = floats;
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("task,uploaded_basis_floats,reference_floats,stored_floats\n");
        for t in 0..self.num_tasks() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                t + 1,
                self.per_task_uploaded_basis_floats[t],
                self.per_task_reference_floats[t],
                self.per_task_stored_floats[t]
            ));
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::parse(path, e))?;
        let mut ledger = CostLedger::default();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::parse(path, e))?;
            let field = |i: usize| -> Result<usize> {
                rec.get(i)
                    .ok_or_else(|| Error::parse(path, "missing column"))?
                    .parse()
                    .map_err(|e| Error::parse(path, e))
            };
            ledger.per_task_uploaded_basis_floats.push(field(1)?);
            ledger.per_task_reference_floats.push(field(2)?);
            ledger.per_task_stored_floats.push(field(3)?);
        }
        Ok(ledger)
    }
}
