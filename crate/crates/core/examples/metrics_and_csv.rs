//! Accuracy-matrix metrics (average accuracy, forgetting) and the CSV artifact
//! set written for a run.
//!
//! cargo run --example metrics_and_csv

use fedprotip::harness::{
    compute_acc, compute_ft, emit_results, simulate, AccuracyMatrix, EvalMode, ExperimentConfig,
};

const CONFIG: &str = include_str!("../../../configs/quick.toml");

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // acc[t][i]: accuracy on task t after learning tasks 0..=i.
    let m = AccuracyMatrix::from_rows(
        EvalMode::TaskAware,
        &[vec![0.9, 0.8, 0.7], vec![f64::NAN, 0.85, 0.8], vec![f64::NAN, f64::NAN, 0.75]],
    )?;
    println!("ACC {:.4}  FT {:.4}", compute_acc(&m, 3)?, compute_ft(&m, 3)?);

    let bundle = simulate(&ExperimentConfig::from_toml_str(CONFIG)?)?;
    let dir = std::env::temp_dir().join("fedprotip_metrics_example");
    emit_results(&bundle, &dir)?;
    println!("\nwrote {}", dir.display());
    let mut files: Vec<_> = std::fs::read_dir(&dir)?.filter_map(|e| e.ok()).map(|e| e.file_name()).collect();
    files.sort();
    for f in files {
        println!("  {}", f.to_string_lossy());
    }
    print!("\n{}", std::fs::read_to_string(dir.join("metrics.csv"))?);
    Ok(())
}
