//! Config-driven run: load a TOML experiment, override the seed, simulate and
//! check the written results.
//!
//! cargo run --release --example config_run -- configs/quick.toml

use std::path::PathBuf;

use fedprotip::harness::{simulate_to_dir, verify_results, ExperimentConfig};

fn main() -> fedprotip::Result<()> {
    let path = std::env::args().nth(1).map_or_else(|| PathBuf::from("configs/quick.toml"), PathBuf::from);
    let mut cfg = ExperimentConfig::load(&path)?;
    cfg.set_seed(cfg.run.seed + 1);

    let out = std::env::temp_dir().join("fedprotip_config_run");
    let bundle = simulate_to_dir(&cfg, &out)?;
    for row in bundle.metrics_rows()?.iter().filter(|r| r.task_phase == cfg.data.num_tasks) {
        println!("{:<18} {:<16} ACC {:.4} FT {:.4}", row.method, row.mode, row.acc, row.ft);
    }
    let violations = verify_results(&out)?;
    println!("results in {} — {} invariant violations", out.display(), violations.len());
    Ok(())
}
