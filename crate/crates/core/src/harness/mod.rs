//! Metrics, experiment configuration, CSV output and the command line.

mod cli;
mod config;
mod emit;
mod metrics;
mod verify;

pub use cli::{run_cli, simulate, simulate_to_dir, Cli, Command, THREADS_ENV};
pub use config::{DataSection, ExperimentConfig, ModelSection, PartitionSection, RunSection};
pub use emit::{emit_results, read_metrics, MethodResult, MetricsRow, ResultBundle, METRICS_HEADER};
pub use metrics::{compute_acc, compute_ft, AccuracyMatrix, EvalMode};
pub use verify::verify_results;

/// Shortest fixed-width scientific form that round-trips every `f64`
/// (17 significant digits).
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

#[cfg(test)]
mod tests {
    use super::fmt_f64;

    #[test]
    fn float_format_round_trips() {
        for v in [0.1 + 0.2, 1.0 / 3.0, -2.5e-300, 0.0, 1e308, f64::MIN_POSITIVE] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits(), "{s}");
        }
    }
}
