use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use super::{emit_results, verify_results, ExperimentConfig, MethodResult, ResultBundle};
use crate::data::export_stream;
use crate::error::{Error, Result};
use crate::fedcl::{run_experiment, Method};

/// Environment variable holding the worker-thread count for client rounds.
pub const THREADS_ENV: &str = "FEDPROTIP_THREADS";

#[derive(Debug, Parser)]
#[command(name = "fedprotip", version, about = "Federated continual learning simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an experiment for each requested method and write CSV results.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides `run.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Repeatable; overrides `run.methods`.
        #[arg(long = "method", value_parser = parse_method)]
        methods: Vec<Method>,
    },
    /// Generate the configured task stream and export it as CSV.
    GenData {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-check the invariants of a results directory.
    Verify {
        #[arg(long)]
        results: PathBuf,
    },
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    Method::parse(s).ok_or_else(|| {
        let names: Vec<&str> = Method::ALL.iter().map(|m| m.as_str()).collect();
        format!("unknown method {s:?} (expected one of {})", names.join(", "))
    })
}

/// Runs every method of `cfg` and collects their results.
pub fn simulate(cfg: &ExperimentConfig) -> Result<ResultBundle> {
    let stream = cfg.generate_stream()?;
    let plan = cfg.build_plan(&stream)?;
    let spec = cfg.model_spec();
    let methods = cfg
        .run
        .methods
        .iter()
        .map(|&method| {
            let out = run_experiment(&stream, &plan, &spec, &method.apply(&cfg.training))?;
            Ok(MethodResult::from_output(method, &out, &cfg.run.eval_modes))
        })
        .collect::<Result<_>>()?;
    Ok(ResultBundle { methods })
}

/// Simulates and writes all artifacts plus `config_echo.toml` into `out`.
pub fn simulate_to_dir(cfg: &ExperimentConfig, out: &Path) -> Result<ResultBundle> {
    let bundle = simulate(cfg)?;
    emit_results(&bundle, out)?;
    let echo = out.join("config_echo.toml");
    fs::write(&echo, cfg.to_toml_string()).map_err(|e| Error::io(&echo, e))?;
    Ok(bundle)
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .parse()
            .map_err(|_| Error::Config(format!("{THREADS_ENV}={v:?} is not a thread count")))?;
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

fn print_summary(bundle: &ResultBundle) -> Result<()> {
    let rows = bundle.metrics_rows()?;
    println!("{:<18} {:<16} {:>8} {:>8} {:>8}", "method", "mode", "ACC", "FT", "TIP");
    for m in &bundle.methods {
        for acc in &m.accuracy {
            let last = acc.completed_phases();
            if let Some(r) = rows
                .iter()
                .find(|r| r.method == m.method.as_str() && r.mode == acc.mode.as_str() && r.task_phase == last)
            {
                let tip = r.tip_accuracy.map_or_else(|| "-".into(), |v| format!("{:.4}", v));
                println!("{:<18} {:<16} {:>8.4} {:>8.4} {:>8}", r.method, r.mode, r.acc, r.ft, tip);
            }
        }
    }
    Ok(())
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Simulate {
            config,
            out,
            seed,
            methods,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.set_seed(s);
            }
            if !methods.is_empty() {
                cfg.run.methods = methods;
            }
            let out = out
                .or_else(|| cfg.run.out.clone())
                .unwrap_or_else(|| PathBuf::from("results"));
            let bundle = thread_pool()?.install(|| simulate_to_dir(&cfg, &out))?;
            print_summary(&bundle)?;
            println!("results written to {}", out.display());
            Ok(())
        }
        Command::GenData { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let stream = cfg.generate_stream()?;
            export_stream(&stream, &out)?;
            println!("{} tasks written to {}", stream.num_tasks(), out.display());
            Ok(())
        }
        Command::Verify { results } => {
            let problems = verify_results(&results)?;
            if problems.is_empty() {
                println!("{}: all invariants hold", results.display());
                Ok(())
            } else {
                for p in &problems {
                    eprintln!("violation: {p}");
                }
                Err(Error::State(format!("{} invariant violations", problems.len())))
            }
        }
    }
}

/// Parses `argv` (including the program name) and runs the command.
///
/// Returns the process exit code: 0 on success, 2 for usage or configuration
/// errors, 1 for anything that fails at run time.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => 2,
                _ => 1,
            }
        }
    }
}
