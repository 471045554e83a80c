use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use fblab::config::{ExperimentConfig, Task};
use fblab::CliError;

/// Runs one fblab experiment and writes its artifact tree.
#[derive(Parser, Debug)]
#[command(name = "fblab", version, about)]
struct Args {
    task: Task,
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to `out` in the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the grid spacing.
    #[arg(long)]
    h: Option<f64>,
}

fn threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("FBLAB_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Validation {
            path: "FBLAB_THREADS".into(),
            message: format!("expected a positive integer, got \"{v}\""),
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Validation {
            path: "FBLAB_THREADS".into(),
            message: e.to_string(),
        })
}

fn main_inner(args: Args) -> Result<i32, CliError> {
    threads()?;
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if cfg.task != args.task {
        return Err(CliError::Validation {
            path: "task".into(),
            message: format!(
                "command line asks for {} but the configuration is for {}",
                args.task.name(),
                cfg.task.name()
            ),
        });
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(h) = args.h {
        match cfg.grid.as_mut() {
            Some(g) => g.h = h,
            None => {
                return Err(CliError::Validation {
                    path: "grid".into(),
                    message: "--h given but the task has no grid".into(),
                })
            }
        }
    }
    let base = args
        .config
        .parent()
        .map(PathBuf::from)
        .unwrap_or_default();
    let out = args
        .out
        .clone()
        .or_else(|| cfg.out.as_ref().map(|o| base.join(o)))
        .ok_or_else(|| CliError::Validation {
            path: "out".into(),
            message: "no output directory (--out or config `out`)".into(),
        })?;
    let outcome = fblab::run(&cfg, &base, &out)?;
    for c in &outcome.summary.claims {
        println!(
            "{} {} {}: {} (threshold {})",
            if c.passed { "PASS" } else { "FAIL" },
            c.criterion.as_deref().unwrap_or("-"),
            c.name,
            c.value,
            c.threshold
        );
    }
    println!("manifest: {}", out.join(fblab::artifacts::MANIFEST).display());
    Ok(outcome.exit_code())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match main_inner(args) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
