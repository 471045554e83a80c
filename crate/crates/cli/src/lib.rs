//! Batch experiment runner for the fblab free-boundary laboratory.
//!
//! A run reads one `fblab.config/1` document, executes a module pipeline and
//! writes a deterministic artifact tree: the effective configuration, fields
//! as GFN files, CSV/JSON reports, a `summary.json` of claims and metrics, and
//! a `manifest.json` with the SHA-256 and producing operation of every file.

pub mod artifacts;
pub mod config;
pub mod error;
pub mod report;
pub mod tasks;

use std::path::Path;

use artifacts::{json_bytes, sha256_hex, ArtifactWriter, Manifest, SUMMARY};
use config::{ExperimentConfig, Task};
use error::Result;
use tasks::{Context, Summary};

pub use error::CliError;

/// Exit status for a run whose claims did not all hold.
pub const EXIT_CLAIM_FAILED: i32 = 4;

#[derive(Debug)]
pub struct Outcome {
    pub summary: Summary,
    pub manifest: Manifest,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.summary.passed() {
            0
        } else {
            EXIT_CLAIM_FAILED
        }
    }
}

/// Runs `cfg` with relative paths resolved against `base`, writing into `out`.
pub fn run(cfg: &ExperimentConfig, base: &Path, out: &Path) -> Result<Outcome> {
    cfg.validate()?;
    let mut echoed = cfg.clone();
    echoed.out = None;
    let config_bytes = json_bytes(&echoed)?;
    let mut w = ArtifactWriter::create(out)?;
    w.bytes("config.json", "cli::run", &config_bytes)?;
    let mut summary = Summary {
        task: cfg.task.name().into(),
        h: cfg.grid.as_ref().map(|g| g.h),
        seed: cfg.seed,
        ..Summary::default()
    };
    if cfg.task == Task::Report {
        report::task(cfg, base, &mut w, &mut summary)?;
    } else {
        let ctx = Context {
            cfg,
            base,
            grid: cfg.grid()?,
            ball: cfg.ball()?,
            h: cfg.grid.as_ref().expect("validated").h,
        };
        let f = match cfg.task {
            Task::Solve => tasks::solve,
            Task::Fixture => tasks::fixture_task,
            Task::Audit => tasks::audit,
            Task::Dichotomy => tasks::dichotomy,
            Task::Lipschitz => tasks::lipschitz,
            Task::Nondeg => tasks::nondeg,
            Task::Weiss => tasks::weiss,
            Task::Blowup => tasks::blowup,
            Task::Touch => tasks::touch,
            Task::Flatness => tasks::flatness,
            Task::Report => unreachable!(),
        };
        f(&ctx, &mut w, &mut summary)?;
    }
    w.json(SUMMARY, "cli::run", &summary)?;
    let manifest = w.finish(cfg.task.name(), cfg.seed, sha256_hex(&config_bytes))?;
    Ok(Outcome { summary, manifest })
}
