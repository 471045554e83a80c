//! Aggregation of run directories into per-criterion rows and convergence tables.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::artifacts::{ArtifactWriter, Manifest, MANIFEST, SUMMARY};
use crate::config::{typed, ExperimentConfig, ReportParams};
use crate::error::{CliError, Result};
use crate::tasks::Summary;

pub const CRITERIA: [&str; 11] = [
    "AC-1", "AC-2", "AC-3", "AC-4", "AC-5", "AC-6", "AC-7", "AC-8", "AC-9", "AC-10", "AC-11",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub criterion: String,
    /// `pass`, `fail` or `not run`.
    pub status: String,
    pub claims: usize,
    pub failed: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    pub task: String,
    pub metric: String,
    pub h_coarse: f64,
    pub value_coarse: f64,
    pub h_fine: f64,
    pub value_fine: f64,
    pub exact: Option<f64>,
    /// Error ratio against `exact`, or `(v₁ - v₂)/(v₂ - v₃)` over three runs.
    pub ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub runs: Vec<String>,
    pub rows: Vec<Row>,
    pub convergence: Vec<Convergence>,
}

struct Run {
    name: String,
    manifest: Manifest,
    summary: Summary,
}

fn load(dir: &Path, name: String) -> Result<Run> {
    let manifest = Manifest::read(dir).ok_or_else(|| CliError::MissingManifest(dir.to_path_buf()))?;
    let summary: Summary = serde_json::from_slice(&fs::read(dir.join(SUMMARY))?)?;
    Ok(Run {
        name,
        manifest,
        summary,
    })
}

/// Artifact hashes of runs that share a configuration, compared pairwise.
fn reproducibility(runs: &[Run]) -> Option<(bool, String)> {
    let mut groups: BTreeMap<&str, Vec<&Run>> = BTreeMap::new();
    for r in runs {
        groups.entry(r.manifest.config_sha256.as_str()).or_default().push(r);
    }
    let mut any = false;
    let mut bad = Vec::new();
    for group in groups.values().filter(|g| g.len() > 1) {
        any = true;
        let first = &group[0].manifest.artifacts;
        for other in &group[1..] {
            if &other.manifest.artifacts != first {
                bad.push(other.name.clone());
            }
        }
    }
    any.then(|| (bad.is_empty(), bad.join(";")))
}

fn rows(runs: &[Run]) -> Vec<Row> {
    CRITERIA
        .iter()
        .map(|&c| {
            if c == "AC-11" {
                if let Some((ok, failed)) = reproducibility(runs) {
                    return Row {
                        criterion: c.into(),
                        status: if ok { "pass" } else { "fail" }.into(),
                        claims: 1,
                        failed,
                    };
                }
            }
            let claims: Vec<(&Run, &crate::tasks::Claim)> = runs
                .iter()
                .flat_map(|r| r.summary.claims.iter().map(move |cl| (r, cl)))
                .filter(|(_, cl)| cl.criterion.as_deref() == Some(c))
                .collect();
            let failed: Vec<String> = claims
                .iter()
                .filter(|(_, cl)| !cl.passed)
                .map(|(r, cl)| format!("{}:{}", r.name, cl.name))
                .collect();
            let status = if claims.is_empty() {
                "not run"
            } else if failed.is_empty() {
                "pass"
            } else {
                "fail"
            };
            Row {
                criterion: c.into(),
                status: status.into(),
                claims: claims.len(),
                failed: failed.join(";"),
            }
        })
        .collect()
}

fn convergence(runs: &[Run]) -> Vec<Convergence> {
    let mut by_task: BTreeMap<&str, Vec<&Run>> = BTreeMap::new();
    for r in runs {
        if r.summary.h.is_some() {
            by_task.entry(r.summary.task.as_str()).or_default().push(r);
        }
    }
    let mut out = Vec::new();
    for (task, mut group) in by_task {
        group.sort_by(|a, b| b.summary.h.unwrap().total_cmp(&a.summary.h.unwrap()));
        group.dedup_by(|a, b| a.summary.h == b.summary.h);
        if group.len() < 2 {
            continue;
        }
        for m in &group[0].summary.metrics {
            let series: Option<Vec<(f64, f64, Option<f64>)>> = group
                .iter()
                .map(|r| {
                    r.summary
                        .metrics
                        .iter()
                        .find(|x| x.name == m.name)
                        .map(|x| (r.summary.h.unwrap(), x.value, x.exact))
                })
                .collect();
            let Some(series) = series else { continue };
            for k in 0..series.len() - 1 {
                let (hc, vc, exact) = series[k];
                let (hf, vf, _) = series[k + 1];
                let ratio = match exact {
                    Some(e) => {
                        let den = (vf - e).abs();
                        (den > 0.0).then(|| (vc - e).abs() / den)
                    }
                    None => series.get(k + 2).and_then(|&(_, vff, _)| {
                        let den = vf - vff;
                        (den != 0.0).then(|| (vc - vf) / den)
                    }),
                };
                out.push(Convergence {
                    task: task.to_string(),
                    metric: m.name.clone(),
                    h_coarse: hc,
                    value_coarse: vc,
                    h_fine: hf,
                    value_fine: vf,
                    exact,
                    ratio,
                });
            }
        }
    }
    out
}

pub fn build(dirs: &[PathBuf]) -> Result<Report> {
    let named: Vec<(PathBuf, String)> = dirs
        .iter()
        .map(|d| (d.clone(), d.display().to_string()))
        .collect();
    build_named(&named)
}

fn build_named(dirs: &[(PathBuf, String)]) -> Result<Report> {
    if dirs.is_empty() {
        return Err(CliError::Validation {
            path: "params.runs".into(),
            message: "no run directories given".into(),
        });
    }
    let runs = dirs
        .iter()
        .map(|(d, n)| load(d, n.clone()))
        .collect::<Result<Vec<_>>>()?;
    Ok(Report {
        runs: runs.iter().map(|r| r.name.clone()).collect(),
        rows: rows(&runs),
        convergence: convergence(&runs),
    })
}

pub(crate) fn task(
    cfg: &ExperimentConfig,
    base: &Path,
    w: &mut ArtifactWriter,
    s: &mut Summary,
) -> Result<()> {
    let p: ReportParams = typed(&cfg.params, "params")?;
    let dirs: Vec<(PathBuf, String)> = p
        .runs
        .iter()
        .map(|d| (base.join(d), d.display().to_string()))
        .collect();
    for (d, _) in &dirs {
        if !d.join(MANIFEST).is_file() {
            return Err(CliError::MissingManifest(d.clone()));
        }
    }
    let report = build_named(&dirs)?;
    let op = "cli::report";
    w.json("report.json", op, &report)?;
    w.csv("report.csv", op, &report.rows)?;
    w.csv("convergence.csv", op, &report.convergence)?;
    for row in &report.rows {
        if row.status != "not run" {
            s.claims.push(crate::tasks::Claim {
                criterion: Some(row.criterion.clone()),
                name: "aggregate".into(),
                passed: row.status == "pass",
                value: row.claims as f64,
                threshold: 0.0,
            });
        }
    }
    Ok(())
}
