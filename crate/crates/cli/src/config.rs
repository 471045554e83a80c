//! Experiment configuration: `fblab.config/1` JSON documents.

use std::path::{Path, PathBuf};

use fblab_core::energy::AlmostMinParams;
use fblab_core::flatness::FlatnessParams;
use fblab_core::regularity::DichotomyParams;
use fblab_core::solver::{Fixture, SolverConfig};
use fblab_core::{Ball, Grid};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SCHEMA: &str = "fblab.config/1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Solve,
    Fixture,
    Audit,
    Dichotomy,
    Lipschitz,
    Nondeg,
    Weiss,
    Blowup,
    Touch,
    Flatness,
    Report,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Solve => "solve",
            Task::Fixture => "fixture",
            Task::Audit => "audit",
            Task::Dichotomy => "dichotomy",
            Task::Lipschitz => "lipschitz",
            Task::Nondeg => "nondeg",
            Task::Weiss => "weiss",
            Task::Blowup => "blowup",
            Task::Touch => "touch",
            Task::Flatness => "flatness",
            Task::Report => "report",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default = "default_dim")]
    pub dim: usize,
    pub h: f64,
    /// The grid is `[-half_width, half_width]^dim`.
    #[serde(default = "default_half_width")]
    pub half_width: f64,
}

fn default_dim() -> usize {
    2
}

fn default_half_width() -> f64 {
    1.25
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BallSpec {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Default for BallSpec {
    fn default() -> Self {
        BallSpec {
            center: vec![0.0, 0.0],
            radius: 1.0,
        }
    }
}

/// Coefficient `base + amp |x|^exponent`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Coefficient {
    #[serde(default = "one")]
    pub base: f64,
    #[serde(default)]
    pub amp: f64,
    #[serde(default = "one")]
    pub exponent: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for Coefficient {
    fn default() -> Self {
        Coefficient {
            base: 1.0,
            amp: 0.0,
            exponent: 1.0,
        }
    }
}

impl Coefficient {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        self.base + self.amp * r.powf(self.exponent)
    }
}

/// Coefficients of `∫ a|∇u|² + q χ_{u>0}` and their declared oscillation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Coefficients {
    #[serde(default)]
    pub a: Coefficient,
    #[serde(default)]
    pub q: Coefficient,
    pub kappa: f64,
    pub beta: f64,
}

/// Where a task gets its field from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSource {
    Fixture {
        fixture: Fixture,
    },
    /// A GFN file, relative to the configuration file.
    Gfn {
        path: PathBuf,
    },
    Minimizer {
        data: Fixture,
        #[serde(default)]
        solver: SolverConfig,
        #[serde(default)]
        coefficients: Option<Coefficients>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: String,
    pub task: Task,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub ball: BallSpec,
    #[serde(default)]
    pub input: Option<FieldSource>,
    #[serde(default)]
    pub params: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveParams {
    pub data: Fixture,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub coefficients: Option<Coefficients>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureParams {
    pub fixture: Fixture,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditParams {
    #[serde(default = "exact")]
    pub mode: AlmostMinParams,
    #[serde(default = "yes")]
    pub builtin: bool,
    /// Adds the solver minimizer with the boundary data of `u`.
    #[serde(default)]
    pub minimizer: Option<SolverConfig>,
    /// Whether the field is expected to be falsified (a negative control).
    #[serde(default)]
    pub expect_falsified: bool,
}

fn exact() -> AlmostMinParams {
    AlmostMinParams::Multiplicative {
        kappa: 0.0,
        beta: 1.0,
    }
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampanatoParams {
    pub alpha: f64,
    pub rho: f64,
    pub eps: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DichotomyTaskParams {
    #[serde(default)]
    pub dichotomy: DichotomyParams,
    #[serde(default)]
    pub campanato: Option<CampanatoParams>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LipschitzParams {
    #[serde(default)]
    pub dichotomy: DichotomyParams,
    /// Cells of the concentric half ball within this distance of the free boundary enter the sup.
    #[serde(default = "near")]
    pub distance: f64,
    #[serde(default = "lipschitz_bound")]
    pub bound: f64,
}

fn near() -> f64 {
    0.1
}

fn lipschitz_bound() -> f64 {
    2.2
}

impl Default for LipschitzParams {
    fn default() -> Self {
        LipschitzParams {
            dichotomy: DichotomyParams::default(),
            distance: near(),
            bound: lipschitz_bound(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NondegParams {
    #[serde(default = "nondeg_radii")]
    pub radii: Vec<f64>,
    #[serde(default = "nondeg_c")]
    pub c: f64,
    /// Free-boundary points are taken from the task ball scaled by this factor.
    #[serde(default = "half")]
    pub window: f64,
    /// Upper bound on tested points; points are thinned evenly.
    #[serde(default = "max_points")]
    pub max_points: usize,
}

fn nondeg_radii() -> Vec<f64> {
    vec![0.05, 0.1, 0.2, 0.4]
}

fn nondeg_c() -> f64 {
    0.3
}

fn half() -> f64 {
    0.5
}

fn max_points() -> usize {
    64
}

impl Default for NondegParams {
    fn default() -> Self {
        NondegParams {
            radii: nondeg_radii(),
            c: nondeg_c(),
            window: half(),
            max_points: max_points(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Centers {
    /// `"free_boundary"`: points of the extracted free boundary in the window.
    Named(String),
    Points(Vec<Vec<f64>>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeissParams {
    #[serde(default = "weiss_radii")]
    pub radii: Vec<f64>,
    #[serde(default = "free_boundary")]
    pub centers: Centers,
    #[serde(default = "quarter")]
    pub window: f64,
    #[serde(default = "weiss_points")]
    pub max_points: usize,
    /// Expected constant value, checked within `20h` when present.
    #[serde(default)]
    pub expect: Option<f64>,
}

fn weiss_radii() -> Vec<f64> {
    (0..=6).map(|k| 0.2 + 0.1 * k as f64).collect()
}

fn free_boundary() -> Centers {
    Centers::Named("free_boundary".into())
}

fn quarter() -> f64 {
    0.2
}

fn weiss_points() -> usize {
    8
}

impl Default for WeissParams {
    fn default() -> Self {
        WeissParams {
            radii: weiss_radii(),
            centers: free_boundary(),
            window: quarter(),
            max_points: weiss_points(),
            expect: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlowupParams {
    /// Defaults to the free-boundary point nearest the ball center.
    #[serde(default)]
    pub center: Option<Vec<f64>>,
    #[serde(default = "blowup_radii")]
    pub radii: Vec<f64>,
    #[serde(default)]
    pub write_fields: bool,
}

fn blowup_radii() -> Vec<f64> {
    vec![0.4, 0.2, 0.1]
}

impl Default for BlowupParams {
    fn default() -> Self {
        BlowupParams {
            center: None,
            radii: blowup_radii(),
            write_fields: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TouchParams {
    #[serde(default = "mus")]
    pub mus: Vec<f64>,
    #[serde(default = "per_mu")]
    pub per_mu: usize,
}

fn mus() -> Vec<f64> {
    vec![0.05, 0.1, 0.2]
}

fn per_mu() -> usize {
    10
}

impl Default for TouchParams {
    fn default() -> Self {
        TouchParams {
            mus: mus(),
            per_mu: per_mu(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlatnessTaskParams {
    #[serde(default)]
    pub center: Option<Vec<f64>>,
    #[serde(default = "eps0")]
    pub eps0: f64,
    #[serde(default)]
    pub iteration: FlatnessParams,
    /// Runs the decay iteration; off for fields that are not flat at scale 1.
    #[serde(default = "yes")]
    pub iterate: bool,
    /// Decay steps that must pass in a row.
    #[serde(default = "two")]
    pub min_consecutive: usize,
    /// Whether the decay is expected to hold (false for negative controls).
    #[serde(default = "yes")]
    pub expect_decay: bool,
    /// Hölder exponent of the free-boundary fit.
    #[serde(default = "fit_alpha")]
    pub fit_alpha: f64,
    /// Expected free-boundary dimension, checked within 0.05 when present.
    #[serde(default)]
    pub expect_dimension: Option<f64>,
    /// Expected free-boundary length or area, checked within `20h` when present.
    #[serde(default)]
    pub expect_measure: Option<f64>,
}

fn eps0() -> f64 {
    0.5
}

fn two() -> usize {
    2
}

fn fit_alpha() -> f64 {
    0.25
}

impl Default for FlatnessTaskParams {
    fn default() -> Self {
        FlatnessTaskParams {
            center: None,
            eps0: eps0(),
            iteration: FlatnessParams::default(),
            iterate: true,
            min_consecutive: two(),
            expect_decay: true,
            fit_alpha: fit_alpha(),
            expect_dimension: None,
            expect_measure: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportParams {
    /// Run directories, relative to the configuration file.
    pub runs: Vec<PathBuf>,
}

pub type Validation<T> = Result<T, CliError>;

fn invalid(path: impl Into<String>, message: impl Into<String>) -> CliError {
    CliError::Validation {
        path: path.into(),
        message: message.into(),
    }
}

/// Deserializes `value` and reports the failing field as `prefix.path`.
pub fn typed<T: DeserializeOwned>(value: &serde_json::Value, prefix: &str) -> Validation<T> {
    let value = if value.is_null() {
        serde_json::Value::Object(Default::default())
    } else {
        value.clone()
    };
    serde_path_to_error::deserialize(value).map_err(|e| {
        let inner = e.path().to_string();
        let path = if inner == "." {
            prefix.to_string()
        } else {
            format!("{prefix}.{inner}")
        };
        invalid(path, e.into_inner().to_string())
    })
}

fn positive(path: &str, v: f64) -> Validation<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(path, format!("must be positive and finite, got {v}")))
    }
}

fn radii(path: &str, r: &[f64]) -> Validation<()> {
    if r.is_empty() {
        return Err(invalid(path, "must not be empty"));
    }
    for (k, &v) in r.iter().enumerate() {
        positive(&format!("{path}[{k}]"), v)?;
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Validation<ExperimentConfig> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| invalid("$", e.to_string()))?;
        let cfg: ExperimentConfig = typed(&value, "$")
            .map_err(|e| match e {
                CliError::Validation { path, message } => invalid(
                    path.trim_start_matches("$.").trim_start_matches('$').to_string(),
                    message,
                ),
                e => e,
            })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Validation<ExperimentConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            invalid("config", format!("cannot read {}: {e}", path.display()))
        })?;
        ExperimentConfig::parse(&text)
    }

    /// Checks the schema, grid, ball and the task's parameter block.
    pub fn validate(&self) -> Validation<()> {
        if self.schema != SCHEMA {
            return Err(invalid(
                "schema",
                format!("expected \"{SCHEMA}\", got \"{}\"", self.schema),
            ));
        }
        if self.task == Task::Report {
            let p: ReportParams = typed(&self.params, "params")?;
            if p.runs.is_empty() {
                return Err(invalid("params.runs", "no run directories given"));
            }
            return Ok(());
        }
        let grid = self
            .grid
            .as_ref()
            .ok_or_else(|| invalid("grid", "required for this task"))?;
        if !(2..=3).contains(&grid.dim) {
            return Err(invalid("grid.dim", format!("must be 2 or 3, got {}", grid.dim)));
        }
        positive("grid.h", grid.h)?;
        positive("grid.half_width", grid.half_width)?;
        if grid.h > grid.half_width {
            return Err(invalid("grid.h", "exceeds grid.half_width"));
        }
        if self.ball.center.len() != grid.dim {
            return Err(invalid(
                "ball.center",
                format!("expected {} components", grid.dim),
            ));
        }
        positive("ball.radius", self.ball.radius)?;
        let reach = self
            .ball
            .center
            .iter()
            .map(|c| c.abs())
            .fold(0.0, f64::max)
            + self.ball.radius;
        if reach > grid.half_width + 1e-12 {
            return Err(invalid("ball", "ball escapes the grid"));
        }
        match self.task {
            Task::Solve => {
                let p: SolveParams = typed(&self.params, "params")?;
                fixture_ok("params.data", &p.data, grid.dim)?;
                solver_ok("params.solver", &p.solver, grid.h)?;
                if let Some(c) = &p.coefficients {
                    coefficients_ok("params.coefficients", c)?;
                }
            }
            Task::Fixture => {
                let p: FixtureParams = typed(&self.params, "params")?;
                fixture_ok("params.fixture", &p.fixture, grid.dim)?;
            }
            _ => {
                let input = self
                    .input
                    .as_ref()
                    .ok_or_else(|| invalid("input", "required for this task"))?;
                input_ok(input, grid)?;
                self.task_params_ok(grid)?;
            }
        }
        Ok(())
    }

    fn task_params_ok(&self, grid: &GridSpec) -> Validation<()> {
        match self.task {
            Task::Audit => {
                let p: AuditParams = typed(&self.params, "params")?;
                p.mode
                    .validate()
                    .map_err(|e| invalid("params.mode", e.to_string()))?;
                if let Some(s) = &p.minimizer {
                    solver_ok("params.minimizer", s, grid.h)?;
                }
                if !p.builtin && p.minimizer.is_none() {
                    return Err(invalid("params", "empty competitor suite"));
                }
            }
            Task::Dichotomy => {
                let p: DichotomyTaskParams = typed(&self.params, "params")?;
                dichotomy_ok("params.dichotomy", &p.dichotomy)?;
                if let Some(c) = &p.campanato {
                    unit_interval("params.campanato.alpha", c.alpha)?;
                    unit_interval("params.campanato.rho", c.rho)?;
                    positive("params.campanato.eps", c.eps)?;
                }
            }
            Task::Lipschitz => {
                let p: LipschitzParams = typed(&self.params, "params")?;
                dichotomy_ok("params.dichotomy", &p.dichotomy)?;
                positive("params.distance", p.distance)?;
                positive("params.bound", p.bound)?;
            }
            Task::Nondeg => {
                let p: NondegParams = typed(&self.params, "params")?;
                radii("params.radii", &p.radii)?;
                positive("params.c", p.c)?;
                positive("params.window", p.window)?;
                if p.max_points == 0 {
                    return Err(invalid("params.max_points", "must be positive"));
                }
            }
            Task::Weiss => {
                let p: WeissParams = typed(&self.params, "params")?;
                radii("params.radii", &p.radii)?;
                if p.radii.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(invalid("params.radii", "must be strictly increasing"));
                }
                match &p.centers {
                    Centers::Named(n) if n == "free_boundary" => {}
                    Centers::Named(n) => {
                        return Err(invalid(
                            "params.centers",
                            format!("expected \"free_boundary\" or a point list, got \"{n}\""),
                        ))
                    }
                    Centers::Points(pts) => points_ok("params.centers", pts, grid.dim)?,
                }
                positive("params.window", p.window)?;
            }
            Task::Blowup => {
                let p: BlowupParams = typed(&self.params, "params")?;
                radii("params.radii", &p.radii)?;
                if let Some(c) = &p.center {
                    points_ok("params.center", std::slice::from_ref(c), grid.dim)?;
                }
            }
            Task::Touch => {
                let p: TouchParams = typed(&self.params, "params")?;
                for (k, &m) in p.mus.iter().enumerate() {
                    unit_interval(&format!("params.mus[{k}]"), m)?;
                }
                if p.mus.is_empty() || p.per_mu == 0 {
                    return Err(invalid("params.per_mu", "empty sweep"));
                }
            }
            Task::Flatness => {
                let p: FlatnessTaskParams = typed(&self.params, "params")?;
                positive("params.eps0", p.eps0)?;
                unit_interval("params.iteration.eta", p.iteration.eta)?;
                unit_interval("params.iteration.alpha", p.iteration.alpha)?;
                unit_interval("params.fit_alpha", p.fit_alpha)?;
                if let Some(c) = &p.center {
                    points_ok("params.center", std::slice::from_ref(c), grid.dim)?;
                }
            }
            Task::Solve | Task::Fixture | Task::Report => {}
        }
        Ok(())
    }

    pub fn grid(&self) -> Validation<Grid> {
        let spec = self
            .grid
            .as_ref()
            .ok_or_else(|| invalid("grid", "required for this task"))?;
        Grid::centered(spec.dim, spec.half_width, spec.h)
            .map_err(|e| invalid("grid", e.to_string()))
    }

    pub fn ball(&self) -> Validation<Ball> {
        Ball::new(&self.ball.center, self.ball.radius).map_err(|e| invalid("ball", e.to_string()))
    }
}

fn unit_interval(path: &str, v: f64) -> Validation<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(invalid(path, format!("must lie in (0, 1), got {v}")))
    }
}

fn points_ok(path: &str, pts: &[Vec<f64>], dim: usize) -> Validation<()> {
    for (k, p) in pts.iter().enumerate() {
        if p.len() != dim || p.iter().any(|v| !v.is_finite()) {
            return Err(invalid(
                format!("{path}[{k}]"),
                format!("expected {dim} finite components"),
            ));
        }
    }
    Ok(())
}

fn fixture_ok(path: &str, f: &Fixture, dim: usize) -> Validation<()> {
    f.validate(dim).map_err(|e| match e {
        fblab_core::Error::InvalidParameter { name, detail } => {
            invalid(format!("{path}.{name}"), detail)
        }
        e => invalid(path, e.to_string()),
    })
}

fn solver_ok(path: &str, s: &SolverConfig, h: f64) -> Validation<()> {
    s.validate(h).map_err(|e| match e {
        fblab_core::Error::InvalidParameter { name, detail } => {
            invalid(format!("{path}.{name}"), detail)
        }
        e => invalid(path, e.to_string()),
    })
}

fn dichotomy_ok(path: &str, d: &DichotomyParams) -> Validation<()> {
    positive(&format!("{path}.eps"), d.eps)?;
    unit_interval(&format!("{path}.eta"), d.eta)?;
    positive(&format!("{path}.m"), d.m)
}

fn coefficients_ok(path: &str, c: &Coefficients) -> Validation<()> {
    for (name, k) in [("a", &c.a), ("q", &c.q)] {
        if !(k.base >= 1.0) {
            return Err(invalid(format!("{path}.{name}.base"), "must be at least 1"));
        }
        if !(k.amp >= 0.0 && k.amp.is_finite()) {
            return Err(invalid(format!("{path}.{name}.amp"), "must be nonnegative"));
        }
        if !(k.exponent > 0.0 && k.exponent <= 1.0) {
            return Err(invalid(format!("{path}.{name}.exponent"), "must lie in (0, 1]"));
        }
    }
    if !(c.kappa >= 0.0 && c.kappa.is_finite()) {
        return Err(invalid(format!("{path}.kappa"), "must be nonnegative"));
    }
    if !(c.beta > 0.0 && c.beta <= 1.0) {
        return Err(invalid(format!("{path}.beta"), "must lie in (0, 1]"));
    }
    Ok(())
}

fn input_ok(input: &FieldSource, grid: &GridSpec) -> Validation<()> {
    match input {
        FieldSource::Fixture { fixture } => fixture_ok("input.fixture", fixture, grid.dim),
        FieldSource::Gfn { path } => {
            if path.as_os_str().is_empty() {
                Err(invalid("input.path", "must not be empty"))
            } else {
                Ok(())
            }
        }
        FieldSource::Minimizer {
            data,
            solver,
            coefficients,
        } => {
            fixture_ok("input.data", data, grid.dim)?;
            solver_ok("input.solver", solver, grid.h)?;
            if let Some(c) = coefficients {
                coefficients_ok("input.coefficients", c)?;
            }
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base(task: &str, grid: &str, params: &str) -> String {
        format!(
            r#"{{"schema": "fblab.config/1", "task": "{task}", "grid": {grid},
                "input": {{"source": "fixture", "fixture": {{"kind": "half_plane", "normal": [0, 1]}}}},
                "params": {params}}}"#
        )
    }

    fn path_of(text: &str) -> String {
        let err = ExperimentConfig::parse(text)
            .and_then(|c| c.validate())
            .unwrap_err();
        match err {
            CliError::Validation { path, .. } => path,
            e => panic!("{e}"),
        }
    }

    #[test]
    fn negative_h_names_the_field() {
        assert_eq!(path_of(&base("weiss", r#"{"h": -0.01}"#, "{}")), "grid.h");
    }

    #[test]
    fn unknown_and_mistyped_fields_name_their_paths() {
        assert_eq!(
            path_of(&base("nondeg", r#"{"h": 0.0625}"#, r#"{"radii": "wide"}"#)),
            "params.radii"
        );
        assert_eq!(
            path_of(&base("touch", r#"{"h": 0.0625}"#, r#"{"mus": [0.1, 2.0]}"#)),
            "params.mus[1]"
        );
        assert_eq!(
            path_of(&base("flatness", r#"{"h": 0.0625, "size": 3}"#, "{}")),
            "grid.size"
        );
        assert_eq!(
            path_of(&base(
                "audit",
                r#"{"h": 0.0625}"#,
                r#"{"mode": {"mode": "multiplicative", "kappa": -1, "beta": 1}}"#
            )),
            "params.mode"
        );
    }

    #[test]
    fn fixture_errors_name_the_parameter() {
        let text = r#"{"schema": "fblab.config/1", "task": "fixture", "grid": {"h": 0.0625},
            "params": {"fixture": {"kind": "exterior_radial", "center": [0, 0], "r0": -1}}}"#;
        assert_eq!(path_of(text), "params.fixture.r0");
    }

    #[test]
    fn schema_and_report_runs_are_checked() {
        let text = r#"{"schema": "fblab.config/0", "task": "report", "params": {"runs": []}}"#;
        assert_eq!(path_of(text), "schema");
        let text = r#"{"schema": "fblab.config/1", "task": "report", "params": {"runs": []}}"#;
        assert_eq!(path_of(text), "params.runs");
    }

    #[test]
    fn defaults_fill_the_parameter_block() {
        let cfg = ExperimentConfig::parse(&base("lipschitz", r#"{"h": 0.0625}"#, "null")).unwrap();
        cfg.validate().unwrap();
        let p: LipschitzParams = typed(&cfg.params, "params").unwrap();
        assert_eq!(p, LipschitzParams::default());
        assert_eq!(cfg.ball, BallSpec::default());
    }
}
