//! Discrete minimizers of `∫ a|∇u|² + q χ_{u>0}` in a ball, closed-form
//! fixtures, and coefficient-perturbed almost minimizers.
//!
//! The positivity term is first replaced by the ramp `min(u/ε, 1)`. Each
//! descent step freezes the node labels (zero, ramp, saturated), solves the
//! resulting linear problem and backtracks until the penalized energy drops.
//! The ramp solution is carried from coarse to fine grids, then sharpened: a
//! harmonic solve on a candidate positivity set followed by node-by-node
//! threshold updates that compare the Dirichlet saving of a node with its
//! positivity cost.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::elliptic::linear::{self, EdgeWeights};
use crate::energy::{bernoulli_energy, EnergyReport};
use crate::error::{Error, Result};
use crate::lattice::{dist2, norm, Ball, CellStencil, Grid, GridFunction, Role};

/// Threshold below which node positivity is treated as quadrature noise.
pub fn free_boundary_threshold(h: f64) -> f64 {
    0.5 * h
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Ramp width; `None` uses `max(h, √h/4)` on every level.
    pub eps_pen: Option<f64>,
    /// Descent steps per grid level.
    pub max_steps: usize,
    /// Number of restarts, at most 3: harmonic extension, distance profile, zero.
    pub restarts: usize,
    /// Relative energy decrease below which descent stops.
    pub energy_tol: f64,
    /// Coarse-to-fine continuation.
    pub continuation: bool,
    /// Coarsest level keeps at least this many cells per domain radius.
    pub min_cells_per_radius: usize,
    /// Threshold-update rounds in the sharpening pass.
    pub sharpen_rounds: usize,
    /// Levels with spacing at least `min(ramp_h, 4h)` run ramp descent; finer levels only sharpen.
    pub ramp_h: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            eps_pen: None,
            max_steps: 80,
            restarts: 3,
            energy_tol: 1e-10,
            continuation: true,
            min_cells_per_radius: 16,
            sharpen_rounds: 30,
            ramp_h: 1.0 / 64.0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self, h: f64) -> Result<()> {
        if let Some(e) = self.eps_pen {
            if !(e >= h) {
                return Err(Error::param("eps_pen", format!("must be >= h = {h}, got {e}")));
            }
        }
        if self.max_steps == 0 {
            return Err(Error::param("max_steps", "must be positive"));
        }
        if !(1..=3).contains(&self.restarts) {
            return Err(Error::param("restarts", "must be 1, 2 or 3"));
        }
        if !(self.energy_tol > 0.0) {
            return Err(Error::param("energy_tol", "must be positive"));
        }
        if !(self.ramp_h > 0.0) {
            return Err(Error::param("ramp_h", "must be positive"));
        }
        if self.min_cells_per_radius == 0 || self.sharpen_rounds == 0 {
            return Err(Error::param("min_cells_per_radius", "caps must be positive"));
        }
        Ok(())
    }

    fn eps_for(&self, h: f64) -> f64 {
        self.eps_pen.unwrap_or_else(|| h.max(h.sqrt() / 4.0))
    }
}

/// One row of the descent log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub restart: usize,
    /// `level-<h>` for ramp descent steps, `sharpen-<h>` for the final energy of
    /// each sharpening candidate.
    pub phase: String,
    pub iteration: usize,
    pub dirichlet: f64,
    pub positivity: f64,
    pub total: f64,
}

#[derive(Clone, Debug)]
pub struct SolverOutput {
    pub u: GridFunction,
    pub energy: EnergyReport,
    /// Final energy of every restart, in restart order.
    pub restart_energies: Vec<f64>,
    pub best_restart: usize,
    pub converged: bool,
    /// Descent log of the selected restart.
    pub log: Vec<LogRow>,
}

/// Discrete problem on one grid level.
struct Model {
    grid: Grid,
    g: Vec<f64>,
    free: Vec<bool>,
    free_nodes: Vec<usize>,
    /// Edge weights from the cells of the ball; `None` when `a ≡ 1`.
    weights: Option<EdgeWeights>,
    energy_weights: EdgeWeights,
    /// `h^n q_i` times the fraction of adjacent cells in the ball.
    node_weight: Vec<f64>,
    q: Vec<f64>,
    active: Vec<usize>,
}

type Coef<'a> = &'a (dyn Fn(&[f64]) -> f64 + Sync);

impl Model {
    fn new(grid: &Grid, g: Vec<f64>, ball: &Ball, a: Option<Coef>, q: Option<Coef>) -> Model {
        let dim = grid.dim();
        let n = grid.len();
        let st = CellStencil::new(grid);
        let cells = grid.cells_in_ball(ball);
        let mut energy_weights: EdgeWeights = vec![[0.0; 3]; n];
        let mut node_count = vec![0usize; n];
        for &c in &cells {
            let ac = a.map_or(1.0, |f| {
                let x = grid.cell_center(c);
                f(&x[..dim])
            });
            for &(oa, _, axis) in &st.edges {
                energy_weights[c + oa][axis] += ac / st.edges_per_axis;
            }
            for &o in &st.corners {
                node_count[c + o] += 1;
            }
        }
        let qv: Vec<f64> = (0..n)
            .map(|i| {
                q.map_or(1.0, |f| {
                    let x = grid.coords(i);
                    f(&x[..dim])
                })
            })
            .collect();
        let vol = grid.cell_volume();
        let per = (1usize << dim) as f64;
        let node_weight = (0..n)
            .map(|i| vol * qv[i] * node_count[i] as f64 / per)
            .collect();
        let free = grid.interior_mask(ball);
        let free_nodes = (0..n).filter(|&i| free[i]).collect();
        let active = (0..n).filter(|&i| node_count[i] > 0).collect();
        Model {
            grid: grid.clone(),
            g,
            free,
            free_nodes,
            weights: a.map(|_| energy_weights.clone()),
            energy_weights,
            node_weight,
            q: qv,
            active,
        }
    }

    /// Dirichlet part and (penalized when `eps > 0`) positivity part.
    fn energy(&self, v: &[f64], eps: f64) -> (f64, f64) {
        let dim = self.grid.dim();
        let st = self.grid.strides();
        let scale = self.grid.h().powi(dim as i32 - 2);
        let mut d = 0.0;
        let mut p = 0.0;
        for &i in &self.active {
            let w = &self.energy_weights[i];
            for k in 0..dim {
                if w[k] != 0.0 {
                    let diff = v[i + st[k]] - v[i];
                    d += w[k] * diff * diff;
                }
            }
            if v[i] > 0.0 {
                p += self.node_weight[i] * if eps > 0.0 { (v[i] / eps).min(1.0) } else { 1.0 };
            }
        }
        (d * scale, p)
    }

    fn total(&self, v: &[f64], eps: f64) -> f64 {
        let (d, p) = self.energy(v, eps);
        d + p
    }

    /// `(Σ_e w_e v_j, Σ_e w_e)` over the edges at free node `i`.
    fn neighbor_sum(&self, v: &[f64], i: usize) -> (f64, f64) {
        let st = self.grid.strides();
        let mut s = 0.0;
        let mut w = 0.0;
        for (k, &sk) in st.iter().enumerate().take(self.grid.dim()) {
            let (wp, wm) = match &self.weights {
                None => (1.0, 1.0),
                Some(ew) => (ew[i][k], ew[i - sk][k]),
            };
            s += wp * v[i + sk] + wm * v[i - sk];
            w += wp + wm;
        }
        (s, w)
    }

    /// Solves with `zero` nodes pinned at 0 and source `rhs` on the rest of the free set.
    fn solve(&self, v: &mut [f64], zero: &[bool], rhs: Option<&[f64]>) -> Result<()> {
        let mask: Vec<bool> = (0..v.len()).map(|i| self.free[i] && !zero[i]).collect();
        for &i in &self.free_nodes {
            if zero[i] {
                v[i] = 0.0;
            }
        }
        linear::solve(
            &linear::Problem {
                grid: &self.grid,
                free: &mask,
                weights: self.weights.as_ref(),
                rhs,
            },
            v,
        )?;
        Ok(())
    }

    fn log_row(&self, v: &[f64], eps: f64, restart: usize, phase: &str, it: usize) -> LogRow {
        let (d, p) = self.energy(v, eps);
        LogRow {
            restart,
            phase: phase.to_string(),
            iteration: it,
            dirichlet: d,
            positivity: p,
            total: d + p,
        }
    }

    /// Ramp descent from `v`; returns whether labels settled before the cap.
    fn descend(
        &self,
        v: &mut [f64],
        eps: f64,
        cfg: &SolverConfig,
        restart: usize,
        log: &mut Vec<LogRow>,
    ) -> Result<bool> {
        let phase = format!("level-{}", self.grid.h());
        let h2 = self.grid.h() * self.grid.h();
        let n = v.len();
        let mut e = self.total(v, eps);
        log.push(self.log_row(v, eps, restart, &phase, 0));
        let mut prev_labels: Option<Vec<u8>> = None;
        for it in 1..=cfg.max_steps {
            let mut labels = vec![0u8; n];
            let mut zero = vec![false; n];
            let mut rhs = vec![0.0; n];
            for &i in &self.free_nodes {
                let label = if v[i] > 0.0 {
                    if v[i] < eps {
                        1
                    } else {
                        2
                    }
                } else {
                    let (s, _) = self.neighbor_sum(v, i);
                    if s / h2 > self.q[i] / (2.0 * eps) {
                        1
                    } else {
                        0
                    }
                };
                labels[i] = label;
                zero[i] = label == 0;
                if label == 1 {
                    rhs[i] = -self.q[i] / (2.0 * eps);
                }
            }
            let mut cand = v.to_vec();
            self.solve(&mut cand, &zero, Some(&rhs))?;
            for &i in &self.free_nodes {
                cand[i] = cand[i].max(0.0);
            }
            let mut accepted = None;
            let mut t = 1.0;
            let mut trial = v.to_vec();
            for _ in 0..12 {
                for &i in &self.free_nodes {
                    trial[i] = v[i] + t * (cand[i] - v[i]);
                }
                let et = self.total(&trial, eps);
                if et < e {
                    accepted = Some(et);
                    break;
                }
                t *= 0.5;
            }
            let settled = prev_labels.as_ref() == Some(&labels);
            match accepted {
                Some(et) => {
                    let drop = e - et;
                    v.copy_from_slice(&trial);
                    e = et;
                    log.push(self.log_row(v, eps, restart, &phase, it));
                    if settled && drop <= cfg.energy_tol * e.abs().max(1e-300) {
                        return Ok(true);
                    }
                }
                None => return Ok(true),
            }
            prev_labels = Some(labels);
        }
        Ok(false)
    }

    /// Harmonic solve on `set`, then threshold updates; returns the best sharp field.
    fn sharpen_from(
        &self,
        init: &[f64],
        set: Vec<bool>,
        cfg: &SolverConfig,
    ) -> Result<(Vec<f64>, f64, usize)> {
        let n = self.grid.len();
        let h = self.grid.h();
        let mut v = init.to_vec();
        let mut pos = set;
        let mut best: Option<(Vec<f64>, f64)> = None;
        let mut rounds = 0;
        for _ in 0..cfg.sharpen_rounds {
            rounds += 1;
            let zero: Vec<bool> = (0..n).map(|i| self.free[i] && !pos[i]).collect();
            self.solve(&mut v, &zero, None)?;
            for &i in &self.free_nodes {
                v[i] = v[i].max(0.0);
            }
            let e = self.total(&v, 0.0);
            match &best {
                Some((_, eb)) if e >= *eb => break,
                _ => best = Some((v.clone(), e)),
            }
            let mut next = vec![false; n];
            for &i in &self.free_nodes {
                let (s, w) = self.neighbor_sum(&v, i);
                next[i] = s / w > h * (self.q[i] / w).sqrt();
            }
            if next == pos {
                break;
            }
            pos = next;
        }
        let (v, e) = best.expect("at least one sharpening round");
        Ok((v, e, rounds))
    }

    fn sharpen(
        &self,
        ramp: &[f64],
        levels: &[f64],
        cfg: &SolverConfig,
        restart: usize,
        log: &mut Vec<LogRow>,
    ) -> Result<Vec<f64>> {
        let n = self.grid.len();
        let phase = format!("sharpen-{}", self.grid.h());
        let results: Vec<Result<(Vec<f64>, f64, usize)>> = levels
            .par_iter()
            .map(|&theta| {
                let set = (0..n).map(|i| self.free[i] && ramp[i] > theta).collect();
                self.sharpen_from(ramp, set, cfg)
            })
            .collect();
        let mut best: Option<(Vec<f64>, f64)> = None;
        for (k, r) in results.into_iter().enumerate() {
            let (v, e, _) = r?;
            log.push(self.log_row(&v, 0.0, restart, &phase, k));
            if best.as_ref().is_none_or(|(_, eb)| e < *eb) {
                best = Some((v, e));
            }
        }
        Ok(best.expect("at least one candidate").0)
    }
}

/// Minimizes `J` over the free nodes of `domain`; every other node keeps its value in `g`.
pub fn minimize_bernoulli(
    g: &GridFunction,
    domain: &Ball,
    config: &SolverConfig,
) -> Result<SolverOutput> {
    minimize_weighted(g, domain, config, None, None)
}

fn check_data(g: &GridFunction, domain: &Ball) -> Result<()> {
    let grid = g.grid();
    grid.require_ball(domain)?;
    if let Some(i) = (0..grid.len()).find(|&i| g.value(i) < 0.0) {
        return Err(Error::pre(
            "nonnegative_data",
            format!("g = {} at node {i}", g.value(i)),
        ));
    }
    Ok(())
}

fn minimize_weighted(
    g: &GridFunction,
    domain: &Ball,
    config: &SolverConfig,
    a: Option<Coef>,
    q: Option<Coef>,
) -> Result<SolverOutput> {
    let grid = g.grid();
    config.validate(grid.h())?;
    check_data(g, domain)?;

    // Grid hierarchy, finest first.
    let mut grids = vec![grid.clone()];
    if config.continuation {
        while let Some(c) = grids.last().unwrap().coarsen() {
            if domain.radius / c.h() < config.min_cells_per_radius as f64 {
                break;
            }
            grids.push(c);
        }
    }
    let models: Vec<Model> = grids
        .iter()
        .map(|gr| {
            let data = (0..gr.len())
                .map(|i| {
                    let x = gr.coords(i);
                    g.value(grid.nearest_node(&x[..gr.dim()]))
                })
                .collect();
            Model::new(gr, data, domain, a, q)
        })
        .collect();

    let runs: Vec<Result<(Vec<f64>, f64, bool, Vec<LogRow>)>> = (0..config.restarts)
        .into_par_iter()
        .map(|r| run_restart(&models, domain, g, config, r))
        .collect();

    let mut restart_energies = Vec::with_capacity(runs.len());
    let mut best: Option<(usize, Vec<f64>, bool, Vec<LogRow>)> = None;
    let mut best_e = f64::INFINITY;
    let mut last_err = None;
    for (r, run) in runs.into_iter().enumerate() {
        match run {
            Ok((v, e, conv, log)) => {
                restart_energies.push(e);
                if e < best_e {
                    best_e = e;
                    best = Some((r, v, conv, log));
                }
            }
            Err(err) => {
                restart_energies.push(f64::NAN);
                last_err = Some(err);
            }
        }
    }
    let (best_restart, v, converged, log) = match best {
        Some(b) => b,
        None => return Err(last_err.expect("no restart produced a result")),
    };
    let u = g.with_values(v)?;
    let energy = if a.is_none() && q.is_none() {
        bernoulli_energy(&u, domain)?
    } else {
        let (d, p) = models[0].energy(u.values(), 0.0);
        EnergyReport::new(d, p)
    };
    Ok(SolverOutput {
        u,
        energy,
        restart_energies,
        best_restart,
        converged,
        log,
    })
}

fn initial_guess(model: &Model, domain: &Ball, g: &GridFunction, restart: usize) -> Result<Vec<f64>> {
    let mut v = model.g.clone();
    let dim = model.grid.dim();
    match restart {
        0 => {
            let zero = vec![false; v.len()];
            model.solve(&mut v, &zero, None)?;
            for &i in &model.free_nodes {
                v[i] = v[i].max(0.0);
            }
        }
        1 => {
            for &i in &model.free_nodes {
                let x = model.grid.coords(i);
                let d2 = dist2(&x, &domain.center, dim);
                let r = d2.sqrt();
                let mut p = domain.center;
                if r > 0.0 {
                    for k in 0..dim {
                        p[k] += (x[k] - domain.center[k]) * domain.radius / r;
                    }
                } else {
                    p[dim - 1] += domain.radius;
                }
                v[i] = (g.interpolate(&p[..dim]) - (domain.radius - r)).max(0.0);
            }
        }
        _ => {
            for &i in &model.free_nodes {
                v[i] = 0.0;
            }
        }
    }
    Ok(v)
}

fn run_restart(
    models: &[Model],
    domain: &Ball,
    g: &GridFunction,
    cfg: &SolverConfig,
    restart: usize,
) -> Result<(Vec<f64>, f64, bool, Vec<LogRow>)> {
    let mut log = Vec::new();
    let coarsest = models.last().unwrap();
    let mut v = initial_guess(coarsest, domain, g, restart)?;
    let mut converged = true;
    let h = models[0].grid.h();
    let floor = cfg.ramp_h.min(4.0 * h) * (1.0 - 1e-9);
    let ramp_from = (0..models.len())
        .find(|&l| models[l].grid.h() >= floor)
        .unwrap_or(models.len() - 1);
    for level in (0..models.len()).rev() {
        let m = &models[level];
        if level + 1 < models.len() {
            let coarse = GridFunction::new(
                models[level + 1].grid.clone(),
                v.clone(),
                Role::Signed,
            )?;
            let mut fine = m.g.clone();
            for &i in &m.free_nodes {
                let x = m.grid.coords(i);
                fine[i] = coarse.interpolate(&x[..m.grid.dim()]).max(0.0);
            }
            v = fine;
        }
        let eps = cfg.eps_for(m.grid.h());
        let candidates = [0.0, eps / 8.0, eps / 4.0, eps / 2.0];
        if level >= ramp_from {
            converged = m.descend(&mut v, eps, cfg, restart, &mut log)?;
            if level == 0 {
                v = m.sharpen(&v, &candidates, cfg, restart, &mut log)?;
            }
        } else if level + 1 == ramp_from {
            v = m.sharpen(&v, &candidates, cfg, restart, &mut log)?;
        } else {
            v = m.sharpen(&v, &[0.0], cfg, restart, &mut log)?;
        }
    }
    let e = models[0].total(&v, 0.0);
    Ok((v, e, converged, log))
}

/// Declared oscillation bound `osc_{B_r} a + osc_{B_r} q ≤ κ r^β`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Oscillation {
    pub kappa: f64,
    pub beta: f64,
}

/// Checks `a, q ≥ 1` on the nodes of `domain` and the oscillation bound on
/// dyadic balls `B_{2^-k R}` centered on the lattice `2^-k R ℤ^n`, down to `4h`.
pub fn check_coefficients(
    grid: &Grid,
    domain: &Ball,
    a: Coef,
    q: Coef,
    declared: &Oscillation,
) -> Result<()> {
    let dim = grid.dim();
    let nodes = grid.nodes_in_ball(domain);
    let av: Vec<f64> = (0..grid.len())
        .map(|i| {
            let x = grid.coords(i);
            a(&x[..dim])
        })
        .collect();
    let qv: Vec<f64> = (0..grid.len())
        .map(|i| {
            let x = grid.coords(i);
            q(&x[..dim])
        })
        .collect();
    for &i in &nodes {
        if !(av[i] >= 1.0 && qv[i] >= 1.0) || !av[i].is_finite() || !qv[i].is_finite() {
            return Err(Error::pre(
                "coefficient_lower_bound",
                format!(
                    "a = {}, q = {} at {:?}",
                    av[i],
                    qv[i],
                    &grid.coords(i)[..dim]
                ),
            ));
        }
    }
    let mut r = domain.radius / 2.0;
    while r >= 4.0 * grid.h() {
        let steps = (domain.radius / r).ceil() as i64;
        let mut idx = vec![-steps; dim];
        loop {
            let mut c = domain.center;
            for k in 0..dim {
                c[k] += idx[k] as f64 * r;
            }
            if dist2(&c, &domain.center, dim).sqrt() + r <= domain.radius + 1e-12 {
                let ball = Ball { center: c, radius: r };
                let inside = grid.nodes_in_ball(&ball);
                let osc = |v: &[f64]| {
                    let (lo, hi) = inside.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |acc, &i| {
                        (acc.0.min(v[i]), acc.1.max(v[i]))
                    });
                    if inside.is_empty() {
                        0.0
                    } else {
                        hi - lo
                    }
                };
                let total = osc(&av) + osc(&qv);
                let bound = declared.kappa * r.powf(declared.beta);
                if total > bound * (1.0 + 1e-9) {
                    return Err(Error::pre(
                        "coefficient_oscillation",
                        format!(
                            "osc = {total:.6} > κ r^β = {bound:.6} on B_{r}({:?})",
                            &c[..dim]
                        ),
                    ));
                }
            }
            let mut k = 0;
            while k < dim {
                idx[k] += 1;
                if idx[k] <= steps {
                    break;
                }
                idx[k] = -steps;
                k += 1;
            }
            if k == dim {
                break;
            }
        }
        r /= 2.0;
    }
    Ok(())
}

/// Minimizer of `∫ a|∇u|² + q χ_{u>0}`, which is an almost minimizer of `J`
/// when the coefficients oscillate by at most `κ r^β`.
pub fn generate_almost_minimizer(
    a: Coef,
    q: Coef,
    g: &GridFunction,
    domain: &Ball,
    declared: &Oscillation,
    config: &SolverConfig,
) -> Result<SolverOutput> {
    check_coefficients(g.grid(), domain, a, q, declared)?;
    minimize_weighted(g, domain, config, Some(a), Some(q))
}

/// Closed-form solutions and test fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Fixture {
    /// `(x·ν)⁺`.
    HalfPlane { normal: Vec<f64> },
    /// `(x·ν')⁺` with `ν' ∝ ν + slope·e⊥`, `e⊥` the in-plane rotation of `ν` by -90°.
    TiltedPlane { normal: Vec<f64>, slope: f64 },
    /// `r₀ ln(|x-z|/r₀)` (2D) or `r₀ - r₀²/|x-z|` (3D) outside `B_{r₀}(z)`, 0 inside.
    ExteriorRadial { center: Vec<f64>, r0: f64 },
    Constant { c: f64 },
    /// `(γ x·ν)⁺`.
    Wedge { gamma: f64, normal: Vec<f64> },
}

fn unit(normal: &[f64], dim: usize) -> Result<()> {
    if normal.len() != dim {
        return Err(Error::param("normal", format!("expected {dim} components")));
    }
    if (norm(normal) - 1.0).abs() > 1e-9 {
        return Err(Error::param("normal", "must be a unit vector"));
    }
    Ok(())
}

/// A unit vector orthogonal to `nu`: rotation by -90° in 2D, Gram–Schmidt on a
/// coordinate axis in 3D.
pub fn orthogonal(nu: &[f64]) -> Vec<f64> {
    if nu.len() == 2 {
        return vec![nu[1], -nu[0]];
    }
    let axis = if nu[0].abs() < 0.9 { 0 } else { 1 };
    let mut e = vec![0.0; nu.len()];
    e[axis] = 1.0;
    let d = nu[axis];
    for k in 0..nu.len() {
        e[k] -= d * nu[k];
    }
    let l = norm(&e);
    e.iter().map(|v| v / l).collect()
}

impl Fixture {
    pub fn name(&self) -> &'static str {
        match self {
            Fixture::HalfPlane { .. } => "half_plane",
            Fixture::TiltedPlane { .. } => "tilted_plane",
            Fixture::ExteriorRadial { .. } => "exterior_radial",
            Fixture::Constant { .. } => "constant",
            Fixture::Wedge { .. } => "wedge",
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            Fixture::HalfPlane { normal } => unit(normal, dim),
            Fixture::TiltedPlane { normal, slope } => {
                unit(normal, dim)?;
                if !slope.is_finite() {
                    return Err(Error::param("slope", "must be finite"));
                }
                Ok(())
            }
            Fixture::ExteriorRadial { center, r0 } => {
                if center.len() != dim {
                    return Err(Error::param("center", format!("expected {dim} components")));
                }
                if !(*r0 > 0.0) {
                    return Err(Error::param("r0", "must be positive"));
                }
                Ok(())
            }
            Fixture::Constant { c } => {
                if !(*c >= 0.0 && c.is_finite()) {
                    return Err(Error::param("c", "must be finite and nonnegative"));
                }
                Ok(())
            }
            Fixture::Wedge { gamma, normal } => {
                unit(normal, dim)?;
                if !(*gamma > 0.0) {
                    return Err(Error::param("gamma", "must be positive"));
                }
                Ok(())
            }
        }
    }

    /// Unit normal of the (tilted) half plane, if any.
    pub fn direction(&self) -> Option<Vec<f64>> {
        match self {
            Fixture::HalfPlane { normal } | Fixture::Wedge { normal, .. } => Some(normal.clone()),
            Fixture::TiltedPlane { normal, slope } => {
                let e = orthogonal(normal);
                let v: Vec<f64> = normal.iter().zip(&e).map(|(n, e)| n + slope * e).collect();
                let l = norm(&v);
                Some(v.iter().map(|x| x / l).collect())
            }
            _ => None,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let dot = |n: &[f64]| n.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        match self {
            Fixture::HalfPlane { normal } => dot(normal).max(0.0),
            Fixture::TiltedPlane { .. } => dot(&self.direction().unwrap()).max(0.0),
            Fixture::ExteriorRadial { center, r0 } => {
                let r = center
                    .iter()
                    .zip(x)
                    .map(|(c, y)| (y - c) * (y - c))
                    .sum::<f64>()
                    .sqrt();
                if r <= *r0 {
                    0.0
                } else if x.len() == 2 {
                    r0 * (r / r0).ln()
                } else {
                    r0 - r0 * r0 / r
                }
            }
            Fixture::Constant { c } => *c,
            Fixture::Wedge { gamma, normal } => (gamma * dot(normal)).max(0.0),
        }
    }
}

pub fn fixture(f: &Fixture, grid: &Grid) -> Result<GridFunction> {
    f.validate(grid.dim())?;
    crate::lattice::sample(|x| f.eval(x), grid, Role::U)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{make_grid, sample};
    use std::f64::consts::{E, PI};

    #[test]
    fn fixture_values() {
        let g = make_grid(&[(-1.0, 1.0), (-1.0, 1.0)], 1.0 / 64.0).unwrap();
        let ext = Fixture::ExteriorRadial {
            center: vec![0.0, 0.0],
            r0: 0.25,
        };
        assert!((ext.eval(&[E * 0.25, 0.0]) - 0.25).abs() < 1e-12);
        let hp = Fixture::HalfPlane {
            normal: vec![0.0, 1.0],
        };
        assert!((fixture(&hp, &g).unwrap().value_at_node(&[0.3, 0.5]) - 0.5).abs() < 1e-12);
        let w = Fixture::Wedge {
            gamma: 1.5,
            normal: vec![0.0, 1.0],
        };
        assert!((w.eval(&[0.0, 0.4]) - 0.6).abs() < 1e-12);
        let t = Fixture::TiltedPlane {
            normal: vec![0.0, 1.0],
            slope: 0.1f64.tan(),
        };
        let nu = t.direction().unwrap();
        assert!((nu[0] - 0.1f64.sin()).abs() < 1e-12 && (nu[1] - 0.1f64.cos()).abs() < 1e-12);
        assert!(Fixture::HalfPlane { normal: vec![1.0, 1.0] }.validate(2).is_err());
        assert!(Fixture::ExteriorRadial { center: vec![0.0, 0.0], r0: 0.0 }.validate(2).is_err());
        assert!(Fixture::Wedge { gamma: -1.0, normal: vec![0.0, 1.0] }.validate(2).is_err());
    }

    #[test]
    fn exterior_radial_has_unit_slope_on_circle() {
        for dim in [2usize, 3] {
            let f = Fixture::ExteriorRadial {
                center: vec![0.0; dim],
                r0: 0.3,
            };
            let mut x = vec![0.0; dim];
            let d = 1e-6;
            x[0] = 0.3 + d;
            assert!((f.eval(&x) / d - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn zero_and_constant_data() {
        let h = 1.0 / 32.0;
        let g = make_grid(&[(-1.25, 1.25), (-1.25, 1.25)], h).unwrap();
        let b = Ball::unit();
        let z = GridFunction::zeros(&g, Role::U);
        let out = minimize_bernoulli(&z, &b, &SolverConfig::default()).unwrap();
        assert!(out.u.values().iter().all(|&v| v == 0.0));
        assert_eq!(out.energy.total, 0.0);
        let two = GridFunction::constant(&g, 2.0, Role::U).unwrap();
        let out = minimize_bernoulli(&two, &b, &SolverConfig::default()).unwrap();
        assert!(out.u.max_abs_diff_in_ball(&two, &b).unwrap() < 1e-9);
        assert!((out.energy.total - PI).abs() < 20.0 * h);
        assert_eq!(out.restart_energies.len(), 3);
    }

    #[test]
    fn half_plane_recovered() {
        let h = 1.0 / 64.0;
        let g = make_grid(&[(-1.25, 1.25), (-1.25, 1.25)], h).unwrap();
        let b = Ball::unit();
        let data = sample(|x| x[1].max(0.0), &g, Role::U).unwrap();
        let out = minimize_bernoulli(&data, &b, &SolverConfig::default()).unwrap();
        let err = out.u.max_abs_diff_in_ball(&data, &b).unwrap();
        assert!(err < 0.05, "err {err}");
        let jd = bernoulli_energy(&data, &b).unwrap().total;
        assert!(out.energy.total <= jd + 20.0 * h);
        for phase in ["level-0.0625", "level-0.03125"] {
            let totals: Vec<f64> = out
                .log
                .iter()
                .filter(|r| r.phase == phase)
                .map(|r| r.total)
                .collect();
            assert!(totals.windows(2).all(|w| w[1] <= w[0]));
        }
    }

    #[test]
    fn coefficient_gate() {
        let g = make_grid(&[(-1.0, 1.0), (-1.0, 1.0)], 1.0 / 32.0).unwrap();
        let b = Ball::unit();
        let a = |x: &[f64]| 1.0 + 0.1 * norm(x).sqrt();
        let one = |_: &[f64]| 1.0;
        let ok = Oscillation { kappa: 0.15, beta: 0.5 };
        check_coefficients(&g, &b, &a, &one, &ok).unwrap();
        let tight = Oscillation { kappa: 0.05, beta: 0.5 };
        assert!(check_coefficients(&g, &b, &a, &one, &tight).is_err());
        let low = |_: &[f64]| 0.5;
        assert!(check_coefficients(&g, &b, &low, &one, &ok).is_err());
    }
}
