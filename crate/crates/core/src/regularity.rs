//! Gradient averages, the gradient dichotomy, Campanato and Lipschitz
//! cascades, Harnack gaps, non-degeneracy, Weiss energy and blow-ups.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::elliptic::{discrete_laplacian, harmonic_replacement};
use crate::energy::{bernoulli_energy, rescale};
use crate::error::{Error, Result};
use crate::flatness::{best_direction, extract_free_boundary, on_free_boundary, MESH_FLOOR};
use crate::lattice::{
    dirichlet_energy, gradient_deviation, max_gradient, mean_gradient, norm, pad, Ball,
    GridFunction, Point,
};

/// `(⨍_B |∇u|²)^{1/2}`.
pub fn average_gradient(u: &GridFunction, ball: &Ball) -> Result<f64> {
    let g = u.grid();
    let m = g.ball_measure(ball);
    if m <= 0.0 {
        return Err(Error::Unresolvable("ball contains no cells".into()));
    }
    Ok((dirichlet_energy(u, ball)? / m).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DichotomyParams {
    pub eps: f64,
    pub eta: f64,
    pub m: f64,
}

impl Default for DichotomyParams {
    fn default() -> Self {
        DichotomyParams {
            eps: 0.25,
            eta: 0.125,
            m: 10.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant")]
pub enum DichotomyOutcome {
    Decay {
        a: f64,
        a_eta: f64,
    },
    GradientFlat {
        a: f64,
        a_eta: f64,
        q: Vec<f64>,
        /// `(⨍_{B_η} |∇u - q|²)^{1/2}`.
        deviation: f64,
        /// `|q| / a`.
        c0: f64,
        /// Deviation within `εa` and `a/4 < |q|`.
        verified: bool,
    },
}

/// Central-difference gradient at the node nearest `x`.
fn node_gradient(u: &GridFunction, x: &[f64]) -> Point {
    let g = u.grid();
    let i = g.nearest_node(x);
    let st = g.strides();
    let mut q = [0.0; 3];
    for k in 0..g.dim() {
        let hi = g.neighbor(i, k, 1).unwrap_or(i);
        let lo = g.neighbor(i, k, -1).unwrap_or(i);
        let span = (hi as f64 - lo as f64) / st[k] as f64 * g.h();
        q[k] = (u.value(hi) - u.value(lo)) / span;
    }
    q
}

pub fn dichotomy_step(
    u: &GridFunction,
    ball: &Ball,
    params: &DichotomyParams,
) -> Result<DichotomyOutcome> {
    let a = average_gradient(u, ball)?;
    if a < params.m {
        return Err(Error::NotApplicable(format!("a = {a} < M = {}", params.m)));
    }
    let inner = ball.scaled(params.eta);
    let a_eta = average_gradient(u, &inner)?;
    if a_eta <= 0.5 * a {
        return Ok(DichotomyOutcome::Decay { a, a_eta });
    }
    let (v, _) = harmonic_replacement(&u.with_role(crate::lattice::Role::Signed)?, ball)?;
    let q = node_gradient(&v, &ball.center);
    let deviation = gradient_deviation(u, &inner, &q)?;
    let dim = u.dim();
    let qn = norm(&q[..dim]);
    Ok(DichotomyOutcome::GradientFlat {
        a,
        a_eta,
        q: q[..dim].to_vec(),
        deviation,
        c0: qn / a,
        verified: deviation <= params.eps * a && qn > 0.25 * a,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CampanatoGate {
    /// Initial deviation at most `εa`, `|q₀| > a/4`.
    Deviation,
    /// `⨍_B u ≥ c₁ a`.
    Average { c1: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampanatoRecord {
    pub r: f64,
    pub q: Vec<f64>,
    pub deviation: f64,
    /// `|q_k - q_{k-1}|`, zero at the first scale.
    pub increment: f64,
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampanatoTrace {
    pub records: Vec<CampanatoRecord>,
    pub alpha: f64,
    pub a: f64,
    /// Log-log slope of deviation against scale; `None` when all deviations vanish.
    pub exponent: Option<f64>,
    pub verified: bool,
}

impl CampanatoTrace {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["scale", "value", "increment", "bound"])?;
        for r in &self.records {
            out.write_record(&[
                format!("{}", r.r),
                format!("{}", r.deviation),
                format!("{}", r.increment),
                format!("{}", r.bound),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

fn loglog_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(_, &y)| y > 1e-12)
        .map(|(&x, &y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Best-fit slopes on `B_{ρᵏ r}` down to the mesh floor, with deviations checked
/// against `ε (ρᵏ)^α a`.
pub fn campanato_iterate(
    u: &GridFunction,
    ball: &Ball,
    q0: &[f64],
    alpha: f64,
    rho: f64,
    eps: f64,
    gate: CampanatoGate,
) -> Result<CampanatoTrace> {
    if !(alpha > 0.0 && alpha < 1.0) || !(rho > 0.0 && rho < 1.0) || !(eps > 0.0) {
        return Err(Error::param("alpha", "need α, ρ ∈ (0, 1) and ε > 0"));
    }
    let g = u.grid();
    let dim = g.dim();
    let a = average_gradient(u, ball)?;
    match gate {
        CampanatoGate::Deviation => {
            let q = pad(q0);
            let dev = gradient_deviation(u, ball, &q)?;
            if dev > eps * a {
                return Err(Error::pre("initial_deviation", format!("{dev} > εa = {}", eps * a)));
            }
            if norm(&q[..dim]) <= 0.25 * a {
                return Err(Error::pre("slope_window", "|q₀| ≤ a/4"));
            }
        }
        CampanatoGate::Average { c1 } => {
            let nodes = g.nodes_in_ball(ball);
            let mean = nodes.iter().map(|&i| u.value(i)).sum::<f64>() / nodes.len() as f64;
            if mean < c1 * a * ball.radius {
                return Err(Error::pre("average_lower_bound", format!("⨍u = {mean} < c₁a")));
            }
        }
    }
    let floor = MESH_FLOOR * g.h();
    let mut records: Vec<CampanatoRecord> = Vec::new();
    let mut t = 1.0;
    while t * ball.radius >= floor - 1e-12 {
        let b = ball.scaled(t);
        let q = mean_gradient(u, &b)?;
        let deviation = gradient_deviation(u, &b, &q)?;
        let increment = records.last().map_or(0.0, |p| {
            norm(&(0..dim).map(|k| q[k] - p.q[k]).collect::<Vec<_>>())
        });
        records.push(CampanatoRecord {
            r: b.radius,
            q: q[..dim].to_vec(),
            deviation,
            increment,
            bound: eps * t.powf(alpha) * a,
        });
        t *= rho;
    }
    let xs: Vec<f64> = records.iter().map(|r| r.r).collect();
    let ys: Vec<f64> = records.iter().map(|r| r.deviation).collect();
    Ok(CampanatoTrace {
        verified: records.iter().all(|r| r.deviation <= r.bound),
        exponent: loglog_slope(&xs, &ys),
        records,
        alpha,
        a,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CascadeEntry {
    pub k: usize,
    pub r: f64,
    pub a: f64,
    /// `C(η) M + 2^{-k} a(1)`.
    pub bound: f64,
    pub dichotomy: Option<DichotomyOutcome>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LipschitzCertificate {
    /// Discrete `sup |∇u|` over the cells of the concentric half ball.
    pub value: f64,
    pub a1: f64,
    /// `C(η) = 2 η^{-n/2}`.
    pub c_eta: f64,
    /// `value / (1 + a(1))`.
    pub constant: f64,
    pub cascade: Vec<CascadeEntry>,
    pub certified: bool,
}

pub fn lipschitz_certificate(
    u: &GridFunction,
    ball: &Ball,
    params: &DichotomyParams,
) -> Result<LipschitzCertificate> {
    let g = u.grid();
    let n = g.dim() as f64;
    let a1 = average_gradient(u, ball)?;
    let c_eta = 2.0 * params.eta.powf(-n / 2.0);
    let floor = MESH_FLOOR * g.h();
    let mut cascade = Vec::new();
    let mut certified = true;
    let mut k = 0;
    loop {
        let r = ball.radius * params.eta.powi(k as i32);
        if r < floor - 1e-12 {
            break;
        }
        let b = Ball {
            center: ball.center,
            radius: r,
        };
        let a = average_gradient(u, &b)?;
        let bound = c_eta * params.m + 0.5f64.powi(k as i32) * a1;
        let dichotomy = if a > bound {
            certified = false;
            match dichotomy_step(u, &b, params) {
                Ok(d) => Some(d),
                Err(Error::NotApplicable(_)) => None,
                Err(e) => return Err(e),
            }
        } else {
            None
        };
        cascade.push(CascadeEntry {
            k,
            r,
            a,
            bound,
            dichotomy,
        });
        k += 1;
    }
    let value = max_gradient(u, &ball.scaled(0.5))?;
    Ok(LipschitzCertificate {
        value,
        a1,
        c_eta,
        constant: value / (1.0 + a1),
        certified: certified && !cascade.is_empty(),
        cascade,
    })
}

/// `min_{B_{1/2}} (u - w)/μ`, or `(w - u)/μ` when `above`.
pub fn harnack_gap(
    u: &GridFunction,
    w: &GridFunction,
    ball: &Ball,
    mu: f64,
    sigma: f64,
    above: bool,
) -> Result<f64> {
    let g = u.grid();
    crate::lattice::check_same_grid(u, w)?;
    g.require_ball(ball)?;
    if !(mu > 0.0) {
        return Err(Error::param("mu", "must be positive"));
    }
    if sigma > mu.powi(g.dim() as i32 + 3) {
        return Err(Error::pre("sigma_bound", "σ > μ^(n+3)"));
    }
    let nodes = g.nodes_in_ball(ball);
    if let Some(&i) = nodes.iter().find(|&&i| u.value(i) <= 0.0) {
        return Err(Error::pre(
            "ball_in_positivity_set",
            format!("u vanishes at {:?}", &g.coords(i)[..g.dim()]),
        ));
    }
    let tol = 10.0 * crate::elliptic::linear::tolerance(g.h());
    let free = g.interior_mask(ball);
    for i in (0..g.len()).filter(|&i| free[i]) {
        if let Some(l) = discrete_laplacian(w, i) {
            if l.abs() > tol {
                return Err(Error::pre("w_harmonic", format!("|Δw| = {l:e} > {tol:e}")));
            }
        }
    }
    let gap = |i: usize| {
        if above {
            w.value(i) - u.value(i)
        } else {
            u.value(i) - w.value(i)
        }
    };
    if let Some(&i) = nodes.iter().find(|&&i| gap(i) < -1e-12) {
        return Err(Error::pre(
            "ordering",
            format!("ordering fails at {:?}", &g.coords(i)[..g.dim()]),
        ));
    }
    let c = g.nearest_node(&ball.center);
    if gap(c) < mu * (1.0 - 1e-12) {
        return Err(Error::pre("center_gap", format!("gap {} < μ = {mu}", gap(c))));
    }
    Ok(g.nodes_in_ball(&ball.scaled(0.5))
        .into_iter()
        .map(|i| gap(i) / mu)
        .fold(f64::INFINITY, f64::min))
}

/// `u` at the center of a ball contained in `{u > 0}`.
pub fn weak_nondegeneracy(u: &GridFunction, ball: &Ball, sigma: f64) -> Result<f64> {
    let g = u.grid();
    g.require_ball(ball)?;
    if !(sigma >= 0.0) {
        return Err(Error::param("sigma", "must be ≥ 0"));
    }
    if let Some(i) = g
        .nodes_in_ball(ball)
        .into_iter()
        .find(|&i| u.value(i) <= 0.0)
    {
        return Err(Error::pre(
            "ball_in_positivity_set",
            format!("u vanishes at {:?}", &g.coords(i)[..g.dim()]),
        ));
    }
    Ok(u.interpolate(&ball.center))
}

/// `(r, max_{B_r(x₀)} u / r)` for each radius.
pub fn strong_nondegeneracy(u: &GridFunction, x0: &[f64], radii: &[f64]) -> Result<Vec<(f64, f64)>> {
    let g = u.grid();
    if !on_free_boundary(u, x0) {
        return Err(Error::pre("center_on_free_boundary", format!("{x0:?} is not on F(u)")));
    }
    radii
        .iter()
        .map(|&r| {
            if r < 8.0 * g.h() {
                return Err(Error::Unresolvable(format!("radius {r} below 8h")));
            }
            let b = Ball::new(x0, r)?;
            g.require_ball(&b)?;
            Ok((r, b_max(u, &b) / r))
        })
        .collect()
}

/// Max over the nodes of the ball and the interpolated sphere.
fn b_max(u: &GridFunction, b: &Ball) -> f64 {
    let g = u.grid();
    sphere_quadrature(&b.center, b.radius, g.dim(), g.h())
        .into_iter()
        .map(|(x, _)| u.interpolate(&x))
        .fold(u.max_in_ball(b).unwrap_or(0.0), f64::max)
}

/// Quadrature nodes and weights on the sphere `∂B_r(x₀)`.
fn sphere_quadrature(x0: &Point, r: f64, dim: usize, h: f64) -> Vec<(Point, f64)> {
    let n = ((2.0 * PI * r / h).ceil() as usize * 4).max(256);
    if dim == 2 {
        let w = 2.0 * PI * r / n as f64;
        (0..n)
            .map(|i| {
                let t = 2.0 * PI * i as f64 / n as f64;
                ([x0[0] + r * t.cos(), x0[1] + r * t.sin(), 0.0], w)
            })
            .collect()
    } else {
        let nt = n / 2;
        let dt = PI / nt as f64;
        let dp = 2.0 * PI / n as f64;
        let mut out = Vec::with_capacity(nt * n);
        for i in 0..nt {
            let th = (i as f64 + 0.5) * dt;
            let w = r * r * th.sin() * dt * dp;
            for j in 0..n {
                let ph = j as f64 * dp;
                out.push((
                    [
                        x0[0] + r * th.sin() * ph.cos(),
                        x0[1] + r * th.sin() * ph.sin(),
                        x0[2] + r * th.cos(),
                    ],
                    w,
                ));
            }
        }
        out
    }
}

/// `W(r) = r^{-n} J(u, B_r(x₀)) - r^{-n-1} ∫_{∂B_r(x₀)} u²`.
pub fn weiss_energy(u: &GridFunction, x0: &[f64], r: f64) -> Result<f64> {
    let g = u.grid();
    let dim = g.dim();
    let b = Ball::new(x0, r)?;
    g.require_ball(&b)?;
    let bulk = bernoulli_energy(u, &b)?.total / r.powi(dim as i32);
    let surface: f64 = sphere_quadrature(&b.center, r, dim, g.h())
        .into_iter()
        .map(|(x, w)| u.interpolate(&x).powi(2) * w)
        .sum();
    Ok(bulk - surface / r.powi(dim as i32 + 1))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeissProfile {
    pub center: Vec<f64>,
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
}

impl WeissProfile {
    /// Largest drop `W(r_i) - W(r_j)` over `r_i < r_j`.
    pub fn max_decrease(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.values.len() {
            for j in i + 1..self.values.len() {
                worst = worst.max(self.values[i] - self.values[j]);
            }
        }
        worst
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["scale", "value"])?;
        for (r, v) in self.radii.iter().zip(&self.values) {
            out.write_record(&[format!("{r}"), format!("{v}")])?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn weiss_profile(u: &GridFunction, x0: &[f64], radii: &[f64]) -> Result<WeissProfile> {
    if radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("radii", "must be strictly increasing"));
    }
    let values = radii
        .iter()
        .map(|&r| weiss_energy(u, x0, r))
        .collect::<Result<Vec<_>>>()?;
    Ok(WeissProfile {
        center: x0.to_vec(),
        radii: radii.to_vec(),
        values,
    })
}

#[derive(Clone, Debug)]
pub struct BlowupRecord {
    pub r: f64,
    pub field: GridFunction,
    /// `sup_{B₁} |u_r - (x·ν)⁺|` for the best direction.
    pub fit_error: f64,
    pub normal: Vec<f64>,
    /// Hausdorff distance between the free boundary and `{x·ν = 0}` in `B_{1/2}`.
    pub fb_distance: f64,
}

pub fn blowup_sequence(u: &GridFunction, x0: &[f64], radii: &[f64]) -> Result<Vec<BlowupRecord>> {
    let g = u.grid();
    let dim = g.dim();
    if !on_free_boundary(u, x0) {
        return Err(Error::pre("center_on_free_boundary", format!("{x0:?} is not on F(u)")));
    }
    if radii.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::param("radii", "must be strictly decreasing"));
    }
    radii
        .iter()
        .map(|&r| {
            if r < MESH_FLOOR * g.h() - 1e-12 {
                return Err(Error::Unresolvable(format!("radius {r} below 16h")));
            }
            let field = rescale(u, r, x0)?;
            let cert = best_direction(&field, &Ball::unit())?;
            let nu = &cert.normal;
            let half = Ball::centered(0.5);
            let fb_distance = match extract_free_boundary(&field) {
                Ok(fb) => {
                    let pts = fb.in_ball(&half);
                    let off = pts
                        .iter()
                        .map(|&i| (0..dim).map(|k| fb.points[i][k] * nu[k]).sum::<f64>().abs())
                        .fold(0.0, f64::max);
                    // Sample the hyperplane and measure distance to the point set.
                    let e = crate::solver::orthogonal(nu);
                    let m = 64;
                    let mut back: f64 = 0.0;
                    for j in 0..=m {
                        let s = -0.5 + j as f64 / m as f64;
                        let y: Vec<f64> = e.iter().map(|v| v * s).collect();
                        let d = fb
                            .points
                            .iter()
                            .map(|p| p.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
                            .fold(f64::INFINITY, f64::min)
                            .sqrt();
                        back = back.max(d);
                    }
                    off.max(back)
                }
                Err(Error::Empty(_)) => f64::INFINITY,
                Err(e) => return Err(e),
            };
            Ok(BlowupRecord {
                r,
                field,
                fit_error: cert.deviation,
                normal: cert.normal,
                fb_distance,
            })
        })
        .collect()
}
