//! Flatness against half-plane solutions, the ε-rescaling and its Neumann
//! linearization, the improvement-of-flatness iteration, free-boundary
//! extraction and its measure.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{Matrix2, Matrix3, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::elliptic::neumann_halfball_solve;
use crate::energy::rescale;
use crate::error::{Error, Result};
use crate::lattice::{dist2, norm, pad, sample, Ball, GridFunction, Point, Role};
use crate::solver::free_boundary_threshold;

/// Directions in the angular net: 2D and 3D.
pub const NET_2D: usize = 720;
pub const NET_3D: usize = 2048;
/// Smallest scale, in grid spacings, at which multi-scale iterations measure.
pub const MESH_FLOOR: f64 = 16.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlatnessCertificate {
    pub center: Vec<f64>,
    pub scale: f64,
    pub normal: Vec<f64>,
    /// `sup_{B_r} |u - ((x - x₀)·ν)⁺| / r`.
    pub deviation: f64,
}

/// Node offsets and values in a ball, relative to its center.
struct Sampled {
    offsets: Vec<Point>,
    values: Vec<f64>,
    dim: usize,
    r: f64,
}

impl Sampled {
    fn new(u: &GridFunction, ball: &Ball) -> Result<Sampled> {
        let g = u.grid();
        g.require_ball(ball)?;
        let nodes = g.nodes_in_ball(ball);
        if nodes.is_empty() {
            return Err(Error::Empty("ball contains no nodes".into()));
        }
        let dim = g.dim();
        let offsets = nodes
            .iter()
            .map(|&i| {
                let x = g.coords(i);
                let mut y = [0.0; 3];
                for k in 0..dim {
                    y[k] = x[k] - ball.center[k];
                }
                y
            })
            .collect();
        Ok(Sampled {
            offsets,
            values: nodes.iter().map(|&i| u.value(i)).collect(),
            dim,
            r: ball.radius,
        })
    }

    fn deviation(&self, nu: &[f64]) -> f64 {
        let mut m: f64 = 0.0;
        for (y, &v) in self.offsets.iter().zip(&self.values) {
            let mut d = 0.0;
            for k in 0..self.dim {
                d += y[k] * nu[k];
            }
            m = m.max((v - d.max(0.0)).abs());
        }
        m / self.r
    }
}

fn unit_vec(nu: &[f64], dim: usize) -> Result<Vec<f64>> {
    if nu.len() != dim {
        return Err(Error::param("nu", format!("expected {dim} components")));
    }
    let l = norm(nu);
    if !(l > 0.0) || !l.is_finite() {
        return Err(Error::param("nu", "must be a nonzero finite vector"));
    }
    Ok(nu.iter().map(|v| v / l).collect())
}

pub fn flatness(u: &GridFunction, ball: &Ball, nu: &[f64]) -> Result<f64> {
    let nu = unit_vec(nu, u.dim())?;
    Ok(Sampled::new(u, ball)?.deviation(&nu))
}

fn polar(t: f64) -> Vec<f64> {
    vec![t.cos(), t.sin()]
}

fn fibonacci_sphere(n: usize) -> Vec<Vec<f64>> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let t = golden * i as f64;
            vec![r * t.cos(), r * t.sin(), z]
        })
        .collect()
}

fn argmin(vals: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in vals.iter().enumerate() {
        if v < vals[best] {
            best = i;
        }
    }
    best
}

/// Minimizing direction: a uniform net, then local refinement.
pub fn best_direction(u: &GridFunction, ball: &Ball) -> Result<FlatnessCertificate> {
    let s = Sampled::new(u, ball)?;
    let dim = s.dim;
    let normal = if dim == 2 {
        let step = 2.0 * PI / NET_2D as f64;
        let vals: Vec<f64> = (0..NET_2D)
            .into_par_iter()
            .map(|i| s.deviation(&polar(i as f64 * step)))
            .collect();
        let t0 = argmin(&vals) as f64 * step;
        let (mut a, mut b) = (t0 - step, t0 + step);
        let phi = 0.5 * (5f64.sqrt() - 1.0);
        let mut c = b - phi * (b - a);
        let mut d = a + phi * (b - a);
        let (mut fc, mut fd) = (s.deviation(&polar(c)), s.deviation(&polar(d)));
        for _ in 0..48 {
            if fc <= fd {
                b = d;
                d = c;
                fd = fc;
                c = b - phi * (b - a);
                fc = s.deviation(&polar(c));
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + phi * (b - a);
                fd = s.deviation(&polar(d));
            }
        }
        let t = 0.5 * (a + b);
        if s.deviation(&polar(t)) <= vals[argmin(&vals)] {
            polar(t)
        } else {
            polar(t0)
        }
    } else {
        let net = fibonacci_sphere(NET_3D);
        let vals: Vec<f64> = net.par_iter().map(|nu| s.deviation(nu)).collect();
        let mut nu = net[argmin(&vals)].clone();
        let mut f = vals[argmin(&vals)];
        let mut step = (4.0 * PI / NET_3D as f64).sqrt();
        for _ in 0..40 {
            let e1 = crate::solver::orthogonal(&nu);
            let e2 = vec![
                nu[1] * e1[2] - nu[2] * e1[1],
                nu[2] * e1[0] - nu[0] * e1[2],
                nu[0] * e1[1] - nu[1] * e1[0],
            ];
            let mut improved = false;
            for (e, sgn) in [(&e1, 1.0), (&e1, -1.0), (&e2, 1.0), (&e2, -1.0)] {
                let cand: Vec<f64> = (0..3).map(|k| nu[k] + sgn * step * e[k]).collect();
                let cand = unit_vec(&cand, 3)?;
                let fv = s.deviation(&cand);
                if fv < f {
                    f = fv;
                    nu = cand;
                    improved = true;
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        nu
    };
    Ok(FlatnessCertificate {
        center: ball.center[..dim].to_vec(),
        scale: ball.radius,
        deviation: s.deviation(&normal),
        normal,
    })
}

/// Whether a free-boundary transition passes within `2h` of `x`.
pub fn on_free_boundary(u: &GridFunction, x: &[f64]) -> bool {
    let g = u.grid();
    let tau = free_boundary_threshold(g.h());
    let ball = Ball {
        center: pad(x),
        radius: 2.0 * g.h(),
    };
    let nodes = g.nodes_in_ball(&ball);
    nodes.iter().any(|&i| u.value(i) > tau) && nodes.iter().any(|&i| u.value(i) <= tau)
}

/// `ū_ε = (u - x·ν)/ε`, defined on the positivity nodes.
#[derive(Clone, Debug)]
pub struct EpsilonRescaled {
    pub field: GridFunction,
    pub defined: Vec<bool>,
}

pub fn epsilon_rescale(u: &GridFunction, eps: f64, nu: &[f64]) -> Result<EpsilonRescaled> {
    let g = u.grid();
    let dim = g.dim();
    let nu = unit_vec(nu, dim)?;
    if !(eps >= 4.0 * g.h()) {
        return Err(Error::Unresolvable(format!(
            "eps = {eps} below 4h = {}",
            4.0 * g.h()
        )));
    }
    let mut defined = vec![false; g.len()];
    let values = (0..g.len())
        .map(|i| {
            let x = g.coords(i);
            if u.value(i) > 0.0 {
                defined[i] = true;
                (u.value(i) - (0..dim).map(|k| x[k] * nu[k]).sum::<f64>()) / eps
            } else {
                0.0
            }
        })
        .collect();
    Ok(EpsilonRescaled {
        field: GridFunction::new(g.clone(), values, Role::Signed)?,
        defined,
    })
}

/// Distance between `ū_ε` and the Neumann solution with its boundary data,
/// over `B⁺_{1/4} ∩ {x_n > 2ε}`. The direction must be `e_n`.
pub fn linearization_residual(u: &GridFunction, eps: f64, nu: &[f64]) -> Result<f64> {
    let g = u.grid();
    let dim = g.dim();
    let n = dim - 1;
    let nu = unit_vec(nu, dim)?;
    if (nu[n] - 1.0).abs() > 1e-12 {
        return Err(Error::pre("axis_aligned", "direction must be e_n"));
    }
    let unit = Ball::unit();
    let f = flatness(u, &unit, &nu)?;
    if f > eps * (1.0 + 1e-12) {
        return Err(Error::pre("flatness_hypothesis", format!("flatness {f} > ε = {eps}")));
    }
    let ubar = epsilon_rescale(u, eps, &nu)?;
    let data = sample(|x| x[n], g, Role::Signed)?;
    let data = data.with_values(
        u.values()
            .iter()
            .zip(data.values())
            .map(|(v, xn)| (v - xn) / eps)
            .collect(),
    )?;
    let (u0, _) = neumann_halfball_solve(&data, &unit)?;
    let quarter = Ball::centered(0.25);
    let mut worst: f64 = 0.0;
    for i in g.nodes_in_ball(&quarter) {
        if ubar.defined[i] && g.coords(i)[n] > 2.0 * eps {
            worst = worst.max((ubar.field.value(i) - u0.value(i)).abs());
        }
    }
    Ok(worst)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlatnessStep {
    pub step: usize,
    pub certificate: FlatnessCertificate,
    /// `ε_k / ε_{k-1}`.
    pub factor: Option<f64>,
    /// `η^{1+α} + 20h/ε_{k-1}`.
    pub bound: Option<f64>,
    pub passed: Option<bool>,
    /// `κ η^{kβ}` against `ε_k^{n+4}`.
    pub sigma: f64,
    pub eps_power: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlatnessIteration {
    pub eta: f64,
    pub alpha: f64,
    pub steps: Vec<FlatnessStep>,
    /// Longest run of consecutive passing decay steps.
    pub consecutive_passes: usize,
    pub all_passed: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlatnessParams {
    pub eta: f64,
    pub alpha: f64,
    pub kappa: f64,
    pub beta: f64,
}

impl Default for FlatnessParams {
    fn default() -> Self {
        FlatnessParams {
            eta: 0.125,
            alpha: 0.25,
            kappa: 0.0,
            beta: 1.0,
        }
    }
}

impl FlatnessParams {
    fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::param("eta", "must lie in (0, 1)"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::param("alpha", "must lie in (0, 1)"));
        }
        if !(self.kappa >= 0.0) || !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::param("kappa", "κ ≥ 0 and β ∈ (0, 1] required"));
        }
        Ok(())
    }
}

/// `(u - h/2)⁺`, whose zero set boundary is the extracted free boundary.
fn above_threshold(u: &GridFunction) -> Result<GridFunction> {
    let tau = free_boundary_threshold(u.grid().h());
    u.with_values(u.values().iter().map(|v| (v - tau).max(0.0)).collect())
}

fn certificate_at(u: &GridFunction, x0: &[f64], r: f64) -> Result<FlatnessCertificate> {
    let ur = rescale(u, r, x0)?;
    let mut c = best_direction(&ur, &Ball::unit())?;
    c.center = x0.to_vec();
    c.scale = r;
    Ok(c)
}

/// One step: from `ε`-flatness on `B_r(x₀)` to the certificate on `B_{ηr}(x₀)`.
/// Certificates measure `(u - h/2)⁺`, so `x₀` is a point of the extracted free boundary.
pub fn improve_flatness(
    u: &GridFunction,
    x0: &[f64],
    r: f64,
    eps: f64,
    sigma: f64,
    params: &FlatnessParams,
) -> Result<(FlatnessCertificate, FlatnessCertificate)> {
    params.validate()?;
    let dim = u.dim();
    if !on_free_boundary(u, x0) {
        return Err(Error::pre("center_on_free_boundary", format!("{x0:?} is not on F(u)")));
    }
    if sigma > eps.powi(dim as i32 + 4) {
        return Err(Error::pre("sigma_gate", format!("σ = {sigma:e} > ε^(n+4)")));
    }
    let ut = above_threshold(u)?;
    let outer = certificate_at(&ut, x0, r)?;
    if outer.deviation > eps {
        return Err(Error::pre(
            "flatness_hypothesis",
            format!("flatness {} > ε = {eps}", outer.deviation),
        ));
    }
    let inner = certificate_at(&ut, x0, params.eta * r)?;
    Ok((outer, inner))
}

/// Repeats the step from scale 1 while the current scale is at least `16h`.
/// Certificates measure `(u - h/2)⁺` as in [`improve_flatness`].
pub fn iterate_flatness(
    u: &GridFunction,
    x0: &[f64],
    eps0: f64,
    params: &FlatnessParams,
) -> Result<FlatnessIteration> {
    params.validate()?;
    let g = u.grid();
    let h = g.h();
    let dim = g.dim();
    if !on_free_boundary(u, x0) {
        return Err(Error::pre("center_on_free_boundary", format!("{x0:?} is not on F(u)")));
    }
    if params.kappa > eps0.powi(dim as i32 + 4) {
        return Err(Error::pre("sigma_gate", "κ > ε₀^(n+4)"));
    }
    let ut = above_threshold(u)?;
    let first = certificate_at(&ut, x0, 1.0)?;
    if first.deviation > eps0 {
        return Err(Error::pre(
            "flatness_hypothesis",
            format!("flatness {} > ε₀ = {eps0}", first.deviation),
        ));
    }
    let decay = params.eta.powf(1.0 + params.alpha);
    let mut steps = vec![FlatnessStep {
        step: 0,
        sigma: params.kappa,
        eps_power: first.deviation.powi(dim as i32 + 4),
        certificate: first,
        factor: None,
        bound: None,
        passed: None,
    }];
    let mut r = 1.0;
    while r >= MESH_FLOOR * h - 1e-12 {
        let next = r * params.eta;
        let cert = match certificate_at(&ut, x0, next) {
            Ok(c) => c,
            Err(Error::Unresolvable(_)) => break,
            Err(e) => return Err(e),
        };
        let k = steps.len();
        let prev = steps[k - 1].certificate.deviation;
        let factor = if prev > 0.0 { cert.deviation / prev } else { 0.0 };
        let bound = decay + 20.0 * h / prev.max(f64::MIN_POSITIVE);
        steps.push(FlatnessStep {
            step: k,
            sigma: params.kappa * params.eta.powf(k as f64 * params.beta),
            eps_power: cert.deviation.powi(dim as i32 + 4),
            certificate: cert,
            factor: Some(factor),
            bound: Some(bound),
            passed: Some(factor <= bound),
        });
        r = next;
    }
    let mut run = 0;
    let mut best = 0;
    for s in &steps[1..] {
        if s.passed == Some(true) {
            run += 1;
            best = best.max(run);
        } else {
            run = 0;
        }
    }
    Ok(FlatnessIteration {
        eta: params.eta,
        alpha: params.alpha,
        all_passed: steps.len() > 1 && steps[1..].iter().all(|s| s.passed == Some(true)),
        consecutive_passes: best,
        steps,
    })
}

/// Sub-grid points where `u` crosses the threshold `h/2` along grid edges.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FreeBoundary {
    pub dim: usize,
    pub h: f64,
    pub points: Vec<Vec<f64>>,
    /// Unit normals pointing into the positivity set.
    pub normals: Vec<Vec<f64>>,
    /// Axis of the edge carrying each point.
    pub axes: Vec<usize>,
    /// Lower node of the edge carrying each point.
    pub edges: Vec<usize>,
    /// Pairs of points on edges of a common cell.
    pub adjacency: Vec<(usize, usize)>,
}

impl FreeBoundary {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Indices of the points in the closed ball.
    pub fn in_ball(&self, ball: &Ball) -> Vec<usize> {
        let r2 = ball.radius * ball.radius;
        (0..self.len())
            .filter(|&i| dist2(&pad(&self.points[i]), &ball.center, self.dim) <= r2)
            .collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let names = ["x", "y", "z"];
        let mut header: Vec<String> = names[..self.dim].iter().map(|s| s.to_string()).collect();
        header.extend(names[..self.dim].iter().map(|s| format!("n{s}")));
        out.write_record(&header)?;
        for (p, nrm) in self.points.iter().zip(&self.normals) {
            let row: Vec<String> = p.iter().chain(nrm).map(|v| format!("{v}")).collect();
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn extract_free_boundary(u: &GridFunction) -> Result<FreeBoundary> {
    let g = u.grid();
    let dim = g.dim();
    let h = g.h();
    let tau = free_boundary_threshold(h);
    let st = g.strides();
    let mut points = Vec::new();
    let mut axes = Vec::new();
    let mut edges = Vec::new();
    let mut by_edge: HashMap<(usize, usize), usize> = HashMap::new();
    for i in 0..g.len() {
        let ix = g.multi_index(i);
        for k in 0..dim {
            if ix[k] + 1 >= g.shape()[k] {
                continue;
            }
            let j = i + st[k];
            let (a, b) = (u.value(i), u.value(j));
            if (a > tau) == (b > tau) {
                continue;
            }
            let t = ((tau - a) / (b - a)).clamp(0.0, 1.0);
            let mut x = g.coords(i);
            x[k] += t * h;
            by_edge.insert((i, k), points.len());
            points.push(x[..dim].to_vec());
            axes.push(k);
            edges.push(i);
        }
    }
    if points.is_empty() {
        return Err(Error::Empty("no free-boundary transition".into()));
    }
    let mut adjacency = Vec::new();
    let corners = g.corner_offsets();
    let mut seen = std::collections::BTreeSet::new();
    for &e in &edges {
        // Every cell having edge lower node `e` among its corners.
        for &o in &corners {
            if o > e {
                continue;
            }
            let c = e - o;
            if !g.is_cell(c) || !seen.insert(c) {
                continue;
            }
            let mut members = Vec::new();
            for &oa in &corners {
                for k in 0..dim {
                    let node = c + oa;
                    let local = g.multi_index(node);
                    let base = g.multi_index(c);
                    if local[k] != base[k] {
                        continue;
                    }
                    if let Some(&p) = by_edge.get(&(node, k)) {
                        members.push(p);
                    }
                }
            }
            members.sort_unstable();
            members.dedup();
            for a in 0..members.len() {
                for b in a + 1..members.len() {
                    adjacency.push((members[a], members[b]));
                }
            }
        }
    }
    adjacency.sort_unstable();
    adjacency.dedup();
    let normals = estimate_normals(u, &points, &edges, &axes, 3.0 * h);
    Ok(FreeBoundary {
        dim,
        h,
        points,
        normals,
        axes,
        edges,
        adjacency,
    })
}

/// Principal-axis normal of the neighbouring points, oriented towards `{u > 0}`.
fn estimate_normals(
    u: &GridFunction,
    points: &[Vec<f64>],
    edges: &[usize],
    axes: &[usize],
    radius: f64,
) -> Vec<Vec<f64>> {
    let g = u.grid();
    let dim = g.dim();
    let key = |p: &[f64]| -> [i64; 3] {
        let mut k = [0i64; 3];
        for d in 0..dim {
            k[d] = (p[d] / radius).floor() as i64;
        }
        k
    };
    let mut buckets: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    for (i, p) in points.iter().enumerate() {
        buckets.entry(key(p)).or_default().push(i);
    }
    let st = g.strides();
    (0..points.len())
        .into_par_iter()
        .map(|i| {
            let p = &points[i];
            let k = key(p);
            let mut nb = Vec::new();
            for dx in -1..=1i64 {
                for dy in -1..=1i64 {
                    for dz in if dim == 3 { -1..=1i64 } else { 0..=0 } {
                        if let Some(v) = buckets.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                            for &j in v {
                                if dist2(&pad(&points[j]), &pad(p), dim) <= radius * radius {
                                    nb.push(j);
                                }
                            }
                        }
                    }
                }
            }
            let m = nb.len() as f64;
            let mut mean = [0.0; 3];
            for &j in &nb {
                for d in 0..dim {
                    mean[d] += points[j][d] / m;
                }
            }
            let mut cov = [[0.0; 3]; 3];
            for &j in &nb {
                for a in 0..dim {
                    for b in 0..dim {
                        cov[a][b] += (points[j][a] - mean[a]) * (points[j][b] - mean[b]);
                    }
                }
            }
            let mut nrm = smallest_eigenvector(&cov, dim);
            // Orient along increasing u across the carrying edge.
            let (a, b) = (edges[i], edges[i] + st[axes[i]]);
            let sgn = if u.value(b) > u.value(a) { 1.0 } else { -1.0 };
            if nrm[axes[i]] * sgn < 0.0 {
                nrm.iter_mut().for_each(|v| *v = -*v);
            }
            nrm
        })
        .collect()
}

fn smallest_eigenvector(cov: &[[f64; 3]; 3], dim: usize) -> Vec<f64> {
    if dim == 2 {
        let m = Matrix2::new(cov[0][0], cov[0][1], cov[1][0], cov[1][1]);
        let e = SymmetricEigen::new(m);
        let i = if e.eigenvalues[0] <= e.eigenvalues[1] { 0 } else { 1 };
        let v = e.eigenvectors.column(i);
        vec![v[0], v[1]]
    } else {
        let m = Matrix3::from_fn(|a, b| cov[a][b]);
        let e = SymmetricEigen::new(m);
        let mut i = 0;
        for k in 1..3 {
            if e.eigenvalues[k] < e.eigenvalues[i] {
                i = k;
            }
        }
        let v = e.eigenvectors.column(i);
        vec![v[0], v[1], v[2]]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HausdorffEstimate {
    pub box_sizes: Vec<f64>,
    pub box_counts: Vec<usize>,
    /// Slope of `log N(s)` against `log(1/s)`.
    pub dimension: f64,
    /// `N(s) s^{n-1}` at the finest box size.
    pub content: f64,
    /// Length (2D) or area (3D) from edge crossings weighted by the normals.
    pub measure: f64,
}

/// Grid offsets per axis tried by the box count.
const BOX_SHIFTS: usize = 4;

/// Box counting over dyadic boxes of sizes in `[4h, 1/4]`, restricted to `ball`. Each
/// count is the smallest over box grids shifted by multiples of `s/4` per axis.
pub fn hausdorff_estimate(fb: &FreeBoundary, ball: &Ball) -> Result<HausdorffEstimate> {
    let idx = fb.in_ball(ball);
    if idx.is_empty() {
        return Err(Error::Empty("no free-boundary points in ball".into()));
    }
    let dim = fb.dim;
    let mut sizes = Vec::new();
    let mut s = 0.25;
    while s >= 4.0 * fb.h - 1e-15 {
        sizes.push(s);
        s *= 0.5;
    }
    if sizes.len() < 2 {
        return Err(Error::Unresolvable("fewer than two box sizes in [4h, 1/4]".into()));
    }
    let counts: Vec<usize> = sizes
        .iter()
        .map(|&s| {
            (0..BOX_SHIFTS.pow(dim as u32))
                .map(|code| {
                    let mut shift = [0.0; 3];
                    let mut c = code;
                    for sh in shift.iter_mut().take(dim) {
                        *sh = (c % BOX_SHIFTS) as f64 / BOX_SHIFTS as f64;
                        c /= BOX_SHIFTS;
                    }
                    let mut boxes = std::collections::BTreeSet::new();
                    for &i in &idx {
                        let p = &fb.points[i];
                        let mut k = [0i64; 3];
                        for d in 0..dim {
                            k[d] = (p[d] / s + shift[d]).floor() as i64;
                        }
                        boxes.insert(k);
                    }
                    boxes.len()
                })
                .min()
                .expect("at least one shift")
        })
        .collect();
    let xs: Vec<f64> = sizes.iter().map(|s| (1.0 / s).ln()).collect();
    let ys: Vec<f64> = counts.iter().map(|&c| (c as f64).ln()).collect();
    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let finest = *sizes.last().unwrap();
    let cell = fb.h.powi(dim as i32 - 1);
    let measure = idx
        .iter()
        .map(|&i| fb.normals[i][fb.axes[i]].abs() * cell)
        .sum();
    Ok(HausdorffEstimate {
        dimension: sxy / sxx,
        content: *counts.last().unwrap() as f64 * finest.powi(dim as i32 - 1),
        box_sizes: sizes,
        box_counts: counts,
        measure,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct C1AlphaFit {
    pub normal: Vec<f64>,
    /// `sup_ρ  inf_l sup_{B_ρ} |graph - l| / ρ^{1+α}` over dyadic ρ down to `16h`.
    pub seminorm: f64,
    pub scales: Vec<f64>,
    pub residuals: Vec<f64>,
}

fn least_squares_residual(s: &[Vec<f64>], t: &[f64]) -> f64 {
    let m = s.first().map_or(0, |v| v.len()) + 1;
    let mut ata = nalgebra::DMatrix::<f64>::zeros(m, m);
    let mut atb = nalgebra::DVector::<f64>::zeros(m);
    for (si, &ti) in s.iter().zip(t) {
        let row: Vec<f64> = std::iter::once(1.0).chain(si.iter().copied()).collect();
        for a in 0..m {
            atb[a] += row[a] * ti;
            for b in 0..m {
                ata[(a, b)] += row[a] * row[b];
            }
        }
    }
    let coef = match ata.clone().cholesky() {
        Some(c) => c.solve(&atb),
        None => return f64::INFINITY,
    };
    s.iter()
        .zip(t)
        .map(|(si, &ti)| {
            let fit = coef[0] + si.iter().enumerate().map(|(k, v)| coef[k + 1] * v).sum::<f64>();
            (ti - fit).abs()
        })
        .fold(0.0, f64::max)
}

/// Graph fit of the free boundary over `window` in the mean-normal frame.
pub fn c1alpha_fit(fb: &FreeBoundary, window: &Ball, alpha: f64) -> Result<C1AlphaFit> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::param("alpha", "must lie in (0, 1)"));
    }
    let idx = fb.in_ball(window);
    if idx.len() < 3 {
        return Err(Error::Empty("too few free-boundary points in window".into()));
    }
    let dim = fb.dim;
    let mut nu = vec![0.0; dim];
    for &i in &idx {
        for d in 0..dim {
            nu[d] += fb.normals[i][d];
        }
    }
    let nu = unit_vec(&nu, dim)?;
    let e1 = crate::solver::orthogonal(&nu);
    let frame: Vec<Vec<f64>> = if dim == 2 {
        vec![e1]
    } else {
        let e2 = vec![
            nu[1] * e1[2] - nu[2] * e1[1],
            nu[2] * e1[0] - nu[0] * e1[2],
            nu[0] * e1[1] - nu[1] * e1[0],
        ];
        vec![e1, e2]
    };
    let c = window.center;
    let local: Vec<(Vec<f64>, f64)> = idx
        .iter()
        .map(|&i| {
            let y: Vec<f64> = (0..dim).map(|d| fb.points[i][d] - c[d]).collect();
            let s = frame
                .iter()
                .map(|e| e.iter().zip(&y).map(|(a, b)| a * b).sum())
                .collect();
            (s, nu.iter().zip(&y).map(|(a, b)| a * b).sum())
        })
        .collect();
    let mut scales = Vec::new();
    let mut residuals = Vec::new();
    let mut rho = window.radius;
    let mut seminorm: f64 = 0.0;
    while rho >= MESH_FLOOR * fb.h - 1e-15 {
        let (s, t): (Vec<Vec<f64>>, Vec<f64>) = local
            .iter()
            .filter(|(s, _)| norm(s) <= rho)
            .cloned()
            .unzip();
        if t.len() >= dim + 1 {
            let r = least_squares_residual(&s, &t);
            seminorm = seminorm.max(r / rho.powf(1.0 + alpha));
            scales.push(rho);
            residuals.push(r);
        }
        rho *= 0.5;
    }
    Ok(C1AlphaFit {
        normal: nu,
        seminorm,
        scales,
        residuals,
    })
}

/// Largest cell gradient over cells of `ball` whose center lies within `d` of a
/// free-boundary point.
pub fn gradient_near_free_boundary(
    u: &GridFunction,
    fb: &FreeBoundary,
    ball: &Ball,
    d: f64,
) -> Result<f64> {
    let g = u.grid();
    g.require_ball(ball)?;
    let dim = g.dim();
    let key = |p: &[f64]| -> [i64; 3] {
        let mut k = [0i64; 3];
        for a in 0..dim {
            k[a] = (p[a] / d).floor() as i64;
        }
        k
    };
    let mut buckets: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    for (i, p) in fb.points.iter().enumerate() {
        buckets.entry(key(p)).or_default().push(i);
    }
    let near = |x: &Point| {
        let k = key(&x[..dim]);
        for dx in -1..=1i64 {
            for dy in -1..=1i64 {
                for dz in if dim == 3 { -1..=1i64 } else { 0..=0 } {
                    if let Some(v) = buckets.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                        if v.iter().any(|&j| dist2(&pad(&fb.points[j]), x, dim) <= d * d) {
                            return true;
                        }
                    }
                }
            }
        }
        false
    };
    let st = crate::lattice::CellStencil::new(g);
    Ok(g.cells_in_ball(ball)
        .into_iter()
        .filter(|&c| near(&g.cell_center(c)))
        .map(|c| st.density(u.values(), c).sqrt())
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{make_grid, Grid};
    use crate::solver::{fixture, Fixture};

    fn grid(h: f64, half: f64) -> Grid {
        make_grid(&[(-half, half), (-half, half)], h).unwrap()
    }

    #[test]
    fn flatness_examples() {
        let h = 1.0 / 128.0;
        let g = grid(h, 1.25);
        let b = Ball::unit();
        let u = sample(|x| x[1].max(0.0), &g, Role::U).unwrap();
        let c = best_direction(&u, &b).unwrap();
        assert!(c.deviation <= 10.0 * h);
        assert!((c.normal[1] - 1.0).abs() < 1e-6 && c.normal[0].abs() < 1e-3, "{c:?}");
        let t: f64 = 0.1;
        let tilted = sample(|x| (t.sin() * x[0] + t.cos() * x[1]).max(0.0), &g, Role::U).unwrap();
        let f = flatness(&tilted, &b, &[0.0, 1.0]).unwrap();
        assert!((f - t.sin()).abs() <= 10.0 * h, "{f}");
        let z = GridFunction::zeros(&g, Role::U);
        assert!((flatness(&z, &b, &[0.6, 0.8]).unwrap() - 1.0).abs() <= 10.0 * h);
    }

    #[test]
    fn flatness_is_rotation_equivariant() {
        let h = 1.0 / 128.0;
        let g = grid(h, 1.25);
        let b = Ball::unit();
        let u = sample(|x| (x[1] + 0.2 * x[0] * x[0]).max(0.0), &g, Role::U).unwrap();
        let v = sample(|x| (-x[0] + 0.2 * x[1] * x[1]).max(0.0), &g, Role::U).unwrap();
        let a = flatness(&u, &b, &[0.3, 0.9]).unwrap();
        let r = flatness(&v, &b, &[-0.9, 0.3]).unwrap();
        assert!((a - r).abs() < 1e-12);
    }

    #[test]
    fn epsilon_rescale_examples() {
        let h = 1.0 / 128.0;
        let g = grid(h, 1.25);
        let u = sample(|x| x[1].max(0.0), &g, Role::U).unwrap();
        let r = epsilon_rescale(&u, 0.1, &[0.0, 1.0]).unwrap();
        assert!((0..g.len()).all(|i| !r.defined[i] || r.field.value(i).abs() < 1e-12));
        let eps = 0.1;
        let bump = sample(|x| (x[1] + eps * (3.0 * x[0]).sin()).max(0.0), &g, Role::U).unwrap();
        let r = epsilon_rescale(&bump, eps, &[0.0, 1.0]).unwrap();
        for i in 0..g.len() {
            let x = g.coords(i);
            if x[1] > eps && x[0].abs() < 1.0 {
                assert!((r.field.value(i) - (3.0 * x[0]).sin()).abs() <= 10.0 * h / eps);
            }
        }
        assert!(epsilon_rescale(&u, h, &[0.0, 1.0]).is_err());
    }

    #[test]
    fn linearization_examples() {
        let h = 1.0 / 128.0;
        let g = grid(h, 1.25);
        let u = sample(|x| x[1].max(0.0), &g, Role::U).unwrap();
        assert!(linearization_residual(&u, 0.05, &[0.0, 1.0]).unwrap() <= 10.0 * h / 0.05);
        let eps = 0.05;
        let bump = sample(
            |x| (x[1] + eps * (x[0] * x[0] - x[1] * x[1])).max(0.0),
            &g,
            Role::U,
        )
        .unwrap();
        let r = linearization_residual(&bump, eps, &[0.0, 1.0]).unwrap();
        assert!(r <= 2.0 * (h / eps + eps), "{r}");
        assert!(matches!(
            linearization_residual(&bump, 0.01, &[0.0, 1.0]),
            Err(Error::Precondition { name: "flatness_hypothesis", .. })
        ));
    }

    #[test]
    fn iteration_on_half_plane_and_wedge() {
        let h = 1.0 / 256.0;
        let g = grid(h, 1.25);
        let p = FlatnessParams::default();
        let x0 = [0.0, h / 2.0];
        let u = sample(|x| x[1].max(0.0), &g, Role::U).unwrap();
        let it = iterate_flatness(&u, &x0, 0.1, &p).unwrap();
        assert!(it.steps.len() >= 2);
        for (k, s) in it.steps.iter().enumerate() {
            let floor = 10.0 * h / p.eta.powi(k as i32);
            assert!(s.certificate.deviation <= floor, "{s:?}");
            assert!(s.certificate.normal[1] > 0.999);
        }
        let w = fixture(&Fixture::Wedge { gamma: 1.5, normal: vec![0.0, 1.0] }, &g).unwrap();
        let it = iterate_flatness(&w, &x0, 0.6, &p).unwrap();
        assert!(!it.all_passed);
        assert!(matches!(
            iterate_flatness(&w, &[0.0, 0.5], 0.6, &p),
            Err(Error::Precondition { name: "center_on_free_boundary", .. })
        ));
    }

    #[test]
    fn free_boundary_of_half_plane() {
        let h = 1.0 / 128.0;
        let g = grid(h, 1.0);
        let u = sample(|x| x[1].max(0.0), &g, Role::U).unwrap();
        let fb = extract_free_boundary(&u).unwrap();
        let tau = free_boundary_threshold(h);
        for (p, (&e, &k)) in fb.points.iter().zip(fb.edges.iter().zip(&fb.axes)) {
            let a = u.value(e);
            let b = u.value(e + g.strides()[k]);
            assert!((a > tau) != (b > tau));
            assert!((p[1] - h / 2.0).abs() < 1e-12);
        }
        let est = hausdorff_estimate(&fb, &Ball::centered(0.5)).unwrap();
        assert!((est.measure - 1.0).abs() <= 20.0 * h, "{est:?}");
        assert!((est.dimension - 1.0).abs() <= 0.05, "{est:?}");
        let fit = c1alpha_fit(&fb, &Ball::centered(0.25), 0.25).unwrap();
        assert!(fit.seminorm < 1e-9);
        let z = GridFunction::zeros(&g, Role::U);
        assert!(matches!(extract_free_boundary(&z), Err(Error::Empty(_))));
    }

    #[test]
    fn circle_length() {
        let h = 1.0 / 256.0;
        let g = grid(h, 1.0);
        let r0 = 0.3;
        let u = fixture(&Fixture::ExteriorRadial { center: vec![0.0, 0.0], r0 }, &g).unwrap();
        let fb = extract_free_boundary(&u).unwrap();
        let est = hausdorff_estimate(&fb, &Ball::centered(0.9)).unwrap();
        assert!((est.measure - 2.0 * PI * r0).abs() <= 20.0 * h, "{}", est.measure);
        assert!((est.dimension - 1.0).abs() <= 0.1, "{}", est.dimension);
        let near = gradient_near_free_boundary(&u, &fb, &Ball::centered(0.9), 0.1).unwrap();
        assert!(near < 1.1, "{near}");
    }
}
