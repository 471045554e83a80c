//! Quadratic barriers, touching, the sub/supersolution exclusion tests, the
//! comparison principle and the two properties used by improvement of flatness.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{dist2, norm, pad, Ball, GridFunction, Point};
use crate::regularity::harnack_gap;

/// Slack for declaring contact, in multiples of `h`.
pub const CONTACT_SLACK: f64 = 10.0;

/// `P(x) = c + b·x + ½ xᵀAx`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadraticPolynomial {
    pub c: f64,
    pub b: Vec<f64>,
    pub a: Vec<Vec<f64>>,
}

impl QuadraticPolynomial {
    pub fn new(c: f64, b: Vec<f64>, a: Vec<Vec<f64>>) -> Result<QuadraticPolynomial> {
        let n = b.len();
        if !(2..=3).contains(&n) || a.len() != n || a.iter().any(|row| row.len() != n) {
            return Err(Error::param("a", "matrix and vector dimensions disagree"));
        }
        for i in 0..n {
            for j in 0..n {
                if (a[i][j] - a[j][i]).abs() > 1e-12 * (1.0 + a[i][j].abs()) {
                    return Err(Error::param("a", "matrix is not symmetric"));
                }
            }
        }
        if !c.is_finite() || b.iter().chain(a.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::param("coefficients", "must be finite"));
        }
        Ok(QuadraticPolynomial { c, b, a })
    }

    pub fn linear(c: f64, b: Vec<f64>) -> QuadraticPolynomial {
        let n = b.len();
        QuadraticPolynomial {
            c,
            b,
            a: vec![vec![0.0; n]; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let n = self.dim();
        let mut v = self.c;
        for i in 0..n {
            v += self.b[i] * x[i];
            for j in 0..n {
                v += 0.5 * self.a[i][j] * x[i] * x[j];
            }
        }
        v
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        (0..n)
            .map(|i| self.b[i] + (0..n).map(|j| self.a[i][j] * x[j]).sum::<f64>())
            .collect()
    }

    /// `ΔP = tr A`.
    pub fn laplacian(&self) -> f64 {
        (0..self.dim()).map(|i| self.a[i][i]).sum()
    }

    /// Operator norm `‖D²P‖`, the largest absolute eigenvalue of `A`.
    pub fn hessian_norm(&self) -> f64 {
        let n = self.dim();
        let m = DMatrix::from_fn(n, n, |i, j| self.a[i][j]);
        SymmetricEigen::new(m)
            .eigenvalues
            .iter()
            .fold(0.0, |acc: f64, v| acc.max(v.abs()))
    }

    pub fn shifted(&self, s: f64) -> QuadraticPolynomial {
        QuadraticPolynomial {
            c: self.c + s,
            ..self.clone()
        }
    }

    /// `P(x₀ + r y) / r` as a polynomial in `y`.
    pub fn rescaled(&self, x0: &[f64], r: f64) -> QuadraticPolynomial {
        QuadraticPolynomial {
            c: self.eval(x0) / r,
            b: self.gradient(x0),
            a: self
                .a
                .iter()
                .map(|row| row.iter().map(|v| v * r).collect())
                .collect(),
        }
    }

    /// Smallest `|∇P|` over the given points.
    fn min_gradient<'a>(&self, pts: impl Iterator<Item = &'a [f64]>) -> f64 {
        pts.map(|x| norm(&self.gradient(x)))
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// Subsolution barrier touching from below.
    Below,
    /// Supersolution barrier touching from above.
    Above,
}

/// `P̄ = P + (μ/4n)(1 - |x|²)` below, `P - (μ/4n)(1 - |x|²)` above.
pub fn make_barrier(p: &QuadraticPolynomial, mu: f64, side: Side) -> Result<QuadraticPolynomial> {
    if !(mu > 0.0) {
        return Err(Error::param("mu", format!("must be positive, got {mu}")));
    }
    let n = p.dim();
    let s = match side {
        Side::Below => 1.0,
        Side::Above => -1.0,
    };
    let k = s * mu / (4.0 * n as f64);
    let mut a = p.a.clone();
    for (i, row) in a.iter_mut().enumerate() {
        row[i] -= 2.0 * k;
    }
    Ok(QuadraticPolynomial {
        c: p.c + k,
        b: p.b.clone(),
        a,
    })
}

/// Region of the lattice on which touching is examined.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Region {
    Ball { center: Vec<f64>, radius: f64 },
    /// `{x·ν ≥ offset}`.
    HalfSpace { normal: Vec<f64>, offset: f64 },
    Intersection { parts: Vec<Region> },
    /// `{|x'| ≤ radius, |x_n| ≤ half_height}`.
    Cylinder { radius: f64, half_height: f64 },
}

impl Region {
    pub fn ball(b: &Ball, dim: usize) -> Region {
        Region::Ball {
            center: b.center[..dim].to_vec(),
            radius: b.radius,
        }
    }

    /// Signed distance-like depth: positive inside, zero on the boundary.
    pub fn depth(&self, x: &[f64]) -> f64 {
        match self {
            Region::Ball { center, radius } => {
                radius - center.iter().zip(x).map(|(c, y)| (y - c).powi(2)).sum::<f64>().sqrt()
            }
            Region::HalfSpace { normal, offset } => {
                normal.iter().zip(x).map(|(n, y)| n * y).sum::<f64>() - offset
            }
            Region::Intersection { parts } => parts
                .iter()
                .map(|p| p.depth(x))
                .fold(f64::INFINITY, f64::min),
            Region::Cylinder {
                radius,
                half_height,
            } => {
                let n = x.len() - 1;
                let r = norm(&x[..n]);
                (radius - r).min(half_height - x[n].abs())
            }
        }
    }

    /// Concentric half ball, for ball regions.
    pub fn inner_ball(&self) -> Option<Ball> {
        match self {
            Region::Ball { center, radius } => Some(Ball {
                center: pad(center),
                radius: 0.5 * radius,
            }),
            _ => None,
        }
    }

    fn nodes(&self, u: &GridFunction) -> Vec<usize> {
        let g = u.grid();
        let dim = g.dim();
        (0..g.len())
            .filter(|&i| self.depth(&g.coords(i)[..dim]) >= -1e-12)
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Location {
    InteriorBHalf,
    Annulus,
    RegionBoundary,
}

/// Gradient condition at the contact nodes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientStatus {
    /// Smallest `|∇P|` over contact nodes where `u = 0`; `None` if `u > 0` at every contact.
    pub min_gradient_on_zero_set: Option<f64>,
    pub max_gradient: f64,
    pub min_gradient: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TouchReport {
    /// `t*`: `P + t*` touches from below (`P - t*` from above).
    pub shift: f64,
    pub contact_points: Vec<Vec<f64>>,
    /// Node where the extremum is attained.
    pub argmin: Vec<f64>,
    pub location: Location,
    pub gradient: GradientStatus,
}

fn classify(region: &Region, x: &[f64], h: f64) -> Location {
    if let Some(inner) = region.inner_ball() {
        if dist2(&pad(x), &inner.center, x.len()) < inner.radius * inner.radius {
            return Location::InteriorBHalf;
        }
    }
    if region.depth(x) < 2.0 * h {
        Location::RegionBoundary
    } else {
        Location::Annulus
    }
}

fn touch(
    u: &GridFunction,
    p: &QuadraticPolynomial,
    region: &Region,
    side: Side,
) -> Result<TouchReport> {
    let g = u.grid();
    let dim = g.dim();
    if p.dim() != dim {
        return Err(Error::GridMismatch("polynomial dimension differs from grid".into()));
    }
    let h = g.h();
    let mut nodes = region.nodes(u);
    if side == Side::Above {
        nodes.retain(|&i| u.value(i) > 0.0);
    }
    if nodes.is_empty() {
        return Err(Error::Empty("region contains no admissible nodes".into()));
    }
    let gap = |i: usize| {
        let x = g.coords(i);
        let pv = p.eval(&x[..dim]);
        match side {
            Side::Below => u.value(i) - pv,
            Side::Above => pv - u.value(i),
        }
    };
    let (mut best, mut shift) = (nodes[0], f64::INFINITY);
    for &i in &nodes {
        let v = gap(i);
        if v < shift {
            shift = v;
            best = i;
        }
    }
    let slack = CONTACT_SLACK * h;
    let contacts: Vec<usize> = nodes
        .iter()
        .copied()
        .filter(|&i| gap(i) - shift <= slack)
        .filter(|&i| {
            side == Side::Below || {
                let x = g.coords(i);
                p.eval(&x[..dim]) - shift > -slack
            }
        })
        .collect();
    let pts: Vec<Vec<f64>> = contacts
        .iter()
        .map(|&i| g.coords(i)[..dim].to_vec())
        .collect();
    let zero: Vec<&[f64]> = contacts
        .iter()
        .zip(&pts)
        .filter(|(&i, _)| u.value(i) <= 0.0)
        .map(|(_, x)| x.as_slice())
        .collect();
    let grads: Vec<f64> = pts.iter().map(|x| norm(&p.gradient(x))).collect();
    let argmin = g.coords(best)[..dim].to_vec();
    Ok(TouchReport {
        shift,
        location: classify(region, &argmin, h),
        argmin,
        gradient: GradientStatus {
            min_gradient_on_zero_set: (!zero.is_empty())
                .then(|| p.min_gradient(zero.iter().copied())),
            max_gradient: grads.iter().cloned().fold(0.0, f64::max),
            min_gradient: grads.iter().cloned().fold(f64::INFINITY, f64::min),
        },
        contact_points: pts,
    })
}

/// `t* = min_region (u - P)` and the nodes within the contact slack of it.
pub fn touch_from_below(
    u: &GridFunction,
    p: &QuadraticPolynomial,
    region: &Region,
) -> Result<TouchReport> {
    touch(u, p, region, Side::Below)
}

/// `t* = min (P - u)` over the nodes of the region where `u > 0`; contacts are
/// restricted to the closure of `{P - t* > 0}`.
pub fn touch_from_above(
    u: &GridFunction,
    p: &QuadraticPolynomial,
    region: &Region,
) -> Result<TouchReport> {
    touch(u, p, region, Side::Above)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionVerdict {
    Consistent,
    Violation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExclusionReport {
    pub side: Side,
    pub verdict: ExclusionVerdict,
    pub touch: TouchReport,
    pub mu: f64,
    /// `r^{-n} σ`, the parameter seen on the unit ball.
    pub sigma_scaled: f64,
}

/// Subsolution exclusion test on `ball`: `P` below `u` cannot touch it inside the
/// concentric half ball. Hypotheses are checked after scaling the ball to `B₁`.
pub fn subsolution_exclusion_test(
    u: &GridFunction,
    p: &QuadraticPolynomial,
    mu: f64,
    sigma: f64,
    ball: &Ball,
) -> Result<ExclusionReport> {
    exclusion(u, p, mu, sigma, ball, Side::Below)
}

/// Mirror of [`subsolution_exclusion_test`] for `P⁺` above `u`.
pub fn supersolution_exclusion_test(
    u: &GridFunction,
    p: &QuadraticPolynomial,
    mu: f64,
    sigma: f64,
    ball: &Ball,
) -> Result<ExclusionReport> {
    exclusion(u, p, mu, sigma, ball, Side::Above)
}

fn exclusion(
    u: &GridFunction,
    p: &QuadraticPolynomial,
    mu: f64,
    sigma: f64,
    ball: &Ball,
    side: Side,
) -> Result<ExclusionReport> {
    let g = u.grid();
    let dim = g.dim();
    g.require_ball(ball)?;
    if !(mu > 0.0) {
        return Err(Error::param("mu", "must be positive"));
    }
    let r = ball.radius;
    let hn = r * p.hessian_norm();
    if hn > 1.0 + 1e-12 {
        return Err(Error::pre("hessian_bound", format!("‖r D²P‖ = {hn} > 1")));
    }
    let lap = r * p.laplacian();
    match side {
        Side::Below if lap < mu - 1e-12 => {
            return Err(Error::pre("laplacian_bound", format!("r ΔP = {lap} < μ = {mu}")))
        }
        Side::Above if lap > -mu + 1e-12 => {
            return Err(Error::pre("laplacian_bound", format!("r ΔP = {lap} > -μ = {}", -mu)))
        }
        _ => {}
    }
    let sigma_scaled = sigma * r.powi(-(dim as i32));
    if sigma_scaled > mu.powi(dim as i32 + 3) {
        return Err(Error::pre(
            "sigma_bound",
            format!("r^-n σ = {sigma_scaled:e} > μ^(n+3) = {:e}", mu.powi(dim as i32 + 3)),
        ));
    }
    let region = Region::ball(ball, dim);
    let t = touch(u, p, &region, side)?;
    let h = g.h();
    let touching = t.shift <= CONTACT_SLACK * h;
    if touching {
        if let Some(m) = t.gradient.min_gradient_on_zero_set {
            let ok = match side {
                Side::Below => m >= 1.0 + mu - 1e-12,
                Side::Above => t.gradient.max_gradient <= 1.0 - mu + 1e-12,
            };
            if !ok {
                return Err(Error::pre(
                    "gradient_condition",
                    format!("|∇P| = {m} at a contact node where u = 0"),
                ));
            }
        }
    }
    let inner = ball.scaled(0.5);
    let outside = t
        .contact_points
        .iter()
        .any(|x| dist2(&pad(x), &inner.center, dim) >= inner.radius * inner.radius);
    let verdict = if !touching || outside {
        ExclusionVerdict::Consistent
    } else {
        ExclusionVerdict::Violation
    };
    Ok(ExclusionReport {
        side,
        verdict,
        touch: t,
        mu,
        sigma_scaled,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub holds: bool,
    /// `min_U (u - P)` and where it is attained.
    pub min_gap: f64,
    pub location: Vec<f64>,
    /// `C(K, δ) = δ^{-(2n+3)}`.
    pub constant: f64,
}

/// Comparison principle: `u ≥ P` on the `δ`-collar of `∂U` implies `u ≥ P`
/// on `U`, up to the contact slack.
pub fn comparison_apply(
    u: &GridFunction,
    p: &QuadraticPolynomial,
    region: &Region,
    delta: f64,
    mu: f64,
    sigma: f64,
) -> Result<ComparisonReport> {
    let g = u.grid();
    let dim = g.dim();
    if !(delta > 0.0) {
        return Err(Error::param("delta", "must be positive"));
    }
    if p.hessian_norm() > 1.0 / delta + 1e-12 {
        return Err(Error::pre("hessian_bound", "‖D²P‖ > 1/δ"));
    }
    if p.laplacian() < mu - 1e-12 {
        return Err(Error::pre("laplacian_bound", format!("ΔP = {} < μ", p.laplacian())));
    }
    let constant = delta.powi(-(2 * dim as i32 + 3));
    if mu.powi(dim as i32 + 3) < constant * sigma {
        return Err(Error::pre("sigma_bound", "μ^(n+3) < C(K,δ) σ"));
    }
    let nodes = region.nodes(u);
    if nodes.is_empty() {
        return Err(Error::Empty("region contains no nodes".into()));
    }
    let gap = |i: usize| u.value(i) - p.eval(&g.coords(i)[..dim]);
    let mut worst: Option<(usize, f64)> = None;
    for &i in &nodes {
        let x = g.coords(i);
        if region.depth(&x[..dim]) < delta {
            let v = gap(i);
            if v < 0.0 && worst.is_none_or(|(_, w)| v < w) {
                worst = Some((i, v));
            }
        }
        if u.value(i) <= 0.0 && norm(&p.gradient(&x[..dim])) < 1.0 + mu - 1e-12 {
            return Err(Error::pre(
                "gradient_condition",
                format!("u = 0 and |∇P| < 1 + μ at {:?}", &x[..dim]),
            ));
        }
    }
    if let Some((i, v)) = worst {
        return Err(Error::pre(
            "collar",
            format!("u - P = {v:e} at collar node {:?}", &g.coords(i)[..dim]),
        ));
    }
    let (mut at, mut min_gap) = (nodes[0], f64::INFINITY);
    for &i in &nodes {
        let v = gap(i);
        if v < min_gap {
            min_gap = v;
            at = i;
        }
    }
    Ok(ComparisonReport {
        holds: min_gap >= -CONTACT_SLACK * g.h(),
        min_gap,
        location: g.coords(at)[..dim].to_vec(),
        constant,
    })
}

/// Parameters and outcome of the Harnack property check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct P1Report {
    pub holds: bool,
    /// Largest `c` with `u ≥ (x_n + a + cγε)⁺` on `B_{1/2}`.
    pub c: f64,
    /// Largest `c` with `u ≥ x_n + a + cγε` on `B_{3/4} ∩ {x_n ≥ c₀}`.
    pub c_intermediate: f64,
    /// Harnack ratio of `u - (x_n + a)` on `B_{1/2}(y)`.
    pub harnack_ratio: f64,
    /// Point where the improvement hypothesis was found.
    pub y: Vec<f64>,
    pub c0: f64,
    /// `min (u - P)` over the cylinder for the internal barrier with `c = c_intermediate`.
    pub cylinder_gap: f64,
}

/// Harnack property on `B₁`: from `u ≥ (x_n + a)⁺` and a gap `γε` at a point
/// `y` with `B_{1/2}(y) ⊂ {x_n + a > 0} ∩ B₁`, measures the lift on `B_{1/2}`.
#[allow(clippy::too_many_arguments)]
pub fn p1_check(
    u: &GridFunction,
    eps: f64,
    delta: f64,
    gamma: f64,
    a: f64,
    sigma: f64,
    c0: f64,
) -> Result<P1Report> {
    let g = u.grid();
    let dim = g.dim();
    let n = dim - 1;
    let unit = Ball::unit();
    g.require_ball(&unit)?;
    if !(eps > 0.0) {
        return Err(Error::param("eps", "must be positive"));
    }
    if a.abs() > eps {
        return Err(Error::pre("offset_bound", format!("|a| = {} > ε", a.abs())));
    }
    if !(gamma >= delta && gamma <= 1.0) {
        return Err(Error::pre("gamma_range", format!("γ = {gamma} not in [δ, 1]")));
    }
    if sigma > eps.powi(dim as i32 + 4) {
        return Err(Error::pre("sigma_bound", "σ > ε^(n+4)"));
    }
    let nodes = g.nodes_in_ball(&unit);
    let lower = |i: usize| (g.coords(i)[n] + a).max(0.0);
    if let Some(&i) = nodes.iter().find(|&&i| u.value(i) < lower(i) - 1e-12) {
        return Err(Error::pre(
            "lower_bound",
            format!("u < (x_n + a)⁺ at {:?}", &g.coords(i)[..dim]),
        ));
    }
    let ge = gamma * eps;
    let y = nodes
        .iter()
        .copied()
        .filter(|&i| {
            let x = g.coords(i);
            norm(&x[..dim]) <= 0.5 + 1e-12 && x[n] + a >= 0.5 - 1e-12
        })
        .max_by(|&i, &j| {
            (u.value(i) - lower(i))
                .partial_cmp(&(u.value(j) - lower(j)))
                .unwrap()
                .then(j.cmp(&i))
        })
        .filter(|&i| u.value(i) - lower(i) >= ge)
        .ok_or_else(|| Error::pre("improvement_hypothesis", "no y with u(y) ≥ l⁺(y) + γε"))?;
    let half = Ball::centered(0.5);
    let mut c = f64::INFINITY;
    for i in g.nodes_in_ball(&half) {
        let xn = g.coords(i)[n];
        let bound = if u.value(i) > 0.0 {
            (u.value(i) - xn - a) / ge
        } else {
            -(xn + a) / ge
        };
        c = c.min(bound);
    }
    let mut c_mid = f64::INFINITY;
    for i in g.nodes_in_ball(&Ball::centered(0.75)) {
        let xn = g.coords(i)[n];
        if xn >= c0 {
            c_mid = c_mid.min((u.value(i) - xn - a) / ge);
        }
    }
    let yx = g.coords(y);
    let w = crate::lattice::sample(|x| x[n] + a, g, crate::lattice::Role::Signed)?;
    let ratio = harnack_gap(
        u,
        &w,
        &Ball {
            center: yx,
            radius: 0.5 - g.h(),
        },
        u.value(y) - w.value(y),
        sigma,
        false,
    )?;
    let cc = c_mid.max(0.0);
    let cyl = Region::Cylinder {
        radius: 0.25,
        half_height: 2.0 * c0,
    };
    let mut cylinder_gap = f64::INFINITY;
    for i in cyl.nodes(u) {
        let x = g.coords(i);
        let xn = x[n];
        let r2: f64 = x[..n].iter().map(|v| v * v).sum();
        let p = xn + a + 0.5 * cc * ge * (c0 + xn + 2.0 * dim as f64 * xn * xn - r2);
        cylinder_gap = cylinder_gap.min(u.value(i) - p);
    }
    Ok(P1Report {
        holds: c > 0.0,
        c,
        c_intermediate: c_mid,
        harnack_ratio: ratio,
        y: yx[..dim].to_vec(),
        c0,
        cylinder_gap,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct P2Report {
    pub exclusion: ExclusionReport,
    /// `μ = δ² ε`.
    pub mu: f64,
    /// `δ^{-n} σ`.
    pub sigma_bar: f64,
}

/// Viscosity property on `B_δ(x₀)`.
pub fn p2_check(
    u: &GridFunction,
    eps: f64,
    delta: f64,
    p: &QuadraticPolynomial,
    x0: &[f64],
    sigma: f64,
    side: Side,
) -> Result<P2Report> {
    let g = u.grid();
    let dim = g.dim();
    if !(eps > 0.0 && delta > 0.0) {
        return Err(Error::param("eps", "ε and δ must be positive"));
    }
    if p.hessian_norm() > eps / delta + 1e-12 {
        return Err(Error::pre(
            "hessian_bound",
            format!("‖D²P‖ = {} > ε/δ = {}", p.hessian_norm(), eps / delta),
        ));
    }
    let lap = p.laplacian();
    let lap_ok = match side {
        Side::Below => lap >= delta * eps - 1e-12,
        Side::Above => lap <= -delta * eps + 1e-12,
    };
    if !lap_ok {
        return Err(Error::pre("laplacian_bound", format!("ΔP = {lap} vs δε = {}", delta * eps)));
    }
    let ball = Ball::new(x0, delta)?;
    g.require_ball(&ball)?;
    for i in g.nodes_in_ball(&ball) {
        let x = g.coords(i);
        if u.value(i) <= 0.0 {
            let gn = norm(&p.gradient(&x[..dim]));
            let ok = match side {
                Side::Below => gn > 1.0 + delta * eps,
                Side::Above => gn < 1.0 - delta * eps,
            };
            if !ok {
                return Err(Error::pre(
                    "gradient_condition",
                    format!("u = 0 and |∇P| = {gn} at {:?}", &x[..dim]),
                ));
            }
        }
    }
    let mu = delta * delta * eps;
    let exclusion = exclusion(u, p, mu, sigma, &ball, side)?;
    Ok(P2Report {
        sigma_bar: exclusion.sigma_scaled,
        exclusion,
        mu,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub barrier_id: usize,
    pub mu: f64,
    pub side: Side,
    pub shift: f64,
    pub location: Location,
    pub verdict: ExclusionVerdict,
}

fn random_symmetric(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<Vec<f64>> {
    let mut e = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let v = rng.random_range(-1.0..1.0) * scale;
            e[i][j] = v;
            e[j][i] = v;
        }
    }
    let tr: f64 = (0..n).map(|i| e[i][i]).sum::<f64>() / n as f64;
    for (i, row) in e.iter_mut().enumerate() {
        row[i] -= tr;
    }
    e
}

/// Admissible barriers on `ball`, alternating sub- and supersolution sides,
/// each shifted to touch `u`, and their exclusion verdicts.
pub fn barrier_sweep(
    u: &GridFunction,
    ball: &Ball,
    mus: &[f64],
    per_mu: usize,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    let g = u.grid();
    let dim = g.dim();
    let nf = dim as f64;
    let r = ball.radius;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    let region = Region::ball(ball, dim);
    for &mu in mus {
        for k in 0..per_mu {
            let side = if k % 2 == 0 { Side::Below } else { Side::Above };
            let mut nu: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let l = norm(&nu).max(1e-12);
            nu.iter_mut().for_each(|v| *v /= l);
            let pert = random_symmetric(&mut rng, dim, 0.4 / nf);
            let sign = if side == Side::Below { 1.0 } else { -1.0 };
            let a: Vec<Vec<f64>> = (0..dim)
                .map(|i| {
                    (0..dim)
                        .map(|j| {
                            sign * (mu / r) * (if i == j { 1.0 / nf } else { 0.0 } + pert[i][j])
                        })
                        .collect()
                })
                .collect();
            let base = QuadraticPolynomial::new(0.0, vec![0.0; dim], a)?;
            let an = base.hessian_norm() * r;
            let margin = rng.random_range(0.0..0.05);
            let slope = match side {
                Side::Below => 1.0 + mu + an + margin,
                Side::Above => (1.0 - mu - an - margin).max(0.0),
            };
            // Center the quadratic part at the ball center.
            let c = ball.center;
            let mut b: Vec<f64> = nu.iter().map(|v| slope * v).collect();
            let mut c0 = 0.0;
            for i in 0..dim {
                for j in 0..dim {
                    b[i] -= base.a[i][j] * c[j];
                    c0 += 0.5 * base.a[i][j] * c[i] * c[j];
                }
                c0 -= slope * nu[i] * c[i];
            }
            let p = QuadraticPolynomial::new(c0, b, base.a.clone())?;
            let t = touch(u, &p, &region, side)?;
            let p = match side {
                Side::Below => p.shifted(t.shift),
                Side::Above => p.shifted(-t.shift),
            };
            let rep = exclusion(u, &p, mu, 0.0, ball, side)?;
            rows.push(SweepRow {
                barrier_id: rows.len(),
                mu,
                side,
                shift: t.shift,
                location: rep.touch.location,
                verdict: rep.verdict,
            });
        }
    }
    Ok(rows)
}

/// Recenters `P` at `x0`: returns `Q(y) = P(x0 + y)`.
pub fn recenter(p: &QuadraticPolynomial, x0: &Point) -> QuadraticPolynomial {
    let n = p.dim();
    QuadraticPolynomial {
        c: p.eval(&x0[..n]),
        b: p.gradient(&x0[..n]),
        a: p.a.clone(),
    }
}
