//! Harmonic replacement in balls and the half-ball Neumann problem.
//!
//! Free nodes of a ball are the nodes whose adjacent cells are all counted in
//! the ball; every other node keeps its value. On free nodes the gradient of
//! the discrete Dirichlet energy is a multiple of the 5-point (7-point in 3D)
//! Laplacian, so the solution is the exact discrete energy minimizer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{max_gradient, Ball, GridFunction, Role};

pub(crate) mod linear;

/// Outcome of a linear solve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub iterations: usize,
    /// Max-norm of the discrete Laplacian residual over the free nodes.
    pub residual: f64,
    pub tolerance: f64,
}

/// Discrete Laplacian at an interior node; `None` on the box boundary.
pub fn discrete_laplacian(u: &GridFunction, idx: usize) -> Option<f64> {
    let g = u.grid();
    if g.is_boundary_node(idx) {
        return None;
    }
    let v = u.values();
    let st = g.strides();
    let mut s = -2.0 * g.dim() as f64 * v[idx];
    for &k in &st[..g.dim()] {
        s += v[idx + k] + v[idx - k];
    }
    Some(s / (g.h() * g.h()))
}

/// Discrete harmonic function in `ball` with the values of `u` on the ring.
pub fn harmonic_replacement(
    u: &GridFunction,
    ball: &Ball,
) -> Result<(GridFunction, SolveDiagnostics)> {
    let grid = u.grid();
    grid.require_ball(ball)?;
    let free = grid.interior_mask(ball);
    let mut values = u.values().to_vec();
    let diag = linear::solve(
        &linear::Problem {
            grid,
            free: &free,
            weights: None,
            rhs: None,
        },
        &mut values,
    )?;
    if u.role() == Role::U {
        for v in values.iter_mut() {
            *v = v.max(0.0);
        }
    }
    Ok((u.with_values(values)?, diag))
}

/// Distance between `u` and its harmonic replacement on the half ball.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Closeness {
    /// `‖u - v‖∞` over the nodes of the concentric half ball.
    pub sup_norm: f64,
    /// `sup_norm / σ^{1/(n+2)}`.
    pub implied_constant: f64,
    /// Discrete Lipschitz constant of `u` on the ball.
    pub lipschitz: f64,
    pub diagnostics: SolveDiagnostics,
}

pub fn closeness_check(u: &GridFunction, ball: &Ball, sigma: f64) -> Result<Closeness> {
    if !(sigma > 0.0) {
        return Err(Error::param("sigma", "must be positive"));
    }
    let grid = u.grid();
    grid.require_ball(ball)?;
    if let Some(i) = grid
        .nodes_in_ball(ball)
        .into_iter()
        .find(|&i| u.value(i) <= 0.0)
    {
        return Err(Error::pre(
            "ball_in_positivity_set",
            format!("u vanishes at node {:?}", &grid.coords(i)[..grid.dim()]),
        ));
    }
    let (v, diagnostics) = harmonic_replacement(u, ball)?;
    let sup_norm = u.max_abs_diff_in_ball(&v, &ball.scaled(0.5))?;
    let n = grid.dim() as f64;
    Ok(Closeness {
        sup_norm,
        implied_constant: sup_norm / sigma.powf(1.0 / (n + 2.0)),
        lipschitz: max_gradient(u, ball)?,
        diagnostics,
    })
}

/// Harmonic function on `ball ∩ {x_n > 0}` with zero normal derivative on the
/// flat part and the values of `data` on the curved ring.
///
/// The Neumann condition is imposed by even reflection across `x_n = 0`, so the
/// returned field is the reflected solution on the whole ball. The grid must be
/// symmetric about `x_n = 0` and the ball centered on that hyperplane.
pub fn neumann_halfball_solve(
    data: &GridFunction,
    ball: &Ball,
) -> Result<(GridFunction, SolveDiagnostics)> {
    let grid = data.grid();
    let n = grid.dim() - 1;
    let (lo, hi) = (grid.lo()[n], grid.hi()[n]);
    if (lo + hi).abs() > 1e-9 * grid.h() {
        return Err(Error::pre(
            "symmetric_grid",
            format!("axis {n} spans [{lo}, {hi}], not symmetric about 0"),
        ));
    }
    if ball.center[n].abs() > 1e-12 {
        return Err(Error::pre("flat_center", "ball center must lie on x_n = 0"));
    }
    grid.require_ball(ball)?;
    let top = grid.shape()[n] - 1;
    let reflected: Vec<f64> = (0..grid.len())
        .map(|i| {
            let mut ix = grid.multi_index(i);
            if 2 * ix[n] < top {
                ix[n] = top - ix[n];
            }
            data.value(grid.index(ix))
        })
        .collect();
    let field = GridFunction::new(grid.clone(), reflected, Role::Signed)?;
    let (v, d) = harmonic_replacement(&field, ball)?;
    Ok((v.with_role(data.role())?, d))
}

/// Largest symmetric difference `|v(x', h) - v(x', -h)| / 2h` over the free
/// nodes of `ball` on `x_n = 0`.
pub fn flat_flux(v: &GridFunction, ball: &Ball) -> f64 {
    let grid = v.grid();
    let n = grid.dim() - 1;
    let st = grid.strides()[n];
    let free = grid.interior_mask(ball);
    (0..grid.len())
        .filter(|&i| free[i] && grid.coords(i)[n].abs() < 0.5 * grid.h())
        .map(|i| (v.value(i + st) - v.value(i - st)).abs() / (2.0 * grid.h()))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{dirichlet_energy, make_grid, sample};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid2(h: f64) -> crate::lattice::Grid {
        make_grid(&[(-1.25, 1.25), (-1.25, 1.25)], h).unwrap()
    }

    #[test]
    fn linear_and_saddle_are_fixed() {
        let g = grid2(1.0 / 64.0);
        let b = Ball::unit();
        for f in [
            (|x: &[f64]| 0.3 + 2.0 * x[0] - x[1]) as fn(&[f64]) -> f64,
            |x: &[f64]| x[0] * x[0] - x[1] * x[1],
        ] {
            let u = sample(f, &g, Role::Signed).unwrap();
            let (v, d) = harmonic_replacement(&u, &b).unwrap();
            assert!(d.residual <= d.tolerance);
            let err = u.max_abs_diff_in_ball(&v, &b).unwrap();
            assert!(err < 1e-8, "err {err}");
        }
    }

    #[test]
    fn mean_value_of_paraboloid() {
        for h in [1.0 / 64.0, 1.0 / 128.0] {
            let g = grid2(h);
            let b = Ball::unit();
            // Trace of |x|² on the unit circle, carried to the ring by radial projection.
            let trace = sample(
                |x| {
                    let r2 = x[0] * x[0] + x[1] * x[1];
                    if r2 > 0.25 { 1.0 } else { r2 }
                },
                &g,
                Role::U,
            )
            .unwrap();
            let (v, _) = harmonic_replacement(&trace, &b).unwrap();
            let c = v.value_at_node(&[0.0, 0.0]);
            assert!((c - 1.0).abs() <= 10.0 * h * h, "h={h}: center {c}");

            // Sampled on the ring itself the data sit up to a cell inside the circle.
            let u = sample(|x| x[0] * x[0] + x[1] * x[1], &g, Role::U).unwrap();
            let (v, _) = harmonic_replacement(&u, &b).unwrap();
            let c = v.value_at_node(&[0.0, 0.0]);
            assert!(c < 1.0 && 1.0 - c <= h, "h={h}: center {c}");
        }
    }

    #[test]
    fn maximum_principle_and_minimality() {
        let g = grid2(1.0 / 32.0);
        let b = Ball::new(&[0.1, -0.05], 0.9).unwrap();
        let u = sample(|x| (x[1] + 0.2 * (5.0 * x[0]).sin()).max(0.0), &g, Role::U).unwrap();
        let (v, _) = harmonic_replacement(&u, &b).unwrap();
        let free = g.interior_mask(&b);
        let ring: Vec<f64> = g
            .nodes_in_ball(&b.scaled(1.2))
            .into_iter()
            .filter(|&i| !free[i])
            .map(|i| u.value(i))
            .collect();
        let lo = ring.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = ring.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for i in (0..g.len()).filter(|&i| free[i]) {
            assert!(v.value(i) >= lo - 1e-9 && v.value(i) <= hi + 1e-9);
        }
        let ev = dirichlet_energy(&v, &b).unwrap();
        assert!(ev <= dirichlet_energy(&u, &b).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let w: Vec<f64> = (0..g.len())
                .map(|i| v.value(i) + if free[i] { rng.random_range(-0.01..0.01) } else { 0.0 })
                .collect();
            let w = GridFunction::new(g.clone(), w, Role::Signed).unwrap();
            assert!(ev <= dirichlet_energy(&w, &b).unwrap() + 1e-12);
        }
        let (vv, _) = harmonic_replacement(&v, &b).unwrap();
        assert!(v.max_abs_diff_in_ball(&vv, &b).unwrap() < 1e-9);
    }

    #[test]
    fn closeness_of_bumped_plane() {
        let h = 1.0 / 64.0;
        let g = make_grid(&[(-1.25, 1.25), (1.0, 3.5)], h).unwrap();
        let b = Ball::new(&[0.0, 2.25], 1.0).unwrap();
        let u = sample(
            |x| x[1] + 0.01 * (1.0 - x[0] * x[0] - (x[1] - 2.25).powi(2)),
            &g,
            Role::U,
        )
        .unwrap();
        let c = closeness_check(&u, &b, 1e-3).unwrap();
        assert!((c.sup_norm - 0.01).abs() <= 10.0 * h * h, "{}", c.sup_norm);
        let zero = GridFunction::zeros(&g, Role::U);
        assert!(matches!(
            closeness_check(&zero, &b, 1e-3),
            Err(Error::Precondition { .. })
        ));
    }

    #[test]
    fn neumann_recovers_even_harmonics() {
        let h = 1.0 / 64.0;
        let g = grid2(h);
        let b = Ball::centered(0.5);
        for (f, exact) in [
            (
                (|x: &[f64]| x[0] * x[0] - x[1] * x[1]) as fn(&[f64]) -> f64,
                10.0 * h * h,
            ),
            (|x: &[f64]| x[0], 1e-8),
            (|_: &[f64]| 0.7, 1e-8),
        ] {
            let data = sample(f, &g, Role::Signed).unwrap();
            let (v, d) = neumann_halfball_solve(&data, &b).unwrap();
            assert!(d.residual <= d.tolerance);
            let err = data.max_abs_diff_in_ball(&v, &b).unwrap();
            assert!(err <= exact, "err {err}");
            assert!(flat_flux(&v, &b) <= d.tolerance);
        }
    }
}
