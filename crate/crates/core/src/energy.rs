//! The Bernoulli functional, almost-minimality parameters, rescaling and the
//! falsification auditor.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{
    dirichlet_energy, pad, positivity_measure, zero_measure, Ball, Grid, GridFunction, Point,
};

mod audit;

pub use audit::{
    audit_almost_minimality, Audit, AuditReport, CompetitorEnergy, Implication, Suite, SuiteEntry,
    Verdict,
};

/// `J(u, B) = ∫_B |∇u|² + |{u > 0} ∩ B|`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub dirichlet: f64,
    pub positivity: f64,
    pub total: f64,
}

impl EnergyReport {
    pub fn new(dirichlet: f64, positivity: f64) -> EnergyReport {
        EnergyReport {
            dirichlet,
            positivity,
            total: dirichlet + positivity,
        }
    }
}

pub fn bernoulli_energy(u: &GridFunction, ball: &Ball) -> Result<EnergyReport> {
    Ok(EnergyReport::new(
        dirichlet_energy(u, ball)?,
        positivity_measure(u, ball)?,
    ))
}

/// Measure of `{u = 0} ∩ B`.
pub fn zero_set_measure(u: &GridFunction, ball: &Ball) -> Result<f64> {
    zero_measure(u, ball)
}

/// Almost-minimality constants: multiplicative `J(u) ≤ (1 + κ r^β) J(v)` or
/// additive `J(u) ≤ J(v) + σ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum AlmostMinParams {
    Multiplicative { kappa: f64, beta: f64 },
    Additive { sigma: f64 },
}

impl AlmostMinParams {
    pub fn validate(&self) -> Result<()> {
        match *self {
            AlmostMinParams::Multiplicative { kappa, beta } => {
                if !(kappa >= 0.0 && kappa.is_finite()) {
                    return Err(Error::param("kappa", format!("must be >= 0, got {kappa}")));
                }
                if !(beta > 0.0 && beta <= 1.0) {
                    return Err(Error::param("beta", format!("must lie in (0, 1], got {beta}")));
                }
            }
            AlmostMinParams::Additive { sigma } => {
                if !(sigma >= 0.0 && sigma.is_finite()) {
                    return Err(Error::param("sigma", format!("must be >= 0, got {sigma}")));
                }
            }
        }
        Ok(())
    }

    /// Parameters seen by `u_ρ(x) = u(x₀ + ρx)/ρ`.
    pub fn rescaled(&self, rho: f64, dim: usize) -> AlmostMinParams {
        match *self {
            AlmostMinParams::Multiplicative { kappa, beta } => AlmostMinParams::Multiplicative {
                kappa: kappa * rho.powf(beta),
                beta,
            },
            AlmostMinParams::Additive { sigma } => AlmostMinParams::Additive {
                sigma: sigma * rho.powi(-(dim as i32)),
            },
        }
    }
}

/// Smallest number of target cells per unit length accepted by [`rescale`].
pub const MIN_RESCALE_CELLS: usize = 8;

/// `u_ρ(x) = u(x₀ + ρx)/ρ` on `[-1, 1]^n`, resampled by multilinear
/// interpolation. The target spacing is `1/m` with `m = round(ρ/h)`, so target
/// nodes land on source nodes whenever `ρ/h` is an integer and `x₀` is a node.
pub fn rescale(u: &GridFunction, rho: f64, x0: &[f64]) -> Result<GridFunction> {
    let grid = u.grid();
    let dim = grid.dim();
    if !(rho.is_finite() && rho > 0.0) {
        return Err(Error::param("rho", format!("must be positive, got {rho}")));
    }
    let m = (rho / grid.h()).round() as usize;
    if m < MIN_RESCALE_CELLS {
        return Err(Error::Unresolvable(format!(
            "rho = {rho} spans {m} source cells, need at least {MIN_RESCALE_CELLS}"
        )));
    }
    let c = pad(x0);
    let lo = grid.lo();
    let hi = grid.hi();
    let slack = 1e-9 * grid.h();
    if (0..dim).any(|k| c[k] - rho < lo[k] - slack || c[k] + rho > hi[k] + slack) {
        return Err(Error::BallOutsideGrid {
            center: c[..dim].to_vec(),
            radius: rho,
        });
    }
    let target = Grid::centered(dim, 1.0, 1.0 / m as f64)?;
    let values = (0..target.len())
        .map(|i| {
            let y = target.coords(i);
            let mut x: Point = [0.0; 3];
            for k in 0..dim {
                x[k] = c[k] + rho * y[k];
            }
            u.interpolate(&x) / rho
        })
        .collect();
    GridFunction::new(target, values, u.role())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{make_grid, sample, Role};
    use std::f64::consts::PI;

    fn grid(h: f64) -> Grid {
        make_grid(&[(-1.0, 1.0), (-1.0, 1.0)], h).unwrap()
    }

    #[test]
    fn energy_examples() {
        let h = 1.0 / 128.0;
        let g = grid(h);
        let b = Ball::unit();
        let half = sample(|x| x[1].max(0.0), &g, Role::U).unwrap();
        assert!((bernoulli_energy(&half, &b).unwrap().total - PI).abs() < 20.0 * h);
        let z = GridFunction::zeros(&g, Role::U);
        assert_eq!(bernoulli_energy(&z, &b).unwrap().total, 0.0);
        let lin = sample(|x| 1.2 * x[0] + 1.6 * x[1], &g, Role::Signed).unwrap();
        let e = bernoulli_energy(&lin, &b).unwrap();
        assert!((e.total - (4.0 * PI + PI / 2.0)).abs() < 20.0 * h, "{e:?}");
        assert_eq!(e.total, e.dirichlet + e.positivity);
    }

    #[test]
    fn zero_set_examples() {
        let h = 1.0 / 128.0;
        let g = grid(h);
        let b = Ball::centered(0.5);
        let half = sample(|x| x[1].max(0.0), &g, Role::U).unwrap();
        assert!((zero_set_measure(&half, &b).unwrap() - PI / 8.0).abs() < 10.0 * h);
        let pos = sample(|x| 1.0 + x[0] * x[0], &g, Role::U).unwrap();
        assert_eq!(zero_set_measure(&pos, &b).unwrap(), 0.0);
        let z = GridFunction::zeros(&g, Role::U);
        assert!((zero_set_measure(&z, &b).unwrap() - PI / 4.0).abs() < 10.0 * h);
    }

    #[test]
    fn rescale_examples() {
        let h = 1.0 / 128.0;
        let g = grid(h);
        let half = sample(|x| x[1].max(0.0), &g, Role::U).unwrap();
        let r = rescale(&half, 0.5, &[0.0, 0.0]).unwrap();
        for i in 0..r.grid().len() {
            let y = r.grid().coords(i);
            assert!((r.value(i) - y[1].max(0.0)).abs() < 1e-12);
        }
        let id = rescale(&half, 1.0, &[0.0, 0.0]).unwrap();
        assert_eq!(id.grid(), half.grid());
        assert!(id.max_abs_diff_in_ball(&half, &Ball::unit()).unwrap() < 1e-12);
        let sq = sample(|x| x[0] * x[0] + x[1] * x[1], &g, Role::U).unwrap();
        let r = rescale(&sq, 0.5, &[0.0, 0.0]).unwrap();
        let probe = r.value_at_node(&[0.5, -0.25]);
        assert!((probe - 0.5 * 0.3125).abs() < 1e-12);
        assert!(matches!(
            rescale(&sq, 4.0 * h, &[0.0, 0.0]),
            Err(Error::Unresolvable(_))
        ));
    }

    #[test]
    fn rescale_scales_energy() {
        let h = 1.0 / 256.0;
        let g = grid(h);
        let u = sample(|x| (x[1] + 0.3 * x[0] * x[0]).max(0.0), &g, Role::U).unwrap();
        let rho = 0.25;
        let x0 = [0.25, -0.125];
        let ur = rescale(&u, rho, &x0).unwrap();
        let lhs = bernoulli_energy(&ur, &Ball::unit()).unwrap().total;
        let rhs = bernoulli_energy(&u, &Ball::new(&x0, rho).unwrap()).unwrap().total / (rho * rho);
        assert!((lhs - rhs).abs() < 0.02 * rhs, "{lhs} vs {rhs}");
        let back = rescale(&ur, 1.0 / rho, &[0.0, 0.0]);
        assert!(back.is_err());
    }

    #[test]
    fn params_rescale() {
        let p = AlmostMinParams::Additive { sigma: 0.01 };
        assert_eq!(p.rescaled(0.5, 2), AlmostMinParams::Additive { sigma: 0.04 });
        let p = AlmostMinParams::Multiplicative { kappa: 1.0, beta: 0.5 };
        match p.rescaled(0.25, 2) {
            AlmostMinParams::Multiplicative { kappa, .. } => assert!((kappa - 0.5).abs() < 1e-15),
            _ => unreachable!(),
        }
        assert!(AlmostMinParams::Multiplicative { kappa: 1.0, beta: 0.0 }.validate().is_err());
    }
}
