use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{bernoulli_energy, AlmostMinParams, EnergyReport};
use crate::elliptic::harmonic_replacement;
use crate::error::{Error, Result};
use crate::lattice::{dist2, mean_gradient, Ball, GridFunction};
use crate::solver::{minimize_bernoulli, SolverConfig};
use crate::viscosity::{make_barrier, QuadraticPolynomial, Side};

/// Number of truncation levels in the built-in suite.
pub const TRUNCATION_LEVELS: usize = 8;
/// Barrier parameters used by the built-in splices.
pub const SPLICE_MUS: [f64; 3] = [0.05, 0.1, 0.2];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    #[serde(rename = "falsified")]
    Falsified,
    #[serde(rename = "not falsified by suite")]
    NotFalsifiedBySuite,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Falsified => "falsified",
            Verdict::NotFalsifiedBySuite => "not falsified by suite",
        })
    }
}

/// A named competitor.
#[derive(Clone, Debug)]
pub struct SuiteEntry {
    pub name: String,
    pub field: GridFunction,
}

/// Competitor family for an audit.
#[derive(Clone, Debug)]
pub struct Suite {
    /// Harmonic replacement, truncations, cutoffs and barrier splices.
    pub builtin: bool,
    /// Solver minimizer with the boundary data of `u`.
    pub minimizer: Option<SolverConfig>,
    pub custom: Vec<SuiteEntry>,
}

impl Suite {
    pub fn builtin() -> Suite {
        Suite {
            builtin: true,
            minimizer: None,
            custom: Vec::new(),
        }
    }

    pub fn with_minimizer(config: SolverConfig) -> Suite {
        Suite {
            minimizer: Some(config),
            ..Suite::builtin()
        }
    }

    pub fn custom(entries: Vec<SuiteEntry>) -> Suite {
        Suite {
            builtin: false,
            minimizer: None,
            custom: entries,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub ball: Ball,
    /// `max J(u)/J(v)` over competitors with `J(v) > 0`.
    pub worst_ratio: f64,
    /// `max J(u) - J(v)`.
    pub worst_gap: f64,
    pub violating_competitor: Option<String>,
    pub verdict: Verdict,
    /// `10h(1 + J(u, B))`.
    pub slack: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompetitorEnergy {
    pub name: String,
    pub energy: EnergyReport,
    pub gap: f64,
}

/// The multiplicative-to-additive conversion with `C_bound = J(u, B)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Implication {
    pub c_bound: f64,
    /// `κ r^β C_bound`.
    pub sigma_implied: f64,
    pub multiplicative_pass: bool,
    pub additive_pass: bool,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Audit {
    pub report: AuditReport,
    pub params: AlmostMinParams,
    pub energy: EnergyReport,
    pub competitors: Vec<CompetitorEnergy>,
    /// Additive verdict at `σ = κ r^β J(u)` in multiplicative mode.
    pub implication: Option<Implication>,
}

/// Corners of counted cells that are not free.
fn ring_nodes(u: &GridFunction, ball: &Ball, free: &[bool]) -> Vec<usize> {
    let g = u.grid();
    let mut ring: Vec<usize> = g
        .cells_in_ball(ball)
        .into_iter()
        .flat_map(|c| g.corner_offsets().into_iter().map(move |o| c + o))
        .filter(|&i| !free[i])
        .collect();
    ring.sort_unstable();
    ring.dedup();
    ring
}

fn modify(
    u: &GridFunction,
    free: &[bool],
    mut f: impl FnMut(usize, f64) -> f64,
) -> Result<GridFunction> {
    let values = u
        .values()
        .iter()
        .enumerate()
        .map(|(i, &v)| if free[i] { f(i, v).max(0.0) } else { v })
        .collect();
    u.with_values(values)
}

fn builtin_suite(u: &GridFunction, ball: &Ball, free: &[bool]) -> Result<Vec<SuiteEntry>> {
    let g = u.grid();
    let dim = g.dim();
    let h = g.h();
    let r = ball.radius;
    let dist = |i: usize| dist2(&g.coords(i), &ball.center, dim).sqrt();
    let mut out = Vec::new();

    let (v, _) = harmonic_replacement(u, ball)?;
    out.push(SuiteEntry {
        name: "harmonic_replacement".into(),
        field: v.clone(),
    });

    let umax = u.max_in_ball(ball).unwrap_or(0.0);
    if umax > h {
        let ramp = |i: usize| ((r - dist(i)) / (0.25 * r)).clamp(0.0, 1.0);
        for j in 0..TRUNCATION_LEVELS {
            let t = h * (umax / h).powf(j as f64 / (TRUNCATION_LEVELS - 1) as f64);
            out.push(SuiteEntry {
                name: format!("truncation_{j}"),
                field: modify(u, free, |i, x| x - t * ramp(i))?,
            });
        }
    }

    let cut = |i: usize| ((0.5 * r - dist(i)) / (0.25 * r)).clamp(0.0, 1.0);
    out.push(SuiteEntry {
        name: "cutoff_harmonic".into(),
        field: modify(u, free, |i, _| v.value(i) * (1.0 - cut(i)))?,
    });
    out.push(SuiteEntry {
        name: "cutoff_u".into(),
        field: modify(u, free, |i, x| x * (1.0 - cut(i)))?,
    });

    let ring = ring_nodes(u, ball, free);
    let p = mean_gradient(u, ball)?;
    let c = ball.center;
    let nf = dim as f64;
    for &mu in &SPLICE_MUS {
        for side in [Side::Below, Side::Above] {
            let sgn = if side == Side::Below { 1.0 } else { -1.0 };
            // P on the unit ball after scaling by r, then evaluated at (x - c)/r.
            let unit = QuadraticPolynomial::new(
                0.0,
                p[..dim].to_vec(),
                (0..dim)
                    .map(|a| (0..dim).map(|b| if a == b { sgn * mu / nf } else { 0.0 }).collect())
                    .collect(),
            )?;
            let bar = make_barrier(&unit, mu, side)?;
            let eval = |i: usize| {
                let x = g.coords(i);
                let y: Vec<f64> = (0..dim).map(|k| (x[k] - c[k]) / r).collect();
                r * bar.eval(&y)
            };
            let shift = match side {
                Side::Below => ring
                    .iter()
                    .map(|&i| u.value(i) - eval(i))
                    .fold(f64::INFINITY, f64::min),
                Side::Above => ring
                    .iter()
                    .map(|&i| u.value(i) - eval(i))
                    .fold(f64::NEG_INFINITY, f64::max),
            };
            let field = match side {
                Side::Below => modify(u, free, |i, x| x.max((eval(i) + shift).max(0.0)))?,
                Side::Above => modify(u, free, |i, x| x.min((eval(i) + shift).max(0.0)))?,
            };
            let tag = if side == Side::Below { "max" } else { "min" };
            out.push(SuiteEntry {
                name: format!("splice_{tag}_{mu}"),
                field,
            });
        }
    }
    Ok(out)
}

/// Evaluates `J(u, B) - J(v, B)` over the suite. The audit can only falsify.
pub fn audit_almost_minimality(
    u: &GridFunction,
    ball: &Ball,
    params: &AlmostMinParams,
    suite: &Suite,
) -> Result<Audit> {
    params.validate()?;
    let g = u.grid();
    g.require_ball(ball)?;
    let free = g.interior_mask(ball);
    let ring = ring_nodes(u, ball, &free);
    for e in &suite.custom {
        crate::lattice::check_same_grid(u, &e.field)?;
        if let Some(&i) = ring
            .iter()
            .find(|&&i| (e.field.value(i) - u.value(i)).abs() > 1e-12)
        {
            return Err(Error::pre(
                "boundary_agreement",
                format!(
                    "competitor {} differs from u at ring node {:?}",
                    e.name,
                    &g.coords(i)[..g.dim()]
                ),
            ));
        }
    }
    let mut entries = Vec::new();
    if suite.builtin {
        entries.extend(builtin_suite(u, ball, &free)?);
    }
    if let Some(cfg) = &suite.minimizer {
        let out = minimize_bernoulli(u, ball, cfg)?;
        entries.push(SuiteEntry {
            name: "minimizer".into(),
            field: out.u,
        });
    }
    entries.extend(suite.custom.iter().cloned());
    if entries.is_empty() {
        return Err(Error::Empty("competitor suite is empty".into()));
    }

    let ju = bernoulli_energy(u, ball)?;
    let energies: Vec<EnergyReport> = entries
        .par_iter()
        .map(|e| bernoulli_energy(&e.field, ball))
        .collect::<Result<_>>()?;
    let slack = 10.0 * g.h() * (1.0 + ju.total);
    let factor = match *params {
        AlmostMinParams::Multiplicative { kappa, beta } => kappa * ball.radius.powf(beta),
        AlmostMinParams::Additive { .. } => 0.0,
    };
    let excess = |jv: f64| match *params {
        AlmostMinParams::Multiplicative { .. } => ju.total - (1.0 + factor) * jv,
        AlmostMinParams::Additive { sigma } => ju.total - jv - sigma,
    };

    let mut worst_ratio: f64 = 0.0;
    let mut worst_gap = f64::NEG_INFINITY;
    let mut worst_excess = f64::NEG_INFINITY;
    let mut violating = None;
    let mut competitors = Vec::with_capacity(entries.len());
    for (e, en) in entries.iter().zip(&energies) {
        let gap = ju.total - en.total;
        if en.total > 0.0 {
            worst_ratio = worst_ratio.max(ju.total / en.total);
        }
        worst_gap = worst_gap.max(gap);
        let x = excess(en.total);
        if x > worst_excess {
            worst_excess = x;
            if x > slack {
                violating = Some(e.name.clone());
            }
        }
        competitors.push(CompetitorEnergy {
            name: e.name.clone(),
            energy: *en,
            gap,
        });
    }
    let verdict = if violating.is_some() {
        Verdict::Falsified
    } else {
        Verdict::NotFalsifiedBySuite
    };
    let implication = match *params {
        AlmostMinParams::Multiplicative { .. } => {
            let sigma = factor * ju.total;
            let additive_pass = energies.iter().all(|en| ju.total - en.total <= sigma + slack);
            let multiplicative_pass = verdict == Verdict::NotFalsifiedBySuite;
            let holds = !multiplicative_pass || additive_pass;
            debug_assert!(holds);
            Some(Implication {
                c_bound: ju.total,
                sigma_implied: sigma,
                multiplicative_pass,
                additive_pass,
                holds,
            })
        }
        AlmostMinParams::Additive { .. } => None,
    };
    Ok(Audit {
        report: AuditReport {
            ball: *ball,
            worst_ratio,
            worst_gap,
            violating_competitor: violating,
            verdict,
            slack,
        },
        params: *params,
        energy: ju,
        competitors,
        implication,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{make_grid, sample, Grid, Role};

    fn grid(h: f64) -> Grid {
        make_grid(&[(-1.25, 1.25), (-1.25, 1.25)], h).unwrap()
    }

    const EXACT: AlmostMinParams = AlmostMinParams::Multiplicative { kappa: 0.0, beta: 1.0 };

    #[test]
    fn half_plane_not_falsified() {
        let h = 1.0 / 64.0;
        let g = grid(h);
        let u = sample(|x| x[1].max(0.0), &g, Role::U).unwrap();
        for b in [Ball::unit(), Ball::new(&[0.2, -0.1], 0.5).unwrap()] {
            let a = audit_almost_minimality(&u, &b, &EXACT, &Suite::builtin()).unwrap();
            assert_eq!(a.report.verdict, Verdict::NotFalsifiedBySuite, "{:?}", a.competitors);
            assert!(a.implication.unwrap().holds);
            for c in &a.competitors {
                let direct = bernoulli_energy(&u, &b).unwrap().total - c.energy.total;
                assert_eq!(direct, c.gap);
            }
        }
        let json = serde_json::to_value(
            audit_almost_minimality(&u, &Ball::unit(), &EXACT, &Suite::builtin())
                .unwrap()
                .report,
        )
        .unwrap();
        assert_eq!(json["verdict"], "not falsified by suite");
    }

    #[test]
    fn harmonic_field_matches_its_replacement() {
        let h = 1.0 / 64.0;
        let g = grid(h);
        let u = sample(|x| 2.0 + x[0] * x[0] - x[1] * x[1], &g, Role::U).unwrap();
        let (v, _) = harmonic_replacement(&u, &Ball::unit()).unwrap();
        let suite = Suite::custom(vec![SuiteEntry { name: "hr".into(), field: v }]);
        let a = audit_almost_minimality(&u, &Ball::unit(), &EXACT, &suite).unwrap();
        assert!(a.report.worst_gap.abs() <= a.report.slack);
    }

    #[test]
    fn wedges_are_beaten_by_the_minimizer() {
        let h = 1.0 / 128.0;
        let g = grid(h);
        let suite = Suite::with_minimizer(SolverConfig::default());
        let shallow = sample(|x| (0.5 * x[1]).max(0.0), &g, Role::U).unwrap();
        let a = audit_almost_minimality(&shallow, &Ball::unit(), &EXACT, &suite).unwrap();
        assert_eq!(a.report.verdict, Verdict::Falsified);
        assert_eq!(a.report.violating_competitor.as_deref(), Some("minimizer"));
        assert!(a.report.worst_gap > 0.05, "{}", a.report.worst_gap);
        let steep = sample(|x| (1.5 * x[1]).max(0.0), &g, Role::U).unwrap();
        let a = audit_almost_minimality(&steep, &Ball::unit(), &EXACT, &suite).unwrap();
        assert!(a.report.worst_gap > 0.05, "{}", a.report.worst_gap);
        assert_eq!(
            a.report.verdict == Verdict::Falsified,
            a.report.worst_gap > a.report.slack
        );
    }

    #[test]
    fn boundary_agreement_is_enforced() {
        let h = 1.0 / 32.0;
        let g = grid(h);
        let u = sample(|x| x[1].max(0.0), &g, Role::U).unwrap();
        let bad = sample(|x| x[1].max(0.0) + 0.1, &g, Role::U).unwrap();
        let suite = Suite::custom(vec![SuiteEntry { name: "bad".into(), field: bad }]);
        assert!(matches!(
            audit_almost_minimality(&u, &Ball::unit(), &EXACT, &suite),
            Err(Error::Precondition { name: "boundary_agreement", .. })
        ));
    }

    #[test]
    fn additive_mode() {
        let h = 1.0 / 64.0;
        let g = grid(h);
        let u = sample(|x| (1.5 * x[1]).max(0.0), &g, Role::U).unwrap();
        let loose = AlmostMinParams::Additive { sigma: 10.0 };
        let a = audit_almost_minimality(&u, &Ball::unit(), &loose, &Suite::builtin()).unwrap();
        assert_eq!(a.report.verdict, Verdict::NotFalsifiedBySuite);
        assert!(a.implication.is_none());
    }
}
