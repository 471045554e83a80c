//! Acceptance criteria AC-1 to AC-11, one PASS/FAIL line each.
//!
//! Criteria listed in `KNOWN_FAILURES` are reported as FAIL but do not fail the
//! target; any other failure, or a known failure that starts passing, does.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use fblab_core::elliptic::{harmonic_replacement, neumann_halfball_solve};
use fblab_core::energy::{audit_almost_minimality, bernoulli_energy, AlmostMinParams, Suite, Verdict};
use fblab_core::flatness::{
    extract_free_boundary, gradient_near_free_boundary, hausdorff_estimate, iterate_flatness,
    FlatnessParams, FreeBoundary,
};
use fblab_core::regularity::{strong_nondegeneracy, weiss_profile};
use fblab_core::solver::{
    fixture, generate_almost_minimizer, minimize_bernoulli, Fixture, Oscillation, SolverConfig,
};
use fblab_core::viscosity::{barrier_sweep, ExclusionVerdict};
use fblab_core::{sample, Ball, Grid, GridFunction, Role};

const KNOWN_FAILURES: &[&str] = &["AC-7", "AC-9"];

const TILT: f64 = 0.1;
const SEED: u64 = 2024;

struct Outcome {
    passed: bool,
    lines: Vec<String>,
}

impl Outcome {
    fn new() -> Outcome {
        Outcome {
            passed: true,
            lines: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, line: String) {
        self.passed &= ok;
        self.lines.push(format!("{} {line}", if ok { "ok  " } else { "FAIL" }));
    }
}

fn grid(half: f64, h: f64) -> Grid {
    Grid::centered(2, half, h).unwrap()
}

fn half_plane() -> Fixture {
    Fixture::HalfPlane {
        normal: vec![0.0, 1.0],
    }
}

fn tilted() -> Fixture {
    Fixture::TiltedPlane {
        normal: vec![0.0, 1.0],
        slope: TILT.tan(),
    }
}

fn wedge(gamma: f64) -> Fixture {
    Fixture::Wedge {
        gamma,
        normal: vec![0.0, 1.0],
    }
}

fn exterior(r0: f64) -> Fixture {
    Fixture::ExteriorRadial {
        center: vec![0.0, 0.0],
        r0,
    }
}

fn solve(data: &Fixture, g: &Grid) -> GridFunction {
    let d = fixture(data, g).unwrap();
    minimize_bernoulli(&d, &Ball::unit(), &SolverConfig::default()).unwrap().u
}

fn almost_minimizer(g: &Grid) -> GridFunction {
    let d = fixture(&half_plane(), g).unwrap();
    let a = |x: &[f64]| 1.0 + 0.1 * (x[0] * x[0] + x[1] * x[1]).sqrt().sqrt();
    let q = |_: &[f64]| 1.0;
    let declared = Oscillation {
        kappa: 0.15,
        beta: 0.5,
    };
    generate_almost_minimizer(&a, &q, &d, &Ball::unit(), &declared, &SolverConfig::default())
        .unwrap()
        .u
}

struct Field {
    name: String,
    u: GridFunction,
    fb: FreeBoundary,
}

impl Field {
    fn new(name: &str, u: GridFunction) -> Field {
        let fb = extract_free_boundary(&u).unwrap();
        Field {
            name: name.into(),
            u,
            fb,
        }
    }
}

/// Minimizers and the almost minimizer at `h = 1/256` on `[-1.5, 1.5]²`.
struct Outputs {
    h: f64,
    minimizers: Vec<Field>,
    almost: Field,
}

impl Outputs {
    fn build() -> Outputs {
        let h = 1.0 / 256.0;
        let g = grid(1.5, h);
        let minimizers = [("half_plane", half_plane()), ("tilted", tilted()), ("wedge_1.5", wedge(1.5))]
            .into_iter()
            .map(|(n, f)| Field::new(&format!("minimizer[{n}]"), solve(&f, &g)))
            .collect();
        Outputs {
            h,
            minimizers,
            almost: Field::new("almost_minimizer[half_plane]", almost_minimizer(&g)),
        }
    }

    fn all(&self) -> impl Iterator<Item = &Field> {
        self.minimizers.iter().chain(std::iter::once(&self.almost))
    }
}

fn ac1() -> Outcome {
    let mut o = Outcome::new();
    let h = 1.0 / 256.0;
    let g = grid(1.25, h);
    let ball = Ball::unit();
    let u = fixture(&half_plane(), &g).unwrap();
    let j = bernoulli_energy(&u, &ball).unwrap().total;
    o.check((j - PI).abs() <= 10.0 * h, format!("J(x2+) = {j:.6}, |J - pi| = {:.2e} <= 10h = {:.2e}", (j - PI).abs(), 10.0 * h));
    for m in [0.5, 1.0, 2.0] {
        let q = [m * 0.3f64.cos(), m * 0.3f64.sin()];
        let u = sample(|x| q[0] * x[0] + q[1] * x[1], &g, Role::Signed).unwrap();
        let j = bernoulli_energy(&u, &ball).unwrap().total;
        let exact = m * m * PI + FRAC_PI_2;
        let err = (j - exact).abs();
        o.check(err <= 20.0 * h, format!("J(q.x), |q| = {m}: {j:.6} vs {exact:.6}, err {err:.2e} <= 20h = {:.2e}", 20.0 * h));
    }
    o
}

fn ac2() -> Outcome {
    let mut o = Outcome::new();
    let saddle = |x: &[f64]| x[0] * x[0] - x[1] * x[1];
    for h in [1.0 / 128.0, 1.0 / 256.0] {
        let g = grid(1.25, h);
        let ball = Ball::unit();
        let exact = sample(saddle, &g, Role::Signed).unwrap();
        let data = sample(|x| if x[0] * x[0] + x[1] * x[1] < 0.81 { 0.0 } else { saddle(x) }, &g, Role::Signed)
            .unwrap();
        let tol = 10.0 * h * h;
        let (v, _) = harmonic_replacement(&data, &ball).unwrap();
        let err = v.max_abs_diff_in_ball(&exact, &ball).unwrap();
        o.check(err <= tol, format!("dirichlet ball, h = 1/{}: err {err:.2e} <= 10h^2 = {tol:.2e}", (1.0 / h) as u32));
        let (v, _) = neumann_halfball_solve(&data, &ball).unwrap();
        let err = v.max_abs_diff_in_ball(&exact, &ball).unwrap();
        o.check(err <= tol, format!("neumann half ball, h = 1/{}: err {err:.2e} <= 10h^2 = {tol:.2e}", (1.0 / h) as u32));
    }
    o
}

fn ac3(out: &Outputs) -> Outcome {
    let mut o = Outcome::new();
    let ball = Ball::unit();
    let coarse = grid(1.5, 1.0 / 128.0);
    let coarse_u = solve(&half_plane(), &coarse);
    let runs = [
        (1.0 / 128.0, 0.05, &coarse_u),
        (out.h, 0.03, &out.minimizers[0].u),
    ];
    for (h, tol, u) in runs {
        let data = fixture(&half_plane(), u.grid()).unwrap();
        let err = u.max_abs_diff_in_ball(&data, &ball).unwrap();
        o.check(err <= tol, format!("h = 1/{}: |u - x2+| = {err:.4} <= {tol}", (1.0 / h) as u32));
        let ju = bernoulli_energy(u, &ball).unwrap().total;
        let jd = bernoulli_energy(&data, &ball).unwrap().total;
        o.check(ju <= jd + 20.0 * h, format!("h = 1/{}: J(u) = {ju:.6} <= J(x2+) + 20h = {:.6}", (1.0 / h) as u32, jd + 20.0 * h));
    }
    o
}

fn ac4(out: &Outputs) -> Outcome {
    let mut o = Outcome::new();
    let ball = Ball::centered(0.5);
    let g = grid(1.5, out.h);
    let closed: Vec<Field> = [("half_plane", half_plane()), ("tilted", tilted())]
        .into_iter()
        .map(|(n, f)| Field::new(&format!("fixture[{n}]"), fixture(&f, &g).unwrap()))
        .collect();
    for f in closed.iter().chain(out.all()) {
        let v = gradient_near_free_boundary(&f.u, &f.fb, &ball, 0.1).unwrap();
        o.check(v <= 2.2, format!("{}: sup |grad u| near F in B_1/2 = {v:.4} <= 2.2", f.name));
    }
    o
}

fn ac5(out: &Outputs) -> Outcome {
    let mut o = Outcome::new();
    let radii = [0.05, 0.1, 0.2, 0.4];
    for f in out.all() {
        let idx = f.fb.in_ball(&Ball::unit());
        let mut worst = f64::INFINITY;
        for &i in &idx {
            for (_, ratio) in strong_nondegeneracy(&f.u, &f.fb.points[i], &radii).unwrap() {
                worst = worst.min(ratio);
            }
        }
        o.check(
            !idx.is_empty() && worst >= 0.3,
            format!("{}: min max_B_r u / r = {worst:.4} >= 0.3 over {} points", f.name, idx.len()),
        );
    }
    o
}

fn thin(fb: &FreeBoundary, ball: &Ball, max: usize) -> Vec<Vec<f64>> {
    let idx = fb.in_ball(ball);
    let n = idx.len();
    (0..max.min(n)).map(|k| fb.points[idx[k * n / max.min(n)]].clone()).collect()
}

fn ac6(out: &Outputs) -> Outcome {
    let mut o = Outcome::new();
    let radii: Vec<f64> = (2..=8).map(|k| k as f64 / 10.0).collect();
    let slack = 20.0 * out.h;
    let u = fixture(&half_plane(), &grid(1.25, out.h)).unwrap();
    let prof = weiss_profile(&u, &[0.0, 0.0], &radii).unwrap();
    let off = prof.values.iter().map(|v| (v - FRAC_PI_2).abs()).fold(0.0, f64::max);
    o.check(off <= slack, format!("fixture[half_plane]: max |W - pi/2| = {off:.2e} <= 20h = {slack:.2e}"));
    for f in out.all() {
        let centers = thin(&f.fb, &Ball::centered(0.4), 8);
        let mut drop: f64 = 0.0;
        for x0 in &centers {
            let inside: Vec<f64> = radii.iter().copied().filter(|r| r + x0[0].hypot(x0[1]) <= 1.0).collect();
            drop = drop.max(weiss_profile(&f.u, x0, &inside).unwrap().max_decrease());
        }
        o.check(
            !centers.is_empty() && drop <= slack,
            format!("{}: max decrease of W = {drop:.2e} <= 20h over {} centers", f.name, centers.len()),
        );
    }
    o
}

fn nearest_to_origin(fb: &FreeBoundary) -> Vec<f64> {
    fb.points
        .iter()
        .min_by(|a, b| (a[0].hypot(a[1])).total_cmp(&b[0].hypot(b[1])))
        .unwrap()
        .clone()
}

fn ac7() -> Outcome {
    let mut o = Outcome::new();
    let params = FlatnessParams::default();
    let describe = |it: &fblab_core::flatness::FlatnessIteration| {
        it.steps
            .iter()
            .skip(1)
            .map(|s| format!("{:.3}/{:.3}", s.factor.unwrap(), s.bound.unwrap()))
            .collect::<Vec<_>>()
            .join(", ")
    };
    let h = 1.0 / 512.0;
    let g = grid(1.25, h);
    let u = solve(&tilted(), &g);
    let fb = extract_free_boundary(&u).unwrap();
    let it = iterate_flatness(&u, &nearest_to_origin(&fb), 0.5, &params).unwrap();
    o.check(
        it.consecutive_passes >= 2,
        format!("minimizer[tilted], h = 1/512: {} consecutive passes >= 2 (ratio/bound: {})", it.consecutive_passes, describe(&it)),
    );
    let exact = fixture(&tilted(), &g).unwrap();
    let fb = extract_free_boundary(&exact).unwrap();
    let it = iterate_flatness(&exact, &nearest_to_origin(&fb), 0.5, &params).unwrap();
    o.lines.push(format!(
        "     fixture[tilted], h = 1/512: {} consecutive passes (ratio/bound: {})",
        it.consecutive_passes,
        describe(&it)
    ));
    let w = fixture(&wedge(1.5), &g).unwrap();
    let it = iterate_flatness(&w, &[0.0, 0.0], 0.6, &params).unwrap();
    o.check(
        it.consecutive_passes < 2,
        format!("fixture[wedge_1.5] control: {} consecutive passes < 2 (ratio/bound: {})", it.consecutive_passes, describe(&it)),
    );
    let coarse = fixture(&tilted(), &grid(1.25, 1.0 / 128.0)).unwrap();
    let it = iterate_flatness(&coarse, &[0.0, 0.0], 0.5, &params).unwrap();
    o.lines.push(format!("     h = 1/128 resolves {} decay step(s)", it.steps.len() - 1));
    o
}

fn ac8(out: &Outputs) -> Outcome {
    let mut o = Outcome::new();
    let ball = Ball::unit();
    let mus = [0.05, 0.1, 0.2];
    let g = grid(1.5, out.h);
    let closed: Vec<(String, GridFunction)> = [("half_plane", half_plane()), ("exterior_radial_0.3", exterior(0.3))]
        .into_iter()
        .map(|(n, f)| (format!("fixture[{n}]"), fixture(&f, &g).unwrap()))
        .collect();
    let fields = closed
        .iter()
        .map(|(n, u)| (n.as_str(), u))
        .chain(out.minimizers.iter().map(|f| (f.name.as_str(), &f.u)));
    for (name, u) in fields {
        let rows = barrier_sweep(u, &ball, &mus, 10, SEED).unwrap();
        let bad = rows.iter().filter(|r| r.verdict == ExclusionVerdict::Violation).count();
        o.check(
            rows.len() == 30 && bad == 0,
            format!("{name}: {bad} violations over {} barriers", rows.len()),
        );
    }
    o
}

fn ac9() -> Outcome {
    let mut o = Outcome::new();
    let h = 1.0 / 128.0;
    let g = grid(1.25, h);
    let ball = Ball::unit();
    let suite = Suite::with_minimizer(SolverConfig::default());
    let exact = AlmostMinParams::Multiplicative {
        kappa: 0.0,
        beta: 0.5,
    };
    for gamma in [1.5, 0.5] {
        let u = fixture(&wedge(gamma), &g).unwrap();
        let r = audit_almost_minimality(&u, &ball, &exact, &suite).unwrap().report;
        o.check(
            r.verdict == Verdict::Falsified && r.worst_gap > 0.05,
            format!(
                "fixture[wedge_{gamma}]: {} by {}, worst_gap {:.4} > 0.05, slack {:.4}",
                r.verdict,
                r.violating_competitor.as_deref().unwrap_or("-"),
                r.worst_gap,
                r.slack
            ),
        );
    }
    let u = fixture(&half_plane(), &g).unwrap();
    let r = audit_almost_minimality(&u, &ball, &exact, &suite).unwrap().report;
    o.check(r.verdict == Verdict::NotFalsifiedBySuite, format!("fixture[half_plane]: {}, worst_gap {:.4}", r.verdict, r.worst_gap));
    let declared = AlmostMinParams::Multiplicative {
        kappa: 0.6,
        beta: 0.5,
    };
    let u = almost_minimizer(&g);
    let r = audit_almost_minimality(&u, &ball, &declared, &suite).unwrap().report;
    o.check(
        r.verdict == Verdict::NotFalsifiedBySuite,
        format!("almost_minimizer at (4 kappa, beta) = (0.6, 0.5): {}, worst_ratio {:.4}", r.verdict, r.worst_ratio),
    );
    o
}

fn ac10(out: &Outputs) -> Outcome {
    let mut o = Outcome::new();
    let ball = Ball::unit();
    for f in out.all() {
        let d = hausdorff_estimate(&f.fb, &ball).unwrap().dimension;
        o.check((d - 1.0).abs() <= 0.05, format!("{}: box dimension {d:.4} = 1 +- 0.05", f.name));
    }
    let u = fixture(&exterior(0.3), &grid(1.25, out.h)).unwrap();
    let m = hausdorff_estimate(&extract_free_boundary(&u).unwrap(), &ball).unwrap().measure;
    let exact = 2.0 * PI * 0.3;
    o.check(
        (m - exact).abs() <= 20.0 * out.h,
        format!("fixture[exterior_radial_0.3]: length {m:.5} vs {exact:.5}, err {:.2e} <= 20h", (m - exact).abs()),
    );
    o
}

fn tree(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            tree(root, &p, out);
        } else {
            let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
            out.insert(rel, fs::read(&p).unwrap());
        }
    }
}

fn ac11() -> Outcome {
    let mut o = Outcome::new();
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    let configs = [
        (
            "touch",
            r#"{"schema": "fblab.config/1", "task": "touch", "seed": 11, "grid": {"h": 0.015625},
               "input": {"source": "fixture", "fixture": {"kind": "exterior_radial", "center": [0, 0], "r0": 0.3}}}"#,
        ),
        (
            "solve",
            r#"{"schema": "fblab.config/1", "task": "solve", "seed": 11, "grid": {"h": 0.03125},
               "params": {"data": {"kind": "wedge", "gamma": 1.5, "normal": [0, 1]}}}"#,
        ),
    ];
    for (task, text) in configs {
        fs::write(d.join(format!("{task}.json")), text).unwrap();
        let mut trees = Vec::new();
        for run in ["a", "b"] {
            let out = format!("{task}-{run}");
            let status = Command::new(env!("CARGO_BIN_EXE_fblab"))
                .args([task, "--config", &format!("{task}.json"), "--out", &out])
                .current_dir(d)
                .env_remove("FBLAB_THREADS")
                .output()
                .unwrap()
                .status;
            assert_eq!(status.code(), Some(0), "{task} run {run}");
            let mut files = BTreeMap::new();
            tree(&d.join(&out), &d.join(&out), &mut files);
            trees.push(files);
        }
        let same = trees[0] == trees[1];
        let files = trees[0].keys().cloned().collect::<Vec<_>>().join(" ");
        o.check(same, format!("{task}: two runs byte-identical ({files})"));
    }
    o
}

fn report(name: &'static str, r: Outcome, unexpected: &mut Vec<&'static str>) {
    let known = KNOWN_FAILURES.contains(&name);
    let tag = match (r.passed, known) {
        (true, _) => "PASS",
        (false, true) => "FAIL (known)",
        (false, false) => "FAIL",
    };
    println!("{tag} {name}");
    for l in &r.lines {
        println!("    {l}");
    }
    if r.passed == known {
        unexpected.push(name);
    }
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut unexpected = Vec::new();
    report("AC-1", ac1(), &mut unexpected);
    report("AC-2", ac2(), &mut unexpected);
    let out = Outputs::build();
    report("AC-3", ac3(&out), &mut unexpected);
    report("AC-4", ac4(&out), &mut unexpected);
    report("AC-5", ac5(&out), &mut unexpected);
    report("AC-6", ac6(&out), &mut unexpected);
    report("AC-7", ac7(), &mut unexpected);
    report("AC-8", ac8(&out), &mut unexpected);
    report("AC-9", ac9(), &mut unexpected);
    report("AC-10", ac10(&out), &mut unexpected);
    report("AC-11", ac11(), &mut unexpected);
    println!("acceptance: {:.1}s", start.elapsed().as_secs_f64());
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("unexpected outcome: {}", unexpected.join(", "));
        ExitCode::FAILURE
    }
}
