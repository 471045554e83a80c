//! Preconditioned conjugate gradient for masked Dirichlet problems
//! `L v = f` with `L v_i = Σ_e w_e (v_i - v_j) / h²` over the free nodes.
//!
//! The preconditioner is one symmetric geometric multigrid V-cycle for the
//! unweighted operator on the same mask.

use nalgebra::{DMatrix, DVector};

use super::SolveDiagnostics;
use crate::error::{Error, Result};
use crate::lattice::Grid;

const SMOOTHING_STEPS: usize = 2;
const DIRECT_LIMIT: usize = 800;
const COARSE_SWEEPS: usize = 50;

/// Forward edge weights: `w[i][k]` weights the edge from node `i` to `i + stride_k`.
pub(crate) type EdgeWeights = Vec<[f64; 3]>;

pub(crate) struct Problem<'a> {
    pub grid: &'a Grid,
    pub free: &'a [bool],
    pub weights: Option<&'a EdgeWeights>,
    pub rhs: Option<&'a [f64]>,
}

pub(crate) fn tolerance(h: f64) -> f64 {
    (h * h * h).max(1e-10)
}

struct Shape {
    dim: usize,
    shape: [usize; 3],
    strides: [usize; 3],
}

impl Shape {
    fn of(grid: &Grid) -> Shape {
        Shape {
            dim: grid.dim(),
            shape: grid.shape3(),
            strides: grid.strides(),
        }
    }

    fn len(&self) -> usize {
        self.shape[0] * self.shape[1] * self.shape[2]
    }

    fn multi(&self, idx: usize) -> [usize; 3] {
        let i0 = idx / self.strides[0];
        let rem = idx % self.strides[0];
        [i0, rem / self.strides[1], rem % self.strides[1]]
    }

    fn index(&self, ix: [usize; 3]) -> usize {
        ix[0] * self.strides[0] + ix[1] * self.strides[1] + ix[2]
    }
}

fn apply(p: &Problem, nodes: &[usize], v: &[f64], out: &mut [f64]) {
    let strides = p.grid.strides();
    let dim = p.grid.dim();
    let inv_h2 = 1.0 / (p.grid.h() * p.grid.h());
    match p.weights {
        None => {
            let diag = 2.0 * dim as f64;
            for &i in nodes {
                let mut s = diag * v[i];
                for &st in &strides[..dim] {
                    s -= v[i + st] + v[i - st];
                }
                out[i] = s * inv_h2;
            }
        }
        Some(w) => {
            for &i in nodes {
                let mut s = 0.0;
                for k in 0..dim {
                    let st = strides[k];
                    s += w[i][k] * (v[i] - v[i + st]) + w[i - st][k] * (v[i] - v[i - st]);
                }
                out[i] = s * inv_h2;
            }
        }
    }
}

fn dot(nodes: &[usize], a: &[f64], b: &[f64]) -> f64 {
    nodes.iter().map(|&i| a[i] * b[i]).sum()
}

fn max_abs(nodes: &[usize], a: &[f64]) -> f64 {
    nodes.iter().map(|&i| a[i].abs()).fold(0.0, f64::max)
}

/// Solves in place. `values` carries the Dirichlet data on non-free nodes and
/// the initial guess on free nodes.
pub(crate) fn solve(p: &Problem, values: &mut [f64]) -> Result<SolveDiagnostics> {
    let n = p.grid.len();
    assert_eq!(values.len(), n);
    let nodes: Vec<usize> = (0..n).filter(|&i| p.free[i]).collect();
    let tol = tolerance(p.grid.h());
    if nodes.is_empty() {
        return Ok(SolveDiagnostics {
            iterations: 0,
            residual: 0.0,
            tolerance: tol,
        });
    }
    let cap = (50.0 * (n as f64).sqrt()).ceil() as usize;
    let mg = Multigrid::new(p.grid, p.free);

    let mut ax = vec![0.0; n];
    let mut r = vec![0.0; n];
    let true_residual = |values: &[f64], ax: &mut [f64], r: &mut [f64]| {
        apply(p, &nodes, values, ax);
        for &i in &nodes {
            r[i] = p.rhs.map_or(0.0, |f| f[i]) - ax[i];
        }
        max_abs(&nodes, r)
    };
    let mut res = true_residual(values, &mut ax, &mut r);
    let mut z = vec![0.0; n];
    let mut pdir = vec![0.0; n];
    let mut ap = vec![0.0; n];
    let mut iterations = 0;
    let mut restart = true;
    let mut rz = 0.0;
    loop {
        if res <= tol {
            let check = true_residual(values, &mut ax, &mut r);
            if check <= tol {
                return Ok(SolveDiagnostics {
                    iterations,
                    residual: check,
                    tolerance: tol,
                });
            }
            res = check;
            restart = true;
        }
        if iterations >= cap {
            return Err(Error::NonConvergence {
                iterations,
                residual: res,
                tolerance: tol,
            });
        }
        mg.precondition(&r, &mut z);
        let rz_new = dot(&nodes, &r, &z);
        if restart {
            for &i in &nodes {
                pdir[i] = z[i];
            }
            restart = false;
        } else {
            let beta = rz_new / rz;
            for &i in &nodes {
                pdir[i] = z[i] + beta * pdir[i];
            }
        }
        rz = rz_new;
        apply(p, &nodes, &pdir, &mut ap);
        let pap = dot(&nodes, &pdir, &ap);
        if !(pap > 0.0) {
            return Err(Error::NonConvergence {
                iterations,
                residual: res,
                tolerance: tol,
            });
        }
        let alpha = rz / pap;
        for &i in &nodes {
            values[i] += alpha * pdir[i];
            r[i] -= alpha * ap[i];
        }
        res = max_abs(&nodes, &r);
        iterations += 1;
    }
}

struct Level {
    sh: Shape,
    inv_h2: f64,
    free: Vec<bool>,
    red: Vec<usize>,
    black: Vec<usize>,
}

impl Level {
    fn new(sh: Shape, h: f64, free: Vec<bool>) -> Level {
        let mut red = Vec::new();
        let mut black = Vec::new();
        for (i, &f) in free.iter().enumerate() {
            if f {
                let ix = sh.multi(i);
                if (ix[0] + ix[1] + ix[2]) % 2 == 0 {
                    red.push(i);
                } else {
                    black.push(i);
                }
            }
        }
        Level {
            sh,
            inv_h2: 1.0 / (h * h),
            free,
            red,
            black,
        }
    }

    fn unknowns(&self) -> usize {
        self.red.len() + self.black.len()
    }

    fn sweep(&self, color: &[usize], e: &mut [f64], r: &[f64]) {
        let d = 2.0 * self.sh.dim as f64;
        let h2 = 1.0 / self.inv_h2;
        let st = self.sh.strides;
        for &i in color {
            let mut s = h2 * r[i];
            for &k in &st[..self.sh.dim] {
                s += e[i + k] + e[i - k];
            }
            e[i] = s / d;
        }
    }

    fn residual(&self, e: &[f64], r: &[f64], out: &mut [f64]) {
        let d = 2.0 * self.sh.dim as f64;
        let st = self.sh.strides;
        for &i in self.red.iter().chain(&self.black) {
            let mut s = d * e[i];
            for &k in &st[..self.sh.dim] {
                s -= e[i + k] + e[i - k];
            }
            out[i] = r[i] - s * self.inv_h2;
        }
    }

    fn coarsen(&self) -> Option<Level> {
        let dim = self.sh.dim;
        let mut shape = [1usize; 3];
        for k in 0..dim {
            let s = self.sh.shape[k];
            if (s - 1) % 2 != 0 || s < 5 {
                return None;
            }
            shape[k] = (s - 1) / 2 + 1;
        }
        let sh = Shape {
            dim,
            shape,
            strides: [shape[1] * shape[2], shape[2], 1],
        };
        let mut free = vec![false; sh.len()];
        for (ci, f) in free.iter_mut().enumerate() {
            let mut ix = sh.multi(ci);
            for v in ix.iter_mut().take(dim) {
                *v *= 2;
            }
            *f = self.free[self.sh.index(ix)];
        }
        Some(Level::new(sh, 2.0 / self.inv_h2.sqrt(), free))
    }
}

enum Coarse {
    Direct {
        nodes: Vec<usize>,
        chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    },
    Sweeps,
}

struct Multigrid {
    levels: Vec<Level>,
    coarse: Coarse,
}

/// Offsets `o ∈ {-1,0,1}^dim` with the per-axis prolongation weights `1, 1/2`.
fn stencil(dim: usize, strides: [usize; 3]) -> Vec<(isize, f64)> {
    let mut out = vec![(0isize, 1.0)];
    for &st in &strides[..dim] {
        let mut next = Vec::with_capacity(out.len() * 3);
        for &(off, w) in &out {
            next.push((off - st as isize, 0.5 * w));
            next.push((off, w));
            next.push((off + st as isize, 0.5 * w));
        }
        out = next;
    }
    out
}

impl Multigrid {
    fn new(grid: &Grid, free: &[bool]) -> Multigrid {
        let mut levels = vec![Level::new(Shape::of(grid), grid.h(), free.to_vec())];
        while levels.last().unwrap().unknowns() > DIRECT_LIMIT {
            match levels.last().unwrap().coarsen() {
                Some(l) => levels.push(l),
                None => break,
            }
        }
        let last = levels.last().unwrap();
        let coarse = if last.unknowns() <= DIRECT_LIMIT && last.unknowns() > 0 {
            let mut nodes: Vec<usize> = last.red.iter().chain(&last.black).copied().collect();
            nodes.sort_unstable();
            let mut pos = vec![usize::MAX; last.sh.len()];
            for (k, &i) in nodes.iter().enumerate() {
                pos[i] = k;
            }
            let m = nodes.len();
            let mut a = DMatrix::<f64>::zeros(m, m);
            for (k, &i) in nodes.iter().enumerate() {
                a[(k, k)] = 2.0 * last.sh.dim as f64 * last.inv_h2;
                for &st in &last.sh.strides[..last.sh.dim] {
                    for j in [i + st, i - st] {
                        if pos[j] != usize::MAX {
                            a[(k, pos[j])] = -last.inv_h2;
                        }
                    }
                }
            }
            match a.cholesky() {
                Some(chol) => Coarse::Direct { nodes, chol },
                None => Coarse::Sweeps,
            }
        } else {
            Coarse::Sweeps
        };
        Multigrid { levels, coarse }
    }

    fn precondition(&self, r: &[f64], z: &mut [f64]) {
        z.iter_mut().for_each(|v| *v = 0.0);
        self.vcycle(0, r, z);
    }

    fn vcycle(&self, l: usize, r: &[f64], e: &mut [f64]) {
        let lev = &self.levels[l];
        if l + 1 == self.levels.len() {
            self.coarse_solve(r, e);
            return;
        }
        for _ in 0..SMOOTHING_STEPS {
            lev.sweep(&lev.red, e, r);
            lev.sweep(&lev.black, e, r);
        }
        let mut res = vec![0.0; lev.sh.len()];
        lev.residual(e, r, &mut res);

        let coarse = &self.levels[l + 1];
        let dim = lev.sh.dim;
        let st = stencil(dim, lev.sh.strides);
        let scale = 1.0 / (1usize << dim) as f64;
        let mut rc = vec![0.0; coarse.sh.len()];
        for &ci in coarse.red.iter().chain(&coarse.black) {
            let mut ix = coarse.sh.multi(ci);
            for v in ix.iter_mut().take(dim) {
                *v *= 2;
            }
            let fi = lev.sh.index(ix) as isize;
            rc[ci] = scale
                * st.iter()
                    .map(|&(o, w)| w * res[(fi + o) as usize])
                    .sum::<f64>();
        }
        let mut ec = vec![0.0; coarse.sh.len()];
        self.vcycle(l + 1, &rc, &mut ec);
        for &ci in coarse.red.iter().chain(&coarse.black) {
            let mut ix = coarse.sh.multi(ci);
            for v in ix.iter_mut().take(dim) {
                *v *= 2;
            }
            let fi = lev.sh.index(ix) as isize;
            for &(o, w) in &st {
                let j = (fi + o) as usize;
                if lev.free[j] {
                    e[j] += w * ec[ci];
                }
            }
        }
        for _ in 0..SMOOTHING_STEPS {
            lev.sweep(&lev.black, e, r);
            lev.sweep(&lev.red, e, r);
        }
    }

    fn coarse_solve(&self, r: &[f64], e: &mut [f64]) {
        let lev = self.levels.last().unwrap();
        match &self.coarse {
            Coarse::Direct { nodes, chol } => {
                let b = DVector::from_iterator(nodes.len(), nodes.iter().map(|&i| r[i]));
                let x = chol.solve(&b);
                for (k, &i) in nodes.iter().enumerate() {
                    e[i] = x[k];
                }
            }
            Coarse::Sweeps => {
                for _ in 0..COARSE_SWEEPS {
                    lev.sweep(&lev.red, e, r);
                    lev.sweep(&lev.black, e, r);
                    lev.sweep(&lev.black, e, r);
                    lev.sweep(&lev.red, e, r);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{make_grid, Ball};

    #[test]
    fn solves_poisson_with_constant_source() {
        // -Δv = 4 on the unit disc with v = 0 outside: v = 1 - |x|².
        for h in [1.0 / 32.0, 1.0 / 64.0] {
            let g = make_grid(&[(-1.25, 1.25), (-1.25, 1.25)], h).unwrap();
            let free = g.interior_mask(&Ball::unit());
            let f = vec![4.0; g.len()];
            let mut v: Vec<f64> = (0..g.len())
                .map(|i| {
                    let x = g.coords(i);
                    1.0 - x[0] * x[0] - x[1] * x[1]
                })
                .collect();
            let exact = v.clone();
            for (i, vi) in v.iter_mut().enumerate() {
                if free[i] {
                    *vi = 0.0;
                }
            }
            let p = Problem {
                grid: &g,
                free: &free,
                weights: None,
                rhs: Some(&f),
            };
            let d = solve(&p, &mut v).unwrap();
            assert!(d.residual <= d.tolerance);
            assert!(d.iterations < 30, "{} iterations", d.iterations);
            let err = (0..g.len())
                .filter(|&i| free[i])
                .map(|i| (v[i] - exact[i]).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-8, "err {err}");
        }
    }

    #[test]
    fn weighted_operator_converges() {
        let g = make_grid(&[(-1.0, 1.0), (-1.0, 1.0), (-1.0, 1.0)], 1.0 / 16.0).unwrap();
        let free = g.interior_mask(&Ball::centered(0.9));
        let w: EdgeWeights = (0..g.len())
            .map(|i| {
                let x = g.coords(i);
                let a = 1.0 + 0.3 * (x[0] * x[0] + x[1]).abs().sqrt();
                [a; 3]
            })
            .collect();
        let mut v: Vec<f64> = (0..g.len()).map(|i| g.coords(i)[2].max(0.0)).collect();
        let p = Problem {
            grid: &g,
            free: &free,
            weights: Some(&w),
            rhs: None,
        };
        let d = solve(&p, &mut v).unwrap();
        assert!(d.residual <= d.tolerance);
    }
}
