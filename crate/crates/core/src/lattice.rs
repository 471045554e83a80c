//! Uniform lattices, grid functions and the cell quadrature shared by every
//! other module.
//!
//! Nodes are stored row-major (last axis fastest). A cell is identified by the
//! index of its lower corner node. Ball-localized integrals count a cell when
//! its center lies strictly inside the ball.
//!
//! The cell energy density averages the squared forward differences over the
//! `2^(n-1)` parallel edges of each axis, so the discrete Dirichlet energy is a
//! sum of squared edge differences and is invariant under the lattice
//! symmetries. Each cell is split into `2^n` corner sub-cells and a sub-cell is
//! positive when its corner node is strictly positive.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub mod gfn;

/// Padded coordinates; entries past `dim` are zero.
pub type Point = [f64; 3];

const SHAPE_TOL: f64 = 1e-12;

/// Round-off below this magnitude is clamped to zero in u-role fields.
pub const CLAMP_TOL: f64 = 1e-14;

/// Uniform lattice over an axis-aligned box.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    dim: usize,
    lo: Point,
    hi: Point,
    h: f64,
    shape: [usize; 3],
    strides: [usize; 3],
}

/// Builds a grid over `bounds` (one `(lo, hi)` pair per axis) with spacing `h`.
pub fn make_grid(bounds: &[(f64, f64)], h: f64) -> Result<Grid> {
    Grid::new(bounds, h)
}

impl Grid {
    pub fn new(bounds: &[(f64, f64)], h: f64) -> Result<Grid> {
        let dim = bounds.len();
        if !(2..=3).contains(&dim) {
            return Err(Error::InvalidGrid {
                axis: 0,
                reason: format!("dimension must be 2 or 3, got {dim}"),
            });
        }
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::InvalidGrid {
                axis: 0,
                reason: format!("spacing must be positive and finite, got {h}"),
            });
        }
        let mut lo = [0.0; 3];
        let mut hi = [0.0; 3];
        let mut shape = [1usize; 3];
        for (axis, &(a, b)) in bounds.iter().enumerate() {
            if !(a.is_finite() && b.is_finite() && b > a) {
                return Err(Error::InvalidGrid {
                    axis,
                    reason: format!("bounds [{a}, {b}] are not an interval"),
                });
            }
            let cells = (b - a) / h;
            let rounded = cells.round();
            if rounded < 1.0 {
                return Err(Error::InvalidGrid {
                    axis,
                    reason: format!("spacing {h} exceeds side length {}", b - a),
                });
            }
            if (cells - rounded).abs() > SHAPE_TOL * cells {
                return Err(Error::InvalidGrid {
                    axis,
                    reason: format!("side length {} is not a multiple of {h}", b - a),
                });
            }
            lo[axis] = a;
            hi[axis] = b;
            shape[axis] = rounded as usize + 1;
        }
        let strides = [shape[1] * shape[2], shape[2], 1];
        Ok(Grid {
            dim,
            lo,
            hi,
            h,
            shape,
            strides,
        })
    }

    /// Square/cube `[-half, half]^dim`.
    pub fn centered(dim: usize, half: f64, h: f64) -> Result<Grid> {
        Grid::new(&vec![(-half, half); dim], h)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape[..self.dim]
    }

    pub fn bounds(&self) -> Vec<(f64, f64)> {
        (0..self.dim).map(|k| (self.lo[k], self.hi[k])).collect()
    }

    pub fn lo(&self) -> Point {
        self.lo
    }

    pub fn hi(&self) -> Point {
        self.hi
    }

    pub(crate) fn shape3(&self) -> [usize; 3] {
        self.shape
    }

    pub(crate) fn strides(&self) -> [usize; 3] {
        self.strides
    }

    /// Number of nodes.
    pub fn len(&self) -> usize {
        self.shape[0] * self.shape[1] * self.shape[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Volume of one cell, `h^dim`.
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim as i32)
    }

    pub fn index(&self, ix: [usize; 3]) -> usize {
        ix[0] * self.strides[0] + ix[1] * self.strides[1] + ix[2]
    }

    pub fn multi_index(&self, idx: usize) -> [usize; 3] {
        let i0 = idx / self.strides[0];
        let rem = idx % self.strides[0];
        [i0, rem / self.strides[1], rem % self.strides[1]]
    }

    pub fn coords(&self, idx: usize) -> Point {
        let ix = self.multi_index(idx);
        let mut x = [0.0; 3];
        for k in 0..self.dim {
            x[k] = self.lo[k] + ix[k] as f64 * self.h;
        }
        x
    }

    /// Center of the cell whose lower corner is `cell`.
    pub fn cell_center(&self, cell: usize) -> Point {
        let mut x = self.coords(cell);
        for xk in x.iter_mut().take(self.dim) {
            *xk += 0.5 * self.h;
        }
        x
    }

    pub fn is_boundary_node(&self, idx: usize) -> bool {
        let ix = self.multi_index(idx);
        (0..self.dim).any(|k| ix[k] == 0 || ix[k] + 1 == self.shape[k])
    }

    /// Whether `idx` is the lower corner of a cell.
    pub fn is_cell(&self, idx: usize) -> bool {
        let ix = self.multi_index(idx);
        (0..self.dim).all(|k| ix[k] + 1 < self.shape[k])
    }

    /// Node offsets of the `2^dim` cell corners, indexed by bit pattern.
    pub fn corner_offsets(&self) -> Vec<usize> {
        (0..1usize << self.dim)
            .map(|bits| {
                (0..self.dim)
                    .filter(|k| bits & (1 << k) != 0)
                    .map(|k| self.strides[k])
                    .sum()
            })
            .collect()
    }

    /// Closest node to `x` (coordinates clamped to the box).
    pub fn nearest_node(&self, x: &[f64]) -> usize {
        let mut ix = [0usize; 3];
        for k in 0..self.dim {
            let t = ((x[k] - self.lo[k]) / self.h).round();
            ix[k] = t.clamp(0.0, (self.shape[k] - 1) as f64) as usize;
        }
        self.index(ix)
    }

    pub fn contains_point(&self, x: &[f64]) -> bool {
        (0..self.dim).all(|k| x[k] >= self.lo[k] - 1e-12 && x[k] <= self.hi[k] + 1e-12)
    }

    /// Whether the closed ball lies inside the grid box.
    pub fn contains_ball(&self, ball: &Ball) -> bool {
        let slack = 1e-9 * self.h;
        ball.radius > 0.0
            && (0..self.dim).all(|k| {
                ball.center[k] - ball.radius >= self.lo[k] - slack
                    && ball.center[k] + ball.radius <= self.hi[k] + slack
            })
    }

    pub fn require_ball(&self, ball: &Ball) -> Result<()> {
        if self.contains_ball(ball) {
            Ok(())
        } else {
            Err(Error::BallOutsideGrid {
                center: ball.center[..self.dim].to_vec(),
                radius: ball.radius,
            })
        }
    }

    /// Index ranges (inclusive) of nodes whose coordinate lies in `[a, b]` per axis.
    fn node_range(&self, a: &Point, b: &Point) -> Option<[(usize, usize); 3]> {
        let mut r = [(0usize, 0usize); 3];
        for k in 0..self.dim {
            let first = ((a[k] - self.lo[k]) / self.h - 1e-9).ceil().max(0.0);
            let last = ((b[k] - self.lo[k]) / self.h + 1e-9)
                .floor()
                .min((self.shape[k] - 1) as f64);
            if last < first {
                return None;
            }
            r[k] = (first as usize, last as usize);
        }
        Some(r)
    }

    fn for_each_in_range(&self, range: [(usize, usize); 3], mut f: impl FnMut(usize)) {
        let (r0, r1, r2) = (range[0], range[1], range[2]);
        for i0 in r0.0..=r0.1 {
            for i1 in r1.0..=r1.1 {
                let base = i0 * self.strides[0] + i1 * self.strides[1];
                for i2 in r2.0..=r2.1 {
                    f(base + i2);
                }
            }
        }
    }

    /// Lower-corner indices of the cells whose centers lie strictly inside `ball`.
    pub fn cells_in_ball(&self, ball: &Ball) -> Vec<usize> {
        let mut a = [0.0; 3];
        let mut b = [0.0; 3];
        for k in 0..self.dim {
            a[k] = ball.center[k] - ball.radius - 0.5 * self.h;
            b[k] = ball.center[k] + ball.radius - 0.5 * self.h;
        }
        let mut range = match self.node_range(&a, &b) {
            Some(r) => r,
            None => return Vec::new(),
        };
        for k in 0..self.dim {
            range[k].1 = range[k].1.min(self.shape[k] - 2);
            if range[k].0 > range[k].1 {
                return Vec::new();
            }
        }
        let r2 = ball.radius * ball.radius;
        let mut out = Vec::new();
        self.for_each_in_range(range, |idx| {
            let c = self.cell_center(idx);
            if dist2(&c, &ball.center, self.dim) < r2 {
                out.push(idx);
            }
        });
        out
    }

    /// Nodes in the closed ball.
    pub fn nodes_in_ball(&self, ball: &Ball) -> Vec<usize> {
        let mut a = [0.0; 3];
        let mut b = [0.0; 3];
        for k in 0..self.dim {
            a[k] = ball.center[k] - ball.radius;
            b[k] = ball.center[k] + ball.radius;
        }
        let range = match self.node_range(&a, &b) {
            Some(r) => r,
            None => return Vec::new(),
        };
        let r2 = ball.radius * ball.radius * (1.0 + 1e-12);
        let mut out = Vec::new();
        self.for_each_in_range(range, |idx| {
            if dist2(&self.coords(idx), &ball.center, self.dim) <= r2 {
                out.push(idx);
            }
        });
        out
    }

    /// Measure of the cells counted in `ball`.
    pub fn ball_measure(&self, ball: &Ball) -> f64 {
        self.cells_in_ball(ball).len() as f64 * self.cell_volume()
    }

    /// Nodes all of whose `2^dim` adjacent cells are counted in `ball`.
    ///
    /// These are the free nodes of every ball-local solve: the remaining
    /// corners of counted cells form the Dirichlet ring.
    pub fn interior_mask(&self, ball: &Ball) -> Vec<bool> {
        let mut in_ball = vec![false; self.len()];
        for c in self.cells_in_ball(ball) {
            in_ball[c] = true;
        }
        let offsets = self.corner_offsets();
        let mut mask = vec![false; self.len()];
        for c in self.cells_in_ball(ball) {
            // Candidate node: the upper corner of this cell.
            let node = c + offsets[offsets.len() - 1];
            if self.is_boundary_node(node) {
                continue;
            }
            mask[node] = offsets.iter().all(|&o| in_ball[node - o]);
        }
        mask
    }

    /// The grid with doubled spacing over the same box, when the node counts allow it.
    pub fn coarsen(&self) -> Option<Grid> {
        if (0..self.dim).any(|k| (self.shape[k] - 1) % 2 != 0 || self.shape[k] < 5) {
            return None;
        }
        Grid::new(&self.bounds(), 2.0 * self.h).ok()
    }

    /// Neighbour of `idx` along `axis` in direction `dir` (+1 / -1), if inside the box.
    pub fn neighbor(&self, idx: usize, axis: usize, dir: i32) -> Option<usize> {
        let ix = self.multi_index(idx);
        if dir > 0 {
            (ix[axis] + 1 < self.shape[axis]).then(|| idx + self.strides[axis])
        } else {
            (ix[axis] > 0).then(|| idx - self.strides[axis])
        }
    }
}

pub(crate) fn dist2(a: &Point, b: &Point, dim: usize) -> f64 {
    (0..dim).map(|k| (a[k] - b[k]) * (a[k] - b[k])).sum()
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn pad(x: &[f64]) -> Point {
    let mut p = [0.0; 3];
    for (k, v) in x.iter().take(3).enumerate() {
        p[k] = *v;
    }
    p
}

/// Closed ball `B_r(x)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Point,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: &[f64], radius: f64) -> Result<Ball> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::param("radius", format!("must be positive, got {radius}")));
        }
        if center.iter().any(|c| !c.is_finite()) {
            return Err(Error::param("center", "must be finite"));
        }
        Ok(Ball {
            center: pad(center),
            radius,
        })
    }

    /// `B_1(0)`.
    pub fn unit() -> Ball {
        Ball {
            center: [0.0; 3],
            radius: 1.0,
        }
    }

    pub fn centered(radius: f64) -> Ball {
        Ball {
            center: [0.0; 3],
            radius,
        }
    }

    /// Concentric ball with radius scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> Ball {
        Ball {
            center: self.center,
            radius: self.radius * factor,
        }
    }

    pub fn contains(&self, x: &Point, dim: usize) -> bool {
        dist2(x, &self.center, dim) <= self.radius * self.radius * (1.0 + 1e-12)
    }
}

/// Whether a field stands for a candidate `u` (nonnegative) or is a signed auxiliary field.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    U,
    Signed,
}

/// Scalar field sampled at the nodes of a grid. Immutable after construction.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<f64>,
    role: Role,
}

/// Evaluates `f` at every node of `grid`.
pub fn sample<F>(f: F, grid: &Grid, role: Role) -> Result<GridFunction>
where
    F: Fn(&[f64]) -> f64,
{
    let dim = grid.dim();
    let values = (0..grid.len())
        .map(|idx| {
            let x = grid.coords(idx);
            f(&x[..dim])
        })
        .collect();
    GridFunction::new(grid.clone(), values, role)
}

impl GridFunction {
    /// Validates finiteness and, for u-role fields, the sign.
    pub fn new(grid: Grid, mut values: Vec<f64>, role: Role) -> Result<GridFunction> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        for (index, v) in values.iter_mut().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite { index, value: *v });
            }
            if role == Role::U && *v < 0.0 {
                if *v > -CLAMP_TOL {
                    *v = 0.0;
                } else {
                    return Err(Error::NegativeValue { index, value: *v });
                }
            }
        }
        Ok(GridFunction { grid, values, role })
    }

    pub fn zeros(grid: &Grid, role: Role) -> GridFunction {
        GridFunction {
            values: vec![0.0; grid.len()],
            grid: grid.clone(),
            role,
        }
    }

    pub fn constant(grid: &Grid, c: f64, role: Role) -> Result<GridFunction> {
        GridFunction::new(grid.clone(), vec![c; grid.len()], role)
    }

    /// Replaces the values, keeping grid and role.
    pub fn with_values(&self, values: Vec<f64>) -> Result<GridFunction> {
        GridFunction::new(self.grid.clone(), values, self.role)
    }

    pub fn with_role(&self, role: Role) -> Result<GridFunction> {
        GridFunction::new(self.grid.clone(), self.values.clone(), role)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn dim(&self) -> usize {
        self.grid.dim
    }

    pub fn value(&self, idx: usize) -> f64 {
        self.values[idx]
    }

    pub fn value_at_node(&self, x: &[f64]) -> f64 {
        self.values[self.grid.nearest_node(x)]
    }

    /// Multilinear interpolation; points outside the box are clamped onto it.
    pub fn interpolate(&self, x: &[f64]) -> f64 {
        let g = &self.grid;
        let mut base = [0usize; 3];
        let mut t = [0.0; 3];
        for k in 0..g.dim {
            let s = ((x[k] - g.lo[k]) / g.h).clamp(0.0, (g.shape[k] - 1) as f64);
            let mut i = s.floor() as usize;
            if i + 1 >= g.shape[k] {
                i = g.shape[k] - 2;
            }
            base[k] = i;
            t[k] = s - i as f64;
        }
        let b = g.index(base);
        let mut acc = 0.0;
        for bits in 0..1usize << g.dim {
            let mut w = 1.0;
            let mut off = 0;
            for k in 0..g.dim {
                if bits & (1 << k) != 0 {
                    w *= t[k];
                    off += g.strides[k];
                } else {
                    w *= 1.0 - t[k];
                }
            }
            if w != 0.0 {
                acc += w * self.values[b + off];
            }
        }
        acc
    }

    pub fn max_in_ball(&self, ball: &Ball) -> Option<f64> {
        self.grid
            .nodes_in_ball(ball)
            .into_iter()
            .map(|i| self.values[i])
            .reduce(f64::max)
    }

    pub fn min_in_ball(&self, ball: &Ball) -> Option<f64> {
        self.grid
            .nodes_in_ball(ball)
            .into_iter()
            .map(|i| self.values[i])
            .reduce(f64::min)
    }

    /// Nodewise `self - other` as a signed field.
    pub fn difference(&self, other: &GridFunction) -> Result<GridFunction> {
        check_same_grid(self, other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        GridFunction::new(self.grid.clone(), values, Role::Signed)
    }

    /// Largest nodewise deviation from `other` over the nodes of `ball`.
    pub fn max_abs_diff_in_ball(&self, other: &GridFunction, ball: &Ball) -> Result<f64> {
        check_same_grid(self, other)?;
        Ok(self
            .grid
            .nodes_in_ball(ball)
            .into_iter()
            .map(|i| (self.values[i] - other.values[i]).abs())
            .fold(0.0, f64::max))
    }
}

pub(crate) fn check_same_grid(a: &GridFunction, b: &GridFunction) -> Result<()> {
    if a.grid != b.grid {
        return Err(Error::GridMismatch("fields live on different grids".into()));
    }
    Ok(())
}

/// Edge list of a single cell: `(corner_a, corner_b, axis)` as node offsets.
#[derive(Clone, Debug)]
pub(crate) struct CellStencil {
    pub dim: usize,
    pub h: f64,
    pub corners: Vec<usize>,
    pub edges: Vec<(usize, usize, usize)>,
    pub edges_per_axis: f64,
}

impl CellStencil {
    pub fn new(grid: &Grid) -> CellStencil {
        let corners = grid.corner_offsets();
        let mut edges = Vec::new();
        for axis in 0..grid.dim {
            for bits in 0..1usize << grid.dim {
                if bits & (1 << axis) == 0 {
                    edges.push((corners[bits], corners[bits | (1 << axis)], axis));
                }
            }
        }
        CellStencil {
            dim: grid.dim,
            h: grid.h,
            corners,
            edges,
            edges_per_axis: (1usize << (grid.dim - 1)) as f64,
        }
    }

    /// `|grad u|^2` on the cell: mean squared difference quotient per axis, summed.
    #[inline]
    pub fn density(&self, v: &[f64], cell: usize) -> f64 {
        let mut s = 0.0;
        for &(a, b, _) in &self.edges {
            let d = v[cell + b] - v[cell + a];
            s += d * d;
        }
        s / (self.edges_per_axis * self.h * self.h)
    }

    /// `|grad u - q|^2` on the cell.
    #[inline]
    pub fn density_shifted(&self, v: &[f64], cell: usize, q: &Point) -> f64 {
        let mut s = 0.0;
        for &(a, b, axis) in &self.edges {
            let d = (v[cell + b] - v[cell + a]) / self.h - q[axis];
            s += d * d;
        }
        s / self.edges_per_axis
    }

    /// Cell gradient: mean forward difference quotient per axis.
    #[inline]
    pub fn gradient(&self, v: &[f64], cell: usize) -> Point {
        let mut g = [0.0; 3];
        for &(a, b, axis) in &self.edges {
            g[axis] += v[cell + b] - v[cell + a];
        }
        for gk in g.iter_mut().take(self.dim) {
            *gk /= self.edges_per_axis * self.h;
        }
        g
    }

    /// Fraction of the cell whose corner node is strictly positive.
    #[inline]
    pub fn positive_fraction(&self, v: &[f64], cell: usize) -> f64 {
        let n = self.corners.iter().filter(|&&o| v[cell + o] > 0.0).count();
        n as f64 / self.corners.len() as f64
    }

    #[inline]
    pub fn zero_fraction(&self, v: &[f64], cell: usize) -> f64 {
        let n = self.corners.iter().filter(|&&o| v[cell + o] == 0.0).count();
        n as f64 / self.corners.len() as f64
    }
}

/// Discrete Dirichlet energy `∫_B |∇u|²`.
pub fn dirichlet_energy(u: &GridFunction, ball: &Ball) -> Result<f64> {
    let grid = u.grid();
    grid.require_ball(ball)?;
    let st = CellStencil::new(grid);
    let vol = grid.cell_volume();
    Ok(grid
        .cells_in_ball(ball)
        .into_iter()
        .map(|c| st.density(&u.values, c))
        .sum::<f64>()
        * vol)
}

/// Discrete measure of `{u > 0} ∩ B`.
pub fn positivity_measure(u: &GridFunction, ball: &Ball) -> Result<f64> {
    let grid = u.grid();
    grid.require_ball(ball)?;
    let st = CellStencil::new(grid);
    let vol = grid.cell_volume();
    Ok(grid
        .cells_in_ball(ball)
        .into_iter()
        .map(|c| st.positive_fraction(&u.values, c))
        .sum::<f64>()
        * vol)
}

/// Discrete measure of `{u = 0} ∩ B`.
pub fn zero_measure(u: &GridFunction, ball: &Ball) -> Result<f64> {
    let grid = u.grid();
    grid.require_ball(ball)?;
    let st = CellStencil::new(grid);
    let vol = grid.cell_volume();
    Ok(grid
        .cells_in_ball(ball)
        .into_iter()
        .map(|c| st.zero_fraction(&u.values, c))
        .sum::<f64>()
        * vol)
}

/// Largest cell gradient magnitude over the cells counted in `ball`.
pub fn max_gradient(u: &GridFunction, ball: &Ball) -> Result<f64> {
    let grid = u.grid();
    grid.require_ball(ball)?;
    let st = CellStencil::new(grid);
    Ok(grid
        .cells_in_ball(ball)
        .into_iter()
        .map(|c| st.density(&u.values, c).sqrt())
        .fold(0.0, f64::max))
}

/// Mean of the cell gradients over the cells counted in `ball`.
pub fn mean_gradient(u: &GridFunction, ball: &Ball) -> Result<Point> {
    let grid = u.grid();
    grid.require_ball(ball)?;
    let st = CellStencil::new(grid);
    let cells = grid.cells_in_ball(ball);
    if cells.is_empty() {
        return Err(Error::Unresolvable("ball contains no cells".into()));
    }
    let mut q = [0.0; 3];
    for &c in &cells {
        let g = st.gradient(&u.values, c);
        for k in 0..grid.dim {
            q[k] += g[k];
        }
    }
    for qk in q.iter_mut() {
        *qk /= cells.len() as f64;
    }
    Ok(q)
}

/// `(⨍_B |∇u - q|²)^{1/2}`.
pub fn gradient_deviation(u: &GridFunction, ball: &Ball, q: &Point) -> Result<f64> {
    let grid = u.grid();
    grid.require_ball(ball)?;
    let st = CellStencil::new(grid);
    let cells = grid.cells_in_ball(ball);
    if cells.is_empty() {
        return Err(Error::Unresolvable("ball contains no cells".into()));
    }
    let s: f64 = cells
        .iter()
        .map(|&c| st.density_shifted(&u.values, c, q))
        .sum();
    Ok((s / cells.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn unit_grid(h: f64) -> Grid {
        make_grid(&[(-1.0, 1.0), (-1.0, 1.0)], h).unwrap()
    }

    #[test]
    fn grid_shapes() {
        assert_eq!(unit_grid(0.01).shape(), &[201, 201]);
        let g3 = make_grid(&[(-1.0, 1.0); 3], 0.25).unwrap();
        assert_eq!(g3.shape(), &[9, 9, 9]);
        assert_eq!(g3.len(), 729);
    }

    #[test]
    fn grid_rejects_bad_spacing() {
        let err = make_grid(&[(-1.0, 1.0), (-1.0, 1.0)], 3.0).unwrap_err();
        assert!(matches!(err, Error::InvalidGrid { axis: 0, .. }), "{err}");
        let err = make_grid(&[(-1.0, 1.0), (0.0, 1.05)], 0.1).unwrap_err();
        assert!(matches!(err, Error::InvalidGrid { axis: 1, .. }), "{err}");
        assert!(make_grid(&[(-1.0, 1.0), (-1.0, 1.0)], -0.1).is_err());
        assert!(make_grid(&[(-1.0, 1.0)], 0.1).is_err());
    }

    #[test]
    fn index_round_trip() {
        let g = make_grid(&[(0.0, 1.0), (0.0, 2.0), (0.0, 0.5)], 0.25).unwrap();
        for idx in 0..g.len() {
            assert_eq!(g.index(g.multi_index(idx)), idx);
        }
    }

    #[test]
    fn sampling() {
        let g = make_grid(&[(-1.0, 1.0), (-1.0, 1.0)], 0.1).unwrap();
        let u = sample(|x| x[1].max(0.0), &g, Role::U).unwrap();
        assert!((u.value_at_node(&[0.0, 0.5]) - 0.5).abs() < 1e-12);
        let err = sample(|_| -1.0, &g, Role::U).unwrap_err();
        assert!(matches!(err, Error::NegativeValue { .. }));
        let tiny = sample(|_| -1e-16, &g, Role::U).unwrap();
        assert!(tiny.values().iter().all(|&v| v == 0.0));
        assert!(sample(|_| f64::NAN, &g, Role::Signed).is_err());
        let q = sample(|x| x[0] * x[0] + x[1] * x[1], &g, Role::U).unwrap();
        assert!((q.value_at_node(&[0.3, 0.4]) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn energy_of_planes() {
        let h = 1.0 / 128.0;
        let g = make_grid(&[(-1.0, 1.0), (-1.0, 1.0)], h).unwrap();
        let b = Ball::unit();
        let lin = sample(|x| x[1], &g, Role::Signed).unwrap();
        assert!((dirichlet_energy(&lin, &b).unwrap() - PI).abs() < 10.0 * h);
        let half = sample(|x| x[1].max(0.0), &g, Role::U).unwrap();
        assert!((dirichlet_energy(&half, &b).unwrap() - PI / 2.0).abs() < 10.0 * h);
        assert!((positivity_measure(&half, &b).unwrap() - PI / 2.0).abs() < 10.0 * h);
        let c = GridFunction::constant(&g, 3.0, Role::U).unwrap();
        assert_eq!(dirichlet_energy(&c, &b).unwrap(), 0.0);
        assert!((positivity_measure(&c, &b).unwrap() - PI).abs() < 10.0 * h);
        let z = GridFunction::zeros(&g, Role::U);
        assert_eq!(positivity_measure(&z, &b).unwrap(), 0.0);
    }

    #[test]
    fn ball_escaping_grid_is_rejected() {
        let g = unit_grid(0.1);
        let u = GridFunction::zeros(&g, Role::U);
        let b = Ball::new(&[0.5, 0.0], 0.6).unwrap();
        assert!(matches!(
            dirichlet_energy(&u, &b),
            Err(Error::BallOutsideGrid { .. })
        ));
        assert!(positivity_measure(&u, &b).is_err());
    }

    #[test]
    fn interpolation_is_exact_for_multilinear() {
        let g = unit_grid(0.125);
        let u = sample(|x| 1.0 + 2.0 * x[0] - x[1] + 0.5 * x[0] * x[1], &g, Role::Signed).unwrap();
        for p in [[0.03, -0.71], [0.999, 0.2], [-1.0, -1.0], [0.5, 0.5]] {
            let exact = 1.0 + 2.0 * p[0] - p[1] + 0.5 * p[0] * p[1];
            assert!((u.interpolate(&p) - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn interior_mask_excludes_ring() {
        let g = unit_grid(0.0625);
        let b = Ball::unit();
        let mask = g.interior_mask(&b);
        let st = g.corner_offsets();
        let cells: std::collections::HashSet<usize> = g.cells_in_ball(&b).into_iter().collect();
        for (idx, &m) in mask.iter().enumerate() {
            if m {
                assert!(st.iter().all(|&o| cells.contains(&(idx - o))));
                assert!(g.coords(idx)[0].hypot(g.coords(idx)[1]) < 1.0);
            }
        }
        assert!(mask[g.nearest_node(&[0.0, 0.0])]);
    }
}
