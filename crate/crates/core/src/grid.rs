//! Staggered rectangular grid with a divergence-conforming flux layout.
//!
//! Scalars live at cell centers. The flux is stored as one normal component
//! per edge: `qx` on vertical edges, `qy` on horizontal edges, so the
//! divergence is constant on each cell and the normal component is continuous
//! across every interior edge. The outer boundary carries zero normal flux.
//!
//! Layouts:
//! - cells are row-major, `j * nx + i`;
//! - `qx` is row-major, `j * (nx + 1) + i`, so every grid row is contiguous;
//! - `qy` is column-major, `i * (ny + 1) + j`, so every grid column is
//!   contiguous.

use crate::error::{Error, Result};
use crate::par::{self, Execution};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    nx: usize,
    ny: usize,
    h: f64,
    x0: f64,
    y0: f64,
}

impl Grid {
    pub const MIN_CELLS: usize = 4;

    pub fn new(nx: usize, ny: usize, h: f64, origin: (f64, f64)) -> Result<Self> {
        if nx < Self::MIN_CELLS || ny < Self::MIN_CELLS {
            return Err(Error::InvalidGrid(format!(
                "need at least {} cells per axis, got {nx}x{ny}",
                Self::MIN_CELLS
            )));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "cell size must be positive, got {h}"
            )));
        }
        if !(origin.0.is_finite() && origin.1.is_finite()) {
            return Err(Error::InvalidGrid("origin must be finite".into()));
        }
        Ok(Grid {
            nx,
            ny,
            h,
            x0: origin.0,
            y0: origin.1,
        })
    }

    /// Square-cell grid covering the box `[x0, x1] x [y0, y1]` with `n` cells
    /// on the short axis. The long axis is padded symmetrically up to a whole
    /// number of cells.
    pub fn covering(bbox: [f64; 4], n_short: usize) -> Result<Self> {
        let [x0, y0, x1, y1] = bbox;
        let (w, hgt) = (x1 - x0, y1 - y0);
        if !(w > 0.0 && hgt > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "domain box must have positive area, got {bbox:?}"
            )));
        }
        let h = w.min(hgt) / n_short as f64;
        let cells = |len: f64| ((len / h) - 1e-9).ceil().max(1.0) as usize;
        let (nx, ny) = (cells(w), cells(hgt));
        let pad_x = (nx as f64 * h - w) / 2.0;
        let pad_y = (ny as f64 * h - hgt) / 2.0;
        Grid::new(nx, ny, h, (x0 - pad_x, y0 - pad_y))
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn origin(&self) -> (f64, f64) {
        (self.x0, self.y0)
    }

    pub fn cell_count(&self) -> usize {
        self.nx * self.ny
    }

    pub fn cell_area(&self) -> f64 {
        self.h * self.h
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        (
            self.x0 + (i as f64 + 0.5) * self.h,
            self.y0 + (j as f64 + 0.5) * self.h,
        )
    }

    /// `[x0, y0, x1, y1]` of the gridded region.
    pub fn bbox(&self) -> [f64; 4] {
        [
            self.x0,
            self.y0,
            self.x0 + self.nx as f64 * self.h,
            self.y0 + self.ny as f64 * self.h,
        ]
    }

    pub fn diagonal(&self) -> f64 {
        let [x0, y0, x1, y1] = self.bbox();
        (x1 - x0).hypot(y1 - y0)
    }

    /// Cell containing the point, if any.
    pub fn locate(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let fi = ((x - self.x0) / self.h).floor();
        let fj = ((y - self.y0) / self.h).floor();
        if fi < 0.0 || fj < 0.0 {
            return None;
        }
        let (i, j) = (fi as usize, fj as usize);
        (i < self.nx && j < self.ny).then_some((i, j))
    }

    /// Face neighbors of a cell that exist on the grid.
    pub fn neighbors(&self, i: usize, j: usize) -> impl Iterator<Item = (usize, usize)> {
        let (nx, ny) = (self.nx, self.ny);
        [
            (i > 0).then(|| (i - 1, j)),
            (i + 1 < nx).then(|| (i + 1, j)),
            (j > 0).then(|| (i, j - 1)),
            (j + 1 < ny).then(|| (i, j + 1)),
        ]
        .into_iter()
        .flatten()
    }
}

/// Cellwise-constant scalar field.
#[derive(Debug, Clone, PartialEq)]
pub struct CellField {
    nx: usize,
    ny: usize,
    values: Vec<f64>,
}

impl CellField {
    pub fn zeros(grid: &Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &Grid, value: f64) -> Self {
        CellField {
            nx: grid.nx,
            ny: grid.ny,
            values: vec![value; grid.cell_count()],
        }
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.cell_count());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                values.push(f(i, j));
            }
        }
        CellField {
            nx: grid.nx,
            ny: grid.ny,
            values,
        }
    }

    /// Wraps row-major values.
    pub fn from_values(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.cell_count() {
            return Err(Error::DimensionMismatch {
                expected: (grid.nx, grid.ny),
                found: (values.len(), 1),
            });
        }
        Ok(CellField {
            nx: grid.nx,
            ny: grid.ny,
            values,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn check_dims(&self, grid: &Grid) -> Result<()> {
        if self.dims() != (grid.nx, grid.ny) {
            return Err(Error::DimensionMismatch {
                expected: (grid.nx, grid.ny),
                found: self.dims(),
            });
        }
        Ok(())
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.nx + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[j * self.nx + i] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `Σ v_c h²`.
    pub fn integral(&self, grid: &Grid) -> f64 {
        self.values.iter().sum::<f64>() * grid.cell_area()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> CellField {
        CellField {
            nx: self.nx,
            ny: self.ny,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &CellField, f: impl Fn(f64, f64) -> f64) -> CellField {
        assert_eq!(self.dims(), other.dims(), "cell field dimensions differ");
        CellField {
            nx: self.nx,
            ny: self.ny,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }
}

/// Normal flux on the grid edges; boundary-normal entries are pinned to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxField {
    nx: usize,
    ny: usize,
    qx: Vec<f64>,
    qy: Vec<f64>,
}

/// An interior edge, addressed by the staggered index of its normal flux.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Edge {
    /// Vertical edge between cells `(i - 1, j)` and `(i, j)`, `1 ≤ i < nx`.
    X { i: usize, j: usize },
    /// Horizontal edge between cells `(i, j - 1)` and `(i, j)`, `1 ≤ j < ny`.
    Y { i: usize, j: usize },
}

impl Edge {
    pub fn is_interior(self, grid: &Grid) -> bool {
        match self {
            Edge::X { i, j } => i >= 1 && i < grid.nx && j < grid.ny,
            Edge::Y { i, j } => j >= 1 && j < grid.ny && i < grid.nx,
        }
    }

    /// The two adjacent cells, lower/left first.
    pub fn cells(self) -> [(usize, usize); 2] {
        match self {
            Edge::X { i, j } => [(i - 1, j), (i, j)],
            Edge::Y { i, j } => [(i, j - 1), (i, j)],
        }
    }
}

impl FluxField {
    pub fn zeros(grid: &Grid) -> Self {
        FluxField {
            nx: grid.nx,
            ny: grid.ny,
            qx: vec![0.0; (grid.nx + 1) * grid.ny],
            qy: vec![0.0; grid.nx * (grid.ny + 1)],
        }
    }

    /// Builds a field from edge functions; boundary-normal entries are
    /// ignored and left at zero.
    pub fn from_fn(
        grid: &Grid,
        fx: impl Fn(usize, usize) -> f64,
        fy: impl Fn(usize, usize) -> f64,
    ) -> Self {
        let mut q = FluxField::zeros(grid);
        for j in 0..grid.ny {
            for i in 1..grid.nx {
                q.set_qx(i, j, fx(i, j));
            }
        }
        for i in 0..grid.nx {
            for j in 1..grid.ny {
                q.set_qy(i, j, fy(i, j));
            }
        }
        q
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    #[inline]
    pub fn qx(&self, i: usize, j: usize) -> f64 {
        self.qx[j * (self.nx + 1) + i]
    }

    #[inline]
    pub fn qy(&self, i: usize, j: usize) -> f64 {
        self.qy[i * (self.ny + 1) + j]
    }

    /// Sets an x-edge flux. Panics on a boundary edge, whose normal flux is
    /// pinned to zero.
    pub fn set_qx(&mut self, i: usize, j: usize, v: f64) {
        assert!(i >= 1 && i < self.nx, "qx[{i},{j}] is a boundary edge");
        self.qx[j * (self.nx + 1) + i] = v;
    }

    /// Sets a y-edge flux. Panics on a boundary edge.
    pub fn set_qy(&mut self, i: usize, j: usize, v: f64) {
        assert!(j >= 1 && j < self.ny, "qy[{i},{j}] is a boundary edge");
        self.qy[i * (self.ny + 1) + j] = v;
    }

    pub fn get(&self, e: Edge) -> f64 {
        match e {
            Edge::X { i, j } => self.qx(i, j),
            Edge::Y { i, j } => self.qy(i, j),
        }
    }

    pub fn set(&mut self, e: Edge, v: f64) {
        match e {
            Edge::X { i, j } => self.set_qx(i, j, v),
            Edge::Y { i, j } => self.set_qy(i, j, v),
        }
    }

    /// Row `j` of `qx`, `nx + 1` entries.
    pub fn qx_row(&self, j: usize) -> &[f64] {
        let n = self.nx + 1;
        &self.qx[j * n..(j + 1) * n]
    }

    /// Column `i` of `qy`, `ny + 1` entries.
    pub fn qy_col(&self, i: usize) -> &[f64] {
        let n = self.ny + 1;
        &self.qy[i * n..(i + 1) * n]
    }

    pub(crate) fn qx_raw_mut(&mut self) -> &mut [f64] {
        &mut self.qx
    }

    pub(crate) fn qy_raw_mut(&mut self) -> &mut [f64] {
        &mut self.qy
    }

    pub fn interior_edges(&self) -> impl Iterator<Item = Edge> + '_ {
        let (nx, ny) = (self.nx, self.ny);
        let xs = (0..ny).flat_map(move |j| (1..nx).map(move |i| Edge::X { i, j }));
        let ys = (0..nx).flat_map(move |i| (1..ny).map(move |j| Edge::Y { i, j }));
        xs.chain(ys)
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &FluxField) {
        assert_eq!(self.dims(), other.dims(), "flux field dimensions differ");
        for (a, b) in self.qx.iter_mut().zip(&other.qx) {
            *a += alpha * b;
        }
        for (a, b) in self.qy.iter_mut().zip(&other.qy) {
            *a += alpha * b;
        }
    }

    pub fn scaled(&self, alpha: f64) -> FluxField {
        FluxField {
            nx: self.nx,
            ny: self.ny,
            qx: self.qx.iter().map(|v| alpha * v).collect(),
            qy: self.qy.iter().map(|v| alpha * v).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.qx.iter().chain(&self.qy).all(|v| v.is_finite())
    }

    pub fn boundary_is_zero(&self) -> bool {
        (0..self.ny).all(|j| self.qx(0, j) == 0.0 && self.qx(self.nx, j) == 0.0)
            && (0..self.nx).all(|i| self.qy(i, 0) == 0.0 && self.qy(i, self.ny) == 0.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.qx
            .iter()
            .chain(&self.qy)
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Edge-averaged flux vector at the center of cell `(i, j)`.
    #[inline]
    pub fn cell_average(&self, i: usize, j: usize) -> (f64, f64) {
        (
            0.5 * (self.qx(i, j) + self.qx(i + 1, j)),
            0.5 * (self.qy(i, j) + self.qy(i, j + 1)),
        )
    }
}

/// Discrete divergence: `(qx[i+1,j] - qx[i,j] + qy[i,j+1] - qy[i,j]) / h`.
pub fn divergence(q: &FluxField, grid: &Grid) -> CellField {
    divergence_with(q, grid, Execution::Sequential)
}

pub fn divergence_with(q: &FluxField, grid: &Grid, exec: Execution) -> CellField {
    assert_eq!(
        q.dims(),
        (grid.nx, grid.ny),
        "flux field does not match grid"
    );
    let mut out = CellField::zeros(grid);
    let inv_h = 1.0 / grid.h;
    par::for_each_line(exec, &mut out.values, grid.nx, |j, row| {
        let qx = q.qx_row(j);
        for (i, v) in row.iter_mut().enumerate() {
            *v = ((qx[i + 1] - qx[i]) + (q.qy(i, j + 1) - q.qy(i, j))) * inv_h;
        }
    });
    out
}

/// Bilinear interpolation of values on the lattice `origin + (i, j) h`,
/// `i < ni`, `j < nj`, clamped to the lattice hull.
fn bilinear(
    origin: (f64, f64),
    h: f64,
    (ni, nj): (usize, usize),
    value: impl Fn(usize, usize) -> f64,
    (x, y): (f64, f64),
) -> f64 {
    let axis = |p: f64, o: f64, n: usize| {
        let t = ((p - o) / h).clamp(0.0, (n - 1) as f64);
        let i = (t.floor() as usize).min(n.saturating_sub(2));
        (i, (t - i as f64).clamp(0.0, 1.0), n > 1)
    };
    let (i, fx, two_x) = axis(x, origin.0, ni);
    let (j, fy, two_y) = axis(y, origin.1, nj);
    let (i1, j1) = (if two_x { i + 1 } else { i }, if two_y { j + 1 } else { j });
    let lower = (1.0 - fx) * value(i, j) + fx * value(i1, j);
    let upper = (1.0 - fx) * value(i, j1) + fx * value(i1, j1);
    (1.0 - fy) * lower + fy * upper
}

impl CellField {
    /// Bilinear transfer of cell-centered values from `from` onto `to`.
    pub fn resample(&self, from: &Grid, to: &Grid) -> CellField {
        assert_eq!(self.dims(), (from.nx, from.ny), "field does not match grid");
        let origin = from.cell_center(0, 0);
        CellField::from_fn(to, |i, j| {
            let p = to.cell_center(i, j);
            bilinear(origin, from.h, (from.nx, from.ny), |a, b| self.get(a, b), p)
        })
    }
}

impl FluxField {
    /// Bilinear transfer of edge values from `from` onto the interior edges
    /// of `to`.
    pub fn resample(&self, from: &Grid, to: &Grid) -> FluxField {
        assert_eq!(
            self.dims(),
            (from.nx, from.ny),
            "flux field does not match grid"
        );
        let (x0, y0) = from.origin();
        let (hf, ht) = (from.h, to.h);
        let (tx, ty) = to.origin();
        FluxField::from_fn(
            to,
            |i, j| {
                let p = (tx + i as f64 * ht, ty + (j as f64 + 0.5) * ht);
                let origin = (x0, y0 + 0.5 * hf);
                bilinear(origin, hf, (from.nx + 1, from.ny), |a, b| self.qx(a, b), p)
            },
            |i, j| {
                let p = (tx + (i as f64 + 0.5) * ht, ty + j as f64 * ht);
                let origin = (x0 + 0.5 * hf, y0);
                bilinear(origin, hf, (from.nx, from.ny + 1), |a, b| self.qy(a, b), p)
            },
        )
    }
}

/// Regularized flux magnitude per cell, sampled from the edge averages:
/// `sqrt(q̄x² + q̄y² + eps²)`.
pub fn cell_speed(q: &FluxField, grid: &Grid, eps: f64) -> CellField {
    assert_eq!(
        q.dims(),
        (grid.nx, grid.ny),
        "flux field does not match grid"
    );
    let eps2 = eps * eps;
    CellField::from_fn(grid, |i, j| {
        let (ax, ay) = q.cell_average(i, j);
        (ax * ax + ay * ay + eps2).sqrt()
    })
}

/// Mean regularized flux magnitude over the four corners of each cell, where
/// the corner value pairs the two edges meeting there.
pub fn corner_speed(q: &FluxField, grid: &Grid, eps: f64) -> CellField {
    assert_eq!(
        q.dims(),
        (grid.nx, grid.ny),
        "flux field does not match grid"
    );
    let eps2 = eps * eps;
    CellField::from_fn(grid, |i, j| corner_mean(q, i, j, eps2))
}

#[inline]
pub(crate) fn corner_mean(q: &FluxField, i: usize, j: usize, eps2: f64) -> f64 {
    let (xl, xr) = (q.qx(i, j), q.qx(i + 1, j));
    let (yb, yt) = (q.qy(i, j), q.qy(i, j + 1));
    let m = |x: f64, y: f64| (x * x + y * y + eps2).sqrt();
    0.25 * (m(xl, yb) + m(xr, yb) + m(xl, yt) + m(xr, yt))
}

/// `Σ_c k_c h² · mean over corners of |q|_eps`, the regularized transport
/// functional.
pub fn phi_eps(q: &FluxField, k: &CellField, grid: &Grid, eps: f64) -> f64 {
    let speed = corner_speed(q, grid, eps);
    k.values()
        .iter()
        .zip(speed.values())
        .map(|(k, s)| k * s)
        .sum::<f64>()
        * grid.cell_area()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid(n: usize, h: f64) -> Grid {
        Grid::new(n, n, h, (0.0, 0.0)).unwrap()
    }

    #[test]
    fn rejects_tiny_or_degenerate_grids() {
        assert!(Grid::new(3, 8, 0.1, (0.0, 0.0)).is_err());
        assert!(Grid::new(8, 8, 0.0, (0.0, 0.0)).is_err());
        assert!(Grid::new(8, 8, f64::NAN, (0.0, 0.0)).is_err());
    }

    #[test]
    fn covering_pads_long_axis() {
        let g = Grid::covering([0.0, 0.0, 3.0, 1.0], 96).unwrap();
        assert_eq!((g.nx(), g.ny()), (288, 96));
        assert_relative_eq!(g.h(), 1.0 / 96.0);
        assert_relative_eq!(g.origin().0, 0.0, epsilon = 1e-12);

        let g = Grid::covering([0.0, 0.0, 1.05, 1.0], 20).unwrap();
        assert_eq!(g.nx(), 21);
        let [x0, _, x1, _] = g.bbox();
        assert_relative_eq!(x0 + x1, 1.05, epsilon = 1e-12);
    }

    #[test]
    fn cell_centers() {
        let g = Grid::new(4, 5, 0.5, (1.0, -1.0)).unwrap();
        assert_eq!(g.cell_center(0, 0), (1.25, -0.75));
        assert_eq!(g.cell_center(3, 4), (2.75, 1.25));
        assert_eq!(g.locate(1.3, -0.8), Some((0, 0)));
        assert_eq!(g.locate(0.9, 0.0), None);
    }

    #[test]
    fn divergence_of_zero_is_zero() {
        let g = grid(6, 0.1);
        let d = divergence(&FluxField::zeros(&g), &g);
        assert!(d.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn divergence_single_edge() {
        let g = grid(6, 0.5);
        let mut q = FluxField::zeros(&g);
        q.set_qx(3, 2, 1.0);
        let d = divergence(&q, &g);
        for j in 0..6 {
            for i in 0..6 {
                let expected = match (i, j) {
                    (2, 2) => 2.0,
                    (3, 2) => -2.0,
                    _ => 0.0,
                };
                assert_eq!(d.get(i, j), expected, "cell ({i},{j})");
            }
        }
    }

    #[test]
    fn uniform_interior_flux_is_divergence_free_inside() {
        let g = grid(8, 0.25);
        let q = FluxField::from_fn(&g, |_, _| 1.5, |_, _| 0.0);
        let d = divergence(&q, &g);
        for j in 0..8 {
            for i in 1..7 {
                assert_eq!(d.get(i, j), 0.0);
            }
            assert_eq!(d.get(0, j), 1.5 / 0.25);
            assert_eq!(d.get(7, j), -1.5 / 0.25);
        }
    }

    #[test]
    fn cell_speed_cases() {
        let g = grid(4, 1.0);
        let zero = FluxField::zeros(&g);
        assert!(cell_speed(&zero, &g, 0.0)
            .values()
            .iter()
            .all(|&v| v == 0.0));
        assert!(cell_speed(&zero, &g, 1e-3)
            .values()
            .iter()
            .all(|&v| v == 1e-3));

        let mut q = FluxField::zeros(&g);
        q.set_qx(1, 1, 2.0);
        q.set_qx(2, 1, 4.0);
        q.set_qy(1, 1, 3.0);
        q.set_qy(1, 2, 5.0);
        assert_eq!(cell_speed(&q, &g, 0.0).get(1, 1), 5.0);
    }

    #[test]
    fn phi_eps_cases() {
        let g = grid(5, 0.2);
        let k1 = CellField::constant(&g, 1.0);
        let zero = FluxField::zeros(&g);
        assert_eq!(phi_eps(&zero, &k1, &g, 0.0), 0.0);
        assert_relative_eq!(
            phi_eps(&zero, &k1, &g, 1e-2),
            1e-2 * 25.0 * 0.04,
            max_relative = 1e-12
        );

        // boundary edges are pinned, so only interior cells reach speed 5
        let mut q = FluxField::zeros(&g);
        for j in 0..5 {
            for i in 1..5 {
                q.set_qx(i, j, 3.0);
            }
        }
        for i in 0..5 {
            for j in 1..5 {
                q.set_qy(i, j, 4.0);
            }
        }
        let speed = cell_speed(&q, &g, 0.0);
        let interior = (1..4).flat_map(|j| (1..4).map(move |i| (i, j)));
        assert!(interior.clone().all(|(i, j)| speed.get(i, j) == 5.0));
        let k_interior = CellField::from_fn(&g, |i, j| {
            if (1..4).contains(&i) && (1..4).contains(&j) {
                1.0
            } else {
                0.0
            }
        });
        assert_relative_eq!(
            phi_eps(&q, &k_interior, &g, 0.0),
            5.0 * 9.0 * 0.04,
            max_relative = 1e-14
        );
    }

    #[test]
    fn resampling_reproduces_linear_fields() {
        let coarse = Grid::new(6, 4, 0.5, (0.0, 0.0)).unwrap();
        let fine = Grid::new(18, 12, 0.5 / 3.0, (0.0, 0.0)).unwrap();
        let lin = |x: f64, y: f64| 2.0 * x - 3.0 * y + 1.0;
        let u = CellField::from_fn(&coarse, |i, j| {
            let (x, y) = coarse.cell_center(i, j);
            lin(x, y)
        });
        let uf = u.resample(&coarse, &fine);
        let [lo_x, lo_y, hi_x, hi_y] = [0.25, 0.25, 2.75, 1.75];
        for j in 0..12 {
            for i in 0..18 {
                let (x, y) = fine.cell_center(i, j);
                if (lo_x..=hi_x).contains(&x) && (lo_y..=hi_y).contains(&y) {
                    assert_relative_eq!(uf.get(i, j), lin(x, y), epsilon = 1e-12);
                }
            }
        }
        let q = FluxField::from_fn(&coarse, |_, _| 1.5, |_, _| -0.5);
        let qf = q.resample(&coarse, &fine);
        assert!(qf.boundary_is_zero());
        assert_relative_eq!(qf.qx(9, 6), 1.5, epsilon = 1e-12);
        assert_relative_eq!(qf.qy(9, 6), -0.5, epsilon = 1e-12);
    }

    #[test]
    fn corner_sampling_sees_alternating_edges() {
        let g = grid(6, 1.0);
        let q = FluxField::from_fn(&g, |i, _| if i % 2 == 0 { 1.0 } else { -1.0 }, |_, _| 0.0);
        let k1 = CellField::constant(&g, 1.0);
        assert_eq!(cell_speed(&q, &g, 0.0).get(2, 2), 0.0);
        assert_eq!(corner_speed(&q, &g, 0.0).get(2, 2), 1.0);
        assert!(phi_eps(&q, &k1, &g, 0.0) > 0.0);
    }

    #[test]
    fn corner_speed_bounds_cell_speed() {
        let g = grid(5, 0.5);
        let q = FluxField::from_fn(
            &g,
            |i, j| (i * j) as f64 - 3.0,
            |i, j| i as f64 - 0.5 * j as f64,
        );
        let (a, b) = (cell_speed(&q, &g, 0.0), corner_speed(&q, &g, 0.0));
        for (a, b) in a.values().iter().zip(b.values()) {
            assert!(a <= &(b + 1e-14));
        }
    }

    #[test]
    fn boundary_edges_stay_pinned() {
        let g = grid(4, 1.0);
        let q = FluxField::from_fn(&g, |_, _| 1.0, |_, _| -1.0);
        assert!(q.boundary_is_zero());
        assert_eq!(q.interior_edges().count(), 2 * 3 * 4);
    }

    #[test]
    #[should_panic]
    fn setting_boundary_edge_panics() {
        let g = grid(4, 1.0);
        FluxField::zeros(&g).set_qx(0, 1, 1.0);
    }
}
