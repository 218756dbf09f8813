//! Potential and transport density recovered from the flux, plus the
//! diagnostics that check the stationary Monge-Kantorovich system: mass
//! balance `div q = f`, the slope bound `|∇u| ≤ k`, and complementarity
//! (`a = 0` wherever the slope bound is inactive).

use std::fmt;

use crate::geometry;
use crate::grid::{cell_speed, divergence, CellField, FluxField, Grid};

/// `u = u0 + t f − div W`, with `W` the time-integrated flux.
pub fn recover_potential(
    w: &FluxField,
    f: &CellField,
    u0: &CellField,
    t: f64,
    grid: &Grid,
) -> CellField {
    let div = divergence(w, grid);
    let mut u = u0.clone();
    for ((u, &f), &d) in u.values_mut().iter_mut().zip(f.values()).zip(div.values()) {
        *u += t * f - d;
    }
    u
}

/// `a = |q̄| / k` per cell, using the unregularized flux magnitude so that
/// `a` vanishes exactly where the flux does. `_eps` is accepted for symmetry
/// with the other flux functionals and ignored.
pub fn transport_density(q: &FluxField, k: &CellField, grid: &Grid, _eps: f64) -> CellField {
    cell_speed(q, grid, 0.0).zip_map(k, |s, k| s / k)
}

/// Largest difference quotient to a face neighbor: `max |u_n − u_c| / h`.
pub fn slope_field(u: &CellField, grid: &Grid) -> CellField {
    CellField::from_fn(grid, |i, j| steepest_neighbor(u, grid, i, j).0)
}

/// Slope to the steepest neighbor and that neighbor.
fn steepest_neighbor(u: &CellField, grid: &Grid, i: usize, j: usize) -> (f64, (usize, usize)) {
    let uc = u.get(i, j);
    grid.neighbors(i, j)
        .map(|(a, b)| ((u.get(a, b) - uc).abs() / grid.h(), (a, b)))
        .fold(
            (0.0, (i, j)),
            |best, cand| if cand.0 > best.0 { cand } else { best },
        )
}

/// Gradient magnitude from the larger one-sided difference along each axis,
/// `sqrt(gx² + gy²)`. Unlike [`slope_field`] it sees the full slope of
/// surfaces inclined to the grid axes.
pub fn gradient_magnitude(u: &CellField, grid: &Grid) -> CellField {
    let h = grid.h();
    let (nx, ny) = (grid.nx(), grid.ny());
    CellField::from_fn(grid, |i, j| {
        let uc = u.get(i, j);
        let along = |prev: Option<f64>, next: Option<f64>| {
            let d1 = prev.map_or(0.0, |p| (uc - p).abs());
            let d2 = next.map_or(0.0, |n| (n - uc).abs());
            d1.max(d2) / h
        };
        let gx = along(
            (i > 0).then(|| u.get(i - 1, j)),
            (i + 1 < nx).then(|| u.get(i + 1, j)),
        );
        let gy = along(
            (j > 0).then(|| u.get(i, j - 1)),
            (j + 1 < ny).then(|| u.get(i, j + 1)),
        );
        gx.hypot(gy)
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    /// Slack on the slope bound.
    pub tol_slope: f64,
    /// Fraction of `max a` above which a cell counts as transporting.
    pub theta_a: f64,
}

impl Thresholds {
    /// `tol_slope = 0.05 k_base + 2h`, `theta_a = 0.05`.
    pub fn new(k_base: f64, grid: &Grid) -> Self {
        Thresholds {
            tol_slope: 0.05 * k_base + 2.0 * grid.h(),
            theta_a: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsReport {
    /// `‖div q − f‖_∞`.
    pub div_residual_inf: f64,
    pub max_abs_f: f64,
    pub slope_violation_fraction: f64,
    pub complementarity_violation_fraction: f64,
    /// `Σ k a h²`.
    pub total_cost: f64,
    /// `Σ k |q̄| h²`, the transport functional itself.
    pub weighted_cost: f64,
    /// `Σ f h²`; zero for a balanced problem.
    pub net_source: f64,
    pub positive_mass: f64,
    pub min_a: f64,
    pub max_a: f64,
    pub max_slope: f64,
    pub thresholds: Thresholds,
}

impl DiagnosticsReport {
    /// Flat `key = value` lines in a fixed order.
    pub fn to_key_values(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("div_residual_inf", self.div_residual_inf),
            ("max_abs_f", self.max_abs_f),
            ("slope_violation_fraction", self.slope_violation_fraction),
            (
                "complementarity_violation_fraction",
                self.complementarity_violation_fraction,
            ),
            ("total_cost", self.total_cost),
            ("weighted_cost", self.weighted_cost),
            ("net_source", self.net_source),
            ("positive_mass", self.positive_mass),
            ("min_a", self.min_a),
            ("max_a", self.max_a),
            ("max_slope", self.max_slope),
            ("tol_slope", self.thresholds.tol_slope),
            ("theta_a", self.thresholds.theta_a),
        ]
    }
}

impl fmt::Display for DiagnosticsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (key, value) in self.to_key_values() {
            writeln!(f, "{key} = {value:e}")?;
        }
        Ok(())
    }
}

/// Residuals of the stationary system at `(q, u)`.
///
/// A cell violates the slope bound when its steepest neighbor difference
/// exceeds `k_eff + tol_slope`, with `k_eff` the mean `k` of the cell and
/// that neighbor, which is the bound the scheme enforces on their shared
/// edge. It violates complementarity when it carries more than
/// `theta_a · max a` of transport density while its gradient magnitude stays
/// below the smallest `k` among the cell and its neighbors, minus `tol_slope`.
pub fn diagnostics(
    q: &FluxField,
    u: &CellField,
    f: &CellField,
    k: &CellField,
    grid: &Grid,
    thresholds: Thresholds,
) -> DiagnosticsReport {
    let div = divergence(q, grid);
    let div_residual_inf = div
        .values()
        .iter()
        .zip(f.values())
        .map(|(d, f)| (d - f).abs())
        .fold(0.0, f64::max);
    let a = transport_density(q, k, grid, 0.0);
    let max_a = a.max();
    let grad = gradient_magnitude(u, grid);

    let (mut slope_bad, mut comp_bad) = (0usize, 0usize);
    let mut max_slope: f64 = 0.0;
    for j in 0..grid.ny() {
        for i in 0..grid.nx() {
            let (slope, (ni, nj)) = steepest_neighbor(u, grid, i, j);
            max_slope = max_slope.max(slope);
            let k_eff = 0.5 * (k.get(i, j) + k.get(ni, nj));
            if slope > k_eff + thresholds.tol_slope {
                slope_bad += 1;
            }
            let k_eff_grad = grid
                .neighbors(i, j)
                .map(|(a, b)| k.get(a, b))
                .fold(k.get(i, j), f64::min);
            if max_a > 0.0
                && a.get(i, j) > thresholds.theta_a * max_a
                && grad.get(i, j) < k_eff_grad - thresholds.tol_slope
            {
                comp_bad += 1;
            }
        }
    }
    let cells = grid.cell_count() as f64;
    let area = grid.cell_area();
    let weighted_cost = a
        .values()
        .iter()
        .zip(k.values())
        .map(|(a, k)| k * k * a)
        .sum::<f64>()
        * area;
    DiagnosticsReport {
        div_residual_inf,
        max_abs_f: f.max_abs(),
        slope_violation_fraction: slope_bad as f64 / cells,
        complementarity_violation_fraction: comp_bad as f64 / cells,
        total_cost: a
            .values()
            .iter()
            .zip(k.values())
            .map(|(a, k)| k * a)
            .sum::<f64>()
            * area,
        weighted_cost,
        net_source: f.integral(grid),
        positive_mass: geometry::masses(f, grid).0,
        min_a: a.min(),
        max_a,
        max_slope,
        thresholds,
    }
}
