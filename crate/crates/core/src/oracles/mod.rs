//! Independent reference solutions: closed-form one-dimensional and radial
//! stationary states, and a discrete min-cost-flow transport cost.

mod mcf;

pub use mcf::{mcf_reference, ArcFlow, McfSolution};

use crate::error::{Error, Result};

/// Source density `density` on `[a_start, a_end]`, balancing sink density on
/// `[b_start, b_end]`; the data is constant in the transverse direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Layout1d {
    pub a_start: f64,
    pub a_end: f64,
    pub b_start: f64,
    pub b_end: f64,
    pub density: f64,
}

/// Stationary state of a translation-invariant problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Oracle1d {
    layout: Layout1d,
    k: f64,
    mass: f64,
}

pub fn oracle_1d(layout: Layout1d, k: f64) -> Result<Oracle1d> {
    let Layout1d {
        a_start,
        a_end,
        b_start,
        b_end,
        density,
    } = layout;
    let finite = [a_start, a_end, b_start, b_end, density, k]
        .iter()
        .all(|v| v.is_finite());
    if !finite || !(a_start < a_end && b_start < b_end) {
        return Err(Error::Oracle(format!("degenerate intervals in {layout:?}")));
    }
    if a_end > b_start {
        return Err(Error::Oracle(format!(
            "source [{a_start}, {a_end}] overlaps or follows sink [{b_start}, {b_end}]"
        )));
    }
    if !(density > 0.0 && k > 0.0) {
        return Err(Error::Oracle("density and k must be positive".into()));
    }
    Ok(Oracle1d {
        layout,
        k,
        mass: density * (a_end - a_start),
    })
}

impl Oracle1d {
    /// Sink density that balances the source.
    pub fn sink_density(&self) -> f64 {
        self.mass / (self.layout.b_end - self.layout.b_start)
    }

    /// Source term at `x`.
    pub fn f(&self, x: f64) -> f64 {
        let l = &self.layout;
        if (l.a_start..=l.a_end).contains(&x) {
            l.density
        } else if (l.b_start..=l.b_end).contains(&x) {
            -self.sink_density()
        } else {
            0.0
        }
    }

    /// Flux `q(x) = ∫_{−∞}^x f`.
    pub fn flux(&self, x: f64) -> f64 {
        let l = &self.layout;
        if x <= l.a_start || x >= l.b_end {
            0.0
        } else if x < l.a_end {
            l.density * (x - l.a_start)
        } else if x <= l.b_start {
            self.mass
        } else {
            self.mass * (l.b_end - x) / (l.b_end - l.b_start)
        }
    }

    pub fn a(&self, x: f64) -> f64 {
        self.flux(x) / self.k
    }

    /// Potential with slope `−k` across the transport region, zero at the
    /// far end of the sink.
    pub fn u(&self, x: f64) -> f64 {
        let l = &self.layout;
        self.k * (l.b_end - x.clamp(l.a_start, l.b_end))
    }

    /// `k ∫ a dx` per unit transverse length.
    pub fn total_cost(&self) -> f64 {
        let l = &self.layout;
        self.mass
            * (0.5 * (l.a_end - l.a_start) + (l.b_start - l.a_end) + 0.5 * (l.b_end - l.b_start))
    }
}

/// Stationary state of a uniform disk source of radius `r1` and density
/// `rho_plus`, balanced by a uniform sink on the annulus `r1 < r < r2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialOracle {
    pub r1: f64,
    pub r2: f64,
    pub k: f64,
    pub rho_plus: f64,
}

/// Radial oracle with unit source density.
pub fn oracle_radial(r1: f64, r2: f64, k: f64) -> Result<RadialOracle> {
    if !(r1 > 0.0 && r2 > r1 && r2.is_finite()) {
        return Err(Error::Oracle(format!(
            "need 0 < R1 < R2, got R1 = {r1}, R2 = {r2}"
        )));
    }
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::Oracle(format!("k must be positive, got {k}")));
    }
    Ok(RadialOracle {
        r1,
        r2,
        k,
        rho_plus: 1.0,
    })
}

impl RadialOracle {
    pub fn with_density(self, rho_plus: f64) -> Self {
        RadialOracle { rho_plus, ..self }
    }

    pub fn sink_density(&self) -> f64 {
        self.rho_plus * self.r1 * self.r1 / (self.r2 * self.r2 - self.r1 * self.r1)
    }

    pub fn f(&self, r: f64) -> f64 {
        if r < self.r1 {
            self.rho_plus
        } else if r < self.r2 {
            -self.sink_density()
        } else {
            0.0
        }
    }

    /// Outward radial flux.
    pub fn flux(&self, r: f64) -> f64 {
        let (r1, r2, rho) = (self.r1, self.r2, self.rho_plus);
        if r <= 0.0 || r >= r2 {
            0.0
        } else if r <= r1 {
            0.5 * rho * r
        } else {
            rho * r1 * r1 * (r2 * r2 - r * r) / (2.0 * r * (r2 * r2 - r1 * r1))
        }
    }

    pub fn a(&self, r: f64) -> f64 {
        self.flux(r) / self.k
    }

    /// `∫ q_r dA` over the plane.
    pub fn total_cost(&self) -> f64 {
        let (r1, r2, rho) = (self.r1, self.r2, self.rho_plus);
        let pi = std::f64::consts::PI;
        let inner = pi * rho * r1.powi(3) / 3.0;
        let outer = pi * rho * r1 * r1 / (r2 * r2 - r1 * r1)
            * (r2 * r2 * (r2 - r1) - (r2.powi(3) - r1.powi(3)) / 3.0);
        inner + outer
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn blocks() -> Layout1d {
        Layout1d {
            a_start: 0.0,
            a_end: 1.0,
            b_start: 2.0,
            b_end: 3.0,
            density: 1.0,
        }
    }

    /// Composite Simpson rule with `n` (even) panels.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let inner: f64 = (1..n)
            .map(|i| f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 })
            .sum();
        (f(a) + f(b) + inner) * h / 3.0
    }

    #[test]
    fn two_block_profile() {
        let o = oracle_1d(blocks(), 1.0).unwrap();
        for (x, a) in [
            (-0.5, 0.0),
            (0.25, 0.25),
            (1.0, 1.0),
            (1.5, 1.0),
            (2.5, 0.5),
            (3.5, 0.0),
        ] {
            assert_relative_eq!(o.a(x), a, epsilon = 1e-15);
        }
        assert_relative_eq!(o.total_cost(), 2.0, epsilon = 1e-15);
        assert_relative_eq!(o.u(0.0) - o.u(3.0), 3.0);
        assert_eq!(o.u(-1.0), o.u(0.0));
    }

    #[test]
    fn flux_is_running_integral_of_source() {
        let layouts = [
            blocks(),
            Layout1d {
                a_start: -0.3,
                a_end: 0.4,
                b_start: 0.4,
                b_end: 2.1,
                density: 2.5,
            },
            Layout1d {
                a_start: 1.0,
                a_end: 1.5,
                b_start: 4.0,
                b_end: 4.25,
                density: 0.2,
            },
        ];
        for layout in layouts {
            let o = oracle_1d(layout, 1.7).unwrap();
            // f is piecewise constant, so the midpoint rule on each piece is exact
            let breaks = [
                layout.a_start - 1.0,
                layout.a_start,
                layout.a_end,
                layout.b_start,
                layout.b_end,
                layout.b_end + 2.0,
            ];
            let samples = [
                layout.a_start + 0.1,
                layout.a_end,
                0.5 * (layout.a_end + layout.b_start),
                layout.b_end - 0.01,
                layout.b_end + 1.0,
            ];
            for x in samples {
                let integral: f64 = breaks
                    .windows(2)
                    .filter(|w| x > w[0])
                    .map(|w| {
                        let hi = w[1].min(x);
                        o.f(0.5 * (w[0] + hi)) * (hi - w[0])
                    })
                    .sum();
                assert!(
                    (o.flux(x) - integral).abs() <= 1e-12,
                    "x = {x}: {} vs {integral}",
                    o.flux(x)
                );
            }
            let cost = simpson(|x| o.flux(x), layout.a_start, layout.b_end, 60_000);
            assert_relative_eq!(o.total_cost(), cost, max_relative = 1e-6);
        }
    }

    #[test]
    fn abutting_intervals_peak_at_interface() {
        let l = Layout1d {
            a_start: 0.0,
            a_end: 1.0,
            b_start: 1.0,
            b_end: 2.0,
            density: 1.0,
        };
        let o = oracle_1d(l, 1.0).unwrap();
        assert_relative_eq!(o.a(1.0), 1.0);
        assert_relative_eq!(o.a(1.0 - 1e-9), 1.0, epsilon = 1e-8);
        assert_relative_eq!(o.a(1.0 + 1e-9), 1.0, epsilon = 1e-8);
        assert_relative_eq!(o.total_cost(), 1.0);
    }

    #[test]
    fn doubling_k_halves_density_not_cost() {
        let (o1, o2) = (
            oracle_1d(blocks(), 1.0).unwrap(),
            oracle_1d(blocks(), 2.0).unwrap(),
        );
        assert_relative_eq!(o2.a(1.5), 0.5 * o1.a(1.5));
        assert_relative_eq!(o2.u(0.0) - o2.u(3.0), 2.0 * (o1.u(0.0) - o1.u(3.0)));
        assert_relative_eq!(o2.total_cost(), o1.total_cost());
    }

    #[test]
    fn rejects_overlap_and_bad_input() {
        let overlap = Layout1d {
            b_start: 0.5,
            ..blocks()
        };
        assert!(matches!(oracle_1d(overlap, 1.0), Err(Error::Oracle(_))));
        let reversed = Layout1d {
            a_start: 2.5,
            a_end: 3.0,
            b_start: 0.0,
            b_end: 1.0,
            density: 1.0,
        };
        assert!(oracle_1d(reversed, 1.0).is_err());
        assert!(oracle_1d(
            Layout1d {
                density: 0.0,
                ..blocks()
            },
            1.0
        )
        .is_err());
        assert!(oracle_1d(blocks(), -1.0).is_err());
        assert!(oracle_radial(0.5, 0.25, 1.0).is_err());
    }

    #[test]
    fn radial_branches_and_limits() {
        let o = oracle_radial(0.25, 0.5, 1.0).unwrap();
        assert_relative_eq!(o.flux(0.25), 0.125, epsilon = 1e-15);
        assert_relative_eq!(o.flux(0.25 + 1e-12), 0.125, epsilon = 1e-11);
        assert_eq!(o.a(0.5), 0.0);
        assert_relative_eq!(o.a(1e-6) / 1e-6, 0.5, max_relative = 1e-12);
        assert_relative_eq!(o.sink_density(), 1.0 / 3.0, max_relative = 1e-15);
    }

    #[test]
    fn radial_divergence_identity() {
        let o = oracle_radial(0.3, 0.7, 2.0).unwrap().with_density(1.5);
        let d = 1e-4;
        for n in 1..70 {
            let r = 0.01 * n as f64;
            if (r - o.r1).abs() < 2.0 * d || (r - o.r2).abs() < 2.0 * d {
                continue;
            }
            let rq = |r: f64| r * o.flux(r);
            let div = (rq(r + d) - rq(r - d)) / (2.0 * d) / r;
            assert!(
                (div - o.f(r)).abs() <= 1e-10,
                "r = {r}: {div} vs {}",
                o.f(r)
            );
        }
    }

    #[test]
    fn radial_cost_matches_quadrature() {
        let o = oracle_radial(0.25, 0.5, 1.0).unwrap();
        let inner = simpson(|r| o.flux(r) * r, 0.0, o.r1, 2000);
        let outer = simpson(|r| o.flux(r) * r, o.r1, o.r2, 2000);
        let cost = 2.0 * std::f64::consts::PI * (inner + outer);
        assert_relative_eq!(o.total_cost(), cost, max_relative = 1e-10);
    }
}
