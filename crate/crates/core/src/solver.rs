//! Time stepping of the regularized flux variational inequality.
//!
//! One implicit time step from the surface `u_prev` minimizes the convex
//! functional
//!
//! ```text
//! J(q) = ½ ‖dt div q − u_prev − dt f‖² + dt φ_ε(q),
//! ```
//!
//! with `‖·‖² = Σ_c (·)² h²`, and the new surface is
//! `u = u_prev + dt (f − div q)`. The time-integrated flux `W` is accumulated
//! alongside. The minimization is done by nonlinear SOR: every interior edge
//! in turn is moved towards the minimizer of `J` along that single
//! coordinate, over-relaxed, and safeguarded so that `J` never increases. Only
//! a few sweeps are done per step. `φ_ε` samples the flux magnitude at cell
//! corners.
//!
//! The residual `dt div q − u_prev − dt f` equals `−u` at the new level, so the
//! per-edge problem only involves the two adjacent cells' residuals and
//! speeds. During the x-edge phase each grid row is independent of every
//! other row, and during the y-edge phase each column is, which is what makes
//! the lexicographic sweep parallel without changing its result.

use crate::analysis::transport_density;
use crate::error::{Error, Result};
use crate::geometry::{self, ProblemSpec};
use crate::grid::{corner_mean, divergence, divergence_with, CellField, Edge, FluxField, Grid};
use crate::par::{self, Execution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SweepOrder {
    /// x-edges row by row, then y-edges column by column.
    #[default]
    Lexicographic,
    /// Alternates forward and backward lexicographic sweeps.
    Symmetric,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverParams {
    pub dt: f64,
    pub eps: f64,
    pub omega: f64,
    pub sweeps_per_step: usize,
    pub newton_iters: usize,
    pub tol_stationary: f64,
    pub stationary_patience: usize,
    pub max_steps: usize,
    pub sweep_order: SweepOrder,
    /// Record `J` after every sweep in the step history (costs one extra
    /// objective evaluation per sweep).
    pub record_sweep_objectives: bool,
    pub execution: Execution,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            dt: 1.0,
            eps: 1e-12,
            omega: 1.5,
            sweeps_per_step: 5,
            newton_iters: 2,
            tol_stationary: 1e-8,
            stationary_patience: 5,
            max_steps: 100_000,
            sweep_order: SweepOrder::Lexicographic,
            record_sweep_objectives: false,
            execution: Execution::default(),
        }
    }
}

impl SolverParams {
    /// Defaults with `eps = 1e-12 · M / L`, `M` the positive mass and `L` the
    /// domain diagonal.
    pub fn for_problem(fields: &ProblemFields) -> Self {
        SolverParams {
            eps: default_eps(fields),
            ..SolverParams::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return bad(format!("eps must be positive, got {}", self.eps));
        }
        if !(self.omega > 0.0 && self.omega < 2.0) {
            return bad(format!("omega must lie in (0, 2), got {}", self.omega));
        }
        if self.sweeps_per_step == 0 || self.newton_iters == 0 {
            return bad("sweeps_per_step and newton_iters must be at least 1".into());
        }
        if !(self.tol_stationary > 0.0) {
            return bad(format!(
                "tol_stationary must be positive, got {}",
                self.tol_stationary
            ));
        }
        if self.stationary_patience == 0 {
            return bad("stationary_patience must be at least 1".into());
        }
        Ok(())
    }
}

pub fn default_eps(fields: &ProblemFields) -> f64 {
    let (m, _) = geometry::masses(&fields.f, &fields.grid);
    let scale = m / fields.grid.diagonal();
    if scale > 0.0 {
        1e-12 * scale
    } else {
        1e-12
    }
}

/// Rasterized problem data on a fixed grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemFields {
    pub grid: Grid,
    pub f: CellField,
    pub k: CellField,
    pub u0: CellField,
}

impl ProblemFields {
    pub fn new(grid: Grid, f: CellField, k: CellField, u0: CellField) -> Result<Self> {
        for field in [&f, &k, &u0] {
            field.check_dims(&grid)?;
            if !field.is_finite() {
                return Err(Error::InvalidProblem("non-finite field value".into()));
            }
        }
        for j in 0..grid.ny() {
            for i in 0..grid.nx() {
                let value = k.get(i, j);
                if !(value > 0.0) {
                    return Err(Error::NonPositiveK { i, j, value });
                }
            }
        }
        Ok(ProblemFields { grid, f, k, u0 })
    }

    /// Rasterizes `spec`, balancing the source unless it is identically zero.
    pub fn from_spec(spec: &ProblemSpec, grid: Grid, subsample: usize) -> Result<Self> {
        let raw = geometry::rasterize_sources(spec, &grid, subsample)?;
        let f = if raw.values().iter().all(|&v| v == 0.0) {
            raw
        } else {
            geometry::balance_mass(&raw, &grid)?
        };
        let k = geometry::rasterize_k(spec, &grid)?;
        let u0 = match &spec.u0 {
            geometry::InitialSurface::Zero => CellField::zeros(&grid),
            geometry::InitialSurface::Field(u) => u.clone(),
        };
        ProblemFields::new(grid, f, k, u0)
    }

    /// Positive mass `M+ = Σ max(f, 0) h²`.
    pub fn positive_mass(&self) -> f64 {
        geometry::masses(&self.f, &self.grid).0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub t: f64,
    /// `J` at the end of the step.
    pub objective: f64,
    pub max_du_dt: f64,
    /// `Σ k a h²`.
    pub total_cost: f64,
    /// `max |q_new − q_old|` over all edges.
    pub max_dq: f64,
    /// `J` before the first sweep followed by `J` after each sweep, when
    /// requested.
    pub sweep_objectives: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveState {
    /// Time-integrated flux up to `t`.
    pub w: FluxField,
    /// Flux of the last completed step.
    pub q: FluxField,
    pub t: f64,
    pub step: usize,
    /// Potential at `t`.
    pub u: CellField,
    /// Potential at `t = 0`; `u = u_start + t f − div W`.
    pub u_start: CellField,
    pub history: Vec<StepRecord>,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub q: FluxField,
    pub w: FluxField,
    pub u: CellField,
    pub a: CellField,
    pub history: Vec<StepRecord>,
    pub converged: bool,
    /// Final solver state, for continuing the evolution.
    pub state: SolveState,
}

/// Outcome of running extra steps past the stationarity gate.
#[derive(Debug, Clone, PartialEq)]
pub struct StationarityProbe {
    pub steps: usize,
    /// Largest `max |Δu|` of any extra step.
    pub max_du: f64,
    /// `tol_stationary · u_scale · dt`.
    pub bound: f64,
}

impl StationarityProbe {
    pub fn holds(&self) -> bool {
        self.max_du <= self.bound
    }
}

/// Data for the one-dimensional problem of a single edge; `lo` is the cell
/// below/left of the edge and `hi` the one above/right. The edge value enters
/// four corner samples, two in each cell, each paired with one transverse
/// edge of that cell.
#[derive(Debug, Clone, Copy)]
struct EdgeLocal {
    r_lo: f64,
    r_hi: f64,
    /// `k` of the cell owning each corner.
    kappa: [f64; 4],
    /// Transverse edge value squared plus `eps²` at each corner.
    c: [f64; 4],
}

#[derive(Debug, Clone, Copy)]
struct EdgeCtx {
    h: f64,
    dt_h: f64,
    omega: f64,
    newton_iters: usize,
}

impl EdgeLocal {
    fn new(r_lo: f64, r_hi: f64, k_lo: f64, k_hi: f64, t: [f64; 4], eps2: f64) -> Self {
        EdgeLocal {
            r_lo,
            r_hi,
            kappa: [k_lo, k_lo, k_hi, k_hi],
            c: t.map(|t| t * t + eps2),
        }
    }

    #[inline]
    fn speeds(&self, s: f64) -> [f64; 4] {
        self.c.map(|c| (s * s + c).sqrt())
    }

    /// `(J(s0 + d) − J(s0)) / (dt h)`, given the corner speeds at `s0`.
    #[inline]
    fn value(&self, s0: f64, speeds0: &[f64; 4], d: f64, ctx: &EdgeCtx) -> f64 {
        let s1 = s0 + d;
        let mut corners = 0.0;
        for m in 0..4 {
            // S1 − S0 = d (s1 + s0) / (S1 + S0), free of cancellation
            let sum = (s1 * s1 + self.c[m]).sqrt() + speeds0[m];
            corners += self.kappa[m] * (s1 + s0) / sum;
        }
        d * ((self.r_lo - self.r_hi) + ctx.dt_h * d + 0.25 * ctx.h * corners)
    }

    /// First and second derivative of [`EdgeLocal::value`] in `d`, given the
    /// corner speeds at `s0 + d`.
    #[inline]
    fn derivatives(&self, s0: f64, d: f64, speeds: &[f64; 4], ctx: &EdgeCtx) -> (f64, f64) {
        let s = s0 + d;
        let (mut d1, mut d2) = (0.0, 0.0);
        for m in 0..4 {
            let inv = 1.0 / speeds[m];
            d1 += self.kappa[m] * s * inv;
            d2 += self.kappa[m] * self.c[m] * inv * inv * inv;
        }
        let g1 = (self.r_lo - self.r_hi) + 2.0 * ctx.dt_h * d + 0.25 * ctx.h * d1;
        let g2 = 2.0 * ctx.dt_h + 0.25 * ctx.h * d2;
        (g1, g2)
    }

    /// Relaxed, safeguarded increment for the edge currently at `s0`.
    fn increment(&self, s0: f64, ctx: &EdgeCtx) -> f64 {
        let speeds0 = self.speeds(s0);
        let target = self.newton(s0, &speeds0, ctx);
        let mut d = ctx.omega * target;
        for _ in 0..=30 {
            if d == 0.0 || self.value(s0, &speeds0, d, ctx) <= 0.0 {
                return d;
            }
            d *= 0.5;
        }
        0.0
    }

    /// Newton iterations for the minimizer offset, kept inside a bracket.
    ///
    /// The quadratic part gives `g'' ≥ 2 dt/h`, so the minimizer lies between
    /// 0 and `−g'(0) / (2 dt/h)`; steps leaving the current bracket are
    /// replaced by bisection.
    fn newton(&self, s0: f64, speeds0: &[f64; 4], ctx: &EdgeCtx) -> f64 {
        let (mut g, mut g2) = self.derivatives(s0, 0.0, speeds0, ctx);
        if g == 0.0 || !g.is_finite() {
            return 0.0;
        }
        let far = -g / (2.0 * ctx.dt_h);
        let (mut lo, mut hi) = if far > 0.0 { (0.0, far) } else { (far, 0.0) };
        let mut d = 0.0;
        for it in 0..ctx.newton_iters {
            let mut next = d - g / g2;
            if !(next >= lo && next <= hi) {
                next = 0.5 * (lo + hi);
            }
            d = next;
            if it + 1 == ctx.newton_iters {
                break;
            }
            (g, g2) = self.derivatives(s0, d, &self.speeds(s0 + d), ctx);
            if g == 0.0 {
                break;
            }
            if g > 0.0 {
                hi = d;
            } else {
                lo = d;
            }
        }
        d
    }
}

/// Relaxes the interior edges of one line (a grid row for x-edges, a column
/// for y-edges). `edges` has one more entry than the cell arrays; its end
/// entries are boundary edges and never change. `trans` holds the two
/// transverse edge values of every cell of the line.
fn relax_line(
    edges: &mut [f64],
    resid: &mut [f64],
    k: &[f64],
    trans: &[f64],
    eps2: f64,
    ctx: &EdgeCtx,
    reverse: bool,
) {
    let n = resid.len();
    let shift = ctx.dt_h;
    let mut visit = |e: usize| {
        let t = [
            trans[2 * e - 2],
            trans[2 * e - 1],
            trans[2 * e],
            trans[2 * e + 1],
        ];
        let local = EdgeLocal::new(resid[e - 1], resid[e], k[e - 1], k[e], t, eps2);
        let d = local.increment(edges[e], ctx);
        if d != 0.0 {
            edges[e] += d;
            resid[e - 1] += shift * d;
            resid[e] -= shift * d;
        }
    };
    if reverse {
        (1..n).rev().for_each(&mut visit);
    } else {
        (1..n).for_each(&mut visit);
    }
}

/// Scratch buffers reused across sweeps.
#[derive(Debug, Clone)]
struct Scratch {
    resid: Vec<f64>,
    trans: Vec<f64>,
}

pub struct Solver<'a> {
    fields: &'a ProblemFields,
    params: SolverParams,
    /// `k` in column-major order for the y-edge phase.
    k_cols: Vec<f64>,
    /// Any `|u|` beyond this is treated as divergence of the iteration.
    u_bound: f64,
}

impl<'a> Solver<'a> {
    pub fn new(fields: &'a ProblemFields, params: SolverParams) -> Result<Self> {
        params.validate()?;
        let g = &fields.grid;
        let mut k_cols = vec![0.0; g.cell_count()];
        for i in 0..g.nx() {
            for j in 0..g.ny() {
                k_cols[i * g.ny() + j] = fields.k.get(i, j);
            }
        }
        let u_bound = 1e6 * (fields.u0.max_abs() + fields.k.max_abs() * g.diagonal() + 1.0);
        Ok(Solver {
            fields,
            params,
            k_cols,
            u_bound,
        })
    }

    pub fn params(&self) -> &SolverParams {
        &self.params
    }

    pub fn fields(&self) -> &ProblemFields {
        self.fields
    }

    pub fn initial_state(&self) -> SolveState {
        self.state_from(self.fields.u0.clone(), FluxField::zeros(&self.fields.grid))
    }

    /// A fresh evolution starting from the surface `u` with `q` as the first
    /// guess for the flux, e.g. a solution interpolated from a coarser grid.
    pub fn state_from(&self, u: CellField, q: FluxField) -> SolveState {
        let g = &self.fields.grid;
        SolveState {
            w: FluxField::zeros(g),
            q,
            t: 0.0,
            step: 0,
            u_start: u.clone(),
            u,
            history: Vec::new(),
        }
    }

    fn ctx(&self) -> EdgeCtx {
        let h = self.fields.grid.h();
        EdgeCtx {
            h,
            dt_h: self.params.dt / h,
            omega: self.params.omega,
            newton_iters: self.params.newton_iters,
        }
    }

    /// `J(q_trial)` for one step starting from the surface `u_prev`. Since
    /// `F_m − div W = u_prev + dt f`, the residual is
    /// `dt div q − u_prev − dt f`.
    pub fn objective_at(&self, q_trial: &FluxField, u_prev: &CellField) -> f64 {
        let fl = self.fields;
        let g = &fl.grid;
        let (dt, eps2, h) = (self.params.dt, self.params.eps * self.params.eps, g.h());
        let dt_h = dt / h;
        let sum = par::sum_lines(self.params.execution, g.ny(), |j| {
            let qx = q_trial.qx_row(j);
            let mut acc = 0.0;
            for i in 0..g.nx() {
                let div = (qx[i + 1] - qx[i]) + (q_trial.qy(i, j + 1) - q_trial.qy(i, j));
                let r = dt_h * div - u_prev.get(i, j) - dt * fl.f.get(i, j);
                let speed = corner_mean(q_trial, i, j, eps2);
                acc += 0.5 * r * r + dt * fl.k.get(i, j) * speed;
            }
            acc
        });
        sum * g.cell_area()
    }

    /// `J(q_trial)` for the step following `state`.
    pub fn step_objective(&self, q_trial: &FluxField, state: &SolveState) -> f64 {
        self.objective_at(q_trial, &state.u)
    }

    fn edge_local(&self, state: &SolveState, edge: Edge) -> (EdgeLocal, f64) {
        let fl = self.fields;
        let g = &fl.grid;
        let (dt, eps2) = (self.params.dt, self.params.eps * self.params.eps);
        let q = &state.q;
        let residual = |i: usize, j: usize| {
            let div = q.qx(i + 1, j) - q.qx(i, j) + q.qy(i, j + 1) - q.qy(i, j);
            dt / g.h() * div - state.u.get(i, j) - dt * fl.f.get(i, j)
        };
        let [(il, jl), (ih, jh)] = edge.cells();
        let t = match edge {
            Edge::X { .. } => [
                q.qy(il, jl),
                q.qy(il, jl + 1),
                q.qy(ih, jh),
                q.qy(ih, jh + 1),
            ],
            Edge::Y { .. } => [
                q.qx(il, jl),
                q.qx(il + 1, jl),
                q.qx(ih, jh),
                q.qx(ih + 1, jh),
            ],
        };
        let local = EdgeLocal::new(
            residual(il, jl),
            residual(ih, jh),
            fl.k.get(il, jl),
            fl.k.get(ih, jh),
            t,
            eps2,
        );
        (local, q.get(edge))
    }

    /// Analytic `(∂J/∂q_e, ∂²J/∂q_e²)` of [`Solver::step_objective`] at the
    /// current flux of `state`.
    pub fn edge_derivatives(&self, state: &SolveState, edge: Edge) -> (f64, f64) {
        assert!(
            edge.is_interior(&self.fields.grid),
            "{edge:?} is not interior"
        );
        let (local, s0) = self.edge_local(state, edge);
        let scale = self.params.dt * self.fields.grid.h();
        let (g1, g2) = local.derivatives(s0, 0.0, &local.speeds(s0), &self.ctx());
        (scale * g1, scale * g2)
    }

    /// New value of one interior edge after a relaxed, safeguarded Newton
    /// update with every other edge frozen.
    pub fn edge_update(&self, state: &SolveState, edge: Edge) -> f64 {
        assert!(
            edge.is_interior(&self.fields.grid),
            "{edge:?} is not interior"
        );
        let (local, s0) = self.edge_local(state, edge);
        s0 + local.increment(s0, &self.ctx())
    }

    /// Step residual and transverse edge pairs for the x-edge phase
    /// (row-major) or the y-edge phase (column-major).
    fn prepare_phase(
        &self,
        u_prev: &CellField,
        q: &FluxField,
        x_phase: bool,
        scratch: &mut Scratch,
    ) {
        let fl = self.fields;
        let g = &fl.grid;
        let (nx, ny) = (g.nx(), g.ny());
        let dt = self.params.dt;
        let dt_h = dt / g.h();
        let cell = |i: usize, j: usize| {
            let div = q.qx(i + 1, j) - q.qx(i, j) + q.qy(i, j + 1) - q.qy(i, j);
            let r = dt_h * div - u_prev.get(i, j) - dt * fl.f.get(i, j);
            let pair = if x_phase {
                [q.qy(i, j), q.qy(i, j + 1)]
            } else {
                [q.qx(i, j), q.qx(i + 1, j)]
            };
            (r, pair)
        };
        let Scratch { resid, trans } = scratch;
        let exec = self.params.execution;
        if x_phase {
            par::for_each_line2(exec, resid, nx, trans, 2 * nx, |j, r, t| {
                for i in 0..nx {
                    let pair;
                    (r[i], pair) = cell(i, j);
                    t[2 * i..2 * i + 2].copy_from_slice(&pair);
                }
            });
        } else {
            par::for_each_line2(exec, resid, ny, trans, 2 * ny, |i, r, t| {
                for j in 0..ny {
                    let pair;
                    (r[j], pair) = cell(i, j);
                    t[2 * j..2 * j + 2].copy_from_slice(&pair);
                }
            });
        }
    }

    fn sweep(&self, u_prev: &CellField, q: &mut FluxField, reverse: bool, scratch: &mut Scratch) {
        let g = &self.fields.grid;
        let (nx, ny) = (g.nx(), g.ny());
        let eps2 = self.params.eps * self.params.eps;
        let ctx = self.ctx();
        let exec = self.params.execution;
        let phases: [bool; 2] = if reverse {
            [false, true]
        } else {
            [true, false]
        };
        for x_phase in phases {
            self.prepare_phase(u_prev, q, x_phase, scratch);
            let Scratch { resid, trans } = &mut *scratch;
            let trans: &[f64] = trans;
            if x_phase {
                let k = self.fields.k.values();
                par::for_each_line2(exec, q.qx_raw_mut(), nx + 1, resid, nx, |j, edges, r| {
                    let (span, tspan) = (j * nx..(j + 1) * nx, 2 * j * nx..2 * (j + 1) * nx);
                    relax_line(edges, r, &k[span], &trans[tspan], eps2, &ctx, reverse);
                });
            } else {
                let k = &self.k_cols;
                par::for_each_line2(exec, q.qy_raw_mut(), ny + 1, resid, ny, |i, edges, r| {
                    let (span, tspan) = (i * ny..(i + 1) * ny, 2 * i * ny..2 * (i + 1) * ny);
                    relax_line(edges, r, &k[span], &trans[tspan], eps2, &ctx, reverse);
                });
            }
        }
    }

    /// Advances one time level: `sweeps_per_step` SOR sweeps on the step
    /// functional, then `W ← W + dt q` and `u ← u + dt (f − div q)`.
    pub fn advance_step(&self, state: &mut SolveState) -> Result<()> {
        let g = &self.fields.grid;
        let p = &self.params;
        let t_level = state.t + p.dt;
        let mut scratch = Scratch {
            resid: vec![0.0; g.cell_count()],
            trans: vec![0.0; 2 * g.cell_count()],
        };
        let q_old = state.q.clone();
        let mut q = state.q.clone();
        let mut sweep_objectives = Vec::new();
        if p.record_sweep_objectives {
            sweep_objectives.push(self.objective_at(&q, &state.u));
        }
        for s in 0..p.sweeps_per_step {
            let reverse = p.sweep_order == SweepOrder::Symmetric && s % 2 == 1;
            self.sweep(&state.u, &mut q, reverse, &mut scratch);
            if p.record_sweep_objectives {
                sweep_objectives.push(self.objective_at(&q, &state.u));
            }
        }
        let step = state.step + 1;
        if !q.is_finite() {
            return Err(Error::Divergence { step });
        }
        let objective = match sweep_objectives.last() {
            Some(&j) => j,
            None => self.objective_at(&q, &state.u),
        };
        let max_dq = q_old
            .interior_edges()
            .map(|e| (q.get(e) - q_old.get(e)).abs())
            .fold(0.0, f64::max);

        state.w.axpy(p.dt, &q);
        state.q = q;
        state.t = t_level;
        state.step = step;
        let u = self.next_surface(&state.u, &state.q);
        if !u.is_finite() || u.max_abs() > self.u_bound {
            return Err(Error::Divergence { step });
        }
        let max_du = u
            .values()
            .iter()
            .zip(state.u.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        state.u = u;
        let a = transport_density(&state.q, &self.fields.k, g, p.eps);
        let total_cost = self
            .fields
            .k
            .values()
            .iter()
            .zip(a.values())
            .map(|(k, a)| k * a)
            .sum::<f64>()
            * g.cell_area();
        state.history.push(StepRecord {
            step,
            t: state.t,
            objective,
            max_du_dt: max_du / p.dt,
            total_cost,
            max_dq,
            sweep_objectives,
        });
        Ok(())
    }

    /// `u_prev + dt (f − div q)`, the surface at the end of a step.
    fn next_surface(&self, u_prev: &CellField, q: &FluxField) -> CellField {
        let g = &self.fields.grid;
        let dt = self.params.dt;
        let div = divergence_with(q, g, self.params.execution);
        CellField::from_fn(g, |i, j| {
            u_prev.get(i, j) + dt * self.fields.f.get(i, j) - dt * div.get(i, j)
        })
    }

    /// Checks the preconditions of [`Solver::run_to_stationary`]: balanced
    /// source and an initial surface within the slope bound.
    pub fn check_admissible(&self) -> Result<()> {
        let fl = self.fields;
        let g = &fl.grid;
        let (pos, _) = geometry::masses(&fl.f, g);
        let total = fl.f.integral(g);
        if total.abs() > 1e-12 * pos.max(f64::MIN_POSITIVE) && total != 0.0 {
            return Err(Error::InvalidProblem(format!(
                "source is not balanced: total mass {total:e}"
            )));
        }
        let h = g.h();
        for j in 0..g.ny() {
            for i in 0..g.nx() {
                let u = fl.u0.get(i, j);
                let k = fl.k.get(i, j);
                for (ni, nj) in [(i + 1, j), (i, j + 1)] {
                    if ni >= g.nx() || nj >= g.ny() {
                        continue;
                    }
                    let slope = (fl.u0.get(ni, nj) - u).abs() / h;
                    let bound = 0.5 * (k + fl.k.get(ni, nj));
                    if slope > bound * (1.0 + ADMISSIBLE_SLACK) {
                        return Err(Error::InadmissibleInitialSurface { i, j, slope, bound });
                    }
                }
            }
        }
        Ok(())
    }

    fn u_scale(u: &CellField) -> f64 {
        u.max_abs().max(1.0)
    }

    /// Evolves from the initial state until `max |Δu|/dt ≤ tol · u_scale`
    /// holds for `stationary_patience` consecutive steps, or `max_steps` is
    /// reached (then `converged` is false).
    pub fn run_to_stationary(&self) -> Result<SolveResult> {
        self.check_admissible()?;
        let mut state = self.initial_state();
        let converged = self.continue_to_stationary(&mut state)?;
        Ok(self.finish(state, converged))
    }

    /// Continues an evolution in place; returns whether the stationarity
    /// gate fired.
    pub fn continue_to_stationary(&self, state: &mut SolveState) -> Result<bool> {
        let p = &self.params;
        let mut quiet = 0;
        while state.step < p.max_steps {
            self.advance_step(state)?;
            let rec = state.history.last().expect("step recorded");
            if rec.max_du_dt <= p.tol_stationary * Self::u_scale(&state.u) {
                quiet += 1;
                if quiet >= p.stationary_patience {
                    return Ok(true);
                }
            } else {
                quiet = 0;
            }
        }
        Ok(false)
    }

    pub fn finish(&self, state: SolveState, converged: bool) -> SolveResult {
        let a = transport_density(&state.q, &self.fields.k, &self.fields.grid, self.params.eps);
        SolveResult {
            q: state.q.clone(),
            w: state.w.clone(),
            u: state.u.clone(),
            a,
            history: state.history.clone(),
            converged,
            state,
        }
    }

    /// Runs `steps` more steps and reports the largest change of `u`
    /// against `tol_stationary · u_scale · dt`.
    pub fn probe_stationarity(
        &self,
        state: &mut SolveState,
        steps: usize,
    ) -> Result<StationarityProbe> {
        let p = &self.params;
        let mut max_du: f64 = 0.0;
        let mut bound = f64::INFINITY;
        for _ in 0..steps {
            self.advance_step(state)?;
            let rec = state.history.last().expect("step recorded");
            max_du = max_du.max(rec.max_du_dt * p.dt);
            bound = bound.min(p.tol_stationary * Self::u_scale(&state.u) * p.dt);
        }
        Ok(StationarityProbe {
            steps,
            max_du,
            bound,
        })
    }
}

/// Relative slack on the slope bound for initial surfaces, so that a
/// computed stationary surface is accepted as a restart.
pub const ADMISSIBLE_SLACK: f64 = 1e-3;

/// Edges touching a cell with `k` above this multiple of `k_base` start a
/// finer level with zero flux.
pub const WARM_FLUX_K_RATIO: f64 = 1e3;

/// Coarsest short-axis resolution used for warm starts.
pub const COARSEST_SHORT_AXIS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LevelRecord {
    pub nx: usize,
    pub ny: usize,
    pub steps: usize,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct NestedSolution {
    pub fields: ProblemFields,
    pub result: SolveResult,
    /// Coarsest level first; the last entry is the requested grid.
    pub levels: Vec<LevelRecord>,
}

/// Grids used by [`solve_nested`], coarsest first, halving the short axis
/// up to `coarse_levels` times.
pub fn nested_grids(grid: Grid, coarse_levels: usize) -> Result<Vec<Grid>> {
    let mut grids = vec![grid];
    for _ in 0..coarse_levels {
        let last = grids.last().expect("non-empty");
        let short = last.nx().min(last.ny()) / 2;
        if short < COARSEST_SHORT_AXIS {
            break;
        }
        grids.push(Grid::covering(grid.bbox(), short)?);
    }
    grids.reverse();
    Ok(grids)
}

/// Solves `spec` on `grid`, first solving on coarser grids and starting each
/// finer evolution from the interpolated surface and flux of the previous
/// one. Coarse flux is not carried into obstacle cells. With `coarse_levels = 0`, or an initial surface given as a field on
/// `grid`, this is a plain evolution from `u0`.
pub fn solve_nested(
    spec: &ProblemSpec,
    grid: Grid,
    params: &SolverParams,
    subsample: usize,
    coarse_levels: usize,
) -> Result<NestedSolution> {
    let coarse_levels = match spec.u0 {
        geometry::InitialSurface::Zero => coarse_levels,
        geometry::InitialSurface::Field(_) => 0,
    };
    let mut levels = Vec::new();
    let mut previous: Option<(Grid, SolveState)> = None;
    let grids = nested_grids(grid, coarse_levels)?;
    let last = grids.len() - 1;
    for (n, g) in grids.into_iter().enumerate() {
        let fields = ProblemFields::from_spec(spec, g, subsample)?;
        let solver = Solver::new(&fields, params.clone())?;
        solver.check_admissible()?;
        let mut state = match &previous {
            None => solver.initial_state(),
            Some((from, st)) => solver.state_from(
                st.u.resample(from, &g),
                warm_flux(&st.q, from, &fields, spec.k_base),
            ),
        };
        let converged = solver.continue_to_stationary(&mut state)?;
        levels.push(LevelRecord {
            nx: g.nx(),
            ny: g.ny(),
            steps: state.step,
            converged,
        });
        if n == last {
            let result = solver.finish(state, converged);
            return Ok(NestedSolution {
                fields,
                result,
                levels,
            });
        }
        previous = Some((g, state));
    }
    unreachable!("at least one level")
}

/// Coarse flux resampled onto `fields.grid`, with the edges of obstacle
/// cells cleared.
fn warm_flux(q: &FluxField, from: &Grid, fields: &ProblemFields, k_base: f64) -> FluxField {
    let mut out = q.resample(from, &fields.grid);
    let limit = WARM_FLUX_K_RATIO * k_base;
    let blocked: Vec<Edge> = out
        .interior_edges()
        .filter(|e| e.cells().iter().any(|&(i, j)| fields.k.get(i, j) > limit))
        .collect();
    for e in blocked {
        out.set(e, 0.0);
    }
    out
}

/// `‖div q − f‖_∞`.
pub fn divergence_residual(q: &FluxField, f: &CellField, grid: &Grid) -> f64 {
    divergence(q, grid)
        .values()
        .iter()
        .zip(f.values())
        .map(|(d, f)| (d - f).abs())
        .fold(0.0, f64::max)
}
