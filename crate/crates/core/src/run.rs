//! Configuration-driven pipeline: rasterize, balance, solve, analyze and
//! export.

use std::fs;
use std::path::PathBuf;

use crate::analysis::{diagnostics, DiagnosticsReport, Thresholds};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::export::{export_fields, read_cell_field, RunReport};
use crate::geometry::{check_source_margin, InitialSurface};
use crate::grid::Grid;
use crate::solver::{default_eps, solve_nested, NestedSolution, ProblemFields, SolverParams};

/// Solution of a configured problem with its diagnostics.
#[derive(Debug, Clone)]
pub struct ConfigSolution {
    pub solution: NestedSolution,
    pub params: SolverParams,
    pub report: DiagnosticsReport,
    pub warnings: Vec<String>,
}

impl ConfigSolution {
    pub fn grid(&self) -> &Grid {
        &self.solution.fields.grid
    }

    pub fn fields(&self) -> &ProblemFields {
        &self.solution.fields
    }

    pub fn converged(&self) -> bool {
        self.solution.result.converged
    }

    /// `diagnostics.txt` lines.
    pub fn summary(&self) -> Vec<(String, String)> {
        let g = self.grid();
        let p = &self.params;
        let r = &self.solution.result;
        let last = r.history.last();
        let mut lines: Vec<(String, String)> = vec![
            ("converged".into(), r.converged.to_string()),
            ("nx".into(), g.nx().to_string()),
            ("ny".into(), g.ny().to_string()),
            ("h".into(), g.h().to_string()),
            ("steps".into(), r.history.len().to_string()),
            ("t".into(), last.map_or(0.0, |s| s.t).to_string()),
            (
                "max_du_dt".into(),
                last.map_or(0.0, |s| s.max_du_dt).to_string(),
            ),
            ("dt".into(), p.dt.to_string()),
            ("eps".into(), p.eps.to_string()),
            ("omega".into(), p.omega.to_string()),
            ("sweeps_per_step".into(), p.sweeps_per_step.to_string()),
            ("newton_iters".into(), p.newton_iters.to_string()),
            ("tol_stationary".into(), p.tol_stationary.to_string()),
        ];
        for (n, level) in self.solution.levels.iter().enumerate() {
            lines.push((
                format!("level_{n}"),
                format!(
                    "{}x{} steps={} converged={}",
                    level.nx, level.ny, level.steps, level.converged
                ),
            ));
        }
        lines.extend(
            self.report
                .to_key_values()
                .into_iter()
                .map(|(k, v)| (k.to_string(), v.to_string())),
        );
        lines
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub converged: bool,
    pub files: Vec<PathBuf>,
    pub warnings: Vec<String>,
    pub report: DiagnosticsReport,
}

impl RunOutcome {
    /// 0 when the stationarity gate fired, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.converged {
            0
        } else {
            2
        }
    }
}

/// Grid of the configured resolution covering the domain.
pub fn config_grid(config: &RunConfig) -> Result<Grid> {
    Grid::covering(config.problem.domain, config.resolution)
}

/// Runs the solver for `config` without writing anything.
pub fn solve_config(config: &RunConfig) -> Result<ConfigSolution> {
    let grid = config_grid(config)?;
    let mut problem = config.problem.clone();
    if let Some(path) = &config.u0_path {
        let (from, u0) = read_cell_field(path)?;
        if (from.nx(), from.ny()) != (grid.nx(), grid.ny()) {
            return Err(Error::DimensionMismatch {
                expected: (grid.nx(), grid.ny()),
                found: (from.nx(), from.ny()),
            });
        }
        problem.u0 = InitialSurface::Field(u0);
    }
    let fine = ProblemFields::from_spec(&problem, grid, config.subsample)?;
    let mut warnings = Vec::new();
    if let Err(e) = check_source_margin(&fine.f, &grid, config.source_margin) {
        warnings.push(e.to_string());
    }
    let mut params = config.params.clone();
    params.eps = config.eps.unwrap_or_else(|| default_eps(&fine));
    let solution = solve_nested(
        &problem,
        grid,
        &params,
        config.subsample,
        config.coarse_levels,
    )?;
    let fields = &solution.fields;
    let report = diagnostics(
        &solution.result.q,
        &solution.result.u,
        &fields.f,
        &fields.k,
        &grid,
        Thresholds::new(problem.k_base, &grid),
    );
    Ok(ConfigSolution {
        solution,
        params,
        report,
        warnings,
    })
}

fn check_writable(dir: &std::path::Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let probe = dir.join(".write-check");
    fs::write(&probe, b"").map_err(|e| Error::io(&probe, e))?;
    fs::remove_file(&probe).map_err(|e| Error::io(&probe, e))
}

/// Solves `config` and writes the enabled outputs into its output directory.
pub fn run(config: &RunConfig) -> Result<RunOutcome> {
    check_writable(&config.out_dir)?;
    let solved = solve_config(config)?;
    let result = &solved.solution.result;
    let fields = solved.fields();
    let report = RunReport {
        grid: &fields.grid,
        u: &result.u,
        a: &result.a,
        f: &fields.f,
        k: &fields.k,
        q: &result.q,
        history: &result.history,
        diagnostics: solved.summary(),
    };
    let files = export_fields(&report, &config.out_dir, config.outputs)?;
    Ok(RunOutcome {
        converged: result.converged,
        files,
        warnings: solved.warnings.clone(),
        report: solved.report.clone(),
    })
}
