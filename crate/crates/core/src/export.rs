//! Plain-text output files.
//!
//! Field files are comma-separated. The first row holds the grid metadata
//! `nx,ny,h,x0,y0` (cell count, spacing and lower-left corner); the rows
//! that follow run from the bottom row of the grid upwards. Cell fields have
//! `ny` rows of `nx` values, `qx.csv` has `ny` rows of `nx + 1` values and
//! `qy.csv` has `ny + 1` rows of `nx` values. Numbers are written in the
//! shortest form that parses back to the same `f64`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::config::Outputs;
use crate::error::{Error, Result};
use crate::grid::{CellField, FluxField, Grid};
use crate::solver::StepRecord;

/// Everything written for one run.
#[derive(Debug, Clone)]
pub struct RunReport<'a> {
    pub grid: &'a Grid,
    pub u: &'a CellField,
    pub a: &'a CellField,
    pub f: &'a CellField,
    pub k: &'a CellField,
    pub q: &'a FluxField,
    pub history: &'a [StepRecord],
    /// Flat `key = value` lines for `diagnostics.txt`, in order.
    pub diagnostics: Vec<(String, String)>,
}

fn header(grid: &Grid) -> String {
    let (x0, y0) = grid.origin();
    format!("{},{},{},{},{}\n", grid.nx(), grid.ny(), grid.h(), x0, y0)
}

fn push_row(out: &mut String, row: impl Iterator<Item = f64>) {
    for (n, v) in row.enumerate() {
        if n > 0 {
            out.push(',');
        }
        write!(out, "{v}").expect("write to string");
    }
    out.push('\n');
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn cell_field_csv(field: &CellField, grid: &Grid) -> String {
    let mut out = header(grid);
    for row in field.values().chunks(grid.nx()) {
        push_row(&mut out, row.iter().copied());
    }
    out
}

pub fn qx_csv(q: &FluxField, grid: &Grid) -> String {
    let mut out = header(grid);
    for j in 0..grid.ny() {
        push_row(&mut out, q.qx_row(j).iter().copied());
    }
    out
}

pub fn qy_csv(q: &FluxField, grid: &Grid) -> String {
    let mut out = header(grid);
    for j in 0..=grid.ny() {
        push_row(&mut out, (0..grid.nx()).map(|i| q.qy(i, j)));
    }
    out
}

pub fn history_csv(history: &[StepRecord]) -> String {
    let mut out = String::from("step,t,objective,max_du_dt,total_cost\n");
    for r in history {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.step, r.t, r.objective, r.max_du_dt, r.total_cost
        )
        .expect("write to string");
    }
    out
}

pub fn write_cell_field(path: &Path, field: &CellField, grid: &Grid) -> Result<()> {
    write_text(path, &cell_field_csv(field, grid))
}

/// Reads a cell field file written by [`write_cell_field`].
pub fn read_cell_field(path: &Path) -> Result<(Grid, CellField)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |msg: String| Error::FieldFile {
        path: path.to_path_buf(),
        msg,
    };
    let mut lines = text.lines();
    let head: Vec<&str> = lines
        .next()
        .ok_or_else(|| bad("empty file".into()))?
        .split(',')
        .collect();
    if head.len() != 5 {
        return Err(bad(format!(
            "expected header nx,ny,h,x0,y0, got {} entries",
            head.len()
        )));
    }
    let count = |s: &str| {
        s.trim()
            .parse::<usize>()
            .map_err(|_| bad(format!("bad count '{s}'")))
    };
    let real = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| bad(format!("bad number '{s}'")))
    };
    let (nx, ny) = (count(head[0])?, count(head[1])?);
    let grid = Grid::new(nx, ny, real(head[2])?, (real(head[3])?, real(head[4])?))
        .map_err(|e| bad(e.to_string()))?;
    let mut values = Vec::with_capacity(nx * ny);
    let mut rows = 0;
    for (n, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line.split(',').map(real).collect::<Result<Vec<f64>>>()?;
        if row.len() != nx {
            return Err(bad(format!(
                "row {} has {} values, expected {nx}",
                n + 1,
                row.len()
            )));
        }
        values.extend(row);
        rows += 1;
    }
    if rows != ny {
        return Err(bad(format!("found {rows} rows, expected {ny}")));
    }
    let field = CellField::from_values(&grid, values).map_err(|e| bad(e.to_string()))?;
    Ok((grid, field))
}

/// Writes the enabled outputs into `outdir` and returns the written paths.
pub fn export_fields(
    report: &RunReport<'_>,
    outdir: &Path,
    outputs: Outputs,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(outdir).map_err(|e| Error::io(outdir, e))?;
    let grid = report.grid;
    let mut files: Vec<(&str, String)> = Vec::new();
    if outputs.fields {
        files.push(("u.csv", cell_field_csv(report.u, grid)));
        files.push(("a.csv", cell_field_csv(report.a, grid)));
        files.push(("f.csv", cell_field_csv(report.f, grid)));
        files.push(("k.csv", cell_field_csv(report.k, grid)));
        files.push(("qx.csv", qx_csv(report.q, grid)));
        files.push(("qy.csv", qy_csv(report.q, grid)));
    }
    if outputs.history {
        files.push(("history.csv", history_csv(report.history)));
    }
    if outputs.diagnostics {
        let mut text = String::new();
        for (key, value) in &report.diagnostics {
            writeln!(text, "{key} = {value}").expect("write to string");
        }
        files.push(("diagnostics.txt", text));
    }
    let mut written = Vec::with_capacity(files.len());
    for (name, text) in files {
        let path = outdir.join(name);
        write_text(&path, &text)?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid {
        Grid::new(5, 4, 0.25, (-1.0, 0.5)).unwrap()
    }

    fn record(step: usize) -> StepRecord {
        StepRecord {
            step,
            t: step as f64,
            objective: -0.5,
            max_du_dt: 1e-3,
            total_cost: 2.0,
            max_dq: 0.0,
            sweep_objectives: Vec::new(),
        }
    }

    #[test]
    fn zero_field_has_header_and_dims() {
        let g = grid();
        let text = cell_field_csv(&CellField::zeros(&g), &g);
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("5,4,0.25,-1,0.5"));
        let rows: Vec<&str> = lines.collect();
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().all(|r| *r == "0,0,0,0,0"));
    }

    #[test]
    fn round_trip_is_exact() {
        let g = grid();
        let field = CellField::from_fn(&g, |i, j| {
            (i as f64 + 0.1).sqrt() / (j as f64 + 3.0) - 1e-300
        });
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.csv");
        write_cell_field(&path, &field, &g).unwrap();
        let (g2, back) = read_cell_field(&path).unwrap();
        assert_eq!(g2, g);
        assert_eq!(back, field);
    }

    #[test]
    fn malformed_files_name_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(&path, "2,2,0.5,0,0\n1,2\n3\n").unwrap();
        let err = read_cell_field(&path).unwrap_err();
        assert!(err.to_string().contains("bad.csv"), "{err}");
        assert!(read_cell_field(&dir.path().join("missing.csv")).is_err());
    }

    #[test]
    fn flux_files_have_edge_dims() {
        let g = grid();
        let q = FluxField::from_fn(
            &g,
            |i, j| (i + 10 * j) as f64,
            |i, j| -((i + 10 * j) as f64),
        );
        let qx = qx_csv(&q, &g);
        let qy = qy_csv(&q, &g);
        assert_eq!(qx.lines().count(), 1 + 4);
        assert_eq!(qy.lines().count(), 1 + 5);
        assert!(qx.lines().skip(1).all(|l| l.split(',').count() == 6));
        assert!(qy.lines().skip(1).all(|l| l.split(',').count() == 5));
        assert_eq!(qx.lines().nth(2).unwrap().split(',').nth(1), Some("11"));
        assert_eq!(qy.lines().nth(2).unwrap().split(',').nth(1), Some("-11"));
    }

    #[test]
    fn history_has_one_row_per_step() {
        let history: Vec<StepRecord> = (1..=7).map(record).collect();
        let text = history_csv(&history);
        assert_eq!(
            text.lines().next(),
            Some("step,t,objective,max_du_dt,total_cost")
        );
        assert_eq!(text.lines().count(), 1 + 7);
        assert_eq!(text.lines().nth(3), Some("3,3,-0.5,0.001,2"));
    }

    #[test]
    fn export_honours_toggles() {
        let g = grid();
        let z = CellField::zeros(&g);
        let q = FluxField::zeros(&g);
        let report = RunReport {
            grid: &g,
            u: &z,
            a: &z,
            f: &z,
            k: &z,
            q: &q,
            history: &[],
            diagnostics: vec![("converged".into(), "true".into())],
        };
        let dir = tempfile::tempdir().unwrap();
        let only_diag = Outputs {
            fields: false,
            history: false,
            diagnostics: true,
        };
        let files = export_fields(&report, dir.path(), only_diag).unwrap();
        assert_eq!(files, vec![dir.path().join("diagnostics.txt")]);
        assert_eq!(fs::read_to_string(&files[0]).unwrap(), "converged = true\n");
        let all = export_fields(&report, &dir.path().join("nested"), Outputs::default()).unwrap();
        assert_eq!(all.len(), 8);
    }
}
