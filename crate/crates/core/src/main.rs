use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sandflux::config::{parse_layered, Preset, MIN_RESOLUTION};
use sandflux::run::run;
use sandflux::{Error, Result};

#[derive(Parser)]
#[command(
    name = "sandflux",
    version,
    about = "Optimal transport density and potential from a sand flux model"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a configured problem and write the result files.
    Solve {
        /// Configuration file; optional when --preset is given.
        config: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Cells along the short axis of the domain.
        #[arg(long)]
        resolution: Option<usize>,
        #[arg(long)]
        max_steps: Option<usize>,
        /// Tighter time stepping for an accurate potential.
        #[arg(long)]
        accurate_potential: bool,
        /// example1, example2, example3 or accurate-potential.
        #[arg(long)]
        preset: Option<String>,
    },
}

fn solve(
    config: Option<PathBuf>,
    out: Option<PathBuf>,
    resolution: Option<usize>,
    max_steps: Option<usize>,
    accurate_potential: bool,
    preset: Option<String>,
) -> Result<i32> {
    let mut presets = Vec::new();
    if let Some(name) = &preset {
        presets.push(Preset::from_name(name)?);
    }
    let text = match &config {
        Some(path) => fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?,
        None if preset.is_some() => String::new(),
        None => {
            return Err(Error::ConfigValue(
                "give a configuration file or --preset".into(),
            ))
        }
    };
    let overlays: &[Preset] = if accurate_potential {
        &[Preset::AccuratePotential]
    } else {
        &[]
    };
    let mut cfg = parse_layered(&text, &presets, overlays)?;
    if let Some(out) = out {
        cfg.out_dir = out;
    }
    if let Some(n) = resolution {
        if n < MIN_RESOLUTION {
            return Err(Error::ConfigValue(format!(
                "resolution must be at least {} cells on the short axis, got {n}",
                MIN_RESOLUTION
            )));
        }
        cfg.resolution = n;
    }
    if let Some(n) = max_steps {
        cfg.params.max_steps = n;
    }
    let outcome = run(&cfg)?;
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    let r = &outcome.report;
    println!(
        "{}: total_cost = {:e}, max_a = {:e}, div_residual_inf = {:e}",
        if outcome.converged {
            "converged"
        } else {
            "not converged"
        },
        r.total_cost,
        r.max_a,
        r.div_residual_inf
    );
    println!(
        "wrote {} files to {}",
        outcome.files.len(),
        cfg.out_dir.display()
    );
    Ok(outcome.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let status = match cli.command {
        Command::Solve {
            config,
            out,
            resolution,
            max_steps,
            accurate_potential,
            preset,
        } => solve(
            config,
            out,
            resolution,
            max_steps,
            accurate_potential,
            preset,
        ),
    };
    match status {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
