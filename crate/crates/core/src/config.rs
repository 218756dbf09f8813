//! Line-based run configuration.
//!
//! ```text
//! # comment
//! domain = 0, 0, 3, 1
//! resolution = 96
//!
//! [shape.source]
//! kind = rectangle
//! params = 0, 0, 1, 1
//! value = 1
//!
//! [shape.sink]
//! kind = rectangle
//! params = 2, 0, 3, 1
//! ```
//!
//! Top-level keys come first; each `[shape.source]`, `[shape.sink]` or
//! `[shape.k]` header opens a block holding `kind`, `params` and `value`.
//! Shape kinds and their parameters (angles in degrees):
//!
//! | kind        | params                          |
//! |-------------|---------------------------------|
//! | `rectangle` | `x0, y0, x1, y1 [, angle]`      |
//! | `ellipse`   | `cx, cy, a, b [, angle]`        |
//! | `disk`      | `cx, cy, r`                     |
//! | `polygon`   | `x1, y1, x2, y2, x3, y3, ...`   |
//! | `point`     | `x, y` (value is the mass)      |
//!
//! Sink values are given as positive densities. A k-region value may be the
//! word `obstacle`.

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::geometry::{ProblemSpec, ShapeSpec, DEFAULT_SUBSAMPLE, OBSTACLE_K};
use crate::solver::{SolverParams, SweepOrder};

/// Smallest accepted short-axis resolution.
pub const MIN_RESOLUTION: usize = 16;

const TOP_KEYS: &[&str] = &[
    "domain",
    "k_base",
    "resolution",
    "h",
    "dt",
    "eps",
    "omega",
    "sweeps_per_step",
    "newton_iters",
    "tol_stationary",
    "stationary_patience",
    "max_steps",
    "sweep_order",
    "subsample",
    "coarse_levels",
    "source_margin",
    "u0",
    "out",
    "write_fields",
    "write_history",
    "write_diagnostics",
    "preset",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Example1,
    Example2,
    Example3,
    AccuratePotential,
}

impl Preset {
    pub const ALL: [Preset; 4] = [
        Preset::Example1,
        Preset::Example2,
        Preset::Example3,
        Preset::AccuratePotential,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Example1 => "example1",
            Preset::Example2 => "example2",
            Preset::Example3 => "example3",
            Preset::AccuratePotential => "accurate-potential",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == name)
            .ok_or_else(|| Error::ConfigValue(format!("unknown preset '{name}'")))
    }

    pub fn text(self) -> &'static str {
        match self {
            Preset::Example1 => include_str!("../presets/example1.cfg"),
            Preset::Example2 => include_str!("../presets/example2.cfg"),
            Preset::Example3 => include_str!("../presets/example3.cfg"),
            Preset::AccuratePotential => include_str!("../presets/accurate-potential.cfg"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Outputs {
    pub fields: bool,
    pub history: bool,
    pub diagnostics: bool,
}

impl Default for Outputs {
    fn default() -> Self {
        Outputs {
            fields: true,
            history: true,
            diagnostics: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Problem geometry; the initial surface is loaded from `u0_path` at run
    /// time.
    pub problem: ProblemSpec,
    pub u0_path: Option<PathBuf>,
    pub params: SolverParams,
    /// Regularization; `None` selects the mass-scaled default.
    pub eps: Option<f64>,
    /// Cells along the short axis of the domain.
    pub resolution: usize,
    pub coarse_levels: usize,
    pub subsample: usize,
    /// Rings of cells next to the boundary that should stay free of sources;
    /// violations are reported as warnings.
    pub source_margin: usize,
    pub out_dir: PathBuf,
    pub outputs: Outputs,
    pub presets: Vec<Preset>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Block {
    Source,
    Sink,
    K,
}

#[derive(Debug, Clone)]
struct ShapeDraft {
    block: Block,
    line: usize,
    kind: Option<(String, usize)>,
    params: Option<(String, usize)>,
    value: Option<(String, usize)>,
}

/// Parsed but not yet validated configuration text.
#[derive(Debug, Clone, Default)]
struct Draft {
    keys: BTreeMap<&'static str, (String, usize)>,
    shapes: Vec<ShapeDraft>,
}

fn strip_comment(line: &str) -> &str {
    line.split('#').next().unwrap_or("").trim()
}

impl Draft {
    fn parse(text: &str) -> Result<Draft> {
        let mut draft = Draft::default();
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let body = strip_comment(raw);
            if body.is_empty() {
                continue;
            }
            if let Some(header) = body.strip_prefix('[') {
                let name = header.strip_suffix(']').ok_or_else(|| Error::Config {
                    line,
                    msg: format!("malformed header '{body}'"),
                })?;
                let block = match name.trim() {
                    "shape.source" => Block::Source,
                    "shape.sink" => Block::Sink,
                    "shape.k" => Block::K,
                    other => {
                        return Err(Error::Config {
                            line,
                            msg: format!("unknown section '[{other}]'"),
                        })
                    }
                };
                draft.shapes.push(ShapeDraft {
                    block,
                    line,
                    kind: None,
                    params: None,
                    value: None,
                });
                continue;
            }
            let (key, value) = body.split_once('=').ok_or_else(|| Error::Config {
                line,
                msg: format!("expected 'key = value', got '{body}'"),
            })?;
            let (key, value) = (key.trim(), value.trim().to_string());
            if value.is_empty() {
                return Err(Error::Config {
                    line,
                    msg: format!("missing value for '{key}'"),
                });
            }
            let entry = (value, line);
            if let Some(shape) = draft.shapes.last_mut() {
                let slot = match key {
                    "kind" => &mut shape.kind,
                    "params" => &mut shape.params,
                    "value" => &mut shape.value,
                    _ => {
                        return Err(Error::UnknownKey {
                            key: key.into(),
                            line,
                        })
                    }
                };
                if slot.is_some() {
                    return Err(Error::Config {
                        line,
                        msg: format!("duplicate key '{key}'"),
                    });
                }
                *slot = Some(entry);
            } else {
                let known =
                    TOP_KEYS
                        .iter()
                        .find(|k| **k == key)
                        .ok_or_else(|| Error::UnknownKey {
                            key: key.into(),
                            line,
                        })?;
                if draft.keys.insert(known, entry).is_some() {
                    return Err(Error::Config {
                        line,
                        msg: format!("duplicate key '{key}'"),
                    });
                }
            }
        }
        Ok(draft)
    }

    /// `self` with the keys of `top` overriding and its shapes appended.
    fn overlay(mut self, top: Draft) -> Draft {
        self.keys.extend(top.keys);
        self.shapes.extend(top.shapes);
        self
    }
}

fn parse_num(text: &str, line: usize, what: &str) -> Result<f64> {
    text.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Config {
            line,
            msg: format!("{what}: expected a finite number, got '{}'", text.trim()),
        })
}

fn parse_list(text: &str, line: usize, what: &str) -> Result<Vec<f64>> {
    text.split(',').map(|t| parse_num(t, line, what)).collect()
}

fn parse_count(text: &str, line: usize, what: &str) -> Result<usize> {
    text.trim().parse::<usize>().map_err(|_| Error::Config {
        line,
        msg: format!(
            "{what}: expected a non-negative integer, got '{}'",
            text.trim()
        ),
    })
}

fn parse_bool(text: &str, line: usize, what: &str) -> Result<bool> {
    match text.trim() {
        "true" | "yes" | "on" => Ok(true),
        "false" | "no" | "off" => Ok(false),
        other => Err(Error::Config {
            line,
            msg: format!("{what}: expected true or false, got '{other}'"),
        }),
    }
}

fn build_shape(draft: &ShapeDraft) -> Result<ShapeSpec> {
    let at = |line: usize, e: Error| match e {
        Error::InvalidShape(msg) => Error::Config { line, msg },
        other => other,
    };
    let (kind, kind_line) = draft.kind.clone().ok_or_else(|| Error::Config {
        line: draft.line,
        msg: "shape block without 'kind'".into(),
    })?;
    let (params, params_line) = draft.params.clone().ok_or_else(|| Error::Config {
        line: draft.line,
        msg: "shape block without 'params'".into(),
    })?;
    let p = parse_list(&params, params_line, "params")?;
    let value = match (&draft.value, draft.block) {
        (None, _) => 1.0,
        (Some((v, _)), Block::K) if v.trim() == "obstacle" => OBSTACLE_K,
        (Some((v, line)), _) => parse_num(v, *line, "value")?,
    };
    let value_line = draft.value.as_ref().map_or(draft.line, |v| v.1);
    let value = match draft.block {
        Block::Source | Block::K => value,
        Block::Sink => -value,
    };
    if draft.block != Block::K && !(value != 0.0) {
        return Err(Error::Config {
            line: value_line,
            msg: "source and sink values must be non-zero".into(),
        });
    }
    if draft.block != Block::K
        && draft.value.is_some()
        && (value > 0.0) != (draft.block == Block::Source)
    {
        return Err(Error::Config {
            line: value_line,
            msg: "give sink densities as positive numbers".into(),
        });
    }
    if draft.block == Block::K && !(value > 0.0) {
        return Err(Error::Config {
            line: value_line,
            msg: format!("k must be positive, got {value}"),
        });
    }
    let arity = |allowed: &[usize]| {
        if allowed.contains(&p.len()) {
            Ok(())
        } else {
            Err(Error::Config {
                line: params_line,
                msg: format!("{kind} takes {allowed:?} parameters, got {}", p.len()),
            })
        }
    };
    let shape = match kind.as_str() {
        "rectangle" => {
            arity(&[4, 5])?;
            let angle = p.get(4).copied().unwrap_or(0.0).to_radians();
            let (x0, x1) = (p[0].min(p[2]), p[0].max(p[2]));
            let (y0, y1) = (p[1].min(p[3]), p[1].max(p[3]));
            ShapeSpec::rectangle(
                (0.5 * (x0 + x1), 0.5 * (y0 + y1)),
                0.5 * (x1 - x0),
                0.5 * (y1 - y0),
                angle,
                value,
            )
        }
        "ellipse" => {
            arity(&[4, 5])?;
            let angle = p.get(4).copied().unwrap_or(0.0).to_radians();
            ShapeSpec::ellipse((p[0], p[1]), p[2], p[3], angle, value)
        }
        "disk" => {
            arity(&[3])?;
            ShapeSpec::disk((p[0], p[1]), p[2], value)
        }
        "polygon" => {
            if p.len() < 6 || p.len() % 2 != 0 {
                return Err(Error::Config {
                    line: params_line,
                    msg: format!(
                        "polygon needs an even number (≥ 6) of coordinates, got {}",
                        p.len()
                    ),
                });
            }
            ShapeSpec::polygon(p.chunks(2).map(|c| (c[0], c[1])).collect(), value)
        }
        "point" => {
            arity(&[2])?;
            if draft.block == Block::K {
                return Err(Error::Config {
                    line: kind_line,
                    msg: "a k-region cannot be a point".into(),
                });
            }
            ShapeSpec::point((p[0], p[1]), value)
        }
        other => {
            return Err(Error::Config {
                line: kind_line,
                msg: format!("unknown shape kind '{other}'"),
            })
        }
    };
    shape.map_err(|e| at(params_line, e))
}

/// Parses and validates a configuration, applying any preset it names
/// before its own keys.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    parse_with_presets(text, &[])
}

/// Like [`parse_config`], with `presets` applied first (in order) as base
/// layers.
pub fn parse_with_presets(text: &str, presets: &[Preset]) -> Result<RunConfig> {
    parse_layered(text, presets, &[])
}

/// Like [`parse_with_presets`], with `overlays` applied after `text` so that
/// their keys win.
pub fn parse_layered(text: &str, presets: &[Preset], overlays: &[Preset]) -> Result<RunConfig> {
    let user = Draft::parse(text)?;
    let mut chain: Vec<Preset> = presets.to_vec();
    if let Some((name, line)) = user.keys.get("preset") {
        for name in name.split(',') {
            let p = Preset::from_name(name.trim()).map_err(|_| Error::Config {
                line: *line,
                msg: format!("unknown preset '{}'", name.trim()),
            })?;
            if !chain.contains(&p) {
                chain.push(p);
            }
        }
    }
    let mut draft = Draft::default();
    for p in &chain {
        draft = draft.overlay(Draft::parse(p.text())?);
    }
    draft = draft.overlay(user);
    for p in overlays {
        draft = draft.overlay(Draft::parse(p.text())?);
        if !chain.contains(p) {
            chain.push(*p);
        }
    }
    let mut config = finish(draft)?;
    config.presets = chain;
    Ok(config)
}

fn finish(draft: Draft) -> Result<RunConfig> {
    let keys = &draft.keys;
    let get = |k: &str| keys.get(k).map(|(v, l)| (v.as_str(), *l));

    let (domain_text, domain_line) =
        get("domain").ok_or_else(|| Error::ConfigValue("missing required key 'domain'".into()))?;
    let d = parse_list(domain_text, domain_line, "domain")?;
    if d.len() != 4 || !(d[2] > d[0] && d[3] > d[1]) {
        return Err(Error::Config {
            line: domain_line,
            msg: format!(
                "domain must be 'x0, y0, x1, y1' with x1 > x0 and y1 > y0, got '{domain_text}'"
            ),
        });
    }
    let mut problem = ProblemSpec::new([d[0], d[1], d[2], d[3]]);
    if let Some((v, l)) = get("k_base") {
        problem.k_base = parse_num(v, l, "k_base")?;
        if !(problem.k_base > 0.0) {
            return Err(Error::Config {
                line: l,
                msg: format!("k_base must be positive, got {}", problem.k_base),
            });
        }
    }
    for shape in &draft.shapes {
        let spec = build_shape(shape)?;
        match shape.block {
            Block::Source | Block::Sink => problem.sources.push(spec),
            Block::K => problem.k_regions.push(spec),
        }
    }
    problem.validate()?;

    let short = (d[2] - d[0]).min(d[3] - d[1]);
    let resolution = match (get("resolution"), get("h")) {
        (Some(_), Some((_, l))) => {
            return Err(Error::Config {
                line: l,
                msg: "give either 'resolution' or 'h', not both".into(),
            })
        }
        (Some((v, l)), None) => (parse_count(v, l, "resolution")?, l),
        (None, Some((v, l))) => {
            let h = parse_num(v, l, "h")?;
            if !(h > 0.0) {
                return Err(Error::Config {
                    line: l,
                    msg: format!("h must be positive, got {h}"),
                });
            }
            ((short / h - 1e-9).ceil() as usize, l)
        }
        (None, None) => (96, 0),
    };
    if resolution.0 < MIN_RESOLUTION {
        return Err(Error::Config {
            line: resolution.1,
            msg: format!(
                "resolution must be at least {MIN_RESOLUTION} cells on the short axis, got {}",
                resolution.0
            ),
        });
    }

    let mut params = SolverParams::default();
    let real = |k: &str, slot: &mut f64| -> Result<()> {
        if let Some((v, l)) = get(k) {
            *slot = parse_num(v, l, k)?;
        }
        Ok(())
    };
    let count = |k: &str, slot: &mut usize| -> Result<()> {
        if let Some((v, l)) = get(k) {
            *slot = parse_count(v, l, k)?;
        }
        Ok(())
    };
    let flag = |k: &str, slot: &mut bool| -> Result<()> {
        if let Some((v, l)) = get(k) {
            *slot = parse_bool(v, l, k)?;
        }
        Ok(())
    };
    real("dt", &mut params.dt)?;
    real("omega", &mut params.omega)?;
    real("tol_stationary", &mut params.tol_stationary)?;
    count("sweeps_per_step", &mut params.sweeps_per_step)?;
    count("newton_iters", &mut params.newton_iters)?;
    count("stationary_patience", &mut params.stationary_patience)?;
    count("max_steps", &mut params.max_steps)?;
    if let Some((v, l)) = get("sweep_order") {
        params.sweep_order = match v {
            "lexicographic" => SweepOrder::Lexicographic,
            "symmetric" => SweepOrder::Symmetric,
            other => {
                return Err(Error::Config {
                    line: l,
                    msg: format!("sweep_order must be lexicographic or symmetric, got '{other}'"),
                })
            }
        };
    }
    let eps = match get("eps") {
        Some((v, l)) => {
            let e = parse_num(v, l, "eps")?;
            params.eps = e;
            Some(e)
        }
        None => None,
    };
    params.validate()?;

    let mut coarse_levels = 3;
    let mut subsample = DEFAULT_SUBSAMPLE;
    let mut source_margin = 1;
    count("coarse_levels", &mut coarse_levels)?;
    count("subsample", &mut subsample)?;
    count("source_margin", &mut source_margin)?;
    if subsample == 0 {
        return Err(Error::ConfigValue("subsample must be at least 1".into()));
    }
    let mut outputs = Outputs::default();
    flag("write_fields", &mut outputs.fields)?;
    flag("write_history", &mut outputs.history)?;
    flag("write_diagnostics", &mut outputs.diagnostics)?;

    Ok(RunConfig {
        problem,
        u0_path: get("u0").map(|(v, _)| PathBuf::from(v)),
        params,
        eps,
        resolution: resolution.0,
        coarse_levels,
        subsample,
        source_margin,
        out_dir: get("out").map_or_else(|| PathBuf::from("out"), |(v, _)| PathBuf::from(v)),
        outputs,
        presets: Vec::new(),
    })
}
