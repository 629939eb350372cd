//! Run configuration in a flat `key = value` format with `[section]` headers.
//!
//! ```text
//! preset = M6
//!
//! [panel]
//! t_c = 0.68        # mm
//! alpha = 6         # degrees
//!
//! [load]
//! kind = compression
//! target = 0.6
//! ```
//!
//! Sections are `panel`, `model`, `load`, `solver` and `output`. A `preset`
//! line may appear before the first section or inside `[panel]`; explicit
//! keys override the preset wherever they appear. `#` starts a comment.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use serde::Serialize;
use thiserror::Error;

use super::presets::{preset, preset_names, MODULE_RADIUS};
use crate::geometry::{CPlacement, GeometryBranch, GeometryError, GeometryOptions, PanelParams};
use crate::mechanics::StrainMeasure;
use crate::mesh::MeshOptions;
use crate::solver::{LoadCase, LoadKind, ModeFilter, StepPolicy};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid `{key}`: {message}")]
    Validation { key: String, message: String },
}

fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Validation { key: key.to_string(), message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Structure {
    Panel,
    Module { radius: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Format {
    Csv,
    Svg,
    Obj,
    Json,
}

impl Format {
    pub const ALL: [Format; 4] = [Format::Csv, Format::Svg, Format::Obj, Format::Json];

    pub fn name(&self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Svg => "svg",
            Format::Obj => "obj",
            Format::Json => "json",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputSpec {
    pub dir: Option<PathBuf>,
    pub formats: Vec<Format>,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { dir: None, formats: Format::ALL.to_vec() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub preset: Option<String>,
    pub params: PanelParams,
    pub geometry: GeometryOptions,
    pub mesh: MeshOptions,
    pub structure: Structure,
    pub load: LoadCase,
    pub output: OutputSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            preset: None,
            params: PanelParams::default(),
            geometry: GeometryOptions::default(),
            mesh: MeshOptions::default(),
            structure: Structure::Panel,
            load: LoadCase::compression(0.6),
            output: OutputSpec::default(),
        }
    }
}

const KEYS: &[(&str, &[&str])] = &[
    ("", &["preset"]),
    ("panel", &["preset", "l1", "l2", "H0", "t_f", "t_c", "dist", "alpha", "n", "E", "nu"]),
    ("model", &["branch", "c_placement", "c_EA", "w_c", "c_hinge", "strain", "structure", "radius"]),
    (
        "load",
        &["kind", "target", "pre_strain", "mode", "xi", "mode_filter", "preload", "arc_length"],
    ),
    ("solver", &["step_initial", "step_min", "step_max", "max_steps", "rel_tol", "abs_tol", "max_iter"]),
    ("output", &["dir", "formats"]),
];

struct Entry {
    value: String,
    line: usize,
}

fn tokenize(text: &str) -> Result<HashMap<String, Entry>, ConfigError> {
    let mut section = String::new();
    let mut out: HashMap<String, Entry> = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("");
        let trimmed = body.trim();
        if trimmed.is_empty() {
            continue;
        }
        let indent = body.len() - body.trim_start().len();
        let err = |column: usize, message: String| ConfigError::Parse { line, column, message };
        if let Some(rest) = trimmed.strip_prefix('[') {
            let Some(name) = rest.strip_suffix(']') else {
                return Err(err(indent + trimmed.len(), "unterminated section header".into()));
            };
            let name = name.trim();
            if !KEYS.iter().any(|(s, _)| !s.is_empty() && *s == name) {
                return Err(err(indent + 2, format!("unknown section `[{name}]`")));
            }
            section = name.to_string();
            continue;
        }
        let Some(eq) = body.find('=') else {
            return Err(err(indent + 1, "expected `key = value`".into()));
        };
        let key = body[..eq].trim();
        if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(err(indent + 1, format!("malformed key `{key}`")));
        }
        let mut value = body[eq + 1..].trim();
        if value.len() >= 2 && value.starts_with('"') && value.ends_with('"') {
            value = &value[1..value.len() - 1];
        }
        if value.is_empty() {
            return Err(err(eq + 2, format!("missing value for `{key}`")));
        }
        let allowed = KEYS.iter().find(|(s, _)| *s == section).map(|(_, k)| *k).unwrap_or(&[]);
        let full = if section.is_empty() { key.to_string() } else { format!("{section}.{key}") };
        if !allowed.contains(&key) {
            return Err(invalid(&full, format!("unknown key (line {line})")));
        }
        // a preset line is the same setting wherever it sits
        let full = if key == "preset" { "preset".to_string() } else { full };
        if let Some(prev) = out.get(&full) {
            return Err(invalid(&full, format!("set twice (lines {} and {line})", prev.line)));
        }
        out.insert(full, Entry { value: value.to_string(), line });
    }
    Ok(out)
}

struct Reader {
    entries: HashMap<String, Entry>,
}

impl Reader {
    fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|e| e.value.as_str())
    }

    fn num(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => match v.parse::<f64>() {
                Ok(x) if x.is_finite() => Ok(Some(x)),
                _ => Err(invalid(key, format!("expected a finite number, got `{v}`"))),
            },
        }
    }

    fn set(&self, key: &str, slot: &mut f64) -> Result<(), ConfigError> {
        if let Some(v) = self.num(key)? {
            *slot = v;
        }
        Ok(())
    }

    fn count(&self, key: &str, slot: &mut usize) -> Result<(), ConfigError> {
        if let Some(v) = self.raw(key) {
            *slot = v.parse().map_err(|_| invalid(key, format!("expected a non-negative integer, got `{v}`")))?;
        }
        Ok(())
    }

    fn choice<T: Copy>(&self, key: &str, options: &[(&str, T)], slot: &mut T) -> Result<(), ConfigError> {
        if let Some(v) = self.raw(key) {
            let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
            *slot = options
                .iter()
                .find(|(n, _)| n.eq_ignore_ascii_case(v))
                .map(|(_, t)| *t)
                .ok_or_else(|| invalid(key, format!("expected one of {}, got `{v}`", names.join("|"))))?;
        }
        Ok(())
    }
}

fn positive(key: &str, x: f64) -> Result<(), ConfigError> {
    if x > 0.0 {
        Ok(())
    } else {
        Err(invalid(key, format!("must be positive, got {x}")))
    }
}

fn geometry_error(e: GeometryError) -> ConfigError {
    match e {
        GeometryError::InvalidParams { field, reason } => invalid(&format!("panel.{field}"), reason),
        other => invalid("panel", other.to_string()),
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let r = Reader { entries: tokenize(text)? };
    let mut cfg = RunConfig::default();

    let mut needs_modulus = false;
    let mut radius = MODULE_RADIUS;
    if let Some(name) = r.raw("preset") {
        let p = preset(name).ok_or_else(|| {
            invalid("preset", format!("unknown preset `{name}`; known: {}", preset_names().join(", ")))
        })?;
        cfg.preset = Some(p.name.to_string());
        cfg.params = p.params;
        needs_modulus = p.needs_modulus;
        radius = p.radius;
    }

    let p = &mut cfg.params;
    r.set("panel.l1", &mut p.l1)?;
    r.set("panel.l2", &mut p.l2)?;
    r.set("panel.H0", &mut p.h0)?;
    r.set("panel.t_f", &mut p.t_f)?;
    r.set("panel.t_c", &mut p.t_c)?;
    r.set("panel.dist", &mut p.dist)?;
    r.set("panel.n", &mut p.n)?;
    r.set("panel.nu", &mut p.material.nu)?;
    if let Some(a) = r.num("panel.alpha")? {
        p.alpha = a.to_radians();
    }
    match r.num("panel.E")? {
        Some(e) => p.material.e = e,
        None if needs_modulus => {
            return Err(invalid(
                "panel.E",
                "the silicone modulus is not known; set `E` (MPa) in [panel] to run this preset",
            ))
        }
        None => {}
    }
    cfg.params.validate().map_err(geometry_error)?;

    r.choice(
        "model.branch",
        &[("exact", GeometryBranch::Exact), ("closed_form", GeometryBranch::ClosedForm)],
        &mut cfg.geometry.branch,
    )?;
    if let Some(v) = r.raw("model.c_placement") {
        cfg.geometry.c_placement = if v == "foot" {
            CPlacement::PerpendicularFoot
        } else {
            match v.parse::<f64>() {
                Ok(f) if f > 0.0 && f < 1.0 => CPlacement::EdgeFraction(f),
                _ => return Err(invalid("model.c_placement", format!("expected `foot` or a fraction in (0, 1), got `{v}`"))),
            }
        };
    }
    r.set("model.c_EA", &mut cfg.mesh.c_ea)?;
    r.set("model.w_c", &mut cfg.mesh.crease_width)?;
    r.set("model.c_hinge", &mut cfg.mesh.c_hinge)?;
    positive("model.c_EA", cfg.mesh.c_ea)?;
    positive("model.w_c", cfg.mesh.crease_width)?;
    positive("model.c_hinge", cfg.mesh.c_hinge)?;
    let mut strain = StrainMeasure::Engineering;
    r.choice(
        "model.strain",
        &[("engineering", StrainMeasure::Engineering), ("green", StrainMeasure::Green)],
        &mut strain,
    )?;
    let mut module = false;
    r.choice("model.structure", &[("panel", false), ("module", true)], &mut module)?;
    r.set("model.radius", &mut radius)?;
    positive("model.radius", radius)?;
    cfg.structure = if module { Structure::Module { radius } } else { Structure::Panel };

    let mut kind = LoadKind::Compression;
    r.choice("load.kind", &[("compression", LoadKind::Compression), ("torsion", LoadKind::Torsion)], &mut kind)?;
    let mut load = match kind {
        LoadKind::Compression => LoadCase::compression(0.6),
        LoadKind::Torsion => LoadCase::torsion(5.0, 0.0),
    };
    load.strain = strain;
    r.set("load.target", &mut load.target)?;
    r.set("load.pre_strain", &mut load.pre_strain)?;
    r.count("load.mode", &mut load.imperfection.mode)?;
    r.set("load.xi", &mut load.imperfection.xi)?;
    r.choice(
        "load.mode_filter",
        &[("any", ModeFilter::Any), ("symmetric", ModeFilter::Symmetric), ("antisymmetric", ModeFilter::Antisymmetric)],
        &mut load.imperfection.filter,
    )?;
    r.set("load.preload", &mut load.preload)?;
    r.choice("load.arc_length", &[("true", true), ("false", false)], &mut load.arc_length)?;
    if load.imperfection.mode == 0 {
        return Err(invalid("load.mode", "mode numbers start at 1"));
    }
    let s: &mut StepPolicy = &mut load.step;
    r.set("solver.step_initial", &mut s.initial)?;
    r.set("solver.step_min", &mut s.min)?;
    r.set("solver.step_max", &mut s.max)?;
    r.count("solver.max_steps", &mut s.max_steps)?;
    r.set("solver.rel_tol", &mut load.convergence.rel_tol)?;
    r.set("solver.abs_tol", &mut load.convergence.abs_tol)?;
    r.count("solver.max_iter", &mut load.convergence.max_iter)?;
    positive("solver.rel_tol", load.convergence.rel_tol)?;
    positive("solver.abs_tol", load.convergence.abs_tol)?;
    if load.convergence.max_iter == 0 {
        return Err(invalid("solver.max_iter", "must be positive"));
    }
    load.validate().map_err(|e| invalid("load", e.to_string()))?;
    cfg.load = load;

    if let Some(d) = r.raw("output.dir") {
        cfg.output.dir = Some(PathBuf::from(d));
    }
    if let Some(v) = r.raw("output.formats") {
        let mut formats = Vec::new();
        for f in v.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let f = Format::parse(f).ok_or_else(|| invalid("output.formats", format!("unknown format `{f}`")))?;
            if !formats.contains(&f) {
                formats.push(f);
            }
        }
        cfg.output.formats = formats;
    }
    Ok(cfg)
}

impl RunConfig {
    pub fn from_preset(name: &str) -> Result<Self, ConfigError> {
        parse_config(&format!("preset = {name}\n"))
    }

    /// Complete, canonical rendering that parses back to the same config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let p = &self.params;
        if let Some(name) = &self.preset {
            let _ = writeln!(s, "# expanded from preset {name}");
        }
        let _ = writeln!(s, "[panel]");
        for (k, v) in [
            ("l1", p.l1),
            ("l2", p.l2),
            ("H0", p.h0),
            ("t_f", p.t_f),
            ("t_c", p.t_c),
            ("dist", p.dist),
            ("alpha", p.alpha.to_degrees()),
            ("n", p.n),
            ("E", p.material.e),
            ("nu", p.material.nu),
        ] {
            let _ = writeln!(s, "{k} = {v}");
        }
        let _ = writeln!(s, "\n[model]");
        let branch = match self.geometry.branch {
            GeometryBranch::Exact => "exact",
            GeometryBranch::ClosedForm => "closed_form",
        };
        let _ = writeln!(s, "branch = {branch}");
        match self.geometry.c_placement {
            CPlacement::PerpendicularFoot => {
                let _ = writeln!(s, "c_placement = foot");
            }
            CPlacement::EdgeFraction(f) => {
                let _ = writeln!(s, "c_placement = {f}");
            }
        }
        let _ = writeln!(s, "c_EA = {}\nw_c = {}\nc_hinge = {}", self.mesh.c_ea, self.mesh.crease_width, self.mesh.c_hinge);
        let strain = match self.load.strain {
            StrainMeasure::Engineering => "engineering",
            StrainMeasure::Green => "green",
        };
        let _ = writeln!(s, "strain = {strain}");
        match self.structure {
            Structure::Panel => {
                let _ = writeln!(s, "structure = panel");
            }
            Structure::Module { radius } => {
                let _ = writeln!(s, "structure = module\nradius = {radius}");
            }
        }
        let l = &self.load;
        let kind = match l.kind {
            LoadKind::Compression => "compression",
            LoadKind::Torsion => "torsion",
        };
        let filter = match l.imperfection.filter {
            ModeFilter::Any => "any",
            ModeFilter::Symmetric => "symmetric",
            ModeFilter::Antisymmetric => "antisymmetric",
        };
        let _ = writeln!(
            s,
            "\n[load]\nkind = {kind}\ntarget = {}\npre_strain = {}\nmode = {}\nxi = {}\nmode_filter = {filter}\npreload = {}\narc_length = {}",
            l.target, l.pre_strain, l.imperfection.mode, l.imperfection.xi, l.preload, l.arc_length
        );
        let _ = writeln!(
            s,
            "\n[solver]\nstep_initial = {}\nstep_min = {}\nstep_max = {}\nmax_steps = {}\nrel_tol = {}\nabs_tol = {}\nmax_iter = {}",
            l.step.initial, l.step.min, l.step.max, l.step.max_steps, l.convergence.rel_tol, l.convergence.abs_tol, l.convergence.max_iter
        );
        let _ = writeln!(s, "\n[output]");
        if let Some(d) = &self.output.dir {
            let _ = writeln!(s, "dir = {}", d.display());
        }
        let formats: Vec<&str> = self.output.formats.iter().map(Format::name).collect();
        let _ = writeln!(s, "formats = {}", formats.join(","));
        s
    }
}
