//! File writers: equilibrium-path CSV, crease-pattern SVG, folded-mesh OBJ,
//! JSON reports and run manifests.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geometry::{PanelGeometry, Vec2, LABELS};
use crate::mesh::{triangulate_panel, BarHingeModel, MeshError, RING};
use crate::solver::{EquilibriumPath, LoadKind, PathSample};

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("equilibrium path has no samples")]
    EmptyPath,
    #[error("degenerate geometry: {0}")]
    Degenerate(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("malformed curve file, line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub const COMPRESSION_HEADER: &str = "strain,reaction_force_N,iterations,converged,flagged";
pub const TORSION_HEADER: &str = "twist_deg,torque_Nmm,iterations,converged,flagged";

/// The columns of one curve-file row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurveRow {
    pub control: f64,
    pub reaction: f64,
    pub iterations: usize,
    pub converged: bool,
    pub flagged: bool,
}

impl From<&PathSample> for CurveRow {
    fn from(s: &PathSample) -> Self {
        Self { control: s.control, reaction: s.reaction, iterations: s.iterations, converged: s.converged, flagged: s.flagged }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub kind: LoadKind,
    pub rows: Vec<CurveRow>,
}

impl Curve {
    pub fn controls(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.control).collect()
    }

    pub fn reactions(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.reaction).collect()
    }
}

pub fn curve_csv(path: &EquilibriumPath) -> Result<String, ExportError> {
    if path.samples.is_empty() {
        return Err(ExportError::EmptyPath);
    }
    let mut s = String::new();
    s.push_str(match path.kind {
        LoadKind::Compression => COMPRESSION_HEADER,
        LoadKind::Torsion => TORSION_HEADER,
    });
    s.push('\n');
    for p in &path.samples {
        // `{}` on f64 prints the shortest string that parses back exactly
        let _ = writeln!(s, "{},{},{},{},{}", p.control, p.reaction, p.iterations, p.converged, p.flagged);
    }
    Ok(s)
}

pub fn export_curve_csv(path: &EquilibriumPath, dest: &Path) -> Result<(), ExportError> {
    let text = curve_csv(path)?;
    fs::write(dest, text)?;
    Ok(())
}

pub fn parse_curve_csv(text: &str) -> Result<Curve, ExportError> {
    let bad = |line: usize, message: String| ExportError::Malformed { line, message };
    let mut lines = text.split('\n').enumerate();
    let kind = match lines.next().map(|(_, l)| l) {
        Some(COMPRESSION_HEADER) => LoadKind::Compression,
        Some(TORSION_HEADER) => LoadKind::Torsion,
        other => return Err(bad(1, format!("unrecognised header {other:?}"))),
    };
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(bad(i + 1, format!("expected 5 fields, found {}", f.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| bad(i + 1, format!("`{s}`: {e}")));
        let flag = |s: &str| s.parse::<bool>().map_err(|e| bad(i + 1, format!("`{s}`: {e}")));
        rows.push(CurveRow {
            control: num(f[0])?,
            reaction: num(f[1])?,
            iterations: f[2].parse().map_err(|e| bad(i + 1, format!("`{}`: {e}", f[2])))?,
            converged: flag(f[3])?,
            flagged: flag(f[4])?,
        });
    }
    if rows.is_empty() {
        return Err(ExportError::EmptyPath);
    }
    Ok(Curve { kind, rows })
}

pub fn read_curve_csv(src: &Path) -> Result<Curve, ExportError> {
    parse_curve_csv(&fs::read_to_string(src)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CreaseKind {
    Mountain,
    Valley,
}

/// Mountain or valley as seen from the outer face, from the rest dihedral.
pub fn crease_kind(rest_angle: f64) -> CreaseKind {
    if rest_angle - PI < 0.0 {
        CreaseKind::Mountain
    } else {
        CreaseKind::Valley
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CreaseLine {
    pub from: usize,
    pub to: usize,
    pub kind: CreaseKind,
}

/// The eight spoke creases of a panel with their fold sense.
pub fn crease_assignment(geom: &PanelGeometry) -> Result<Vec<CreaseLine>, ExportError> {
    let model = triangulate_panel(geom)?;
    Ok(model
        .hinges
        .iter()
        .map(|h| CreaseLine { from: h.nodes[1], to: h.nodes[2], kind: crease_kind(h.rest_angle) })
        .collect())
}

fn check_pattern(pts: &[Vec2; 9]) -> Result<(), ExportError> {
    if let Some((i, _)) = pts.iter().enumerate().find(|(_, p)| !(p.x.is_finite() && p.y.is_finite())) {
        return Err(ExportError::Degenerate(format!("vertex {} is not finite", LABELS[i])));
    }
    let o = pts[6];
    for k in 0..RING.len() {
        let (a, b) = (pts[RING[k]] - o, pts[RING[(k + 1) % RING.len()]] - o);
        let area = 0.5 * (a.x * b.y - a.y * b.x);
        if area.abs() < 1e-9 {
            return Err(ExportError::Degenerate(format!(
                "facet O-{}-{} has zero area",
                LABELS[RING[k]],
                LABELS[RING[(k + 1) % RING.len()]]
            )));
        }
    }
    Ok(())
}

pub fn crease_svg(geom: &PanelGeometry) -> Result<String, ExportError> {
    let pts = geom.developed.to_array();
    check_pattern(&pts)?;
    let creases = crease_assignment(geom)?;
    // SVG y runs downwards
    let q: Vec<(f64, f64)> = pts.iter().map(|p| (p.x, -p.y)).collect();
    let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &(x, y) in &q {
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    let (w, h) = (x1 - x0, y1 - y0);
    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}mm" height="{h}mm" viewBox="{x0} {y0} {w} {h}">"#
    );
    let line = |s: &mut String, a: usize, b: usize, class: &str, style: &str| {
        let _ = writeln!(
            s,
            r#"  <line class="{class}" data-from="{}" data-to="{}" x1="{}" y1="{}" x2="{}" y2="{}" {style}/>"#,
            LABELS[a], LABELS[b], q[a].0, q[a].1, q[b].0, q[b].1
        );
    };
    let _ = writeln!(s, r#"  <g id="boundary">"#);
    for k in 0..RING.len() {
        line(&mut s, RING[k], RING[(k + 1) % RING.len()], "boundary", r#"stroke="black" stroke-width="0.3" fill="none""#);
    }
    let _ = writeln!(s, "  </g>\n  <g id=\"creases\">");
    for c in &creases {
        match c.kind {
            CreaseKind::Mountain => line(&mut s, c.from, c.to, "mountain", r#"stroke="red" stroke-width="0.3""#),
            CreaseKind::Valley => {
                line(&mut s, c.from, c.to, "valley", r#"stroke="blue" stroke-width="0.3" stroke-dasharray="1.5 1""#)
            }
        }
    }
    let _ = writeln!(s, "  </g>\n</svg>");
    Ok(s)
}

/// Writes the developed crease pattern. Nothing is written on error.
pub fn export_crease_svg(geom: &PanelGeometry, dest: &Path) -> Result<(), ExportError> {
    let text = crease_svg(geom)?;
    fs::write(dest, text)?;
    Ok(())
}

pub fn mesh_obj(model: &BarHingeModel) -> String {
    let mut s = String::from("# units: mm\n");
    for (k, range) in model.panels.iter().enumerate() {
        let _ = writeln!(s, "o panel_{k}");
        for p in &model.nodes[range.clone()] {
            let _ = writeln!(s, "v {} {} {}", p.x, p.y, p.z);
        }
        for t in model.triangles.iter().filter(|t| range.contains(&t[0])) {
            let _ = writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
        }
    }
    s
}

pub fn export_mesh_obj(model: &BarHingeModel, dest: &Path) -> Result<(), ExportError> {
    fs::write(dest, mesh_obj(model))?;
    Ok(())
}

pub fn write_json<T: Serialize>(value: &T, dest: &Path) -> Result<(), ExportError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(dest, text)?;
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputRecord {
    pub name: String,
    pub sha256: String,
}

/// Provenance of one run, written beside its outputs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Fully expanded configuration.
    pub config: String,
    pub config_sha256: String,
    pub inputs: Vec<InputRecord>,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, config_text: String) -> Self {
        Self {
            tool: "waterbomb".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config_sha256: sha256_hex(config_text.as_bytes()),
            config: config_text,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn add_input(&mut self, name: &str, bytes: &[u8]) {
        self.inputs.push(InputRecord { name: name.into(), sha256: sha256_hex(bytes) });
    }
}
