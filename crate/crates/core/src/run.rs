//! End-to-end pipeline from a [`RunConfig`] to a traced path and its report.

use serde::Serialize;
use thiserror::Error;

use crate::analysis::{
    constant_force_range, torsional_stiffness, ConstantForceReport, DEFAULT_BAND, DEFAULT_BASELINE, DEFAULT_TWIST_WINDOW,
};
use crate::geometry::{
    derive_panel_geometry_with, sector_angles, validate_foldability, FoldabilityReport, GeometryError, PanelGeometry,
};
use crate::io::{ConfigError, RunConfig, Structure};
use crate::mesh::{assemble_module, triangulate_panel_with, BarHingeModel, MeshError};
use crate::solver::{
    prepare_imperfect, run_compression_detailed, run_torsion, EquilibriumPath, LoadKind, PathStatus, SolverError,
    Symmetry,
};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

impl RunError {
    /// 1 for bad input, 2 for a solver failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Solver(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Built {
    pub geometry: PanelGeometry,
    pub panel: BarHingeModel,
    /// The panel itself or the four-panel module, per the config.
    pub model: BarHingeModel,
    pub foldability: FoldabilityReport,
}

pub fn build(cfg: &RunConfig) -> Result<Built, RunError> {
    let geometry = derive_panel_geometry_with(&cfg.params, &cfg.geometry)?;
    let foldability = validate_foldability(&sector_angles(&geometry));
    let panel = triangulate_panel_with(&geometry, &cfg.mesh)?;
    let model = match cfg.structure {
        Structure::Panel => panel.clone(),
        Structure::Module { radius } => assemble_module(&panel, radius)?.model,
    };
    Ok(Built { geometry, panel, model, foldability })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModeSummary {
    pub eigenvalue: f64,
    pub symmetry: Symmetry,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub preset: Option<String>,
    pub kind: LoadKind,
    pub status: PathStatus,
    pub steps: usize,
    pub samples: usize,
    pub flagged_samples: usize,
    pub imperfection_mode: Option<ModeSummary>,
    pub constant_force: Option<ConstantForceReport>,
    /// Why no constant-force report could be produced.
    pub constant_force_note: Option<String>,
    /// N m / deg over the first 3 degrees.
    pub torsional_stiffness: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub built: Built,
    /// The seeded model the path was traced on.
    pub seeded: BarHingeModel,
    pub path: EquilibriumPath,
    pub report: SimulationReport,
}

pub fn summarize(cfg: &RunConfig, path: &EquilibriumPath, mode: Option<ModeSummary>) -> SimulationReport {
    let mut report = SimulationReport {
        preset: cfg.preset.clone(),
        kind: path.kind,
        status: path.status.clone(),
        steps: path.steps,
        samples: path.samples.len(),
        flagged_samples: path.samples.iter().filter(|s| s.flagged).count(),
        imperfection_mode: mode,
        constant_force: None,
        constant_force_note: None,
        torsional_stiffness: None,
    };
    match path.kind {
        LoadKind::Compression => match constant_force_range(path, DEFAULT_BASELINE, DEFAULT_BAND) {
            Ok(r) => report.constant_force = Some(r),
            Err(e) => report.constant_force_note = Some(e.to_string()),
        },
        LoadKind::Torsion => report.torsional_stiffness = torsional_stiffness(path, DEFAULT_TWIST_WINDOW).ok(),
    }
    report
}

/// Builds the model and traces the configured load case. A solver failure
/// that still produced samples is returned inside `RunError::Solver` as
/// `SolverError::StepCollapse { path, .. }`.
pub fn simulate(cfg: &RunConfig) -> Result<Simulation, RunError> {
    let built = build(cfg)?;
    let (seeded, path, mode) = match cfg.load.kind {
        LoadKind::Compression => {
            let run = run_compression_detailed(&built.model, &cfg.load)?;
            let mode = run.mode.map(|m| ModeSummary { eigenvalue: m.eigenvalue, symmetry: m.symmetry });
            (run.model, run.path, mode)
        }
        LoadKind::Torsion => {
            let (seeded, mode) = prepare_imperfect(&built.model, &cfg.load)?;
            let path = run_torsion(&built.model, &cfg.load)?;
            (seeded, path, mode.map(|m| ModeSummary { eigenvalue: m.eigenvalue, symmetry: m.symmetry }))
        }
    };
    let report = summarize(cfg, &path, mode);
    Ok(Simulation { built, seeded, path, report })
}
