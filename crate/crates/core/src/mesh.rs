//! Bar-and-hinge discretisation of panels and four-panel modules.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{Rotation3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GeometryError, PanelGeometry, PanelParams, Vec3};
use crate::mechanics::{hinge_angle, MechanicsError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Mechanics(#[from] MechanicsError),
    #[error("invalid radius {radius} mm: {reason}")]
    InvalidRadius { radius: f64, reason: String },
    #[error("invalid scale ratio {0}")]
    InvalidScale(f64),
    #[error("invalid mesh option `{0}`")]
    InvalidOption(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HingeKind {
    Crease,
    Facet,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bar {
    pub i: usize,
    pub j: usize,
    /// Axial rigidity in N.
    pub ea: f64,
    pub rest_length: f64,
}

/// Rotational spring about the edge `nodes[1]-nodes[2]`; `nodes[0]` and
/// `nodes[3]` are the wing tips of the two triangles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hinge {
    pub nodes: [usize; 4],
    /// N mm / rad.
    pub k: f64,
    pub rest_angle: f64,
    pub kind: HingeKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RigidGroup {
    pub name: String,
    pub nodes: Vec<usize>,
    /// Reference point of the frame (rotation centre).
    pub origin: Vec3,
}

/// Reflection that maps the model onto itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MirrorMap {
    /// `perm[i]` is the node that `i` is reflected onto.
    pub perm: Vec<usize>,
    pub normal: Vec3,
    pub point: Vec3,
}

impl MirrorMap {
    pub fn reflect_vector(&self, v: &Vec3) -> Vec3 {
        v - 2.0 * v.dot(&self.normal) * self.normal
    }

    pub fn reflect_point(&self, p: &Vec3) -> Vec3 {
        self.point + self.reflect_vector(&(p - self.point))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarHingeModel {
    pub nodes: Vec<Vec3>,
    pub bars: Vec<Bar>,
    pub hinges: Vec<Hinge>,
    pub triangles: Vec<[usize; 3]>,
    pub rigid_groups: Vec<RigidGroup>,
    /// Node ranges belonging to each panel copy.
    pub panels: Vec<std::ops::Range<usize>>,
    pub labels: Vec<String>,
    pub mirror: Option<MirrorMap>,
    pub provenance: PanelParams,
}

impl BarHingeModel {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.nodes.len() as i64 - self.bars.len() as i64 + self.triangles.len() as i64
    }

    pub fn group(&self, name: &str) -> Option<usize> {
        self.rigid_groups.iter().position(|g| g.name == name)
    }

    pub fn total_bar_length(&self) -> f64 {
        self.bars.iter().map(|b| (self.nodes[b.j] - self.nodes[b.i]).norm()).sum()
    }

    /// Height of the structure along z.
    pub fn height(&self) -> f64 {
        self.provenance.h0
    }

    /// Copy of the model with rest lengths and angles taken from `nodes`.
    pub fn with_reference(&self, nodes: Vec<Vec3>) -> Result<Self, MechanicsError> {
        let mut out = self.clone();
        out.nodes = nodes;
        for b in &mut out.bars {
            b.rest_length = (out.nodes[b.j] - out.nodes[b.i]).norm();
        }
        for h in &mut out.hinges {
            let p = h.nodes.map(|i| out.nodes[i]);
            h.rest_angle = hinge_angle(&p)?;
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshOptions {
    /// Calibration factor on bar axial rigidity.
    pub c_ea: f64,
    /// Width of the thinned crease strip, mm.
    pub crease_width: f64,
    /// Calibration factor on crease rotational stiffness.
    pub c_hinge: f64,
}

impl Default for MeshOptions {
    fn default() -> Self {
        Self { c_ea: 1.0, crease_width: 2.8, c_hinge: 1.0 }
    }
}

impl MeshOptions {
    pub fn validate(&self) -> Result<(), MeshError> {
        if !(self.c_ea > 0.0 && self.c_ea.is_finite()) {
            return Err(MeshError::InvalidOption("c_ea"));
        }
        if !(self.crease_width > 0.0 && self.crease_width.is_finite()) {
            return Err(MeshError::InvalidOption("w_c"));
        }
        if !(self.c_hinge > 0.0 && self.c_hinge.is_finite()) {
            return Err(MeshError::InvalidOption("c_hinge"));
        }
        Ok(())
    }
}

// canonical node order A, A1, B, B1, C, C1, O, M, N
const A: usize = 0;
const A1: usize = 1;
const B: usize = 2;
const B1: usize = 3;
const C: usize = 4;
const C1: usize = 5;
const O: usize = 6;
const M: usize = 7;
const N: usize = 8;
/// Boundary loop of a panel, counter-clockwise seen from outside.
pub const RING: [usize; 8] = [A, C, B, N, B1, C1, A1, M];
const PANEL_MIRROR: [usize; 9] = [A1, A, B1, B, C1, C, O, M, N];

fn triangle_area(p: &[Vec3], t: [usize; 3]) -> f64 {
    0.5 * (p[t[1]] - p[t[0]]).cross(&(p[t[2]] - p[t[0]])).norm()
}

pub fn triangulate_panel(geom: &PanelGeometry) -> Result<BarHingeModel, MeshError> {
    triangulate_panel_with(geom, &MeshOptions::default())
}

pub fn triangulate_panel_with(geom: &PanelGeometry, opts: &MeshOptions) -> Result<BarHingeModel, MeshError> {
    opts.validate()?;
    let params = &geom.params;
    params.validate()?;
    let nodes: Vec<Vec3> = geom.vertices.to_array().to_vec();

    let triangles: Vec<[usize; 3]> = (0..8).map(|k| [O, RING[k], RING[(k + 1) % 8]]).collect();
    for t in &triangles {
        if triangle_area(&nodes, *t) <= 1e-12 {
            return Err(GeometryError::DegenerateTriangle(format!("panel triangle {t:?}")).into());
        }
    }

    let mut edges: Vec<(usize, usize)> = Vec::with_capacity(16);
    for k in 0..8 {
        edges.push((O, RING[k]));
    }
    for k in 0..8 {
        edges.push((RING[k], RING[(k + 1) % 8]));
    }

    let bars = edges
        .iter()
        .map(|&(i, j)| {
            let len = (nodes[j] - nodes[i]).norm();
            let heights: f64 = triangles
                .iter()
                .filter(|t| t.contains(&i) && t.contains(&j))
                .map(|t| 2.0 * triangle_area(&nodes, *t) / len)
                .sum();
            let w_trib = 0.5 * heights;
            Bar { i, j, ea: opts.c_ea * params.material.e * params.t_f * w_trib, rest_length: len }
        })
        .collect();

    let rigidity = params.material.plate_rigidity(params.t_c);
    let mut hinges = Vec::with_capacity(8);
    for k in 0..8 {
        let prev = RING[(k + 7) % 8];
        let spoke = RING[k];
        let next = RING[(k + 1) % 8];
        let quad = [prev, O, spoke, next];
        let pts = quad.map(|i| nodes[i]);
        let len = (nodes[spoke] - nodes[O]).norm();
        hinges.push(Hinge {
            nodes: quad,
            k: opts.c_hinge * rigidity * len / opts.crease_width,
            rest_angle: hinge_angle(&pts)?,
            kind: HingeKind::Crease,
        });
    }

    let rigid_groups = vec![
        RigidGroup { name: "top".into(), nodes: vec![A, M, A1], origin: nodes[M] },
        RigidGroup { name: "bottom".into(), nodes: vec![B, N, B1], origin: nodes[N] },
    ];
    let labels = crate::geometry::LABELS.iter().map(|s| s.to_string()).collect();
    Ok(BarHingeModel {
        nodes,
        bars,
        hinges,
        triangles,
        rigid_groups,
        panels: vec![0..9],
        labels,
        mirror: Some(MirrorMap {
            perm: PANEL_MIRROR.to_vec(),
            normal: Vector3::y(),
            point: Vec3::zeros(),
        }),
        provenance: *params,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModuleModel {
    pub model: BarHingeModel,
    pub radius: f64,
    pub top: usize,
    pub bottom: usize,
}

pub const MODULE_PANELS: usize = 4;

/// Four copies of a single-panel model arrayed at 90 degrees between two
/// rigid disks. The panel's bottom midpoint sits `radius` from the axis.
pub fn assemble_module(panel: &BarHingeModel, radius: f64) -> Result<ModuleModel, MeshError> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(MeshError::InvalidRadius { radius, reason: "must be positive".into() });
    }
    if panel.panels.len() != 1 {
        return Err(MeshError::InvalidOption("panel"));
    }
    let top_g = panel.group("top").ok_or(MeshError::InvalidOption("panel top group"))?;
    let bot_g = panel.group("bottom").ok_or(MeshError::InvalidOption("panel bottom group"))?;
    let h0 = panel.provenance.h0;
    let n_ref = panel.rigid_groups[bot_g].origin;
    let shift = Vec3::new(radius, 0.0, 0.0) - n_ref;
    let nv = panel.nodes.len();

    let mut model = BarHingeModel {
        nodes: Vec::with_capacity(nv * MODULE_PANELS),
        bars: Vec::new(),
        hinges: Vec::new(),
        triangles: Vec::new(),
        rigid_groups: vec![
            RigidGroup { name: "top".into(), nodes: vec![], origin: Vec3::new(0.0, 0.0, h0) },
            RigidGroup { name: "bottom".into(), nodes: vec![], origin: Vec3::zeros() },
        ],
        panels: Vec::new(),
        labels: Vec::new(),
        mirror: None,
        provenance: panel.provenance,
    };

    for p in 0..MODULE_PANELS {
        let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), p as f64 * FRAC_PI_2);
        let off = p * nv;
        model.nodes.extend(panel.nodes.iter().map(|x| rot * (x + shift)));
        model.bars.extend(panel.bars.iter().map(|b| Bar { i: b.i + off, j: b.j + off, ..*b }));
        model.hinges.extend(panel.hinges.iter().map(|h| Hinge { nodes: h.nodes.map(|i| i + off), ..*h }));
        model.triangles.extend(panel.triangles.iter().map(|t| t.map(|i| i + off)));
        model.rigid_groups[0].nodes.extend(panel.rigid_groups[top_g].nodes.iter().map(|i| i + off));
        model.rigid_groups[1].nodes.extend(panel.rigid_groups[bot_g].nodes.iter().map(|i| i + off));
        model.labels.extend(panel.labels.iter().map(|l| format!("P{p}.{l}")));
        model.panels.push(off..off + nv);
    }

    if let Some(mirror) = &panel.mirror {
        let mut perm = vec![0; nv * MODULE_PANELS];
        for p in 0..MODULE_PANELS {
            let q = (MODULE_PANELS - p) % MODULE_PANELS;
            for k in 0..nv {
                perm[p * nv + k] = q * nv + mirror.perm[k];
            }
        }
        model.mirror = Some(MirrorMap { perm, normal: Vector3::y(), point: Vec3::zeros() });
    }

    if let Some((a, b)) = overlapping_panels(&model) {
        return Err(MeshError::InvalidRadius {
            radius,
            reason: format!("panels {a} and {b} overlap"),
        });
    }
    Ok(ModuleModel { model, radius, top: 0, bottom: 1 })
}

fn triangle_box(p: &[Vec3], t: &[usize; 3]) -> (Vec3, Vec3) {
    let mut lo = p[t[0]];
    let mut hi = p[t[0]];
    for &i in &t[1..] {
        lo = lo.inf(&p[i]);
        hi = hi.sup(&p[i]);
    }
    (lo, hi)
}

/// Pairs of panels whose facet bounding boxes intersect with positive depth.
/// Boxes touching within 1e-6 mm (shared corners) do not count.
pub fn overlapping_panels(model: &BarHingeModel) -> Option<(usize, usize)> {
    let tri_panel = |t: &[usize; 3]| model.panels.iter().position(|r| r.contains(&t[0])).unwrap_or(0);
    let boxes: Vec<(usize, (Vec3, Vec3))> =
        model.triangles.iter().map(|t| (tri_panel(t), triangle_box(&model.nodes, t))).collect();
    for (i, (pi, bi)) in boxes.iter().enumerate() {
        for (pj, bj) in &boxes[i + 1..] {
            if pi == pj {
                continue;
            }
            let depth = (bi.1.inf(&bj.1) - bi.0.sup(&bj.0)).min();
            if depth > 1e-6 {
                return Some((*pi.min(pj), *pi.max(pj)));
            }
        }
    }
    None
}

/// Scale planar dimensions by `n`; thicknesses only when `thickness` is set.
pub fn scale_params(params: &PanelParams, n: f64, thickness: bool) -> Result<PanelParams, MeshError> {
    if !(n > 0.0 && n.is_finite()) {
        return Err(MeshError::InvalidScale(n));
    }
    let mut out = *params;
    out.l1 *= n;
    out.l2 *= n;
    out.h0 *= n;
    out.dist *= n;
    out.n *= n;
    if thickness {
        out.t_f *= n;
        out.t_c *= n;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::derive_panel_geometry;

    fn m6() -> BarHingeModel {
        triangulate_panel(&derive_panel_geometry(&PanelParams::default()).unwrap()).unwrap()
    }

    #[test]
    fn panel_topology() {
        let m = m6();
        assert_eq!((m.nodes.len(), m.bars.len(), m.triangles.len(), m.hinges.len()), (9, 16, 8, 8));
        assert_eq!(m.euler_characteristic(), 1);
        assert!(m.bars.iter().all(|b| b.ea > 0.0 && b.i != b.j));
    }

    #[test]
    fn hinge_triangles_share_the_edge() {
        let m = m6();
        for h in &m.hinges {
            let [a, e0, e1, b] = h.nodes;
            let has = |t: &[usize; 3], x: [usize; 3]| x.iter().all(|v| t.contains(v));
            assert!(m.triangles.iter().any(|t| has(t, [a, e0, e1])));
            assert!(m.triangles.iter().any(|t| has(t, [b, e0, e1])));
        }
    }

    #[test]
    fn module_has_four_panels() {
        let m = assemble_module(&m6(), 30.0).unwrap();
        assert_eq!(m.model.nodes.len(), 36);
        assert_eq!(m.model.triangles.len(), 32);
        assert_eq!(m.model.rigid_groups.len(), 2);
        assert_eq!(m.model.rigid_groups[0].nodes.len(), 12);
    }

    #[test]
    fn zero_radius_rejected() {
        assert!(matches!(assemble_module(&m6(), 0.0), Err(MeshError::InvalidRadius { .. })));
    }

    #[test]
    fn tiny_radius_overlaps() {
        assert!(matches!(assemble_module(&m6(), 5.0), Err(MeshError::InvalidRadius { .. })));
    }

    #[test]
    fn mirror_is_an_involution() {
        let m = assemble_module(&m6(), 30.0).unwrap().model;
        let mir = m.mirror.as_ref().unwrap();
        for (i, &j) in mir.perm.iter().enumerate() {
            assert_eq!(mir.perm[j], i);
            assert!((mir.reflect_point(&m.nodes[i]) - m.nodes[j]).norm() < 1e-9);
        }
    }

    #[test]
    fn scale_identity_and_errors() {
        let p = PanelParams::default();
        assert_eq!(scale_params(&p, 1.0, false).unwrap(), p);
        assert!((scale_params(&p, 0.6, false).unwrap().l1 - 30.0).abs() < 1e-12);
        assert!(matches!(scale_params(&p, 0.0, false), Err(MeshError::InvalidScale(_))));
    }
}
