//! Bar and hinge energies with exact gradients and Hessians, and assembly onto
//! reduced coordinates with rigid-frame slaving.

use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector, Matrix3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec3;
use crate::mesh::{Bar, BarHingeModel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MechanicsError {
    #[error("degenerate triangle at hinge {0}")]
    DegenerateTriangle(String),
    #[error("state has {got} coordinates, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid support: {0}")]
    InvalidSupport(String),
}

/// Facets closer than this fold angle (rad) are treated as interpenetrating.
pub const CONTACT_ANGLE: f64 = 5.0 * PI / 180.0;

const MIN_AREA: f64 = 1e-12;

fn skew(v: &Vec3) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Dihedral angle of the hinge `[wing_a, edge_0, edge_1, wing_b]` in `(0, 2pi)`;
/// `pi` when flat. Swapping the wings gives `2pi - angle`.
pub fn hinge_angle(p: &[Vec3; 4]) -> Result<f64, MechanicsError> {
    let e = p[2] - p[1];
    let a = p[0] - p[1];
    let b = p[3] - p[1];
    let na = e.cross(&a);
    let nb = e.cross(&b);
    if 0.5 * na.norm() <= MIN_AREA || 0.5 * nb.norm() <= MIN_AREA {
        return Err(MechanicsError::DegenerateTriangle(format!("{p:?}")));
    }
    let en = e.normalize();
    let y = en.dot(&a.cross(&b));
    let x = a.dot(&b) - a.dot(&en) * b.dot(&en);
    Ok(y.atan2(x).rem_euclid(TAU))
}

#[derive(Debug, Clone)]
pub struct HingeKinematics {
    pub angle: f64,
    pub grad: [Vec3; 4],
    /// `hess[i][j]` is the derivative of `grad[i]` with respect to node `j`.
    pub hess: Option<[[Matrix3<f64>; 4]; 4]>,
}

pub fn hinge_kinematics(p: &[Vec3; 4], hessian: bool) -> Result<HingeKinematics, MechanicsError> {
    let angle = hinge_angle(p)?;
    let e = p[2] - p[1];
    let a = p[0] - p[1];
    let b = p[3] - p[1];
    let s = e.norm();
    let s2 = s * s;
    let en = e / s;
    let na = e.cross(&a);
    let nb = e.cross(&b);
    let fa = na / na.norm_squared();
    let fb = nb / nb.norm_squared();
    let ga = -s * fa;
    let gb = s * fb;
    let ta = a.dot(&e) / s2;
    let tb = b.dot(&e) / s2;
    let g0 = -(1.0 - ta) * ga - (1.0 - tb) * gb;
    let g1 = -ta * ga - tb * gb;
    let grad = [ga, g0, g1, gb];
    if !hessian {
        return Ok(HingeKinematics { angle, grad, hess: None });
    }

    let jf = |n: &Vec3| {
        let q = n.norm_squared();
        (Matrix3::identity() - 2.0 * n * n.transpose() / q) / q
    };
    let (jfa, jfb) = (jf(&na), jf(&nb));
    let (sa, sb, se) = (skew(&a), skew(&b), skew(&e));
    let z = Matrix3::zeros();

    // derivatives of ga, gb with respect to nodes [wa, e0, e1, wb]
    let dga = [
        -s * jfa * se,
        fa * en.transpose() - s * jfa * (sa - se),
        -fa * en.transpose() + s * jfa * sa,
        z,
    ];
    let dgb = [
        z,
        -fb * en.transpose() + s * jfb * (sb - se),
        fb * en.transpose() - s * jfb * sb,
        s * jfb * se,
    ];
    let dt = |w: &Vec3, on_a: bool| {
        let dw = e / s2;
        let d1 = w / s2 - 2.0 * w.dot(&e) * e / (s2 * s2);
        let d0 = -(dw + d1);
        if on_a {
            [dw, d0, d1, Vec3::zeros()]
        } else {
            [Vec3::zeros(), d0, d1, dw]
        }
    };
    let dta = dt(&a, true);
    let dtb = dt(&b, false);

    let mut h = [[z; 4]; 4];
    for n in 0..4 {
        h[0][n] = dga[n];
        h[3][n] = dgb[n];
        h[1][n] = ga * dta[n].transpose() - (1.0 - ta) * dga[n] + gb * dtb[n].transpose() - (1.0 - tb) * dgb[n];
        h[2][n] = -ga * dta[n].transpose() - ta * dga[n] - gb * dtb[n].transpose() - tb * dgb[n];
    }
    for i in 0..4 {
        for j in i..4 {
            let avg = 0.5 * (h[i][j] + h[j][i].transpose());
            h[i][j] = avg;
            h[j][i] = avg.transpose();
        }
    }
    Ok(HingeKinematics { angle, grad, hess: Some(h) })
}

/// Difference `phi - phi0` wrapped into `(-pi, pi]`.
pub fn angle_offset(phi: f64, phi0: f64) -> f64 {
    let mut d = (phi - phi0).rem_euclid(TAU);
    if d > PI {
        d -= TAU;
    }
    d
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum StrainMeasure {
    /// `1/2 (EA/L0) (L - L0)^2`.
    #[default]
    Engineering,
    /// `1/2 EA L0 eps^2` with `eps = (L^2 - L0^2) / (2 L0^2)`.
    Green,
}

/// Energy and its first two derivatives with respect to the bar length.
pub fn bar_energy(bar: &Bar, len: f64, measure: StrainMeasure) -> (f64, f64, f64) {
    let l0 = bar.rest_length;
    match measure {
        StrainMeasure::Engineering => {
            let k = bar.ea / l0;
            let d = len - l0;
            (0.5 * k * d * d, k * d, k)
        }
        StrainMeasure::Green => {
            let eps = (len * len - l0 * l0) / (2.0 * l0 * l0);
            (
                0.5 * bar.ea * l0 * eps * eps,
                bar.ea * eps * len / l0,
                bar.ea / l0 * (eps + len * len / (l0 * l0)),
            )
        }
    }
}

/// Energy, gradient and Hessian with respect to all nodal coordinates.
#[derive(Debug, Clone)]
pub struct NodalEvaluation {
    pub energy: f64,
    pub gradient: DVector<f64>,
    pub hessian: Option<DMatrix<f64>>,
    /// Smallest fold angle between adjacent facets, rad.
    pub min_fold_angle: f64,
}

pub fn evaluate_nodes(
    model: &BarHingeModel,
    x: &[Vec3],
    measure: StrainMeasure,
    hessian: bool,
) -> Result<NodalEvaluation, MechanicsError> {
    let nd = 3 * x.len();
    let mut energy = 0.0;
    let mut g = DVector::zeros(nd);
    let mut kx = if hessian { Some(DMatrix::zeros(nd, nd)) } else { None };

    for bar in &model.bars {
        let d = x[bar.j] - x[bar.i];
        let len = d.norm();
        let (psi, dpsi, d2psi) = bar_energy(bar, len, measure);
        energy += psi;
        let u = d / len;
        let f = dpsi * u;
        for r in 0..3 {
            g[3 * bar.j + r] += f[r];
            g[3 * bar.i + r] -= f[r];
        }
        if let Some(k) = kx.as_mut() {
            let uu = u * u.transpose();
            let kb = d2psi * uu + (dpsi / len) * (Matrix3::identity() - uu);
            for (p, sp) in [(bar.i, -1.0), (bar.j, 1.0)] {
                for (q, sq) in [(bar.i, -1.0), (bar.j, 1.0)] {
                    let mut blk = k.fixed_view_mut::<3, 3>(3 * p, 3 * q);
                    blk += sp * sq * kb;
                }
            }
        }
    }

    let mut min_fold = PI;
    for (hi, hinge) in model.hinges.iter().enumerate() {
        let p = hinge.nodes.map(|i| x[i]);
        let kin = hinge_kinematics(&p, hessian)
            .map_err(|_| MechanicsError::DegenerateTriangle(format!("{hi}")))?;
        min_fold = min_fold.min(kin.angle.min(TAU - kin.angle));
        let dphi = angle_offset(kin.angle, hinge.rest_angle);
        energy += 0.5 * hinge.k * dphi * dphi;
        let m = hinge.k * dphi;
        for (a, &na) in hinge.nodes.iter().enumerate() {
            for r in 0..3 {
                g[3 * na + r] += m * kin.grad[a][r];
            }
        }
        if let (Some(k), Some(h)) = (kx.as_mut(), kin.hess.as_ref()) {
            for (a, &na) in hinge.nodes.iter().enumerate() {
                for (b, &nb) in hinge.nodes.iter().enumerate() {
                    let blk3 = hinge.k * kin.grad[a] * kin.grad[b].transpose() + m * h[a][b];
                    let mut blk = k.fixed_view_mut::<3, 3>(3 * na, 3 * nb);
                    blk += blk3;
                }
            }
        }
    }
    Ok(NodalEvaluation { energy, gradient: g, hessian: kx, min_fold_angle: min_fold })
}

/// Condition on one coordinate of a rigid frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Constraint {
    Free,
    /// Value `offset + rate * control`.
    Prescribed { offset: f64, rate: f64 },
}

impl Constraint {
    pub const FIXED: Constraint = Constraint::Prescribed { offset: 0.0, rate: 0.0 };
}

/// Frame coordinates: translations `tx, ty, tz` then rotations `rx, ry, rz`
/// (applied as `Rz * Ry * Rx`).
pub const TX: usize = 0;
pub const TY: usize = 1;
pub const TZ: usize = 2;
pub const RX: usize = 3;
pub const RY: usize = 4;
pub const RZ: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSupport {
    pub group: usize,
    pub dofs: [Constraint; 6],
}

impl FrameSupport {
    pub fn fixed(group: usize) -> Self {
        Self { group, dofs: [Constraint::FIXED; 6] }
    }

    pub fn free(group: usize) -> Self {
        Self { group, dofs: [Constraint::Free; 6] }
    }

    /// All coordinates fixed except `dof`, driven at unit rate.
    pub fn driven(group: usize, dof: usize, rate: f64) -> Self {
        let mut s = Self::fixed(group);
        s.dofs[dof] = Constraint::Prescribed { offset: 0.0, rate };
        s
    }
}

/// Boundary conditions. Rigid groups without an entry move as free frames;
/// with `rigid = false` every node is free and groups are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Supports {
    pub frames: Vec<FrameSupport>,
    pub rigid: bool,
}

impl Supports {
    pub fn none() -> Self {
        Self { frames: vec![], rigid: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Coord {
    Free(usize),
    Prescribed { offset: f64, rate: f64 },
}

#[derive(Debug, Clone, PartialEq)]
struct FrameDofs {
    origin: Vec3,
    members: Vec<usize>,
    coords: [Coord; 6],
}

/// Map from reduced coordinates (free node displacements and free frame
/// coordinates) plus the control parameter to nodal positions.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    node_dof: Vec<Option<usize>>,
    node_frame: Vec<Option<usize>>,
    frames: Vec<FrameDofs>,
    group_frame: Vec<Option<usize>>,
    n_free: usize,
}

impl DofMap {
    pub fn new(model: &BarHingeModel, supports: &Supports) -> Result<Self, MechanicsError> {
        let nn = model.nodes.len();
        let mut node_frame = vec![None; nn];
        let mut frames = Vec::new();
        let mut group_frame = vec![None; model.rigid_groups.len()];
        for s in &supports.frames {
            if s.group >= model.rigid_groups.len() {
                return Err(MechanicsError::InvalidSupport(format!("no rigid group {}", s.group)));
            }
        }
        if supports.rigid {
            for (gi, g) in model.rigid_groups.iter().enumerate() {
                let sup = supports.frames.iter().find(|s| s.group == gi);
                let dofs = sup.map(|s| s.dofs).unwrap_or([Constraint::Free; 6]);
                for &n in &g.nodes {
                    if node_frame[n].is_some() {
                        return Err(MechanicsError::InvalidSupport(format!("node {n} in two rigid groups")));
                    }
                    node_frame[n] = Some(frames.len());
                }
                group_frame[gi] = Some(frames.len());
                frames.push((g.origin, g.nodes.clone(), dofs));
            }
        }
        let mut n_free = 0;
        let mut node_dof = vec![None; nn];
        for i in 0..nn {
            if node_frame[i].is_none() {
                node_dof[i] = Some(n_free);
                n_free += 3;
            }
        }
        let frames = frames
            .into_iter()
            .map(|(origin, members, dofs)| {
                let coords = dofs.map(|c| match c {
                    Constraint::Free => {
                        n_free += 1;
                        Coord::Free(n_free - 1)
                    }
                    Constraint::Prescribed { offset, rate } => Coord::Prescribed { offset, rate },
                });
                FrameDofs { origin, members, coords }
            })
            .collect();
        Ok(Self { node_dof, node_frame, frames, group_frame, n_free })
    }

    pub fn n_free(&self) -> usize {
        self.n_free
    }

    pub fn n_nodes(&self) -> usize {
        self.node_dof.len()
    }

    pub fn frame_of_group(&self, group: usize) -> Option<usize> {
        self.group_frame.get(group).copied().flatten()
    }

    /// Reduced index of node `i`'s x coordinate when the node is free.
    pub fn node_dof(&self, i: usize) -> Option<usize> {
        self.node_dof[i]
    }

    /// Reduced index of frame coordinate `k` of frame `f` when free.
    pub fn frame_dof(&self, f: usize, k: usize) -> Option<usize> {
        match self.frames[f].coords[k] {
            Coord::Free(i) => Some(i),
            _ => None,
        }
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    fn coord_value(&self, c: Coord, q: &DVector<f64>, lambda: f64) -> f64 {
        match c {
            Coord::Free(i) => q[i],
            Coord::Prescribed { offset, rate } => offset + rate * lambda,
        }
    }

    /// Values of the six coordinates of frame `f`.
    pub fn frame_values(&self, f: usize, state: &SystemState) -> [f64; 6] {
        self.frames[f].coords.map(|c| self.coord_value(c, &state.free, state.control))
    }

    pub fn positions(&self, reference: &[Vec3], state: &SystemState) -> Vec<Vec3> {
        let rots: Vec<Matrix3<f64>> = (0..self.frames.len())
            .map(|f| {
                let v = self.frame_values(f, state);
                EulerRotation::new(v[RX], v[RY], v[RZ]).r
            })
            .collect();
        reference
            .iter()
            .enumerate()
            .map(|(i, x0)| {
                if let Some(d) = self.node_dof[i] {
                    x0 + Vec3::new(state.free[d], state.free[d + 1], state.free[d + 2])
                } else {
                    let f = self.node_frame[i].unwrap();
                    let fr = &self.frames[f];
                    let v = self.frame_values(f, state);
                    fr.origin + Vec3::new(v[TX], v[TY], v[TZ]) + rots[f] * (x0 - fr.origin)
                }
            })
            .collect()
    }
}

/// `Rz(c) * Ry(b) * Rx(a)` with first and second partial derivatives.
struct EulerRotation {
    r: Matrix3<f64>,
    d: [Matrix3<f64>; 3],
    dd: [[Matrix3<f64>; 3]; 3],
}

impl EulerRotation {
    fn new(a: f64, b: f64, c: f64) -> Self {
        let (sa, ca) = a.sin_cos();
        let (sb, cb) = b.sin_cos();
        let (sc, cc) = c.sin_cos();
        // [value, first, second] derivatives of each elementary rotation
        let rx = [
            Matrix3::new(1.0, 0.0, 0.0, 0.0, ca, -sa, 0.0, sa, ca),
            Matrix3::new(0.0, 0.0, 0.0, 0.0, -sa, -ca, 0.0, ca, -sa),
            Matrix3::new(0.0, 0.0, 0.0, 0.0, -ca, sa, 0.0, -sa, -ca),
        ];
        let ry = [
            Matrix3::new(cb, 0.0, sb, 0.0, 1.0, 0.0, -sb, 0.0, cb),
            Matrix3::new(-sb, 0.0, cb, 0.0, 0.0, 0.0, -cb, 0.0, -sb),
            Matrix3::new(-cb, 0.0, -sb, 0.0, 0.0, 0.0, sb, 0.0, -cb),
        ];
        let rz = [
            Matrix3::new(cc, -sc, 0.0, sc, cc, 0.0, 0.0, 0.0, 1.0),
            Matrix3::new(-sc, -cc, 0.0, cc, -sc, 0.0, 0.0, 0.0, 0.0),
            Matrix3::new(-cc, sc, 0.0, -sc, -cc, 0.0, 0.0, 0.0, 0.0),
        ];
        let prod = |o: [usize; 3]| rz[o[2]] * ry[o[1]] * rx[o[0]];
        let mut d = [Matrix3::zeros(); 3];
        let mut dd = [[Matrix3::zeros(); 3]; 3];
        for k in 0..3 {
            let mut o = [0; 3];
            o[k] = 1;
            d[k] = prod(o);
            for l in 0..3 {
                let mut o = [0; 3];
                o[k] += 1;
                o[l] += 1;
                dd[k][l] = prod(o);
            }
        }
        Self { r: prod([0; 3]), d, dd }
    }
}

/// Reduced coordinates plus the control parameter (displacement in mm or
/// twist in rad, depending on which frame coordinate is driven).
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub free: DVector<f64>,
    pub control: f64,
}

impl SystemState {
    pub fn rest(dofs: &DofMap) -> Self {
        Self { free: DVector::zeros(dofs.n_free()), control: 0.0 }
    }
}

/// Energy and derivatives with respect to the reduced coordinates.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub energy: f64,
    pub residual: DVector<f64>,
    pub tangent: Option<DMatrix<f64>>,
    /// Mixed derivative of the residual with respect to the control.
    pub coupling: Option<DVector<f64>>,
    /// Derivative of the energy with respect to the control.
    pub control_force: f64,
    /// Generalised forces conjugate to all six coordinates of each frame.
    pub frame_forces: Vec<[f64; 6]>,
    pub min_fold_angle: f64,
}

/// A model with its boundary conditions.
#[derive(Debug, Clone)]
pub struct System<'a> {
    pub model: &'a BarHingeModel,
    pub dofs: DofMap,
    pub measure: StrainMeasure,
}

impl<'a> System<'a> {
    pub fn new(model: &'a BarHingeModel, supports: &Supports) -> Result<Self, MechanicsError> {
        Ok(Self { model, dofs: DofMap::new(model, supports)?, measure: StrainMeasure::default() })
    }

    pub fn with_measure(mut self, measure: StrainMeasure) -> Self {
        self.measure = measure;
        self
    }

    pub fn positions(&self, state: &SystemState) -> Vec<Vec3> {
        self.dofs.positions(&self.model.nodes, state)
    }

    /// Derivative of nodal positions with respect to the reduced coordinates.
    pub fn jacobian(&self, state: &SystemState) -> DMatrix<f64> {
        let nn = self.model.nodes.len();
        let mut j = DMatrix::zeros(3 * nn, self.dofs.n_free);
        for i in 0..nn {
            if let Some(d) = self.dofs.node_dof[i] {
                for r in 0..3 {
                    j[(3 * i + r, d + r)] = 1.0;
                }
            }
        }
        for (f, fr) in self.dofs.frames.iter().enumerate() {
            let v = self.dofs.frame_values(f, state);
            let rot = EulerRotation::new(v[RX], v[RY], v[RZ]);
            for &i in &fr.members {
                let r0 = self.model.nodes[i] - fr.origin;
                for (k, c) in fr.coords.iter().enumerate() {
                    if let Coord::Free(col) = *c {
                        let dx = if k < 3 {
                            let mut u = Vec3::zeros();
                            u[k] = 1.0;
                            u
                        } else {
                            rot.d[k - 3] * r0
                        };
                        for r in 0..3 {
                            j[(3 * i + r, col)] = dx[r];
                        }
                    }
                }
            }
        }
        j
    }

    fn check(&self, state: &SystemState) -> Result<(), MechanicsError> {
        if state.free.len() != self.dofs.n_free {
            return Err(MechanicsError::DimensionMismatch { expected: self.dofs.n_free, got: state.free.len() });
        }
        Ok(())
    }

    pub fn energy(&self, state: &SystemState) -> Result<f64, MechanicsError> {
        self.check(state)?;
        let x = self.positions(state);
        Ok(evaluate_nodes(self.model, &x, self.measure, false)?.energy)
    }

    pub fn evaluate(&self, state: &SystemState, tangent: bool) -> Result<Evaluation, MechanicsError> {
        self.check(state)?;
        let x = self.positions(state);
        let nodal = evaluate_nodes(self.model, &x, self.measure, tangent)?;
        let n = self.dofs.n_free;
        let lam = n; // column of the control in the extended Jacobian
        let nz = n + 1;
        let g = &nodal.gradient;

        // sparse rows of the extended Jacobian: per nodal coordinate a list of (z index, value)
        let mut jac: Vec<Vec<(usize, f64)>> = vec![Vec::new(); 3 * x.len()];
        let mut frame_forces = vec![[0.0; 6]; self.dofs.frames.len()];
        let mut second: Vec<(usize, usize, f64)> = Vec::new();

        for (i, rows) in jac.chunks_mut(3).enumerate() {
            if let Some(d) = self.dofs.node_dof[i] {
                for r in 0..3 {
                    rows[r].push((d + r, 1.0));
                }
            }
        }
        for (f, fr) in self.dofs.frames.iter().enumerate() {
            let v = self.dofs.frame_values(f, state);
            let rot = EulerRotation::new(v[RX], v[RY], v[RZ]);
            let dz: Vec<Vec<(usize, f64)>> = fr
                .coords
                .iter()
                .map(|c| match *c {
                    Coord::Free(i) => vec![(i, 1.0)],
                    Coord::Prescribed { rate, .. } if rate != 0.0 => vec![(lam, rate)],
                    _ => vec![],
                })
                .collect();
            // gradient-weighted second derivative of rotation
            let mut w = [[0.0; 3]; 3];
            for &i in &fr.members {
                let r0 = self.model.nodes[i] - fr.origin;
                let gi = Vec3::new(g[3 * i], g[3 * i + 1], g[3 * i + 2]);
                let mut dx = [Vec3::zeros(); 6];
                for t in 0..3 {
                    dx[t][t] = 1.0;
                }
                for k in 0..3 {
                    dx[3 + k] = rot.d[k] * r0;
                    for l in 0..3 {
                        w[k][l] += gi.dot(&(rot.dd[k][l] * r0));
                    }
                }
                for k in 0..6 {
                    frame_forces[f][k] += gi.dot(&dx[k]);
                    for &(zi, c) in &dz[k] {
                        for r in 0..3 {
                            if dx[k][r] != 0.0 {
                                jac[3 * i + r].push((zi, c * dx[k][r]));
                            }
                        }
                    }
                }
            }
            if tangent {
                for k in 0..3 {
                    for l in 0..3 {
                        for &(zi, ci) in &dz[3 + k] {
                            for &(zj, cj) in &dz[3 + l] {
                                second.push((zi, zj, w[k][l] * ci * cj));
                            }
                        }
                    }
                }
            }
        }

        let mut gz = DVector::zeros(nz);
        for (row, entries) in jac.iter().enumerate() {
            for &(zi, c) in entries {
                gz[zi] += c * g[row];
            }
        }

        let (tangent_m, coupling) = if let Some(kx) = nodal.hessian.as_ref() {
            // dense extended Jacobian is small; K_z = J^T K_x J + second-order frame term
            let mut jd = DMatrix::zeros(3 * x.len(), nz);
            for (row, entries) in jac.iter().enumerate() {
                for &(zi, c) in entries {
                    jd[(row, zi)] += c;
                }
            }
            let mut kz = jd.transpose() * (kx * &jd);
            for (zi, zj, v) in second {
                kz[(zi, zj)] += v;
            }
            let kqq = kz.view((0, 0), (n, n)).into_owned();
            let kql = kz.view((0, lam), (n, 1)).column(0).into_owned();
            (Some(0.5 * (&kqq + kqq.transpose())), Some(kql))
        } else {
            (None, None)
        };

        Ok(Evaluation {
            energy: nodal.energy,
            residual: gz.rows(0, n).into_owned(),
            tangent: tangent_m,
            coupling,
            control_force: gz[lam],
            frame_forces,
            min_fold_angle: nodal.min_fold_angle,
        })
    }
}

pub fn system_energy(system: &System, state: &SystemState) -> Result<f64, MechanicsError> {
    system.energy(state)
}

pub fn residual_and_tangent(
    system: &System,
    state: &SystemState,
) -> Result<(DVector<f64>, DMatrix<f64>), MechanicsError> {
    let ev = system.evaluate(state, true)?;
    Ok((ev.residual, ev.tangent.expect("tangent requested")))
}
