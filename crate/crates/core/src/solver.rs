//! Buckling modes, imperfection seeding and displacement-controlled
//! continuation with an arc-length fallback at limit points.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec3;
use crate::linalg::{lowest_eigenpairs, orthonormal, solve_symmetric, EigenSettings, Ldlt};
use crate::mechanics::{
    Constraint, Evaluation, FrameSupport, MechanicsError, StrainMeasure, Supports, System, SystemState, CONTACT_ANGLE, RZ,
    TZ,
};
use crate::mesh::BarHingeModel;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Mechanics(#[from] MechanicsError),
    #[error("eigen-solve failed: {0}")]
    EigenFailure(String),
    #[error("step size collapsed at control {control} after {samples} samples")]
    StepCollapse { control: f64, samples: usize, path: Box<EquilibriumPath> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LoadKind {
    Compression,
    Torsion,
}

/// Step sizes in strain (compression) or degrees (torsion).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepPolicy {
    pub initial: f64,
    pub min: f64,
    pub max: f64,
    pub max_steps: usize,
}

impl StepPolicy {
    pub fn compression() -> Self {
        Self { initial: 0.002, min: 1e-6, max: 0.005, max_steps: 200 }
    }

    pub fn torsion() -> Self {
        Self { initial: 0.05, min: 1e-5, max: 0.1, max_steps: 200 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Symmetry {
    Symmetric,
    Antisymmetric,
    #[default]
    Unclassified,
}

/// Which family of modes the imperfection index counts in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ModeFilter {
    #[default]
    Any,
    Symmetric,
    Antisymmetric,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Imperfection {
    /// 1-based mode number.
    pub mode: usize,
    /// Amplitude as a fraction of the facet thickness.
    pub xi: f64,
    pub filter: ModeFilter,
}

impl Default for Imperfection {
    fn default() -> Self {
        Self { mode: 1, xi: 0.1, filter: ModeFilter::Any }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_iter: usize,
}

impl Default for Convergence {
    fn default() -> Self {
        Self { rel_tol: 1e-6, abs_tol: 1e-8, max_iter: 25 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadCase {
    pub kind: LoadKind,
    /// Final strain (compression) or twist in degrees (torsion).
    pub target: f64,
    /// Axial strain applied before twisting (torsion only).
    pub pre_strain: f64,
    pub step: StepPolicy,
    pub imperfection: Imperfection,
    pub convergence: Convergence,
    /// Strain applied before extracting buckling modes.
    pub preload: f64,
    pub arc_length: bool,
    pub strain: StrainMeasure,
}

impl LoadCase {
    pub fn compression(target: f64) -> Self {
        Self {
            kind: LoadKind::Compression,
            target,
            pre_strain: 0.0,
            step: StepPolicy::compression(),
            imperfection: Imperfection::default(),
            convergence: Convergence::default(),
            preload: 0.01,
            arc_length: true,
            strain: StrainMeasure::Engineering,
        }
    }

    pub fn torsion(target_deg: f64, pre_strain: f64) -> Self {
        Self {
            kind: LoadKind::Torsion,
            target: target_deg,
            pre_strain,
            step: StepPolicy::torsion(),
            ..Self::compression(0.6)
        }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |m: String| Err(SolverError::Config(m));
        match self.kind {
            LoadKind::Compression => {
                if !(self.target > 0.0 && self.target <= 0.9) {
                    return bad(format!("compression target {} outside (0, 0.9]", self.target));
                }
            }
            LoadKind::Torsion => {
                if !(self.target > 0.0 && self.target <= 10.0) {
                    return bad(format!("twist target {} deg outside (0, 10]", self.target));
                }
                if !(self.pre_strain >= 0.0 && self.pre_strain <= 0.9) {
                    return bad(format!("pre-strain {} outside [0, 0.9]", self.pre_strain));
                }
            }
        }
        let s = &self.step;
        if s.max_steps == 0 {
            return bad("max steps must be positive".into());
        }
        if !(s.min > 0.0 && s.min <= s.initial && s.initial <= s.max) {
            return bad(format!("step sizes need 0 < min <= initial <= max, got {s:?}"));
        }
        if !(self.imperfection.xi >= 0.0 && self.imperfection.xi.is_finite()) {
            return bad(format!("imperfection amplitude {} must be non-negative", self.imperfection.xi));
        }
        if self.imperfection.mode == 0 {
            return bad("mode numbers start at 1".into());
        }
        if !(self.preload > 0.0 && self.preload < 0.9) {
            return bad(format!("preload {} outside (0, 0.9)", self.preload));
        }
        let c = &self.convergence;
        if !(c.rel_tol > 0.0 && c.abs_tol > 0.0 && c.max_iter > 0) {
            return bad("convergence tolerances must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    /// Strain (compression) or twist in degrees (torsion).
    pub control: f64,
    /// Reaction force in N (compression) or torque in N mm (torsion).
    pub reaction: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Facets folded flat onto each other.
    pub flagged: bool,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PathStatus {
    Completed,
    StepCollapse { control: f64 },
    MaxSteps { control: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumPath {
    pub kind: LoadKind,
    pub samples: Vec<PathSample>,
    pub status: PathStatus,
    /// Continuation steps attempted and accepted.
    pub steps: usize,
    /// Reduced coordinates at each sample.
    #[serde(skip)]
    pub states: Vec<DVector<f64>>,
}

impl EquilibriumPath {
    pub fn controls(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.control).collect()
    }

    pub fn reactions(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.reaction).collect()
    }

    pub fn is_complete(&self) -> bool {
        self.status == PathStatus::Completed
    }
}

/// Bottom frame fully fixed; top frame guided along the axis (`TZ`) with
/// control equal to the downward displacement in mm.
pub fn compression_supports(model: &BarHingeModel) -> Result<Supports, SolverError> {
    let (top, bottom) = frame_groups(model)?;
    Ok(Supports {
        frames: vec![FrameSupport::driven(top, TZ, -1.0), FrameSupport::fixed(bottom)],
        rigid: true,
    })
}

/// Top frame held at `shortening` mm and twisted about the axis; control in rad.
pub fn torsion_supports(model: &BarHingeModel, shortening: f64) -> Result<Supports, SolverError> {
    let (top, bottom) = frame_groups(model)?;
    let mut t = FrameSupport::driven(top, RZ, 1.0);
    t.dofs[TZ] = Constraint::Prescribed { offset: -shortening, rate: 0.0 };
    Ok(Supports { frames: vec![t, FrameSupport::fixed(bottom)], rigid: true })
}

fn frame_groups(model: &BarHingeModel) -> Result<(usize, usize), SolverError> {
    let top = model.group("top").ok_or_else(|| SolverError::Config("model has no top group".into()))?;
    let bottom = model.group("bottom").ok_or_else(|| SolverError::Config("model has no bottom group".into()))?;
    Ok((top, bottom))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mode {
    pub eigenvalue: f64,
    /// Reduced-coordinate eigenvector (unit Euclidean norm).
    pub vector: DVector<f64>,
    /// Nodal displacement field scaled to unit maximum nodal displacement.
    pub nodal: Vec<Vec3>,
    pub symmetry: Symmetry,
}

fn pinv_apply(j: &DMatrix<f64>, field: &DVector<f64>) -> DVector<f64> {
    let svd = j.clone().svd(true, true);
    svd.solve(field, 1e-12 * svd.singular_values.max().max(1.0)).expect("svd has both factors")
}

/// Mirror operator expressed on reduced coordinates, when the model has one.
pub fn mirror_operator(system: &System, state: &SystemState) -> Option<DMatrix<f64>> {
    let mirror = system.model.mirror.as_ref()?;
    let j = system.jacobian(state);
    let n = j.ncols();
    let mut px = DMatrix::zeros(j.nrows(), j.nrows());
    for (i, &k) in mirror.perm.iter().enumerate() {
        for a in 0..3 {
            let mut e = Vec3::zeros();
            e[a] = 1.0;
            let r = mirror.reflect_vector(&e);
            for b in 0..3 {
                px[(3 * k + b, 3 * i + a)] = r[b];
            }
        }
    }
    let mapped = px * &j;
    let mut p = DMatrix::zeros(n, n);
    for c in 0..n {
        let col = pinv_apply(&j, &mapped.column(c).into_owned());
        p.set_column(c, &col);
    }
    Some(0.5 * (&p + p.transpose()))
}

/// Rigid motions (and coordinates that do not move any node) admissible
/// under the current supports, as reduced-coordinate vectors.
fn null_motions(system: &System, state: &SystemState) -> Vec<DVector<f64>> {
    let j = system.jacobian(state);
    let x = system.positions(state);
    let n = j.ncols();
    let centroid = x.iter().fold(Vec3::zeros(), |a, b| a + b) / x.len() as f64;
    let mut out = Vec::new();
    for k in 0..6 {
        let mut e = Vec3::zeros();
        e[k % 3] = 1.0;
        let field = DVector::from_iterator(
            3 * x.len(),
            x.iter().flat_map(|p| {
                let v = if k < 3 { e } else { e.cross(&(p - centroid)) };
                [v.x, v.y, v.z]
            }),
        );
        let v = pinv_apply(&j, &field);
        if (&j * &v - &field).norm() <= 1e-8 * field.norm() && v.norm() > 0.0 {
            out.push(v);
        }
    }
    let svd = j.clone().svd(false, true);
    let vt = svd.v_t.expect("requested");
    let smax = svd.singular_values.max().max(1.0);
    for (i, s) in svd.singular_values.iter().enumerate() {
        if *s <= 1e-10 * smax {
            out.push(vt.row(i).transpose());
        }
    }
    let _ = n;
    out
}

fn nodal_field(system: &System, state: &SystemState, v: &DVector<f64>) -> Vec<Vec3> {
    let u = system.jacobian(state) * v;
    (0..system.model.nodes.len()).map(|i| Vec3::new(u[3 * i], u[3 * i + 1], u[3 * i + 2])).collect()
}

/// The `k` lowest non-rigid eigenpairs of the reduced tangent at `state`.
/// Modes of mirror-symmetric models are computed separately in the
/// symmetric and antisymmetric subspaces.
pub fn lowest_modes(system: &System, state: &SystemState, k: usize) -> Result<Vec<Mode>, SolverError> {
    let ev = system.evaluate(state, true)?;
    let kt = ev.tangent.expect("tangent requested");
    let n = kt.nrows();
    let nulls = orthonormal(&null_motions(system, state), &[]);
    let settings = EigenSettings::default();

    let mut subspaces: Vec<(Symmetry, DMatrix<f64>)> = Vec::new();
    match mirror_operator(system, state) {
        Some(p) => {
            let eig = p.symmetric_eigen();
            for (sym, sign) in [(Symmetry::Symmetric, 1.0), (Symmetry::Antisymmetric, -1.0)] {
                let cols: Vec<DVector<f64>> = (0..n)
                    .filter(|&i| eig.eigenvalues[i] * sign > 0.0)
                    .map(|i| eig.eigenvectors.column(i).into_owned())
                    .collect();
                if !cols.is_empty() {
                    subspaces.push((sym, DMatrix::from_columns(&cols)));
                }
            }
        }
        None => subspaces.push((Symmetry::Unclassified, DMatrix::identity(n, n))),
    }

    let mut modes = Vec::new();
    for (sym, basis) in &subspaces {
        let reduced = basis.transpose() * &kt * basis;
        // null vectors are unit length; a tiny projection is round-off from the other subspace
        let projected: Vec<DVector<f64>> =
            nulls.iter().map(|z| basis.transpose() * z).filter(|p| p.norm() > 1e-6).collect();
        let deflate = orthonormal(&projected, &[]);
        let pairs = lowest_eigenpairs(&reduced, k, &deflate, &settings)
            .ok_or_else(|| SolverError::EigenFailure(format!("no convergence in {sym:?} subspace")))?;
        for (lambda, y) in pairs {
            let vector = basis * y;
            modes.push(finish_mode(system, state, lambda, vector, *sym));
        }
    }
    modes.sort_by(|a, b| a.eigenvalue.total_cmp(&b.eigenvalue));
    modes.truncate(k);
    if modes.len() < k {
        return Err(SolverError::EigenFailure(format!("only {} of {k} modes available", modes.len())));
    }
    Ok(modes)
}

fn finish_mode(system: &System, state: &SystemState, lambda: f64, vector: DVector<f64>, symmetry: Symmetry) -> Mode {
    let mut nodal = nodal_field(system, state, &vector);
    let (imax, umax) = nodal
        .iter()
        .enumerate()
        .map(|(i, u)| (i, u.norm()))
        .fold((0, 0.0), |a, b| if b.1 > a.1 + 1e-12 { b } else { a });
    let big = nodal[imax];
    let lead = (0..3).fold(0, |a, r| if big[r].abs() > big[a].abs() + 1e-12 { r } else { a });
    let sign = if big[lead] < 0.0 { -1.0 } else { 1.0 };
    let scale = if umax > 0.0 { sign / umax } else { sign };
    for u in &mut nodal {
        *u *= scale;
    }
    Mode { eigenvalue: lambda, vector: vector * sign, nodal, symmetry }
}

/// Offsets the reference geometry by `xi * t_f` times the mode shape and
/// recomputes rest lengths and angles.
pub fn seed_imperfection(model: &BarHingeModel, mode: &Mode, xi: f64) -> Result<BarHingeModel, SolverError> {
    if xi == 0.0 {
        return Ok(model.clone());
    }
    let amp = xi * model.provenance.t_f;
    let nodes = model.nodes.iter().zip(&mode.nodal).map(|(x, u)| x + amp * u).collect();
    Ok(model.with_reference(nodes)?)
}

fn pick_mode(modes: &[Mode], imp: &Imperfection) -> Option<Mode> {
    let keep = |m: &&Mode| match imp.filter {
        ModeFilter::Any => true,
        ModeFilter::Symmetric => m.symmetry == Symmetry::Symmetric,
        ModeFilter::Antisymmetric => m.symmetry == Symmetry::Antisymmetric,
    };
    modes.iter().filter(keep).nth(imp.mode - 1).cloned()
}

/// Buckling analysis at the preload and the seeded model. Returns the input
/// model unchanged when the amplitude is zero.
pub fn prepare_imperfect(model: &BarHingeModel, case: &LoadCase) -> Result<(BarHingeModel, Option<Mode>), SolverError> {
    case.validate()?;
    if case.imperfection.xi == 0.0 {
        return Ok((model.clone(), None));
    }
    let supports = compression_supports(model)?;
    let system = System::new(model, &supports)?.with_measure(case.strain);
    let h0 = model.height();
    let pre = LoadCase { strain: case.strain, ..LoadCase::compression(case.preload) };
    let path = trace(&system, SystemState::rest(&system.dofs), case.preload * h0, &pre, &Reaction::Compression(h0))?;
    let state = SystemState { free: path.states.last().expect("rest sample").clone(), control: case.preload * h0 };
    let want = match case.imperfection.filter {
        ModeFilter::Any => case.imperfection.mode,
        _ => 2 * case.imperfection.mode + 2,
    };
    let modes = lowest_modes(&system, &state, want.max(3))?;
    let mode = pick_mode(&modes, &case.imperfection)
        .ok_or_else(|| SolverError::EigenFailure(format!("mode {} not found", case.imperfection.mode)))?;
    let seeded = seed_imperfection(model, &mode, case.imperfection.xi)?;
    Ok((seeded, Some(mode)))
}

/// How a sample's control and reaction are reported.
#[derive(Debug, Clone, Copy)]
pub enum Reaction {
    /// Control in mm reported as strain over this height; vertical bottom reaction.
    Compression(f64),
    /// Control in rad reported in degrees; moment about the axis at the top frame.
    Torsion,
}

impl Reaction {
    fn sample(&self, system: &System, ev: &Evaluation, control: f64) -> (f64, f64) {
        let model = system.model;
        match *self {
            Reaction::Compression(h0) => {
                let b = model.group("bottom").and_then(|g| system.dofs.frame_of_group(g));
                let force = b.map(|f| ev.frame_forces[f][TZ]).unwrap_or(ev.control_force);
                (control / h0, force)
            }
            Reaction::Torsion => {
                let t = model.group("top").and_then(|g| system.dofs.frame_of_group(g));
                let torque = t.map(|f| ev.frame_forces[f][RZ]).unwrap_or(ev.control_force);
                (control.to_degrees(), torque)
            }
        }
    }

    fn to_control(&self, value: f64) -> f64 {
        match *self {
            Reaction::Compression(h0) => value * h0,
            Reaction::Torsion => value.to_radians(),
        }
    }
}

struct Newton {
    state: SystemState,
    eval: Evaluation,
    iterations: usize,
    residual: f64,
}

fn tolerance(conv: &Convergence, scale: f64) -> f64 {
    (conv.rel_tol * scale).max(conv.abs_tol)
}

fn force_scale(ev: &Evaluation, seen: f64) -> f64 {
    let frame = ev.frame_forces.iter().flat_map(|f| f[..3].iter()).fold(0.0_f64, |m, v| m.max(v.abs()));
    frame.max(seen)
}

/// Newton iterations at fixed control.
fn correct(system: &System, mut state: SystemState, conv: &Convergence, seen: f64) -> Result<Option<Newton>, SolverError> {
    for it in 0..=conv.max_iter {
        let ev = match system.evaluate(&state, true) {
            Ok(ev) => ev,
            Err(MechanicsError::DegenerateTriangle(_)) => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        let rn = ev.residual.norm();
        if !rn.is_finite() {
            return Ok(None);
        }
        if rn <= tolerance(conv, force_scale(&ev, seen)) {
            return Ok(Some(Newton { state, eval: ev, iterations: it, residual: rn }));
        }
        if it == conv.max_iter {
            break;
        }
        let k = ev.tangent.as_ref().expect("tangent requested");
        let Some(dq) = solve_symmetric(k, &ev.residual) else { return Ok(None) };
        if !dq.iter().all(|v| v.is_finite()) {
            return Ok(None);
        }
        state.free -= dq;
    }
    Ok(None)
}

fn tangent_rate(ev: &Evaluation) -> Option<DVector<f64>> {
    let k = ev.tangent.as_ref()?;
    let c = ev.coupling.as_ref()?;
    solve_symmetric(k, &(-c))
}

fn negative_pivots(ev: &Evaluation) -> usize {
    ev.tangent.as_ref().and_then(Ldlt::new).map(|f| f.inertia().0).unwrap_or(0)
}

/// Arc-length (Crisfield) corrector on `(q, control)`.
fn arc_step(
    system: &System,
    base: &SystemState,
    base_eval: &Evaluation,
    prev_dir: &(DVector<f64>, f64),
    dl: f64,
    conv: &Convergence,
    seen: f64,
) -> Result<Option<Newton>, SolverError> {
    let Some(rate) = tangent_rate(base_eval) else { return Ok(None) };
    let norm = (rate.norm_squared() + 1.0).sqrt();
    let mut dq = &rate * (dl / norm);
    let mut dlam = dl / norm;
    if dq.dot(&prev_dir.0) + dlam * prev_dir.1 < 0.0 {
        dq = -dq;
        dlam = -dlam;
    }
    let mut state = SystemState { free: &base.free + &dq, control: base.control + dlam };
    for it in 0..=conv.max_iter {
        let ev = match system.evaluate(&state, true) {
            Ok(ev) => ev,
            Err(MechanicsError::DegenerateTriangle(_)) => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        let rn = ev.residual.norm();
        if !rn.is_finite() {
            return Ok(None);
        }
        if rn <= tolerance(conv, force_scale(&ev, seen)) {
            return Ok(Some(Newton { state, eval: ev, iterations: it, residual: rn }));
        }
        if it == conv.max_iter {
            break;
        }
        let k = ev.tangent.as_ref().expect("tangent requested");
        let (Some(dr), Some(dt)) = (solve_symmetric(k, &(-&ev.residual)), solve_symmetric(k, &(-ev.coupling.as_ref().unwrap())))
        else {
            return Ok(None);
        };
        let dq_cur = &state.free - &base.free;
        let dl_cur = state.control - base.control;
        let u = &dq_cur + &dr;
        let a = dt.norm_squared() + 1.0;
        let b = 2.0 * (u.dot(&dt) + dl_cur);
        let c = u.norm_squared() + dl_cur * dl_cur - dl * dl;
        let disc = b * b - 4.0 * a * c;
        if disc < 0.0 {
            return Ok(None);
        }
        let roots = [(-b + disc.sqrt()) / (2.0 * a), (-b - disc.sqrt()) / (2.0 * a)];
        let score = |d: f64| (&u + &dt * d).dot(&dq_cur) + (dl_cur + d) * dl_cur;
        let d = if score(roots[0]) >= score(roots[1]) { roots[0] } else { roots[1] };
        state.free = &state.free + &dr + &dt * d;
        state.control += d;
    }
    Ok(None)
}

/// Follows the equilibrium path of `system` from `start` (an equilibrium at
/// `start.control`) to `end` in control units.
pub fn trace(
    system: &System,
    start: SystemState,
    end: f64,
    case: &LoadCase,
    reaction: &Reaction,
) -> Result<EquilibriumPath, SolverError> {
    let conv = case.convergence;
    let step_min = reaction.to_control(case.step.min) - reaction.to_control(0.0);
    let step_max = reaction.to_control(case.step.max) - reaction.to_control(0.0);
    let mut h = reaction.to_control(case.step.initial) - reaction.to_control(0.0);
    let span = end - start.control;
    let tiny = 1e-12 * span.abs().max(1.0);

    let first = correct(system, start.clone(), &conv, 0.0)?
        .ok_or_else(|| SolverError::Config("start state is not an equilibrium".into()))?;
    let mut cur = first;
    let mut seen = 0.0_f64;
    let mut samples = Vec::new();
    let mut states = Vec::new();
    let push = |n: &Newton, samples: &mut Vec<PathSample>, states: &mut Vec<DVector<f64>>, seen: &mut f64| {
        let (control, value) = reaction.sample(system, &n.eval, n.state.control);
        *seen = seen.max(value.abs());
        samples.push(PathSample {
            control,
            reaction: value,
            iterations: n.iterations,
            converged: true,
            flagged: n.eval.min_fold_angle < CONTACT_ANGLE,
            residual: n.residual,
        });
        states.push(n.state.free.clone());
    };
    push(&cur, &mut samples, &mut states, &mut seen);

    let mut steps = 0;
    let mut prev_dir: (DVector<f64>, f64) = (DVector::zeros(start.free.len()), 1.0);
    let mut arc = false;
    let mut dl = h;
    let mut last_recorded = cur.state.control;
    let status = loop {
        if cur.state.control >= end - tiny {
            break PathStatus::Completed;
        }
        if steps >= case.step.max_steps {
            break PathStatus::MaxSteps { control: samples.last().map(|s| s.control).unwrap_or(0.0) };
        }
        steps += 1;

        if arc {
            match arc_step(system, &cur.state, &cur.eval, &prev_dir, dl, &conv, seen)? {
                Some(next) if next.state.control <= end + tiny => {
                    prev_dir = (&next.state.free - &cur.state.free, next.state.control - cur.state.control);
                    let stable = negative_pivots(&next.eval) == 0;
                    cur = next;
                    if cur.state.control > last_recorded + tiny {
                        last_recorded = cur.state.control;
                        push(&cur, &mut samples, &mut states, &mut seen);
                    }
                    if stable && prev_dir.1 > 0.0 {
                        arc = false;
                        h = dl.min(step_max);
                    }
                }
                Some(_) => {
                    // overshoot of the end point: finish under displacement control
                    arc = false;
                    h = (end - cur.state.control).max(step_min);
                }
                None => {
                    dl *= 0.5;
                    if dl < step_min {
                        break PathStatus::StepCollapse { control: samples.last().unwrap().control };
                    }
                }
            }
            continue;
        }

        let step = h.min(end - cur.state.control);
        let rate = tangent_rate(&cur.eval).unwrap_or_else(|| DVector::zeros(cur.state.free.len()));
        let guess = SystemState { free: &cur.state.free + &rate * step, control: cur.state.control + step };
        match correct(system, guess.clone(), &conv, seen)? {
            Some(next) => {
                let jump = (&next.state.free - &guess.free).amax();
                let pred = (&rate * step).amax();
                if jump > 0.5 * pred.max(0.2) && step > 4.0 * step_min {
                    h = 0.5 * step;
                    continue;
                }
                prev_dir = (&next.state.free - &cur.state.free, step);
                let unstable = negative_pivots(&next.eval) > 0;
                let it = next.iterations;
                cur = next;
                last_recorded = cur.state.control;
                push(&cur, &mut samples, &mut states, &mut seen);
                if it <= 3 {
                    h = (1.5 * step).min(step_max).max(h);
                } else if it >= 8 {
                    h = (0.5 * step).max(step_min);
                }
                if unstable && case.arc_length {
                    arc = true;
                    dl = step;
                }
            }
            None => {
                h = 0.5 * step;
                if h < step_min {
                    if case.arc_length && !arc {
                        arc = true;
                        dl = step_min.max(0.5 * step);
                        continue;
                    }
                    break PathStatus::StepCollapse { control: samples.last().unwrap().control };
                }
            }
        }
    };

    let path = EquilibriumPath { kind: case.kind, samples, status: status.clone(), steps, states };
    match status {
        PathStatus::StepCollapse { control } => {
            let n = path.samples.len();
            Err(SolverError::StepCollapse { control, samples: n, path: Box::new(path) })
        }
        _ => Ok(path),
    }
}

/// Compression from rest to `case.target` strain after seeding the imperfection.
pub fn run_compression(model: &BarHingeModel, case: &LoadCase) -> Result<EquilibriumPath, SolverError> {
    Ok(run_compression_detailed(model, case)?.path)
}

#[derive(Debug, Clone)]
pub struct CompressionRun {
    pub model: BarHingeModel,
    pub mode: Option<Mode>,
    pub path: EquilibriumPath,
}

pub fn run_compression_detailed(model: &BarHingeModel, case: &LoadCase) -> Result<CompressionRun, SolverError> {
    case.validate()?;
    if case.kind != LoadKind::Compression {
        return Err(SolverError::Config("expected a compression load case".into()));
    }
    let (seeded, mode) = prepare_imperfect(model, case)?;
    let supports = compression_supports(&seeded)?;
    let system = System::new(&seeded, &supports)?.with_measure(case.strain);
    let h0 = seeded.height();
    let path = trace(&system, SystemState::rest(&system.dofs), case.target * h0, case, &Reaction::Compression(h0))?;
    Ok(CompressionRun { model: seeded, mode, path })
}

/// Pre-compression to `case.pre_strain`, then twist of the top frame about
/// the axis to `case.target` degrees.
pub fn run_torsion(model: &BarHingeModel, case: &LoadCase) -> Result<EquilibriumPath, SolverError> {
    case.validate()?;
    if case.kind != LoadKind::Torsion {
        return Err(SolverError::Config("expected a torsion load case".into()));
    }
    let (seeded, _) = prepare_imperfect(model, case)?;
    let h0 = seeded.height();
    let shortening = case.pre_strain * h0;
    let mut free = None;
    if shortening > 0.0 {
        let comp = LoadCase { kind: LoadKind::Compression, target: case.pre_strain, step: StepPolicy::compression(), ..*case };
        let supports = compression_supports(&seeded)?;
        let system = System::new(&seeded, &supports)?.with_measure(case.strain);
        let path = trace(&system, SystemState::rest(&system.dofs), shortening, &comp, &Reaction::Compression(h0))?;
        free = path.states.last().cloned();
    }
    let supports = torsion_supports(&seeded, shortening)?;
    let system = System::new(&seeded, &supports)?.with_measure(case.strain);
    let start = SystemState { free: free.unwrap_or_else(|| DVector::zeros(system.dofs.n_free())), control: 0.0 };
    trace(&system, start, case.target.to_radians(), case, &Reaction::Torsion)
}
