use std::f64::consts::{PI, TAU};

use nalgebra::{DVector, Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use waterbomb::geometry::{derive_panel_geometry, PanelParams, Vec3};
use waterbomb::mechanics::*;
use waterbomb::mesh::{triangulate_panel, Bar, BarHingeModel};

fn model() -> BarHingeModel {
    let p = PanelParams { dist: 3.0, alpha: 6f64.to_radians(), ..PanelParams::default() };
    triangulate_panel(&derive_panel_geometry(&p).unwrap()).unwrap()
}

fn perturbed(sys: &System, amp: f64, seed: u64) -> SystemState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = SystemState::rest(&sys.dofs);
    for v in s.free.iter_mut() {
        *v = amp * rng.gen_range(-1.0..1.0);
    }
    s
}

fn quad(phi: f64) -> [Vec3; 4] {
    [Vec3::new(0.2, 1.0, 0.0), Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.7, phi.cos(), phi.sin())]
}

#[test]
fn hinge_angle_examples() {
    assert!((hinge_angle(&quad(PI)).unwrap() - PI).abs() < 1e-12);
    assert!((hinge_angle(&quad(0.5 * PI)).unwrap() - 0.5 * PI).abs() < 1e-12);
    for phi in [0.3, 1.2, 2.5, 4.0, 5.9] {
        let q = quad(phi);
        let fwd = hinge_angle(&q).unwrap();
        let rev = hinge_angle(&[q[3], q[1], q[2], q[0]]).unwrap();
        assert!((fwd + rev - TAU).abs() < 1e-12, "{phi}: {fwd} {rev}");
    }
    let flat = [Vec3::new(0.5, 0.0, 0.0), Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)];
    assert!(matches!(hinge_angle(&flat), Err(MechanicsError::DegenerateTriangle(_))));
}

#[test]
fn hinge_gradient_matches_differences() {
    let q = quad(2.1);
    let kin = hinge_kinematics(&q, true).unwrap();
    let h = 1e-6;
    for n in 0..4 {
        for c in 0..3 {
            let (mut a, mut b) = (q, q);
            a[n][c] += h;
            b[n][c] -= h;
            let fd = (hinge_angle(&a).unwrap() - hinge_angle(&b).unwrap()) / (2.0 * h);
            assert!((kin.grad[n][c] - fd).abs() < 1e-7, "node {n} comp {c}");
        }
    }
}

#[test]
fn single_bar_energy_is_quadratic() {
    let bar = Bar { i: 0, j: 1, ea: 39.0, rest_length: 10.0 };
    let dl = 0.3;
    let (e, f, k) = bar_energy(&bar, 10.0 + dl, StrainMeasure::Engineering);
    assert!((e - 0.5 * 3.9 * dl * dl).abs() < 1e-12);
    assert!((f - 3.9 * dl).abs() < 1e-12);
    assert_eq!(k, 3.9);
    let (e0, _, _) = bar_energy(&bar, 10.0, StrainMeasure::Green);
    assert_eq!(e0, 0.0);
}

#[test]
fn rest_state_is_stress_free() {
    let m = model();
    let sys = System::new(&m, &Supports::none()).unwrap();
    let rest = SystemState::rest(&sys.dofs);
    assert_eq!(system_energy(&sys, &rest).unwrap(), 0.0);
    let (r, _) = residual_and_tangent(&sys, &rest).unwrap();
    assert!(r.amax() < 1e-12);
}

#[test]
fn residual_is_the_energy_gradient() {
    let m = model();
    for measure in [StrainMeasure::Engineering, StrainMeasure::Green] {
        let sys = System::new(&m, &Supports::none()).unwrap().with_measure(measure);
        let s = perturbed(&sys, 0.2, 7);
        let (r, _) = residual_and_tangent(&sys, &s).unwrap();
        let h = 1e-6;
        let mut fd = DVector::zeros(r.len());
        for i in 0..r.len() {
            let (mut a, mut b) = (s.clone(), s.clone());
            a.free[i] += h;
            b.free[i] -= h;
            fd[i] = (system_energy(&sys, &a).unwrap() - system_energy(&sys, &b).unwrap()) / (2.0 * h);
        }
        let rel = (&r - &fd).norm() / r.norm();
        assert!(rel < 1e-6, "{measure:?}: {rel}");
    }
}

#[test]
fn tangent_is_the_residual_jacobian() {
    let m = model();
    let sys = System::new(&m, &Supports::none()).unwrap();
    let s = perturbed(&sys, 0.2, 11);
    let (_, k) = residual_and_tangent(&sys, &s).unwrap();
    let asym = (&k - k.transpose()).amax() / k.amax();
    assert!(asym < 1e-8);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for j in 0..k.ncols() {
        let (mut a, mut b) = (s.clone(), s.clone());
        a.free[j] += h;
        b.free[j] -= h;
        let fd = (residual_and_tangent(&sys, &a).unwrap().0 - residual_and_tangent(&sys, &b).unwrap().0) / (2.0 * h);
        worst = worst.max((k.column(j) - fd).norm());
    }
    assert!(worst / k.norm() < 1e-4, "{worst}");
}

#[test]
fn constrained_tangent_has_rigid_nullspace_only() {
    let m = model();
    let sys = System::new(&m, &Supports::none()).unwrap();
    let (_, k) = residual_and_tangent(&sys, &SystemState::rest(&sys.dofs)).unwrap();
    let eig = k.symmetric_eigenvalues();
    let scale = eig.amax();
    let zero = eig.iter().filter(|&&l| l.abs() < 1e-9 * scale).count();
    assert_eq!(zero, 6);
    assert!(eig.iter().all(|&l| l > -1e-9 * scale));
}

#[test]
fn invariance_under_rigid_motion() {
    let m = model();
    let sys = System::new(&m, &Supports::none()).unwrap();
    let s = perturbed(&sys, 0.3, 3);
    let pos = sys.positions(&s);
    let rot = Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(Vector3::new(0.3, -0.5, 0.8)), 0.7);
    let t = Vec3::new(12.0, -4.0, 9.0);
    let moved = |p: &Vec3| rot * p + t;
    let m2 = m.with_reference(m.nodes.iter().map(moved).collect()).unwrap();
    let sys2 = System::new(&m2, &Supports::none()).unwrap();
    let mut s2 = SystemState::rest(&sys2.dofs);
    for (i, p) in pos.iter().enumerate() {
        let d = moved(p) - m2.nodes[i];
        for c in 0..3 {
            s2.free[3 * i + c] = d[c];
        }
    }
    let (e1, e2) = (system_energy(&sys, &s).unwrap(), system_energy(&sys2, &s2).unwrap());
    assert!((e1 - e2).abs() < 1e-8 * e1);
    let (r1, k1) = residual_and_tangent(&sys, &s).unwrap();
    let (r2, k2) = residual_and_tangent(&sys2, &s2).unwrap();
    assert!((r1.norm() - r2.norm()).abs() < 1e-8 * r1.norm());
    let (l1, l2) = (k1.symmetric_eigenvalues(), k2.symmetric_eigenvalues());
    let mut l1: Vec<f64> = l1.iter().copied().collect();
    let mut l2: Vec<f64> = l2.iter().copied().collect();
    l1.sort_by(f64::total_cmp);
    l2.sort_by(f64::total_cmp);
    let scale = l1.last().unwrap().abs();
    for (a, b) in l1.iter().zip(&l2) {
        assert!((a - b).abs() < 1e-8 * scale);
    }
}

#[test]
fn translation_costs_nothing() {
    let m = model();
    let sys = System::new(&m, &Supports::none()).unwrap();
    let mut s = SystemState::rest(&sys.dofs);
    for i in 0..m.nodes.len() {
        s.free[3 * i] = 2.5;
        s.free[3 * i + 2] = -1.0;
    }
    assert!(system_energy(&sys, &s).unwrap().abs() < 1e-20);
}

#[test]
fn hinge_moment_is_odd_about_rest() {
    let m = model();
    let h = m.hinges[0];
    let moment = |delta: f64| {
        // rotate the second wing about the hinge edge
        let p = h.nodes.map(|i| m.nodes[i]);
        let axis = nalgebra::Unit::new_normalize(p[2] - p[1]);
        let rot = Rotation3::from_axis_angle(&axis, delta);
        let mut q = p;
        q[3] = p[1] + rot * (p[3] - p[1]);
        let phi = hinge_angle(&q).unwrap();
        h.k * angle_offset(phi, h.rest_angle)
    };
    for d in [0.01, 0.1, 0.4] {
        let (plus, minus) = (moment(d), moment(-d));
        assert!(plus.abs() > 0.0);
        assert!((plus + minus).abs() < 1e-9 * plus.abs());
    }
}

#[test]
fn state_dimension_is_checked() {
    let m = model();
    let sys = System::new(&m, &Supports::none()).unwrap();
    let bad = SystemState { free: DVector::zeros(5), control: 0.0 };
    assert!(matches!(system_energy(&sys, &bad), Err(MechanicsError::DimensionMismatch { .. })));
}

#[test]
fn frame_dimension_counts_rigid_frames() {
    let m = model();
    let supports = Supports { frames: vec![FrameSupport::fixed(1)], rigid: true };
    let dofs = DofMap::new(&m, &supports).unwrap();
    // six nodes are tied to the two frames, the bottom one is fixed
    assert_eq!(dofs.n_free(), 3 * 3 + 6);
}
