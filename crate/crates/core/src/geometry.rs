//! Folded and developed geometry of a single tapered waterbomb panel.
//!
//! Panel frame: `x` points radially outward, `y` runs along the base edges,
//! `z` points up along the module axis. The top midpoint `M` sits at the
//! origin and the panel plane leans inward by `theta` so that the narrower
//! upper base is closer to the axis.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;
pub type Vec2 = Vector2<f64>;

pub const ANGLE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParams { field: &'static str, reason: String },
    #[error("infeasible geometry: {0}")]
    InfeasibleGeometry(String),
    #[error("degenerate triangle: {0}")]
    DegenerateTriangle(String),
    #[error("no apex solution for dist = {dist} mm, H0 = {h0} mm, theta = {theta} rad")]
    NoSolution { dist: f64, h0: f64, theta: f64 },
}

/// Linear elastic material. `e` in MPa (N/mm^2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialSpec {
    pub e: f64,
    pub nu: f64,
}

impl MaterialSpec {
    /// TPU 95A as used for the printed panels.
    pub const TPU95A: MaterialSpec = MaterialSpec { e: 26.0, nu: 0.4 };

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.e > 0.0 && self.e.is_finite()) {
            return Err(GeometryError::InvalidParams {
                field: "E",
                reason: format!("must be positive, got {}", self.e),
            });
        }
        if !(0.0..0.5).contains(&self.nu) {
            return Err(GeometryError::InvalidParams {
                field: "nu",
                reason: format!("must lie in [0, 0.5), got {}", self.nu),
            });
        }
        Ok(())
    }

    /// Plate bending rigidity per unit width for thickness `t`.
    pub fn plate_rigidity(&self, t: f64) -> f64 {
        self.e * t.powi(3) / (12.0 * (1.0 - self.nu * self.nu))
    }
}

impl Default for MaterialSpec {
    fn default() -> Self {
        Self::TPU95A
    }
}

/// Design parameters of one panel. Lengths in mm, `alpha` in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PanelParams {
    pub l1: f64,
    pub l2: f64,
    pub h0: f64,
    pub t_f: f64,
    pub t_c: f64,
    pub dist: f64,
    /// Taper angle of the module; each panel leans by `alpha / 2`.
    pub alpha: f64,
    pub n: f64,
    pub material: MaterialSpec,
}

impl Default for PanelParams {
    fn default() -> Self {
        Self {
            l1: 50.0,
            l2: 45.0,
            h0: 43.0,
            t_f: 1.5,
            t_c: 0.54,
            dist: 4.0,
            alpha: 0.0,
            n: 1.0,
            material: MaterialSpec::TPU95A,
        }
    }
}

fn positive(field: &'static str, v: f64) -> Result<(), GeometryError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(GeometryError::InvalidParams {
            field,
            reason: format!("must be positive, got {v}"),
        })
    }
}

impl PanelParams {
    pub fn theta(&self) -> f64 {
        0.5 * self.alpha
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        positive("l1", self.l1)?;
        positive("l2", self.l2)?;
        positive("H0", self.h0)?;
        positive("t_f", self.t_f)?;
        positive("t_c", self.t_c)?;
        positive("n", self.n)?;
        if self.t_c > self.t_f {
            return Err(GeometryError::InvalidParams {
                field: "t_c",
                reason: format!("crease thickness {} exceeds facet thickness {}", self.t_c, self.t_f),
            });
        }
        if !(self.dist >= 0.0 && self.dist.is_finite()) {
            return Err(GeometryError::InvalidParams {
                field: "dist",
                reason: format!("must be non-negative, got {}", self.dist),
            });
        }
        if !(self.alpha >= 0.0 && self.alpha < FRAC_PI_2) {
            return Err(GeometryError::InvalidParams {
                field: "alpha",
                reason: format!("must lie in [0, 90) deg, got {} deg", self.alpha.to_degrees()),
            });
        }
        self.material.validate()
    }
}

/// How the apex heights are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum GeometryBranch {
    /// Numeric solve of the apex triangle; `dist` is reproduced exactly.
    #[default]
    Exact,
    /// Closed-form heights; the resulting apex offset differs slightly from `dist`.
    ClosedForm,
}

/// Where the side vertex `C` sits on the developed edge `A-B`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub enum CPlacement {
    /// Foot of the perpendicular from `O` onto `A-B`.
    #[default]
    PerpendicularFoot,
    /// `A + f (B - A)` with `0 < f < 1`.
    EdgeFraction(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GeometryOptions {
    pub branch: GeometryBranch,
    pub c_placement: CPlacement,
}

/// The nine labelled points of a panel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Labelled<P> {
    pub a: P,
    pub a1: P,
    pub b: P,
    pub b1: P,
    pub c: P,
    pub c1: P,
    pub o: P,
    pub m: P,
    pub n: P,
}

pub const LABELS: [&str; 9] = ["A", "A1", "B", "B1", "C", "C1", "O", "M", "N"];

impl<P: Copy> Labelled<P> {
    /// Points in the canonical order `A, A1, B, B1, C, C1, O, M, N`.
    pub fn to_array(&self) -> [P; 9] {
        [self.a, self.a1, self.b, self.b1, self.c, self.c1, self.o, self.m, self.n]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelGeometry {
    pub params: PanelParams,
    pub options: GeometryOptions,
    pub vertices: Labelled<Vec3>,
    pub developed: Labelled<Vec2>,
    pub h1: f64,
    pub h2: f64,
    pub t: f64,
    pub theta: f64,
    pub l_em: f64,
    pub p: f64,
    /// Projection of `O` onto `M-N`, measured from `M`.
    pub x: f64,
    /// Perpendicular offset of `O` from the boundary plane as built.
    pub dist_built: f64,
    /// `|dist_built - dist|`; zero up to round-off on the exact branch.
    pub dist_tolerance: f64,
    /// Closed-form minus exact `h1`.
    pub h1_discrepancy: f64,
}

impl PanelGeometry {
    /// Length of the tilted midline `M-N`.
    pub fn slant(&self) -> f64 {
        self.params.h0 / self.theta.cos()
    }

    /// Unit vectors (midline downward, along edges, outward normal).
    pub fn frame(&self) -> (Vec3, Vec3, Vec3) {
        panel_frame(self.theta)
    }
}

pub(crate) fn panel_frame(theta: f64) -> (Vec3, Vec3, Vec3) {
    let (s, c) = theta.sin_cos();
    (Vec3::new(s, 0.0, -c), Vec3::new(0.0, 1.0, 0.0), Vec3::new(c, 0.0, s))
}

/// Closed-form apex heights `(h1, h2)`.
pub fn closed_form_heights(dist: f64, h0: f64, theta: f64) -> (f64, f64) {
    let (s, c) = theta.sin_cos();
    let d2 = 2.0 * dist * dist;
    let den = 2.0 * h0 * c;
    ((d2 + h0 * h0 * (1.0 - s)) / den, (d2 + h0 * h0 * (1.0 + s)) / den)
}

/// Height ratio `h2 / h1` from the closed-form heights.
pub fn height_ratio(dist: f64, h0: f64, theta: f64) -> f64 {
    let s = theta.sin();
    1.0 + 2.0 * h0 * h0 * s / (2.0 * dist * dist + h0 * h0 * (1.0 - s))
}

/// Apex offset from the heights of triangle `OMN` (Heron's formula).
pub fn protrusion_from_heights(h1: f64, h2: f64, h0: f64, theta: f64) -> Result<f64, GeometryError> {
    let s = h0 / theta.cos();
    let p = 0.5 * (h1 + h2 + s);
    let factors = [p - h1, p - h2, p - s];
    let tol = 1e-12 * p.max(1.0);
    if factors.iter().any(|&f| f < -tol) || h1 < 0.0 || h2 < 0.0 {
        return Err(GeometryError::DegenerateTriangle(format!(
            "sides {h1}, {h2}, {s} violate the triangle inequality"
        )));
    }
    // Kahan's ordering of Heron's product avoids cancellation for slivers
    let mut e = [h1, h2, s];
    e.sort_by(|x, y| y.total_cmp(x));
    let [a, b, c] = e;
    let prod = (a + (b + c)) * (c - (a - b)) * (c + (a - b)) * (a + (b - c));
    Ok(0.5 * prod.max(0.0).sqrt() / s)
}

/// Exact apex heights and projection `x` for a given offset.
pub fn solve_exact_apex(dist: f64, h0: f64, theta: f64) -> Result<(f64, f64, f64), GeometryError> {
    let fail = || GeometryError::NoSolution { dist, h0, theta };
    if !(dist >= 0.0 && h0 > 0.0 && (0.0..FRAC_PI_2).contains(&theta)) {
        return Err(fail());
    }
    let s = h0 / theta.cos();
    let target = h0 * theta.tan();
    let d2 = dist * dist;
    let f = |x: f64| ((s - x) * (s - x) + d2).sqrt() - (x * x + d2).sqrt() - target;
    let (mut lo, mut hi) = (0.0_f64, s);
    let (flo, fhi) = (f(lo), f(hi));
    if flo < 0.0 || fhi > 0.0 {
        return Err(fail());
    }
    // f is strictly decreasing in x.
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            lo = mid;
            hi = mid;
            break;
        }
        if fm > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let x = 0.5 * (lo + hi);
    let h1 = (x * x + d2).sqrt();
    let h2 = ((s - x) * (s - x) + d2).sqrt();
    if (h2 - h1 - target).abs() >= 1e-10 {
        return Err(fail());
    }
    Ok((h1, h2, x))
}

pub fn derive_panel_geometry(params: &PanelParams) -> Result<PanelGeometry, GeometryError> {
    derive_panel_geometry_with(params, &GeometryOptions::default())
}

pub fn derive_panel_geometry_with(
    params: &PanelParams,
    options: &GeometryOptions,
) -> Result<PanelGeometry, GeometryError> {
    params.validate()?;
    let theta = params.theta();
    let h0 = params.h0;
    let s = h0 / theta.cos();
    let (h1c, _) = closed_form_heights(params.dist, h0, theta);
    let exact = solve_exact_apex(params.dist, h0, theta);

    let (h1, h2, x) = match options.branch {
        GeometryBranch::Exact => exact.clone()?,
        GeometryBranch::ClosedForm => {
            let (h1, h2) = closed_form_heights(params.dist, h0, theta);
            let x = (h1 * h1 - h2 * h2 + s * s) / (2.0 * s);
            (h1, h2, x)
        }
    };
    if !(h1 > 0.0 && h2 > 0.0) {
        return Err(GeometryError::InfeasibleGeometry(format!("non-positive apex heights {h1}, {h2}")));
    }
    if !(0.0..=s).contains(&x) {
        return Err(GeometryError::InfeasibleGeometry(format!(
            "apex projection {x} mm falls outside M-N (length {s} mm)"
        )));
    }
    let dist_built = (h1 * h1 - x * x).max(0.0).sqrt();
    let h1_discrepancy = match exact {
        Ok((h1e, _, _)) => h1c - h1e,
        Err(_) => f64::NAN,
    };

    let developed = developed_pattern(params, h1, h2, options.c_placement)?;
    let vertices = fold_vertices(params, &developed, theta, x, dist_built)?;

    Ok(PanelGeometry {
        params: *params,
        options: *options,
        vertices,
        developed,
        h1,
        h2,
        t: h2 / h1,
        theta,
        l_em: h2 - h1,
        p: 0.5 * (h1 + h2 + s),
        x,
        dist_built,
        dist_tolerance: (dist_built - params.dist).abs(),
        h1_discrepancy,
    })
}

/// Flat pattern with `O` at the origin and the midline along the y axis.
fn developed_pattern(
    params: &PanelParams,
    h1: f64,
    h2: f64,
    placement: CPlacement,
) -> Result<Labelled<Vec2>, GeometryError> {
    let o = Vec2::zeros();
    let m = Vec2::new(0.0, h1);
    let n = Vec2::new(0.0, -h2);
    let a = Vec2::new(-0.5 * params.l2, h1);
    let a1 = Vec2::new(0.5 * params.l2, h1);
    let b = Vec2::new(-0.5 * params.l1, -h2);
    let b1 = Vec2::new(0.5 * params.l1, -h2);
    let ab = b - a;
    let f = match placement {
        CPlacement::PerpendicularFoot => (o - a).dot(&ab) / ab.norm_squared(),
        CPlacement::EdgeFraction(f) => f,
    };
    if !(f > 0.0 && f < 1.0) {
        return Err(GeometryError::InfeasibleGeometry(format!(
            "side vertex parameter {f} outside the open edge A-B"
        )));
    }
    let c = a + f * ab;
    let c1 = Vec2::new(-c.x, c.y);
    Ok(Labelled { a, a1, b, b1, c, c1, o, m, n })
}

fn fold_vertices(
    params: &PanelParams,
    dev: &Labelled<Vec2>,
    theta: f64,
    x: f64,
    dist_built: f64,
) -> Result<Labelled<Vec3>, GeometryError> {
    let (e_m, e_w, e_n) = panel_frame(theta);
    let s = params.h0 / theta.cos();
    let m = Vec3::zeros();
    let n = s * e_m;
    let a = m - 0.5 * params.l2 * e_w;
    let a1 = m + 0.5 * params.l2 * e_w;
    let b = n - 0.5 * params.l1 * e_w;
    let b1 = n + 0.5 * params.l1 * e_w;
    let o = x * e_m + dist_built * e_n;

    let r_o = (dev.c - dev.o).norm();
    let r_a = (dev.c - dev.a).norm();
    let r_b = (dev.c - dev.b).norm();
    let c = trilaterate(o, a, b, r_o, r_a, r_b, -e_n)?;
    let c1 = Vec3::new(c.x, -c.y, c.z);
    Ok(Labelled { a, a1, b, b1, c, c1, o, m, n })
}

/// Point at distances `r0, r1, r2` from `p0, p1, p2`, on the side of plane
/// `p0 p1 p2` that favours `prefer`.
fn trilaterate(
    p0: Vec3,
    p1: Vec3,
    p2: Vec3,
    r0: f64,
    r1: f64,
    r2: f64,
    prefer: Vec3,
) -> Result<Vec3, GeometryError> {
    let ex = (p1 - p0).normalize();
    let i = ex.dot(&(p2 - p0));
    let tmp = p2 - p0 - i * ex;
    let tn = tmp.norm();
    if tn < 1e-12 {
        return Err(GeometryError::DegenerateTriangle("O, A and B are collinear".into()));
    }
    let ey = tmp / tn;
    let ez = ex.cross(&ey);
    let d = (p1 - p0).norm();
    let j = ey.dot(&(p2 - p0));
    let px = (r0 * r0 - r1 * r1 + d * d) / (2.0 * d);
    let py = (r0 * r0 - r2 * r2 + i * i + j * j) / (2.0 * j) - i * px / j;
    let pz2 = r0 * r0 - px * px - py * py;
    let scale = r0 * r0;
    if pz2 < -1e-9 * scale {
        return Err(GeometryError::InfeasibleGeometry(
            "side vertex cannot be placed with the developed edge lengths".into(),
        ));
    }
    let pz = pz2.max(0.0).sqrt();
    let sign = if ez.dot(&prefer) >= 0.0 { 1.0 } else { -1.0 };
    Ok(p0 + px * ex + py * ey + sign * pz * ez)
}

/// Sector angles at `O` read from the developed pattern.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectorAngles {
    pub gamma1: f64,
    pub gamma2: f64,
    pub beta1: f64,
    pub beta2: f64,
}

fn angle_between(u: Vec2, v: Vec2) -> f64 {
    let cross = u.x * v.y - u.y * v.x;
    cross.abs().atan2(u.dot(&v))
}

pub fn sector_angles(geom: &PanelGeometry) -> SectorAngles {
    let d = &geom.developed;
    let at = |p: Vec2, q: Vec2| angle_between(p - d.o, q - d.o);
    SectorAngles {
        gamma1: at(d.m, d.a),
        beta1: at(d.a, d.c),
        beta2: at(d.c, d.b),
        gamma2: at(d.b, d.n),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstraintCheck {
    pub name: &'static str,
    pub passed: bool,
    /// Signed violation; zero or the margin for inequalities.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldabilityReport {
    pub checks: Vec<ConstraintCheck>,
}

impl FoldabilityReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&ConstraintCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> Vec<&'static str> {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.name).collect()
    }
}

pub fn validate_foldability(a: &SectorAngles) -> FoldabilityReport {
    let eq = |name, r: f64| ConstraintCheck { name, passed: r.abs() <= ANGLE_TOL, residual: r };
    let complementary = (a.gamma1 - (FRAC_PI_2 - a.beta2)).abs().max((a.gamma2 - (FRAC_PI_2 - a.beta1)).abs());
    let obtuse = a.beta1 + a.beta2 - FRAC_PI_2;
    let interference = a.beta2 - a.gamma2;
    FoldabilityReport {
        checks: vec![
            eq("alternating_difference", (a.gamma1 - a.gamma2) - (a.beta1 - a.beta2)),
            eq("straight_angle_sum", a.gamma1 + a.gamma2 + a.beta1 + a.beta2 - PI),
            eq("complementary_pairs", complementary),
            ConstraintCheck { name: "obtuse_pair_sum", passed: obtuse > 0.0, residual: obtuse },
            ConstraintCheck { name: "non_interference", passed: interference > 0.0, residual: interference },
        ],
    }
}
