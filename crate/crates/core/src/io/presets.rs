//! Named panel configurations: the simulated series M1-M22 and the
//! fabricated modules Ma, Mb, Mc.

use crate::analysis::{Family, FamilyGroups};
use crate::geometry::{MaterialSpec, PanelParams};
use crate::mesh::scale_params;

/// Array radius used in the simulated modules, mm.
pub const MODULE_RADIUS: f64 = 30.0;
/// Array radius of the fabricated modules, mm.
pub const BUILT_RADIUS: f64 = 20.0;
/// Poisson's ratio assumed for the cast silicone when none is given.
pub const SILICONE_NU: f64 = 0.49;

#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub params: PanelParams,
    /// The material modulus is unknown and must be supplied by the user.
    pub needs_modulus: bool,
    /// Suggested module radius, mm.
    pub radius: f64,
}

// (dist mm, alpha deg, t_c mm, n)
const SERIES: [(f64, f64, f64, f64); 22] = [
    (0.0, 0.0, 0.54, 1.0),
    (1.0, 0.0, 0.54, 1.0),
    (1.5, 0.0, 0.54, 1.0),
    (2.0, 0.0, 0.54, 1.0),
    (3.0, 0.0, 0.54, 1.0),
    (4.0, 0.0, 0.54, 1.0),
    (4.0, 0.0, 0.54, 1.0),
    (4.0, 4.0, 0.54, 1.0),
    (4.0, 8.0, 0.54, 1.0),
    (4.0, 12.0, 0.54, 1.0),
    (4.0, 16.0, 0.54, 1.0),
    (4.0, 6.0, 0.54, 1.0),
    (4.0, 6.0, 0.68, 1.0),
    (4.0, 6.0, 0.81, 1.0),
    (4.0, 6.0, 0.95, 1.0),
    (4.0, 6.0, 1.08, 1.0),
    (2.0, 10.0, 0.54, 1.0),
    (2.0, 10.0, 0.54, 0.84),
    (2.0, 10.0, 0.54, 0.71),
    (2.0, 10.0, 0.54, 0.60),
    (2.0, 10.0, 0.54, 0.51),
    (2.0, 10.0, 0.54, 0.43),
];

const NAMES: [&str; 25] = [
    "M1", "M2", "M3", "M4", "M5", "M6", "M7", "M8", "M9", "M10", "M11", "M12", "M13", "M14", "M15", "M16", "M17", "M18",
    "M19", "M20", "M21", "M22", "Ma", "Mb", "Mc",
];

pub fn preset_names() -> &'static [&'static str] {
    &NAMES
}

/// Table entry `(dist, alpha deg, t_c, n)` of a series preset, before scaling.
pub fn series_entry(name: &str) -> Option<(f64, f64, f64, f64)> {
    let idx: usize = name.strip_prefix('M')?.parse().ok()?;
    if (1..=22).contains(&idx) {
        Some(SERIES[idx - 1])
    } else {
        None
    }
}

fn built(name: &'static str, dist: f64, alpha_deg: f64, material: MaterialSpec, needs_modulus: bool) -> Preset {
    Preset {
        name,
        params: PanelParams {
            l1: 37.5,
            l2: 33.75,
            h0: 32.5,
            t_f: 1.5,
            t_c: 0.54,
            dist,
            alpha: alpha_deg.to_radians(),
            n: 0.6,
            material,
        },
        needs_modulus,
        radius: BUILT_RADIUS,
    }
}

pub fn preset(name: &str) -> Option<Preset> {
    match name {
        "Ma" => return Some(built("Ma", 2.25, 3.0, MaterialSpec::TPU95A, false)),
        "Mb" => return Some(built("Mb", 3.0, 4.0, MaterialSpec::TPU95A, false)),
        "Mc" => {
            // modulus left unset on purpose
            return Some(built("Mc", 4.5, 6.0, MaterialSpec { e: f64::NAN, nu: SILICONE_NU }, true));
        }
        _ => {}
    }
    let (dist, alpha, t_c, n) = series_entry(name)?;
    let base = PanelParams { dist, alpha: alpha.to_radians(), t_c, ..PanelParams::default() };
    // the table lists M17's planar values; the rest of the family is M17 scaled by n
    let params = scale_params(&base, n, false).ok()?;
    let name = NAMES.iter().find(|s| **s == name)?;
    Some(Preset { name, params, needs_modulus: false, radius: MODULE_RADIUS })
}

/// Series members of each swept family, ordered by the swept parameter.
pub fn families() -> FamilyGroups {
    let names = |r: std::ops::RangeInclusive<usize>| r.map(|i| format!("M{i}")).collect::<Vec<_>>();
    vec![
        (Family::Dist, names(4..=6)),
        (Family::Alpha, names(7..=11)),
        (Family::CreaseThickness, names(12..=16)),
        (Family::Scale, names(17..=22)),
    ]
}

pub fn family_members(family: Family) -> Vec<String> {
    families().into_iter().find(|(f, _)| *f == family).map(|(_, l)| l).unwrap_or_default()
}

/// Value of the swept parameter for a series preset.
pub fn family_parameter(family: Family, name: &str) -> Option<f64> {
    let (dist, alpha, t_c, n) = series_entry(name)?;
    Some(match family {
        Family::Dist => dist,
        Family::Alpha => alpha,
        Family::CreaseThickness => t_c,
        Family::Scale => n,
    })
}
