//! Constant-force plateau detection, sweep trend verdicts, linear fits and
//! torsional stiffness.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::solver::EquilibriumPath;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("baseline strain {baseline} outside the path domain [{lo}, {hi}]")]
    BaselineOutOfDomain { baseline: f64, lo: f64, hi: f64 },
    #[error("non-positive force {0} N at the baseline")]
    NonPositiveBaseline(f64),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

pub const DEFAULT_BASELINE: f64 = 0.25;
pub const DEFAULT_BAND: f64 = 0.05;
pub const MIN_SAMPLES: usize = 10;
/// Twist window for the torsional stiffness fit, degrees.
pub const DEFAULT_TWIST_WINDOW: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantForceReport {
    pub baseline_strain: f64,
    pub baseline_force: f64,
    pub band: f64,
    pub range: [f64; 2],
    /// Mean force over the range.
    pub plateau_force: f64,
    /// Largest relative deviation from the baseline force over the range.
    pub fluctuation: f64,
}

impl ConstantForceReport {
    pub fn width(&self) -> f64 {
        self.range[1] - self.range[0]
    }
}

/// Piecewise-linear interpolation on ascending `xs`.
pub fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> Option<f64> {
    if xs.is_empty() || x < xs[0] || x > xs[xs.len() - 1] {
        return None;
    }
    let k = xs.partition_point(|&v| v < x);
    if k == 0 {
        return Some(ys[0]);
    }
    let (x0, x1) = (xs[k - 1], xs[k]);
    if x1 == x0 {
        return Some(ys[k]);
    }
    let t = (x - x0) / (x1 - x0);
    Some(ys[k - 1] + t * (ys[k] - ys[k - 1]))
}

pub fn constant_force_range(path: &EquilibriumPath, baseline: f64, band: f64) -> Result<ConstantForceReport, AnalysisError> {
    constant_force_range_xy(&path.controls(), &path.reactions(), baseline, band)
}

/// Same as [`constant_force_range`] on raw `(strain, force)` columns.
pub fn constant_force_range_xy(xs: &[f64], fs: &[f64], baseline: f64, band: f64) -> Result<ConstantForceReport, AnalysisError> {
    if xs.len() != fs.len() || xs.len() < MIN_SAMPLES {
        return Err(AnalysisError::InsufficientData(format!(
            "{} samples, need at least {MIN_SAMPLES}",
            xs.len().min(fs.len())
        )));
    }
    if !(band >= 0.0) {
        return Err(AnalysisError::InsufficientData(format!("band {band} must be non-negative")));
    }
    let (lo_dom, hi_dom) = (xs[0], xs[xs.len() - 1]);
    let f0 = interpolate(xs, fs, baseline)
        .ok_or(AnalysisError::BaselineOutOfDomain { baseline, lo: lo_dom, hi: hi_dom })?;
    if f0 <= 0.0 {
        return Err(AnalysisError::NonPositiveBaseline(f0));
    }
    let (fmin, fmax) = (f0 * (1.0 - band), f0 * (1.0 + band));
    let inside = |f: f64| f >= fmin && f <= fmax;
    // crossing of the band boundary on the segment from (xa, fa) inside to (xb, fb) outside
    let crossing = |xa: f64, fa: f64, xb: f64, fb: f64| {
        let lim = if fb > fmax { fmax } else { fmin };
        if fb == fa {
            xa
        } else {
            xa + (lim - fa) / (fb - fa) * (xb - xa)
        }
    };

    let k = xs.partition_point(|&v| v <= baseline);
    // walk right
    let mut hi = hi_dom;
    let (mut xa, mut fa) = (baseline, f0);
    for i in k..xs.len() {
        if !inside(fs[i]) {
            hi = crossing(xa, fa, xs[i], fs[i]);
            break;
        }
        xa = xs[i];
        fa = fs[i];
    }
    // walk left
    let mut lo = lo_dom;
    let (mut xa, mut fa) = (baseline, f0);
    for i in (0..k).rev() {
        if xs[i] == baseline {
            continue;
        }
        if !inside(fs[i]) {
            lo = crossing(xa, fa, xs[i], fs[i]);
            break;
        }
        xa = xs[i];
        fa = fs[i];
    }

    // knots of the clipped curve
    let mut knots: Vec<(f64, f64)> = vec![(lo, interpolate(xs, fs, lo).unwrap())];
    knots.extend(xs.iter().zip(fs).filter(|(x, _)| **x > lo && **x < hi).map(|(x, f)| (*x, *f)));
    knots.push((hi, interpolate(xs, fs, hi).unwrap()));
    let width = hi - lo;
    let plateau_force = if width > 0.0 {
        knots.windows(2).map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0)).sum::<f64>() / width
    } else {
        f0
    };
    let fluctuation = knots.iter().map(|(_, f)| (f - f0).abs() / f0).fold(0.0, f64::max);
    Ok(ConstantForceReport {
        baseline_strain: baseline,
        baseline_force: f0,
        band,
        range: [lo, hi],
        plateau_force,
        fluctuation,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    Dist,
    Alpha,
    CreaseThickness,
    Scale,
}

impl Family {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "dist" => Some(Family::Dist),
            "alpha" => Some(Family::Alpha),
            "tc" => Some(Family::CreaseThickness),
            "scale" => Some(Family::Scale),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Family::Dist => "dist",
            Family::Alpha => "alpha",
            Family::CreaseThickness => "tc",
            Family::Scale => "scale",
        }
    }

    /// Expected direction of the plateau force as the parameter grows.
    pub fn expected(&self) -> Option<Direction> {
        match self {
            Family::Dist => Some(Direction::Decreasing),
            Family::Alpha => Some(Direction::NonIncreasing),
            Family::CreaseThickness => Some(Direction::Increasing),
            Family::Scale => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Increasing,
    Decreasing,
    NonIncreasing,
    NonDecreasing,
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub label: String,
    pub family: Family,
    /// Swept parameter value (dist mm, alpha deg, t_c mm or n).
    pub parameter: f64,
    pub report: ConstantForceReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendVerdict {
    pub family: Family,
    pub labels: Vec<String>,
    pub expected: Direction,
    pub observed: Direction,
    /// One-sided sign-test p-value for the expected direction.
    pub p_value: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub entries: Vec<SweepEntry>,
    pub verdicts: Vec<TrendVerdict>,
    pub fits: Vec<(Family, LinearFit)>,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LinearFit, AnalysisError> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(AnalysisError::InsufficientData("need at least two points for a line".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(AnalysisError::InsufficientData("abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let ss_res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let r2 = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(LinearFit { slope, intercept, r2 })
}

/// `P(X >= k)` for `X ~ Binomial(n, 1/2)`.
pub fn sign_test_p(k: usize, n: usize) -> f64 {
    let mut c = 1.0_f64;
    let mut total = 0.0;
    for i in 0..=n {
        if i >= k {
            total += c;
        }
        c = c * (n - i) as f64 / (i + 1) as f64;
    }
    total / 2f64.powi(n as i32)
}

fn classify(values: &[f64]) -> Direction {
    let d: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
    if d.iter().all(|v| *v > 0.0) {
        Direction::Increasing
    } else if d.iter().all(|v| *v < 0.0) {
        Direction::Decreasing
    } else if d.iter().all(|v| *v <= 0.0) {
        Direction::NonIncreasing
    } else if d.iter().all(|v| *v >= 0.0) {
        Direction::NonDecreasing
    } else {
        Direction::Mixed
    }
}

fn satisfies(observed: Direction, expected: Direction) -> bool {
    use Direction::*;
    match expected {
        Increasing => observed == Increasing,
        Decreasing => observed == Decreasing,
        NonIncreasing => matches!(observed, Decreasing | NonIncreasing),
        NonDecreasing => matches!(observed, Increasing | NonDecreasing),
        Mixed => true,
    }
}

/// Groups of labels that form each family, in sweep order.
pub type FamilyGroups = Vec<(Family, Vec<String>)>;

pub fn sweep_trends(entries: &[SweepEntry], families: &FamilyGroups) -> Result<SweepReport, AnalysisError> {
    let mut verdicts = Vec::new();
    let mut fits = Vec::new();
    for (family, labels) in families {
        let mut members: Vec<&SweepEntry> = labels
            .iter()
            .filter_map(|l| entries.iter().find(|e| &e.label == l))
            .collect();
        members.sort_by(|a, b| a.parameter.total_cmp(&b.parameter));
        match family.expected() {
            Some(expected) => {
                if members.len() < 2 {
                    return Err(AnalysisError::InsufficientData(format!(
                        "family {} has {} configs, need 2",
                        family.name(),
                        members.len()
                    )));
                }
                let forces: Vec<f64> = members.iter().map(|e| e.report.plateau_force).collect();
                let observed = classify(&forces);
                let diffs: Vec<f64> = forces.windows(2).map(|w| w[1] - w[0]).collect();
                let agree = diffs
                    .iter()
                    .filter(|d| match expected {
                        Direction::Increasing | Direction::NonDecreasing => **d > 0.0,
                        _ => **d < 0.0,
                    })
                    .count();
                verdicts.push(TrendVerdict {
                    family: *family,
                    labels: members.iter().map(|e| e.label.clone()).collect(),
                    expected,
                    observed,
                    p_value: sign_test_p(agree, diffs.len()),
                    passed: satisfies(observed, expected),
                });
            }
            None => {
                if members.len() < 3 {
                    return Err(AnalysisError::InsufficientData(format!(
                        "family {} has {} configs, need 3 for a fit",
                        family.name(),
                        members.len()
                    )));
                }
                let xs: Vec<f64> = members.iter().map(|e| e.parameter).collect();
                let ys: Vec<f64> = members.iter().map(|e| e.report.plateau_force).collect();
                fits.push((*family, linear_fit(&xs, &ys)?));
            }
        }
    }
    Ok(SweepReport { entries: entries.to_vec(), verdicts, fits })
}

/// Slope of torque against twist over `[0, window_deg]`, in N m per degree.
pub fn torsional_stiffness(path: &EquilibriumPath, window_deg: f64) -> Result<f64, AnalysisError> {
    torsional_stiffness_xy(&path.controls(), &path.reactions(), window_deg)
}

/// Same as [`torsional_stiffness`] on raw `(twist deg, torque N mm)` columns.
pub fn torsional_stiffness_xy(twist: &[f64], torque: &[f64], window_deg: f64) -> Result<f64, AnalysisError> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = twist
        .iter()
        .zip(torque)
        .filter(|(x, _)| **x >= 0.0 && **x <= window_deg + 1e-12)
        .map(|(x, y)| (*x, *y))
        .unzip();
    if xs.len() < 3 {
        return Err(AnalysisError::InsufficientData(format!("{} samples within {window_deg} deg", xs.len())));
    }
    Ok(linear_fit(&xs, &ys)?.slope / 1000.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize, f: impl Fn(f64) -> f64) -> (Vec<f64>, Vec<f64>) {
        let xs: Vec<f64> = (0..n).map(|i| 0.6 * i as f64 / (n - 1) as f64).collect();
        let ys = xs.iter().map(|&x| f(x)).collect();
        (xs, ys)
    }

    #[test]
    fn constant_curve_spans_domain() {
        let (xs, ys) = grid(61, |_| 3.0);
        let r = constant_force_range_xy(&xs, &ys, 0.25, 0.05).unwrap();
        assert_eq!(r.range, [0.0, 0.6]);
        assert_eq!(r.fluctuation, 0.0);
        assert!((r.plateau_force - 3.0).abs() < 1e-12);
    }

    #[test]
    fn linear_curve_band_edges() {
        let (xs, ys) = grid(61, |x| 2.0 * (1.0 + x));
        let r = constant_force_range_xy(&xs, &ys, 0.25, 0.05).unwrap();
        assert!((r.range[0] - 0.1875).abs() < 1e-9);
        assert!((r.range[1] - 0.3125).abs() < 1e-9);
    }

    #[test]
    fn baseline_outside_domain() {
        let (xs, ys) = grid(61, |_| 1.0);
        assert!(matches!(
            constant_force_range_xy(&xs, &ys, 0.7, 0.05),
            Err(AnalysisError::BaselineOutOfDomain { .. })
        ));
        let (xs, ys) = grid(61, |_| -1.0);
        assert!(matches!(constant_force_range_xy(&xs, &ys, 0.25, 0.05), Err(AnalysisError::NonPositiveBaseline(_))));
    }

    #[test]
    fn sign_test_values() {
        assert_eq!(sign_test_p(4, 4), 1.0 / 16.0);
        assert_eq!(sign_test_p(0, 4), 1.0);
    }

    #[test]
    fn exact_line_fit() {
        let xs = [0.43, 0.6, 0.84, 1.0];
        let ys: Vec<f64> = xs.iter().map(|x| 5.0 * x).collect();
        let f = linear_fit(&xs, &ys).unwrap();
        assert!((f.r2 - 1.0).abs() < 1e-12 && f.intercept.abs() < 1e-12);
    }
}
