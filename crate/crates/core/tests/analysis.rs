use proptest::prelude::*;
use waterbomb::analysis::*;
use waterbomb::solver::{EquilibriumPath, LoadKind, PathSample, PathStatus};

fn grid(n: usize, f: impl Fn(f64) -> f64) -> (Vec<f64>, Vec<f64>) {
    let xs: Vec<f64> = (0..n).map(|i| 0.6 * i as f64 / (n - 1) as f64).collect();
    let ys = xs.iter().map(|&x| f(x)).collect();
    (xs, ys)
}

fn path(kind: LoadKind, xs: &[f64], ys: &[f64]) -> EquilibriumPath {
    EquilibriumPath {
        kind,
        samples: xs
            .iter()
            .zip(ys)
            .map(|(&control, &reaction)| PathSample {
                control,
                reaction,
                iterations: 1,
                converged: true,
                flagged: false,
                residual: 0.0,
            })
            .collect(),
        status: PathStatus::Completed,
        steps: xs.len(),
        states: vec![],
    }
}

fn entry(label: &str, family: Family, parameter: f64, force: f64) -> SweepEntry {
    SweepEntry {
        label: label.into(),
        family,
        parameter,
        report: ConstantForceReport {
            baseline_strain: DEFAULT_BASELINE,
            baseline_force: force,
            band: DEFAULT_BAND,
            range: [0.1, 0.5],
            plateau_force: force,
            fluctuation: 0.0,
        },
    }
}

#[test]
fn constant_curve_covers_whole_path() {
    let (xs, ys) = grid(61, |_| 3.0);
    let r = constant_force_range(&path(LoadKind::Compression, &xs, &ys), DEFAULT_BASELINE, DEFAULT_BAND).unwrap();
    assert_eq!(r.range, [0.0, 0.6]);
    assert_eq!(r.fluctuation, 0.0);
}

#[test]
fn linear_curve_ends_at_band_crossings() {
    let (xs, ys) = grid(61, |x| 2.0 * (1.0 + x));
    let r = constant_force_range_xy(&xs, &ys, 0.25, 0.05).unwrap();
    assert!((r.range[0] - 0.1875).abs() < 1e-12);
    assert!((r.range[1] - 0.3125).abs() < 1e-12);
    assert!((r.fluctuation - 0.05).abs() < 1e-12);
    assert!((r.plateau_force - 2.5).abs() < 1e-12);
}

#[test]
fn baseline_must_lie_on_path() {
    let (xs, ys) = grid(61, |_| 1.0);
    assert!(matches!(
        constant_force_range_xy(&xs, &ys, 0.7, 0.05),
        Err(AnalysisError::BaselineOutOfDomain { .. })
    ));
    let (xs, ys) = grid(61, |x| x - 0.3);
    assert!(matches!(constant_force_range_xy(&xs, &ys, 0.25, 0.05), Err(AnalysisError::NonPositiveBaseline(_))));
    assert!(matches!(constant_force_range_xy(&xs[..3], &ys[..3], 0.25, 0.05), Err(AnalysisError::InsufficientData(_))));
}

#[test]
fn fluctuation_matches_dense_resampling() {
    let (xs, ys) = grid(121, |x| 2.0 * (1.0 + 0.1 * (20.0 * x).sin()));
    let r = constant_force_range_xy(&xs, &ys, 0.25, 0.05).unwrap();
    assert!(r.range[0] > 0.0 && r.range[1] < 0.6, "range must end at crossings: {:?}", r.range);
    let [lo, hi] = r.range;
    let dense = (0..=1000)
        .map(|i| lo + (hi - lo) * i as f64 / 1000.0)
        .map(|x| (interpolate(&xs, &ys, x).unwrap() - r.baseline_force).abs() / r.baseline_force)
        .fold(0.0, f64::max);
    assert!((dense - r.fluctuation).abs() <= 1e-9 * r.fluctuation, "{dense} vs {}", r.fluctuation);
}

#[test]
fn trend_examples() {
    let fam: FamilyGroups = vec![(Family::Dist, vec!["M4".into(), "M5".into(), "M6".into()])];
    let entries = [entry("M4", Family::Dist, 2.0, 10.0), entry("M5", Family::Dist, 3.0, 8.0), entry("M6", Family::Dist, 4.0, 6.0)];
    let rep = sweep_trends(&entries, &fam).unwrap();
    assert_eq!(rep.verdicts[0].observed, Direction::Decreasing);
    assert!(rep.verdicts[0].passed);
    assert!((rep.verdicts[0].p_value - 0.25).abs() < 1e-12);

    let single = sweep_trends(&entries[..1], &fam);
    assert!(matches!(single, Err(AnalysisError::InsufficientData(_))));

    let fam: FamilyGroups = vec![(Family::Scale, (0..4).map(|k| format!("S{k}")).collect())];
    let scaled: Vec<SweepEntry> =
        (0..4).map(|k| entry(&format!("S{k}"), Family::Scale, 0.6 + 0.2 * k as f64, 3.5 * (0.6 + 0.2 * k as f64))).collect();
    let fit = sweep_trends(&scaled, &fam).unwrap().fits[0].1;
    assert!((fit.r2 - 1.0).abs() < 1e-12);
    assert!(fit.intercept.abs() < 1e-12);
    assert!((fit.slope - 3.5).abs() < 1e-12);
}

#[test]
fn wrong_ordering_fails_the_verdict() {
    let fam: FamilyGroups = vec![(Family::CreaseThickness, vec!["a".into(), "b".into(), "c".into()])];
    let entries = [
        entry("a", Family::CreaseThickness, 0.3, 2.0),
        entry("b", Family::CreaseThickness, 0.4, 1.0),
        entry("c", Family::CreaseThickness, 0.5, 3.0),
    ];
    let v = &sweep_trends(&entries, &fam).unwrap().verdicts[0];
    assert_eq!(v.observed, Direction::Mixed);
    assert!(!v.passed);
}

#[test]
fn torsional_stiffness_recovers_linear_slope() {
    // 0.12 N m/deg is 120 N mm/deg
    let twist: Vec<f64> = (0..=40).map(|i| 0.1 * i as f64).collect();
    let torque: Vec<f64> = twist.iter().map(|t| 120.0 * t).collect();
    let p = path(LoadKind::Torsion, &twist, &torque);
    assert!((torsional_stiffness(&p, 3.0).unwrap() - 0.12).abs() < 1e-12);
    let empty = path(LoadKind::Torsion, &[], &[]);
    assert!(matches!(torsional_stiffness(&empty, 3.0), Err(AnalysisError::InsufficientData(_))));
}

#[test]
fn sign_test_probabilities() {
    assert_eq!(sign_test_p(0, 4), 1.0);
    assert!((sign_test_p(4, 4) - 1.0 / 16.0).abs() < 1e-15);
    assert!((sign_test_p(3, 4) - 5.0 / 16.0).abs() < 1e-15);
}

fn wavy(seed: f64) -> (Vec<f64>, Vec<f64>) {
    grid(91, |x| 1.5 + 0.4 * x + 0.2 * (seed + 13.0 * x).sin())
}

proptest! {
    #[test]
    fn range_is_scale_equivariant(seed in 0.0f64..6.0, c in 0.01f64..100.0) {
        let (xs, ys) = wavy(seed);
        let scaled: Vec<f64> = ys.iter().map(|y| c * y).collect();
        let a = constant_force_range_xy(&xs, &ys, 0.25, 0.05).unwrap();
        let b = constant_force_range_xy(&xs, &scaled, 0.25, 0.05).unwrap();
        prop_assert!((a.range[0] - b.range[0]).abs() < 1e-9);
        prop_assert!((a.range[1] - b.range[1]).abs() < 1e-9);
    }

    #[test]
    fn wider_band_never_shrinks_range(seed in 0.0f64..6.0, band in 0.0f64..0.2, extra in 0.0f64..0.2) {
        let (xs, ys) = wavy(seed);
        let a = constant_force_range_xy(&xs, &ys, 0.25, band).unwrap();
        let b = constant_force_range_xy(&xs, &ys, 0.25, band + extra).unwrap();
        prop_assert!(b.range[0] <= a.range[0] + 1e-12);
        prop_assert!(b.range[1] >= a.range[1] - 1e-12);
    }
}
