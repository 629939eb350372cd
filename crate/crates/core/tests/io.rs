use std::fs;

use proptest::prelude::*;
use waterbomb::geometry::{derive_panel_geometry, PanelParams};
use waterbomb::io::export::*;
use waterbomb::io::{parse_config, preset, preset_names, ConfigError, RunConfig, Structure};
use waterbomb::mesh::{assemble_module, triangulate_panel};
use waterbomb::solver::{EquilibriumPath, LoadKind, PathSample, PathStatus};

fn sample(control: f64, reaction: f64) -> PathSample {
    PathSample { control, reaction, iterations: 3, converged: true, flagged: false, residual: 1e-9 }
}

fn path(kind: LoadKind, samples: Vec<PathSample>) -> EquilibriumPath {
    EquilibriumPath { kind, steps: samples.len(), samples, status: PathStatus::Completed, states: vec![] }
}

#[test]
fn preset_m6_expands() {
    let c = parse_config("preset = M6\n").unwrap();
    let p = c.params;
    assert_eq!((p.dist, p.alpha, p.t_c, p.n), (4.0, 0.0, 0.54, 1.0));
    assert_eq!(c.preset.as_deref(), Some("M6"));
}

#[test]
fn preset_mc_needs_a_modulus() {
    let e = parse_config("preset = Mc\n").unwrap_err();
    assert!(matches!(e, ConfigError::Validation { ref key, .. } if key == "panel.E"));
    let c = parse_config("preset = Mc\n[panel]\nE = 1.2\n").unwrap();
    assert_eq!(c.params.dist, 4.5);
    assert!((c.params.alpha - 6f64.to_radians()).abs() < 1e-15);
    assert_eq!(c.params.material.e, 1.2);
    assert!((c.params.material.nu - 0.49).abs() < 1e-15);
}

#[test]
fn negative_crease_thickness_is_rejected() {
    let e = parse_config("[panel]\nt_c = -1\n").unwrap_err();
    assert!(matches!(e, ConfigError::Validation { ref key, .. } if key == "panel.t_c"));
}

#[test]
fn every_preset_parses_and_round_trips() {
    for name in preset_names() {
        let text = if preset(name).unwrap().needs_modulus {
            format!("preset = {name}\n[panel]\nE = 2\n")
        } else {
            format!("preset = {name}\n")
        };
        let mut c = parse_config(&text).unwrap();
        let again = parse_config(&c.to_text()).unwrap();
        // the label survives only as a comment; alpha passes through degrees
        c.preset = None;
        assert!((c.params.alpha - again.params.alpha).abs() < 1e-15, "{name}");
        c.params.alpha = again.params.alpha;
        assert_eq!(c, again, "{name}");
        assert_eq!(again.to_text(), parse_config(&again.to_text()).unwrap().to_text());
    }
}

#[test]
fn module_structure_uses_preset_radius() {
    let c = parse_config("preset = Ma\n[model]\nstructure = module\n").unwrap();
    assert_eq!(c.structure, Structure::Module { radius: 20.0 });
    let c = RunConfig::from_preset("M6").unwrap();
    assert!(c.preset.is_some());
}

#[test]
fn two_sample_csv_has_three_lines() {
    let p = path(LoadKind::Compression, vec![sample(0.0, 0.0), sample(0.002, 0.1234567890123)]);
    let text = curve_csv(&p).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.ends_with('\n') && !text.contains('\r'));
    assert_eq!(text.lines().next(), Some(COMPRESSION_HEADER));
    let t = path(LoadKind::Torsion, vec![sample(0.0, 0.0)]);
    assert!(curve_csv(&t).unwrap().starts_with("twist_deg,torque_Nmm,"));
    assert!(matches!(curve_csv(&path(LoadKind::Compression, vec![])), Err(ExportError::EmptyPath)));
}

#[test]
fn csv_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let dest = dir.path().join("curve.csv");
    let samples: Vec<PathSample> = (0..20).map(|i| sample(0.003 * i as f64, (i as f64 * 0.7).sin() / 3.0)).collect();
    let p = path(LoadKind::Compression, samples);
    export_curve_csv(&p, &dest).unwrap();
    let back = read_curve_csv(&dest).unwrap();
    assert_eq!(back.kind, LoadKind::Compression);
    let want: Vec<CurveRow> = p.samples.iter().map(CurveRow::from).collect();
    assert_eq!(back.rows, want);
    let empty = dir.path().join("empty.csv");
    assert!(export_curve_csv(&path(LoadKind::Torsion, vec![]), &empty).is_err());
    assert!(!empty.exists());
}

#[test]
fn malformed_csv_reports_line() {
    let e = parse_curve_csv(&format!("{COMPRESSION_HEADER}\n0,1,1,true,false\n0.1,abc,1,true,false\n")).unwrap_err();
    assert!(matches!(e, ExportError::Malformed { line: 3, .. }));
    assert!(matches!(parse_curve_csv("x,y\n"), Err(ExportError::Malformed { line: 1, .. })));
}

proptest! {
    #[test]
    fn csv_numbers_survive_exactly(xs in proptest::collection::vec((0.0f64..1.0, -1e3f64..1e3), 1..30)) {
        let mut xs = xs;
        xs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let p = path(LoadKind::Torsion, xs.iter().map(|&(c, r)| sample(c, r)).collect());
        let back = parse_curve_csv(&curve_csv(&p).unwrap()).unwrap();
        prop_assert_eq!(back.controls(), p.controls());
        prop_assert_eq!(back.reactions(), p.reactions());
    }
}

fn mm(attr: &str) -> f64 {
    attr.trim_end_matches("mm").parse().unwrap()
}

#[test]
fn crease_svg_is_well_formed() {
    let g = derive_panel_geometry(&PanelParams::default()).unwrap();
    let text = crease_svg(&g).unwrap();
    let doc = roxmltree::Document::parse(&text).unwrap();
    let svg = doc.root_element();
    assert_eq!(svg.tag_name().name(), "svg");
    assert_eq!(svg.tag_name().namespace(), Some("http://www.w3.org/2000/svg"));
    // widest edge of the symmetric pattern is the lower base
    assert!((mm(svg.attribute("width").unwrap()) - g.params.l1).abs() < 1e-9);
    let vb: Vec<f64> = svg.attribute("viewBox").unwrap().split(' ').map(|v| v.parse().unwrap()).collect();
    assert_eq!(vb.len(), 4);
    assert!((vb[2] - g.params.l1).abs() < 1e-9);
    assert!((vb[3] - mm(svg.attribute("height").unwrap())).abs() < 1e-12);

    let lines: Vec<_> = doc.descendants().filter(|n| n.has_tag_name("line")).collect();
    let class = |c: &str| lines.iter().filter(|n| n.attribute("class") == Some(c)).count();
    assert_eq!(class("boundary"), 8);
    assert_eq!(class("mountain") + class("valley"), 8);
    for n in &lines {
        for a in ["x1", "y1", "x2", "y2"] {
            assert!(n.attribute(a).unwrap().parse::<f64>().unwrap().is_finite());
        }
        let stroke = n.attribute("stroke").unwrap();
        match n.attribute("class").unwrap() {
            "boundary" => assert_eq!(stroke, "black"),
            "mountain" => {
                assert_eq!(stroke, "red");
                assert!(n.attribute("stroke-dasharray").is_none());
            }
            "valley" => {
                assert_eq!(stroke, "blue");
                assert!(n.attribute("stroke-dasharray").is_some());
            }
            other => panic!("unexpected class {other}"),
        }
    }
}

#[test]
fn fold_sense_follows_rest_angle() {
    assert_eq!(crease_kind(3.0), CreaseKind::Mountain);
    assert_eq!(crease_kind(3.3), CreaseKind::Valley);
}

#[test]
fn degenerate_pattern_writes_nothing() {
    let mut g = derive_panel_geometry(&PanelParams::default()).unwrap();
    g.developed.c = g.developed.a;
    let dir = tempfile::tempdir().unwrap();
    let dest = dir.path().join("crease.svg");
    assert!(matches!(export_crease_svg(&g, &dest), Err(ExportError::Degenerate(_))));
    assert!(!dest.exists());
}

struct Obj {
    vertices: Vec<[f64; 3]>,
    faces: Vec<[usize; 3]>,
    objects: Vec<String>,
}

fn parse_obj(text: &str) -> Obj {
    let mut o = Obj { vertices: vec![], faces: vec![], objects: vec![] };
    for line in text.lines() {
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let v: Vec<f64> = it.map(|s| s.parse().unwrap()).collect();
                assert_eq!(v.len(), 3);
                o.vertices.push([v[0], v[1], v[2]]);
            }
            Some("f") => {
                let f: Vec<usize> = it.map(|s| s.parse().unwrap()).collect();
                assert_eq!(f.len(), 3);
                assert!(f.iter().all(|&i| i >= 1 && i <= o.vertices.len()), "face refers ahead: {line}");
                o.faces.push([f[0], f[1], f[2]]);
            }
            Some("o") => o.objects.push(it.next().unwrap().to_string()),
            Some(c) if c.starts_with('#') => {}
            None => {}
            Some(other) => panic!("unexpected OBJ record {other}"),
        }
    }
    o
}

#[test]
fn obj_counts_and_determinism() {
    let panel = triangulate_panel(&derive_panel_geometry(&PanelParams::default()).unwrap()).unwrap();
    let one = parse_obj(&mesh_obj(&panel));
    assert_eq!((one.vertices.len(), one.faces.len(), one.objects.len()), (9, 8, 1));
    let module = assemble_module(&panel, 30.0).unwrap();
    let four = parse_obj(&mesh_obj(&module.model));
    assert_eq!((four.vertices.len(), four.faces.len()), (36, 32));
    assert_eq!(four.objects, ["panel_0", "panel_1", "panel_2", "panel_3"]);

    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.obj"), dir.path().join("b.obj"));
    export_mesh_obj(&module.model, &a).unwrap();
    export_mesh_obj(&module.model, &b).unwrap();
    assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
}

#[test]
fn manifest_records_hashes() {
    let mut m = Manifest::new("simulate", "preset = M6\n".into());
    m.add_input("curve.csv", b"abc");
    assert_eq!(m.inputs[0].sha256, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    assert_eq!(m.config_sha256, sha256_hex(b"preset = M6\n"));
    let dir = tempfile::tempdir().unwrap();
    let dest = dir.path().join("manifest.json");
    write_json(&m, &dest).unwrap();
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dest).unwrap()).unwrap();
    assert_eq!(v["tool"], "waterbomb");
    assert_eq!(v["command"], "simulate");
}
