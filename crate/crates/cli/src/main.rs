use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::json;

use waterbomb::analysis::{
    constant_force_range_xy, sweep_trends, torsional_stiffness_xy, Family, SweepEntry, DEFAULT_BAND, DEFAULT_BASELINE,
    DEFAULT_TWIST_WINDOW,
};
use waterbomb::geometry::sector_angles;
use waterbomb::io::export::{
    curve_csv, export_crease_svg, export_mesh_obj, read_curve_csv, write_json, ExportError, Manifest,
};
use waterbomb::io::presets::{family_members, family_parameter};
use waterbomb::io::{parse_config, ConfigError, Format, RunConfig};
use waterbomb::run::{build, simulate, summarize, RunError, Simulation};
use waterbomb::solver::{LoadKind, SolverError};

#[derive(Parser)]
#[command(name = "waterbomb", version, about = "Waterbomb origami panel and module simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Run configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named parameter set (M1..M22, Ma, Mb, Mc).
    #[arg(long)]
    preset: Option<String>,
    /// Output directory; overrides `[output] dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Derive the panel geometry and its crease pattern.
    Geom(Common),
    /// Build the bar-and-hinge model.
    Mesh(Common),
    /// Trace the configured load case.
    Simulate(Common),
    /// Simulate every member of a parameter family.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// dist | alpha | tc | scale
        #[arg(long)]
        family: String,
        /// Concurrent runs.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Post-process a curve file written by `simulate`.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Curve CSV to analyse.
        #[arg(long)]
        curve: PathBuf,
        #[arg(long, default_value_t = DEFAULT_BASELINE)]
        baseline: f64,
        #[arg(long, default_value_t = DEFAULT_BAND)]
        band: f64,
        /// Twist window in degrees for the stiffness fit.
        #[arg(long, default_value_t = DEFAULT_TWIST_WINDOW)]
        window: f64,
    },
    /// Write the crease pattern, mesh and geometry files.
    Export(Common),
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(message: impl ToString) -> Self {
        Self { code: 1, message: message.to_string() }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::input(e)
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        Self { code: e.exit_code() as u8, message: e.to_string() }
    }
}

impl From<ExportError> for Failure {
    fn from(e: ExportError) -> Self {
        Failure::input(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::input(e)
    }
}

type Outcome = Result<(), Failure>;

fn incomplete(sim: &Simulation) -> Failure {
    Failure { code: 2, message: format!("path stopped before the target: {:?}", sim.path.status) }
}

/// Resolved configuration plus what it was read from.
struct Context {
    cfg: RunConfig,
    text: String,
    input: Option<(String, Vec<u8>)>,
    out: PathBuf,
}

fn config_text(common: &Common) -> Result<(String, Option<(String, Vec<u8>)>), Failure> {
    let mut text = String::new();
    if let Some(p) = &common.preset {
        text.push_str(&format!("preset = {p}\n"));
    }
    let mut input = None;
    if let Some(path) = &common.config {
        let bytes = fs::read(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
        let body = String::from_utf8(bytes.clone()).map_err(|_| Failure::input(format!("{}: not UTF-8", path.display())))?;
        if common.preset.is_some() && body.lines().any(|l| l.split('#').next().unwrap_or("").trim_start().starts_with("preset")) {
            return Err(Failure::input("`--preset` conflicts with the `preset` line in the config file"));
        }
        input = Some((path.display().to_string(), bytes));
        text.push_str(&body);
    }
    Ok((text, input))
}

fn context(common: &Common) -> Result<Context, Failure> {
    let (text, input) = config_text(common)?;
    let cfg = parse_config(&text).map_err(|e| match (&e, &common.preset) {
        // line numbers refer to the file, which follows the injected preset line
        (ConfigError::Parse { line, column, message }, Some(_)) => {
            Failure::input(ConfigError::Parse { line: line - 1, column: *column, message: message.clone() })
        }
        _ => Failure::input(e),
    })?;
    let out = common.out.clone().or_else(|| cfg.output.dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&out).map_err(|e| Failure::input(format!("{}: {e}", out.display())))?;
    Ok(Context { cfg, text, input, out })
}

impl Context {
    fn manifest(&self, command: &str) -> Manifest {
        let mut m = Manifest::new(command, self.cfg.to_text());
        if let Some((name, bytes)) = &self.input {
            m.add_input(name, bytes);
        }
        m
    }

    fn wants(&self, f: Format) -> bool {
        self.cfg.output.formats.contains(&f)
    }
}

fn finish(dir: &Path, mut manifest: Manifest, outputs: Vec<&str>) -> Outcome {
    manifest.outputs = outputs.into_iter().map(String::from).collect();
    write_json(&manifest, &dir.join("manifest.json"))?;
    Ok(())
}

fn geom(common: &Common) -> Outcome {
    let ctx = context(common)?;
    let built = build(&ctx.cfg)?;
    let g = &built.geometry;
    let mut outputs = Vec::new();
    if ctx.wants(Format::Json) {
        let report = json!({
            "params": g.params,
            "h1": g.h1,
            "h2": g.h2,
            "t": g.t,
            "theta_deg": g.theta.to_degrees(),
            "l_em": g.l_em,
            "p": g.p,
            "x": g.x,
            "dist_built": g.dist_built,
            "h1_closed_form_minus_exact": g.h1_discrepancy,
            "vertices": g.vertices,
            "developed": g.developed,
            "sector_angles_deg": {
                "gamma1": sector_angles(g).gamma1.to_degrees(),
                "gamma2": sector_angles(g).gamma2.to_degrees(),
                "beta1": sector_angles(g).beta1.to_degrees(),
                "beta2": sector_angles(g).beta2.to_degrees(),
            },
            "foldability": built.foldability,
        });
        write_json(&report, &ctx.out.join("geometry.json"))?;
        outputs.push("geometry.json");
    }
    if ctx.wants(Format::Svg) {
        export_crease_svg(g, &ctx.out.join("crease.svg"))?;
        outputs.push("crease.svg");
    }
    println!("h1 = {:.6} mm, h2 = {:.6} mm, t = {:.6}", g.h1, g.h2, g.t);
    for name in built.foldability.failures() {
        println!("foldability constraint `{name}` not satisfied");
    }
    finish(&ctx.out, ctx.manifest("geom"), outputs)
}

fn mesh(common: &Common) -> Outcome {
    let ctx = context(common)?;
    let built = build(&ctx.cfg)?;
    let m = &built.model;
    let mut outputs = Vec::new();
    if ctx.wants(Format::Obj) {
        export_mesh_obj(m, &ctx.out.join("mesh.obj"))?;
        outputs.push("mesh.obj");
    }
    if ctx.wants(Format::Json) {
        let summary = json!({
            "panels": m.panels.len(),
            "nodes": m.nodes.len(),
            "bars": m.bars.len(),
            "hinges": m.hinges.len(),
            "triangles": m.triangles.len(),
            "euler_characteristic": m.euler_characteristic(),
            "total_bar_length_mm": m.total_bar_length(),
            "bars_detail": m.bars,
            "hinges_detail": m.hinges,
        });
        write_json(&summary, &ctx.out.join("mesh.json"))?;
        outputs.push("mesh.json");
    }
    println!("{} panels, {} nodes, {} bars, {} hinges", m.panels.len(), m.nodes.len(), m.bars.len(), m.hinges.len());
    finish(&ctx.out, ctx.manifest("mesh"), outputs)
}

/// Writes curve and report for a finished or partial run into `dir`.
fn write_run(dir: &Path, ctx: &Context, sim: Result<&Simulation, &RunError>) -> Result<Vec<&'static str>, Failure> {
    let mut outputs = Vec::new();
    let (path, report, error) = match sim {
        Ok(s) => (Some(&s.path), Some(s.report.clone()), None),
        Err(RunError::Solver(SolverError::StepCollapse { path, .. })) => {
            (Some(path.as_ref()), Some(summarize(&ctx.cfg, path, None)), Some(sim.err().unwrap().to_string()))
        }
        Err(e) => (None, None, Some(e.to_string())),
    };
    if let Some(p) = path.filter(|p| !p.samples.is_empty()) {
        if ctx.wants(Format::Csv) {
            fs::write(dir.join("curve.csv"), curve_csv(p)?)?;
            outputs.push("curve.csv");
        }
    }
    if ctx.wants(Format::Json) {
        write_json(&json!({ "report": report, "error": error }), &dir.join("report.json"))?;
        outputs.push("report.json");
    }
    Ok(outputs)
}

fn simulate_cmd(common: &Common) -> Outcome {
    let ctx = context(common)?;
    let result = simulate(&ctx.cfg);
    let outputs = write_run(&ctx.out, &ctx, result.as_ref())?;
    finish(&ctx.out, ctx.manifest("simulate"), outputs)?;
    let sim = result?;
    let r = &sim.report;
    if !sim.path.is_complete() {
        return Err(incomplete(&sim));
    }
    println!("{} samples in {} steps", r.samples, r.steps);
    if let Some(cf) = &r.constant_force {
        println!(
            "constant force {:.4} N over strain [{:.4}, {:.4}], fluctuation {:.2}%",
            cf.plateau_force,
            cf.range[0],
            cf.range[1],
            100.0 * cf.fluctuation
        );
    }
    if let Some(k) = r.torsional_stiffness {
        println!("torsional stiffness {k:.6} N m/deg");
    }
    Ok(())
}

fn sweep(common: &Common, family: &str, jobs: usize) -> Outcome {
    let family = Family::parse(family).ok_or_else(|| Failure::input(format!("unknown family `{family}`; use dist|alpha|tc|scale")))?;
    if common.preset.is_some() {
        return Err(Failure::input("`--preset` cannot be combined with `sweep`; the family fixes the presets"));
    }
    let base = context(common)?;
    let members = family_members(family);
    let contexts: Vec<(String, Context)> = members
        .iter()
        .map(|label| {
            let text = format!("preset = {label}\n{}", base.text);
            let cfg = parse_config(&text)?;
            let out = base.out.join(label);
            fs::create_dir_all(&out)?;
            Ok((label.clone(), Context { cfg, text, input: base.input.clone(), out }))
        })
        .collect::<Result<_, Failure>>()?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Failure::input(e))?;
    let results: Vec<(String, Result<Simulation, RunError>)> =
        pool.install(|| contexts.par_iter().map(|(l, c)| (l.clone(), simulate(&c.cfg))).collect());

    let mut entries = Vec::new();
    let mut worst: Option<Failure> = None;
    for ((label, ctx), (_, result)) in contexts.iter().zip(&results) {
        let outputs = write_run(&ctx.out, ctx, result.as_ref())?;
        finish(&ctx.out, ctx.manifest("sweep"), outputs)?;
        match result {
            Ok(sim) if !sim.path.is_complete() => {
                println!("{label}: {:?}", sim.path.status);
                worst = Some(incomplete(sim));
            }
            Ok(sim) => match &sim.report.constant_force {
                Some(cf) => {
                    println!("{label}: constant force {:.4} N", cf.plateau_force);
                    entries.push(SweepEntry {
                        label: label.clone(),
                        family,
                        parameter: family_parameter(family, label).unwrap_or(f64::NAN),
                        report: *cf,
                    });
                }
                None => println!("{label}: no constant-force range"),
            },
            Err(e) => {
                println!("{label}: {e}");
                worst = Some(Failure { code: e.exit_code() as u8, message: format!("{label}: {e}") });
            }
        }
    }
    let groups = vec![(family, members.clone())];
    let summary = match sweep_trends(&entries, &groups) {
        Ok(report) => {
            for v in &report.verdicts {
                println!("{}: expected {:?}, observed {:?} -> {}", v.family.name(), v.expected, v.observed, if v.passed { "pass" } else { "fail" });
            }
            for (f, fit) in &report.fits {
                println!("{}: slope {:.5}, intercept {:.5}, R^2 {:.4}", f.name(), fit.slope, fit.intercept, fit.r2);
            }
            json!({ "family": family.name(), "sweep": report })
        }
        Err(e) => json!({ "family": family.name(), "entries": entries, "error": e.to_string() }),
    };
    write_json(&summary, &base.out.join("sweep.json"))?;
    finish(&base.out, base.manifest("sweep"), vec!["sweep.json"])?;
    match worst {
        Some(f) => Err(f),
        None => Ok(()),
    }
}

fn analyze(common: &Common, curve: &Path, baseline: f64, band: f64, window: f64) -> Outcome {
    let ctx = context(common)?;
    let bytes = fs::read(curve).map_err(|e| Failure::input(format!("{}: {e}", curve.display())))?;
    let data = read_curve_csv(curve)?;
    let (xs, ys) = (data.controls(), data.reactions());
    let result = match data.kind {
        LoadKind::Compression => constant_force_range_xy(&xs, &ys, baseline, band).map(|r| {
            println!("constant force {:.4} N over strain [{:.4}, {:.4}]", r.plateau_force, r.range[0], r.range[1]);
            json!({ "kind": data.kind, "constant_force": r })
        }),
        LoadKind::Torsion => torsional_stiffness_xy(&xs, &ys, window).map(|k| {
            println!("torsional stiffness {k:.6} N m/deg");
            json!({ "kind": data.kind, "window_deg": window, "torsional_stiffness_Nm_per_deg": k })
        }),
    }
    .map_err(Failure::input)?;
    write_json(&result, &ctx.out.join("analysis.json"))?;
    let mut m = ctx.manifest("analyze");
    m.add_input(&curve.display().to_string(), &bytes);
    finish(&ctx.out, m, vec!["analysis.json"])
}

fn export(common: &Common) -> Outcome {
    let ctx = context(common)?;
    let built = build(&ctx.cfg)?;
    let mut outputs = Vec::new();
    if ctx.wants(Format::Svg) {
        export_crease_svg(&built.geometry, &ctx.out.join("crease.svg"))?;
        outputs.push("crease.svg");
    }
    if ctx.wants(Format::Obj) {
        export_mesh_obj(&built.model, &ctx.out.join("mesh.obj"))?;
        outputs.push("mesh.obj");
    }
    if ctx.wants(Format::Json) {
        write_json(&json!({ "config": ctx.cfg }), &ctx.out.join("config.json"))?;
        outputs.push("config.json");
    }
    finish(&ctx.out, ctx.manifest("export"), outputs)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match &cli.command {
        Command::Geom(c) => geom(c),
        Command::Mesh(c) => mesh(c),
        Command::Simulate(c) => simulate_cmd(c),
        Command::Sweep { common, family, jobs } => sweep(common, family, *jobs),
        Command::Analyze { common, curve, baseline, band, window } => analyze(common, curve, *baseline, *band, *window),
        Command::Export(c) => export(c),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
