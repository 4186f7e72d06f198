use std::fmt::Write as _;
use std::path::Path;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use psv_core::calib::{model_from_text, model_to_text, FitDiagnostics};
use psv_core::eval::{
    gen_hv_scenario, gen_reading_scenario, hv_shift_events, reading_shift_events, scenario_from_csv, shift_grid,
    CalibrationMode, Fidelity, GridPoint, MetricsReport, Mode, Pipeline, Scenario, Stats,
};
use psv_core::par::Execution;
use psv_core::psog::{PhotosensorLayout, CSV_HEADER as PSOG_HEADER};
use psv_core::scan::{scan_to_csv, RenderedSource, ScanMode, ScanSpec, ScanTable};
use psv_core::scene::{render_frame, write_pgm, EyeState, SceneConfig, SensorPose};
use psv_core::vog::CSV_HEADER as VOG_HEADER;
use psv_core::{fusion, Axis};

use crate::config::{RunConfig, ScenarioKind, Thresholds};
use crate::output::{leading_comments, Outputs};
use crate::{Cli, Command, FidelityArgs, ModeArg};

/// Exit status when every command step succeeded but a threshold failed.
const THRESHOLD_FAILURE: u8 = 3;

const SCAN_FILE: &str = "scan.csv";
const MODEL_FILE: &str = "model.txt";

pub fn dispatch(cli: Cli) -> Result<ExitCode> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(out) = cli.out {
        cfg.out = out;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let exec = execution(cli.jobs)?;

    match cli.command {
        Command::Config(args) => {
            if args.print_defaults {
                print!("{}", RunConfig::default().to_toml()?);
            } else if args.show {
                print!("{}", cfg.to_toml()?);
            } else {
                bail!("nothing to do: pass --print-defaults or --show");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Render(args) => {
            let ctx = Session::new(cfg)?;
            let scene = if args.vog { &ctx.cfg.pipeline.vog_scene } else { &ctx.cfg.pipeline.scene };
            render(&ctx, scene, EyeState::new(args.theta_h, args.theta_v), SensorPose::new(args.dx, args.dy), &args.name)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Scan(args) => {
            if args.full {
                cfg.pipeline.scan.mode = ScanMode::Full;
            }
            let ctx = Session::new(cfg)?;
            let table = ensure_scan(&ctx, exec)?;
            println!("scan: {} rows -> {}", table.rows().len(), ctx.out.path(SCAN_FILE).display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Calibrate(args) => {
            apply_fidelity(&mut cfg, args.fidelity);
            if args.auto {
                cfg.pipeline.calibration.mode = CalibrationMode::Auto;
            }
            let ctx = Session::new(cfg)?;
            calibrate(&ctx, exec)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Run(args) => {
            apply_fidelity(&mut cfg, args.fidelity);
            if let Some(kind) = args.scenario {
                cfg.scenario.kind = kind;
            }
            let ctx = Session::new(cfg)?;
            let model_path = args.model.unwrap_or_else(|| ctx.out.path(MODEL_FILE));
            let pipeline = load_pipeline(&ctx, &model_path, exec)?;
            let failures = if args.shift_grid {
                run_shift_grid(&ctx, &pipeline, exec)?
            } else {
                let modes = match args.mode {
                    ModeArg::Traditional => vec![Mode::Traditional],
                    ModeArg::Corrected => vec![Mode::Corrected],
                    ModeArg::Both => vec![Mode::Traditional, Mode::Corrected],
                };
                run_scenario(&ctx, &pipeline, &modes, exec)?
            };
            if failures.is_empty() {
                println!("all thresholds passed");
                Ok(ExitCode::SUCCESS)
            } else {
                for f in &failures {
                    eprintln!("threshold failed: {f}");
                }
                Ok(ExitCode::from(THRESHOLD_FAILURE))
            }
        }
    }
}

fn execution(jobs: usize) -> Result<Execution> {
    if jobs == 1 {
        return Ok(Execution::Sequential);
    }
    #[cfg(feature = "parallel")]
    if jobs > 1 {
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global().context("configuring worker threads")?;
    }
    Ok(Execution::Parallel)
}

fn apply_fidelity(cfg: &mut RunConfig, args: FidelityArgs) {
    if args.exact {
        cfg.pipeline.fidelity = Fidelity::Exact;
    } else if args.fast {
        cfg.pipeline.fidelity = Fidelity::Fast;
    }
}

/// Validated configuration with its output directory.
struct Session {
    cfg: RunConfig,
    out: Outputs,
}

impl Session {
    fn new(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let out = Outputs::new(&cfg.out, cfg.hash()?)?;
        Ok(Self { cfg, out })
    }
}

fn render(ctx: &Session, scene: &SceneConfig, eye: EyeState, pose: SensorPose, name: &str) -> Result<()> {
    let frame = render_frame(&eye, &pose, scene)
        .with_context(|| format!("rendering eye ({}, {}) deg at sensor ({}, {}) mm", eye.theta_h, eye.theta_v, pose.dx, pose.dy))?;
    let pgm = ctx.out.path(&format!("{name}.pgm"));
    let mut bytes = Vec::new();
    write_pgm(&mut bytes, &frame, Some(&ctx.out.hash_comment()))?;
    std::fs::write(&pgm, bytes).with_context(|| format!("writing {}", pgm.display()))?;

    let truth = frame.truth.as_ref().expect("rendered frames carry truth");
    let mut body = String::new();
    writeln!(body, "theta_h_deg = {:?}", eye.theta_h)?;
    writeln!(body, "theta_v_deg = {:?}", eye.theta_v)?;
    writeln!(body, "pupil_radius_mm = {:?}", eye.pupil_radius)?;
    writeln!(body, "dx_mm = {:?}", pose.dx)?;
    writeln!(body, "dy_mm = {:?}", pose.dy)?;
    writeln!(body, "width = {}", frame.width)?;
    writeln!(body, "height = {}", frame.height)?;
    let pc = truth.pupil_center_px;
    writeln!(body, "pupil_center_px = {:?}, {:?}, {}", pc.x, pc.y, pc.in_frame)?;
    for (k, g) in truth.cr_px.iter().enumerate() {
        writeln!(body, "cr_px.{k} = {:?}, {:?}, {}", g.x, g.y, g.in_frame)?;
    }
    let sidecar = ctx.out.text(&format!("{name}.truth.txt"), "psv-frame-truth v1", &body)?;
    println!("render: {} ({}x{}), truth -> {}", pgm.display(), frame.width, frame.height, sidecar.display());
    Ok(())
}

#[derive(Serialize)]
struct ScanInputs<'a> {
    scene: &'a SceneConfig,
    layout: &'a PhotosensorLayout,
    scan: &'a ScanSpec,
}

fn scan_hash(cfg: &RunConfig) -> Result<String> {
    let p = &cfg.pipeline;
    let text = toml::to_string(&ScanInputs { scene: &p.scene, layout: &p.layout, scan: &p.scan })?;
    Ok(Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect())
}

/// Loads the scan file, resuming it when incomplete and creating it when
/// absent. A file produced from different scan inputs is an error.
fn ensure_scan(ctx: &Session, exec: Execution) -> Result<ScanTable> {
    let path = ctx.out.path(SCAN_FILE);
    let scan_line = format!("scan sha256:{}", scan_hash(&ctx.cfg)?);
    let comments = if path.exists() {
        // Drop the version line; keep the original provenance when resuming.
        let existing: Vec<String> = leading_comments(&path)?.into_iter().skip(1).collect();
        if !existing.contains(&scan_line) {
            bail!(
                "{} was produced from a different scene, layout or scan range; delete it or choose another --out",
                path.display()
            );
        }
        existing
    } else {
        vec![ctx.out.hash_comment(), scan_line]
    };
    let p = &ctx.cfg.pipeline;
    let source = RenderedSource::uncached(&p.layout, &p.scene)?;
    let chunk = 256;
    Ok(scan_to_csv(&path, &p.scan, &source, &comments, exec, chunk)?)
}

fn prepare(ctx: &Session, exec: Execution) -> Result<Pipeline> {
    let table = match ctx.cfg.pipeline.fidelity {
        Fidelity::Fast => Some(ensure_scan(ctx, exec)?),
        Fidelity::Exact => None,
    };
    Ok(Pipeline::with_table(ctx.cfg.pipeline.clone(), table, exec)?)
}

fn print_diagnostics(d: &FitDiagnostics) {
    for (name, a) in [("H", &d.h), ("V", &d.v)] {
        let stage1 = a.stage1_rms.iter().map(|r| format!("{r:.3e}")).collect::<Vec<_>>().join(" ");
        println!(
            "  {name}: stage-1 rms [{stage1}], stage-2 rms a/b/c [{:.3e} {:.3e} {:.3e}], total rms {:.3e}, max |resid| {:.3e}, monotone {}",
            a.stage2_rms[0], a.stage2_rms[1], a.stage2_rms[2], a.total_rms, a.max_abs_residual, a.monotone
        );
    }
}

fn calibrate(ctx: &Session, exec: Execution) -> Result<()> {
    let pipeline = prepare(ctx, exec)?;
    let p = &ctx.cfg.pipeline;
    let mode = match p.calibration.mode {
        CalibrationMode::GroundTruth => "ground_truth",
        CalibrationMode::Auto => "auto",
    };
    let comments = [ctx.out.hash_comment(), format!("calibration {mode}")];
    let path = ctx.out.path(MODEL_FILE);
    std::fs::write(&path, model_to_text(&pipeline.model, &comments))
        .with_context(|| format!("writing {}", path.display()))?;
    println!("calibrate ({mode}): model -> {}", path.display());
    print_diagnostics(&pipeline.calibration.diagnostics);

    if let Some(est) = &pipeline.calibration.estimated_positions {
        let mut csv = ctx.out.csv("calib_positions.csv", "psv-calib-positions v1", &["axis", "true_mm", "estimated_mm", "error_mm"])?;
        for axis in Axis::BOTH {
            for (t, e) in p.calibration.sensor_positions.iter().zip(&est[axis.index()]) {
                csv.row([axis.name().to_string(), t.to_string(), e.to_string(), (e - t).to_string()])?;
            }
        }
        println!("  estimated sensor positions -> {}", csv.finish()?.display());
    }
    if let Some(deltas) = &pipeline.calibration.coefficient_deltas {
        for axis in Axis::BOTH {
            let d: Vec<String> = deltas[axis.index()].iter().map(|v| format!("{v:.3e}")).collect();
            println!("  {} coefficient deltas (auto - nominal): {}", axis.name(), d.join(" "));
        }
    }
    Ok(())
}

fn load_pipeline(ctx: &Session, model_path: &Path, exec: Execution) -> Result<Pipeline> {
    if !model_path.exists() {
        bail!(
            "calibration model not found at {}; run `psv calibrate` with the same --config/--out first, or pass --model PATH",
            model_path.display()
        );
    }
    let text = std::fs::read_to_string(model_path).with_context(|| format!("reading {}", model_path.display()))?;
    let model = model_from_text(&text).with_context(|| format!("parsing {}", model_path.display()))?;
    if !text.contains(&ctx.out.hash) {
        eprintln!("warning: {} was calibrated under a different configuration", model_path.display());
    }
    let mut pipeline = prepare(ctx, exec)?;
    pipeline.model = model;
    Ok(pipeline)
}

fn build_scenario(cfg: &RunConfig) -> Result<Scenario> {
    let s = &cfg.scenario;
    let f = cfg.pipeline.stream.f_psog;
    let mut scenario = match s.kind {
        ScenarioKind::Hv => {
            let base = gen_hv_scenario(&s.amplitudes, s.dwell, f);
            let events = if s.shift_mm != 0.0 { hv_shift_events(&base, s.shift_mm, s.hv_event_duration) } else { Vec::new() };
            base.with_events(events)
        }
        ScenarioKind::Reading => {
            let base = gen_reading_scenario(s.lines, s.duration, cfg.seed, f);
            let events = if s.shift_mm != 0.0 {
                reading_shift_events(&base, s.shift_mm, s.shift_mm, s.reading_event_duration)
            } else {
                Vec::new()
            };
            base.with_events(events)
        }
        ScenarioKind::Csv => {
            if s.csv_path.is_empty() {
                bail!("scenario.kind = \"csv\" needs scenario.csv_path");
            }
            let file = std::fs::File::open(&s.csv_path).with_context(|| format!("opening {}", s.csv_path))?;
            scenario_from_csv(file, f).with_context(|| format!("reading {}", s.csv_path))?
        }
    };
    if s.saccade > 0.0 {
        scenario = scenario.with_min_jerk_saccades(s.saccade);
    }
    scenario.validate()?;
    Ok(scenario)
}

fn stats_line(name: &str, s: &Stats, unit: &str) -> String {
    format!("{name} = {:.4} +/- {:.4} {unit} (n = {})\n", s.mean, s.sd, s.n)
}

fn report_text(r: &MetricsReport) -> String {
    let mut s = String::new();
    s += &stats_line("accuracy_h", &r.accuracy_h, "deg");
    s += &stats_line("accuracy_v", &r.accuracy_v, "deg");
    s += &stats_line("crosstalk_hv", &r.crosstalk_hv, "%");
    s += &stats_line("crosstalk_vh", &r.crosstalk_vh, "%");
    s += &stats_line("accuracy_shifted", &r.accuracy_shifted, "deg");
    s += &stats_line("shift_error_h", &r.shift_error_h, "mm");
    s += &stats_line("shift_error_v", &r.shift_error_v, "mm");
    s += &format!("dropped_fixations = {}\n", r.dropped_fixations);
    s
}

fn check_report(r: &MetricsReport, th: &Thresholds, label: &str, failures: &mut Vec<String>) {
    let mut check = |name: &str, s: &Stats, limit: f64| {
        if s.n > 0 && !(s.mean <= limit) {
            failures.push(format!("{label} {name} {:.4} > {limit}", s.mean));
        }
    };
    check("accuracy_h", &r.accuracy_h, th.accuracy_max_deg);
    check("accuracy_v", &r.accuracy_v, th.accuracy_max_deg);
    check("crosstalk_hv", &r.crosstalk_hv, th.crosstalk_max_pct);
    check("crosstalk_vh", &r.crosstalk_vh, th.crosstalk_max_pct);
    check("accuracy_shifted", &r.accuracy_shifted, th.shifted_accuracy_max_deg);
}

fn run_scenario(ctx: &Session, pipeline: &Pipeline, modes: &[Mode], exec: Execution) -> Result<Vec<String>> {
    let scenario = build_scenario(&ctx.cfg)?;
    let exp = pipeline.run(&scenario, modes, exec)?;
    let out = &ctx.out;

    let mut truth = out.csv("truth.csv", "psv-truth v1", &["t", "theta_h_deg", "theta_v_deg", "dx_mm", "dy_mm", "phase"])?;
    for i in 0..scenario.len() {
        let (e, p) = (&scenario.eye[i], scenario.pose(i));
        let phase = format!("{:?}", scenario.phase[i]).to_lowercase();
        truth.row([scenario.time(i).to_string(), e.theta_h.to_string(), e.theta_v.to_string(), p.dx.to_string(), p.dy.to_string(), phase])?;
    }
    truth.finish()?;

    let mut psog = out.csv("psog.csv", "psv-psog v1", &PSOG_HEADER)?;
    for s in &exp.streams.psog {
        psog.row(s.csv_record())?;
    }
    psog.finish()?;

    let mut vog = out.csv("vog.csv", "psv-vog v1", &VOG_HEADER)?;
    for r in &exp.streams.vog {
        vog.row(r.csv_record())?;
    }
    vog.finish()?;

    let mut errors = out.csv("shift_errors.csv", "psv-shift-errors v1", &["t", "true_h_mm", "true_v_mm", "est_h_mm", "est_v_mm", "valid"])?;
    for r in &exp.streams.shift_errors(&scenario) {
        errors.row([r.t, r.true_h, r.true_v, r.est_h, r.est_v].map(|v| v.to_string()).into_iter().chain([(r.valid as u8).to_string()]))?;
    }
    errors.finish()?;

    let mut summary = format!(
        "scenario = {} ({} samples, {:.3} s, {} shift events)\nfidelity = {:?}\n",
        scenario.label,
        scenario.len(),
        scenario.duration(),
        scenario.events.len(),
        ctx.cfg.pipeline.fidelity
    );
    let mut failures = Vec::new();
    let checked = if modes.contains(&Mode::Corrected) { Mode::Corrected } else { Mode::Traditional };
    for run in &exp.runs {
        let name = run.mode.name();
        let mut gaze = out.csv(&format!("gaze_{name}.csv"), "psv-gaze v1", &fusion::CSV_HEADER)?;
        for g in &run.output {
            gaze.row(g.csv_record())?;
        }
        gaze.finish()?;

        let mut fix = out.csv(
            &format!("fixations_{name}.csv"),
            "psv-fixations v1",
            &["start_s", "end_s", "phase", "target_h_deg", "target_v_deg", "acc_h_deg", "acc_v_deg", "crosstalk_kind", "crosstalk_pct", "shifted_axis"],
        )?;
        for f in &run.report.fixations {
            let t = |i: usize| scenario.time(i).to_string();
            let (kind, pct) = match f.crosstalk {
                Some((k, v)) => (format!("{k:?}").to_lowercase(), v.to_string()),
                None => (String::new(), String::new()),
            };
            fix.row([
                t(f.segment.start_idx),
                t(f.segment.end_idx),
                format!("{:?}", f.segment.phase).to_lowercase(),
                f.target.0.to_string(),
                f.target.1.to_string(),
                f.acc_h.to_string(),
                f.acc_v.to_string(),
                kind,
                pct,
                f.shifted.map(|a| a.name().to_string()).unwrap_or_default(),
            ])?;
        }
        fix.finish()?;

        summary += &format!("\n[{name}]\n{}", report_text(&run.report));
        if run.mode == checked {
            check_report(&run.report, &ctx.cfg.thresholds, name, &mut failures);
        }
    }
    summary += &format!("\nthresholds ({}): {}\n", checked.name(), if failures.is_empty() { "pass" } else { "FAIL" });
    for f in &failures {
        summary += &format!("  {f}\n");
    }
    let path = out.text("summary.txt", "psv-run-summary v1", &summary)?;
    print!("{summary}");
    println!("run: outputs in {} (summary {})", out.dir.display(), path.display());
    Ok(failures)
}

fn check_grid(points: &[GridPoint], th: &Thresholds) -> Vec<String> {
    let mut failures = Vec::new();
    for p in points {
        let mm = p.shift_mm.abs();
        if mm >= th.grid_dominance_min_mm {
            for axis in Axis::BOTH {
                let i = axis.index();
                if !(p.corrected[i] < p.traditional[i]) {
                    failures.push(format!(
                        "shift {} mm {}: corrected {:.4} deg not below traditional {:.4} deg",
                        p.shift_mm,
                        axis.name(),
                        p.corrected[i],
                        p.traditional[i]
                    ));
                }
            }
        }
        if (mm - th.grid_check_mm).abs() < 1e-9 {
            if !(p.traditional_mean() >= th.grid_traditional_min_deg) {
                failures.push(format!(
                    "shift {} mm: traditional {:.4} deg below {} deg",
                    p.shift_mm,
                    p.traditional_mean(),
                    th.grid_traditional_min_deg
                ));
            }
            if !(p.corrected_mean() <= th.shifted_accuracy_max_deg) {
                failures.push(format!(
                    "shift {} mm: corrected {:.4} deg above {} deg",
                    p.shift_mm,
                    p.corrected_mean(),
                    th.shifted_accuracy_max_deg
                ));
            }
        }
    }
    failures
}

fn run_shift_grid(ctx: &Session, pipeline: &Pipeline, exec: Execution) -> Result<Vec<String>> {
    let shifts = &ctx.cfg.scenario.shift_grid;
    if shifts.is_empty() {
        bail!("scenario.shift_grid is empty");
    }
    let points = shift_grid(pipeline, shifts, ctx.cfg.scenario.hv_event_duration, exec)?;

    let mut wide = ctx.out.csv(
        "shift_grid.csv",
        "psv-shift-grid v1",
        &["shift_mm", "traditional_h_deg", "traditional_v_deg", "corrected_h_deg", "corrected_v_deg", "est_error_h_mm", "est_error_v_mm"],
    )?;
    let mut long = ctx.out.csv("shift_grid_plot.csv", "psv-shift-grid-plot v1", &["shift_mm", "axis", "mode", "accuracy_deg"])?;
    let mut summary = String::from("shift_mm  trad_h  trad_v  corr_h  corr_v  est_err_h  est_err_v\n");
    for p in &points {
        let vals = [p.shift_mm, p.traditional[0], p.traditional[1], p.corrected[0], p.corrected[1], p.estimation_error[0], p.estimation_error[1]];
        wide.row(vals.map(|v| v.to_string()))?;
        for axis in Axis::BOTH {
            for (mode, acc) in [(Mode::Traditional, &p.traditional), (Mode::Corrected, &p.corrected)] {
                long.row([p.shift_mm.to_string(), axis.name().to_string(), mode.name().to_string(), acc[axis.index()].to_string()])?;
            }
        }
        summary += &format!(
            "{:>8.2}  {:>6.3}  {:>6.3}  {:>6.3}  {:>6.3}  {:>9.4}  {:>9.4}\n",
            vals[0], vals[1], vals[2], vals[3], vals[4], vals[5], vals[6]
        );
    }
    wide.finish()?;
    long.finish()?;

    let failures = check_grid(&points, &ctx.cfg.thresholds);
    summary += &format!("\nthresholds: {}\n", if failures.is_empty() { "pass" } else { "FAIL" });
    for f in &failures {
        summary += &format!("  {f}\n");
    }
    ctx.out.text("shift_grid_summary.txt", "psv-shift-grid-summary v1", &summary)?;
    print!("{summary}");
    Ok(failures)
}

