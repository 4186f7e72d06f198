use serde::{Deserialize, Serialize};

use super::metrics::{segment_fixations, MetricsReport, ShiftErrorRecord, DEFAULT_TRIM};
use super::scenario::{gen_hv_scenario, hv_shift_events, Scenario, HV_AMPLITUDES};
use crate::calib::{default_grid_positions, fit, fit_auto, AxisGrid, CalibGrid, CalibModel, FitDiagnostics};
use crate::error::{Error, Result};
use crate::fusion::{correct, GazeSample, StreamConfig};
use crate::par::{self, Execution};
use crate::psog::{PhotosensorLayout, PsogSample};
use crate::scan::{run_scan, PsogSource, RenderedSource, ScanSpec, ScanTable, TableSource};
use crate::scene::{render_frame, EyeState, SceneConfig, SensorPose};
use crate::vog::{
    default_sweeps, estimate_gains, track, DetectorConfig, GainModel, ShiftEstimator, VogRecord, DEFAULT_MAX_SHIFT_MM,
};
use crate::Axis;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Sensor position pinned at zero.
    Traditional,
    /// VOG-corrected.
    Corrected,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Traditional => "traditional",
            Mode::Corrected => "corrected",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fidelity {
    /// PSOG samples interpolated from a dense scan table; states outside the
    /// table are rendered.
    #[default]
    Fast,
    /// Every distinct PSOG state is rendered.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationMode {
    /// Nominal sensor positions.
    #[default]
    GroundTruth,
    /// Sensor positions estimated by the VOG subsystem.
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSpec {
    /// degrees
    pub eye_positions: Vec<f64>,
    /// mm
    pub sensor_positions: Vec<f64>,
    pub mode: CalibrationMode,
}

impl Default for CalibrationSpec {
    fn default() -> Self {
        let (eye_positions, sensor_positions) = default_grid_positions();
        Self { eye_positions, sensor_positions, mode: CalibrationMode::GroundTruth }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GainSweep {
    /// degrees
    pub eye: Vec<f64>,
    /// mm
    pub pose: Vec<f64>,
}

impl Default for GainSweep {
    fn default() -> Self {
        let (eye, pose) = default_sweeps();
        Self { eye, pose }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Scene seen by the photodiodes.
    pub scene: SceneConfig,
    /// Scene seen by the VOG camera; shares the sensor pose.
    pub vog_scene: SceneConfig,
    pub layout: PhotosensorLayout,
    pub detector: DetectorConfig,
    pub stream: StreamConfig,
    pub calibration: CalibrationSpec,
    pub gain_sweep: GainSweep,
    pub scan: ScanSpec,
    pub fidelity: Fidelity,
    /// s
    pub trim: f64,
    /// mm
    pub max_shift_mm: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            scene: SceneConfig::default(),
            vog_scene: SceneConfig::vog_default(),
            layout: PhotosensorLayout::default(),
            detector: DetectorConfig::default(),
            stream: StreamConfig::default(),
            calibration: CalibrationSpec::default(),
            gain_sweep: GainSweep::default(),
            scan: ScanSpec::default(),
            fidelity: Fidelity::Fast,
            trim: DEFAULT_TRIM,
            max_shift_mm: DEFAULT_MAX_SHIFT_MM,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        self.vog_scene.validate()?;
        self.layout.validate()?;
        self.detector.validate()?;
        self.stream.validate()?;
        self.scan.validate()?;
        if !(self.trim >= 0.0) || !(self.max_shift_mm > 0.0) {
            return Err(Error::InvalidConfig("trim must be >= 0 and max shift > 0".into()));
        }
        Ok(())
    }
}

/// How the calibration was obtained.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationReport {
    pub grid: CalibGrid,
    pub diagnostics: FitDiagnostics,
    /// VOG-estimated position per sensor-position cluster, `[H, V]` (auto mode).
    pub estimated_positions: Option<[Vec<f64>; 2]>,
    /// Per axis, auto minus ground-truth coefficients (auto mode).
    pub coefficient_deltas: Option<[[f64; 9]; 2]>,
}

/// Calibrated PSOG source, gains and model.
pub struct Pipeline {
    pub cfg: PipelineConfig,
    source: Box<dyn PsogSource>,
    pub gains: GainModel,
    pub model: CalibModel,
    pub calibration: CalibrationReport,
}

impl std::fmt::Debug for Pipeline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Pipeline").field("gains", &self.gains).field("model", &self.model).finish_non_exhaustive()
    }
}

/// Measures the calibration grid: H from `i_h` with the eye and sensor
/// moving horizontally, V likewise.
pub fn measure_grid(source: &dyn PsogSource, spec: &CalibrationSpec) -> Result<CalibGrid> {
    let h = AxisGrid::measure(&spec.eye_positions, &spec.sensor_positions, |e, s| {
        Ok(source.sample(&EyeState::new(e, 0.0), &SensorPose::new(s, 0.0), 0.0)?.i_h)
    })?;
    let v = AxisGrid::measure(&spec.eye_positions, &spec.sensor_positions, |e, s| {
        Ok(source.sample(&EyeState::new(0.0, e), &SensorPose::new(0.0, s), 0.0)?.i_v)
    })?;
    Ok(CalibGrid { h, v })
}

/// VOG estimate of each sensor-position cluster of the calibration grid,
/// averaged over the cluster's eye positions.
pub fn estimate_grid_positions(
    cfg: &PipelineConfig,
    gains: &GainModel,
    spec: &CalibrationSpec,
    exec: Execution,
) -> Result<[Vec<f64>; 2]> {
    let mut jobs = Vec::new();
    for axis in Axis::BOTH {
        for &s in &spec.sensor_positions {
            for &e in &spec.eye_positions {
                let (eye, pose) = match axis {
                    Axis::H => (EyeState::new(e, 0.0), SensorPose::new(s, 0.0)),
                    Axis::V => (EyeState::new(0.0, e), SensorPose::new(0.0, s)),
                };
                jobs.push((axis, eye, pose));
            }
        }
    }
    let estimates = par::try_map(exec, &jobs, |(axis, eye, pose)| {
        let frame = render_frame(eye, pose, &cfg.vog_scene)?;
        let est = crate::vog::estimate_sensor_shift(&track(&frame, &cfg.detector, 0.0), gains)?;
        Ok::<_, Error>(est.get(*axis))
    })?;
    let per_cluster = spec.eye_positions.len();
    let means: Vec<f64> = estimates.chunks(per_cluster).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
    let n = spec.sensor_positions.len();
    Ok([means[..n].to_vec(), means[n..].to_vec()])
}

impl Pipeline {
    /// Scans (fast mode), estimates the VOG gains and calibrates.
    pub fn prepare(cfg: PipelineConfig, exec: Execution) -> Result<Self> {
        cfg.validate()?;
        let table = match cfg.fidelity {
            Fidelity::Fast => Some(run_scan(&cfg.scan, &cfg.layout, &cfg.scene, exec)?),
            Fidelity::Exact => None,
        };
        Self::with_table(cfg, table, exec)
    }

    /// As [`prepare`](Self::prepare) with an existing scan table. `None`
    /// renders every state.
    pub fn with_table(cfg: PipelineConfig, table: Option<ScanTable>, exec: Execution) -> Result<Self> {
        cfg.validate()?;
        let rendered = RenderedSource::new(&cfg.layout, &cfg.scene)?;
        let source: Box<dyn PsogSource> = match table {
            Some(t) => Box::new(TableSource::new(t, Some(Box::new(rendered)))),
            None => Box::new(rendered),
        };
        let gains = estimate_gains(&cfg.vog_scene, &cfg.detector, &cfg.gain_sweep.eye, &cfg.gain_sweep.pose, exec)?;
        let grid = measure_grid(source.as_ref(), &cfg.calibration)?;
        let (model, calibration) = match cfg.calibration.mode {
            CalibrationMode::GroundTruth => {
                let (model, diagnostics) = fit(&grid)?;
                let report = CalibrationReport { grid, diagnostics, estimated_positions: None, coefficient_deltas: None };
                (model, report)
            }
            CalibrationMode::Auto => {
                let [eh, ev] = estimate_grid_positions(&cfg, &gains, &cfg.calibration, exec)?;
                let auto = fit_auto(&grid, &eh, &ev)?;
                let report = CalibrationReport {
                    grid,
                    diagnostics: auto.diagnostics,
                    estimated_positions: Some([eh, ev]),
                    coefficient_deltas: auto.coefficient_deltas,
                };
                (auto.model, report)
            }
        };
        Ok(Self { cfg, source, gains, model, calibration })
    }

    pub fn source(&self) -> &dyn PsogSource {
        self.source.as_ref()
    }

    /// Produces the PSOG and VOG streams for a scenario. Both modes of an
    /// experiment consume these same streams.
    pub fn simulate(&self, scenario: &Scenario, exec: Execution) -> Result<Streams> {
        simulate(self, scenario, exec)
    }

    pub fn run(&self, scenario: &Scenario, modes: &[Mode], exec: Execution) -> Result<Experiment> {
        run_with(self, &self.model, scenario, modes, exec)
    }
}

/// PSOG and VOG streams of one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Streams {
    pub psog: Vec<PsogSample>,
    pub vog: Vec<VogRecord>,
}

impl Streams {
    pub fn shift_errors(&self, scenario: &Scenario) -> Vec<ShiftErrorRecord> {
        self.vog
            .iter()
            .map(|r| {
                let pose = scenario.pose_at(r.features.t);
                ShiftErrorRecord {
                    t: r.features.t,
                    true_h: pose.dx,
                    true_v: pose.dy,
                    est_h: r.estimate.x_h,
                    est_v: r.estimate.x_v,
                    valid: !r.estimate.stale,
                }
            })
            .collect()
    }
}

fn simulate(p: &Pipeline, scenario: &Scenario, exec: Execution) -> Result<Streams> {
    scenario.validate()?;
    if scenario.f_psog != p.cfg.stream.f_psog {
        return Err(Error::InvalidInput(format!(
            "scenario is sampled at {} Hz but the pipeline expects {} Hz",
            scenario.f_psog, p.cfg.stream.f_psog
        )));
    }
    let n = scenario.len();
    let psog = par::try_map_range(exec, n, |i| {
        p.source.sample(&scenario.eye[i], &scenario.pose(i), scenario.time(i))
    })?;

    let ratio = p.cfg.stream.ratio();
    let vog_idx: Vec<usize> = (0..n).step_by(ratio).collect();
    let features = par::try_map(exec, &vog_idx, |&i| {
        let frame = render_frame(&scenario.eye[i], &scenario.pose(i), &p.cfg.vog_scene)?;
        Ok::<_, Error>(track(&frame, &p.cfg.detector, scenario.time(i)))
    })?;
    let mut estimator = ShiftEstimator::new(p.gains.clone(), p.cfg.max_shift_mm)?;
    let vog = features
        .into_iter()
        .map(|f| {
            let estimate = estimator.update(&f);
            VogRecord { features: f, estimate }
        })
        .collect();
    Ok(Streams { psog, vog })
}

/// Output and metrics of one mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeRun {
    pub mode: Mode,
    pub output: Vec<GazeSample>,
    pub report: MetricsReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub streams: Streams,
    pub runs: Vec<ModeRun>,
}

impl Experiment {
    pub fn mode(&self, mode: Mode) -> Option<&ModeRun> {
        self.runs.iter().find(|r| r.mode == mode)
    }
}

fn run_with(p: &Pipeline, model: &CalibModel, scenario: &Scenario, modes: &[Mode], exec: Execution) -> Result<Experiment> {
    let streams = simulate(p, scenario, exec)?;
    let segmentation = segment_fixations(&scenario.eye, &scenario.phase, scenario.f_psog, p.cfg.trim);
    let shifts: Vec<_> = streams.vog.iter().map(|r| r.estimate).collect();
    let shift_errors = streams.shift_errors(scenario);
    let runs = modes
        .iter()
        .map(|&mode| {
            let cfg = match mode {
                Mode::Traditional => p.cfg.stream.traditional(),
                Mode::Corrected => p.cfg.stream.clone(),
            };
            let output = correct(&streams.psog, &shifts, model, &cfg)?;
            let report = MetricsReport::compute(&output, scenario, &segmentation, shift_errors.clone());
            Ok(ModeRun { mode, output, report })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Experiment { streams, runs })
}

/// Standalone entry point: runs `scenario` through a prepared pipeline in
/// each requested mode on shared streams.
pub fn run_experiment(pipeline: &Pipeline, scenario: &Scenario, modes: &[Mode], exec: Execution) -> Result<Experiment> {
    pipeline.run(scenario, modes, exec)
}

/// Default shift grid: -1.75 ..= 1.75 mm in 0.5 mm steps, plus +/-1 mm.
pub fn default_shift_grid() -> Vec<f64> {
    vec![-1.75, -1.25, -1.0, -0.75, -0.25, 0.25, 0.75, 1.0, 1.25, 1.75]
}

/// One point of the accuracy-vs-shift sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    /// mm
    pub shift_mm: f64,
    /// Accuracy on the shifted axis during the shift, `[H, V]`, degrees.
    pub traditional: [f64; 2],
    pub corrected: [f64; 2],
    /// Mean absolute shift-estimation error during the shift, `[H, V]`, mm.
    pub estimation_error: [f64; 2],
}

impl GridPoint {
    pub fn traditional_mean(&self) -> f64 {
        0.5 * (self.traditional[0] + self.traditional[1])
    }

    pub fn corrected_mean(&self) -> f64 {
        0.5 * (self.corrected[0] + self.corrected[1])
    }
}

/// HV runs with same-direction shifts of each grid magnitude: a horizontal
/// shift over the largest horizontal jumps and a vertical one over the
/// largest vertical jumps, both modes per run.
pub fn shift_grid(pipeline: &Pipeline, shifts: &[f64], event_duration: f64, exec: Execution) -> Result<Vec<GridPoint>> {
    let base = gen_hv_scenario(&HV_AMPLITUDES, 1.0, pipeline.cfg.stream.f_psog);
    par::try_map(exec, shifts, |&mm| {
        let events = hv_shift_events(&base, mm, event_duration);
        let scenario = base.clone().with_events(events.clone());
        let exp = pipeline.run(&scenario, &[Mode::Traditional, Mode::Corrected], Execution::Sequential)?;
        let axis_acc = |mode: Mode| -> [f64; 2] {
            let report = &exp.mode(mode).expect("mode was run").report;
            Axis::BOTH.map(|axis| {
                super::metrics::Stats::of(report.fixations.iter().filter(|f| f.shifted == Some(axis)).map(|f| match axis {
                    Axis::H => f.acc_h,
                    Axis::V => f.acc_v,
                }))
                .mean
            })
        };
        let errors = exp.streams.shift_errors(&scenario);
        let est_err = |axis: Axis| {
            let ev = &events[axis.index()];
            super::metrics::Stats::of(errors.iter().filter(|r| r.valid && ev.active(r.t)).map(|r| match axis {
                Axis::H => (r.est_h - r.true_h).abs(),
                Axis::V => (r.est_v - r.true_v).abs(),
            }))
            .mean
        };
        Ok::<_, Error>(GridPoint {
            shift_mm: mm,
            traditional: axis_acc(Mode::Traditional),
            corrected: axis_acc(Mode::Corrected),
            estimation_error: [est_err(Axis::H), est_err(Axis::V)],
        })
    })
}

/// Shift-estimation error on rendered frames over a grid of sensor
/// positions (both axes) at each of `eyes`.
pub fn shift_estimation_grid(
    cfg: &PipelineConfig,
    gains: &GainModel,
    shifts: &[f64],
    eyes: &[EyeState],
    exec: Execution,
) -> Result<Vec<ShiftErrorRecord>> {
    let mut jobs = Vec::new();
    for &dx in shifts {
        for &dy in shifts {
            for eye in eyes {
                jobs.push((*eye, SensorPose::new(dx, dy)));
            }
        }
    }
    par::try_map(exec, &jobs, |(eye, pose)| {
        let frame = render_frame(eye, pose, &cfg.vog_scene)?;
        let f = track(&frame, &cfg.detector, 0.0);
        let (est, valid) = match crate::vog::estimate_sensor_shift(&f, gains) {
            Ok(e) => (e, true),
            Err(_) => (crate::vog::ShiftEstimate::zero(0.0), false),
        };
        Ok::<_, Error>(ShiftErrorRecord { t: 0.0, true_h: pose.dx, true_v: pose.dy, est_h: est.x_h, est_v: est.x_v, valid })
    })
}
