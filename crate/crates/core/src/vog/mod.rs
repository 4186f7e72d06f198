//! Sensor-shift estimation from low-rate camera frames.
//!
//! The pupil centre moves with the eyeball while the corneal reflection
//! moves with a smaller gain under eye rotation and a larger one under
//! sensor translation. With both gains known, the sensor-induced part of
//! the pupil displacement is
//!
//! ```text
//! PC_s = (dCR - dPC * g_e) / (g_s - g_e)
//! ```
//!
//! where all displacements are measured from a reference frame at the
//! primary eye position and neutral sensor pose.

mod detect;

pub use detect::{
    detect_corneal_reflection, detect_glints, detect_pupil_center, detect_pupil_center_with, Blob,
    Detection, MIN_PUPIL_PIXELS,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::scene::{render_frame, EyeState, Frame, SceneConfig, SensorPose};
use crate::Axis;

/// Pupil displacements smaller than this are excluded from gain averages, px.
pub const MIN_SWEEP_DISPLACEMENT_PX: f64 = 0.5;

/// Default bound above which an estimate is flagged unreliable, mm.
pub const DEFAULT_MAX_SHIFT_MM: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    pub pupil_threshold: f64,
    pub glint_threshold: f64,
    pub min_pupil_px: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self { pupil_threshold: 0.15, glint_threshold: 0.97, min_pupil_px: MIN_PUPIL_PIXELS }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = |t: f64| t > 0.0 && t < 1.0;
        if !ok(self.pupil_threshold) || !ok(self.glint_threshold) {
            return Err(Error::InvalidConfig("detection thresholds must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Pupil centre and the corneal reflection closest to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackedFeatures {
    pub t: f64,
    pub pc_px: (f64, f64),
    pub cr_px: (f64, f64),
    pub pc_valid: bool,
    pub cr_valid: bool,
    /// Every detected glint, sorted by x. Used to tell which light the
    /// tracked reflection belongs to.
    pub glints: Vec<(f64, f64)>,
}

impl TrackedFeatures {
    pub fn is_valid(&self) -> bool {
        self.pc_valid && self.cr_valid
    }

    /// Position of the tracked reflection among `glints` (x order).
    pub fn cr_rank(&self) -> Option<usize> {
        self.glints.iter().position(|g| *g == self.cr_px)
    }
}

/// Detects the pupil and nearest glint on one frame.
pub fn track(frame: &Frame, det: &DetectorConfig, t: f64) -> TrackedFeatures {
    let pc = detect_pupil_center_with(frame, det.pupil_threshold, det.min_pupil_px);
    let glints = detect_glints(frame, det.glint_threshold);
    let cr = if pc.valid { detect::nearest_blob(&glints, (pc.x, pc.y)) } else { None };
    TrackedFeatures {
        t,
        pc_px: (pc.x, pc.y),
        cr_px: cr.map_or((f64::NAN, f64::NAN), |b| (b.x, b.y)),
        pc_valid: pc.valid,
        cr_valid: cr.is_some(),
        glints: glints.iter().map(|b| (b.x, b.y)).collect(),
    }
}

/// Reference glint that corresponds to the tracked reflection of `current`.
///
/// With the same number of glints as the reference, glints correspond by x
/// order. Otherwise each reference glint is predicted to have moved by
/// `gain_guess` times the pupil displacement and the nearest prediction wins.
pub fn matched_reference_glint(
    current: &TrackedFeatures,
    reference: &TrackedFeatures,
    gain_guess: f64,
) -> Option<(f64, f64)> {
    if !current.is_valid() || reference.glints.is_empty() {
        return None;
    }
    if current.glints.len() == reference.glints.len() {
        if let Some(rank) = current.cr_rank() {
            return Some(reference.glints[rank]);
        }
    }
    let dpc = (current.pc_px.0 - reference.pc_px.0, current.pc_px.1 - reference.pc_px.1);
    let d2 = |g: &(f64, f64)| {
        let px = g.0 + gain_guess * dpc.0 - current.cr_px.0;
        let py = g.1 + gain_guess * dpc.1 - current.cr_px.1;
        px * px + py * py
    };
    reference.glints.iter().min_by(|a, b| d2(a).total_cmp(&d2(b))).copied()
}

/// Pupil and reflection displacements from the reference, per axis.
fn displacements(
    current: &TrackedFeatures,
    reference: &TrackedFeatures,
    gain_guess: f64,
) -> Option<([f64; 2], [f64; 2])> {
    let ref_cr = matched_reference_glint(current, reference, gain_guess)?;
    let dpc = [current.pc_px.0 - reference.pc_px.0, current.pc_px.1 - reference.pc_px.1];
    let dcr = [current.cr_px.0 - ref_cr.0, current.cr_px.1 - ref_cr.1];
    Some((dpc, dcr))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainModel {
    /// Reflection displacement per unit pupil displacement under eye rotation, `[H, V]`.
    pub g_e: [f64; 2],
    /// The same under sensor translation.
    pub g_s: [f64; 2],
    /// Pupil displacement per mm of sensor translation, `[H, V]`.
    pub px_per_mm: [f64; 2],
    /// Features at the primary eye position and neutral pose.
    pub reference: TrackedFeatures,
}

impl GainModel {
    pub fn validate(&self) -> Result<()> {
        for axis in Axis::BOTH {
            let i = axis.index();
            let (ge, gs, ppm) = (self.g_e[i], self.g_s[i], self.px_per_mm[i]);
            if !(ge > 0.0 && ge < gs && gs < 1.2) {
                return Err(Error::BadGains(format!(
                    "{} gains must satisfy 0 < g_e < g_s < 1.2 (g_e = {ge}, g_s = {gs})",
                    axis.name()
                )));
            }
            if !(ppm > 0.0) {
                return Err(Error::BadGains(format!("{} px/mm must be positive", axis.name())));
            }
        }
        if !self.reference.is_valid() {
            return Err(Error::BadGains("reference features are invalid".into()));
        }
        Ok(())
    }

    fn gain_guess(&self) -> f64 {
        0.25 * (self.g_e[0] + self.g_e[1] + self.g_s[0] + self.g_s[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftEstimate {
    pub t: f64,
    /// mm, same sign convention as `SensorPose::dx`.
    pub x_h: f64,
    /// mm, same sign convention as `SensorPose::dy`.
    pub x_v: f64,
    /// Carried forward from an earlier frame because detection failed.
    pub stale: bool,
    /// Magnitude exceeds the configured maximum.
    pub unreliable: bool,
}

impl ShiftEstimate {
    pub fn zero(t: f64) -> Self {
        Self { t, x_h: 0.0, x_v: 0.0, stale: false, unreliable: false }
    }

    pub fn get(&self, axis: Axis) -> f64 {
        match axis {
            Axis::H => self.x_h,
            Axis::V => self.x_v,
        }
    }
}

/// Sensor-induced pupil displacement for one axis.
pub fn sensor_component(dpc: f64, dcr: f64, g_e: f64, g_s: f64) -> f64 {
    (dcr - dpc * g_e) / (g_s - g_e)
}

/// Sensor shift from one set of tracked features.
pub fn estimate_sensor_shift(features: &TrackedFeatures, gains: &GainModel) -> Result<ShiftEstimate> {
    let (dpc, dcr) = displacements(features, &gains.reference, gains.gain_guess())
        .ok_or_else(|| Error::InvalidInput("features are not valid".into()))?;
    let mm = |axis: Axis| {
        let i = axis.index();
        sensor_component(dpc[i], dcr[i], gains.g_e[i], gains.g_s[i]) / gains.px_per_mm[i]
    };
    let (x_h, x_v) = (mm(Axis::H), mm(Axis::V));
    Ok(ShiftEstimate {
        t: features.t,
        x_h,
        x_v,
        stale: false,
        unreliable: !(x_h.abs() <= DEFAULT_MAX_SHIFT_MM && x_v.abs() <= DEFAULT_MAX_SHIFT_MM),
    })
}

/// Stateful estimator: carries the previous estimate forward over frames
/// where detection fails. Single writer.
#[derive(Debug, Clone)]
pub struct ShiftEstimator {
    gains: GainModel,
    max_shift_mm: f64,
    last: Option<ShiftEstimate>,
}

impl ShiftEstimator {
    pub fn new(gains: GainModel, max_shift_mm: f64) -> Result<Self> {
        gains.validate()?;
        Ok(Self { gains, max_shift_mm, last: None })
    }

    pub fn gains(&self) -> &GainModel {
        &self.gains
    }

    pub fn update(&mut self, features: &TrackedFeatures) -> ShiftEstimate {
        let est = match estimate_sensor_shift(features, &self.gains) {
            Ok(mut e) => {
                e.unreliable = !(e.x_h.abs() <= self.max_shift_mm && e.x_v.abs() <= self.max_shift_mm);
                e
            }
            Err(_) => {
                let prev = self.last.unwrap_or_else(|| ShiftEstimate::zero(features.t));
                ShiftEstimate { t: features.t, stale: true, ..prev }
            }
        };
        self.last = Some(est);
        est
    }
}

/// Features observed while moving only the eye or only the sensor along one axis.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub axis: Axis,
    /// Degrees for eye sweeps, mm for pose sweeps.
    pub value: f64,
    pub features: TrackedFeatures,
}

/// Gain guess used to match glints while the gains are still unknown.
const SWEEP_GAIN_GUESS: f64 = 0.6;

/// Averages the gains over eye-only and sensor-only sweeps.
pub fn gains_from_sweeps(reference: TrackedFeatures, eye: &[SweepPoint], pose: &[SweepPoint]) -> Result<GainModel> {
    if !reference.is_valid() {
        return Err(Error::BadGains("reference frame has no valid pupil/reflection".into()));
    }
    let mut g_e = [0.0; 2];
    let mut g_s = [0.0; 2];
    let mut px_per_mm = [0.0; 2];
    for axis in Axis::BOTH {
        let i = axis.index();
        let ratios = |points: &[SweepPoint], per_unit: bool| -> Vec<f64> {
            points
                .iter()
                .filter(|p| p.axis == axis && p.value != 0.0)
                .filter_map(|p| {
                    let (dpc, dcr) = displacements(&p.features, &reference, SWEEP_GAIN_GUESS)?;
                    let (dpc, dcr) = (dpc[i], dcr[i]);
                    if dpc.abs() < MIN_SWEEP_DISPLACEMENT_PX {
                        return None;
                    }
                    Some(if per_unit { dpc / p.value } else { dcr / dpc })
                })
                .collect()
        };
        let mean = |v: Vec<f64>| -> Result<f64> {
            if v.is_empty() {
                return Err(Error::DegenerateSweep { axis: axis.name(), min_px: MIN_SWEEP_DISPLACEMENT_PX });
            }
            Ok(v.iter().sum::<f64>() / v.len() as f64)
        };
        g_e[i] = mean(ratios(eye, false))?;
        g_s[i] = mean(ratios(pose, false))?;
        px_per_mm[i] = mean(ratios(pose, true))?;
    }
    let model = GainModel { g_e, g_s, px_per_mm, reference };
    model.validate()?;
    Ok(model)
}

/// Renders eye-only and sensor-only sweeps on `cfg` and averages the gains.
/// Each sweep list is applied to both axes and needs at least 3 points.
pub fn estimate_gains(
    cfg: &SceneConfig,
    det: &DetectorConfig,
    eye_sweep: &[f64],
    pose_sweep: &[f64],
    exec: Execution,
) -> Result<GainModel> {
    det.validate()?;
    if eye_sweep.len() < 3 || pose_sweep.len() < 3 {
        return Err(Error::InvalidInput("gain sweeps need at least 3 points per axis".into()));
    }
    let reference = track(&render_frame(&EyeState::neutral(), &SensorPose::neutral(), cfg)?, det, 0.0);

    let mut jobs = Vec::new();
    for axis in Axis::BOTH {
        for &v in eye_sweep {
            let eye = match axis {
                Axis::H => EyeState::new(v, 0.0),
                Axis::V => EyeState::new(0.0, v),
            };
            jobs.push((true, axis, v, eye, SensorPose::neutral()));
        }
        for &v in pose_sweep {
            let pose = match axis {
                Axis::H => SensorPose::new(v, 0.0),
                Axis::V => SensorPose::new(0.0, v),
            };
            jobs.push((false, axis, v, EyeState::neutral(), pose));
        }
    }
    let observed = par::try_map(exec, &jobs, |(is_eye, axis, v, eye, pose)| {
        let frame = render_frame(eye, pose, cfg)?;
        Ok::<_, Error>((*is_eye, SweepPoint { axis: *axis, value: *v, features: track(&frame, det, 0.0) }))
    })?;
    let (eye, pose): (Vec<_>, Vec<_>) = observed.into_iter().partition(|(is_eye, _)| *is_eye);
    let strip = |v: Vec<(bool, SweepPoint)>| v.into_iter().map(|(_, p)| p).collect::<Vec<_>>();
    gains_from_sweeps(reference, &strip(eye), &strip(pose))
}

/// Default sweeps: eye +/-2.5..10 deg, sensor +/-0.5..2 mm.
pub fn default_sweeps() -> (Vec<f64>, Vec<f64>) {
    (
        vec![-10.0, -7.5, -5.0, -2.5, 2.5, 5.0, 7.5, 10.0],
        vec![-2.0, -1.5, -1.0, -0.5, 0.5, 1.0, 1.5, 2.0],
    )
}

pub const CSV_HEADER: [&str; 8] = ["t", "pc_x", "pc_y", "cr_x", "cr_y", "shift_h_mm", "shift_v_mm", "valid"];

/// One row of the VOG stream.
#[derive(Debug, Clone, PartialEq)]
pub struct VogRecord {
    pub features: TrackedFeatures,
    pub estimate: ShiftEstimate,
}

impl VogRecord {
    pub fn csv_record(&self) -> [String; 8] {
        let f = &self.features;
        [
            f.t.to_string(),
            f.pc_px.0.to_string(),
            f.pc_px.1.to_string(),
            f.cr_px.0.to_string(),
            f.cr_px.1.to_string(),
            self.estimate.x_h.to_string(),
            self.estimate.x_v.to_string(),
            (f.is_valid() as u8).to_string(),
        ]
    }
}
