use std::io::Read;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{EyeState, SensorPose};

/// Slack for comparing sample times against event boundaries, s.
const TIME_EPS: f64 = 1e-9;

/// Stimulus phase a sample belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Neutral,
    Horizontal,
    Vertical,
    /// Unconstrained movement (reading, ingested recordings).
    Free,
}

/// One planned fixation target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fixation {
    /// s
    pub start: f64,
    /// s
    pub duration: f64,
    /// degrees
    pub theta_h: f64,
    /// degrees
    pub theta_v: f64,
    pub phase: Phase,
}

/// Piecewise-constant sensor translation added on top of the neutral pose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftEvent {
    /// s
    pub start: f64,
    /// s
    pub duration: f64,
    /// mm
    pub dx: f64,
    /// mm
    pub dy: f64,
}

impl ShiftEvent {
    pub fn active(&self, t: f64) -> bool {
        t >= self.start - TIME_EPS && t < self.start + self.duration - TIME_EPS
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub label: String,
    pub f_psog: u32,
    /// One state per PSOG sample.
    pub eye: Vec<EyeState>,
    pub phase: Vec<Phase>,
    pub plan: Vec<Fixation>,
    pub events: Vec<ShiftEvent>,
}

impl Scenario {
    /// Samples the plan at `f_psog`. Fixation boundaries are rounded to the
    /// nearest sample.
    pub fn from_plan(label: impl Into<String>, plan: Vec<Fixation>, f_psog: u32) -> Self {
        let f = f64::from(f_psog);
        let mut eye = Vec::new();
        let mut phase = Vec::new();
        for fx in &plan {
            let end = ((fx.start + fx.duration) * f).round() as usize;
            while eye.len() < end {
                eye.push(EyeState::new(fx.theta_h, fx.theta_v));
                phase.push(fx.phase);
            }
        }
        Self { label: label.into(), f_psog, eye, phase, plan, events: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.eye.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eye.is_empty()
    }

    /// s
    pub fn duration(&self) -> f64 {
        self.eye.len() as f64 / f64::from(self.f_psog)
    }

    pub fn time(&self, index: usize) -> f64 {
        index as f64 / f64::from(self.f_psog)
    }

    pub fn pose_at(&self, t: f64) -> SensorPose {
        self.events.iter().filter(|e| e.active(t)).fold(SensorPose::neutral(), |p, e| {
            SensorPose::new(p.dx + e.dx, p.dy + e.dy)
        })
    }

    pub fn pose(&self, index: usize) -> SensorPose {
        self.pose_at(self.time(index))
    }

    pub fn with_events(mut self, events: Vec<ShiftEvent>) -> Self {
        self.events = events;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.f_psog == 0 || self.eye.len() != self.phase.len() {
            return Err(Error::InvalidInput("scenario tracks are inconsistent".into()));
        }
        for e in &self.eye {
            e.validate()?;
        }
        for ev in &self.events {
            if !(ev.duration >= 0.0) {
                return Err(Error::InvalidInput("shift event duration must be non-negative".into()));
            }
            self.pose_at(ev.start).validate()?;
        }
        Ok(())
    }

    /// Replaces every jump between fixations with a minimum-jerk saccade of
    /// `duration` seconds starting at the jump.
    pub fn with_min_jerk_saccades(mut self, duration: f64) -> Self {
        let m = (duration * f64::from(self.f_psog)).round() as usize;
        if m < 2 {
            return self;
        }
        let plateaus = self.eye.clone();
        for b in 1..plateaus.len() {
            let (from, to) = (plateaus[b - 1], plateaus[b]);
            if from == to {
                continue;
            }
            for k in 0..m.min(plateaus.len() - b) {
                let tau = k as f64 / m as f64;
                let s = tau.powi(3) * (10.0 - 15.0 * tau + 6.0 * tau * tau);
                self.eye[b + k] = EyeState::new(
                    from.theta_h + (to.theta_h - from.theta_h) * s,
                    from.theta_v + (to.theta_v - from.theta_v) * s,
                );
            }
        }
        self
    }
}

/// Default jump amplitudes, degrees.
pub const HV_AMPLITUDES: [f64; 4] = [2.5, 5.0, 7.5, 10.0];

/// Jumping-point stimulus: a neutral dwell, the horizontal phase (each
/// amplitude visited as +A, -A, +A, -A), a neutral dwell, the same vertical
/// phase, and two closing neutral dwells. 36 s at the defaults.
pub fn gen_hv_scenario(amplitudes: &[f64], dwell: f64, f_psog: u32) -> Scenario {
    let mut plan = Vec::new();
    let mut t = 0.0;
    let mut push = |h: f64, v: f64, phase: Phase, n: usize| {
        plan.push(Fixation { start: t, duration: dwell * n as f64, theta_h: h, theta_v: v, phase });
        t += dwell * n as f64;
    };
    push(0.0, 0.0, Phase::Neutral, 1);
    for &a in amplitudes {
        for s in [1.0, -1.0, 1.0, -1.0] {
            push(s * a, 0.0, Phase::Horizontal, 1);
        }
    }
    push(0.0, 0.0, Phase::Neutral, 1);
    for &a in amplitudes {
        for s in [1.0, -1.0, 1.0, -1.0] {
            push(0.0, s * a, Phase::Vertical, 1);
        }
    }
    push(0.0, 0.0, Phase::Neutral, 2);
    Scenario::from_plan("hv", plan, f_psog)
}

/// Shift events for the jumping-point stimulus: a horizontal shift of `mm`
/// over the horizontal block with the largest amplitude and a vertical one
/// over the vertical block with the largest amplitude, each `duration` long.
pub fn hv_shift_events(scenario: &Scenario, mm: f64, duration: f64) -> Vec<ShiftEvent> {
    let first_of_largest = |phase: Phase| {
        let amp = |f: &Fixation| match phase {
            Phase::Horizontal => f.theta_h.abs(),
            _ => f.theta_v.abs(),
        };
        let fixations = scenario.plan.iter().filter(|f| f.phase == phase);
        let largest = fixations.clone().map(amp).fold(0.0, f64::max);
        fixations.clone().find(|f| amp(f) == largest).map(|f| f.start)
    };
    let mut events = Vec::new();
    if let Some(start) = first_of_largest(Phase::Horizontal) {
        events.push(ShiftEvent { start, duration, dx: mm, dy: 0.0 });
    }
    if let Some(start) = first_of_largest(Phase::Vertical) {
        events.push(ShiftEvent { start, duration, dx: 0.0, dy: mm });
    }
    events
}

/// Synthetic reading: left-to-right fixation staircases of 2-4 degrees with
/// return sweeps and 1-2 degree line steps, kept within +/-10 degrees
/// horizontally and +/-5 vertically. After `lines` lines the text restarts
/// at the top.
pub fn gen_reading_scenario(lines: usize, duration: f64, seed: u64, f_psog: u32) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lines = lines.max(1);
    let mut plan = Vec::new();
    let mut t = 0.0;
    let top = -4.0;
    let (mut line, mut v) = (0, top);
    let mut h: f64 = rng.gen_range(-9.5..-8.0);
    while t < duration {
        let d = rng.gen_range(0.22..0.4f64).min(duration - t);
        plan.push(Fixation { start: t, duration: d, theta_h: h, theta_v: v, phase: Phase::Free });
        t += d;
        let step = rng.gen_range(2.0..4.0);
        if h + step <= 9.5 {
            h += step;
            continue;
        }
        line += 1;
        h = rng.gen_range(-9.5..-8.0);
        v += rng.gen_range(1.0..2.0);
        if line == lines || v > 4.5 {
            line = 0;
            v = top;
        }
    }
    Scenario::from_plan("reading", plan, f_psog)
}

/// One shift event of `duration` starting at the first return sweep (the
/// largest eye movement in a reading scenario), or at the start otherwise.
pub fn reading_shift_events(scenario: &Scenario, dx: f64, dy: f64, duration: f64) -> Vec<ShiftEvent> {
    let start = scenario
        .plan
        .windows(2)
        .find(|w| w[1].theta_h < w[0].theta_h)
        .map_or(0.0, |w| w[1].start);
    vec![ShiftEvent { start, duration, dx, dy }]
}

/// Ground truth read from CSV with columns `t,gaze_h_deg,gaze_v_deg` and
/// optionally `shift_h_mm,shift_v_mm`; one row per PSOG sample. Shift
/// columns become one-sample events merged over runs of equal values.
pub fn scenario_from_csv<R: Read>(input: R, f_psog: u32) -> Result<Scenario> {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    let headers = reader.headers().map_err(|e| Error::Parse(e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (Some(ch), Some(cv)) = (col("gaze_h_deg"), col("gaze_v_deg")) else {
        return Err(Error::Parse("gaze CSV needs gaze_h_deg and gaze_v_deg columns".into()));
    };
    let shift_cols = col("shift_h_mm").zip(col("shift_v_mm"));

    let f = f64::from(f_psog);
    let mut plan: Vec<Fixation> = Vec::new();
    let mut events: Vec<ShiftEvent> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        let num = |c: usize| -> Result<f64> {
            rec.get(c)
                .unwrap_or("")
                .trim()
                .parse()
                .map_err(|e| Error::Parse(format!("row {}: {e}", i + 1)))
        };
        let (h, v) = (num(ch)?, num(cv)?);
        let t = i as f64 / f;
        match plan.last_mut() {
            Some(last) if last.theta_h == h && last.theta_v == v => last.duration += 1.0 / f,
            _ => plan.push(Fixation { start: t, duration: 1.0 / f, theta_h: h, theta_v: v, phase: Phase::Free }),
        }
        if let Some((sh, sv)) = shift_cols {
            let (dx, dy) = (num(sh)?, num(sv)?);
            match events.last_mut() {
                Some(last) if last.dx == dx && last.dy == dy && (last.start + last.duration - t).abs() < 0.5 / f => {
                    last.duration += 1.0 / f
                }
                _ if dx == 0.0 && dy == 0.0 => {}
                _ => events.push(ShiftEvent { start: t, duration: 1.0 / f, dx, dy }),
            }
        }
    }
    let s = Scenario::from_plan("csv", plan, f_psog).with_events(events);
    s.validate()?;
    Ok(s)
}
