//! Multirate fusion of the PSOG and VOG streams.
//!
//! The high-rate PSOG stream is smoothed with a causal moving average, the
//! low-rate shift estimates are held (zero-order hold) across the PSOG
//! samples they cover, and each sample is inverted through the calibration
//! at the held sensor position.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::calib::CalibModel;
use crate::error::{Error, Result};
use crate::psog::PsogSample;
use crate::vog::ShiftEstimate;
use crate::Axis;

/// Where the moving average is applied to the shift stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftSmoothing {
    Off,
    /// On the VOG estimates, before the hold.
    VogRate,
    /// On the held stream, at the PSOG rate.
    #[default]
    PsogRate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StreamConfig {
    /// Hz
    pub f_psog: u32,
    /// Hz
    pub f_vog: u32,
    /// Moving-average length in samples.
    pub ma_window: usize,
    /// Estimated shifts with magnitude below this are treated as zero, mm.
    pub shift_gate_mm: f64,
    pub smooth_psog: bool,
    pub shift_smoothing: ShiftSmoothing,
}

impl Default for StreamConfig {
    fn default() -> Self {
        Self {
            f_psog: 1000,
            f_vog: 5,
            ma_window: 3,
            shift_gate_mm: 0.0,
            smooth_psog: true,
            shift_smoothing: ShiftSmoothing::PsogRate,
        }
    }
}

impl StreamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.f_psog == 0 || self.f_vog == 0 || !self.f_psog.is_multiple_of(self.f_vog) {
            return Err(Error::InvalidConfig(format!(
                "PSOG rate {} Hz must be a positive multiple of the VOG rate {} Hz",
                self.f_psog, self.f_vog
            )));
        }
        if self.ma_window == 0 {
            return Err(Error::InvalidConfig("moving-average window must be at least 1".into()));
        }
        if self.shift_gate_mm.is_nan() || self.shift_gate_mm < 0.0 {
            return Err(Error::InvalidConfig("shift gate must be a non-negative number".into()));
        }
        Ok(())
    }

    /// PSOG samples per VOG sample.
    pub fn ratio(&self) -> usize {
        (self.f_psog / self.f_vog) as usize
    }

    /// Same configuration with correction disabled (sensor pinned at 0).
    pub fn traditional(&self) -> Self {
        Self { shift_gate_mm: f64::INFINITY, ..self.clone() }
    }
}

/// Causal moving average over the last `n` samples. Until `n` samples have
/// arrived it averages the available prefix.
#[derive(Debug, Clone)]
pub struct MovingAverage {
    window: VecDeque<f64>,
    n: usize,
}

impl MovingAverage {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "moving-average window must be at least 1");
        Self { window: VecDeque::with_capacity(n), n }
    }

    pub fn push(&mut self, x: f64) -> f64 {
        if self.window.len() == self.n {
            self.window.pop_front();
        }
        self.window.push_back(x);
        self.window.iter().sum::<f64>() / self.window.len() as f64
    }
}

pub fn moving_average(samples: &[f64], n: usize) -> Vec<f64> {
    let mut ma = MovingAverage::new(n);
    samples.iter().map(|&x| ma.push(x)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Held<T> {
    pub value: T,
    /// The sample is past the span its source value nominally covers.
    pub stale: bool,
}

/// Zero-order hold: source sample `k` covers output indices
/// `k * ratio .. (k + 1) * ratio`. Output past the last covered index holds
/// the final value and is flagged stale. Empty input yields empty output.
pub fn zoh_upsample<T: Clone>(samples: &[T], ratio: usize, n_out: usize) -> Vec<Held<T>> {
    assert!(ratio >= 1, "hold ratio must be at least 1");
    let Some(last) = samples.len().checked_sub(1) else {
        return Vec::new();
    };
    (0..n_out)
        .map(|i| {
            let k = i / ratio;
            Held { value: samples[k.min(last)].clone(), stale: k > last }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GazeFlags {
    /// At least one axis was inverted outside the calibrated eye domain.
    pub extrapolated: bool,
    /// The shift in use is older than its VOG interval, or was carried
    /// forward over a failed detection.
    pub stale_shift: bool,
    /// Inversion failed; the previous gaze value was repeated.
    pub inversion_failed: bool,
}

impl GazeFlags {
    pub fn bits(&self) -> u8 {
        self.extrapolated as u8 | (self.stale_shift as u8) << 1 | (self.inversion_failed as u8) << 2
    }

    pub fn from_bits(bits: u8) -> Self {
        Self { extrapolated: bits & 1 != 0, stale_shift: bits & 2 != 0, inversion_failed: bits & 4 != 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GazeSample {
    pub t: f64,
    /// degrees
    pub gaze_h: f64,
    /// degrees
    pub gaze_v: f64,
    /// Sensor position used for the inversion, mm.
    pub shift_applied: (f64, f64),
    pub flags: GazeFlags,
}

pub const CSV_HEADER: [&str; 6] = ["t", "gaze_h_deg", "gaze_v_deg", "shift_h_mm", "shift_v_mm", "flags"];

impl GazeSample {
    pub fn csv_record(&self) -> [String; 6] {
        [
            self.t.to_string(),
            self.gaze_h.to_string(),
            self.gaze_v.to_string(),
            self.shift_applied.0.to_string(),
            self.shift_applied.1.to_string(),
            self.flags.bits().to_string(),
        ]
    }
}

/// Streaming correction engine. Shift estimates are queued with
/// [`push_shift`](Self::push_shift) in VOG order; PSOG samples are consumed
/// one at a time by [`step`](Self::step) in PSOG order. State is
/// `O(ma_window)` plus whatever shifts are queued ahead.
#[derive(Debug, Clone)]
pub struct Corrector<'m> {
    model: &'m CalibModel,
    cfg: StreamConfig,
    ratio: usize,
    psog_ma: [MovingAverage; 2],
    shift_ma: [MovingAverage; 2],
    pending: VecDeque<ShiftEstimate>,
    /// Index of the VOG sample currently held, with its (smoothed) value.
    held: Option<(usize, [f64; 2], bool)>,
    index: usize,
    last_gaze: [f64; 2],
}

impl<'m> Corrector<'m> {
    pub fn new(model: &'m CalibModel, cfg: &StreamConfig) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.ma_window;
        Ok(Self {
            model,
            cfg: cfg.clone(),
            ratio: cfg.ratio(),
            psog_ma: [MovingAverage::new(n), MovingAverage::new(n)],
            shift_ma: [MovingAverage::new(n), MovingAverage::new(n)],
            pending: VecDeque::new(),
            held: None,
            index: 0,
            last_gaze: [0.0; 2],
        })
    }

    pub fn push_shift(&mut self, estimate: ShiftEstimate) {
        self.pending.push_back(estimate);
    }

    /// Advances the hold to the VOG sample covering the current index.
    fn current_shift(&mut self) -> ([f64; 2], bool) {
        let wanted = self.index / self.ratio;
        loop {
            let next = self.held.map_or(0, |(k, _, _)| k + 1);
            if next > wanted {
                break;
            }
            let Some(est) = self.pending.pop_front() else { break };
            let mut value = [est.x_h, est.x_v];
            if self.cfg.shift_smoothing == ShiftSmoothing::VogRate {
                for (v, ma) in value.iter_mut().zip(&mut self.shift_ma) {
                    *v = ma.push(*v);
                }
            }
            self.held = Some((next, value, est.stale));
        }
        match self.held {
            Some((k, value, stale)) => (value, stale || k < wanted),
            None => ([0.0; 2], true),
        }
    }

    pub fn step(&mut self, sample: &PsogSample) -> GazeSample {
        let (mut shift, mut stale) = self.current_shift();
        if self.cfg.shift_smoothing == ShiftSmoothing::PsogRate {
            for (v, ma) in shift.iter_mut().zip(&mut self.shift_ma) {
                *v = ma.push(*v);
            }
        }
        let gate = self.cfg.shift_gate_mm;
        for v in &mut shift {
            if !(v.abs() >= gate) {
                *v = 0.0;
            }
        }
        if gate.is_infinite() {
            stale = false;
        }

        let mut flags = GazeFlags { stale_shift: stale, ..Default::default() };
        let mut gaze = [0.0; 2];
        for axis in Axis::BOTH {
            let i = axis.index();
            let raw = sample.raw(axis);
            let raw = if self.cfg.smooth_psog { self.psog_ma[i].push(raw) } else { raw };
            gaze[i] = match self.model.invert(raw, shift[i], axis) {
                Ok(inv) => {
                    flags.extrapolated |= inv.out_of_range;
                    inv.x_e
                }
                Err(_) => {
                    flags.inversion_failed = true;
                    self.last_gaze[i]
                }
            };
        }
        self.last_gaze = gaze;
        self.index += 1;
        GazeSample { t: sample.t, gaze_h: gaze[0], gaze_v: gaze[1], shift_applied: (shift[0], shift[1]), flags }
    }
}

/// Batch form of [`Corrector`]: one gaze sample per PSOG sample.
pub fn correct(
    psog: &[PsogSample],
    shifts: &[ShiftEstimate],
    model: &CalibModel,
    cfg: &StreamConfig,
) -> Result<Vec<GazeSample>> {
    let mut engine = Corrector::new(model, cfg)?;
    for s in shifts {
        engine.push_shift(*s);
    }
    Ok(psog.iter().map(|s| engine.step(s)).collect())
}
