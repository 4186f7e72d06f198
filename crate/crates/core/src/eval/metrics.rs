use serde::{Deserialize, Serialize};

use super::scenario::{Phase, Scenario};
use crate::fusion::GazeSample;
use crate::scene::EyeState;

/// Default trim at each end of a fixation, s.
pub const DEFAULT_TRIM: f64 = 0.1;

/// On-axis target magnitude below which crosstalk is not computed, degrees.
pub const CROSSTALK_MIN_TARGET: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixationSegment {
    pub start_idx: usize,
    /// Exclusive.
    pub end_idx: usize,
    pub phase: Phase,
}

impl FixationSegment {
    pub fn len(&self) -> usize {
        self.end_idx - self.start_idx
    }

    pub fn is_empty(&self) -> bool {
        self.end_idx <= self.start_idx
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Segmentation {
    pub segments: Vec<FixationSegment>,
    /// Plateaus too short to survive trimming.
    pub dropped: usize,
}

/// One segment per constant plateau of the ground-truth track, trimmed by
/// `trim` seconds at both ends. Single-sample runs are treated as part of a
/// transition and ignored.
pub fn segment_fixations(eye: &[EyeState], phase: &[Phase], f_psog: u32, trim: f64) -> Segmentation {
    let trim_n = (trim * f64::from(f_psog)).round() as usize;
    let mut out = Segmentation::default();
    let mut start = 0;
    while start < eye.len() {
        let mut end = start + 1;
        while end < eye.len() && eye[end].theta_h == eye[start].theta_h && eye[end].theta_v == eye[start].theta_v {
            end += 1;
        }
        if end - start > 1 {
            if end - start > 2 * trim_n {
                out.segments.push(FixationSegment {
                    start_idx: start + trim_n,
                    end_idx: end - trim_n,
                    phase: phase.get(start).copied().unwrap_or(Phase::Free),
                });
            } else {
                out.dropped += 1;
            }
        }
        start = end;
    }
    out
}

/// Mean absolute error per axis over each segment, degrees.
pub fn accuracy(output: &[GazeSample], truth: &[EyeState], segments: &[FixationSegment]) -> Vec<Option<[f64; 2]>> {
    segments
        .iter()
        .map(|s| {
            if s.is_empty() || s.end_idx > output.len().min(truth.len()) {
                return None;
            }
            let n = s.len() as f64;
            let mut acc = [0.0; 2];
            for i in s.start_idx..s.end_idx {
                acc[0] += (output[i].gaze_h - truth[i].theta_h).abs();
                acc[1] += (output[i].gaze_v - truth[i].theta_v).abs();
            }
            Some(acc.map(|a| a / n))
        })
        .collect()
}

/// Which channel leaks into which.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CrosstalkKind {
    /// Horizontal channel during vertical movements.
    Hv,
    /// Vertical channel during horizontal movements.
    Vh,
}

/// Off-axis error relative to the on-axis target, percent. Only computed for
/// single-axis stimulus phases with an on-axis target of at least
/// [`CROSSTALK_MIN_TARGET`].
pub fn crosstalk(
    output: &[GazeSample],
    truth: &[EyeState],
    segments: &[FixationSegment],
) -> Vec<Option<(CrosstalkKind, f64)>> {
    segments
        .iter()
        .map(|s| {
            let kind = match s.phase {
                Phase::Vertical => CrosstalkKind::Hv,
                Phase::Horizontal => CrosstalkKind::Vh,
                _ => return None,
            };
            if s.is_empty() || s.end_idx > output.len().min(truth.len()) {
                return None;
            }
            let n = s.len() as f64;
            let range = s.start_idx..s.end_idx;
            let mean = |f: &dyn Fn(usize) -> f64| range.clone().map(f).sum::<f64>() / n;
            let (off_out, off_truth, on_truth) = match kind {
                CrosstalkKind::Hv => (
                    mean(&|i| output[i].gaze_h),
                    mean(&|i| truth[i].theta_h),
                    mean(&|i| truth[i].theta_v),
                ),
                CrosstalkKind::Vh => (
                    mean(&|i| output[i].gaze_v),
                    mean(&|i| truth[i].theta_v),
                    mean(&|i| truth[i].theta_h),
                ),
            };
            if on_truth.abs() < CROSSTALK_MIN_TARGET {
                return None;
            }
            Some((kind, (off_out - off_truth).abs() / on_truth.abs() * 100.0))
        })
        .collect()
}

/// Mean and sample standard deviation. Empty input gives `n == 0` with
/// zero mean and deviation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

impl Stats {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let v: Vec<f64> = values.into_iter().collect();
        let n = v.len();
        if n == 0 {
            return Self::default();
        }
        let mean = v.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, sd, n }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixationMetrics {
    pub segment: FixationSegment,
    /// degrees
    pub target: (f64, f64),
    /// degrees
    pub acc_h: f64,
    /// degrees
    pub acc_v: f64,
    pub crosstalk: Option<(CrosstalkKind, f64)>,
    /// Overlaps a shift event on this axis (`Some(H)` for a horizontal shift).
    pub shifted: Option<crate::Axis>,
}

/// One VOG-rate comparison of estimated against true sensor position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftErrorRecord {
    pub t: f64,
    pub true_h: f64,
    pub true_v: f64,
    pub est_h: f64,
    pub est_v: f64,
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub fixations: Vec<FixationMetrics>,
    pub accuracy_h: Stats,
    pub accuracy_v: Stats,
    pub crosstalk_hv: Stats,
    pub crosstalk_vh: Stats,
    /// Accuracy on the shifted axis over fixations inside shift events.
    pub accuracy_shifted: Stats,
    pub shift_errors: Vec<ShiftErrorRecord>,
    /// Absolute estimation error, mm.
    pub shift_error_h: Stats,
    pub shift_error_v: Stats,
    pub dropped_fixations: usize,
}

impl MetricsReport {
    pub fn compute(
        output: &[GazeSample],
        scenario: &Scenario,
        segmentation: &Segmentation,
        shift_errors: Vec<ShiftErrorRecord>,
    ) -> Self {
        let segs = &segmentation.segments;
        let acc = accuracy(output, &scenario.eye, segs);
        let cross = crosstalk(output, &scenario.eye, segs);
        let fixations: Vec<_> = segs
            .iter()
            .zip(acc)
            .zip(cross)
            .filter_map(|((s, a), c)| {
                let [acc_h, acc_v] = a?;
                let eye = scenario.eye[s.start_idx];
                Some(FixationMetrics {
                    segment: *s,
                    target: (eye.theta_h, eye.theta_v),
                    acc_h,
                    acc_v,
                    crosstalk: c,
                    shifted: shifted_axis(scenario, s),
                })
            })
            .collect();
        Self::from_parts(fixations, shift_errors, segmentation.dropped)
    }

    /// Aggregates from per-fixation values.
    pub fn from_parts(fixations: Vec<FixationMetrics>, shift_errors: Vec<ShiftErrorRecord>, dropped: usize) -> Self {
        let cross = |k: CrosstalkKind| {
            Stats::of(fixations.iter().filter_map(|f| f.crosstalk.filter(|c| c.0 == k).map(|c| c.1)))
        };
        let valid = || shift_errors.iter().filter(|r| r.valid);
        Self {
            accuracy_h: Stats::of(fixations.iter().map(|f| f.acc_h)),
            accuracy_v: Stats::of(fixations.iter().map(|f| f.acc_v)),
            crosstalk_hv: cross(CrosstalkKind::Hv),
            crosstalk_vh: cross(CrosstalkKind::Vh),
            accuracy_shifted: Stats::of(fixations.iter().filter_map(|f| match f.shifted? {
                crate::Axis::H => Some(f.acc_h),
                crate::Axis::V => Some(f.acc_v),
            })),
            shift_error_h: Stats::of(valid().map(|r| (r.est_h - r.true_h).abs())),
            shift_error_v: Stats::of(valid().map(|r| (r.est_v - r.true_v).abs())),
            fixations,
            shift_errors,
            dropped_fixations: dropped,
        }
    }
}

/// Axis of the shift active over the whole segment, if any.
fn shifted_axis(scenario: &Scenario, s: &FixationSegment) -> Option<crate::Axis> {
    let (a, b) = (scenario.pose(s.start_idx), scenario.pose(s.end_idx - 1));
    if a != b {
        return None;
    }
    if a.dx != 0.0 && a.dx.abs() >= a.dy.abs() {
        Some(crate::Axis::H)
    } else if a.dy != 0.0 {
        Some(crate::Axis::V)
    } else {
        None
    }
}
