//! Composite quadratic calibration.
//!
//! Per axis, raw PSOG output is modelled as a quadratic in eye position
//! whose three coefficients are themselves quadratics in sensor position:
//!
//! ```text
//! f(x_e, x_s) = a(x_s) x_e^2 + b(x_s) x_e + c(x_s)
//! a(x_s) = a1 x_s^2 + a2 x_s + a3      (b, c likewise)
//! ```
//!
//! Fitting is two-stage least squares; inversion picks the root that lies in
//! the eye domain the model was fitted on.

mod fit;
mod persist;

pub use fit::{fit, fit_auto, fit_axis, AutoFit, AxisDiagnostics, FitDiagnostics};
pub use persist::{model_from_text, model_to_text, MODEL_HEADER};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Axis;

/// Below this `|a|` (raw units / deg^2) inversion uses the linear solution.
pub const NEAR_LINEAR_EPS: f64 = 1e-12;

/// Step used when checking monotonicity across the sensor range, mm.
pub const MONOTONE_CHECK_STEP_MM: f64 = 0.1;

/// Coefficients of one low-level quadratic `k1 x^2 + k2 x + k3`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Quadratic(pub [f64; 3]);

impl Quadratic {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        let [k1, k2, k3] = self.0;
        (k1 * x + k2) * x + k3
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    /// Eye range, degrees.
    pub eye: (f64, f64),
    /// Sensor range, mm.
    pub sensor: (f64, f64),
}

impl Domain {
    pub fn contains(&self, x_e: f64, x_s: f64) -> bool {
        (self.eye.0..=self.eye.1).contains(&x_e) && (self.sensor.0..=self.sensor.1).contains(&x_s)
    }
}

/// Calibration of one axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisModel {
    pub a: Quadratic,
    pub b: Quadratic,
    pub c: Quadratic,
    pub domain: Domain,
}

/// Result of [`AxisModel::invert`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inversion {
    /// Eye position, degrees.
    pub x_e: f64,
    /// The raw value has no preimage inside the eye domain; `x_e` is the
    /// continuation of the in-domain branch, clamped.
    pub out_of_range: bool,
}

impl AxisModel {
    /// Top-level coefficients `(a, b, c)` at sensor position `x_s`.
    pub fn top_level(&self, x_s: f64) -> (f64, f64, f64) {
        (self.a.eval(x_s), self.b.eval(x_s), self.c.eval(x_s))
    }

    pub fn forward(&self, x_e: f64, x_s: f64) -> f64 {
        let (a, b, c) = self.top_level(x_s);
        (a * x_e + b) * x_e + c
    }

    /// Like [`forward`](Self::forward) but also reports whether the point
    /// lies outside the fitted domain.
    pub fn forward_checked(&self, x_e: f64, x_s: f64) -> (f64, bool) {
        (self.forward(x_e, x_s), !self.domain.contains(x_e, x_s))
    }

    /// Maximum distance an out-of-range inversion may extrapolate beyond the
    /// eye domain.
    pub fn extrapolation_margin(&self) -> f64 {
        0.5 * (self.domain.eye.1 - self.domain.eye.0)
    }

    /// Checks that `d f / d x_e` keeps a strict sign over the eye domain for
    /// every sensor position in the domain, sampled at 0.1 mm.
    pub fn check_monotone(&self) -> Result<()> {
        let (lo, hi) = self.domain.sensor;
        let steps = ((hi - lo) / MONOTONE_CHECK_STEP_MM).ceil().max(0.0) as usize;
        for k in 0..=steps {
            let x_s = (lo + k as f64 * MONOTONE_CHECK_STEP_MM).min(hi);
            if !self.is_monotone_at(x_s) {
                return Err(Error::NonMonotone { sensor_mm: x_s });
            }
        }
        Ok(())
    }

    pub fn is_monotone_at(&self, x_s: f64) -> bool {
        let (a, b, _) = self.top_level(x_s);
        let (e0, e1) = self.domain.eye;
        let d0 = 2.0 * a * e0 + b;
        let d1 = 2.0 * a * e1 + b;
        (d0 > 0.0 && d1 > 0.0) || (d0 < 0.0 && d1 < 0.0)
    }

    /// Solves `f(x_e, x_s) = raw` for `x_e`.
    ///
    /// Exactly one root inside the eye domain is returned as is. Two roots
    /// inside means the curve folds over the domain and is an error. With no
    /// root inside, the root on the same monotone branch as the domain is
    /// returned, clamped to the extrapolation margin and flagged; complex
    /// roots yield the flagged vertex.
    pub fn invert(&self, raw: f64, x_s: f64) -> Result<Inversion> {
        let (a, b, c) = self.top_level(x_s);
        let (lo, hi) = self.domain.eye;
        let margin = self.extrapolation_margin();
        let tol = 1e-9 * (hi - lo).abs().max(1.0);
        let inside = |x: f64| x >= lo - tol && x <= hi + tol;
        let clamp_ext = |x: f64| x.clamp(lo - margin, hi + margin);
        let cc = c - raw;

        if a.abs() < NEAR_LINEAR_EPS {
            if b.abs() < NEAR_LINEAR_EPS {
                return Err(Error::Unsolvable);
            }
            let x = -cc / b;
            return Ok(if inside(x) {
                Inversion { x_e: x, out_of_range: false }
            } else {
                Inversion { x_e: clamp_ext(x), out_of_range: true }
            });
        }

        let vertex = -b / (2.0 * a);
        let mid = 0.5 * (lo + hi);
        // The monotone branch containing the domain lies on this side of the vertex.
        let branch_right = mid >= vertex;
        let clamp_branch = |x: f64| {
            let x = clamp_ext(x);
            if branch_right {
                x.max(vertex)
            } else {
                x.min(vertex)
            }
        };

        let disc = b * b - 4.0 * a * cc;
        if disc < 0.0 {
            return Ok(Inversion { x_e: clamp_ext(vertex), out_of_range: true });
        }
        let sq = disc.sqrt();
        let q = -0.5 * (b + b.signum() * sq);
        let r1 = q / a;
        let r2 = if q != 0.0 { cc / q } else { r1 };

        match (inside(r1), inside(r2)) {
            (true, true) if (r1 - r2).abs() > tol => Err(Error::NonMonotone { sensor_mm: x_s }),
            (true, _) => Ok(Inversion { x_e: r1, out_of_range: false }),
            (false, true) => Ok(Inversion { x_e: r2, out_of_range: false }),
            (false, false) => {
                let on_branch = |x: f64| if branch_right { x >= vertex } else { x <= vertex };
                let root = match (on_branch(r1), on_branch(r2)) {
                    (true, false) => r1,
                    (false, true) => r2,
                    // Both on the branch only when they coincide at the vertex.
                    _ => vertex,
                };
                Ok(Inversion { x_e: clamp_branch(root), out_of_range: true })
            }
        }
    }
}

/// Calibration for both axes. The horizontal model maps horizontal eye
/// position and horizontal sensor position to `i_h`; the vertical one does
/// the same for `i_v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibModel {
    pub h: AxisModel,
    pub v: AxisModel,
}

impl CalibModel {
    pub fn axis(&self, axis: Axis) -> &AxisModel {
        match axis {
            Axis::H => &self.h,
            Axis::V => &self.v,
        }
    }

    pub fn forward(&self, x_e: f64, x_s: f64, axis: Axis) -> f64 {
        self.axis(axis).forward(x_e, x_s)
    }

    pub fn invert(&self, raw: f64, x_s: f64, axis: Axis) -> Result<Inversion> {
        self.axis(axis).invert(raw, x_s)
    }

    pub fn check_monotone(&self) -> Result<()> {
        self.h.check_monotone()?;
        self.v.check_monotone()
    }
}

/// Calibration measurements for one axis, sensor-major:
/// `raw[s * eye_positions.len() + e]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisGrid {
    /// degrees
    pub eye_positions: Vec<f64>,
    /// mm
    pub sensor_positions: Vec<f64>,
    pub raw: Vec<f64>,
}

impl AxisGrid {
    /// Builds a grid by evaluating `measure(x_e, x_s)` at every pair.
    pub fn measure<F>(eye_positions: &[f64], sensor_positions: &[f64], mut measure: F) -> Result<Self>
    where
        F: FnMut(f64, f64) -> Result<f64>,
    {
        let mut raw = Vec::with_capacity(eye_positions.len() * sensor_positions.len());
        for &s in sensor_positions {
            for &e in eye_positions {
                raw.push(measure(e, s)?);
            }
        }
        Ok(Self { eye_positions: eye_positions.to_vec(), sensor_positions: sensor_positions.to_vec(), raw })
    }

    pub fn at(&self, sensor_idx: usize, eye_idx: usize) -> f64 {
        self.raw[sensor_idx * self.eye_positions.len() + eye_idx]
    }

    pub fn validate(&self) -> Result<()> {
        if self.raw.len() != self.eye_positions.len() * self.sensor_positions.len() {
            return Err(Error::InvalidInput(format!(
                "grid holds {} measurements, expected {} x {}",
                self.raw.len(),
                self.eye_positions.len(),
                self.sensor_positions.len()
            )));
        }
        if self.raw.iter().chain(&self.eye_positions).chain(&self.sensor_positions).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("calibration grid contains non-finite values".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibGrid {
    pub h: AxisGrid,
    pub v: AxisGrid,
}

impl CalibGrid {
    pub fn axis(&self, axis: Axis) -> &AxisGrid {
        match axis {
            Axis::H => &self.h,
            Axis::V => &self.v,
        }
    }
}

/// Default calibration positions: eye {-10, 0, +10} deg, sensor {-2, 0, +2} mm.
pub fn default_grid_positions() -> (Vec<f64>, Vec<f64>) {
    (vec![-10.0, 0.0, 10.0], vec![-2.0, 0.0, 2.0])
}
