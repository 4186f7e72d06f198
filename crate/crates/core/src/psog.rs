//! Four-photodiode photosensor oculography.
//!
//! Each photodiode is a Gaussian-weighted average over a square window of the
//! frame; the four outputs are combined differentially into horizontal and
//! vertical raw signals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{neutral_eye_anchor_px, Frame, SceneConfig};

/// Electron charge, C.
pub const ELECTRON_CHARGE: f64 = 1.602_176_634e-19;
/// Boltzmann constant, J/K.
pub const BOLTZMANN: f64 = 1.38e-23;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhotodiodeParams {
    /// A/W
    pub responsivity: f64,
    /// A
    pub reverse_saturation_current: f64,
    /// V
    pub bias_voltage: f64,
    /// K
    pub temperature: f64,
}

impl Default for PhotodiodeParams {
    /// Photovoltaic (zero-bias) operation at room temperature.
    fn default() -> Self {
        Self {
            responsivity: 0.5,
            reverse_saturation_current: 1e-12,
            bias_voltage: 0.0,
            temperature: 300.0,
        }
    }
}

impl PhotodiodeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) || !(self.responsivity > 0.0) {
            return Err(Error::InvalidConfig(
                "photodiode temperature and responsivity must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Thermal voltage `k_B T / q`.
    pub fn thermal_voltage(&self) -> f64 {
        BOLTZMANN * self.temperature / ELECTRON_CHARGE
    }
}

/// Current of the controlled source for `incident_power` watts.
pub fn photocurrent(incident_power: f64, params: &PhotodiodeParams) -> f64 {
    params.responsivity * incident_power
}

/// Exponential diode current at the configured bias.
pub fn diode_current(params: &PhotodiodeParams) -> f64 {
    params.reverse_saturation_current * (params.bias_voltage / params.thermal_voltage()).exp_m1()
}

/// Window centres are `(horizontal, vertical)` degrees of visual field
/// relative to the eye centre, horizontal positive nasal, vertical positive
/// down. Order is PD1 upper-nasal, PD2 upper-temporal, PD3 lower-temporal,
/// PD4 lower-nasal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhotosensorLayout {
    pub window_centers: [[f64; 2]; 4],
    /// Side of the square window, degrees.
    pub window_size: f64,
    /// Gaussian sigma as a fraction of the window side.
    pub sigma_ratio: f64,
}

impl Default for PhotosensorLayout {
    fn default() -> Self {
        Self {
            window_centers: [[4.5, -4.5], [-4.5, -4.5], [-4.5, 4.5], [4.5, 4.5]],
            window_size: 13.0,
            sigma_ratio: 0.25,
        }
    }
}

impl PhotosensorLayout {
    pub fn validate(&self) -> Result<()> {
        if !(self.window_size > 0.0 && self.sigma_ratio > 0.0) {
            return Err(Error::InvalidConfig("window size and sigma ratio must be positive".into()));
        }
        for a in 0..4 {
            for b in a + 1..4 {
                let [ax, ay] = self.window_centers[a];
                let [bx, by] = self.window_centers[b];
                if (ax - bx).abs() >= self.window_size || (ay - by).abs() >= self.window_size {
                    return Err(Error::InvalidConfig(format!(
                        "photodiode windows {} and {} do not overlap",
                        a + 1,
                        b + 1
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsogSample {
    pub t: f64,
    pub i_pd: [f64; 4],
    pub i_h: f64,
    pub i_v: f64,
}

impl PsogSample {
    /// Builds a sample, deriving the differential outputs from the four
    /// photodiodes.
    pub fn from_photodiodes(t: f64, i_pd: [f64; 4]) -> Self {
        let [p1, p2, p3, p4] = i_pd;
        Self { t, i_pd, i_h: (p1 + p4) - (p2 + p3), i_v: (p1 + p2) - (p3 + p4) }
    }

    pub fn raw(&self, axis: crate::Axis) -> f64 {
        match axis {
            crate::Axis::H => self.i_h,
            crate::Axis::V => self.i_v,
        }
    }
}

/// Precomputed, normalised Gaussian window over in-frame pixels.
#[derive(Debug, Clone)]
struct WindowKernel {
    x0: usize,
    y0: usize,
    cols: usize,
    weights: Vec<f64>,
}

impl WindowKernel {
    fn new(center_deg: [f64; 2], layout: &PhotosensorLayout, cfg: &SceneConfig) -> Result<Self> {
        let ppd = cfg.px_per_degree();
        let (ax, ay) = neutral_eye_anchor_px(cfg);
        let cx = ax + center_deg[0] * ppd;
        let cy = ay + center_deg[1] * ppd;
        let half = 0.5 * layout.window_size * ppd;
        let sigma = layout.sigma_ratio * layout.window_size * ppd;

        // Pixels whose centre lies inside the window.
        let lo = |c: f64| (c - half - 0.5).ceil().max(0.0);
        let hi = |c: f64, n: usize| (c + half - 0.5).floor().min(n as f64 - 1.0);
        let (x0, x1) = (lo(cx), hi(cx, cfg.width));
        let (y0, y1) = (lo(cy), hi(cy, cfg.height));
        if x1 < x0 || y1 < y0 {
            return Err(Error::NoUsefulInformation);
        }
        let (x0, x1, y0, y1) = (x0 as usize, x1 as usize, y0 as usize, y1 as usize);
        let cols = x1 - x0 + 1;
        let inv = 1.0 / (2.0 * sigma * sigma);
        let mut weights = Vec::with_capacity(cols * (y1 - y0 + 1));
        for y in y0..=y1 {
            let dy = y as f64 + 0.5 - cy;
            for x in x0..=x1 {
                let dx = x as f64 + 0.5 - cx;
                weights.push((-(dx * dx + dy * dy) * inv).exp());
            }
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        Ok(Self { x0, y0, cols, weights })
    }

    fn apply(&self, frame: &Frame) -> f64 {
        self.weights
            .chunks_exact(self.cols)
            .enumerate()
            .map(|(r, row)| {
                let start = (self.y0 + r) * frame.width + self.x0;
                row.iter().zip(&frame.intensities[start..start + self.cols]).map(|(w, v)| w * v).sum::<f64>()
            })
            .sum()
    }
}

/// Output of a single photodiode whose window is centred at `center`
/// (degrees relative to the eye centre).
pub fn photodiode_output(
    frame: &Frame,
    center: [f64; 2],
    layout: &PhotosensorLayout,
    cfg: &SceneConfig,
) -> Result<f64> {
    check_frame(frame, cfg)?;
    Ok(WindowKernel::new(center, layout, cfg)?.apply(frame))
}

/// Samples all four photodiodes of `layout` on `frame`.
pub fn psog_sample(frame: &Frame, layout: &PhotosensorLayout, cfg: &SceneConfig, t: f64) -> Result<PsogSample> {
    PhotosensorArray::new(layout, cfg)?.sample(frame, t)
}

fn check_frame(frame: &Frame, cfg: &SceneConfig) -> Result<()> {
    if frame.width != cfg.width || frame.height != cfg.height {
        return Err(Error::InvalidInput(format!(
            "frame is {}x{} but the scene is configured for {}x{}",
            frame.width, frame.height, cfg.width, cfg.height
        )));
    }
    Ok(())
}

/// The four photodiode windows with precomputed kernels, for repeated
/// sampling of frames rendered from one scene configuration.
#[derive(Debug, Clone)]
pub struct PhotosensorArray {
    kernels: [WindowKernel; 4],
    width: usize,
    height: usize,
}

impl PhotosensorArray {
    pub fn new(layout: &PhotosensorLayout, cfg: &SceneConfig) -> Result<Self> {
        layout.validate()?;
        cfg.validate()?;
        let k = |i: usize| WindowKernel::new(layout.window_centers[i], layout, cfg);
        Ok(Self { kernels: [k(0)?, k(1)?, k(2)?, k(3)?], width: cfg.width, height: cfg.height })
    }

    pub fn sample(&self, frame: &Frame, t: f64) -> Result<PsogSample> {
        if frame.width != self.width || frame.height != self.height {
            return Err(Error::InvalidInput("frame size does not match the photosensor array".into()));
        }
        let pd = [
            self.kernels[0].apply(frame),
            self.kernels[1].apply(frame),
            self.kernels[2].apply(frame),
            self.kernels[3].apply(frame),
        ];
        Ok(PsogSample::from_photodiodes(t, pd))
    }
}

/// CSV header of a PSOG sample stream.
pub const CSV_HEADER: [&str; 7] = ["t", "i_pd1", "i_pd2", "i_pd3", "i_pd4", "i_h", "i_v"];

impl PsogSample {
    pub fn csv_record(&self) -> [String; 7] {
        let [a, b, c, d] = self.i_pd;
        [self.t, a, b, c, d, self.i_h, self.i_v].map(|v| v.to_string())
    }
}
