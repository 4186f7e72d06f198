//! Analytic eye-scene model and renderer.
//!
//! World frame (millimetres): origin at the eyeball rotation centre, `+x`
//! towards the nasal side, `+y` downwards, `+z` out of the eye towards the
//! camera. With these axes a positive horizontal eye rotation (nasal) and a
//! positive vertical rotation (downwards) both move the pupil towards `+x`/`+y`
//! in the image.
//!
//! A sensor pose translates the whole camera + emitter assembly. `dx > 0`
//! moves it away from the nose (world `-x`) and `dy > 0` moves it up (world
//! `-y`), so the scene appears to slide towards `+x`/`+y` in the image.

mod camera;
mod pgm;
mod render;

pub use camera::Camera;
pub use pgm::{read_pgm, write_pgm};
pub use render::render_frame;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Default pupil radius used by scenario generators, mm.
pub const DEFAULT_PUPIL_RADIUS: f64 = 2.5;

/// Ground-truth eye rotation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EyeState {
    /// Horizontal rotation in degrees, positive towards the nose.
    pub theta_h: f64,
    /// Vertical rotation in degrees, positive downwards.
    pub theta_v: f64,
    /// mm
    pub pupil_radius: f64,
}

impl EyeState {
    pub fn new(theta_h: f64, theta_v: f64) -> Self {
        Self { theta_h, theta_v, pupil_radius: DEFAULT_PUPIL_RADIUS }
    }

    pub fn neutral() -> Self {
        Self::new(0.0, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta_h.abs() <= 45.0 && self.theta_v.abs() <= 45.0) {
            return Err(Error::InvalidInput(format!(
                "eye rotation ({}, {}) deg exceeds +/-45 deg",
                self.theta_h, self.theta_v
            )));
        }
        if !(self.pupil_radius > 0.5 && self.pupil_radius < 5.0) {
            return Err(Error::InvalidInput(format!(
                "pupil radius {} mm outside (0.5, 5.0)",
                self.pupil_radius
            )));
        }
        Ok(())
    }

    /// Unit gaze direction in the world frame.
    pub fn gaze(&self) -> Vec3 {
        let (sh, ch) = self.theta_h.to_radians().sin_cos();
        let (sv, cv) = self.theta_v.to_radians().sin_cos();
        Vec3::new(sh * cv, sv, ch * cv)
    }
}

/// Rigid translation of the camera + emitter assembly.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SensorPose {
    /// mm, positive away from the nasal area.
    pub dx: f64,
    /// mm, positive upwards.
    pub dy: f64,
}

impl SensorPose {
    pub fn new(dx: f64, dy: f64) -> Self {
        Self { dx, dy }
    }

    pub fn neutral() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dx.abs() <= 5.0 && self.dy.abs() <= 5.0) {
            return Err(Error::InvalidInput(format!(
                "sensor pose ({}, {}) mm exceeds +/-5 mm",
                self.dx, self.dy
            )));
        }
        Ok(())
    }

    /// World-frame translation applied to the camera and every light.
    pub fn translation(&self) -> Vec3 {
        Vec3::new(-self.dx, -self.dy, 0.0)
    }
}

/// Per-region reflectances, in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Reflectance {
    pub sclera: f64,
    pub iris: f64,
    pub pupil: f64,
    /// Saturation level of a glint spot.
    pub glint: f64,
    /// Everything outside the eyeball silhouette.
    pub skin: f64,
}

impl Default for Reflectance {
    fn default() -> Self {
        Self { sclera: 0.9, iris: 0.45, pupil: 0.05, glint: 1.0, skin: 0.7 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    /// mm
    pub eyeball_radius: f64,
    /// mm
    pub cornea_radius: f64,
    /// Distance of the corneal sphere centre in front of the rotation centre, mm.
    pub cornea_center_offset: f64,
    /// Camera distance in front of the neutral pupil centre, mm.
    pub camera_distance: f64,
    /// Camera offset below the neutral pupil centre, mm. The camera always
    /// aims at the neutral pupil centre.
    pub camera_offset_v: f64,
    /// Point lights relative to the neutral pupil centre, world axes, mm.
    pub light_positions: Vec<[f64; 3]>,
    /// Horizontal field of view, degrees.
    pub fov: f64,
    pub width: usize,
    pub height: usize,
    pub reflectance: Reflectance,
    /// mm
    pub iris_radius: f64,
    /// Gaussian glint spot width, pixels.
    pub glint_sigma_px: f64,
    /// Peak of the additive glint spot before clamping to `reflectance.glint`.
    pub glint_gain: f64,
    /// Width of the anti-aliasing ramp at region boundaries, pixels.
    pub edge_blend_px: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            eyeball_radius: 12.0,
            cornea_radius: 7.8,
            cornea_center_offset: 5.0,
            camera_distance: 50.0,
            camera_offset_v: 0.0,
            light_positions: vec![[-14.0, 10.0, 30.0], [14.0, 10.0, 30.0]],
            fov: 45.0,
            width: 320,
            height: 240,
            reflectance: Reflectance::default(),
            iris_radius: 6.0,
            glint_sigma_px: 2.0,
            glint_gain: 3.0,
            edge_blend_px: 1.0,
        }
    }
}

impl SceneConfig {
    /// Default geometry of the video camera: 1 cm under the pupil centre.
    pub fn vog_default() -> Self {
        Self { camera_offset_v: 10.0, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.width == 0 || self.height == 0 {
            return bad(format!("frame size {}x{} must be positive", self.width, self.height));
        }
        if !(self.fov > 10.0 && self.fov < 90.0) {
            return bad(format!("fov {} deg outside (10, 90)", self.fov));
        }
        let r = &self.reflectance;
        let in_unit = [r.sclera, r.iris, r.pupil, r.glint, r.skin]
            .iter()
            .all(|v| (0.0..=1.0).contains(v));
        if !in_unit || !(r.pupil < r.iris && r.iris < r.sclera && r.sclera < r.glint) {
            return bad("reflectances must lie in [0,1] with pupil < iris < sclera < glint".into());
        }
        if !(self.eyeball_radius > 0.0 && self.cornea_radius > 0.0 && self.camera_distance > 0.0) {
            return bad("eyeball radius, cornea radius and camera distance must be positive".into());
        }
        if !(self.iris_radius > 0.0 && self.iris_radius < self.eyeball_radius) {
            return bad(format!("iris radius {} mm must lie in (0, eyeball radius)", self.iris_radius));
        }
        if self.light_positions.is_empty() {
            return bad("at least one light source is required".into());
        }
        if !(self.glint_sigma_px > 0.0 && self.glint_gain >= 0.0 && self.edge_blend_px > 0.0) {
            return bad("glint sigma and edge blend must be positive".into());
        }
        Ok(())
    }

    /// Neutral pupil centre in the world frame.
    pub fn neutral_pupil_center(&self) -> Vec3 {
        Vec3::new(0.0, 0.0, self.eyeball_radius)
    }

    /// Light `index` in the world frame under `pose`.
    pub fn light_world(&self, index: usize, pose: &SensorPose) -> Vec3 {
        let [x, y, z] = self.light_positions[index];
        self.neutral_pupil_center() + Vec3::new(x, y, z) + pose.translation()
    }

    /// Focal length in pixels for the horizontal field of view.
    pub fn focal_px(&self) -> f64 {
        0.5 * self.width as f64 / (0.5 * self.fov.to_radians()).tan()
    }

    /// Angular pixel pitch used to convert visual-field degrees to pixels.
    pub fn px_per_degree(&self) -> f64 {
        self.width as f64 / self.fov
    }
}

/// A projected image point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelPoint {
    pub x: f64,
    pub y: f64,
    pub in_frame: bool,
}

/// Analytic feature positions of a rendered frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameTruth {
    pub pupil_center_px: PixelPoint,
    pub cr_px: Vec<PixelPoint>,
}

/// Row-major grayscale image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub intensities: Vec<f64>,
    pub truth: Option<FrameTruth>,
}

impl Frame {
    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self { width, height, intensities: vec![value; width * height], truth: None }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.intensities[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.intensities[y * self.width + x] = v;
    }
}

/// World position of the pupil centre: the point of the eyeball sphere on
/// the gaze axis.
pub fn pupil_center_world(eye: &EyeState, cfg: &SceneConfig) -> Vec3 {
    eye.gaze() * cfg.eyeball_radius
}

pub fn cornea_center_world(eye: &EyeState, cfg: &SceneConfig) -> Vec3 {
    eye.gaze() * cfg.cornea_center_offset
}

/// Virtual image of light `index` in the convex corneal mirror, half a
/// corneal radius behind the surface along the source-to-centre axis.
pub fn glint_world(eye: &EyeState, pose: &SensorPose, cfg: &SceneConfig, index: usize) -> Vec3 {
    let center = cornea_center_world(eye, cfg);
    let towards_light = (cfg.light_world(index, pose) - center).normalize();
    center + towards_light * (0.5 * cfg.cornea_radius)
}

fn project_checked(cam: &Camera, p: &Vec3) -> Result<PixelPoint> {
    cam.project(p)
        .ok_or_else(|| Error::OutOfFrustum("feature behind the camera".into()))
}

/// Pinhole projection of the pupil centre. An off-frame result is flagged,
/// not rejected.
pub fn pupil_center_px(eye: &EyeState, pose: &SensorPose, cfg: &SceneConfig) -> Result<PixelPoint> {
    let cam = Camera::new(cfg, pose);
    project_checked(&cam, &pupil_center_world(eye, cfg))
}

pub fn corneal_reflection_px(
    eye: &EyeState,
    pose: &SensorPose,
    cfg: &SceneConfig,
    light_index: usize,
) -> Result<PixelPoint> {
    if light_index >= cfg.light_positions.len() {
        return Err(Error::InvalidInput(format!(
            "light index {light_index} out of range ({} lights)",
            cfg.light_positions.len()
        )));
    }
    let cam = Camera::new(cfg, pose);
    project_checked(&cam, &glint_world(eye, pose, cfg, light_index))
}

/// Pixel position of the eyeball rotation centre at the neutral pose; the
/// sensor-fixed anchor for photodiode windows.
pub fn neutral_eye_anchor_px(cfg: &SceneConfig) -> (f64, f64) {
    let cam = Camera::new(cfg, &SensorPose::neutral());
    let p = cam.project(&Vec3::zeros()).expect("eye centre is in front of the camera");
    (p.x, p.y)
}

#[cfg(test)]
mod tests;
