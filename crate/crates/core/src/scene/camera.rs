use super::{PixelPoint, SceneConfig, SensorPose, Vec3};

/// Pinhole camera aimed at the neutral pupil centre. The orientation is
/// fixed by the neutral geometry, so a sensor pose is a pure translation.
#[derive(Debug, Clone)]
pub struct Camera {
    pub position: Vec3,
    pub right: Vec3,
    pub down: Vec3,
    pub forward: Vec3,
    pub focal_px: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    pub fn new(cfg: &SceneConfig, pose: &SensorPose) -> Self {
        let target = cfg.neutral_pupil_center();
        let neutral = target + Vec3::new(0.0, cfg.camera_offset_v, cfg.camera_distance);
        let forward = (target - neutral).normalize();
        let world_down = Vec3::new(0.0, 1.0, 0.0);
        let down = (world_down - forward * world_down.dot(&forward)).normalize();
        let right = Vec3::new(1.0, 0.0, 0.0);
        Self {
            position: neutral + pose.translation(),
            right,
            down,
            forward,
            focal_px: cfg.focal_px(),
            cx: 0.5 * cfg.width as f64,
            cy: 0.5 * cfg.height as f64,
            width: cfg.width,
            height: cfg.height,
        }
    }

    /// Projects a world point; `None` when it is not in front of the camera.
    pub fn project(&self, p: &Vec3) -> Option<PixelPoint> {
        let d = p - self.position;
        let z = d.dot(&self.forward);
        if z <= 1e-9 {
            return None;
        }
        let x = self.cx + self.focal_px * d.dot(&self.right) / z;
        let y = self.cy + self.focal_px * d.dot(&self.down) / z;
        let in_frame = x >= 0.0 && y >= 0.0 && x < self.width as f64 && y < self.height as f64;
        Some(PixelPoint { x, y, in_frame })
    }

    /// Unit ray through continuous pixel coordinates `(u, v)`; pixel `(i, j)`
    /// has its centre at `(i + 0.5, j + 0.5)`.
    #[inline]
    pub fn ray(&self, u: f64, v: f64) -> Vec3 {
        let f = self.focal_px;
        (self.forward + self.right * ((u - self.cx) / f) + self.down * ((v - self.cy) / f)).normalize()
    }
}
