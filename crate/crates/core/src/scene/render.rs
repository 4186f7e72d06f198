use super::{
    glint_world, pupil_center_world, Camera, EyeState, Frame, FrameTruth, SceneConfig, SensorPose,
    Vec3,
};
use crate::error::{Error, Result};

/// Minimum cosine of the incidence angle used when widening edge ramps for
/// foreshortened surfaces.
const MIN_INCIDENCE_COS: f64 = 0.15;

/// Renders a grayscale frame of the eye as seen by the camera at `pose`.
///
/// Regions are flat reflectances (pupil, iris, sclera on the eyeball sphere,
/// skin elsewhere) blended linearly over `edge_blend_px` at every boundary.
/// Each light adds a Gaussian glint at the projection of its corneal virtual
/// image; the sum is clamped to the glint saturation level.
pub fn render_frame(eye: &EyeState, pose: &SensorPose, cfg: &SceneConfig) -> Result<Frame> {
    eye.validate()?;
    pose.validate()?;
    cfg.validate()?;

    let cam = Camera::new(cfg, pose);
    let center = cam
        .project(&Vec3::zeros())
        .ok_or_else(|| Error::OutOfFrustum("eyeball centre behind the camera".into()))?;
    if !center.in_frame {
        return Err(Error::OutOfFrustum(format!(
            "eyeball centre projects to ({:.1}, {:.1}), outside {}x{}",
            center.x, center.y, cfg.width, cfg.height
        )));
    }

    let truth = FrameTruth {
        pupil_center_px: cam
            .project(&pupil_center_world(eye, cfg))
            .ok_or_else(|| Error::OutOfFrustum("pupil behind the camera".into()))?,
        cr_px: (0..cfg.light_positions.len())
            .filter_map(|k| cam.project(&glint_world(eye, pose, cfg, k)))
            .collect(),
    };

    let refl = cfg.reflectance;
    let radius = cfg.eyeball_radius;
    let gaze = eye.gaze();
    let pupil_angle = (eye.pupil_radius / radius).min(1.0).asin();
    let iris_angle = (cfg.iris_radius / radius).min(1.0).asin();
    let oc = cam.position; // eye centre is the origin
    let oc2 = oc.norm_squared();
    let f = cam.focal_px;
    let blend = cfg.edge_blend_px;

    let mut intensities = Vec::with_capacity(cfg.width * cfg.height);
    for j in 0..cfg.height {
        let v = j as f64 + 0.5;
        for i in 0..cfg.width {
            let dir = cam.ray(i as f64 + 0.5, v);
            let b = oc.dot(&dir);
            let miss2 = (oc2 - b * b).max(0.0);
            let miss = miss2.sqrt();
            // Millimetres covered by one pixel at the closest approach.
            let pix_mm = (-b).max(1e-6) / f;
            let coverage = ramp((radius - miss) / (pix_mm * blend));
            let value = if coverage <= 0.0 {
                refl.skin
            } else {
                let disc = radius * radius - miss2;
                let (hit, dist) = if disc >= 0.0 {
                    let t = -b - disc.sqrt();
                    (oc + dir * t, t)
                } else {
                    // Grazing ray just outside the silhouette: use the limb point.
                    let closest = oc + dir * (-b);
                    (closest.normalize() * radius, -b)
                };
                let normal = hit / radius;
                let incidence = (-normal.dot(&dir)).max(MIN_INCIDENCE_COS);
                let step = dist / (f * radius * incidence) * blend;
                let angle = normal.dot(&gaze).clamp(-1.0, 1.0).acos();
                let w_pupil = ramp((pupil_angle - angle) / step);
                let w_iris = ramp((iris_angle - angle) / step);
                let eye_value = refl.sclera
                    + (refl.iris - refl.sclera) * w_iris
                    + (refl.pupil - refl.iris) * w_pupil;
                refl.skin + (eye_value - refl.skin) * coverage
            };
            intensities.push(value);
        }
    }

    let mut frame = Frame { width: cfg.width, height: cfg.height, intensities, truth: None };
    add_glints(&mut frame, &truth, cfg);
    frame.truth = Some(truth);
    Ok(frame)
}

/// Linear ramp centred on zero, one unit wide.
#[inline]
fn ramp(x: f64) -> f64 {
    (x + 0.5).clamp(0.0, 1.0)
}

fn add_glints(frame: &mut Frame, truth: &FrameTruth, cfg: &SceneConfig) {
    let sigma = cfg.glint_sigma_px;
    let reach = 5.0 * sigma;
    let reach2 = reach * reach;
    let inv_two_var = 1.0 / (2.0 * sigma * sigma);
    let level = cfg.reflectance.glint;
    let (w, h) = (frame.width as f64, frame.height as f64);
    for g in &truth.cr_px {
        if g.x < -reach || g.y < -reach || g.x > w + reach || g.y > h + reach {
            continue;
        }
        let x0 = (g.x - reach).floor().max(0.0) as usize;
        let y0 = (g.y - reach).floor().max(0.0) as usize;
        let x1 = ((g.x + reach).ceil().min(w - 1.0)).max(0.0) as usize;
        let y1 = ((g.y + reach).ceil().min(h - 1.0)).max(0.0) as usize;
        for y in y0..=y1 {
            let dy = y as f64 + 0.5 - g.y;
            for x in x0..=x1 {
                let dx = x as f64 + 0.5 - g.x;
                let r2 = dx * dx + dy * dy;
                if r2 > reach2 {
                    continue;
                }
                let add = cfg.glint_gain * (-r2 * inv_two_var).exp();
                let idx = y * frame.width + x;
                frame.intensities[idx] = (frame.intensities[idx] + add).min(level);
            }
        }
    }
    for v in &mut frame.intensities {
        *v = v.clamp(0.0, 1.0);
    }
}
