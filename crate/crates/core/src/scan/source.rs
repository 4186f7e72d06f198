use std::collections::HashMap;
use std::sync::Mutex;

use super::{ScanPoint, ScanTable};
use crate::error::{Error, Result};
use crate::psog::{PhotosensorArray, PhotosensorLayout, PsogSample};
use crate::scene::{render_frame, EyeState, SceneConfig, SensorPose};

/// Anything that can produce the four photodiode outputs for an eye state
/// and sensor pose.
pub trait PsogSource: Send + Sync {
    fn photodiodes(&self, eye: &EyeState, pose: &SensorPose) -> Result<[f64; 4]>;

    fn sample(&self, eye: &EyeState, pose: &SensorPose, t: f64) -> Result<PsogSample> {
        Ok(PsogSample::from_photodiodes(t, self.photodiodes(eye, pose)?))
    }
}

/// Renders a frame per query. Results are memoised unless built with
/// [`uncached`](Self::uncached); scenarios dwell on a few states for
/// thousands of samples.
#[derive(Debug)]
pub struct RenderedSource {
    cfg: SceneConfig,
    array: PhotosensorArray,
    cache: Option<Mutex<HashMap<[u64; 5], [f64; 4]>>>,
}

impl RenderedSource {
    pub fn new(layout: &PhotosensorLayout, cfg: &SceneConfig) -> Result<Self> {
        Ok(Self { cache: Some(Mutex::new(HashMap::new())), ..Self::uncached(layout, cfg)? })
    }

    pub fn uncached(layout: &PhotosensorLayout, cfg: &SceneConfig) -> Result<Self> {
        Ok(Self { cfg: cfg.clone(), array: PhotosensorArray::new(layout, cfg)?, cache: None })
    }

    fn render(&self, eye: &EyeState, pose: &SensorPose) -> Result<[f64; 4]> {
        Ok(self.array.sample(&render_frame(eye, pose, &self.cfg)?, 0.0)?.i_pd)
    }
}

impl PsogSource for RenderedSource {
    fn photodiodes(&self, eye: &EyeState, pose: &SensorPose) -> Result<[f64; 4]> {
        let Some(cache) = &self.cache else {
            return self.render(eye, pose);
        };
        let k = [eye.theta_h, eye.theta_v, eye.pupil_radius, pose.dx, pose.dy].map(|v| (v + 0.0).to_bits());
        if let Some(v) = cache.lock().expect("cache lock").get(&k) {
            return Ok(*v);
        }
        let v = self.render(eye, pose)?;
        cache.lock().expect("cache lock").insert(k, v);
        Ok(v)
    }
}

/// Interpolates from a scan table. Queries outside every block go to the
/// fallback source if there is one.
pub struct TableSource {
    table: ScanTable,
    fallback: Option<Box<dyn PsogSource>>,
}

impl TableSource {
    pub fn new(table: ScanTable, fallback: Option<Box<dyn PsogSource>>) -> Self {
        Self { table, fallback }
    }

    pub fn table(&self) -> &ScanTable {
        &self.table
    }
}

impl PsogSource for TableSource {
    fn photodiodes(&self, eye: &EyeState, pose: &SensorPose) -> Result<[f64; 4]> {
        let p: ScanPoint = [eye.theta_h, eye.theta_v, pose.dx, pose.dy];
        match self.table.interpolate(&p) {
            Err(Error::OutsideTable) => match &self.fallback {
                Some(f) => f.photodiodes(eye, pose),
                None => Err(Error::OutsideTable),
            },
            other => other,
        }
    }
}

impl PsogSource for ScanTable {
    fn photodiodes(&self, eye: &EyeState, pose: &SensorPose) -> Result<[f64; 4]> {
        self.interpolate(&[eye.theta_h, eye.theta_v, pose.dx, pose.dy])
    }
}
