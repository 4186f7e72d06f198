//! Dense scan of PSOG outputs over eye and sensor positions, and
//! interpolation from the resulting table.
//!
//! A table is a union of blocks. Each block is the full cross product of
//! four axis grids (`theta_h`, `theta_v`, `dx`, `dy`); an axis with a single
//! node pins that coordinate. Queries are answered by multilinear
//! interpolation inside the first block that contains the point.

mod io;
mod source;

pub use io::{read_scan_csv, scan_to_csv, write_scan_csv, ScanCsv, SCAN_CSV_HEADER, SCAN_CSV_VERSION};
pub use source::{PsogSource, RenderedSource, TableSource};

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::psog::{PhotosensorLayout, PsogSample};
use crate::scene::{EyeState, SceneConfig, SensorPose};

/// `(theta_h, theta_v, dx, dy)` in degrees and mm.
pub type ScanPoint = [f64; 4];

/// Slack allowed when matching a query against grid nodes.
const NODE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridRange {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl GridRange {
    pub fn new(min: f64, max: f64, step: f64) -> Self {
        Self { min, max, step }
    }

    pub fn single(v: f64) -> Self {
        Self { min: v, max: v, step: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite() && self.min <= self.max) {
            return Err(Error::InvalidConfig(format!("bad scan range {}..{}", self.min, self.max)));
        }
        if self.max > self.min && !(self.step > 0.0) {
            return Err(Error::InvalidConfig("scan step must be positive".into()));
        }
        Ok(())
    }

    /// Nodes `min + i * step`, ending at `max` when the step divides the span.
    pub fn values(&self) -> Vec<f64> {
        if self.max <= self.min {
            return vec![self.min];
        }
        let n = ((self.max - self.min) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|i| self.min + i as f64 * self.step).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanMode {
    /// Four slices, each sweeping one eye axis against one shift axis with
    /// the other two coordinates at zero.
    #[default]
    Separable,
    /// Full four-dimensional cross product.
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanSpec {
    /// Eye range, used on both axes, degrees.
    pub eye: GridRange,
    /// Sensor range, used on both axes, mm.
    pub shift: GridRange,
    pub mode: ScanMode,
}

impl Default for ScanSpec {
    fn default() -> Self {
        Self { eye: GridRange::new(-10.0, 10.0, 0.5), shift: GridRange::new(-2.0, 2.0, 0.5), mode: ScanMode::Separable }
    }
}

impl ScanSpec {
    pub fn validate(&self) -> Result<()> {
        self.eye.validate()?;
        self.shift.validate()
    }

    pub fn blocks(&self) -> Vec<Block> {
        let e = self.eye.values();
        let s = self.shift.values();
        let z = vec![0.0];
        match self.mode {
            ScanMode::Full => vec![Block { axes: [e.clone(), e, s.clone(), s] }],
            ScanMode::Separable => vec![
                Block { axes: [e.clone(), z.clone(), s.clone(), z.clone()] },
                Block { axes: [z.clone(), e.clone(), z.clone(), s.clone()] },
                Block { axes: [e.clone(), z.clone(), z.clone(), s.clone()] },
                Block { axes: [z.clone(), e, s, z] },
            ],
        }
    }

    /// Every distinct scan point, in block order with the last coordinate
    /// varying fastest. This order is the row order of scan files.
    pub fn points(&self) -> Vec<ScanPoint> {
        let mut seen = std::collections::HashSet::new();
        let mut out = Vec::new();
        for block in self.blocks() {
            let [a, b, c, d] = &block.axes;
            for &p0 in a {
                for &p1 in b {
                    for &p2 in c {
                        for &p3 in d {
                            let p = [p0, p1, p2, p3];
                            if seen.insert(key(&p)) {
                                out.push(p);
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// Full-product block of grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub axes: [Vec<f64>; 4],
}

impl Block {
    /// Lower node index and fractional weight per axis, or `None` when the
    /// point is outside the block.
    fn locate(&self, p: &ScanPoint) -> Option<[(usize, f64); 4]> {
        let mut out = [(0, 0.0); 4];
        for d in 0..4 {
            let nodes = &self.axes[d];
            let (lo, hi) = (nodes[0], nodes[nodes.len() - 1]);
            if p[d] < lo - NODE_TOL || p[d] > hi + NODE_TOL {
                return None;
            }
            if nodes.len() == 1 {
                continue;
            }
            let i = nodes.partition_point(|&n| n <= p[d]).clamp(1, nodes.len() - 1) - 1;
            let w = ((p[d] - nodes[i]) / (nodes[i + 1] - nodes[i])).clamp(0.0, 1.0);
            out[d] = (i, w);
        }
        Some(out)
    }
}

fn key(p: &ScanPoint) -> [u64; 4] {
    // -0.0 and 0.0 are the same node
    p.map(|v| (v + 0.0).to_bits())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanRow {
    pub point: ScanPoint,
    pub i_pd: [f64; 4],
}

impl ScanRow {
    pub fn sample(&self) -> PsogSample {
        PsogSample::from_photodiodes(0.0, self.i_pd)
    }

    pub fn eye(&self) -> EyeState {
        EyeState::new(self.point[0], self.point[1])
    }

    pub fn pose(&self) -> SensorPose {
        SensorPose::new(self.point[2], self.point[3])
    }
}

#[derive(Debug, Clone)]
pub struct ScanTable {
    spec: ScanSpec,
    blocks: Vec<Block>,
    rows: Vec<ScanRow>,
    index: HashMap<[u64; 4], usize>,
}

impl PartialEq for ScanTable {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec && self.rows == other.rows
    }
}

impl ScanTable {
    /// Assembles a table; `rows` must cover every point of `spec`.
    pub fn from_rows(spec: ScanSpec, rows: Vec<ScanRow>) -> Result<Self> {
        spec.validate()?;
        let index: HashMap<_, _> = rows.iter().enumerate().map(|(i, r)| (key(&r.point), i)).collect();
        if let Some(p) = spec.points().into_iter().find(|p| !index.contains_key(&key(p))) {
            return Err(Error::InvalidInput(format!("scan table is missing the point {p:?}")));
        }
        Ok(Self { blocks: spec.blocks(), spec, rows, index })
    }

    pub fn spec(&self) -> &ScanSpec {
        &self.spec
    }

    pub fn rows(&self) -> &[ScanRow] {
        &self.rows
    }

    /// Stored photodiode outputs at an exact node.
    pub fn node(&self, p: &ScanPoint) -> Option<[f64; 4]> {
        self.index.get(&key(p)).map(|&i| self.rows[i].i_pd)
    }

    /// Multilinear interpolation of the photodiode outputs.
    pub fn interpolate(&self, p: &ScanPoint) -> Result<[f64; 4]> {
        for block in &self.blocks {
            let Some(cell) = block.locate(p) else { continue };
            let mut acc = [0.0; 4];
            for corner in 0..16u32 {
                let mut weight = 1.0;
                let mut node = [0.0; 4];
                for d in 0..4 {
                    let nodes = &block.axes[d];
                    let (i, w) = cell[d];
                    let upper = corner >> d & 1 == 1;
                    if nodes.len() == 1 {
                        if upper {
                            weight = 0.0;
                            break;
                        }
                        node[d] = nodes[0];
                        continue;
                    }
                    weight *= if upper { w } else { 1.0 - w };
                    node[d] = nodes[i + upper as usize];
                }
                if weight == 0.0 {
                    continue;
                }
                let v = self.node(&node).ok_or(Error::OutsideTable)?;
                for k in 0..4 {
                    acc[k] += weight * v[k];
                }
            }
            return Ok(acc);
        }
        Err(Error::OutsideTable)
    }
}

/// Renders and samples every point of `spec`.
pub fn run_scan(spec: &ScanSpec, layout: &PhotosensorLayout, cfg: &SceneConfig, exec: Execution) -> Result<ScanTable> {
    spec.validate()?;
    let source = RenderedSource::uncached(layout, cfg)?;
    let rows = scan_points(&source, &spec.points(), exec)?;
    ScanTable::from_rows(spec.clone(), rows)
}

/// Samples `points` with `source`.
pub fn scan_points(source: &dyn PsogSource, points: &[ScanPoint], exec: Execution) -> Result<Vec<ScanRow>> {
    par::try_map(exec, points, |p| {
        let eye = EyeState::new(p[0], p[1]);
        let pose = SensorPose::new(p[2], p[3]);
        Ok(ScanRow { point: *p, i_pd: source.photodiodes(&eye, &pose)? })
    })
}

#[cfg(test)]
mod tests;
