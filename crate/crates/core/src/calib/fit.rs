use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{AxisGrid, AxisModel, CalibGrid, CalibModel, Domain, Quadratic};
use crate::error::{Error, Result};

/// Relative singular-value floor below which a design is rank deficient.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisDiagnostics {
    /// RMS residual of each stage-1 curve, one per sensor position.
    pub stage1_rms: Vec<f64>,
    /// RMS residual of the stage-2 fits of `a`, `b`, `c`.
    pub stage2_rms: [f64; 3],
    /// RMS of `forward` against every measurement.
    pub total_rms: f64,
    pub max_abs_residual: f64,
    /// Whether the fitted model passed the monotonicity check.
    pub monotone: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub h: AxisDiagnostics,
    pub v: AxisDiagnostics,
}

fn distinct(values: &[f64]) -> usize {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v.len()
}

/// Least-squares quadratic through `(x, y)`; returns `[k1, k2, k3]` and the
/// RMS residual.
fn fit_quadratic(x: &[f64], y: &[f64], dimension: &'static str) -> Result<(Quadratic, f64)> {
    if distinct(x) < 3 {
        return Err(Error::RankDeficient { dimension });
    }
    let design = DMatrix::from_fn(x.len(), 3, |r, c| x[r].powi(2 - c as i32));
    let rhs = DVector::from_column_slice(y);
    let svd = design.clone().svd(true, true);
    let max_sv = svd.singular_values.max();
    let min_sv = svd.singular_values.min();
    if !(max_sv > 0.0) || min_sv / max_sv < RANK_TOL {
        return Err(Error::RankDeficient { dimension });
    }
    let sol = svd.solve(&rhs, 0.0).map_err(|_| Error::RankDeficient { dimension })?;
    let resid = &design * &sol - rhs;
    let rms = (resid.norm_squared() / x.len() as f64).sqrt();
    Ok((Quadratic([sol[0], sol[1], sol[2]]), rms))
}

fn range(values: &[f64]) -> (f64, f64) {
    values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// Two-stage least-squares fit of one axis.
pub fn fit_axis(grid: &AxisGrid) -> Result<(AxisModel, AxisDiagnostics)> {
    grid.validate()?;
    if distinct(&grid.eye_positions) < 3 {
        return Err(Error::RankDeficient { dimension: "eye" });
    }
    if distinct(&grid.sensor_positions) < 3 {
        return Err(Error::RankDeficient { dimension: "sensor" });
    }

    let n_eye = grid.eye_positions.len();
    let mut stage1 = Vec::with_capacity(grid.sensor_positions.len());
    let mut stage1_rms = Vec::with_capacity(grid.sensor_positions.len());
    for s in 0..grid.sensor_positions.len() {
        let ys = &grid.raw[s * n_eye..(s + 1) * n_eye];
        let (q, rms) = fit_quadratic(&grid.eye_positions, ys, "eye")?;
        stage1.push(q);
        stage1_rms.push(rms);
    }

    let mut low = [Quadratic::default(); 3];
    let mut stage2_rms = [0.0; 3];
    for k in 0..3 {
        let ys: Vec<f64> = stage1.iter().map(|q| q.0[k]).collect();
        let (q, rms) = fit_quadratic(&grid.sensor_positions, &ys, "sensor")?;
        low[k] = q;
        stage2_rms[k] = rms;
    }

    let model = AxisModel {
        a: low[0],
        b: low[1],
        c: low[2],
        domain: Domain { eye: range(&grid.eye_positions), sensor: range(&grid.sensor_positions) },
    };

    let mut sq = 0.0;
    let mut max_abs: f64 = 0.0;
    for (s, &x_s) in grid.sensor_positions.iter().enumerate() {
        for (e, &x_e) in grid.eye_positions.iter().enumerate() {
            let r = model.forward(x_e, x_s) - grid.at(s, e);
            sq += r * r;
            max_abs = max_abs.max(r.abs());
        }
    }
    let diagnostics = AxisDiagnostics {
        stage1_rms,
        stage2_rms,
        total_rms: (sq / grid.raw.len() as f64).sqrt(),
        max_abs_residual: max_abs,
        monotone: model.check_monotone().is_ok(),
    };
    Ok((model, diagnostics))
}

/// Fits both axes. Non-monotone fits are returned with `monotone = false`
/// in the diagnostics; inversion reports the fold if it is ever hit.
pub fn fit(grid: &CalibGrid) -> Result<(CalibModel, FitDiagnostics)> {
    let (h, dh) = fit_axis(&grid.h)?;
    let (v, dv) = fit_axis(&grid.v)?;
    Ok((CalibModel { h, v }, FitDiagnostics { h: dh, v: dv }))
}

/// Outcome of calibrating with VOG-estimated sensor positions.
#[derive(Debug, Clone, PartialEq)]
pub struct AutoFit {
    pub model: CalibModel,
    pub diagnostics: FitDiagnostics,
    /// Fit on the nominal sensor positions of the grid.
    pub reference: Option<CalibModel>,
    /// Per axis, `auto - reference` for `[a1..a3, b1..b3, c1..c3]`.
    pub coefficient_deltas: Option<[[f64; 9]; 2]>,
}

fn flat(m: &AxisModel) -> [f64; 9] {
    let mut out = [0.0; 9];
    out[..3].copy_from_slice(&m.a.0);
    out[3..6].copy_from_slice(&m.b.0);
    out[6..].copy_from_slice(&m.c.0);
    out
}

/// Fits with each grid's sensor positions replaced by VOG estimates, one per
/// sensor-position cluster.
pub fn fit_auto(grid: &CalibGrid, estimated_h: &[f64], estimated_v: &[f64]) -> Result<AutoFit> {
    let replace = |g: &AxisGrid, est: &[f64]| -> Result<AxisGrid> {
        if est.len() != g.sensor_positions.len() {
            return Err(Error::InvalidInput(format!(
                "{} sensor estimates for {} sensor positions",
                est.len(),
                g.sensor_positions.len()
            )));
        }
        Ok(AxisGrid { sensor_positions: est.to_vec(), ..g.clone() })
    };
    let auto_grid = CalibGrid { h: replace(&grid.h, estimated_h)?, v: replace(&grid.v, estimated_v)? };
    let (model, diagnostics) = fit(&auto_grid)?;
    let reference = fit(grid).ok().map(|(m, _)| m);
    let coefficient_deltas = reference.map(|r| {
        let d = |a: &AxisModel, b: &AxisModel| {
            let (fa, fb) = (flat(a), flat(b));
            std::array::from_fn(|i| fa[i] - fb[i])
        };
        [d(&model.h, &r.h), d(&model.v, &r.v)]
    });
    Ok(AutoFit { model, diagnostics, reference, coefficient_deltas })
}
