use super::{AxisModel, CalibModel, Domain, Quadratic};
use crate::error::{Error, Result};

/// First line of a persisted calibration model.
pub const MODEL_HEADER: &str = "# psv-calib-model v1";

const COEFF_NAMES: [&str; 9] = ["a1", "a2", "a3", "b1", "b2", "b3", "c1", "c2", "c3"];
const DOMAIN_NAMES: [&str; 4] = ["eye_min", "eye_max", "sensor_min", "sensor_max"];

/// Serialises a model as `key = value` lines after the versioned header.
/// Values use the shortest round-tripping decimal form. Extra comment lines
/// (e.g. provenance) are placed after the header.
pub fn model_to_text(model: &CalibModel, comments: &[String]) -> String {
    let mut out = String::from(MODEL_HEADER);
    out.push('\n');
    for c in comments {
        out.push_str("# ");
        out.push_str(c);
        out.push('\n');
    }
    for (prefix, m) in [("h", &model.h), ("v", &model.v)] {
        let coeffs = m.a.0.iter().chain(&m.b.0).chain(&m.c.0);
        for (name, v) in COEFF_NAMES.iter().zip(coeffs) {
            out.push_str(&format!("{prefix}.{name} = {v:?}\n"));
        }
        let d = [m.domain.eye.0, m.domain.eye.1, m.domain.sensor.0, m.domain.sensor.1];
        for (name, v) in DOMAIN_NAMES.iter().zip(d) {
            out.push_str(&format!("{prefix}.{name} = {v:?}\n"));
        }
    }
    out
}

pub fn model_from_text(text: &str) -> Result<CalibModel> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == MODEL_HEADER => {}
        other => {
            return Err(Error::Parse(format!(
                "expected header {MODEL_HEADER:?}, found {:?}",
                other.unwrap_or("")
            )))
        }
    }
    let mut values = std::collections::HashMap::new();
    for (n, line) in lines.enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("line {}: expected `key = value`", n + 2)))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("line {}: bad number {:?}", n + 2, v.trim())))?;
        values.insert(k.trim().to_string(), v);
    }
    let get = |key: String| values.get(&key).copied().ok_or_else(|| Error::Parse(format!("missing {key}")));
    let axis = |p: &str| -> Result<AxisModel> {
        let mut c = [0.0; 9];
        for (slot, name) in c.iter_mut().zip(COEFF_NAMES) {
            *slot = get(format!("{p}.{name}"))?;
        }
        let mut d = [0.0; 4];
        for (slot, name) in d.iter_mut().zip(DOMAIN_NAMES) {
            *slot = get(format!("{p}.{name}"))?;
        }
        Ok(AxisModel {
            a: Quadratic([c[0], c[1], c[2]]),
            b: Quadratic([c[3], c[4], c[5]]),
            c: Quadratic([c[6], c[7], c[8]]),
            domain: Domain { eye: (d[0], d[1]), sensor: (d[2], d[3]) },
        })
    };
    Ok(CalibModel { h: axis("h")?, v: axis("v")? })
}
