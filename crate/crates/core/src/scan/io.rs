use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::path::Path;

use super::{scan_points, PsogSource, ScanRow, ScanSpec, ScanTable};
use crate::error::{Error, Result};
use crate::par::Execution;
use crate::psog::PsogSample;

pub const SCAN_CSV_VERSION: &str = "# psv-scan v1";

pub const SCAN_CSV_HEADER: [&str; 10] =
    ["theta_h", "theta_v", "dx", "dy", "i_pd1", "i_pd2", "i_pd3", "i_pd4", "i_h", "i_v"];

/// Contents of a scan file.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanCsv {
    /// Comment lines after the version line, without the leading `# `.
    pub comments: Vec<String>,
    pub rows: Vec<ScanRow>,
}

fn record(row: &ScanRow) -> [String; 10] {
    let s = PsogSample::from_photodiodes(0.0, row.i_pd);
    let [a, b, c, d] = row.point;
    let [p1, p2, p3, p4] = row.i_pd;
    [a, b, c, d, p1, p2, p3, p4, s.i_h, s.i_v].map(|v| v.to_string())
}

fn write_preamble<W: Write>(out: &mut W, comments: &[String]) -> std::io::Result<()> {
    writeln!(out, "{SCAN_CSV_VERSION}")?;
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    writeln!(out, "{}", SCAN_CSV_HEADER.join(","))
}

fn write_rows<W: Write>(out: W, rows: &[ScanRow]) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    for r in rows {
        w.write_record(record(r))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_scan_csv<W: Write>(mut out: W, comments: &[String], rows: &[ScanRow]) -> Result<()> {
    let io = |e: &dyn std::fmt::Display| Error::Parse(e.to_string());
    write_preamble(&mut out, comments).map_err(|e| io(&e))?;
    write_rows(out, rows).map_err(|e| io(&e))
}

pub fn read_scan_csv<R: Read>(mut input: R) -> Result<ScanCsv> {
    let mut text = String::new();
    input.read_to_string(&mut text).map_err(|e| Error::Parse(e.to_string()))?;
    parse(&text)
}

fn parse(text: &str) -> Result<ScanCsv> {
    let mut lines = text.lines();
    if lines.next() != Some(SCAN_CSV_VERSION) {
        return Err(Error::Parse(format!("scan file must start with `{SCAN_CSV_VERSION}`")));
    }
    let comments = lines
        .take_while(|l| l.starts_with('#'))
        .map(|l| l.trim_start_matches('#').trim_start().to_string())
        .collect();
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Error::Parse(e.to_string()))?;
    if header.iter().ne(SCAN_CSV_HEADER) {
        return Err(Error::Parse("unexpected scan header".into()));
    }
    let mut rows = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        let v: Vec<f64> = rec
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| Error::Parse(format!("row {}: {e}", line + 1)))?;
        if v.len() != SCAN_CSV_HEADER.len() {
            return Err(Error::Parse(format!("row {} has {} fields", line + 1, v.len())));
        }
        rows.push(ScanRow { point: [v[0], v[1], v[2], v[3]], i_pd: [v[4], v[5], v[6], v[7]] });
    }
    Ok(ScanCsv { comments, rows })
}

/// Runs the scan into `path`, appending `chunk` rows at a time. If `path`
/// already holds a partial scan with the same comments (which should carry
/// the configuration hash), the completed rows are kept and the scan resumes
/// after them. A trailing partial line is discarded.
pub fn scan_to_csv(
    path: &Path,
    spec: &ScanSpec,
    source: &dyn PsogSource,
    comments: &[String],
    exec: Execution,
    chunk: usize,
) -> Result<ScanTable> {
    spec.validate()?;
    let points = spec.points();
    let mut rows = Vec::with_capacity(points.len());

    if path.exists() {
        let mut text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if !text.ends_with('\n') {
            let keep = text.rfind('\n').map_or(0, |i| i + 1);
            text.truncate(keep);
            let f = OpenOptions::new().write(true).open(path).map_err(|e| Error::io(path, e))?;
            f.set_len(keep as u64).map_err(|e| Error::io(path, e))?;
        }
        let existing = parse(&text).map_err(|e| Error::io(path, e))?;
        if existing.comments != comments {
            return Err(Error::io(path, "existing scan was produced with a different configuration"));
        }
        if existing.rows.len() > points.len()
            || existing.rows.iter().zip(&points).any(|(r, p)| r.point != *p)
        {
            return Err(Error::io(path, "existing scan rows do not match the scan grid"));
        }
        rows = existing.rows;
    } else {
        let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
        write_preamble(&mut f, comments).map_err(|e| Error::io(path, e))?;
    }

    let mut file = OpenOptions::new().append(true).open(path).map_err(|e| Error::io(path, e))?;
    for batch in points[rows.len()..].chunks(chunk.max(1)) {
        let new = scan_points(source, batch, exec)?;
        write_rows(&mut file, &new).map_err(|e| Error::io(path, e))?;
        file.sync_data().map_err(|e| Error::io(path, e))?;
        rows.extend(new);
    }
    ScanTable::from_rows(spec.clone(), rows)
}
