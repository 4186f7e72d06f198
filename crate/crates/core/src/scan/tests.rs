use std::io::Write;

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicUsize, Ordering};

use super::*;
use crate::psog::{psog_sample, PhotosensorLayout};
use crate::scene::render_frame;

/// Multilinear in the four coordinates, so interpolation must be exact.
fn bilinear_oracle(p: &ScanPoint) -> [f64; 4] {
    let [a, b, c, d] = *p;
    [
        1.0 + 2.0 * a - c + 0.1 * a * c,
        0.5 * b + 0.25 * d - 0.2 * b * d,
        3.0 - a + 0.05 * a * b * c * d,
        c * d + a,
    ]
}

struct Synthetic {
    calls: AtomicUsize,
    fail_after: usize,
}

impl Synthetic {
    fn new(fail_after: usize) -> Self {
        Self { calls: AtomicUsize::new(0), fail_after }
    }
}

impl PsogSource for Synthetic {
    fn photodiodes(&self, eye: &EyeState, pose: &SensorPose) -> Result<[f64; 4]> {
        if self.calls.fetch_add(1, Ordering::SeqCst) >= self.fail_after {
            return Err(Error::InvalidInput("simulated interruption".into()));
        }
        Ok(bilinear_oracle(&[eye.theta_h, eye.theta_v, pose.dx, pose.dy]))
    }
}

fn small_spec(mode: ScanMode) -> ScanSpec {
    ScanSpec { eye: GridRange::new(-2.0, 2.0, 1.0), shift: GridRange::new(-1.0, 1.0, 0.5), mode }
}

fn synthetic_table(spec: &ScanSpec) -> ScanTable {
    let rows = spec.points().iter().map(|p| ScanRow { point: *p, i_pd: bilinear_oracle(p) }).collect();
    ScanTable::from_rows(spec.clone(), rows).unwrap()
}

#[test]
fn grid_ranges() {
    assert_eq!(GridRange::new(-10.0, 10.0, 0.5).values().len(), 41);
    assert_eq!(GridRange::new(-2.0, 2.0, 0.5).values().len(), 9);
    assert_eq!(GridRange::single(3.0).values(), vec![3.0]);
    assert_eq!(GridRange::new(0.0, 1.0, 0.4).values(), vec![0.0, 0.4, 0.8]);
    assert!(GridRange::new(0.0, 1.0, 0.0).validate().is_err());
    assert!(GridRange::new(1.0, 0.0, 0.1).validate().is_err());
}

#[test]
fn full_grid_size() {
    let spec = ScanSpec { mode: ScanMode::Full, ..Default::default() };
    assert_eq!(spec.points().len(), 41 * 41 * 9 * 9);
}

#[test]
fn separable_points_are_the_union_of_slices() {
    let spec = ScanSpec::default();
    let e = spec.eye.values();
    let s = spec.shift.values();
    let mut union = BTreeSet::new();
    for &x in &e {
        for &y in &s {
            let bits = |p: [f64; 4]| p.map(|v| (v + 0.0).to_bits());
            union.insert(bits([x, 0.0, y, 0.0]));
            union.insert(bits([0.0, x, 0.0, y]));
            union.insert(bits([x, 0.0, 0.0, y]));
            union.insert(bits([0.0, x, y, 0.0]));
        }
    }
    let pts = spec.points();
    let got: BTreeSet<_> = pts.iter().map(|p| p.map(|v| (v + 0.0).to_bits())).collect();
    assert_eq!(got.len(), pts.len(), "duplicate points");
    assert_eq!(got, union);
}

#[test]
fn zero_size_ranges_give_one_row() {
    for mode in [ScanMode::Separable, ScanMode::Full] {
        let spec = ScanSpec { eye: GridRange::single(0.0), shift: GridRange::single(0.0), mode };
        assert_eq!(spec.points(), vec![[0.0; 4]]);
    }
}

#[test]
fn interpolation_reproduces_multilinear_data() {
    for mode in [ScanMode::Separable, ScanMode::Full] {
        let table = synthetic_table(&small_spec(mode));
        let queries: &[ScanPoint] = &[[0.3, 0.0, -0.7, 0.0], [0.0, -1.6, 0.0, 0.9], [1.9, 0.0, 0.0, 0.2], [0.0, 2.0, 1.0, 0.0]];
        for q in queries {
            let got = table.interpolate(q).unwrap();
            let want = bilinear_oracle(q);
            for k in 0..4 {
                assert!((got[k] - want[k]).abs() < 1e-12, "{mode:?} {q:?}");
            }
        }
    }
    let full = synthetic_table(&small_spec(ScanMode::Full));
    let q = [0.4, -1.2, 0.3, -0.8];
    let (got, want) = (full.interpolate(&q).unwrap(), bilinear_oracle(&q));
    assert!((0..4).all(|k| (got[k] - want[k]).abs() < 1e-12));
}

#[test]
fn nodes_are_returned_exactly() {
    let table = synthetic_table(&small_spec(ScanMode::Separable));
    for r in table.rows() {
        assert_eq!(table.interpolate(&r.point).unwrap(), r.i_pd);
    }
}

#[test]
fn outside_queries_fail() {
    let table = synthetic_table(&small_spec(ScanMode::Separable));
    assert_eq!(table.interpolate(&[2.5, 0.0, 0.0, 0.0]), Err(Error::OutsideTable));
    // both eye axes non-zero is not covered by any slice
    assert_eq!(table.interpolate(&[1.0, 1.0, 0.0, 0.0]), Err(Error::OutsideTable));
    let src = TableSource::new(table, Some(Box::new(Synthetic::new(usize::MAX))));
    let v = src.photodiodes(&EyeState::new(1.0, 1.0), &SensorPose::neutral()).unwrap();
    assert_eq!(v, bilinear_oracle(&[1.0, 1.0, 0.0, 0.0]));
}

#[test]
fn missing_rows_are_rejected() {
    let spec = small_spec(ScanMode::Separable);
    let mut rows: Vec<_> = synthetic_table(&spec).rows().to_vec();
    rows.pop();
    assert!(ScanTable::from_rows(spec, rows).is_err());
}

#[test]
fn csv_round_trip_is_exact() {
    let spec = small_spec(ScanMode::Separable);
    let mut rows = synthetic_table(&spec).rows().to_vec();
    rows[0].i_pd[0] = 0.1 + 0.2;
    rows[1].i_pd[3] = std::f64::consts::PI / 7.0;
    let comments = vec!["config 0123abcd".to_string()];
    let mut buf = Vec::new();
    write_scan_csv(&mut buf, &comments, &rows).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with("# psv-scan v1\n# config 0123abcd\ntheta_h,theta_v,dx,dy,i_pd1,"));
    let back = read_scan_csv(&buf[..]).unwrap();
    assert_eq!(back.comments, comments);
    assert_eq!(back.rows, rows);
}

#[test]
fn interrupted_scan_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scan.csv");
    let spec = small_spec(ScanMode::Separable);
    let comments = vec!["config abc".to_string()];
    let n = spec.points().len();

    let err = scan_to_csv(&path, &spec, &Synthetic::new(20), &comments, Execution::Sequential, 8);
    assert!(err.is_err());
    let partial = read_scan_csv(std::fs::File::open(&path).unwrap()).unwrap();
    assert_eq!(partial.rows.len(), 16);
    // simulate a torn write
    std::fs::OpenOptions::new().append(true).open(&path).unwrap().write_all(b"1.5,0,0.").unwrap();

    let resumed = Synthetic::new(usize::MAX);
    let table = scan_to_csv(&path, &spec, &resumed, &comments, Execution::Sequential, 8).unwrap();
    assert_eq!(resumed.calls.load(Ordering::SeqCst), n - 16);
    assert_eq!(table, synthetic_table(&spec));
    let reread = read_scan_csv(std::fs::File::open(&path).unwrap()).unwrap();
    assert_eq!(reread.rows, table.rows());

    let again = Synthetic::new(usize::MAX);
    scan_to_csv(&path, &spec, &again, &comments, Execution::Sequential, 8).unwrap();
    assert_eq!(again.calls.load(Ordering::SeqCst), 0);

    let other = vec!["config def".to_string()];
    assert!(matches!(
        scan_to_csv(&path, &spec, &again, &other, Execution::Sequential, 8),
        Err(Error::Io { .. })
    ));
}

#[test]
fn rendered_scan_matches_direct_sampling() {
    let spec = ScanSpec { eye: GridRange::new(-5.0, 5.0, 5.0), shift: GridRange::new(-1.0, 1.0, 1.0), mode: ScanMode::Separable };
    let layout = PhotosensorLayout::default();
    let cfg = SceneConfig::default();
    let seq = run_scan(&spec, &layout, &cfg, Execution::Sequential).unwrap();
    let par = run_scan(&spec, &layout, &cfg, Execution::Parallel).unwrap();
    assert_eq!(seq, par);
    for r in seq.rows() {
        let frame = render_frame(&r.eye(), &r.pose(), &cfg).unwrap();
        assert_eq!(psog_sample(&frame, &layout, &cfg, 0.0).unwrap().i_pd, r.i_pd);
    }
}

#[test]
fn rendered_source_memoises() {
    let src = RenderedSource::new(&PhotosensorLayout::default(), &SceneConfig::default()).unwrap();
    let a = src.photodiodes(&EyeState::new(2.0, 0.0), &SensorPose::new(0.5, 0.0)).unwrap();
    let b = src.photodiodes(&EyeState::new(2.0, 0.0), &SensorPose::new(0.5, 0.0)).unwrap();
    assert_eq!(a, b);
}
