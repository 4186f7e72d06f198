use super::*;
use crate::fusion::{GazeFlags, GazeSample};
use crate::par::Execution;
use crate::scene::EyeState;

fn perfect_output(s: &Scenario, offset: (f64, f64)) -> Vec<GazeSample> {
    s.eye
        .iter()
        .enumerate()
        .map(|(i, e)| GazeSample {
            t: s.time(i),
            gaze_h: e.theta_h + offset.0,
            gaze_v: e.theta_v + offset.1,
            shift_applied: (0.0, 0.0),
            flags: GazeFlags::default(),
        })
        .collect()
}

fn segments(s: &Scenario, trim: f64) -> Segmentation {
    segment_fixations(&s.eye, &s.phase, s.f_psog, trim)
}

#[test]
fn hv_default_layout() {
    let s = gen_hv_scenario(&HV_AMPLITUDES, 1.0, 1000);
    assert_eq!(s.len(), 36_000);
    assert!((s.duration() - 36.0).abs() < 1e-12);
    let seg = segments(&s, DEFAULT_TRIM);
    let count = |p: Phase| seg.segments.iter().filter(|x| x.phase == p).count();
    assert_eq!((count(Phase::Horizontal), count(Phase::Vertical)), (16, 16));
    assert_eq!(seg.dropped, 0);
    let h: Vec<f64> = s.plan.iter().filter(|f| f.phase == Phase::Horizontal).map(|f| f.theta_h).collect();
    assert_eq!(&h[..4], &[2.5, -2.5, 2.5, -2.5]);
    assert_eq!(h[15], -10.0);
}

#[test]
fn hv_counting_and_constant() {
    let s = gen_hv_scenario(&[5.0], 2.0, 1000);
    let seg = segments(&s, DEFAULT_TRIM);
    assert_eq!(seg.segments.iter().filter(|x| x.phase == Phase::Horizontal).count(), 4);
    assert_eq!(seg.segments.iter().filter(|x| x.phase == Phase::Vertical).count(), 4);

    let c = gen_hv_scenario(&[0.0], 1.0, 1000);
    assert!(c.eye.iter().all(|e| e.theta_h == 0.0 && e.theta_v == 0.0));
    let seg = segments(&c, 0.1);
    assert_eq!(seg.segments.len(), 1);
    assert_eq!((seg.segments[0].start_idx, seg.segments[0].end_idx), (100, c.len() - 100));
}

#[test]
fn untrimmed_segments_abut() {
    let s = gen_hv_scenario(&[2.5, 5.0], 1.0, 100);
    let seg = segments(&s, 0.0);
    assert_eq!(seg.segments[0].start_idx, 0);
    for w in seg.segments.windows(2) {
        assert_eq!(w[0].end_idx, w[1].start_idx);
    }
    assert_eq!(seg.segments.last().unwrap().end_idx, s.len());
}

#[test]
fn short_plateaus_are_dropped() {
    let s = gen_hv_scenario(&[5.0], 0.15, 1000);
    let seg = segments(&s, 0.1);
    // only the closing double dwell survives
    assert_eq!(seg.segments.len(), 1);
    assert_eq!(seg.dropped, 10);
}

#[test]
fn accuracy_and_crosstalk_oracles() {
    let s = gen_hv_scenario(&HV_AMPLITUDES, 1.0, 1000);
    let seg = segments(&s, DEFAULT_TRIM);
    let exact = perfect_output(&s, (0.0, 0.0));
    assert!(accuracy(&exact, &s.eye, &seg.segments).iter().all(|a| a.unwrap() == [0.0, 0.0]));
    assert!(crosstalk(&exact, &s.eye, &seg.segments).iter().flatten().all(|c| c.1 == 0.0));

    let biased = perfect_output(&s, (0.5, 0.5));
    for a in accuracy(&biased, &s.eye, &seg.segments) {
        let [h, v] = a.unwrap();
        assert!((h - 0.5).abs() < 1e-12 && (v - 0.5).abs() < 1e-12);
    }

    let off = perfect_output(&s, (0.1, 0.0));
    let cross = crosstalk(&off, &s.eye, &seg.segments);
    for (sg, c) in seg.segments.iter().zip(&cross) {
        let on = s.eye[sg.start_idx].theta_v;
        if sg.phase == Phase::Vertical && on.abs() == 10.0 {
            let (kind, pct) = c.unwrap();
            assert_eq!(kind, CrosstalkKind::Hv);
            assert!((pct - 1.0).abs() < 1e-9, "{pct}");
        }
        if sg.phase == Phase::Neutral {
            assert!(c.is_none());
        }
    }
}

#[test]
fn aggregates_recompute_from_fixations() {
    let s = gen_hv_scenario(&HV_AMPLITUDES, 1.0, 1000);
    let seg = segments(&s, DEFAULT_TRIM);
    let out: Vec<_> = perfect_output(&s, (0.0, 0.0))
        .into_iter()
        .enumerate()
        .map(|(i, mut g)| {
            g.gaze_h += 0.01 * ((i / 1000) % 7) as f64;
            g.gaze_v -= 0.02 * ((i / 1000) % 3) as f64;
            g
        })
        .collect();
    let r = MetricsReport::compute(&out, &s, &seg, Vec::new());
    let again = MetricsReport::from_parts(r.fixations.clone(), Vec::new(), r.dropped_fixations);
    assert_eq!(r, again);
    let hs: Vec<f64> = r.fixations.iter().map(|f| f.acc_h).collect();
    let mean = hs.iter().sum::<f64>() / hs.len() as f64;
    let sd = (hs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (hs.len() - 1) as f64).sqrt();
    assert_eq!(r.accuracy_h, Stats { mean, sd, n: hs.len() });
}

#[test]
fn stats_edge_cases() {
    assert_eq!(Stats::of([2.0]), Stats { mean: 2.0, sd: 0.0, n: 1 });
    assert_eq!(Stats::of(std::iter::empty()), Stats::default());
    let s = Stats::of([1.0, 2.0, 3.0, 4.0]);
    assert!((s.sd - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
}

#[test]
fn hv_shift_events_cover_largest_blocks() {
    let s = gen_hv_scenario(&HV_AMPLITUDES, 1.0, 1000);
    let ev = hv_shift_events(&s, 1.0, 4.0);
    assert_eq!(ev.len(), 2);
    assert_eq!((ev[0].start, ev[0].dx, ev[0].dy), (13.0, 1.0, 0.0));
    assert_eq!((ev[1].start, ev[1].dx, ev[1].dy), (30.0, 0.0, 1.0));
    let s = s.with_events(ev);
    assert_eq!(s.pose(12_999), crate::scene::SensorPose::neutral());
    assert_eq!(s.pose(13_000).dx, 1.0);
    assert_eq!(s.pose(16_999).dx, 1.0);
    assert_eq!(s.pose(17_000).dx, 0.0);
    let seg = segments(&s, DEFAULT_TRIM);
    let r = MetricsReport::compute(&perfect_output(&s, (0.0, 0.0)), &s, &seg, Vec::new());
    let shifted: Vec<_> = r.fixations.iter().filter_map(|f| f.shifted).collect();
    assert_eq!(shifted.len(), 8);
}

#[test]
fn reading_is_seeded_and_bounded() {
    let a = gen_reading_scenario(5, 10.0, 7, 1000);
    let b = gen_reading_scenario(5, 10.0, 7, 1000);
    let c = gen_reading_scenario(5, 10.0, 8, 1000);
    assert_eq!(a, b);
    assert_ne!(a.eye, c.eye);
    assert_eq!(a.len(), 10_000);
    assert!(a.eye.iter().all(|e| e.theta_h.abs() <= 10.0 && e.theta_v.abs() <= 5.0));
    // left-to-right staircases with at least one return sweep
    let sweeps = a.plan.windows(2).filter(|w| w[1].theta_h < w[0].theta_h).count();
    assert!(sweeps >= 1);
    for w in a.plan.windows(2).filter(|w| w[1].theta_h > w[0].theta_h) {
        let step = w[1].theta_h - w[0].theta_h;
        assert!((2.0..4.0).contains(&step), "{step}");
    }
    let ev = reading_shift_events(&a, 1.0, 0.0, 2.5);
    assert!(ev[0].start > 0.0 && ev[0].duration == 2.5);
}

#[test]
fn min_jerk_saccades_join_plateaus() {
    let s = gen_hv_scenario(&[5.0], 1.0, 1000).with_min_jerk_saccades(0.05);
    // first jump: 0 -> 5 at 1 s
    assert_eq!(s.eye[1000].theta_h, 0.0);
    assert!(s.eye[1025].theta_h > 2.0 && s.eye[1025].theta_h < 3.0);
    assert_eq!(s.eye[1050].theta_h, 5.0);
    assert!(s.eye[1000..1050].windows(2).all(|w| w[1].theta_h >= w[0].theta_h));
    let seg = segments(&s, DEFAULT_TRIM);
    assert_eq!(seg.segments.iter().filter(|x| x.phase == Phase::Horizontal).count(), 4);
}

#[test]
fn gaze_csv_ingestion() {
    let text = "t,gaze_h_deg,gaze_v_deg,shift_h_mm,shift_v_mm\n\
                0,1,2,0,0\n0.001,1,2,0.5,0\n0.002,1,2,0.5,0\n0.003,3,2,0,0\n0.004,3,2,0.5,0\n";
    let s = scenario_from_csv(text.as_bytes(), 1000).unwrap();
    assert_eq!(s.len(), 5);
    assert_eq!(s.plan.len(), 2);
    assert_eq!(s.events.len(), 2);
    let dx: Vec<f64> = (0..5).map(|i| s.pose(i).dx).collect();
    assert_eq!(dx, vec![0.0, 0.5, 0.5, 0.0, 0.5]);
    assert!(scenario_from_csv("t,x\n0,1\n".as_bytes(), 1000).is_err());
}

fn small_pipeline() -> Pipeline {
    let cfg = PipelineConfig { fidelity: Fidelity::Exact, ..Default::default() };
    Pipeline::prepare(cfg, Execution::default()).unwrap()
}

#[test]
fn paired_runs_share_streams() {
    let p = small_pipeline();
    let s = gen_hv_scenario(&[10.0], 1.0, 1000);
    let s = s.clone().with_events(hv_shift_events(&s, 1.0, 4.0));
    let exp = run_experiment(&p, &s, &[Mode::Traditional, Mode::Corrected], Execution::default()).unwrap();
    let (t, c) = (exp.mode(Mode::Traditional).unwrap(), exp.mode(Mode::Corrected).unwrap());
    assert_eq!(t.output.len(), s.len());
    assert_eq!(exp.streams.vog.len(), s.len() / 200);
    assert!(t.output.iter().all(|g| g.shift_applied == (0.0, 0.0)));
    assert!(c.report.accuracy_shifted.mean < t.report.accuracy_shifted.mean);
    assert_eq!(t.report.shift_errors, c.report.shift_errors);
    // same inputs, same outputs
    let again = run_experiment(&p, &s, &[Mode::Traditional, Mode::Corrected], Execution::Sequential).unwrap();
    assert_eq!(exp, again);
}

#[test]
fn mismatched_rate_is_rejected() {
    let p = small_pipeline();
    let s = gen_hv_scenario(&[5.0], 1.0, 500);
    assert!(matches!(p.simulate(&s, Execution::default()), Err(crate::Error::InvalidInput(_))));
}

#[test]
fn shift_estimate_error_is_roughly_antisymmetric() {
    let p = small_pipeline();
    let eyes = [EyeState::new(0.0, 0.0), EyeState::new(5.0, 0.0), EyeState::new(-5.0, 0.0)];
    let rec = shift_estimation_grid(&p.cfg, &p.gains, &[-1.0, 1.0], &eyes, Execution::default()).unwrap();
    let rec_h: Vec<_> = rec.iter().filter(|r| r.true_v == -1.0).collect();
    assert_eq!(rec_h.len(), 6);
    let (plus, minus) = (
        Stats::of(rec.iter().filter(|r| r.true_h == 1.0).map(|r| r.est_h - r.true_h)),
        Stats::of(rec.iter().filter(|r| r.true_h == -1.0).map(|r| r.est_h - r.true_h)),
    );
    let spread = 2.0 * plus.sd.max(minus.sd).max(0.05);
    assert!((plus.mean + minus.mean).abs() <= spread, "{plus:?} {minus:?}");
}
