use super::*;

fn cfg() -> SceneConfig {
    SceneConfig::default()
}

fn pc(th: f64, tv: f64, dx: f64, dy: f64) -> PixelPoint {
    pupil_center_px(&EyeState::new(th, tv), &SensorPose::new(dx, dy), &cfg()).unwrap()
}

fn cr(th: f64, tv: f64, dx: f64, dy: f64, k: usize) -> PixelPoint {
    corneal_reflection_px(&EyeState::new(th, tv), &SensorPose::new(dx, dy), &cfg(), k).unwrap()
}

#[test]
fn neutral_pupil_is_at_principal_point() {
    let p = pc(0.0, 0.0, 0.0, 0.0);
    assert!((p.x - 160.0).abs() < 1e-9 && (p.y - 120.0).abs() < 1e-9);
    assert!(p.in_frame);
}

#[test]
fn neutral_glints_are_mirror_symmetric() {
    let (a, b) = (cr(0.0, 0.0, 0.0, 0.0, 0), cr(0.0, 0.0, 0.0, 0.0, 1));
    assert!((a.x + b.x - 320.0).abs() < 1e-9);
    assert!((a.y - b.y).abs() < 1e-9);
}

#[test]
fn horizontal_mirror_symmetry() {
    for th in [2.5, 7.0, 15.0] {
        let (p, m) = (pc(th, 0.0, 0.0, 0.0), pc(-th, 0.0, 0.0, 0.0));
        assert!((p.x + m.x - 320.0).abs() < 1e-9, "{th}");
        assert!(p.x > 160.0);
    }
}

#[test]
fn pupil_projection_is_monotone() {
    for &(dx, dy) in &[(0.0, 0.0), (2.0, -2.0), (-2.0, 2.0)] {
        let mut prev = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for i in -30..=30 {
            let th = i as f64 * 0.5;
            let (h, v) = (pc(th, 0.0, dx, dy).x, pc(0.0, th, dx, dy).y);
            assert!(h > prev.0 && v > prev.1, "theta {th} pose ({dx}, {dy})");
            prev = (h, v);
        }
    }
}

#[test]
fn pixels_per_degree_matches_small_angle_projection() {
    let c = cfg();
    let fd = (pc(0.5, 0.0, 0.0, 0.0).x - pc(-0.5, 0.0, 0.0, 0.0).x) / 1.0;
    let expected = c.focal_px() * c.eyeball_radius * 1f64.to_radians().sin() / c.camera_distance;
    assert!((fd / expected - 1.0).abs() < 0.01, "{fd} vs {expected}");
}

#[test]
fn glint_moves_less_than_pupil_under_rotation() {
    for k in 0..2 {
        let d_pc = pc(10.0, 0.0, 0.0, 0.0).x - pc(0.0, 0.0, 0.0, 0.0).x;
        let d_cr = cr(10.0, 0.0, 0.0, 0.0, k).x - cr(0.0, 0.0, 0.0, 0.0, k).x;
        assert!(d_cr > 0.0 && d_cr < d_pc, "light {k}: {d_cr} vs {d_pc}");
        let ratio = d_cr / d_pc;
        assert!(ratio > 0.2 && ratio < 0.7, "{ratio}");
    }
}

#[test]
fn sensor_shift_moves_scene_rigidly() {
    let c = cfg();
    let d_pc = pc(0.0, 0.0, 1.0, 0.0).x - pc(0.0, 0.0, 0.0, 0.0).x;
    // the neutral pupil sits on the optical axis at the camera distance
    let analytic = c.focal_px() * 1.0 / c.camera_distance;
    assert!((d_pc - analytic).abs() < 0.5, "{d_pc} vs {analytic}");
    for k in 0..2 {
        let d_cr = cr(0.0, 0.0, 1.0, 0.0, k).x - cr(0.0, 0.0, 0.0, 0.0, k).x;
        let ratio = d_cr / d_pc;
        assert!((0.7..=1.0).contains(&ratio), "{ratio}");
    }
    let d_v = pc(0.0, 0.0, 0.0, 1.0).y - pc(0.0, 0.0, 0.0, 0.0).y;
    assert!((d_v - analytic).abs() < 0.5);
}

#[test]
fn bad_light_index() {
    let err = corneal_reflection_px(&EyeState::neutral(), &SensorPose::neutral(), &cfg(), 2);
    assert!(matches!(err, Err(Error::InvalidInput(_))));
}

#[test]
fn invariants_are_checked() {
    assert!(EyeState::new(46.0, 0.0).validate().is_err());
    assert!(EyeState { pupil_radius: 0.2, ..EyeState::neutral() }.validate().is_err());
    assert!(SensorPose::new(0.0, -5.5).validate().is_err());
    let mut c = cfg();
    c.reflectance.iris = 0.95;
    assert!(c.validate().is_err());
    let c = SceneConfig { fov: 95.0, ..cfg() };
    assert!(c.validate().is_err());
}

#[test]
fn render_is_deterministic_and_annotated() {
    let eye = EyeState::new(3.0, -2.0);
    let pose = SensorPose::new(0.5, 1.0);
    let a = render_frame(&eye, &pose, &cfg()).unwrap();
    let b = render_frame(&eye, &pose, &cfg()).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.intensities.len(), 320 * 240);
    assert!(a.intensities.iter().all(|v| (0.0..=1.0).contains(v)));
    let truth = a.truth.as_ref().unwrap();
    assert_eq!(truth.pupil_center_px, pupil_center_px(&eye, &pose, &cfg()).unwrap());
    assert_eq!(truth.cr_px.len(), 2);
    // dark pupil at the truth position, saturated glint at each reflection
    let at = |p: &PixelPoint| a.get(p.x as usize, p.y as usize);
    assert!(at(&truth.pupil_center_px) < 0.1);
    assert!(truth.cr_px.iter().all(|g| at(g) > 0.97));
}

#[test]
fn region_layering() {
    let f = render_frame(&EyeState::neutral(), &SensorPose::neutral(), &cfg()).unwrap();
    let r = cfg().reflectance;
    // iris ring, sclera beside it, skin in the corner
    let iris_x = (160.0 + 0.6 * 6.0 * cfg().focal_px() / 50.0) as usize;
    assert!((f.get(iris_x, 120) - r.iris).abs() < 1e-9);
    assert!((f.get(160 + 62, 120) - r.sclera).abs() < 0.05);
    assert_eq!(f.get(0, 0), r.skin);
}

#[test]
fn out_of_frustum_is_rejected() {
    let narrow = SceneConfig { fov: 11.0, ..cfg() };
    let err = render_frame(&EyeState::neutral(), &SensorPose::new(0.0, 5.0), &narrow);
    assert!(matches!(err, Err(Error::OutOfFrustum(_))), "{err:?}");
}

#[test]
fn pgm_round_trip() {
    let f = render_frame(&EyeState::new(-4.0, 6.0), &SensorPose::neutral(), &cfg()).unwrap();
    let mut bytes = Vec::new();
    write_pgm(&mut bytes, &f, Some("hash abc\nsecond line")).unwrap();
    assert!(bytes.starts_with(b"P5\n# hash abc\n# second line\n320 240\n255\n"));
    assert_eq!(bytes.len(), "P5\n# hash abc\n# second line\n320 240\n255\n".len() + 320 * 240);
    let back = read_pgm(&bytes[..]).unwrap();
    assert_eq!((back.width, back.height), (320, 240));
    for (a, b) in f.intensities.iter().zip(&back.intensities) {
        assert_eq!((a * 255.0).round() / 255.0, *b);
    }
}
