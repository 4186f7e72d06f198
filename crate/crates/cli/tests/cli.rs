use std::path::Path;
use std::process::{Command, Output};

fn psv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_psv")).args(args).output().expect("spawn psv")
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "status {:?}\nstderr: {}", out.status, String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn printed_defaults_reload_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let defaults = ok(&psv(&["config", "--print-defaults"]));
    assert!(defaults.contains("[pipeline.scene]") && defaults.contains("[thresholds]"));
    let path = write(dir.path(), "cfg.toml", &defaults);
    assert_eq!(ok(&psv(&["--config", &path, "config", "--show"])), defaults);
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "cfg.toml", "[pipeline.scene]\nfocal = 3.0\n");
    let out = psv(&["--config", &path, "config", "--show"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("focal"));
}

#[test]
fn render_is_deterministic_with_header_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let args = ["--out", s(&out), "render", "--theta-h", "-4", "--dy", "1"];
    ok(&psv(&args));
    let first = std::fs::read(out.join("frame.pgm")).unwrap();
    ok(&psv(&args));
    assert_eq!(first, std::fs::read(out.join("frame.pgm")).unwrap());

    let text = String::from_utf8_lossy(&first[..100]).to_string();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("P5"));
    assert!(lines.next().unwrap().starts_with("# config sha256:"));
    assert_eq!(lines.next(), Some("320 240"));
    assert_eq!(lines.next(), Some("255"));
    let header_len = text.find("255\n").unwrap() + 4;
    assert_eq!(first.len(), header_len + 320 * 240);

    let truth = std::fs::read_to_string(out.join("frame.truth.txt")).unwrap();
    assert!(truth.starts_with("# psv-frame-truth v1\n# config sha256:"));
    assert!(truth.contains("theta_h_deg = -4.0") && truth.contains("pupil_center_px = "));
    assert_eq!(truth.matches("cr_px.").count(), 2);
}

#[test]
fn out_of_frustum_render_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cfg.toml", "[pipeline.scene]\nfov = 11.0\n");
    let out = psv(&["--config", &cfg, "--out", s(dir.path()), "render", "--dy", "5"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("frustum"), "{err}");
    assert!(!dir.path().join("frame.pgm").exists());
}

#[test]
fn zero_size_scan_has_one_row_and_reloads() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "cfg.toml",
        "[pipeline.scan.eye]\nmin = 0.0\nmax = 0.0\nstep = 0.5\n[pipeline.scan.shift]\nmin = 0.0\nmax = 0.0\nstep = 0.5\n",
    );
    let args = ["--config", &cfg, "--out", s(dir.path()), "scan"];
    ok(&psv(&args));
    let path = dir.path().join("scan.csv");
    let text = std::fs::read_to_string(&path).unwrap();
    let data: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(data[0], "theta_h,theta_v,dx,dy,i_pd1,i_pd2,i_pd3,i_pd4,i_h,i_v");
    assert_eq!(data.len(), 2);
    assert!(data[1].starts_with("0,0,0,0,"));
    ok(&psv(&args));
    assert_eq!(std::fs::read_to_string(&path).unwrap(), text);
}

#[test]
fn interrupted_scan_resumes_to_the_same_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "cfg.toml",
        "[pipeline.scan.eye]\nmin = -1.0\nmax = 1.0\nstep = 0.5\n[pipeline.scan.shift]\nmin = -0.5\nmax = 0.5\nstep = 0.5\n",
    );
    let args = ["--config", &cfg, "--out", s(dir.path()), "--jobs", "1", "scan"];
    ok(&psv(&args));
    let path = dir.path().join("scan.csv");
    let full = std::fs::read_to_string(&path).unwrap();
    // Keep a few rows plus a torn line.
    let cut = full.match_indices('\n').nth(8).unwrap().0 + 12;
    std::fs::write(&path, &full[..cut]).unwrap();
    ok(&psv(&args));
    assert_eq!(std::fs::read_to_string(&path).unwrap(), full);

    // Same output directory, different scan range: refused.
    let other = write(dir.path(), "other.toml", "[pipeline.scan.eye]\nmin = -1.0\nmax = 1.0\nstep = 1.0\n");
    let out = psv(&["--config", &other, "--out", s(dir.path()), "scan"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("different"));
}

#[test]
fn exact_calibration_writes_18_coefficients_reproducibly() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["--out", s(dir.path()), "calibrate", "--exact"];
    let stdout = ok(&psv(&args));
    assert!(stdout.contains("monotone true"));
    let path = dir.path().join("model.txt");
    let model = std::fs::read_to_string(&path).unwrap();
    assert!(model.starts_with("# psv-calib-model v1\n# config sha256:"));
    let coeffs = model
        .lines()
        .filter(|l| {
            let key = l.split('=').next().unwrap().trim();
            key.len() == 4 && ["a", "b", "c"].iter().any(|c| key[2..].starts_with(c))
        })
        .count();
    assert_eq!(coeffs, 18);
    assert!(model.contains("h.eye_min = ") && model.contains("v.sensor_max = "));
    ok(&psv(&args));
    assert_eq!(std::fs::read_to_string(&path).unwrap(), model);
}

#[test]
fn auto_calibration_writes_position_table() {
    let dir = tempfile::tempdir().unwrap();
    ok(&psv(&["--out", s(dir.path()), "calibrate", "--exact", "--auto"]));
    let table = std::fs::read_to_string(dir.path().join("calib_positions.csv")).unwrap();
    let rows: Vec<&str> = table.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "axis,true_mm,estimated_mm,error_mm");
    assert_eq!(rows.len(), 1 + 6);
}

#[test]
fn run_without_model_is_an_actionable_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = psv(&["--out", s(dir.path()), "run", "--exact"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("model.txt") && err.contains("psv calibrate"), "{err}");
}

#[test]
fn hv_run_writes_streams_and_passes_thresholds() {
    let dir = tempfile::tempdir().unwrap();
    let o = s(dir.path());
    ok(&psv(&["--out", o, "--jobs", "1", "calibrate", "--exact"]));
    let stdout = ok(&psv(&["--out", o, "--jobs", "1", "run", "--exact", "--scenario", "hv", "--mode", "both"]));
    assert!(stdout.contains("[traditional]") && stdout.contains("[corrected]"));

    let headers = [
        ("gaze_corrected.csv", "t,gaze_h_deg,gaze_v_deg,shift_h_mm,shift_v_mm,flags"),
        ("gaze_traditional.csv", "t,gaze_h_deg,gaze_v_deg,shift_h_mm,shift_v_mm,flags"),
        ("psog.csv", "t,i_pd1,i_pd2,i_pd3,i_pd4,i_h,i_v"),
        ("vog.csv", "t,pc_x,pc_y,cr_x,cr_y,shift_h_mm,shift_v_mm,valid"),
    ];
    for (name, header) in headers {
        let text = std::fs::read_to_string(dir.path().join(name)).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("# psv-"), "{name}");
        assert!(lines.next().unwrap().starts_with("# config sha256:"), "{name}");
        assert_eq!(lines.next(), Some(header), "{name}");
    }
    let gaze = std::fs::read_to_string(dir.path().join("gaze_corrected.csv")).unwrap();
    assert_eq!(gaze.lines().count(), 3 + 36_000);
    let vog = std::fs::read_to_string(dir.path().join("vog.csv")).unwrap();
    assert_eq!(vog.lines().count(), 3 + 180);
}

#[test]
fn failing_threshold_sets_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let o = s(dir.path());
    // Traditional mode under a 1 mm shift cannot stay within 1 degree.
    let cfg = write(dir.path(), "cfg.toml", "[scenario]\nshift_mm = 1.0\n");
    ok(&psv(&["--config", &cfg, "--out", o, "calibrate", "--exact"]));
    let out = psv(&["--config", &cfg, "--out", o, "run", "--exact", "--mode", "traditional"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("threshold failed"));
}
