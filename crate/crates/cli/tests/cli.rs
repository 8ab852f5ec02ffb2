use std::fs;
use std::process::{Command, Output};

fn pffc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pffc"))
        .args(args)
        .env("RUST_LOG", "error")
        .env_remove("PFFC_OUT")
        .output()
        .expect("binary runs")
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

#[test]
fn keys_are_listed() {
    let out = pffc(&["keys"]);
    assert!(out.status.success());
    let stdout = text(&out.stdout);
    for key in ["mesh", "timesteps", "gamma", "alpha", "phid_slit", "snapshots"] {
        assert!(stdout.lines().any(|l| l.starts_with(key)), "{key} missing");
    }
}

#[test]
fn verify_rejects_large_mesh() {
    let dir = tempfile::tempdir().unwrap();
    let out = pffc(&["verify", "--mesh", "32", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("must not exceed"), "{}", text(&out.stderr));
    assert!(!dir.path().join("verification.txt").exists());
}

#[test]
fn unknown_key_in_file_reports_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "preset = desk\n# fine\ngama = 1e3\n").unwrap();
    let out = pffc(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = text(&out.stderr);
    assert!(stderr.contains("bad.cfg:3") && stderr.contains("gama"), "{stderr}");
}

#[test]
fn bad_set_flag_is_rejected() {
    let out = pffc(&["run", "--preset", "desk", "--set", "gamma"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn run_writes_artifacts_and_flags_override_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "preset = desk\nmesh = 8\nalpha = 1e-8\n").unwrap();
    let out_dir = dir.path().join("out");
    let out = pffc(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--mesh",
        "4",
        "--timesteps",
        "3",
        "--snapshots",
        "1,3",
        "--reproducible",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let profile = fs::read_to_string(out_dir.join("force_profile.txt")).unwrap();
    assert_eq!(profile.lines().count(), 5, "mesh flag must win over the file");
    for f in ["iterations.csv", "summary.txt", "state_m1.vtk", "state_m3.vtk", "adjoint_m3.vtk"] {
        assert!(out_dir.join(f).exists(), "{f} missing");
    }
    assert!(!out_dir.join("state_m2.vtk").exists());
}

#[test]
fn output_directory_defaults_to_env() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_pffc"))
        .args(["run", "--preset", "desk", "--mesh", "4", "--timesteps", "2", "--set", "alpha=1e-8"])
        .env("PFFC_OUT", dir.path())
        .env("RUST_LOG", "error")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert!(dir.path().join("iterations.csv").exists());
}

#[test]
fn gradcheck_passes_on_small_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = pffc(&[
        "gradcheck",
        "--mesh",
        "4",
        "--timesteps",
        "2",
        "--directions",
        "2",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", text(&out.stdout));
    let stdout = text(&out.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("direction")).count(), 2);
    assert!(stdout.contains("PASS"));
}
