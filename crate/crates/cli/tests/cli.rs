use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
seed = 5
[phantom]
n = 16
[geometry]
tilts = 7
[training]
iterations = 20
batch_pixels = 64
ray_samples = 16
[training.volume]
frequencies = 8
hidden_width = 16
depth = 2
[training.warp]
frequencies = 4
hidden_width = 8
"#;

fn deformtomo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deformtomo"))
        .args(args)
        .env_remove("DEFORMTOMO_SEED")
        .output()
        .unwrap()
}

fn write_config(dir: &Path) -> String {
    let p = dir.join("tiny.toml");
    fs::write(&p, TINY).unwrap();
    p.to_string_lossy().into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn unknown_flag_prints_usage() {
    let out = deformtomo(&["pipeline", "--frobnicate"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn config_errors_exit_3_and_io_errors_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "unknown_key = 1\n").unwrap();
    let out = deformtomo(&["simulate", "--config", s(&bad), "--out", s(&dir.path().join("b"))]);
    assert_eq!(out.status.code(), Some(3));
    let out = deformtomo(&["fbp", "--bundle", s(&dir.path().join("missing")), "--out", s(&dir.path().join("f"))]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn stages_run_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let bundle = dir.path().join("bundle");
    let out = deformtomo(&["simulate", "--config", &cfg, "--out", s(&bundle), "--snr-db", "0"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let wo = dir.path().join("wo");
    let out = deformtomo(&["reconstruct", "--bundle", s(&bundle), "--mode", "est-wo", "--out", s(&wo)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let fbp = dir.path().join("fbp");
    assert!(deformtomo(&["fbp", "--bundle", s(&bundle), "--out", s(&fbp)]).status.success());
    let report = dir.path().join("report");
    let out = deformtomo(&[
        "evaluate", "--bundle", s(&bundle), "--method", s(&wo), "--method", s(&fbp), "--out", s(&report),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = fs::read_to_string(report.join("table1.csv")).unwrap();
    let rows: Vec<&str> = table.lines().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(rows, ["method", "EST-W/O", "FBP"]);
}

#[test]
fn seed_flag_and_environment_override_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let a = dir.path().join("a");
    assert!(deformtomo(&["simulate", "--config", &cfg, "--out", s(&a), "--seed", "11"]).status.success());
    let saved = fs::read_to_string(a.join("config.toml")).unwrap();
    assert!(saved.contains("seed = 11"));

    let b = dir.path().join("b");
    let out = Command::new(env!("CARGO_BIN_EXE_deformtomo"))
        .args(["simulate", "--config", &cfg, "--out", s(&b)])
        .env("DEFORMTOMO_SEED", "11")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(fs::read(a.join("observed.mrc")).unwrap(), fs::read(b.join("observed.mrc")).unwrap());
}

#[test]
fn pipeline_twice_gives_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let (a, b) = (dir.path().join("run1"), dir.path().join("run2"));
    assert!(deformtomo(&["pipeline", "--config", &cfg, "--out", s(&a)]).status.success());
    assert!(deformtomo(&["pipeline", "--config", &cfg, "--out", s(&b)]).status.success());
    for f in ["table1.csv", "fsc.csv"] {
        assert_eq!(fs::read(a.join("report").join(f)).unwrap(), fs::read(b.join("report").join(f)).unwrap());
    }
}
