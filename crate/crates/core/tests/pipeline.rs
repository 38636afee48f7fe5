use std::fs;

use deformtomo::io::{read_png, read_table1, RunConfig, TABLE1_HEADER};
use deformtomo::pipeline::{self, Bundle};
use deformtomo::reconstruct::Mode;

const TINY: &str = r#"
seed = 5
[phantom]
n = 16
[geometry]
tilts = 7
[training]
iterations = 30
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

#[test]
fn pipeline_writes_every_artifact_and_is_deterministic() {
    let cfg = RunConfig::from_toml(TINY).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let eval = pipeline::pipeline(&cfg, &a).unwrap();
    pipeline::pipeline(&cfg, &b).unwrap();
    for f in ["table1.csv", "fsc.csv"] {
        let x = fs::read(a.join("report").join(f)).unwrap();
        let y = fs::read(b.join("report").join(f)).unwrap();
        assert_eq!(x, y, "{f} differs between runs");
    }

    let rows = read_table1(&a.join("report/table1.csv")).unwrap();
    let labels: Vec<&str> = rows.iter().map(|r| r.0.as_str()).collect();
    assert_eq!(labels, ["EST", "EST-W/O", "FBP"]);
    // identity estimates share one error row
    assert_eq!(rows[1].1[..4], rows[2].1[..4]);
    assert!(rows.iter().all(|r| r.1[..4].iter().all(|&v| v >= 0.0)));

    let fsc = fs::read_to_string(a.join("report/fsc.csv")).unwrap();
    assert_eq!(fsc.lines().count(), 1 + 3 * cfg.metrics.fsc_shells);
    assert_eq!(eval.curves.len(), 3);

    for sub in ["", "bundle", "est", "est-wo", "fbp", "report"] {
        let saved = RunConfig::load(&a.join(sub).join("config.toml")).unwrap();
        assert_eq!(saved.seed, cfg.seed, "config copy in {sub:?}");
    }
    for name in ["1_clean", "2_deformed", "3_observed", "proj_fbp", "proj_est-wo", "proj_est"] {
        let (w, h, _) = read_png(&a.join("report/panels").join(format!("{name}.png"))).unwrap();
        assert_eq!((w, h), (16, 16));
    }
    let (_, _, px) = read_png(&a.join("report/slices/true_xz.png")).unwrap();
    assert_eq!(*px.iter().min().unwrap(), 0);
    assert_eq!(*px.iter().max().unwrap(), 255);
}

#[test]
fn simulate_hits_the_requested_snr() {
    let dir = tempfile::tempdir().unwrap();
    for target in [0.0, 10.0] {
        let mut cfg = RunConfig::from_toml(TINY).unwrap();
        cfg.noise.snr_db = target;
        let out = dir.path().join(format!("b{target}"));
        let measured = pipeline::simulate(&cfg, &out).unwrap();
        assert!((measured - target).abs() <= 0.3, "{measured} vs {target}");
        let bundle: Bundle<f64> = pipeline::load_bundle(&out).unwrap();
        // stored as 32-bit, so recompute from the files
        assert!((bundle.measured_snr_db().unwrap() - target).abs() <= 0.3);
        assert_eq!(bundle.observed.len(), 7);
    }
}

#[test]
fn stages_compose_like_the_pipeline() {
    let cfg = RunConfig::from_toml(TINY).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let bundle = dir.path().join("bundle");
    pipeline::simulate(&cfg, &bundle).unwrap();
    let wo = dir.path().join("wo");
    pipeline::reconstruct(&bundle, &wo, Mode::EstWo, None).unwrap();
    let eval = pipeline::evaluate(&bundle, std::slice::from_ref(&wo), &dir.path().join("report")).unwrap();
    assert_eq!(eval.report.rows[0].method, "EST-W/O");
    let text = fs::read_to_string(dir.path().join("report/table1.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), TABLE1_HEADER.join(","));
    assert!(fs::read_to_string(wo.join("loss.csv")).unwrap().lines().count() == 31);
}

#[test]
fn missing_bundle_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let err = pipeline::run_fbp(&dir.path().join("nope"), &dir.path().join("out"), None).unwrap_err();
    assert_eq!(err.kind(), deformtomo::ErrorKind::Io);
}
