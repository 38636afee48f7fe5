use deformtomo::deformation::{sample_random_deformations, DeformationParams, RandomDeformationConfig};
use deformtomo::diff_core::{finite_difference_grad, max_relative_error, ParamBlock};
use deformtomo::geometry::{TiltGeometry, VolumeGrid};
use deformtomo::neural_field::FieldConfig;
use deformtomo::reconstruct::*;
use deformtomo::simulator::{generate_phantom, synthesize_tilt_series, NoiseModel, PhantomKind, Provenance, TiltSeries};

fn small_cfg() -> TrainConfig {
    TrainConfig {
        batch_pixels: 16,
        ray_samples: 12,
        volume: FieldConfig {
            frequencies: 4,
            hidden_width: 8,
            depth: 2,
            ..FieldConfig::volume_default()
        },
        warp: FieldConfig {
            frequencies: 3,
            hidden_width: 6,
            depth: 1,
            zero_init_last: false,
            ..FieldConfig::warp_default()
        },
        ..TrainConfig::default()
    }
}

fn series(n: usize, m: usize, deformed: bool) -> TiltSeries<f64> {
    let geom = TiltGeometry::uniform(n, m, -60.0, 60.0).unwrap();
    let vol: VolumeGrid<f64> = generate_phantom(n, &PhantomKind::GaussianBlobs, 3).unwrap();
    let defs = if deformed {
        sample_random_deformations(m, n, &RandomDeformationConfig::default(), 4).unwrap()
    } else {
        DeformationParams::identity(m)
    };
    synthesize_tilt_series(&vol, &geom, &defs, &NoiseModel::none(), Provenance::default())
        .unwrap()
        .observed
}

fn blocks(st: &TrainState<f64>) -> Vec<ParamBlock<f64>> {
    let mut b = vec![st.volume.mlp().params().clone()];
    for t in &st.tilts {
        b.push(t.global.clone());
        b.push(t.local.mlp().params().clone());
    }
    b
}

fn load(st: &mut TrainState<f64>, b: &[ParamBlock<f64>]) {
    *st.volume.mlp_mut().params_mut() = b[0].clone();
    for (i, t) in st.tilts.iter_mut().enumerate() {
        t.global = b[1 + 2 * i].clone();
        *t.local.mlp_mut().params_mut() = b[2 + 2 * i].clone();
    }
}

#[test]
fn analytic_gradients_match_finite_differences() {
    let (n, m) = (8, 3);
    let cfg = small_cfg();
    let obs = series(n, m, true);
    let mut st = TrainState::<f64>::init(&cfg, m).unwrap();
    for (i, t) in st.tilts.iter_mut().enumerate() {
        let v = t.global.values_mut();
        v[0] = 0.05 * (i as f64 + 1.0);
        v[1] = 0.03;
        v[2] = -0.02 * i as f64;
    }
    let batch: Vec<PixelRef> = (0..16)
        .map(|k| PixelRef {
            tilt: k % m,
            u: 1 + (k * 5) % 6,
            v: 1 + (k * 3) % 6,
        })
        .collect();
    let (_, g) = loss_and_grads(&st, &batch, &obs, cfg.ray_samples, GradRequest::ALL).unwrap();
    let mut analytic = vec![g.volume.clone()];
    for i in 0..m {
        analytic.push(g.global[i].to_vec());
        analytic.push(g.local[i].clone().expect("tilt present in batch"));
    }

    let params = blocks(&st);
    let mut work = st.clone();
    let numeric = finite_difference_grad(
        |b| {
            load(&mut work, b);
            loss_batch(&work, &batch, &obs, cfg.ray_samples)
        },
        &params,
        1e-6,
    )
    .unwrap();
    let err = max_relative_error(&analytic, &numeric, 1e-6);
    assert!(err < 1e-4, "max relative error {err}");
    assert!(analytic.iter().flatten().any(|v| v.abs() > 1e-6));
}

#[test]
fn absent_tilts_get_no_local_gradient() {
    let cfg = small_cfg();
    let obs = series(8, 3, false);
    let st = TrainState::<f64>::init(&cfg, 3).unwrap();
    let batch = vec![PixelRef { tilt: 1, u: 3, v: 4 }; 4];
    let (_, g) = loss_and_grads(&st, &batch, &obs, 8, GradRequest::ALL).unwrap();
    assert!(g.local[0].is_none() && g.local[2].is_none());
    assert_eq!(g.global[0], [0.0; 3]);
    assert!(g.local[1].is_some());
}

#[test]
fn frozen_deformations_equal_est_wo() {
    let obs = series(8, 3, true);
    let base = TrainConfig {
        iterations: 15,
        warp: FieldConfig::warp_default(),
        ..small_cfg()
    };
    let frozen = TrainConfig {
        lr_global: 0.0,
        lr_local: 0.0,
        ..base
    };
    let wo = TrainConfig {
        mode: Mode::EstWo,
        ..base
    };
    let a = train(&frozen, &obs).unwrap();
    let b = train(&wo, &obs).unwrap();
    assert_eq!(a.volume, b.volume);
    let id = TrainState::<f64>::init(&base, 3).unwrap();
    assert_eq!(b.tilts, id.tilts);
}

#[test]
fn training_is_deterministic_and_resumable() {
    let obs = series(8, 3, true);
    let cfg = TrainConfig {
        iterations: 12,
        ..small_cfg()
    };
    let a = train(&cfg, &obs).unwrap();
    let b = train(&cfg, &obs).unwrap();
    assert_eq!(a.volume, b.volume);
    assert_eq!(a.tilts, b.tilts);

    let half = TrainConfig { iterations: 6, ..cfg };
    let mut c = train(&half, &obs).unwrap();
    resume(&mut c, &cfg, &obs).unwrap();
    assert_eq!(c.volume, a.volume);
    assert_eq!(c.iteration, 12);
}

#[test]
fn zero_iterations_leave_the_init() {
    let obs = series(8, 3, false);
    let cfg = TrainConfig {
        iterations: 0,
        ..small_cfg()
    };
    let st = train(&cfg, &obs).unwrap();
    assert_eq!(st, TrainState::init(&cfg, 3).unwrap());
}

#[test]
fn checkpoint_round_trip() {
    let obs = series(8, 3, true);
    let cfg = TrainConfig {
        iterations: 5,
        ..small_cfg()
    };
    let st = train(&cfg, &obs).unwrap();
    let mut buf = Vec::new();
    write_checkpoint(&st, &mut buf).unwrap();
    let back: TrainState<f64> = read_checkpoint(&cfg, &mut buf.as_slice()).unwrap();
    assert_eq!(back.volume, st.volume);
    assert_eq!(back.tilts, st.tilts);
    assert_eq!(back.iteration, 5);
    assert!(read_checkpoint::<f64, _>(&cfg, &mut &buf[..10]).is_err());
}

#[test]
fn voxelize_matches_pointwise_eval() {
    let cfg = small_cfg();
    let st = TrainState::<f64>::init(&cfg, 1).unwrap();
    let grid = voxelize(&st.volume, 6).unwrap();
    let c = |i: usize| -1.0 + (i as f64 + 0.5) * 2.0 / 6.0;
    let direct = st.volume.eval(&[c(1), c(4), c(2)]).unwrap()[0];
    assert!((grid.get(1, 4, 2) - direct).abs() < 1e-12);
}

#[test]
fn rendered_frames_match_batch_rendering() {
    let obs = series(8, 3, true);
    let cfg = small_cfg();
    let st = TrainState::<f64>::init(&cfg, 3).unwrap();
    let frames = render_projections(&st, &obs, cfg.ray_samples, true).unwrap();
    assert_eq!(frames.len(), 3);
    let px = [PixelRef { tilt: 2, u: 5, v: 1 }];
    let r = Renderer::new(&st.volume, Some(&st.tilts), obs.geometry.angles_deg(), 8, cfg.ray_samples).unwrap();
    let one = r.evaluate(&px, None, GradRequest::NONE).unwrap();
    assert!((frames[2].get(5, 1) - one.rendered[0]).abs() < 1e-12);
}

#[test]
fn est_wo_loss_falls_on_undeformed_data() {
    let obs = series(16, 9, false);
    let cfg = TrainConfig {
        iterations: 400,
        batch_pixels: 256,
        ray_samples: 24,
        lr_volume: 3e-3,
        mode: Mode::EstWo,
        log_every: 20,
        volume: FieldConfig {
            frequencies: 16,
            hidden_width: 24,
            depth: 2,
            ..FieldConfig::volume_default()
        },
        ..TrainConfig::default()
    };
    let st = train(&cfg, &obs).unwrap();
    let h = &st.loss_history;
    let first = h[..3].iter().map(|r| r.loss).sum::<f64>();
    let last = h[h.len() - 3..].iter().map(|r| r.loss).sum::<f64>();
    assert!(last < 0.5 * first, "loss {first} -> {last}");
}
