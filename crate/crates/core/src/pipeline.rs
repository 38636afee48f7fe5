//! Stages of a run and the directory layout they share.
//!
//! ```text
//! <out>/config.toml
//! <out>/bundle/   config.toml volume_true.mrc clean.mrc deformed_clean.mrc observed.mrc deformations_true.dtdf
//! <out>/est/      config.toml method.txt volume.mrc deformations.dtdf checkpoint.dtck loss.csv
//! <out>/est-wo/   (same as est)
//! <out>/fbp/      config.toml method.txt volume.mrc
//! <out>/report/   config.toml table1.csv fsc.csv slices/*.png panels/*.png
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use crate::deformation::{
    read_deformations, sample_random_deformations, write_deformations, DeformationDump, DeformationParams,
};
use crate::error::{Error, Result};
use crate::fbp::fbp_reconstruct;
use crate::geometry::{project_tilt, Image, TiltGeometry, VolumeGrid};
use crate::io::{
    read_stack, read_volume, write_atomic, write_fsc, write_loss, write_png, write_stack, write_table1, write_volume,
    Precision, RunConfig,
};
use crate::metrics::{
    deformation_errors, fsc, register_volumes, resolution_at_threshold, snr_db, FscCurve, MethodRow, MetricsReport,
};
use crate::real::Real;
use crate::reconstruct::{train, voxelize, write_checkpoint, Mode, TrainState};
use crate::simulator::{generate_phantom, synthesize_tilt_series, Provenance, TiltSeries};

pub const CONFIG_FILE: &str = "config.toml";
pub const METHOD_FILE: &str = "method.txt";
pub const FBP_LABEL: &str = "FBP";

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, |w| w.write_all(text.as_bytes()))
}

fn write_config(dir: &Path, cfg: &RunConfig) -> Result<()> {
    write_text(&dir.join(CONFIG_FILE), &cfg.to_toml())
}

/// Everything `simulate` produced.
#[derive(Debug, Clone)]
pub struct Bundle<T> {
    pub config: RunConfig,
    pub volume: VolumeGrid<T>,
    pub clean: Vec<Image<T>>,
    pub deformed_clean: Vec<Image<T>>,
    pub observed: TiltSeries<T>,
    pub truth: DeformationParams<T>,
}

impl<T: Real> Bundle<T> {
    /// Mean over tilts of the per-image SNR of the observations against the
    /// deformed clean projections.
    pub fn measured_snr_db(&self) -> Result<f64> {
        let mut sum = 0.0;
        for (o, c) in self.observed.images.iter().zip(&self.deformed_clean) {
            sum += snr_db(o.data(), c.data())?;
        }
        Ok(sum / self.deformed_clean.len() as f64)
    }
}

/// Synthesizes the ground truth and observations described by `cfg`.
pub fn synthesize<T: Real>(cfg: &RunConfig) -> Result<Bundle<T>> {
    let n = cfg.phantom.n;
    let kind = cfg.phantom_kind()?;
    let geometry = cfg.tilt_geometry()?;
    let volume: VolumeGrid<T> = generate_phantom(n, &kind, cfg.phantom_seed())?;
    let truth = sample_random_deformations(geometry.len(), n, &cfg.deformation_config(), cfg.deformation_seed())?;
    let noise = cfg.noise_model();
    let provenance = Provenance {
        phantom: kind.tag(),
        phantom_seed: cfg.phantom_seed(),
        deformation_seed: cfg.deformation_seed(),
        noise_seed: noise.seed,
        snr_db: noise.snr_db,
    };
    let syn = synthesize_tilt_series(&volume, &geometry, &truth, &noise, provenance)?;
    Ok(Bundle {
        config: cfg.clone(),
        volume,
        clean: syn.clean,
        deformed_clean: syn.deformed_clean,
        observed: syn.observed,
        truth,
    })
}

pub fn write_bundle<T: Real>(bundle: &Bundle<T>, dir: &Path) -> Result<()> {
    ensure_dir(dir)?;
    write_config(dir, &bundle.config)?;
    write_volume(&dir.join("volume_true.mrc"), &bundle.volume)?;
    write_stack(&dir.join("clean.mrc"), &bundle.clean)?;
    write_stack(&dir.join("deformed_clean.mrc"), &bundle.deformed_clean)?;
    write_stack(&dir.join("observed.mrc"), &bundle.observed.images)?;
    let dump = DeformationDump::from_params(&bundle.truth, bundle.config.phantom.n);
    write_atomic(&dir.join("deformations_true.dtdf"), |w| write_deformations(&dump, w))
}

fn read_dump(path: &Path) -> Result<DeformationDump> {
    let mut f = std::io::BufReader::new(fs::File::open(path).map_err(|e| Error::io(path, e))?);
    read_deformations(&mut f).map_err(|e| match e {
        Error::Format { reason, .. } => Error::Format {
            path: path.to_path_buf(),
            reason,
        },
        other => other,
    })
}

pub fn load_bundle<T: Real>(dir: &Path) -> Result<Bundle<T>> {
    let config = RunConfig::load(&dir.join(CONFIG_FILE))?;
    let geometry = config.tilt_geometry()?;
    let volume = read_volume(&dir.join("volume_true.mrc"))?;
    let clean = read_stack(&dir.join("clean.mrc"))?;
    let deformed_clean = read_stack(&dir.join("deformed_clean.mrc"))?;
    let observed = read_stack(&dir.join("observed.mrc"))?;
    let truth = read_dump(&dir.join("deformations_true.dtdf"))?.to_params();
    let noise = config.noise_model();
    let provenance = Provenance {
        phantom: config.phantom.kind.clone(),
        phantom_seed: config.phantom_seed(),
        deformation_seed: config.deformation_seed(),
        noise_seed: noise.seed,
        snr_db: noise.snr_db,
    };
    let observed = TiltSeries::new(observed, geometry, provenance)?;
    if clean.len() != observed.len() || deformed_clean.len() != observed.len() {
        return Err(Error::Format {
            path: dir.to_path_buf(),
            reason: "bundle stacks disagree in length".into(),
        });
    }
    Ok(Bundle {
        config,
        volume,
        clean,
        deformed_clean,
        observed,
        truth,
    })
}

/// `simulate` stage. Returns the measured observation SNR.
pub fn simulate(cfg: &RunConfig, dir: &Path) -> Result<f64> {
    let bundle: Bundle<f64> = synthesize(cfg)?;
    write_bundle(&bundle, dir)?;
    bundle.measured_snr_db()
}

pub fn mode_dir_name(mode: Mode) -> &'static str {
    match mode {
        Mode::Est => "est",
        Mode::EstWo => "est-wo",
    }
}

fn reconstruct_as<T: Real>(bundle_dir: &Path, out: &Path, cfg: &RunConfig) -> Result<TrainState<T>> {
    let bundle: Bundle<T> = load_bundle(bundle_dir)?;
    let state = train(&cfg.training, &bundle.observed)?;
    ensure_dir(out)?;
    write_config(out, cfg)?;
    write_text(&out.join(METHOD_FILE), cfg.training.mode.label())?;
    write_volume(&out.join("volume.mrc"), &voxelize(&state.volume, cfg.phantom.n)?)?;
    let dump = DeformationDump::from_params(&state.deformation_params(), cfg.phantom.n);
    write_atomic(&out.join("deformations.dtdf"), |w| write_deformations(&dump, w))?;
    write_atomic(&out.join("checkpoint.dtck"), |w| write_checkpoint(&state, w))?;
    write_loss(&out.join("loss.csv"), &state.loss_history)?;
    Ok(state)
}

/// `reconstruct` stage: trains on the bundle's observations with the
/// training settings of `cfg` (the bundle's own config when `None`).
pub fn reconstruct(bundle_dir: &Path, out: &Path, mode: Mode, cfg: Option<&RunConfig>) -> Result<()> {
    let mut cfg = match cfg {
        Some(c) => c.clone(),
        None => RunConfig::load(&bundle_dir.join(CONFIG_FILE))?,
    };
    cfg.training.mode = mode;
    match cfg.precision {
        Precision::F32 => reconstruct_as::<f32>(bundle_dir, out, &cfg).map(|_| ()),
        Precision::F64 => reconstruct_as::<f64>(bundle_dir, out, &cfg).map(|_| ()),
    }
}

/// `fbp` stage.
pub fn run_fbp(bundle_dir: &Path, out: &Path, cfg: Option<&RunConfig>) -> Result<()> {
    let bundle: Bundle<f64> = load_bundle(bundle_dir)?;
    let cfg = cfg.cloned().unwrap_or_else(|| bundle.config.clone());
    let vol = fbp_reconstruct(&bundle.observed.images, &bundle.observed.geometry, &cfg.fbp)?;
    ensure_dir(out)?;
    write_config(out, &cfg)?;
    write_text(&out.join(METHOD_FILE), FBP_LABEL)?;
    write_volume(&out.join("volume.mrc"), &vol)
}

/// Per-method results of `evaluate`.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: MetricsReport,
    pub curves: Vec<(String, FscCurve)>,
    /// `resolution_at_threshold` at the configured threshold, per method.
    pub resolution: Vec<(String, f64)>,
}

impl Evaluation {
    pub fn resolution_of(&self, method: &str) -> Option<f64> {
        self.resolution.iter().find(|(m, _)| m == method).map(|r| r.1)
    }
}

fn file_stem(label: &str) -> String {
    label.to_ascii_lowercase().replace('/', "")
}

/// Mean over tilts of the SNR of projections of `est` against projections
/// of `truth`.
pub fn projection_snr_db(est: &VolumeGrid<f64>, truth: &VolumeGrid<f64>, geom: &TiltGeometry) -> Result<f64> {
    let mut sum = 0.0;
    for &a in geom.angles_deg() {
        let p = project_tilt(est, a, geom);
        let t = project_tilt(truth, a, geom);
        sum += snr_db(p.data(), t.data())?;
    }
    Ok(sum / geom.len() as f64)
}

/// `evaluate` stage over method directories written by `reconstruct` or
/// `run_fbp`.
pub fn evaluate(bundle_dir: &Path, method_dirs: &[PathBuf], out: &Path) -> Result<Evaluation> {
    let bundle: Bundle<f64> = load_bundle(bundle_dir)?;
    let cfg = &bundle.config;
    let n = cfg.phantom.n;
    let geom = bundle.observed.geometry.clone().with_samples(cfg.metrics.projection_samples.max(n))?;
    let center = geom
        .angles_deg()
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let identity = DeformationParams::identity(bundle.truth.len());

    ensure_dir(out)?;
    let slices = out.join("slices");
    let panels = out.join("panels");
    ensure_dir(&slices)?;
    ensure_dir(&panels)?;
    write_config(out, cfg)?;
    write_volume_slices(&slices, "true", &bundle.volume)?;
    for (name, img) in [
        ("1_clean", &bundle.clean[center]),
        ("2_deformed", &bundle.deformed_clean[center]),
        ("3_observed", &bundle.observed.images[center]),
    ] {
        write_png(&panels.join(format!("{name}.png")), n, n, img.data())?;
    }

    let mut eval = Evaluation {
        report: MetricsReport::default(),
        curves: Vec::new(),
        resolution: Vec::new(),
    };
    for dir in method_dirs {
        let label = fs::read_to_string(dir.join(METHOD_FILE)).map_err(|e| Error::io(dir.join(METHOD_FILE), e))?;
        let label = label.trim().to_string();
        let est_def = match dir.join("deformations.dtdf") {
            p if p.exists() => read_dump(&p)?.to_params(),
            _ => identity.clone(),
        };
        let errors = deformation_errors(&bundle.truth, &est_def, n)?;
        let vol: VolumeGrid<f64> = read_volume(&dir.join("volume.mrc"))?;
        let (reg, _) = register_volumes(&vol, &bundle.volume)?;
        let proj_snr_db = projection_snr_db(&reg, &bundle.volume, &geom)?;
        let curve = fsc(&reg, &bundle.volume, cfg.metrics.fsc_shells)?;
        eval.resolution
            .push((label.clone(), resolution_at_threshold(&curve, cfg.metrics.fsc_threshold)));
        eval.curves.push((label.clone(), curve));
        eval.report.rows.push(MethodRow {
            method: label.clone(),
            errors,
            proj_snr_db,
        });
        let stem = file_stem(&label);
        write_volume_slices(&slices, &stem, &reg)?;
        let panel = project_tilt(&reg, geom.angles_deg()[center], &geom);
        write_png(&panels.join(format!("proj_{stem}.png")), n, n, panel.data())?;
    }
    write_table1(&out.join("table1.csv"), &eval.report)?;
    write_fsc(&out.join("fsc.csv"), &eval.curves)?;
    Ok(eval)
}

/// Central xy, xz and yz sections.
fn write_volume_slices(dir: &Path, stem: &str, vol: &VolumeGrid<f64>) -> Result<()> {
    let n = vol.n();
    let c = n / 2;
    let mut xy = Vec::with_capacity(n * n);
    let mut xz = Vec::with_capacity(n * n);
    let mut yz = Vec::with_capacity(n * n);
    for a in 0..n {
        for b in 0..n {
            xy.push(vol.get(b, a, c));
            xz.push(vol.get(b, c, a));
            yz.push(vol.get(c, b, a));
        }
    }
    write_png(&dir.join(format!("{stem}_xy.png")), n, n, &xy)?;
    write_png(&dir.join(format!("{stem}_xz.png")), n, n, &xz)?;
    write_png(&dir.join(format!("{stem}_yz.png")), n, n, &yz)
}

/// All stages: simulate, both reconstructions, FBP and the report.
pub fn pipeline(cfg: &RunConfig, out: &Path) -> Result<Evaluation> {
    ensure_dir(out)?;
    write_config(out, cfg)?;
    let bundle_dir = out.join("bundle");
    simulate(cfg, &bundle_dir)?;
    let mut methods = Vec::new();
    for mode in [Mode::Est, Mode::EstWo] {
        let dir = out.join(mode_dir_name(mode));
        reconstruct(&bundle_dir, &dir, mode, Some(cfg))?;
        methods.push(dir);
    }
    let fbp_dir = out.join("fbp");
    run_fbp(&bundle_dir, &fbp_dir, Some(cfg))?;
    methods.push(fbp_dir);
    evaluate(&bundle_dir, &methods, &out.join("report"))
}
