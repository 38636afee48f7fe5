//! Joint estimation of the density field and per-tilt deformations by
//! minimizing the pixel-space mean squared error over random minibatches.

mod gauge;
mod kernel;
mod state;

pub use kernel::{BatchEval, BatchGrads, GradRequest, PixelRef, Renderer};
pub use state::{read_checkpoint, write_checkpoint, EstimatedTilt, LossRecord, TrainState};

use std::str::FromStr;
use std::time::Instant;

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diff_core::adam_step;
use crate::error::{Error, Result};
use crate::geometry::{cell_center, Image, VolumeGrid};
use crate::neural_field::{FieldConfig, NeuralField};
use crate::real::Real;
use crate::rng::{stream, stream_rng};
use crate::simulator::TiltSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Volume and deformations.
    Est,
    /// Volume only; deformations stay at identity.
    EstWo,
}

impl Mode {
    pub fn label(self) -> &'static str {
        match self {
            Mode::Est => "EST",
            Mode::EstWo => "EST-W/O",
        }
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "est" => Ok(Mode::Est),
            "est-wo" => Ok(Mode::EstWo),
            other => Err(Error::Config(format!("unknown mode `{other}` (est | est-wo)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch_pixels: usize,
    /// Tilts sampled per batch; 0 draws pixels uniformly over all tilts.
    pub tilts_per_batch: usize,
    pub lr_volume: f64,
    /// Learning rate of `α` (radians) and `τ`.
    pub lr_global: f64,
    pub lr_local: f64,
    pub seed: u64,
    pub mode: Mode,
    pub ray_samples: usize,
    pub log_every: usize,
    /// Deformations stay frozen for this many initial iterations.
    pub deformation_warmup: usize,
    /// Local warps stay frozen for this many initial iterations, so that the
    /// rigid parameters are fitted first.
    pub local_warmup: usize,
    /// Abort when a window mean of the loss exceeds the best earlier window
    /// mean by this factor.
    pub trend_abort_ratio: f64,
    pub trend_window: usize,
    /// Keeps local warps zero-mean, and in-plane angles and shifts free of
    /// the components a small volume rotation or translation would produce,
    /// after every deformation step.
    pub gauge_fix: bool,
    pub volume: FieldConfig,
    pub warp: FieldConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 20_000,
            batch_pixels: 512,
            tilts_per_batch: 0,
            lr_volume: 1e-3,
            lr_global: 1e-3,
            lr_local: 1e-4,
            seed: 0,
            mode: Mode::Est,
            ray_samples: 64,
            log_every: 100,
            deformation_warmup: 0,
            local_warmup: 10_000,
            trend_abort_ratio: 4.0,
            trend_window: 100,
            gauge_fix: true,
            volume: FieldConfig::volume_default(),
            warp: FieldConfig::warp_default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_pixels == 0 || self.ray_samples == 0 || self.log_every == 0 || self.trend_window == 0 {
            return Err(Error::Config(
                "batch_pixels, ray_samples, log_every and trend_window must be positive".into(),
            ));
        }
        for (name, lr) in [
            ("lr_volume", self.lr_volume),
            ("lr_global", self.lr_global),
            ("lr_local", self.lr_local),
        ] {
            if !(lr.is_finite() && lr >= 0.0) {
                return Err(Error::Config(format!("{name} = {lr}")));
            }
        }
        if !(self.trend_abort_ratio > 1.0) {
            return Err(Error::Config(format!("trend_abort_ratio = {}", self.trend_abort_ratio)));
        }
        if self.volume.input_dim != 3 || self.volume.output_dim != 1 {
            return Err(Error::Config("volume field must map R^3 -> R".into()));
        }
        if self.warp.input_dim != 2 || self.warp.output_dim != 2 {
            return Err(Error::Config("warp fields must map R^2 -> R^2".into()));
        }
        self.volume.validate()?;
        self.warp.validate()
    }
}

/// Draws the pixels of iteration `iteration`; depends only on the seed and
/// the iteration index.
pub fn sample_batch(cfg: &TrainConfig, iteration: usize, m: usize, n: usize) -> Vec<PixelRef> {
    let mut rng = stream_rng(cfg.seed, stream::TRAIN, iteration as u64);
    let per_tilt = n * n;
    let tilts: Option<Vec<usize>> = (cfg.tilts_per_batch > 0 && cfg.tilts_per_batch < m)
        .then(|| sample_indices(&mut rng, m, cfg.tilts_per_batch).into_vec());
    (0..cfg.batch_pixels)
        .map(|_| {
            let (tilt, pix) = match &tilts {
                Some(t) => (t[rng.gen_range(0..t.len())], rng.gen_range(0..per_tilt)),
                None => {
                    let k = rng.gen_range(0..m * per_tilt);
                    (k / per_tilt, k % per_tilt)
                }
            };
            PixelRef {
                tilt,
                u: pix % n,
                v: pix / n,
            }
        })
        .collect()
}

fn targets<T: Real>(obs: &TiltSeries<T>, batch: &[PixelRef]) -> Result<Vec<T>> {
    batch
        .iter()
        .map(|p| {
            let img = obs.images.get(p.tilt).ok_or(Error::OutOfRange {
                index: p.tilt,
                len: obs.len(),
            })?;
            if p.u >= img.n() || p.v >= img.n() {
                return Err(Error::OutOfRange {
                    index: p.u.max(p.v),
                    len: img.n(),
                });
            }
            Ok(img.get(p.u, p.v))
        })
        .collect()
}

fn renderer<'a, T: Real>(
    state: &'a TrainState<T>,
    obs: &TiltSeries<T>,
    samples: usize,
    with_deformation: bool,
) -> Result<Renderer<'a, T>> {
    Renderer::new(
        &state.volume,
        with_deformation.then_some(state.tilts.as_slice()),
        obs.geometry.angles_deg(),
        obs.n(),
        samples,
    )
}

/// Mean of `(y_m(x) - rendered(x))^2` over the batch.
pub fn loss_batch<T: Real>(
    state: &TrainState<T>,
    batch: &[PixelRef],
    obs: &TiltSeries<T>,
    samples: usize,
) -> Result<T> {
    let y = targets(obs, batch)?;
    let r = renderer(state, obs, samples, true)?;
    let eval = r.evaluate(batch, Some(&y), GradRequest::NONE)?;
    Ok(eval.loss.expect("targets given"))
}

/// Loss and gradients for one batch without changing the state.
pub fn loss_and_grads<T: Real>(
    state: &TrainState<T>,
    batch: &[PixelRef],
    obs: &TiltSeries<T>,
    samples: usize,
    request: GradRequest,
) -> Result<(T, BatchGrads<T>)> {
    let y = targets(obs, batch)?;
    let r = renderer(state, obs, samples, true)?;
    let eval = r.evaluate(batch, Some(&y), request)?;
    let loss = eval.loss.expect("targets given");
    let grads = eval.grads.unwrap_or_else(|| BatchGrads {
        volume: Vec::new(),
        global: vec![[T::zero(); 3]; obs.len()],
        local: vec![None; obs.len()],
    });
    Ok((loss, grads))
}

/// Watches window means of the loss for a sustained rise.
#[derive(Debug, Clone)]
struct TrendMonitor {
    window: usize,
    ratio: f64,
    sum: f64,
    count: usize,
    best: f64,
}

impl TrendMonitor {
    fn new(window: usize, ratio: f64) -> Self {
        Self {
            window,
            ratio,
            sum: 0.0,
            count: 0,
            best: f64::INFINITY,
        }
    }

    fn push(&mut self, loss: f64, iteration: usize) -> Result<()> {
        self.sum += loss;
        self.count += 1;
        if self.count < self.window {
            return Ok(());
        }
        let mean = self.sum / self.count as f64;
        self.sum = 0.0;
        self.count = 0;
        if mean > self.ratio * self.best {
            return Err(Error::LossTrend {
                iteration,
                window_mean: mean,
                best: self.best,
            });
        }
        self.best = self.best.min(mean);
        Ok(())
    }
}

/// Continues optimizing `state` up to `cfg.iterations`. On error the state
/// holds the last parameters that produced a finite loss.
pub fn resume<T: Real>(state: &mut TrainState<T>, cfg: &TrainConfig, obs: &TiltSeries<T>) -> Result<()> {
    cfg.validate()?;
    if state.tilts.len() != obs.len() {
        return Err(Error::shape("train state tilts", obs.len(), state.tilts.len()));
    }
    let (m, n) = (obs.len(), obs.n());
    let start = Instant::now();
    let mut monitor = TrendMonitor::new(cfg.trend_window, cfg.trend_abort_ratio);
    while state.iteration < cfg.iterations {
        let it = state.iteration;
        let batch = sample_batch(cfg, it, m, n);
        let learn_deformation = cfg.mode == Mode::Est && it >= cfg.deformation_warmup;
        let request = GradRequest {
            volume: true,
            deformation: learn_deformation,
        };
        let (loss, grads) = loss_and_grads(state, &batch, obs, cfg.ray_samples, request)?;
        if !loss.is_finite() {
            return Err(Error::Divergence {
                iteration: it,
                loss: loss.as_f64(),
            });
        }
        monitor.push(loss.as_f64(), it)?;

        adam_step(state.volume.mlp_mut().params_mut(), &grads.volume, &mut state.volume_adam)?;
        if learn_deformation {
            for (t, tilt) in state.tilts.iter_mut().enumerate() {
                let Some(local) = &grads.local[t] else { continue };
                adam_step(&mut tilt.global, &grads.global[t], &mut state.global_adam[t])?;
                if it >= cfg.local_warmup {
                    adam_step(tilt.local.mlp_mut().params_mut(), local, &mut state.local_adam[t])?;
                }
                if cfg.gauge_fix {
                    gauge::recenter_local(tilt);
                }
            }
            if cfg.gauge_fix {
                gauge::project_rotation(&mut state.tilts, obs.geometry.angles_deg());
                gauge::project_translation(&mut state.tilts, obs.geometry.angles_deg());
            }
        }
        state.iteration += 1;
        state.loss_history.push(LossRecord {
            iteration: it,
            loss: loss.as_f64(),
            wall_seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok(())
}

/// Initializes a state for `obs` and trains it.
pub fn train<T: Real>(cfg: &TrainConfig, obs: &TiltSeries<T>) -> Result<TrainState<T>> {
    let mut state = TrainState::init(cfg, obs.len())?;
    resume(&mut state, cfg, obs)?;
    Ok(state)
}

/// Field values at the `n^3` voxel centers.
pub fn voxelize<T: Real>(field: &NeuralField<T>, n: usize) -> Result<VolumeGrid<T>> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("voxelize needs N >= 2, got {n}")));
    }
    if field.input_dim() != 3 || field.output_dim() != 1 {
        return Err(Error::InvalidArgument("voxelize needs a field R^3 -> R".into()));
    }
    let mut data = Vec::with_capacity(n * n * n);
    let mut chunk = Vec::new();
    let flush = |chunk: &mut Vec<T>, data: &mut Vec<T>| -> Result<()> {
        if !chunk.is_empty() {
            let out = field.eval_batch(chunk)?;
            data.extend(out.column(0).iter().copied());
            chunk.clear();
        }
        Ok(())
    };
    for z in 0..n {
        for y in 0..n {
            for x in 0..n {
                chunk.extend([cell_center::<T>(x, n), cell_center(y, n), cell_center(z, n)]);
            }
            if chunk.len() >= 3 * 8192 {
                flush(&mut chunk, &mut data)?;
            }
        }
    }
    flush(&mut chunk, &mut data)?;
    VolumeGrid::from_vec(n, data)
}

/// Full-frame renderings of every tilt, optionally through the estimated
/// deformations.
pub fn render_projections<T: Real>(
    state: &TrainState<T>,
    obs: &TiltSeries<T>,
    samples: usize,
    with_deformation: bool,
) -> Result<Vec<Image<T>>> {
    let n = obs.n();
    let r = renderer(state, obs, samples, with_deformation)?;
    let rows_per_chunk = (1024 / n).max(1);
    (0..obs.len())
        .map(|tilt| {
            let mut img = Image::zeros(n);
            for v0 in (0..n).step_by(rows_per_chunk) {
                let pixels: Vec<PixelRef> = (v0..(v0 + rows_per_chunk).min(n))
                    .flat_map(|v| (0..n).map(move |u| PixelRef { tilt, u, v }))
                    .collect();
                let eval = r.evaluate(&pixels, None, GradRequest::NONE)?;
                for (p, val) in pixels.iter().zip(eval.rendered) {
                    img.set(p.u, p.v, val);
                }
            }
            Ok(img)
        })
        .collect()
}
