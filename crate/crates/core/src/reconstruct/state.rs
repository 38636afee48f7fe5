use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::TrainConfig;
use crate::deformation::{DeformationParams, GlobalDeformParams, LocalWarp, TiltDeformation};
use crate::diff_core::{AdamConfig, AdamState, ParamBlock};
use crate::error::{Error, Result};
use crate::neural_field::checkpoint::{read_field, write_field};
use crate::neural_field::NeuralField;
use crate::real::Real;
use crate::rng::{derive_seed, stream};

/// Estimated deformation of one tilt: `[α (radians), τx, τy]` and the local
/// warp network.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatedTilt<T> {
    pub global: ParamBlock<T>,
    pub local: NeuralField<T>,
}

impl<T: Real> EstimatedTilt<T> {
    pub fn identity(cfg: &TrainConfig, seed: u64, m: usize) -> Result<Self> {
        let net_seed = derive_seed(seed, stream::WARP_INIT, m as u64);
        Ok(Self {
            global: ParamBlock::zeros(vec![3], format!("alpha_tau[{m}]")),
            local: NeuralField::new(&cfg.warp, net_seed, &format!("gamma[{m}]"))?,
        })
    }

    pub fn to_deformation(&self) -> TiltDeformation<T> {
        let g = self.global.values();
        TiltDeformation {
            global: GlobalDeformParams {
                alpha_deg: g[0].to_degrees(),
                tau: [g[1], g[2]],
            },
            local: LocalWarp::Net(self.local.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub iteration: usize,
    pub loss: f64,
    pub wall_seconds: f64,
}

/// Everything the optimizer owns.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState<T> {
    pub volume: NeuralField<T>,
    pub tilts: Vec<EstimatedTilt<T>>,
    pub volume_adam: AdamState<T>,
    pub global_adam: Vec<AdamState<T>>,
    pub local_adam: Vec<AdamState<T>>,
    pub iteration: usize,
    pub loss_history: Vec<LossRecord>,
}

impl<T: Real> TrainState<T> {
    /// Fresh field and identity deformations for `m` tilts.
    pub fn init(cfg: &TrainConfig, m: usize) -> Result<Self> {
        cfg.validate()?;
        let volume = NeuralField::new(&cfg.volume, derive_seed(cfg.seed, stream::VOLUME_INIT, 0), "psi")?;
        let tilts = (0..m)
            .map(|i| EstimatedTilt::identity(cfg, cfg.seed, i))
            .collect::<Result<Vec<_>>>()?;
        let volume_adam = AdamState::for_block(volume.mlp().params(), AdamConfig::with_lr(cfg.lr_volume));
        let global_adam = tilts
            .iter()
            .map(|t| AdamState::for_block(&t.global, AdamConfig::with_lr(cfg.lr_global)))
            .collect();
        let local_adam = tilts
            .iter()
            .map(|t| AdamState::for_block(t.local.mlp().params(), AdamConfig::with_lr(cfg.lr_local)))
            .collect();
        Ok(Self {
            volume,
            tilts,
            volume_adam,
            global_adam,
            local_adam,
            iteration: 0,
            loss_history: Vec::new(),
        })
    }

    pub fn deformation_params(&self) -> DeformationParams<T> {
        DeformationParams {
            tilts: self.tilts.iter().map(EstimatedTilt::to_deformation).collect(),
        }
    }
}

const MAGIC: &[u8; 4] = b"DTCK";
const VERSION: u32 = 1;

/// Checkpoint: the volume field, then per tilt the three global scalars and
/// the local-warp field. Optimizer moments are not stored.
pub fn write_checkpoint<T: Real, W: Write + ?Sized>(state: &TrainState<T>, w: &mut W) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    w.write_u64::<LittleEndian>(state.iteration as u64)?;
    write_field(&state.volume, w)?;
    w.write_u32::<LittleEndian>(state.tilts.len() as u32)?;
    for t in &state.tilts {
        for &v in t.global.values() {
            w.write_f64::<LittleEndian>(v.as_f64())?;
        }
        write_field(&t.local, w)?;
    }
    Ok(())
}

/// Restores fields and deformations into a state built from `cfg`.
pub fn read_checkpoint<T: Real, R: Read>(cfg: &TrainConfig, r: &mut R) -> Result<TrainState<T>> {
    let fmt = |reason: String| Error::Format {
        path: "<checkpoint>".into(),
        reason,
    };
    let io = |e: std::io::Error| fmt(format!("read failed: {e}"));
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != MAGIC {
        return Err(fmt("bad magic".into()));
    }
    let version = r.read_u32::<LittleEndian>().map_err(io)?;
    if version != VERSION {
        return Err(fmt(format!("unsupported version {version}")));
    }
    let iteration = r.read_u64::<LittleEndian>().map_err(io)? as usize;
    let volume = read_field::<T, _>(r, "psi")?;
    let m = r.read_u32::<LittleEndian>().map_err(io)? as usize;
    let mut state = TrainState::init(cfg, m)?;
    state.volume = volume;
    state.iteration = iteration;
    for (i, t) in state.tilts.iter_mut().enumerate() {
        let mut g = [T::zero(); 3];
        for v in &mut g {
            *v = T::lit(r.read_f64::<LittleEndian>().map_err(io)?);
        }
        t.global = ParamBlock::new(g.to_vec(), vec![3], format!("alpha_tau[{i}]"))?;
        t.local = read_field(r, &format!("gamma[{i}]"))?;
    }
    if state.volume.mlp().params().len() != state.volume_adam.m.len() {
        state.volume_adam = AdamState::for_block(state.volume.mlp().params(), state.volume_adam.config);
    }
    for (t, a) in state.tilts.iter().zip(&mut state.local_adam) {
        if t.local.mlp().params().len() != a.m.len() {
            *a = AdamState::for_block(t.local.mlp().params(), a.config);
        }
    }
    Ok(state)
}
