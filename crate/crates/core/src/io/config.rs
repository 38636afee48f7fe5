use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::deformation::RandomDeformationConfig;
use crate::error::{Error, Result};
use crate::fbp::FilterSpec;
use crate::geometry::TiltGeometry;
use crate::reconstruct::TrainConfig;
use crate::rng::{derive_seed, stream};
use crate::simulator::{NoiseModel, NoiseScope, PhantomKind};

pub const SCHEMA_VERSION: u32 = 1;
pub const SEED_ENV: &str = "DEFORMTOMO_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomSection {
    /// `gaussian-blobs`, `shepp-logan-3d` or `from-mrc:<path>`.
    pub kind: String,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    pub tilts: usize,
    pub min_deg: f64,
    pub max_deg: f64,
    /// Samples per ray in the simulator; 0 selects `2N`.
    pub ray_samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeformationSection {
    pub max_shift_fraction: f64,
    pub max_rotation_deg: f64,
    pub elastic_grid: usize,
    /// 0 selects `N / 8`.
    pub elastic_sigma_px: f64,
    pub elastic_max_px: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    /// `inf` disables noise.
    pub snr_db: f64,
    pub scope: NoiseScope,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsSection {
    /// 0 selects `N / 2`.
    pub fsc_shells: usize,
    pub fsc_threshold: f64,
    /// Samples per ray when re-projecting estimated volumes; 0 selects `2N`.
    pub projection_samples: usize,
}

/// Every tunable of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    /// Master seed; phantom, deformation and noise seeds derive from it and
    /// training uses it directly.
    pub seed: u64,
    /// Scalar type of training.
    pub precision: Precision,
    pub phantom: PhantomSection,
    pub geometry: GeometrySection,
    pub deformation: DeformationSection,
    pub noise: NoiseSection,
    pub training: TrainConfig,
    pub fbp: FilterSpec,
    pub metrics: MetricsSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        let d = RandomDeformationConfig::default();
        Self {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            precision: Precision::F32,
            phantom: PhantomSection {
                kind: "gaussian-blobs".into(),
                n: 64,
            },
            geometry: GeometrySection {
                tilts: 41,
                min_deg: -70.0,
                max_deg: 70.0,
                ray_samples: 0,
            },
            deformation: DeformationSection {
                max_shift_fraction: d.max_shift_fraction,
                max_rotation_deg: d.max_rotation_deg,
                elastic_grid: d.elastic_grid,
                elastic_sigma_px: 0.0,
                elastic_max_px: d.elastic_max_px,
            },
            noise: NoiseSection {
                snr_db: 0.0,
                scope: NoiseScope::PerImage,
            },
            training: TrainConfig::default(),
            fbp: FilterSpec::default(),
            metrics: MetricsSection {
                fsc_shells: 0,
                fsc_threshold: 0.5,
                projection_samples: 0,
            },
        }
    }
}

impl RunConfig {
    /// Parses a TOML document; sections and keys left out take their
    /// defaults, unknown keys are rejected, and automatic values are filled in.
    pub fn from_toml(text: &str) -> Result<Self> {
        let doc: toml::Table = text.parse().map_err(|e| Error::Config(format!("{e}")))?;
        let mut merged = toml::Table::try_from(Self::default()).map_err(|e| Error::Config(e.to_string()))?;
        merge(&mut merged, doc);
        let mut cfg: Self = merged.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} (this build reads {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        cfg.materialize();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Applies `DEFORMTOMO_SEED` if set.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            let seed = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV}={v} is not an unsigned integer")))?;
            self.set_seed(seed);
        }
        Ok(())
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.training.seed = seed;
    }

    fn materialize(&mut self) {
        let n = self.phantom.n;
        if self.geometry.ray_samples == 0 {
            self.geometry.ray_samples = 2 * n;
        }
        if self.deformation.elastic_sigma_px == 0.0 {
            self.deformation.elastic_sigma_px = n as f64 / 8.0;
        }
        if self.metrics.fsc_shells == 0 {
            self.metrics.fsc_shells = n / 2;
        }
        if self.metrics.projection_samples == 0 {
            self.metrics.projection_samples = 2 * n;
        }
        self.training.seed = self.seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.phantom_kind()?;
        if self.phantom.n < 4 {
            return Err(Error::Config(format!("phantom.n = {} (need >= 4)", self.phantom.n)));
        }
        self.tilt_geometry()?;
        let d = &self.deformation;
        if !(d.max_shift_fraction >= 0.0 && d.max_rotation_deg >= 0.0 && d.elastic_max_px >= 0.0) {
            return Err(Error::Config("deformation bounds must be non-negative".into()));
        }
        if self.noise.snr_db.is_nan() || self.noise.snr_db == f64::NEG_INFINITY {
            return Err(Error::Config(format!("noise.snr_db = {}", self.noise.snr_db)));
        }
        if !(self.metrics.fsc_threshold > 0.0 && self.metrics.fsc_threshold < 1.0) {
            return Err(Error::Config(format!("metrics.fsc_threshold = {}", self.metrics.fsc_threshold)));
        }
        self.fbp.validate()?;
        self.training.validate()
    }

    pub fn phantom_kind(&self) -> Result<PhantomKind> {
        self.phantom.kind.parse()
    }

    pub fn tilt_geometry(&self) -> Result<TiltGeometry> {
        let g = &self.geometry;
        TiltGeometry::uniform(self.phantom.n, g.tilts, g.min_deg, g.max_deg)
            .and_then(|t| t.with_samples(g.ray_samples.max(self.phantom.n)))
            .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn deformation_config(&self) -> RandomDeformationConfig {
        let d = &self.deformation;
        RandomDeformationConfig {
            max_shift_fraction: d.max_shift_fraction,
            max_rotation_deg: d.max_rotation_deg,
            elastic_grid: d.elastic_grid,
            elastic_sigma_px: Some(d.elastic_sigma_px),
            elastic_max_px: d.elastic_max_px,
        }
    }

    pub fn phantom_seed(&self) -> u64 {
        derive_seed(self.seed, stream::PHANTOM, 0)
    }

    pub fn deformation_seed(&self) -> u64 {
        derive_seed(self.seed, stream::DEFORMATION, 0)
    }

    pub fn noise_model(&self) -> NoiseModel {
        NoiseModel {
            snr_db: self.noise.snr_db,
            seed: derive_seed(self.seed, stream::NOISE, 0),
            scope: self.noise.scope,
        }
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_materializes_defaults() {
        let cfg = RunConfig::from_toml("").unwrap();
        assert_eq!(cfg.geometry.ray_samples, 128);
        assert_eq!(cfg.metrics.fsc_shells, 32);
        assert_eq!(cfg.deformation.elastic_sigma_px, 8.0);
        let again = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn partial_sections_merge() {
        let cfg = RunConfig::from_toml("seed = 9\n[phantom]\nn = 16\n[training]\niterations = 5\n[training.volume]\ndepth = 2\n").unwrap();
        assert_eq!(cfg.phantom.kind, "gaussian-blobs");
        assert_eq!(cfg.training.iterations, 5);
        assert_eq!(cfg.training.volume.depth, 2);
        assert_eq!(cfg.training.volume.hidden_width, 48);
        assert_eq!(cfg.training.seed, 9);
        assert_eq!(cfg.metrics.fsc_shells, 8);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml("bogus = 1").is_err());
        assert!(RunConfig::from_toml("[training]\nlearning_rate = 1").is_err());
        assert!(RunConfig::from_toml("schema_version = 7").is_err());
        assert!(RunConfig::from_toml("[phantom]\nkind = \"cube\"").is_err());
    }

    #[test]
    fn infinite_snr_round_trips() {
        let cfg = RunConfig::from_toml("[noise]\nsnr_db = inf").unwrap();
        assert_eq!(cfg.noise.snr_db, f64::INFINITY);
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }
}
