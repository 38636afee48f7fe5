//! Phantoms and synthesis of deformed, noisy tilt series
//! `y_m = D(φ_m)(P(R_θm ρ)) + ε_m`.

mod phantom;

pub use phantom::{
    blobs_phantom, generate_phantom, phantom_from_mrc, random_blobs, shepp_logan, Blob, PhantomKind,
    SUPPORT,
};

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::deformation::{deform_image, DeformationParams};
use crate::error::{Error, Result};
use crate::geometry::{project_tilt, Image, TiltGeometry, VolumeGrid};
use crate::real::Real;
use crate::rng::{stream, stream_rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseScope {
    PerImage,
    Global,
}

/// Additive Gaussian noise calibrated to a target SNR. An infinite target
/// disables noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub snr_db: f64,
    pub seed: u64,
    pub scope: NoiseScope,
}

impl NoiseModel {
    pub fn per_image(snr_db: f64, seed: u64) -> Self {
        Self {
            snr_db,
            seed,
            scope: NoiseScope::PerImage,
        }
    }

    pub fn none() -> Self {
        Self::per_image(f64::INFINITY, 0)
    }
}

/// Where a series came from.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Provenance {
    pub phantom: String,
    pub phantom_seed: u64,
    pub deformation_seed: u64,
    pub noise_seed: u64,
    pub snr_db: f64,
}

/// Observed images `y_m` with their geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct TiltSeries<T> {
    pub images: Vec<Image<T>>,
    pub geometry: TiltGeometry,
    pub provenance: Provenance,
}

impl<T: Real> TiltSeries<T> {
    pub fn new(images: Vec<Image<T>>, geometry: TiltGeometry, provenance: Provenance) -> Result<Self> {
        if images.len() != geometry.len() {
            return Err(Error::shape("tilt series images", geometry.len(), images.len()));
        }
        if let Some(img) = images.iter().find(|i| i.n() != geometry.n()) {
            return Err(Error::shape("tilt series image edge", geometry.n(), img.n()));
        }
        if images.iter().flat_map(|i| i.data()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("tilt series contains non-finite values".into()));
        }
        Ok(Self {
            images,
            geometry,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn n(&self) -> usize {
        self.geometry.n()
    }
}

/// Synthesized series plus the intermediates needed for evaluation.
#[derive(Debug, Clone)]
pub struct Synthesis<T> {
    pub observed: TiltSeries<T>,
    /// `P(R_θm ρ)`.
    pub clean: Vec<Image<T>>,
    /// `D(φ_m)(P(R_θm ρ))`.
    pub deformed_clean: Vec<Image<T>>,
}

fn variance<T: Real>(values: impl Iterator<Item = T> + Clone) -> f64 {
    let n = values.clone().count() as f64;
    let mean = values.clone().map(|v| v.as_f64()).sum::<f64>() / n;
    values.map(|v| (v.as_f64() - mean).powi(2)).sum::<f64>() / n
}

/// Adds i.i.d. zero-mean Gaussian noise with variance
/// `Var(clean) 10^(-snr/10)`; image `m` draws from its own stream.
pub fn add_noise_to_snr<T: Real>(images: &[Image<T>], noise: &NoiseModel) -> Result<Vec<Image<T>>> {
    if noise.snr_db == f64::INFINITY {
        return Ok(images.to_vec());
    }
    if !noise.snr_db.is_finite() {
        return Err(Error::InvalidArgument(format!("SNR target {} dB", noise.snr_db)));
    }
    let ratio = 10f64.powf(-noise.snr_db / 10.0);
    let global = match noise.scope {
        NoiseScope::Global => Some(variance(images.iter().flat_map(|i| i.data().iter().copied()))),
        NoiseScope::PerImage => None,
    };
    images
        .iter()
        .enumerate()
        .map(|(m, img)| {
            let var = global.unwrap_or_else(|| variance(img.data().iter().copied()));
            if !(var > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "image {m} has zero variance; SNR is undefined"
                )));
            }
            let sd = (var * ratio).sqrt();
            let mut rng = stream_rng(noise.seed, stream::NOISE, m as u64);
            let mut out = img.clone();
            for v in out.data_mut() {
                let e: f64 = StandardNormal.sample(&mut rng);
                *v += T::lit(sd * e);
            }
            Ok(out)
        })
        .collect()
}

/// Projects, deforms with the ground-truth warps, then adds noise.
pub fn synthesize_tilt_series<T: Real>(
    vol: &VolumeGrid<T>,
    geom: &TiltGeometry,
    deformations: &DeformationParams<T>,
    noise: &NoiseModel,
    provenance: Provenance,
) -> Result<Synthesis<T>> {
    if deformations.len() != geom.len() {
        return Err(Error::shape("synthesis deformations", geom.len(), deformations.len()));
    }
    if vol.n() != geom.n() {
        return Err(Error::shape("synthesis volume edge", geom.n(), vol.n()));
    }
    let clean: Vec<Image<T>> = geom
        .angles_deg()
        .iter()
        .map(|&a| project_tilt(vol, a, geom))
        .collect();
    let deformed_clean: Vec<Image<T>> = clean
        .iter()
        .zip(&deformations.tilts)
        .map(|(img, d)| deform_image(img, d))
        .collect();
    let noisy = add_noise_to_snr(&deformed_clean, noise)?;
    let observed = TiltSeries::new(noisy, geom.clone(), provenance)?;
    Ok(Synthesis {
        observed,
        clean,
        deformed_clean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deformation::{sample_random_deformations, RandomDeformationConfig};

    fn series_inputs(n: usize, m: usize) -> (VolumeGrid<f64>, TiltGeometry) {
        let vol = generate_phantom(n, &PhantomKind::GaussianBlobs, 3).unwrap();
        (vol, TiltGeometry::uniform(n, m, -70.0, 70.0).unwrap())
    }

    #[test]
    fn identity_noise_free_equals_projection() {
        let (vol, geom) = series_inputs(16, 4);
        let s = synthesize_tilt_series(&vol, &geom, &DeformationParams::identity(4), &NoiseModel::none(), Provenance::default()).unwrap();
        for (m, &a) in geom.angles_deg().iter().enumerate() {
            let p = project_tilt(&vol, a, &geom);
            assert_eq!(s.observed.images[m], p);
        }
    }

    #[test]
    fn synthesis_is_deterministic() {
        let (vol, geom) = series_inputs(16, 3);
        let d = sample_random_deformations(3, 16, &RandomDeformationConfig::default(), 9).unwrap();
        let run = || synthesize_tilt_series(&vol, &geom, &d, &NoiseModel::per_image(0.0, 4), Provenance::default()).unwrap();
        assert_eq!(run().observed, run().observed);
    }

    #[test]
    fn count_mismatch_fails() {
        let (vol, geom) = series_inputs(8, 3);
        assert!(synthesize_tilt_series(&vol, &geom, &DeformationParams::identity(2), &NoiseModel::none(), Provenance::default()).is_err());
    }

    #[test]
    fn noise_variance_matches_target() {
        let img = Image::<f64>::from_fn(64, |p| (4.0 * p[0]).sin() + p[1]);
        let var = variance(img.data().iter().copied());
        for snr in [0.0, 10.0] {
            let out = add_noise_to_snr(std::slice::from_ref(&img), &NoiseModel::per_image(snr, 1)).unwrap();
            let noise = variance(out[0].data().iter().zip(img.data()).map(|(a, b)| a - b));
            let ratio = noise / var / 10f64.powf(-snr / 10.0);
            assert!((ratio - 1.0).abs() < 0.05, "snr {snr}: ratio {ratio}");
        }
    }

    #[test]
    fn infinite_snr_is_identity_and_flat_image_fails() {
        let img = Image::<f64>::from_fn(8, |p| p[0]);
        assert_eq!(add_noise_to_snr(std::slice::from_ref(&img), &NoiseModel::none()).unwrap()[0], img);
        let flat = Image::<f64>::zeros(8);
        assert!(add_noise_to_snr(&[flat], &NoiseModel::per_image(0.0, 1)).is_err());
    }
}
