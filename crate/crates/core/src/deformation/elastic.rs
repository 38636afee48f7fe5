//! Ground-truth deformations: smooth random displacement fields plus
//! uniformly drawn shifts and in-plane rotations.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{pixels_per_unit, DeformationParams, GlobalDeformParams, LocalWarp, TiltDeformation};
use crate::error::{Error, Result};
use crate::geometry::continuous_index;
use crate::real::Real;
use crate::rng::{derive_seed, stream, stream_rng};

/// Displacement vectors in pixels at the `n x n` pixel centers, row-major
/// with `u` fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementField<T> {
    n: usize,
    data: Vec<[T; 2]>,
}

impl<T: Real> DisplacementField<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![[T::zero(); 2]; n * n],
        }
    }

    pub fn from_vec(n: usize, data: Vec<[T; 2]>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::shape("DisplacementField", n * n, data.len()));
        }
        Ok(Self { n, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn data(&self) -> &[[T; 2]] {
        &self.data
    }

    pub fn get(&self, u: usize, v: usize) -> [T; 2] {
        self.data[v * self.n + u]
    }

    /// Bilinear interpolation with edge clamping, in pixels.
    pub fn displacement_px(&self, x: [T; 2]) -> [T; 2] {
        let n = self.n;
        let last = T::from_usize_(n - 1);
        let cx = continuous_index(x[0], n).max(T::zero()).min(last);
        let cy = continuous_index(x[1], n).max(T::zero()).min(last);
        let (x0, y0) = (cx.floor(), cy.floor());
        let (ax, ay) = (cx - x0, cy - y0);
        let (i0, j0) = (x0.to_usize().unwrap_or(0), y0.to_usize().unwrap_or(0));
        let (i1, j1) = ((i0 + 1).min(n - 1), (j0 + 1).min(n - 1));
        let one = T::one();
        let mut out = [T::zero(); 2];
        for (k, o) in out.iter_mut().enumerate() {
            let top = self.get(i0, j0)[k] * (one - ax) + self.get(i1, j0)[k] * ax;
            let bot = self.get(i0, j1)[k] * (one - ax) + self.get(i1, j1)[k] * ax;
            *o = top * (one - ay) + bot * ay;
        }
        out
    }

    pub fn displacement_normalized(&self, x: [T; 2]) -> [T; 2] {
        let scale = pixels_per_unit::<T>(self.n);
        let d = self.displacement_px(x);
        [d[0] / scale, d[1] / scale]
    }

    pub fn max_norm(&self) -> T {
        self.data
            .iter()
            .map(|d| d[0].hypot(d[1]))
            .fold(T::zero(), T::max)
    }

    pub fn mean_norm(&self) -> T {
        let sum: T = self.data.iter().map(|d| d[0].hypot(d[1])).sum();
        sum / T::from_usize_(self.data.len())
    }

    /// Largest absolute entry of the forward-difference Jacobian.
    pub fn max_jacobian(&self) -> T {
        let n = self.n;
        let mut m = T::zero();
        for v in 0..n {
            for u in 0..n {
                let d = self.get(u, v);
                if u + 1 < n {
                    let e = self.get(u + 1, v);
                    m = m.max((e[0] - d[0]).abs()).max((e[1] - d[1]).abs());
                }
                if v + 1 < n {
                    let e = self.get(u, v + 1);
                    m = m.max((e[0] - d[0]).abs()).max((e[1] - d[1]).abs());
                }
            }
        }
        m
    }
}

/// Smooth random field parameters. Lengths are in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElasticFieldConfig {
    pub n: usize,
    pub grid: usize,
    pub sigma_px: f64,
    pub max_px: f64,
    pub seed: u64,
}

impl ElasticFieldConfig {
    /// `g = 5`, `σ = N / 8`, `a_max = 3 px`.
    pub fn default_for(n: usize, seed: u64) -> Self {
        Self {
            n,
            grid: 5,
            sigma_px: n as f64 / 8.0,
            max_px: 3.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid < 2 || self.n < 2 || !(self.max_px >= 0.0) || !(self.sigma_px >= 0.0) {
            return Err(Error::InvalidArgument(format!("invalid elastic config {self:?}")));
        }
        Ok(())
    }
}

fn gaussian_smooth(grid: &mut [[f64; 2]], g: usize, sigma: f64) {
    if sigma <= 0.0 {
        return;
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    // separable, normalized over the in-range taps
    for axis in 0..2 {
        let src = grid.to_vec();
        for j in 0..g {
            for i in 0..g {
                let mut acc = [0.0; 2];
                let mut wsum = 0.0;
                for (t, &w) in kernel.iter().enumerate() {
                    let off = t as isize - radius;
                    let (ii, jj) = if axis == 0 {
                        (i as isize + off, j as isize)
                    } else {
                        (i as isize, j as isize + off)
                    };
                    if ii < 0 || jj < 0 || ii >= g as isize || jj >= g as isize {
                        continue;
                    }
                    let s = src[jj as usize * g + ii as usize];
                    acc[0] += w * s[0];
                    acc[1] += w * s[1];
                    wsum += w;
                }
                grid[j * g + i] = [acc[0] / wsum, acc[1] / wsum];
            }
        }
    }
}

/// Gaussian control-point displacements, smoothed, bilinearly upsampled to
/// the pixel grid, and rescaled so the largest vector has length `max_px`.
pub fn sample_elastic_field<T: Real>(cfg: &ElasticFieldConfig) -> Result<DisplacementField<T>> {
    cfg.validate()?;
    let (g, n) = (cfg.grid, cfg.n);
    if cfg.max_px == 0.0 {
        return Ok(DisplacementField::zeros(n));
    }
    let mut rng = stream_rng(cfg.seed, stream::DEFORMATION, u64::MAX);
    let mut control: Vec<[f64; 2]> = (0..g * g)
        .map(|_| [StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)])
        .collect();
    let spacing_px = n as f64 / (g - 1) as f64;
    gaussian_smooth(&mut control, g, cfg.sigma_px / spacing_px);

    let mut data = Vec::with_capacity(n * n);
    for v in 0..n {
        for u in 0..n {
            // pixel center in control-grid units, spanning [0, g - 1]
            let gx = (u as f64 + 0.5) / n as f64 * (g - 1) as f64;
            let gy = (v as f64 + 0.5) / n as f64 * (g - 1) as f64;
            let (i0, j0) = ((gx.floor() as usize).min(g - 2), (gy.floor() as usize).min(g - 2));
            let (ax, ay) = (gx - i0 as f64, gy - j0 as f64);
            let c = |i: usize, j: usize| control[j * g + i];
            let mut d = [0.0; 2];
            for (k, dk) in d.iter_mut().enumerate() {
                let top = c(i0, j0)[k] * (1.0 - ax) + c(i0 + 1, j0)[k] * ax;
                let bot = c(i0, j0 + 1)[k] * (1.0 - ax) + c(i0 + 1, j0 + 1)[k] * ax;
                *dk = top * (1.0 - ay) + bot * ay;
            }
            data.push(d);
        }
    }
    let max = data.iter().map(|d| d[0].hypot(d[1])).fold(0.0, f64::max);
    let scale = if max > 0.0 { cfg.max_px / max } else { 0.0 };
    let data = data
        .into_iter()
        .map(|d| [T::lit(d[0] * scale), T::lit(d[1] * scale)])
        .collect();
    DisplacementField::from_vec(n, data)
}

/// Bounds of the simulated deformations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomDeformationConfig {
    /// Maximum shift per axis as a fraction of the image size.
    pub max_shift_fraction: f64,
    pub max_rotation_deg: f64,
    pub elastic_grid: usize,
    /// `None` selects `N / 8`.
    pub elastic_sigma_px: Option<f64>,
    pub elastic_max_px: f64,
}

impl Default for RandomDeformationConfig {
    fn default() -> Self {
        Self {
            max_shift_fraction: 0.1,
            max_rotation_deg: 10.0,
            elastic_grid: 5,
            elastic_sigma_px: None,
            elastic_max_px: 3.0,
        }
    }
}

/// Independent ground-truth deformation per tilt.
pub fn sample_random_deformations<T: Real>(
    m: usize,
    n: usize,
    cfg: &RandomDeformationConfig,
    seed: u64,
) -> Result<DeformationParams<T>> {
    if m == 0 {
        return Err(Error::InvalidArgument("need at least one tilt".into()));
    }
    // fraction of N pixels = 2 * fraction normalized units
    let max_tau = 2.0 * cfg.max_shift_fraction;
    let tilts = (0..m)
        .map(|i| {
            let mut rng = stream_rng(seed, stream::DEFORMATION, i as u64);
            let alpha = if cfg.max_rotation_deg > 0.0 {
                rng.gen_range(-cfg.max_rotation_deg..=cfg.max_rotation_deg)
            } else {
                0.0
            };
            let mut tau = [0.0; 2];
            if max_tau > 0.0 {
                for t in &mut tau {
                    *t = rng.gen_range(-max_tau..=max_tau);
                }
            }
            let field = sample_elastic_field(&ElasticFieldConfig {
                n,
                grid: cfg.elastic_grid,
                sigma_px: cfg.elastic_sigma_px.unwrap_or(n as f64 / 8.0),
                max_px: cfg.elastic_max_px,
                seed: derive_seed(seed, stream::DEFORMATION, i as u64),
            })?;
            Ok(TiltDeformation {
                global: GlobalDeformParams {
                    alpha_deg: T::lit(alpha),
                    tau: [T::lit(tau[0]), T::lit(tau[1])],
                },
                local: LocalWarp::Dense(field),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DeformationParams { tilts })
}
