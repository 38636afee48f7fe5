//! Per-tilt image deformation `D(φ) = L(γ) S(τ) R(α)`, realized as the
//! coordinate pull-back
//!
//! ```text
//! w_φ(x) = R(-α) (x + l(x) + τ)
//! ```
//!
//! so that the deformed image at `x` is the undeformed image at `w_φ(x)`.
//! Coordinates are normalized detector units; one unit is `N / 2` pixels.

mod dump;
mod elastic;

pub use dump::{read_deformations, write_deformations, DeformationDump, TiltDump};
pub use elastic::{
    sample_elastic_field, sample_random_deformations, DisplacementField, ElasticFieldConfig,
    RandomDeformationConfig,
};

use crate::error::{Error, Result};
use crate::geometry::Image;
use crate::neural_field::{FieldConfig, NeuralField};
use crate::real::Real;

/// In-plane rotation (degrees) and shift (normalized units).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GlobalDeformParams<T> {
    pub alpha_deg: T,
    pub tau: [T; 2],
}

impl<T: Real> GlobalDeformParams<T> {
    pub fn identity() -> Self {
        Self {
            alpha_deg: T::zero(),
            tau: [T::zero(); 2],
        }
    }
}

/// The local displacement `l(x)`.
#[derive(Debug, Clone, PartialEq)]
pub enum LocalWarp<T> {
    Identity,
    /// Dense ground-truth field sampled on the pixel grid.
    Dense(DisplacementField<T>),
    /// Per-tilt network `l(γ): R^2 -> R^2`.
    Net(NeuralField<T>),
}

impl<T: Real> LocalWarp<T> {
    /// Displacement at `x`, normalized units.
    pub fn displacement(&self, x: [T; 2]) -> [T; 2] {
        match self {
            LocalWarp::Identity => [T::zero(); 2],
            LocalWarp::Dense(f) => f.displacement_normalized(x),
            LocalWarp::Net(net) => {
                let d = net.eval(&x).expect("2D warp network");
                [d[0], d[1]]
            }
        }
    }
}

/// Deformation of one tilt image.
#[derive(Debug, Clone, PartialEq)]
pub struct TiltDeformation<T> {
    pub global: GlobalDeformParams<T>,
    pub local: LocalWarp<T>,
}

impl<T: Real> TiltDeformation<T> {
    pub fn identity() -> Self {
        Self {
            global: GlobalDeformParams::identity(),
            local: LocalWarp::Identity,
        }
    }

    /// Identity start for estimation: zero global parameters and a fresh
    /// network whose last layer is zero.
    pub fn identity_net(cfg: &FieldConfig, seed: u64, tag: &str) -> Result<Self> {
        Ok(Self {
            global: GlobalDeformParams::identity(),
            local: LocalWarp::Net(NeuralField::new(cfg, seed, tag)?),
        })
    }

    pub fn warp(&self, x: [T; 2]) -> [T; 2] {
        warp_coords(&self.global, self.local.displacement(x), x)
    }
}

/// One deformation per tilt.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformationParams<T> {
    pub tilts: Vec<TiltDeformation<T>>,
}

impl<T: Real> DeformationParams<T> {
    pub fn identity(m: usize) -> Self {
        Self {
            tilts: vec![TiltDeformation::identity(); m],
        }
    }

    pub fn len(&self) -> usize {
        self.tilts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tilts.is_empty()
    }
}

/// `R(-α)(x + l + τ)` given an already evaluated displacement `l`.
#[inline]
pub fn warp_coords<T: Real>(g: &GlobalDeformParams<T>, l: [T; 2], x: [T; 2]) -> [T; 2] {
    let y = [x[0] + l[0] + g.tau[0], x[1] + l[1] + g.tau[1]];
    let (s, c) = g.alpha_deg.to_radians().sin_cos();
    rotate_neg(y, c, s)
}

/// `R(-α) y` for `c = cos α`, `s = sin α`.
#[inline]
pub(crate) fn rotate_neg<T: Real>(y: [T; 2], c: T, s: T) -> [T; 2] {
    [y[0] * c + y[1] * s, -y[0] * s + y[1] * c]
}

/// Gradients of a scalar loss through `w = R(-α)(x + l + τ)` given
/// `d_w = dL/dw`. Returns `(dL/dα in radians, dL/dy)` where `dL/dy` is
/// also `dL/dτ` and `dL/dl`.
#[inline]
pub fn warp_backward<T: Real>(y: [T; 2], c: T, s: T, d_w: [T; 2]) -> (T, [T; 2]) {
    let d_alpha = d_w[0] * (-y[0] * s + y[1] * c) + d_w[1] * (-y[0] * c - y[1] * s);
    let d_y = [c * d_w[0] - s * d_w[1], s * d_w[0] + c * d_w[1]];
    (d_alpha, d_y)
}

/// Resamples `sampler` on the `n x n` pixel grid through the warp.
pub fn deform_with<T: Real>(
    sampler: impl Fn([T; 2]) -> T,
    deformation: &TiltDeformation<T>,
    n: usize,
) -> Image<T> {
    Image::from_fn(n, |x| sampler(deformation.warp(x)))
}

/// Bilinear resampling of a discrete image through the warp.
pub fn deform_image<T: Real>(img: &Image<T>, deformation: &TiltDeformation<T>) -> Image<T> {
    deform_with(|p| img.sample(p), deformation, img.n())
}

/// Applies one deformation per image.
pub fn deform_all<T: Real>(images: &[Image<T>], params: &DeformationParams<T>) -> Result<Vec<Image<T>>> {
    if images.len() != params.len() {
        return Err(Error::shape("deform_all", images.len(), params.len()));
    }
    Ok(images
        .iter()
        .zip(&params.tilts)
        .map(|(img, d)| deform_image(img, d))
        .collect())
}

/// Pixels per normalized unit.
pub fn pixels_per_unit<T: Real>(n: usize) -> T {
    T::from_usize_(n) * T::lit(0.5)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn global(alpha: f64, tx: f64, ty: f64) -> TiltDeformation<f64> {
        TiltDeformation {
            global: GlobalDeformParams {
                alpha_deg: alpha,
                tau: [tx, ty],
            },
            local: LocalWarp::Identity,
        }
    }

    #[test]
    fn identity_is_exact() {
        let d = TiltDeformation::identity_net(&FieldConfig::warp_default(), 3, "gamma[0]").unwrap();
        for x in [[0.1f64, -0.7], [0.999, 0.5], [-1.0, 1.0]] {
            assert_eq!(d.warp(x), x);
        }
    }

    #[test]
    fn shift_and_rotation_conventions() {
        let w = global(0.0, 0.1, 0.0).warp([0.3, -0.2]);
        assert!((w[0] - 0.4).abs() < 1e-15 && (w[1] + 0.2).abs() < 1e-15);
        let w = global(90.0, 0.0, 0.0).warp([1.0, 0.0]);
        assert!(w[0].abs() < 1e-15 && (w[1] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn integer_pixel_shift_moves_image_by_one_pixel() {
        let n = 16;
        let img = Image::<f64>::from_fn(n, |p| (3.0 * p[0]).sin() + p[1] * p[1]);
        let step = 2.0 / n as f64;
        let out = deform_image(&img, &global(0.0, step, 0.0));
        for v in 0..n {
            for u in 0..n - 1 {
                assert_eq!(out.get(u, v).to_bits(), img.get(u + 1, v).to_bits());
            }
        }
    }

    #[test]
    fn rotation_round_trip_on_smooth_image() {
        let n = 64;
        let img = Image::<f64>::from_fn(n, |p| (-(p[0] * p[0] + p[1] * p[1]) / 0.1).exp() + 0.5 * (-((p[0] - 0.2).powi(2) + p[1].powi(2)) / 0.02).exp());
        let fwd = deform_image(&img, &global(7.0, 0.0, 0.0));
        let back = deform_image(&fwd, &global(-7.0, 0.0, 0.0));
        let num: f64 = img.data().iter().zip(back.data()).map(|(a, b)| (a - b).powi(2)).sum();
        let den: f64 = img.data().iter().map(|a| a * a).sum();
        assert!((num / den).sqrt() < 0.02);
    }

    #[test]
    fn deform_is_linear_in_image() {
        let n = 12;
        let a = Image::<f64>::from_fn(n, |p| p[0].cos() * p[1]);
        let b = Image::<f64>::from_fn(n, |p| (p[0] * 2.0 + p[1]).sin());
        let d = global(4.0, 0.03, -0.05);
        let mut ab = Image::zeros(n);
        for i in 0..n * n {
            ab.data_mut()[i] = 2.0 * a.data()[i] - 0.5 * b.data()[i];
        }
        let (da, db, dab) = (deform_image(&a, &d), deform_image(&b, &d), deform_image(&ab, &d));
        for i in 0..n * n {
            assert!((dab.data()[i] - (2.0 * da.data()[i] - 0.5 * db.data()[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let y = [0.37f64, -0.81];
        let alpha = 0.13f64;
        let d_w = [0.7, -1.3];
        let loss = |a: f64, y: [f64; 2]| {
            let w = rotate_neg(y, a.cos(), a.sin());
            d_w[0] * w[0] + d_w[1] * w[1]
        };
        let (da, dy) = warp_backward(y, alpha.cos(), alpha.sin(), d_w);
        let eps = 1e-6;
        let num_a = (loss(alpha + eps, y) - loss(alpha - eps, y)) / (2.0 * eps);
        assert!((num_a - da).abs() < 1e-8);
        for k in 0..2 {
            let mut yp = y;
            yp[k] += eps;
            let mut ym = y;
            ym[k] -= eps;
            let num = (loss(alpha, yp) - loss(alpha, ym)) / (2.0 * eps);
            assert!((num - dy[k]).abs() < 1e-8);
        }
    }

    #[test]
    fn deform_all_checks_count() {
        let imgs = vec![Image::<f64>::zeros(4); 2];
        assert!(deform_all(&imgs, &DeformationParams::identity(3)).is_err());
    }
}
