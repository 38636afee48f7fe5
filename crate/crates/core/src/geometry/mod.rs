//! Single-axis tilt geometry: rotation about the detector `y` axis, volume
//! sampling, the discretized line-integral projector, and its exact adjoint.
//!
//! Conventions: the beam runs along `z` of the detector frame. A detector
//! pixel `(u, v)` integrates the ray points `p = (u, v, t)` for
//! `t in [-1, 1]`, pulled back into the volume frame by `R(-θ)`.

mod grid;

pub use grid::{cell_center, continuous_index, trilinear_corners, Image, VolumeGrid};

use crate::error::{Error, Result};
use crate::neural_field::NeuralField;
use crate::real::Real;

/// Acquisition geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct TiltGeometry {
    angles_deg: Vec<f64>,
    n: usize,
    samples: usize,
}

impl TiltGeometry {
    pub fn new(angles_deg: Vec<f64>, n: usize, samples: usize) -> Result<Self> {
        if angles_deg.is_empty() {
            return Err(Error::InvalidArgument("need at least one tilt".into()));
        }
        if let Some(a) = angles_deg.iter().find(|a| !(**a >= -90.0 && **a < 90.0)) {
            return Err(Error::InvalidArgument(format!("tilt angle {a} outside [-90, 90)")));
        }
        if n == 0 || samples < n {
            return Err(Error::InvalidArgument(format!(
                "need samples per ray ({samples}) >= detector size ({n}) > 0"
            )));
        }
        Ok(Self {
            angles_deg,
            n,
            samples,
        })
    }

    /// `m` angles evenly spaced over `[min, max]`, both ends included, with
    /// `2n` samples per ray.
    pub fn uniform(n: usize, m: usize, min_deg: f64, max_deg: f64) -> Result<Self> {
        let angles = if m == 1 {
            vec![0.5 * (min_deg + max_deg)]
        } else {
            (0..m)
                .map(|i| min_deg + (max_deg - min_deg) * i as f64 / (m - 1) as f64)
                .collect()
        };
        Self::new(angles, n, 2 * n)
    }

    pub fn with_samples(mut self, samples: usize) -> Result<Self> {
        if samples < self.n {
            return Err(Error::InvalidArgument(format!(
                "samples per ray {samples} < detector size {}",
                self.n
            )));
        }
        self.samples = samples;
        Ok(self)
    }

    pub fn angles_deg(&self) -> &[f64] {
        &self.angles_deg
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.angles_deg.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles_deg.is_empty()
    }
}

/// Rotation about `y` by `theta_deg`:
/// `(x cos + z sin, y, -x sin + z cos)`.
#[inline]
pub fn rotate_coords_3d<T: Real>(x: [T; 3], theta_deg: T) -> [T; 3] {
    let (s, c) = theta_deg.to_radians().sin_cos();
    rotate_with(x, c, s)
}

#[inline]
pub(crate) fn rotate_with<T: Real>(x: [T; 3], c: T, s: T) -> [T; 3] {
    [x[0] * c + x[2] * s, x[1], -x[0] * s + x[2] * c]
}

/// Ray sample positions `t_s = -1 + (s + 1/2) dt` and the step `dt = 2 / S`.
pub fn ray_samples<T: Real>(samples: usize) -> (Vec<T>, T) {
    let dt = T::lit(2.0) / T::from_usize_(samples);
    let ts = (0..samples)
        .map(|s| -T::one() + (T::from_usize_(s) + T::lit(0.5)) * dt)
        .collect();
    (ts, dt)
}

/// Anything that returns a density at 3D points.
pub trait Sampleable<T> {
    fn sample_points(&self, pts: &[[T; 3]]) -> Vec<T>;
}

impl<T: Real> Sampleable<T> for VolumeGrid<T> {
    fn sample_points(&self, pts: &[[T; 3]]) -> Vec<T> {
        pts.iter().map(|&p| self.sample(p)).collect()
    }
}

#[inline]
pub(crate) fn inside_cube<T: Real>(p: [T; 3]) -> bool {
    let one = T::one();
    p.iter().all(|&c| c >= -one && c <= one)
}

/// Field path: evaluates `V(ψ)` inside the unit cube and returns zero
/// outside, matching the grid padding rule.
impl<T: Real> Sampleable<T> for NeuralField<T> {
    fn sample_points(&self, pts: &[[T; 3]]) -> Vec<T> {
        let mut out = vec![T::zero(); pts.len()];
        let inside: Vec<usize> = (0..pts.len()).filter(|&i| inside_cube(pts[i])).collect();
        for chunk in inside.chunks(8192) {
            let flat: Vec<T> = chunk.iter().flat_map(|&i| pts[i]).collect();
            let vals = self.eval_batch(&flat).expect("3D field");
            for (j, &i) in chunk.iter().enumerate() {
                out[i] = vals[[j, 0]];
            }
        }
        out
    }
}

pub fn sample_volume<T: Real, V: Sampleable<T> + ?Sized>(vol: &V, pts: &[[T; 3]]) -> Vec<T> {
    vol.sample_points(pts)
}

/// Line-integral projection at one tilt.
pub fn project_tilt<T: Real, V: Sampleable<T> + ?Sized>(
    vol: &V,
    theta_deg: f64,
    geom: &TiltGeometry,
) -> Image<T> {
    let n = geom.n();
    let (ts, dt) = ray_samples::<T>(geom.samples());
    let (s, c) = T::lit(theta_deg).to_radians().sin_cos();
    let mut img = Image::zeros(n);
    let mut pts = Vec::with_capacity(n * ts.len());
    for iv in 0..n {
        pts.clear();
        let v = cell_center::<T>(iv, n);
        for iu in 0..n {
            let u = cell_center::<T>(iu, n);
            for &t in &ts {
                pts.push(rotate_with([u, v, t], c, -s));
            }
        }
        let vals = vol.sample_points(&pts);
        for iu in 0..n {
            let sum: T = vals[iu * ts.len()..(iu + 1) * ts.len()].iter().copied().sum();
            img.set(iu, iv, sum * dt);
        }
    }
    img
}

/// Projections at every tilt of `geom`.
pub fn project_all<T: Real, V: Sampleable<T> + ?Sized>(vol: &V, geom: &TiltGeometry) -> Vec<Image<T>> {
    geom.angles_deg()
        .iter()
        .map(|&a| project_tilt(vol, a, geom))
        .collect()
}

/// Exact adjoint of `vol -> {project_tilt(vol, θ_m)}` for grid volumes under
/// the plain sum inner products.
pub fn backproject<T: Real>(images: &[Image<T>], geom: &TiltGeometry) -> Result<VolumeGrid<T>> {
    if images.len() != geom.len() {
        return Err(Error::shape("backproject images", geom.len(), images.len()));
    }
    let n = geom.n();
    if let Some(img) = images.iter().find(|i| i.n() != n) {
        return Err(Error::shape("backproject image size", n, img.n()));
    }
    let mut vol = VolumeGrid::zeros(n);
    let (ts, dt) = ray_samples::<T>(geom.samples());
    for (img, &theta) in images.iter().zip(geom.angles_deg()) {
        let (s, c) = T::lit(theta).to_radians().sin_cos();
        for iv in 0..n {
            let v = cell_center::<T>(iv, n);
            for iu in 0..n {
                let y = img.get(iu, iv);
                if y == T::zero() {
                    continue;
                }
                let u = cell_center::<T>(iu, n);
                let scale = y * dt;
                for &t in &ts {
                    let p = rotate_with([u, v, t], c, -s);
                    let data = vol.data_mut();
                    trilinear_corners(n, p, |idx, w| data[idx] += scale * w);
                }
            }
        }
    }
    Ok(vol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotation_examples() {
        let x = [0.3f64, -0.2, 0.9];
        assert_eq!(rotate_coords_3d(x, 0.0), x);
        let r = rotate_coords_3d([1.0f64, 0.0, 0.0], 90.0);
        assert!(r[0].abs() < 1e-15 && r[1] == 0.0 && (r[2] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn rotation_inverse() {
        for k in 0..50 {
            let kf = k as f64;
            let x = [(kf * 1.7).sin(), (kf * 0.3).cos(), (kf * 2.9).sin() * 2.0];
            let theta = (kf * 37.0) % 180.0 - 90.0;
            let back = rotate_coords_3d(rotate_coords_3d(x, theta), -theta);
            for a in 0..3 {
                assert!((back[a] - x[a]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn geometry_validation() {
        assert!(TiltGeometry::new(vec![], 8, 16).is_err());
        assert!(TiltGeometry::new(vec![90.0], 8, 16).is_err());
        assert!(TiltGeometry::new(vec![0.0], 8, 4).is_err());
        let g = TiltGeometry::uniform(8, 5, -70.0, 70.0).unwrap();
        assert_eq!(g.angles_deg(), &[-70.0, -35.0, 0.0, 35.0, 70.0]);
        assert_eq!(g.samples(), 16);
    }

    #[test]
    fn zero_volume_projects_to_zero() {
        let g = TiltGeometry::uniform(8, 3, -60.0, 60.0).unwrap();
        let img = project_tilt(&VolumeGrid::<f64>::zeros(8), 30.0, &g);
        assert!(img.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_cube_has_path_length_two() {
        let n = 16;
        let g = TiltGeometry::uniform(n, 1, 0.0, 0.0).unwrap();
        let vol = VolumeGrid::<f64>::from_fn(n, |_| 1.5);
        let img = project_tilt(&vol, 0.0, &g);
        // interior pixels see the full path; O(1/S) loss near the faces
        for iv in 2..n - 2 {
            for iu in 2..n - 2 {
                let p = img.get(iu, iv);
                assert!((p - 3.0).abs() < 3.0 * 2.0 / g.samples() as f64, "{p}");
            }
        }
    }

    #[test]
    fn centered_voxel_peaks_at_detector_center() {
        let n = 17;
        let g = TiltGeometry::uniform(n, 1, 0.0, 0.0).unwrap();
        let mut vol = VolumeGrid::<f64>::zeros(n);
        let c = vol.index(8, 8, 8);
        vol.data_mut()[c] = 1.0;
        for theta in [-70.0, -33.0, 0.0, 12.5, 60.0] {
            let img = project_tilt(&vol, theta, &g);
            let (imax, _) = img
                .data()
                .iter()
                .enumerate()
                .fold((0, f64::MIN), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
            assert_eq!((imax % n, imax / n), (8, 8), "theta {theta}");
        }
    }

    #[test]
    fn single_pixel_backprojects_along_its_ray() {
        let n = 9;
        let g = TiltGeometry::new(vec![0.0], n, 2 * n).unwrap();
        let mut img = Image::<f64>::zeros(n);
        img.set(3, 5, 1.0);
        let vol = backproject(&[img], &g).unwrap();
        for z in 0..n {
            for y in 0..n {
                for x in 0..n {
                    let v = vol.get(x, y, z);
                    if (x, y) == (3, 5) {
                        assert!(v > 0.0);
                    } else {
                        assert_eq!(v, 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn backproject_checks_counts() {
        let g = TiltGeometry::uniform(8, 3, -60.0, 60.0).unwrap();
        assert!(backproject(&[Image::<f64>::zeros(8)], &g).is_err());
        let zero = vec![Image::<f64>::zeros(8); 3];
        assert!(backproject(&zero, &g).unwrap().data().iter().all(|&v| v == 0.0));
    }
}
