//! Filtered back-projection, slice by slice perpendicular to the tilt axis.

use std::str::FromStr;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{cell_center, continuous_index, Image, TiltGeometry, VolumeGrid};
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterKind {
    RamLak,
    HannWindowed,
}

impl FromStr for FilterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ram-lak" => Ok(FilterKind::RamLak),
            "hann-windowed" => Ok(FilterKind::HannWindowed),
            other => Err(Error::Config(format!("unknown filter `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSpec {
    pub kind: FilterKind,
    /// Fraction of Nyquist above which the response is zero.
    pub cutoff: f64,
}

impl Default for FilterSpec {
    fn default() -> Self {
        Self {
            kind: FilterKind::HannWindowed,
            cutoff: 1.0,
        }
    }
}

impl FilterSpec {
    pub fn ram_lak() -> Self {
        Self {
            kind: FilterKind::RamLak,
            cutoff: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cutoff > 0.0 && self.cutoff <= 1.0) {
            return Err(Error::Config(format!("filter cutoff {} outside (0, 1]", self.cutoff)));
        }
        Ok(())
    }

    /// Response at `f`, given as a fraction of Nyquist in `[0, 1]`.
    fn window(&self, frac: f64) -> f64 {
        if frac > self.cutoff {
            return 0.0;
        }
        match self.kind {
            FilterKind::RamLak => 1.0,
            FilterKind::HannWindowed => 0.5 * (1.0 + (std::f64::consts::PI * frac / self.cutoff).cos()),
        }
    }
}

/// Multiplies each row's spectrum by `|f|` (cycles per unit, samples
/// `spacing` apart) times the window, without padding.
pub fn ramp_filter<T: Real>(rows: &[Vec<T>], spec: &FilterSpec, spacing: f64) -> Result<Vec<Vec<T>>> {
    spec.validate()?;
    let Some(len) = rows.first().map(Vec::len) else {
        return Ok(Vec::new());
    };
    if let Some(r) = rows.iter().find(|r| r.len() != len) {
        return Err(Error::shape("ramp_filter row", len, r.len()));
    }
    if len == 0 {
        return Ok(rows.to_vec());
    }
    let response = ramp_response(len, spec, spacing);
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(len);
    let inv = planner.plan_fft_inverse(len);
    let mut buf = vec![Complex::new(0.0, 0.0); len];
    Ok(rows
        .iter()
        .map(|row| {
            for (b, &v) in buf.iter_mut().zip(row) {
                *b = Complex::new(v.as_f64(), 0.0);
            }
            fwd.process(&mut buf);
            for (b, &h) in buf.iter_mut().zip(&response) {
                *b *= h / len as f64;
            }
            inv.process(&mut buf);
            buf.iter().map(|c| T::lit(c.re)).collect()
        })
        .collect())
}

fn ramp_response(len: usize, spec: &FilterSpec, spacing: f64) -> Vec<f64> {
    let nyquist = 0.5 / spacing;
    (0..len)
        .map(|k| {
            let idx = if k <= len / 2 { k } else { len - k };
            let f = idx as f64 / (len as f64 * spacing);
            f * spec.window(f / nyquist)
        })
        .collect()
}

/// Angular weight `Δθ` in radians: the acquired spacing, so that a uniform
/// half-turn gets `π / M`.
pub fn angular_weight(angles_deg: &[f64]) -> f64 {
    if angles_deg.len() < 2 {
        return std::f64::consts::PI;
    }
    let lo = angles_deg.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = angles_deg.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (hi - lo).to_radians() / (angles_deg.len() - 1) as f64
}

/// Reconstructs an `N^3` volume from images `N x N` acquired at
/// `geom.angles_deg()`. Rows are zero-padded to `2N` before filtering.
pub fn fbp_reconstruct<T: Real>(images: &[Image<T>], geom: &TiltGeometry, spec: &FilterSpec) -> Result<VolumeGrid<T>> {
    spec.validate()?;
    if images.len() != geom.len() {
        return Err(Error::shape("fbp images", geom.len(), images.len()));
    }
    let n = geom.n();
    if let Some(img) = images.iter().find(|i| i.n() != n) {
        return Err(Error::shape("fbp image edge", n, img.n()));
    }
    let spacing = 2.0 / n as f64;
    let padded = 2 * n;
    let mut rows = Vec::with_capacity(images.len() * n);
    for img in images {
        for v in 0..n {
            let mut r = vec![0.0f64; padded];
            for u in 0..n {
                r[u] = img.get(u, v).as_f64();
            }
            rows.push(r);
        }
    }
    let filtered = ramp_filter(&rows, spec, spacing)?;
    let weight = angular_weight(geom.angles_deg());
    let trig: Vec<(f64, f64)> = geom
        .angles_deg()
        .iter()
        .map(|a| {
            let (s, c) = a.to_radians().sin_cos();
            (c, s)
        })
        .collect();

    let mut vol = VolumeGrid::zeros(n);
    let xs: Vec<f64> = (0..n).map(|i| cell_center(i, n)).collect();
    for z in 0..n {
        for x in 0..n {
            // detector coordinate u = x cos θ + z sin θ, the same for every y
            let taps: Vec<(usize, usize, f64)> = trig
                .iter()
                .enumerate()
                .filter_map(|(m, &(c, s))| {
                    let u = xs[x] * c + xs[z] * s;
                    let iu = continuous_index(u, n);
                    let i0 = iu.floor();
                    if i0 < -1.0 || i0 >= n as f64 {
                        return None;
                    }
                    Some((m, (i0 + 1.0) as usize, iu - i0))
                })
                .collect();
            for y in 0..n {
                let mut acc = 0.0;
                for &(m, i0p1, f) in &taps {
                    let row = &filtered[m * n + y];
                    // taps are shifted by one so that index -1 is representable
                    let a = if i0p1 >= 1 { row[i0p1 - 1] } else { 0.0 };
                    let b = if i0p1 < n { row[i0p1] } else { 0.0 };
                    acc += a * (1.0 - f) + b * f;
                }
                let i = vol.index(x, y, z);
                vol.data_mut()[i] = T::lit(acc * weight);
            }
        }
    }
    Ok(vol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_row_is_killed() {
        let out = ramp_filter(&[vec![3.0f64; 16]], &FilterSpec::ram_lak(), 0.125).unwrap();
        assert!(out[0].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn nyquist_cosine_gets_peak_weight() {
        let len = 16;
        let spacing = 0.125;
        let row: Vec<f64> = (0..len).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let out = ramp_filter(std::slice::from_ref(&row), &FilterSpec::ram_lak(), spacing).unwrap();
        let peak = 0.5 / spacing;
        for (o, r) in out[0].iter().zip(&row) {
            assert!((o - peak * r).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_series_gives_zero_volume() {
        let geom = TiltGeometry::uniform(8, 5, -60.0, 60.0).unwrap();
        let imgs = vec![Image::<f64>::zeros(8); 5];
        let v = fbp_reconstruct(&imgs, &geom, &FilterSpec::default()).unwrap();
        assert!(v.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn angular_weight_of_half_turn() {
        let a: Vec<f64> = (0..180).map(|k| -90.0 + k as f64).collect();
        assert!((angular_weight(&a) - std::f64::consts::PI / 180.0).abs() < 1e-15);
    }

    #[test]
    fn mismatch_is_rejected() {
        let geom = TiltGeometry::uniform(8, 5, -60.0, 60.0).unwrap();
        assert!(fbp_reconstruct(&vec![Image::<f64>::zeros(8); 4], &geom, &FilterSpec::default()).is_err());
        let bad = FilterSpec {
            kind: FilterKind::RamLak,
            cutoff: 0.0,
        };
        assert!(fbp_reconstruct(&vec![Image::<f64>::zeros(8); 5], &geom, &bad).is_err());
    }
}
