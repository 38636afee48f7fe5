use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::real::Real;

/// Random Fourier features `[cos(2π B x); sin(2π B x)]`, optionally preceded
/// by the raw coordinates when used as a network input.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierEncoding<T> {
    dim: usize,
    /// `K x dim`, row-major, in cycles per unit coordinate.
    freqs: Vec<T>,
    scale: T,
    include_raw: bool,
}

impl<T: Real> FourierEncoding<T> {
    pub fn new(dim: usize, freqs: Vec<T>, scale: T, include_raw: bool) -> Result<Self> {
        if dim == 0 || freqs.is_empty() || !freqs.len().is_multiple_of(dim) {
            return Err(Error::InvalidArgument(format!(
                "frequency matrix of length {} is not K x {dim} with K >= 1",
                freqs.len()
            )));
        }
        if freqs.iter().any(|f| !f.is_finite()) {
            return Err(Error::InvalidArgument("non-finite frequency".into()));
        }
        Ok(Self {
            dim,
            freqs,
            scale,
            include_raw,
        })
    }

    /// Gaussian frequencies with standard deviation `scale`.
    pub fn gaussian(dim: usize, k: usize, scale: f64, include_raw: bool, seed: u64) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("need at least one frequency".into()));
        }
        let normal = Normal::new(0.0, scale)
            .map_err(|e| Error::InvalidArgument(format!("frequency scale: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let freqs = (0..k * dim).map(|_| T::lit(normal.sample(&mut rng))).collect();
        Self::new(dim, freqs, T::lit(scale), include_raw)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of frequency rows `K`.
    pub fn k(&self) -> usize {
        self.freqs.len() / self.dim
    }

    pub fn freqs(&self) -> &[T] {
        &self.freqs
    }

    pub fn freq_row(&self, k: usize) -> &[T] {
        &self.freqs[k * self.dim..(k + 1) * self.dim]
    }

    pub fn scale(&self) -> T {
        self.scale
    }

    pub fn include_raw(&self) -> bool {
        self.include_raw
    }

    /// Length of the network input produced by [`FourierEncoding::features`].
    pub fn output_len(&self) -> usize {
        2 * self.k() + if self.include_raw { self.dim } else { 0 }
    }

    /// The `2K` cosine-then-sine block.
    pub fn encode(&self, x: &[T]) -> Vec<T> {
        let k = self.k();
        let mut out = vec![T::zero(); 2 * k];
        self.write_trig(x, &mut out);
        out
    }

    /// Network input: raw coordinates (if enabled) followed by [`Self::encode`].
    pub fn features(&self, x: &[T], out: &mut [T]) {
        debug_assert_eq!(out.len(), self.output_len());
        let offset = if self.include_raw {
            out[..self.dim].copy_from_slice(&x[..self.dim]);
            self.dim
        } else {
            0
        };
        self.write_trig(x, &mut out[offset..]);
    }

    fn write_trig(&self, x: &[T], out: &mut [T]) {
        let k = self.k();
        let two_pi = T::TAU();
        for r in 0..k {
            let phase = two_pi * self.phase(r, x);
            let (s, c) = phase.sin_cos();
            out[r] = c;
            out[k + r] = s;
        }
    }

    /// `b_r . x`, in cycles.
    #[inline]
    pub fn phase(&self, r: usize, x: &[T]) -> T {
        self.freq_row(r)
            .iter()
            .zip(x)
            .fold(T::zero(), |acc, (&b, &xi)| acc + b * xi)
    }

    /// Pulls a gradient on the network input back to the coordinates.
    /// `feat` is the forward output of [`Self::features`] at `x`.
    pub fn backward(&self, feat: &[T], d_feat: &[T], d_x: &mut [T]) {
        let k = self.k();
        let offset = if self.include_raw {
            for i in 0..self.dim {
                d_x[i] += d_feat[i];
            }
            self.dim
        } else {
            0
        };
        let two_pi = T::TAU();
        for r in 0..k {
            let c = feat[offset + r];
            let s = feat[offset + k + r];
            // d cos = -sin * 2π b, d sin = cos * 2π b
            let g = two_pi * (c * d_feat[offset + k + r] - s * d_feat[offset + r]);
            for (dx, &b) in d_x.iter_mut().zip(self.freq_row(r)) {
                *dx += g * b;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origin_gives_ones_then_zeros() {
        let enc = FourierEncoding::<f64>::gaussian(3, 5, 8.0, false, 1).unwrap();
        let e = enc.encode(&[0.0, 0.0, 0.0]);
        assert_eq!(&e[..5], &[1.0; 5]);
        assert_eq!(&e[5..], &[0.0; 5]);
    }

    #[test]
    fn half_cycle_phase() {
        let enc = FourierEncoding::<f64>::new(2, vec![0.25, 0.25], 1.0, false).unwrap();
        let e = enc.encode(&[1.0, 1.0]);
        assert!((e[0] + 1.0).abs() < 1e-15);
        assert!(e[1].abs() < 1e-15);
    }

    #[test]
    fn cos_even_sin_odd() {
        let enc = FourierEncoding::<f64>::gaussian(3, 16, 4.0, false, 9).unwrap();
        let x = [0.31, -0.72, 0.05];
        let a = enc.encode(&x);
        let b = enc.encode(&[-x[0], -x[1], -x[2]]);
        for r in 0..16 {
            assert!((a[r] - b[r]).abs() < 1e-12);
            assert!((a[16 + r] + b[16 + r]).abs() < 1e-12);
        }
    }

    #[test]
    fn raw_prefix_and_length() {
        let enc = FourierEncoding::<f64>::gaussian(2, 4, 1.0, true, 3).unwrap();
        assert_eq!(enc.output_len(), 10);
        let mut out = vec![0.0; 10];
        enc.features(&[0.5, -0.25], &mut out);
        assert_eq!(&out[..2], &[0.5, -0.25]);
    }

    #[test]
    fn rejects_empty() {
        assert!(FourierEncoding::<f64>::new(3, vec![], 1.0, false).is_err());
        assert!(FourierEncoding::<f64>::gaussian(3, 0, 1.0, false, 0).is_err());
    }
}
