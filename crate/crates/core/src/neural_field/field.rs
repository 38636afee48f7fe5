use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::encoding::FourierEncoding;
use super::mlp::{InitScheme, Mlp, MlpArchitecture, OutputActivation};
use crate::error::{Error, Result};
use crate::real::Real;

/// Hyperparameters of a coordinate network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldConfig {
    pub input_dim: usize,
    pub output_dim: usize,
    /// Number of Fourier frequency rows `K`.
    pub frequencies: usize,
    /// Standard deviation of the frequencies, cycles per unit coordinate.
    pub frequency_scale: f64,
    pub include_raw: bool,
    pub hidden_width: usize,
    pub depth: usize,
    pub output_activation: OutputActivation,
    pub zero_init_last: bool,
}

impl FieldConfig {
    /// Density field `R^3 -> R`, softplus head.
    pub fn volume_default() -> Self {
        Self {
            input_dim: 3,
            output_dim: 1,
            frequencies: 48,
            frequency_scale: 2.5,
            include_raw: false,
            hidden_width: 48,
            depth: 3,
            output_activation: OutputActivation::Softplus,
            zero_init_last: false,
        }
    }

    /// Per-tilt local warp `R^2 -> R^2`, identity at initialization.
    pub fn warp_default() -> Self {
        Self {
            input_dim: 2,
            output_dim: 2,
            frequencies: 16,
            frequency_scale: 1.0,
            include_raw: true,
            hidden_width: 32,
            depth: 2,
            output_activation: OutputActivation::Linear,
            zero_init_last: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.frequencies == 0 || !(self.frequency_scale.is_finite() && self.frequency_scale > 0.0) {
            return Err(Error::Config(format!(
                "field needs K >= 1 and a positive frequency scale, got K={} scale={}",
                self.frequencies, self.frequency_scale
            )));
        }
        self.arch().validate()
    }

    pub fn arch(&self) -> MlpArchitecture {
        let enc_len = 2 * self.frequencies + if self.include_raw { self.input_dim } else { 0 };
        MlpArchitecture {
            input_dim: enc_len,
            output_dim: self.output_dim,
            hidden_width: self.hidden_width,
            depth: self.depth,
            output_activation: self.output_activation,
            zero_init_last: self.zero_init_last,
        }
    }
}

/// Fourier encoding followed by an MLP. A volume is a field with
/// `input_dim = 3, output_dim = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuralField<T> {
    encoding: FourierEncoding<T>,
    mlp: Mlp<T>,
    seed: u64,
}

pub type NeuralVolume<T> = NeuralField<T>;

impl<T: Real> NeuralField<T> {
    pub fn new(cfg: &FieldConfig, seed: u64, tag: &str) -> Result<Self> {
        cfg.validate()?;
        let encoding = FourierEncoding::gaussian(
            cfg.input_dim,
            cfg.frequencies,
            cfg.frequency_scale,
            cfg.include_raw,
            seed ^ 0x9e37_79b9_7f4a_7c15,
        )?;
        let scheme = if cfg.zero_init_last {
            InitScheme::ZeroLastLayer
        } else {
            InitScheme::FanInUniform
        };
        let mlp = Mlp::init(cfg.arch(), seed, scheme, tag)?;
        Ok(Self { encoding, mlp, seed })
    }

    pub fn from_parts(encoding: FourierEncoding<T>, mlp: Mlp<T>, seed: u64) -> Result<Self> {
        if encoding.output_len() != mlp.arch().input_dim {
            return Err(Error::shape(
                "NeuralField encoding/mlp",
                mlp.arch().input_dim,
                encoding.output_len(),
            ));
        }
        Ok(Self { encoding, mlp, seed })
    }

    pub fn encoding(&self) -> &FourierEncoding<T> {
        &self.encoding
    }

    pub fn mlp(&self) -> &Mlp<T> {
        &self.mlp
    }

    pub fn mlp_mut(&mut self) -> &mut Mlp<T> {
        &mut self.mlp
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn input_dim(&self) -> usize {
        self.encoding.dim()
    }

    pub fn output_dim(&self) -> usize {
        self.mlp.arch().output_dim
    }

    pub fn eval(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.input_dim() {
            return Err(Error::shape("field input", self.input_dim(), x.len()));
        }
        let mut feat = vec![T::zero(); self.encoding.output_len()];
        self.encoding.features(x, &mut feat);
        self.mlp.eval(&feat)
    }

    /// Encoded network input for a list of points (`n x enc_len`).
    pub fn features_batch(&self, points: &[T]) -> Array2<T> {
        let d = self.input_dim();
        let n = points.len() / d;
        let len = self.encoding.output_len();
        let mut z = Array2::zeros((n, len));
        for (i, mut row) in z.rows_mut().into_iter().enumerate() {
            self.encoding.features(
                &points[i * d..(i + 1) * d],
                row.as_slice_mut().expect("standard layout"),
            );
        }
        z
    }

    /// Evaluates a flat list of `d`-dimensional points, returning
    /// `n x output_dim` values.
    pub fn eval_batch(&self, points: &[T]) -> Result<Array2<T>> {
        if !points.len().is_multiple_of(self.input_dim()) {
            return Err(Error::shape("field batch", "multiple of input dim", points.len()));
        }
        let z = self.features_batch(points);
        Ok(self.mlp.forward_batch(z)?.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff_core::ParamBlock;

    #[test]
    fn permuted_points_give_permuted_values() {
        let mut cfg = FieldConfig::volume_default();
        cfg.frequencies = 8;
        cfg.hidden_width = 8;
        let f = NeuralField::<f64>::new(&cfg, 5, "psi").unwrap();
        let pts: Vec<[f64; 3]> = (0..27)
            .map(|i| [(i % 3) as f64 - 1.0, ((i / 3) % 3) as f64 - 1.0, (i / 9) as f64 - 1.0])
            .collect();
        let flat: Vec<f64> = pts.iter().flatten().copied().collect();
        let a = f.eval_batch(&flat).unwrap();
        let perm: Vec<usize> = (0..27).map(|i| (i * 10) % 27).collect();
        let flat_p: Vec<f64> = perm.iter().flat_map(|&i| pts[i]).collect();
        let b = f.eval_batch(&flat_p).unwrap();
        for (j, &i) in perm.iter().enumerate() {
            assert_eq!(a[[i, 0]], b[[j, 0]]);
        }
    }

    #[test]
    fn fresh_warp_is_zero() {
        let f = NeuralField::<f64>::new(&FieldConfig::warp_default(), 1, "gamma[0]").unwrap();
        assert_eq!(f.eval(&[0.3, -0.9]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn zeroed_volume_is_ln2() {
        let cfg = FieldConfig::volume_default();
        let f = NeuralField::<f64>::new(&cfg, 1, "psi").unwrap();
        let mlp = Mlp::from_params(cfg.arch(), ParamBlock::zeros(vec![cfg.arch().param_count()], "psi")).unwrap();
        let f = NeuralField::from_parts(f.encoding().clone(), mlp, 1).unwrap();
        assert!((f.eval(&[0.2, 0.1, -0.4]).unwrap()[0] - 2f64.ln()).abs() < 1e-15);
    }
}
