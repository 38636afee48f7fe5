//! Dense feed-forward networks with a hand-derived batched backward pass.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diff_core::ParamBlock;
use crate::error::{Error, Result};
use crate::real::Real;

/// Activation applied after the last affine layer. Hidden layers use relu.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutputActivation {
    #[serde(rename = "linear-final")]
    Linear,
    #[serde(rename = "softplus-final")]
    Softplus,
}

impl OutputActivation {
    pub fn tag(self) -> &'static str {
        match self {
            OutputActivation::Linear => "linear-final",
            OutputActivation::Softplus => "softplus-final",
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        match tag {
            "linear-final" => Ok(OutputActivation::Linear),
            "softplus-final" => Ok(OutputActivation::Softplus),
            other => Err(Error::InvalidArgument(format!("unknown activation `{other}`"))),
        }
    }
}

/// `depth` counts affine layers, so `depth - 1` hidden relu layers of
/// `hidden_width` units.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MlpArchitecture {
    pub input_dim: usize,
    pub output_dim: usize,
    pub hidden_width: usize,
    pub depth: usize,
    pub output_activation: OutputActivation,
    pub zero_init_last: bool,
}

impl MlpArchitecture {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.input_dim == 0 || self.output_dim == 0 || self.hidden_width == 0
        {
            return Err(Error::InvalidArgument(format!(
                "invalid architecture {self:?}: depth and widths must be >= 1"
            )));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` per affine layer.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        (0..self.depth)
            .map(|l| {
                let fan_in = if l == 0 { self.input_dim } else { self.hidden_width };
                let fan_out = if l + 1 == self.depth {
                    self.output_dim
                } else {
                    self.hidden_width
                };
                (fan_in, fan_out)
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| i * o + o).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitScheme {
    FanInUniform,
    ZeroLastLayer,
}

impl std::str::FromStr for InitScheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fan-in-uniform" => Ok(InitScheme::FanInUniform),
            "zero-last-layer" => Ok(InitScheme::ZeroLastLayer),
            other => Err(Error::InvalidArgument(format!("unknown init scheme `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct LayerSlot {
    fan_in: usize,
    fan_out: usize,
    w: usize,
    b: usize,
}

/// Network weights stored in one flat [`ParamBlock`]; layer `l` holds a
/// `fan_in x fan_out` row-major matrix followed by its bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    arch: MlpArchitecture,
    params: ParamBlock<T>,
}

/// Activations kept from [`Mlp::forward_batch`] for the backward pass.
pub struct MlpCache<T> {
    /// Input to each affine layer.
    inputs: Vec<Array2<T>>,
    /// Pre-activation of the final layer.
    final_pre: Array2<T>,
}

impl<T> MlpCache<T> {
    /// Input matrix of affine layer `l`; layer 0 sees the encoded batch.
    pub fn input(&self, l: usize) -> &Array2<T> {
        &self.inputs[l]
    }
}

impl<T: Real> Mlp<T> {
    pub fn from_params(arch: MlpArchitecture, params: ParamBlock<T>) -> Result<Self> {
        arch.validate()?;
        if params.len() != arch.param_count() {
            return Err(Error::shape("Mlp weights", arch.param_count(), params.len()));
        }
        Ok(Self { arch, params })
    }

    pub fn init(arch: MlpArchitecture, seed: u64, scheme: InitScheme, tag: &str) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = Vec::with_capacity(arch.param_count());
        let dims = arch.layer_dims();
        for (l, &(fan_in, fan_out)) in dims.iter().enumerate() {
            let last = l + 1 == dims.len();
            let zero = last && (scheme == InitScheme::ZeroLastLayer || arch.zero_init_last);
            // U(-a, a) has variance a^2 / 3 = 1 / fan_in.
            let a = (3.0 / fan_in as f64).sqrt();
            for _ in 0..fan_in * fan_out {
                let w = if zero { 0.0 } else { rng.gen_range(-a..a) };
                values.push(T::lit(w));
            }
            values.extend(std::iter::repeat_n(T::zero(), fan_out));
        }
        let n = values.len();
        Self::from_params(arch, ParamBlock::new(values, vec![n], tag)?)
    }

    pub fn arch(&self) -> &MlpArchitecture {
        &self.arch
    }

    pub fn params(&self) -> &ParamBlock<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamBlock<T> {
        &mut self.params
    }

    fn slots(&self) -> Vec<LayerSlot> {
        let mut off = 0;
        self.arch
            .layer_dims()
            .into_iter()
            .map(|(fan_in, fan_out)| {
                let slot = LayerSlot {
                    fan_in,
                    fan_out,
                    w: off,
                    b: off + fan_in * fan_out,
                };
                off += fan_in * fan_out + fan_out;
                slot
            })
            .collect()
    }

    fn weight(&self, s: LayerSlot) -> ArrayView2<'_, T> {
        let v = &self.params.values()[s.w..s.w + s.fan_in * s.fan_out];
        ArrayView2::from_shape((s.fan_in, s.fan_out), v).expect("layer layout")
    }

    fn bias(&self, s: LayerSlot) -> ArrayView1<'_, T> {
        ArrayView1::from(&self.params.values()[s.b..s.b + s.fan_out])
    }

    /// Single-input evaluation.
    pub fn eval(&self, z: &[T]) -> Result<Vec<T>> {
        if z.len() != self.arch.input_dim {
            return Err(Error::shape("mlp_eval input", self.arch.input_dim, z.len()));
        }
        let slots = self.slots();
        let mut h: Array1<T> = Array1::from(z.to_vec());
        for (l, &s) in slots.iter().enumerate() {
            let mut pre = h.dot(&self.weight(s));
            pre += &self.bias(s);
            if l + 1 < slots.len() {
                pre.mapv_inplace(|x| x.max(T::zero()));
            } else if self.arch.output_activation == OutputActivation::Softplus {
                pre.mapv_inplace(Real::softplus);
            }
            h = pre;
        }
        Ok(h.to_vec())
    }

    /// Evaluates every row of `z` (`n x input_dim`).
    pub fn forward_batch(&self, z: Array2<T>) -> Result<(Array2<T>, MlpCache<T>)> {
        if z.ncols() != self.arch.input_dim {
            return Err(Error::shape("mlp batch input", self.arch.input_dim, z.ncols()));
        }
        let slots = self.slots();
        let mut inputs = Vec::with_capacity(slots.len());
        let mut h = z;
        for (l, &s) in slots.iter().enumerate() {
            let mut pre = h.dot(&self.weight(s));
            pre += &self.bias(s);
            inputs.push(h);
            if l + 1 < slots.len() {
                pre.mapv_inplace(|x| x.max(T::zero()));
                h = pre;
            } else {
                let out = match self.arch.output_activation {
                    OutputActivation::Linear => pre.clone(),
                    OutputActivation::Softplus => pre.mapv(Real::softplus),
                };
                return Ok((out, MlpCache { inputs, final_pre: pre }));
            }
        }
        unreachable!("depth >= 1")
    }

    /// Backward pass from `d_out` (`n x output_dim`). Returns the flat weight
    /// gradient (same layout as the parameters) and, when requested, the
    /// gradient with respect to the batch input.
    pub fn backward_batch(
        &self,
        cache: &MlpCache<T>,
        d_out: Array2<T>,
        want_input_grad: bool,
    ) -> (Vec<T>, Option<Array2<T>>) {
        let slots = self.slots();
        let mut grad = vec![T::zero(); self.params.len()];
        let mut d_pre = d_out;
        if self.arch.output_activation == OutputActivation::Softplus {
            d_pre.zip_mut_with(&cache.final_pre, |d, &p| *d *= p.sigmoid());
        }
        for l in (0..slots.len()).rev() {
            let s = slots[l];
            let input = &cache.inputs[l];
            let gw = input.t().dot(&d_pre);
            grad[s.w..s.w + s.fan_in * s.fan_out]
                .iter_mut()
                .zip(gw.iter())
                .for_each(|(g, &v)| *g = v);
            let gb = d_pre.sum_axis(Axis(0));
            grad[s.b..s.b + s.fan_out]
                .iter_mut()
                .zip(gb.iter())
                .for_each(|(g, &v)| *g = v);
            if l == 0 && !want_input_grad {
                break;
            }
            let mut d_in = d_pre.dot(&self.weight(s).t());
            if l == 0 {
                return (grad, Some(d_in));
            }
            // input to layer l is relu output of layer l - 1
            d_in.zip_mut_with(input, |d, &a| {
                if a <= T::zero() {
                    *d = T::zero();
                }
            });
            d_pre = d_in;
        }
        (grad, None)
    }
}
