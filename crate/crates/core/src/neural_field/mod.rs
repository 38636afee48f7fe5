//! Coordinate networks: Fourier-feature encoding plus a dense MLP, used for
//! the density field and for the per-tilt local warps.

pub mod checkpoint;
mod encoding;
mod field;
mod mlp;

pub use encoding::FourierEncoding;
pub use field::{FieldConfig, NeuralField, NeuralVolume};
pub use mlp::{InitScheme, Mlp, MlpArchitecture, MlpCache, OutputActivation};
