//! Joint recovery of a 3D density and per-tilt image deformations from
//! simulated cryo-electron tomography tilt series.

extern crate blas_src;

pub mod deformation;
pub mod diff_core;
pub mod error;
pub mod fbp;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod neural_field;
pub mod pipeline;
pub mod real;
pub mod reconstruct;
pub mod rng;
pub mod simulator;

pub use error::{Error, ErrorKind, Result};
pub use real::Real;

pub type Volume32 = geometry::VolumeGrid<f32>;
pub type Volume64 = geometry::VolumeGrid<f64>;
pub type Image32 = geometry::Image<f32>;
pub type Image64 = geometry::Image<f64>;
pub type Field32 = neural_field::NeuralField<f32>;
pub type Field64 = neural_field::NeuralField<f64>;
pub type Deformations32 = deformation::DeformationParams<f32>;
pub type Deformations64 = deformation::DeformationParams<f64>;
pub type TiltSeries32 = simulator::TiltSeries<f32>;
pub type TiltSeries64 = simulator::TiltSeries<f64>;
pub type TrainState32 = reconstruct::TrainState<f32>;
pub type TrainState64 = reconstruct::TrainState<f64>;
