//! Complex-valued diffusion for synthesizing MRI phase from magnitude images.
//!
//! The crate is split along the data flow:
//!
//! - [`complex`]: complex images, polar conversion, the seeded [`Rng`] and the
//!   unit-modulus phase noise the diffusion runs on.
//! - [`tensor_io`]: the `CXT1` binary tensor format.
//! - [`kspace`]: centered orthonormal FFTs, Cartesian undersampling masks,
//!   zerofilling and data consistency.
//! - [`diffusion`]: noise schedules and the polar forward/reverse steps.
//! - [`cvnn`]: complex-valued layers, a residual U-Net, reverse-mode
//!   gradients and Adam.
//! - [`pipelines`]: phantoms, training and sampling loops, the naive phase
//!   baseline, dataset mixing and the reconstruction experiment.
//! - [`metrics`]: image-quality and segmentation metrics plus Laplacian phase
//!   unwrapping.

pub mod complex;
pub mod cvnn;
pub mod diffusion;
mod error;
pub mod kspace;
pub mod metrics;
pub mod pipelines;
pub mod tensor_io;

pub use complex::{
    from_polar, sample_phase_noise, sample_unit_phase_noise, to_polar, wrap_phase, ComplexImage,
    Grid, NoiseLaw, PolarImage, Real, Rng,
};
pub use error::{Error, Result};
pub use tensor_io::TensorError;
