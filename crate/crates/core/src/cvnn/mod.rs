//! Complex-valued network building blocks with reverse-mode gradients.

mod adam;
mod batch;
pub mod checkpoint;
mod layers;
mod loss;
mod params;
mod tape;
mod unet;

pub use adam::{adam_step, AdamConfig, OptimizerState};
pub use batch::ComplexBatch;
pub use layers::{complex_conv2d, complex_dropout, complex_prelu, ConvWeights};
pub use loss::{loss_mse_complex, loss_mse_grad};
pub use params::{Gradients, Param, ParamId, ParamKind, ParamStore};
pub use tape::{Backward, Tape, Var};
pub use unet::{unet_backward, unet_forward, CvUNetConfig, CvUNetParams, ForwardRecord, Mode, UNetLayout};
