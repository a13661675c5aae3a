//! Minimal differentiable tensor core: exactly the layers and optimizer the
//! appearance and geometry networks need, plus a finite-difference checker.

mod adam;
pub mod checkpoint;
mod gemm;
pub mod gradcheck;
pub mod layers;
mod params;
mod softmax;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{finite_difference_check, GradCheckOptions, GradCheckReport};
pub use layers::{BatchNorm, Conv2d, Ctx, Dense, MaxPool2d, Mode};
pub use params::{BufferUpdates, Entry, ParamKind, ParameterStore};
pub use softmax::{softmax, softmax_backward};
pub use tensor::Tensor;
