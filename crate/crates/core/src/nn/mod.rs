//! Image-to-image generator network, its losses and its training loop.
//!
//! A small CPU engine: activations are channel-major tensors, convolutions
//! run as im2col + GEMM, and every layer carries its own backward pass.

pub mod checkpoint;
pub mod layers;
pub mod loss;
pub mod optim;
pub mod tensor;
pub mod train;
pub mod unet;

pub use checkpoint::{load_model, load_model_expecting, save_model};
pub use loss::{image_loss, LossKind};
pub use optim::Adam;
pub use tensor::{images_to_tensor, tensor_to_images, Scalar, Tensor};
pub use train::{train, train_step, PairSource, TrainConfig, TrainReport};
pub use unet::{NetworkConfig, UNet};
