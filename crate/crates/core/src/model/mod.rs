//! Toy diffusion transformer with hierarchical attention and LoRA adapters.

pub mod checkpoint;
mod config;
mod dit;
mod flow;
mod layers;
mod lora;
mod patchify;
pub mod tensors;
mod train;

pub use config::{parse_pool_kernel, ModelConfig};
pub use dit::{timestep_embedding, DitBlock, DitModel, DitParams, ForwardOptions, TIME_SCALE};
pub use flow::{euler_step, forward_noising, sample, sample_from, sample_noise, substep_timestep, FlowState};
pub use layers::{gelu, gelu_grad, silu, silu_grad, Linear};
pub use lora::{AttentionLora, LoraAdapter};
pub use patchify::{decode_to_image, encode_from_image};
pub use tensors::{TensorMut, TensorRef, Tensors};
pub use train::{Adam, EncodedTriplet, StepDraws, TrainConfig, TrainPhase, Trainer};
