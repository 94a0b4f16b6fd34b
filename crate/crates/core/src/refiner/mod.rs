//! Transformer refiner with a hand-written backward pass, the four-term L1
//! loss, and the AdamW training loop.

mod loss;
mod model;
mod train;

pub use loss::{loss, loss_and_grad, LossTerms, LossWeights};
pub use model::{refine, sequence_matrix, Block, BlockCache, ForwardCache, ModelConfig, NormStats, RefinerParams};
pub use train::{
    batch_gradient, generate, matrix_to_frames, predict_samples, prepare_samples, sample_gradient, train,
    BatchGradient, EpochLog, TrainConfig, TrainOutcome, TrainingSample,
};

#[cfg(test)]
mod tests;
