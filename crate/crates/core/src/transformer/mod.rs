//! Autoregressive prior over token sequences.

mod model;
mod sample;
pub mod tokens;
mod train;

pub use model::{Block, ForwardCache, KvCache, Transformer, TransformerConfig, CHECKPOINT_TAG};
pub use sample::{generate, next_token_distribution, sequence_nll, SamplerConfig};
pub use tokens::{read_token_dataset, write_token_dataset, TokenSequence};
pub use train::{train_transformer, train_transformer_from, TransformerOutcome, TransformerTrainConfig};
