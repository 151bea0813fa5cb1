use log::{debug, info};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{TokenSequence, Transformer, TransformerConfig};
use crate::error::{Error, Result};
use crate::nn::{clip_grad_norm, Adam, AdamConfig, Module};
use crate::seeded_rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformerTrainConfig {
    pub steps: usize,
    pub lr: f64,
    /// Sequences per optimizer step.
    pub batch_size: usize,
    pub seed: u64,
    pub grad_clip: Option<f64>,
}

impl Default for TransformerTrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            lr: 1e-3,
            batch_size: 1,
            seed: 0,
            grad_clip: Some(1.0),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TransformerOutcome {
    pub model: Transformer,
    /// Mean NLL per token of each step's batch, before the update.
    pub curve: Vec<f64>,
}

pub fn train_transformer(
    sequences: &[TokenSequence],
    cfg: &TransformerConfig,
    train: &TransformerTrainConfig,
) -> Result<TransformerOutcome> {
    let model = Transformer::new(cfg, &mut seeded_rng(train.seed))?;
    train_transformer_from(model, sequences, train)
}

/// Teacher-forced training over full sequences. Batches walk through a
/// reshuffled permutation of the dataset each epoch.
pub fn train_transformer_from(
    mut model: Transformer,
    sequences: &[TokenSequence],
    train: &TransformerTrainConfig,
) -> Result<TransformerOutcome> {
    let Some(first) = sequences.first() else {
        return Err(Error::invalid("token dataset is empty"));
    };
    if train.batch_size == 0 {
        return Err(Error::invalid("batch_size must be positive"));
    }
    let len = first.len();
    if len == 0 {
        return Err(Error::invalid("token sequences are empty"));
    }
    for (i, s) in sequences.iter().enumerate() {
        if s.len() != len {
            return Err(Error::LengthMismatch {
                expected: len,
                actual: s.len(),
            });
        }
        s.check_vocab(model.cfg.vocab_size)
            .map_err(|e| Error::invalid(format!("sequence {i}: {e}")))?;
    }
    let mut rng = seeded_rng(train.seed.wrapping_add(0x5eed_0002));
    let mut opt = Adam::new(AdamConfig::with_lr(train.lr));
    let mut order: Vec<usize> = (0..sequences.len()).collect();
    let mut cursor = order.len();
    let mut curve = Vec::with_capacity(train.steps);
    for step in 0..train.steps {
        model.zero_grad();
        let scale = 1.0 / (train.batch_size * len) as f64;
        let mut total = 0.0;
        for _ in 0..train.batch_size {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            total += model.nll_and_grad(&sequences[order[cursor]], Some(scale))?;
            cursor += 1;
        }
        let mean = total * scale;
        if !mean.is_finite() {
            return Err(Error::Diverged {
                step,
                detail: format!("token NLL is {mean}"),
            });
        }
        let mut params = model.params_mut();
        if let Some(max) = train.grad_clip {
            clip_grad_norm(&mut params, max);
        }
        opt.step(&mut params);
        curve.push(mean);
        if step % 100 == 0 {
            debug!("transformer step {step}: nll/token {mean:.5}");
        }
    }
    if let Some(last) = curve.last() {
        info!("transformer trained {} steps, final nll/token {last:.5}", curve.len());
    }
    Ok(TransformerOutcome { model, curve })
}
