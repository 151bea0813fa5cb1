use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{TokenSequence, Transformer};
use crate::error::{Error, Result};
use crate::nn::softmax_in_place;
use crate::seeded_rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub temperature: f64,
    /// Keep only the `top_k` most likely tokens; `None` keeps all.
    pub top_k: Option<usize>,
    pub seed: u64,
}

impl SamplerConfig {
    /// Temperature 1 and `top_k = V/4`.
    pub fn for_vocab(vocab_size: usize, seed: u64) -> Self {
        Self {
            temperature: 1.0,
            top_k: Some((vocab_size / 4).max(1)),
            seed,
        }
    }

    pub fn greedy(seed: u64) -> Self {
        Self {
            temperature: 1.0,
            top_k: Some(1),
            seed,
        }
    }

    pub fn validate(&self, vocab_size: usize) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::invalid(format!("temperature must be positive, got {}", self.temperature)));
        }
        if let Some(k) = self.top_k {
            if k == 0 || k > vocab_size {
                return Err(Error::invalid(format!("top_k must lie in [1, {vocab_size}], got {k}")));
            }
        }
        Ok(())
    }
}

/// `p(t_{i+1} | start, prefix)` over the `V` codebook tokens.
pub fn next_token_distribution(prefix: &TokenSequence, model: &Transformer) -> Result<Vec<f64>> {
    if prefix.len() >= model.cfg.context_length {
        return Err(Error::invalid(format!(
            "prefix of {} tokens does not fit context length {}",
            prefix.len(),
            model.cfg.context_length
        )));
    }
    prefix.check_vocab(model.cfg.vocab_size)?;
    let v = model.cfg.vocab_size;
    let (logits, _) = model.forward(&model.with_start(prefix.tokens()))?;
    let mut last = logits[logits.len() - v..].to_vec();
    softmax_in_place(&mut last);
    Ok(last)
}

/// `-sum_i log p(t_i | start, t_<i)` in nats.
pub fn sequence_nll(seq: &TokenSequence, model: &Transformer) -> Result<f64> {
    // gradient is not requested, so the clone is never mutated
    let mut m = model.clone();
    m.nll_and_grad(seq, None)
}

/// Ancestral sampling of `sequence_length` tokens from the start token.
pub fn generate(model: &Transformer, sampler: &SamplerConfig) -> Result<TokenSequence> {
    let v = model.cfg.vocab_size;
    sampler.validate(v)?;
    let mut rng = seeded_rng(sampler.seed);
    let mut cache = model.kv_cache();
    let mut out = Vec::with_capacity(model.cfg.sequence_length);
    let mut token = model.cfg.start_token();
    while out.len() < model.cfg.sequence_length {
        let logits = model.step(token, &mut cache)?;
        token = pick(&logits, sampler, &mut rng);
        out.push(token);
    }
    Ok(TokenSequence(out))
}

fn pick<R: Rng>(logits: &[f64], sampler: &SamplerConfig, rng: &mut R) -> u32 {
    let mut order: Vec<usize> = (0..logits.len()).collect();
    // stable sort keeps the lower index first among equal logits
    order.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]));
    let k = sampler.top_k.unwrap_or(logits.len());
    if k == 1 {
        return order[0] as u32;
    }
    order.truncate(k);
    let mut p: Vec<f64> = order.iter().map(|&i| logits[i] / sampler.temperature).collect();
    softmax_in_place(&mut p);
    let mut u: f64 = rng.gen();
    for (&i, &pi) in order.iter().zip(&p) {
        if u < pi {
            return i as u32;
        }
        u -= pi;
    }
    order[k - 1] as u32
}
