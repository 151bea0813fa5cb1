//! Decoder-only transformer over codebook tokens.
//!
//! Pre-norm blocks (`x + attn(ln(x))`, `x + mlp(ln(x))`) with learned
//! absolute position embeddings. The input vocabulary is the `V` codebook
//! tokens plus a start token with id `V`; the output head predicts only the
//! `V` codebook tokens.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::TokenSequence;
use crate::archive::{load_archive, save_archive};
use crate::error::{Error, Result};
use crate::nn::{gelu, gelu_backward, gemm, softmax_in_place, LayerNorm, LayerNormCache, Linear, Module, Param};

pub const CHECKPOINT_TAG: &str = "lt/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformerConfig {
    pub layers: usize,
    pub heads: usize,
    pub embed_dim: usize,
    /// Codebook size `V`; the start token is id `V`.
    pub vocab_size: usize,
    /// Tokens per shape (`K^3`).
    pub sequence_length: usize,
    pub context_length: usize,
}

impl TransformerConfig {
    /// Two layers, two heads, 64-wide embeddings.
    pub fn desk(vocab_size: usize, sequence_length: usize) -> Self {
        Self {
            layers: 2,
            heads: 2,
            embed_dim: 64,
            vocab_size,
            sequence_length,
            context_length: sequence_length + 1,
        }
    }

    pub fn start_token(&self) -> u32 {
        self.vocab_size as u32
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.heads == 0 || self.embed_dim == 0 {
            return Err(Error::invalid("transformer: layers, heads and embed_dim must be positive"));
        }
        if self.embed_dim % self.heads != 0 {
            return Err(Error::invalid(format!(
                "transformer: embed_dim {} is not divisible by {} heads",
                self.embed_dim, self.heads
            )));
        }
        if self.vocab_size < 2 {
            return Err(Error::invalid("transformer: vocabulary needs at least 2 tokens"));
        }
        if self.context_length < self.sequence_length + 1 {
            return Err(Error::invalid(format!(
                "transformer: context {} cannot hold start token plus {} tokens",
                self.context_length, self.sequence_length
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub ln1: LayerNorm,
    pub qkv: Linear,
    pub proj: Linear,
    pub ln2: LayerNorm,
    pub fc: Linear,
    pub out: Linear,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transformer {
    pub cfg: TransformerConfig,
    pub token_embedding: Param,
    pub position_embedding: Param,
    pub blocks: Vec<Block>,
    pub ln_f: LayerNorm,
    pub head: Linear,
}

struct BlockCache {
    ln1: LayerNormCache,
    ln1_out: Vec<f64>,
    qkv: Vec<f64>,
    probs: Vec<Vec<f64>>, // per head, [n, n]
    attn: Vec<f64>,
    ln2: LayerNormCache,
    ln2_out: Vec<f64>,
    hidden_pre: Vec<f64>,
    hidden: Vec<f64>,
}

/// Everything the backward pass needs.
pub struct ForwardCache {
    inputs: Vec<u32>,
    blocks: Vec<BlockCache>,
    ln_f: LayerNormCache,
    ln_f_out: Vec<f64>,
}

impl Transformer {
    pub fn new<R: Rng>(cfg: &TransformerConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.embed_dim;
        // residual projections shrink with depth, GPT-2 style
        let resid_gain = 1.0 / (2.0 * cfg.layers as f64).sqrt();
        let blocks = (0..cfg.layers)
            .map(|l| Block {
                ln1: LayerNorm::new(&format!("block{l}.ln1"), d),
                qkv: Linear::new(&format!("block{l}.qkv"), d, 3 * d, 1.0, rng),
                proj: Linear::new(&format!("block{l}.proj"), d, d, resid_gain, rng),
                ln2: LayerNorm::new(&format!("block{l}.ln2"), d),
                fc: Linear::new(&format!("block{l}.fc"), d, 4 * d, 1.0, rng),
                out: Linear::new(&format!("block{l}.out"), 4 * d, d, resid_gain, rng),
            })
            .collect();
        Ok(Self {
            cfg: cfg.clone(),
            token_embedding: Param::normal("token_embedding", &[cfg.vocab_size + 1, d], 0.02, rng),
            position_embedding: Param::normal("position_embedding", &[cfg.context_length, d], 0.02, rng),
            blocks,
            ln_f: LayerNorm::new("ln_f", d),
            head: Linear::new("head", d, cfg.vocab_size, 1.0, rng),
        })
    }

    /// Zeroes the output head so every prediction is uniform over the vocabulary.
    pub fn force_uniform(&mut self) {
        self.head.weight.value.fill(0.0);
        self.head.bias.value.fill(0.0);
    }

    fn check_inputs(&self, inputs: &[u32]) -> Result<()> {
        if inputs.len() > self.cfg.context_length {
            return Err(Error::invalid(format!(
                "sequence of {} positions exceeds context length {}",
                inputs.len(),
                self.cfg.context_length
            )));
        }
        TokenSequence(inputs.to_vec()).check_vocab(self.cfg.vocab_size + 1)
    }

    /// Logits `[n, V]` for input ids (start token included by the caller).
    pub fn forward(&self, inputs: &[u32]) -> Result<(Vec<f64>, ForwardCache)> {
        self.check_inputs(inputs)?;
        let n = inputs.len();
        let d = self.cfg.embed_dim;
        let mut x = vec![0.0; n * d];
        for (t, &tok) in inputs.iter().enumerate() {
            let e = &self.token_embedding.value[tok as usize * d..(tok as usize + 1) * d];
            let p = &self.position_embedding.value[t * d..(t + 1) * d];
            for j in 0..d {
                x[t * d + j] = e[j] + p[j];
            }
        }
        let mut caches = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            caches.push(self.block_forward(block, &mut x, n));
        }
        let (ln_f_out, ln_f) = self.ln_f.forward(&x, n);
        let logits = self.head.forward(&ln_f_out, n);
        Ok((
            logits,
            ForwardCache {
                inputs: inputs.to_vec(),
                blocks: caches,
                ln_f,
                ln_f_out,
            },
        ))
    }

    fn block_forward(&self, b: &Block, x: &mut [f64], n: usize) -> BlockCache {
        let d = self.cfg.embed_dim;
        let h = self.cfg.heads;
        let dh = d / h;
        let scale = 1.0 / (dh as f64).sqrt();
        let (ln1_out, ln1) = b.ln1.forward(x, n);
        let qkv = b.qkv.forward(&ln1_out, n);
        let mut attn = vec![0.0; n * d];
        let mut probs = Vec::with_capacity(h);
        for head in 0..h {
            let (q, k, v) = split_head(&qkv, n, d, head, dh);
            let mut s = vec![0.0; n * n];
            gemm(n, dh, n, scale, &q, false, &k, true, 0.0, &mut s);
            for i in 0..n {
                let row = &mut s[i * n..(i + 1) * n];
                row[i + 1..].fill(f64::NEG_INFINITY);
                softmax_in_place(&mut row[..]);
            }
            let mut o = vec![0.0; n * dh];
            gemm(n, n, dh, 1.0, &s, false, &v, false, 0.0, &mut o);
            for i in 0..n {
                attn[i * d + head * dh..i * d + (head + 1) * dh].copy_from_slice(&o[i * dh..(i + 1) * dh]);
            }
            probs.push(s);
        }
        let y = b.proj.forward(&attn, n);
        x.iter_mut().zip(&y).for_each(|(a, b)| *a += b);
        let (ln2_out, ln2) = b.ln2.forward(x, n);
        let hidden_pre = b.fc.forward(&ln2_out, n);
        let hidden: Vec<f64> = hidden_pre.iter().map(|&v| gelu(v)).collect();
        let y = b.out.forward(&hidden, n);
        x.iter_mut().zip(&y).for_each(|(a, b)| *a += b);
        BlockCache {
            ln1,
            ln1_out,
            qkv,
            probs,
            attn,
            ln2,
            ln2_out,
            hidden_pre,
            hidden,
        }
    }

    /// Back-propagates `dL/dlogits` through the whole network.
    pub fn backward(&mut self, cache: &ForwardCache, d_logits: &[f64]) {
        let n = cache.inputs.len();
        let d = self.cfg.embed_dim;
        let d_ln_f = self.head.backward(&cache.ln_f_out, d_logits, n);
        let mut dx = self.ln_f.backward(&cache.ln_f, &d_ln_f, n);
        for l in (0..self.blocks.len()).rev() {
            let (heads, dh) = (self.cfg.heads, d / self.cfg.heads);
            let bc = &cache.blocks[l];
            let b = &mut self.blocks[l];

            // MLP branch
            let mut d_hidden = b.out.backward(&bc.hidden, &dx, n);
            d_hidden.iter_mut().zip(&bc.hidden_pre).for_each(|(g, &v)| *g *= gelu_backward(v));
            let d_ln2 = b.fc.backward(&bc.ln2_out, &d_hidden, n);
            let d_mid = b.ln2.backward(&bc.ln2, &d_ln2, n);
            dx.iter_mut().zip(&d_mid).for_each(|(a, b)| *a += b);

            // attention branch
            let d_attn = b.proj.backward(&bc.attn, &dx, n);
            let mut d_qkv = vec![0.0; n * 3 * d];
            let scale = 1.0 / (dh as f64).sqrt();
            for head in 0..heads {
                let (q, k, v) = split_head(&bc.qkv, n, d, head, dh);
                let p = &bc.probs[head];
                let mut d_o = vec![0.0; n * dh];
                for i in 0..n {
                    d_o[i * dh..(i + 1) * dh].copy_from_slice(&d_attn[i * d + head * dh..i * d + (head + 1) * dh]);
                }
                let mut d_p = vec![0.0; n * n];
                gemm(n, dh, n, 1.0, &d_o, false, &v, true, 0.0, &mut d_p);
                let mut d_v = vec![0.0; n * dh];
                gemm(n, n, dh, 1.0, p, true, &d_o, false, 0.0, &mut d_v);
                // softmax backward, row by row
                let mut d_s = vec![0.0; n * n];
                for i in 0..n {
                    let pr = &p[i * n..(i + 1) * n];
                    let gr = &d_p[i * n..(i + 1) * n];
                    let dot: f64 = pr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for j in 0..=i {
                        d_s[i * n + j] = pr[j] * (gr[j] - dot);
                    }
                }
                let mut d_q = vec![0.0; n * dh];
                gemm(n, n, dh, scale, &d_s, false, &k, false, 0.0, &mut d_q);
                let mut d_k = vec![0.0; n * dh];
                gemm(n, n, dh, scale, &d_s, true, &q, false, 0.0, &mut d_k);
                for i in 0..n {
                    let row = &mut d_qkv[i * 3 * d..(i + 1) * 3 * d];
                    for c in 0..dh {
                        row[head * dh + c] += d_q[i * dh + c];
                        row[d + head * dh + c] += d_k[i * dh + c];
                        row[2 * d + head * dh + c] += d_v[i * dh + c];
                    }
                }
            }
            let d_ln1 = b.qkv.backward(&bc.ln1_out, &d_qkv, n);
            let d_in = b.ln1.backward(&bc.ln1, &d_ln1, n);
            dx.iter_mut().zip(&d_in).for_each(|(a, b)| *a += b);
        }
        for (t, &tok) in cache.inputs.iter().enumerate() {
            let g = &dx[t * d..(t + 1) * d];
            let te = &mut self.token_embedding.grad[tok as usize * d..(tok as usize + 1) * d];
            te.iter_mut().zip(g).for_each(|(a, b)| *a += b);
            let pe = &mut self.position_embedding.grad[t * d..(t + 1) * d];
            pe.iter_mut().zip(g).for_each(|(a, b)| *a += b);
        }
    }

    /// Prepends the start token.
    pub fn with_start(&self, tokens: &[u32]) -> Vec<u32> {
        let mut v = Vec::with_capacity(tokens.len() + 1);
        v.push(self.cfg.start_token());
        v.extend_from_slice(tokens);
        v
    }

    /// Teacher-forced summed NLL of `seq` and, if requested, its gradient
    /// accumulated (scaled by `grad_scale`) into the parameters.
    pub fn nll_and_grad(&mut self, seq: &TokenSequence, grad_scale: Option<f64>) -> Result<f64> {
        let v = self.cfg.vocab_size;
        seq.check_vocab(v)?;
        if seq.is_empty() {
            return Ok(0.0);
        }
        if seq.len() > self.cfg.context_length - 1 {
            return Err(Error::invalid(format!(
                "sequence length {} exceeds context length {} minus the start token",
                seq.len(),
                self.cfg.context_length
            )));
        }
        let n = seq.len();
        let inputs = self.with_start(&seq.tokens()[..n - 1]);
        let (mut logits, cache) = self.forward(&inputs)?;
        let mut nll = 0.0;
        for (i, &target) in seq.tokens().iter().enumerate() {
            let row = &mut logits[i * v..(i + 1) * v];
            softmax_in_place(row);
            nll -= row[target as usize].ln();
            if let Some(s) = grad_scale {
                row.iter_mut().for_each(|p| *p *= s);
                row[target as usize] -= s;
            }
        }
        if grad_scale.is_some() {
            self.backward(&cache, &logits);
        }
        Ok(nll)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_archive(path, CHECKPOINT_TAG, &self.cfg, &self.params())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let arch = load_archive(path, CHECKPOINT_TAG)?;
        let cfg: TransformerConfig = arch.config_as()?;
        let mut model = Self::new(&cfg, &mut crate::seeded_rng(0))?;
        arch.restore(model.params_mut())?;
        Ok(model)
    }
}

fn split_head(qkv: &[f64], n: usize, d: usize, head: usize, dh: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut q = vec![0.0; n * dh];
    let mut k = vec![0.0; n * dh];
    let mut v = vec![0.0; n * dh];
    for i in 0..n {
        let row = &qkv[i * 3 * d..(i + 1) * 3 * d];
        q[i * dh..(i + 1) * dh].copy_from_slice(&row[head * dh..(head + 1) * dh]);
        k[i * dh..(i + 1) * dh].copy_from_slice(&row[d + head * dh..d + (head + 1) * dh]);
        v[i * dh..(i + 1) * dh].copy_from_slice(&row[2 * d + head * dh..2 * d + (head + 1) * dh]);
    }
    (q, k, v)
}

/// Per-layer keys and values of the tokens decoded so far.
pub struct KvCache {
    keys: Vec<Vec<f64>>,
    values: Vec<Vec<f64>>,
    len: usize,
}

impl Transformer {
    pub fn kv_cache(&self) -> KvCache {
        KvCache {
            keys: vec![Vec::new(); self.blocks.len()],
            values: vec![Vec::new(); self.blocks.len()],
            len: 0,
        }
    }

    /// Feeds one token at the next position and returns its `V` logits.
    pub fn step(&self, token: u32, cache: &mut KvCache) -> Result<Vec<f64>> {
        let t = cache.len;
        if t >= self.cfg.context_length {
            return Err(Error::invalid("context length exhausted"));
        }
        TokenSequence(vec![token]).check_vocab(self.cfg.vocab_size + 1)?;
        let d = self.cfg.embed_dim;
        let (h, dh) = (self.cfg.heads, d / self.cfg.heads);
        let scale = 1.0 / (dh as f64).sqrt();
        let mut x: Vec<f64> = (0..d)
            .map(|j| self.token_embedding.value[token as usize * d + j] + self.position_embedding.value[t * d + j])
            .collect();
        for (l, b) in self.blocks.iter().enumerate() {
            let (a, _) = b.ln1.forward(&x, 1);
            let qkv = b.qkv.forward(&a, 1);
            cache.keys[l].extend_from_slice(&qkv[d..2 * d]);
            cache.values[l].extend_from_slice(&qkv[2 * d..]);
            let keys = &cache.keys[l];
            let vals = &cache.values[l];
            let mut attn = vec![0.0; d];
            for head in 0..h {
                let q = &qkv[head * dh..(head + 1) * dh];
                let mut s: Vec<f64> = (0..=t)
                    .map(|j| {
                        let k = &keys[j * d + head * dh..j * d + (head + 1) * dh];
                        scale * q.iter().zip(k).map(|(a, b)| a * b).sum::<f64>()
                    })
                    .collect();
                softmax_in_place(&mut s);
                for (j, p) in s.iter().enumerate() {
                    let v = &vals[j * d + head * dh..j * d + (head + 1) * dh];
                    for c in 0..dh {
                        attn[head * dh + c] += p * v[c];
                    }
                }
            }
            let y = b.proj.forward(&attn, 1);
            x.iter_mut().zip(&y).for_each(|(a, b)| *a += b);
            let (a2, _) = b.ln2.forward(&x, 1);
            let hidden: Vec<f64> = b.fc.forward(&a2, 1).into_iter().map(gelu).collect();
            let y = b.out.forward(&hidden, 1);
            x.iter_mut().zip(&y).for_each(|(a, b)| *a += b);
        }
        cache.len += 1;
        let (xf, _) = self.ln_f.forward(&x, 1);
        Ok(self.head.forward(&xf, 1))
    }
}

impl Module for Transformer {
    fn params(&self) -> Vec<&Param> {
        let mut p = vec![&self.token_embedding, &self.position_embedding];
        for b in &self.blocks {
            p.extend([
                &b.ln1.gamma,
                &b.ln1.beta,
                &b.qkv.weight,
                &b.qkv.bias,
                &b.proj.weight,
                &b.proj.bias,
                &b.ln2.gamma,
                &b.ln2.beta,
                &b.fc.weight,
                &b.fc.bias,
                &b.out.weight,
                &b.out.bias,
            ]);
        }
        p.extend([&self.ln_f.gamma, &self.ln_f.beta, &self.head.weight, &self.head.bias]);
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = vec![&mut self.token_embedding, &mut self.position_embedding];
        for b in &mut self.blocks {
            p.extend([
                &mut b.ln1.gamma,
                &mut b.ln1.beta,
                &mut b.qkv.weight,
                &mut b.qkv.bias,
                &mut b.proj.weight,
                &mut b.proj.bias,
                &mut b.ln2.gamma,
                &mut b.ln2.beta,
                &mut b.fc.weight,
                &mut b.fc.bias,
                &mut b.out.weight,
                &mut b.out.bias,
            ]);
        }
        p.extend([
            &mut self.ln_f.gamma,
            &mut self.ln_f.beta,
            &mut self.head.weight,
            &mut self.head.bias,
        ]);
        p
    }
}
