use std::io::Write;

use log::{debug, info};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Vqudf, VqudfConfig};
use crate::error::{Error, Result};
use crate::geometry::{UdfSampleSet, VoxelGrid};
use crate::nn::{clip_grad_norm, Adam, AdamConfig, Module};
use crate::seeded_rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    pub lr: f64,
    /// Query points drawn (with replacement) from the shape's samples per step.
    pub queries_per_step: usize,
    pub seed: u64,
    pub grad_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            lr: 1e-3,
            queries_per_step: 1024,
            seed: 0,
            grad_clip: Some(1.0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: usize,
    pub recon: f64,
    pub commit: f64,
    pub total: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Vqudf,
    pub curve: Vec<LossRecord>,
    /// Total number of dead-code re-seedings.
    pub reseeded_codes: usize,
}

/// Initializes a model from `train.seed` and trains it.
pub fn train_vqudf(
    dataset: &[(VoxelGrid, UdfSampleSet)],
    cfg: &VqudfConfig,
    train: &TrainConfig,
) -> Result<TrainOutcome> {
    let model = Vqudf::new(cfg, &mut seeded_rng(train.seed))?;
    train_vqudf_from(model, dataset, train)
}

/// Joint training of encoder, codebook and decoder with batch size 1 (one
/// shape per step). Codes unused for `dead_code_patience` consecutive steps
/// are re-seeded from a random slice of the current encoder output.
pub fn train_vqudf_from(
    mut model: Vqudf,
    dataset: &[(VoxelGrid, UdfSampleSet)],
    train: &TrainConfig,
) -> Result<TrainOutcome> {
    if dataset.is_empty() {
        return Err(Error::invalid("training dataset is empty"));
    }
    if train.queries_per_step == 0 {
        return Err(Error::invalid("queries_per_step must be positive"));
    }
    if let Some(i) = dataset.iter().position(|(_, s)| s.is_empty()) {
        return Err(Error::invalid(format!("dataset entry {i} has no UDF samples")));
    }
    let mut rng = seeded_rng(train.seed.wrapping_add(0x5eed_0001));
    let mut opt = Adam::new(AdamConfig::with_lr(train.lr));
    let v = model.codebook.size();
    let c = model.codebook.dim();
    let patience = model.cfg.dead_code_patience.max(1);
    let codebook_slot = model.codebook_param_index();
    let mut last_used = vec![0usize; v];
    let mut curve = Vec::with_capacity(train.steps);
    let mut reseeded = 0;

    for step in 0..train.steps {
        let (grid, samples) = &dataset[rng.gen_range(0..dataset.len())];
        let batch = draw_batch(samples, train.queries_per_step, &mut rng);
        model.zero_grad();
        let out = model.accumulate_gradients(grid, &batch)?;
        let l = &out.loss;
        if !l.total.is_finite() {
            return Err(Error::Diverged {
                step,
                detail: format!("loss {} (recon {}, commit {})", l.total, l.recon, l.commit_total()),
            });
        }
        if let Some(max) = train.grad_clip {
            clip_grad_norm(&mut model.params_mut(), max);
        }
        opt.step(&mut model.params_mut());

        for &t in out.tokens.tokens() {
            last_used[t as usize] = step + 1;
        }
        for (code, used) in last_used.iter_mut().enumerate() {
            if step + 1 - *used >= patience {
                let cell = rng.gen_range(0..out.z.cells());
                model.codebook.entries.value[code * c..(code + 1) * c].copy_from_slice(out.z.slice(cell));
                opt.reset_rows(codebook_slot, code * c, (code + 1) * c);
                *used = step + 1;
                reseeded += 1;
            }
        }

        curve.push(LossRecord {
            step,
            recon: l.recon,
            commit: l.commit_total(),
            total: l.total,
        });
        if step % 100 == 0 || step + 1 == train.steps {
            debug!("vqudf step {step}: recon {:.3e} commit {:.3e}", l.recon, l.commit_total());
        }
    }
    if let Some(last) = curve.last() {
        info!(
            "vqudf trained {} steps: recon {:.3e}, total {:.3e}, {reseeded} codes re-seeded",
            train.steps, last.recon, last.total
        );
    }
    Ok(TrainOutcome {
        model,
        curve,
        reseeded_codes: reseeded,
    })
}

fn draw_batch<R: Rng>(samples: &UdfSampleSet, n: usize, rng: &mut R) -> UdfSampleSet {
    let mut points = Vec::with_capacity(n);
    let mut distances = Vec::with_capacity(n);
    for _ in 0..n {
        let i = rng.gen_range(0..samples.len());
        points.push(samples.points[i]);
        distances.push(samples.distances[i]);
    }
    UdfSampleSet {
        points,
        distances,
        clamp_value: samples.clamp_value,
    }
}

/// CSV with header `step,recon,commit,total`.
pub fn write_loss_csv<W: Write>(mut w: W, curve: &[LossRecord]) -> Result<()> {
    writeln!(w, "step,recon,commit,total")?;
    for r in curve {
        writeln!(w, "{},{:e},{:e},{:e}", r.step, r.recon, r.commit, r.total)?;
    }
    Ok(())
}
