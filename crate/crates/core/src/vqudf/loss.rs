use crate::error::{Error, Result};
use crate::geometry::UdfSampleSet;

use super::LatentGrid;

/// Loss values and the gradients each term sends to its inputs.
#[derive(Clone, Debug)]
pub struct VqLoss {
    /// Mean squared UDF error.
    pub recon: f64,
    /// `mean((sg[z] - zq)^2)`, trains the codebook.
    pub codebook: f64,
    /// `mean((sg[zq] - z)^2)`, unweighted; trains the encoder.
    pub commitment: f64,
    pub beta: f64,
    pub total: f64,
    pub d_pred: Vec<f64>,
    /// Gradient of `beta * commitment` w.r.t. `z`.
    pub d_z_commit: Vec<f64>,
    /// Gradient of `codebook` w.r.t. `zq`.
    pub d_zq_codebook: Vec<f64>,
}

impl VqLoss {
    /// Codebook plus weighted commitment, as logged.
    pub fn commit_total(&self) -> f64 {
        self.codebook + self.beta * self.commitment
    }
}

/// Reconstruction error plus the two stop-gradient commitment terms. The
/// squared norms are averaged over grid elements so the terms stay
/// comparable across grid sizes.
pub fn vqudf_loss(pred: &[f64], target: &UdfSampleSet, z: &LatentGrid, zq: &LatentGrid, beta: f64) -> Result<VqLoss> {
    if pred.len() != target.len() {
        return Err(Error::LengthMismatch {
            expected: target.len(),
            actual: pred.len(),
        });
    }
    if z.values.len() != zq.values.len() {
        return Err(Error::LengthMismatch {
            expected: z.values.len(),
            actual: zq.values.len(),
        });
    }
    let n = pred.len().max(1) as f64;
    let mut recon = 0.0;
    let mut d_pred = Vec::with_capacity(pred.len());
    for (p, t) in pred.iter().zip(&target.distances) {
        let e = p - t;
        recon += e * e;
        d_pred.push(2.0 * e / n);
    }
    recon /= n;

    let m = z.values.len().max(1) as f64;
    let mut sq = 0.0;
    let mut d_z_commit = Vec::with_capacity(z.values.len());
    let mut d_zq_codebook = Vec::with_capacity(z.values.len());
    for (a, b) in z.values.iter().zip(&zq.values) {
        let e = a - b;
        sq += e * e;
        d_z_commit.push(2.0 * beta * e / m);
        d_zq_codebook.push(-2.0 * e / m);
    }
    let codebook = sq / m;
    let commitment = sq / m;
    Ok(VqLoss {
        recon,
        codebook,
        commitment,
        beta,
        total: recon + codebook + beta * commitment,
        d_pred,
        d_z_commit,
        d_zq_codebook,
    })
}

/// Straight-through estimator: the reconstruction gradient at the quantized
/// grid is copied verbatim to the continuous grid.
pub fn straight_through(d_zq_recon: &[f64]) -> Vec<f64> {
    d_zq_recon.to_vec()
}
