//! Vector-quantized implicit UDF autoencoder.
//!
//! A voxelized point cloud goes through the multi-scale [`Encoder`] to a
//! continuous latent grid `Z`. Each cell of `Z` is snapped to its nearest
//! [`Codebook`] entry, giving `Ẑ` and one token per cell. The [`Decoder`]
//! regresses unsigned distances at arbitrary query points from `Ẑ`.

pub mod config;
pub mod decoder;
pub mod encoder;
pub mod grid;
pub mod loss;
pub mod quantizer;
pub mod train;

use std::path::Path;

use rand::Rng;

pub use config::{DecoderConfig, EncoderConfig, OutputActivation, VqudfConfig};
pub use decoder::{decode_udf, Decoder};
pub use encoder::Encoder;
pub use loss::{straight_through, vqudf_loss, VqLoss};
pub use quantizer::{dequantize, quantize, Codebook, LatentGrid};
pub use train::{train_vqudf, train_vqudf_from, write_loss_csv, LossRecord, TrainConfig, TrainOutcome};

use crate::archive::{load_archive, save_archive};
use crate::error::Result;
use crate::geometry::{UdfSampleSet, Vec3, VoxelGrid};
use crate::nn::{Module, Param};
use crate::transformer::TokenSequence;

/// Checkpoint format tag.
pub const CHECKPOINT_TAG: &str = "vqudf/1";

#[derive(Clone, Debug, PartialEq)]
pub struct Vqudf {
    pub cfg: VqudfConfig,
    pub encoder: Encoder,
    pub codebook: Codebook,
    pub decoder: Decoder,
}

/// Output of one forward/backward pass.
#[derive(Clone, Debug)]
pub struct StepGradients {
    pub loss: VqLoss,
    pub tokens: TokenSequence,
    pub z: LatentGrid,
    pub zq: LatentGrid,
    /// Reconstruction gradient arriving at `Ẑ` from the decoder.
    pub d_zq_recon: Vec<f64>,
    /// Reconstruction gradient handed to the encoder output `Z`.
    pub d_z_recon: Vec<f64>,
}

impl Vqudf {
    pub fn new<R: Rng>(cfg: &VqudfConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let encoder = Encoder::new(&cfg.encoder, rng)?;
        let c = cfg.latent_channels();
        let codebook = Codebook::new(cfg.codebook_size, c, rng);
        let decoder = Decoder::new(&cfg.decoder, c, rng);
        Ok(Self {
            cfg: cfg.clone(),
            encoder,
            codebook,
            decoder,
        })
    }

    pub fn encode(&self, grid: &VoxelGrid) -> Result<LatentGrid> {
        self.encoder.encode(grid)
    }

    pub fn tokenize(&self, grid: &VoxelGrid) -> Result<TokenSequence> {
        Ok(quantize(&self.encode(grid)?, &self.codebook)?.1)
    }

    pub fn dequantize(&self, tokens: &TokenSequence) -> Result<LatentGrid> {
        dequantize(tokens, &self.codebook, self.cfg.encoder.latent_resolution)
    }

    pub fn decode(&self, zq: &LatentGrid, points: &[Vec3]) -> Result<Vec<f64>> {
        decode_udf(zq, points, &self.decoder)
    }

    /// Runs the full loss on one shape and accumulates gradients into every
    /// parameter (encoder, codebook, decoder). Does not zero or step.
    pub fn accumulate_gradients(&mut self, grid: &VoxelGrid, batch: &UdfSampleSet) -> Result<StepGradients> {
        let (z, enc_cache) = self.encoder.forward(grid)?;
        let (zq, tokens) = quantize(&z, &self.codebook)?;
        let (pred, dec_cache) = self.decoder.forward(&zq, &batch.points)?;
        let loss = vqudf_loss(&pred, batch, &z, &zq, self.cfg.beta)?;
        let (d_zq_recon, _) = self.decoder.backward(&zq, &dec_cache, &loss.d_pred, false);
        let d_z_recon = straight_through(&d_zq_recon);
        let d_z: Vec<f64> = d_z_recon.iter().zip(&loss.d_z_commit).map(|(a, b)| a + b).collect();
        self.encoder.backward(&enc_cache, &d_z);

        let c = self.codebook.dim();
        for (cell, &t) in tokens.tokens().iter().enumerate() {
            let t = t as usize;
            let g = &mut self.codebook.entries.grad[t * c..(t + 1) * c];
            for (gv, d) in g.iter_mut().zip(&loss.d_zq_codebook[cell * c..(cell + 1) * c]) {
                *gv += d;
            }
        }
        Ok(StepGradients {
            loss,
            tokens,
            z,
            zq,
            d_zq_recon,
            d_z_recon,
        })
    }

    /// Index of the codebook tensor in [`Module::params`] order.
    pub fn codebook_param_index(&self) -> usize {
        self.encoder.params().len()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_archive(path, CHECKPOINT_TAG, &self.cfg, &self.params())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let arch = load_archive(path, CHECKPOINT_TAG)?;
        let cfg: VqudfConfig = arch.config_as()?;
        let mut model = Self::new(&cfg, &mut crate::seeded_rng(0))?;
        arch.restore(model.params_mut())?;
        Ok(model)
    }
}

impl Module for Vqudf {
    fn params(&self) -> Vec<&Param> {
        let mut p = self.encoder.params();
        p.push(&self.codebook.entries);
        p.extend(self.decoder.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.encoder.params_mut();
        p.push(&mut self.codebook.entries);
        p.extend(self.decoder.params_mut());
        p
    }
}
