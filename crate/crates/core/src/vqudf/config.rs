use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub input_resolution: usize,
    pub num_scales: usize,
    pub channels_per_scale: Vec<usize>,
    pub latent_resolution: usize,
}

impl EncoderConfig {
    /// 32^3 input, three scales of 16/32/16 channels, 8^3 x 64 latent grid.
    pub fn desk() -> Self {
        Self {
            input_resolution: 32,
            num_scales: 3,
            channels_per_scale: vec![16, 32, 16],
            latent_resolution: 8,
        }
    }

    /// 256^3 input and a 16^3 x 512 latent grid.
    pub fn full_scale() -> Self {
        Self {
            input_resolution: 256,
            num_scales: 5,
            channels_per_scale: vec![32, 64, 96, 128, 192],
            latent_resolution: 16,
        }
    }

    /// Channel count `C` of the concatenated latent grid.
    pub fn latent_channels(&self) -> usize {
        self.channels_per_scale.iter().sum()
    }

    /// Number of stride-2 stages needed to go from `R` to `K`.
    pub fn downsampling_stages(&self) -> Option<usize> {
        let (r, k) = (self.input_resolution, self.latent_resolution);
        if k == 0 || r % k != 0 || !(r / k).is_power_of_two() {
            return None;
        }
        Some((r / k).trailing_zeros() as usize)
    }

    pub fn strides(&self) -> Vec<usize> {
        let s = self.downsampling_stages().unwrap_or(0);
        (0..self.num_scales).map(|i| if i < s { 2 } else { 1 }).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_scales == 0 || self.channels_per_scale.len() != self.num_scales {
            return Err(Error::invalid(format!(
                "encoder: {} scales but {} channel counts",
                self.num_scales,
                self.channels_per_scale.len()
            )));
        }
        if self.channels_per_scale.contains(&0) {
            return Err(Error::invalid("encoder: channel counts must be positive"));
        }
        if self.latent_resolution < 2 || self.input_resolution < self.latent_resolution {
            return Err(Error::invalid("encoder: need 2 <= latent_resolution <= input_resolution"));
        }
        match self.downsampling_stages() {
            None => Err(Error::invalid(format!(
                "encoder: input resolution {} must be a power-of-two multiple of latent resolution {}",
                self.input_resolution, self.latent_resolution
            ))),
            Some(s) if s > self.num_scales => Err(Error::invalid(format!(
                "encoder: reaching {}^3 from {}^3 needs at least {s} scales",
                self.latent_resolution, self.input_resolution
            ))),
            Some(_) => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputActivation {
    Softplus,
    Relu,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecoderConfig {
    pub hidden_widths: Vec<usize>,
    pub output_activation: OutputActivation,
    /// Distance clamp shared with the data pipeline.
    pub clamp: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            hidden_widths: vec![128, 128, 128],
            output_activation: OutputActivation::Softplus,
            clamp: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VqudfConfig {
    pub encoder: EncoderConfig,
    pub decoder: DecoderConfig,
    pub codebook_size: usize,
    /// Weight of the encoder-side commitment term.
    pub beta: f64,
    /// Steps without use after which a code is re-seeded.
    pub dead_code_patience: usize,
}

impl Default for VqudfConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig::desk(),
            decoder: DecoderConfig::default(),
            codebook_size: 64,
            beta: 1.0,
            dead_code_patience: 200,
        }
    }
}

impl VqudfConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        if self.codebook_size < 2 {
            return Err(Error::invalid("codebook size must be at least 2"));
        }
        if self.codebook_size > u16::MAX as usize {
            return Err(Error::invalid("codebook size must fit 16-bit tokens"));
        }
        if !(self.decoder.clamp > 0.0) {
            return Err(Error::invalid("decoder clamp must be positive"));
        }
        if self.decoder.hidden_widths.contains(&0) {
            return Err(Error::invalid("decoder hidden widths must be positive"));
        }
        if !(self.beta >= 0.0) {
            return Err(Error::invalid("beta must be non-negative"));
        }
        Ok(())
    }

    pub fn latent_channels(&self) -> usize {
        self.encoder.latent_channels()
    }

    pub fn sequence_length(&self) -> usize {
        self.encoder.latent_resolution.pow(3)
    }
}
