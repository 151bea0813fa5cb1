//! Run configuration: one TOML file with a section per pipeline stage.
//!
//! Every key has a default, so an empty file is a valid desk-scale run.
//! Environment variables prefixed `FF_` override keys after the file is
//! read: the rest of the name is split on `__` into a key path and
//! lowercased, and the value is parsed as a TOML literal (falling back to
//! a plain string). `FF_VQUDF__STEPS=500` sets `vqudf.steps`,
//! `FF_VQUDF__MODEL__ENCODER__LATENT_RESOLUTION=4` sets the nested key.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};
use udfgen::extraction::{ExtractionConfig, GradientMode};
use udfgen::geometry::QueryConfig;
use udfgen::metrics::MetricsConfig;
use udfgen::transformer::{SamplerConfig, TransformerConfig, TransformerTrainConfig};
use udfgen::vqudf::{TrainConfig, VqudfConfig};

pub const ENV_PREFIX: &str = "FF_";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub data: DataSection,
    pub synthetic: SyntheticSection,
    pub vqudf: VqudfSection,
    pub transformer: TransformerSection,
    pub extraction: ExtractionSection,
    pub metrics: MetricsSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            data: DataSection::default(),
            synthetic: SyntheticSection::default(),
            vqudf: VqudfSection::default(),
            transformer: TransformerSection::default(),
            extraction: ExtractionSection::default(),
            metrics: MetricsSection::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    /// Directory of `.obj`/`.off`/`.ply`/`.xyz` shapes for `prepare`.
    pub input_dir: Option<PathBuf>,
    /// Surface points sampled per shape before voxelization.
    pub surface_points: usize,
    pub voxel_resolution: usize,
    /// Ground-truth UDF samples stored per shape.
    pub udf_queries: usize,
    pub query: QueryConfig,
    /// Keep only shapes that pass the interior-structure filter.
    pub curate: bool,
    pub curation_threshold: f64,
    pub curation_samples: usize,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            input_dir: None,
            surface_points: 10_000,
            voxel_resolution: 32,
            udf_queries: 20_000,
            query: QueryConfig::default(),
            curate: true,
            curation_threshold: 0.05,
            curation_samples: 2000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSection {
    pub count: usize,
    pub min_shells: usize,
    pub max_shells: usize,
    pub sphere_level: u32,
}

impl Default for SyntheticSection {
    fn default() -> Self {
        Self {
            count: 20,
            min_shells: 2,
            max_shells: 3,
            sphere_level: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VqudfSection {
    pub model: VqudfConfig,
    pub steps: usize,
    pub lr: f64,
    pub queries_per_step: usize,
    pub grad_clip: Option<f64>,
}

impl Default for VqudfSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            model: VqudfConfig::default(),
            steps: 3000,
            lr: t.lr,
            queries_per_step: t.queries_per_step,
            grad_clip: t.grad_clip,
        }
    }
}

impl VqudfSection {
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            steps: self.steps,
            lr: self.lr,
            queries_per_step: self.queries_per_step,
            seed,
            grad_clip: self.grad_clip,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransformerSection {
    pub layers: usize,
    pub heads: usize,
    pub embed_dim: usize,
    pub steps: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub grad_clip: Option<f64>,
    pub temperature: f64,
    /// Defaults to a quarter of the codebook; set it to the codebook size
    /// to sample from the full distribution.
    pub top_k: Option<usize>,
}

impl Default for TransformerSection {
    fn default() -> Self {
        let t = TransformerTrainConfig::default();
        Self {
            layers: 2,
            heads: 2,
            embed_dim: 64,
            steps: t.steps,
            lr: t.lr,
            batch_size: t.batch_size,
            grad_clip: t.grad_clip,
            temperature: 1.0,
            top_k: None,
        }
    }
}

impl TransformerSection {
    pub fn model_config(&self, vq: &VqudfConfig) -> TransformerConfig {
        let len = vq.sequence_length();
        TransformerConfig {
            layers: self.layers,
            heads: self.heads,
            embed_dim: self.embed_dim,
            vocab_size: vq.codebook_size,
            sequence_length: len,
            context_length: len + 1,
        }
    }

    pub fn train_config(&self, seed: u64) -> TransformerTrainConfig {
        TransformerTrainConfig {
            steps: self.steps,
            lr: self.lr,
            batch_size: self.batch_size,
            seed,
            grad_clip: self.grad_clip,
        }
    }

    pub fn sampler(&self, vocab_size: usize, seed: u64) -> SamplerConfig {
        let mut s = SamplerConfig::for_vocab(vocab_size, seed);
        s.temperature = self.temperature;
        if self.top_k.is_some() {
            s.top_k = self.top_k;
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtractionSection {
    pub num_seeds: usize,
    pub projection_steps: usize,
    pub acceptance_eps: f64,
    pub densify_rounds: usize,
    pub densify_noise: f64,
    pub step_damping: f64,
    pub gradient_step: f64,
    pub gradient_mode: GradientMode,
}

impl Default for ExtractionSection {
    fn default() -> Self {
        let e = ExtractionConfig::default();
        Self {
            num_seeds: e.num_seeds,
            projection_steps: e.projection_steps,
            acceptance_eps: e.acceptance_eps,
            densify_rounds: e.densify_rounds,
            densify_noise: e.densify_noise,
            step_damping: e.step_damping,
            gradient_step: e.gradient_step,
            gradient_mode: e.gradient_mode,
        }
    }
}

impl ExtractionSection {
    pub fn config(&self, seed: u64) -> ExtractionConfig {
        ExtractionConfig {
            num_seeds: self.num_seeds,
            projection_steps: self.projection_steps,
            acceptance_eps: self.acceptance_eps,
            densify_rounds: self.densify_rounds,
            densify_noise: self.densify_noise,
            step_damping: self.step_damping,
            gradient_step: self.gradient_step,
            gradient_mode: self.gradient_mode,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsSection {
    pub points_per_cloud: usize,
    pub jsd_resolution: usize,
}

impl Default for MetricsSection {
    fn default() -> Self {
        let m = MetricsConfig::default();
        Self {
            points_per_cloud: m.points_per_cloud,
            jsd_resolution: m.jsd_resolution,
        }
    }
}

impl MetricsSection {
    pub fn config(&self, seed: u64) -> MetricsConfig {
        MetricsConfig {
            points_per_cloud: self.points_per_cloud,
            jsd_resolution: self.jsd_resolution,
            seed,
        }
    }
}

impl RunConfig {
    /// Reads the file (or starts from defaults), applies `FF_` overrides
    /// from `env`, then validates.
    pub fn load<I>(path: Option<&Path>, env: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut value = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                text.parse::<toml::Table>()
                    .with_context(|| format!("parsing config {}", p.display()))?
            }
            None => toml::Table::new(),
        };
        let mut overrides: Vec<(String, String)> =
            env.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
        overrides.sort();
        for (key, raw) in overrides {
            apply_override(&mut value, &key, &raw)?;
        }
        let cfg: RunConfig = toml::Value::Table(value)
            .try_into()
            .context("invalid configuration")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.data;
        if let Some(dir) = &d.input_dir {
            ensure!(dir.is_dir(), "data.input_dir {} is not a directory", dir.display());
        }
        ensure!(d.surface_points >= 1, "data.surface_points must be at least 1");
        ensure!(d.udf_queries >= 1, "data.udf_queries must be at least 1");
        ensure!(
            (0.0..=1.0).contains(&d.curation_threshold),
            "data.curation_threshold must lie in [0, 1], got {}",
            d.curation_threshold
        );
        ensure!(d.curation_samples >= 1, "data.curation_samples must be at least 1");
        ensure!(
            (0.0..=1.0).contains(&d.query.uniform_fraction),
            "data.query.uniform_fraction must lie in [0, 1]"
        );
        ensure!(
            !d.query.sigmas.is_empty() && d.query.sigmas.iter().all(|s| *s > 0.0),
            "data.query.sigmas must be a non-empty list of positive values"
        );

        let s = &self.synthetic;
        ensure!(
            s.min_shells >= 1 && s.min_shells <= s.max_shells,
            "synthetic shells need 1 <= min_shells <= max_shells, got {}..{}",
            s.min_shells,
            s.max_shells
        );

        let v = &self.vqudf;
        v.model.validate().context("vqudf.model")?;
        if v.model.encoder.input_resolution != d.voxel_resolution {
            bail!(
                "data.voxel_resolution ({}) must equal vqudf.model.encoder.input_resolution ({})",
                d.voxel_resolution,
                v.model.encoder.input_resolution
            );
        }
        ensure!(v.lr > 0.0, "vqudf.lr must be positive");
        ensure!(v.queries_per_step >= 1, "vqudf.queries_per_step must be at least 1");
        if v.model.codebook_size > u16::MAX as usize + 1 {
            bail!("vqudf.model.codebook_size must fit 16-bit token files");
        }

        let t = &self.transformer;
        t.model_config(&v.model).validate().context("transformer")?;
        ensure!(t.lr > 0.0, "transformer.lr must be positive");
        ensure!(t.batch_size >= 1, "transformer.batch_size must be at least 1");
        t.sampler(v.model.codebook_size, 0).validate(v.model.codebook_size).context("transformer sampler")?;

        self.extraction.config(0).validate().context("extraction")?;

        let m = &self.metrics;
        ensure!(m.points_per_cloud >= 1, "metrics.points_per_cloud must be at least 1");
        ensure!(m.jsd_resolution >= 2, "metrics.jsd_resolution must be at least 2");
        Ok(())
    }
}

fn apply_override(root: &mut toml::Table, var: &str, raw: &str) -> Result<()> {
    let path: Vec<String> = var[ENV_PREFIX.len()..].split("__").map(|s| s.to_lowercase()).collect();
    if path.iter().any(|s| s.is_empty()) {
        bail!("malformed override variable {var}");
    }
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut table = root;
    for key in parents {
        let entry = table
            .entry(key.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .with_context(|| format!("{var}: key {key} is not a section"))?;
    }
    table.insert(last.clone(), value);
    Ok(())
}
