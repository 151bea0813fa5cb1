//! One function per subcommand. Each reads only its declared inputs and
//! writes only into its output directory.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, ensure, Context, Result};
use log::{info, warn};
use serde::{Deserialize, Serialize};
use udfgen::extraction::{extract_dense_cloud, DecodedField, ExtractionReport};
use udfgen::geometry::io::{load_points, load_shape, obj_string, ply_string};
use udfgen::geometry::synthetic::{make_synthetic_dataset_with, shell_count};
use udfgen::geometry::{
    curate_internal, ground_truth_udf, normalize_shape, sample_surface, sample_training_queries, voxelize,
    CurationConfig, SyntheticConfig, UdfSampleSet, VoxelGrid,
};
use udfgen::metrics::{chamfer, evaluate, interior_stats, GenerationReport, InteriorStats};
use udfgen::transformer::{
    generate, read_token_dataset, train_transformer, write_token_dataset, TokenSequence, Transformer, TransformerConfig,
};
use udfgen::vqudf::{train_vqudf, write_loss_csv, LatentGrid, LossRecord, Vqudf, VqudfConfig};
use udfgen::{seeded_rng, Vec3};

use crate::config::RunConfig;
use crate::output::{derive_seed, read_json, FileRef, OutDir, Provenance};

const STREAM_SYNTHETIC: u64 = 1;
const STREAM_PREPARE: u64 = 2;
const STREAM_VQUDF: u64 = 3;
const STREAM_TRANSFORMER: u64 = 4;
const STREAM_SAMPLER: u64 = 5;
const STREAM_EXTRACTION: u64 = 6;
const STREAM_METRICS: u64 = 7;
const STREAM_RECONSTRUCT: u64 = 8;

pub const DATASET_MANIFEST: &str = "manifest.json";
pub const VQUDF_CHECKPOINT: &str = "vqudf.safetensors";
pub const TRANSFORMER_CHECKPOINT: &str = "transformer.safetensors";
pub const TOKENS_FILE: &str = "tokens.tok";
pub const REPORT_FILE: &str = "report.json";

const SHAPE_EXTENSIONS: [&str; 5] = ["obj", "off", "ply", "xyz", "txt"];
const CLOUD_EXTENSIONS: [&str; 3] = ["ply", "xyz", "txt"];
/// Decoded fields are stored on a cell-centered grid of this resolution.
const DECODED_GRID: usize = 32;
pub const INTERIOR_RESOLUTION: usize = 32;
pub const INTERIOR_CLOSING: usize = 2;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SyntheticEntry {
    pub id: String,
    pub shells: Option<usize>,
    pub file: FileRef,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SyntheticManifest {
    pub provenance: Provenance,
    pub shapes: Vec<SyntheticEntry>,
}

pub fn make_synthetic(cfg: &RunConfig, count: Option<usize>, out: &Path) -> Result<SyntheticManifest> {
    let out = OutDir::create(out)?;
    let s = &cfg.synthetic;
    let count = count.unwrap_or(s.count);
    ensure!(count >= 1, "synthetic count must be at least 1");
    let shapes = make_synthetic_dataset_with(
        count,
        derive_seed(cfg.seed, STREAM_SYNTHETIC),
        &SyntheticConfig {
            min_shells: s.min_shells,
            max_shells: s.max_shells,
            sphere_level: s.sphere_level,
        },
    );
    let mut entries = Vec::with_capacity(shapes.len());
    for shape in &shapes {
        let file = out.write(&format!("{}.obj", shape.id), obj_string(shape).as_bytes())?;
        entries.push(SyntheticEntry {
            id: shape.id.clone(),
            shells: shell_count(&shape.id),
            file,
        });
    }
    let manifest = SyntheticManifest {
        provenance: Provenance::new("make-synthetic", cfg),
        shapes: entries,
    };
    out.write_json(DATASET_MANIFEST, &manifest)?;
    info!("wrote {count} synthetic shapes");
    Ok(manifest)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurationSummary {
    pub interior_point_count: usize,
    pub total_point_count: usize,
    pub interior_fraction: f64,
    pub accepted: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeRecord {
    pub id: String,
    pub source: FileRef,
    pub curation: Option<CurationSummary>,
    /// Whether the shape is part of the training split.
    pub included: bool,
    pub voxels: Option<FileRef>,
    pub udf: Option<FileRef>,
    pub surface: Option<FileRef>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub provenance: Provenance,
    pub records: Vec<ShapeRecord>,
    /// Ids of the training split, in order.
    pub split: Vec<String>,
    pub warnings: Vec<String>,
}

fn list_files(dir: &Path, extensions: &[&str]) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| extensions.contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect();
    files.sort();
    Ok(files)
}

pub fn prepare(cfg: &RunConfig, input: Option<&Path>, out: &Path) -> Result<DatasetManifest> {
    let input = input
        .map(Path::to_path_buf)
        .or_else(|| cfg.data.input_dir.clone())
        .ok_or_else(|| anyhow!("prepare needs --input or data.input_dir"))?;
    let files = list_files(&input, &SHAPE_EXTENSIONS)?;
    ensure!(!files.is_empty(), "no shape files found in {}", input.display());
    let out = OutDir::create(out)?;
    let d = &cfg.data;
    let clamp = cfg.vqudf.model.decoder.clamp;
    let base = derive_seed(cfg.seed, STREAM_PREPARE);
    let mut records = Vec::new();
    let mut split = Vec::new();
    let mut warnings = Vec::new();
    for (index, file) in files.iter().enumerate() {
        let source = FileRef::of(file)?;
        let shape = match load_shape(file).and_then(|s| normalize_shape(&s)) {
            Ok(s) => s,
            Err(e) => {
                let msg = format!("skipping {}: {e}", source.name);
                warn!("{msg}");
                warnings.push(msg);
                continue;
            }
        };
        let id = shape.id.clone();
        let seed = derive_seed(base, index as u64);
        let curation = if d.curate {
            let cc = CurationConfig {
                threshold: d.curation_threshold,
                samples: d.curation_samples,
                seed,
            };
            match curate_internal(&shape, &cc) {
                Ok(r) => Some(CurationSummary {
                    interior_point_count: r.interior_point_count,
                    total_point_count: r.total_point_count,
                    interior_fraction: r.interior_fraction(),
                    accepted: r.accepted,
                }),
                Err(e) => {
                    let msg = format!("skipping {id}: curation failed ({e}); set data.curate = false for point clouds");
                    warn!("{msg}");
                    warnings.push(msg);
                    continue;
                }
            }
        } else {
            None
        };
        let included = curation.as_ref().map_or(true, |c| c.accepted);
        let mut record = ShapeRecord {
            id: id.clone(),
            source,
            curation,
            included,
            voxels: None,
            udf: None,
            surface: None,
        };
        if included {
            let mut rng = seeded_rng(seed);
            let built = (|| -> udfgen::Result<(Vec<Vec3>, VoxelGrid, UdfSampleSet)> {
                let surface = sample_surface(&shape, d.surface_points, &mut rng)?;
                let grid = voxelize(&surface, d.voxel_resolution)?;
                let queries = sample_training_queries(&shape, d.udf_queries, &d.query, &mut rng)?;
                let udf = ground_truth_udf(&shape, &queries.points, clamp)?;
                Ok((surface, grid, udf))
            })();
            match built {
                Ok((surface, grid, udf)) => {
                    let mut vox = Vec::new();
                    grid.write_to(&mut vox)?;
                    record.voxels = Some(out.write(&format!("voxels/{id}.vox"), &vox)?);
                    let mut bytes = Vec::new();
                    udf.write_to(&mut bytes)?;
                    record.udf = Some(out.write(&format!("udf/{id}.udf"), &bytes)?);
                    record.surface = Some(out.write(&format!("surface/{id}.ply"), ply_string(&surface).as_bytes())?);
                    split.push(id.clone());
                }
                Err(e) => {
                    let msg = format!("skipping {id}: {e}");
                    warn!("{msg}");
                    warnings.push(msg);
                    record.included = false;
                }
            }
        }
        records.push(record);
    }
    let manifest = DatasetManifest {
        provenance: Provenance::new("prepare", cfg),
        records,
        split,
        warnings,
    };
    out.write_json(DATASET_MANIFEST, &manifest)?;
    info!(
        "prepared {} shapes, {} in the training split, {} warnings",
        manifest.records.len(),
        manifest.split.len(),
        manifest.warnings.len()
    );
    if manifest.split.is_empty() {
        bail!("prepared dataset is empty: no shape passed loading and curation");
    }
    Ok(manifest)
}

/// Loads the training split of a prepared dataset, verifying file hashes.
pub fn load_dataset(dir: &Path) -> Result<(DatasetManifest, Vec<(String, VoxelGrid, UdfSampleSet)>)> {
    let manifest: DatasetManifest = read_json(&dir.join(DATASET_MANIFEST))?;
    let mut out = Vec::with_capacity(manifest.split.len());
    for id in &manifest.split {
        let rec = manifest
            .records
            .iter()
            .find(|r| &r.id == id)
            .ok_or_else(|| anyhow!("manifest split lists unknown shape {id}"))?;
        let read = |f: &Option<FileRef>, what: &str| -> Result<Vec<u8>> {
            let f = f.as_ref().ok_or_else(|| anyhow!("shape {id} has no {what} file"))?;
            let bytes = fs::read(dir.join(&f.name)).with_context(|| format!("reading {}", f.name))?;
            ensure!(
                crate::output::sha256_bytes(&bytes) == f.sha256,
                "{} does not match the hash recorded in the manifest",
                f.name
            );
            Ok(bytes)
        };
        let grid = VoxelGrid::read_from(&read(&rec.voxels, "voxel")?[..])?;
        let udf = UdfSampleSet::read_from(&read(&rec.udf, "udf")?[..])?;
        out.push((id.clone(), grid, udf));
    }
    ensure!(!out.is_empty(), "dataset in {} has an empty training split", dir.display());
    Ok((manifest, out))
}

fn dims_diff(pairs: &[(&str, usize, usize)]) -> Option<String> {
    let diffs: Vec<String> = pairs
        .iter()
        .filter(|(_, a, b)| a != b)
        .map(|(name, a, b)| format!("{name}: config {a}, checkpoint {b}"))
        .collect();
    (!diffs.is_empty()).then(|| diffs.join("; "))
}

fn check_vqudf(run: &VqudfConfig, ckpt: &VqudfConfig) -> Result<()> {
    let diff = dims_diff(&[
        ("input_resolution", run.encoder.input_resolution, ckpt.encoder.input_resolution),
        ("latent_resolution", run.encoder.latent_resolution, ckpt.encoder.latent_resolution),
        ("latent_channels", run.latent_channels(), ckpt.latent_channels()),
        ("codebook_size", run.codebook_size, ckpt.codebook_size),
    ]);
    match diff {
        Some(d) => bail!("vqudf config/checkpoint mismatch: {d}"),
        None => Ok(()),
    }
}

fn check_transformer(run: &TransformerConfig, ckpt: &TransformerConfig) -> Result<()> {
    let diff = dims_diff(&[
        ("layers", run.layers, ckpt.layers),
        ("heads", run.heads, ckpt.heads),
        ("embed_dim", run.embed_dim, ckpt.embed_dim),
        ("vocab_size", run.vocab_size, ckpt.vocab_size),
        ("sequence_length", run.sequence_length, ckpt.sequence_length),
    ]);
    match diff {
        Some(d) => bail!("transformer config/checkpoint mismatch: {d}"),
        None => Ok(()),
    }
}

fn load_vqudf(cfg: &RunConfig, path: &Path) -> Result<Vqudf> {
    ensure!(path.is_file(), "vqudf checkpoint {} not found", path.display());
    let model = Vqudf::load(path).with_context(|| format!("loading {}", path.display()))?;
    check_vqudf(&cfg.vqudf.model, &model.cfg)?;
    Ok(model)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VqudfRun {
    pub provenance: Provenance,
    pub dataset: FileRef,
    pub shapes: usize,
    pub checkpoint: FileRef,
    pub final_loss: Option<LossRecord>,
    pub reseeded_codes: usize,
}

pub fn train_vqudf_cmd(cfg: &RunConfig, data: &Path, out: &Path) -> Result<VqudfRun> {
    let (_, shapes) = load_dataset(data)?;
    let expected = cfg.vqudf.model.encoder.input_resolution;
    if let Some((id, g, _)) = shapes.iter().find(|(_, g, _)| g.resolution != expected) {
        bail!(
            "shape {id} was voxelized at {}^3 but vqudf.model.encoder.input_resolution is {expected}",
            g.resolution
        );
    }
    let out = OutDir::create(out)?;
    let pairs: Vec<(VoxelGrid, UdfSampleSet)> = shapes.into_iter().map(|(_, g, u)| (g, u)).collect();
    let train = cfg.vqudf.train_config(derive_seed(cfg.seed, STREAM_VQUDF));
    info!("training vqudf on {} shapes for {} steps", pairs.len(), train.steps);
    let outcome = train_vqudf(&pairs, &cfg.vqudf.model, &train)?;
    let tmp = out.path(".vqudf.partial");
    outcome.model.save(&tmp)?;
    let bytes = fs::read(&tmp)?;
    fs::remove_file(&tmp)?;
    let checkpoint = out.write(VQUDF_CHECKPOINT, &bytes)?;
    let mut csv = Vec::new();
    write_loss_csv(&mut csv, &outcome.curve)?;
    out.write("loss.csv", &csv)?;
    let run = VqudfRun {
        provenance: Provenance::new("train-vqudf", cfg),
        dataset: FileRef::of(&data.join(DATASET_MANIFEST))?,
        shapes: pairs.len(),
        checkpoint,
        final_loss: outcome.curve.last().copied(),
        reseeded_codes: outcome.reseeded_codes,
    };
    out.write_json("run.json", &run)?;
    Ok(run)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TokenRun {
    pub provenance: Provenance,
    pub checkpoint: FileRef,
    pub dataset: FileRef,
    pub ids: Vec<String>,
    pub sequence_length: usize,
    pub vocab_size: usize,
    pub tokens: FileRef,
}

pub fn tokenize_cmd(cfg: &RunConfig, data: &Path, checkpoint: &Path, out: &Path) -> Result<TokenRun> {
    let model = load_vqudf(cfg, checkpoint)?;
    let (_, shapes) = load_dataset(data)?;
    let out = OutDir::create(out)?;
    let mut seqs = Vec::with_capacity(shapes.len());
    let mut ids = Vec::with_capacity(shapes.len());
    for (id, grid, _) in &shapes {
        seqs.push(model.tokenize(grid).with_context(|| format!("tokenizing {id}"))?);
        ids.push(id.clone());
    }
    let mut bytes = Vec::new();
    write_token_dataset(&mut bytes, &seqs)?;
    let tokens = out.write(TOKENS_FILE, &bytes)?;
    let run = TokenRun {
        provenance: Provenance::new("tokenize", cfg),
        checkpoint: FileRef::of(checkpoint)?,
        dataset: FileRef::of(&data.join(DATASET_MANIFEST))?,
        ids,
        sequence_length: model.cfg.sequence_length(),
        vocab_size: model.cfg.codebook_size,
        tokens,
    };
    out.write_json("tokens.json", &run)?;
    Ok(run)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TransformerRun {
    pub provenance: Provenance,
    pub tokens: FileRef,
    pub sequences: usize,
    pub checkpoint: FileRef,
    pub final_nll_per_token: Option<f64>,
}

fn read_tokens(path: &Path) -> Result<Vec<TokenSequence>> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(read_token_dataset(&bytes[..])?)
}

pub fn train_transformer_cmd(cfg: &RunConfig, tokens: &Path, out: &Path) -> Result<TransformerRun> {
    let seqs = read_tokens(tokens)?;
    let model_cfg = cfg.transformer.model_config(&cfg.vqudf.model);
    if let Some(s) = seqs.iter().find(|s| s.len() != model_cfg.sequence_length) {
        bail!(
            "token sequences have length {} but the vqudf config implies {} (latent_resolution^3)",
            s.len(),
            model_cfg.sequence_length
        );
    }
    let out = OutDir::create(out)?;
    let train = cfg.transformer.train_config(derive_seed(cfg.seed, STREAM_TRANSFORMER));
    info!("training transformer on {} sequences for {} steps", seqs.len(), train.steps);
    let outcome = train_transformer(&seqs, &model_cfg, &train)?;
    let tmp = out.path(".transformer.partial");
    outcome.model.save(&tmp)?;
    let bytes = fs::read(&tmp)?;
    fs::remove_file(&tmp)?;
    let checkpoint = out.write(TRANSFORMER_CHECKPOINT, &bytes)?;
    let mut csv = String::from("step,nll_per_token\n");
    for (i, v) in outcome.curve.iter().enumerate() {
        csv.push_str(&format!("{i},{v:.8e}\n"));
    }
    out.write("loss.csv", csv.as_bytes())?;
    let run = TransformerRun {
        provenance: Provenance::new("train-transformer", cfg),
        tokens: FileRef::of(tokens)?,
        sequences: seqs.len(),
        checkpoint,
        final_nll_per_token: outcome.curve.last().copied(),
    };
    out.write_json("run.json", &run)?;
    Ok(run)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GeneratedShape {
    pub index: usize,
    pub distinct_tokens: usize,
    pub cloud: Option<FileRef>,
    pub decoded_udf: FileRef,
    pub extraction: Option<ExtractionReport>,
    pub interior: Option<InteriorStats>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GenerateRun {
    pub provenance: Provenance,
    pub vqudf: FileRef,
    pub transformer: FileRef,
    pub tokens: FileRef,
    pub shapes: Vec<GeneratedShape>,
}

fn decoded_grid_points() -> Vec<Vec3> {
    let r = DECODED_GRID;
    let c = |i: usize| (i as f64 + 0.5) / r as f64 - 0.5;
    let mut pts = Vec::with_capacity(r * r * r);
    for i in 0..r {
        for j in 0..r {
            for k in 0..r {
                pts.push(Vec3::new(c(i), c(j), c(k)));
            }
        }
    }
    pts
}

fn extract(cfg: &RunConfig, vq: &Vqudf, zq: &LatentGrid, seed: u64) -> udfgen::Result<udfgen::extraction::ExtractedCloud> {
    let ext = cfg.extraction.config(seed);
    let field = DecodedField::new(&vq.decoder, zq, ext.gradient_mode, ext.gradient_step)?;
    extract_dense_cloud(&field, &ext)
}

pub fn generate_cmd(
    cfg: &RunConfig,
    vqudf: &Path,
    transformer: &Path,
    count: usize,
    out: &Path,
) -> Result<GenerateRun> {
    ensure!(count >= 1, "generate count must be at least 1");
    let vq = load_vqudf(cfg, vqudf)?;
    ensure!(transformer.is_file(), "transformer checkpoint {} not found", transformer.display());
    let lt = Transformer::load(transformer).with_context(|| format!("loading {}", transformer.display()))?;
    check_transformer(&cfg.transformer.model_config(&vq.cfg), &lt.cfg)?;
    let out = OutDir::create(out)?;
    let grid_points = decoded_grid_points();
    let mut shapes = Vec::with_capacity(count);
    let mut seqs = Vec::with_capacity(count);
    for i in 0..count {
        let sampler = cfg.transformer.sampler(lt.cfg.vocab_size, derive_seed(derive_seed(cfg.seed, STREAM_SAMPLER), i as u64));
        let tokens = generate(&lt, &sampler)?;
        let mut distinct = tokens.tokens().to_vec();
        distinct.sort_unstable();
        distinct.dedup();
        let zq = vq.dequantize(&tokens)?;
        let udf = UdfSampleSet {
            distances: vq.decode(&zq, &grid_points)?,
            points: grid_points.clone(),
            clamp_value: vq.cfg.decoder.clamp,
        };
        let mut bytes = Vec::new();
        udf.write_to(&mut bytes)?;
        let decoded_udf = out.write(&format!("udf/gen-{i:03}.udf"), &bytes)?;
        let seed = derive_seed(derive_seed(cfg.seed, STREAM_EXTRACTION), i as u64);
        let shape = match extract(cfg, &vq, &zq, seed) {
            Ok(cloud) => GeneratedShape {
                index: i,
                distinct_tokens: distinct.len(),
                cloud: Some(out.write(&format!("clouds/gen-{i:03}.ply"), ply_string(&cloud.points).as_bytes())?),
                decoded_udf,
                extraction: Some(cloud.report),
                interior: Some(interior_stats(&cloud.points, INTERIOR_RESOLUTION, INTERIOR_CLOSING)?),
                error: None,
            },
            Err(e) => {
                warn!("generation {i}: {e}");
                GeneratedShape {
                    index: i,
                    distinct_tokens: distinct.len(),
                    cloud: None,
                    decoded_udf,
                    extraction: None,
                    interior: None,
                    error: Some(e.to_string()),
                }
            }
        };
        info!(
            "generation {i}: {} points, interior fraction {:.3}",
            shape.extraction.as_ref().map_or(0, |r| r.output_points),
            shape.interior.map_or(0.0, |s| s.interior_fraction)
        );
        shapes.push(shape);
        seqs.push(tokens);
    }
    ensure!(
        shapes.iter().any(|s| s.cloud.is_some()),
        "no generated field had an extractable surface"
    );
    let mut bytes = Vec::new();
    write_token_dataset(&mut bytes, &seqs)?;
    let tokens = out.write(TOKENS_FILE, &bytes)?;
    let run = GenerateRun {
        provenance: Provenance::new("generate", cfg),
        vqudf: FileRef::of(vqudf)?,
        transformer: FileRef::of(transformer)?,
        tokens,
        shapes,
    };
    out.write_json("generate.json", &run)?;
    Ok(run)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReconstructRun {
    pub provenance: Provenance,
    pub checkpoint: FileRef,
    pub shape: FileRef,
    pub tokens: Vec<u32>,
    pub cloud: FileRef,
    pub extraction: ExtractionReport,
    /// Chamfer distance between the reconstruction and the input's surface samples.
    pub chamfer: f64,
}

pub fn reconstruct_cmd(cfg: &RunConfig, checkpoint: &Path, shape_path: &Path, out: &Path) -> Result<ReconstructRun> {
    let vq = load_vqudf(cfg, checkpoint)?;
    let shape = normalize_shape(&load_shape(shape_path)?)?;
    let seed = derive_seed(cfg.seed, STREAM_RECONSTRUCT);
    let surface = sample_surface(&shape, cfg.data.surface_points, &mut seeded_rng(seed))?;
    let grid = voxelize(&surface, vq.cfg.encoder.input_resolution)?;
    let tokens = vq.tokenize(&grid)?;
    let zq = vq.dequantize(&tokens)?;
    let cloud = extract(cfg, &vq, &zq, derive_seed(seed, STREAM_EXTRACTION))?;
    let out = OutDir::create(out)?;
    let stem = shape_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "shape".into());
    let file = out.write(&format!("{stem}.ply"), ply_string(&cloud.points).as_bytes())?;
    let run = ReconstructRun {
        provenance: Provenance::new("reconstruct", cfg),
        checkpoint: FileRef::of(checkpoint)?,
        shape: FileRef::of(shape_path)?,
        tokens: tokens.0,
        cloud: file,
        chamfer: chamfer(&cloud.points, &surface)?,
        extraction: cloud.report,
    };
    out.write_json(&format!("{stem}.json"), &run)?;
    Ok(run)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvaluateRun {
    pub provenance: Provenance,
    pub report: GenerationReport,
    pub rendered: String,
    pub generated: Vec<FileRef>,
    pub reference: Vec<FileRef>,
}

fn load_cloud_dir(dir: &Path) -> Result<(Vec<Vec<Vec3>>, Vec<FileRef>)> {
    let files = list_files(dir, &CLOUD_EXTENSIONS)?;
    ensure!(!files.is_empty(), "no point cloud files (.ply/.xyz) in {}", dir.display());
    let mut clouds = Vec::with_capacity(files.len());
    let mut refs = Vec::with_capacity(files.len());
    for f in &files {
        clouds.push(load_points(f).with_context(|| format!("loading {}", f.display()))?);
        refs.push(FileRef::of(f)?);
    }
    Ok((clouds, refs))
}

pub fn evaluate_cmd(cfg: &RunConfig, generated: &Path, reference: &Path, out: &Path) -> Result<EvaluateRun> {
    let (g, gref) = load_cloud_dir(generated)?;
    let (r, rref) = load_cloud_dir(reference)?;
    let report = evaluate(&g, &r, &cfg.metrics.config(derive_seed(cfg.seed, STREAM_METRICS)))?;
    let out = OutDir::create(out)?;
    let run = EvaluateRun {
        provenance: Provenance::new("evaluate", cfg),
        rendered: report.render(),
        report,
        generated: gref,
        reference: rref,
    };
    out.write_json(REPORT_FILE, &run)?;
    println!("{}", run.rendered);
    Ok(run)
}
