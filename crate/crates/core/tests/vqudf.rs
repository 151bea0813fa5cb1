use udfgen::geometry::synthetic::nested_spheres;
use udfgen::geometry::{ground_truth_udf, sample_surface, sample_training_queries, voxelize, QueryConfig, UdfSampleSet, VoxelGrid};
use rand::Rng;
use udfgen::nn::Module;
use udfgen::vqudf::{
    train_vqudf, DecoderConfig, EncoderConfig, LatentGrid, OutputActivation, TrainConfig, Vqudf, VqudfConfig,
};
use udfgen::{seeded_rng, Error};

fn tiny() -> VqudfConfig {
    VqudfConfig {
        encoder: EncoderConfig {
            input_resolution: 8,
            num_scales: 2,
            channels_per_scale: vec![2, 3],
            latent_resolution: 4,
        },
        decoder: DecoderConfig {
            hidden_widths: vec![8, 8],
            output_activation: OutputActivation::Softplus,
            clamp: 0.1,
        },
        codebook_size: 4,
        beta: 0.7,
        dead_code_patience: 200,
    }
}

fn shape_data(resolution: usize, queries: usize, seed: u64) -> (VoxelGrid, UdfSampleSet) {
    let shape = nested_spheres(0.2, 0.4, 2);
    let mut rng = seeded_rng(seed);
    let surf = sample_surface(&shape, 4000, &mut rng).unwrap();
    let grid = voxelize(&surf, resolution).unwrap();
    let q = sample_training_queries(&shape, queries, &QueryConfig::default(), &mut rng).unwrap();
    (grid, ground_truth_udf(&shape, &q.points, 0.1).unwrap())
}

#[test]
fn straight_through_copies_reconstruction_gradient() {
    let (grid, samples) = shape_data(32, 256, 1);
    let mut model = Vqudf::new(&VqudfConfig::default(), &mut seeded_rng(2)).unwrap();
    let g = model.accumulate_gradients(&grid, &samples).unwrap();
    assert_eq!(g.d_z_recon, g.d_zq_recon);
    assert!(g.d_z_recon.iter().any(|&v| v != 0.0));
}

/// The training loss with the token assignment frozen: the decoder sees
/// `z(theta) + (zq0 - z0)`, which has the value of `zq0` and the derivative
/// of `z`, matching the straight-through estimator.
fn surrogate(model: &Vqudf, grid: &VoxelGrid, samples: &UdfSampleSet, z0: &LatentGrid, zq0: &LatentGrid, tokens: &[u32]) -> f64 {
    let z = model.encode(grid).unwrap();
    let c = z.channels;
    let m = z.values.len() as f64;
    let shifted: Vec<f64> = (0..z.values.len()).map(|i| z.values[i] + (zq0.values[i] - z0.values[i])).collect();
    let st = LatentGrid {
        values: shifted,
        quantized: true,
        ..zq0.clone()
    };
    let pred = model.decoder.decode(&st, &samples.points).unwrap();
    let recon: f64 = pred.iter().zip(&samples.distances).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / pred.len() as f64;
    let mut codebook = 0.0;
    let mut commit = 0.0;
    for (cell, &t) in tokens.iter().enumerate() {
        let e = model.codebook.entry(t as usize);
        for j in 0..c {
            let i = cell * c + j;
            codebook += (z0.values[i] - e[j]).powi(2);
            commit += (z.values[i] - zq0.values[j + cell * c]).powi(2);
        }
    }
    recon + codebook / m + model.cfg.beta * commit / m
}

#[test]
fn full_model_gradients_match_central_differences() {
    let cfg = tiny();
    let (grid, samples) = shape_data(8, 64, 3);
    let mut model = Vqudf::new(&cfg, &mut seeded_rng(4)).unwrap();
    // zero conv biases put empty-voxel activations exactly on the ReLU kink
    let mut rng = seeded_rng(5);
    for p in model.params_mut() {
        for v in &mut p.value {
            *v += 0.05 * rng.gen_range(-1.0..1.0);
        }
    }
    model.zero_grad();
    let g = model.accumulate_gradients(&grid, &samples).unwrap();
    let analytic: Vec<Vec<f64>> = model.params().iter().map(|p| p.grad.clone()).collect();
    let h = 1e-6;
    let mut checked = 0;
    for (pi, grads) in analytic.iter().enumerate() {
        for j in 0..grads.len() {
            let orig = model.params()[pi].value[j];
            model.params_mut()[pi].value[j] = orig + h;
            let up = surrogate(&model, &grid, &samples, &g.z, &g.zq, g.tokens.tokens());
            model.params_mut()[pi].value[j] = orig - h;
            let down = surrogate(&model, &grid, &samples, &g.z, &g.zq, g.tokens.tokens());
            model.params_mut()[pi].value[j] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = grads[j];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            assert!(err <= 1e-3, "{}[{j}]: analytic {a} numeric {numeric}", model.params()[pi].name);
            checked += 1;
        }
    }
    assert_eq!(checked, model.num_params());
}

#[test]
fn tokens_fill_the_latent_grid() {
    let (grid, _) = shape_data(32, 16, 5);
    let cfg = VqudfConfig::default();
    let model = Vqudf::new(&cfg, &mut seeded_rng(6)).unwrap();
    let t = model.tokenize(&grid).unwrap();
    assert_eq!(t.len(), 512);
    assert_eq!(cfg.sequence_length(), 512);
    assert!(t.tokens().iter().all(|&v| (v as usize) < cfg.codebook_size));
    assert_eq!(t, model.tokenize(&grid).unwrap());
    let zq = model.dequantize(&t).unwrap();
    assert!(zq.quantized);
    assert!(model.tokenize(&VoxelGrid::empty(16)).is_err());
}

#[test]
fn zero_steps_and_determinism() {
    let cfg = tiny();
    let data = vec![shape_data(8, 200, 7)];
    let train = TrainConfig {
        steps: 0,
        seed: 9,
        queries_per_step: 32,
        ..Default::default()
    };
    let out = train_vqudf(&data, &cfg, &train).unwrap();
    assert_eq!(out.model, Vqudf::new(&cfg, &mut seeded_rng(9)).unwrap());
    assert!(out.curve.is_empty());
    let train = TrainConfig { steps: 25, ..train };
    let a = train_vqudf(&data, &cfg, &train).unwrap();
    let b = train_vqudf(&data, &cfg, &train).unwrap();
    assert_eq!(a.curve, b.curve);
    assert_eq!(a.model, b.model);
}

#[test]
fn training_reduces_reconstruction_error() {
    let data = vec![shape_data(32, 4000, 10)];
    let train = TrainConfig {
        steps: 500,
        queries_per_step: 512,
        ..Default::default()
    };
    let out = train_vqudf(&data, &VqudfConfig::default(), &train).unwrap();
    let head: f64 = out.curve[..10].iter().map(|r| r.recon).sum::<f64>() / 10.0;
    let tail: f64 = out.curve[490..].iter().map(|r| r.recon).sum::<f64>() / 10.0;
    assert!(tail < 0.2 * head, "recon {head} -> {tail}");
    assert!(out.curve.iter().all(|r| r.total.is_finite()));
}

#[test]
fn idle_codes_get_reseeded() {
    let mut cfg = tiny();
    cfg.codebook_size = 16;
    cfg.dead_code_patience = 5;
    let data = vec![shape_data(8, 200, 11)];
    let train = TrainConfig {
        steps: 40,
        queries_per_step: 32,
        ..Default::default()
    };
    let out = train_vqudf(&data, &cfg, &train).unwrap();
    assert!(out.reseeded_codes > 0);
}

#[test]
fn training_input_errors() {
    let cfg = tiny();
    let train = TrainConfig::default();
    assert!(train_vqudf(&[], &cfg, &train).is_err());
    let (grid, _) = shape_data(8, 10, 12);
    let empty = UdfSampleSet {
        points: vec![],
        distances: vec![],
        clamp_value: 0.1,
    };
    assert!(train_vqudf(&[(grid, empty)], &cfg, &train).is_err());
}

#[test]
fn checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("vq.safetensors");
    let model = Vqudf::new(&tiny(), &mut seeded_rng(13)).unwrap();
    model.save(&path).unwrap();
    assert_eq!(Vqudf::load(&path).unwrap(), model);
    let bytes = std::fs::read(&path).unwrap();
    model.save(&path).unwrap();
    assert_eq!(bytes, std::fs::read(&path).unwrap());
    assert!(udfgen::transformer::Transformer::load(&path).is_err());
    std::fs::write(&path, b"garbage").unwrap();
    assert!(Vqudf::load(&path).is_err());
    assert!(matches!(Vqudf::load(&dir.path().join("missing")), Err(Error::Io(_))));
}
