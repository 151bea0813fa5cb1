use rand::Rng;
use udfgen::nn::Module;
use udfgen::seeded_rng;
use udfgen::transformer::{
    generate, next_token_distribution, sequence_nll, train_transformer, SamplerConfig, TokenSequence, Transformer,
    TransformerConfig, TransformerTrainConfig,
};

fn tiny(vocab: usize, len: usize) -> TransformerConfig {
    TransformerConfig {
        layers: 1,
        heads: 2,
        embed_dim: 8,
        vocab_size: vocab,
        sequence_length: len,
        context_length: len + 1,
    }
}

fn random_seq(v: usize, n: usize, seed: u64) -> TokenSequence {
    let mut rng = seeded_rng(seed);
    TokenSequence((0..n).map(|_| rng.gen_range(0..v as u32)).collect())
}

#[test]
fn distributions_are_normalized() {
    let cfg = TransformerConfig::desk(16, 27);
    let model = Transformer::new(&cfg, &mut seeded_rng(1)).unwrap();
    for n in [0, 1, 5, 26] {
        let p = next_token_distribution(&random_seq(16, n, n as u64), &model).unwrap();
        assert_eq!(p.len(), 16);
        assert!(p.iter().all(|&x| x >= 0.0));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }
}

#[test]
fn prefix_longer_than_context_is_rejected() {
    let cfg = TransformerConfig::desk(16, 8);
    let model = Transformer::new(&cfg, &mut seeded_rng(1)).unwrap();
    assert!(next_token_distribution(&random_seq(16, 8, 0), &model).is_ok());
    assert!(next_token_distribution(&random_seq(16, 9, 0), &model).is_err());
    assert!(sequence_nll(&random_seq(16, 9, 0), &model).is_err());
}

#[test]
fn out_of_vocab_tokens_are_rejected() {
    let cfg = TransformerConfig::desk(16, 8);
    let model = Transformer::new(&cfg, &mut seeded_rng(1)).unwrap();
    // the start token id is not a valid payload token
    assert!(sequence_nll(&TokenSequence(vec![1, 16]), &model).is_err());
    assert!(next_token_distribution(&TokenSequence(vec![16]), &model).is_err());
}

#[test]
fn config_invariants() {
    let mut cfg = TransformerConfig::desk(16, 8);
    cfg.heads = 3;
    assert!(cfg.validate().is_err());
    let mut cfg = TransformerConfig::desk(16, 8);
    cfg.context_length = 8;
    assert!(cfg.validate().is_err());
}

#[test]
fn causal_masking() {
    let cfg = TransformerConfig::desk(16, 12);
    let model = Transformer::new(&cfg, &mut seeded_rng(2)).unwrap();
    let long = random_seq(16, 10, 3);
    let (logits, _) = model.forward(&model.with_start(long.tokens())).unwrap();
    for i in 0..long.len() {
        let direct = next_token_distribution(&TokenSequence(long.tokens()[..i].to_vec()), &model).unwrap();
        let mut sliced = logits[i * 16..(i + 1) * 16].to_vec();
        udfgen::nn::softmax_in_place(&mut sliced);
        for (a, b) in direct.iter().zip(&sliced) {
            assert!((a - b).abs() < 1e-6, "position {i}");
        }
    }
    // perturbing token j leaves every row up to j untouched
    for j in 0..long.len() {
        let mut other = long.clone();
        other.0[j] = (other.0[j] + 5) % 16;
        let (l2, _) = model.forward(&model.with_start(other.tokens())).unwrap();
        // row r sees inputs 0..=r, token j sits at input j + 1
        assert_eq!(logits[..(j + 1) * 16], l2[..(j + 1) * 16]);
        assert_ne!(logits[(j + 1) * 16..], l2[(j + 1) * 16..]);
    }
}

#[test]
fn uniform_model_nll() {
    let cfg = TransformerConfig::desk(64, 64);
    let mut model = Transformer::new(&cfg, &mut seeded_rng(4)).unwrap();
    model.force_uniform();
    for n in [1, 17, 64] {
        let nll = sequence_nll(&random_seq(64, n, n as u64), &model).unwrap();
        assert!((nll - n as f64 * 64f64.ln()).abs() < 1e-4);
    }
}

#[test]
fn empty_sequence_has_zero_nll() {
    let model = Transformer::new(&TransformerConfig::desk(8, 4), &mut seeded_rng(0)).unwrap();
    assert_eq!(sequence_nll(&TokenSequence(vec![]), &model).unwrap(), 0.0);
}

#[test]
fn nll_is_sum_of_next_token_terms() {
    let cfg = TransformerConfig::desk(16, 20);
    let model = Transformer::new(&cfg, &mut seeded_rng(5)).unwrap();
    let seq = random_seq(16, 20, 6);
    let nll = sequence_nll(&seq, &model).unwrap();
    assert!(nll >= 0.0);
    let sum: f64 = (0..seq.len())
        .map(|i| {
            let p = next_token_distribution(&TokenSequence(seq.tokens()[..i].to_vec()), &model).unwrap();
            -p[seq.tokens()[i] as usize].ln()
        })
        .sum();
    assert!((nll - sum).abs() < 1e-5, "{nll} vs {sum}");
}

#[test]
fn incremental_decoding_matches_full_forward() {
    let cfg = TransformerConfig::desk(16, 12);
    let model = Transformer::new(&cfg, &mut seeded_rng(7)).unwrap();
    let inputs = model.with_start(random_seq(16, 12, 8).tokens());
    let (logits, _) = model.forward(&inputs).unwrap();
    let mut cache = model.kv_cache();
    for (i, &t) in inputs.iter().enumerate() {
        let row = model.step(t, &mut cache).unwrap();
        for (a, b) in row.iter().zip(&logits[i * 16..(i + 1) * 16]) {
            assert!((a - b).abs() < 1e-10);
        }
    }
    assert!(model.step(0, &mut cache).is_err());
}

#[test]
fn analytic_gradients_match_central_differences() {
    let cfg = tiny(5, 6);
    let mut model = Transformer::new(&cfg, &mut seeded_rng(9)).unwrap();
    // break the unit LayerNorm scale so its gradient is non-trivial
    let mut rng = seeded_rng(10);
    for p in model.params_mut() {
        for v in &mut p.value {
            *v += 0.1 * rng.gen_range(-1.0..1.0);
        }
    }
    let seq = random_seq(5, 6, 11);
    model.zero_grad();
    model.nll_and_grad(&seq, Some(1.0)).unwrap();
    let analytic: Vec<Vec<f64>> = model.params().iter().map(|p| p.grad.clone()).collect();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for (pi, grads) in analytic.iter().enumerate() {
        for j in 0..grads.len() {
            let orig = model.params()[pi].value[j];
            model.params_mut()[pi].value[j] = orig + h;
            let up = sequence_nll(&seq, &model).unwrap();
            model.params_mut()[pi].value[j] = orig - h;
            let down = sequence_nll(&seq, &model).unwrap();
            model.params_mut()[pi].value[j] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = grads[j];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-4);
            worst = worst.max(err);
            assert!(err <= 1e-3, "{} [{j}]: analytic {a} numeric {numeric}", model.params()[pi].name);
        }
    }
    eprintln!("worst relative gradient error {worst:.2e}");
}

#[test]
fn zero_steps_returns_initialization_and_training_is_deterministic() {
    let cfg = tiny(8, 10);
    let data: Vec<_> = (0..3).map(|i| random_seq(8, 10, i)).collect();
    let train = TransformerTrainConfig {
        steps: 0,
        seed: 3,
        ..Default::default()
    };
    let out = train_transformer(&data, &cfg, &train).unwrap();
    assert_eq!(out.model, Transformer::new(&cfg, &mut seeded_rng(3)).unwrap());
    assert!(out.curve.is_empty());

    let train = TransformerTrainConfig {
        steps: 30,
        batch_size: 2,
        ..train
    };
    let a = train_transformer(&data, &cfg, &train).unwrap();
    let b = train_transformer(&data, &cfg, &train).unwrap();
    assert_eq!(a.curve, b.curve);
    assert_eq!(a.model, b.model);
}

#[test]
fn training_rejects_bad_datasets() {
    let cfg = tiny(8, 10);
    let train = TransformerTrainConfig::default();
    assert!(train_transformer(&[], &cfg, &train).is_err());
    let ragged = vec![random_seq(8, 10, 0), random_seq(8, 9, 1)];
    assert!(train_transformer(&ragged, &cfg, &train).is_err());
}

#[test]
fn memorizes_one_sequence_and_greedy_replays_it() {
    let cfg = TransformerConfig::desk(16, 27);
    let seq = random_seq(16, 27, 12);
    let train = TransformerTrainConfig {
        steps: 300,
        lr: 3e-3,
        ..Default::default()
    };
    let out = train_transformer(std::slice::from_ref(&seq), &cfg, &train).unwrap();
    let nll = sequence_nll(&seq, &out.model).unwrap();
    assert!(nll < 0.05 * seq.len() as f64, "nll {nll}");
    for i in 0..seq.len() {
        let p = next_token_distribution(&TokenSequence(seq.tokens()[..i].to_vec()), &out.model).unwrap();
        let argmax = (0..16).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap();
        assert_eq!(argmax as u32, seq.tokens()[i]);
    }
    assert_eq!(generate(&out.model, &SamplerConfig::greedy(0)).unwrap(), seq);
    // top_k = 1 ignores both seed and temperature
    let k1 = SamplerConfig {
        temperature: 3.0,
        top_k: Some(1),
        seed: 99,
    };
    assert_eq!(generate(&out.model, &k1).unwrap(), seq);
}

#[test]
fn sampling_is_seeded_and_stays_in_vocabulary() {
    let cfg = TransformerConfig::desk(16, 64);
    let model = Transformer::new(&cfg, &mut seeded_rng(13)).unwrap();
    let s = SamplerConfig {
        temperature: 1.0,
        top_k: None,
        seed: 5,
    };
    let a = generate(&model, &s).unwrap();
    assert_eq!(a, generate(&model, &s).unwrap());
    assert_eq!(a.len(), 64);
    assert!(a.tokens().iter().all(|&t| t < 16));
    let other = generate(&model, &SamplerConfig { seed: 6, ..s.clone() }).unwrap();
    assert_ne!(a, other);
    let d = SamplerConfig::for_vocab(16, 0);
    assert_eq!(d.top_k, Some(4));
    assert_eq!(d.temperature, 1.0);
}

#[test]
fn sampler_validation() {
    let model = Transformer::new(&TransformerConfig::desk(16, 4), &mut seeded_rng(0)).unwrap();
    for bad in [
        SamplerConfig { temperature: 0.0, top_k: None, seed: 0 },
        SamplerConfig { temperature: 1.0, top_k: Some(0), seed: 0 },
        SamplerConfig { temperature: 1.0, top_k: Some(17), seed: 0 },
    ] {
        assert!(generate(&model, &bad).is_err());
    }
}

#[test]
fn checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("lt.safetensors");
    let model = Transformer::new(&TransformerConfig::desk(16, 8), &mut seeded_rng(14)).unwrap();
    model.save(&path).unwrap();
    let back = Transformer::load(&path).unwrap();
    assert_eq!(model, back);
    let bytes = std::fs::read(&path).unwrap();
    model.save(&path).unwrap();
    assert_eq!(bytes, std::fs::read(&path).unwrap());
    assert!(udfgen::vqudf::Vqudf::load(&path).is_err());
}
