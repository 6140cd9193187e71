use std::collections::BTreeMap;

use super::*;
use crate::autodiff::{cross_entropy, Tensor};
use crate::Error;

fn tiny_config() -> ModelConfig {
    ModelConfig {
        vocab_size: 3,
        model_dim: 2,
        n_layers: 1,
        n_heads: 1,
        ffn_dim: 3,
        max_seq_len: 2,
        rng_seed: 0,
    }
}

fn small_config() -> ModelConfig {
    ModelConfig {
        vocab_size: 16,
        model_dim: 8,
        n_layers: 1,
        n_heads: 2,
        ffn_dim: 12,
        max_seq_len: 6,
        rng_seed: 0,
    }
}

fn bits(p: &ModelParams) -> Vec<u64> {
    p.iter().flat_map(|(_, t)| t.data().iter().map(|v| v.to_bits())).collect()
}

// Straight-line reference for a single-head, single-layer model written
// without the graph engine.
fn reference_forward(p: &ModelParams, tokens: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let get = |n: &str| p.get(n).unwrap().data().to_vec();
    let d = p.config().model_dim;
    let f = p.config().ffn_dim;
    let v = p.config().vocab_size;
    let n = tokens.len();
    let matvec = |x: &[f64], w: &[f64], cols: usize| -> Vec<f64> {
        (0..cols).map(|j| x.iter().enumerate().map(|(i, xi)| xi * w[i * cols + j]).sum()).collect()
    };
    let ln = |x: &[f64], g: &[f64], b: &[f64]| -> Vec<f64> {
        let m = x.iter().sum::<f64>() / x.len() as f64;
        let var = x.iter().map(|a| (a - m).powi(2)).sum::<f64>() / x.len() as f64;
        x.iter().enumerate().map(|(i, a)| (a - m) / (var + 1e-5).sqrt() * g[i] + b[i]).collect()
    };
    let add = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x + y).collect() };
    let gelu = |x: f64| 0.5 * x * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (x + 0.044715 * x.powi(3))).tanh());

    let (te, pe) = (get("tok_emb"), get("pos_emb"));
    let mut xs: Vec<Vec<f64>> = (0..n)
        .map(|i| add(&te[tokens[i] * d..(tokens[i] + 1) * d], &pe[i * d..(i + 1) * d]))
        .collect();
    let l = |part: &str| get(&format!("layers.0.{part}"));
    let a: Vec<Vec<f64>> = xs.iter().map(|x| ln(x, &l("ln1.gamma"), &l("ln1.beta"))).collect();
    let q: Vec<Vec<f64>> = a.iter().map(|r| add(&matvec(r, &l("attn.wq"), d), &l("attn.bq"))).collect();
    let k: Vec<Vec<f64>> = a.iter().map(|r| add(&matvec(r, &l("attn.wk"), d), &l("attn.bk"))).collect();
    let vv: Vec<Vec<f64>> = a.iter().map(|r| add(&matvec(r, &l("attn.wv"), d), &l("attn.bv"))).collect();
    for i in 0..n {
        let s: Vec<f64> = (0..=i)
            .map(|j| q[i].iter().zip(&k[j]).map(|(x, y)| x * y).sum::<f64>() / (d as f64).sqrt())
            .collect();
        let mx = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = s.iter().map(|x| (x - mx).exp()).collect();
        let z: f64 = e.iter().sum();
        let mut o = vec![0.0; d];
        for j in 0..=i {
            for c in 0..d {
                o[c] += e[j] / z * vv[j][c];
            }
        }
        let o = add(&matvec(&o, &l("attn.wo"), d), &l("attn.bo"));
        xs[i] = add(&xs[i], &o);
    }
    for x in xs.iter_mut() {
        let m = ln(x, &l("ln2.gamma"), &l("ln2.beta"));
        let h: Vec<f64> = add(&matvec(&m, &l("ffn.w1"), f), &l("ffn.b1")).into_iter().map(gelu).collect();
        let o = add(&matvec(&h, &l("ffn.w2"), d), &l("ffn.b2"));
        *x = add(x, &o);
    }
    let hidden = ln(&xs[n - 1], &get("ln_f.gamma"), &get("ln_f.beta"));
    let logits = add(&matvec(&hidden, &get("out.w"), v), &get("out.b"));
    (logits, hidden)
}

#[test]
fn init_is_deterministic_and_seed_sensitive() {
    let cfg = small_config();
    let a = init_model(&cfg, 3).unwrap();
    let b = init_model(&cfg, 3).unwrap();
    let c = init_model(&cfg, 4).unwrap();
    assert_eq!(bits(&a), bits(&b));
    assert_ne!(bits(&a), bits(&c));
    assert_eq!(a.get("layers.0.ln1.gamma").unwrap().data(), &[1.0; 8]);
    assert_eq!(a.get("layers.0.attn.bq").unwrap().data(), &[0.0; 8]);
}

#[test]
fn head_dim_and_config_validation() {
    let mut cfg = ModelConfig::small(100);
    assert_eq!(cfg.head_dim(), 16);
    cfg.n_heads = 5;
    assert!(matches!(cfg.validate(), Err(Error::Input(_))));
    cfg.n_heads = 4;
    cfg.vocab_size = 1;
    assert!(cfg.validate().is_err());
}

#[test]
fn hand_computed_forward() {
    // Zero attention and FFN weights leave the residual stream equal to the
    // embeddings, so the logits reduce to layer-norm arithmetic.
    let cfg = tiny_config();
    let mut p = init_model(&cfg, 0).unwrap();
    for (name, t) in p.iter_mut() {
        if name.starts_with("layers.0.attn") || name.starts_with("layers.0.ffn") {
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
    }
    *p.get_mut("tok_emb").unwrap() = Tensor::matrix(3, 2, vec![1.0, 0.0, 0.0, 1.0, 2.0, 2.0]).unwrap();
    *p.get_mut("pos_emb").unwrap() = Tensor::zeros(&[2, 2]);
    *p.get_mut("out.w").unwrap() = Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, 0.0, 1.0, -1.0]).unwrap();
    *p.get_mut("out.b").unwrap() = Tensor::vector(vec![0.0, 0.0, 0.5]);

    let trace = forward(&p, &[1, 0]).unwrap();
    // last token embedding [1, 0] normalises to [c, -c]
    let c = 0.5 / (0.25f64 + 1e-5).sqrt();
    let expect_hidden = [c, -c];
    let expect_logits = [c, 2.0 * c - c, 3.0 * c + c + 0.5];
    for (a, b) in trace.hidden.data().iter().zip(expect_hidden) {
        assert!((a - b).abs() < 1e-14, "{a} vs {b}");
    }
    for (a, b) in trace.logits.data().iter().zip(expect_logits) {
        assert!((a - b).abs() < 1e-14, "{a} vs {b}");
    }
}

#[test]
fn forward_matches_reference_implementation() {
    for seed in 0..5 {
        let mut p = init_model(&tiny_config(), seed).unwrap();
        // exercise biases and layer-norm parameters too
        for (i, (_, t)) in p.iter_mut().enumerate() {
            for (j, v) in t.data_mut().iter_mut().enumerate() {
                *v += 0.05 * ((i * 7 + j * 3) as f64).sin();
            }
        }
        for tokens in [vec![2], vec![0, 1], vec![2, 2]] {
            let trace = forward(&p, &tokens).unwrap();
            let (logits, hidden) = reference_forward(&p, &tokens);
            for (a, b) in trace.logits.data().iter().zip(&logits) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
            for (a, b) in trace.hidden.data().iter().zip(&hidden) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn forward_shapes_determinism_and_errors() {
    let cfg = small_config();
    let p = init_model(&cfg, 1).unwrap();
    let before = p.checksum();
    let a = forward(&p, &[1, 2, 3]).unwrap();
    let b = forward(&p, &[1, 2, 3]).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.logits.shape(), &[16]);
    assert_eq!(a.hidden.shape(), &[8]);
    assert_eq!(p.checksum(), before);
    assert!(matches!(forward(&p, &[]), Err(Error::Input(_))));
    assert!(matches!(forward(&p, &[0; 7]), Err(Error::Input(_))));
    assert!(matches!(forward(&p, &[16]), Err(Error::Input(_))));
}

#[test]
fn causal_prefix_logits_unchanged() {
    let p = init_model(&small_config(), 2).unwrap();
    let prefix = [3, 1, 4];
    let short = sequence_logits(&p, &prefix).unwrap();
    for extra in 0..4 {
        let long = sequence_logits(&p, &[3, 1, 4, extra, 5]).unwrap();
        let v = 16;
        for (a, b) in short.data().iter().zip(&long.data()[..3 * v]) {
            assert!((a - b).abs() < 1e-12);
        }
    }
    let last = forward(&p, &prefix).unwrap();
    assert_eq!(last.logits.data(), &short.data()[2 * 16..3 * 16]);
}

#[test]
fn loss_matches_forward() {
    let p = init_model(&small_config(), 5).unwrap();
    let tokens = [1, 7, 2];
    let (loss, grads) = loss_and_grad(&p, &tokens, 9).unwrap();
    let trace = forward(&p, &tokens).unwrap();
    assert_eq!(loss, cross_entropy(trace.logits.data(), 9).unwrap());
    assert_eq!(grads.len(), p.iter().count());
    assert!(matches!(loss_and_grad(&p, &tokens, 16), Err(Error::Index(_))));
}

#[test]
fn model_gradient_matches_finite_differences() {
    let mut p = init_model(&small_config(), 9).unwrap();
    for (i, (_, t)) in p.iter_mut().enumerate() {
        for (j, v) in t.data_mut().iter_mut().enumerate() {
            *v += 0.1 * ((i * 13 + j) as f64 * 0.7).cos();
        }
    }
    let tokens = [4, 0, 11, 2];
    let (_, grads) = loss_and_grad(&p, &tokens, 6).unwrap();
    let eps = 1e-5;
    let mut worst: f64 = 0.0;
    let names: Vec<String> = p.iter().map(|(n, _)| n.clone()).collect();
    for name in names {
        let len = p.get(&name).unwrap().len();
        // every entry of small tensors, a stride through larger ones
        let stride = (len / 24).max(1);
        for i in (0..len).step_by(stride) {
            let orig = p.get(&name).unwrap().data()[i];
            p.get_mut(&name).unwrap().data_mut()[i] = orig + eps;
            let up = loss_and_grad(&p, &tokens, 6).unwrap().0;
            p.get_mut(&name).unwrap().data_mut()[i] = orig - eps;
            let down = loss_and_grad(&p, &tokens, 6).unwrap().0;
            p.get_mut(&name).unwrap().data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let analytic = grads.get(&name).unwrap().data()[i];
            let err = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-3);
            worst = worst.max(err);
        }
    }
    assert!(worst < 1e-6, "max relative error {worst}");
}

#[test]
fn sgd_step_examples() {
    let cfg = small_config();
    let mut p = init_model(&cfg, 0).unwrap();
    let (_, grads) = loss_and_grad(&p, &[1, 2], 3).unwrap();

    let before = p.clone();
    p.sgd_step(&grads, 0.0, Direction::Ascent).unwrap();
    assert_eq!(bits(&p), bits(&before));

    let name = "out.b";
    let w0 = p.get(name).unwrap().data()[3];
    let g0 = grads.get(name).unwrap().data()[3];
    p.sgd_step(&grads, 0.1, Direction::Ascent).unwrap();
    assert_eq!(p.get(name).unwrap().data()[3], w0 + 0.1 * g0);
    p.sgd_step(&grads, 0.1, Direction::Descent).unwrap();
    // (w + s) - s rounds back to w only to within an ulp in general
    for (((_, a), (_, b)), (_, g)) in p.iter().zip(before.iter()).zip(grads.iter()) {
        for ((x, y), gi) in a.data().iter().zip(b.data()).zip(g.data()) {
            let scale = y.abs() + (0.1 * gi).abs();
            assert!((x - y).abs() <= 2.0 * f64::EPSILON * scale);
        }
    }

    assert!(matches!(p.sgd_step(&grads, -1.0, Direction::Descent), Err(Error::Contract(_))));
    let other = init_model(&tiny_config(), 0).unwrap();
    let (_, wrong) = loss_and_grad(&other, &[1], 0).unwrap();
    assert!(matches!(p.sgd_step(&wrong, 0.1, Direction::Descent), Err(Error::Contract(_))));
}

#[test]
fn scalar_sgd_and_exact_inverse_on_dyadic_values() {
    let cfg = tiny_config();
    let mut p = init_model(&cfg, 0).unwrap();
    let names: Vec<String> = p.iter().map(|(n, _)| n.clone()).collect();
    for (_, t) in p.iter_mut() {
        t.data_mut().iter_mut().for_each(|v| *v = 1.0);
    }
    let grads = crate::autodiff::GradientSet::from_map(
        names
            .iter()
            .map(|n| (n.clone(), Tensor::filled(p.get(n).unwrap().shape(), 2.0)))
            .collect::<BTreeMap<_, _>>(),
    );
    p.sgd_step(&grads, 0.1, Direction::Ascent).unwrap();
    assert!(p.iter().all(|(_, t)| t.data().iter().all(|&v| v == 1.2)));

    for (_, t) in p.iter_mut() {
        t.data_mut().iter_mut().for_each(|v| *v = 0.75);
    }
    let before = bits(&p);
    p.sgd_step(&grads, 0.125, Direction::Ascent).unwrap();
    p.sgd_step(&grads, 0.125, Direction::Descent).unwrap();
    assert_eq!(bits(&p), before);
}

#[test]
fn snapshot_restore_is_bitwise() {
    let mut p = init_model(&small_config(), 1).unwrap();
    let snap = p.snapshot();
    assert_eq!(snap.checksum(), p.checksum());
    assert_eq!(p.snapshot().checksum(), snap.checksum());
    for (_, t) in p.iter_mut() {
        t.data_mut().iter_mut().for_each(|v| *v = *v * 1.5 + 0.25);
    }
    assert_ne!(p.checksum(), snap.checksum());
    p.restore(&snap).unwrap();
    assert_eq!(p.checksum(), snap.checksum());
    assert_eq!(bits(&p), bits(&init_model(&small_config(), 1).unwrap()));

    let other = init_model(&tiny_config(), 1).unwrap().snapshot();
    assert!(matches!(p.restore(&other), Err(Error::Integrity(_))));
}

#[test]
fn snapshot_ascent_restore_roundtrip() {
    let mut p = init_model(&small_config(), 4).unwrap();
    let start = bits(&p);
    for target in 0..5 {
        let snap = p.snapshot();
        let (_, grads) = loss_and_grad(&p, &[target, 1, 2], target + 3).unwrap();
        p.sgd_step(&grads, 0.5, Direction::Ascent).unwrap();
        forward(&p, &[1, 2]).unwrap();
        p.restore(&snap).unwrap();
    }
    assert_eq!(bits(&p), start);
}

fn toy_examples() -> Vec<Example> {
    (0..12)
        .map(|i| Example {
            tokens: vec![i % 16, (i * 5 + 1) % 16, 15],
            target: (i * 7) % 16,
        })
        .collect()
}

#[test]
fn training_reduces_loss_and_is_deterministic() {
    let cfg = small_config();
    let examples = toy_examples();
    let opts = TrainOptions {
        epochs: 6,
        lr: 0.05,
        seed: 11,
        start_epoch: 0,
    };
    let mut a = init_model(&cfg, 0).unwrap();
    let log = train(&mut a, &examples, &opts).unwrap();
    assert_eq!(log.epoch_losses.len(), 6);
    assert!(log.epoch_losses[1] <= log.epoch_losses[0]);
    assert!(log.epoch_losses[2] <= log.epoch_losses[1]);

    let mut b = init_model(&cfg, 0).unwrap();
    train(&mut b, &examples, &opts).unwrap();
    assert_eq!(bits(&a), bits(&b));

    let mut c = init_model(&cfg, 0).unwrap();
    assert!(matches!(
        train(&mut c, &examples, &TrainOptions { epochs: 0, ..opts }),
        Err(Error::Input(_))
    ));
    assert!(matches!(train(&mut c, &[], &opts), Err(Error::Input(_))));
}

#[test]
fn resumed_training_matches_uninterrupted() {
    let cfg = small_config();
    let examples = toy_examples();
    let full = TrainOptions {
        epochs: 4,
        lr: 0.05,
        seed: 2,
        start_epoch: 0,
    };
    let mut a = init_model(&cfg, 0).unwrap();
    train(&mut a, &examples, &full).unwrap();

    let mut b = init_model(&cfg, 0).unwrap();
    train(&mut b, &examples, &TrainOptions { epochs: 2, ..full }).unwrap();
    let bytes = checkpoint::encode(&Checkpoint {
        params: b,
        trained_epochs: 2,
    });
    let mut resumed = checkpoint::decode(&bytes).unwrap();
    train(
        &mut resumed.params,
        &examples,
        &TrainOptions {
            epochs: 2,
            start_epoch: 2,
            ..full
        },
    )
    .unwrap();
    assert_eq!(bits(&a), bits(&resumed.params));
}

#[test]
fn divergence_reports_epoch() {
    let cfg = small_config();
    let mut p = init_model(&cfg, 0).unwrap();
    let err = train(
        &mut p,
        &toy_examples(),
        &TrainOptions {
            epochs: 3,
            lr: 1e200,
            seed: 0,
            start_epoch: 0,
        },
    )
    .unwrap_err();
    assert!(matches!(err, Error::Divergence { epoch: 0, .. }), "{err}");
}

#[test]
fn checkpoint_roundtrip_and_corruption() {
    let p = init_model(&small_config(), 8).unwrap();
    let ckpt = Checkpoint {
        params: p.clone(),
        trained_epochs: 17,
    };
    let bytes = checkpoint::encode(&ckpt);
    assert_eq!(&bytes[..8], checkpoint::MAGIC);
    let back = checkpoint::decode(&bytes).unwrap();
    assert_eq!(back.trained_epochs, 17);
    assert_eq!(bits(&back.params), bits(&p));
    assert_eq!(back.params.checksum(), p.checksum());
    assert_eq!(checkpoint::encode(&back), bytes);

    let mut corrupt = bytes.clone();
    corrupt[100] ^= 1;
    assert!(matches!(checkpoint::decode(&corrupt), Err(Error::Integrity(_))));
    assert!(checkpoint::decode(&bytes[..20]).is_err());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    checkpoint::save(&path, &ckpt).unwrap();
    assert_eq!(checkpoint::load(&path).unwrap(), ckpt);
}
