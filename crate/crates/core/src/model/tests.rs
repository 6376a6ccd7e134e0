use super::*;
use crate::coref::CorefAnnotation;
use crate::corpus::{generate_synthetic, SyntheticCorpus};
use crate::dialogue::{Dialogue, Turn, Vocabulary, UNK};
use crate::error::Error;
use crate::numerics::{
    check_store_gradients, gradcheck::DEFAULT_TOLERANCE, DropoutCtx, Graph, RngState,
};

fn vocab() -> Vocabulary {
    Vocabulary::from_tokens(["a", "b", "c", "d", "e", "#A", "#B", ":"]).unwrap()
}

fn tiny(variant: Variant) -> ModelConfig {
    ModelConfig {
        d_model: 8,
        encoder_layers: 2,
        decoder_layers: 2,
        heads: 2,
        ffn: 12,
        max_len: 16,
        variant,
        dropout: 0.0,
        seed: 4,
        head_selection: if variant == Variant::Headrep {
            "0:1,1:0".parse().unwrap()
        } else {
            Default::default()
        },
        ..ModelConfig::default()
    }
}

fn clusters(n: usize) -> CorefInputs {
    let a = CorefAnnotation::from_pairs("x", &[&[(0, 0), (3, 3), (5, 6)], &[(1, 1), (4, 4)]]);
    CorefInputs::build(&a, n).unwrap()
}

const SRC: [usize; 7] = [9, 11, 4, 5, 6, 10, 11];

fn encode(m: &Summarizer, ids: &[usize], c: Option<&CorefInputs>) -> crate::numerics::Tensor {
    m.encode_tensor(ids, c).unwrap().0
}

#[test]
fn empty_clusters_collapse_to_base() {
    let base = Summarizer::new(tiny(Variant::Base), vocab()).unwrap();
    let expect = encode(&base, &SRC, None);
    for v in [Variant::Gnn, Variant::Attn, Variant::Headrep] {
        let m = Summarizer::new(tiny(v), vocab()).unwrap();
        for p in base.params.iter() {
            assert_eq!(
                &p.value,
                m.params.value(&p.name).unwrap(),
                "{v}: {}",
                p.name
            );
        }
        if v == Variant::Attn {
            assert_eq!(encode(&m, &SRC, None), expect, "{v}");
            let empty = CorefInputs::empty(SRC.len());
            assert_eq!(encode(&m, &SRC, Some(&empty)), expect, "{v}");
        }
    }
}

#[test]
fn gnn_lambda_one_is_base() {
    let base = Summarizer::new(tiny(Variant::Base), vocab()).unwrap();
    let mut m = Summarizer::new(tiny(Variant::Gnn), vocab()).unwrap();
    m.params
        .set_value(
            transformer::LAMBDA_NAME,
            crate::numerics::Tensor::scalar(1.0),
        )
        .unwrap();
    let c = clusters(SRC.len());
    assert_eq!(encode(&m, &SRC, Some(&c)), encode(&base, &SRC, None));
    let mut lam = m.clone();
    lam.params
        .set_value(
            transformer::LAMBDA_NAME,
            crate::numerics::Tensor::scalar(0.5),
        )
        .unwrap();
    assert_ne!(encode(&lam, &SRC, Some(&c)), encode(&base, &SRC, None));
}

#[test]
fn headrep_single_token_is_base() {
    let base = Summarizer::new(tiny(Variant::Base), vocab()).unwrap();
    let m = Summarizer::new(tiny(Variant::Headrep), vocab()).unwrap();
    let one = CorefInputs::empty(1);
    assert_eq!(encode(&m, &[7], Some(&one)), encode(&base, &[7], None));
    let c = clusters(SRC.len());
    assert_ne!(encode(&m, &SRC, Some(&c)), encode(&base, &SRC, None));
}

#[test]
fn encode_reports_maps_and_rejects_overlong() {
    let m = Summarizer::new(tiny(Variant::Headrep), vocab()).unwrap();
    let c = clusters(SRC.len());
    let (h, maps) = m.encode_tensor(&SRC, Some(&c)).unwrap();
    assert_eq!(h.shape(), [7, 8]);
    assert_eq!(maps.len(), 2);
    assert_eq!(maps[0].len(), 2);
    assert_eq!(&maps[0][1], c.attention.weights());
    assert_eq!(&maps[1][0], c.attention.weights());
    let long = vec![5; 17];
    assert!(matches!(
        m.encode_tensor(&long, None),
        Err(Error::TooLong { len: 17, max: 16 })
    ));
    assert!(m.encode_tensor(&SRC, Some(&CorefInputs::empty(6))).is_err());
}

#[test]
fn model_gradients_all_variants() {
    let c = clusters(SRC.len());
    for v in Variant::ALL {
        let skeleton = Summarizer::new(tiny(v), vocab()).unwrap();
        let mut store = skeleton.params.clone();
        let report = check_store_gradients(
            &mut store,
            |g: &mut Graph, params| {
                let mut m = skeleton.clone();
                m.params = params.clone();
                let mut rng = RngState::new(0);
                let mut drop = DropoutCtx {
                    p: 0.0,
                    training: false,
                    rng: &mut rng,
                };
                m.loss(g, &SRC, Some(&c), &[5, 6, 4], &mut drop)
            },
            DEFAULT_TOLERANCE,
        )
        .unwrap();
        assert!(report.passed, "{v}: {report:?}");
    }
}

#[test]
fn checkpoint_round_trip_is_exact() {
    for v in Variant::ALL {
        let mut m = Summarizer::new(tiny(v), vocab()).unwrap();
        for p in m.params.iter_mut() {
            for (k, x) in p.value.data_mut().iter_mut().enumerate() {
                *x += (k as f64 * 0.1).sin() / 3.0;
            }
        }
        if let Some(w) = m.lambda() {
            w.clamp(&mut m.params);
        }
        let text = save_checkpoint(&m).unwrap();
        let back = load_checkpoint(&text).unwrap();
        assert_eq!(save_checkpoint(&back).unwrap(), text);
        let c = clusters(SRC.len());
        assert_eq!(encode(&back, &SRC, Some(&c)), encode(&m, &SRC, Some(&c)));
        assert_eq!(back.config, m.config);
    }
}

#[test]
fn checkpoint_rejects_tampering() {
    let m = Summarizer::new(tiny(Variant::Attn), vocab()).unwrap();
    let text = save_checkpoint(&m).unwrap();
    let bad = text.replace("\"#A\"", "\"#Z\"");
    assert!(matches!(
        load_checkpoint(&bad),
        Err(Error::VocabMismatch { .. })
    ));
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v.as_object_mut().unwrap().remove("embed");
    assert!(load_checkpoint(&v.to_string()).is_err());
    assert!(load_checkpoint("{}").is_err());
}

#[test]
fn summarize_handles_unknown_tokens_and_caps_length() {
    let m = Summarizer::new(tiny(Variant::Attn), vocab()).unwrap();
    let d = Dialogue::new("x", vec![Turn::new("A", "zzz a b"), Turn::new("Q", "yyy")]);
    let (ids, _) = m.prepare_source(&d, None).unwrap();
    assert_eq!(ids[2], UNK);
    let out = m.summarize(&d, None, 5).unwrap();
    assert!(out.split_whitespace().count() <= 5);
    assert_eq!(out, m.summarize(&d, None, 5).unwrap());
    let base = Summarizer::new(tiny(Variant::Base), vocab()).unwrap();
    assert_eq!(out, base.summarize(&d, None, 5).unwrap());
    let other = Vocabulary::from_tokens(["a"]).unwrap();
    assert!(matches!(
        summarize(&m, &other, &d, None, 5),
        Err(Error::VocabMismatch { .. })
    ));
    assert_eq!(summarize(&m, &vocab(), &d, None, 5).unwrap(), out);
}

#[test]
fn training_is_deterministic_and_selects_by_validation() {
    let corpus = SyntheticCorpus::generate(6, 2, 0, 8).unwrap();
    let mc = ModelConfig {
        d_model: 16,
        heads: 2,
        ffn: 16,
        variant: Variant::Gnn,
        ..ModelConfig::default()
    };
    let tc = TrainingConfig {
        epochs: 3,
        batch_size: 4,
        lr_backbone: 1e-3,
        ..TrainingConfig::default()
    };
    let a = train(&corpus, &mc, &tc).unwrap();
    let b = train(&corpus, &mc, &tc).unwrap();
    assert_eq!(
        save_checkpoint(&a.model).unwrap(),
        save_checkpoint(&b.model).unwrap()
    );
    assert_eq!(a.history, b.history);
    assert_eq!(a.history.len(), 3);
    let best = a
        .history
        .iter()
        .map(|r| r.val_rouge2.unwrap())
        .fold(f64::NEG_INFINITY, f64::max);
    let chosen = &a.history[a.best_epoch - 1];
    assert_eq!(chosen.val_rouge2, Some(best));
    assert!(a.history[..a.best_epoch - 1]
        .iter()
        .all(|r| r.val_rouge2.unwrap() < best));
    let lam = a.model.lambda_value().unwrap();
    assert!((0.0..=1.0).contains(&lam));
}

#[test]
fn zero_epochs_and_empty_corpus_rejected() {
    let corpus = SyntheticCorpus::generate(2, 0, 0, 1).unwrap();
    let tc = TrainingConfig {
        epochs: 0,
        ..TrainingConfig::default()
    };
    assert!(train(&corpus, &ModelConfig::default(), &tc).is_err());
    let empty = SyntheticCorpus::default();
    assert!(train(&empty, &ModelConfig::default(), &TrainingConfig::default()).is_err());
}

#[test]
fn batch_loss_ignores_order() {
    let samples = generate_synthetic(3, 2).unwrap();
    let corpus = SyntheticCorpus {
        train: samples.clone(),
        ..Default::default()
    };
    let mc = ModelConfig {
        d_model: 8,
        heads: 2,
        ffn: 8,
        dropout: 0.0,
        ..ModelConfig::default()
    };
    let model = train(
        &corpus,
        &mc,
        &TrainingConfig {
            epochs: 1,
            ..TrainingConfig::default()
        },
    )
    .unwrap()
    .model;
    let prepared: Vec<PreparedExample> = samples
        .iter()
        .map(|s| PreparedExample::new(&model, s))
        .collect::<crate::Result<_>>()
        .unwrap();
    let tc = TrainingConfig::default();
    let mut fwd = Trainer::new(model.clone(), tc.clone()).unwrap();
    let mut rev = Trainer::new(model, tc).unwrap();
    let la = fwd
        .step(&[&prepared[0], &prepared[1], &prepared[2]])
        .unwrap();
    let lb = rev
        .step(&[&prepared[2], &prepared[1], &prepared[0]])
        .unwrap();
    assert!((la - lb).abs() < 1e-12);
    for p in fwd.model().params.iter() {
        let q = rev.model().params.value(&p.name).unwrap();
        assert!(p.value.max_abs_diff(q) < 1e-12, "{}", p.name);
    }
}
