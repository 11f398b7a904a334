mod common;

use common::{info_nce_oracle, is_subsequence, rows};
use sentence_contrast::augment::{AugmentationConfig, Augmenter, Strategy};
use sentence_contrast::encoder::{to_bytes, EncoderParams};
use sentence_contrast::numeric::{Rng, Tensor};
use sentence_contrast::synthetic::generate;
use sentence_contrast::tokenizer::{TokenSequence, Vocab};
use sentence_contrast::train::{compose_batch, run, TrainConfig, Trainer};

fn small_config() -> TrainConfig {
    TrainConfig {
        batch_size: 4,
        width: 16,
        heads: 2,
        ff_width: 32,
        layers: 1,
        max_len: 24,
        ..Default::default()
    }
}

fn setup(n: usize) -> (Vocab, Vec<String>) {
    let data = generate(n, 0, 5);
    let vocab = Vocab::build(data.corpus.iter().map(String::as_str), 400).unwrap();
    (vocab, data.corpus)
}

fn batch(vocab: &Vocab, corpus: &[String], step: usize, n: usize) -> Vec<TokenSequence> {
    corpus[step * n..(step + 1) * n]
        .iter()
        .map(|s| vocab.tokenize(s).unwrap())
        .collect()
}

fn f64_rows(t: &Tensor<f32>) -> Vec<Vec<f64>> {
    rows(&t.cast::<f64>())
}

#[test]
fn pure_dropout_steps_match_in_batch_oracle() {
    let (vocab, corpus) = setup(80);
    let mut cfg = small_config();
    cfg.augmentation.strategy = Strategy::None;
    cfg.queue_multiple = 0.0;
    let mut trainer = Trainer::<f32>::new(cfg, vocab.len()).unwrap();
    for step in 0..20 {
        let x = batch(&vocab, &corpus, step, 4);
        let (h, hp) = trainer.next_views(&x, &x).unwrap();
        let expected = info_nce_oracle(&f64_rows(&h), &f64_rows(&hp), &[], 0.05);
        let got = trainer.train_step(&x, &x).unwrap();
        assert!((got.loss - expected).abs() < 1e-6, "step {step}: {} vs {expected}", got.loss);
        assert_eq!(got.queue_fill, 0);
    }
}

#[test]
fn queue_steps_use_the_queue_before_enqueue() {
    let (vocab, corpus) = setup(80);
    let cfg = small_config();
    let aug_cfg = cfg.augmentation.clone();
    let augmenter = Augmenter::new(aug_cfg, &vocab).unwrap();
    let mut trainer = Trainer::<f32>::new(cfg, vocab.len()).unwrap();
    let capacity = trainer.queue.capacity();
    assert_eq!(capacity, 10);
    let mut rng = Rng::new(1);
    for step in 0..20 {
        let x = batch(&vocab, &corpus, step, 4);
        let x_plus: Vec<TokenSequence> = x.iter().map(|s| augmenter.apply(s, &mut rng).unwrap()).collect();
        let queue_before = f64_rows(&trainer.queue.view());
        let (h, hp) = trainer.next_views(&x, &x_plus).unwrap();
        let expected = info_nce_oracle(&f64_rows(&h), &f64_rows(&hp), &queue_before, 0.05);

        let encoder_before = trainer.encoder.clone();
        let momentum_before = trainer.momentum.params.clone();
        let out = trainer.train_step(&x, &x_plus).unwrap();
        assert!((out.loss - expected).abs() < 1e-5 * expected.max(1.0));
        assert_eq!(out.queue_fill, ((step + 1) * 4).min(capacity));
        assert_ne!(trainer.encoder, encoder_before);

        // EMA toward the updated encoder.
        let lam = 0.995f32;
        for ((m, old), e) in trainer
            .momentum
            .params
            .tensors
            .iter()
            .zip(&momentum_before.tensors)
            .zip(&trainer.encoder.tensors)
        {
            for ((&m, &o), &e) in m.data().iter().zip(old.data()).zip(e.data()) {
                assert!((m - (lam * o + (1.0 - lam) * e)).abs() <= 1e-6 * (1.0 + o.abs()));
            }
        }
        // The newest entries are the updated momentum encodings of x.
        let keys = trainer.momentum.encode(&x).unwrap();
        let entries: Vec<&[f32]> = trainer.queue.entries().collect();
        let tail = &entries[entries.len() - 4..];
        for (i, row) in tail.iter().enumerate() {
            assert_eq!(*row, keys.row(i));
        }
    }
}

fn encoder_bytes(p: &EncoderParams<f32>) -> Vec<u8> {
    to_bytes(p, 0).unwrap()
}

#[test]
fn runs_are_deterministic() {
    let data = generate(60, 30, 3);
    let vocab = Vocab::build(data.corpus.iter().map(String::as_str), 400).unwrap();
    let cfg = TrainConfig {
        eval_every: 5,
        ..small_config()
    };
    let a = run::<f32>(&cfg, &vocab, &data.corpus, Some(&data.dev), |_| {}).unwrap();
    let b = run::<f32>(&cfg, &vocab, &data.corpus, Some(&data.dev), |_| {}).unwrap();
    assert_eq!(a.log.to_string(), b.log.to_string());
    assert_eq!(a.best_step, b.best_step);
    assert_eq!(encoder_bytes(&a.best), encoder_bytes(&b.best));
    assert_eq!(encoder_bytes(&a.best_momentum), encoder_bytes(&b.best_momentum));

    let other = run::<f32>(&TrainConfig { seed: 9, ..cfg }, &vocab, &data.corpus, Some(&data.dev), |_| {}).unwrap();
    assert_ne!(a.log.losses(), other.log.losses());
}

#[test]
fn best_checkpoint_is_the_best_evaluation() {
    let data = generate(60, 30, 4);
    let vocab = Vocab::build(data.corpus.iter().map(String::as_str), 400).unwrap();
    let cfg = TrainConfig {
        eval_every: 3,
        ..small_config()
    };
    let out = run::<f32>(&cfg, &vocab, &data.corpus, Some(&data.dev), |_| {}).unwrap();
    let evals = out.log.evaluations();
    // Steps 3, 6, .., 15 plus the final partial-batch step 15.
    assert_eq!(evals.iter().map(|e| e.0).collect::<Vec<_>>(), vec![3, 6, 9, 12, 15]);
    let max = evals.iter().map(|e| e.1).fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(out.best_dev, Some(max));
    assert_eq!(out.log.best(), Some((out.best_step, max)));
    let rescored = sentence_contrast::train::dev_spearman(&data.dev, &out.best, &vocab).unwrap();
    assert_eq!(rescored, max);

    // A cadence longer than the run gives exactly one, final, evaluation.
    let once = run::<f32>(&TrainConfig { eval_every: 1000, ..cfg }, &vocab, &data.corpus, Some(&data.dev), |_| {})
        .unwrap();
    assert_eq!(once.log.evaluations().len(), 1);
    assert_eq!(once.best_step, 15);
    assert_eq!(once.best, once.trainer.encoder);
}

#[test]
fn epochs_and_partial_batches() {
    let (vocab, corpus) = setup(10);
    let cfg = TrainConfig {
        epochs: 2,
        ..small_config()
    };
    let out = run::<f32>(&cfg, &vocab, &corpus, None, |_| {}).unwrap();
    // 10 sentences at batch 4: 4 + 4 + 2 per epoch.
    assert_eq!(out.log.records.len(), 6);
    assert_eq!(out.trainer.adam().steps(), 6);
    assert!(run::<f32>(&cfg, &vocab, &[], None, |_| {}).is_err());
}

#[test]
fn composed_batches_keep_originals_inside_positives() {
    let (vocab, corpus) = setup(200);
    let augmenter = Augmenter::new(AugmentationConfig::default(), &vocab).unwrap();
    let mut rng = Rng::new(12);
    for b in 0..1000 {
        let start = (b * 7) % 190;
        let sentences: Vec<&str> = corpus[start..start + 1 + b % 8].iter().map(String::as_str).collect();
        let (x, xp) = compose_batch(&sentences, &augmenter, &vocab, &mut rng).unwrap();
        assert_eq!(x.len(), xp.len());
        for (a, p) in x.iter().zip(&xp) {
            assert!(p.len() >= a.len());
            assert!(is_subsequence(&a.ids, &p.ids));
        }
    }
    let one = compose_batch(&[corpus[0].as_str()], &augmenter, &vocab, &mut rng).unwrap();
    assert_eq!(one.0.len(), 1);
}
