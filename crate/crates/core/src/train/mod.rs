//! The training loop: dual-view encoding, queue-extended InfoNCE, Adam on
//! the encoder, EMA on the momentum copy and the embedding queue.

mod config;
mod log;

use std::fs;
use std::path::Path;
use std::time::Instant;

pub use config::{TrainConfig, CONFIG_KEYS};
pub use log::{StepRecord, TrainLog, LOG_HEADER};

use crate::augment::Augmenter;
use crate::contrastive::{queue_info_nce_loss, record_loss, LossBatch};
use crate::encoder::{forward, write_checkpoint, EncoderParams};
use crate::error::{Error, Result};
use crate::eval::{load_sts, score_pairs, spearman, StsPair};
use crate::momentum::{EmbeddingQueue, MomentumState};
use crate::numeric::{Adam, AdamConfig, Real, Rng, Tape, Tensor};
use crate::tokenizer::{TokenSequence, Vocab};

/// File names inside the output directory.
pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const MOMENTUM_CHECKPOINT: &str = "momentum.ckpt";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const LOG_FILE: &str = "train_log.tsv";
pub const CONFIG_FILE: &str = "config.txt";

/// Tokenize `sentences` and build their positive views; entry `i` of the
/// second list is the positive of entry `i` of the first.
pub fn compose_batch(
    sentences: &[&str],
    augmenter: &Augmenter,
    vocab: &Vocab,
    rng: &mut Rng,
) -> Result<(Vec<TokenSequence>, Vec<TokenSequence>)> {
    let x = sentences.iter().map(|s| vocab.tokenize(s)).collect::<Result<Vec<_>>>()?;
    let x_plus = augment_all(&x, augmenter, rng)?;
    Ok((x, x_plus))
}

fn augment_all(x: &[TokenSequence], augmenter: &Augmenter, rng: &mut Rng) -> Result<Vec<TokenSequence>> {
    x.iter().map(|s| augmenter.apply(s, rng)).collect()
}

/// What one optimizer step produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub loss: f64,
    pub queue_fill: usize,
}

/// Mutable training state. Random streams are forked from the seed in a
/// fixed order, so `(config, seed)` determines every step.
#[derive(Debug, Clone)]
pub struct Trainer<T> {
    pub config: TrainConfig,
    pub encoder: EncoderParams<T>,
    pub momentum: MomentumState<T>,
    pub queue: EmbeddingQueue<T>,
    adam: Adam<T>,
    data_rng: Rng,
    dropout_rng: Rng,
    steps: usize,
}

impl<T: Real> Trainer<T> {
    pub fn new(config: TrainConfig, vocab_size: usize) -> Result<Self> {
        config.validate()?;
        let mut root = Rng::new(config.seed);
        let encoder = EncoderParams::init(config.encoder_config(vocab_size), &mut root.fork())?;
        Self::with_streams(config, encoder, root)
    }

    /// Start from given encoder weights; the momentum copy equals them.
    pub fn from_encoder(config: TrainConfig, encoder: EncoderParams<T>) -> Result<Self> {
        config.validate()?;
        let mut root = Rng::new(config.seed);
        root.fork();
        Self::with_streams(config, encoder, root)
    }

    fn with_streams(config: TrainConfig, encoder: EncoderParams<T>, mut root: Rng) -> Result<Self> {
        let momentum = MomentumState::new(&encoder, config.momentum)?;
        let queue = EmbeddingQueue::new(config.queue_capacity(), encoder.config.width);
        let adam = Adam::new(
            &encoder.tensors,
            AdamConfig {
                lr: config.learning_rate,
                ..Default::default()
            },
        );
        Ok(Trainer {
            data_rng: root.fork(),
            dropout_rng: root.fork(),
            config,
            encoder,
            momentum,
            queue,
            adam,
            steps: 0,
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn adam(&self) -> &Adam<T> {
        &self.adam
    }

    /// Stream used for shuffling and augmentation.
    pub fn data_rng(&mut self) -> &mut Rng {
        &mut self.data_rng
    }

    /// The two embedding matrices the next [`Trainer::train_step`] on the
    /// same batch will compute, without advancing any state.
    pub fn next_views(&self, x: &[TokenSequence], x_plus: &[TokenSequence]) -> Result<(Tensor<T>, Tensor<T>)> {
        let mut streams = self.dropout_rng.clone();
        let (mut mask_a, mut mask_b) = (streams.fork(), streams.fork());
        let mut tape = Tape::new();
        let vars = self.encoder.bind(&mut tape, false);
        let h = forward(&mut tape, &vars, &self.encoder.config, x, Some(&mut mask_a))?;
        let h_plus = forward(&mut tape, &vars, &self.encoder.config, x_plus, Some(&mut mask_b))?;
        Ok((tape.value(h).clone(), tape.value(h_plus).clone()))
    }

    /// One optimizer step, in this order: encode `x` and `x_plus` with
    /// independent dropout masks, loss against the current queue, backward
    /// and Adam on the encoder, EMA update, then enqueue the momentum
    /// encodings of `x`. The queue never holds the batch's own entries
    /// while its loss is computed.
    pub fn train_step(&mut self, x: &[TokenSequence], x_plus: &[TokenSequence]) -> Result<StepOutcome> {
        if x.len() != x_plus.len() {
            return Err(Error::Shape(format!("{} originals but {} positives", x.len(), x_plus.len())));
        }
        let step = self.steps + 1;
        let cfg = self.encoder.config;
        let mut tape = Tape::new();
        let vars = self.encoder.bind(&mut tape, true);
        let mut mask_a = self.dropout_rng.fork();
        let mut mask_b = self.dropout_rng.fork();
        let h = forward(&mut tape, &vars, &cfg, x, Some(&mut mask_a))?;
        let h_plus = forward(&mut tape, &vars, &cfg, x_plus, Some(&mut mask_b))?;
        let queue = self.queue.view();
        let loss = record_loss(&mut tape, h, h_plus, &queue, self.config.temperature)?;
        // The logged value is re-evaluated in f64 from the same embeddings so
        // it does not carry the rounding of the 1/tau-scaled f32 logits.
        let value: f64 = queue_info_nce_loss(
            &LossBatch::new(tape.value(h).cast(), tape.value(h_plus).cast(), self.config.temperature)
                .with_queue(queue.cast()),
        )?;
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("loss {value} at step {step}")));
        }
        let grads = tape.backward(loss)?.param_grads(&self.encoder.tensors);
        self.adam.step(&mut self.encoder.tensors, &grads)?;
        if self.encoder.tensors.iter().any(|t| !t.all_finite()) {
            return Err(Error::NonFinite(format!("parameters after step {step}")));
        }
        self.momentum.ema_update(&self.encoder)?;
        if self.queue.capacity() > 0 {
            let keys = self.momentum.encode(x)?;
            self.queue.enqueue(&keys)?;
        }
        self.steps = step;
        Ok(StepOutcome {
            loss: value,
            queue_fill: self.queue.len(),
        })
    }
}

/// Dev Spearman of `params` with dropout off.
pub fn dev_spearman<T: Real>(pairs: &[StsPair], params: &EncoderParams<T>, vocab: &Vocab) -> Result<f64> {
    let pred = score_pairs(pairs, params, vocab)?;
    let gold: Vec<f64> = pairs.iter().map(|p| p.gold).collect();
    spearman(&gold, &pred)
}

fn check_dev(dev: &[StsPair]) -> Result<()> {
    let gold: Vec<f64> = dev.iter().map(|p| p.gold).collect();
    if gold.len() < 2 || gold.iter().all(|&g| g == gold[0]) {
        return Err(Error::UndefinedCorrelation(
            "dev set needs at least two distinct gold scores".into(),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub log: TrainLog,
    /// Step of the retained checkpoint.
    pub best_step: usize,
    /// Its dev Spearman, when a dev set was given.
    pub best_dev: Option<f64>,
    pub best: EncoderParams<T>,
    /// Momentum parameters at `best_step`.
    pub best_momentum: EncoderParams<T>,
    pub trainer: Trainer<T>,
}

/// Train on `corpus` for the configured epochs. Each epoch shuffles the
/// corpus once and keeps the final short batch. With a dev set the encoder
/// is scored every `eval_every` steps and after the last step; the best
/// scoring weights are retained (earliest wins ties). Without one, the
/// final weights are retained.
pub fn run<T: Real>(
    config: &TrainConfig,
    vocab: &Vocab,
    corpus: &[String],
    dev: Option<&[StsPair]>,
    mut observe: impl FnMut(&StepRecord),
) -> Result<TrainOutcome<T>> {
    if corpus.is_empty() {
        return Err(Error::Input("empty corpus".into()));
    }
    if let Some(dev) = dev {
        check_dev(dev)?;
    }
    let augmenter = Augmenter::new(config.augmentation.clone(), vocab)?;
    let mut trainer = Trainer::<T>::new(config.clone(), vocab.len())?;
    let tokenized = corpus.iter().map(|s| vocab.tokenize(s)).collect::<Result<Vec<_>>>()?;
    if let Some(i) = tokenized.iter().position(TokenSequence::is_empty) {
        return Err(Error::Input(format!("corpus sentence {} has no tokens", i + 1)));
    }

    let per_epoch = tokenized.len().div_ceil(config.batch_size);
    let total = per_epoch * config.epochs;
    let start = Instant::now();
    let mut log = TrainLog::default();
    let mut best: Option<(usize, f64, EncoderParams<T>, EncoderParams<T>)> = None;
    let mut order: Vec<usize> = (0..tokenized.len()).collect();

    for _ in 0..config.epochs {
        trainer.data_rng().shuffle(&mut order);
        for chunk in order.chunks(config.batch_size) {
            let x: Vec<TokenSequence> = chunk.iter().map(|&i| tokenized[i].clone()).collect();
            let mut aug_rng = trainer.data_rng().fork();
            let x_plus = augment_all(&x, &augmenter, &mut aug_rng)?;
            let out = trainer.train_step(&x, &x_plus)?;
            let step = trainer.steps();
            let dev_r = match dev {
                Some(dev) if step % config.eval_every == 0 || step == total => {
                    Some(dev_spearman(dev, &trainer.encoder, vocab)?)
                }
                _ => None,
            };
            if let Some(r) = dev_r {
                if best.as_ref().is_none_or(|b| r > b.1) {
                    best = Some((step, r, trainer.encoder.clone(), trainer.momentum.params.clone()));
                }
            }
            let record = StepRecord {
                step,
                loss: out.loss,
                queue_fill: out.queue_fill,
                dev_spearman: dev_r,
                elapsed: start.elapsed(),
            };
            observe(&record);
            log.push(record)?;
        }
    }

    let (best_step, best_dev, best, best_momentum) = match best {
        Some((s, r, e, m)) => (s, Some(r), e, m),
        None => (
            trainer.steps(),
            None,
            trainer.encoder.clone(),
            trainer.momentum.params.clone(),
        ),
    };
    Ok(TrainOutcome {
        log,
        best_step,
        best_dev,
        best,
        best_momentum,
        trainer,
    })
}

/// Non-blank lines of a one-sentence-per-line file.
pub fn load_corpus(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let lines: Vec<String> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect();
    if lines.is_empty() {
        return Err(Error::Input(format!("{}: empty corpus", path.display())));
    }
    Ok(lines)
}

/// File-driven training: load inputs named in `config`, learn or load the
/// vocabulary, train in 32-bit and write the output directory if one is set.
pub fn train(config: &TrainConfig, observe: impl FnMut(&StepRecord)) -> Result<(Vocab, TrainOutcome<f32>)> {
    config.validate()?;
    let corpus_path = config
        .corpus
        .as_deref()
        .ok_or_else(|| Error::Config("no corpus given".into()))?;
    let corpus = load_corpus(corpus_path)?;
    let vocab = match &config.vocab {
        Some(p) => Vocab::load(p)?,
        None => Vocab::build(corpus.iter().map(String::as_str), config.vocab_size)?,
    };
    let dev = config.dev.as_deref().map(load_sts).transpose()?;
    let outcome = run::<f32>(config, &vocab, &corpus, dev.as_deref(), observe)?;
    if let Some(out) = &config.out {
        write_outputs(out, config, &vocab, &outcome)?;
    }
    Ok((vocab, outcome))
}

pub fn write_outputs(dir: &Path, config: &TrainConfig, vocab: &Vocab, outcome: &TrainOutcome<f32>) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let hash = vocab.fingerprint();
    write_checkpoint(&dir.join(BEST_CHECKPOINT), &outcome.best, hash)?;
    write_checkpoint(&dir.join(MOMENTUM_CHECKPOINT), &outcome.best_momentum, hash)?;
    vocab.save(&dir.join(VOCAB_FILE))?;
    outcome.log.write(&dir.join(LOG_FILE))?;
    let cfg = dir.join(CONFIG_FILE);
    fs::write(&cfg, config.to_string()).map_err(|e| Error::io(&cfg, e))
}
