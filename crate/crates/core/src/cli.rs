//! Command-line front end. [`run`] parses arguments, dispatches, and maps
//! failures to exit statuses (0 ok, 1 usage, 2 data, 3 numeric).
//!
//! `audit` prints, per dataset, the lines `dataset`, `threshold`,
//! `small.pairs`, `small.spearman`, `large.pairs`, `large.spearman` as
//! `key = value`, with `undefined` for a group of fewer than two pairs or a
//! constant column. `audit --json` prints one record per dataset:
//! `{"dataset", "threshold", "small": {"pairs", "spearman"}, "large": {..}}`
//! with `null` for undefined. `eval` prints `name = r` per dataset and
//! `avg = r`; `eval --json` prints `{"dataset", "pairs", "spearman"}` per
//! dataset and a final `{"dataset": "avg", "spearman"}`.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::augment::{AugmentationConfig, Augmenter, Strategy};
use crate::encoder::{read_checkpoint, EncoderParams};
use crate::error::{Error, Result, EXIT_OK, EXIT_USAGE};
use crate::eval::{
    average, embed_sentences, length_bias_audit, load_sts, score_pairs, spearman, DEFAULT_AUDIT_THRESHOLD,
};
use crate::numeric::Rng;
use crate::tokenizer::Vocab;
use crate::train::{self, TrainConfig, VOCAB_FILE};

#[derive(Debug, Parser)]
#[command(name = "sentence-contrast", version, about = "Contrastive sentence embeddings with repetition augmentation and a momentum queue")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train an encoder on a one-sentence-per-line corpus.
    Train(Box<TrainArgs>),
    /// Spearman correlation on one or more STS files, plus their average.
    Eval(EvalArgs),
    /// Spearman split by sentence length difference.
    Audit(AuditArgs),
    /// Write one embedding row per input sentence.
    Embed(EmbedArgs),
    /// Show the positive view a strategy produces for a sentence.
    AugmentPreview(PreviewArgs),
}

/// Every flag mirrors a config file key; flags win over the file.
#[derive(Debug, Args)]
struct TrainArgs {
    /// Config file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    corpus: Option<String>,
    #[arg(long, value_name = "TSV")]
    dev: Option<String>,
    /// Output directory for checkpoints, vocabulary and log.
    #[arg(long, value_name = "DIR")]
    out: Option<String>,
    /// Use this vocabulary instead of learning one.
    #[arg(long, value_name = "FILE")]
    vocab: Option<String>,
    #[arg(long, value_name = "FILE")]
    stopwords: Option<String>,
    #[arg(long)]
    batch_size: Option<String>,
    #[arg(long)]
    temperature: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    eval_every: Option<String>,
    #[arg(long)]
    queue_multiple: Option<String>,
    #[arg(long)]
    momentum: Option<String>,
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    dup_rate: Option<String>,
    #[arg(long)]
    dropout: Option<String>,
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    vocab_size: Option<String>,
    #[arg(long)]
    layers: Option<String>,
    #[arg(long)]
    width: Option<String>,
    #[arg(long)]
    heads: Option<String>,
    #[arg(long)]
    ff_width: Option<String>,
    #[arg(long)]
    max_len: Option<String>,
    /// Print nothing but the final summary.
    #[arg(long)]
    quiet: bool,
}

impl TrainArgs {
    fn overrides(&self) -> [(&'static str, &Option<String>); 22] {
        [
            ("corpus", &self.corpus),
            ("dev", &self.dev),
            ("out", &self.out),
            ("vocab", &self.vocab),
            ("stopwords", &self.stopwords),
            ("batch-size", &self.batch_size),
            ("temperature", &self.temperature),
            ("epochs", &self.epochs),
            ("eval-every", &self.eval_every),
            ("queue-multiple", &self.queue_multiple),
            ("momentum", &self.momentum),
            ("strategy", &self.strategy),
            ("dup-rate", &self.dup_rate),
            ("dropout", &self.dropout),
            ("lr", &self.lr),
            ("seed", &self.seed),
            ("vocab-size", &self.vocab_size),
            ("layers", &self.layers),
            ("width", &self.width),
            ("heads", &self.heads),
            ("ff-width", &self.ff_width),
            ("max-len", &self.max_len),
        ]
    }

    fn config(&self) -> Result<TrainConfig> {
        let mut cfg = TrainConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        for (key, value) in self.overrides() {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Checkpoint file, e.g. `<out>/best.ckpt`.
    #[arg(long, value_name = "FILE")]
    checkpoint: PathBuf,
    /// Vocabulary file; defaults to `vocab.txt` next to the checkpoint.
    #[arg(long, value_name = "FILE")]
    vocab: Option<PathBuf>,
}

impl ModelArgs {
    fn load(&self) -> Result<(EncoderParams<f32>, Vocab)> {
        let (header, params) = read_checkpoint(&self.checkpoint)?;
        let vocab_path = match &self.vocab {
            Some(p) => p.clone(),
            None => self
                .checkpoint
                .parent()
                .unwrap_or(Path::new("."))
                .join(VOCAB_FILE),
        };
        let vocab = Vocab::load(&vocab_path)?;
        if vocab.fingerprint() != header.vocab_hash {
            return Err(Error::Checkpoint(format!(
                "{} is not the vocabulary this checkpoint was trained with",
                vocab_path.display()
            )));
        }
        Ok((params, vocab))
    }
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// STS files: `gold<TAB>sentence_a<TAB>sentence_b` per line.
    #[arg(required = true, value_name = "TSV")]
    datasets: Vec<PathBuf>,
    /// One JSON record per dataset instead of `key = value` lines.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct AuditArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(required = true, value_name = "TSV")]
    datasets: Vec<PathBuf>,
    /// Largest word-count difference counted as "small".
    #[arg(long, default_value_t = DEFAULT_AUDIT_THRESHOLD)]
    threshold: usize,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct EmbedArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// One sentence per line.
    #[arg(long, value_name = "FILE")]
    input: PathBuf,
    /// Tab-separated embedding rows, in input order.
    #[arg(long, value_name = "FILE")]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct PreviewArgs {
    #[arg(long)]
    sentence: String,
    #[arg(long, default_value = "subword-repetition")]
    strategy: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.32)]
    dup_rate: f64,
    /// Vocabulary to segment with; by default one is learned from the
    /// sentence itself, so every word is a single token.
    #[arg(long, value_name = "FILE")]
    vocab: Option<PathBuf>,
    /// Number of samples to draw.
    #[arg(long, default_value_t = 1)]
    samples: usize,
    /// Also print the token pieces of each sample.
    #[arg(long)]
    tokens: bool,
}

fn dataset_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn emit(out: &mut dyn Write, text: impl std::fmt::Display) -> Result<()> {
    writeln!(out, "{text}").map_err(|e| Error::io("<stdout>", e))
}

fn cmd_train(args: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = args.config()?;
    let mut lines = Vec::new();
    let (_, outcome) = train::train(&cfg, |r| {
        if !args.quiet {
            let dev = r.dev_spearman.map(|s| format!(" dev_spearman={s:.4}")).unwrap_or_default();
            lines.push(format!("step={} loss={:.4} queue_fill={}{dev}", r.step, r.loss, r.queue_fill));
        }
    })?;
    for l in lines {
        emit(out, l)?;
    }
    emit(out, format!("best_step = {}", outcome.best_step))?;
    if let Some(r) = outcome.best_dev {
        emit(out, format!("best_dev_spearman = {r:.6}"))?;
    }
    if let Some(dir) = &cfg.out {
        emit(out, format!("output = {}", dir.display()))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct EvalRecord {
    dataset: String,
    pairs: usize,
    spearman: f64,
}

fn cmd_eval(args: &EvalArgs, out: &mut dyn Write) -> Result<()> {
    let (params, vocab) = args.model.load()?;
    let mut scores = Vec::new();
    for path in &args.datasets {
        let pairs = load_sts(path)?;
        let pred = score_pairs(&pairs, &params, &vocab)?;
        let gold: Vec<f64> = pairs.iter().map(|p| p.gold).collect();
        let r = spearman(&gold, &pred)?;
        scores.push(r);
        let name = dataset_name(path);
        if args.json {
            let rec = EvalRecord {
                dataset: name,
                pairs: pairs.len(),
                spearman: r,
            };
            emit(out, serde_json::to_string(&rec).expect("record serializes"))?;
        } else {
            emit(out, format!("{name} = {r:.6}"))?;
        }
    }
    let avg = average(&scores).expect("at least one dataset");
    if args.json {
        emit(out, format!("{{\"dataset\":\"avg\",\"spearman\":{avg}}}"))?;
    } else {
        emit(out, format!("avg = {avg:.6}"))?;
    }
    Ok(())
}

fn cmd_audit(args: &AuditArgs, out: &mut dyn Write) -> Result<()> {
    let (params, vocab) = args.model.load()?;
    for (i, path) in args.datasets.iter().enumerate() {
        let pairs = load_sts(path)?;
        let pred = score_pairs(&pairs, &params, &vocab)?;
        let report = length_bias_audit(&dataset_name(path), &pairs, &pred, args.threshold)?;
        if args.json {
            emit(out, report.to_json())?;
        } else {
            if i > 0 {
                emit(out, "")?;
            }
            emit(out, &report)?;
        }
    }
    Ok(())
}

fn cmd_embed(args: &EmbedArgs, out: &mut dyn Write) -> Result<()> {
    let (params, vocab) = args.model.load()?;
    let sentences = train::load_corpus(&args.input)?;
    let refs: Vec<&str> = sentences.iter().map(String::as_str).collect();
    let rows = embed_sentences(&refs, &params, &vocab)?;
    let mut text = String::new();
    for row in &rows {
        let cells: Vec<String> = row.iter().map(f32::to_string).collect();
        text.push_str(&cells.join("\t"));
        text.push('\n');
    }
    fs::write(&args.output, text).map_err(|e| Error::io(&args.output, e))?;
    emit(out, format!("wrote {} x {} to {}", rows.len(), params.config.width, args.output.display()))
}

fn cmd_preview(args: &PreviewArgs, out: &mut dyn Write) -> Result<()> {
    let strategy: Strategy = args.strategy.parse()?;
    let config = AugmentationConfig::new(strategy, args.dup_rate)?;
    let vocab = match &args.vocab {
        Some(p) => Vocab::load(p)?,
        // Whole-word vocabulary over the sentence and the stop words.
        None => Vocab::build(
            std::iter::once(args.sentence.as_str()).chain(config.stopwords.iter().map(String::as_str)),
            usize::MAX,
        )?,
    };
    let augmenter = Augmenter::new(config, &vocab)?;
    let seq = vocab.tokenize(&args.sentence)?;
    let mut rng = Rng::new(args.seed);
    for _ in 0..args.samples {
        let aug = augmenter.apply(&seq, &mut rng)?;
        if aug == seq {
            emit(out, &args.sentence)?;
        } else {
            emit(out, vocab.detokenize(&aug))?;
        }
        if args.tokens {
            emit(out, format!("  tokens: {}", vocab.render(&aug)))?;
        }
    }
    Ok(())
}

/// Run the CLI on `argv` (program name first) and return the exit status.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let target: &mut dyn Write = if e.use_stderr() { err } else { out };
            let _ = write!(target, "{}", e.render());
            return code;
        }
    };
    let result = match &cli.command {
        Command::Train(a) => cmd_train(a, out),
        Command::Eval(a) => cmd_eval(a, out),
        Command::Audit(a) => cmd_audit(a, out),
        Command::Embed(a) => cmd_embed(a, out),
        Command::AugmentPreview(a) => cmd_preview(a, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            if e.exit_code() == EXIT_USAGE {
                let _ = writeln!(err, "run with --help for usage");
            }
            e.exit_code()
        }
    }
}
