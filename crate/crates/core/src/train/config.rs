//! Training configuration and its flat `key = value` file form.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use crate::augment::{load_stopwords, AugmentationConfig, Strategy};
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub temperature: f64,
    pub epochs: usize,
    pub eval_every: usize,
    /// Queue capacity as a multiple of the batch size; zero disables it.
    pub queue_multiple: f64,
    pub momentum: f64,
    pub augmentation: AugmentationConfig,
    pub dropout: f64,
    /// Adam step size. The default suits the tiny from-scratch encoder.
    pub learning_rate: f64,
    pub seed: u64,
    /// Target vocabulary size when the vocabulary is learned from the corpus.
    pub vocab_size: usize,
    pub layers: usize,
    pub width: usize,
    pub heads: usize,
    pub ff_width: usize,
    pub max_len: usize,
    pub corpus: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    /// Reuse an existing vocabulary file instead of learning one.
    pub vocab: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            temperature: 0.05,
            epochs: 1,
            eval_every: 125,
            queue_multiple: 2.5,
            momentum: 0.995,
            augmentation: AugmentationConfig::default(),
            dropout: 0.1,
            learning_rate: 3e-3,
            seed: 42,
            vocab_size: 1000,
            layers: 2,
            width: 64,
            heads: 4,
            ff_width: 256,
            max_len: 64,
            corpus: None,
            dev: None,
            vocab: None,
            stopwords: None,
            out: None,
        }
    }
}

/// Every key accepted by [`TrainConfig::set`], in file order.
pub const CONFIG_KEYS: [&str; 22] = [
    "batch-size",
    "temperature",
    "epochs",
    "eval-every",
    "queue-multiple",
    "momentum",
    "strategy",
    "dup-rate",
    "dropout",
    "lr",
    "seed",
    "vocab-size",
    "layers",
    "width",
    "heads",
    "ff-width",
    "max-len",
    "corpus",
    "dev",
    "vocab",
    "stopwords",
    "out",
];

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.batch_size == 0 {
            return bad("batch-size must be at least 1".into());
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad(format!("temperature {} must be positive", self.temperature));
        }
        if self.epochs == 0 || self.eval_every == 0 {
            return bad("epochs and eval-every must be at least 1".into());
        }
        if !(self.queue_multiple >= 0.0 && self.queue_multiple.is_finite()) {
            return bad(format!("queue-multiple {} must be non-negative", self.queue_multiple));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum {} must lie in [0, 1)", self.momentum));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("lr {} must be positive", self.learning_rate));
        }
        self.augmentation.validate()?;
        self.encoder_config(self.vocab_size).validate()
    }

    pub fn encoder_config(&self, vocab_size: usize) -> EncoderConfig {
        EncoderConfig {
            vocab_size,
            layers: self.layers,
            width: self.width,
            heads: self.heads,
            ff_width: self.ff_width,
            max_len: self.max_len,
            dropout: self.dropout,
        }
    }

    /// Queue capacity for the configured batch size.
    pub fn queue_capacity(&self) -> usize {
        (self.queue_multiple * self.batch_size as f64).round() as usize
    }

    /// Set one field from its textual form. Paths are taken verbatim.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "batch-size" => self.batch_size = num(key, value)?,
            "temperature" => self.temperature = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "eval-every" => self.eval_every = num(key, value)?,
            "queue-multiple" => self.queue_multiple = num(key, value)?,
            "momentum" => self.momentum = num(key, value)?,
            "strategy" => self.augmentation.strategy = value.parse::<Strategy>()?,
            "dup-rate" => self.augmentation.dup_rate = num(key, value)?,
            "dropout" => self.dropout = num(key, value)?,
            "lr" => self.learning_rate = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "vocab-size" => self.vocab_size = num(key, value)?,
            "layers" => self.layers = num(key, value)?,
            "width" => self.width = num(key, value)?,
            "heads" => self.heads = num(key, value)?,
            "ff-width" => self.ff_width = num(key, value)?,
            "max-len" => self.max_len = num(key, value)?,
            "corpus" => self.corpus = Some(value.into()),
            "dev" => self.dev = Some(value.into()),
            "vocab" => self.vocab = Some(value.into()),
            "stopwords" => {
                self.augmentation.stopwords = load_stopwords(Path::new(value))?;
                self.stopwords = Some(value.into());
            }
            "out" => self.out = Some(value.into()),
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Apply a config file: one `key = value` per line, `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, path: &Path) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |msg: String| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_err("expected `key = value`".into()))?;
            self.set(key.trim(), value).map_err(|e| parse_err(e.to_string()))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text, path)
    }
}

/// The file form; reading it back with [`TrainConfig::apply_text`] restores
/// every field.
impl fmt::Display for TrainConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "batch-size = {}", self.batch_size)?;
        writeln!(f, "temperature = {}", self.temperature)?;
        writeln!(f, "epochs = {}", self.epochs)?;
        writeln!(f, "eval-every = {}", self.eval_every)?;
        writeln!(f, "queue-multiple = {}", self.queue_multiple)?;
        writeln!(f, "momentum = {}", self.momentum)?;
        writeln!(f, "strategy = {}", self.augmentation.strategy)?;
        writeln!(f, "dup-rate = {}", self.augmentation.dup_rate)?;
        writeln!(f, "dropout = {}", self.dropout)?;
        writeln!(f, "lr = {}", self.learning_rate)?;
        writeln!(f, "seed = {}", self.seed)?;
        writeln!(f, "vocab-size = {}", self.vocab_size)?;
        writeln!(f, "layers = {}", self.layers)?;
        writeln!(f, "width = {}", self.width)?;
        writeln!(f, "heads = {}", self.heads)?;
        writeln!(f, "ff-width = {}", self.ff_width)?;
        writeln!(f, "max-len = {}", self.max_len)?;
        let paths = [
            ("corpus", &self.corpus),
            ("dev", &self.dev),
            ("vocab", &self.vocab),
            ("stopwords", &self.stopwords),
            ("out", &self.out),
        ];
        for (key, p) in paths {
            if let Some(p) = p {
                writeln!(f, "{key} = {}", p.display())?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = TrainConfig::default();
        c.validate().unwrap();
        assert_eq!(c.queue_capacity(), 160);
        assert_eq!(c.augmentation.strategy, Strategy::SubwordRepetition);
    }

    #[test]
    fn text_round_trip() {
        let mut c = TrainConfig {
            batch_size: 8,
            temperature: 0.1,
            seed: 7,
            dev: Some("dev.tsv".into()),
            ..Default::default()
        };
        c.augmentation.strategy = Strategy::WordRepetition;
        let mut back = TrainConfig::default();
        back.apply_text(&c.to_string(), Path::new("c.txt")).unwrap();
        assert_eq!(back, c);
        c.queue_multiple = 0.0;
        assert_eq!(c.queue_capacity(), 0);
    }

    #[test]
    fn comments_and_errors() {
        let mut c = TrainConfig::default();
        c.apply_text("# header\n\nbatch-size = 16  # trailing\n", Path::new("c")).unwrap();
        assert_eq!(c.batch_size, 16);
        match c.apply_text("seed = 1\nbogus = 3\n", Path::new("c")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(c.apply_text("lr 0.1", Path::new("c")).is_err());
        assert!(c.set("strategy", "shuffle").is_err());
        c.set("momentum", "1.0").unwrap();
        assert!(c.validate().is_err());
    }
}
