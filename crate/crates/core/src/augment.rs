//! Positive-view construction by token repetition and the comparison
//! augmenters (stop-word / mask insertion, random insertion and deletion).
//!
//! Positions are 0-based indices into a sequence's content tokens (or its
//! words, for word-level strategies). Specials are never candidates because
//! a [`TokenSequence`] holds content tokens only; the encoder adds them.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numeric::Rng;
use crate::tokenizer::{TokenSequence, Vocab, MASK_ID};

/// Stop-word list shipped with the crate, one lowercase word per line.
pub const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    None,
    SubwordRepetition,
    WordRepetition,
    InsertStopword,
    InsertMask,
    RandomInsert,
    RandomDelete,
}

impl Strategy {
    pub const ALL: [Strategy; 7] = [
        Strategy::None,
        Strategy::SubwordRepetition,
        Strategy::WordRepetition,
        Strategy::InsertStopword,
        Strategy::InsertMask,
        Strategy::RandomInsert,
        Strategy::RandomDelete,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::None => "none",
            Strategy::SubwordRepetition => "subword-repetition",
            Strategy::WordRepetition => "word-repetition",
            Strategy::InsertStopword => "insert-stopword",
            Strategy::InsertMask => "insert-mask",
            Strategy::RandomInsert => "random-insert",
            Strategy::RandomDelete => "random-delete",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Strategy::ALL.iter().map(|s| s.name()).collect();
                Error::Config(format!("unknown strategy {s:?}; expected one of {}", names.join(", ")))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentationConfig {
    pub strategy: Strategy,
    /// Maximal repetition rate.
    pub dup_rate: f64,
    pub stopwords: Vec<String>,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        AugmentationConfig {
            strategy: Strategy::SubwordRepetition,
            dup_rate: 0.32,
            stopwords: parse_stopwords(DEFAULT_STOPWORDS),
        }
    }
}

impl AugmentationConfig {
    pub fn new(strategy: Strategy, dup_rate: f64) -> Result<Self> {
        let cfg = AugmentationConfig {
            strategy,
            dup_rate,
            ..Default::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.dup_rate) {
            return Err(Error::Config(format!("dup_rate {} outside [0, 1]", self.dup_rate)));
        }
        if self.strategy == Strategy::InsertStopword && self.stopwords.is_empty() {
            return Err(Error::Config("insert-stopword needs a non-empty stop-word list".into()));
        }
        Ok(())
    }
}

pub fn parse_stopwords(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub fn load_stopwords(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_stopwords(&text))
}

/// Upper end of the repetition-count interval for a sequence of `n` units,
/// clamped so that sampling without replacement stays possible.
pub fn dup_len_bound(n: usize, dup_rate: f64) -> usize {
    let scaled = (dup_rate * n as f64).floor() as usize;
    scaled.max(2).min(n)
}

/// Number of units to repeat: uniform over `0..=max(2, floor(dup_rate * n))`,
/// then clamped to `n`. Returns 0 for an empty sequence.
pub fn sample_dup_len(n: usize, dup_rate: f64, rng: &mut Rng) -> usize {
    if n == 0 {
        return 0;
    }
    let hi = ((dup_rate * n as f64).floor() as usize).max(2);
    rng.range_inclusive(0, hi).min(n)
}

/// `dup_len` distinct positions drawn uniformly from `0..n`, sorted.
pub fn sample_dup_set(n: usize, dup_len: usize, rng: &mut Rng) -> Result<Vec<usize>> {
    if dup_len > n {
        return Err(Error::Input(format!("dup_len {dup_len} exceeds sequence length {n}")));
    }
    // Partial Fisher-Yates: the first dup_len slots are a uniform subset.
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..dup_len {
        let j = i + rng.below((n - i) as u64) as usize;
        pool.swap(i, j);
    }
    let mut set = pool[..dup_len].to_vec();
    set.sort_unstable();
    Ok(set)
}

fn check_positions(positions: &[usize], n: usize) -> Result<()> {
    if let Some(&p) = positions.iter().find(|&&p| p >= n) {
        return Err(Error::Input(format!("position {p} out of range for length {n}")));
    }
    Ok(())
}

/// Duplicate each selected sub-word in place. The copy continues its word
/// (`word_start = false`), so word counts are unchanged.
pub fn repeat_subwords(seq: &TokenSequence, positions: &[usize]) -> Result<TokenSequence> {
    check_positions(positions, seq.len())?;
    let mut ids = Vec::with_capacity(seq.len() + positions.len());
    let mut word_start = Vec::with_capacity(ids.capacity());
    for i in 0..seq.len() {
        ids.push(seq.ids[i]);
        word_start.push(seq.word_start[i]);
        if positions.contains(&i) {
            ids.push(seq.ids[i]);
            word_start.push(false);
        }
    }
    Ok(TokenSequence {
        ids,
        word_start,
        raw: seq.raw.clone(),
    })
}

/// Insert `insert(word_index)` right after each selected word.
fn insert_after_words(
    seq: &TokenSequence,
    word_positions: &[usize],
    mut insert: impl FnMut(usize, &[u32]) -> (Vec<u32>, Vec<bool>),
) -> Result<TokenSequence> {
    let spans = seq.word_spans();
    check_positions(word_positions, spans.len())?;
    let mut ids = Vec::new();
    let mut word_start = Vec::new();
    for (w, &(s, e)) in spans.iter().enumerate() {
        ids.extend_from_slice(&seq.ids[s..e]);
        word_start.extend_from_slice(&seq.word_start[s..e]);
        if word_positions.contains(&w) {
            let (extra_ids, extra_starts) = insert(w, &seq.ids[s..e]);
            ids.extend(extra_ids);
            word_start.extend(extra_starts);
        }
    }
    Ok(TokenSequence {
        ids,
        word_start,
        raw: seq.raw.clone(),
    })
}

/// Duplicate each selected word's whole sub-word span; the copy is a new word.
pub fn repeat_words(seq: &TokenSequence, word_positions: &[usize]) -> Result<TokenSequence> {
    insert_after_words(seq, word_positions, |_, span| {
        let starts = (0..span.len()).map(|i| i == 0).collect();
        (span.to_vec(), starts)
    })
}

/// Remove the selected sub-words. The first survivor always starts a word.
pub fn delete_positions(seq: &TokenSequence, positions: &[usize]) -> Result<TokenSequence> {
    check_positions(positions, seq.len())?;
    if positions.len() >= seq.len() {
        return Err(Error::Input("deletion would empty the sequence".into()));
    }
    let mut ids = Vec::new();
    let mut word_start = Vec::new();
    for i in (0..seq.len()).filter(|i| !positions.contains(i)) {
        ids.push(seq.ids[i]);
        word_start.push(seq.word_start[i]);
    }
    word_start[0] = true;
    Ok(TokenSequence {
        ids,
        word_start,
        raw: seq.raw.clone(),
    })
}

/// Applies an [`AugmentationConfig`] against a fixed vocabulary.
#[derive(Debug, Clone)]
pub struct Augmenter<'v> {
    config: AugmentationConfig,
    vocab: &'v Vocab,
    stopword_seqs: Vec<TokenSequence>,
}

impl<'v> Augmenter<'v> {
    pub fn new(config: AugmentationConfig, vocab: &'v Vocab) -> Result<Self> {
        config.validate()?;
        let stopword_seqs = if config.strategy == Strategy::InsertStopword {
            config
                .stopwords
                .iter()
                .map(|w| vocab.tokenize(w))
                .collect::<Result<_>>()?
        } else {
            Vec::new()
        };
        Ok(Augmenter {
            config,
            vocab,
            stopword_seqs,
        })
    }

    pub fn config(&self) -> &AugmentationConfig {
        &self.config
    }

    /// Build the positive view of `seq`.
    pub fn apply(&self, seq: &TokenSequence, rng: &mut Rng) -> Result<TokenSequence> {
        if seq.is_empty() {
            return Err(Error::Input("cannot augment an empty sequence".into()));
        }
        let rate = self.config.dup_rate;
        match self.config.strategy {
            Strategy::None => Ok(seq.clone()),
            Strategy::SubwordRepetition => {
                let n = seq.len();
                let k = sample_dup_len(n, rate, rng);
                repeat_subwords(seq, &sample_dup_set(n, k, rng)?)
            }
            Strategy::WordRepetition => {
                let n = seq.word_count();
                let k = sample_dup_len(n, rate, rng);
                repeat_words(seq, &sample_dup_set(n, k, rng)?)
            }
            Strategy::InsertStopword => {
                let n = seq.word_count();
                let k = sample_dup_len(n, rate, rng);
                let set = sample_dup_set(n, k, rng)?;
                insert_after_words(seq, &set, |_, _| {
                    let sw = &self.stopword_seqs[rng.below(self.stopword_seqs.len() as u64) as usize];
                    (sw.ids.clone(), sw.word_start.clone())
                })
            }
            Strategy::InsertMask => {
                let n = seq.word_count();
                let k = sample_dup_len(n, rate, rng);
                let set = sample_dup_set(n, k, rng)?;
                insert_after_words(seq, &set, |_, _| (vec![MASK_ID], vec![true]))
            }
            Strategy::RandomInsert => {
                let n = seq.len();
                let k = sample_dup_len(n, rate, rng);
                let set = sample_dup_set(n, k, rng)?;
                let content = self.vocab.content_ids();
                let mut ids = Vec::with_capacity(n + k);
                let mut word_start = Vec::with_capacity(n + k);
                for i in 0..n {
                    ids.push(seq.ids[i]);
                    word_start.push(seq.word_start[i]);
                    if set.contains(&i) {
                        let id = content.start + rng.below(content.len() as u64) as u32;
                        ids.push(id);
                        word_start.push(!self.vocab.is_continuation(id));
                    }
                }
                Ok(TokenSequence {
                    ids,
                    word_start,
                    raw: seq.raw.clone(),
                })
            }
            Strategy::RandomDelete => {
                let n = seq.len();
                // At least one token must survive.
                let k = sample_dup_len(n, rate, rng).min(n - 1);
                delete_positions(seq, &sample_dup_set(n, k, rng)?)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::SPECIALS;

    fn toy_vocab() -> Vocab {
        let mut t: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        t.extend(["micro", "##biology", "i", "like", "apples", "the", "##s", "cat"].map(String::from));
        Vocab::from_tokens(t).unwrap()
    }

    #[test]
    fn subword_repetition_example() {
        let v = toy_vocab();
        let seq = v.tokenize("microbiology").unwrap();
        let out = repeat_subwords(&seq, &[0]).unwrap();
        assert_eq!(v.render(&out), "micro micro ##biology");
        assert_eq!(out.word_start, vec![true, false, false]);
        assert_eq!(out.word_count(), 1);
    }

    #[test]
    fn word_repetition_example() {
        let v = toy_vocab();
        let seq = v.tokenize("microbiology").unwrap();
        let out = repeat_words(&seq, &[0]).unwrap();
        assert_eq!(v.render(&out), "micro ##biology micro ##biology");
        assert_eq!(out.word_start, vec![true, false, true, false]);
        assert_eq!(v.detokenize(&out), "microbiology microbiology");
    }

    #[test]
    fn dup_len_edge_cases() {
        let mut rng = Rng::new(0);
        assert_eq!(sample_dup_len(0, 0.5, &mut rng), 0);
        for _ in 0..200 {
            assert!(sample_dup_len(1, 0.32, &mut rng) <= 1);
            assert!(sample_dup_len(7, 0.0, &mut rng) <= 2);
        }
        assert_eq!(dup_len_bound(4, 0.32), 2);
        assert_eq!(dup_len_bound(1, 0.32), 1);
        assert_eq!(dup_len_bound(100, 0.32), 32);
    }

    #[test]
    fn dup_set_edge_cases() {
        let mut rng = Rng::new(1);
        assert!(sample_dup_set(5, 0, &mut rng).unwrap().is_empty());
        assert_eq!(sample_dup_set(5, 5, &mut rng).unwrap(), vec![0, 1, 2, 3, 4]);
        assert!(sample_dup_set(3, 4, &mut rng).is_err());
    }

    #[test]
    fn empty_selection_is_identity() {
        let v = toy_vocab();
        let seq = v.tokenize("i like apples").unwrap();
        assert_eq!(repeat_subwords(&seq, &[]).unwrap(), seq);
        assert_eq!(repeat_words(&seq, &[]).unwrap(), seq);
        assert_eq!(delete_positions(&seq, &[]).unwrap(), seq);
    }

    #[test]
    fn insertion_strategies_place_after_word() {
        let v = toy_vocab();
        let seq = v.tokenize("microbiology cat").unwrap();
        let out = insert_after_words(&seq, &[0], |_, _| (vec![MASK_ID], vec![true])).unwrap();
        assert_eq!(v.render(&out), "micro ##biology [MASK] cat");
        assert_eq!(out.word_count(), 3);
    }

    #[test]
    fn deletion_keeps_first_word_start() {
        let v = toy_vocab();
        let seq = v.tokenize("microbiology cat").unwrap();
        let out = delete_positions(&seq, &[0]).unwrap();
        assert_eq!(v.render(&out), "##biology cat");
        assert_eq!(out.word_start, vec![true, true]);
        assert!(delete_positions(&seq, &[0, 1, 2]).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(AugmentationConfig::new(Strategy::SubwordRepetition, 1.5).is_err());
        assert!(AugmentationConfig::new(Strategy::SubwordRepetition, -0.1).is_err());
        let mut cfg = AugmentationConfig::new(Strategy::InsertStopword, 0.3).unwrap();
        cfg.stopwords.clear();
        assert!(cfg.validate().is_err());
        assert_eq!("word-repetition".parse::<Strategy>().unwrap(), Strategy::WordRepetition);
        assert!("shuffle".parse::<Strategy>().is_err());
    }

    #[test]
    fn bundled_stopwords() {
        let words = parse_stopwords(DEFAULT_STOPWORDS);
        assert_eq!(words.len(), 150);
        assert!(words.contains(&"the".to_string()));
    }

    #[test]
    fn every_strategy_runs() {
        let v = toy_vocab();
        let seq = v.tokenize("i like the cats").unwrap();
        for st in Strategy::ALL {
            let aug = Augmenter::new(AugmentationConfig::new(st, 0.5).unwrap(), &v).unwrap();
            let mut rng = Rng::new(3);
            for _ in 0..50 {
                let out = aug.apply(&seq, &mut rng).unwrap();
                assert!(!out.is_empty());
                assert_eq!(out.ids.len(), out.word_start.len());
                assert!(out.word_start[0]);
            }
        }
    }
}
