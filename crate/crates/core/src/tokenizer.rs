//! Sub-word vocabulary construction and greedy longest-match tokenization.
//!
//! Sub-words that do not begin a word carry the `##` continuation prefix, so
//! `microbiology` may segment as `micro ##biology`. Every sequence records
//! which tokens start a new word; augmentation uses this to tell sub-word
//! repetition apart from whole-word repetition.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const MASK: &str = "[MASK]";

/// Reserved tokens, in id order.
pub const SPECIALS: [&str; 5] = [PAD, UNK, CLS, SEP, MASK];

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const CLS_ID: u32 = 2;
pub const SEP_ID: u32 = 3;
pub const MASK_ID: u32 = 4;

pub const CONTINUATION: &str = "##";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

/// A sentence as content sub-word ids (no specials) with word boundaries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
    /// `true` where a token begins a new word.
    pub word_start: Vec<bool>,
    pub raw: String,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn word_count(&self) -> usize {
        self.word_start.iter().filter(|&&s| s).count()
    }

    /// Token ranges `[start, end)` of each word.
    pub fn word_spans(&self) -> Vec<(usize, usize)> {
        let mut spans = Vec::new();
        for (i, &start) in self.word_start.iter().enumerate() {
            if start || spans.is_empty() {
                spans.push((i, i + 1));
            } else if let Some(last) = spans.last_mut() {
                last.1 = i + 1;
            }
        }
        spans
    }
}

fn normalize(sentence: &str) -> Vec<String> {
    sentence
        .split_whitespace()
        .map(str::to_lowercase)
        .collect()
}

/// Lowercased whitespace-delimited words.
pub fn tokenize_words(sentence: &str) -> Result<Vec<String>> {
    let words = normalize(sentence);
    if words.is_empty() {
        return Err(Error::Input("empty sentence".into()));
    }
    Ok(words)
}

fn initial_symbols(word: &str) -> Vec<String> {
    word.chars()
        .enumerate()
        .map(|(i, c)| {
            if i == 0 {
                c.to_string()
            } else {
                format!("{CONTINUATION}{c}")
            }
        })
        .collect()
}

fn merge_symbols(a: &str, b: &str) -> String {
    format!("{a}{}", b.strip_prefix(CONTINUATION).unwrap_or(b))
}

impl Vocab {
    /// Learn a sub-word inventory by repeatedly merging the most frequent
    /// adjacent symbol pair (ties broken by lexicographic order) until the
    /// vocabulary reaches `target_size` or no pair remains.
    ///
    /// The starting alphabet holds every character in both its word-initial
    /// and `##`-continuation forms as they occur in the corpus;
    /// `target_size` must cover the specials plus that alphabet.
    pub fn build<'a>(lines: impl IntoIterator<Item = &'a str>, target_size: usize) -> Result<Vocab> {
        let mut word_freq: BTreeMap<String, u64> = BTreeMap::new();
        for line in lines {
            for w in normalize(line) {
                *word_freq.entry(w).or_default() += 1;
            }
        }
        if word_freq.is_empty() {
            return Err(Error::Input("empty corpus".into()));
        }

        let mut words: Vec<(Vec<String>, u64)> = word_freq
            .iter()
            .map(|(w, &f)| (initial_symbols(w), f))
            .collect();
        let alphabet: BTreeSet<String> = words.iter().flat_map(|(s, _)| s.iter().cloned()).collect();
        let floor = SPECIALS.len() + alphabet.len();
        if target_size < floor {
            return Err(Error::Config(format!(
                "target vocabulary size {target_size} is below specials + alphabet ({floor})"
            )));
        }

        let mut vocab = Vocab::from_tokens(
            SPECIALS
                .iter()
                .map(|s| s.to_string())
                .chain(alphabet)
                .collect(),
        )?;

        while vocab.len() < target_size {
            let mut pairs: BTreeMap<(&str, &str), u64> = BTreeMap::new();
            for (syms, f) in &words {
                for w in syms.windows(2) {
                    *pairs.entry((w[0].as_str(), w[1].as_str())).or_default() += f;
                }
            }
            // BTreeMap iteration is ordered, so the first maximum is the
            // lexicographically smallest pair.
            let Some(((a, b), _)) = pairs
                .iter()
                .fold(None, |best: Option<(&(&str, &str), u64)>, (k, &c)| match best {
                    Some((_, bc)) if bc >= c => best,
                    _ => Some((k, c)),
                })
                .map(|(k, c)| (*k, c))
            else {
                break;
            };
            let (a, b) = (a.to_string(), b.to_string());
            let merged = merge_symbols(&a, &b);
            for (syms, _) in &mut words {
                let mut i = 0;
                while i + 1 < syms.len() {
                    if syms[i] == a && syms[i + 1] == b {
                        syms[i] = merged.clone();
                        syms.remove(i + 1);
                    }
                    i += 1;
                }
            }
            if !vocab.index.contains_key(&merged) {
                vocab.push(merged);
            }
        }
        Ok(vocab)
    }

    /// Vocabulary from an explicit token list; specials must come first in
    /// their reserved order.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Vocab> {
        if tokens.len() < SPECIALS.len() || tokens[..SPECIALS.len()] != SPECIALS {
            return Err(Error::Input(format!(
                "vocabulary must start with {}",
                SPECIALS.join(" ")
            )));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(Error::Input(format!("invalid token {t:?} at id {i}")));
            }
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(Error::Input(format!("duplicate token {t:?}")));
            }
        }
        Ok(Vocab { tokens, index })
    }

    fn push(&mut self, token: String) {
        self.index.insert(token.clone(), self.tokens.len() as u32);
        self.tokens.push(token);
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn is_special(id: u32) -> bool {
        (id as usize) < SPECIALS.len()
    }

    /// Ids that are not reserved specials.
    pub fn content_ids(&self) -> std::ops::Range<u32> {
        SPECIALS.len() as u32..self.tokens.len() as u32
    }

    pub fn is_continuation(&self, id: u32) -> bool {
        self.token(id).is_some_and(|t| t.starts_with(CONTINUATION))
    }

    /// 64-bit FNV-1a over the newline-joined token list.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for t in &self.tokens {
            for &b in t.as_bytes().iter().chain(b"\n") {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }

    /// Greedy longest-match segmentation of every lowercased word.
    pub fn tokenize(&self, sentence: &str) -> Result<TokenSequence> {
        let words = tokenize_words(sentence)?;
        let mut ids = Vec::new();
        let mut word_start = Vec::new();
        for word in &words {
            let first = ids.len();
            self.segment_word(word, &mut ids);
            word_start.extend((first..ids.len()).map(|i| i == first));
        }
        Ok(TokenSequence {
            ids,
            word_start,
            raw: words.join(" "),
        })
    }

    fn segment_word(&self, word: &str, out: &mut Vec<u32>) {
        let chars: Vec<char> = word.chars().collect();
        let mut start = 0;
        let mut in_unknown = false;
        while start < chars.len() {
            let prefix = if start == 0 { "" } else { CONTINUATION };
            let mut found = None;
            for end in (start + 1..=chars.len()).rev() {
                let piece: String = prefix.chars().chain(chars[start..end].iter().copied()).collect();
                if let Some(id) = self.id(&piece) {
                    found = Some((id, end));
                    break;
                }
            }
            match found {
                Some((id, end)) => {
                    out.push(id);
                    start = end;
                    in_unknown = false;
                }
                None => {
                    // Consecutive unmatched characters collapse into one unknown.
                    if !in_unknown {
                        out.push(UNK_ID);
                        in_unknown = true;
                    }
                    start += 1;
                }
            }
        }
    }

    /// Text form of a sequence: continuation pieces glued to their word.
    pub fn detokenize(&self, seq: &TokenSequence) -> String {
        let mut out = String::new();
        for (i, &id) in seq.ids.iter().enumerate() {
            let tok = self.token(id).unwrap_or(UNK);
            match tok.strip_prefix(CONTINUATION) {
                Some(rest) if !seq.word_start[i] => out.push_str(rest),
                _ => {
                    if !out.is_empty() {
                        out.push(' ');
                    }
                    out.push_str(tok.strip_prefix(CONTINUATION).unwrap_or(tok));
                }
            }
        }
        out
    }

    /// Space-separated token strings, for inspection.
    pub fn render(&self, seq: &TokenSequence) -> String {
        seq.ids
            .iter()
            .map(|&id| self.token(id).unwrap_or(UNK))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// One token per line; line index is the id.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.tokens.join("\n");
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Vocab> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Vocab::from_tokens(text.lines().map(str::to_string).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Vocab {
        let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        tokens.extend(["i", "like", "apples", "micro", "##biology", "a", "##b"].map(String::from));
        Vocab::from_tokens(tokens).unwrap()
    }

    #[test]
    fn specials_have_fixed_ids() {
        let v = toy();
        for (i, s) in SPECIALS.iter().enumerate() {
            assert_eq!(v.id(s), Some(i as u32));
        }
        assert_eq!(v.id(MASK), Some(MASK_ID));
    }

    #[test]
    fn words_are_lowercased_and_split() {
        assert_eq!(tokenize_words("I like  apples").unwrap(), vec!["i", "like", "apples"]);
        assert_eq!(
            tokenize_words("microbiology microbiology").unwrap(),
            vec!["microbiology", "microbiology"]
        );
        assert_eq!(tokenize_words("Word").unwrap(), vec!["word"]);
        assert!(tokenize_words(" \t ").is_err());
    }

    #[test]
    fn segments_continuations() {
        let v = toy();
        let s = v.tokenize("Microbiology").unwrap();
        assert_eq!(v.render(&s), "micro ##biology");
        assert_eq!(s.word_start, vec![true, false]);
    }

    #[test]
    fn whole_words_map_one_to_one() {
        let v = toy();
        let s = v.tokenize("I like apples").unwrap();
        assert_eq!(s.len(), 3);
        assert!(s.word_start.iter().all(|&b| b));
        assert_eq!(v.detokenize(&s), "i like apples");
    }

    #[test]
    fn unmatched_word_is_single_unknown() {
        let v = toy();
        let s = v.tokenize("zzz qqq").unwrap();
        assert_eq!(s.ids, vec![UNK_ID, UNK_ID]);
        assert_eq!(s.word_start, vec![true, true]);
        // A partial match keeps the matched pieces.
        let s = v.tokenize("azb").unwrap();
        assert_eq!(v.render(&s), "a [UNK] ##b");
    }

    #[test]
    fn empty_sentence_rejected() {
        assert!(toy().tokenize("   ").is_err());
    }

    #[test]
    fn build_saturates_single_word() {
        let corpus = vec!["banana"; 10];
        let v = Vocab::build(corpus, 100).unwrap();
        assert!(v.id("banana").is_some());
        let s = v.tokenize("banana").unwrap();
        assert_eq!(s.len(), 1);
    }

    #[test]
    fn build_rejects_small_target_and_empty_corpus() {
        // alphabet: a, ##b, ##c
        assert!(matches!(Vocab::build(["abc"], 7), Err(Error::Config(_))));
        assert!(Vocab::build(["abc"], 8).is_ok());
        assert!(matches!(Vocab::build(["", "  "], 100), Err(Error::Input(_))));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        let v = toy();
        v.save(&path).unwrap();
        let back = Vocab::load(&path).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.fingerprint(), v.fingerprint());
    }

    #[test]
    fn from_tokens_validates() {
        assert!(Vocab::from_tokens(vec!["a".into()]).is_err());
        let mut t: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        t.push("x".into());
        t.push("x".into());
        assert!(Vocab::from_tokens(t).is_err());
    }
}
