//! STS ingestion, cosine scoring, tie-aware Spearman correlation and the
//! length-difference audit.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::contrastive::cosine_sim;
use crate::encoder::{encode_batch, EncoderParams};
use crate::error::{Error, Result};
use crate::numeric::{Real, Rng};
use crate::tokenizer::Vocab;

/// Default split point of the audit, in words.
pub const DEFAULT_AUDIT_THRESHOLD: usize = 3;

const SCORE_BATCH: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct StsPair {
    pub sentence_a: String,
    pub sentence_b: String,
    pub gold: f64,
}

/// Parse `gold<TAB>sentence_a<TAB>sentence_b` lines. Blank lines are skipped.
pub fn parse_sts(text: &str, path: &Path) -> Result<Vec<StsPair>> {
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(err(format!("expected 3 tab-separated fields, found {}", fields.len())));
        }
        let gold: f64 = fields[0]
            .trim()
            .parse()
            .map_err(|_| err(format!("unparseable score {:?}", fields[0])))?;
        if !(0.0..=5.0).contains(&gold) {
            return Err(err(format!("score {gold} outside [0, 5]")));
        }
        let (a, b) = (fields[1].trim(), fields[2].trim());
        if a.is_empty() || b.is_empty() {
            return Err(err("empty sentence".into()));
        }
        pairs.push(StsPair {
            sentence_a: a.to_string(),
            sentence_b: b.to_string(),
            gold,
        });
    }
    Ok(pairs)
}

pub fn load_sts(path: &Path) -> Result<Vec<StsPair>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_sts(&text, path)
}

/// Cosine similarity of each pair under the encoder with dropout off.
/// Each distinct sentence is encoded once.
pub fn score_pairs<T: Real>(pairs: &[StsPair], params: &EncoderParams<T>, vocab: &Vocab) -> Result<Vec<f64>> {
    if pairs.is_empty() {
        return Err(Error::Input("no pairs to score".into()));
    }
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut unique = Vec::new();
    for p in pairs {
        for s in [p.sentence_a.as_str(), p.sentence_b.as_str()] {
            index.entry(s).or_insert_with(|| {
                unique.push(s);
                unique.len() - 1
            });
        }
    }
    let embeddings = embed_sentences(&unique, params, vocab)?;
    pairs
        .iter()
        .map(|p| {
            let a = &embeddings[index[p.sentence_a.as_str()]];
            let b = &embeddings[index[p.sentence_b.as_str()]];
            Ok(cosine_sim(a, b)?.as_f64())
        })
        .collect()
}

/// Dropout-off embeddings of raw sentences, one row per sentence.
pub fn embed_sentences<T: Real>(sentences: &[&str], params: &EncoderParams<T>, vocab: &Vocab) -> Result<Vec<Vec<T>>> {
    let mut rows = Vec::with_capacity(sentences.len());
    let mut rng = Rng::new(0);
    for chunk in sentences.chunks(SCORE_BATCH) {
        let seqs = chunk.iter().map(|s| vocab.tokenize(s)).collect::<Result<Vec<_>>>()?;
        rows.extend(encode_batch(&seqs, params, false, &mut rng)?.to_rows());
    }
    Ok(rows)
}

/// Ranks starting at 1; tied values share the mean of the ranks they span.
pub fn average_ranks(values: &[f64]) -> Result<Vec<f64>> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("rank input".into()));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // Positions start..end hold ranks start+1 ..= end.
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    Ok(ranks)
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("correlation of lengths {} and {}", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::UndefinedCorrelation(format!("{} observations", x.len())));
    }
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("constant input".into()));
    }
    // sqrt of a product: a correctly rounded sqrt of s*s gives back s, so
    // perfectly (anti)correlated inputs land exactly on +-1.
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's rank correlation: Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("correlation of lengths {} and {}", x.len(), y.len())));
    }
    pearson(&average_ranks(x)?, &average_ranks(y)?)
}

/// Unweighted mean of per-dataset correlations.
pub fn average(scores: &[f64]) -> Option<f64> {
    (!scores.is_empty()).then(|| scores.iter().sum::<f64>() / scores.len() as f64)
}

pub fn word_count(sentence: &str) -> usize {
    sentence.split_whitespace().count()
}

/// One side of the audit split. `spearman` is `None` when undefined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AuditGroup {
    pub pairs: usize,
    pub spearman: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub dataset: String,
    pub threshold: usize,
    /// Pairs whose word counts differ by at most `threshold`.
    pub small: AuditGroup,
    /// Pairs whose word counts differ by more than `threshold`.
    pub large: AuditGroup,
}

fn group(gold: &[f64], pred: &[f64]) -> AuditGroup {
    AuditGroup {
        pairs: gold.len(),
        spearman: spearman(gold, pred).ok(),
    }
}

pub fn length_bias_audit(
    dataset: &str,
    pairs: &[StsPair],
    predictions: &[f64],
    threshold: usize,
) -> Result<AuditReport> {
    if pairs.len() != predictions.len() {
        return Err(Error::Shape(format!(
            "{} pairs but {} predictions",
            pairs.len(),
            predictions.len()
        )));
    }
    let (mut sg, mut sp, mut lg, mut lp) = (vec![], vec![], vec![], vec![]);
    for (p, &y) in pairs.iter().zip(predictions) {
        if word_count(&p.sentence_a).abs_diff(word_count(&p.sentence_b)) <= threshold {
            sg.push(p.gold);
            sp.push(y);
        } else {
            lg.push(p.gold);
            lp.push(y);
        }
    }
    Ok(AuditReport {
        dataset: dataset.to_string(),
        threshold,
        small: group(&sg, &sp),
        large: group(&lg, &lp),
    })
}

fn fmt_r(r: Option<f64>) -> String {
    r.map_or_else(|| "undefined".to_string(), |r| format!("{r:.6}"))
}

impl AuditReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// Line-oriented `key = value` form.
impl fmt::Display for AuditReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "dataset = {}", self.dataset)?;
        writeln!(f, "threshold = {}", self.threshold)?;
        writeln!(f, "small.pairs = {}", self.small.pairs)?;
        writeln!(f, "small.spearman = {}", fmt_r(self.small.spearman))?;
        writeln!(f, "large.pairs = {}", self.large.pairs)?;
        write!(f, "large.spearman = {}", fmt_r(self.large.spearman))
    }
}
