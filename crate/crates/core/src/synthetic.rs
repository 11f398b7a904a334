//! Template-generated corpus and scored paraphrase pairs for small
//! end-to-end runs.
//!
//! A sentence expresses four meaning slots (adjective, subject, verb,
//! place). Surface choices that leave the meaning alone (preposition,
//! trailing adverbials) vary freely, which also varies sentence length.
//! The adverbials come from a small, frequent set so that they carry
//! little information about which sentence is which.
//! A pair's gold score is `5 * shared_slots / 4`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::eval::StsPair;
use crate::numeric::Rng;

const ADJECTIVES: &[&str] = &[
    "old", "young", "small", "tall", "happy", "tired", "quiet", "busy", "angry", "clever", "lazy", "brave",
    "proud", "shy", "calm", "noisy", "gentle", "curious", "hungry", "sleepy", "friendly", "nervous", "polite",
    "clumsy",
];
const SUBJECTS: &[&str] = &[
    "cat", "dog", "farmer", "teacher", "child", "doctor", "bird", "horse", "pilot", "singer", "baker", "sailor",
    "student", "painter", "fox", "soldier", "nurse", "driver", "monkey", "writer", "hunter", "lawyer",
    "rabbit", "goat", "poet", "miner", "tiger", "chef", "judge", "clown", "sheep", "priest",
];
const VERBS: &[&str] = &[
    "walks", "runs", "sleeps", "waits", "sings", "reads", "eats", "plays", "works", "dances", "sits", "stands",
    "shouts", "laughs", "paints", "cries", "jumps", "swims", "writes", "waves", "smiles", "whistles",
    "kneels", "rests",
];
const PLACES: &[&str] = &[
    "park", "garden", "kitchen", "station", "library", "river", "market", "school", "church", "harbor", "forest",
    "bridge", "hospital", "museum", "beach", "castle", "village", "factory", "stadium", "airport", "temple",
    "valley", "prison", "theater",
];
const PREPOSITIONS: &[&str] = &["near", "in", "by", "at", "beside"];
const FILLERS: &[&str] = &["today", "again", "as usual"];

/// One meaning: indices into the slot tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Meaning {
    pub adjective: usize,
    pub subject: usize,
    pub verb: usize,
    pub place: usize,
}

impl Meaning {
    pub fn sample(rng: &mut Rng) -> Self {
        Meaning {
            adjective: pick(rng, ADJECTIVES.len()),
            subject: pick(rng, SUBJECTS.len()),
            verb: pick(rng, VERBS.len()),
            place: pick(rng, PLACES.len()),
        }
    }

    pub fn shared(&self, other: &Meaning) -> usize {
        [
            self.adjective == other.adjective,
            self.subject == other.subject,
            self.verb == other.verb,
            self.place == other.place,
        ]
        .iter()
        .filter(|&&b| b)
        .count()
    }

    /// Render with a random surface form carrying up to `max_fillers`
    /// trailing adverbials.
    pub fn realize(&self, max_fillers: usize, rng: &mut Rng) -> String {
        let mut s = format!(
            "the {} {} {} {} the {}",
            ADJECTIVES[self.adjective],
            SUBJECTS[self.subject],
            VERBS[self.verb],
            PREPOSITIONS[pick(rng, PREPOSITIONS.len())],
            PLACES[self.place]
        );
        for _ in 0..rng.range_inclusive(0, max_fillers) {
            s.push(' ');
            s.push_str(FILLERS[pick(rng, FILLERS.len())]);
        }
        s
    }
}

fn pick(rng: &mut Rng, n: usize) -> usize {
    rng.below(n as u64) as usize
}

fn resample_other(rng: &mut Rng, n: usize, current: usize) -> usize {
    (current + 1 + pick(rng, n - 1)) % n
}

/// Copy of `m` where each slot survives with probability `keep`.
fn perturb(m: &Meaning, keep: f64, rng: &mut Rng) -> Meaning {
    let mut slot = |v: usize, n: usize| {
        if rng.next_f64() < keep {
            v
        } else {
            resample_other(rng, n, v)
        }
    };
    Meaning {
        adjective: slot(m.adjective, ADJECTIVES.len()),
        subject: slot(m.subject, SUBJECTS.len()),
        verb: slot(m.verb, VERBS.len()),
        place: slot(m.place, PLACES.len()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub corpus: Vec<String>,
    pub dev: Vec<StsPair>,
}

pub const MAX_FILLERS: usize = 3;

/// `corpus_size` training sentences and `dev_size` scored pairs. The two
/// parts come from independent streams of `seed`.
pub fn generate(corpus_size: usize, dev_size: usize, seed: u64) -> SyntheticData {
    let mut root = Rng::new(seed);
    let mut crng = root.fork();
    let mut drng = root.fork();
    let corpus = (0..corpus_size)
        .map(|_| Meaning::sample(&mut crng).realize(MAX_FILLERS, &mut crng))
        .collect();
    let dev = (0..dev_size)
        .map(|_| {
            let a = Meaning::sample(&mut drng);
            let keep = drng.next_f64();
            let b = perturb(&a, keep, &mut drng);
            StsPair {
                sentence_a: a.realize(MAX_FILLERS, &mut drng),
                sentence_b: b.realize(MAX_FILLERS, &mut drng),
                gold: 5.0 * a.shared(&b) as f64 / 4.0,
            }
        })
        .collect();
    SyntheticData { corpus, dev }
}

impl SyntheticData {
    /// Write `corpus.txt` and `dev.tsv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let corpus = dir.join("corpus.txt");
        let mut text = self.corpus.join("\n");
        text.push('\n');
        fs::write(&corpus, text).map_err(|e| Error::io(&corpus, e))?;
        let dev = dir.join("dev.tsv");
        let text: String = self
            .dev
            .iter()
            .map(|p| format!("{}\t{}\t{}\n", p.gold, p.sentence_a, p.sentence_b))
            .collect();
        fs::write(&dev, text).map_err(|e| Error::io(&dev, e))
    }
}
