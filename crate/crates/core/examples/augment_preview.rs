//! Show every augmentation strategy on one sentence.
//!
//! cargo run --example augment_preview -- "a man is playing the guitar" 3

use sentence_contrast::augment::{AugmentationConfig, Augmenter, Strategy};
use sentence_contrast::numeric::Rng;
use sentence_contrast::tokenizer::Vocab;

fn main() -> sentence_contrast::Result<()> {
    let mut args = std::env::args().skip(1);
    let sentence = args.next().unwrap_or_else(|| "a man is playing the guitar".into());
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);

    let stopwords = AugmentationConfig::default().stopwords;
    let lines = std::iter::once(sentence.as_str()).chain(stopwords.iter().map(String::as_str));
    let vocab = Vocab::build(lines, usize::MAX)?;
    let seq = vocab.tokenize(&sentence)?;
    println!("original: {sentence}");
    for strategy in Strategy::ALL {
        let augmenter = Augmenter::new(AugmentationConfig::new(strategy, 0.32)?, &vocab)?;
        let out = augmenter.apply(&seq, &mut Rng::new(seed))?;
        println!("{:<20} {}", strategy.name(), vocab.render(&out));
    }
    Ok(())
}
