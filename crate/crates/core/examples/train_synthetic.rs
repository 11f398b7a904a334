//! Train the default encoder for one epoch on a generated corpus and
//! compare dev Spearman before and after.
//!
//! cargo run --release --example train_synthetic -- [seed]

use sentence_contrast::synthetic::generate;
use sentence_contrast::tokenizer::Vocab;
use sentence_contrast::train::{dev_spearman, run, TrainConfig, Trainer};

fn main() -> sentence_contrast::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let data = generate(2000, 200, 7);
    let config = TrainConfig {
        seed,
        eval_every: 4,
        ..Default::default()
    };
    let vocab = Vocab::build(data.corpus.iter().map(String::as_str), config.vocab_size)?;
    let untrained = Trainer::<f32>::new(config.clone(), vocab.len())?;
    println!("untrained dev spearman: {:.4}", dev_spearman(&data.dev, &untrained.encoder, &vocab)?);

    let outcome = run::<f32>(&config, &vocab, &data.corpus, Some(&data.dev), |r| {
        if let Some(s) = r.dev_spearman {
            println!("step {:>3} loss {:.4} queue {:>3} dev {:.4}", r.step, r.loss, r.queue_fill, s);
        }
    })?;
    println!(
        "best dev spearman {:.4} at step {}",
        outcome.best_dev.unwrap_or(f64::NAN),
        outcome.best_step
    );
    Ok(())
}
