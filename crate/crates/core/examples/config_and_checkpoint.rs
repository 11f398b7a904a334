//! Parse a config file, save a checkpoint next to its vocabulary and load
//! both back.

use std::path::Path;

use sentence_contrast::encoder::{read_checkpoint, write_checkpoint, EncoderParams};
use sentence_contrast::numeric::Rng;
use sentence_contrast::tokenizer::Vocab;
use sentence_contrast::train::TrainConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut config = TrainConfig::default();
    config.apply_text("# smaller model\nwidth = 32\nheads = 2\nff-width = 64\nstrategy = word-repetition\n", Path::new("inline"))?;
    config.set("seed", "7")?;
    println!("{config}");

    let vocab = Vocab::build(["one sentence", "another sentence"], 50)?;
    let params = EncoderParams::<f32>::init(config.encoder_config(vocab.len()), &mut Rng::new(config.seed))?;

    let dir = std::env::temp_dir().join("sentence-contrast-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("model.ckpt");
    write_checkpoint(&path, &params, vocab.fingerprint())?;
    vocab.save(&dir.join("vocab.txt"))?;

    let (header, loaded) = read_checkpoint(&path)?;
    let vocab_back = Vocab::load(&dir.join("vocab.txt"))?;
    println!("{header:?}");
    println!("identical parameters: {}", loaded == params);
    println!("vocabulary matches: {}", header.vocab_hash == vocab_back.fingerprint());
    Ok(())
}
