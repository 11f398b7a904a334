//! Embed sentences with a freshly initialized encoder and compare them.

use sentence_contrast::encoder::{EncoderConfig, EncoderParams};
use sentence_contrast::eval::embed_sentences;
use sentence_contrast::numeric::Rng;
use sentence_contrast::tokenizer::Vocab;

fn main() -> sentence_contrast::Result<()> {
    let sentences = ["a dog runs in the park", "a dog runs in the park today", "the market opens early"];
    let vocab = Vocab::build(sentences, 200)?;
    let params = EncoderParams::<f32>::init(EncoderConfig::new(vocab.len()), &mut Rng::new(1))?;
    println!("{} parameters", params.num_scalars());

    let rows = embed_sentences(&sentences, &params, &vocab)?;
    for (s, row) in sentences.iter().zip(&rows) {
        let head: Vec<String> = row[..4].iter().map(|x| format!("{x:+.3}")).collect();
        println!("{s:<32} [{} ...]", head.join(", "));
    }
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            let c = sentence_contrast::contrastive::cosine_sim(&rows[i], &rows[j])?;
            println!("cos({i}, {j}) = {c:.4}");
        }
    }
    Ok(())
}
