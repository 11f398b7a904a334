//! Learn a sub-word vocabulary from a few lines and tokenize a sentence.
//!
//! cargo run --example tokenize -- "microphones and biologists"

use sentence_contrast::tokenizer::Vocab;

fn main() -> sentence_contrast::Result<()> {
    let corpus = [
        "the microscope sat next to the microphone",
        "a microbiologist studies microbes",
        "biology and geology are sciences",
    ];
    let vocab = Vocab::build(corpus, 120)?;
    println!("vocabulary: {} tokens", vocab.len());

    let sentence = std::env::args().nth(1).unwrap_or_else(|| "microphones and biologists".into());
    let seq = vocab.tokenize(&sentence)?;
    println!("input:   {sentence}");
    println!("tokens:  {}", vocab.render(&seq));
    println!("ids:     {:?}", seq.ids);
    println!("words:   {}", seq.word_count());
    println!("decoded: {}", vocab.detokenize(&seq));
    Ok(())
}
