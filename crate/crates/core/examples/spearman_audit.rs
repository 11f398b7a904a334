//! Rank correlation with ties and the length-difference audit.

use sentence_contrast::eval::{length_bias_audit, spearman, StsPair};

fn main() -> sentence_contrast::Result<()> {
    let gold = [1.0, 2.0, 2.0, 4.0, 5.0];
    let pred = [0.1, 0.4, 0.3, 0.35, 0.9];
    println!("spearman = {:.6}", spearman(&gold, &pred)?);

    let pairs = vec![
        StsPair { sentence_a: "a man plays".into(), sentence_b: "a man is playing".into(), gold: 4.8 },
        StsPair { sentence_a: "a cat sleeps".into(), sentence_b: "a dog barks".into(), gold: 1.0 },
        StsPair { sentence_a: "rain falls".into(), sentence_b: "it rains".into(), gold: 4.0 },
        StsPair {
            sentence_a: "a girl".into(),
            sentence_b: "a young girl is riding a horse on the beach".into(),
            gold: 1.5,
        },
        StsPair {
            sentence_a: "snow".into(),
            sentence_b: "it is snowing heavily in the mountains tonight".into(),
            gold: 3.5,
        },
        StsPair { sentence_a: "hi".into(), sentence_b: "hello there my good old friend".into(), gold: 4.5 },
    ];
    let pred = [0.9, 0.2, 0.7, 0.8, 0.3, 0.1];
    println!("{}", length_bias_audit("example", &pairs, &pred, 3)?);
    Ok(())
}
