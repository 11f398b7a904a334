//! EMA tracking of a moving encoder and a FIFO queue of its embeddings.

use sentence_contrast::encoder::{EncoderConfig, EncoderParams};
use sentence_contrast::momentum::{EmbeddingQueue, MomentumState};
use sentence_contrast::numeric::Rng;
use sentence_contrast::tokenizer::Vocab;

fn distance(a: &EncoderParams<f32>, b: &EncoderParams<f32>) -> f32 {
    a.tensors
        .iter()
        .zip(&b.tensors)
        .flat_map(|(x, y)| x.data().iter().zip(y.data()))
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f32>()
        .sqrt()
}

fn main() -> sentence_contrast::Result<()> {
    let lines = ["the cat sleeps", "a bird sings", "the river runs", "a child reads"];
    let vocab = Vocab::build(lines, 100)?;
    let cfg = EncoderConfig {
        width: 16,
        heads: 2,
        ff_width: 32,
        ..EncoderConfig::new(vocab.len())
    };
    let start = EncoderParams::<f32>::init(cfg, &mut Rng::new(1))?;
    let target = EncoderParams::<f32>::init(cfg, &mut Rng::new(2))?;

    let mut momentum = MomentumState::new(&start, 0.9)?;
    for k in 0..=30 {
        if k % 10 == 0 {
            println!("after {k:>2} updates: distance to target {:.4}", distance(&momentum.params, &target));
        }
        momentum.ema_update(&target)?;
    }

    let seqs: Vec<_> = lines.iter().map(|l| vocab.tokenize(l)).collect::<Result<_, _>>()?;
    let mut queue = EmbeddingQueue::new(6, cfg.width);
    for round in 0..3 {
        let evicted = queue.enqueue(&momentum.encode(&seqs)?)?;
        println!("round {round}: queue holds {}, evicted {}", queue.len(), evicted.len());
    }
    Ok(())
}
