//! InfoNCE with and without a queue of extra negatives, plus the gradient.

use sentence_contrast::contrastive::{info_nce_loss, queue_info_nce_loss, record_loss, LossBatch};
use sentence_contrast::numeric::{Rng, Tape, Tensor};

fn random(rng: &mut Rng, n: usize, d: usize) -> Tensor<f64> {
    Tensor::new(vec![n, d], (0..n * d).map(|_| rng.normal()).collect())
}

fn main() -> sentence_contrast::Result<()> {
    let mut rng = Rng::new(3);
    let anchors = random(&mut rng, 4, 8);
    let noise = random(&mut rng, 4, 8);
    let positives = Tensor::new(
        vec![4, 8],
        anchors.data().iter().zip(noise.data()).map(|(a, n)| a + 0.3 * n).collect(),
    );
    let queue = random(&mut rng, 16, 8);

    let batch = LossBatch::new(anchors.clone(), positives.clone(), 0.05);
    println!("in-batch loss:        {:.6}", info_nce_loss(&batch)?);
    let with_queue = batch.with_queue(queue.clone());
    println!("loss with 16 queued:  {:.6}", queue_info_nce_loss(&with_queue)?);

    let mut tape = Tape::new();
    let h = tape.param(anchors, 0);
    let hp = tape.param(positives, 1);
    let loss = record_loss(&mut tape, h, hp, &queue, 0.05)?;
    let grads = tape.backward(loss)?;
    let g = grads.get(h).expect("anchor gradient");
    println!("|dL/dh| = {:.6}", g.data().iter().map(|x| x * x).sum::<f64>().sqrt());
    Ok(())
}
