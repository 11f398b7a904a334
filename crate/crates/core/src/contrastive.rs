//! Cosine similarity and the InfoNCE objectives.
//!
//! For anchors `h_i`, positives `h_i+` and queued negatives `q_m`:
//!
//! ```text
//! l_i = -log( exp(s(h_i, h_i+)/t) / ( sum_j exp(s(h_i, h_j+)/t) + sum_m exp(s(h_i, q_m)/t) ) )
//! ```
//!
//! `j` runs over every positive in the batch including `i`. The batch loss
//! is the mean of `l_i`. With an empty queue this is the plain in-batch
//! objective; both entry points share one code path, so they agree bitwise.

use crate::error::{Error, Result};
use crate::numeric::{dot, Real, Tape, Tensor, Var};

/// Embeddings with a smaller L2 norm are rejected as degenerate.
pub const MIN_NORM: f64 = 1e-12;

fn check_norm<T: Real>(v: &[T]) -> Result<T> {
    let n = dot(v, v).sqrt();
    if n.as_f64() <= MIN_NORM || !n.is_finite() {
        return Err(Error::DegenerateEmbedding(n.as_f64()));
    }
    Ok(n)
}

pub fn cosine_sim<T: Real>(a: &[T], b: &[T]) -> Result<T> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("cosine of lengths {} and {}", a.len(), b.len())));
    }
    let (na, nb) = (check_norm(a)?, check_norm(b)?);
    // Rounding can push the ratio a hair past the unit interval.
    Ok((dot(a, b) / (na * nb)).max(-T::one()).min(T::one()))
}

/// Inputs of one loss evaluation. `queue` is `[M, d]` and may have zero rows.
#[derive(Debug, Clone)]
pub struct LossBatch<T> {
    pub anchors: Tensor<T>,
    pub positives: Tensor<T>,
    pub queue: Tensor<T>,
    pub temperature: f64,
}

impl<T: Real> LossBatch<T> {
    pub fn new(anchors: Tensor<T>, positives: Tensor<T>, temperature: f64) -> Self {
        let d = anchors.cols();
        LossBatch {
            anchors,
            positives,
            queue: Tensor::zeros(&[0, d]),
            temperature,
        }
    }

    pub fn with_queue(mut self, queue: Tensor<T>) -> Self {
        self.queue = queue;
        self
    }
}

fn check_shapes<T: Real>(anchors: &Tensor<T>, positives: &Tensor<T>, queue: &Tensor<T>, temperature: f64) -> Result<()> {
    if anchors.shape().len() != 2 || positives.shape() != anchors.shape() {
        return Err(Error::Shape(format!(
            "anchors {:?} and positives {:?} must be equal [N, d] matrices",
            anchors.shape(),
            positives.shape()
        )));
    }
    if anchors.rows() == 0 {
        return Err(Error::Input("loss over an empty batch".into()));
    }
    if queue.shape().len() != 2 || (queue.rows() > 0 && queue.cols() != anchors.cols()) {
        return Err(Error::Shape(format!(
            "queue {:?} does not match embedding width {}",
            queue.shape(),
            anchors.cols()
        )));
    }
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::Config(format!("temperature {temperature} must be positive")));
    }
    Ok(())
}

/// Record the queue-extended InfoNCE loss on `tape`. The queue enters as a
/// constant, so no gradient reaches it.
pub fn record_loss<T: Real>(
    tape: &mut Tape<T>,
    anchors: Var,
    positives: Var,
    queue: &Tensor<T>,
    temperature: f64,
) -> Result<Var> {
    check_shapes(tape.value(anchors), tape.value(positives), queue, temperature)?;
    for v in [anchors, positives] {
        let m = tape.value(v);
        for i in 0..m.rows() {
            check_norm(m.row(i))?;
        }
    }
    let n = tape.value(anchors).rows();
    let m = queue.rows();

    let a = tape.normalize_rows(anchors);
    let p = tape.normalize_rows(positives);
    let mut logits = tape.matmul_nt(a, p);
    if m > 0 {
        let mut qn = Vec::with_capacity(queue.len());
        for i in 0..m {
            let row = queue.row(i);
            let norm = check_norm(row)?;
            qn.extend(row.iter().map(|&x| x / norm));
        }
        let q = tape.constant(Tensor::new(queue.shape().to_vec(), qn));
        let neg = tape.matmul_nt(a, q);
        logits = tape.concat_cols(&[logits, neg]);
    }
    let scaled = tape.scale(logits, T::lit(1.0 / temperature));
    let log_probs = tape.log_softmax(scaled);
    let mut diag = Tensor::zeros(&[n, n + m]);
    for i in 0..n {
        diag.data_mut()[i * (n + m) + i] = T::one();
    }
    let diag = tape.constant(diag);
    let picked = tape.mul(log_probs, diag);
    let total = tape.sum(picked);
    Ok(tape.scale(total, T::lit(-1.0 / n as f64)))
}

/// Loss value with the queue's negatives in every denominator.
pub fn queue_info_nce_loss<T: Real>(batch: &LossBatch<T>) -> Result<T> {
    let mut tape = Tape::new();
    let a = tape.constant(batch.anchors.clone());
    let p = tape.constant(batch.positives.clone());
    let l = record_loss(&mut tape, a, p, &batch.queue, batch.temperature)?;
    Ok(tape.value(l).item())
}

/// In-batch loss; the batch must carry an empty queue.
pub fn info_nce_loss<T: Real>(batch: &LossBatch<T>) -> Result<T> {
    if batch.queue.rows() != 0 {
        return Err(Error::Input(format!(
            "in-batch loss given {} queue entries",
            batch.queue.rows()
        )));
    }
    queue_info_nce_loss(batch)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_examples() {
        assert!((cosine_sim(&[3.0, -1.0, 2.0], &[3.0, -1.0, 2.0]).unwrap() - 1.0f64).abs() < 1e-15);
        assert_eq!(cosine_sim(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]).unwrap(), 0.0f64);
        let c: f64 = cosine_sim(&[1.0, 2.0, 2.0], &[2.0, 1.0, 2.0]).unwrap();
        assert!((c - 8.0 / 9.0).abs() < 1e-15);
        assert!(matches!(
            cosine_sim(&[0.0, 0.0], &[1.0, 0.0f64]),
            Err(Error::DegenerateEmbedding(_))
        ));
    }

    #[test]
    fn single_pair_has_zero_loss() {
        let h = Tensor::from_rows(&[vec![0.3, -0.4, 1.0f64]]);
        let hp = Tensor::from_rows(&[vec![2.0, 0.1, -0.5f64]]);
        assert_eq!(info_nce_loss(&LossBatch::new(h, hp, 0.05)).unwrap(), 0.0);
    }

    #[test]
    fn identical_embeddings_give_log_n() {
        let v = vec![0.5, 0.5, -1.0f64];
        let h = Tensor::from_rows(&[v.clone(), v.clone()]);
        let l = info_nce_loss(&LossBatch::new(h.clone(), h, 0.05)).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_queue_entry_closed_form() {
        let h = Tensor::from_rows(&[vec![1.0, 0.0f64]]);
        let q = Tensor::from_rows(&[vec![0.0, 1.0f64]]);
        let l = queue_info_nce_loss(&LossBatch::new(h.clone(), h, 1.0).with_queue(q)).unwrap();
        let e = std::f64::consts::E;
        assert!((l - (-(e / (e + 1.0)).ln())).abs() < 1e-12);
        assert!((l - 0.313_261_687_518_222_9).abs() < 1e-12);
    }

    #[test]
    fn queue_width_and_temperature_validated() {
        let h = Tensor::from_rows(&[vec![1.0, 0.0f64]]);
        let q = Tensor::from_rows(&[vec![0.0, 1.0, 0.0f64]]);
        assert!(queue_info_nce_loss(&LossBatch::new(h.clone(), h.clone(), 1.0).with_queue(q.clone())).is_err());
        assert!(info_nce_loss(&LossBatch::new(h.clone(), h.clone(), 1.0).with_queue(q)).is_err());
        assert!(info_nce_loss(&LossBatch::new(h.clone(), h, 0.0)).is_err());
    }
}
