//! Momentum (EMA shadow) encoder and the FIFO queue of its embeddings.

use std::collections::VecDeque;

use crate::encoder::{encode_batch, EncoderParams};
use crate::error::{Error, Result};
use crate::numeric::{Real, Rng, Tensor};
use crate::tokenizer::TokenSequence;

/// Shadow parameters `theta_m`, moved toward the trained encoder by
/// `theta_m <- lambda * theta_m + (1 - lambda) * theta_e`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumState<T> {
    pub params: EncoderParams<T>,
    lambda: f64,
}

fn check_lambda(lambda: f64) -> Result<()> {
    if (0.0..1.0).contains(&lambda) {
        Ok(())
    } else {
        Err(Error::Config(format!("momentum {lambda} must lie in [0, 1)")))
    }
}

impl<T: Real> MomentumState<T> {
    /// Start as an exact copy of the encoder.
    pub fn new(encoder: &EncoderParams<T>, lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        Ok(MomentumState {
            params: encoder.clone(),
            lambda,
        })
    }

    /// Resume from stored shadow parameters.
    pub fn from_params(params: EncoderParams<T>, lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        Ok(MomentumState { params, lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn ema_update(&mut self, encoder: &EncoderParams<T>) -> Result<()> {
        if encoder.tensors.len() != self.params.tensors.len()
            || encoder.tensors.iter().zip(&self.params.tensors).any(|(a, b)| a.shape() != b.shape())
        {
            return Err(Error::Shape("encoder and momentum parameters differ in shape".into()));
        }
        let keep = T::lit(self.lambda);
        let take = T::lit(1.0 - self.lambda);
        for (m, e) in self.params.tensors.iter_mut().zip(&encoder.tensors) {
            for (x, &y) in m.data_mut().iter_mut().zip(e.data()) {
                // Skipping equal entries keeps the fixed point exact.
                if *x != y {
                    *x = keep * *x + take * y;
                }
            }
        }
        Ok(())
    }

    /// Embeddings from the shadow encoder with dropout off.
    pub fn encode(&self, seqs: &[TokenSequence]) -> Result<Tensor<T>> {
        // The rng is never consulted with dropout off.
        encode_batch(seqs, &self.params, false, &mut Rng::new(0))
    }
}

/// Fixed-capacity FIFO of embeddings, oldest first. Entries are plain
/// values and carry no link to any gradient tape.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingQueue<T> {
    capacity: usize,
    width: usize,
    entries: VecDeque<Vec<T>>,
}

impl<T: Real> EmbeddingQueue<T> {
    /// A capacity of zero gives a queue that never holds anything.
    pub fn new(capacity: usize, width: usize) -> Self {
        EmbeddingQueue {
            capacity,
            width,
            entries: VecDeque::with_capacity(capacity),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &[T]> {
        self.entries.iter().map(Vec::as_slice)
    }

    /// Append the rows of `batch` in order and return whatever fell out of
    /// the front, oldest first. Rows that do not fit at all are returned too.
    pub fn enqueue(&mut self, batch: &Tensor<T>) -> Result<Vec<Vec<T>>> {
        if batch.shape().len() != 2 || batch.cols() != self.width {
            return Err(Error::Shape(format!(
                "enqueue of {:?} into a queue of width {}",
                batch.shape(),
                self.width
            )));
        }
        let mut evicted = Vec::new();
        for i in 0..batch.rows() {
            self.entries.push_back(batch.row(i).to_vec());
            if self.entries.len() > self.capacity {
                evicted.extend(self.entries.pop_front());
            }
        }
        Ok(evicted)
    }

    /// Current contents as an `[fill, width]` matrix.
    pub fn view(&self) -> Tensor<T> {
        let data = self.entries.iter().flatten().copied().collect();
        Tensor::new(vec![self.entries.len(), self.width], data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::EncoderConfig;

    fn rows(start: usize, n: usize) -> Tensor<f64> {
        Tensor::from_rows(&(start..start + n).map(|i| vec![i as f64, 0.5]).collect::<Vec<_>>())
    }

    #[test]
    fn three_batches_fill_default_capacity() {
        let mut q = EmbeddingQueue::new(160, 2);
        assert!(q.enqueue(&rows(0, 64)).unwrap().is_empty());
        assert!(q.enqueue(&rows(64, 64)).unwrap().is_empty());
        let ev = q.enqueue(&rows(128, 64)).unwrap();
        assert_eq!(q.len(), 160);
        assert_eq!(ev.len(), 32);
        assert!(ev.iter().enumerate().all(|(i, r)| r[0] == i as f64));
        assert_eq!(q.entries().next().unwrap()[0], 32.0);
    }

    #[test]
    fn oversized_batch_keeps_newest() {
        let mut q = EmbeddingQueue::new(3, 2);
        let ev = q.enqueue(&rows(0, 5)).unwrap();
        assert_eq!(ev.len(), 2);
        assert_eq!(q.view().data().iter().step_by(2).copied().collect::<Vec<_>>(), vec![2.0, 3.0, 4.0]);
        assert!(q.enqueue(&Tensor::<f64>::zeros(&[1, 3])).is_err());
    }

    #[test]
    fn lambda_zero_copies_and_fixed_point_holds() {
        let cfg = EncoderConfig {
            width: 8,
            heads: 2,
            ff_width: 8,
            max_len: 6,
            layers: 1,
            ..EncoderConfig::new(10)
        };
        let a = EncoderParams::<f64>::init(cfg, &mut Rng::new(1)).unwrap();
        let b = EncoderParams::<f64>::init(cfg, &mut Rng::new(2)).unwrap();
        let mut m = MomentumState::new(&a, 0.0).unwrap();
        m.ema_update(&b).unwrap();
        assert_eq!(m.params, b);
        let mut fixed = MomentumState::new(&a, 0.7).unwrap();
        fixed.ema_update(&a).unwrap();
        assert_eq!(fixed.params, a);
        assert!(MomentumState::new(&a, 1.0).is_err());
    }
}
