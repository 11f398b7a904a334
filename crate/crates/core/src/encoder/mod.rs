//! A small post-layer-norm transformer encoder that maps token sequences to
//! one pooled embedding each.
//!
//! Layout per sequence: `[CLS] content… [SEP] [PAD]…`, token plus learned
//! position embeddings, embedding layer norm, `layers` blocks of multi-head
//! self-attention and a GELU feed-forward network (each followed by a
//! residual add and layer norm), then the `[CLS]` vector through a tanh
//! projection. Dropout, when enabled, hits the attention probabilities, the
//! attention output projection and the feed-forward output; embeddings are
//! never dropped.

mod checkpoint;

pub use checkpoint::{
    from_bytes, read_checkpoint, to_bytes, write_checkpoint, CheckpointHeader, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};

use crate::error::{Error, Result};
use crate::numeric::{Real, Rng, Tape, Tensor, Var};
use crate::tokenizer::{TokenSequence, CLS_ID, PAD_ID, SEP_ID};

/// Additive attention bias for padded key positions.
const MASKED: f64 = -1e9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub layers: usize,
    pub width: usize,
    pub heads: usize,
    pub ff_width: usize,
    /// Including the two specials.
    pub max_len: usize,
    pub dropout: f64,
}

impl EncoderConfig {
    /// Default shape: 2 layers, width 64, 4 heads, 4x feed-forward, 64 positions, dropout 0.1.
    pub fn new(vocab_size: usize) -> Self {
        EncoderConfig {
            vocab_size,
            layers: 2,
            width: 64,
            heads: 4,
            ff_width: 256,
            max_len: 64,
            dropout: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.vocab_size < 6 {
            return bad(format!("vocab_size {} leaves no content tokens", self.vocab_size));
        }
        if self.layers == 0 || self.width == 0 || self.heads == 0 || self.ff_width == 0 {
            return bad("encoder dimensions must be positive".into());
        }
        if !self.width.is_multiple_of(self.heads) {
            return bad(format!("width {} not divisible by {} heads", self.width, self.heads));
        }
        if self.max_len < 3 {
            return bad(format!("max_len {} < 3", self.max_len));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }

    pub fn head_width(&self) -> usize {
        self.width / self.heads
    }

    /// Name and shape of every parameter array, in declaration order.
    pub fn layout(&self) -> Vec<(String, Vec<usize>)> {
        let (d, ff) = (self.width, self.ff_width);
        let mut out = vec![
            ("token_embedding".to_string(), vec![self.vocab_size, d]),
            ("position_embedding".to_string(), vec![self.max_len, d]),
            ("embedding_norm.gain".to_string(), vec![d]),
            ("embedding_norm.bias".to_string(), vec![d]),
        ];
        for l in 0..self.layers {
            let p = |s: &str| format!("layer{l}.{s}");
            out.extend([
                (p("query.weight"), vec![d, d]),
                (p("query.bias"), vec![d]),
                (p("key.weight"), vec![d, d]),
                (p("key.bias"), vec![d]),
                (p("value.weight"), vec![d, d]),
                (p("value.bias"), vec![d]),
                (p("attn_out.weight"), vec![d, d]),
                (p("attn_out.bias"), vec![d]),
                (p("attn_norm.gain"), vec![d]),
                (p("attn_norm.bias"), vec![d]),
                (p("ff_in.weight"), vec![d, ff]),
                (p("ff_in.bias"), vec![ff]),
                (p("ff_out.weight"), vec![ff, d]),
                (p("ff_out.bias"), vec![d]),
                (p("ff_norm.gain"), vec![d]),
                (p("ff_norm.bias"), vec![d]),
            ]);
        }
        out.push(("pooler.weight".to_string(), vec![d, d]));
        out.push(("pooler.bias".to_string(), vec![d]));
        out
    }
}

const PARAMS_PER_LAYER: usize = 16;
const EMBEDDING_PARAMS: usize = 4;

/// All learnable arrays of the encoder, in [`EncoderConfig::layout`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams<T> {
    pub config: EncoderConfig,
    pub tensors: Vec<Tensor<T>>,
}

impl<T: Real> EncoderParams<T> {
    /// Weight matrices ~ N(0, 1/fan_in); embedding tables ~ N(0, 1/width);
    /// biases zero; layer-norm gains one.
    pub fn init(config: EncoderConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let tensors = config
            .layout()
            .into_iter()
            .map(|(name, shape)| {
                if name.ends_with(".gain") {
                    Tensor::full(&shape, T::one())
                } else if name.ends_with(".bias") {
                    Tensor::zeros(&shape)
                } else if name.ends_with("_embedding") {
                    Tensor::randn(&shape, 1.0 / (config.width as f64).sqrt(), rng)
                } else {
                    Tensor::randn(&shape, 1.0 / (shape[0] as f64).sqrt(), rng)
                }
            })
            .collect();
        Ok(EncoderParams { config, tensors })
    }

    /// Wrap loaded arrays after checking them against the layout.
    pub fn from_tensors(config: EncoderConfig, tensors: Vec<Tensor<T>>) -> Result<Self> {
        config.validate()?;
        let layout = config.layout();
        if layout.len() != tensors.len() {
            return Err(Error::Shape(format!(
                "expected {} parameter arrays, got {}",
                layout.len(),
                tensors.len()
            )));
        }
        for ((name, shape), t) in layout.iter().zip(&tensors) {
            if t.shape() != shape.as_slice() {
                return Err(Error::Shape(format!("{name}: expected {shape:?}, got {:?}", t.shape())));
            }
            if !t.all_finite() {
                return Err(Error::NonFinite(format!("parameter {name}")));
            }
        }
        Ok(EncoderParams { config, tensors })
    }

    pub fn cast<U: Real>(&self) -> EncoderParams<U> {
        EncoderParams {
            config: self.config,
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
        }
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Record every array on `tape`: as trainable parameters, or as constants.
    pub fn bind(&self, tape: &mut Tape<T>, trainable: bool) -> Vec<Var> {
        self.tensors
            .iter()
            .enumerate()
            .map(|(i, t)| {
                if trainable {
                    tape.param(t.clone(), i)
                } else {
                    tape.constant(t.clone())
                }
            })
            .collect()
    }
}

/// Content tokens kept after truncation to `max_len - 2`.
pub fn truncate(seq: &TokenSequence, max_len: usize) -> &[u32] {
    let keep = seq.len().min(max_len.saturating_sub(2));
    &seq.ids[..keep]
}

/// Record the forward pass for `seqs` on `tape` using already-bound
/// parameters; returns the `[batch, width]` pooled embeddings. Pass `rng`
/// to sample dropout masks, `None` for deterministic evaluation.
pub fn forward<T: Real>(
    tape: &mut Tape<T>,
    params: &[Var],
    config: &EncoderConfig,
    seqs: &[TokenSequence],
    mut rng: Option<&mut Rng>,
) -> Result<Var> {
    if seqs.is_empty() {
        return Err(Error::Input("empty batch".into()));
    }
    if params.len() != EMBEDDING_PARAMS + PARAMS_PER_LAYER * config.layers + 2 {
        return Err(Error::Shape(format!("{} bound parameters do not fit the config", params.len())));
    }
    let contents: Vec<&[u32]> = seqs.iter().map(|s| truncate(s, config.max_len)).collect();
    if contents.iter().any(|c| c.is_empty()) {
        return Err(Error::Input("sequence with no content tokens".into()));
    }
    if let Some(&bad) = contents.iter().flat_map(|c| c.iter()).find(|&&id| id as usize >= config.vocab_size) {
        return Err(Error::Input(format!("token id {bad} outside vocabulary of {}", config.vocab_size)));
    }

    let batch = seqs.len();
    let lens: Vec<usize> = contents.iter().map(|c| c.len() + 2).collect();
    let seq_len = *lens.iter().max().unwrap();
    let mut ids = Vec::with_capacity(batch * seq_len);
    let mut positions = Vec::with_capacity(batch * seq_len);
    for c in &contents {
        ids.push(CLS_ID as usize);
        ids.extend(c.iter().map(|&i| i as usize));
        ids.push(SEP_ID as usize);
        ids.resize(positions.len() + seq_len, PAD_ID as usize);
        positions.extend(0..seq_len);
    }

    let dropout = config.dropout;
    let mut apply_dropout = |tape: &mut Tape<T>, v: Var| match rng.as_deref_mut() {
        Some(r) => tape.dropout(v, dropout, r),
        None => v,
    };

    let tok = tape.gather_rows(params[0], &ids);
    let pos = tape.gather_rows(params[1], &positions);
    let summed = tape.add(tok, pos);
    let mut x = tape.layer_norm(summed, params[2], params[3]);

    let masks: Vec<Option<Var>> = lens
        .iter()
        .map(|&len| {
            (len < seq_len).then(|| {
                let mut m = Tensor::zeros(&[seq_len, seq_len]);
                for row in m.data_mut().chunks_mut(seq_len) {
                    row[len..].fill(T::lit(MASKED));
                }
                tape.constant(m)
            })
        })
        .collect();

    let dh = config.head_width();
    let score_scale = T::lit(1.0 / (dh as f64).sqrt());
    for l in 0..config.layers {
        let p = &params[EMBEDDING_PARAMS + l * PARAMS_PER_LAYER..][..PARAMS_PER_LAYER];
        let q = linear(tape, x, p[0], p[1]);
        let k = linear(tape, x, p[2], p[3]);
        let v = linear(tape, x, p[4], p[5]);

        let mut contexts = Vec::with_capacity(batch);
        for (b, mask) in masks.iter().enumerate() {
            let qb = tape.slice_rows(q, b * seq_len, seq_len);
            let kb = tape.slice_rows(k, b * seq_len, seq_len);
            let vb = tape.slice_rows(v, b * seq_len, seq_len);
            let mut heads = Vec::with_capacity(config.heads);
            for h in 0..config.heads {
                let qh = tape.slice_cols(qb, h * dh, dh);
                let kh = tape.slice_cols(kb, h * dh, dh);
                let vh = tape.slice_cols(vb, h * dh, dh);
                let raw = tape.matmul_nt(qh, kh);
                let mut scores = tape.scale(raw, score_scale);
                if let Some(m) = mask {
                    scores = tape.add(scores, *m);
                }
                let probs = tape.softmax(scores);
                let probs = apply_dropout(tape, probs);
                heads.push(tape.matmul(probs, vh));
            }
            contexts.push(if heads.len() == 1 { heads[0] } else { tape.concat_cols(&heads) });
        }
        let ctx = if contexts.len() == 1 { contexts[0] } else { tape.concat_rows(&contexts) };
        let attn = linear(tape, ctx, p[6], p[7]);
        let attn = apply_dropout(tape, attn);
        let res = tape.add(x, attn);
        x = tape.layer_norm(res, p[8], p[9]);

        let hidden = linear(tape, x, p[10], p[11]);
        let hidden = tape.gelu(hidden);
        let out = linear(tape, hidden, p[12], p[13]);
        let out = apply_dropout(tape, out);
        let res = tape.add(x, out);
        x = tape.layer_norm(res, p[14], p[15]);
    }

    let cls_rows: Vec<usize> = (0..batch).map(|b| b * seq_len).collect();
    let cls = tape.gather_rows(x, &cls_rows);
    let n = params.len();
    let pooled = linear(tape, cls, params[n - 2], params[n - 1]);
    Ok(tape.tanh(pooled))
}

fn linear<T: Real>(tape: &mut Tape<T>, x: Var, w: Var, b: Var) -> Var {
    let y = tape.matmul(x, w);
    tape.add_row(y, b)
}

/// Encode a batch outside of training: returns `[batch, width]` embeddings.
/// With `dropout_on`, fresh masks are drawn from `rng`; otherwise `rng` is
/// untouched and the result is deterministic.
pub fn encode_batch<T: Real>(
    seqs: &[TokenSequence],
    params: &EncoderParams<T>,
    dropout_on: bool,
    rng: &mut Rng,
) -> Result<Tensor<T>> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, false);
    let out = forward(&mut tape, &bound, &params.config, seqs, dropout_on.then_some(rng))?;
    let emb = tape.value(out).clone();
    if !emb.all_finite() {
        return Err(Error::NonFinite("encoder output".into()));
    }
    Ok(emb)
}
