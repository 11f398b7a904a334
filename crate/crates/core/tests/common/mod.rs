//! Independent reference implementations used as test oracles. They use
//! explicit loops and share no code with the library paths they check.

#![allow(dead_code, clippy::needless_range_loop)]

use sentence_contrast::numeric::{Rng, Tensor};

pub fn rows(t: &Tensor<f64>) -> Vec<Vec<f64>> {
    (0..t.rows()).map(|i| t.row(i).to_vec()).collect()
}

fn cos(a: &[f64], b: &[f64]) -> f64 {
    let mut ab = 0.0;
    let mut aa = 0.0;
    let mut bb = 0.0;
    for k in 0..a.len() {
        ab += a[k] * b[k];
        aa += a[k] * a[k];
        bb += b[k] * b[k];
    }
    ab / (aa.sqrt() * bb.sqrt())
}

/// Mean over i of `-log softmax_i(sim(h_i, .) / tau)` where the candidates
/// are every positive followed by every queue entry.
pub fn info_nce_oracle(h: &[Vec<f64>], hp: &[Vec<f64>], queue: &[Vec<f64>], tau: f64) -> f64 {
    let n = h.len();
    let mut total = 0.0;
    for i in 0..n {
        let mut logits = Vec::new();
        for j in 0..n {
            logits.push(cos(&h[i], &hp[j]) / tau);
        }
        for q in queue {
            logits.push(cos(&h[i], q) / tau);
        }
        let mut max = f64::NEG_INFINITY;
        for &l in &logits {
            if l > max {
                max = l;
            }
        }
        let mut s = 0.0;
        for &l in &logits {
            s += (l - max).exp();
        }
        let lse = max + s.ln();
        total += lse - logits[i];
    }
    total / n as f64
}

/// Rank by counting: 1 + #smaller + (#equal - 1) / 2.
pub fn naive_ranks(x: &[f64]) -> Vec<f64> {
    let mut out = Vec::new();
    for i in 0..x.len() {
        let mut less = 0.0;
        let mut equal = 0.0;
        for j in 0..x.len() {
            if x[j] < x[i] {
                less += 1.0;
            } else if x[j] == x[i] {
                equal += 1.0;
            }
        }
        out.push(1.0 + less + (equal - 1.0) / 2.0);
    }
    out
}

pub fn naive_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mut mx = 0.0;
    let mut my = 0.0;
    for i in 0..x.len() {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for i in 0..x.len() {
        cov += (x[i] - mx) * (y[i] - my);
        vx += (x[i] - mx) * (x[i] - mx);
        vy += (y[i] - my) * (y[i] - my);
    }
    cov / (vx / n).sqrt() / (vy / n).sqrt() / n
}

pub fn naive_spearman(x: &[f64], y: &[f64]) -> f64 {
    naive_pearson(&naive_ranks(x), &naive_ranks(y))
}

/// True when `small` occurs in `big` in order, not necessarily contiguously.
pub fn is_subsequence<T: PartialEq>(small: &[T], big: &[T]) -> bool {
    let mut it = big.iter();
    small.iter().all(|s| it.any(|b| b == s))
}

/// A list of `len` values drawn from `levels` distinct values, so ties are common.
pub fn tied_list(rng: &mut Rng, len: usize, levels: u64) -> Vec<f64> {
    (0..len).map(|_| rng.below(levels) as f64 * 0.5).collect()
}

pub fn random_matrix(rng: &mut Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| rng.normal()).collect()).collect()
}
