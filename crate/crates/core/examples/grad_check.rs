//! Compare tape gradients of the full model loss against central
//! finite differences.

use sentence_contrast::contrastive::record_loss;
use sentence_contrast::encoder::{forward, EncoderConfig, EncoderParams};
use sentence_contrast::numeric::{grad_check, GradCheckConfig, Rng, Tensor};
use sentence_contrast::tokenizer::Vocab;

fn main() -> sentence_contrast::Result<()> {
    let lines = ["the old farmer waits", "a tall tree", "the bus is late again", "birds sing"];
    let vocab = Vocab::build(lines, 100)?;
    let x: Vec<_> = lines.iter().map(|l| vocab.tokenize(l)).collect::<Result<_, _>>()?;
    let cfg = EncoderConfig {
        width: 16,
        heads: 2,
        ff_width: 32,
        ..EncoderConfig::new(vocab.len())
    };
    let params = EncoderParams::<f64>::init(cfg, &mut Rng::new(1))?;
    let mut qrng = Rng::new(2);
    let queue = Tensor::new(vec![8, cfg.width], (0..8 * cfg.width).map(|_| qrng.normal()).collect());

    let report = grad_check(
        &params.tensors,
        |ps, tape| {
            let vars: Vec<_> = ps.iter().enumerate().map(|(i, t)| tape.param(t.clone(), i)).collect();
            let mut masks = Rng::new(3);
            let (mut a, mut b) = (masks.fork(), masks.fork());
            let h = forward(tape, &vars, &cfg, &x, Some(&mut a))?;
            let hp = forward(tape, &vars, &cfg, &x, Some(&mut b))?;
            record_loss(tape, h, hp, &queue, 0.05)
        },
        &GradCheckConfig {
            epsilon: 1e-4,
            coords_per_param: Some(4),
            ..Default::default()
        },
    )?;
    for (i, e) in report.per_param(params.tensors.len()).iter().enumerate() {
        println!("param {i:>2}: max relative error {e:.2e}");
    }
    println!("overall {:.2e}", report.max_rel_error());
    Ok(())
}
