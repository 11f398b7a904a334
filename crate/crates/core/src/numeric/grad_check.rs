//! Central finite-difference verification of tape gradients (64-bit only).

use super::rng::Rng;
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    /// Perturbation half-width, in `[1e-7, 1e-3]`.
    pub epsilon: f64,
    /// Coordinates sampled per parameter array; `None` checks every one.
    pub coords_per_param: Option<usize>,
    /// Lower bound on the relative-error denominator, so that gradients
    /// that are zero up to rounding do not produce spurious ratios.
    pub abs_floor: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            epsilon: 1e-5,
            coords_per_param: None,
            abs_floor: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoordCheck {
    pub param: usize,
    pub coord: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, Default)]
pub struct GradCheckReport {
    pub checks: Vec<CoordCheck>,
    /// `(param, coord)` pairs whose perturbed loss was NaN or infinite.
    pub non_finite: Vec<(usize, usize)>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.checks.iter().map(|c| c.rel_error).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&CoordCheck> {
        self.checks
            .iter()
            .max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
    }

    /// Per-parameter maximum relative error.
    pub fn per_param(&self, n_params: usize) -> Vec<f64> {
        let mut out = vec![0.0f64; n_params];
        for c in &self.checks {
            out[c.param] = out[c.param].max(c.rel_error);
        }
        out
    }

    pub fn passed(&self, tolerance: f64) -> bool {
        self.non_finite.is_empty() && self.max_rel_error() < tolerance
    }
}

pub fn relative_error(analytic: f64, numeric: f64, abs_floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(abs_floor)
}

/// Compare the tape's gradients of `loss` against central differences.
///
/// `loss` must record a scalar on the supplied tape, binding parameter `i`
/// through `tape.param(params[i].clone(), i)`. It is re-run at every
/// perturbed point, so any randomness inside it must be reseeded per call.
pub fn grad_check<F>(params: &[Tensor<f64>], mut loss: F, cfg: &GradCheckConfig) -> Result<GradCheckReport>
where
    F: FnMut(&[Tensor<f64>], &mut Tape<f64>) -> Result<Var>,
{
    if !(1e-7..=1e-3).contains(&cfg.epsilon) {
        return Err(Error::Config(format!(
            "grad_check epsilon {} outside [1e-7, 1e-3]",
            cfg.epsilon
        )));
    }

    let mut tape = Tape::new();
    let root = loss(params, &mut tape)?;
    let analytic = tape.backward(root)?.param_grads(params);
    drop(tape);

    let mut eval = |ps: &[Tensor<f64>]| -> Result<f64> {
        let mut t = Tape::new();
        let r = loss(ps, &mut t)?;
        Ok(t.value(r).item())
    };

    let mut rng = Rng::new(cfg.seed);
    let mut work = params.to_vec();
    let mut report = GradCheckReport::default();
    for (pi, p) in params.iter().enumerate() {
        let coords: Vec<usize> = match cfg.coords_per_param {
            Some(k) if k < p.len() => (0..k).map(|_| rng.below(p.len() as u64) as usize).collect(),
            _ => (0..p.len()).collect(),
        };
        for c in coords {
            let orig = p.data()[c];
            work[pi].data_mut()[c] = orig + cfg.epsilon;
            let plus = eval(&work)?;
            work[pi].data_mut()[c] = orig - cfg.epsilon;
            let minus = eval(&work)?;
            work[pi].data_mut()[c] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                report.non_finite.push((pi, c));
                continue;
            }
            let numeric = (plus - minus) / (2.0 * cfg.epsilon);
            let a = analytic[pi].data()[c];
            report.checks.push(CoordCheck {
                param: pi,
                coord: c,
                analytic: a,
                numeric,
                rel_error: relative_error(a, numeric, cfg.abs_floor),
            });
        }
    }
    Ok(report)
}
