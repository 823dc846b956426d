//! Summed, weighted losses on probabilities.

use crate::error::check_len;
use crate::Result;

/// Probabilities are kept inside `[PRED_CLIP, 1 - PRED_CLIP]` before logs.
pub const PRED_CLIP: f64 = 1e-12;

pub(crate) fn cross_entropy(p: f64, y: f64) -> f64 {
    let p = p.clamp(PRED_CLIP, 1.0 - PRED_CLIP);
    let mut l = 0.0;
    // Skip the zero-weight side so that y in {0, 1} never multiplies a huge log.
    if y > 0.0 {
        l -= y * p.ln();
    }
    if y < 1.0 {
        l -= (1.0 - y) * (1.0 - p).ln();
    }
    l
}

fn weighted_sum(pred: &[f64], y: &[f64], weights: Option<&[f64]>, f: impl Fn(f64, f64) -> f64) -> Result<f64> {
    check_len(pred.len(), y.len())?;
    if let Some(w) = weights {
        check_len(pred.len(), w.len())?;
    }
    Ok(pred
        .iter()
        .zip(y)
        .enumerate()
        .map(|(i, (&p, &t))| weights.map_or(1.0, |w| w[i]) * f(p, t))
        .sum())
}

/// Weighted negative log-likelihood for hard labels. `None` means unit weights.
pub fn loss_bce(pred: &[f64], y: &[f64], weights: Option<&[f64]>) -> Result<f64> {
    weighted_sum(pred, y, weights, cross_entropy)
}

/// Cross-entropy against soft targets in `[0, 1]`.
pub fn loss_soft_ce(pred: &[f64], y_soft: &[f64], weights: Option<&[f64]>) -> Result<f64> {
    weighted_sum(pred, y_soft, weights, cross_entropy)
}

pub fn loss_brier(pred: &[f64], y_soft: &[f64], weights: Option<&[f64]>) -> Result<f64> {
    weighted_sum(pred, y_soft, weights, |p, t| (p - t) * (p - t))
}

/// `lambda2 * |theta|^2`; bias and anchor coefficient are not penalized.
pub fn loss_l2(theta: &[f64], lambda2: f64) -> f64 {
    lambda2 * theta.iter().map(|t| t * t).sum::<f64>()
}

/// Risk cross-entropy plus a pull of the learned capability toward the estimate.
pub fn loss_composite(pred: &[f64], y: &[f64], c_learned: &[f64], c_stat: &[f64], lambda_cap: f64) -> Result<f64> {
    check_len(c_learned.len(), c_stat.len())?;
    check_len(pred.len(), c_learned.len())?;
    let risk = loss_bce(pred, y, None)?;
    let cap: f64 = c_learned.iter().zip(c_stat).map(|(c, s)| (c - s) * (c - s)).sum();
    Ok(risk + lambda_cap * cap)
}
