//! Deterministic full-batch gradient descent.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GdConfig {
    /// Step size, already divided by the curvature bound by the caller.
    pub step: f64,
    pub max_epochs: usize,
    /// Linear ramp of the step over this many epochs.
    pub warmup_epochs: usize,
    /// Stop once the gradient norm falls below this.
    pub grad_tol: f64,
    /// Stop after `patience` consecutive epochs with relative improvement below this.
    pub plateau_tol: f64,
    pub patience: usize,
    /// Keep the objective value of every epoch.
    pub record_history: bool,
}

impl Default for GdConfig {
    fn default() -> Self {
        Self {
            step: 1.0,
            max_epochs: 20_000,
            warmup_epochs: 0,
            grad_tol: 1e-9,
            plateau_tol: 1e-15,
            patience: 50,
            record_history: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GdOutcome {
    pub params: Vec<f64>,
    pub objective: f64,
    pub grad_norm: f64,
    pub epochs: usize,
    pub converged: bool,
    pub history: Vec<f64>,
}

/// Minimizes `f`, which returns the objective and writes the gradient into its
/// second argument. Coordinates with `frozen[i] == true` never move.
pub fn minimize<F>(mut f: F, x0: Vec<f64>, frozen: &[bool], cfg: &GdConfig) -> Result<GdOutcome>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let mut x = x0;
    let mut grad = vec![0.0; x.len()];
    let mut history = Vec::new();
    let mut stall = 0;
    let mut prev = f64::INFINITY;
    let mut epoch = 0;
    loop {
        let value = f(&x, &mut grad);
        for (g, &fz) in grad.iter_mut().zip(frozen) {
            if fz {
                *g = 0.0;
            }
        }
        if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonfiniteLoss { epoch });
        }
        if cfg.record_history {
            history.push(value);
        }
        let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if prev.is_finite() && (prev - value).abs() <= cfg.plateau_tol * (1.0 + value.abs()) {
            stall += 1;
        } else {
            stall = 0;
        }
        let converged = grad_norm <= cfg.grad_tol || stall >= cfg.patience;
        if converged || epoch >= cfg.max_epochs {
            return Ok(GdOutcome {
                params: x,
                objective: value,
                grad_norm,
                epochs: epoch,
                converged,
                history,
            });
        }
        let ramp = if cfg.warmup_epochs == 0 {
            1.0
        } else {
            ((epoch + 1) as f64 / cfg.warmup_epochs as f64).min(1.0)
        };
        let step = cfg.step * ramp;
        for (xi, g) in x.iter_mut().zip(&grad) {
            *xi -= step * g;
        }
        prev = value;
        epoch += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad(x: &[f64], g: &mut [f64]) -> f64 {
        // 0.5 * (x0 - 1)^2 + 2 * (x1 + 3)^2
        g[0] = x[0] - 1.0;
        g[1] = 4.0 * (x[1] + 3.0);
        0.5 * (x[0] - 1.0).powi(2) + 2.0 * (x[1] + 3.0).powi(2)
    }

    #[test]
    fn converges_on_quadratic() {
        let cfg = GdConfig {
            step: 0.25,
            ..GdConfig::default()
        };
        let out = minimize(quad, vec![0.0, 0.0], &[false, false], &cfg).unwrap();
        assert!(out.converged);
        assert!((out.params[0] - 1.0).abs() < 1e-8 && (out.params[1] + 3.0).abs() < 1e-8);
    }

    #[test]
    fn frozen_coordinate_stays_put() {
        let cfg = GdConfig {
            step: 0.25,
            ..GdConfig::default()
        };
        let out = minimize(quad, vec![0.0, 5.0], &[false, true], &cfg).unwrap();
        assert_eq!(out.params[1], 5.0);
        assert!((out.params[0] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn divergence_is_reported() {
        let cfg = GdConfig {
            step: 10.0,
            ..GdConfig::default()
        };
        assert!(matches!(
            minimize(quad, vec![0.0, 0.0], &[false, false], &cfg),
            Err(Error::NonfiniteLoss { .. })
        ));
    }

    #[test]
    fn warmup_reaches_same_point() {
        let a = minimize(
            quad,
            vec![0.0, 0.0],
            &[false, false],
            &GdConfig {
                step: 0.25,
                ..GdConfig::default()
            },
        )
        .unwrap();
        let b = minimize(
            quad,
            vec![0.0, 0.0],
            &[false, false],
            &GdConfig {
                step: 0.25,
                warmup_epochs: 200,
                ..GdConfig::default()
            },
        )
        .unwrap();
        assert!(b.epochs > a.epochs);
        for (p, q) in a.params.iter().zip(&b.params) {
            assert!((p - q).abs() < 1e-8);
        }
    }
}
