//! Anchored residual model in log-odds space.
//!
//! `pi = sigmoid(a * z_stat + alpha_r * (theta . x_std + bias))` with `a`
//! pinned at 1 in anchored mode. With `theta = 0` and `bias = 0` the model is
//! exactly the statistical baseline.

mod latent;
mod losses;
mod persist;
mod train;

pub use latent::{predict_latent, train_latent, LatentModel, LatentObjective};
pub use losses::{loss_bce, loss_brier, loss_composite, loss_l2, loss_soft_ce, PRED_CLIP};
pub use persist::{load_model, save_model};
pub use train::{
    curvature_bound, fit_single, sample_weight, top_eigen, train, Design, GridResult, Objective, TrainConfig,
    TrainReport, TrainingRow, ValidationScores,
};

use serde::{Deserialize, Serialize};

use crate::features::{FeatureVector, Standardizer, FEATURE_SCHEMA_VERSION};
use crate::stats::sigmoid;
use crate::{Error, Result};

/// Residual-scale search grid.
pub const ALPHA_R_GRID: [f64; 5] = [0.05, 0.1, 0.2, 0.3, 0.5];
/// L2 strength search grid.
pub const LAMBDA2_GRID: [f64; 4] = [0.01, 0.1, 1.0, 10.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AnchorMode {
    #[default]
    Anchored,
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Bce,
    #[default]
    SoftCe,
    Brier,
    /// Latent-capability head only; see [`train_latent`].
    Composite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualModel {
    pub schema_version: String,
    pub anchor_mode: AnchorMode,
    pub anchor_coef: f64,
    pub alpha_r: f64,
    pub lambda2: f64,
    pub theta: Vec<f64>,
    pub bias: f64,
    pub standardizer: Standardizer,
    pub c0: f64,
}

impl ResidualModel {
    /// The zero-residual model, identical to the baseline.
    pub fn baseline(standardizer: Standardizer, anchor_mode: AnchorMode, alpha_r: f64, c0: f64) -> Self {
        Self {
            schema_version: FEATURE_SCHEMA_VERSION.to_string(),
            anchor_mode,
            anchor_coef: 1.0,
            alpha_r,
            lambda2: 0.0,
            theta: vec![0.0; standardizer.dim()],
            bias: 0.0,
            standardizer,
            c0,
        }
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    /// `alpha_r * (theta . x_std + bias)` for an already standardized row.
    pub fn residual_standardized(&self, x_std: &[f64]) -> f64 {
        let dot: f64 = self.theta.iter().zip(x_std).map(|(t, x)| t * x).sum();
        self.alpha_r * (dot + self.bias)
    }

    pub fn residual(&self, x: &FeatureVector) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.residual_standardized(self.standardizer.apply(x)?.as_slice()))
    }

    pub fn logit_standardized(&self, z_stat: f64, x_std: &[f64]) -> f64 {
        self.anchor_coef * z_stat + self.residual_standardized(x_std)
    }

    pub fn predict_standardized(&self, z_stat: f64, x_std: &[f64]) -> f64 {
        clip_pred(sigmoid(self.logit_standardized(z_stat, x_std)))
    }

    pub fn predict(&self, z_stat: f64, x: &FeatureVector) -> Result<f64> {
        self.check_dim(x)?;
        let xs = self.standardizer.apply(x)?;
        Ok(self.predict_standardized(z_stat, xs.as_slice()))
    }

    fn check_dim(&self, x: &FeatureVector) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::SchemaMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }
}

pub fn predict(model: &ResidualModel, z_stat: f64, x: &FeatureVector) -> Result<f64> {
    model.predict(z_stat, x)
}

/// Combines a baseline log-odds and a residual already on the log-odds scale.
pub fn combine(z_stat: f64, residual: f64) -> f64 {
    clip_pred(sigmoid(z_stat + residual))
}

pub(crate) fn clip_pred(p: f64) -> f64 {
    p.clamp(PRED_CLIP, 1.0 - PRED_CLIP)
}
