//! Capability-offset head: `c = Cpk_hat + g(x_std)`, `pi = Phi((c0 - c) / se)`.

use serde::{Deserialize, Serialize};

use super::losses::{cross_entropy, PRED_CLIP};
use super::train::{top_eigen, Design, TrainConfig, TrainingRow};
use crate::features::{FeatureVector, Standardizer, FEATURE_SCHEMA_VERSION};
use crate::optim::minimize;
use crate::stats::{normal_cdf, normal_pdf};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentModel {
    pub schema_version: String,
    pub theta: Vec<f64>,
    pub bias: f64,
    pub lambda_cap: f64,
    pub lambda2: f64,
    pub standardizer: Standardizer,
    pub c0: f64,
}

impl LatentModel {
    pub fn zero(standardizer: Standardizer, c0: f64) -> Self {
        Self {
            schema_version: FEATURE_SCHEMA_VERSION.to_string(),
            theta: vec![0.0; standardizer.dim()],
            bias: 0.0,
            lambda_cap: 0.0,
            lambda2: 0.0,
            standardizer,
            c0,
        }
    }

    fn offset(&self, x_std: &[f64]) -> f64 {
        self.theta.iter().zip(x_std).map(|(t, x)| t * x).sum::<f64>() + self.bias
    }
}

/// Returns the learned capability and its failure probability. Not clipped.
pub fn predict_latent(model: &LatentModel, cpk_hat: f64, se: f64, x: &FeatureVector) -> Result<(f64, f64)> {
    if se.is_nan() || se <= 0.0 {
        return Err(Error::NonpositiveSE(se));
    }
    if x.len() != model.theta.len() {
        return Err(Error::SchemaMismatch {
            expected: model.theta.len(),
            got: x.len(),
        });
    }
    let xs = model.standardizer.apply(x)?;
    let c = cpk_hat + model.offset(xs.as_slice());
    Ok((c, normal_cdf((model.c0 - c) / se)))
}

/// `(sum w * BCE + lambda_cap * sum g^2) / sum(w) + lambda2 * |theta|^2` over `[theta, bias]`.
#[derive(Debug, Clone, Copy)]
pub struct LatentObjective<'a> {
    pub design: &'a Design,
    pub cpk_hat: &'a [f64],
    pub se: &'a [f64],
    pub c0: f64,
    pub lambda_cap: f64,
    pub lambda2: f64,
}

impl LatentObjective<'_> {
    pub fn eval(&self, params: &[f64], grad: &mut [f64]) -> f64 {
        let d = self.design.dim();
        let total_w = self.design.total_weight();
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut value = 0.0;
        for i in 0..self.design.len() {
            let x = &self.design.x[i];
            let g_off = params[..d].iter().zip(x).map(|(t, v)| t * v).sum::<f64>() + params[d];
            let se = self.se[i];
            let u = (self.c0 - self.cpk_hat[i] - g_off) / se;
            let (p, q) = (normal_cdf(u), normal_cdf(-u));
            let y = self.design.y[i];
            let w = self.design.w[i];
            value += w * cross_entropy(p, y) + self.lambda_cap * g_off * g_off;
            // Inside the clip band the loss is flat in u.
            let dl_du = if p < PRED_CLIP || q < PRED_CLIP {
                0.0
            } else {
                let phi = normal_pdf(u);
                -y * phi / p + (1.0 - y) * phi / q
            };
            let dg = w * dl_du * (-1.0 / se) + 2.0 * self.lambda_cap * g_off;
            for (gj, xj) in grad[..d].iter_mut().zip(x) {
                *gj += dg * xj;
            }
            grad[d] += dg;
        }
        grad.iter_mut().for_each(|g| *g /= total_w);
        value /= total_w;
        for j in 0..d {
            value += self.lambda2 * params[j] * params[j];
            grad[j] += 2.0 * self.lambda2 * params[j];
        }
        value
    }

    pub fn value(&self, params: &[f64]) -> f64 {
        let mut g = vec![0.0; params.len()];
        self.eval(params, &mut g)
    }

    fn curvature_bound(&self) -> f64 {
        // The probit cross-entropy has second derivative at most 1 in u.
        let design = self.design;
        let lam = top_eigen(
            |i| {
                let mut row = design.x[i].clone();
                row.push(1.0);
                (design.w[i] / (self.se[i] * self.se[i]) + 2.0 * self.lambda_cap, row)
            },
            design.len(),
            design.dim() + 1,
        );
        lam / design.total_weight() + 2.0 * self.lambda2
    }
}

/// Fits the latent head with hard labels in `target`.
pub fn train_latent(rows: &[TrainingRow], cfg: &TrainConfig, lambda2: f64, c0: f64) -> Result<LatentModel> {
    if rows.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    if let Some(r) = rows.iter().find(|r| r.se.is_nan() || r.se <= 0.0) {
        return Err(Error::NonpositiveSE(r.se));
    }
    let standardizer = Standardizer::fit(rows.iter().map(|r| &r.x))?;
    let design = Design::build(rows, &standardizer, cfg)?;
    let cpk: Vec<f64> = rows.iter().map(|r| r.cpk_hat).collect();
    let se: Vec<f64> = rows.iter().map(|r| r.se).collect();
    let obj = LatentObjective {
        design: &design,
        cpk_hat: &cpk,
        se: &se,
        c0,
        lambda_cap: cfg.lambda_cap,
        lambda2,
    };
    let d = design.dim();
    let step = cfg.learning_rate / obj.curvature_bound();
    let out = minimize(
        |p, g| obj.eval(p, g),
        vec![0.0; d + 1],
        &vec![false; d + 1],
        &cfg.gd(step),
    )?;
    let mut model = LatentModel::zero(standardizer, c0);
    model.theta = out.params[..d].to_vec();
    model.bias = out.params[d];
    model.lambda_cap = cfg.lambda_cap;
    model.lambda2 = lambda2;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::uncertainty::baseline_risk_clipped;

    fn unit_model(d: usize, c0: f64) -> LatentModel {
        LatentModel::zero(
            Standardizer {
                mean: vec![0.0; d],
                sd: vec![1.0; d],
            },
            c0,
        )
    }

    #[test]
    fn zero_head_is_unclipped_baseline() {
        let m = unit_model(2, 1.33);
        let x = FeatureVector(vec![0.4, -1.0]);
        let (c, p) = predict_latent(&m, 1.34, 0.14, &x).unwrap();
        assert_eq!(c, 1.34);
        assert_eq!(p, baseline_risk_clipped(1.34, 0.14, 1.33, 0.0).unwrap().pi_stat);
    }

    #[test]
    fn hand_checked_offset() {
        let mut m = unit_model(2, 1.33);
        m.theta = vec![0.1, -0.05];
        m.bias = 0.02;
        let (c, p) = predict_latent(&m, 1.2, 0.1, &FeatureVector(vec![1.0, 2.0])).unwrap();
        // g = 0.1 - 0.1 + 0.02
        assert!((c - 1.22).abs() < 1e-15);
        assert!((p - normal_cdf(1.1)).abs() < 1e-12);
        assert!((p - 0.864_333_939_053_617_2).abs() < 1e-12);
    }

    #[test]
    fn boundary_is_half() {
        let mut m = unit_model(1, 1.33);
        m.bias = 0.13;
        let (c, p) = predict_latent(&m, 1.2, 0.3, &FeatureVector(vec![0.0])).unwrap();
        assert!((c - 1.33).abs() < 1e-15);
        assert!((p - 0.5).abs() < 1e-12);
        assert!(matches!(
            predict_latent(&m, 1.2, 0.0, &FeatureVector(vec![0.0])),
            Err(Error::NonpositiveSE(_))
        ));
    }
}
