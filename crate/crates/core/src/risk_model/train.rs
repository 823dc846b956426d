use serde::{Deserialize, Serialize};

use super::{AnchorMode, LossKind, ResidualModel, ALPHA_R_GRID, LAMBDA2_GRID};
use crate::features::{FeatureVector, Standardizer};
use crate::metrics;
use crate::optim::{minimize, GdConfig};
use crate::stats::sigmoid;
use crate::{Error, Result};

/// One supervised example. `target` is a hard label or a soft probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRow {
    pub dim_id: String,
    pub x: FeatureVector,
    pub z_stat: f64,
    pub cpk_hat: f64,
    pub se: f64,
    pub target: f64,
    pub near: bool,
    pub positive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub anchor_mode: AnchorMode,
    pub alpha_r_grid: Vec<f64>,
    pub lambda2_grid: Vec<f64>,
    pub lambda_cap: f64,
    pub max_epochs: usize,
    /// Fraction of the inverse curvature bound used as the step.
    pub learning_rate: f64,
    pub warmup_epochs: usize,
    pub grad_tol: f64,
    pub weight_near: f64,
    pub weight_pos_mult: f64,
    pub weight_cap: f64,
    pub epsilon_near: f64,
    /// `false` entries pin the matching coefficient at zero.
    pub feature_mask: Option<Vec<bool>>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: LossKind::SoftCe,
            anchor_mode: AnchorMode::Anchored,
            alpha_r_grid: ALPHA_R_GRID.to_vec(),
            lambda2_grid: LAMBDA2_GRID.to_vec(),
            lambda_cap: 1.0,
            max_epochs: 20_000,
            learning_rate: 1.0,
            warmup_epochs: 0,
            grad_tol: 1e-9,
            weight_near: 3.0,
            weight_pos_mult: 2.0,
            weight_cap: 10.0,
            epsilon_near: crate::DEFAULT_EPSILON_NEAR,
            feature_mask: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub(crate) fn gd(&self, step: f64) -> GdConfig {
        GdConfig {
            step,
            max_epochs: self.max_epochs,
            warmup_epochs: self.warmup_epochs,
            grad_tol: self.grad_tol,
            ..GdConfig::default()
        }
    }
}

pub fn sample_weight(row: &TrainingRow, cfg: &TrainConfig) -> f64 {
    let mut w = 1.0;
    if row.near {
        w *= cfg.weight_near;
        if row.positive {
            w *= cfg.weight_pos_mult;
        }
    }
    w.min(cfg.weight_cap)
}

/// Standardized design matrix with targets and weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub x: Vec<Vec<f64>>,
    pub z: Vec<f64>,
    pub y: Vec<f64>,
    pub w: Vec<f64>,
}

impl Design {
    pub fn build(rows: &[TrainingRow], standardizer: &Standardizer, cfg: &TrainConfig) -> Result<Self> {
        let x = rows
            .iter()
            .map(|r| standardizer.apply(&r.x).map(|v| v.0))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            x,
            z: rows.iter().map(|r| r.z_stat).collect(),
            y: rows.iter().map(|r| r.target).collect(),
            w: rows.iter().map(|r| sample_weight(r, cfg)).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    pub fn total_weight(&self) -> f64 {
        self.w.iter().sum()
    }
}

/// Largest eigenvalue of `sum_i s_i a_i a_i^T` by power iteration.
pub fn top_eigen(rows: impl Fn(usize) -> (f64, Vec<f64>), n: usize, dim: usize) -> f64 {
    let mut v = vec![1.0 / (dim as f64).sqrt(); dim];
    let mut lambda = 0.0;
    for _ in 0..200 {
        let mut next = vec![0.0; dim];
        for i in 0..n {
            let (s, a) = rows(i);
            let dot: f64 = a.iter().zip(&v).map(|(p, q)| p * q).sum();
            for (nx, ai) in next.iter_mut().zip(&a) {
                *nx += s * dot * ai;
            }
        }
        let norm = next.iter().map(|t| t * t).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let converged = (norm - lambda).abs() <= 1e-10 * norm;
        lambda = norm;
        v = next.into_iter().map(|t| t / norm).collect();
        if converged {
            break;
        }
    }
    lambda
}

/// `sum(w * loss) / sum(w) + lambda2 * |theta|^2` over `[theta, bias, anchor_coef]`.
#[derive(Debug, Clone, Copy)]
pub struct Objective<'a> {
    pub design: &'a Design,
    pub loss: LossKind,
    pub mode: AnchorMode,
    pub alpha_r: f64,
    pub lambda2: f64,
}

impl Objective<'_> {
    pub fn n_params(&self) -> usize {
        self.design.dim() + 2
    }

    fn logit(&self, params: &[f64], i: usize) -> f64 {
        let d = self.design.dim();
        let dot: f64 = params[..d].iter().zip(&self.design.x[i]).map(|(t, x)| t * x).sum();
        params[d + 1] * self.design.z[i] + self.alpha_r * (dot + params[d])
    }

    /// Objective value; writes the gradient into `grad`.
    pub fn eval(&self, params: &[f64], grad: &mut [f64]) -> f64 {
        let d = self.design.dim();
        let total_w = self.design.total_weight();
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut value = 0.0;
        for i in 0..self.design.len() {
            let t = self.logit(params, i);
            let (y, w) = (self.design.y[i], self.design.w[i]);
            let p = sigmoid(t);
            let (l, dl) = match self.loss {
                // y * softplus(-t) + (1 - y) * softplus(t)
                LossKind::Bce | LossKind::SoftCe => (y * softplus(-t) + (1.0 - y) * softplus(t), p - y),
                LossKind::Brier => ((p - y) * (p - y), 2.0 * (p - y) * p * (1.0 - p)),
                LossKind::Composite => unreachable!("composite loss has its own objective"),
            };
            value += w * l;
            let g = w * dl;
            for (gj, xj) in grad[..d].iter_mut().zip(&self.design.x[i]) {
                *gj += g * self.alpha_r * xj;
            }
            grad[d] += g * self.alpha_r;
            grad[d + 1] += g * self.design.z[i];
        }
        grad.iter_mut().for_each(|g| *g /= total_w);
        value /= total_w;
        for j in 0..d {
            value += self.lambda2 * params[j] * params[j];
            grad[j] += 2.0 * self.lambda2 * params[j];
        }
        if self.mode == AnchorMode::Anchored {
            grad[d + 1] = 0.0;
        }
        value
    }

    pub fn value(&self, params: &[f64]) -> f64 {
        let mut g = vec![0.0; params.len()];
        self.eval(params, &mut g)
    }
}

fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// Upper bound on the objective's gradient Lipschitz constant.
pub fn curvature_bound(obj: &Objective<'_>) -> f64 {
    let c = match obj.loss {
        LossKind::Brier => 0.16,
        _ => 0.25,
    };
    let design = obj.design;
    let d = design.dim();
    let free = obj.mode == AnchorMode::Free;
    let a = obj.alpha_r;
    let lam = top_eigen(
        |i| {
            let mut row: Vec<f64> = design.x[i].iter().map(|v| a * v).collect();
            row.push(a);
            if free {
                row.push(design.z[i]);
            }
            (design.w[i], row)
        },
        design.len(),
        d + 1 + free as usize,
    );
    let total_w = design.total_weight();
    c * lam / total_w + 2.0 * obj.lambda2
}

fn frozen_mask(d: usize, mode: AnchorMode, mask: Option<&[bool]>) -> Vec<bool> {
    let mut frozen: Vec<bool> = (0..d).map(|j| mask.is_some_and(|m| !m[j])).collect();
    frozen.push(false);
    frozen.push(mode == AnchorMode::Anchored);
    frozen
}

/// Fits one `(alpha_r, lambda2)` pair from `init` (defaults to the baseline).
pub fn fit_single(
    design: &Design,
    standardizer: &Standardizer,
    cfg: &TrainConfig,
    alpha_r: f64,
    lambda2: f64,
    c0: f64,
    init: Option<&[f64]>,
) -> Result<(ResidualModel, crate::optim::GdOutcome)> {
    if design.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    if cfg.loss == LossKind::Composite {
        return Err(Error::InvalidConfig(
            "composite loss trains the latent head; use train_latent".into(),
        ));
    }
    let d = design.dim();
    if let Some(m) = &cfg.feature_mask {
        crate::error::check_len(m.len(), d)?;
    }
    let obj = Objective {
        design,
        loss: cfg.loss,
        mode: cfg.anchor_mode,
        alpha_r,
        lambda2,
    };
    let mut x0 = vec![0.0; d + 2];
    x0[d + 1] = 1.0;
    if let Some(p) = init {
        crate::error::check_len(p.len(), d + 2)?;
        x0.copy_from_slice(p);
        if cfg.anchor_mode == AnchorMode::Anchored {
            x0[d + 1] = 1.0;
        }
    }
    let frozen = frozen_mask(d, cfg.anchor_mode, cfg.feature_mask.as_deref());
    for (x, &f) in x0.iter_mut().zip(&frozen).take(d) {
        if f {
            *x = 0.0;
        }
    }
    let step = cfg.learning_rate / curvature_bound(&obj);
    let out = minimize(|p, g| obj.eval(p, g), x0, &frozen, &cfg.gd(step))?;
    let mut model = ResidualModel::baseline(standardizer.clone(), cfg.anchor_mode, alpha_r, c0);
    model.lambda2 = lambda2;
    model.theta = out.params[..d].to_vec();
    model.bias = out.params[d];
    model.anchor_coef = out.params[d + 1];
    Ok((model, out))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationScores {
    /// `None` when the validation split has no near-threshold rows.
    pub near_brier: Option<f64>,
    pub logloss: f64,
    pub brier: f64,
}

impl ValidationScores {
    pub fn of(model: &ResidualModel, design: &Design, near: &[bool]) -> Result<Self> {
        let pred: Vec<f64> = (0..design.len())
            .map(|i| model.predict_standardized(design.z[i], &design.x[i]))
            .collect();
        let (np, nt): (Vec<f64>, Vec<f64>) = pred
            .iter()
            .zip(&design.y)
            .zip(near)
            .filter(|(_, &n)| n)
            .map(|((&p, &t), _)| (p, t))
            .unzip();
        Ok(Self {
            near_brier: if np.is_empty() {
                None
            } else {
                Some(metrics::brier(&np, &nt)?)
            },
            logloss: metrics::logloss(&pred, &design.y)?,
            brier: metrics::brier(&pred, &design.y)?,
        })
    }

    fn key(&self) -> [f64; 3] {
        [self.near_brier.unwrap_or(0.0), self.logloss, self.brier]
    }

    /// Lexicographic comparison with a small tie band.
    pub fn better_than(&self, other: &Self) -> bool {
        for (a, b) in self.key().iter().zip(other.key()) {
            if (a - b).abs() > 1e-12 * (1.0 + b.abs()) {
                return *a < b;
            }
        }
        false
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub alpha_r: f64,
    pub lambda2: f64,
    pub epochs: usize,
    pub converged: bool,
    pub train_objective: f64,
    pub validation: ValidationScores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub model: ResidualModel,
    pub selected: usize,
    pub grid: Vec<GridResult>,
}

impl TrainReport {
    pub fn validation(&self) -> &ValidationScores {
        &self.grid[self.selected].validation
    }
}

/// Grid search over residual scale and L2 strength, selected on `val`.
///
/// The standardizer is fitted on `train` only.
pub fn train(train: &[TrainingRow], val: &[TrainingRow], cfg: &TrainConfig, c0: f64) -> Result<TrainReport> {
    if train.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    if val.is_empty() {
        return Err(Error::EmptyValidation);
    }
    if cfg.alpha_r_grid.is_empty() || cfg.lambda2_grid.is_empty() {
        return Err(Error::InvalidConfig("empty hyperparameter grid".into()));
    }
    let standardizer = Standardizer::fit(train.iter().map(|r| &r.x))?;
    let design = Design::build(train, &standardizer, cfg)?;
    let val_design = Design::build(val, &standardizer, cfg)?;
    let val_near: Vec<bool> = val.iter().map(|r| r.near).collect();
    let mut best: Option<(usize, ResidualModel)> = None;
    let mut grid: Vec<GridResult> = Vec::new();
    for &alpha_r in &cfg.alpha_r_grid {
        for &lambda2 in &cfg.lambda2_grid {
            let (model, out) = fit_single(&design, &standardizer, cfg, alpha_r, lambda2, c0, None)?;
            let scores = ValidationScores::of(&model, &val_design, &val_near)?;
            let improves = best
                .as_ref()
                .is_none_or(|(i, _)| scores.better_than(&grid[*i].validation));
            grid.push(GridResult {
                alpha_r,
                lambda2,
                epochs: out.epochs,
                converged: out.converged,
                train_objective: out.objective,
                validation: scores,
            });
            if improves {
                best = Some((grid.len() - 1, model));
            }
        }
    }
    let (selected, model) = best.expect("grid is nonempty");
    Ok(TrainReport { model, selected, grid })
}
