//! Probability-quality and decision-quality metrics.

use serde::{Deserialize, Serialize};

use crate::decision::decide;
use crate::error::check_len;
use crate::optim::{minimize, GdConfig};
use crate::risk_model::PRED_CLIP;
use crate::stats::{logit, sigmoid};
use crate::{Error, Result};

pub const DEFAULT_ECE_BINS: usize = 10;

fn check_pair(pred: &[f64], target: &[f64]) -> Result<()> {
    check_len(pred.len(), target.len())?;
    if pred.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(())
}

pub fn brier(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_pair(pred, target)?;
    Ok(pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len() as f64)
}

/// Mean cross-entropy against possibly soft targets.
pub fn logloss(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_pair(pred, target)?;
    let total: f64 = pred
        .iter()
        .zip(target)
        .map(|(&p, &t)| crate::risk_model::loss_soft_ce(&[p], &[t], None).unwrap_or(f64::NAN))
        .sum();
    Ok(total / pred.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBin {
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub mean_pred: f64,
    pub mean_target: f64,
    pub count: usize,
}

fn bin_index(p: f64, n_bins: usize) -> usize {
    ((p * n_bins as f64).floor().max(0.0) as usize).min(n_bins - 1)
}

/// Nonempty equal-width bins on `[0, 1]`.
pub fn reliability_bins(pred: &[f64], target: &[f64], n_bins: usize) -> Result<Vec<ReliabilityBin>> {
    check_pair(pred, target)?;
    if n_bins == 0 {
        return Err(Error::InvalidConfig("n_bins must be positive".into()));
    }
    let mut sums = vec![(0.0, 0.0, 0usize); n_bins];
    for (&p, &t) in pred.iter().zip(target) {
        let b = &mut sums[bin_index(p, n_bins)];
        b.0 += p;
        b.1 += t;
        b.2 += 1;
    }
    Ok(sums
        .into_iter()
        .enumerate()
        .filter(|(_, s)| s.2 > 0)
        .map(|(i, (sp, st, c))| ReliabilityBin {
            bin_lo: i as f64 / n_bins as f64,
            bin_hi: (i + 1) as f64 / n_bins as f64,
            mean_pred: sp / c as f64,
            mean_target: st / c as f64,
            count: c,
        })
        .collect())
}

pub fn ece(pred: &[f64], target: &[f64], n_bins: usize) -> Result<f64> {
    let n = pred.len() as f64;
    Ok(reliability_bins(pred, target, n_bins)?
        .iter()
        .map(|b| b.count as f64 / n * (b.mean_pred - b.mean_target).abs())
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionRates {
    pub accuracy: f64,
    /// Failing items accepted, over all items.
    pub false_accept: f64,
    /// Passing items rejected, over all items.
    pub false_reject: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

/// Rejection is the positive prediction; `y_hard = 1` marks a failure.
pub fn decision_rates(pred: &[f64], y_hard: &[f64], alpha_decision: f64) -> Result<DecisionRates> {
    check_pair(pred, y_hard)?;
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&p, &y) in pred.iter().zip(y_hard) {
        let reject = !decide(p, alpha_decision);
        match (reject, y >= 0.5) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let n = pred.len() as f64;
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(DecisionRates {
        accuracy: (tp + tn) as f64 / n,
        false_accept: fn_ as f64 / n,
        false_reject: fp as f64 / n,
        precision,
        recall,
        f1,
        tp,
        fp,
        tn,
        fn_,
    })
}

/// Mann-Whitney statistic with midranks. `None` when only one class is present.
pub fn roc_auc(pred: &[f64], y_hard: &[f64]) -> Result<Option<f64>> {
    check_pair(pred, y_hard)?;
    let mut idx: Vec<usize> = (0..pred.len()).collect();
    idx.sort_by(|&a, &b| pred[a].total_cmp(&pred[b]));
    let mut ranks = vec![0.0; pred.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && pred[idx[j + 1]] == pred[idx[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = mid;
        }
        i = j + 1;
    }
    let n_pos = y_hard.iter().filter(|&&y| y >= 0.5).count();
    let n_neg = pred.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Ok(None);
    }
    let r_pos: f64 = ranks
        .iter()
        .zip(y_hard)
        .filter(|(_, &y)| y >= 0.5)
        .map(|(r, _)| r)
        .sum();
    let u = r_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(Some(u / (n_pos * n_neg) as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

/// One point per distinct score, thresholds descending.
pub fn pr_curve(pred: &[f64], y_hard: &[f64]) -> Result<Vec<PrPoint>> {
    check_pair(pred, y_hard)?;
    let n_pos = y_hard.iter().filter(|&&y| y >= 0.5).count();
    let mut idx: Vec<usize> = (0..pred.len()).collect();
    idx.sort_by(|&a, &b| pred[b].total_cmp(&pred[a]));
    let mut out = Vec::new();
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut i = 0;
    while i < idx.len() {
        let t = pred[idx[i]];
        while i < idx.len() && pred[idx[i]] == t {
            tp += (y_hard[idx[i]] >= 0.5) as usize;
            seen += 1;
            i += 1;
        }
        out.push(PrPoint {
            threshold: t,
            precision: tp as f64 / seen as f64,
            recall: if n_pos == 0 { 0.0 } else { tp as f64 / n_pos as f64 },
        });
    }
    Ok(out)
}

/// Step-interpolated area, `sum (R_k - R_{k-1}) P_k`. `None` without positives.
pub fn pr_auc(pred: &[f64], y_hard: &[f64]) -> Result<Option<f64>> {
    let curve = pr_curve(pred, y_hard)?;
    if !y_hard.iter().any(|&y| y >= 0.5) {
        return Ok(None);
    }
    let mut prev_r = 0.0;
    let mut area = 0.0;
    for p in curve {
        area += (p.recall - prev_r) * p.precision;
        prev_r = p.recall;
    }
    Ok(Some(area))
}

/// Pearson correlation; NaN when either side is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b)?;
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Ok(f64::NAN);
    }
    Ok(sab / (saa * sbb).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NearMode {
    ByEstimate,
    ByTrue,
}

/// Records that carry an estimated and optionally a true capability.
pub trait CapabilityKeys {
    fn cpk_hat(&self) -> f64;
    fn cpk_true(&self) -> Option<f64>;
}

/// Slack absorbing representation error at the inclusive band edge.
const BAND_SLACK: f64 = 1e-12;

pub fn in_band(cpk: f64, c0: f64, epsilon: f64) -> bool {
    (cpk - c0).abs() <= epsilon + BAND_SLACK
}

/// Records within `epsilon` of `c0`. `ByTrue` drops records without a true value.
pub fn near_filter<R: CapabilityKeys>(records: &[R], c0: f64, epsilon: f64, mode: NearMode) -> Vec<&R> {
    records
        .iter()
        .filter(|r| {
            let key = match mode {
                NearMode::ByEstimate => Some(r.cpk_hat()),
                NearMode::ByTrue => r.cpk_true(),
            };
            key.is_some_and(|c| in_band(c, c0, epsilon))
        })
        .collect()
}

/// Affine recalibration in log-odds: `sigmoid(a * logit(p) + b)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlattMap {
    pub a: f64,
    pub b: f64,
}

impl PlattMap {
    pub const IDENTITY: PlattMap = PlattMap { a: 1.0, b: 0.0 };

    pub fn apply(&self, p: f64) -> f64 {
        sigmoid(self.a * clipped_logit(p) + self.b).clamp(PRED_CLIP, 1.0 - PRED_CLIP)
    }

    pub fn apply_all(&self, pred: &[f64]) -> Vec<f64> {
        pred.iter().map(|&p| self.apply(p)).collect()
    }
}

fn clipped_logit(p: f64) -> f64 {
    logit(p.clamp(PRED_CLIP, 1.0 - PRED_CLIP))
}

/// Mean soft cross-entropy of a Platt map on a training set.
pub fn platt_loss(map: &PlattMap, pred: &[f64], target: &[f64]) -> Result<f64> {
    logloss(&map.apply_all(pred), target)
}

pub fn platt_recalibrate(pred_train: &[f64], target_train: &[f64]) -> Result<PlattMap> {
    check_pair(pred_train, target_train)?;
    let l: Vec<f64> = pred_train.iter().map(|&p| clipped_logit(p)).collect();
    let n = l.len() as f64;
    let lam = crate::risk_model::top_eigen(|i| (1.0, vec![l[i], 1.0]), l.len(), 2);
    let step = 1.0 / (0.25 * lam / n);
    let f = |p: &[f64], g: &mut [f64]| {
        g[0] = 0.0;
        g[1] = 0.0;
        let mut v = 0.0;
        for (&li, &y) in l.iter().zip(target_train) {
            let t = p[0] * li + p[1];
            v += y * softplus(-t) + (1.0 - y) * softplus(t);
            let r = sigmoid(t) - y;
            g[0] += r * li;
            g[1] += r;
        }
        g[0] /= n;
        g[1] /= n;
        v / n
    };
    let out = minimize(
        f,
        vec![1.0, 0.0],
        &[false, false],
        &GdConfig {
            step,
            ..GdConfig::default()
        },
    )?;
    Ok(PlattMap {
        a: out.params[0],
        b: out.params[1],
    })
}

fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub n: usize,
    pub brier: f64,
    pub logloss: f64,
    pub ece: f64,
    pub correlation: f64,
    pub roc_auc: Option<f64>,
    pub pr_auc: Option<f64>,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub false_accept_rate: f64,
    pub false_reject_rate: f64,
    pub n_near: usize,
    pub near_brier: Option<f64>,
    pub near_logloss: Option<f64>,
    pub near_ece: Option<f64>,
    pub near_recall: Option<f64>,
    pub near_accuracy: Option<f64>,
    pub reliability_bins: Vec<ReliabilityBin>,
}

impl CalibrationReport {
    /// `target` may be soft; `y_hard` drives AUC and decision rates.
    pub fn compute(pred: &[f64], target: &[f64], y_hard: &[f64], near: &[bool], alpha_decision: f64) -> Result<Self> {
        check_pair(pred, target)?;
        check_len(pred.len(), y_hard.len())?;
        check_len(pred.len(), near.len())?;
        let rates = decision_rates(pred, y_hard, alpha_decision)?;
        let pick = |v: &[f64]| -> Vec<f64> { v.iter().zip(near).filter(|(_, &k)| k).map(|(x, _)| *x).collect() };
        let (np, nt, ny) = (pick(pred), pick(target), pick(y_hard));
        let (near_brier, near_logloss, near_ece, near_recall, near_accuracy) = if np.is_empty() {
            (None, None, None, None, None)
        } else {
            let r = decision_rates(&np, &ny, alpha_decision)?;
            (
                Some(brier(&np, &nt)?),
                Some(logloss(&np, &nt)?),
                Some(ece(&np, &nt, DEFAULT_ECE_BINS)?),
                Some(r.recall),
                Some(r.accuracy),
            )
        };
        Ok(Self {
            n: pred.len(),
            brier: brier(pred, target)?,
            logloss: logloss(pred, target)?,
            ece: ece(pred, target, DEFAULT_ECE_BINS)?,
            correlation: pearson(pred, target)?,
            roc_auc: roc_auc(pred, y_hard)?,
            pr_auc: pr_auc(pred, y_hard)?,
            accuracy: rates.accuracy,
            precision: rates.precision,
            recall: rates.recall,
            f1: rates.f1,
            false_accept_rate: rates.false_accept,
            false_reject_rate: rates.false_reject,
            n_near: np.len(),
            near_brier,
            near_logloss,
            near_ece,
            near_recall,
            near_accuracy,
            reliability_bins: reliability_bins(pred, target, DEFAULT_ECE_BINS)?,
        })
    }
}
