//! Candidate distribution families, their quantiles and maximum-likelihood fits.

use rand::Rng;
use rand_distr::{Distribution as _, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::stats::{self, normal_cdf, normal_quantile};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Normal,
    Lognormal,
    Weibull,
    Logistic,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Normal, Family::Lognormal, Family::Weibull, Family::Logistic];

    pub fn name(self) -> &'static str {
        match self {
            Family::Normal => "normal",
            Family::Lognormal => "lognormal",
            Family::Weibull => "weibull",
            Family::Logistic => "logistic",
        }
    }

    /// Tie-break rank; lower wins (simpler, symmetric families first).
    fn preference(self) -> u8 {
        match self {
            Family::Normal => 0,
            Family::Logistic => 1,
            Family::Lognormal => 2,
            Family::Weibull => 3,
        }
    }

    pub fn requires_positive(self) -> bool {
        matches!(self, Family::Lognormal | Family::Weibull)
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "normal" => Ok(Family::Normal),
            "lognormal" | "lognorm" => Ok(Family::Lognormal),
            "weibull" => Ok(Family::Weibull),
            "logistic" => Ok(Family::Logistic),
            other => Err(Error::InvalidConfig(format!("unknown family {other:?}"))),
        }
    }
}

/// A fully parameterized member of one of the candidate families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Distribution {
    Normal {
        mean: f64,
        sd: f64,
    },
    /// Parameters of `ln X ~ N(mu, sigma^2)`.
    Lognormal {
        mu: f64,
        sigma: f64,
    },
    Weibull {
        shape: f64,
        scale: f64,
    },
    Logistic {
        location: f64,
        scale: f64,
    },
}

impl Distribution {
    pub fn family(&self) -> Family {
        match self {
            Distribution::Normal { .. } => Family::Normal,
            Distribution::Lognormal { .. } => Family::Lognormal,
            Distribution::Weibull { .. } => Family::Weibull,
            Distribution::Logistic { .. } => Family::Logistic,
        }
    }

    pub fn quantile(&self, p: f64) -> f64 {
        match *self {
            Distribution::Normal { mean, sd } => mean + sd * normal_quantile(p),
            Distribution::Lognormal { mu, sigma } => (mu + sigma * normal_quantile(p)).exp(),
            Distribution::Weibull { shape, scale } => scale * (-(-p).ln_1p()).powf(1.0 / shape),
            Distribution::Logistic { location, scale } => location + scale * stats::logit(p),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            Distribution::Normal { mean, sd } => normal_cdf((x - mean) / sd),
            Distribution::Lognormal { mu, sigma } => {
                if x <= 0.0 {
                    0.0
                } else {
                    normal_cdf((x.ln() - mu) / sigma)
                }
            }
            Distribution::Weibull { shape, scale } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-(x / scale).powf(shape)).exp_m1()
                }
            }
            Distribution::Logistic { location, scale } => stats::sigmoid((x - location) / scale),
        }
    }

    /// Log-density; `-inf` outside the support.
    pub fn ln_pdf(&self, x: f64) -> f64 {
        const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
        match *self {
            Distribution::Normal { mean, sd } => {
                let z = (x - mean) / sd;
                -0.5 * z * z - sd.ln() - LN_SQRT_2PI
            }
            Distribution::Lognormal { mu, sigma } => {
                if x <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                let lx = x.ln();
                let z = (lx - mu) / sigma;
                -0.5 * z * z - sigma.ln() - LN_SQRT_2PI - lx
            }
            Distribution::Weibull { shape, scale } => {
                if x <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                let t = x / scale;
                shape.ln() - scale.ln() + (shape - 1.0) * t.ln() - t.powf(shape)
            }
            Distribution::Logistic { location, scale } => {
                let z = (x - location) / scale;
                // -z - ln s - 2 ln(1 + e^-z), written symmetric in z
                -z.abs() - scale.ln() - 2.0 * (-z.abs()).exp().ln_1p()
            }
        }
    }

    pub fn log_likelihood(&self, values: &[f64]) -> f64 {
        values.iter().map(|&x| self.ln_pdf(x)).sum()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Distribution::Normal { mean, sd } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + sd * z
            }
            Distribution::Lognormal { mu, sigma } => {
                let z: f64 = StandardNormal.sample(rng);
                (mu + sigma * z).exp()
            }
            Distribution::Weibull { shape, scale } => {
                let u: f64 = open_unit(rng);
                scale * (-u.ln()).powf(1.0 / shape)
            }
            Distribution::Logistic { location, scale } => {
                let u: f64 = open_unit(rng);
                location + scale * stats::logit(u)
            }
        }
    }

    pub fn sample_n<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        (0..n).map(|_| self.sample(rng)).collect()
    }
}

fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Outcome of fitting every candidate family to one sample.
#[derive(Debug, Clone)]
pub struct FitReport {
    pub best: Distribution,
    pub best_log_likelihood: f64,
    /// Per-family log-likelihood; `None` where the family was excluded or failed.
    pub candidates: Vec<(Family, Option<f64>)>,
}

/// Fit all four families by maximum likelihood and keep the most likely one.
///
/// Lognormal and Weibull are only candidates when every value is strictly
/// positive. Ties go to the simpler family (normal, logistic, lognormal,
/// weibull in that order).
pub fn fit_distribution(values: &[f64]) -> Result<FitReport> {
    if values.len() < 8 {
        return Err(Error::TooFewSamples {
            got: values.len(),
            need: 8,
        });
    }
    let positive = values.iter().all(|&x| x > 0.0);
    let mut candidates = Vec::with_capacity(4);
    let mut best: Option<(Distribution, f64)> = None;
    for family in Family::ALL {
        if family.requires_positive() && !positive {
            candidates.push((family, None));
            continue;
        }
        let fitted = fit_family(values, family)
            .ok()
            .map(|d| (d, d.log_likelihood(values)))
            .filter(|(_, ll)| ll.is_finite());
        candidates.push((family, fitted.map(|(_, ll)| ll)));
        if let Some((d, ll)) = fitted {
            let better = match best {
                None => true,
                Some((b, bll)) => {
                    let tol = 1e-12 * bll.abs().max(1.0);
                    ll > bll + tol || ((ll - bll).abs() <= tol && family.preference() < b.family().preference())
                }
            };
            if better {
                best = Some((d, ll));
            }
        }
    }
    let (best, best_log_likelihood) = best.ok_or(Error::NoFeasibleFamily)?;
    Ok(FitReport {
        best,
        best_log_likelihood,
        candidates,
    })
}

/// Maximum-likelihood fit of one family.
pub fn fit_family(values: &[f64], family: Family) -> Result<Distribution> {
    let fail = |reason: &str| Error::FitFailed {
        family: family.name(),
        reason: reason.to_string(),
    };
    if values.len() < 2 {
        return Err(fail("need at least two values"));
    }
    if family.requires_positive() && values.iter().any(|&x| x <= 0.0) {
        return Err(fail("values must be strictly positive"));
    }
    match family {
        Family::Normal => {
            let (mean, sd) = mle_normal(values.iter().copied());
            if sd > 0.0 {
                Ok(Distribution::Normal { mean, sd })
            } else {
                Err(fail("zero variance"))
            }
        }
        Family::Lognormal => {
            let (mu, sigma) = mle_normal(values.iter().map(|x| x.ln()));
            if sigma > 0.0 {
                Ok(Distribution::Lognormal { mu, sigma })
            } else {
                Err(fail("zero variance of logs"))
            }
        }
        Family::Weibull => fit_weibull(values).ok_or_else(|| fail("shape equation has no root")),
        Family::Logistic => fit_logistic(values).ok_or_else(|| fail("did not converge")),
    }
}

fn mle_normal(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Solves the profile score `1/k + mean(ln x) - sum(x^k ln x)/sum(x^k) = 0`,
/// which is strictly decreasing in `k`, then `scale = mean(x^k)^(1/k)`.
fn fit_weibull(values: &[f64]) -> Option<Distribution> {
    let xmax = values.iter().copied().fold(f64::MIN, f64::max);
    // Work on x / max(x) so x^k stays in (0, 1].
    let logs: Vec<f64> = values.iter().map(|&x| (x / xmax).ln()).collect();
    let n = logs.len() as f64;
    let mean_log = logs.iter().sum::<f64>() / n;
    if logs.iter().all(|&l| (l - mean_log).abs() < 1e-300) {
        return None;
    }
    let score = |k: f64| {
        let (mut s0, mut s1) = (0.0, 0.0);
        for &l in &logs {
            let w = (k * l).exp();
            s0 += w;
            s1 += w * l;
        }
        1.0 / k + mean_log - s1 / s0
    };
    let (mut lo, mut hi) = (1e-3, 1.0);
    while score(hi) > 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e6 {
            return None;
        }
    }
    // Bisection in log-space; the bracket is tiny relative to the cost of a fit.
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if score(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo - 1.0 < 1e-13 {
            break;
        }
    }
    let shape = 0.5 * (lo + hi);
    let mean_pow = logs.iter().map(|&l| (shape * l).exp()).sum::<f64>() / n;
    let scale = xmax * mean_pow.powf(1.0 / shape);
    (shape.is_finite() && scale.is_finite() && scale > 0.0).then_some(Distribution::Weibull { shape, scale })
}

/// Coordinate-wise solution of the two logistic score equations
/// `sum tanh(z/2) = 0` (location) and `sum z tanh(z/2) = n` (scale),
/// each monotone in its own parameter.
fn fit_logistic(values: &[f64]) -> Option<Distribution> {
    let n = values.len() as f64;
    let sorted = stats::sorted_copy(values);
    let mut location = stats::quantile_sorted(&sorted, 0.5);
    let sd = stats::sample_sd(values);
    if sd <= 0.0 {
        return None;
    }
    let mut scale = sd * 3f64.sqrt() / std::f64::consts::PI;
    let (xmin, xmax) = (sorted[0], sorted[sorted.len() - 1]);

    for _ in 0..200 {
        let prev = (location, scale);

        let loc_score = |m: f64| values.iter().map(|&x| ((x - m) / (2.0 * scale)).tanh()).sum::<f64>();
        let (mut lo, mut hi) = (xmin, xmax);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if loc_score(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * (1.0 + mid.abs()) {
                break;
            }
        }
        location = 0.5 * (lo + hi);

        let scale_score = |s: f64| {
            values
                .iter()
                .map(|&x| {
                    let z = (x - location) / s;
                    z * (0.5 * z).tanh()
                })
                .sum::<f64>()
                - n
        };
        let (mut lo, mut hi) = (scale * 0.5, scale * 2.0);
        while scale_score(lo) < 0.0 {
            lo *= 0.5;
            if lo < 1e-300 {
                return None;
            }
        }
        while scale_score(hi) > 0.0 {
            hi *= 2.0;
            if !hi.is_finite() {
                return None;
            }
        }
        for _ in 0..100 {
            let mid = (lo * hi).sqrt();
            if scale_score(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi / lo - 1.0 < 1e-14 {
                break;
            }
        }
        scale = (lo * hi).sqrt();

        if (location - prev.0).abs() <= 1e-12 * (scale + location.abs()) && (scale / prev.1 - 1.0).abs() <= 1e-12 {
            break;
        }
    }
    (location.is_finite() && scale.is_finite() && scale > 0.0).then_some(Distribution::Logistic { location, scale })
}
