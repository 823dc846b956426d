//! Capability indices from raw measurements.
//!
//! Two estimators are provided. The normal method uses the overall (`n - 1`)
//! standard deviation:
//!
//! ```text
//! Cpk = min((USL - mean) / 3 sd, (mean - LSL) / 3 sd)
//! ```
//!
//! The percentile method replaces `mean` and `3 sd` with quantiles at
//! `Phi(-3)`, 50% and `Phi(3)` (the 0.135% / 99.865% points), taken from a
//! fitted distribution or from the interpolated empirical quantiles. On an
//! exactly normal distribution both definitions coincide.
//!
//! Only the sides with a limit contribute, so unilateral specifications work
//! with either method.

use serde::{Deserialize, Serialize};

use crate::distribution::{self, Distribution, Family};
use crate::stats::{self, Moments};
use crate::{Error, Result};

/// Lower percentile level, `Phi(-3)`.
pub const P_LOWER: f64 = 0.001_349_898_031_630_093_3;
/// Upper percentile level, `Phi(3)`.
pub const P_UPPER: f64 = 1.0 - P_LOWER;
/// Smallest sample the normality test and family fits accept.
pub const MIN_DIAGNOSTIC_N: usize = 8;
/// Anderson-Darling 5% critical value for the adjusted statistic
/// (mean and variance estimated from the sample).
pub const AD_CRITICAL_5PCT: f64 = 0.752;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpecLimits {
    pub lsl: Option<f64>,
    pub usl: Option<f64>,
    pub nominal: Option<f64>,
}

impl SpecLimits {
    pub fn new(lsl: Option<f64>, usl: Option<f64>, nominal: Option<f64>) -> Result<Self> {
        let spec = Self { lsl, usl, nominal };
        spec.validate()?;
        Ok(spec)
    }

    pub fn bilateral(lsl: f64, usl: f64) -> Result<Self> {
        Self::new(Some(lsl), Some(usl), None)
    }

    pub fn upper_only(usl: f64) -> Result<Self> {
        Self::new(None, Some(usl), None)
    }

    pub fn lower_only(lsl: f64) -> Result<Self> {
        Self::new(Some(lsl), None, None)
    }

    pub fn validate(&self) -> Result<()> {
        match (self.lsl, self.usl) {
            (None, None) => Err(Error::MissingSpec),
            (Some(l), Some(u)) if !(l < u) => Err(Error::InvalidSpec { lsl: l, usl: u }),
            _ => Ok(()),
        }
    }

    pub fn is_bilateral(&self) -> bool {
        self.lsl.is_some() && self.usl.is_some()
    }

    /// Midpoint and half-width of a bilateral tolerance.
    pub fn center_and_half_width(&self) -> Option<(f64, f64)> {
        match (self.lsl, self.usl) {
            (Some(l), Some(u)) => Some((0.5 * (l + u), 0.5 * (u - l))),
            _ => None,
        }
    }

    /// Applies `x -> a x + b` (`a > 0`) to every limit.
    pub fn affine(&self, a: f64, b: f64) -> Self {
        let f = |v: Option<f64>| v.map(|x| a * x + b);
        Self {
            lsl: f(self.lsl),
            usl: f(self.usl),
            nominal: f(self.nominal),
        }
    }
}

/// Raw measurements of one dimension with its specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionSample {
    pub dim_id: String,
    pub values: Vec<f64>,
    pub spec: SpecLimits,
}

impl DimensionSample {
    /// Validates the sample: at least two finite values, non-zero spread and a
    /// usable specification.
    pub fn new(dim_id: impl Into<String>, values: Vec<f64>, spec: SpecLimits) -> Result<Self> {
        spec.validate()?;
        if values.len() < 2 {
            return Err(Error::TooFewSamples {
                got: values.len(),
                need: 2,
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue(i));
        }
        if !(stats::sample_sd(&values) > 0.0) {
            return Err(Error::DegenerateSample);
        }
        Ok(Self {
            dim_id: dim_id.into(),
            values,
            spec,
        })
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CpkMethod {
    Normal,
    Percentile,
}

impl CpkMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            CpkMethod::Normal => "normal",
            CpkMethod::Percentile => "percentile",
        }
    }
}

/// Where the percentile method takes its quantiles from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PercentileSource {
    Fitted(Family),
    Empirical,
}

/// The concrete estimator used for a dimension. Bootstrap resamples of the
/// dimension reuse it so the standard error belongs to the same estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorPath {
    Normal,
    Percentile(PercentileSource),
}

impl EstimatorPath {
    pub fn method(&self) -> CpkMethod {
        match self {
            EstimatorPath::Normal => CpkMethod::Normal,
            EstimatorPath::Percentile(_) => CpkMethod::Percentile,
        }
    }
}

/// How the estimator is chosen for a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorPolicy {
    /// Normal method unless the normality test rejects, then best-fit percentile.
    #[default]
    Auto,
    NormalOnly,
    PercentileOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapabilityEstimate {
    pub cpk_hat: f64,
    pub method: CpkMethod,
    pub path: EstimatorPath,
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    /// Adjusted Anderson-Darling statistic (0 when `n < 8`).
    pub normality_stat: f64,
    pub normality_pass: bool,
    pub best_fit: Family,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalityTest {
    /// `A^2 (1 + 0.75/n + 2.25/n^2)`.
    pub statistic: f64,
    pub pass: bool,
}

/// Anderson-Darling test for normality with estimated mean and variance.
pub fn normality_test(values: &[f64]) -> Result<NormalityTest> {
    let n = values.len();
    if n < MIN_DIAGNOSTIC_N {
        return Err(Error::TooFewSamples {
            got: n,
            need: MIN_DIAGNOSTIC_N,
        });
    }
    let mean = stats::mean(values);
    let sd = stats::sample_sd(values);
    if !(sd > 0.0) {
        return Err(Error::DegenerateSample);
    }
    let sorted = stats::sorted_copy(values);
    let nf = n as f64;
    let mut s = 0.0;
    for i in 0..n {
        let lower = stats::normal_cdf((sorted[i] - mean) / sd).max(f64::MIN_POSITIVE);
        // 1 - Phi(z) computed as Phi(-z) to keep the upper tail accurate.
        let upper = stats::normal_cdf(-(sorted[n - 1 - i] - mean) / sd).max(f64::MIN_POSITIVE);
        s += (2 * i + 1) as f64 * (lower.ln() + upper.ln());
    }
    let a2 = -nf - s / nf;
    let statistic = a2 * (1.0 + 0.75 / nf + 2.25 / (nf * nf));
    Ok(NormalityTest {
        statistic,
        pass: statistic < AD_CRITICAL_5PCT,
    })
}

/// Normal-method `Cpk` from the sample mean and overall standard deviation.
pub fn cpk_from_moments(mean: f64, sd: f64, spec: &SpecLimits) -> Result<f64> {
    if !(sd > 0.0) {
        return Err(Error::DegenerateSample);
    }
    let upper = spec.usl.map(|u| (u - mean) / (3.0 * sd));
    let lower = spec.lsl.map(|l| (mean - l) / (3.0 * sd));
    min_side(upper, lower)
}

/// Percentile-method `Cpk` from the three quantiles.
pub fn cpk_from_quantiles(q_lo: f64, q50: f64, q_hi: f64, spec: &SpecLimits) -> Result<f64> {
    let upper = match spec.usl {
        Some(u) => {
            let spread = q_hi - q50;
            if !(spread > 0.0) {
                return Err(Error::QuantileCollapse);
            }
            Some((u - q50) / spread)
        }
        None => None,
    };
    let lower = match spec.lsl {
        Some(l) => {
            let spread = q50 - q_lo;
            if !(spread > 0.0) {
                return Err(Error::QuantileCollapse);
            }
            Some((q50 - l) / spread)
        }
        None => None,
    };
    min_side(upper, lower)
}

fn min_side(upper: Option<f64>, lower: Option<f64>) -> Result<f64> {
    match (upper, lower) {
        (Some(u), Some(l)) => Ok(u.min(l)),
        (Some(v), None) | (None, Some(v)) => Ok(v),
        (None, None) => Err(Error::MissingSpec),
    }
}

/// Percentile `Cpk` evaluated on a fully specified distribution.
pub fn cpk_of_distribution(dist: &Distribution, spec: &SpecLimits) -> Result<f64> {
    cpk_from_quantiles(dist.quantile(P_LOWER), dist.quantile(0.5), dist.quantile(P_UPPER), spec)
}

/// Evaluates one fixed estimator on raw values.
pub fn cpk_with_path(values: &[f64], spec: &SpecLimits, path: EstimatorPath) -> Result<f64> {
    match path {
        EstimatorPath::Normal => cpk_from_moments(stats::mean(values), stats::sample_sd(values), spec),
        EstimatorPath::Percentile(PercentileSource::Fitted(family)) => {
            let dist = distribution::fit_family(values, family)?;
            cpk_of_distribution(&dist, spec)
        }
        EstimatorPath::Percentile(PercentileSource::Empirical) => {
            let sorted = stats::sorted_copy(values);
            cpk_from_quantiles(
                stats::quantile_sorted(&sorted, P_LOWER),
                stats::quantile_sorted(&sorted, 0.5),
                stats::quantile_sorted(&sorted, P_UPPER),
                spec,
            )
        }
    }
}

/// Picks the estimator for `values` under `policy`.
///
/// Below eight values neither the normality test nor the family fits are
/// defined, so `Auto` falls back to the normal method.
pub fn select_path(values: &[f64], policy: EstimatorPolicy) -> Result<EstimatorPath> {
    let best_fit = || -> Result<EstimatorPath> {
        let fit = distribution::fit_distribution(values)?;
        Ok(EstimatorPath::Percentile(PercentileSource::Fitted(fit.best.family())))
    };
    match policy {
        EstimatorPolicy::NormalOnly => Ok(EstimatorPath::Normal),
        EstimatorPolicy::PercentileOnly => best_fit(),
        EstimatorPolicy::Auto => {
            if values.len() < MIN_DIAGNOSTIC_N || normality_test(values)?.pass {
                Ok(EstimatorPath::Normal)
            } else {
                best_fit()
            }
        }
    }
}

/// `Cpk` under an estimator policy. This is the single code path shared by the
/// production analysis and the Monte Carlo oracle.
pub fn estimate_cpk(values: &[f64], spec: &SpecLimits, policy: EstimatorPolicy) -> Result<(f64, EstimatorPath)> {
    let path = select_path(values, policy)?;
    Ok((cpk_with_path(values, spec, path)?, path))
}

fn diagnostics(values: &[f64]) -> Result<(Moments, Option<NormalityTest>, Family)> {
    let moments = Moments::of(values);
    if values.len() < MIN_DIAGNOSTIC_N {
        return Ok((moments, None, Family::Normal));
    }
    let normality = normality_test(values)?;
    let best = distribution::fit_distribution(values)?.best.family();
    Ok((moments, Some(normality), best))
}

fn build_estimate(
    cpk_hat: f64,
    path: EstimatorPath,
    moments: Moments,
    normality: Option<NormalityTest>,
    best_fit: Family,
) -> CapabilityEstimate {
    CapabilityEstimate {
        cpk_hat,
        method: path.method(),
        path,
        n: moments.n,
        mean: moments.mean,
        sd: moments.sd,
        skewness: moments.skewness,
        excess_kurtosis: moments.excess_kurtosis,
        normality_stat: normality.map_or(0.0, |t| t.statistic),
        normality_pass: normality.is_none_or(|t| t.pass),
        best_fit,
    }
}

/// Normal-method estimate with full diagnostics.
pub fn estimate_cpk_normal(sample: &DimensionSample) -> Result<CapabilityEstimate> {
    sample.spec.validate()?;
    let (moments, normality, best) = diagnostics(&sample.values)?;
    let cpk = cpk_from_moments(moments.mean, moments.sd, &sample.spec)?;
    Ok(build_estimate(cpk, EstimatorPath::Normal, moments, normality, best))
}

/// Percentile-method estimate with full diagnostics.
///
/// The normality flag reports the test outcome for the values; the
/// `percentile implies fail` invariant is a property of [`analyze`]'s `Auto`
/// policy, not of this explicit request.
pub fn estimate_cpk_percentile(sample: &DimensionSample, source: PercentileSource) -> Result<CapabilityEstimate> {
    sample.spec.validate()?;
    let (moments, normality, best) = diagnostics(&sample.values)?;
    let path = EstimatorPath::Percentile(source);
    let cpk = cpk_with_path(&sample.values, &sample.spec, path)?;
    Ok(build_estimate(cpk, path, moments, normality, best))
}

/// Full per-dimension analysis under `policy`.
pub fn analyze(sample: &DimensionSample, policy: EstimatorPolicy) -> Result<CapabilityEstimate> {
    sample.spec.validate()?;
    let (moments, normality, best) = diagnostics(&sample.values)?;
    let (cpk, path) = estimate_cpk(&sample.values, &sample.spec, policy)?;
    Ok(build_estimate(cpk, path, moments, normality, best))
}
