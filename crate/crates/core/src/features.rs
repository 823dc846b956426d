//! Residual-model inputs.
//!
//! The vector deliberately carries nothing derived from `Cpk_hat`, `SE`,
//! `pi_stat` or `z_stat`; the baseline enters the model only through its
//! log-odds anchor.

use serde::{Deserialize, Serialize};

use crate::capability::{CapabilityEstimate, CpkMethod, DimensionSample, SpecLimits};
use crate::{Error, Result};

pub const FEATURE_SCHEMA_VERSION: &str = "uccap-features-v1";

/// Slot names in schema order.
pub const FEATURE_NAMES: [&str; 13] = [
    "skewness",
    "excess_kurtosis",
    "normality_stat",
    "spec_type",
    "rel_position",
    "spec_width_ratio",
    "tail_margin_lo",
    "has_lsl",
    "tail_margin_hi",
    "has_usl",
    "cv",
    "n_log",
    "path_percentile",
];

pub const N_FEATURES: usize = FEATURE_NAMES.len();

/// Feature families, used for ablations and restricted comparators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureGroup {
    Distributional,
    SpecGeometry,
    /// Measurement-system and sample-size proxies (`cv`, `n_log`).
    Uncertainty,
    AnalysisPath,
}

impl FeatureGroup {
    pub fn of(index: usize) -> FeatureGroup {
        match index {
            0..=2 => FeatureGroup::Distributional,
            3..=9 => FeatureGroup::SpecGeometry,
            10 | 11 => FeatureGroup::Uncertainty,
            _ => FeatureGroup::AnalysisPath,
        }
    }

    /// Mask keeping every slot outside `excluded`.
    pub fn mask_without(excluded: &[FeatureGroup]) -> Vec<bool> {
        (0..N_FEATURES)
            .map(|i| !excluded.contains(&FeatureGroup::of(i)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        FEATURE_NAMES
            .iter()
            .position(|n| *n == name)
            .and_then(|i| self.0.get(i).copied())
    }
}

/// Signed offset of the mean from mid-tolerance in half-widths; 0 when unilateral.
pub fn rel_position(mean: f64, spec: &SpecLimits) -> f64 {
    spec.center_and_half_width().map_or(0.0, |(mid, hw)| (mean - mid) / hw)
}

pub fn extract_features(sample: &DimensionSample, est: &CapabilityEstimate) -> FeatureVector {
    let spec = &sample.spec;
    let sd = est.sd;
    let bilateral = spec.is_bilateral();
    let spec_width_ratio = match (spec.lsl, spec.usl) {
        (Some(l), Some(u)) => (u - l) / sd / 6.0,
        _ => 0.0,
    };
    let (tail_lo, has_lsl) = spec.lsl.map_or((0.0, 0.0), |l| ((est.mean - l) / sd, 1.0));
    let (tail_hi, has_usl) = spec.usl.map_or((0.0, 0.0), |u| ((u - est.mean) / sd, 1.0));
    let cv = if est.mean == 0.0 { 0.0 } else { sd / est.mean.abs() };
    FeatureVector(vec![
        est.skewness,
        est.excess_kurtosis,
        est.normality_stat,
        if bilateral { 0.0 } else { 1.0 },
        rel_position(est.mean, spec),
        spec_width_ratio,
        tail_lo,
        has_lsl,
        tail_hi,
        has_usl,
        cv,
        (est.n as f64).ln(),
        if est.method == CpkMethod::Percentile { 1.0 } else { 0.0 },
    ])
}

/// Per-feature centering and scaling fitted on a training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

/// Below this spread a column is treated as constant and left unscaled.
pub const CONSTANT_FEATURE_SD: f64 = 1e-12;

impl Standardizer {
    /// Population mean and standard deviation of each column.
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a FeatureVector>) -> Result<Self> {
        let rows: Vec<&FeatureVector> = rows.into_iter().collect();
        let first = rows.first().ok_or(Error::EmptyTrainingSet)?;
        let d = first.len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in &rows {
            if r.len() != d {
                return Err(Error::SchemaMismatch {
                    expected: d,
                    got: r.len(),
                });
            }
            for (m, v) in mean.iter_mut().zip(r.as_slice()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for r in &rows {
            for ((s, v), m) in var.iter_mut().zip(r.as_slice()).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let sd = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd < CONSTANT_FEATURE_SD {
                    1.0
                } else {
                    sd
                }
            })
            .collect();
        Ok(Self { mean, sd })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &FeatureVector) -> Result<FeatureVector> {
        if x.len() != self.dim() {
            return Err(Error::SchemaMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(FeatureVector(
            x.as_slice()
                .iter()
                .zip(self.mean.iter().zip(&self.sd))
                .map(|(v, (m, s))| (v - m) / s)
                .collect(),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capability::{analyze, EstimatorPolicy};
    use crate::distribution::Distribution;
    use crate::rng::seeded;

    fn est_for(values: Vec<f64>, spec: SpecLimits) -> (CapabilityEstimate, DimensionSample) {
        let s = DimensionSample::new("d", values, spec).unwrap();
        (analyze(&s, EstimatorPolicy::Auto).unwrap(), s)
    }

    #[test]
    fn symmetric_centered_sample() {
        let values: Vec<f64> = (-10..=10).map(|i| 5.0 + 0.01 * i as f64).collect();
        let (est, sample) = est_for(values, SpecLimits::bilateral(4.0, 6.0).unwrap());
        let x = extract_features(&sample, &est);
        assert!(x.get("rel_position").unwrap().abs() < 1e-12);
        assert!(x.get("skewness").unwrap().abs() < 1e-9);
        assert_eq!(x.get("spec_type"), Some(0.0));
        assert_eq!(x.len(), N_FEATURES);
    }

    #[test]
    fn unilateral_sentinels() {
        let values: Vec<f64> = (0..20).map(|i| 1.0 + 0.1 * (i % 7) as f64).collect();
        let (est, sample) = est_for(values, SpecLimits::upper_only(3.0).unwrap());
        let x = extract_features(&sample, &est);
        assert_eq!(x.get("spec_type"), Some(1.0));
        assert_eq!(x.get("tail_margin_lo"), Some(0.0));
        assert_eq!(x.get("has_lsl"), Some(0.0));
        assert_eq!(x.get("has_usl"), Some(1.0));
        assert_eq!(x.get("rel_position"), Some(0.0));
        assert_eq!(x.get("spec_width_ratio"), Some(0.0));
        assert!((x.get("tail_margin_hi").unwrap() - (3.0 - est.mean) / est.sd).abs() < 1e-15);
    }

    #[test]
    fn lognormal_skewness_matches_direct_moments() {
        let mut rng = seeded(31);
        let v = Distribution::Lognormal { mu: 0.0, sigma: 0.5 }.sample_n(200, &mut rng);
        // G1 = sqrt(n(n-1))/(n-2) * m3 / m2^1.5
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let m2 = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
        let m3 = v.iter().map(|x| (x - m).powi(3)).sum::<f64>() / n;
        let g1 = (n * (n - 1.0)).sqrt() / (n - 2.0) * m3 / m2.powf(1.5);
        let (est, sample) = est_for(v, SpecLimits::upper_only(10.0).unwrap());
        let x = extract_features(&sample, &est);
        assert!((x.get("skewness").unwrap() - g1).abs() < 1e-9);
        assert_eq!(x.get("path_percentile"), Some(1.0));
    }

    #[test]
    fn order_invariant() {
        let mut rng = seeded(4);
        let v = Distribution::Normal { mean: 2.0, sd: 0.1 }.sample_n(32, &mut rng);
        let mut r = v.clone();
        r.reverse();
        let spec = SpecLimits::bilateral(1.5, 2.5).unwrap();
        let (a, sa) = est_for(v, spec);
        let (b, sb) = est_for(r, spec);
        let (xa, xb) = (extract_features(&sa, &a), extract_features(&sb, &b));
        for (p, q) in xa.as_slice().iter().zip(xb.as_slice()) {
            assert!((p - q).abs() <= 1e-12 * (1.0 + p.abs()));
        }
    }

    #[test]
    fn changing_threshold_leaves_features_alone() {
        // c0 moves z_stat but never enters x.
        let mut rng = seeded(12);
        let v = Distribution::Normal { mean: 2.0, sd: 0.1 }.sample_n(32, &mut rng);
        let spec = SpecLimits::bilateral(1.5, 2.5).unwrap();
        let (est, sample) = est_for(v, spec);
        let x = extract_features(&sample, &est);
        let z1 = crate::uncertainty::baseline_risk(est.cpk_hat, 0.2, 1.33)
            .unwrap()
            .z_stat;
        let z2 = crate::uncertainty::baseline_risk(est.cpk_hat, 0.2, 1.67)
            .unwrap()
            .z_stat;
        assert_ne!(z1, z2);
        assert_eq!(x, extract_features(&sample, &est));
    }

    #[test]
    fn standardized_training_rows_have_unit_moments() {
        let mut rng = seeded(2);
        let rows: Vec<FeatureVector> = (0..50)
            .map(|_| FeatureVector(Distribution::Normal { mean: 3.0, sd: 2.0 }.sample_n(4, &mut rng)))
            .collect();
        let s = Standardizer::fit(&rows).unwrap();
        let z: Vec<FeatureVector> = rows.iter().map(|r| s.apply(r).unwrap()).collect();
        for j in 0..4 {
            let m = z.iter().map(|r| r.0[j]).sum::<f64>() / 50.0;
            let v = z.iter().map(|r| (r.0[j] - m).powi(2)).sum::<f64>() / 50.0;
            assert!(m.abs() < 1e-9 && (v - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_column_maps_to_zero() {
        let rows = vec![
            FeatureVector(vec![1.0, 7.0]),
            FeatureVector(vec![2.0, 7.0]),
            FeatureVector(vec![3.0, 7.0]),
        ];
        let s = Standardizer::fit(&rows).unwrap();
        assert_eq!(s.sd[1], 1.0);
        for r in &rows {
            assert_eq!(s.apply(r).unwrap().0[1], 0.0);
        }
    }

    #[test]
    fn held_out_row_uses_training_statistics() {
        let rows = vec![FeatureVector(vec![1.0]), FeatureVector(vec![3.0])];
        let s = Standardizer::fit(&rows).unwrap();
        // mean 2, population sd 1
        assert_eq!(s.apply(&FeatureVector(vec![5.0])).unwrap().0, vec![3.0]);
        assert!(matches!(
            Standardizer::fit(std::iter::empty()),
            Err(Error::EmptyTrainingSet)
        ));
        assert!(matches!(
            s.apply(&FeatureVector(vec![1.0, 2.0])),
            Err(Error::SchemaMismatch { .. })
        ));
    }
}
