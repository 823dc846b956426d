//! Bootstrap standard error of `Cpk_hat` and the statistical baseline risk
//! `pi_stat = Phi((C0 - Cpk_hat) / SE)` with its log-odds.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::capability::{cpk_with_path, DimensionSample, EstimatorPath, SpecLimits};
use crate::rng::{seeded, SimRng};
use crate::stats::{self, logit, normal_cdf};
use crate::{Error, Result, DEFAULT_EPSILON_CLIP};

pub const MIN_BOOT: usize = 50;
/// Redraws allowed per replicate before giving up on a degenerate resample.
pub const MAX_RESAMPLE_RETRIES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineRisk {
    pub se: f64,
    pub pi_stat: f64,
    pub z_stat: f64,
    pub c0: f64,
    pub epsilon_clip: f64,
}

/// Baseline failure probability with the default clip of `1e-6`.
pub fn baseline_risk(cpk_hat: f64, se: f64, c0: f64) -> Result<BaselineRisk> {
    baseline_risk_clipped(cpk_hat, se, c0, DEFAULT_EPSILON_CLIP)
}

pub fn baseline_risk_clipped(cpk_hat: f64, se: f64, c0: f64, epsilon_clip: f64) -> Result<BaselineRisk> {
    if !(se > 0.0) || !se.is_finite() {
        return Err(Error::NonpositiveSE(se));
    }
    let raw = normal_cdf((c0 - cpk_hat) / se);
    let pi_stat = raw.clamp(epsilon_clip, 1.0 - epsilon_clip);
    Ok(BaselineRisk {
        se,
        pi_stat,
        z_stat: logit(pi_stat),
        c0,
        epsilon_clip,
    })
}

/// Bootstrap `Cpk` replicates of `values` through a fixed estimator.
///
/// Resamples whose estimate is undefined (zero spread, failed fit) are redrawn
/// up to [`MAX_RESAMPLE_RETRIES`] times.
pub fn bootstrap_replicates(
    values: &[f64],
    spec: &SpecLimits,
    path: EstimatorPath,
    n_boot: usize,
    rng: &mut SimRng,
) -> Result<Vec<f64>> {
    let n = values.len();
    let mut buf = vec![0.0; n];
    let mut out = Vec::with_capacity(n_boot);
    for _ in 0..n_boot {
        let mut attempt = 0;
        loop {
            for slot in buf.iter_mut() {
                *slot = values[rng.random_range(0..n)];
            }
            match cpk_with_path(&buf, spec, path) {
                Ok(c) if c.is_finite() => {
                    out.push(c);
                    break;
                }
                _ => {
                    attempt += 1;
                    if attempt > MAX_RESAMPLE_RETRIES {
                        return Err(Error::DegenerateBootstrap);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Standard deviation of `Cpk_hat` over `n_boot` nonparametric resamples.
pub fn bootstrap_se(sample: &DimensionSample, n_boot: usize, path: EstimatorPath, seed: u64) -> Result<f64> {
    bootstrap_se_values(&sample.values, &sample.spec, n_boot, path, seed)
}

pub fn bootstrap_se_values(
    values: &[f64],
    spec: &SpecLimits,
    n_boot: usize,
    path: EstimatorPath,
    seed: u64,
) -> Result<f64> {
    if n_boot < MIN_BOOT {
        return Err(Error::TooFewBoot {
            got: n_boot,
            need: MIN_BOOT,
        });
    }
    let mut rng = seeded(seed);
    let reps = bootstrap_replicates(values, spec, path, n_boot, &mut rng)?;
    let se = stats::sample_sd(&reps);
    if !(se > 0.0) {
        return Err(Error::DegenerateBootstrap);
    }
    Ok(se)
}

/// Large-sample approximation `sqrt(1/(9n) + Cpk^2 / (2(n-1)))` for normal data.
pub fn analytic_se(cpk: f64, n: usize) -> f64 {
    let n = n as f64;
    (1.0 / (9.0 * n) + cpk * cpk / (2.0 * (n - 1.0))).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::sigmoid;
    use proptest::prelude::*;

    #[test]
    fn worked_cases() {
        let b = baseline_risk(1.34, 0.14, 1.33).unwrap();
        assert!((b.pi_stat - 0.472).abs() < 1e-3);
        let c = baseline_risk(1.26, 0.10, 1.33).unwrap();
        assert!((c.pi_stat - 0.758).abs() < 1e-3);
        assert!((c.z_stat - 1.142).abs() < 1e-3);
        let a = baseline_risk(1.70, 0.08, 1.33).unwrap();
        assert!(a.pi_stat < 2e-6 && a.pi_stat >= 1e-6);
        assert!(a.z_stat < -13.0);
    }

    #[test]
    fn boundary_is_a_coin_flip() {
        for se in [0.01, 0.1, 3.0] {
            let b = baseline_risk(1.33, se, 1.33).unwrap();
            assert_eq!(b.pi_stat, 0.5);
            assert_eq!(b.z_stat, 0.0);
        }
    }

    #[test]
    fn clip_bounds_hold() {
        let lo = baseline_risk(10.0, 0.01, 1.33).unwrap();
        assert_eq!(lo.pi_stat, 1e-6);
        assert!((lo.z_stat - logit(1e-6)).abs() < 1e-12);
        let hi = baseline_risk(-10.0, 0.01, 1.33).unwrap();
        assert_eq!(hi.pi_stat, 1.0 - 1e-6);
    }

    #[test]
    fn nonpositive_se_rejected() {
        assert!(matches!(baseline_risk(1.0, 0.0, 1.33), Err(Error::NonpositiveSE(_))));
        assert!(matches!(baseline_risk(1.0, -0.1, 1.33), Err(Error::NonpositiveSE(_))));
    }

    #[test]
    fn probit_logit_local_equivalence() {
        // The variance-matching slope peaks at a 0.02266 gap near |z| = 0.68;
        // the minimax slope 1.702 stays under 0.01.
        let k = std::f64::consts::PI / 3f64.sqrt();
        let gap = |k: f64| {
            (-1000..=1000)
                .map(|i| {
                    let z = i as f64 / 1000.0;
                    (normal_cdf(z) - sigmoid(k * z)).abs()
                })
                .fold(0.0, f64::max)
        };
        assert!((gap(k) - 0.022_662_837_598_297).abs() < 1e-9);
        assert!(gap(1.702) < 0.01);
    }

    #[test]
    fn two_valued_sample_has_positive_se() {
        let values: Vec<f64> = (0..40).map(|i| if i % 2 == 0 { 1.0 } else { 1.1 }).collect();
        let s = DimensionSample::new("two", values, SpecLimits::bilateral(-50.0, 50.0).unwrap()).unwrap();
        let se = bootstrap_se(&s, 100, EstimatorPath::Normal, 9).unwrap();
        assert!(se > 0.0 && se.is_finite());
    }

    #[test]
    fn too_few_replications() {
        let s = DimensionSample::new("x", vec![1.0, 2.0, 3.0], SpecLimits::upper_only(9.0).unwrap()).unwrap();
        assert!(matches!(
            bootstrap_se(&s, 49, EstimatorPath::Normal, 1),
            Err(Error::TooFewBoot { .. })
        ));
    }

    #[test]
    fn bootstrap_is_deterministic_per_seed() {
        let s = DimensionSample::new(
            "x",
            (0..32).map(|i| (i as f64 * 0.37).sin()).collect(),
            SpecLimits::bilateral(-3.0, 3.0).unwrap(),
        )
        .unwrap();
        let a = bootstrap_se(&s, 100, EstimatorPath::Normal, 5).unwrap();
        let b = bootstrap_se(&s, 100, EstimatorPath::Normal, 5).unwrap();
        let c = bootstrap_se(&s, 100, EstimatorPath::Normal, 6).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        assert_ne!(a, c);
    }

    proptest! {
        #[test]
        fn pi_stat_decreases_in_cpk(se in 0.05f64..0.5, c in 0.5f64..2.0, d in 0.001f64..0.3) {
            let a = baseline_risk(c, se, 1.33).unwrap();
            let b = baseline_risk(c + d, se, 1.33).unwrap();
            if a.pi_stat > 1e-6 && a.pi_stat < 1.0 - 1e-6 {
                prop_assert!(b.pi_stat < a.pi_stat);
            }
            prop_assert!((sigmoid(a.z_stat) - a.pi_stat).abs() < 1e-12);
        }

        #[test]
        fn shrinking_se_sharpens(m in 0.01f64..0.5, se in 0.05f64..0.5, f in 0.1f64..0.95) {
            let above = baseline_risk(1.33 + m, se, 1.33).unwrap();
            let above_tight = baseline_risk(1.33 + m, se * f, 1.33).unwrap();
            prop_assert!(above_tight.pi_stat <= above.pi_stat);
            let below = baseline_risk(1.33 - m, se, 1.33).unwrap();
            let below_tight = baseline_risk(1.33 - m, se * f, 1.33).unwrap();
            prop_assert!(below_tight.pi_stat >= below.pi_stat);
        }
    }
}
