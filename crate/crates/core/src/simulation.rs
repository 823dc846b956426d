//! Nested Monte Carlo harness.
//!
//! The outer loop draws ground-truth processes with a known percentile-based
//! capability, the observed step analyzes one dataset per process exactly as
//! production would, and the inner loop replays the estimator on fresh
//! datasets to get the oracle risk `pi_true`.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::capability::{
    analyze, cpk_of_distribution, cpk_with_path, estimate_cpk, select_path, CapabilityEstimate, DimensionSample,
    EstimatorPath, EstimatorPolicy, PercentileSource, SpecLimits, MIN_DIAGNOSTIC_N, P_LOWER, P_UPPER,
};
use crate::distribution::{Distribution, Family};
use crate::features::{extract_features, FeatureGroup, FeatureVector};
use crate::metrics::{in_band, CalibrationReport, CapabilityKeys};
use crate::risk_model::{train, AnchorMode, LossKind, ResidualModel, TrainConfig, TrainingRow};
use crate::rng::{derive_seed, seeded, SimRng};
use crate::uncertainty::{baseline_risk, bootstrap_replicates, bootstrap_se, BaselineRisk};
use crate::{Error, Result};

// Sub-stream indices under each process seed.
const STREAM_PARAMS: u64 = 0;
const STREAM_OBSERVED: u64 = 1;
const STREAM_SE: u64 = 2;
const STREAM_SOFT: u64 = 3;
const STREAM_INNER: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SoftTargetMode {
    /// Inputs from one half, bootstrap target from the other.
    #[default]
    Split,
    /// Inputs and target from the same values. Circular; ablation only.
    Same,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub n_outer: usize,
    pub n_inner: usize,
    pub n_boot: usize,
    pub c0: f64,
    pub epsilon_near: f64,
    pub families: Vec<Family>,
    pub n_grid: Vec<usize>,
    /// Range of `cpk_true - c0`.
    pub margin_range: [f64; 2],
    /// Share of processes whose margin is drawn from `[-epsilon_near, epsilon_near]`.
    pub near_mass: f64,
    pub bilateral_prob: f64,
    /// Share of bilateral specs with equal capability on both sides.
    pub centered_prob: f64,
    /// Largest extra capability given to the non-binding side.
    pub slack_max: f64,
    pub policy: EstimatorPolicy,
    pub soft_mode: SoftTargetMode,
    pub k_folds: usize,
    pub val_fraction: f64,
    pub train: TrainConfig,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_outer: 320,
            n_inner: 250,
            n_boot: crate::DEFAULT_N_BOOT,
            c0: crate::DEFAULT_C0,
            epsilon_near: crate::DEFAULT_EPSILON_NEAR,
            families: Family::ALL.to_vec(),
            n_grid: vec![20, 32, 50, 100, 200],
            margin_range: [-0.4, 0.6],
            near_mass: 0.4,
            bilateral_prob: 0.7,
            centered_prob: 0.25,
            slack_max: 0.8,
            policy: EstimatorPolicy::Auto,
            soft_mode: SoftTargetMode::Split,
            k_folds: 5,
            val_fraction: 0.2,
            train: TrainConfig::default(),
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.n_outer == 0 || self.families.is_empty() || self.n_grid.is_empty() {
            return bad("n_outer, families and n_grid must be nonempty");
        }
        if self.n_inner < 100 {
            return bad("n_inner must be at least 100");
        }
        if self.margin_range[0] > self.margin_range[1] {
            return bad("margin_range must be ordered");
        }
        if !(0.0..=1.0).contains(&self.near_mass)
            || !(0.0..=1.0).contains(&self.bilateral_prob)
            || !(0.0..=1.0).contains(&self.centered_prob)
        {
            return bad("probabilities must lie in [0, 1]");
        }
        if self.k_folds < 2 {
            return bad("k_folds must be at least 2");
        }
        if !(0.0 < self.val_fraction && self.val_fraction < 1.0) {
            return bad("val_fraction must lie in (0, 1)");
        }
        Ok(())
    }
}

/// Where the specification limits sit relative to the process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpecLayout {
    UpperOnly,
    LowerOnly,
    /// Both sides at the target capability.
    Centered,
    /// The upper side binds; the lower side has `slack` extra capability.
    UpperBinding {
        slack: f64,
    },
    LowerBinding {
        slack: f64,
    },
}

/// Limits giving `dist` the percentile capability `target` under `layout`.
pub fn solve_spec(dist: &Distribution, target: f64, layout: SpecLayout) -> Result<SpecLimits> {
    let infeasible = || Error::InfeasibleSpec {
        family: dist.family().name(),
        target,
    };
    if !(target > 0.0) || !target.is_finite() {
        return Err(infeasible());
    }
    let (lo, med, hi) = (dist.quantile(P_LOWER), dist.quantile(0.5), dist.quantile(P_UPPER));
    let usl = |c: f64| med + c * (hi - med);
    let lsl = |c: f64| med - c * (med - lo);
    let spec = match layout {
        SpecLayout::UpperOnly => SpecLimits::upper_only(usl(target)),
        SpecLayout::LowerOnly => SpecLimits::lower_only(lsl(target)),
        SpecLayout::Centered => SpecLimits::bilateral(lsl(target), usl(target)),
        SpecLayout::UpperBinding { slack } => SpecLimits::bilateral(lsl(target + slack), usl(target)),
        SpecLayout::LowerBinding { slack } => SpecLimits::bilateral(lsl(target), usl(target + slack)),
    }
    .map_err(|_| infeasible())?;
    let got = cpk_of_distribution(dist, &spec)?;
    if (got - target).abs() > 1e-9 * (1.0 + target) {
        return Err(infeasible());
    }
    Ok(spec)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimProcess {
    pub dim_id: String,
    pub index: usize,
    pub dist: Distribution,
    pub n: usize,
    pub spec: SpecLimits,
    pub layout: SpecLayout,
    pub cpk_true: f64,
    /// Root of every random stream used for this process.
    pub seed: u64,
}

impl SimProcess {
    pub fn family(&self) -> Family {
        self.dist.family()
    }

    pub fn draw(&self, n: usize, rng: &mut SimRng) -> Vec<f64> {
        self.dist.sample_n(n, rng)
    }
}

fn draw_family_params(family: Family, rng: &mut SimRng) -> Distribution {
    match family {
        Family::Normal => Distribution::Normal {
            mean: 10.0,
            sd: 10f64.powf(rng.random_range(-1.0..0.3)),
        },
        Family::Lognormal => Distribution::Lognormal {
            mu: rng.random_range(0.0..2.0),
            sigma: rng.random_range(0.08..0.5),
        },
        Family::Weibull => Distribution::Weibull {
            shape: rng.random_range(1.5..5.0),
            scale: rng.random_range(1.0..10.0),
        },
        Family::Logistic => Distribution::Logistic {
            location: 10.0,
            scale: 10f64.powf(rng.random_range(-1.3..0.0)),
        },
    }
}

fn draw_layout(family: Family, cfg: &SimConfig, rng: &mut SimRng) -> SpecLayout {
    if rng.random::<f64>() < cfg.bilateral_prob {
        if rng.random::<f64>() < cfg.centered_prob {
            return SpecLayout::Centered;
        }
        let slack = rng.random_range(0.0..=cfg.slack_max);
        if rng.random::<bool>() {
            SpecLayout::UpperBinding { slack }
        } else {
            SpecLayout::LowerBinding { slack }
        }
    } else if family.requires_positive() || rng.random::<bool>() {
        SpecLayout::UpperOnly
    } else {
        SpecLayout::LowerOnly
    }
}

/// Draws one process. Positive families fall back to an upper-only spec when
/// a lower limit would sit at or below zero.
pub fn generate_process(cfg: &SimConfig, index: usize) -> Result<SimProcess> {
    let seed = derive_seed(cfg.seed, index as u64);
    let mut rng = seeded(derive_seed(seed, STREAM_PARAMS));
    let family = cfg.families[rng.random_range(0..cfg.families.len())];
    let n = cfg.n_grid[rng.random_range(0..cfg.n_grid.len())];
    let margin = if rng.random::<f64>() < cfg.near_mass {
        rng.random_range(-cfg.epsilon_near..=cfg.epsilon_near)
    } else {
        rng.random_range(cfg.margin_range[0]..=cfg.margin_range[1])
    };
    let target = cfg.c0 + margin;
    let dist = draw_family_params(family, &mut rng);
    let mut layout = draw_layout(family, cfg, &mut rng);
    let mut spec = solve_spec(&dist, target, layout)?;
    if family.requires_positive() && spec.lsl.is_some_and(|l| l <= 0.0) {
        layout = SpecLayout::UpperOnly;
        spec = solve_spec(&dist, target, layout)?;
    }
    Ok(SimProcess {
        dim_id: format!("P{index:04}"),
        index,
        dist,
        n,
        spec,
        layout,
        cpk_true: cpk_of_distribution(&dist, &spec)?,
        seed,
    })
}

pub fn generate_processes(cfg: &SimConfig) -> Result<Vec<SimProcess>> {
    cfg.validate()?;
    (0..cfg.n_outer).map(|i| generate_process(cfg, i)).collect()
}

/// Fraction of `n_inner` fresh datasets whose estimate falls below `c0`.
pub fn oracle_risk(process: &SimProcess, n_inner: usize, c0: f64, policy: EstimatorPolicy, seed: u64) -> Result<f64> {
    if n_inner < 100 {
        return Err(Error::InvalidConfig("n_inner must be at least 100".into()));
    }
    let mut rng = seeded(seed);
    let mut below = 0usize;
    for _ in 0..n_inner {
        let values = process.draw(process.n, &mut rng);
        let (cpk, _) = estimate_cpk(&values, &process.spec, policy)?;
        below += (cpk < c0) as usize;
    }
    Ok(below as f64 / n_inner as f64)
}

/// 1 iff the estimate misses the threshold.
pub fn label_hard(cpk_hat: f64, c0: f64) -> f64 {
    if cpk_hat < c0 {
        1.0
    } else {
        0.0
    }
}

/// Everything production computes from one set of values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub est: CapabilityEstimate,
    pub baseline: BaselineRisk,
    pub features: FeatureVector,
}

pub fn observe(
    sample: &DimensionSample,
    n_boot: usize,
    c0: f64,
    policy: EstimatorPolicy,
    seed: u64,
) -> Result<Observation> {
    let est = analyze(sample, policy)?;
    let se = bootstrap_se(sample, n_boot, est.path, seed)?;
    Ok(Observation {
        baseline: baseline_risk(est.cpk_hat, se, c0)?,
        features: extract_features(sample, &est),
        est,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftTarget {
    pub y_soft: f64,
    /// Estimate on the target half, for the matching hard label.
    pub cpk_target_half: f64,
    /// Inputs computed on the other half (or the full sample in `Same` mode).
    pub inputs: Observation,
    pub mode: SoftTargetMode,
}

/// Bootstrap surrogate of the decision risk.
///
/// In split mode the values are shuffled into halves A and B; the inputs come
/// from A and `y_soft` is the share of `n_boot` resamples of B whose estimate
/// falls below `c0`, so the target never sees the values behind the inputs.
pub fn build_soft_targets(
    sample: &DimensionSample,
    n_boot: usize,
    c0: f64,
    policy: EstimatorPolicy,
    mode: SoftTargetMode,
    seed: u64,
) -> Result<SoftTarget> {
    let mut rng = seeded(seed);
    let (a, b) = match mode {
        SoftTargetMode::Split => {
            let n = sample.n();
            let half = n / 2;
            if half < MIN_DIAGNOSTIC_N {
                return Err(Error::TooFewSamples {
                    got: half,
                    need: MIN_DIAGNOSTIC_N,
                });
            }
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            let (mut ia, mut ib) = (idx[..half].to_vec(), idx[half..].to_vec());
            ia.sort_unstable();
            ib.sort_unstable();
            let pick = |ix: &[usize]| ix.iter().map(|&i| sample.values[i]).collect::<Vec<f64>>();
            let a = DimensionSample::new(sample.dim_id.clone(), pick(&ia), sample.spec)?;
            let b = DimensionSample::new(sample.dim_id.clone(), pick(&ib), sample.spec)?;
            (a, b)
        }
        SoftTargetMode::Same => (sample.clone(), sample.clone()),
    };
    let inputs = observe(&a, n_boot, c0, policy, rng.random())?;
    let path_b = select_path(&b.values, policy)?;
    let cpk_b = cpk_with_path(&b.values, &b.spec, path_b)?;
    let reps = bootstrap_replicates(&b.values, &b.spec, path_b, n_boot, &mut rng)?;
    let y_soft = reps.iter().filter(|&&c| c < c0).count() as f64 / reps.len() as f64;
    Ok(SoftTarget {
        y_soft,
        cpk_target_half: cpk_b,
        inputs,
        mode,
    })
}

impl SoftTarget {
    /// Training row: inputs from the input half, `y_soft` as target.
    pub fn training_row(&self, dim_id: &str, c0: f64, epsilon_near: f64) -> TrainingRow {
        let inp = &self.inputs;
        TrainingRow {
            dim_id: dim_id.to_string(),
            x: inp.features.clone(),
            z_stat: inp.baseline.z_stat,
            cpk_hat: inp.est.cpk_hat,
            se: inp.baseline.se,
            target: self.y_soft,
            near: in_band(inp.est.cpk_hat, c0, epsilon_near),
            positive: self.y_soft >= 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRecord {
    pub process: SimProcess,
    pub cpk_hat: f64,
    pub se: f64,
    pub pi_stat: f64,
    pub z_stat: f64,
    pub path: EstimatorPath,
    pub features: FeatureVector,
    pub pi_true: f64,
    /// `|cpk_true - c0| <= epsilon_near`.
    pub near_flag: bool,
    pub soft: SoftTarget,
}

impl CapabilityKeys for OracleRecord {
    fn cpk_hat(&self) -> f64 {
        self.cpk_hat
    }

    fn cpk_true(&self) -> Option<f64> {
        Some(self.process.cpk_true)
    }
}

impl OracleRecord {
    /// Training row from the split-sample inputs.
    pub fn training_row(&self, target: f64, c0: f64, epsilon_near: f64) -> TrainingRow {
        TrainingRow {
            target,
            positive: target >= 0.5,
            ..self.soft.training_row(&self.process.dim_id, c0, epsilon_near)
        }
    }

    /// Row built from the full observed sample, used for prediction.
    pub fn observed_row(&self, c0: f64, epsilon_near: f64) -> TrainingRow {
        TrainingRow {
            dim_id: self.process.dim_id.clone(),
            x: self.features.clone(),
            z_stat: self.z_stat,
            cpk_hat: self.cpk_hat,
            se: self.se,
            target: self.pi_true,
            near: in_band(self.cpk_hat, c0, epsilon_near),
            positive: self.pi_true >= 0.5,
        }
    }
}

/// Observed analysis, soft target and oracle for one process.
pub fn simulate_process(process: &SimProcess, cfg: &SimConfig) -> Result<OracleRecord> {
    let mut rng = seeded(derive_seed(process.seed, STREAM_OBSERVED));
    let values = process.draw(process.n, &mut rng);
    let sample = DimensionSample::new(process.dim_id.clone(), values, process.spec)?;
    let obs = observe(
        &sample,
        cfg.n_boot,
        cfg.c0,
        cfg.policy,
        derive_seed(process.seed, STREAM_SE),
    )?;
    let soft = build_soft_targets(
        &sample,
        cfg.n_boot,
        cfg.c0,
        cfg.policy,
        cfg.soft_mode,
        derive_seed(process.seed, STREAM_SOFT),
    )?;
    let pi_true = oracle_risk(
        process,
        cfg.n_inner,
        cfg.c0,
        cfg.policy,
        derive_seed(process.seed, STREAM_INNER),
    )?;
    Ok(OracleRecord {
        process: process.clone(),
        cpk_hat: obs.est.cpk_hat,
        se: obs.baseline.se,
        pi_stat: obs.baseline.pi_stat,
        z_stat: obs.baseline.z_stat,
        path: obs.est.path,
        features: obs.features,
        pi_true,
        near_flag: in_band(process.cpk_true, cfg.c0, cfg.epsilon_near),
        soft,
    })
}

/// Runs the outer loop. Work units are independent and seeded per process,
/// so the result does not depend on how they are scheduled.
pub fn simulate_records(cfg: &SimConfig) -> Result<Vec<OracleRecord>> {
    let processes = generate_processes(cfg)?;
    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(processes.len().max(1));
    if workers <= 1 {
        return processes.iter().map(|p| simulate_process(p, cfg)).collect();
    }
    let chunk = processes.len().div_ceil(workers);
    std::thread::scope(|s| {
        let handles: Vec<_> = processes
            .chunks(chunk)
            .map(|part| {
                s.spawn(move || {
                    part.iter()
                        .map(|p| simulate_process(p, cfg))
                        .collect::<Result<Vec<_>>>()
                })
            })
            .collect();
        let mut out = Vec::with_capacity(processes.len());
        for h in handles {
            out.extend(h.join().expect("simulation worker panicked")?);
        }
        Ok(out)
    })
}

/// Index sets of one leak-free partition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn parts(&self) -> [&[usize]; 3] {
        [&self.train, &self.val, &self.test]
    }
}

/// `k_splits` group-aware partitions of rows labelled by `groups`.
///
/// Groups are shuffled and each goes whole to the partition furthest below its
/// share of rows.
pub fn leakfree_splits(groups: &[String], k_splits: usize, ratios: [f64; 3], seed: u64) -> Result<Vec<Split>> {
    let total: f64 = ratios.iter().sum();
    if ratios.iter().any(|r| *r < 0.0) || !(total > 0.0) {
        return Err(Error::InvalidConfig(
            "split ratios must be nonnegative with a positive sum".into(),
        ));
    }
    let ratios = ratios.map(|r| r / total);
    let mut ids: Vec<&str> = groups.iter().map(String::as_str).collect();
    ids.sort_unstable();
    ids.dedup();
    let members: Vec<Vec<usize>> = ids
        .iter()
        .map(|id| (0..groups.len()).filter(|&i| groups[i] == *id).collect())
        .collect();
    let n = groups.len() as f64;
    let capacity = ratios.iter().map(|r| (r * n).ceil() as usize).max().unwrap_or(0);
    if let Some((g, m)) = ids.iter().zip(&members).find(|(_, m)| m.len() > capacity) {
        return Err(Error::GroupTooLarge {
            group: g.to_string(),
            size: m.len(),
            capacity,
        });
    }
    (0..k_splits)
        .map(|k| {
            let mut rng = seeded(derive_seed(seed, k as u64));
            let mut order: Vec<usize> = (0..ids.len()).collect();
            order.shuffle(&mut rng);
            let mut parts: [Vec<usize>; 3] = Default::default();
            for g in order {
                let deficit = |p: usize| ratios[p] * n - parts[p].len() as f64;
                let best = (0..3)
                    .filter(|&p| ratios[p] > 0.0)
                    .max_by(|&a, &b| deficit(a).total_cmp(&deficit(b)).then(b.cmp(&a)))
                    .expect("some ratio is positive");
                parts[best].extend(&members[g]);
            }
            for p in parts.iter_mut() {
                p.sort_unstable();
            }
            let [train, val, test] = parts;
            Ok(Split { train, val, test })
        })
        .collect()
}

/// Checks that no group appears in more than one partition of any split.
pub fn audit_splits(groups: &[String], splits: &[Split]) -> Result<()> {
    for (k, s) in splits.iter().enumerate() {
        let sets: Vec<std::collections::BTreeSet<&str>> = s
            .parts()
            .iter()
            .map(|ix| ix.iter().map(|&i| groups[i].as_str()).collect())
            .collect();
        for (a, b) in [(0, 1), (0, 2), (1, 2)] {
            if let Some(g) = sets[a].intersection(&sets[b]).next() {
                return Err(Error::InvalidConfig(format!(
                    "split {k}: group {g} crosses partitions {a} and {b}"
                )));
            }
        }
        let covered: usize = s.parts().iter().map(|p| p.len()).sum();
        if covered != groups.len() {
            return Err(Error::InvalidConfig(format!(
                "split {k} covers {covered} of {} rows",
                groups.len()
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl MeanSd {
    pub fn of(values: &[f64]) -> Self {
        Self {
            mean: crate::stats::mean(values),
            sd: crate::stats::sample_sd(values),
        }
    }
}

/// Model variants compared in the nested study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Baseline,
    /// Anchored residual on hard split-sample labels, without the
    /// uncertainty feature group.
    HardResidual,
    SoftFree,
    SoftAnchored,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Baseline,
        Variant::HardResidual,
        Variant::SoftFree,
        Variant::SoftAnchored,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Baseline => "statistical_baseline",
            Variant::HardResidual => "hard_label_residual",
            Variant::SoftFree => "uccap_soft_free",
            Variant::SoftAnchored => "uccap_soft_anchored",
        }
    }

    fn train_config(self, base: &TrainConfig) -> Option<TrainConfig> {
        match self {
            Variant::Baseline => None,
            Variant::HardResidual => Some(TrainConfig {
                loss: LossKind::Bce,
                anchor_mode: AnchorMode::Anchored,
                feature_mask: Some(FeatureGroup::mask_without(&[FeatureGroup::Uncertainty])),
                ..base.clone()
            }),
            Variant::SoftFree => Some(TrainConfig {
                loss: LossKind::SoftCe,
                anchor_mode: AnchorMode::Free,
                ..base.clone()
            }),
            Variant::SoftAnchored => Some(TrainConfig {
                loss: LossKind::SoftCe,
                anchor_mode: AnchorMode::Anchored,
                ..base.clone()
            }),
        }
    }

    fn target(self, r: &OracleRecord, c0: f64) -> f64 {
        match self {
            Variant::HardResidual => label_hard(r.soft.cpk_target_half, c0),
            _ => r.soft.y_soft,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantReport {
    pub variant: Variant,
    pub name: String,
    pub report: CalibrationReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NestedMcReport {
    pub n_records: usize,
    pub n_near: usize,
    pub variants: Vec<VariantReport>,
}

impl NestedMcReport {
    pub fn get(&self, v: Variant) -> &CalibrationReport {
        &self
            .variants
            .iter()
            .find(|r| r.variant == v)
            .expect("every variant is reported")
            .report
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NestedMcRun {
    pub records: Vec<OracleRecord>,
    /// Out-of-fold predictions, one vector per entry of [`Variant::ALL`].
    pub predictions: Vec<Vec<f64>>,
    pub report: NestedMcReport,
}

/// Assigns each record to one of `k` folds (records are their own groups).
fn fold_of(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeded(seed));
    let mut fold = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold[i] = pos % k;
    }
    fold
}

/// Out-of-fold predictions of one trained variant.
fn cross_fit(variant: Variant, records: &[OracleRecord], cfg: &SimConfig) -> Result<Vec<f64>> {
    let Some(tcfg) = variant.train_config(&cfg.train) else {
        return Ok(records.iter().map(|r| r.pi_stat).collect());
    };
    let folds = fold_of(records.len(), cfg.k_folds, derive_seed(cfg.seed, 0xF01D));
    let mut pred = vec![f64::NAN; records.len()];
    for f in 0..cfg.k_folds {
        let mut pool: Vec<usize> = (0..records.len()).filter(|&i| folds[i] != f).collect();
        pool.shuffle(&mut seeded(derive_seed(cfg.seed, 0x5A1 + f as u64)));
        let n_val = ((pool.len() as f64) * cfg.val_fraction).round().max(1.0) as usize;
        let rows = |ix: &[usize]| -> Vec<TrainingRow> {
            ix.iter()
                .map(|&i| {
                    let r = &records[i];
                    r.training_row(variant.target(r, cfg.c0), cfg.c0, cfg.epsilon_near)
                })
                .collect()
        };
        let val = rows(&pool[..n_val]);
        let tr = rows(&pool[n_val..]);
        let model: ResidualModel = train(&tr, &val, &tcfg, cfg.c0)?.model;
        for i in (0..records.len()).filter(|&i| folds[i] == f) {
            pred[i] = model.predict(records[i].z_stat, &records[i].features)?;
        }
    }
    Ok(pred)
}

pub fn evaluate_variants(records: &[OracleRecord], cfg: &SimConfig) -> Result<(Vec<Vec<f64>>, NestedMcReport)> {
    let target: Vec<f64> = records.iter().map(|r| r.pi_true).collect();
    let y_hard: Vec<f64> = records.iter().map(|r| label_hard(r.process.cpk_true, cfg.c0)).collect();
    let near: Vec<bool> = records.iter().map(|r| r.near_flag).collect();
    let mut predictions = Vec::new();
    let mut variants = Vec::new();
    for v in Variant::ALL {
        let pred = cross_fit(v, records, cfg)?;
        let report = CalibrationReport::compute(&pred, &target, &y_hard, &near, 0.5)?;
        variants.push(VariantReport {
            variant: v,
            name: v.name().to_string(),
            report,
        });
        predictions.push(pred);
    }
    Ok((
        predictions,
        NestedMcReport {
            n_records: records.len(),
            n_near: near.iter().filter(|&&b| b).count(),
            variants,
        },
    ))
}

/// Full nested study: records, cross-fitted variants, metrics against `pi_true`.
pub fn run_nested_mc(cfg: &SimConfig) -> Result<NestedMcRun> {
    let records = simulate_records(cfg)?;
    let (predictions, report) = evaluate_variants(&records, cfg)?;
    Ok(NestedMcRun {
        records,
        predictions,
        report,
    })
}

/// Estimators compared in the estimation-error study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyEstimator {
    Normal,
    /// Percentile method with the true family refitted on each sample.
    BestFit,
    Empirical,
    Auto,
}

impl StudyEstimator {
    fn estimate(self, values: &[f64], spec: &SpecLimits, family: Family) -> Result<f64> {
        match self {
            StudyEstimator::Normal => cpk_with_path(values, spec, EstimatorPath::Normal),
            StudyEstimator::BestFit => cpk_with_path(
                values,
                spec,
                EstimatorPath::Percentile(PercentileSource::Fitted(family)),
            ),
            StudyEstimator::Empirical => {
                cpk_with_path(values, spec, EstimatorPath::Percentile(PercentileSource::Empirical))
            }
            StudyEstimator::Auto => estimate_cpk(values, spec, EstimatorPolicy::Auto).map(|r| r.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorStudyRow {
    pub family: Family,
    pub n: usize,
    pub estimator: StudyEstimator,
    pub rmse: f64,
    pub bias: f64,
    pub processes: usize,
}

/// RMSE of `Cpk_hat` against `cpk_true` over `n_processes` random processes
/// of one family, for each sample size and estimator. Every estimator sees
/// the same datasets.
pub fn estimation_error_study(
    cfg: &SimConfig,
    family: Family,
    n_values: &[usize],
    estimators: &[StudyEstimator],
    n_processes: usize,
) -> Result<Vec<ErrorStudyRow>> {
    let pcfg = SimConfig {
        families: vec![family],
        ..cfg.clone()
    };
    let mut out = Vec::new();
    for &n in n_values {
        let mut sq = vec![0.0; estimators.len()];
        let mut err = vec![0.0; estimators.len()];
        for i in 0..n_processes {
            let p = generate_process(&pcfg, i)?;
            let mut rng = seeded(derive_seed(p.seed, 0xE000 + n as u64));
            let values = p.draw(n, &mut rng);
            for (k, e) in estimators.iter().enumerate() {
                let d = e.estimate(&values, &p.spec, family)? - p.cpk_true;
                sq[k] += d * d;
                err[k] += d;
            }
        }
        for (k, &e) in estimators.iter().enumerate() {
            out.push(ErrorStudyRow {
                family,
                n,
                estimator: e,
                rmse: (sq[k] / n_processes as f64).sqrt(),
                bias: err[k] / n_processes as f64,
                processes: n_processes,
            });
        }
    }
    Ok(out)
}

/// One row per process and repeat, grouped by the process `dim_id`, for
/// leak-free evaluation. Each repeat is an independent dataset.
pub fn synthetic_rows(cfg: &SimConfig, repeats: usize) -> Result<Vec<TrainingRow>> {
    let processes = generate_processes(cfg)?;
    let mut rows = Vec::with_capacity(processes.len() * repeats);
    for p in &processes {
        for r in 0..repeats {
            let s = derive_seed(p.seed, 0x1000 + r as u64);
            let mut rng = seeded(s);
            let values = p.draw(p.n, &mut rng);
            let sample = DimensionSample::new(p.dim_id.clone(), values, p.spec)?;
            let soft = build_soft_targets(&sample, cfg.n_boot, cfg.c0, cfg.policy, cfg.soft_mode, rng.random())?;
            rows.push(soft.training_row(&p.dim_id, cfg.c0, cfg.epsilon_near));
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakFreeReport {
    pub splits: usize,
    pub anchored_brier: MeanSd,
    pub logistic_brier: MeanSd,
    pub anchored_near_brier: MeanSd,
    pub logistic_near_brier: MeanSd,
}

/// Anchored model against plain logistic regression on `[z_stat, x]`, both
/// trained on train, selected on val, scored on test against `target`.
pub fn leakfree_study(rows: &[TrainingRow], cfg: &SimConfig, splits: &[Split]) -> Result<LeakFreeReport> {
    let anchored = TrainConfig {
        anchor_mode: AnchorMode::Anchored,
        ..cfg.train.clone()
    };
    let logistic = TrainConfig {
        anchor_mode: AnchorMode::Free,
        alpha_r_grid: vec![1.0],
        ..cfg.train.clone()
    };
    let pick = |ix: &[usize]| ix.iter().map(|&i| rows[i].clone()).collect::<Vec<_>>();
    let mut scores: [Vec<f64>; 4] = Default::default();
    for s in splits {
        let (tr, va, te) = (pick(&s.train), pick(&s.val), pick(&s.test));
        if te.is_empty() {
            return Err(Error::EmptyInput);
        }
        for (k, tc) in [&anchored, &logistic].into_iter().enumerate() {
            let model = train(&tr, &va, tc, cfg.c0)?.model;
            let pred: Vec<f64> = te
                .iter()
                .map(|r| model.predict(r.z_stat, &r.x))
                .collect::<Result<_>>()?;
            let target: Vec<f64> = te.iter().map(|r| r.target).collect();
            scores[k].push(crate::metrics::brier(&pred, &target)?);
            let (np, nt): (Vec<f64>, Vec<f64>) = te
                .iter()
                .zip(&pred)
                .filter(|(r, _)| r.near)
                .map(|(r, p)| (*p, r.target))
                .unzip();
            if !np.is_empty() {
                scores[2 + k].push(crate::metrics::brier(&np, &nt)?);
            }
        }
    }
    Ok(LeakFreeReport {
        splits: splits.len(),
        anchored_brier: MeanSd::of(&scores[0]),
        logistic_brier: MeanSd::of(&scores[1]),
        anchored_near_brier: MeanSd::of(&scores[2]),
        logistic_near_brier: MeanSd::of(&scores[3]),
    })
}
