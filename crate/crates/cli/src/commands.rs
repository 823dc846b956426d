use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;
use uccap_core::capability::{analyze, DimensionSample, SpecLimits};
use uccap_core::decision::{decision_chain, RiskAssessment};
use uccap_core::features::{extract_features, FeatureVector};
use uccap_core::metrics::CalibrationReport;
use uccap_core::risk_model::{
    load_model, save_model, train, Design, GridResult, ResidualModel, TrainingRow, ValidationScores,
};
use uccap_core::rng::derive_seed;
use uccap_core::simulation::{build_soft_targets, label_hard, leakfree_splits, run_nested_mc, SoftTargetMode, Variant};
use uccap_core::uncertainty::{baseline_risk_clipped, bootstrap_se, BaselineRisk};
use uccap_core::Error;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::ingest::ingest_csv;

#[derive(Debug, Clone, Default)]
pub struct CommandArgs {
    pub config: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: Option<u64>,
}

impl CommandArgs {
    fn data(&self) -> CliResult<&Path> {
        self.data.as_deref().ok_or(CliError::MissingArgument("data"))
    }

    fn model_path(&self) -> CliResult<&Path> {
        self.model.as_deref().ok_or(CliError::MissingArgument("model"))
    }

    fn out_file(&self, name: &str) -> CliResult<PathBuf> {
        fs::create_dir_all(&self.out)?;
        Ok(self.out.join(name))
    }
}

pub fn load_config(args: &CommandArgs) -> CliResult<RunConfig> {
    let mut cfg = RunConfig::load(args.config.as_deref())?;
    cfg.resolve_seed(args.seed)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Per-dimension seed, independent of file order and of the other dimensions.
pub fn dim_seed(base: u64, dim_id: &str) -> u64 {
    // FNV-1a
    let h = dim_id.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    });
    derive_seed(base, h)
}

fn load_checked_model(path: &Path, cfg: &RunConfig) -> CliResult<ResidualModel> {
    let model = load_model(path)?;
    if model.c0 != cfg.c0 {
        return Err(Error::InvalidConfig(format!(
            "model was trained for c0 = {}, config has {}",
            model.c0, cfg.c0
        ))
        .into());
    }
    Ok(model)
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn write_csv<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> CliResult<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Baseline and final probability for precomputed `(cpk_hat, se)`.
pub fn risk_probability(
    cpk_hat: f64,
    se: f64,
    x: &FeatureVector,
    cfg: &RunConfig,
    model: Option<&ResidualModel>,
) -> CliResult<(BaselineRisk, f64)> {
    let b = baseline_risk_clipped(cpk_hat, se, cfg.c0, cfg.epsilon_clip)?;
    let pi = match model {
        Some(m) => m.predict(b.z_stat, x)?,
        None => b.pi_stat,
    };
    Ok((b, pi))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisRow {
    pub dim: String,
    pub lsl: Option<f64>,
    pub usl: Option<f64>,
    pub mean: f64,
    pub sd: f64,
    pub cpk: f64,
    pub normality: String,
    pub best_dist: String,
    pub score: f64,
    pub level: String,
    pub reason: String,
    pub action: String,
    pub pi_stat: f64,
    pub z_stat: f64,
    pub se: f64,
    pub pi: f64,
    pub residual: f64,
    pub method: String,
    pub accept: bool,
    pub mode: String,
}

pub const ANALYSIS_HEADER: [&str; 20] = [
    "dim",
    "lsl",
    "usl",
    "mean",
    "sd",
    "cpk",
    "normality",
    "best_dist",
    "score",
    "level",
    "reason",
    "action",
    "pi_stat",
    "z_stat",
    "se",
    "pi",
    "residual",
    "method",
    "accept",
    "mode",
];

fn analysis_row(
    sample: &DimensionSample,
    a: &RiskAssessment,
    est: &uccap_core::capability::CapabilityEstimate,
    se: f64,
    mode: &str,
) -> AnalysisRow {
    let SpecLimits { lsl, usl, .. } = sample.spec;
    AnalysisRow {
        dim: sample.dim_id.clone(),
        lsl,
        usl,
        mean: est.mean,
        sd: est.sd,
        cpk: est.cpk_hat,
        normality: if est.normality_pass { "pass" } else { "fail" }.into(),
        best_dist: est.best_fit.name().into(),
        score: a.score,
        level: a.level.to_string(),
        reason: a.reason.to_string(),
        action: a.action.to_string(),
        pi_stat: a.pi_stat,
        z_stat: a.z_stat,
        se,
        pi: a.pi,
        residual: a.residual,
        method: est.method.as_str().into(),
        accept: a.accept,
        mode: mode.into(),
    }
}

pub fn analyze_samples(
    samples: &[DimensionSample],
    cfg: &RunConfig,
    model: Option<&ResidualModel>,
) -> CliResult<Vec<AnalysisRow>> {
    let policy = cfg.policy()?;
    let mode = if model.is_some() { "model" } else { "baseline-only" };
    let mut rows = samples
        .iter()
        .map(|s| {
            let est = analyze(s, cfg.estimator_policy)?;
            let se = bootstrap_se(s, cfg.n_boot, est.path, dim_seed(cfg.seed, &s.dim_id))?;
            let x = extract_features(s, &est);
            let (b, pi) = risk_probability(est.cpk_hat, se, &x, cfg, model)?;
            let a = decision_chain(&s.dim_id, pi, &est, &s.spec, &b, &policy);
            Ok(analysis_row(s, &a, &est, se, mode))
        })
        .collect::<CliResult<Vec<_>>>()?;
    rows.sort_by(|a, b| a.dim.cmp(&b.dim));
    Ok(rows)
}

pub fn cmd_analyze(args: &CommandArgs) -> CliResult<serde_json::Value> {
    let cfg = load_config(args)?;
    let samples = ingest_csv(args.data()?)?;
    let model = args.model.as_deref().map(|p| load_checked_model(p, &cfg)).transpose()?;
    let rows = analyze_samples(&samples, &cfg, model.as_ref())?;
    let path = args.out_file("analysis.csv")?;
    write_csv(&path, &ANALYSIS_HEADER, &rows)?;
    Ok(json!({
        "command": "analyze",
        "dimensions": rows.len(),
        "mode": if model.is_some() { "model" } else { "baseline-only" },
        "outputs": [path],
    }))
}

/// Split-sample soft-target rows, plus dimensions too small to split.
#[derive(Debug, Clone, Default)]
pub struct SoftRows {
    pub rows: Vec<TrainingRow>,
    /// Hard label on the target half, aligned with `rows`.
    pub y_hard: Vec<f64>,
    pub skipped: Vec<String>,
}

pub fn soft_rows(samples: &[DimensionSample], cfg: &RunConfig) -> CliResult<SoftRows> {
    let mut out = SoftRows::default();
    for s in samples {
        let seed = dim_seed(cfg.seed, &s.dim_id);
        match build_soft_targets(s, cfg.n_boot, cfg.c0, cfg.estimator_policy, SoftTargetMode::Split, seed) {
            Ok(t) => {
                out.rows.push(t.training_row(&s.dim_id, cfg.c0, cfg.epsilon_near));
                out.y_hard.push(label_hard(t.cpk_target_half, cfg.c0));
            }
            Err(Error::TooFewSamples { .. }) => out.skipped.push(s.dim_id.clone()),
            Err(e) => return Err(e.into()),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingLog {
    pub dimensions: usize,
    pub skipped: Vec<String>,
    pub train_dims: Vec<String>,
    pub val_dims: Vec<String>,
    pub alpha_r: f64,
    pub lambda2: f64,
    pub validation: ValidationScores,
    pub grid: Vec<GridResult>,
}

pub fn cmd_train(args: &CommandArgs) -> CliResult<serde_json::Value> {
    let cfg = load_config(args)?;
    let samples = ingest_csv(args.data()?)?;
    let data = soft_rows(&samples, &cfg)?;
    let groups: Vec<String> = data.rows.iter().map(|r| r.dim_id.clone()).collect();
    let split = leakfree_splits(&groups, 1, [1.0 - cfg.val_fraction, cfg.val_fraction, 0.0], cfg.seed)?
        .pop()
        .ok_or(Error::EmptyInput)?;
    let pick = |ix: &[usize]| ix.iter().map(|&i| data.rows[i].clone()).collect::<Vec<_>>();
    let (tr, va) = (pick(&split.train), pick(&split.val));
    let report = train(&tr, &va, &cfg.train_config(), cfg.c0)?;
    let model_path = args.out_file("model.json")?;
    save_model(&report.model, &model_path)?;
    let log = TrainingLog {
        dimensions: samples.len(),
        skipped: data.skipped,
        train_dims: tr.iter().map(|r| r.dim_id.clone()).collect(),
        val_dims: va.iter().map(|r| r.dim_id.clone()).collect(),
        alpha_r: report.model.alpha_r,
        lambda2: report.model.lambda2,
        validation: report.validation().clone(),
        grid: report.grid.clone(),
    };
    let log_path = args.out_file("training_log.json")?;
    write_json(&log_path, &log)?;
    Ok(json!({
        "command": "train",
        "train_rows": tr.len(),
        "val_rows": va.len(),
        "validation": log.validation,
        "outputs": [model_path, log_path],
    }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionRow {
    pub dim_id: String,
    pub z_stat: f64,
    pub pi: f64,
    pub y_soft: f64,
    pub y_hard: f64,
    pub near: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Evaluation {
    pub rows: usize,
    pub skipped: Vec<String>,
    /// Same scores the trainer uses for selection.
    pub scores: ValidationScores,
    pub report: CalibrationReport,
}

pub fn evaluate_rows(
    data: &SoftRows,
    model: &ResidualModel,
    cfg: &RunConfig,
) -> CliResult<(Evaluation, Vec<PredictionRow>)> {
    if data.rows.is_empty() {
        return Err(Error::EmptyInput.into());
    }
    let design = Design::build(&data.rows, &model.standardizer, &cfg.train_config())?;
    let near: Vec<bool> = data.rows.iter().map(|r| r.near).collect();
    let scores = ValidationScores::of(model, &design, &near)?;
    let pred: Vec<f64> = data
        .rows
        .iter()
        .map(|r| model.predict(r.z_stat, &r.x))
        .collect::<uccap_core::Result<_>>()?;
    let target: Vec<f64> = data.rows.iter().map(|r| r.target).collect();
    let report = CalibrationReport::compute(&pred, &target, &data.y_hard, &near, cfg.alpha()?)?;
    let preds = data
        .rows
        .iter()
        .zip(&pred)
        .zip(&data.y_hard)
        .map(|((r, &pi), &y)| PredictionRow {
            dim_id: r.dim_id.clone(),
            z_stat: r.z_stat,
            pi,
            y_soft: r.target,
            y_hard: y,
            near: r.near,
        })
        .collect();
    Ok((
        Evaluation {
            rows: data.rows.len(),
            skipped: data.skipped.clone(),
            scores,
            report,
        },
        preds,
    ))
}

pub fn cmd_evaluate(args: &CommandArgs) -> CliResult<serde_json::Value> {
    let cfg = load_config(args)?;
    let model = load_checked_model(args.model_path()?, &cfg)?;
    let samples = ingest_csv(args.data()?)?;
    let data = soft_rows(&samples, &cfg)?;
    let (eval, preds) = evaluate_rows(&data, &model, &cfg)?;
    let eval_path = args.out_file("evaluation.json")?;
    write_json(&eval_path, &eval)?;
    let pred_path = args.out_file("predictions.csv")?;
    write_csv(
        &pred_path,
        &["dim_id", "z_stat", "pi", "y_soft", "y_hard", "near"],
        &preds,
    )?;
    Ok(json!({
        "command": "evaluate",
        "rows": eval.rows,
        "scores": eval.scores,
        "outputs": [eval_path, pred_path],
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRow {
    pub dim_id: String,
    pub pi: f64,
    pub alpha: f64,
    pub level: String,
    pub accept: bool,
    pub decision: String,
}

/// Reads `dim_id` (or `dim`) and `pi` columns, e.g. from an analysis report.
pub fn decide_file(path: &Path, cfg: &RunConfig) -> CliResult<Vec<DecisionRow>> {
    let policy = cfg.policy()?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let header = rdr.headers()?.clone();
    let find = |names: &[&str]| {
        header
            .iter()
            .position(|h| names.contains(&h))
            .ok_or_else(|| CliError::ParseError {
                line: 1,
                message: format!("header needs a {:?} column", names[0]),
            })
    };
    let (i_dim, i_pi) = (find(&["dim_id", "dim"])?, find(&["pi"])?);
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let raw = rec.get(i_pi).unwrap_or("");
        let pi: f64 = raw.parse().map_err(|_| CliError::ParseError {
            line,
            message: format!("pi {raw:?} is not a number"),
        })?;
        if !(0.0..=1.0).contains(&pi) {
            return Err(CliError::ParseError {
                line,
                message: format!("pi {pi} is outside [0, 1]"),
            });
        }
        let accept = uccap_core::decision::decide(pi, policy.alpha_decision);
        rows.push(DecisionRow {
            dim_id: rec.get(i_dim).unwrap_or("").to_string(),
            pi,
            alpha: policy.alpha_decision,
            level: policy.level(pi).to_string(),
            accept,
            decision: if accept { "accept" } else { "reject" }.into(),
        });
    }
    rows.sort_by(|a, b| a.dim_id.cmp(&b.dim_id));
    Ok(rows)
}

pub fn cmd_decide(args: &CommandArgs) -> CliResult<serde_json::Value> {
    let cfg = load_config(args)?;
    let rows = decide_file(args.data()?, &cfg)?;
    let path = args.out_file("decisions.csv")?;
    write_csv(&path, &["dim_id", "pi", "alpha", "level", "accept", "decision"], &rows)?;
    Ok(json!({
        "command": "decide",
        "alpha": cfg.alpha()?,
        "rejected": rows.iter().filter(|r| !r.accept).count(),
        "outputs": [path],
    }))
}

#[derive(Debug, Clone, Serialize)]
struct OracleRow<'a> {
    dim_id: &'a str,
    family: &'a str,
    n: usize,
    cpk_true: f64,
    cpk_hat: f64,
    se: f64,
    pi_stat: f64,
    z_stat: f64,
    y_soft: f64,
    pi_true: f64,
    near: bool,
    statistical_baseline: f64,
    hard_label_residual: f64,
    uccap_soft_free: f64,
    uccap_soft_anchored: f64,
}

pub fn cmd_simulate(args: &CommandArgs) -> CliResult<serde_json::Value> {
    let cfg = load_config(args)?;
    let sim = cfg.sim_config();
    let run = run_nested_mc(&sim)?;
    debug_assert_eq!(Variant::ALL.len(), 4);
    let rows: Vec<OracleRow> = run
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| OracleRow {
            dim_id: &r.process.dim_id,
            family: r.process.family().name(),
            n: r.process.n,
            cpk_true: r.process.cpk_true,
            cpk_hat: r.cpk_hat,
            se: r.se,
            pi_stat: r.pi_stat,
            z_stat: r.z_stat,
            y_soft: r.soft.y_soft,
            pi_true: r.pi_true,
            near: r.near_flag,
            statistical_baseline: run.predictions[0][i],
            hard_label_residual: run.predictions[1][i],
            uccap_soft_free: run.predictions[2][i],
            uccap_soft_anchored: run.predictions[3][i],
        })
        .collect();
    let csv_path = args.out_file("oracle.csv")?;
    let header = [
        "dim_id",
        "family",
        "n",
        "cpk_true",
        "cpk_hat",
        "se",
        "pi_stat",
        "z_stat",
        "y_soft",
        "pi_true",
        "near",
        Variant::Baseline.name(),
        Variant::HardResidual.name(),
        Variant::SoftFree.name(),
        Variant::SoftAnchored.name(),
    ];
    write_csv(&csv_path, &header, &rows)?;
    let metrics_path = args.out_file("metrics.json")?;
    write_json(&metrics_path, &json!({ "config": sim, "report": run.report }))?;
    Ok(json!({
        "command": "simulate",
        "records": run.report.n_records,
        "near": run.report.n_near,
        "outputs": [csv_path, metrics_path],
    }))
}
