use std::path::Path;

use serde::{Deserialize, Serialize};
use uccap_core::capability::EstimatorPolicy;
use uccap_core::decision::{bayes_alpha, DecisionPolicy};
use uccap_core::risk_model::TrainConfig;
use uccap_core::simulation::SimConfig;
use uccap_core::Error;

use crate::error::{CliError, CliResult};

pub const SEED_ENV: &str = "UCCAP_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub c0: f64,
    pub epsilon_near: f64,
    pub epsilon_clip: f64,
    pub n_boot: usize,
    /// Ignored when both costs are given.
    pub alpha_decision: Option<f64>,
    pub c_fa: Option<f64>,
    pub c_fr: Option<f64>,
    pub estimator_policy: EstimatorPolicy,
    pub seed: u64,
    /// Share of dimensions held out for residual-scale selection.
    pub val_fraction: f64,
    /// Level and reason thresholds; its `alpha_decision` is replaced by [`RunConfig::alpha`].
    pub decision: DecisionPolicy,
    pub train: TrainConfig,
    /// Outer-loop settings for `simulate`. `c0`, `epsilon_near`, `n_boot`,
    /// the estimator policy and the seed come from the top level.
    pub simulation: SimConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            c0: uccap_core::DEFAULT_C0,
            epsilon_near: uccap_core::DEFAULT_EPSILON_NEAR,
            epsilon_clip: uccap_core::DEFAULT_EPSILON_CLIP,
            n_boot: uccap_core::DEFAULT_N_BOOT,
            alpha_decision: None,
            c_fa: None,
            c_fr: None,
            estimator_policy: EstimatorPolicy::Auto,
            seed: 0,
            val_fraction: 0.2,
            decision: DecisionPolicy::default(),
            train: TrainConfig::default(),
            simulation: SimConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|source| CliError::Config {
            path: path.display().to_string(),
            source,
        })
    }

    /// Seed precedence: command line, then `UCCAP_SEED`, then the config file.
    pub fn resolve_seed(&mut self, cli_seed: Option<u64>) -> CliResult<()> {
        if let Some(s) = cli_seed {
            self.seed = s;
        } else if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("{SEED_ENV}={v:?} is not an unsigned integer")))?;
        }
        Ok(())
    }

    /// Decision threshold: `c_fr / (c_fa + c_fr)` when both costs are set.
    pub fn alpha(&self) -> CliResult<f64> {
        match (self.c_fa, self.c_fr) {
            (Some(fa), Some(fr)) => Ok(bayes_alpha(fa, fr)?),
            (None, None) => Ok(self.alpha_decision.unwrap_or(0.5)),
            _ => Err(Error::InvalidConfig("c_fa and c_fr must be given together".into()).into()),
        }
    }

    pub fn policy(&self) -> CliResult<DecisionPolicy> {
        let p = DecisionPolicy {
            alpha_decision: self.alpha()?,
            ..self.decision.clone()
        };
        p.validate()?;
        Ok(p)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epsilon_near: self.epsilon_near,
            seed: self.seed,
            ..self.train.clone()
        }
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            c0: self.c0,
            epsilon_near: self.epsilon_near,
            n_boot: self.n_boot,
            policy: self.estimator_policy,
            seed: self.seed,
            train: self.train_config(),
            ..self.simulation.clone()
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()).into());
        if !(self.c0 > 0.0) {
            return bad("c0 must be positive");
        }
        if !(self.epsilon_near >= 0.0) {
            return bad("epsilon_near must be nonnegative");
        }
        if !(self.epsilon_clip > 0.0 && self.epsilon_clip < 0.5) {
            return bad("epsilon_clip must lie in (0, 0.5)");
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return bad("val_fraction must lie in (0, 1)");
        }
        self.policy()?;
        Ok(())
    }
}
