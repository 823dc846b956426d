//! Accept/reject thresholds and the score, level, reason, action chain.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::capability::{CapabilityEstimate, SpecLimits};
use crate::features::rel_position;
use crate::stats::logit;
use crate::uncertainty::BaselineRisk;
use crate::{Error, Result};

/// Threshold minimizing expected cost when false accepts cost `c_fa` and
/// false rejects cost `c_fr`.
pub fn bayes_alpha(c_fa: f64, c_fr: f64) -> Result<f64> {
    if !(c_fa > 0.0 && c_fr > 0.0) || !c_fa.is_finite() || !c_fr.is_finite() {
        return Err(Error::NonpositiveCost { c_fa, c_fr });
    }
    Ok(c_fr / (c_fa + c_fr))
}

/// Accept iff `pi <= alpha`.
pub fn decide(pi: f64, alpha_decision: f64) -> bool {
    pi <= alpha_decision
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RiskLevel {
    Low,
    Med,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Reason {
    Acceptable,
    Skewed,
    LatentModelRisk,
    MixedMechanism,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    Accept,
    ReviewDistribution,
    InvestigateLatentRisk,
    ReduceSdRecenter,
}

impl RiskLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            RiskLevel::Low => "Low",
            RiskLevel::Med => "Med",
            RiskLevel::High => "High",
        }
    }
}

impl Reason {
    pub fn as_str(self) -> &'static str {
        match self {
            Reason::Acceptable => "Acceptable",
            Reason::Skewed => "Skewed",
            Reason::LatentModelRisk => "Latent model risk",
            Reason::MixedMechanism => "Mixed mechanism",
        }
    }
}

impl Action {
    pub fn as_str(self) -> &'static str {
        match self {
            Action::Accept => "Accept",
            Action::ReviewDistribution => "Review distribution",
            Action::InvestigateLatentRisk => "Investigate latent risk",
            Action::ReduceSdRecenter => "Reduce sd + re-center",
        }
    }
}

macro_rules! display_as_str {
    ($($t:ty),*) => {$(
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    )*};
}
display_as_str!(RiskLevel, Reason, Action);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecisionPolicy {
    pub alpha_decision: f64,
    /// `pi` below this is Low.
    pub low_hi: f64,
    /// `pi` at or above this is High.
    pub high_lo: f64,
    pub min_cpk_high: f64,
    pub max_offset_high: f64,
    pub skew_threshold: f64,
}

impl Default for DecisionPolicy {
    fn default() -> Self {
        Self {
            alpha_decision: 0.5,
            low_hi: 0.10,
            high_lo: 0.90,
            min_cpk_high: 1.0,
            max_offset_high: 0.5,
            skew_threshold: 0.5,
        }
    }
}

impl DecisionPolicy {
    pub fn from_costs(c_fa: f64, c_fr: f64) -> Result<Self> {
        Ok(Self {
            alpha_decision: bayes_alpha(c_fa, c_fr)?,
            ..Self::default()
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.low_hi && self.low_hi < self.high_lo && self.high_lo < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "level bounds must satisfy 0 < {} < {} < 1",
                self.low_hi, self.high_lo
            )));
        }
        if !(0.0 < self.alpha_decision && self.alpha_decision < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "alpha_decision {} outside (0, 1)",
                self.alpha_decision
            )));
        }
        Ok(())
    }

    pub fn level(&self, pi: f64) -> RiskLevel {
        if pi < self.low_hi {
            RiskLevel::Low
        } else if pi >= self.high_lo {
            RiskLevel::High
        } else {
            RiskLevel::Med
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskAssessment {
    pub dim_id: String,
    pub pi_stat: f64,
    pub z_stat: f64,
    /// `logit(pi) - z_stat`.
    pub residual: f64,
    pub pi: f64,
    pub score: f64,
    pub level: RiskLevel,
    pub reason: Reason,
    pub action: Action,
    pub accept: bool,
}

/// Ordered rules; the first match wins.
pub fn reason_and_action(
    level: RiskLevel,
    est: &CapabilityEstimate,
    spec: &SpecLimits,
    policy: &DecisionPolicy,
) -> (Reason, Action) {
    let offset = rel_position(est.mean, spec).abs();
    match level {
        RiskLevel::Low => (Reason::Acceptable, Action::Accept),
        RiskLevel::High if est.cpk_hat < policy.min_cpk_high || offset > policy.max_offset_high => {
            (Reason::MixedMechanism, Action::ReduceSdRecenter)
        }
        RiskLevel::Med if !est.normality_pass && est.skewness.abs() > policy.skew_threshold => {
            (Reason::Skewed, Action::ReviewDistribution)
        }
        RiskLevel::Med => (Reason::LatentModelRisk, Action::InvestigateLatentRisk),
        RiskLevel::High => (Reason::MixedMechanism, Action::ReduceSdRecenter),
    }
}

pub fn decision_chain(
    dim_id: &str,
    pi: f64,
    est: &CapabilityEstimate,
    spec: &SpecLimits,
    baseline: &BaselineRisk,
    policy: &DecisionPolicy,
) -> RiskAssessment {
    let level = policy.level(pi);
    let (reason, action) = reason_and_action(level, est, spec, policy);
    RiskAssessment {
        dim_id: dim_id.to_string(),
        pi_stat: baseline.pi_stat,
        z_stat: baseline.z_stat,
        residual: logit(pi) - baseline.z_stat,
        pi,
        score: 100.0 * pi,
        level,
        reason,
        action,
        accept: decide(pi, policy.alpha_decision),
    }
}
