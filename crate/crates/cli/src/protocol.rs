//! Condition summaries and the minimum-reporting block derived from them.

use regime_core::analysis::ConditionRow;
use regime_core::prs::{classify_regime, RegimeClassification};
use serde::{Deserialize, Serialize};

/// One evaluated condition plus the context it was measured in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    #[serde(flatten)]
    pub row: ConditionRow,
    /// Contexts per run (K).
    pub n_contexts: usize,
    pub prior_family: String,
    /// Planner whose queries produced ρ, when ρ came from a pilot.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pilot_planner: Option<String>,
    /// False when ρ could not be estimated and a fallback was used.
    pub rho_measured: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RhoField {
    Value(f64),
    Flag(String),
}

pub const METRIC: &str = "terminal Hit@1";

/// The four regime variables per condition, with PRS and its classification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolBlock {
    pub benchmark_id: String,
    pub prior_condition: String,
    pub b_ratio: f64,
    pub budget: usize,
    pub n_actions: usize,
    pub rho: RhoField,
    pub k_contexts: usize,
    pub metric: String,
    pub prs: f64,
    pub classification: RegimeClassification,
}

pub fn protocol_block(s: &ConditionSummary, theta: f64) -> ProtocolBlock {
    let r = &s.row;
    ProtocolBlock {
        benchmark_id: r.benchmark_id.clone(),
        prior_condition: s.prior_family.clone(),
        b_ratio: r.b_ratio,
        budget: r.budget,
        n_actions: r.n_actions,
        rho: if s.rho_measured { RhoField::Value(r.rho) } else { RhoField::Flag("unmeasured".into()) },
        k_contexts: s.n_contexts,
        metric: METRIC.into(),
        prs: r.prs,
        classification: classify_regime(r.prs, theta, s.n_contexts, r.budget, r.n_actions),
    }
}
