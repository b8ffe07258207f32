//! Rank statistics and the Portable Regime Score.
//!
//! `PRS = (B/|A|)·(1 − ρ)` combines the budget ratio with the Spearman
//! correlation between prior means and outcomes. Low PRS favours exploiting
//! the prior; high PRS favours exploration.

use serde::{Deserialize, Serialize};

use crate::episode::RunRecord;
use crate::{Error, Result};

pub const DEFAULT_THETA: f64 = 0.10;
pub const BOUNDARY_ZONE: (f64, f64) = (0.05, 0.15);
/// Lower end of the `K ≳ (2–4)·|A|/B` context-count rule.
pub const K_MIN_FACTOR: f64 = 2.0;

/// Average ranks (1-based); tied values share the mean of their positions.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && x[idx[j]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j + 1) as f64 / 2.0;
        for &k in &idx[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman correlation: Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch { left: x.len(), right: y.len() });
    }
    if x.len() < 2 {
        return Err(Error::UndefinedCorrelation);
    }
    pearson(&average_ranks(x), &average_ranks(y)).ok_or(Error::UndefinedCorrelation)
}

/// `(B/|A|)·(1 − ρ)`.
pub fn prs(budget: usize, n_actions: usize, rho: f64) -> f64 {
    budget as f64 / n_actions as f64 * (1.0 - rho)
}

/// Same score from a budget ratio.
pub fn prs_from_ratio(b_ratio: f64, rho: f64) -> f64 {
    b_ratio * (1.0 - rho)
}

/// Online ρ̂ over distinct queried actions; `None` when fewer than `m_min`
/// pairs exist or either side is constant.
pub fn estimate_rho_online(prior_means: &[f64], outcomes: &[f64], m_min: usize) -> Option<f64> {
    if prior_means.len() != outcomes.len() || prior_means.len() < m_min.max(2) {
        return None;
    }
    spearman(prior_means, outcomes).ok()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PilotEstimate {
    pub prs: f64,
    /// Pooled ρ̂; `None` if it was undefined and replaced by 0.
    pub rho: Option<f64>,
    pub fallback_used: bool,
    pub n_pairs: usize,
    pub n_contexts: usize,
    /// Fewer than three pilot contexts.
    pub few_contexts: bool,
}

/// PRS estimated from pilot runs: ρ̂ pooled over the `(prior mean, mean
/// outcome)` pairs of every distinct queried action in every pilot context.
pub fn pilot_prs(records: &[RunRecord], budget: usize, n_actions: usize) -> Result<PilotEstimate> {
    let mut prior = Vec::new();
    let mut outcome = Vec::new();
    for rec in records {
        for (p, y) in rec.distinct_pairs() {
            prior.push(p);
            outcome.push(y);
        }
    }
    if prior.is_empty() {
        return Err(Error::EmptyPilot);
    }
    let rho = spearman(&prior, &outcome).ok();
    Ok(PilotEstimate {
        prs: prs(budget, n_actions, rho.unwrap_or(0.0)),
        rho,
        fallback_used: rho.is_none(),
        n_pairs: prior.len(),
        n_contexts: records.len(),
        few_contexts: records.len() < 3,
    })
}

/// Planner family a regime favours.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Greedy,
    Explore,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Regime::Greedy => "greedy",
            Regime::Explore => "explore",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeClassification {
    pub prs: f64,
    pub theta: f64,
    pub predicted: Regime,
    pub in_boundary_zone: bool,
    pub k_sufficient: bool,
    /// Context count the `K ≥ 2·|A|/B` rule asks for.
    pub k_required: f64,
}

pub fn in_boundary_zone(prs_value: f64) -> bool {
    (BOUNDARY_ZONE.0..BOUNDARY_ZONE.1).contains(&prs_value)
}

pub fn classify_regime(prs_value: f64, theta: f64, k: usize, budget: usize, n_actions: usize) -> RegimeClassification {
    let k_required = K_MIN_FACTOR * n_actions as f64 / budget as f64;
    RegimeClassification {
        prs: prs_value,
        theta,
        predicted: if prs_value < theta { Regime::Greedy } else { Regime::Explore },
        in_boundary_zone: in_boundary_zone(prs_value),
        k_sufficient: k as f64 >= k_required,
        k_required,
    }
}
