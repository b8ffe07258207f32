//! Metrics and aggregate analyses over run records and condition rows.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::episode::RunRecord;
use crate::oracle::OracleTable;
use crate::prs::{in_boundary_zone, Regime};
use crate::{Error, Result};

pub const DEFAULT_TIE_EPSILON: f64 = 0.01;

/// Hit@k from raw actions: 1 iff some queried action is among the true top-k.
///
/// An action is top-k when fewer than `k` actions score strictly higher, so
/// tied scores at the boundary all count.
pub fn hit_at_k_scores(actions: &[usize], scores: &[f64], k: usize) -> Result<u8> {
    let n = scores.len();
    if k == 0 || k > n {
        return Err(Error::BadK { k, n_actions: n });
    }
    let hit = actions.iter().any(|&a| scores.iter().filter(|s| **s > scores[a]).count() < k);
    Ok(u8::from(hit))
}

pub fn hit_at_k(record: &RunRecord, table: &OracleTable, context: usize, k: usize) -> Result<u8> {
    if context >= table.n_contexts() {
        return Err(Error::IndexError(format!("context {context}")));
    }
    hit_at_k_scores(&record.actions(), table.context_scores(context), k)
}

/// Mean over steps of the min-max normalized best true score found so far.
/// Constant-score contexts return 1.
pub fn discovery_auc_scores(actions: &[usize], scores: &[f64]) -> Result<f64> {
    if actions.is_empty() {
        return Err(Error::BadValue("empty query sequence".into()));
    }
    if let Some(&a) = actions.iter().find(|&&a| a >= scores.len()) {
        return Err(Error::IndexError(format!("action {a} of {}", scores.len())));
    }
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return Ok(1.0);
    }
    let mut best = f64::NEG_INFINITY;
    let mut area = 0.0;
    for &a in actions {
        best = best.max(scores[a]);
        area += (best - lo) / (hi - lo);
    }
    Ok(area / actions.len() as f64)
}

pub fn discovery_auc(record: &RunRecord, table: &OracleTable, context: usize) -> Result<f64> {
    if context >= table.n_contexts() {
        return Err(Error::IndexError(format!("context {context}")));
    }
    discovery_auc_scores(&record.actions(), table.context_scores(context))
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub sem: f64,
    pub n: usize,
}

impl Stat {
    pub fn from_values<I: IntoIterator<Item = f64>>(values: I) -> Self {
        let v: Vec<f64> = values.into_iter().collect();
        let n = v.len();
        if n == 0 {
            return Self { mean: f64::NAN, sem: f64::NAN, n };
        }
        let mean = v.iter().sum::<f64>() / n as f64;
        let sem = if n > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64 / n as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, sem, n }
    }

    /// 95% normal band.
    pub fn band(&self) -> (f64, f64) {
        (self.mean - 1.96 * self.sem, self.mean + 1.96 * self.sem)
    }
}

/// Observed regime outcome for a condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Winner {
    Greedy,
    Explore,
    Tie,
}

impl std::fmt::Display for Winner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Winner::Greedy => "greedy",
            Winner::Explore => "explore",
            Winner::Tie => "tie",
        })
    }
}

pub fn winner_from_advantage(advantage: f64, tie_epsilon: f64) -> Winner {
    if advantage.abs() < tie_epsilon {
        Winner::Tie
    } else if advantage > 0.0 {
        Winner::Explore
    } else {
        Winner::Greedy
    }
}

/// One aggregated evaluation condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionRow {
    pub benchmark_id: String,
    pub n_actions: usize,
    pub budget: usize,
    pub b_ratio: f64,
    pub tau2: Option<f64>,
    pub sigma2: Option<f64>,
    pub rho: f64,
    pub prs: f64,
    pub per_planner_hit: BTreeMap<String, Stat>,
    pub per_planner_auc: BTreeMap<String, Stat>,
    /// Hit@1(explore planner) − Hit@1(greedy).
    pub advantage: Option<Stat>,
    /// Hit@1(rank-greedy) − Hit@1(random).
    pub prior_benefit: Option<f64>,
    pub predicted_winner: Regime,
    pub empirical_winner: Option<Winner>,
    pub in_boundary_zone: bool,
}

/// `Hit@1(explore) − Hit@1(greedy)` with SEM `√(sem_e² + sem_g²)`.
pub fn exploration_advantage(per_planner_hit: &BTreeMap<String, Stat>, explore: &str, greedy: &str) -> Result<Stat> {
    let e = per_planner_hit.get(explore).ok_or_else(|| Error::MissingPlanner(explore.into()))?;
    let g = per_planner_hit.get(greedy).ok_or_else(|| Error::MissingPlanner(greedy.into()))?;
    Ok(Stat { mean: e.mean - g.mean, sem: (e.sem * e.sem + g.sem * g.sem).sqrt(), n: e.n.min(g.n) })
}

/// Mean Hit@1 of the prior-exploiting planner minus the uniform-random baseline.
pub fn prior_benefit(per_planner_hit: &BTreeMap<String, Stat>, prior_planner: &str, baseline: &str) -> Result<f64> {
    let base = per_planner_hit.get(baseline).ok_or_else(|| Error::MissingBaseline(baseline.into()))?;
    let p = per_planner_hit.get(prior_planner).ok_or_else(|| Error::MissingPlanner(prior_planner.into()))?;
    Ok(p.mean - base.mean)
}

/// Mixture weight λ on the high-PRS benchmark so that
/// `λ·cate_high + (1−λ)·cate_low = target`.
pub fn mixture_weight(cate_low: f64, cate_high: f64, target: f64) -> Result<f64> {
    if !(cate_low < 0.0 && 0.0 < cate_high) {
        return Err(Error::PreconditionFailed(format!(
            "CATE does not change sign: low {cate_low}, high {cate_high}"
        )));
    }
    if !(cate_low..=cate_high).contains(&target) {
        return Err(Error::TargetUnreachable { target, low: cate_low, high: cate_high });
    }
    Ok(((target - cate_low) / (cate_high - cate_low)).clamp(0.0, 1.0))
}

/// Two-way fixed-effects variance shares.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaSquared {
    pub factor_a: f64,
    pub factor_b: f64,
    pub interaction: f64,
    pub residual: f64,
}

/// η² decomposition of a balanced `(a level, b level, seed) → value` design.
pub fn eta_squared(design: &BTreeMap<(usize, usize, usize), f64>) -> Result<EtaSquared> {
    let a_levels: BTreeSet<usize> = design.keys().map(|k| k.0).collect();
    let b_levels: BTreeSet<usize> = design.keys().map(|k| k.1).collect();
    let mut cells: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    for (&(a, b, _), &v) in design {
        if !v.is_finite() {
            return Err(Error::BadValue(format!("cell ({a}, {b}) value {v}")));
        }
        cells.entry((a, b)).or_default().push(v);
    }
    let reps = cells.values().next().map_or(0, Vec::len);
    if reps == 0 {
        return Err(Error::UnbalancedDesign("empty design".into()));
    }
    for &a in &a_levels {
        for &b in &b_levels {
            match cells.get(&(a, b)) {
                None => return Err(Error::UnbalancedDesign(format!("cell ({a}, {b}) is empty"))),
                Some(v) if v.len() != reps => {
                    return Err(Error::UnbalancedDesign(format!("cell ({a}, {b}) has {} of {reps} seeds", v.len())))
                }
                _ => {}
            }
        }
    }

    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let all: Vec<f64> = design.values().copied().collect();
    let grand = mean(&all);
    let cell_mean: BTreeMap<(usize, usize), f64> = cells.iter().map(|(k, v)| (*k, mean(v))).collect();
    let a_mean: BTreeMap<usize, f64> = a_levels
        .iter()
        .map(|&a| (a, b_levels.iter().map(|&b| cell_mean[&(a, b)]).sum::<f64>() / b_levels.len() as f64))
        .collect();
    let b_mean: BTreeMap<usize, f64> = b_levels
        .iter()
        .map(|&b| (b, a_levels.iter().map(|&a| cell_mean[&(a, b)]).sum::<f64>() / a_levels.len() as f64))
        .collect();

    let r = reps as f64;
    let ss_a: f64 = a_mean.values().map(|m| (m - grand).powi(2)).sum::<f64>() * r * b_levels.len() as f64;
    let ss_b: f64 = b_mean.values().map(|m| (m - grand).powi(2)).sum::<f64>() * r * a_levels.len() as f64;
    let ss_ab: f64 = cell_mean
        .iter()
        .map(|(&(a, b), m)| (m - a_mean[&a] - b_mean[&b] + grand).powi(2))
        .sum::<f64>()
        * r;
    let ss_e: f64 = cells.iter().map(|(k, v)| v.iter().map(|x| (x - cell_mean[k]).powi(2)).sum::<f64>()).sum();
    let ss_t: f64 = all.iter().map(|x| (x - grand).powi(2)).sum();
    if ss_t <= 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok(EtaSquared { factor_a: ss_a / ss_t, factor_b: ss_b / ss_t, interaction: ss_ab / ss_t, residual: ss_e / ss_t })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetThreshold {
    pub b_dagger: f64,
    /// `n·b†` in queries.
    pub budget: f64,
}

/// `b† = (σ²/(cαΔ²)) · log(n²cαΔ²/(C_n σ²))`, returned with `B† = n·b†`.
pub fn threshold_b_dagger(sigma2: f64, n: usize, alpha_explore: f64, c_n: f64, c: f64, delta_min: f64) -> Result<BudgetThreshold> {
    for (name, v) in [("sigma2", sigma2), ("alpha", alpha_explore), ("C_n", c_n), ("c", c), ("delta_min", delta_min)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::BadValue(format!("{name} = {v}")));
        }
    }
    if n == 0 {
        return Err(Error::BadValue("n = 0".into()));
    }
    let k = c * alpha_explore * delta_min * delta_min;
    let nf = n as f64;
    let arg = nf * nf * k / (c_n * sigma2);
    if arg <= 1.0 {
        return Err(Error::OutOfRegime(arg));
    }
    let b_dagger = sigma2 / k * arg.ln();
    Ok(BudgetThreshold { b_dagger, budget: nf * b_dagger })
}

/// Rule mapping a condition to a predicted regime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum ThresholdRule {
    /// Explore iff PRS ≥ θ.
    Prs { theta: f64 },
    /// Explore iff `B/|A| ≥ C·σ²/(τ²+σ²)`; needs τ² and σ² on the row.
    NoiseRatio { c: f64 },
}

impl ThresholdRule {
    pub fn predict(&self, row: &ConditionRow) -> Option<Regime> {
        let explore = match *self {
            ThresholdRule::Prs { theta } => row.prs >= theta,
            ThresholdRule::NoiseRatio { c } => {
                let (tau2, sigma2) = (row.tau2?, row.sigma2?);
                row.b_ratio >= c * sigma2 / (tau2 + sigma2)
            }
        };
        Some(if explore { Regime::Explore } else { Regime::Greedy })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    /// Accuracy over non-tied conditions; `None` if every condition tied.
    pub overall: Option<f64>,
    pub outside_zone: Option<f64>,
    pub inside_zone: Option<f64>,
    pub equivalence_fraction: f64,
    pub n_conditions: usize,
    pub n_decided: usize,
}

/// Fraction of conditions whose predicted regime matches the empirical winner.
/// Ties (`|advantage| < tie_epsilon`) are excluded and reported separately.
pub fn regime_accuracy(rows: &[ConditionRow], rule: &ThresholdRule, tie_epsilon: f64) -> Result<AccuracyReport> {
    let mut ties = 0usize;
    let (mut all, mut out_z, mut in_z) = ((0usize, 0usize), (0usize, 0usize), (0usize, 0usize));
    for row in rows {
        let adv = row.advantage.ok_or_else(|| Error::MissingPlanner(format!("advantage for {}", row.benchmark_id)))?;
        let empirical = winner_from_advantage(adv.mean, tie_epsilon);
        if empirical == Winner::Tie {
            ties += 1;
            continue;
        }
        let predicted = rule
            .predict(row)
            .ok_or_else(|| Error::BadValue(format!("row {} lacks τ²/σ² for the rule", row.benchmark_id)))?;
        let ok = usize::from(
            (predicted == Regime::Explore && empirical == Winner::Explore)
                || (predicted == Regime::Greedy && empirical == Winner::Greedy),
        );
        all = (all.0 + ok, all.1 + 1);
        if in_boundary_zone(row.prs) {
            in_z = (in_z.0 + ok, in_z.1 + 1);
        } else {
            out_z = (out_z.0 + ok, out_z.1 + 1);
        }
    }
    let frac = |(k, n): (usize, usize)| (n > 0).then(|| k as f64 / n as f64);
    Ok(AccuracyReport {
        overall: frac(all),
        outside_zone: frac(out_z),
        inside_zone: frac(in_z),
        equivalence_fraction: if rows.is_empty() { 0.0 } else { ties as f64 / rows.len() as f64 },
        n_conditions: rows.len(),
        n_decided: all.1,
    })
}

/// Mean over contexts of the best planner in `choice_set` for that context.
pub fn per_context_oracle(hits: &BTreeMap<String, Vec<u8>>, choice_set: &[&str]) -> Result<f64> {
    let series: Vec<&Vec<u8>> = choice_set
        .iter()
        .map(|p| hits.get(*p).ok_or_else(|| Error::MisalignedRuns(format!("planner {p} has no runs"))))
        .collect::<Result<_>>()?;
    let len = series.first().map_or(0, |s| s.len());
    if len == 0 {
        return Err(Error::MisalignedRuns("no contexts".into()));
    }
    if series.iter().any(|s| s.len() != len) {
        return Err(Error::MisalignedRuns("context counts differ".into()));
    }
    let total: u32 = (0..len).map(|i| series.iter().map(|s| u32::from(s[i])).max().unwrap_or(0)).sum();
    Ok(f64::from(total) / len as f64)
}

/// Federated-learning analogue of PRS: `E·(1 − s/100)`.
pub fn prs_fl(local_steps: u32, similarity_pct: f64) -> f64 {
    f64::from(local_steps) * (1.0 - similarity_pct / 100.0)
}

/// One row of the FedAvg-vs-SGD rounds table used for retrodiction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlRow {
    pub local_steps: u32,
    pub similarity_pct: f64,
    /// Rounds to target accuracy; `None` means more than 1000.
    pub fedavg_rounds: Option<u32>,
    pub sgd_rounds: u32,
}

impl FlRow {
    pub fn fedavg_wins(&self) -> bool {
        self.fedavg_rounds.is_some_and(|r| r < self.sgd_rounds)
    }
}

/// Rounds to 0.5 test accuracy, logistic regression on EMNIST, 100 clients
/// (SCAFFOLD, Karimireddy et al. 2020, Table 3).
pub const FL_TABLE: [FlRow; 12] = [
    FlRow { local_steps: 1, similarity_pct: 0.0, fedavg_rounds: Some(258), sgd_rounds: 317 },
    FlRow { local_steps: 5, similarity_pct: 0.0, fedavg_rounds: Some(428), sgd_rounds: 317 },
    FlRow { local_steps: 10, similarity_pct: 0.0, fedavg_rounds: Some(711), sgd_rounds: 317 },
    FlRow { local_steps: 20, similarity_pct: 0.0, fedavg_rounds: None, sgd_rounds: 317 },
    FlRow { local_steps: 1, similarity_pct: 10.0, fedavg_rounds: Some(74), sgd_rounds: 365 },
    FlRow { local_steps: 5, similarity_pct: 10.0, fedavg_rounds: Some(34), sgd_rounds: 365 },
    FlRow { local_steps: 10, similarity_pct: 10.0, fedavg_rounds: Some(25), sgd_rounds: 365 },
    FlRow { local_steps: 20, similarity_pct: 10.0, fedavg_rounds: Some(18), sgd_rounds: 365 },
    FlRow { local_steps: 1, similarity_pct: 100.0, fedavg_rounds: Some(83), sgd_rounds: 416 },
    FlRow { local_steps: 5, similarity_pct: 100.0, fedavg_rounds: Some(10), sgd_rounds: 416 },
    FlRow { local_steps: 10, similarity_pct: 100.0, fedavg_rounds: Some(6), sgd_rounds: 416 },
    FlRow { local_steps: 20, similarity_pct: 100.0, fedavg_rounds: Some(4), sgd_rounds: 416 },
];

/// Per-row correctness of "SGD wins iff PRS_FL ≥ threshold".
pub fn fl_retrodiction(rows: &[FlRow], threshold: f64) -> Vec<bool> {
    rows.iter()
        .map(|r| {
            let predicts_sgd = prs_fl(r.local_steps, r.similarity_pct) >= threshold;
            predicts_sgd != r.fedavg_wins()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hit_at_k_cases() {
        let scores = [0.3, 0.9, 0.1, 0.5];
        assert_eq!(hit_at_k_scores(&[1], &scores, 1).unwrap(), 1);
        assert_eq!(hit_at_k_scores(&[0, 2], &scores, 1).unwrap(), 0);
        assert_eq!(hit_at_k_scores(&[0, 2], &scores, 3).unwrap(), 1);
        assert!(matches!(hit_at_k_scores(&[0], &scores, 5), Err(Error::BadK { .. })));
        assert!(matches!(hit_at_k_scores(&[0], &scores, 0), Err(Error::BadK { .. })));
    }

    #[test]
    fn auc_cases() {
        assert_eq!(discovery_auc_scores(&[2, 0, 1], &[0.0, 0.5, 1.0]).unwrap(), 1.0);
        // worst to best: curve (0, 0.5, 1)
        let auc = discovery_auc_scores(&[0, 1, 2], &[0.0, 0.5, 1.0]).unwrap();
        let brute: f64 = [0.0, 0.5, 1.0].iter().sum::<f64>() / 3.0;
        assert!((auc - brute).abs() < 1e-12 && (auc - 0.5).abs() < 1e-12);
        assert_eq!(discovery_auc_scores(&[0, 1], &[0.2, 0.2, 0.2]).unwrap(), 1.0);
        assert!(discovery_auc_scores(&[], &[0.0, 1.0]).is_err());
    }

    fn stat(mean: f64, sem: f64) -> Stat {
        Stat { mean, sem, n: 50 }
    }

    #[test]
    fn advantage_cases() {
        let mut m = BTreeMap::new();
        m.insert("greedy".to_string(), stat(0.389, 0.03));
        m.insert("ucb".to_string(), stat(0.339, 0.04));
        let a = exploration_advantage(&m, "ucb", "greedy").unwrap();
        assert!((a.mean + 0.050).abs() < 1e-12);
        assert!((a.sem - 0.05).abs() < 1e-12);
        m.insert("ucb".to_string(), stat(0.687, 0.0));
        m.insert("greedy".to_string(), stat(0.652, 0.0));
        assert!((exploration_advantage(&m, "ucb", "greedy").unwrap().mean - 0.035).abs() < 1e-12);
        m.insert("same".to_string(), stat(0.652, 0.0));
        assert_eq!(exploration_advantage(&m, "same", "greedy").unwrap().mean, 0.0);
        assert!(matches!(exploration_advantage(&m, "thompson", "greedy"), Err(Error::MissingPlanner(_))));
        assert!(matches!(prior_benefit(&m, "greedy", "random"), Err(Error::MissingBaseline(_))));
    }

    #[test]
    fn mixture_cases() {
        let lam = mixture_weight(-0.050, 0.035, 0.0).unwrap();
        assert!((lam - 0.050 / 0.085).abs() < 1e-15);
        assert!((lam - 0.5882).abs() < 1e-4);
        assert_eq!(mixture_weight(-0.05, 0.035, 0.035).unwrap(), 1.0);
        assert_eq!(mixture_weight(-0.05, 0.035, -0.05).unwrap(), 0.0);
        assert!(matches!(mixture_weight(0.01, 0.035, 0.02), Err(Error::PreconditionFailed(_))));
        assert!(matches!(mixture_weight(-0.05, 0.035, 0.5), Err(Error::TargetUnreachable { .. })));
    }

    #[test]
    fn eta_squared_factor_a_only() {
        let mut d = BTreeMap::new();
        for a in 0..3 {
            for b in 0..2 {
                for s in 0..4 {
                    d.insert((a, b, s), a as f64);
                }
            }
        }
        let e = eta_squared(&d).unwrap();
        assert!((e.factor_a - 1.0).abs() < 1e-12);
        assert!(e.factor_b.abs() < 1e-12 && e.interaction.abs() < 1e-12 && e.residual.abs() < 1e-12);
    }

    #[test]
    fn eta_squared_hand_built_2x2x2() {
        // cell (a, b) seeds
        let vals = [((0, 0), [1.0, 3.0]), ((0, 1), [2.0, 2.0]), ((1, 0), [6.0, 4.0]), ((1, 1), [9.0, 7.0])];
        let mut d = BTreeMap::new();
        for ((a, b), v) in vals {
            for (s, x) in v.iter().enumerate() {
                d.insert((a, b, s), *x);
            }
        }
        // Brute force: grand = 34/8 = 4.25; A means 2, 6.5; B means 3.5, 5;
        // cell means 2, 2, 5, 8.
        let grand = 4.25;
        let ss_t: f64 = [1.0, 3.0, 2.0, 2.0, 6.0, 4.0, 9.0, 7.0].iter().map(|x: &f64| (x - grand).powi(2)).sum();
        let ss_a = 4.0 * ((2.0f64 - grand).powi(2) + (6.5f64 - grand).powi(2));
        let ss_b = 4.0 * ((3.5f64 - grand).powi(2) + (5.0f64 - grand).powi(2));
        let inter = |m: f64, am: f64, bm: f64| (m - am - bm + grand).powi(2);
        let ss_ab = 2.0 * (inter(2.0, 2.0, 3.5) + inter(2.0, 2.0, 5.0) + inter(5.0, 6.5, 3.5) + inter(8.0, 6.5, 5.0));
        let ss_e = 2.0 + 0.0 + 2.0 + 2.0;
        assert!((ss_a + ss_b + ss_ab + ss_e - ss_t).abs() < 1e-12);
        let e = eta_squared(&d).unwrap();
        assert!((e.factor_a - ss_a / ss_t).abs() < 1e-12);
        assert!((e.factor_b - ss_b / ss_t).abs() < 1e-12);
        assert!((e.interaction - ss_ab / ss_t).abs() < 1e-12);
        assert!((e.residual - ss_e / ss_t).abs() < 1e-12);
    }

    #[test]
    fn eta_squared_noise_is_residual() {
        use rand::Rng;
        let mut rng = crate::rng::stream(9, crate::rng::Purpose::Instance);
        let mut d = BTreeMap::new();
        for a in 0..4 {
            for b in 0..4 {
                for s in 0..200 {
                    d.insert((a, b, s), rng.sample::<f64, _>(rand_distr::StandardNormal));
                }
            }
        }
        let e = eta_squared(&d).unwrap();
        assert!(e.residual > 0.97, "{e:?}");
    }

    #[test]
    fn eta_squared_unbalanced() {
        let mut d = BTreeMap::new();
        d.insert((0, 0, 0), 1.0);
        d.insert((0, 0, 1), 2.0);
        d.insert((0, 1, 0), 3.0);
        assert!(matches!(eta_squared(&d), Err(Error::UnbalancedDesign(_))));
        d.insert((0, 1, 1), 3.5);
        d.insert((1, 0, 0), 3.5);
        assert!(matches!(eta_squared(&d), Err(Error::UnbalancedDesign(_))));
    }

    #[test]
    fn b_dagger_behaviour() {
        let t = threshold_b_dagger(0.1, 156, 0.5, 1.0, 300.0, 0.16).unwrap();
        assert!((t.budget - 156.0 * t.b_dagger).abs() < 1e-12);
        // doubling c: prefactor halves, log term gains log 2
        let one = threshold_b_dagger(0.1, 156, 0.5, 1.0, 300.0, 0.16).unwrap().b_dagger;
        let two = threshold_b_dagger(0.1, 156, 0.5, 1.0, 600.0, 0.16).unwrap().b_dagger;
        let k1 = 300.0 * 0.5 * 0.16 * 0.16;
        let log1 = (156.0f64 * 156.0 * k1 / 0.1).ln();
        assert!((one - 0.1 / k1 * log1).abs() < 1e-12);
        assert!((two - 0.1 / (2.0 * k1) * (log1 + 2f64.ln())).abs() < 1e-12);
        assert!(matches!(threshold_b_dagger(10.0, 2, 0.5, 1.0, 1.0, 0.1), Err(Error::OutOfRegime(_))));
    }

    fn row(prs: f64, adv: f64) -> ConditionRow {
        ConditionRow {
            benchmark_id: "t".into(),
            n_actions: 100,
            budget: 20,
            b_ratio: 0.2,
            tau2: Some(1.0),
            sigma2: Some(0.1),
            rho: 1.0 - prs / 0.2,
            prs,
            per_planner_hit: BTreeMap::new(),
            per_planner_auc: BTreeMap::new(),
            advantage: Some(stat(adv, 0.01)),
            prior_benefit: None,
            predicted_winner: Regime::Greedy,
            empirical_winner: None,
            in_boundary_zone: in_boundary_zone(prs),
        }
    }

    #[test]
    fn accuracy_cases() {
        let rule = ThresholdRule::Prs { theta: 0.1 };
        let rows = vec![row(0.02, -0.1), row(0.18, 0.2), row(0.12, 0.05)];
        let r = regime_accuracy(&rows, &rule, 0.01).unwrap();
        assert_eq!(r.overall, Some(1.0));
        assert_eq!(r.inside_zone, Some(1.0));
        let tied = vec![row(0.02, 0.0), row(0.18, 0.005)];
        let r = regime_accuracy(&tied, &rule, 0.01).unwrap();
        assert_eq!(r.equivalence_fraction, 1.0);
        assert_eq!(r.overall, None);
        let wrong = vec![row(0.02, 0.1), row(0.18, 0.2)];
        assert_eq!(regime_accuracy(&wrong, &rule, 0.01).unwrap().overall, Some(0.5));
        // noise-ratio rule: 2·0.1/1.1 ≈ 0.18 < 0.2 → explore
        let nr = ThresholdRule::NoiseRatio { c: 2.0 };
        assert_eq!(nr.predict(&row(0.02, 0.1)), Some(Regime::Explore));
    }

    #[test]
    fn oracle_cases() {
        let mut h = BTreeMap::new();
        h.insert("a".to_string(), vec![1u8, 0]);
        h.insert("b".to_string(), vec![0u8, 1]);
        assert_eq!(per_context_oracle(&h, &["a", "b"]).unwrap(), 1.0);
        h.insert("a".to_string(), vec![1u8, 0, 0]);
        h.insert("b".to_string(), vec![0u8, 0, 1]);
        assert!((per_context_oracle(&h, &["a", "b"]).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!((per_context_oracle(&h, &["a", "a"]).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        h.insert("c".to_string(), vec![1u8]);
        assert!(matches!(per_context_oracle(&h, &["a", "c"]), Err(Error::MisalignedRuns(_))));
        assert!(matches!(per_context_oracle(&h, &["a", "z"]), Err(Error::MisalignedRuns(_))));
    }

    #[test]
    fn fl_cases() {
        assert_eq!(prs_fl(1, 0.0), 1.0);
        assert!((prs_fl(10, 10.0) - 9.0).abs() < 1e-12);
        assert_eq!(prs_fl(20, 100.0), 0.0);
        let ok = fl_retrodiction(&FL_TABLE, 5.0);
        assert_eq!(ok.iter().filter(|c| **c).count(), 10);
        assert!(!ok[6] && !ok[7]);
    }

    proptest! {
        #[test]
        fn mixture_reproduces_target(low in -1.0f64..-1e-3, high in 1e-3f64..1.0, u in 0.0f64..=1.0) {
            let target = low + u * (high - low);
            let lam = mixture_weight(low, high, target).unwrap();
            prop_assert!((lam * high + (1.0 - lam) * low - target).abs() < 1e-12);
        }

        #[test]
        fn auc_bounded_and_prepend_best(seq in prop::collection::vec(0usize..6, 1..12), scores in prop::collection::vec(-3.0f64..3.0, 6)) {
            let auc = discovery_auc_scores(&seq, &scores).unwrap();
            prop_assert!((0.0..=1.0).contains(&auc));
            let best = crate::oracle::argmax(&scores);
            let mut pre = vec![best];
            pre.extend_from_slice(&seq);
            prop_assert!(discovery_auc_scores(&pre, &scores).unwrap() >= auc - 1e-12);
        }

        #[test]
        fn hit_monotone_in_k(seq in prop::collection::vec(0usize..8, 1..5), scores in prop::collection::vec(-3.0f64..3.0, 8)) {
            let mut last = 0;
            for k in 1..=8 {
                let h = hit_at_k_scores(&seq, &scores, k).unwrap();
                prop_assert!(h >= last);
                last = h;
            }
        }

        #[test]
        fn eta_components_sum_to_one(vals in prop::collection::vec(-5.0f64..5.0, 24)) {
            let mut d = BTreeMap::new();
            for (i, v) in vals.iter().enumerate() {
                d.insert((i % 3, (i / 3) % 2, i / 6), *v);
            }
            if let Ok(e) = eta_squared(&d) {
                let s = e.factor_a + e.factor_b + e.interaction + e.residual;
                prop_assert!((s - 1.0).abs() < 1e-10);
                prop_assert!(e.factor_a >= 0.0 && e.factor_b >= 0.0 && e.interaction >= 0.0 && e.residual >= 0.0);
            }
        }
    }
}
