//! Controlled-ρ Gaussian bandits and the synthetic validation grid.

use std::collections::BTreeMap;
use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{exploration_advantage, prior_benefit, winner_from_advantage, ConditionRow, Stat, DEFAULT_TIE_EPSILON};
use crate::episode::{run_context, ContextInputs, EpisodeConfig, RunRecord};
use crate::oracle::OracleTable;
use crate::planners::{PlannerKind, PlannerSpec};
use crate::prs::{classify_regime, in_boundary_zone, prs, spearman, DEFAULT_THETA};
use crate::rng::{derive_seed, stream, Purpose, StreamRng};
use crate::surrogate::{PriorFamily, PriorState};
use crate::{Error, Result};

/// How prior scores are derived from the true means.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Construction {
    /// `μ̂ = μ + ε`, `ε ~ N(0, τ²)`.
    #[default]
    Additive,
    /// `μ̂ = ρμ + √(1−ρ²)ε`, `ε ~ N(0, η²)`, with `ρ = η²/(η²+τ²)` taken from the τ² axis.
    Pearson,
}

/// Prior quality of one condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorNoise {
    Tau2(f64),
    Rho(f64),
}

/// One cell of the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub n_actions: usize,
    pub b_ratio: f64,
    pub prior: PriorNoise,
    pub sigma2: f64,
    pub eta2: f64,
    /// τ² axis value the condition came from, if any.
    pub tau2: Option<f64>,
}

impl Condition {
    pub fn budget(&self) -> usize {
        ((self.b_ratio * self.n_actions as f64).round() as usize).max(1)
    }

    /// Mean squared error of the prior scores, used as the surrogate's prior variance.
    pub fn prior_variance(&self) -> f64 {
        match self.prior {
            PriorNoise::Tau2(t) => t,
            PriorNoise::Rho(r) => (2.0 * self.eta2 * (1.0 - r)).max(1e-6),
        }
    }
}

fn d_n_actions() -> Vec<usize> {
    vec![50, 100, 200]
}
fn d_budget_ratios() -> Vec<f64> {
    (0..10).map(|i| 0.05 + 0.65 * f64::from(i) / 9.0).collect()
}
fn d_tau2() -> Vec<f64> {
    let (lo, hi) = (0.05f64.ln(), 5.0f64.ln());
    (0..7).map(|i| (lo + (hi - lo) * f64::from(i) / 6.0).exp()).collect()
}
fn d_sigma2() -> Vec<f64> {
    vec![0.1, 0.5, 1.0]
}
fn d_eta2() -> f64 {
    1.0
}
fn d_seeds() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    #[serde(default = "d_n_actions")]
    pub n_actions_set: Vec<usize>,
    #[serde(default = "d_budget_ratios")]
    pub budget_ratios: Vec<f64>,
    #[serde(default = "d_tau2")]
    pub tau2_set: Vec<f64>,
    #[serde(default = "d_sigma2")]
    pub sigma2_set: Vec<f64>,
    #[serde(default = "d_eta2")]
    pub eta2: f64,
    #[serde(default = "d_seeds")]
    pub seeds_per_condition: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub construction: Construction,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            n_actions_set: d_n_actions(),
            budget_ratios: d_budget_ratios(),
            tau2_set: d_tau2(),
            sigma2_set: d_sigma2(),
            eta2: d_eta2(),
            seeds_per_condition: d_seeds(),
            master_seed: 0,
            construction: Construction::Additive,
        }
    }
}

impl GridSpec {
    /// 105-condition reduced grid: |A| = 100, 5 budget ratios, 7 τ², 3 σ², 50 seeds.
    pub fn ci_tier() -> Self {
        Self {
            n_actions_set: vec![100],
            budget_ratios: vec![0.05, 0.2, 0.35, 0.5, 0.7],
            seeds_per_condition: 50,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_actions_set.is_empty()
            || self.budget_ratios.is_empty()
            || self.tau2_set.is_empty()
            || self.sigma2_set.is_empty()
        {
            return Err(Error::BadSpec("grid axes must be nonempty".into()));
        }
        if self.seeds_per_condition == 0 {
            return Err(Error::BadSpec("seeds_per_condition must be at least 1".into()));
        }
        if !(self.eta2 > 0.0 && self.eta2.is_finite()) {
            return Err(Error::BadSpec(format!("eta2 = {}", self.eta2)));
        }
        for &n in &self.n_actions_set {
            if n < 2 {
                return Err(Error::BadSpec(format!("n_actions = {n}")));
            }
            for &b in &self.budget_ratios {
                if !(b > 0.0) || (b * n as f64).round() < 1.0 || b > 10.0 {
                    return Err(Error::BadSpec(format!("budget ratio {b} gives no queries at |A| = {n}")));
                }
            }
        }
        if self.tau2_set.iter().chain(&self.sigma2_set).any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::BadSpec("τ² and σ² must be positive".into()));
        }
        Ok(())
    }

    /// Conditions in index order: |A| slowest, then b, τ², σ².
    pub fn conditions(&self) -> Vec<Condition> {
        let mut out = Vec::new();
        for &n in &self.n_actions_set {
            for &b in &self.budget_ratios {
                for &t in &self.tau2_set {
                    for &s in &self.sigma2_set {
                        let prior = match self.construction {
                            Construction::Additive => PriorNoise::Tau2(t),
                            Construction::Pearson => PriorNoise::Rho(self.eta2 / (self.eta2 + t)),
                        };
                        out.push(Condition { n_actions: n, b_ratio: b, prior, sigma2: s, eta2: self.eta2, tau2: Some(t) });
                    }
                }
            }
        }
        out
    }
}

/// True means and the prior scores a planner starts from.
#[derive(Debug, Clone, PartialEq)]
pub struct BanditInstance {
    pub true_means: Vec<f64>,
    pub prior_scores: Vec<f64>,
    pub prior_variance: f64,
    pub obs_noise_sd: f64,
}

impl BanditInstance {
    pub fn rho(&self) -> Option<f64> {
        spearman(&self.prior_scores, &self.true_means).ok()
    }
}

/// `μ ~ N(0, η²)`, `μ̂ = ρμ + √(1−ρ²)ε` with `ε ~ N(0, η²)`.
pub fn gen_bandit<R: Rng + ?Sized>(n: usize, eta2: f64, rho: f64, rng: &mut R) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(-1.0..=1.0).contains(&rho) {
        return Err(Error::BadValue(format!("rho = {rho}")));
    }
    if !(eta2 > 0.0) {
        return Err(Error::BadValue(format!("eta2 = {eta2}")));
    }
    let eta = eta2.sqrt();
    let mu: Vec<f64> = (0..n).map(|_| eta * rng.sample::<f64, _>(StandardNormal)).collect();
    let c = (1.0 - rho * rho).sqrt();
    let prior = mu.iter().map(|m| rho * m + c * eta * rng.sample::<f64, _>(StandardNormal)).collect();
    Ok((mu, prior))
}

/// `μ ~ N(0, η²)`, `μ̂ = μ + ε` with `ε ~ N(0, τ²)`.
pub fn gen_bandit_additive<R: Rng + ?Sized>(n: usize, eta2: f64, tau2: f64, rng: &mut R) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(eta2 > 0.0) || !(tau2 >= 0.0) {
        return Err(Error::BadValue(format!("eta2 = {eta2}, tau2 = {tau2}")));
    }
    let (eta, tau) = (eta2.sqrt(), tau2.sqrt());
    let mu: Vec<f64> = (0..n).map(|_| eta * rng.sample::<f64, _>(StandardNormal)).collect();
    let prior = mu.iter().map(|m| m + tau * rng.sample::<f64, _>(StandardNormal)).collect();
    Ok((mu, prior))
}

pub fn make_instance(cond: &Condition, rng: &mut StreamRng) -> Result<BanditInstance> {
    let (true_means, prior_scores) = match cond.prior {
        PriorNoise::Tau2(t) => gen_bandit_additive(cond.n_actions, cond.eta2, t, rng)?,
        PriorNoise::Rho(r) => gen_bandit(cond.n_actions, cond.eta2, r, rng)?,
    };
    Ok(BanditInstance { true_means, prior_scores, prior_variance: cond.prior_variance(), obs_noise_sd: cond.sigma2.sqrt() })
}

/// Runs one single-context episode on `instance`.
pub fn run_episode(instance: &BanditInstance, planner: &PlannerSpec, cfg: &EpisodeConfig, seed: u64) -> Result<RunRecord> {
    planner.validate()?;
    let n = instance.true_means.len();
    let table = OracleTable::new(1, n, instance.true_means.clone(), instance.obs_noise_sd)?;
    let prior = match cfg.prior_family {
        PriorFamily::Flat => PriorState::flat(n, cfg.tau2),
        PriorFamily::Oracle => PriorState::oracle(&table, cfg.tau2),
        _ => PriorState::synthetic(instance.prior_scores.clone(), instance.prior_variance),
    };
    let inputs = ContextInputs { cross_context_var: vec![0.0; n], context_index: 0, arm: None };
    run_context(&table, 0, &prior, planner, cfg, &inputs, seed)
}

/// Episode configuration used for a grid condition.
pub fn condition_config(cond: &Condition) -> EpisodeConfig {
    let mut cfg = EpisodeConfig::new(cond.budget(), PriorFamily::Synthetic);
    cfg.sigma2 = cond.sigma2;
    cfg.tau2 = cond.prior_variance();
    cfg.hit_ks = vec![1];
    cfg.track_rho = false;
    cfg
}

/// Per-seed outcomes of one condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionResult {
    pub condition: Condition,
    /// Spearman(prior scores, true means) per instance; `NaN` when undefined.
    pub rhos: Vec<f64>,
    pub hits: BTreeMap<String, Vec<u8>>,
    pub aucs: BTreeMap<String, Vec<f64>>,
}

impl ConditionResult {
    pub fn rho_mean(&self) -> f64 {
        let v: Vec<f64> = self.rhos.iter().copied().filter(|r| r.is_finite()).collect();
        if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    }

    pub fn hit_stats(&self) -> BTreeMap<String, Stat> {
        self.hits.iter().map(|(k, v)| (k.clone(), Stat::from_values(v.iter().map(|&h| f64::from(h))))).collect()
    }

    pub fn auc_stats(&self) -> BTreeMap<String, Stat> {
        self.aucs.iter().map(|(k, v)| (k.clone(), Stat::from_values(v.iter().copied()))).collect()
    }
}

/// Evaluates `planners` on `seeds` instances of `cond`.
///
/// Instance `s` is drawn from `derive_seed(master_seed, [cond_index, s])`; every
/// planner sees the same instance and the same noise stream.
pub fn run_condition(
    cond: &Condition,
    planners: &[PlannerSpec],
    seeds: usize,
    master_seed: u64,
    cond_index: usize,
) -> Result<ConditionResult> {
    let cfg = condition_config(cond);
    let per_seed: Vec<(f64, Vec<(u8, f64)>)> = (0..seeds)
        .into_par_iter()
        .map(|s| seed_outcome(cond, planners, &cfg, derive_seed(master_seed, &[cond_index as u64, s as u64])))
        .collect::<Result<_>>()?;
    Ok(assemble(*cond, planners, per_seed))
}

fn seed_outcome(cond: &Condition, planners: &[PlannerSpec], cfg: &EpisodeConfig, seed: u64) -> Result<(f64, Vec<(u8, f64)>)> {
    let inst = make_instance(cond, &mut stream(seed, Purpose::Instance))?;
    let rho = inst.rho().unwrap_or(f64::NAN);
    let outs = planners
        .iter()
        .map(|p| run_episode(&inst, p, cfg, seed).map(|r| (r.hit1(), r.discovery_auc)))
        .collect::<Result<_>>()?;
    Ok((rho, outs))
}

fn assemble(condition: Condition, planners: &[PlannerSpec], per_seed: Vec<(f64, Vec<(u8, f64)>)>) -> ConditionResult {
    let mut hits: BTreeMap<String, Vec<u8>> = BTreeMap::new();
    let mut aucs: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut rhos = Vec::with_capacity(per_seed.len());
    for (rho, outs) in per_seed {
        rhos.push(rho);
        for (p, (h, a)) in planners.iter().zip(outs) {
            hits.entry(p.label()).or_default().push(h);
            aucs.entry(p.label()).or_default().push(a);
        }
    }
    ConditionResult { condition, rhos, hits, aucs }
}

/// Planners the grid evaluates by default: the greedy/UCB contrast plus the
/// rank-greedy and random pair behind the prior-benefit column.
pub fn default_grid_planners() -> Vec<PlannerSpec> {
    [PlannerKind::Greedy, PlannerKind::Ucb, PlannerKind::RankGreedy, PlannerKind::Random]
        .into_iter()
        .map(PlannerSpec::new)
        .collect()
}

/// Runs the whole grid on `workers` threads. Output is independent of `workers`.
pub fn run_grid(spec: &GridSpec, planners: &[PlannerSpec], workers: usize) -> Result<Vec<ConditionResult>> {
    spec.validate()?;
    if planners.is_empty() {
        return Err(Error::BadSpec("no planners".into()));
    }
    for p in planners {
        p.validate()?;
    }
    let conds = spec.conditions();
    let tasks: Vec<(usize, usize)> =
        (0..conds.len()).flat_map(|c| (0..spec.seeds_per_condition).map(move |s| (c, s))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::BadSpec(format!("thread pool: {e}")))?;
    let outs: Vec<(f64, Vec<(u8, f64)>)> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(c, s)| {
                let cfg = condition_config(&conds[c]);
                seed_outcome(&conds[c], planners, &cfg, derive_seed(spec.master_seed, &[c as u64, s as u64]))
            })
            .collect::<Result<_>>()
    })?;
    let mut it = outs.into_iter();
    Ok(conds
        .iter()
        .map(|c| assemble(*c, planners, it.by_ref().take(spec.seeds_per_condition).collect()))
        .collect())
}

/// Aggregates one condition into a row. `explore`/`greedy` name the contrast;
/// the prior-benefit column is filled when `rank_greedy` and `random` ran.
pub fn condition_row(result: &ConditionResult, benchmark_id: &str, explore: &str, greedy: &str) -> ConditionRow {
    let c = &result.condition;
    let budget = c.budget();
    let rho = result.rho_mean();
    let p = prs(budget, c.n_actions, rho);
    let hit = result.hit_stats();
    let advantage = exploration_advantage(&hit, explore, greedy).ok();
    ConditionRow {
        benchmark_id: benchmark_id.to_string(),
        n_actions: c.n_actions,
        budget,
        b_ratio: budget as f64 / c.n_actions as f64,
        tau2: c.tau2,
        sigma2: Some(c.sigma2),
        rho,
        prs: p,
        prior_benefit: prior_benefit(&hit, "rank_greedy", "random").ok(),
        per_planner_auc: result.auc_stats(),
        per_planner_hit: hit,
        predicted_winner: classify_regime(p, DEFAULT_THETA, 1, budget, c.n_actions).predicted,
        empirical_winner: advantage.map(|a| winner_from_advantage(a.mean, DEFAULT_TIE_EPSILON)),
        advantage,
        in_boundary_zone: in_boundary_zone(p),
    }
}

pub fn grid_rows(results: &[ConditionResult]) -> Vec<ConditionRow> {
    results
        .iter()
        .enumerate()
        .map(|(i, r)| condition_row(r, &format!("synthetic-{i}"), "ucb", "greedy"))
        .collect()
}

pub const GRID_CSV_HEADER: [&str; 12] =
    ["planner", "n_actions", "B", "b_ratio", "tau2", "sigma2", "rho_mean", "prs", "hit1_mean", "hit1_sem", "auc_mean", "auc_sem"];

/// One CSV row per condition × planner.
pub fn write_grid_csv<W: Write>(rows: &[ConditionRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(GRID_CSV_HEADER)?;
    let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
    for r in rows {
        for (planner, h) in &r.per_planner_hit {
            let a = r.per_planner_auc.get(planner).copied().unwrap_or(Stat { mean: f64::NAN, sem: f64::NAN, n: 0 });
            w.write_record([
                planner.clone(),
                r.n_actions.to_string(),
                r.budget.to_string(),
                r.b_ratio.to_string(),
                opt(r.tau2),
                opt(r.sigma2),
                r.rho.to_string(),
                r.prs.to_string(),
                h.mean.to_string(),
                h.sem.to_string(),
                a.mean.to_string(),
                a.sem.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::Io { path: "<grid csv>".into(), source: e })?;
    Ok(())
}
