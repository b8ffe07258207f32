//! The query loop: one context at a time, or a chain of contexts with prior
//! transfer between them.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::analysis::{discovery_auc_scores, hit_at_k_scores};
use crate::oracle::OracleTable;
use crate::planners::{choose_arm, exp3_update, Arm, ContextPlanner, Mode, PlannerKind, PlannerSpec, StepView};
use crate::prs::{estimate_rho_online, spearman};
use crate::rng::{derive_seed, stream, Purpose};
use crate::surrogate::{make_structured_prior, PosteriorState, PriorFamily, PriorState, StructuredPriorConfig};
use crate::{Error, Result};

fn d_warm_start() -> usize {
    3
}
fn d_sigma2() -> f64 {
    0.1
}
fn d_tau2() -> f64 {
    1.0
}
fn d_alpha() -> f64 {
    0.9
}
fn d_true() -> bool {
    true
}
fn d_hit_ks() -> Vec<usize> {
    vec![1, 5, 10]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    /// Queries per context.
    pub budget: usize,
    #[serde(default = "d_warm_start")]
    pub warm_start: usize,
    pub prior_family: PriorFamily,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "d_true")]
    pub allow_requery: bool,
    /// Noise variance assumed by the surrogate.
    #[serde(default = "d_sigma2")]
    pub sigma2: f64,
    /// Prior variance of flat, EMA and oracle priors.
    #[serde(default = "d_tau2")]
    pub tau2: f64,
    /// EMA memory weight.
    #[serde(default = "d_alpha")]
    pub alpha: f64,
    #[serde(default = "d_hit_ks")]
    pub hit_ks: Vec<usize>,
    /// Record ρ̂/PRS trajectories for planners that do not need them.
    #[serde(default = "d_true")]
    pub track_rho: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub structured: Option<StructuredPriorConfig>,
}

impl EpisodeConfig {
    pub fn new(budget: usize, prior_family: PriorFamily) -> Self {
        Self {
            budget,
            warm_start: d_warm_start(),
            prior_family,
            seed: 0,
            allow_requery: true,
            sigma2: d_sigma2(),
            tau2: d_tau2(),
            alpha: d_alpha(),
            hit_ks: d_hit_ks(),
            track_rho: true,
            structured: None,
        }
    }

    pub fn validate(&self, n_actions: usize) -> Result<()> {
        if self.budget < 1 {
            return Err(Error::BadSpec("budget must be at least 1".into()));
        }
        if self.budget > 10 * n_actions {
            return Err(Error::BadSpec(format!("budget {} exceeds 10·|A| = {}", self.budget, 10 * n_actions)));
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(Error::BadSpec(format!("sigma2 = {}", self.sigma2)));
        }
        if !(self.tau2 > 0.0 && self.tau2.is_finite()) {
            return Err(Error::BadSpec(format!("tau2 = {}", self.tau2)));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::BadSpec(format!("alpha = {}", self.alpha)));
        }
        if self.hit_ks.contains(&0) {
            return Err(Error::BadSpec("hit_ks must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub t: usize,
    pub action: usize,
    pub value: f64,
    /// Context-start prior mean of the action.
    pub prior_mean: f64,
}

/// Full trace of one context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub planner: String,
    pub prior_family: PriorFamily,
    pub context: usize,
    pub seed: u64,
    pub budget: usize,
    pub n_actions: usize,
    pub b_ratio: f64,
    pub queried: Vec<Query>,
    pub rho_trajectory: Vec<(usize, Option<f64>)>,
    pub prs_trajectory: Vec<(usize, Option<f64>)>,
    pub mode_switches: Vec<(usize, Mode)>,
    pub hit_at_k: BTreeMap<usize, u8>,
    pub discovery_auc: f64,
    /// Spearman(prior mean, true score) over all actions, if defined.
    pub true_rho: Option<f64>,
    /// Arm picked by a switching planner for this context.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arm: Option<Arm>,
}

impl RunRecord {
    pub fn hit1(&self) -> u8 {
        self.hit_at_k.get(&1).copied().unwrap_or(0)
    }

    pub fn actions(&self) -> Vec<usize> {
        self.queried.iter().map(|q| q.action).collect()
    }

    /// `(prior mean, mean outcome)` per distinct queried action, in first-query order.
    pub fn distinct_pairs(&self) -> Vec<(f64, f64)> {
        let mut order: Vec<usize> = Vec::new();
        let mut acc: BTreeMap<usize, (f64, f64, u32)> = BTreeMap::new();
        for q in &self.queried {
            let e = acc.entry(q.action).or_insert_with(|| {
                order.push(q.action);
                (q.prior_mean, 0.0, 0)
            });
            e.1 += q.value;
            e.2 += 1;
        }
        order
            .into_iter()
            .map(|a| {
                let (p, s, c) = acc[&a];
                (p, s / f64::from(c))
            })
            .collect()
    }

    /// Mean observed value per distinct queried action.
    pub fn context_means(&self) -> Vec<(usize, f64)> {
        let mut acc: BTreeMap<usize, (f64, u32)> = BTreeMap::new();
        for q in &self.queried {
            let e = acc.entry(q.action).or_insert((0.0, 0));
            e.0 += q.value;
            e.1 += 1;
        }
        acc.into_iter().map(|(a, (s, c))| (a, s / f64::from(c))).collect()
    }
}

/// Extra per-context inputs beyond the prior.
#[derive(Debug, Clone, Default)]
pub struct ContextInputs {
    /// Per-action variance of observed context means across earlier contexts.
    pub cross_context_var: Vec<f64>,
    /// Position in the chain (for the `k_min_contexts` guard).
    pub context_index: usize,
    pub arm: Option<Arm>,
}

/// Runs `cfg.budget` queries on one context of `table`.
///
/// `seed` keys the planner and noise streams; planners that share a seed see
/// the same warm-start draws and the same noise sequence.
pub fn run_context(
    table: &OracleTable,
    context: usize,
    prior: &PriorState,
    planner: &PlannerSpec,
    cfg: &EpisodeConfig,
    inputs: &ContextInputs,
    seed: u64,
) -> Result<RunRecord> {
    let n = table.n_actions();
    if context >= table.n_contexts() {
        return Err(Error::IndexError(format!("context {context} of {}", table.n_contexts())));
    }
    if prior.n_actions() != n {
        return Err(Error::LengthMismatch { left: prior.n_actions(), right: n });
    }
    cfg.validate(n)?;
    let budget = cfg.budget;
    let b_ratio = budget as f64 / n as f64;
    let scores = table.context_scores(context);
    let true_rho = spearman(&prior.mean, scores).ok();

    let mut planner_rng = stream(seed, Purpose::Planner);
    let mut noise_rng = stream(seed, Purpose::Noise);
    let mut cp = ContextPlanner::new(planner, prior, budget, cfg.warm_start, inputs.context_index, inputs.arm, &mut planner_rng)?;

    let allow_requery = cfg.allow_requery && planner.kind != PlannerKind::RankGreedy;
    let track = cfg.track_rho || matches!(planner.kind, PlannerKind::Regime);
    let mut post = PosteriorState::from_prior(prior);
    let mut queried = vec![false; n];
    let mut distinct: Vec<usize> = Vec::new();
    let mut best_observed: Option<f64> = None;
    let mut record = RunRecord {
        planner: planner.label(),
        prior_family: prior.family,
        context,
        seed,
        budget,
        n_actions: n,
        b_ratio,
        queried: Vec::with_capacity(budget),
        rho_trajectory: Vec::new(),
        prs_trajectory: Vec::new(),
        mode_switches: Vec::new(),
        hit_at_k: BTreeMap::new(),
        discovery_auc: 0.0,
        true_rho,
        arm: inputs.arm,
    };

    for t in 0..budget {
        let rho_hat = if track {
            let pm: Vec<f64> = distinct.iter().map(|&a| prior.mean[a]).collect();
            let ym: Vec<f64> = distinct.iter().map(|&a| post.obs_sum[a] / f64::from(post.obs_count[a])).collect();
            let r = estimate_rho_online(&pm, &ym, planner.min_distinct);
            record.rho_trajectory.push((t, r));
            record.prs_trajectory.push((t, r.map(|r| b_ratio * (1.0 - r))));
            r
        } else {
            None
        };
        let view = StepView {
            t,
            budget,
            b_ratio,
            posterior: &post,
            queried: &queried,
            n_distinct: distinct.len(),
            best_observed,
            cross_context_var: &inputs.cross_context_var,
            rho_hat,
            true_rho,
            allow_requery,
        };
        let (action, mode) = cp.select(&view, &mut planner_rng);
        if record.mode_switches.last().map(|(_, m)| *m) != Some(mode) {
            record.mode_switches.push((t, mode));
        }
        let y = table.observe(context, action, &mut noise_rng)?;
        post.update(action, y, cfg.sigma2)?;
        if !queried[action] {
            queried[action] = true;
            distinct.push(action);
        }
        best_observed = Some(best_observed.map_or(y, |b: f64| b.max(y)));
        record.queried.push(Query { t, action, value: y, prior_mean: prior.mean[action] });
    }

    let actions = record.actions();
    for &k in &cfg.hit_ks {
        if k <= n {
            record.hit_at_k.insert(k, hit_at_k_scores(&actions, scores, k)?);
        }
    }
    record.hit_at_k.entry(1).or_insert(hit_at_k_scores(&actions, scores, 1)?);
    record.discovery_auc = discovery_auc_scores(&actions, scores)?;
    Ok(record)
}

/// Runs every context of `table` in order, carrying prior state across them.
///
/// Prior families:
/// - `flat`: zero mean, variance τ² in every context.
/// - `ema`: starts flat, then `μ̂ ← αμ̂ + (1−α)ȳ` after each context.
/// - `structured`: kernel regression on `features` anchored at the running
///   mean observation of each action seen so far; flat until anchors exist.
/// - `oracle`: true cross-context means.
pub fn run_chain(
    table: &OracleTable,
    planner: &PlannerSpec,
    cfg: &EpisodeConfig,
    features: Option<&[Vec<f64>]>,
    seed: u64,
) -> Result<Vec<RunRecord>> {
    let n = table.n_actions();
    cfg.validate(n)?;
    planner.validate()?;
    let structured_cfg = cfg.structured.unwrap_or(StructuredPriorConfig { tau2: cfg.tau2, ..Default::default() });
    if cfg.prior_family == PriorFamily::Structured && features.is_none() {
        return Err(Error::BadSpec("structured prior needs a features file".into()));
    }
    if cfg.prior_family == PriorFamily::Synthetic {
        return Err(Error::BadSpec("synthetic priors are generated, not chained".into()));
    }

    let mut ema = PriorState::ema_start(n, cfg.tau2, cfg.alpha);
    let mut history: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut meta_rng = stream(seed, Purpose::Meta);
    let mut weights = [1.0, 1.0];
    let mut out = Vec::with_capacity(table.n_contexts());

    for context in 0..table.n_contexts() {
        let prior = match cfg.prior_family {
            PriorFamily::Flat => PriorState::flat(n, cfg.tau2),
            PriorFamily::Ema => ema.clone(),
            PriorFamily::Oracle => PriorState::oracle(table, cfg.tau2),
            PriorFamily::Structured => {
                let anchors = pooled_means(&history, n);
                if anchors.is_empty() {
                    PriorState::flat(n, cfg.tau2)
                } else {
                    make_structured_prior(features.unwrap_or_default(), &anchors, &structured_cfg)?
                }
            }
            PriorFamily::Synthetic => unreachable!(),
        };
        let arm = choose_arm(planner.kind, &weights, planner.gamma, &mut meta_rng);
        let inputs = ContextInputs { cross_context_var: cross_context_var(&history, n), context_index: context, arm };
        let rec = run_context(table, context, &prior, planner, cfg, &inputs, derive_seed(seed, &[context as u64]))?;

        if planner.kind == PlannerKind::Exp3Switch {
            let chosen = match arm {
                Some(Arm::Ucb) => 1,
                _ => 0,
            };
            let w = exp3_update(&weights, chosen, f64::from(rec.hit1()), planner.gamma)?;
            weights = [w[0], w[1]];
            let m = weights[0].max(weights[1]);
            if m > 1e100 {
                weights = [weights[0] / m, weights[1] / m];
            }
        }
        let means = rec.context_means();
        if cfg.prior_family == PriorFamily::Ema {
            ema = ema.ema_transfer(&means)?;
        }
        history.push(means);
        out.push(rec);
    }
    Ok(out)
}

fn pooled_means(history: &[Vec<(usize, f64)>], n: usize) -> Vec<(usize, f64)> {
    let mut sum = vec![0.0; n];
    let mut cnt = vec![0u32; n];
    for ctx in history {
        for &(a, y) in ctx {
            sum[a] += y;
            cnt[a] += 1;
        }
    }
    (0..n).filter(|&a| cnt[a] > 0).map(|a| (a, sum[a] / f64::from(cnt[a]))).collect()
}

fn cross_context_var(history: &[Vec<(usize, f64)>], n: usize) -> Vec<f64> {
    let mut vals: Vec<Vec<f64>> = vec![Vec::new(); n];
    for ctx in history {
        for &(a, y) in ctx {
            vals[a].push(y);
        }
    }
    vals.iter()
        .map(|v| {
            if v.len() < 2 {
                return 0.0;
            }
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
        })
        .collect()
}
