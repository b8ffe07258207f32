//! Acquisition policies.
//!
//! Fixed planners (greedy, UCB, Thompson, REIGN), adaptive baselines, the
//! regime-switching planner and the two analytical surrogate policies
//! (rank-greedy and two-phase). All argmax operations break ties by lowest
//! action index.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::prs::prs_from_ratio;
use crate::surrogate::{PosteriorState, PriorState};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlannerKind {
    Greedy,
    Ucb,
    Thompson,
    Reign,
    Regime,
    EpsilonGreedy,
    ExploreThenExploit,
    RandomSwitch,
    Exp3Switch,
    BudgetAwareUcb,
    OraclePrs,
    RankGreedy,
    TwoPhase,
    /// Uniform random without repeats; the no-prior baseline.
    Random,
}

impl PlannerKind {
    pub const ALL: [PlannerKind; 14] = [
        PlannerKind::Greedy,
        PlannerKind::Ucb,
        PlannerKind::Thompson,
        PlannerKind::Reign,
        PlannerKind::Regime,
        PlannerKind::EpsilonGreedy,
        PlannerKind::ExploreThenExploit,
        PlannerKind::RandomSwitch,
        PlannerKind::Exp3Switch,
        PlannerKind::BudgetAwareUcb,
        PlannerKind::OraclePrs,
        PlannerKind::RankGreedy,
        PlannerKind::TwoPhase,
        PlannerKind::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PlannerKind::Greedy => "greedy",
            PlannerKind::Ucb => "ucb",
            PlannerKind::Thompson => "thompson",
            PlannerKind::Reign => "reign",
            PlannerKind::Regime => "regime",
            PlannerKind::EpsilonGreedy => "epsilon_greedy",
            PlannerKind::ExploreThenExploit => "explore_then_exploit",
            PlannerKind::RandomSwitch => "random_switch",
            PlannerKind::Exp3Switch => "exp3_switch",
            PlannerKind::BudgetAwareUcb => "budget_aware_ucb",
            PlannerKind::OraclePrs => "oracle_prs",
            PlannerKind::RankGreedy => "rank_greedy",
            PlannerKind::TwoPhase => "two_phase",
            PlannerKind::Random => "random",
        }
    }

    /// Whether the context opens with random warm-start queries.
    pub fn uses_warm_start(self) -> bool {
        !matches!(
            self,
            PlannerKind::RankGreedy | PlannerKind::TwoPhase | PlannerKind::Random | PlannerKind::ExploreThenExploit
        )
    }
}

impl std::str::FromStr for PlannerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PlannerKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::BadSpec(format!("unknown planner {s:?}")))
    }
}

impl std::fmt::Display for PlannerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

fn d_beta() -> f64 {
    2.0
}
fn d_epsilon() -> f64 {
    0.1
}
fn d_theta() -> f64 {
    0.10
}
fn d_min_distinct() -> usize {
    3
}
fn d_lambda() -> f64 {
    0.5
}
fn d_rho_w() -> f64 {
    1.0
}
fn d_alpha_explore() -> f64 {
    0.5
}
fn d_gamma() -> f64 {
    0.1
}

/// A planner and its hyperparameters. Unused parameters are ignored by kinds
/// that do not read them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerSpec {
    pub kind: PlannerKind,
    /// Output label; defaults to the kind name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// UCB width (also β_max for the budget-aware variant and the regime planner's explore mode).
    #[serde(default = "d_beta")]
    pub beta: f64,
    #[serde(default = "d_epsilon")]
    pub epsilon: f64,
    /// PRS switching threshold. Values ≤ 0 never exploit; very large values always do.
    #[serde(default = "d_theta")]
    pub theta: f64,
    /// Distinct queried actions needed before ρ̂ is trusted.
    #[serde(default = "d_min_distinct")]
    pub min_distinct: usize,
    /// Contexts at the start of a chain that run pure greedy.
    #[serde(default)]
    pub k_min_contexts: usize,
    #[serde(default = "d_lambda")]
    pub reign_lambda: f64,
    #[serde(default = "d_rho_w")]
    pub reign_rho: f64,
    #[serde(default = "d_alpha_explore")]
    pub alpha_explore: f64,
    #[serde(default = "d_gamma")]
    pub gamma: f64,
}

impl PlannerSpec {
    pub fn new(kind: PlannerKind) -> Self {
        Self {
            kind,
            name: None,
            beta: d_beta(),
            epsilon: d_epsilon(),
            theta: d_theta(),
            min_distinct: d_min_distinct(),
            k_min_contexts: 0,
            reign_lambda: d_lambda(),
            reign_rho: d_rho_w(),
            alpha_explore: d_alpha_explore(),
            gamma: d_gamma(),
        }
    }

    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.kind.name().to_string())
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::BadSpec(m));
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad(format!("beta = {}", self.beta));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return bad(format!("epsilon = {}", self.epsilon));
        }
        if self.theta.is_nan() {
            return bad("theta is NaN".into());
        }
        if self.min_distinct < 2 {
            return bad(format!("min_distinct = {} (needs >= 2)", self.min_distinct));
        }
        if !(0.0..=1.0).contains(&self.reign_lambda) {
            return bad(format!("reign_lambda = {}", self.reign_lambda));
        }
        if !(self.reign_rho >= 0.0) {
            return bad(format!("reign_rho = {}", self.reign_rho));
        }
        if self.kind == PlannerKind::TwoPhase && !(self.alpha_explore > 0.0 && self.alpha_explore < 1.0) {
            return bad(format!("alpha_explore = {}", self.alpha_explore));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("gamma = {}", self.gamma));
        }
        Ok(())
    }
}

/// Acquisition mode at one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Explore,
    Exploit,
}

pub fn ucb_score(mean: f64, sd: f64, beta: f64) -> f64 {
    mean + beta * sd
}

/// Gaussian expected improvement of `N(mean, sd²)` over `best`.
pub fn expected_improvement(mean: f64, sd: f64, best: f64) -> f64 {
    if sd <= 0.0 {
        return (mean - best).max(0.0);
    }
    let z = (mean - best) / sd;
    let n = Normal::standard();
    (mean - best) * n.cdf(z) + sd * n.pdf(z)
}

/// REIGN hybrid: `λ·EI + (1−λ)·sd·(1 + ρ_w·cross_context_var)`.
pub fn reign_score(mean: f64, sd: f64, best_observed: f64, cross_context_var: f64, lambda: f64, rho_w: f64) -> f64 {
    lambda * expected_improvement(mean, sd, best_observed) + (1.0 - lambda) * sd * (1.0 + rho_w * cross_context_var)
}

/// `β_max·√(r_t/B)`.
pub fn budget_aware_beta(beta_max: f64, remaining: usize, budget: usize) -> f64 {
    beta_max * (remaining as f64 / budget as f64).sqrt()
}

/// One Gaussian draw per action from the posterior; index of the largest.
pub fn thompson_draw<R: Rng + ?Sized>(posterior: &PosteriorState, rng: &mut R) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for a in 0..posterior.n_actions() {
        let z: f64 = rng.sample(StandardNormal);
        let v = posterior.mean[a] + posterior.sd(a) * z;
        if v > best_v {
            best_v = v;
            best = a;
        }
    }
    best
}

/// EXP3 selection probabilities `(1−γ)·w_i/Σw + γ/n`.
pub fn exp3_probabilities(weights: &[f64], gamma: f64) -> Vec<f64> {
    let total: f64 = weights.iter().sum();
    let n = weights.len() as f64;
    weights.iter().map(|w| (1.0 - gamma) * w / total + gamma / n).collect()
}

/// Importance-weighted exponential update of the chosen arm.
pub fn exp3_update(weights: &[f64], chosen: usize, reward: f64, gamma: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&reward) {
        return Err(Error::BadReward(reward));
    }
    if chosen >= weights.len() {
        return Err(Error::IndexError(format!("arm {chosen} of {}", weights.len())));
    }
    if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
        return Err(Error::BadValue("EXP3 weights must be positive".into()));
    }
    let p = exp3_probabilities(weights, gamma);
    let mut out = weights.to_vec();
    let estimate = reward / p[chosen];
    out[chosen] *= (gamma * estimate / weights.len() as f64).exp();
    Ok(out)
}

/// Top-`budget` actions by prior mean, descending.
pub fn rank_greedy_sequence(prior: &PriorState, budget: usize) -> Result<Vec<usize>> {
    let n = prior.n_actions();
    if budget > n {
        return Err(Error::BudgetExceedsActions { budget, n_actions: n });
    }
    Ok(crate::oracle::top_k(&prior.mean, budget))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TwoPhasePlan {
    /// Exploration queries in order, round-robin over a random arm ordering.
    pub explore: Vec<usize>,
    pub exploit_steps: usize,
}

/// `⌊α·B⌋` uniform exploration queries followed by greedy exploitation.
pub fn two_phase_plan<R: Rng + ?Sized>(n: usize, budget: usize, alpha_explore: f64, rng: &mut R) -> Result<TwoPhasePlan> {
    if !(alpha_explore > 0.0 && alpha_explore < 1.0) {
        return Err(Error::BadSpec(format!("alpha_explore = {alpha_explore}")));
    }
    let b_e = (alpha_explore * budget as f64).floor() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let explore = (0..b_e).map(|i| order[i % n]).collect();
    Ok(TwoPhasePlan { explore, exploit_steps: budget - b_e })
}

/// Fixed acquisition a meta-planner can hand to a context.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    Greedy,
    Ucb,
}

/// What a planner sees before choosing step `t`.
pub struct StepView<'a> {
    pub t: usize,
    pub budget: usize,
    pub b_ratio: f64,
    pub posterior: &'a PosteriorState,
    /// Distinct-action query mask.
    pub queried: &'a [bool],
    pub n_distinct: usize,
    pub best_observed: Option<f64>,
    pub cross_context_var: &'a [f64],
    /// Online ρ̂ over queried actions, when defined.
    pub rho_hat: Option<f64>,
    /// True prior/score rank correlation (oracle information).
    pub true_rho: Option<f64>,
    pub allow_requery: bool,
}

impl StepView<'_> {
    fn candidates(&self) -> Vec<usize> {
        let n = self.posterior.n_actions();
        if self.allow_requery || self.n_distinct >= n {
            (0..n).collect()
        } else {
            (0..n).filter(|&a| !self.queried[a]).collect()
        }
    }

    fn argmax_by(&self, f: impl Fn(usize) -> f64) -> usize {
        let mut best = None;
        let mut best_v = f64::NEG_INFINITY;
        for a in self.candidates() {
            let v = f(a);
            if best.is_none() || v > best_v {
                best = Some(a);
                best_v = v;
            }
        }
        best.expect("at least two actions")
    }

    fn greedy(&self) -> usize {
        self.argmax_by(|a| self.posterior.mean[a])
    }

    fn ucb(&self, beta: f64) -> usize {
        self.argmax_by(|a| ucb_score(self.posterior.mean[a], self.posterior.sd(a), beta))
    }

    fn random_unqueried<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let n = self.posterior.n_actions();
        let open: Vec<usize> = (0..n).filter(|&a| !self.queried[a]).collect();
        if open.is_empty() {
            rng.random_range(0..n)
        } else {
            open[rng.random_range(0..open.len())]
        }
    }
}

/// Per-context planner state.
#[derive(Debug, Clone)]
pub struct ContextPlanner {
    spec: PlannerSpec,
    warm_start: usize,
    /// Position of this context in its chain.
    context_index: usize,
    arm: Option<Arm>,
    sequence: Vec<usize>,
}

impl ContextPlanner {
    /// Prepares a planner for one context. Switching planners need `arm`;
    /// `rank_greedy` and `two_phase` precompute their query plans here.
    pub fn new<R: Rng + ?Sized>(
        spec: &PlannerSpec,
        prior: &PriorState,
        budget: usize,
        warm_start: usize,
        context_index: usize,
        arm: Option<Arm>,
        rng: &mut R,
    ) -> Result<Self> {
        spec.validate()?;
        let sequence = match spec.kind {
            PlannerKind::RankGreedy => rank_greedy_sequence(prior, budget)?,
            PlannerKind::TwoPhase => two_phase_plan(prior.n_actions(), budget, spec.alpha_explore, rng)?.explore,
            _ => Vec::new(),
        };
        if matches!(spec.kind, PlannerKind::RandomSwitch | PlannerKind::Exp3Switch) && arm.is_none() {
            return Err(Error::BadSpec(format!("{} needs a per-context arm", spec.kind)));
        }
        let warm_start = if spec.kind.uses_warm_start() { warm_start.min(budget) } else { 0 };
        Ok(Self { spec: spec.clone(), warm_start, context_index, arm, sequence })
    }

    pub fn spec(&self) -> &PlannerSpec {
        &self.spec
    }

    /// Chooses the action for step `view.t`.
    pub fn select<R: Rng + ?Sized>(&mut self, view: &StepView<'_>, rng: &mut R) -> (usize, Mode) {
        let s = &self.spec;
        if view.t < self.warm_start {
            return (view.random_unqueried(rng), Mode::Explore);
        }
        match s.kind {
            PlannerKind::Greedy => (view.greedy(), Mode::Exploit),
            PlannerKind::Ucb => (view.ucb(s.beta), Mode::Explore),
            PlannerKind::Thompson => {
                let a = if view.allow_requery || view.n_distinct >= view.posterior.n_actions() {
                    thompson_draw(view.posterior, rng)
                } else {
                    // sample once per action, restricted to unqueried ones
                    let draws: Vec<f64> = (0..view.posterior.n_actions())
                        .map(|a| {
                            let z: f64 = rng.sample(StandardNormal);
                            view.posterior.mean[a] + view.posterior.sd(a) * z
                        })
                        .collect();
                    view.argmax_by(|a| draws[a])
                };
                (a, Mode::Explore)
            }
            PlannerKind::Reign => {
                let best = view
                    .best_observed
                    .unwrap_or_else(|| view.posterior.mean.iter().copied().fold(f64::NEG_INFINITY, f64::max));
                let a = view.argmax_by(|a| {
                    reign_score(
                        view.posterior.mean[a],
                        view.posterior.sd(a),
                        best,
                        view.cross_context_var.get(a).copied().unwrap_or(0.0),
                        s.reign_lambda,
                        s.reign_rho,
                    )
                });
                (a, Mode::Explore)
            }
            PlannerKind::Regime => {
                if self.context_index < s.k_min_contexts {
                    return (view.greedy(), Mode::Exploit);
                }
                self.switch_on(view.rho_hat.filter(|_| view.n_distinct >= s.min_distinct), view)
            }
            PlannerKind::OraclePrs => self.switch_on(view.true_rho, view),
            PlannerKind::EpsilonGreedy => {
                if rng.random::<f64>() < s.epsilon {
                    let c = view.candidates();
                    (c[rng.random_range(0..c.len())], Mode::Explore)
                } else {
                    (view.greedy(), Mode::Exploit)
                }
            }
            PlannerKind::ExploreThenExploit => {
                if view.t < view.budget.div_ceil(2) {
                    (view.random_unqueried(rng), Mode::Explore)
                } else {
                    (view.greedy(), Mode::Exploit)
                }
            }
            PlannerKind::RandomSwitch | PlannerKind::Exp3Switch => match self.arm {
                Some(Arm::Ucb) => (view.ucb(s.beta), Mode::Explore),
                _ => (view.greedy(), Mode::Exploit),
            },
            PlannerKind::BudgetAwareUcb => {
                let beta = budget_aware_beta(s.beta, view.budget - view.t, view.budget);
                (view.ucb(beta), Mode::Explore)
            }
            PlannerKind::RankGreedy => (self.sequence[view.t], Mode::Exploit),
            PlannerKind::TwoPhase => match self.sequence.get(view.t) {
                Some(&a) => (a, Mode::Explore),
                None => (view.greedy(), Mode::Exploit),
            },
            PlannerKind::Random => (view.random_unqueried(rng), Mode::Explore),
        }
    }

    /// Exploit iff `b·(1−ρ) < θ`; explore when ρ is unavailable.
    fn switch_on(&self, rho: Option<f64>, view: &StepView<'_>) -> (usize, Mode) {
        match rho {
            Some(r) if prs_from_ratio(view.b_ratio, r) < self.spec.theta => (view.greedy(), Mode::Exploit),
            _ => (view.ucb(self.spec.beta), Mode::Explore),
        }
    }
}

/// Decides the per-context arm of a meta-planner given the running weights.
pub fn choose_arm<R: Rng + ?Sized>(kind: PlannerKind, weights: &[f64; 2], gamma: f64, rng: &mut R) -> Option<Arm> {
    let idx = match kind {
        PlannerKind::RandomSwitch => usize::from(rng.random_bool(0.5)),
        PlannerKind::Exp3Switch => {
            let p = exp3_probabilities(weights, gamma);
            usize::from(rng.random::<f64>() >= p[0])
        }
        _ => return None,
    };
    Some(if idx == 0 { Arm::Greedy } else { Arm::Ucb })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};
    use crate::surrogate::PriorFamily;

    #[test]
    fn ucb_examples() {
        assert!((ucb_score(0.5, 0.1, 2.0) - 0.7).abs() < 1e-12);
        assert_eq!(ucb_score(0.5, 0.0, 2.0), 0.5);
        let means = [0.1, 0.4, 0.3];
        let sds = [1.0, 0.0, 2.0];
        let best = (0..3).max_by(|&a, &b| ucb_score(means[a], sds[a], 0.0).total_cmp(&ucb_score(means[b], sds[b], 0.0)));
        assert_eq!(best, Some(1));
    }

    #[test]
    fn thompson_degenerate_and_symmetric() {
        let prior = PriorState::new(PriorFamily::Flat, vec![0.1, 0.5, 0.2], vec![0.0; 3], 1.0).unwrap();
        let post = PosteriorState::from_prior(&prior);
        let mut rng = stream(3, Purpose::Planner);
        assert!((0..100).all(|_| thompson_draw(&post, &mut rng) == 1));

        let post = PosteriorState::from_prior(&PriorState::flat(2, 1.0));
        let n = 100_000;
        let zero = (0..n).filter(|_| thompson_draw(&post, &mut rng) == 0).count() as f64 / n as f64;
        let se = (0.25 / n as f64).sqrt();
        assert!((zero - 0.5).abs() <= 3.0 * se, "{zero}");
    }

    #[test]
    fn thompson_separated_arms() {
        // P(arm 0 wins) = Φ(1/√0.02) ≈ 1 − 8e-13
        let prior = PriorState::new(PriorFamily::Flat, vec![1.0, 0.0], vec![0.01, 0.01], 1.0).unwrap();
        let post = PosteriorState::from_prior(&prior);
        let oracle = Normal::standard().cdf(1.0 / 0.02f64.sqrt());
        assert!(oracle > 0.99);
        let mut rng = stream(4, Purpose::Planner);
        let n = 100_000;
        let zero = (0..n).filter(|_| thompson_draw(&post, &mut rng) == 0).count() as f64 / n as f64;
        assert!(zero >= 0.99);
    }

    #[test]
    fn reign_examples() {
        assert_eq!(reign_score(0.0, 0.0, 0.5, 3.0, 0.5, 1.0), 0.0);
        // EI(1, 1, 0) = Φ(1) + φ(1)
        let ei = 0.841_344_746_068_542_9 + 0.241_970_724_519_143_37;
        assert!((reign_score(1.0, 1.0, 0.0, 7.0, 1.0, 1.0) - ei).abs() < 1e-9);
        assert!((ei - 1.0833).abs() < 1e-4);
        assert_eq!(reign_score(2.0, 0.3, 0.0, 5.0, 0.0, 0.0), 0.3);
    }

    #[test]
    fn budget_aware_beta_examples() {
        assert_eq!(budget_aware_beta(2.0, 40, 40), 2.0);
        assert_eq!(budget_aware_beta(2.0, 0, 40), 0.0);
        assert_eq!(budget_aware_beta(2.0, 10, 40), 1.0);
    }

    #[test]
    fn exp3_examples() {
        let w = vec![1.0, 2.0];
        assert_eq!(exp3_update(&w, 0, 0.0, 0.1).unwrap(), w);
        let up = exp3_update(&w, 0, 1.0, 0.1).unwrap();
        assert!(up[0] > w[0]);
        assert_eq!(up[1], w[1]);
        assert_eq!(exp3_probabilities(&[1.0, 100.0], 1.0), vec![0.5, 0.5]);
        assert!(matches!(exp3_update(&w, 0, 1.5, 0.1), Err(Error::BadReward(_))));
        assert!(matches!(exp3_update(&w, 0, -0.1, 0.1), Err(Error::BadReward(_))));
    }

    #[test]
    fn rank_greedy_examples() {
        let p = PriorState::synthetic(vec![0.1, 0.9, 0.5], 1.0);
        assert_eq!(rank_greedy_sequence(&p, 2).unwrap(), vec![1, 2]);
        let mut all = rank_greedy_sequence(&p, 3).unwrap();
        all.sort_unstable();
        assert_eq!(all, vec![0, 1, 2]);
        let tied = PriorState::synthetic(vec![0.5, 0.9, 0.5, 0.5], 1.0);
        assert_eq!(rank_greedy_sequence(&tied, 3).unwrap(), vec![1, 0, 2]);
        assert!(matches!(rank_greedy_sequence(&p, 4), Err(Error::BudgetExceedsActions { .. })));
    }

    #[test]
    fn two_phase_plans() {
        let mut rng = stream(11, Purpose::Planner);
        let plan = two_phase_plan(5, 10, 0.5, &mut rng).unwrap();
        assert_eq!(plan.exploit_steps, 5);
        let mut e = plan.explore.clone();
        e.sort_unstable();
        assert_eq!(e, vec![0, 1, 2, 3, 4]);

        let plan = two_phase_plan(4, 10, 0.9, &mut rng).unwrap();
        let mut counts = [0usize; 4];
        plan.explore.iter().for_each(|&a| counts[a] += 1);
        assert!(counts.iter().all(|&c| c == 2 || c == 3), "{counts:?}");

        let plan = two_phase_plan(10, 6, 0.5, &mut rng).unwrap();
        let mut e = plan.explore.clone();
        e.dedup();
        assert_eq!(e.len(), 3);
        let set: std::collections::BTreeSet<_> = plan.explore.iter().collect();
        assert_eq!(set.len(), 3);
        assert!(two_phase_plan(10, 6, 1.0, &mut rng).is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(PlannerSpec::new(PlannerKind::Ucb).validate().is_ok());
        let bad = PlannerSpec { epsilon: 1.5, ..PlannerSpec::new(PlannerKind::EpsilonGreedy) };
        assert!(matches!(bad.validate(), Err(Error::BadSpec(_))));
        let bad = PlannerSpec { min_distinct: 1, ..PlannerSpec::new(PlannerKind::Regime) };
        assert!(bad.validate().is_err());
        let bad = PlannerSpec { beta: -1.0, ..PlannerSpec::new(PlannerKind::Ucb) };
        assert!(bad.validate().is_err());
        assert!("nope".parse::<PlannerKind>().is_err());
        assert_eq!("budget_aware_ucb".parse::<PlannerKind>().unwrap(), PlannerKind::BudgetAwareUcb);
    }

    fn view<'a>(post: &'a PosteriorState, queried: &'a [bool], t: usize, rho_hat: Option<f64>) -> StepView<'a> {
        StepView {
            t,
            budget: 50,
            b_ratio: 0.189,
            posterior: post,
            queried,
            n_distinct: queried.iter().filter(|q| **q).count(),
            best_observed: None,
            cross_context_var: &[],
            rho_hat,
            true_rho: None,
            allow_requery: true,
        }
    }

    #[test]
    fn regime_planner_modes() {
        let prior = PriorState::new(PriorFamily::Flat, vec![0.0, 1.0, 0.5, 0.2], vec![1.0, 0.01, 1.0, 4.0], 1.0).unwrap();
        let post = PosteriorState::from_prior(&prior);
        let queried = [true, true, true, false];
        let spec = PlannerSpec::new(PlannerKind::Regime);
        let mut rng = stream(1, Purpose::Planner);
        let mut p = ContextPlanner::new(&spec, &prior, 50, 3, 0, None, &mut rng).unwrap();

        let (a, m) = p.select(&view(&post, &[false; 4], 0, None), &mut rng);
        assert_eq!(m, Mode::Explore);
        assert!(a < 4);
        // 0.189·(1 − 0.756) = 0.046 < 0.10
        assert_eq!(p.select(&view(&post, &queried, 3, Some(0.756)), &mut rng), (1, Mode::Exploit));
        // 0.189·(1 − 0.064) = 0.177
        assert_eq!(p.select(&view(&post, &queried, 3, Some(0.064)), &mut rng), (3, Mode::Explore));
        assert_eq!(p.select(&view(&post, &queried, 3, None), &mut rng).1, Mode::Explore);
    }

    #[test]
    fn k_min_guard_forces_greedy() {
        let prior = PriorState::flat(4, 1.0);
        let post = PosteriorState::from_prior(&prior);
        let queried = [true, true, true, false];
        let spec = PlannerSpec { k_min_contexts: 2, ..PlannerSpec::new(PlannerKind::Regime) };
        let mut rng = stream(1, Purpose::Planner);
        let mut p = ContextPlanner::new(&spec, &prior, 50, 3, 1, None, &mut rng).unwrap();
        assert_eq!(p.select(&view(&post, &queried, 3, Some(-1.0)), &mut rng).1, Mode::Exploit);
        let mut p = ContextPlanner::new(&spec, &prior, 50, 3, 2, None, &mut rng).unwrap();
        assert_eq!(p.select(&view(&post, &queried, 3, Some(-1.0)), &mut rng).1, Mode::Explore);
    }
}
