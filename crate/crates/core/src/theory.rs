//! Closed-form results for the simplified bandit models and their Monte Carlo checks.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::analysis::Stat;
use crate::episode::EpisodeConfig;
use crate::oracle::argmax;
use crate::planners::{PlannerKind, PlannerSpec};
use crate::rng::{derive_seed, stream, Purpose};
use crate::surrogate::PriorFamily;
use crate::synthetic::{gen_bandit, run_episode, BanditInstance};
use crate::{Error, Result};

/// A closed form checked against simulation; `pass` iff `|analytic − mc| ≤ 3·mc_se`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedFormResult {
    pub name: String,
    pub analytic: f64,
    pub mc_estimate: f64,
    pub mc_se: f64,
    pub n_draws: usize,
    pub pass: bool,
}

impl ClosedFormResult {
    pub fn new(name: impl Into<String>, analytic: f64, mc_estimate: f64, mc_se: f64, n_draws: usize) -> Self {
        let pass = (analytic - mc_estimate).abs() <= 3.0 * mc_se;
        Self { name: name.into(), analytic, mc_estimate, mc_se, n_draws, pass }
    }

    pub fn relative_error(&self) -> f64 {
        ((self.mc_estimate - self.analytic) / self.analytic).abs()
    }
}

/// Probability that greedy on a ρ-correlated prior picks the better of two arms.
pub fn sheppard_hit1(rho: f64) -> f64 {
    0.5 + rho.clamp(-1.0, 1.0).asin() / PI
}

fn bernoulli(name: String, analytic: f64, hits: usize, n: usize) -> ClosedFormResult {
    let p = hits as f64 / n as f64;
    ClosedFormResult::new(name, analytic, p, (p * (1.0 - p) / n as f64).sqrt(), n)
}

fn check_draws(n: usize, min: usize) -> Result<()> {
    if n < min {
        return Err(Error::BadValue(format!("{n} draws, need at least {min}")));
    }
    Ok(())
}

pub fn mc_two_arm_greedy(rho: f64, n_draws: usize, seed: u64) -> Result<ClosedFormResult> {
    check_draws(n_draws, 1000)?;
    let mut rng = stream(seed, Purpose::Instance);
    let mut hits = 0;
    for _ in 0..n_draws {
        let (mu, prior) = gen_bandit(2, 1.0, rho, &mut rng)?;
        hits += usize::from(argmax(&mu) == argmax(&prior));
    }
    Ok(bernoulli(format!("two_arm_greedy(rho={rho})"), sheppard_hit1(rho), hits, n_draws))
}

/// `Var[μ̂⁽ᴷ⁾ − μ] = α^{2K}τ² + σ²(1−α)/(1+α)·(1 − α^{2K})`.
pub fn ema_variance(alpha: f64, k: u32, tau2: f64, sigma2: f64) -> f64 {
    let a2k = alpha.powi(2 * k as i32);
    a2k * tau2 + sigma2 * (1.0 - alpha) / (1.0 + alpha) * (1.0 - a2k)
}

/// Simulates `e⁽ᵏ⁾ = αe⁽ᵏ⁻¹⁾ + (1−α)ξ⁽ᵏ⁾` from `e⁽⁰⁾ ~ N(0, τ²)`, `ξ ~ N(0, σ²)`.
pub fn mc_ema_variance(alpha: f64, k: u32, tau2: f64, sigma2: f64, n_reps: usize, seed: u64) -> Result<ClosedFormResult> {
    check_draws(n_reps, 10_000)?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::BadValue(format!("alpha = {alpha}")));
    }
    let mut rng = stream(seed, Purpose::Instance);
    let (tau, sigma) = (tau2.sqrt(), sigma2.sqrt());
    let errs: Vec<f64> = (0..n_reps)
        .map(|_| {
            let mut e = tau * rng.sample::<f64, _>(StandardNormal);
            for _ in 0..k {
                e = alpha * e + (1.0 - alpha) * sigma * rng.sample::<f64, _>(StandardNormal);
            }
            e
        })
        .collect();
    let n = n_reps as f64;
    let mean = errs.iter().sum::<f64>() / n;
    let var = errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0);
    // e is Gaussian, so Var[s²] = 2σ⁴/(n−1)
    let se = var * (2.0 / (n - 1.0)).sqrt();
    Ok(ClosedFormResult::new(
        format!("ema_variance(alpha={alpha},K={k},tau2={tau2},sigma2={sigma2})"),
        ema_variance(alpha, k, tau2, sigma2),
        var,
        se,
        n_reps,
    ))
}

/// MC estimate of `G(b, ρ)`: probability that the top-`round(b·n)` prior-ranked
/// actions contain the true argmax.
pub fn rank_greedy_success(b: f64, rho: f64, n: usize, n_reps: usize, seed: u64) -> Result<Stat> {
    let budget = (b * n as f64).round() as usize;
    if budget < 1 || budget > n {
        return Err(Error::BadValue(format!("b = {b} gives B = {budget} at n = {n}")));
    }
    let mut rng = stream(seed, Purpose::Instance);
    let mut hits = Vec::with_capacity(n_reps);
    for _ in 0..n_reps {
        let (mu, prior) = gen_bandit(n, 1.0, rho, &mut rng)?;
        let best = argmax(&mu);
        // rank of the best action under the prior, lowest index first on ties
        let above = prior
            .iter()
            .enumerate()
            .filter(|&(i, p)| *p > prior[best] || (*p == prior[best] && i < best))
            .count();
        hits.push(f64::from(u8::from(above < budget)));
    }
    Ok(Stat::from_values(hits))
}

/// Checks `G(b, ρ)` against its closed forms: `b` at ρ = 0, `1` at ρ = 1, and
/// the two-arm formula at n = 2, b = 1/2.
pub fn mc_rank_greedy(b: f64, rho: f64, n: usize, n_reps: usize, seed: u64) -> Result<ClosedFormResult> {
    let budget = (b * n as f64).round() as usize;
    let analytic = if rho == 1.0 {
        1.0
    } else if rho == 0.0 {
        budget as f64 / n as f64
    } else if n == 2 && budget == 1 {
        sheppard_hit1(rho)
    } else {
        return Err(Error::PreconditionFailed(format!("no closed form for G at b = {b}, rho = {rho}, n = {n}")));
    };
    let s = rank_greedy_success(b, rho, n, n_reps, seed)?;
    Ok(ClosedFormResult::new(format!("rank_greedy(b={b},rho={rho},n={n})"), analytic, s.mean, s.sem, n_reps))
}

/// MC success probability of the two-phase policy on a flat prior: `⌊αB⌋`
/// round-robin exploration queries, then greedy exploitation of the posterior.
/// Success means exploitation ends on the true best action, so noisy
/// observations that misrank the explored arms count as failures.
pub fn two_phase_success(b: f64, sigma2: f64, n: usize, alpha_explore: f64, n_reps: usize, seed: u64) -> Result<Stat> {
    let budget = ((b * n as f64).round() as usize).max(1);
    let mut spec = PlannerSpec::new(PlannerKind::TwoPhase);
    spec.alpha_explore = alpha_explore;
    let mut cfg = EpisodeConfig::new(budget, PriorFamily::Flat);
    cfg.sigma2 = sigma2;
    cfg.hit_ks = vec![1];
    cfg.track_rho = false;
    let mut hits = Vec::with_capacity(n_reps);
    for r in 0..n_reps {
        let s = derive_seed(seed, &[r as u64]);
        let (mu, prior) = gen_bandit(n, 1.0, 0.0, &mut stream(s, Purpose::Instance))?;
        let inst = BanditInstance { true_means: mu, prior_scores: prior, prior_variance: 1.0, obs_noise_sd: sigma2.sqrt() };
        let best = argmax(&inst.true_means);
        let rec = run_episode(&inst, &spec, &cfg, s)?;
        hits.push(f64::from(u8::from(rec.actions().last() == Some(&best))));
    }
    Ok(Stat::from_values(hits))
}

/// True iff no later point's 95% band lies entirely below an earlier point's band.
pub fn nondecreasing_within_bands(points: &[Stat]) -> bool {
    points.iter().enumerate().all(|(i, p)| points[i + 1..].iter().all(|q| q.band().1 >= p.band().0))
}

pub fn nonincreasing_within_bands(points: &[Stat]) -> bool {
    points.iter().enumerate().all(|(i, p)| points[i + 1..].iter().all(|q| q.band().0 <= p.band().1))
}

/// Sign changes along a curve, counting only points whose 95% band excludes 0.
pub fn resolved_sign_changes(points: &[Stat]) -> usize {
    let signs: Vec<bool> = points
        .iter()
        .filter(|p| {
            let (lo, hi) = p.band();
            lo > 0.0 || hi < 0.0
        })
        .map(|p| p.mean > 0.0)
        .collect();
    signs.windows(2).filter(|w| w[0] != w[1]).count()
}

/// `Δ(b, ρ) = S_exp(b, σ²) − G(b, ρ)` with independent MC draws for each term.
pub fn delta_curve(b: f64, sigma2: f64, rhos: &[f64], n: usize, n_reps: usize, seed: u64) -> Result<Vec<Stat>> {
    let s_exp = two_phase_success(b, sigma2, n, 0.5, n_reps, derive_seed(seed, &[0]))?;
    rhos.iter()
        .enumerate()
        .map(|(i, &rho)| {
            let g = rank_greedy_success(b, rho, n, n_reps, derive_seed(seed, &[1, i as u64]))?;
            Ok(Stat { mean: s_exp.mean - g.mean, sem: (s_exp.sem.powi(2) + g.sem.powi(2)).sqrt(), n: n_reps })
        })
        .collect()
}

type Check = Box<dyn Fn() -> Result<ClosedFormResult> + Send + Sync>;

/// A named closed-form check.
pub struct Validator {
    pub name: String,
    pub check: Check,
}

impl Validator {
    pub fn new(name: impl Into<String>, check: impl Fn() -> Result<ClosedFormResult> + Send + Sync + 'static) -> Self {
        Self { name: name.into(), check: Box::new(check) }
    }
}

/// Built-in checks, each with its own seed derived from `seed`.
pub fn default_validators(seed: u64) -> Vec<Validator> {
    let mut v = Vec::new();
    let mut idx = 0u64;
    let mut next = || {
        idx += 1;
        derive_seed(seed, &[idx])
    };
    for rho in [0.0, 0.25, 0.5, 0.75, 0.95] {
        let s = next();
        v.push(Validator::new(format!("sheppard rho={rho}"), move || mc_two_arm_greedy(rho, 100_000, s)));
    }
    for alpha in [0.5, 0.9] {
        for k in [1, 5, 15] {
            let s = next();
            v.push(Validator::new(format!("ema alpha={alpha} K={k}"), move || mc_ema_variance(alpha, k, 1.0, 0.1, 100_000, s)));
        }
    }
    for b in [0.1, 0.3, 0.5] {
        let s = next();
        v.push(Validator::new(format!("rank_greedy b={b} rho=0"), move || mc_rank_greedy(b, 0.0, 100, 20_000, s)));
    }
    let s = next();
    v.push(Validator::new("rank_greedy b=0.3 rho=1", move || mc_rank_greedy(0.3, 1.0, 100, 2_000, s)));
    for rho in [0.3, 0.6] {
        let s = next();
        v.push(Validator::new(format!("rank_greedy n=2 rho={rho}"), move || mc_rank_greedy(0.5, rho, 2, 100_000, s)));
    }
    v
}

/// Runs validators in order; errors become failed results.
pub fn run_validators(validators: &[Validator]) -> Vec<ClosedFormResult> {
    use rayon::prelude::*;
    validators
        .par_iter()
        .map(|v| {
            (v.check)().unwrap_or_else(|e| ClosedFormResult {
                name: format!("{}: {e}", v.name),
                analytic: f64::NAN,
                mc_estimate: f64::NAN,
                mc_se: f64::NAN,
                n_draws: 0,
                pass: false,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sheppard_values() {
        assert_eq!(sheppard_hit1(0.0), 0.5);
        assert!((sheppard_hit1(1.0) - 1.0).abs() < 1e-15);
        assert!((sheppard_hit1(0.5) - 2.0 / 3.0).abs() < 1e-15);
        // asin(x) = atan(x/√(1−x²))
        let oracle = 0.5 + (0.95f64 / (1.0f64 - 0.9025).sqrt()).atan() / PI;
        assert!((sheppard_hit1(0.95) - oracle).abs() < 1e-12);
        assert!((oracle - 0.8989).abs() < 1e-4);
    }

    #[test]
    fn two_arm_mc() {
        for (rho, seed) in [(0.0, 1), (0.5, 2), (0.95, 3)] {
            let r = mc_two_arm_greedy(rho, 100_000, seed).unwrap();
            assert!(r.pass, "{r:?}");
        }
        assert!(mc_two_arm_greedy(0.5, 10, 1).is_err());
    }

    #[test]
    fn ema_closed_form() {
        assert_eq!(ema_variance(0.9, 0, 1.3, 0.1), 1.3);
        assert!((0.9f64.powi(30) - 0.0424).abs() < 1e-4);
        let floor = ema_variance(0.9, 10_000, 1.0, 0.1);
        assert!((floor - 0.01 / 1.9).abs() < 1e-12);
        // one-step unrolling: α²τ² + (1−α)²σ²
        let one = ema_variance(0.99, 1, 2.0, 0.5);
        assert!((one - (0.9801 * 2.0 + 0.0001 * 0.5)).abs() < 1e-12);
    }

    #[test]
    fn ema_mc() {
        for (a, k, t, s) in [(0.9, 15, 1.0, 0.1), (0.5, 5, 1.0, 0.5)] {
            let r = mc_ema_variance(a, k, t, s, 100_000, 7).unwrap();
            assert!(r.relative_error() < 0.02, "{r:?}");
        }
    }

    #[test]
    fn rank_greedy_boundaries() {
        let r = mc_rank_greedy(0.3, 0.0, 100, 20_000, 5).unwrap();
        assert!(r.pass, "{r:?}");
        let r = mc_rank_greedy(0.05, 1.0, 100, 500, 6).unwrap();
        assert_eq!(r.mc_estimate, 1.0);
        assert!(r.pass);
        let r = mc_rank_greedy(0.5, 0.6, 2, 100_000, 8).unwrap();
        assert!((r.analytic - 0.7048).abs() < 1e-4);
        assert!(r.pass, "{r:?}");
        assert!(matches!(mc_rank_greedy(0.3, 0.5, 100, 10, 1), Err(Error::PreconditionFailed(_))));
    }

    #[test]
    fn band_helpers() {
        let s = |m: f64| Stat { mean: m, sem: 0.01, n: 10 };
        assert!(nondecreasing_within_bands(&[s(0.1), s(0.2), s(0.19)]));
        assert!(!nondecreasing_within_bands(&[s(0.3), s(0.2)]));
        assert!(nonincreasing_within_bands(&[s(0.3), s(0.2)]));
        assert_eq!(resolved_sign_changes(&[s(0.3), s(0.0), s(-0.2), s(-0.3)]), 1);
        assert_eq!(resolved_sign_changes(&[s(0.3), s(-0.2), s(0.3)]), 2);
    }

    #[test]
    fn injected_wrong_formula_fails() {
        let v = vec![
            Validator::new("ok", || mc_two_arm_greedy(0.5, 10_000, 1)),
            Validator::new("wrong", || {
                let mut r = mc_two_arm_greedy(0.5, 10_000, 1)?;
                r = ClosedFormResult::new(r.name, 0.5 + 0.5f64.asin() / (2.0 * PI), r.mc_estimate, r.mc_se, r.n_draws);
                Ok(r)
            }),
        ];
        let out = run_validators(&v);
        assert_eq!(out.len(), 2);
        assert!(out[0].pass && !out[1].pass);
    }
}
