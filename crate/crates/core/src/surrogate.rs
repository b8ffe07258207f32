//! Independent-arm hierarchical Gaussian surrogate.
//!
//! Each action carries a Gaussian belief over its mean score. Within a context
//! beliefs are refined by conjugate updates with known noise variance; across
//! contexts the prior mean is carried forward by exponential moving average.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::oracle::OracleTable;
use crate::{Error, Result};

/// Where a context's prior comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorFamily {
    /// Uninformative: zero mean, variance τ².
    Flat,
    /// Carried over from earlier contexts by exponential moving average.
    Ema,
    /// Kernel regression over action features.
    Structured,
    /// True cross-context mean of the oracle table.
    Oracle,
    /// Scores supplied directly by a synthetic generator.
    Synthetic,
}

impl std::fmt::Display for PriorFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            PriorFamily::Flat => "flat",
            PriorFamily::Ema => "ema",
            PriorFamily::Structured => "structured",
            PriorFamily::Oracle => "oracle",
            PriorFamily::Synthetic => "synthetic",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorState {
    pub family: PriorFamily,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    /// EMA memory weight α.
    pub alpha: f64,
}

impl PriorState {
    pub fn new(family: PriorFamily, mean: Vec<f64>, variance: Vec<f64>, alpha: f64) -> Result<Self> {
        if mean.len() != variance.len() {
            return Err(Error::LengthMismatch { left: mean.len(), right: variance.len() });
        }
        if let Some(v) = variance.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::BadValue(format!("prior variance {v}")));
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::BadValue("non-finite prior mean".into()));
        }
        if !(alpha >= 0.0 && alpha <= 1.0) {
            return Err(Error::BadValue(format!("EMA weight {alpha} outside [0, 1]")));
        }
        Ok(Self { family, mean, variance, alpha })
    }

    pub fn flat(n_actions: usize, tau2: f64) -> Self {
        Self { family: PriorFamily::Flat, mean: vec![0.0; n_actions], variance: vec![tau2; n_actions], alpha: 1.0 }
    }

    /// Fresh EMA prior: flat until the first transfer.
    pub fn ema_start(n_actions: usize, tau2: f64, alpha: f64) -> Self {
        Self { family: PriorFamily::Ema, mean: vec![0.0; n_actions], variance: vec![tau2; n_actions], alpha }
    }

    pub fn oracle(table: &OracleTable, tau2: f64) -> Self {
        let n = table.n_actions();
        Self { family: PriorFamily::Oracle, mean: table.cross_context_means(), variance: vec![tau2; n], alpha: 1.0 }
    }

    pub fn synthetic(scores: Vec<f64>, tau2: f64) -> Self {
        let n = scores.len();
        Self { family: PriorFamily::Synthetic, mean: scores, variance: vec![tau2; n], alpha: 1.0 }
    }

    pub fn n_actions(&self) -> usize {
        self.mean.len()
    }

    /// `mean' = α·mean + (1−α)·ȳ` for every action with an observed context
    /// mean; all other actions keep their prior.
    pub fn ema_transfer(&self, context_means: &[(usize, f64)]) -> Result<Self> {
        if self.family != PriorFamily::Ema {
            return Err(Error::PreconditionFailed(format!("EMA transfer on a {} prior", self.family)));
        }
        let mut out = self.clone();
        let a = self.alpha;
        for &(action, ybar) in context_means {
            let m = out
                .mean
                .get_mut(action)
                .ok_or_else(|| Error::IndexError(format!("action {action} of {}", self.n_actions())))?;
            *m = a * *m + (1.0 - a) * ybar;
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorState {
    prior_mean: Vec<f64>,
    prior_var: Vec<f64>,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub obs_count: Vec<u32>,
    pub obs_sum: Vec<f64>,
}

impl PosteriorState {
    pub fn from_prior(prior: &PriorState) -> Self {
        let n = prior.n_actions();
        Self {
            prior_mean: prior.mean.clone(),
            prior_var: prior.variance.clone(),
            mean: prior.mean.clone(),
            variance: prior.variance.clone(),
            obs_count: vec![0; n],
            obs_sum: vec![0.0; n],
        }
    }

    pub fn n_actions(&self) -> usize {
        self.mean.len()
    }

    /// Conjugate Gaussian update of `action` with observation `y`:
    /// precision `1/v + n/σ²`, mean `(μ/v + Σy/σ²)/precision`.
    ///
    /// A zero prior variance pins the arm at its prior mean.
    pub fn update(&mut self, action: usize, y: f64, sigma2: f64) -> Result<()> {
        if !y.is_finite() {
            return Err(Error::BadValue(format!("observation {y}")));
        }
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::BadValue(format!("noise variance {sigma2}")));
        }
        if action >= self.n_actions() {
            return Err(Error::IndexError(format!("action {action} of {}", self.n_actions())));
        }
        self.obs_count[action] += 1;
        self.obs_sum[action] += y;
        let v = self.prior_var[action];
        if v == 0.0 {
            return Ok(());
        }
        let n = f64::from(self.obs_count[action]);
        let precision = 1.0 / v + n / sigma2;
        self.variance[action] = 1.0 / precision;
        self.mean[action] = (self.prior_mean[action] / v + self.obs_sum[action] / sigma2) / precision;
        Ok(())
    }

    pub fn sd(&self, action: usize) -> f64 {
        self.variance[action].sqrt()
    }

    /// `(action, mean observation)` for every action observed at least once.
    pub fn observed_means(&self) -> Vec<(usize, f64)> {
        self.obs_count
            .iter()
            .zip(&self.obs_sum)
            .enumerate()
            .filter(|(_, (c, _))| **c > 0)
            .map(|(a, (c, s))| (a, s / f64::from(*c)))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Kernel {
    /// Jaccard similarity of the bit sets `{i : f_i > 0.5}`.
    TanimotoBinary,
    /// Cosine similarity, clipped below at zero.
    Cosine,
    Rbf { lengthscale: f64 },
}

impl Kernel {
    pub fn similarity(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            Kernel::TanimotoBinary => {
                let (mut inter, mut union) = (0usize, 0usize);
                for (x, y) in a.iter().zip(b) {
                    let (x, y) = (*x > 0.5, *y > 0.5);
                    inter += usize::from(x && y);
                    union += usize::from(x || y);
                }
                // two empty fingerprints share no evidence
                if union == 0 {
                    0.0
                } else {
                    inter as f64 / union as f64
                }
            }
            Kernel::Cosine => {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
                let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
                (dot / (na * nb)).clamp(0.0, 1.0)
            }
            Kernel::Rbf { lengthscale } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
                (-d2 / (2.0 * lengthscale * lengthscale)).exp()
            }
        }
    }
}

/// Settings for [`make_structured_prior`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructuredPriorConfig {
    pub kernel: Kernel,
    pub tau2: f64,
    pub tau2_min: f64,
}

impl Default for StructuredPriorConfig {
    fn default() -> Self {
        Self { kernel: Kernel::TanimotoBinary, tau2: 1.0, tau2_min: 1e-3 }
    }
}

/// Kernel-regression prior from per-action features and observed anchors.
///
/// The mean is the similarity-weighted average of anchor values; an action
/// at similarity 1 to some anchor takes that anchor's value exactly, and one
/// with no similarity to any anchor falls back to the global anchor mean. The
/// variance is `τ²·(1 − max similarity)` clamped to `[τ²_min, τ²]`.
pub fn make_structured_prior(
    features: &[Vec<f64>],
    anchors: &[(usize, f64)],
    cfg: &StructuredPriorConfig,
) -> Result<PriorState> {
    if anchors.is_empty() {
        return Err(Error::NoAnchors);
    }
    let dim = features.first().map_or(0, Vec::len);
    if let Some(f) = features.iter().find(|f| f.len() != dim) {
        return Err(Error::LengthMismatch { left: dim, right: f.len() });
    }
    if let Some(&(a, _)) = anchors.iter().find(|(a, _)| *a >= features.len()) {
        return Err(Error::IndexError(format!("anchor action {a} of {}", features.len())));
    }
    if matches!(cfg.kernel, Kernel::Cosine) {
        if let Some(a) = features.iter().position(|f| f.iter().all(|x| *x == 0.0)) {
            return Err(Error::DegenerateFeature(a));
        }
    }
    if let Kernel::Rbf { lengthscale } = cfg.kernel {
        if !(lengthscale > 0.0) {
            return Err(Error::BadValue(format!("rbf lengthscale {lengthscale}")));
        }
    }

    let global = anchors.iter().map(|(_, y)| y).sum::<f64>() / anchors.len() as f64;
    let mut mean = Vec::with_capacity(features.len());
    let mut variance = Vec::with_capacity(features.len());
    for f in features {
        let sims: Vec<f64> = anchors.iter().map(|(a, _)| cfg.kernel.similarity(f, &features[*a])).collect();
        let max_sim = sims.iter().copied().fold(0.0, f64::max);
        let exact: Vec<f64> = anchors
            .iter()
            .zip(&sims)
            .filter(|(_, s)| **s >= 1.0 - 1e-12)
            .map(|((_, y), _)| *y)
            .collect();
        let total: f64 = sims.iter().sum();
        let m = if !exact.is_empty() {
            exact.iter().sum::<f64>() / exact.len() as f64
        } else if total > 0.0 {
            anchors.iter().zip(&sims).map(|((_, y), s)| y * s).sum::<f64>() / total
        } else {
            global
        };
        mean.push(m);
        variance.push((cfg.tau2 * (1.0 - max_sim)).clamp(cfg.tau2_min.min(cfg.tau2), cfg.tau2));
    }
    Ok(PriorState { family: PriorFamily::Structured, mean, variance, alpha: 1.0 })
}

/// Gram matrix of `features` under `kernel`.
pub fn kernel_matrix(features: &[Vec<f64>], kernel: Kernel) -> DMatrix<f64> {
    let n = features.len();
    DMatrix::from_fn(n, n, |i, j| kernel.similarity(&features[i], &features[j]))
}

/// `κ = λ_max / tr` of a symmetric PSD kernel matrix; lies in `[1/|A|, 1]`.
pub fn spectral_concentration(kernel: &DMatrix<f64>) -> Result<f64> {
    let n = kernel.nrows();
    if n != kernel.ncols() {
        return Err(Error::BadKernel(format!("{}x{} is not square", n, kernel.ncols())));
    }
    if n < 2 {
        return Err(Error::BadKernel("needs at least two actions".into()));
    }
    let scale = kernel.amax().max(1.0);
    for i in 0..n {
        for j in 0..i {
            if (kernel[(i, j)] - kernel[(j, i)]).abs() > 1e-9 * scale {
                return Err(Error::BadKernel(format!("asymmetric at ({i}, {j})")));
            }
        }
    }
    let trace = kernel.trace();
    if !(trace > 0.0) {
        return Err(Error::BadKernel(format!("trace {trace}")));
    }
    let eig = SymmetricEigen::new(kernel.clone());
    let lmax = eig.eigenvalues.max();
    Ok(lmax / trace)
}

/// Rank correlation of a structured prior after oracle-level noise:
/// `ρ₀ / (1 + σ²_obs/(κ·η²))`.
pub fn effective_rho(rho0: f64, kappa: f64, eta2: f64, sigma2_obs: f64) -> f64 {
    rho0 / (1.0 + sigma2_obs / (kappa * eta2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn no_observations_is_identity() {
        let prior = PriorState::new(PriorFamily::Flat, vec![0.3, -0.1], vec![1.0, 0.5], 0.9).unwrap();
        let post = PosteriorState::from_prior(&prior);
        assert_eq!(post.mean, prior.mean);
        assert_eq!(post.variance, prior.variance);
    }

    #[test]
    fn equal_precision_gives_midpoint() {
        let prior = PriorState::new(PriorFamily::Flat, vec![0.2, 0.0], vec![0.1, 0.1], 0.9).unwrap();
        let mut post = PosteriorState::from_prior(&prior);
        post.update(0, 1.0, 0.1).unwrap();
        assert!((post.mean[0] - 0.6).abs() < 1e-12);
        assert!((post.variance[0] - 0.05).abs() < 1e-12);
        assert_eq!(post.mean[1], 0.0);
    }

    #[test]
    fn update_rejects_bad_input() {
        let mut post = PosteriorState::from_prior(&PriorState::flat(2, 1.0));
        assert!(matches!(post.update(0, f64::NAN, 0.1), Err(Error::BadValue(_))));
        assert!(matches!(post.update(0, 1.0, 0.0), Err(Error::BadValue(_))));
        assert!(matches!(post.update(2, 1.0, 0.1), Err(Error::IndexError(_))));
    }

    #[test]
    fn posterior_tracks_sample_mean() {
        let mut post = PosteriorState::from_prior(&PriorState::flat(1 + 1, 1.0));
        let mut rng = stream(5, Purpose::Noise);
        let sigma = 0.3;
        let n = 10_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let z: f64 = rng.sample(StandardNormal);
            let y = 1.5 + sigma * z;
            sum += y;
            post.update(0, y, sigma * sigma).unwrap();
        }
        let sample = sum / n as f64;
        assert!((post.mean[0] - sample).abs() <= 3.0 * sigma / 100.0);
    }

    #[test]
    fn ema_transfer_arithmetic() {
        let prior = PriorState::ema_start(3, 1.0, 0.9);
        let next = prior.ema_transfer(&[(0, 1.0)]).unwrap();
        assert!((next.mean[0] - 0.1).abs() < 1e-12);
        assert_eq!(next.mean[1..], [0.0, 0.0]);

        let frozen = PriorState { alpha: 1.0, ..prior.clone() }.ema_transfer(&[(0, 5.0)]).unwrap();
        assert_eq!(frozen.mean, vec![0.0; 3]);
        let copy = PriorState { alpha: 0.0, ..prior.clone() }.ema_transfer(&[(2, 5.0)]).unwrap();
        assert_eq!(copy.mean[2], 5.0);

        let flat = PriorState::flat(3, 1.0);
        assert!(matches!(flat.ema_transfer(&[]), Err(Error::PreconditionFailed(_))));
    }

    #[test]
    fn oracle_prior_is_cross_context_mean() {
        let t = OracleTable::new(2, 2, vec![1.0, 0.0, 3.0, 2.0], 0.0).unwrap();
        assert_eq!(PriorState::oracle(&t, 1.0).mean, vec![2.0, 1.0]);
    }

    #[test]
    fn structured_prior_interpolates_anchor() {
        let feats = vec![vec![1.0, 0.0, 1.0], vec![1.0, 0.0, 1.0], vec![0.0, 1.0, 0.0]];
        let cfg = StructuredPriorConfig::default();
        let p = make_structured_prior(&feats, &[(0, 0.8)], &cfg).unwrap();
        assert_eq!(p.mean[1], 0.8);
        assert_eq!(p.variance[1], cfg.tau2_min);
        // no shared bits with the anchor: global mean, full variance
        assert_eq!(p.mean[2], 0.8);
        assert_eq!(p.variance[2], cfg.tau2);
    }

    #[test]
    fn structured_prior_fallback_to_global_mean() {
        let feats = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        let p = make_structured_prior(&feats, &[(0, 1.0), (1, 0.0)], &StructuredPriorConfig::default()).unwrap();
        assert_eq!(p.mean[2], 0.5);
        assert_eq!(p.variance[2], 1.0);
    }

    #[test]
    fn structured_prior_tanimoto_weights() {
        // Fingerprints: x0 = 1100, x1 = 0110, x2 = 1110.
        // Tanimoto(x2, x0) = 2/3, Tanimoto(x2, x1) = 2/3, Tanimoto(x0, x1) = 1/3.
        let feats = vec![vec![1.0, 1.0, 0.0, 0.0], vec![0.0, 1.0, 1.0, 0.0], vec![1.0, 1.0, 1.0, 0.0]];
        let anchors = [(0, 1.0), (1, 4.0)];
        let p = make_structured_prior(&feats, &anchors, &StructuredPriorConfig::default()).unwrap();
        // brute-force weighted average
        let w = [2.0 / 3.0, 2.0 / 3.0];
        let expect = (w[0] * 1.0 + w[1] * 4.0) / (w[0] + w[1]);
        assert!((p.mean[2] - expect).abs() < 1e-12);
        assert!((p.variance[2] - (1.0 - 2.0 / 3.0)).abs() < 1e-12);
        // action 0 is its own anchor
        assert_eq!(p.mean[0], 1.0);
    }

    #[test]
    fn structured_prior_errors() {
        let feats = vec![vec![1.0, 0.0], vec![0.0, 0.0]];
        let cfg = StructuredPriorConfig::default();
        assert!(matches!(make_structured_prior(&feats, &[], &cfg), Err(Error::NoAnchors)));
        let cos = StructuredPriorConfig { kernel: Kernel::Cosine, ..cfg };
        assert!(matches!(make_structured_prior(&feats, &[(0, 1.0)], &cos), Err(Error::DegenerateFeature(1))));
    }

    #[test]
    fn spectral_concentration_cases() {
        let eye = DMatrix::<f64>::identity(4, 4);
        assert!((spectral_concentration(&eye).unwrap() - 0.25).abs() < 1e-12);
        let ones = DMatrix::<f64>::from_element(3, 3, 1.0);
        assert!((spectral_concentration(&ones).unwrap() - 1.0).abs() < 1e-12);
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 1.0, 1.0]));
        assert!((spectral_concentration(&d).unwrap() - 0.5).abs() < 1e-12);
        let mut asym = DMatrix::<f64>::identity(2, 2);
        asym[(0, 1)] = 0.5;
        assert!(matches!(spectral_concentration(&asym), Err(Error::BadKernel(_))));
    }

    #[test]
    fn effective_rho_cases() {
        assert_eq!(effective_rho(0.8, 0.3, 1.0, 0.0), 0.8);
        assert!((effective_rho(0.8, 1.0, 1.0, 1.0) - 0.4).abs() < 1e-12);
        assert!(effective_rho(0.8, 0.1, 1.0, 1e9) < 1e-6);
    }

    proptest! {
        #[test]
        fn posterior_variance_shrinks(v in 0.01f64..10.0, s2 in 0.01f64..10.0, ys in prop::collection::vec(-5.0f64..5.0, 1..20)) {
            let prior = PriorState::new(PriorFamily::Flat, vec![0.0], vec![v], 0.9).unwrap();
            let mut post = PosteriorState::from_prior(&prior);
            let mut last = post.variance[0];
            for y in ys {
                post.update(0, y, s2).unwrap();
                prop_assert!(post.variance[0] < last);
                last = post.variance[0];
            }
        }

        #[test]
        fn kappa_in_unit_range(xs in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 3), 2..8)) {
            let k = kernel_matrix(&xs, Kernel::Rbf { lengthscale: 1.0 });
            let kappa = spectral_concentration(&k).unwrap();
            let n = xs.len() as f64;
            prop_assert!(kappa >= 1.0 / n - 1e-9 && kappa <= 1.0 + 1e-9);
        }
    }
}
