//! Deterministic multi-context bandit laboratory.
//!
//! The crate bundles everything needed to study when prior exploitation beats
//! exploration on a discrete action set:
//!
//! - [`oracle`]: ground-truth tables, replay ingestion and noisy observation.
//! - [`surrogate`]: independent-arm Gaussian surrogate, EMA transfer and the prior families.
//! - [`planners`]: acquisition policies, from greedy/UCB to the regime-switching planner.
//! - [`episode`]: the per-context query loop and multi-context chains.
//! - [`prs`]: rank statistics, the Portable Regime Score and regime classification.
//! - [`synthetic`]: controlled-correlation Gaussian bandits and the validation grid.
//! - [`analysis`]: metrics, contrasts, variance decomposition and threshold formulas.
//! - [`theory`]: closed-form results and their Monte-Carlo validators.
//!
//! Every random draw is taken from a stream keyed by indices (see [`rng`]), so
//! results do not depend on how work is scheduled across threads.

pub mod analysis;
pub mod episode;
pub mod error;
pub mod oracle;
pub mod planners;
pub mod prs;
pub mod rng;
pub mod surrogate;
pub mod synthetic;
pub mod theory;

pub use error::{Error, Result};
