//! Ground-truth score tables and the replay environment.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Dense `contexts × actions` table of true scores plus the observation noise
/// level used when the table is replayed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleTable {
    n_contexts: usize,
    n_actions: usize,
    scores: Vec<f64>,
    obs_noise_sd: f64,
    context_ids: Vec<String>,
    action_ids: Vec<String>,
}

impl OracleTable {
    /// Builds a table from row-major scores. Ids default to the indices.
    pub fn new(n_contexts: usize, n_actions: usize, scores: Vec<f64>, obs_noise_sd: f64) -> Result<Self> {
        let context_ids = (0..n_contexts).map(|c| c.to_string()).collect();
        let action_ids = (0..n_actions).map(|a| a.to_string()).collect();
        Self::with_ids(context_ids, action_ids, scores, obs_noise_sd)
    }

    pub fn with_ids(
        context_ids: Vec<String>,
        action_ids: Vec<String>,
        scores: Vec<f64>,
        obs_noise_sd: f64,
    ) -> Result<Self> {
        let n_contexts = context_ids.len();
        let n_actions = action_ids.len();
        if n_contexts < 1 {
            return Err(Error::BadValue("oracle table needs at least one context".into()));
        }
        if n_actions < 2 {
            return Err(Error::BadValue("oracle table needs at least two actions".into()));
        }
        if scores.len() != n_contexts * n_actions {
            return Err(Error::LengthMismatch { left: scores.len(), right: n_contexts * n_actions });
        }
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::BadValue(format!("non-finite score at flat index {i}")));
        }
        if !(obs_noise_sd.is_finite() && obs_noise_sd >= 0.0) {
            return Err(Error::BadValue(format!("observation noise sd {obs_noise_sd}")));
        }
        Ok(Self { n_contexts, n_actions, scores, obs_noise_sd, context_ids, action_ids })
    }

    pub fn n_contexts(&self) -> usize {
        self.n_contexts
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn obs_noise_sd(&self) -> f64 {
        self.obs_noise_sd
    }

    pub fn context_ids(&self) -> &[String] {
        &self.context_ids
    }

    pub fn action_ids(&self) -> &[String] {
        &self.action_ids
    }

    pub fn with_obs_noise_sd(mut self, sd: f64) -> Result<Self> {
        if !(sd.is_finite() && sd >= 0.0) {
            return Err(Error::BadValue(format!("observation noise sd {sd}")));
        }
        self.obs_noise_sd = sd;
        Ok(self)
    }

    fn check(&self, context: usize, action: usize) -> Result<()> {
        if context >= self.n_contexts {
            return Err(Error::IndexError(format!("context {context} of {}", self.n_contexts)));
        }
        if action >= self.n_actions {
            return Err(Error::IndexError(format!("action {action} of {}", self.n_actions)));
        }
        Ok(())
    }

    pub fn score(&self, context: usize, action: usize) -> Result<f64> {
        self.check(context, action)?;
        Ok(self.scores[context * self.n_actions + action])
    }

    /// True scores of one context.
    pub fn context_scores(&self, context: usize) -> &[f64] {
        &self.scores[context * self.n_actions..(context + 1) * self.n_actions]
    }

    /// Draws `score + N(0, obs_noise_sd²)`. Noiseless tables return the score exactly.
    pub fn observe<R: Rng + ?Sized>(&self, context: usize, action: usize, rng: &mut R) -> Result<f64> {
        let s = self.score(context, action)?;
        if self.obs_noise_sd == 0.0 {
            return Ok(s);
        }
        let z: f64 = rng.sample(StandardNormal);
        Ok(s + self.obs_noise_sd * z)
    }

    /// Per-action mean score across all contexts (the oracle prior).
    pub fn cross_context_means(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_actions];
        for c in 0..self.n_contexts {
            for (o, s) in out.iter_mut().zip(self.context_scores(c)) {
                *o += s;
            }
        }
        let k = self.n_contexts as f64;
        out.iter_mut().for_each(|o| *o /= k);
        out
    }

    /// Copy with every context standardized to zero mean and unit variance.
    /// Constant contexts are only centred.
    pub fn standardized(&self) -> Self {
        let mut out = self.clone();
        let n = self.n_actions as f64;
        for c in 0..self.n_contexts {
            let row = &mut out.scores[c * self.n_actions..(c + 1) * self.n_actions];
            let mean = row.iter().sum::<f64>() / n;
            let sd = (row.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
            for x in row.iter_mut() {
                *x -= mean;
                if sd > 0.0 {
                    *x /= sd;
                }
            }
        }
        out
    }

    /// Reads a replay CSV with header `context_id,action_id,score`.
    ///
    /// Contexts and actions are indexed in order of first appearance.
    pub fn load_replay(path: &Path, obs_noise_sd: f64) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        Self::from_replay_reader(file, obs_noise_sd)
    }

    pub fn from_replay_reader<R: Read>(reader: R, obs_noise_sd: f64) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            context_id: String,
            action_id: String,
            score: String,
        }

        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut ctx_index: HashMap<String, usize> = HashMap::new();
        let mut act_index: HashMap<String, usize> = HashMap::new();
        let mut context_ids = Vec::new();
        let mut action_ids = Vec::new();
        let mut cells: HashMap<(usize, usize), f64> = HashMap::new();

        for row in rdr.deserialize() {
            let row: Row = row?;
            let score: f64 = row
                .score
                .parse()
                .map_err(|_| Error::BadValue(format!("score {:?} is not a number", row.score)))?;
            if !score.is_finite() {
                return Err(Error::BadValue(format!(
                    "non-finite score for ({}, {})",
                    row.context_id, row.action_id
                )));
            }
            let c = *ctx_index.entry(row.context_id.clone()).or_insert_with(|| {
                context_ids.push(row.context_id.clone());
                context_ids.len() - 1
            });
            let a = *act_index.entry(row.action_id.clone()).or_insert_with(|| {
                action_ids.push(row.action_id.clone());
                action_ids.len() - 1
            });
            if cells.insert((c, a), score).is_some() {
                return Err(Error::DuplicateCell { context: row.context_id, action: row.action_id });
            }
        }

        let mut scores = Vec::with_capacity(context_ids.len() * action_ids.len());
        for (c, cid) in context_ids.iter().enumerate() {
            for (a, aid) in action_ids.iter().enumerate() {
                match cells.get(&(c, a)) {
                    Some(&s) => scores.push(s),
                    None => {
                        return Err(Error::IncompleteTable { context: cid.clone(), action: aid.clone() })
                    }
                }
            }
        }
        Self::with_ids(context_ids, action_ids, scores, obs_noise_sd)
    }

    /// Reads an `action_id,f1,...,fd` features file aligned to this table's actions.
    pub fn load_features(&self, path: &Path) -> Result<Vec<Vec<f64>>> {
        let file = std::fs::File::open(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        self.features_from_reader(file)
    }

    pub fn features_from_reader<R: Read>(&self, reader: R) -> Result<Vec<Vec<f64>>> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let index: HashMap<&str, usize> =
            self.action_ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
        let mut out: Vec<Option<Vec<f64>>> = vec![None; self.n_actions];
        let mut dim = None;
        for rec in rdr.records() {
            let rec = rec?;
            let id = rec.get(0).unwrap_or_default();
            let Some(&a) = index.get(id) else {
                return Err(Error::IndexError(format!("features for unknown action {id:?}")));
            };
            let v = rec
                .iter()
                .skip(1)
                .map(|f| f.parse::<f64>().map_err(|_| Error::BadValue(format!("feature {f:?}"))))
                .collect::<Result<Vec<f64>>>()?;
            match dim {
                None => dim = Some(v.len()),
                Some(d) if d != v.len() => return Err(Error::LengthMismatch { left: d, right: v.len() }),
                _ => {}
            }
            if out[a].replace(v).is_some() {
                return Err(Error::DuplicateCell { context: "features".into(), action: id.to_string() });
            }
        }
        out.into_iter()
            .enumerate()
            .map(|(a, v)| {
                v.ok_or_else(|| Error::IncompleteTable {
                    context: "features".into(),
                    action: self.action_ids[a].clone(),
                })
            })
            .collect()
    }
}

/// Indices of the `k` best actions of a score vector; ties broken by lowest index.
pub fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Index of the maximum, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}
