//! Subcommand implementations. Each writes its files into `out_dir`.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use regime_core::analysis::{
    exploration_advantage, mixture_weight, prior_benefit, regime_accuracy, winner_from_advantage, AccuracyReport,
    ConditionRow, Stat, ThresholdRule,
};
use regime_core::episode::{run_chain, EpisodeConfig, RunRecord};
use regime_core::oracle::OracleTable;
use regime_core::planners::PlannerKind;
use regime_core::prs::{classify_regime, in_boundary_zone, pilot_prs, spearman, DEFAULT_THETA};
use regime_core::synthetic::{default_grid_planners, grid_rows, run_grid, write_grid_csv};
use regime_core::theory::{default_validators, run_validators, Validator};
use serde::{Deserialize, Serialize};

use crate::config::{AnalyzeConfig, ExperimentConfig, OracleConfig};
use crate::protocol::{protocol_block, ConditionSummary};
use crate::{CliError, CliResult};

pub const CONDITIONS_FILE: &str = "conditions.jsonl";

fn create(path: &Path) -> CliResult<fs::File> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::File::create(path).map_err(|e| CliError::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> CliResult<()> {
    create(path)?.write_all(bytes).map_err(|e| CliError::io(path, e))
}

fn json_line<T: Serialize>(buf: &mut Vec<u8>, value: &T) -> CliResult<()> {
    serde_json::to_writer(&mut *buf, value).map_err(|e| CliError::Config(e.to_string()))?;
    buf.push(b'\n');
    Ok(())
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> CliResult<()> {
    let mut buf = Vec::new();
    for it in items {
        json_line(&mut buf, it)?;
    }
    write_bytes(path, &buf)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Config(e.to_string()))?;
    s.push('\n');
    write_bytes(path, s.as_bytes())
}

pub fn read_summaries(path: &Path) -> CliResult<Vec<ConditionSummary>> {
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| CliError::Config(format!("{}:{}: {e}", path.display(), i + 1)))?,
        );
    }
    if out.is_empty() {
        return Err(CliError::Config(format!("{} has no condition rows", path.display())));
    }
    Ok(out)
}

fn summary_input(cfg: &ExperimentConfig) -> PathBuf {
    cfg.analyze.input.clone().unwrap_or_else(|| cfg.output_dir.join(CONDITIONS_FILE))
}

/// Replay run: one chain per planner over every context of the table.
///
/// Writes `records.jsonl`, `summary.csv` and `conditions.jsonl`.
pub fn cmd_run(cfg: &ExperimentConfig) -> CliResult<()> {
    let Some(OracleConfig::Replay { path, features, obs_noise_sd, standardize }) = &cfg.oracle else {
        return Err(CliError::Config("run needs [oracle] kind = \"replay\"; use grid for synthetic sweeps".into()));
    };
    let episode = cfg.episode.clone().ok_or_else(|| CliError::Config("run needs an [episode] section".into()))?;
    if cfg.planners.is_empty() {
        return Err(CliError::Config("no [[planners]] given".into()));
    }
    let mut table = OracleTable::load_replay(path, *obs_noise_sd)?;
    if *standardize {
        table = table.standardized();
    }
    let feats = features.as_ref().map(|f| table.load_features(f)).transpose()?;
    episode.validate(table.n_actions()).map_err(|e| CliError::Config(e.to_string()))?;
    for p in &cfg.planners {
        p.validate().map_err(|e| CliError::Config(e.to_string()))?;
    }

    let mut per_planner: Vec<(String, Vec<RunRecord>)> = Vec::new();
    for p in &cfg.planners {
        // one seed for every planner: paired comparisons share warm starts and noise
        let recs = run_chain(&table, p, &episode, feats.as_deref(), cfg.master_seed)?;
        per_planner.push((p.label(), recs));
    }
    let summary = replay_summary(cfg, path, &table, &episode, &per_planner)?;

    let out = &cfg.output_dir;
    let mut buf = Vec::new();
    for (_, recs) in &per_planner {
        for r in recs {
            json_line(&mut buf, r)?;
        }
    }
    write_bytes(&out.join("records.jsonl"), &buf)?;
    write_summary_csv(&out.join("summary.csv"), &summary)?;
    write_jsonl(&out.join(CONDITIONS_FILE), std::slice::from_ref(&summary))
}

fn replay_summary(
    cfg: &ExperimentConfig,
    path: &Path,
    table: &OracleTable,
    episode: &EpisodeConfig,
    per_planner: &[(String, Vec<RunRecord>)],
) -> CliResult<ConditionSummary> {
    let n = table.n_actions();
    let budget = episode.budget;
    let mut hit = BTreeMap::new();
    let mut auc = BTreeMap::new();
    for (label, recs) in per_planner {
        hit.insert(label.clone(), Stat::from_values(recs.iter().map(|r| f64::from(r.hit1()))));
        auc.insert(label.clone(), Stat::from_values(recs.iter().map(|r| r.discovery_auc)));
    }
    // ρ comes from the greedy planner's queries when it ran, else the first planner's
    let pilot_idx = cfg.planners.iter().position(|p| p.kind == PlannerKind::Greedy).unwrap_or(0);
    let (pilot_label, pilot_recs) = &per_planner[pilot_idx];
    let pilot = pilot_prs(pilot_recs, budget, n)?;
    let advantage = exploration_advantage(&hit, "ucb", "greedy").ok();
    let benchmark_id = path.file_stem().map_or_else(|| "replay".to_string(), |s| s.to_string_lossy().into_owned());
    let row = ConditionRow {
        benchmark_id,
        n_actions: n,
        budget,
        b_ratio: budget as f64 / n as f64,
        tau2: None,
        sigma2: None,
        rho: pilot.rho.unwrap_or(0.0),
        prs: pilot.prs,
        prior_benefit: prior_benefit(&hit, "rank_greedy", "random").ok(),
        per_planner_hit: hit,
        per_planner_auc: auc,
        predicted_winner: classify_regime(pilot.prs, DEFAULT_THETA, table.n_contexts(), budget, n).predicted,
        empirical_winner: advantage.map(|a| winner_from_advantage(a.mean, cfg.analyze.tie_epsilon)),
        advantage,
        in_boundary_zone: in_boundary_zone(pilot.prs),
    };
    Ok(ConditionSummary {
        row,
        n_contexts: table.n_contexts(),
        prior_family: episode.prior_family.to_string(),
        pilot_planner: Some(pilot_label.clone()),
        rho_measured: !pilot.fallback_used,
    })
}

fn write_summary_csv(path: &Path, s: &ConditionSummary) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::Config(e.to_string());
    w.write_record([
        "planner", "n_contexts", "n_actions", "B", "b_ratio", "prior_family", "rho", "prs", "hit1_mean", "hit1_sem",
        "auc_mean", "auc_sem",
    ])
    .map_err(csv_err)?;
    let r = &s.row;
    for (planner, h) in &r.per_planner_hit {
        let a = r.per_planner_auc[planner];
        w.write_record([
            planner.clone(),
            s.n_contexts.to_string(),
            r.n_actions.to_string(),
            r.budget.to_string(),
            r.b_ratio.to_string(),
            s.prior_family.clone(),
            if s.rho_measured { r.rho.to_string() } else { "unmeasured".into() },
            r.prs.to_string(),
            h.mean.to_string(),
            h.sem.to_string(),
            a.mean.to_string(),
            a.sem.to_string(),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Config(e.to_string()))?;
    write_bytes(path, &bytes)
}

/// Synthetic sweep. Writes `grid.csv` and `conditions.jsonl`.
pub fn cmd_grid(cfg: &ExperimentConfig) -> CliResult<()> {
    let Some(OracleConfig::Synthetic { grid }) = &cfg.oracle else {
        return Err(CliError::Config("grid needs [oracle] kind = \"synthetic\"".into()));
    };
    let mut spec = grid.clone();
    spec.master_seed = cfg.master_seed;
    spec.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let planners = if cfg.planners.is_empty() { default_grid_planners() } else { cfg.planners.clone() };
    for p in &planners {
        p.validate().map_err(|e| CliError::Config(e.to_string()))?;
    }
    let results = run_grid(&spec, &planners, cfg.workers.resolve())?;
    let rows = grid_rows(&results);

    let mut csv = Vec::new();
    write_grid_csv(&rows, &mut csv)?;
    write_bytes(&cfg.output_dir.join("grid.csv"), &csv)?;
    let summaries: Vec<ConditionSummary> = rows
        .into_iter()
        .map(|row| ConditionSummary { row, n_contexts: 1, prior_family: "synthetic".into(), pilot_planner: None, rho_measured: true })
        .collect();
    write_jsonl(&cfg.output_dir.join(CONDITIONS_FILE), &summaries)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub n_conditions: usize,
    pub prs_rule: Option<AccuracyReport>,
    pub noise_ratio_rule: Option<AccuracyReport>,
    /// Spearman r between PRS and the prior-benefit column.
    pub spearman_prs_prior_benefit: Option<f64>,
    /// Spearman r between PRS and the exploration advantage.
    pub spearman_prs_advantage: Option<f64>,
}

/// Regime accuracy and correlations with the advantage recomputed as
/// `Hit@1(explore) − Hit@1(greedy)` from each row's per-planner results.
pub fn analyze_rows(rows: &[ConditionRow], cfg: &AnalyzeConfig) -> AnalysisReport {
    let (theta, c, tie_epsilon) = (cfg.theta, cfg.c, cfg.tie_epsilon);
    let rows: Vec<ConditionRow> = rows
        .iter()
        .map(|r| {
            let mut r = r.clone();
            r.advantage = exploration_advantage(&r.per_planner_hit, &cfg.explore_planner, &cfg.greedy_planner).ok();
            r.empirical_winner = r.advantage.map(|a| winner_from_advantage(a.mean, tie_epsilon));
            r
        })
        .collect();
    let contrasted: Vec<ConditionRow> = rows.iter().filter(|r| r.advantage.is_some()).cloned().collect();
    let prs_rule = (!contrasted.is_empty())
        .then(|| regime_accuracy(&contrasted, &ThresholdRule::Prs { theta }, tie_epsilon).ok())
        .flatten();
    let noise_ratio_rule = contrasted
        .iter()
        .all(|r| r.tau2.is_some() && r.sigma2.is_some())
        .then(|| regime_accuracy(&contrasted, &ThresholdRule::NoiseRatio { c }, tie_epsilon).ok())
        .flatten()
        .filter(|_| !contrasted.is_empty());
    let corr = |pairs: Vec<(f64, f64)>| {
        let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        spearman(&x, &y).ok()
    };
    AnalysisReport {
        n_conditions: rows.len(),
        prs_rule,
        noise_ratio_rule,
        spearman_prs_prior_benefit: corr(rows.iter().filter_map(|r| r.prior_benefit.map(|b| (r.prs, b))).collect()),
        spearman_prs_advantage: corr(rows.iter().filter_map(|r| r.advantage.map(|a| (r.prs, a.mean))).collect()),
    }
}

/// Regime analysis of condition summaries. Writes `analysis.json` and `regime_map.csv`.
pub fn cmd_analyze(cfg: &ExperimentConfig) -> CliResult<()> {
    let summaries = read_summaries(&summary_input(cfg))?;
    let rows: Vec<ConditionRow> = summaries.into_iter().map(|s| s.row).collect();
    let a = &cfg.analyze;
    let report = analyze_rows(&rows, a);
    write_json(&cfg.output_dir.join("analysis.json"), &report)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::Config(e.to_string());
    w.write_record([
        "benchmark_id", "b_ratio", "rho", "prs", "advantage", "advantage_sem", "predicted", "empirical", "in_boundary_zone",
    ])
    .map_err(csv_err)?;
    for r in &rows {
        let adv = exploration_advantage(&r.per_planner_hit, &a.explore_planner, &a.greedy_planner).ok();
        let pred = classify_regime(r.prs, a.theta, 1, r.budget, r.n_actions).predicted;
        let (adv, sem, emp) = match adv {
            Some(s) => (s.mean.to_string(), s.sem.to_string(), winner_from_advantage(s.mean, a.tie_epsilon).to_string()),
            None => (String::new(), String::new(), String::new()),
        };
        w.write_record([
            r.benchmark_id.clone(),
            r.b_ratio.to_string(),
            r.rho.to_string(),
            r.prs.to_string(),
            adv,
            sem,
            pred.to_string(),
            emp,
            r.in_boundary_zone.to_string(),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Config(e.to_string()))?;
    write_bytes(&cfg.output_dir.join("regime_map.csv"), &bytes)
}

/// Runs `validators` and writes `validation.jsonl`; fails with the count of failed checks.
pub fn validate_with(validators: &[Validator], out_dir: &Path) -> CliResult<()> {
    let results = run_validators(validators);
    write_jsonl(&out_dir.join("validation.jsonl"), &results)?;
    let failed = results.iter().filter(|r| !r.pass).count();
    if failed > 0 {
        return Err(CliError::ValidationFailed(failed));
    }
    Ok(())
}

pub fn cmd_validate(cfg: &ExperimentConfig) -> CliResult<()> {
    validate_with(&default_validators(cfg.master_seed), &cfg.output_dir)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureReport {
    pub cate_low: f64,
    pub cate_high: f64,
    pub target: f64,
    /// Weight on the high-PRS benchmark.
    pub lambda: f64,
    pub ate: f64,
}

/// Benchmark mixture that drives the average treatment effect to the target. Writes `mixture.json`.
pub fn cmd_mixture(cfg: &ExperimentConfig) -> CliResult<()> {
    let m = cfg.mixture.as_ref().ok_or_else(|| CliError::Config("mixture needs a [mixture] section".into()))?;
    let lambda = mixture_weight(m.cate_low, m.cate_high, m.target)?;
    let report = MixtureReport {
        cate_low: m.cate_low,
        cate_high: m.cate_high,
        target: m.target,
        lambda,
        ate: lambda * m.cate_high + (1.0 - lambda) * m.cate_low,
    };
    write_json(&cfg.output_dir.join("mixture.json"), &report)
}

/// Minimum-reporting block per condition. Writes `protocol.jsonl`.
pub fn cmd_report_protocol(cfg: &ExperimentConfig) -> CliResult<()> {
    let summaries = read_summaries(&summary_input(cfg))?;
    let blocks: Vec<_> = summaries.iter().map(|s| protocol_block(s, cfg.analyze.theta)).collect();
    write_jsonl(&cfg.output_dir.join("protocol.jsonl"), &blocks)
}
