//! Batch evaluation over scenarios, modes, seeds and trigger intervals.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arbiter::Mode;
use crate::metrics::{aggregate, driving_metrics, log_confusion, precision_recall, ConfusionMatrix, Granularity};
use crate::simulator::{run, Scenario, SimConfig, SimError, SimLog};
use crate::slow::{InProcessMock, SlowTransport};

/// Builds the transport for one run.
pub type TransportFactory = dyn Fn(&Scenario, &SimConfig) -> Box<dyn SlowTransport> + Sync;

pub fn in_process(sc: &Scenario, cfg: &SimConfig) -> Box<dyn SlowTransport> {
    Box::new(InProcessMock::new(sc, cfg.ground_truth))
}

#[derive(Debug, Error)]
pub enum AblationError {
    #[error("no modes selected")]
    NoModes,
    #[error("no scenarios selected")]
    NoScenarios,
    #[error("no trigger intervals selected")]
    NoIntervals,
    #[error("{} run(s) failed: {}", .0.len(), .0.iter().map(|(n, e)| format!("{n}: {e}")).collect::<Vec<_>>().join("; "))]
    Runs(Vec<(String, SimError)>),
    #[error("thread pool: {0}")]
    Pool(String),
}

/// Runs every `(scenario, config)` pair on up to `jobs` threads, results in
/// input order.
pub fn run_batch(
    scenarios: &[Scenario],
    configs: &[SimConfig],
    jobs: usize,
    transport: &TransportFactory,
) -> Result<Vec<SimLog>, AblationError> {
    let pairs: Vec<(&Scenario, &SimConfig)> = configs.iter().flat_map(|c| scenarios.iter().map(move |s| (s, c))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| AblationError::Pool(e.to_string()))?;
    let results: Vec<Result<SimLog, (String, SimError)>> = pool.install(|| {
        pairs
            .par_iter()
            .map(|(sc, cfg)| {
                let mut t = transport(sc, cfg);
                run(sc, cfg, t.as_mut()).map_err(|e| (format!("{} [{}]", sc.name, cfg.mode), e))
            })
            .collect()
    });
    let (ok, failed): (Vec<_>, Vec<_>) = results.into_iter().partition(Result::is_ok);
    if !failed.is_empty() {
        return Err(AblationError::Runs(failed.into_iter().filter_map(Result::err).collect()));
    }
    Ok(ok.into_iter().filter_map(Result::ok).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub mode: Mode,
    pub trigger_interval: f64,
    pub runs: usize,
    pub driving_score: f64,
    pub success_rate: f64,
    pub collision_rate: f64,
    pub precision: f64,
    pub recall: f64,
}

pub const ABLATION_CSV_HEADER: &str = "mode,trigger_interval,runs,driving_score,success_rate,collision_rate,precision,recall";

impl AblationRow {
    pub fn from_logs(mode: Mode, trigger_interval: f64, logs: &[SimLog]) -> Self {
        let metrics: Vec<_> = logs.iter().map(driving_metrics).collect();
        let agg = aggregate(&metrics).expect("at least one run per row");
        let mut cm = ConfusionMatrix::default();
        for log in logs {
            cm.merge(&log_confusion(log, Granularity::Decision));
        }
        let (precision, recall) = precision_recall(&cm);
        Self {
            mode,
            trigger_interval,
            runs: agg.runs,
            driving_score: agg.driving_score,
            success_rate: agg.success_rate,
            collision_rate: agg.collision_rate,
            precision,
            recall,
        }
    }

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{:.4},{:.4},{:.4},{:.4},{:.4}",
            self.mode, self.trigger_interval, self.runs, self.driving_score, self.success_rate, self.collision_rate, self.precision, self.recall
        )
    }
}

pub fn rows_to_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from(ABLATION_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    out
}

fn seeded(base: &SimConfig, seeds: &[u64]) -> Vec<SimConfig> {
    if seeds.is_empty() {
        return vec![base.clone()];
    }
    seeds
        .iter()
        .map(|&seed| SimConfig {
            seed,
            ..base.clone()
        })
        .collect()
}

/// One row per mode, aggregated over every scenario and seed.
pub fn ablation(
    scenarios: &[Scenario],
    modes: &[Mode],
    seeds: &[u64],
    base: &SimConfig,
    jobs: usize,
    transport: &TransportFactory,
) -> Result<Vec<AblationRow>, AblationError> {
    if modes.is_empty() {
        return Err(AblationError::NoModes);
    }
    if scenarios.is_empty() {
        return Err(AblationError::NoScenarios);
    }
    modes
        .iter()
        .map(|&mode| {
            let configs = seeded(&base.clone().with_mode(mode), seeds);
            let logs = run_batch(scenarios, &configs, jobs, transport)?;
            Ok(AblationRow::from_logs(mode, base.arbiter.trigger_interval, &logs))
        })
        .collect()
}

/// One row per trigger interval for `mode`.
pub fn interval_sweep(
    scenarios: &[Scenario],
    intervals: &[f64],
    mode: Mode,
    seeds: &[u64],
    base: &SimConfig,
    jobs: usize,
    transport: &TransportFactory,
) -> Result<Vec<AblationRow>, AblationError> {
    if intervals.is_empty() {
        return Err(AblationError::NoIntervals);
    }
    if scenarios.is_empty() {
        return Err(AblationError::NoScenarios);
    }
    intervals
        .iter()
        .map(|&interval| {
            let mut cfg = base.clone().with_mode(mode);
            cfg.arbiter.trigger_interval = interval;
            let logs = run_batch(scenarios, &seeded(&cfg, seeds), jobs, transport)?;
            Ok(AblationRow::from_logs(mode, interval, &logs))
        })
        .collect()
}
