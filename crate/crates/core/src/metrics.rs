//! Decision quality and closed-loop driving metrics.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arbiter::MetaAction;
use crate::simulator::SimLog;

/// Per-collision multiplicative penalty on the driving score.
pub const COLLISION_PENALTY: f64 = 0.6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("prediction and truth lengths differ ({pred} vs {truth})")]
    LengthMismatch { pred: usize, truth: usize },
    #[error("no results to aggregate")]
    Empty,
}

/// Counts with emergency braking as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn record(&mut self, pred: MetaAction, truth: MetaAction) {
        let p = pred == MetaAction::EmergencyBraking;
        let t = truth == MetaAction::EmergencyBraking;
        match (p, t) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.tn += other.tn;
        self.fn_ += other.fn_;
    }
}

pub fn confusion(pred: &[MetaAction], truth: &[MetaAction]) -> Result<ConfusionMatrix, MetricsError> {
    if pred.len() != truth.len() {
        return Err(MetricsError::LengthMismatch {
            pred: pred.len(),
            truth: truth.len(),
        });
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &t) in pred.iter().zip(truth) {
        cm.record(p, t);
    }
    Ok(cm)
}

/// `(tp / (tp + fp), tp / (tp + fn))`, each 1.0 when its denominator is 0.
pub fn precision_recall(cm: &ConfusionMatrix) -> (f64, f64) {
    let ratio = |den: u64| if den == 0 { 1.0 } else { cm.tp as f64 / den as f64 };
    (ratio(cm.tp + cm.fp), ratio(cm.tp + cm.fn_))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrivingMetrics {
    pub driving_score: f64,
    pub success: bool,
    pub collisions: u64,
    pub route_completion: f64,
}

/// `100 × completion × 0.6^collisions`.
pub fn driving_score(route_completion: f64, collisions: u64) -> f64 {
    100.0 * route_completion.clamp(0.0, 1.0) * COLLISION_PENALTY.powi(collisions.min(i32::MAX as u64) as i32)
}

/// Distinct collisions: each maximal run of consecutive ticks in which one
/// agent overlaps the ego counts once.
pub fn count_collisions(log: &SimLog) -> u64 {
    let mut previous: BTreeSet<&str> = BTreeSet::new();
    let mut count = 0;
    for record in &log.ticks {
        let current: BTreeSet<&str> = record.overlaps.iter().map(String::as_str).collect();
        count += current.difference(&previous).count() as u64;
        previous = current;
    }
    count
}

pub fn driving_metrics(log: &SimLog) -> DrivingMetrics {
    let collisions = count_collisions(log);
    let goal = log.summary.goal_reached;
    let route_completion = if goal { 1.0 } else { log.summary.route_completion };
    DrivingMetrics {
        driving_score: driving_score(route_completion, collisions),
        success: goal && collisions == 0,
        collisions,
        route_completion,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub runs: usize,
    pub driving_score: f64,
    /// Percent of runs that succeeded.
    pub success_rate: f64,
    /// Collisions per run.
    pub collision_rate: f64,
}

pub fn aggregate(results: &[DrivingMetrics]) -> Result<Aggregate, MetricsError> {
    if results.is_empty() {
        return Err(MetricsError::Empty);
    }
    let n = results.len() as f64;
    Ok(Aggregate {
        runs: results.len(),
        driving_score: results.iter().map(|r| r.driving_score).sum::<f64>() / n,
        success_rate: results.iter().filter(|r| r.success).count() as f64 / n * 100.0,
        collision_rate: results.iter().map(|r| r.collisions).sum::<u64>() as f64 / n,
    })
}

/// Unit over which decisions are compared with ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    /// Ticks where a slow reply took effect, or, for modes without a slow
    /// path, the ticks where one would have been consulted.
    Decision,
    Tick,
}

/// `(predicted, required)` action pairs of a run.
pub fn decision_pairs(log: &SimLog, granularity: Granularity) -> (Vec<MetaAction>, Vec<MetaAction>) {
    let pairs = |r: &crate::simulator::TickRecord| (r.command.action, r.required.action);
    let selected: Vec<_> = match granularity {
        Granularity::Tick => log.ticks.iter().map(pairs).collect(),
        Granularity::Decision if log.mode().uses_slow() => log.ticks.iter().filter(|r| !r.applied.is_empty()).map(pairs).collect(),
        Granularity::Decision => {
            let grid = crate::arbiter::schedule_ticks(log.ticks.len() as u64, log.header.scenario.dt, log.header.config.arbiter.trigger_interval);
            grid.iter().map(|&t| pairs(&log.ticks[t as usize])).collect()
        }
    };
    selected.into_iter().unzip()
}

pub fn log_confusion(log: &SimLog, granularity: Granularity) -> ConfusionMatrix {
    let (pred, truth) = decision_pairs(log, granularity);
    confusion(&pred, &truth).expect("pairs have equal length")
}

/// One row of the evaluation table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub scenario: String,
    pub mode: String,
    pub driving_score: f64,
    pub success: bool,
    pub collisions: u64,
    pub precision: f64,
    pub recall: f64,
}

pub const EVAL_CSV_HEADER: &str = "scenario,mode,driving_score,success,collisions,precision,recall";

impl EvalRow {
    pub fn from_log(log: &SimLog, granularity: Granularity) -> Self {
        let d = driving_metrics(log);
        let (precision, recall) = precision_recall(&log_confusion(log, granularity));
        Self {
            scenario: log.scenario_name().to_string(),
            mode: log.mode().name().to_string(),
            driving_score: d.driving_score,
            success: d.success,
            collisions: d.collisions,
            precision,
            recall,
        }
    }

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{:.4},{},{},{:.4},{:.4}",
            self.scenario, self.mode, self.driving_score, self.success, self.collisions, self.precision, self.recall
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use MetaAction::*;

    #[test]
    fn confusion_examples() {
        let cm = confusion(&[EmergencyBraking, EmergencyBraking, Normal], &[EmergencyBraking, EmergencyBraking, Normal]).unwrap();
        assert_eq!(cm, ConfusionMatrix { tp: 2, fp: 0, tn: 1, fn_: 0 });
        assert_eq!(confusion(&[EmergencyBraking], &[Normal]).unwrap().fp, 1);
        assert_eq!(confusion(&[EarlyWarning], &[EmergencyBraking]).unwrap().fn_, 1);
        assert!(confusion(&[Normal], &[]).is_err());
    }

    #[test]
    fn precision_recall_examples() {
        let pr = |tp, fp, fn_| precision_recall(&ConfusionMatrix { tp, fp, tn: 0, fn_ });
        assert_eq!(pr(1, 0, 0), (1.0, 1.0));
        assert_eq!(pr(3, 1, 2), (0.75, 0.6));
        assert_eq!(pr(0, 0, 0), (1.0, 1.0));
        assert_eq!(pr(0, 2, 0), (0.0, 1.0));
    }

    #[test]
    fn score_formula() {
        assert_eq!(driving_score(1.0, 0), 100.0);
        assert!((driving_score(1.0, 1) - 60.0).abs() < 1e-12);
        assert!((driving_score(0.4, 0) - 40.0).abs() < 1e-12);
        assert_eq!(driving_score(0.0, 0), 0.0);
    }

    #[test]
    fn aggregate_examples() {
        let m = |score, collisions, success| DrivingMetrics {
            driving_score: score,
            success,
            collisions,
            route_completion: 1.0,
        };
        let a = aggregate(&[m(100.0, 0, true), m(60.0, 1, false)]).unwrap();
        assert_eq!((a.driving_score, a.success_rate, a.collision_rate), (80.0, 50.0, 0.5));
        let a = aggregate(&[m(100.0, 0, true)]).unwrap();
        assert_eq!((a.driving_score, a.success_rate, a.collision_rate), (100.0, 100.0, 0.0));
        let ten = vec![m(60.0, 1, false); 10];
        assert_eq!(aggregate(&ten).unwrap().collision_rate, 1.0);
        assert_eq!(aggregate(&[]), Err(MetricsError::Empty));
    }
}
