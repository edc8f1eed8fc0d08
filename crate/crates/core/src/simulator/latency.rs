//! Slow-path reply latency, counted in simulation ticks.
//!
//! A request sent at tick `n` with latency `L` is delivered to the mailbox
//! at the start of tick `n + L`. Latency is at least one tick.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum LatencyModel {
    Constant { ticks: u64 },
    /// Uniform over `[min, max]` ticks, drawn from the run seed.
    Uniform { min: u64, max: u64 },
    /// Explicit latency per request id, `default` for the rest.
    PerRequest { ticks: BTreeMap<u64, u64>, default: u64 },
}

impl Default for LatencyModel {
    fn default() -> Self {
        LatencyModel::Constant { ticks: 1 }
    }
}

impl LatencyModel {
    pub fn validate(&self) -> Result<(), String> {
        match self {
            LatencyModel::Constant { ticks } if *ticks == 0 => Err("latency must be at least one tick".into()),
            LatencyModel::Uniform { min, max } if *min == 0 || min > max => Err("uniform latency needs 1 <= min <= max".into()),
            LatencyModel::PerRequest { ticks, default } if *default == 0 || ticks.values().any(|&t| t == 0) => {
                Err("latency must be at least one tick".into())
            }
            _ => Ok(()),
        }
    }
}

/// Seeded draw of per-request latencies.
#[derive(Debug, Clone)]
pub struct LatencySampler {
    model: LatencyModel,
    rng: ChaCha8Rng,
}

impl LatencySampler {
    pub fn new(model: LatencyModel, seed: u64) -> Self {
        Self {
            model,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn sample(&mut self, request_id: u64) -> u64 {
        let ticks = match &self.model {
            LatencyModel::Constant { ticks } => *ticks,
            LatencyModel::Uniform { min, max } => self.rng.gen_range(*min..=*max),
            LatencyModel::PerRequest { ticks, default } => ticks.get(&request_id).copied().unwrap_or(*default),
        };
        ticks.max(1)
    }
}
