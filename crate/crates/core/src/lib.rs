//! Dual-path automatic emergency braking.
//!
//! A rule-based quick path evaluates every tick; a slow reasoning module is
//! consulted on a fixed schedule and its verdict, when fresh, overrides the
//! quick decision. The crate also carries a closed-loop simulator, the
//! metrics used to score runs and a generator for instruction datasets.

// `!(x > 0.0)` style checks reject NaN on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ablation;
pub mod arbiter;
pub mod dataset;
pub mod geometry;
pub mod kinematics;
pub mod metrics;
pub mod rule_aeb;
pub mod scene;
pub mod simulator;
pub mod slow;

pub use arbiter::{Arbiter, ArbiterConfig, BrakeCommand, CommandSource, MetaAction, Mode};
pub use geometry::{OrientedBox, Polygon, Pose2D, Vec2};
pub use kinematics::{bicycle_step, Control, VehicleState};
pub use rule_aeb::{evaluate, AgentTrack, RuleConfig, RuleInputs, Trajectory, TriggerResult};
pub use simulator::{run, Scenario, SimConfig, SimLog};

/// Compiles and runs every snippet in the guide.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub struct Introduction;
    #[doc = include_str!("../../../book/src/geometry.md")]
    pub struct Geometry;
    #[doc = include_str!("../../../book/src/kinematics.md")]
    pub struct Kinematics;
    #[doc = include_str!("../../../book/src/quick-path.md")]
    pub struct QuickPath;
    #[doc = include_str!("../../../book/src/arbitration.md")]
    pub struct Arbitration;
    #[doc = include_str!("../../../book/src/slow-module.md")]
    pub struct SlowModule;
    #[doc = include_str!("../../../book/src/simulation.md")]
    pub struct Simulation;
    #[doc = include_str!("../../../book/src/metrics.md")]
    pub struct Metrics;
    #[doc = include_str!("../../../book/src/dataset.md")]
    pub struct Dataset;
    #[doc = include_str!("../../../book/src/cli.md")]
    pub struct Cli;
}

/// Serializes non-finite floats as `null` and reads `null` back as `+∞`.
pub(crate) mod serde_inf {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}
