//! Ground-truth hazard assessment from privileged world knowledge.
//!
//! The assessment rolls the ego forward along its plan with no braking and
//! the scripted agents along their scripts, looking for the first overlap
//! with a real agent. Ghosts never count; hidden agents always do.

use serde::{Deserialize, Serialize};

use crate::arbiter::MetaAction;
use crate::kinematics::VehicleState;

use super::scenario::Scenario;
use super::world::World;

const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GroundTruthConfig {
    /// Contact within this many seconds requires emergency braking.
    pub t_emergency_gt: f64,
    /// Contact within this many seconds requires a warning.
    pub t_warning_gt: f64,
}

impl Default for GroundTruthConfig {
    fn default() -> Self {
        Self {
            t_emergency_gt: 1.5,
            t_warning_gt: 3.0,
        }
    }
}

impl GroundTruthConfig {
    pub fn classify(&self, time_to_contact: Option<f64>) -> MetaAction {
        match time_to_contact {
            Some(t) if t <= self.t_emergency_gt + TIME_EPS => MetaAction::EmergencyBraking,
            Some(t) if t <= self.t_warning_gt + TIME_EPS => MetaAction::EarlyWarning,
            _ => MetaAction::Normal,
        }
    }

    fn lookahead_steps(&self, dt: f64) -> u64 {
        (self.t_warning_gt / dt + TIME_EPS).floor() as u64
    }
}

/// The action a tick requires, with the contact that motivates it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assessment {
    pub action: MetaAction,
    /// Seconds until the first real contact, if within the warning horizon.
    pub time_to_contact: Option<f64>,
    pub agent: Option<String>,
}

impl Assessment {
    pub fn normal() -> Self {
        Self {
            action: MetaAction::Normal,
            time_to_contact: None,
            agent: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickLabel {
    pub tick: u64,
    pub required_action: MetaAction,
    pub time_to_contact: Option<f64>,
    pub agent: Option<String>,
}

fn first_contact(world: &World, ego: &VehicleState, t: f64) -> Option<String> {
    world.overlaps(ego, t).first().map(|&i| world.agents()[i].id.clone())
}

/// Assesses the hazard facing `ego` at `tick`, assuming it keeps following
/// its plan from here on.
pub fn assess(world: &World, tick: u64, ego: &VehicleState, gt: &GroundTruthConfig) -> Assessment {
    let dt = world.dt();
    let mut state = *ego;
    for j in 0..=gt.lookahead_steps(dt) {
        if j > 0 {
            state = world.follow(&state);
        }
        if let Some(agent) = first_contact(world, &state, world.time(tick + j)) {
            let t = j as f64 * dt;
            return Assessment {
                action: gt.classify(Some(t)),
                time_to_contact: Some(t),
                agent: Some(agent),
            };
        }
    }
    Assessment::normal()
}

/// Labels every tick of the no-brake run of `sc`.
pub fn label_ground_truth(sc: &Scenario, gt: &GroundTruthConfig) -> Vec<TickLabel> {
    let world = World::new(sc.clone());
    let ticks = sc.ticks();
    let look = gt.lookahead_steps(sc.dt);
    let mut ego = sc.ego.initial_state();
    let contacts: Vec<Option<String>> = (0..ticks + look)
        .map(|n| {
            if n > 0 {
                ego = world.follow(&ego);
            }
            first_contact(&world, &ego, world.time(n))
        })
        .collect();
    (0..ticks)
        .map(|tick| {
            let hit = (tick..=tick + look).find_map(|n| contacts[n as usize].as_ref().map(|a| (n, a)));
            let time_to_contact = hit.map(|(n, _)| (n - tick) as f64 * sc.dt);
            TickLabel {
                tick,
                required_action: gt.classify(time_to_contact),
                time_to_contact,
                agent: hit.map(|(_, a)| a.clone()),
            }
        })
        .collect()
}
