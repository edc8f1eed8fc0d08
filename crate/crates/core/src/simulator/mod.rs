//! Deterministic closed-loop simulation.
//!
//! Each tick: deliver due slow replies, perceive, step the arbiter, send any
//! outbound request, record, then advance the ego. Agents follow their
//! scripts as closed-form functions of time.

pub mod latency;
pub mod log;
pub mod oracle;
pub mod scenario;
pub mod suite;
pub mod world;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arbiter::{Arbiter, ArbiterConfig, ArbiterError, MetaAction, Mode};
use crate::kinematics::{bicycle_step, Control, VehicleState};
use crate::rule_aeb::{RuleConfig, RuleInputs};
use crate::scene::{scene_summary, Sighting};
use crate::slow::{EgoSummary, InProcessMock, SlowRequest, SlowTransport};

pub use latency::{LatencyModel, LatencySampler};
pub use log::{AgentDescriptor, AgentSnapshot, Event, LogHeader, RunSummary, ScenarioMeta, SentRequest, SimLog, TickRecord, TriggerSummary};
pub use oracle::{assess, label_ground_truth, Assessment, GroundTruthConfig, TickLabel};
pub use scenario::{Scenario, ScenarioError};
pub use world::World;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub mode: Mode,
    pub seed: u64,
    pub arbiter: ArbiterConfig,
    pub rule: RuleConfig,
    pub latency: LatencyModel,
    pub ground_truth: GroundTruthConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Dual,
            seed: 0,
            arbiter: ArbiterConfig::default(),
            rule: RuleConfig::default(),
            latency: LatencyModel::default(),
            ground_truth: GroundTruthConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Arbiter(#[from] ArbiterError),
    #[error("latency model: {0}")]
    Latency(String),
    #[error("tick {tick}: {source}")]
    Step {
        tick: u64,
        #[source]
        source: ArbiterError,
    },
}

fn header(world: &World, cfg: &SimConfig) -> LogHeader {
    let sc = world.scenario();
    LogHeader {
        format_version: log::LOG_FORMAT_VERSION,
        scenario: ScenarioMeta {
            name: sc.name.clone(),
            description: sc.description.clone(),
            seed: sc.seed,
            dt: sc.dt,
            duration: sc.duration,
            ticks: sc.ticks(),
            environment: sc.environment.clone(),
            camera: sc.camera,
            goal: world.goal(),
            ego_length: sc.ego.length,
            ego_width: sc.ego.width,
        },
        agents: sc
            .agents
            .iter()
            .map(|a| AgentDescriptor {
                id: a.id.clone(),
                kind: a.kind,
                description: a.description(),
                length: a.length,
                width: a.width,
                height: a.height(),
                ghost: a.ghost,
                hidden_until: a.hidden_until,
                signal: a.signal,
                intention: a.intention.clone(),
            })
            .collect(),
        config: cfg.clone(),
    }
}

/// Scene summary of the agents in camera view. Ghosts are visible, occluded
/// agents are not.
pub fn camera_view(world: &World, ego: &VehicleState, t: f64) -> Vec<crate::slow::SceneObject> {
    let sc = world.scenario();
    let sightings = sc.agents.iter().enumerate().filter(|(_, a)| !a.hidden_at(t)).map(|(i, a)| Sighting {
        id: &a.id,
        description: a.description(),
        bbox: world.agent_box(i, t),
        height: a.height(),
        signal: a.signal,
    });
    scene_summary(&sc.camera, &ego.pose, sightings)
}

pub fn ego_summary(ego: &VehicleState) -> EgoSummary {
    EgoSummary {
        x: ego.pose.x,
        y: ego.pose.y,
        heading: ego.pose.heading,
        speed: ego.speed,
    }
}

/// Runs `sc` in closed loop. The transport only carries slow-path traffic;
/// it is not recorded, so any transport serving the same replies yields the
/// same log.
pub fn run(sc: &Scenario, cfg: &SimConfig, transport: &mut dyn SlowTransport) -> Result<SimLog, SimError> {
    sc.validate()?;
    cfg.latency.validate().map_err(SimError::Latency)?;
    let mut cfg = cfg.clone();
    cfg.rule.dt = sc.dt;
    let world = World::new(sc.clone());
    let mut arbiter = Arbiter::new(cfg.mode, cfg.arbiter, cfg.rule)?;
    let mut latency = LatencySampler::new(cfg.latency.clone(), cfg.seed ^ sc.seed);
    let area = sc.map.drivable_area.clone();

    let mut ego = sc.ego.initial_state();
    let mut pending: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
    let mut touching: BTreeSet<String> = BTreeSet::new();
    let mut ticks = Vec::new();
    let mut events = Vec::new();
    let mut goal_tick = None;
    let mut best_completion: f64 = 0.0;

    for tick in 0..sc.ticks() {
        let t = world.time(tick);

        let mailbox: Vec<_> = pending
            .remove(&tick)
            .unwrap_or_default()
            .into_iter()
            .filter_map(|id| transport.collect(id))
            .collect();

        let overlaps: Vec<String> = world.overlaps(&ego, t).into_iter().map(|i| sc.agents[i].id.clone()).collect();
        for id in &overlaps {
            if !touching.contains(id) {
                events.push(Event::Collision { tick, agent: id.clone() });
            }
        }
        touching = overlaps.iter().cloned().collect();

        let tracks = world.perceived_tracks(t);
        let inputs = RuleInputs {
            ego_box: world.ego_box(&ego),
            ego_state: ego,
            others: tracks,
            plan: world.plan(&ego, cfg.rule.horizon_steps),
            area: area.clone(),
            dt: cfg.rule.dt,
            horizon_steps: cfg.rule.horizon_steps,
            t_threshold: cfg.rule.t_threshold,
        };
        let step = arbiter.step(tick, &inputs, mailbox.clone()).map_err(|source| SimError::Step { tick, source })?;

        let applied: Vec<_> = mailbox.into_iter().filter(|r| step.applied.contains(&r.request_id)).collect();
        for r in &applied {
            events.push(Event::ReplyApplied {
                tick,
                request_id: r.request_id,
            });
        }
        for (id, reason) in &step.discarded {
            events.push(Event::ReplyDiscarded {
                tick,
                request_id: *id,
                reason: *reason,
            });
        }

        let mut request = None;
        if let Some((request_id, prompt)) = step.outbound.clone() {
            let scene = camera_view(&world, &ego, t);
            let req = SlowRequest {
                request_id,
                tick,
                prompt: prompt.clone(),
                ego: ego_summary(&ego),
                scene_summary: scene.clone(),
                history: arbiter.history(),
            };
            events.push(Event::PromptSent { tick, request_id });
            let due_tick = tick + latency.sample(request_id);
            match transport.submit(&req) {
                Ok(()) => pending.entry(due_tick).or_default().push(request_id),
                Err(e) => events.push(Event::TransportError {
                    tick,
                    request_id,
                    message: e.to_string(),
                }),
            }
            request = Some(SentRequest {
                request_id,
                prompt,
                scene_summary: scene,
                due_tick,
            });
        }

        let completion = if world.at_goal(&ego) { 1.0 } else { world.route_completion(&ego) };
        best_completion = best_completion.max(completion);
        if goal_tick.is_none() && world.at_goal(&ego) {
            goal_tick = Some(tick);
            events.push(Event::GoalReached { tick });
        }

        ticks.push(TickRecord {
            tick,
            time: t,
            ego: ego_summary(&ego),
            agents: sc
                .agents
                .iter()
                .enumerate()
                .map(|(i, a)| {
                    let k = world.agent_state(i, t);
                    AgentSnapshot {
                        id: a.id.clone(),
                        x: k.pose.x,
                        y: k.pose.y,
                        heading: k.pose.heading,
                        vx: k.velocity.x,
                        vy: k.velocity.y,
                        perceived: !a.hidden_at(t),
                    }
                })
                .collect(),
            trigger: TriggerSummary {
                brake: step.trigger.brake,
                min_ttc: step.trigger.min_ttc,
                first_trigger_time: step.trigger.first_trigger_time(),
                predicted_collision_time: step.trigger.predicted_collision_time,
                nearest_agent: step.trigger.nearest_agent.clone(),
            },
            quick_action: step.quick_action,
            command: step.command,
            required: assess(&world, tick, &ego, &cfg.ground_truth),
            route_completion: completion,
            overlaps,
            request,
            applied,
            discarded: step.discarded.clone(),
        });

        ego = if step.command.action == MetaAction::Normal {
            world.follow(&ego)
        } else {
            bicycle_step(&ego, &Control::new(-step.command.decel, 0.0), sc.dt)
        };
    }

    let collisions = events.iter().filter(|e| matches!(e, Event::Collision { .. })).count();
    let summary = RunSummary {
        ticks: ticks.len() as u64,
        collisions,
        goal_reached: goal_tick.is_some(),
        goal_tick,
        route_completion: if goal_tick.is_some() { 1.0 } else { best_completion },
        brake_ticks: ticks.iter().filter(|t| t.command.action != MetaAction::Normal).count(),
        emergency_ticks: ticks.iter().filter(|t| t.command.action == MetaAction::EmergencyBraking).count(),
        prompts_sent: ticks.iter().filter(|t| t.request.is_some()).count(),
        replies_applied: ticks.iter().map(|t| t.applied.len()).sum(),
    };
    Ok(SimLog {
        header: header(&world, &cfg),
        ticks,
        events,
        summary,
    })
}

/// [`run`] against the in-process mock built from the same scenario.
pub fn run_in_process(sc: &Scenario, cfg: &SimConfig) -> Result<SimLog, SimError> {
    let mut mock = InProcessMock::new(sc, cfg.ground_truth);
    run(sc, cfg, &mut mock)
}
