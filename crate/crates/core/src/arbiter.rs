//! Fast/slow arbitration.
//!
//! The quick path runs on every tick and always yields a command. On a fixed
//! schedule the arbiter packages the quick decision as an AEB-Prompt and
//! sends it to the slow module without waiting. Replies come back through a
//! mailbox drained at tick boundaries; a reply that arrives within the
//! deadline either confirms or adjusts the quick command until it goes stale.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::VehicleState;
use crate::rule_aeb::{classify_meta_action, evaluate, AgentTrack, RuleConfig, RuleError, RuleInputs, TriggerResult};
use crate::slow::SlowResponse;

/// Tolerance for comparing sim-times built from tick counts.
const TIME_EPS: f64 = 1e-9;

/// Braking severity, ordered `Normal < EarlyWarning < EmergencyBraking`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetaAction {
    Normal,
    EarlyWarning,
    EmergencyBraking,
}

impl MetaAction {
    pub const ALL: [MetaAction; 3] = [MetaAction::Normal, MetaAction::EarlyWarning, MetaAction::EmergencyBraking];

    /// Human-readable name, as used in answers and prompts.
    pub fn label(self) -> &'static str {
        match self {
            MetaAction::Normal => "Normal",
            MetaAction::EarlyWarning => "Early Warning",
            MetaAction::EmergencyBraking => "Emergency Braking",
        }
    }

    pub fn is_hazard(self) -> bool {
        self != MetaAction::Normal
    }
}

impl fmt::Display for MetaAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandSource {
    Quick,
    SlowConfirmed,
    SlowAdjusted,
    QuickFallback,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BrakeCommand {
    pub action: MetaAction,
    /// Deceleration magnitude, m/s².
    pub decel: f64,
    pub source: CommandSource,
}

impl BrakeCommand {
    pub fn normal(source: CommandSource) -> Self {
        Self {
            action: MetaAction::Normal,
            decel: 0.0,
            source,
        }
    }

    pub fn is_braking(&self) -> bool {
        self.decel > 0.0
    }
}

/// Which decision paths are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// No AEB at all.
    Off,
    RuleOnly,
    SlowOnly,
    Dual,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Off, Mode::RuleOnly, Mode::SlowOnly, Mode::Dual];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Off => "off",
            Mode::RuleOnly => "rule-only",
            Mode::SlowOnly => "slow-only",
            Mode::Dual => "dual",
        }
    }

    pub fn uses_slow(self) -> bool {
        matches!(self, Mode::SlowOnly | Mode::Dual)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown mode `{s}` (expected off, rule-only, slow-only or dual)"))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ArbiterError {
    #[error("trigger_interval must be positive, got {0}")]
    Interval(f64),
    #[error("slow_deadline must be non-negative, got {0}")]
    Deadline(f64),
    #[error("brake_threshold must lie in (0, 1), got {0}")]
    Threshold(f64),
    #[error("decelerations must satisfy 0 <= warning <= emergency <= decel_max")]
    Decel,
    #[error(transparent)]
    Rule(#[from] RuleError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArbiterConfig {
    /// Sim-time between slow consultations, s.
    pub trigger_interval: f64,
    /// Longest a reply may take, in sim-time, and still be applied.
    pub slow_deadline: f64,
    pub brake_threshold: f64,
    pub decel_emergency: f64,
    pub decel_warning: f64,
    pub decel_max: f64,
    /// Prior exchanges attached to each request.
    pub history_len: usize,
}

impl Default for ArbiterConfig {
    fn default() -> Self {
        Self {
            trigger_interval: 2.5,
            slow_deadline: 0.5,
            brake_threshold: 0.5,
            decel_emergency: 8.0,
            decel_warning: 3.0,
            decel_max: 8.0,
            history_len: 4,
        }
    }
}

impl ArbiterConfig {
    pub fn validate(&self) -> Result<(), ArbiterError> {
        if !(self.trigger_interval > 0.0 && self.trigger_interval.is_finite()) {
            return Err(ArbiterError::Interval(self.trigger_interval));
        }
        if !(self.slow_deadline >= 0.0) {
            return Err(ArbiterError::Deadline(self.slow_deadline));
        }
        if !(self.brake_threshold > 0.0 && self.brake_threshold < 1.0) {
            return Err(ArbiterError::Threshold(self.brake_threshold));
        }
        if !(0.0 <= self.decel_warning && self.decel_warning <= self.decel_emergency && self.decel_emergency <= self.decel_max) {
            return Err(ArbiterError::Decel);
        }
        Ok(())
    }

    pub fn decel_for(&self, action: MetaAction) -> f64 {
        match action {
            MetaAction::Normal => 0.0,
            MetaAction::EarlyWarning => self.decel_warning,
            MetaAction::EmergencyBraking => self.decel_emergency,
        }
    }

    pub fn command(&self, action: MetaAction, source: CommandSource) -> BrakeCommand {
        BrakeCommand {
            action,
            decel: self.decel_for(action),
            source,
        }
    }
}

/// The quick path's initial decision, packaged for the slow module.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AebPrompt {
    pub text: String,
    pub initial_action: MetaAction,
    pub agent_id: Option<String>,
    pub predicted_collision_time: Option<f64>,
    pub ego_speed: f64,
    pub tick: u64,
}

/// Turns an agent id such as `black_vehicle_left` into a noun phrase,
/// "the black vehicle on the left".
pub fn describe_agent(id: &str) -> String {
    let mut words: Vec<&str> = id.split(['_', '-', ' ']).filter(|w| !w.is_empty()).collect();
    let place = match words.last().copied() {
        Some("left") => Some("on the left"),
        Some("right") => Some("on the right"),
        Some("ahead") => Some("ahead"),
        Some("behind") => Some("behind"),
        _ => None,
    };
    if place.is_some() {
        words.pop();
    }
    if words.is_empty() {
        words.push("object");
    }
    match place {
        Some(p) => format!("the {} {}", words.join(" "), p),
        None => format!("the {}", words.join(" ")),
    }
}

fn has_place_word(id: &str) -> bool {
    matches!(id.rsplit(['_', '-', ' ']).next(), Some("left" | "right" | "ahead" | "behind"))
}

/// Descriptor with a place word taken from the agent's bearing in the ego frame.
fn place_relative_to(ego: &VehicleState, agent: &AgentTrack) -> String {
    let rel = (agent.bbox.center.position() - ego.pose.position()).rotate(-ego.pose.heading);
    let place = if rel.x < 0.0 {
        "behind"
    } else if rel.y > 1.5 {
        "left"
    } else if rel.y < -1.5 {
        "right"
    } else {
        "ahead"
    };
    describe_agent(&format!("{}_{place}", agent.id))
}

/// Renders the prompt text. `seconds` is shown with one decimal.
pub fn render_prompt_text(action: MetaAction, agent: Option<&str>, seconds: Option<f64>) -> String {
    let who = agent.unwrap_or("the object ahead");
    let when = seconds.unwrap_or(0.0);
    match action {
        MetaAction::Normal => "Initial decision: no imminent collision detected; I decide to continue.".to_string(),
        MetaAction::EarlyWarning => {
            format!("Initial decision: A potential collision with {who} is expected in {when:.1} seconds, and I decide to issue an early warning.")
        }
        MetaAction::EmergencyBraking => {
            format!("Initial decision: A collision with {who} is expected in {when:.1} seconds, and I decide to brake.")
        }
    }
}

/// Builds the AEB-Prompt for a quick decision.
pub fn build_aeb_prompt(r: &TriggerResult, action: MetaAction, ego: &VehicleState, agents: &[AgentTrack], tick: u64) -> AebPrompt {
    let agent_id = match action {
        MetaAction::Normal => None,
        _ => r.nearest_agent.clone(),
    };
    let descriptor = agent_id.as_deref().map(|id| match agents.iter().find(|a| a.id == id) {
        Some(agent) if !has_place_word(id) => place_relative_to(ego, agent),
        _ => describe_agent(id),
    });
    let seconds = match action {
        MetaAction::Normal => None,
        MetaAction::EarlyWarning => r.min_ttc.is_finite().then_some(r.min_ttc),
        MetaAction::EmergencyBraking => r
            .predicted_collision_time
            .or(r.min_ttc.is_finite().then_some(r.min_ttc))
            .or(Some(0.0)),
    };
    AebPrompt {
        text: render_prompt_text(action, descriptor.as_deref(), seconds),
        initial_action: action,
        agent_id,
        predicted_collision_time: if action == MetaAction::Normal { None } else { seconds },
        ego_speed: ego.speed,
        tick,
    }
}

/// Ticks on the nominal consultation grid: the first tick at or after each
/// multiple of `interval`.
pub fn schedule_ticks(ticks: u64, dt: f64, interval: f64) -> Vec<u64> {
    let mut next = 0.0;
    (0..ticks)
        .filter(|&n| {
            let now = n as f64 * dt;
            if now + TIME_EPS >= next {
                next = ((now + TIME_EPS) / interval).floor() * interval + interval;
                true
            } else {
                false
            }
        })
        .collect()
}

/// True when no consultation happened yet or at least one interval passed.
pub fn should_invoke_slow(now: f64, last_invocation: Option<f64>, cfg: &ArbiterConfig) -> bool {
    match last_invocation {
        None => true,
        Some(last) => now - last + TIME_EPS >= cfg.trigger_interval,
    }
}

/// Combines the quick command with a slow reply.
///
/// Without a reply, or past the deadline, the quick command stands as a
/// fallback. Otherwise the slow verdict governs: a brake signal at or above
/// threshold yields at least a warning, and a sub-threshold `Normal` cancels
/// whatever the quick path asked for.
pub fn fuse(quick: &BrakeCommand, slow: Option<&SlowResponse>, deadline_met: bool, cfg: &ArbiterConfig) -> BrakeCommand {
    let slow = match slow {
        Some(s) if deadline_met => s,
        _ => {
            return BrakeCommand {
                source: CommandSource::QuickFallback,
                ..*quick
            }
        }
    };
    let action = if slow.brake_signal >= cfg.brake_threshold {
        slow.meta_action.max(MetaAction::EarlyWarning)
    } else {
        slow.meta_action
    };
    let source = if action == quick.action {
        CommandSource::SlowConfirmed
    } else {
        CommandSource::SlowAdjusted
    };
    cfg.command(action, source)
}

/// One prior request/reply pair, attached to later requests as context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub request_id: u64,
    pub tick: u64,
    pub initial_action: MetaAction,
    pub meta_action: MetaAction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscardReason {
    Late,
    Unknown,
    Superseded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArbiterStep {
    pub command: BrakeCommand,
    pub quick_action: MetaAction,
    pub trigger: TriggerResult,
    /// Outbound prompt and its request id, when a consultation is due.
    pub outbound: Option<(u64, AebPrompt)>,
    pub applied: Vec<u64>,
    pub discarded: Vec<(u64, DiscardReason)>,
}

#[derive(Debug, Clone, PartialEq)]
struct ActiveReply {
    response: SlowResponse,
    request_tick: u64,
}

/// Per-simulation arbiter state. Single owner, advanced once per tick.
#[derive(Debug, Clone)]
pub struct Arbiter {
    mode: Mode,
    cfg: ArbiterConfig,
    rule_cfg: RuleConfig,
    last_slot: Option<f64>,
    next_request_id: u64,
    in_flight: BTreeMap<u64, (u64, MetaAction)>,
    active: Option<ActiveReply>,
    history: VecDeque<Exchange>,
}

impl Arbiter {
    pub fn new(mode: Mode, cfg: ArbiterConfig, rule_cfg: RuleConfig) -> Result<Self, ArbiterError> {
        cfg.validate()?;
        rule_cfg.validate()?;
        Ok(Self {
            mode,
            cfg,
            rule_cfg,
            last_slot: None,
            next_request_id: 1,
            in_flight: BTreeMap::new(),
            active: None,
            history: VecDeque::new(),
        })
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn config(&self) -> &ArbiterConfig {
        &self.cfg
    }

    /// Prior exchanges, oldest first.
    pub fn history(&self) -> Vec<Exchange> {
        self.history.iter().cloned().collect()
    }

    fn time(&self, tick: u64) -> f64 {
        tick as f64 * self.rule_cfg.dt
    }

    fn age(&self, now_tick: u64, request_tick: u64) -> f64 {
        self.time(now_tick) - self.time(request_tick)
    }

    /// Advances one tick. `replies` is the mailbox content delivered at this
    /// tick boundary.
    pub fn step(&mut self, tick: u64, inputs: &RuleInputs, replies: Vec<SlowResponse>) -> Result<ArbiterStep, ArbiterError> {
        let now = self.time(tick);
        let mut applied = Vec::new();
        let mut discarded = Vec::new();

        let mut replies = replies;
        replies.sort_by_key(|r| r.request_id);
        for reply in replies {
            let id = reply.request_id;
            let Some((request_tick, initial_action)) = self.in_flight.remove(&id) else {
                discarded.push((id, DiscardReason::Unknown));
                continue;
            };
            if self.age(tick, request_tick) > self.cfg.slow_deadline + TIME_EPS {
                discarded.push((id, DiscardReason::Late));
                continue;
            }
            if self.active.as_ref().is_some_and(|a| a.response.request_id > id) {
                discarded.push((id, DiscardReason::Superseded));
                continue;
            }
            self.history.push_back(Exchange {
                request_id: id,
                tick: request_tick,
                initial_action,
                meta_action: reply.meta_action,
            });
            while self.history.len() > self.cfg.history_len {
                self.history.pop_front();
            }
            applied.push(id);
            self.active = Some(ActiveReply {
                response: reply,
                request_tick,
            });
        }
        // Requests past their deadline can no longer be applied.
        let deadline = self.cfg.slow_deadline;
        let expired: Vec<u64> = self
            .in_flight
            .iter()
            .filter(|(_, (t, _))| self.age(tick, *t) > deadline + TIME_EPS)
            .map(|(id, _)| *id)
            .collect();
        for id in expired {
            self.in_flight.remove(&id);
        }

        let trigger = evaluate(inputs, &self.rule_cfg)?;
        let quick_action = classify_meta_action(&trigger, &self.rule_cfg);

        let mut outbound = None;
        if self.mode.uses_slow() && should_invoke_slow(now, self.last_slot, &self.cfg) {
            let prompt = build_aeb_prompt(&trigger, quick_action, &inputs.ego_state, &inputs.others, tick);
            let id = self.next_request_id;
            self.next_request_id += 1;
            self.in_flight.insert(id, (tick, quick_action));
            // Slots sit on the nominal grid so the schedule does not drift.
            let slot = ((now + TIME_EPS) / self.cfg.trigger_interval).floor() * self.cfg.trigger_interval;
            self.last_slot = Some(slot);
            outbound = Some((id, prompt));
        }

        let command = match self.mode {
            Mode::Off => BrakeCommand::normal(CommandSource::Quick),
            Mode::RuleOnly => self.cfg.command(quick_action, CommandSource::Quick),
            Mode::SlowOnly | Mode::Dual => {
                let quick = if self.mode == Mode::Dual {
                    self.cfg.command(quick_action, CommandSource::Quick)
                } else {
                    BrakeCommand::normal(CommandSource::Quick)
                };
                match self.authoritative_reply(tick, quick.action) {
                    Some(reply) => fuse(&quick, Some(reply), true, &self.cfg),
                    None if !self.in_flight.is_empty() => quick,
                    None => fuse(&quick, None, false, &self.cfg),
                }
            }
        };

        Ok(ArbiterStep {
            command,
            quick_action,
            trigger,
            outbound,
            applied,
            discarded,
        })
    }

    /// The active reply, unless it is older than one trigger interval, or it
    /// is a `Normal` at least one interval old facing a quick emergency.
    fn authoritative_reply(&self, tick: u64, quick_action: MetaAction) -> Option<&SlowResponse> {
        let active = self.active.as_ref()?;
        let age = self.age(tick, active.request_tick);
        let interval = self.cfg.trigger_interval;
        if age > interval + TIME_EPS {
            return None;
        }
        if active.response.meta_action == MetaAction::Normal
            && quick_action == MetaAction::EmergencyBraking
            && tick > active.request_tick
            && age + TIME_EPS >= interval
        {
            return None;
        }
        Some(&active.response)
    }
}
