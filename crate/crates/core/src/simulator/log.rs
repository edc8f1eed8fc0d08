//! Run log: a header line, one line per tick, event lines and a summary
//! footer, each a JSON object tagged by `type`.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::arbiter::{AebPrompt, BrakeCommand, DiscardReason, MetaAction};
use crate::slow::{EgoSummary, SceneObject, Signal, SlowResponse};

use super::oracle::Assessment;
use super::scenario::{AgentKind, Camera, Environment, Goal};
use super::SimConfig;

pub const LOG_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentDescriptor {
    pub id: String,
    pub kind: AgentKind,
    pub description: String,
    pub length: f64,
    pub width: f64,
    pub height: f64,
    pub ghost: bool,
    pub hidden_until: Option<f64>,
    pub signal: Option<Signal>,
    pub intention: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMeta {
    pub name: String,
    pub description: String,
    pub seed: u64,
    pub dt: f64,
    pub duration: f64,
    pub ticks: u64,
    pub environment: Environment,
    pub camera: Camera,
    pub goal: Goal,
    pub ego_length: f64,
    pub ego_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub format_version: u32,
    pub scenario: ScenarioMeta,
    pub agents: Vec<AgentDescriptor>,
    /// Effective configuration, with the rule step tied to the scenario step.
    pub config: SimConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSnapshot {
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub vx: f64,
    pub vy: f64,
    /// Seen by the quick path at this tick.
    pub perceived: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerSummary {
    pub brake: bool,
    #[serde(with = "crate::serde_inf")]
    pub min_ttc: f64,
    pub first_trigger_time: Option<f64>,
    pub predicted_collision_time: Option<f64>,
    pub nearest_agent: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentRequest {
    pub request_id: u64,
    pub prompt: AebPrompt,
    pub scene_summary: Vec<SceneObject>,
    /// Tick at which the reply reaches the mailbox.
    pub due_tick: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub tick: u64,
    pub time: f64,
    pub ego: EgoSummary,
    pub agents: Vec<AgentSnapshot>,
    pub trigger: TriggerSummary,
    pub quick_action: MetaAction,
    pub command: BrakeCommand,
    /// Hazard assessment of the actual state at this tick.
    pub required: Assessment,
    pub route_completion: f64,
    /// Real agents overlapping the ego at this tick.
    pub overlaps: Vec<String>,
    pub request: Option<SentRequest>,
    /// Replies applied at this tick.
    pub applied: Vec<SlowResponse>,
    pub discarded: Vec<(u64, DiscardReason)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Collision { tick: u64, agent: String },
    GoalReached { tick: u64 },
    PromptSent { tick: u64, request_id: u64 },
    ReplyApplied { tick: u64, request_id: u64 },
    ReplyDiscarded { tick: u64, request_id: u64, reason: DiscardReason },
    TransportError { tick: u64, request_id: u64, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub ticks: u64,
    pub collisions: usize,
    pub goal_reached: bool,
    pub goal_tick: Option<u64>,
    pub route_completion: f64,
    pub brake_ticks: usize,
    pub emergency_ticks: usize,
    pub prompts_sent: usize,
    pub replies_applied: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Line {
    Header(LogHeader),
    Tick(TickRecord),
    Event(Event),
    Summary(RunSummary),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimLog {
    pub header: LogHeader,
    pub ticks: Vec<TickRecord>,
    pub events: Vec<Event>,
    pub summary: RunSummary,
}

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: {reason}")]
    Structure { line: usize, reason: String },
}

impl SimLog {
    pub fn mode(&self) -> crate::arbiter::Mode {
        self.header.config.mode
    }

    pub fn scenario_name(&self) -> &str {
        &self.header.scenario.name
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        let mut line = |l: &Line| -> io::Result<()> {
            serde_json::to_writer(&mut w, l)?;
            w.write_all(b"\n")
        };
        line(&Line::Header(self.header.clone()))?;
        for t in &self.ticks {
            line(&Line::Tick(t.clone()))?;
        }
        for e in &self.events {
            line(&Line::Event(e.clone()))?;
        }
        line(&Line::Summary(self.summary.clone()))
    }

    pub fn to_jsonl_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("JSON is UTF-8")
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self, LogError> {
        let mut header = None;
        let mut ticks = Vec::new();
        let mut events = Vec::new();
        let mut summary = None;
        let mut last = 0;
        for (i, text) in r.lines().enumerate() {
            let n = i + 1;
            last = n;
            let text = text?;
            if text.trim().is_empty() {
                continue;
            }
            let line: Line = serde_json::from_str(&text).map_err(|source| LogError::Json { line: n, source })?;
            let structure = |reason: &str| LogError::Structure {
                line: n,
                reason: reason.to_string(),
            };
            match line {
                Line::Header(h) if header.is_none() && n == 1 => header = Some(h),
                Line::Header(_) => return Err(structure("header must be the first and only header line")),
                _ if header.is_none() => return Err(structure("missing header")),
                _ if summary.is_some() => return Err(structure("content after summary")),
                Line::Tick(t) if events.is_empty() => ticks.push(t),
                Line::Tick(_) => return Err(structure("tick record after events")),
                Line::Event(e) => events.push(e),
                Line::Summary(s) => summary = Some(s),
            }
        }
        let header = header.ok_or(LogError::Structure {
            line: last,
            reason: "empty log".into(),
        })?;
        let summary = summary.ok_or(LogError::Structure {
            line: last,
            reason: "missing summary footer".into(),
        })?;
        Ok(Self {
            header,
            ticks,
            events,
            summary,
        })
    }

    pub fn collisions(&self) -> impl Iterator<Item = (u64, &str)> {
        self.events.iter().filter_map(|e| match e {
            Event::Collision { tick, agent } => Some((*tick, agent.as_str())),
            _ => None,
        })
    }
}
