//! Scenario files: TOML, `schema_version = 1`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Polygon, Pose2D, Vec2};
use crate::kinematics::{VehicleState, DEFAULT_AXLE_DISTANCE};
use crate::slow::Signal;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{field}: {reason}")]
    Parse { field: String, reason: String },
    #[error("{field}: {reason}")]
    Invalid { field: String, reason: String },
}

impl ScenarioError {
    fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ScenarioError::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Dotted path of the offending field.
    pub fn field(&self) -> Option<&str> {
        match self {
            ScenarioError::Io { .. } => None,
            ScenarioError::Parse { field, .. } | ScenarioError::Invalid { field, .. } => Some(field),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub seed: u64,
    pub duration: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub environment: Environment,
    pub map: MapSpec,
    #[serde(default)]
    pub camera: Camera,
    pub ego: EgoSpec,
    #[serde(default)]
    pub goal: Option<Goal>,
    #[serde(default)]
    pub agents: Vec<AgentSpec>,
}

fn default_dt() -> f64 {
    0.2
}

/// Scene metadata used for text generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Environment {
    pub road: String,
    pub weather: String,
    pub area: String,
    pub time_of_day: String,
}

impl Default for Environment {
    fn default() -> Self {
        Self {
            road: "arterial roadway".into(),
            weather: "clear, sunny".into(),
            area: "urban".into(),
            time_of_day: "daylight".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSpec {
    pub drivable_area: Polygon,
}

/// Pinhole front camera mounted on the ego, used to synthesize image boxes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Camera {
    pub focal: f64,
    pub width: u32,
    pub height: u32,
    pub mount_height: f64,
}

impl Default for Camera {
    fn default() -> Self {
        Self {
            focal: 1266.0,
            width: 1600,
            height: 900,
            mount_height: 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EgoSpec {
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub heading: f64,
    pub speed: f64,
    #[serde(default = "default_ego_length")]
    pub length: f64,
    #[serde(default = "default_ego_width")]
    pub width: f64,
    #[serde(default = "default_axle")]
    pub lf: f64,
    #[serde(default = "default_axle")]
    pub lr: f64,
    pub route: RouteSpec,
}

fn default_ego_length() -> f64 {
    4.6
}
fn default_ego_width() -> f64 {
    1.9
}
fn default_axle() -> f64 {
    DEFAULT_AXLE_DISTANCE
}

impl EgoSpec {
    pub fn initial_state(&self) -> VehicleState {
        VehicleState::new(Pose2D::new(self.x, self.y, self.heading), self.speed).with_axles(self.lf, self.lr)
    }
}

/// Route the planner follows, with the speed it tries to hold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouteSpec {
    pub points: Vec<[f64; 2]>,
    pub cruise_speed: f64,
    #[serde(default = "default_plan_accel")]
    pub plan_accel: f64,
}

fn default_plan_accel() -> f64 {
    2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Goal {
    pub x: f64,
    pub y: f64,
    pub radius: f64,
}

impl Goal {
    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Vehicle,
    Truck,
    Pedestrian,
    Cyclist,
    Object,
}

impl AgentKind {
    pub fn default_height(self) -> f64 {
        match self {
            AgentKind::Vehicle => 1.5,
            AgentKind::Truck => 3.2,
            AgentKind::Pedestrian => 1.7,
            AgentKind::Cyclist => 1.7,
            AgentKind::Object => 1.0,
        }
    }

    pub fn noun(self) -> &'static str {
        match self {
            AgentKind::Vehicle => "vehicle",
            AgentKind::Truck => "truck",
            AgentKind::Pedestrian => "pedestrian",
            AgentKind::Cyclist => "cyclist",
            AgentKind::Object => "object",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub id: String,
    pub kind: AgentKind,
    /// Noun phrase for generated text; defaults to the kind.
    #[serde(default)]
    pub description: Option<String>,
    pub length: f64,
    pub width: f64,
    #[serde(default)]
    pub height: Option<f64>,
    /// Perception artifact: seen by the quick path, not physically present.
    #[serde(default)]
    pub ghost: bool,
    /// Occluded from the quick path before this sim-time.
    #[serde(default)]
    pub hidden_until: Option<f64>,
    #[serde(default)]
    pub signal: Option<Signal>,
    #[serde(default)]
    pub intention: Option<String>,
    pub motion: Motion,
}

impl AgentSpec {
    pub fn description(&self) -> String {
        self.description.clone().unwrap_or_else(|| self.kind.noun().to_string())
    }

    pub fn height(&self) -> f64 {
        self.height.unwrap_or_else(|| self.kind.default_height())
    }

    pub fn hidden_at(&self, t: f64) -> bool {
        self.hidden_until.is_some_and(|until| t < until - 1e-9)
    }
}

/// Scripted agent motion. All variants are closed-form functions of time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Motion {
    Static {
        x: f64,
        y: f64,
        #[serde(default)]
        heading: f64,
    },
    /// Constant speed and yaw rate between `start_time` and `stop_time`,
    /// at rest otherwise.
    ConstantTwist {
        x: f64,
        y: f64,
        #[serde(default)]
        heading: f64,
        speed: f64,
        #[serde(default)]
        yaw_rate: f64,
        #[serde(default)]
        start_time: f64,
        #[serde(default)]
        stop_time: Option<f64>,
    },
    /// Straight line along `heading` with a piecewise-linear speed profile
    /// of `[time, speed]` knots.
    SpeedProfile {
        x: f64,
        y: f64,
        #[serde(default)]
        heading: f64,
        profile: Vec<[f64; 2]>,
    },
    /// Piecewise-linear `[time, x, y]` schedule.
    Waypoints {
        schedule: Vec<[f64; 3]>,
        #[serde(default)]
        heading: f64,
    },
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        let de = toml::Deserializer::parse(text).map_err(|e| ScenarioError::Parse {
            field: "$".into(),
            reason: e.to_string(),
        })?;
        let sc: Scenario = serde_path_to_error::deserialize(de).map_err(|err| {
            let path = err.path().to_string();
            let reason = err.into_inner().message().to_string();
            let field = match reason.strip_prefix("missing field `").and_then(|r| r.split('`').next()) {
                Some(name) if path == "." => name.to_string(),
                Some(name) => format!("{path}.{name}"),
                None => path,
            };
            ScenarioError::Parse { field, reason }
        })?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// Number of ticks in a run, `⌈duration / dt⌉`.
    pub fn ticks(&self) -> u64 {
        (self.duration / self.dt - 1e-9).ceil().max(1.0) as u64
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ScenarioError::invalid("schema_version", format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version)));
        }
        if self.name.trim().is_empty() {
            return Err(ScenarioError::invalid("name", "empty"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(ScenarioError::invalid("dt", "must be positive"));
        }
        if !(self.duration >= self.dt && self.duration.is_finite()) {
            return Err(ScenarioError::invalid("duration", "must be at least dt"));
        }
        let cam = &self.camera;
        if !(cam.focal > 0.0 && cam.width > 0 && cam.height > 0 && cam.mount_height > 0.0) {
            return Err(ScenarioError::invalid("camera", "focal, size and mount height must be positive"));
        }

        let ego = &self.ego;
        if !(ego.speed >= 0.0 && ego.speed.is_finite()) {
            return Err(ScenarioError::invalid("ego.speed", "must be finite and non-negative"));
        }
        if !(ego.length > 0.0 && ego.width > 0.0) {
            return Err(ScenarioError::invalid("ego.length", "ego dimensions must be positive"));
        }
        if !(ego.lf > 0.0 && ego.lr > 0.0) {
            return Err(ScenarioError::invalid("ego.lf", "axle distances must be positive"));
        }
        let route = &ego.route;
        if route.points.len() < 2 {
            return Err(ScenarioError::invalid("ego.route.points", "needs at least two points"));
        }
        for (i, w) in route.points.windows(2).enumerate() {
            if Vec2::new(w[0][0], w[0][1]).distance(Vec2::new(w[1][0], w[1][1])) < 1e-6 {
                return Err(ScenarioError::invalid(format!("ego.route.points[{}]", i + 1), "repeats the previous point"));
            }
        }
        if !(route.cruise_speed > 0.0 && route.cruise_speed <= 40.0) {
            return Err(ScenarioError::invalid("ego.route.cruise_speed", "must lie in (0, 40] m/s"));
        }
        if !(route.plan_accel > 0.0) {
            return Err(ScenarioError::invalid("ego.route.plan_accel", "must be positive"));
        }
        if let Some(goal) = &self.goal {
            if !(goal.radius > 0.0) {
                return Err(ScenarioError::invalid("goal.radius", "must be positive"));
            }
        }

        let mut seen = std::collections::BTreeSet::new();
        for (i, a) in self.agents.iter().enumerate() {
            let at = |f: &str| format!("agents[{i}].{f}");
            if a.id.trim().is_empty() {
                return Err(ScenarioError::invalid(at("id"), "empty"));
            }
            if !seen.insert(a.id.as_str()) {
                return Err(ScenarioError::invalid(at("id"), format!("duplicate id `{}`", a.id)));
            }
            if !(a.length > 0.0 && a.width > 0.0) {
                return Err(ScenarioError::invalid(at("length"), "dimensions must be positive"));
            }
            if a.height.is_some_and(|h| !(h > 0.0)) {
                return Err(ScenarioError::invalid(at("height"), "must be positive"));
            }
            if a.hidden_until.is_some_and(|h| !(h >= 0.0)) {
                return Err(ScenarioError::invalid(at("hidden_until"), "must be non-negative"));
            }
            match &a.motion {
                Motion::Static { .. } => {}
                Motion::ConstantTwist {
                    speed,
                    yaw_rate,
                    start_time,
                    stop_time,
                    ..
                } => {
                    if !(*speed >= 0.0) {
                        return Err(ScenarioError::invalid(at("motion.speed"), "must be non-negative"));
                    }
                    if !(yaw_rate.abs() <= 2.0) {
                        return Err(ScenarioError::invalid(at("motion.yaw_rate"), "must be within ±2 rad/s"));
                    }
                    if stop_time.is_some_and(|s| s < *start_time) {
                        return Err(ScenarioError::invalid(at("motion.stop_time"), "precedes start_time"));
                    }
                }
                Motion::SpeedProfile { profile, .. } => {
                    if profile.is_empty() {
                        return Err(ScenarioError::invalid(at("motion.profile"), "needs at least one knot"));
                    }
                    for (k, knot) in profile.iter().enumerate() {
                        if !(knot[1] >= 0.0) {
                            return Err(ScenarioError::invalid(at(&format!("motion.profile[{k}]")), "speed must be non-negative"));
                        }
                        if k > 0 && !(knot[0] > profile[k - 1][0]) {
                            return Err(ScenarioError::invalid(at(&format!("motion.profile[{k}]")), "times must increase"));
                        }
                    }
                }
                Motion::Waypoints { schedule, .. } => {
                    if schedule.is_empty() {
                        return Err(ScenarioError::invalid(at("motion.schedule"), "needs at least one waypoint"));
                    }
                    for k in 1..schedule.len() {
                        if !(schedule[k][0] > schedule[k - 1][0]) {
                            return Err(ScenarioError::invalid(at(&format!("motion.schedule[{k}]")), "times must increase"));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}
