//! The quick path: rule-based collision screening over the planned horizon.
//!
//! For every horizon step the ego footprint is moved to the matching plan
//! waypoint, every perceived agent is extrapolated with a constant twist,
//! and two checks run: a direct footprint overlap and a time-to-collision
//! projection. Any step whose TTC falls under the threshold, or that already
//! overlaps, is recorded as a trigger time; a non-empty trigger list means
//! brake.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arbiter::MetaAction;
use crate::geometry::{box_within_area, normalize_angle, obb_intersects, OrientedBox, Polygon, Pose2D, Vec2, SEPARATION_EPS};
use crate::kinematics::VehicleState;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RuleError {
    #[error("plan has {len} waypoints but the horizon needs {needed}")]
    PlanTooShort { len: usize, needed: usize },
    #[error("horizon must contain at least one step")]
    EmptyHorizon,
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("fine_dt {fine_dt} s must not exceed the step dt {dt} s")]
    FineStepTooLarge { fine_dt: f64, dt: f64 },
    #[error("waypoints {index} and {next} are {spacing:.3} m apart, more than v_max * dt = {limit:.3} m")]
    WaypointSpacing {
        index: usize,
        next: usize,
        spacing: f64,
        limit: f64,
    },
    #[error("agent {id}: heading rate {rate} rad/s exceeds 2 rad/s")]
    HeadingRate { id: String, rate: f64 },
    #[error("agent {id}: velocity is not finite")]
    NonFiniteVelocity { id: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuleConfig {
    pub dt: f64,
    pub horizon_steps: usize,
    pub t_threshold: f64,
    pub t_warning: f64,
    pub t_emergency: f64,
    pub ttc_window: f64,
    pub fine_dt: f64,
    pub v_max: f64,
}

impl Default for RuleConfig {
    fn default() -> Self {
        Self {
            dt: 0.2,
            horizon_steps: 15,
            t_threshold: 1.0,
            t_warning: 2.0,
            t_emergency: 1.0,
            ttc_window: 5.0,
            fine_dt: 0.05,
            v_max: 40.0,
        }
    }
}

impl RuleConfig {
    pub fn validate(&self) -> Result<(), RuleError> {
        for (name, value) in [
            ("dt", self.dt),
            ("t_threshold", self.t_threshold),
            ("t_warning", self.t_warning),
            ("t_emergency", self.t_emergency),
            ("ttc_window", self.ttc_window),
            ("fine_dt", self.fine_dt),
            ("v_max", self.v_max),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(RuleError::NonPositive { name, value });
            }
        }
        if self.horizon_steps == 0 {
            return Err(RuleError::EmptyHorizon);
        }
        if self.fine_dt > self.dt {
            return Err(RuleError::FineStepTooLarge {
                fine_dt: self.fine_dt,
                dt: self.dt,
            });
        }
        Ok(())
    }
}

/// A perceived agent. `ghost` and `hidden` ride along for labeling; the quick
/// path never reads them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentTrack {
    pub id: String,
    #[serde(rename = "box")]
    pub bbox: OrientedBox,
    pub velocity: Vec2,
    pub heading_rate: f64,
    #[serde(default)]
    pub ghost: bool,
    #[serde(default)]
    pub hidden: bool,
}

impl AgentTrack {
    pub fn new(id: impl Into<String>, bbox: OrientedBox, velocity: Vec2, heading_rate: f64) -> Self {
        Self {
            id: id.into(),
            bbox,
            velocity,
            heading_rate,
            ghost: false,
            hidden: false,
        }
    }

    pub fn validate(&self) -> Result<(), RuleError> {
        if !self.velocity.is_finite() {
            return Err(RuleError::NonFiniteVelocity { id: self.id.clone() });
        }
        if !(self.heading_rate.abs() <= 2.0) {
            return Err(RuleError::HeadingRate {
                id: self.id.clone(),
                rate: self.heading_rate,
            });
        }
        Ok(())
    }
}

/// Planned ego poses; waypoint `i` is the pose at `(i + 1) * dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub waypoints: Vec<Pose2D>,
}

impl Trajectory {
    pub fn new(waypoints: Vec<Pose2D>) -> Self {
        Self { waypoints }
    }

    /// Builds a plan from positions only. Headings are finite-differenced
    /// from the previous point; the first waypoint differences against
    /// `start`, and falls back to `start.heading` when it has not moved.
    pub fn from_positions(start: Pose2D, positions: &[Vec2]) -> Self {
        let mut prev = start.position();
        let mut prev_heading = start.heading;
        let waypoints = positions
            .iter()
            .map(|&p| {
                let d = p - prev;
                let heading = if d.norm() > 1e-9 {
                    d.y.atan2(d.x)
                } else {
                    prev_heading
                };
                prev = p;
                prev_heading = heading;
                Pose2D::new(p.x, p.y, heading)
            })
            .collect();
        Self { waypoints }
    }

    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }

    /// Checks spacing against `v_max * dt`, starting from the current pose.
    pub fn validate_spacing(&self, start: &Pose2D, dt: f64, v_max: f64) -> Result<(), RuleError> {
        let limit = v_max * dt + SEPARATION_EPS;
        let mut prev = start.position();
        for (i, w) in self.waypoints.iter().enumerate() {
            let spacing = w.position().distance(prev);
            if spacing > limit {
                return Err(RuleError::WaypointSpacing {
                    index: i.saturating_sub(1),
                    next: i,
                    spacing,
                    limit,
                });
            }
            prev = w.position();
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuleInputs {
    pub ego_box: OrientedBox,
    pub ego_state: VehicleState,
    pub others: Vec<AgentTrack>,
    pub plan: Trajectory,
    pub area: Polygon,
    pub dt: f64,
    pub horizon_steps: usize,
    pub t_threshold: f64,
}

impl RuleInputs {
    pub fn validate(&self) -> Result<(), RuleError> {
        if self.horizon_steps == 0 {
            return Err(RuleError::EmptyHorizon);
        }
        for (name, value) in [("dt", self.dt), ("t_threshold", self.t_threshold)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(RuleError::NonPositive { name, value });
            }
        }
        if self.plan.len() < self.horizon_steps {
            return Err(RuleError::PlanTooShort {
                len: self.plan.len(),
                needed: self.horizon_steps,
            });
        }
        self.others.iter().try_for_each(AgentTrack::validate)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerResult {
    /// Horizon times (s) at which a step triggered, strictly increasing.
    pub trigger_times: Vec<f64>,
    /// Smallest TTC over every horizon step; infinite when nothing closes in.
    #[serde(with = "crate::serde_inf")]
    pub min_ttc: f64,
    /// 1-based horizon step of the first footprint overlap.
    pub first_collision_step: Option<usize>,
    pub brake: bool,
    pub nearest_agent: Option<String>,
    /// Seconds from now until the predicted contact.
    pub predicted_collision_time: Option<f64>,
}

impl TriggerResult {
    pub fn empty() -> Self {
        Self {
            trigger_times: Vec::new(),
            min_ttc: f64::INFINITY,
            first_collision_step: None,
            brake: false,
            nearest_agent: None,
            predicted_collision_time: None,
        }
    }

    pub fn first_trigger_time(&self) -> Option<f64> {
        self.trigger_times.first().copied()
    }
}

/// Moves the ego footprint onto the plan waypoint; dimensions are kept.
pub fn update_ego_bbox(prev: &OrientedBox, waypoint: &Pose2D) -> OrientedBox {
    prev.with_center(*waypoint)
}

/// Constant-twist extrapolation: the center moves with the agent's velocity
/// and the heading turns at its heading rate.
pub fn update_other_bbox(prev: &OrientedBox, track: &AgentTrack, dt: f64) -> OrientedBox {
    let c = prev.center;
    prev.with_center(Pose2D {
        x: c.x + track.velocity.x * dt,
        y: c.y + track.velocity.y * dt,
        heading: normalize_angle(c.heading + track.heading_rate * dt),
    })
}

/// Overlap between the ego footprint and any agent whose center lies in the
/// drivable area.
pub fn calculate_collision<'a, I>(ego: &OrientedBox, others: I, area: &Polygon) -> bool
where
    I: IntoIterator<Item = &'a OrientedBox>,
{
    others
        .into_iter()
        .any(|b| box_within_area(b, area) && obb_intersects(ego, b))
}

/// Time to collision: the first sampled `τ ∈ (0, ttc_window]` at which the ego
/// (constant speed along its heading) overlaps an in-area agent (constant
/// velocity). Infinite if none.
pub fn calculate_ttc(
    ego: &OrientedBox,
    ego_state: &VehicleState,
    others: &[AgentTrack],
    area: &Polygon,
    ttc_window: f64,
    fine_dt: f64,
) -> f64 {
    let boxes: Vec<OrientedBox> = others.iter().map(|a| a.bbox).collect();
    let velocities: Vec<Vec2> = others.iter().map(|a| a.velocity).collect();
    ttc_with_agent(ego, ego_state.speed, &boxes, &velocities, area, ttc_window, fine_dt).0
}

fn sample_count(window: f64, fine_dt: f64) -> usize {
    (window / fine_dt + 1e-9).floor() as usize
}

/// TTC and the index of the agent that produces it.
fn ttc_with_agent(
    ego: &OrientedBox,
    ego_speed: f64,
    boxes: &[OrientedBox],
    velocities: &[Vec2],
    area: &Polygon,
    ttc_window: f64,
    fine_dt: f64,
) -> (f64, Option<usize>) {
    let samples = sample_count(ttc_window, fine_dt);
    let ego_vel = ego.center.forward() * ego_speed;
    let mut best: Option<(usize, usize)> = None;

    for (idx, (b, v)) in boxes.iter().zip(velocities).enumerate() {
        if !box_within_area(b, area) {
            continue;
        }
        let limit = best.map_or(samples, |(i, _)| i - 1);
        if limit == 0 {
            break;
        }
        // Bounding circles give a conservative window of candidate samples.
        let reach = ego.bounding_radius() + b.bounding_radius() + 1e-6;
        let d0 = b.center.position() - ego.center.position();
        let dv = *v - ego_vel;
        let Some((t_in, t_out)) = circle_contact_window(d0, dv, reach) else {
            continue;
        };
        let first = ((t_in / fine_dt).floor().max(1.0)) as usize;
        let last = ((t_out / fine_dt).ceil()).min(limit as f64);
        if last < first as f64 {
            continue;
        }
        for i in first..=(last as usize) {
            let tau = i as f64 * fine_dt;
            let e = ego.with_center(ego.center.translated(ego_vel * tau));
            let a = b.with_center(b.center.translated(*v * tau));
            if obb_intersects(&e, &a) {
                best = Some((i, idx));
                break;
            }
        }
    }
    match best {
        Some((i, idx)) => (i as f64 * fine_dt, Some(idx)),
        None => (f64::INFINITY, None),
    }
}

/// Times when `|d0 + dv t| <= reach`, for `t >= 0`.
fn circle_contact_window(d0: Vec2, dv: Vec2, reach: f64) -> Option<(f64, f64)> {
    let a = dv.dot(dv);
    let b = 2.0 * d0.dot(dv);
    let c = d0.dot(d0) - reach * reach;
    if a < 1e-12 {
        return (c <= 0.0).then_some((0.0, f64::INFINITY));
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    let t_in = (-b - sq) / (2.0 * a);
    let t_out = (-b + sq) / (2.0 * a);
    if t_out < 0.0 {
        return None;
    }
    Some((t_in.max(0.0), t_out))
}

/// Runs the horizon loop.
pub fn evaluate(input: &RuleInputs, cfg: &RuleConfig) -> Result<TriggerResult, RuleError> {
    input.validate()?;
    let dt = input.dt;
    let mut result = TriggerResult::empty();
    let mut min_ttc_agent: Option<(usize, f64, f64)> = None; // (agent, step time, ttc)
    let mut first_trigger: Option<(f64, f64, Option<usize>)> = None; // (time, ttc or 0, agent)

    let mut ego_box = input.ego_box;
    let mut prev_pos = input.ego_state.pose.position();
    let mut boxes: Vec<OrientedBox> = input.others.iter().map(|a| a.bbox).collect();
    let velocities: Vec<Vec2> = input.others.iter().map(|a| a.velocity).collect();

    for k in 1..=input.horizon_steps {
        let t = k as f64 * dt;
        let waypoint = &input.plan.waypoints[k - 1];
        ego_box = update_ego_bbox(&ego_box, waypoint);
        let speed = waypoint.position().distance(prev_pos) / dt;
        prev_pos = waypoint.position();
        for (b, track) in boxes.iter_mut().zip(&input.others) {
            *b = update_other_bbox(b, track, dt);
        }

        let (ttc, ttc_agent) = ttc_with_agent(&ego_box, speed, &boxes, &velocities, &input.area, cfg.ttc_window, cfg.fine_dt);
        let collision_agent = boxes
            .iter()
            .position(|b| box_within_area(b, &input.area) && obb_intersects(&ego_box, b));

        if ttc < result.min_ttc {
            result.min_ttc = ttc;
            min_ttc_agent = ttc_agent.map(|a| (a, t, ttc));
        }
        if collision_agent.is_some() && result.first_collision_step.is_none() {
            result.first_collision_step = Some(k);
        }
        if ttc < input.t_threshold || collision_agent.is_some() {
            result.trigger_times.push(t);
            if first_trigger.is_none() {
                first_trigger = Some(match collision_agent {
                    Some(a) => (t, 0.0, Some(a)),
                    None => (t, ttc, ttc_agent),
                });
            }
        }
    }

    result.brake = !result.trigger_times.is_empty();
    let (when, agent) = match (first_trigger, min_ttc_agent) {
        (Some((t, ttc, agent)), _) => (Some(t + ttc), agent),
        (None, Some((agent, t, ttc))) => (Some(t + ttc), Some(agent)),
        (None, None) => (None, None),
    };
    result.predicted_collision_time = when;
    result.nearest_agent = agent.map(|i| input.others[i].id.clone());
    Ok(result)
}

/// Severity from a trigger result: emergency under `t_emergency` or on any
/// predicted overlap, warning under `t_warning`.
pub fn classify_meta_action(r: &TriggerResult, cfg: &RuleConfig) -> MetaAction {
    if r.min_ttc < cfg.t_emergency || r.first_collision_step.is_some() {
        MetaAction::EmergencyBraking
    } else if r.min_ttc < cfg.t_warning {
        MetaAction::EarlyWarning
    } else {
        MetaAction::Normal
    }
}
