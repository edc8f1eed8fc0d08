//! Independent oracles and generators shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use dual_aeb::arbiter::{AebPrompt, Exchange};
use dual_aeb::geometry::{OrientedBox, Polygon, Pose2D, Vec2};
use dual_aeb::kinematics::{Control, VehicleState};
use dual_aeb::rule_aeb::{AgentTrack, RuleInputs, Trajectory};
use dual_aeb::slow::{EgoSummary, ImageBox, SceneObject, Signal, SlowRequest, SlowResponse, AEB_TOKEN};
use dual_aeb::MetaAction;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const ORACLE_DT: f64 = 0.01;

// ---- geometry -------------------------------------------------------------

pub fn corners(center: (f64, f64), heading: f64, half_len: f64, half_wid: f64) -> [(f64, f64); 4] {
    let (s, c) = heading.sin_cos();
    let pt = |l: f64, w: f64| (center.0 + l * c - w * s, center.1 + l * s + w * c);
    [pt(half_len, half_wid), pt(-half_len, half_wid), pt(-half_len, -half_wid), pt(half_len, -half_wid)]
}

pub fn box_corners(b: &OrientedBox) -> [(f64, f64); 4] {
    corners((b.center.x, b.center.y), b.center.heading, b.half_length, b.half_width)
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Inside or on the boundary of a convex quad with counter-clockwise corners.
fn in_convex(quad: &[(f64, f64); 4], p: (f64, f64)) -> bool {
    (0..4).all(|i| cross(quad[i], quad[(i + 1) % 4], p) >= 0.0)
}

fn segments_cross(p1: (f64, f64), p2: (f64, f64), q1: (f64, f64), q2: (f64, f64)) -> bool {
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    d1 * d2 <= 0.0 && d3 * d4 <= 0.0
}

/// Quad overlap by containment and edge crossing, no separating axes.
pub fn quads_overlap(a: &[(f64, f64); 4], b: &[(f64, f64); 4]) -> bool {
    if a.iter().any(|&p| in_convex(b, p)) || b.iter().any(|&p| in_convex(a, p)) {
        return true;
    }
    (0..4).any(|i| (0..4).any(|j| segments_cross(a[i], a[(i + 1) % 4], b[j], b[(j + 1) % 4])))
}

/// Crossing-number containment, boundary handling irrelevant for random
/// inputs.
pub fn point_in_polygon(poly: &[(f64, f64)], p: (f64, f64)) -> bool {
    let mut inside = false;
    let n = poly.len();
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        if (a.1 > p.1) != (b.1 > p.1) && p.0 < a.0 + (p.1 - a.1) * (b.0 - a.0) / (b.1 - a.1) {
            inside = !inside;
        }
    }
    inside
}

// ---- quick-path oracle ----------------------------------------------------

#[derive(Debug, Clone)]
pub struct OracleStep {
    pub ttc: f64,
    pub overlap: bool,
    /// Length of the first contact interval found by the TTC search.
    pub contact: f64,
}

/// Reference horizon loop: every step places the ego on its waypoint and
/// each agent at `k·dt` of constant-twist motion, then searches contact
/// time at `ORACLE_DT` with the ego moving straight at its waypoint speed.
pub fn brute_force_steps(input: &RuleInputs, ttc_window: f64) -> Vec<OracleStep> {
    let area: Vec<(f64, f64)> = input.area.vertices().iter().map(|v| (v.x, v.y)).collect();
    let (hl, hw) = (input.ego_box.half_length, input.ego_box.half_width);
    let mut prev = (input.ego_state.pose.x, input.ego_state.pose.y);
    let mut steps = Vec::new();
    for k in 1..=input.horizon_steps {
        let t = k as f64 * input.dt;
        let wp = input.plan.waypoints[k - 1];
        let speed = ((wp.x - prev.0).powi(2) + (wp.y - prev.1).powi(2)).sqrt() / input.dt;
        prev = (wp.x, wp.y);
        let agents: Vec<_> = input
            .others
            .iter()
            .map(|a| {
                let c = (a.bbox.center.x + a.velocity.x * t, a.bbox.center.y + a.velocity.y * t);
                let h = a.bbox.center.heading + a.heading_rate * t;
                (c, h, a.bbox.half_length, a.bbox.half_width, (a.velocity.x, a.velocity.y))
            })
            .filter(|(c, ..)| point_in_polygon(&area, *c))
            .collect();
        let radius = |l: f64, w: f64| (l * l + w * w).sqrt();
        let touches = |ec: (f64, f64), tau: f64| {
            let ego = corners(ec, wp.heading, hl, hw);
            agents.iter().any(|&(c, h, l, w, v)| {
                let c = (c.0 + v.0 * tau, c.1 + v.1 * tau);
                let d = ((c.0 - ec.0).powi(2) + (c.1 - ec.1).powi(2)).sqrt();
                d <= radius(hl, hw) + radius(l, w) + 1e-9 && quads_overlap(&ego, &corners(c, h, l, w))
            })
        };
        let overlap = touches((wp.x, wp.y), 0.0);
        let samples = (ttc_window / ORACLE_DT + 1e-9).floor() as usize;
        let touching = |i: usize| {
            let tau = i as f64 * ORACLE_DT;
            touches((wp.x + speed * tau * wp.heading.cos(), wp.y + speed * tau * wp.heading.sin()), tau)
        };
        let first = (1..=samples).find(|&i| touching(i));
        let ttc = first.map_or(f64::INFINITY, |i| i as f64 * ORACLE_DT);
        let contact = first.map_or(0.0, |i| (i..=samples).take_while(|&j| touching(j)).count() as f64 * ORACLE_DT);
        steps.push(OracleStep { ttc, overlap, contact });
    }
    steps
}

pub fn oracle_brake(steps: &[OracleStep], t_threshold: f64) -> bool {
    steps.iter().any(|s| s.overlap || s.ttc < t_threshold)
}

/// True when some step's reference TTC is within `guard` of the threshold,
/// or every triggering step's contact is shorter than the TTC sampling
/// period `fine_dt` and so can fall between samples.
pub fn in_guard_band(steps: &[OracleStep], t_threshold: f64, guard: f64, fine_dt: f64) -> bool {
    let near_threshold = steps.iter().any(|s| (s.ttc - t_threshold).abs() < guard);
    let mut triggering = steps.iter().filter(|s| s.overlap || s.ttc < t_threshold).peekable();
    let brief = triggering.peek().is_some() && triggering.all(|s| !s.overlap && s.contact < fine_dt);
    near_threshold || brief
}

/// Random scene: an ego on a straight or gently curving plan, up to
/// `max_agents` vehicles and pedestrians scattered ahead, some outside the
/// area.
pub fn random_scene(rng: &mut ChaCha8Rng, max_agents: usize, horizon: usize, dt: f64) -> RuleInputs {
    let speed = rng.gen_range(0.0..20.0);
    let yaw_rate = if rng.gen_bool(0.5) { 0.0 } else { rng.gen_range(-0.3..0.3) };
    let start = Pose2D::new(0.0, 0.0, 0.0);
    let mut waypoints = Vec::with_capacity(horizon);
    let (mut x, mut y, mut h) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..horizon {
        x += speed * h.cos() * dt;
        y += speed * h.sin() * dt;
        h += yaw_rate * dt;
        waypoints.push(Pose2D::new(x, y, h));
    }
    let ego_box = OrientedBox::from_dims(start, 4.6, 1.9).unwrap();
    let n = rng.gen_range(0..=max_agents);
    let others = (0..n)
        .map(|i| {
            let pedestrian = rng.gen_bool(0.3);
            let (len, wid, vmax) = if pedestrian { (0.6, 0.6, 2.0) } else { (rng.gen_range(3.5..6.0), rng.gen_range(1.6..2.2), 15.0) };
            let pose = Pose2D::new(rng.gen_range(-5.0..60.0), rng.gen_range(-10.0..10.0), rng.gen_range(-PI..PI));
            let v = rng.gen_range(0.0..vmax);
            let dir = rng.gen_range(-PI..PI);
            AgentTrack::new(
                format!("agent_{i}"),
                OrientedBox::from_dims(pose, len, wid).unwrap(),
                Vec2::new(v * dir.cos(), v * dir.sin()),
                rng.gen_range(-0.2..0.2),
            )
        })
        .collect();
    RuleInputs {
        ego_box,
        ego_state: VehicleState::new(start, speed),
        others,
        plan: Trajectory::new(waypoints),
        area: Polygon::rectangle(-20.0, -7.0, 120.0, 7.0).unwrap(),
        dt,
        horizon_steps: horizon,
        t_threshold: 1.0,
    }
}

// ---- kinematics oracle ----------------------------------------------------

/// Continuous kinematic bicycle model about the center of gravity,
/// integrated with classic RK4 at step `h`. Speed stops at zero under
/// braking.
pub fn rk4_rollout(s: &VehicleState, controls: &[Control], dt: f64, h: f64) -> Vec<(f64, f64, f64, f64)> {
    let mut st = [s.pose.x, s.pose.y, s.pose.heading, s.speed];
    let mut out = Vec::new();
    let n = (dt / h).round() as usize;
    for u in controls {
        let beta = (s.lr * u.steer.tan() / (s.lf + s.lr)).atan();
        let f = |q: [f64; 4]| {
            let v = q[3].max(0.0);
            let dv = if q[3] <= 0.0 && u.accel < 0.0 { 0.0 } else { u.accel };
            [v * (q[2] + beta).cos(), v * (q[2] + beta).sin(), v * beta.sin() / s.lr, dv]
        };
        for _ in 0..n {
            let add = |a: [f64; 4], b: [f64; 4], k: f64| [a[0] + k * b[0], a[1] + k * b[1], a[2] + k * b[2], a[3] + k * b[3]];
            let k1 = f(st);
            let k2 = f(add(st, k1, h / 2.0));
            let k3 = f(add(st, k2, h / 2.0));
            let k4 = f(add(st, k3, h));
            for i in 0..4 {
                st[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            st[3] = st[3].max(0.0);
        }
        out.push((st[0], st[1], st[2], st[3]));
    }
    out
}

pub fn random_controls(rng: &mut ChaCha8Rng, n: usize) -> Vec<Control> {
    (0..n)
        .map(|_| Control::new(rng.gen_range(-4.0..2.0), rng.gen_range(-0.4..0.4)))
        .collect()
}

// ---- protocol generators --------------------------------------------------

fn action(rng: &mut ChaCha8Rng) -> MetaAction {
    MetaAction::ALL[rng.gen_range(0..3)]
}

fn text(rng: &mut ChaCha8Rng) -> String {
    const WORDS: &[&str] = &["pedestrian", "truck", "brakes", "ahead", "lane", "\"quoted\"", "naïve", "\\", "{}", "1.5", "ünïcode ✓"];
    let n = rng.gen_range(1..8);
    (0..n).map(|_| WORDS[rng.gen_range(0..WORDS.len())]).collect::<Vec<_>>().join(" ")
}

fn float(rng: &mut ChaCha8Rng) -> f64 {
    match rng.gen_range(0..4) {
        0 => 0.0,
        1 => rng.gen_range(-1e6..1e6),
        2 => rng.gen::<f64>() * 1e-12,
        _ => rng.gen_range(-50.0..50.0),
    }
}

pub fn random_request(rng: &mut ChaCha8Rng) -> SlowRequest {
    let initial = action(rng);
    SlowRequest {
        request_id: rng.gen(),
        tick: rng.gen_range(0..100_000),
        prompt: AebPrompt {
            text: text(rng),
            initial_action: initial,
            agent_id: rng.gen_bool(0.5).then(|| text(rng)),
            predicted_collision_time: rng.gen_bool(0.5).then(|| float(rng)),
            ego_speed: float(rng),
            tick: rng.gen(),
        },
        ego: EgoSummary {
            x: float(rng),
            y: float(rng),
            heading: float(rng),
            speed: float(rng),
        },
        scene_summary: (0..rng.gen_range(0..5))
            .map(|i| {
                let x0 = rng.gen_range(-2000..2000);
                let y0 = rng.gen_range(-2000..2000);
                SceneObject {
                    id: format!("obj_{i}"),
                    description: text(rng),
                    image_box: ImageBox {
                        x_min: x0,
                        y_min: y0,
                        x_max: x0 + rng.gen_range(1..500),
                        y_max: y0 + rng.gen_range(1..500),
                    },
                    distance: float(rng).abs(),
                    signal: [None, Some(Signal::Left), Some(Signal::Right), Some(Signal::Hazard), Some(Signal::BrakeLights)][rng.gen_range(0..5)],
                }
            })
            .collect(),
        history: (0..rng.gen_range(0..5))
            .map(|_| Exchange {
                request_id: rng.gen(),
                tick: rng.gen(),
                initial_action: action(rng),
                meta_action: action(rng),
            })
            .collect(),
    }
}

pub fn random_response(rng: &mut ChaCha8Rng) -> SlowResponse {
    let meta_action = action(rng);
    let mut rationale = text(rng);
    if meta_action.is_hazard() {
        rationale.push(' ');
        rationale.push_str(AEB_TOKEN);
    }
    SlowResponse {
        request_id: rng.gen(),
        meta_action,
        rationale,
        brake_signal: rng.gen_range(0.0..=1.0),
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---- dataset pools --------------------------------------------------------

/// Logs of seeded variants of every bundled scenario under off, rule-only
/// and dual, consulting every `interval` seconds.
pub fn variant_logs(variants: u64, interval: f64) -> Vec<dual_aeb::SimLog> {
    use dual_aeb::simulator::suite::{bundled, jittered};
    use dual_aeb::{Mode, SimConfig};
    let mut logs = Vec::new();
    for (i, base) in bundled().iter().enumerate() {
        for v in 0..variants {
            let sc = jittered(base, 100 * i as u64 + v, 6.0);
            for mode in [Mode::Off, Mode::RuleOnly, Mode::Dual] {
                let mut cfg = SimConfig::default().with_mode(mode);
                cfg.arbiter.trigger_interval = interval;
                logs.push(dual_aeb::simulator::run_in_process(&sc, &cfg).unwrap());
            }
        }
    }
    logs
}
