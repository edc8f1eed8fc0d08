//! Scripted world state: agent motion, the ego route planner and perception.

use crate::geometry::{obb_intersects, OrientedBox, Pose2D, Vec2};
use crate::kinematics::VehicleState;
use crate::rule_aeb::{AgentTrack, Trajectory};

use super::scenario::{AgentSpec, Goal, Motion, Scenario};

/// Arc-length parametrized polyline. Queries beyond either end extrapolate
/// along the end segments.
#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    points: Vec<Vec2>,
    cumulative: Vec<f64>,
}

impl Route {
    /// `points` must hold at least two distinct consecutive points.
    pub fn new(points: Vec<Vec2>) -> Self {
        assert!(points.len() >= 2, "route needs two points");
        let mut cumulative = Vec::with_capacity(points.len());
        cumulative.push(0.0);
        for w in points.windows(2) {
            let last = *cumulative.last().unwrap();
            cumulative.push(last + w[0].distance(w[1]));
        }
        Self { points, cumulative }
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    fn segment_for(&self, s: f64) -> usize {
        let last = self.points.len() - 2;
        match self.cumulative.iter().position(|&c| c > s) {
            Some(0) => 0,
            Some(i) => (i - 1).min(last),
            None => last,
        }
    }

    /// Pose at arc length `s`, heading along the segment.
    pub fn pose_at(&self, s: f64) -> Pose2D {
        let i = self.segment_for(s);
        let (a, b) = (self.points[i], self.points[i + 1]);
        let len = self.cumulative[i + 1] - self.cumulative[i];
        let dir = (b - a) * (1.0 / len);
        let p = a + dir * (s - self.cumulative[i]);
        Pose2D::new(p.x, p.y, dir.y.atan2(dir.x))
    }

    /// Arc length of the closest point. The end segments extend beyond
    /// their endpoints; ties go to the earlier segment.
    pub fn project(&self, p: Vec2) -> f64 {
        let n = self.points.len() - 1;
        let mut best = (f64::INFINITY, 0.0);
        for i in 0..n {
            let (a, b) = (self.points[i], self.points[i + 1]);
            let ab = b - a;
            let len2 = ab.dot(ab);
            let mut t = (p - a).dot(ab) / len2;
            if i > 0 {
                t = t.max(0.0);
            }
            if i + 1 < n {
                t = t.min(1.0);
            }
            let d = p.distance(a + ab * t);
            if d < best.0 - 1e-12 {
                best = (d, self.cumulative[i] + t * len2.sqrt());
            }
        }
        best.1
    }
}

/// Position, velocity and yaw rate of an agent at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentKinematics {
    pub pose: Pose2D,
    pub velocity: Vec2,
    pub heading_rate: f64,
}

impl AgentKinematics {
    fn at_rest(pose: Pose2D) -> Self {
        Self {
            pose,
            velocity: Vec2::ZERO,
            heading_rate: 0.0,
        }
    }
}

/// Closed-form state of a scripted motion at time `t`.
pub fn motion_at(motion: &Motion, t: f64) -> AgentKinematics {
    match motion {
        Motion::Static { x, y, heading } => AgentKinematics::at_rest(Pose2D::new(*x, *y, *heading)),
        Motion::ConstantTwist {
            x,
            y,
            heading,
            speed,
            yaw_rate,
            start_time,
            stop_time,
        } => {
            let end = stop_time.unwrap_or(f64::INFINITY);
            let tau = (t - start_time).clamp(0.0, end - start_time);
            let moving = t >= *start_time && t < end;
            let h = heading + yaw_rate * tau;
            let offset = if yaw_rate.abs() < 1e-9 {
                Vec2::from_heading(*heading) * (speed * tau)
            } else {
                let r = speed / yaw_rate;
                Vec2::new(r * (h.sin() - heading.sin()), r * (heading.cos() - h.cos()))
            };
            let pose = Pose2D::new(x + offset.x, y + offset.y, h);
            if moving {
                AgentKinematics {
                    pose,
                    velocity: Vec2::from_heading(h) * *speed,
                    heading_rate: *yaw_rate,
                }
            } else {
                AgentKinematics::at_rest(pose)
            }
        }
        Motion::SpeedProfile { x, y, heading, profile } => {
            let (s, v) = profile_distance(profile, t);
            let dir = Vec2::from_heading(*heading);
            let p = Vec2::new(*x, *y) + dir * s;
            AgentKinematics {
                pose: Pose2D::new(p.x, p.y, *heading),
                velocity: dir * v,
                heading_rate: 0.0,
            }
        }
        Motion::Waypoints { schedule, heading } => waypoint_state(schedule, *heading, t),
    }
}

/// Distance travelled by `t` and the speed at `t` under a piecewise-linear
/// profile held constant outside its knots. Time starts at zero.
fn profile_distance(profile: &[[f64; 2]], t: f64) -> (f64, f64) {
    let speed_at = |tau: f64| -> f64 {
        let first = profile[0];
        if tau <= first[0] {
            return first[1];
        }
        for w in profile.windows(2) {
            if tau <= w[1][0] {
                let f = (tau - w[0][0]) / (w[1][0] - w[0][0]);
                return w[0][1] + f * (w[1][1] - w[0][1]);
            }
        }
        profile[profile.len() - 1][1]
    };
    if t <= 0.0 {
        return (0.0, speed_at(0.0));
    }
    // breakpoints inside (0, t); the speed is linear between them
    let mut knots = vec![0.0];
    knots.extend(profile.iter().map(|k| k[0]).filter(|&k| k > 0.0 && k < t));
    knots.push(t);
    let s = knots
        .windows(2)
        .map(|w| (speed_at(w[0]) + speed_at(w[1])) / 2.0 * (w[1] - w[0]))
        .sum();
    (s, speed_at(t))
}

fn waypoint_state(schedule: &[[f64; 3]], heading: f64, t: f64) -> AgentKinematics {
    let pos = |k: usize| Vec2::new(schedule[k][1], schedule[k][2]);
    // heading of the last segment that moved at or before segment `k`
    let heading_through = |k: usize| -> f64 {
        (0..=k)
            .rev()
            .map(|j| pos(j + 1) - pos(j))
            .find(|d| d.norm() > 1e-9)
            .map_or(heading, |d| d.y.atan2(d.x))
    };
    let n = schedule.len();
    if n == 1 || t <= schedule[0][0] {
        let h = (0..n - 1)
            .map(|j| pos(j + 1) - pos(j))
            .find(|d| d.norm() > 1e-9)
            .map_or(heading, |d| d.y.atan2(d.x));
        return AgentKinematics::at_rest(Pose2D::new(schedule[0][1], schedule[0][2], h));
    }
    if t >= schedule[n - 1][0] {
        let p = pos(n - 1);
        return AgentKinematics::at_rest(Pose2D::new(p.x, p.y, heading_through(n - 2)));
    }
    let k = (0..n - 1).find(|&k| t < schedule[k + 1][0]).unwrap();
    let span = schedule[k + 1][0] - schedule[k][0];
    let delta = pos(k + 1) - pos(k);
    let p = pos(k) + delta * ((t - schedule[k][0]) / span);
    AgentKinematics {
        pose: Pose2D::new(p.x, p.y, heading_through(k)),
        velocity: delta * (1.0 / span),
        heading_rate: 0.0,
    }
}

/// The scenario plus derived route data. Immutable during a run.
#[derive(Debug, Clone)]
pub struct World {
    scenario: Scenario,
    route: Route,
    goal: Goal,
    goal_s: f64,
}

impl World {
    pub fn new(scenario: Scenario) -> Self {
        let route = Route::new(scenario.ego.route.points.iter().map(|p| Vec2::new(p[0], p[1])).collect());
        let goal = scenario.goal.unwrap_or_else(|| {
            let end = route.pose_at(route.length());
            Goal {
                x: end.x,
                y: end.y,
                radius: 2.0,
            }
        });
        let goal_s = route.project(goal.position()) - route.project(scenario.ego.initial_state().pose.position());
        Self {
            scenario,
            route,
            goal,
            goal_s: goal_s.max(1e-9),
        }
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn route(&self) -> &Route {
        &self.route
    }

    pub fn goal(&self) -> Goal {
        self.goal
    }

    pub fn dt(&self) -> f64 {
        self.scenario.dt
    }

    pub fn time(&self, tick: u64) -> f64 {
        tick as f64 * self.scenario.dt
    }

    pub fn agents(&self) -> &[AgentSpec] {
        &self.scenario.agents
    }

    pub fn agent_state(&self, index: usize, t: f64) -> AgentKinematics {
        motion_at(&self.scenario.agents[index].motion, t)
    }

    pub fn agent_box(&self, index: usize, t: f64) -> OrientedBox {
        let spec = &self.scenario.agents[index];
        OrientedBox::from_dims(self.agent_state(index, t).pose, spec.length, spec.width).expect("validated dimensions")
    }

    /// What the quick path sees: ghosts included, hidden agents withheld.
    pub fn perceived_tracks(&self, t: f64) -> Vec<AgentTrack> {
        self.agents()
            .iter()
            .enumerate()
            .filter(|(_, a)| !a.hidden_at(t))
            .map(|(i, a)| {
                let k = self.agent_state(i, t);
                let mut track = AgentTrack::new(a.id.clone(), self.agent_box(i, t), k.velocity, k.heading_rate);
                track.ghost = a.ghost;
                track
            })
            .collect()
    }

    pub fn ego_box(&self, ego: &VehicleState) -> OrientedBox {
        OrientedBox::from_dims(ego.pose, self.scenario.ego.length, self.scenario.ego.width).expect("validated dimensions")
    }

    /// Indices of real agents whose footprint overlaps the ego at `t`.
    pub fn overlaps(&self, ego: &VehicleState, t: f64) -> Vec<usize> {
        let ego_box = self.ego_box(ego);
        (0..self.agents().len())
            .filter(|&i| !self.scenario.agents[i].ghost)
            .filter(|&i| obb_intersects(&ego_box, &self.agent_box(i, t)))
            .collect()
    }

    fn next_plan_speed(&self, v: f64) -> f64 {
        let route = &self.scenario.ego.route;
        let dv = route.plan_accel * self.scenario.dt;
        if v < route.cruise_speed {
            (v + dv).min(route.cruise_speed)
        } else {
            (v - dv).max(route.cruise_speed)
        }
    }

    /// Plan of `steps` waypoints along the route, ramping toward cruise speed.
    pub fn plan(&self, ego: &VehicleState, steps: usize) -> Trajectory {
        let dt = self.scenario.dt;
        let mut s = self.route.project(ego.pose.position());
        let mut v = ego.speed;
        let waypoints = (0..steps)
            .map(|_| {
                let next = self.next_plan_speed(v);
                s += (v + next) / 2.0 * dt;
                v = next;
                self.route.pose_at(s)
            })
            .collect();
        Trajectory::new(waypoints)
    }

    /// One tick of plan following: the ego lands on the first waypoint.
    pub fn follow(&self, ego: &VehicleState) -> VehicleState {
        let pose = self.plan(ego, 1).waypoints[0];
        VehicleState {
            pose,
            speed: self.next_plan_speed(ego.speed),
            ..*ego
        }
    }

    /// Fraction of the route to the goal covered, in `[0, 1]`.
    pub fn route_completion(&self, ego: &VehicleState) -> f64 {
        let start = self.route.project(self.scenario.ego.initial_state().pose.position());
        ((self.route.project(ego.pose.position()) - start) / self.goal_s).clamp(0.0, 1.0)
    }

    pub fn at_goal(&self, ego: &VehicleState) -> bool {
        ego.pose.position().distance(self.goal.position()) <= self.goal.radius
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-9
    }

    #[test]
    fn route_pose_and_projection() {
        let r = Route::new(vec![Vec2::new(0.0, 0.0), Vec2::new(10.0, 0.0), Vec2::new(10.0, 10.0)]);
        assert_eq!(r.length(), 20.0);
        let p = r.pose_at(15.0);
        assert!(approx(p.x, 10.0) && approx(p.y, 5.0) && approx(p.heading, std::f64::consts::FRAC_PI_2));
        let beyond = r.pose_at(25.0);
        assert!(approx(beyond.y, 15.0));
        let before = r.pose_at(-3.0);
        assert!(approx(before.x, -3.0));
        assert!(approx(r.project(Vec2::new(4.0, -1.0)), 4.0));
        assert!(approx(r.project(Vec2::new(11.0, 7.0)), 17.0));
        assert!(approx(r.project(Vec2::new(-2.0, 0.5)), -2.0));
    }

    #[test]
    fn constant_twist_straight_and_turning() {
        let m = Motion::ConstantTwist {
            x: 1.0,
            y: 2.0,
            heading: 0.0,
            speed: 3.0,
            yaw_rate: 0.0,
            start_time: 1.0,
            stop_time: Some(3.0),
        };
        assert_eq!(motion_at(&m, 0.5).velocity, Vec2::ZERO);
        let k = motion_at(&m, 2.0);
        assert!(approx(k.pose.x, 4.0) && approx(k.velocity.x, 3.0));
        let k = motion_at(&m, 10.0);
        assert!(approx(k.pose.x, 7.0) && k.velocity == Vec2::ZERO);

        // quarter circle of radius 2
        let m = Motion::ConstantTwist {
            x: 0.0,
            y: 0.0,
            heading: 0.0,
            speed: 2.0,
            yaw_rate: 1.0,
            start_time: 0.0,
            stop_time: None,
        };
        let k = motion_at(&m, std::f64::consts::FRAC_PI_2);
        assert!(approx(k.pose.x, 2.0) && approx(k.pose.y, 2.0));
    }

    #[test]
    fn speed_profile_integrates_trapezoids() {
        let m = Motion::SpeedProfile {
            x: 0.0,
            y: 0.0,
            heading: 0.0,
            profile: vec![[1.0, 10.0], [3.0, 0.0]],
        };
        // 10 m in the first second, then a 2 s ramp to rest covering 10 m
        assert!(approx(motion_at(&m, 1.0).pose.x, 10.0));
        assert!(approx(motion_at(&m, 2.0).pose.x, 17.5));
        assert!(approx(motion_at(&m, 5.0).pose.x, 20.0));
        assert!(approx(motion_at(&m, 2.0).velocity.x, 5.0));
    }

    #[test]
    fn waypoint_schedule_interpolates() {
        let m = Motion::Waypoints {
            schedule: vec![[0.0, 0.0, 0.0], [2.0, 0.0, 4.0], [4.0, 0.0, 4.0]],
            heading: 0.3,
        };
        let k = motion_at(&m, 1.0);
        assert!(approx(k.pose.y, 2.0) && approx(k.velocity.y, 2.0));
        assert!(approx(k.pose.heading, std::f64::consts::FRAC_PI_2));
        let k = motion_at(&m, 3.0);
        assert_eq!(k.velocity, Vec2::ZERO);
        assert!(approx(k.pose.heading, std::f64::consts::FRAC_PI_2));
    }
}
