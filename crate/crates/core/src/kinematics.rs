//! Kinematic bicycle model, referenced at the center of gravity.
//!
//! Controls are held constant over each step (zero-order hold) and the state
//! is integrated with forward Euler over [`EULER_SUBSTEPS`] equal substeps.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{normalize_angle, Pose2D};

/// Euler substeps per call to [`bicycle_step`]. The substep count is fixed,
/// not the substep length, so the scheme stays first order in `dt`.
pub const EULER_SUBSTEPS: u32 = 200;

/// Front axle to CG and rear axle to CG, 2.874 m wheelbase.
pub const DEFAULT_AXLE_DISTANCE: f64 = 1.437;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("steer {steer} rad exceeds limit {limit} rad")]
    SteerOutOfRange { steer: f64, limit: f64 },
    #[error("acceleration {accel} m/s² outside [{min}, {max}]")]
    AccelOutOfRange { accel: f64, min: f64, max: f64 },
    #[error("axle distances must be positive (lf = {lf}, lr = {lr})")]
    BadAxles { lf: f64, lr: f64 },
    #[error("speed must be finite and non-negative, got {0}")]
    BadSpeed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub pose: Pose2D,
    pub speed: f64,
    /// Front axle to center of gravity.
    pub lf: f64,
    /// Rear axle to center of gravity.
    pub lr: f64,
}

impl VehicleState {
    pub fn new(pose: Pose2D, speed: f64) -> Self {
        Self {
            pose,
            speed,
            lf: DEFAULT_AXLE_DISTANCE,
            lr: DEFAULT_AXLE_DISTANCE,
        }
    }

    pub fn with_axles(mut self, lf: f64, lr: f64) -> Self {
        self.lf = lf;
        self.lr = lr;
        self
    }

    pub fn validate(&self) -> Result<(), KinematicsError> {
        if !(self.lf > 0.0 && self.lr > 0.0) {
            return Err(KinematicsError::BadAxles {
                lf: self.lf,
                lr: self.lr,
            });
        }
        if !(self.speed.is_finite() && self.speed >= 0.0) {
            return Err(KinematicsError::BadSpeed(self.speed));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Control {
    pub accel: f64,
    /// Front-wheel angle.
    pub steer: f64,
}

impl Control {
    pub const COAST: Control = Control {
        accel: 0.0,
        steer: 0.0,
    };

    pub fn new(accel: f64, steer: f64) -> Self {
        Self { accel, steer }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControlLimits {
    pub steer_max: f64,
    pub accel_min: f64,
    pub accel_max: f64,
}

impl Default for ControlLimits {
    fn default() -> Self {
        Self {
            steer_max: 0.6,
            accel_min: -8.0,
            accel_max: 3.0,
        }
    }
}

impl ControlLimits {
    pub fn check(&self, u: &Control) -> Result<(), KinematicsError> {
        if !(u.steer.abs() <= self.steer_max) {
            return Err(KinematicsError::SteerOutOfRange {
                steer: u.steer,
                limit: self.steer_max,
            });
        }
        if !(u.accel >= self.accel_min && u.accel <= self.accel_max) {
            return Err(KinematicsError::AccelOutOfRange {
                accel: u.accel,
                min: self.accel_min,
                max: self.accel_max,
            });
        }
        Ok(())
    }

    pub fn clamp(&self, u: Control) -> Control {
        Control {
            accel: u.accel.clamp(self.accel_min, self.accel_max),
            steer: u.steer.clamp(-self.steer_max, self.steer_max),
        }
    }
}

/// Slip angle at the CG for a front-wheel angle.
pub fn slip_angle(steer: f64, lf: f64, lr: f64) -> f64 {
    (lr * steer.tan() / (lf + lr)).atan()
}

/// Advances the state by `dt` under a constant control. Speed is clamped at
/// zero: a vehicle that brakes to a stop stays stopped.
pub fn bicycle_step(s: &VehicleState, u: &Control, dt: f64) -> VehicleState {
    debug_assert!(dt > 0.0);
    let h = dt / EULER_SUBSTEPS as f64;
    let beta = slip_angle(u.steer, s.lf, s.lr);
    let sin_beta = beta.sin();
    let (mut x, mut y, mut heading, mut v) = (s.pose.x, s.pose.y, s.pose.heading, s.speed);
    for _ in 0..EULER_SUBSTEPS {
        if v == 0.0 && u.accel <= 0.0 {
            break;
        }
        let (sin_hb, cos_hb) = (heading + beta).sin_cos();
        x += v * cos_hb * h;
        y += v * sin_hb * h;
        heading += v * sin_beta / s.lr * h;
        v = (v + u.accel * h).max(0.0);
    }
    VehicleState {
        pose: Pose2D {
            x,
            y,
            heading: normalize_angle(heading),
        },
        speed: v,
        ..*s
    }
}

/// Repeated [`bicycle_step`]; element `k` is the state after `k + 1` steps.
pub fn rollout(s: &VehicleState, controls: &[Control], dt: f64) -> Vec<VehicleState> {
    controls
        .iter()
        .scan(*s, |state, u| {
            *state = bicycle_step(state, u, dt);
            Some(*state)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(x: f64, y: f64, heading: f64, speed: f64) -> VehicleState {
        VehicleState::new(Pose2D::new(x, y, heading), speed)
    }

    #[test]
    fn stationary_stays_put() {
        let s = state(3.0, -2.0, 0.4, 0.0);
        for steer in [-0.6, 0.0, 0.3] {
            let next = bicycle_step(&s, &Control::new(0.0, steer), 0.2);
            assert_eq!(next.pose, s.pose);
            assert_eq!(next.speed, 0.0);
        }
    }

    #[test]
    fn straight_line_step() {
        let s = state(0.0, 0.0, 0.0, 10.0);
        let next = bicycle_step(&s, &Control::COAST, 0.2);
        assert!((next.pose.x - 2.0).abs() < 1e-12);
        assert_eq!(next.pose.y, 0.0);
        assert_eq!(next.pose.heading, 0.0);
        assert_eq!(next.speed, 10.0);
    }

    #[test]
    fn braking_clamps_at_zero() {
        let s = state(0.0, 0.0, 0.0, 1.0);
        let next = bicycle_step(&s, &Control::new(-8.0, 0.0), 0.2);
        assert_eq!(next.speed, 0.0);
        // stops after 0.125 s: travelled v^2 / 2a = 1/16 m, up to one substep
        assert!((next.pose.x - 1.0 / 16.0).abs() < 1.0 * 0.2 / EULER_SUBSTEPS as f64);
    }

    #[test]
    fn rollout_lengths_and_fold() {
        let s = state(0.0, 0.0, 0.0, 0.0);
        let one = rollout(&s, &[Control::COAST], 0.2);
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].pose, s.pose);

        let v = 7.5;
        let moving = state(1.0, 1.0, 0.0, v);
        let out = rollout(&moving, &[Control::COAST; 15], 0.2);
        assert_eq!(out.len(), 15);
        assert!((out[14].pose.x - (1.0 + 15.0 * v * 0.2)).abs() < 1e-9);

        let controls = [Control::new(1.0, 0.1), Control::new(-2.0, -0.3), Control::new(0.5, 0.6)];
        let out = rollout(&moving, &controls, 0.1);
        let mut manual = moving;
        for (u, got) in controls.iter().zip(&out) {
            manual = bicycle_step(&manual, u, 0.1);
            assert_eq!(&manual, got);
        }
    }

    #[test]
    fn limits_check_and_clamp() {
        let lim = ControlLimits::default();
        assert!(lim.check(&Control::new(0.0, 0.6)).is_ok());
        assert!(lim.check(&Control::new(0.0, 0.61)).is_err());
        assert!(lim.check(&Control::new(-8.5, 0.0)).is_err());
        assert!(lim.check(&Control::new(3.0, 0.0)).is_ok());
        assert_eq!(lim.clamp(Control::new(9.0, -2.0)), Control::new(3.0, -0.6));
    }

    #[test]
    fn state_validation() {
        assert!(state(0.0, 0.0, 0.0, 1.0).validate().is_ok());
        assert!(state(0.0, 0.0, 0.0, -1.0).validate().is_err());
        assert!(state(0.0, 0.0, 0.0, 1.0).with_axles(0.0, 1.0).validate().is_err());
    }
}
