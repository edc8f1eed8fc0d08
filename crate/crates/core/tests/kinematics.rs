mod common;

use dual_aeb::kinematics::{bicycle_step, rollout, slip_angle, Control, ControlLimits};
use dual_aeb::{Pose2D, VehicleState};
use proptest::prelude::*;

use common::{random_controls, rk4_rollout, rng};

const DT: f64 = 0.2;

#[test]
fn matches_rk4_reference_over_ten_seconds() {
    let mut r = rng(11);
    let mut worst: f64 = 0.0;
    for _ in 0..25 {
        let s = VehicleState::new(Pose2D::new(0.0, 0.0, 0.3), 12.0);
        let controls = random_controls(&mut r, 50);
        let ours = rollout(&s, &controls, DT);
        let reference = rk4_rollout(&s, &controls, DT, 1e-4);
        for (a, b) in ours.iter().zip(&reference) {
            worst = worst.max(((a.pose.x - b.0).powi(2) + (a.pose.y - b.1).powi(2)).sqrt());
        }
    }
    assert!(worst < 0.05, "max position error {worst}");
}

#[test]
fn straight_line_is_exact() {
    let s = VehicleState::new(Pose2D::new(1.0, 2.0, 0.0), 10.0);
    let n = bicycle_step(&s, &Control::COAST, DT);
    assert!((n.pose.x - 3.0).abs() < 1e-9 && (n.pose.y - 2.0).abs() < 1e-12);
    assert_eq!(n.speed, 10.0);
}

#[test]
fn braking_stops_and_stays_stopped() {
    let s = VehicleState::new(Pose2D::new(0.0, 0.0, 0.0), 1.0);
    let traj = rollout(&s, &[Control::new(-8.0, 0.0); 5], DT);
    assert_eq!(traj[0].speed, 0.0);
    // v² / 2a = 1 / 16
    assert!((traj[0].pose.x - 0.0625).abs() < 1e-3);
    assert!(traj.iter().all(|t| t.pose == traj[0].pose));
}

#[test]
fn limits_reject_out_of_range() {
    let lim = ControlLimits::default();
    assert!(lim.check(&Control::new(0.0, 0.7)).is_err());
    assert!(lim.check(&Control::new(-9.0, 0.0)).is_err());
    assert!(lim.check(&Control::new(-8.0, 0.6)).is_ok());
    assert_eq!(lim.clamp(Control::new(5.0, -1.0)), Control::new(3.0, -0.6));
}

#[test]
fn zero_steer_has_no_slip() {
    assert_eq!(slip_angle(0.0, 1.4, 1.4), 0.0);
    assert!(slip_angle(0.3, 1.4, 1.4) > 0.0);
}

proptest! {
    #[test]
    fn speed_never_negative(v in 0.0f64..30.0, accel in -8.0f64..3.0, steer in -0.6f64..0.6) {
        let s = VehicleState::new(Pose2D::new(0.0, 0.0, 0.0), v);
        let n = bicycle_step(&s, &Control::new(accel, steer), DT);
        prop_assert!(n.speed >= 0.0);
        prop_assert!(n.pose.heading >= -std::f64::consts::PI && n.pose.heading < std::f64::consts::PI);
    }

    #[test]
    fn distance_bounded_by_speed(v in 0.0f64..30.0, accel in -8.0f64..3.0, steer in -0.6f64..0.6) {
        let s = VehicleState::new(Pose2D::new(0.0, 0.0, 0.0), v);
        let n = bicycle_step(&s, &Control::new(accel, steer), DT);
        let travelled = n.pose.position().norm();
        prop_assert!(travelled <= (v + accel.max(0.0) * DT) * DT + 1e-9);
    }
}
