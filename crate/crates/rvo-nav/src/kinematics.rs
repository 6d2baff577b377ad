//! Differential-drive kinematics: velocity increments, conversion from
//! holonomic velocity commands to (linear, angular) controls, and state
//! integration.

use serde::{Deserialize, Serialize};

use crate::vec2::Vec2;
use crate::world::RobotState;

/// Linear and angular velocity command for a differential-drive robot.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiffDriveCommand {
    /// Transitional velocity along the robot heading (m/s); may be negative.
    pub linear: f64,
    /// Rotation rate (rad/s).
    pub angular: f64,
}

/// Timing and velocity limits for the kinematics layer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KinematicsConfig {
    /// Settling time for rotation corrections (s).
    pub tau: f64,
    /// Simulation step (s).
    pub dt: f64,
    /// Per-component velocity bounds (m/s).
    pub v_min: f64,
    pub v_max: f64,
    /// Scale applied to the velocity increment.
    pub mu: f64,
    /// Clip the velocity norm to `v_max` instead of clipping per component.
    pub norm_clip: bool,
}

impl Default for KinematicsConfig {
    fn default() -> Self {
        KinematicsConfig {
            tau: 0.2,
            dt: 0.1,
            v_min: -1.5,
            v_max: 1.5,
            mu: 1.0,
            norm_clip: false,
        }
    }
}

/// Wrap an angle to (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let r = a.rem_euclid(two_pi);
    if r > std::f64::consts::PI {
        r - two_pi
    } else {
        r
    }
}

/// Next holonomic velocity: `v_prev + mu * action`, clipped to the
/// configured bounds.
pub fn apply_increment(v_prev: Vec2, action: Vec2, cfg: &KinematicsConfig) -> Vec2 {
    let v = v_prev + action * cfg.mu;
    if cfg.norm_clip {
        let n = v.norm();
        if n > cfg.v_max {
            return v * (cfg.v_max / n);
        }
        v
    } else {
        Vec2::new(v.x.clamp(cfg.v_min, cfg.v_max), v.y.clamp(cfg.v_min, cfg.v_max))
    }
}

/// Decompose a holonomic velocity into differential-drive controls.
///
/// With `sigma` the heading error between the robot orientation and the
/// velocity direction, the transitional velocity is the speed component
/// along the heading, `|v| * cos(sigma)`, and the rotation rate
/// `-sigma / tau` steers the heading onto the velocity direction.
pub fn to_diff_drive(v: Vec2, orientation: f64, cfg: &KinematicsConfig) -> DiffDriveCommand {
    let speed = v.norm();
    if speed < 1e-9 {
        return DiffDriveCommand { linear: 0.0, angular: 0.0 };
    }
    let sigma = wrap_angle(orientation - v.angle());
    DiffDriveCommand {
        linear: speed * sigma.cos(),
        angular: -sigma / cfg.tau,
    }
}

/// Advance a robot one step under a differential-drive command: rotate
/// first, then translate along the new heading. The stored world velocity is
/// the realized one, `linear * heading`.
pub fn integrate(state: &RobotState, cmd: DiffDriveCommand, cfg: &KinematicsConfig) -> RobotState {
    let mut next = state.clone();
    next.orientation = wrap_angle(state.orientation + cmd.angular * cfg.dt);
    let heading = Vec2::from_angle(next.orientation);
    next.velocity = heading * cmd.linear;
    next.position = state.position + next.velocity * cfg.dt;
    next
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn cfg() -> KinematicsConfig {
        KinematicsConfig::default()
    }

    #[test]
    fn increment_adds_and_clips() {
        let c = cfg();
        assert_eq!(
            apply_increment(Vec2::ZERO, Vec2::new(0.5, -0.5), &c),
            Vec2::new(0.5, -0.5)
        );
        assert_eq!(
            apply_increment(Vec2::new(1.4, 0.0), Vec2::new(0.5, 0.0), &c),
            Vec2::new(1.5, 0.0)
        );
        assert_eq!(
            apply_increment(Vec2::new(-1.5, -1.5), Vec2::new(-1.0, -1.0), &c),
            Vec2::new(-1.5, -1.5)
        );
    }

    #[test]
    fn increment_clipping_is_idempotent() {
        let c = cfg();
        let v = apply_increment(Vec2::new(1.2, -0.8), Vec2::new(0.9, -1.4), &c);
        assert_eq!(apply_increment(v, Vec2::ZERO, &c), v);
    }

    #[test]
    fn aligned_velocity_gives_pure_translation() {
        let cmd = to_diff_drive(Vec2::new(1.0, 0.0), 0.0, &cfg());
        assert_relative_eq!(cmd.linear, 1.0, epsilon = 1e-12);
        assert_relative_eq!(cmd.angular, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn perpendicular_velocity_gives_pure_rotation() {
        // Velocity to the robot's right: heading error sigma = +pi/2, so the
        // rotation rate is -(pi/2)/tau and the transitional velocity vanishes.
        let cmd = to_diff_drive(Vec2::new(0.0, -1.0), 0.0, &cfg());
        assert_relative_eq!(cmd.linear, 0.0, epsilon = 1e-12);
        assert_relative_eq!(cmd.angular, -FRAC_PI_2 / 0.2, epsilon = 1e-12);
        // To the left the turn has the opposite sign.
        let left = to_diff_drive(Vec2::new(0.0, 1.0), 0.0, &cfg());
        assert_relative_eq!(left.angular, FRAC_PI_2 / 0.2, epsilon = 1e-12);
    }

    #[test]
    fn wrap_around_heading() {
        let cmd = to_diff_drive(Vec2::new(-1.0, 0.0), PI, &cfg());
        assert_relative_eq!(cmd.linear, 1.0, epsilon = 1e-12);
        assert_relative_eq!(cmd.angular, 0.0, epsilon = 1e-10);
    }

    #[test]
    fn reversed_velocity_gives_negative_linear() {
        let cmd = to_diff_drive(Vec2::new(-1.0, 0.0), 0.0, &cfg());
        assert_relative_eq!(cmd.linear, -1.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_velocity_stops() {
        let cmd = to_diff_drive(Vec2::new(1e-12, 0.0), 1.0, &cfg());
        assert_eq!(cmd, DiffDriveCommand { linear: 0.0, angular: 0.0 });
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert_relative_eq!(wrap_angle(3.0 * PI), PI, epsilon = 1e-12);
        for k in -20..20 {
            let a = 0.37 * k as f64;
            let w = wrap_angle(a);
            assert!(w > -PI && w <= PI, "wrap({a}) = {w}");
            assert_relative_eq!((a - w).rem_euclid(2.0 * PI).min(2.0 * PI - (a - w).rem_euclid(2.0 * PI)), 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn integrate_straight_line() {
        let state = RobotState::at(Vec2::ZERO, 0.0, Vec2::new(5.0, 0.0));
        let next = integrate(&state, DiffDriveCommand { linear: 1.0, angular: 0.0 }, &cfg());
        assert_relative_eq!(next.position.x, 0.1, epsilon = 1e-12);
        assert_relative_eq!(next.position.y, 0.0, epsilon = 1e-12);
        assert_eq!(next.velocity, Vec2::new(1.0, 0.0));
    }

    #[test]
    fn integrate_pure_rotation() {
        let state = RobotState::at(Vec2::ZERO, 0.0, Vec2::new(5.0, 0.0));
        let next = integrate(
            &state,
            DiffDriveCommand { linear: 0.0, angular: PI / 0.1 },
            &cfg(),
        );
        assert_eq!(next.position, Vec2::ZERO);
        assert_relative_eq!(next.orientation, PI, epsilon = 1e-12);
    }

    #[test]
    fn heading_error_shrinks_under_the_controller() {
        let c = cfg();
        let target = Vec2::new(0.0, 1.0);
        let mut state = RobotState::at(Vec2::ZERO, 0.1, Vec2::new(0.0, 5.0));
        let mut prev_err = wrap_angle(state.orientation - target.angle()).abs();
        for _ in 0..20 {
            let cmd = to_diff_drive(target, state.orientation, &c);
            state = integrate(&state, cmd, &c);
            let err = wrap_angle(state.orientation - target.angle()).abs();
            assert!(err <= prev_err + 1e-12, "err grew: {prev_err} -> {err}");
            prev_err = err;
        }
        assert!(prev_err < 1e-3);
    }

    #[test]
    fn closed_loop_reaches_goal() {
        // Aim the commanded velocity straight at a goal 5 m ahead every step;
        // the robot must arrive well within 1.5x the straight-line time.
        let c = cfg();
        let goal = Vec2::new(5.0, 0.0);
        let mut state = RobotState::at(Vec2::ZERO, 2.5, goal);
        let budget = (5.0 / c.v_max * 1.5 / c.dt).ceil() as usize;
        let mut arrived_at = None;
        for step in 0..budget {
            let to_goal = goal - state.position;
            if to_goal.norm() < 0.1 {
                arrived_at = Some(step);
                break;
            }
            let dir = to_goal.try_normalize().unwrap();
            let speed = c.v_max.min(to_goal.norm() / c.dt);
            let cmd = to_diff_drive(dir * speed, state.orientation, &c);
            state = integrate(&state, cmd, &c);
        }
        assert!(arrived_at.is_some(), "did not reach goal in {budget} steps");
    }
}
