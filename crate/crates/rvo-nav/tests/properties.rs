//! Property tests over the geometry and kinematics invariants.

use proptest::prelude::*;

use rvo_nav::geometry::{collision_time, contains, rvo_disc, vo_disc, Disc};
use rvo_nav::kinematics::{apply_increment, to_diff_drive, wrap_angle, KinematicsConfig};
use rvo_nav::vec2::Vec2;
use rvo_nav::world::{sense, RobotState, SensingConfig};

fn vec2(range: f64) -> impl Strategy<Value = Vec2> {
    (-range..range, -range..range).prop_map(|(x, y)| Vec2::new(x, y))
}

proptest! {
    #[test]
    fn wrap_angle_lands_in_half_open_interval(a in -50.0..50.0f64) {
        let w = wrap_angle(a);
        prop_assert!(w > -std::f64::consts::PI && w <= std::f64::consts::PI);
        // Same angle modulo a full turn.
        let diff = (a - w).rem_euclid(2.0 * std::f64::consts::PI);
        prop_assert!(diff < 1e-9 || (2.0 * std::f64::consts::PI - diff) < 1e-9);
    }

    #[test]
    fn cone_legs_are_unit_and_rvo_apex_is_midpoint(
        pa in vec2(4.0),
        pb in vec2(4.0),
        va in vec2(1.5),
        vb in vec2(1.5),
    ) {
        prop_assume!(pa.distance(pb) > 1e-6);
        let a = Disc::new(pa, 0.3);
        let b = Disc::new(pb, 0.3);
        let vo = vo_disc(a, va, b, vb);
        let rvo = rvo_disc(a, va, b, vb);
        prop_assert!((vo.left_dir.norm() - 1.0).abs() <= 1e-9);
        prop_assert!((vo.right_dir.norm() - 1.0).abs() <= 1e-9);
        // Identical legs, apex moved to the velocity average.
        prop_assert!((rvo.left_dir - vo.left_dir).norm() <= 1e-12);
        prop_assert!((rvo.right_dir - vo.right_dir).norm() <= 1e-12);
        prop_assert_eq!(rvo.apex, (va + vb) * 0.5);
    }

    #[test]
    fn collision_time_scales_inversely(
        rel_pos in vec2(4.0),
        tilt in -0.8..0.8f64,
        speed in 0.2..2.0f64,
        k in 1.1..4.0f64,
    ) {
        prop_assume!(rel_pos.norm() > 0.7);
        // Aim within the collision cone so the time is always finite.
        let half = (0.6 / rel_pos.norm()).asin();
        let rel_vel = Vec2::from_angle(rel_pos.angle() + tilt * half) * speed;
        let t = collision_time(rel_pos, rel_vel, 0.6);
        prop_assert!(t.is_finite());
        let t_scaled = collision_time(rel_pos, rel_vel * k, 0.6);
        prop_assert!((t_scaled - t / k).abs() <= 1e-9 * (1.0 + t));
    }

    #[test]
    fn membership_is_boundary_inclusive_at_the_apex(
        pa in vec2(4.0),
        pb in vec2(4.0),
        vb in vec2(1.5),
    ) {
        prop_assume!(pa.distance(pb) > 0.7);
        let cone = vo_disc(Disc::new(pa, 0.3), Vec2::ZERO, Disc::new(pb, 0.3), vb);
        prop_assert!(contains(&cone, cone.apex));
    }

    #[test]
    fn linear_velocity_sign_follows_heading_error(
        speed in 0.1..1.5f64,
        v_angle in -3.1..3.1f64,
        orientation in -3.1..3.1f64,
    ) {
        let cfg = KinematicsConfig::default();
        let v = Vec2::from_angle(v_angle) * speed;
        let cmd = to_diff_drive(v, orientation, &cfg);
        let sigma = wrap_angle(orientation - v_angle);
        if sigma.abs() < std::f64::consts::FRAC_PI_2 - 1e-6 {
            prop_assert!(cmd.linear > 0.0);
        } else if sigma.abs() > std::f64::consts::FRAC_PI_2 + 1e-6 {
            prop_assert!(cmd.linear < 0.0);
        }
    }

    #[test]
    fn increment_clipping_is_idempotent(v in vec2(3.0), a in vec2(3.0)) {
        let cfg = KinematicsConfig::default();
        let once = apply_increment(v, a, &cfg);
        prop_assert_eq!(apply_increment(once, Vec2::ZERO, &cfg), once);
        prop_assert!(once.x.abs() <= cfg.v_max && once.y.abs() <= cfg.v_max);
    }

    #[test]
    fn observation_ordering_invariant(
        positions in proptest::collection::vec(vec2(3.5), 2..8),
        velocities in proptest::collection::vec(vec2(1.5), 8),
    ) {
        let robots: Vec<RobotState> = positions
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                let mut r = RobotState::at(p, 0.0, Vec2::new(5.0, 5.0));
                r.id = i;
                r.velocity = velocities[i % velocities.len()];
                r
            })
            .collect();
        // Well-separated robots only; overlapping starts are not sensed
        // scenarios the generator can produce.
        for i in 0..robots.len() {
            for j in 0..i {
                prop_assume!(robots[i].position.distance(robots[j].position) > 0.65);
            }
        }
        let sensing = SensingConfig::default();
        let obs = sense(&robots, &[], 0, |_| true, &sensing, 1.5, 0.1);
        prop_assert!(obs.neighbors.len() <= sensing.max_neighbors);
        for w in obs.neighbors.windows(2) {
            let ordered = w[0].risk < w[1].risk
                || (w[0].risk == w[1].risk && w[0].distance >= w[1].distance);
            prop_assert!(ordered, "risk/distance ordering violated");
        }
    }
}
