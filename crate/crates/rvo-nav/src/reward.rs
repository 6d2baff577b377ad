//! The RVO-area and expected-collision-time reward.
//!
//! A step reward is picked from three branches, evaluated top-down:
//! tracking the desired velocity while safe, a risk charge while inside the
//! joint cone area, and a steep penalty once the expected collision time
//! drops below the danger threshold.

use serde::{Deserialize, Serialize};

use crate::geometry::contains;
use crate::vec2::Vec2;
use crate::world::Observation;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub f: f64,
    /// Expected collision times above this count as safe (s).
    pub safe_time_hi: f64,
    /// Expected collision times at or below this are imminent danger (s).
    pub danger_time_lo: f64,
    /// Optional terminal shaping, disabled by default.
    pub arrival_bonus: f64,
    pub collision_penalty: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        RewardParams {
            a: 0.3,
            b: 1.0,
            c: 0.3,
            d: 1.2,
            e: 3.6,
            f: 0.2,
            safe_time_hi: 5.0,
            danger_time_lo: 0.1,
            arrival_bonus: 0.0,
            collision_penalty: 0.0,
        }
    }
}

/// Joint risk of a velocity against everything currently sensed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RiskSummary {
    /// Whether the velocity lies inside any sensed cone.
    pub in_joint_rvo: bool,
    /// Minimum expected collision time over all sensed sources (s);
    /// infinite when no source can be hit under current velocities.
    pub xi: f64,
}

/// Evaluate a velocity against the cones of the current observation.
///
/// Membership is tested against every cone; the expected collision time is
/// the minimum the observation recorded, which was computed under the same
/// current velocities the cones were built from.
pub fn assess(obs: &Observation, v: Vec2) -> RiskSummary {
    let in_joint_rvo = obs.neighbors.iter().any(|n| contains(&n.cone, v));
    let xi = obs
        .neighbors
        .iter()
        .map(|n| n.time_to_collision)
        .fold(f64::INFINITY, f64::min);
    RiskSummary { in_joint_rvo, xi }
}

/// The three-branch reward, first match wins:
///
/// 1. outside the joint area or `xi` beyond the safe horizon:
///    `a - b * ||v - v_des||`
/// 2. inside the joint area with `xi` above the danger floor:
///    `c - d / (xi + f)`
/// 3. `xi` at or below the danger floor: `-e / (xi + f)`
pub fn rvo_reward(v: Vec2, v_des: Vec2, risk: RiskSummary, p: &RewardParams) -> f64 {
    if !risk.in_joint_rvo || risk.xi > p.safe_time_hi {
        p.a - p.b * (v - v_des).norm()
    } else if risk.xi > p.danger_time_lo {
        p.c - p.d / (risk.xi + p.f)
    } else {
        -p.e / (risk.xi + p.f)
    }
}
