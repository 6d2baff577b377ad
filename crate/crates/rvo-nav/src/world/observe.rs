//! Range-limited sensing and observation assembly.
//!
//! An observation has a proprioceptive block
//! `[v_x, v_y, orientation, v_des_x, v_des_y, R_c]` and an ordered sequence
//! of neighbor blocks `[cone(6), distance, risk]`, one per sensed robot or
//! static segment.

use serde::{Deserialize, Serialize};

use crate::geometry::{
    collision_time, reciprocal_risk, rvo_disc, segment_collision_time, vo_segment, ConeSource,
    Disc, Segment, VoCone,
};
use crate::vec2::Vec2;
use crate::world::RobotState;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensingConfig {
    /// Sensing range d_l (m).
    pub range: f64,
    /// Maximum number of neighbor blocks fed to the policy.
    pub max_neighbors: usize,
}

impl Default for SensingConfig {
    fn default() -> Self {
        SensingConfig { range: 4.0, max_neighbors: 5 }
    }
}

/// What generated a neighbor block, with enough state to re-evaluate
/// collision times for candidate velocities (the reactive baseline needs
/// this; the learned policy only reads the numeric blocks).
#[derive(Clone, Debug)]
pub enum NeighborSource {
    Robot {
        /// Neighbor position relative to the observer (m).
        rel_pos: Vec2,
        /// Neighbor world velocity (m/s).
        velocity: Vec2,
        /// Neighbor collision radius (m).
        collision_radius: f64,
    },
    Wall {
        /// The segment in world coordinates.
        segment: Segment,
    },
}

/// One sensed neighbor: its cone, ranking keys, and raw relative state.
#[derive(Clone, Debug)]
pub struct NeighborObs {
    pub cone: VoCone,
    /// Center distance for robots, closest-point distance for segments (m).
    pub distance: f64,
    /// Expected collision time under current velocities (s, may be inf).
    pub time_to_collision: f64,
    /// Reciprocal risk `1/(t_e + 0.2)`.
    pub risk: f64,
    pub source: NeighborSource,
}

impl NeighborObs {
    /// The 8-real block `[apex, left, right, d, r_e]` consumed by the policy.
    pub fn block(&self) -> [f64; 8] {
        let c = self.cone.as_array();
        [c[0], c[1], c[2], c[3], c[4], c[5], self.distance, self.risk]
    }

    /// The 5-real raw block `[rel_p, rel_v, R]` used by the non-cone
    /// observation ablation. Walls appear as their closest point with zero
    /// own velocity and zero radius.
    pub fn raw_block(&self, observer_velocity: Vec2, observer_position: Vec2) -> [f64; 5] {
        match &self.source {
            NeighborSource::Robot { rel_pos, velocity, collision_radius } => {
                let rel_v = *velocity - observer_velocity;
                [rel_pos.x, rel_pos.y, rel_v.x, rel_v.y, *collision_radius]
            }
            NeighborSource::Wall { segment } => {
                let rel = segment.closest_point(observer_position) - observer_position;
                [rel.x, rel.y, -observer_velocity.x, -observer_velocity.y, 0.0]
            }
        }
    }
}

/// A robot's full observation for one step.
#[derive(Clone, Debug)]
pub struct Observation {
    /// `[v_x, v_y, orientation, v_des_x, v_des_y, R_c]`.
    pub self_block: [f64; 6],
    /// Observer world position; not part of the policy input.
    pub position: Vec2,
    /// Sorted neighbor sequence, ascending risk then descending distance.
    pub neighbors: Vec<NeighborObs>,
}

impl Observation {
    pub fn velocity(&self) -> Vec2 {
        Vec2::new(self.self_block[0], self.self_block[1])
    }

    pub fn desired_velocity(&self) -> Vec2 {
        Vec2::new(self.self_block[3], self.self_block[4])
    }
}

/// Maximum-speed velocity straight toward the goal, slowing on the last
/// step so the goal is not overshot; zero once arrived.
pub fn desired_velocity(state: &RobotState, v_max: f64, dt: f64) -> Vec2 {
    if state.arrived {
        return Vec2::ZERO;
    }
    let to_goal = state.goal - state.position;
    match to_goal.try_normalize() {
        Some(dir) => dir * v_max.min(to_goal.norm() / dt),
        None => Vec2::ZERO,
    }
}

/// Assemble the observation of `robots[id]` against every other robot for
/// which `include` holds and every segment, both within sensing range.
///
/// Robot neighbors produce reciprocal cones at collision radii; segments
/// produce plain velocity-obstacle cones. If more than `max_neighbors`
/// entities are in range the nearest ones by distance are kept.
pub fn sense(
    robots: &[RobotState],
    segments: &[Segment],
    id: usize,
    include: impl Fn(&RobotState) -> bool,
    sensing: &SensingConfig,
    v_max: f64,
    dt: f64,
) -> Observation {
    let me = &robots[id];
    let my_disc = Disc::new(me.position, me.collision_radius);
    let mut neighbors: Vec<NeighborObs> = Vec::new();

    for other in robots.iter().filter(|r| r.id != id && include(r)) {
        let rel_pos = other.position - me.position;
        let distance = rel_pos.norm();
        if distance > sensing.range {
            continue;
        }
        let mut cone = rvo_disc(
            my_disc,
            me.velocity,
            Disc::new(other.position, other.collision_radius),
            other.velocity,
        );
        cone.source = ConeSource::Robot(other.id);
        let t_e = collision_time(
            rel_pos,
            me.velocity - other.velocity,
            me.collision_radius + other.collision_radius,
        );
        neighbors.push(NeighborObs {
            cone,
            distance,
            time_to_collision: t_e,
            risk: reciprocal_risk(t_e),
            source: NeighborSource::Robot {
                rel_pos,
                velocity: other.velocity,
                collision_radius: other.collision_radius,
            },
        });
    }

    for (sid, seg) in segments.iter().enumerate() {
        let distance = seg.distance(me.position);
        if distance > sensing.range {
            continue;
        }
        let mut cone = vo_segment(my_disc, *seg);
        cone.source = ConeSource::Segment(sid);
        let t_e = segment_collision_time(me.position, me.velocity, *seg, me.collision_radius);
        neighbors.push(NeighborObs {
            cone,
            distance,
            time_to_collision: t_e,
            risk: reciprocal_risk(t_e),
            source: NeighborSource::Wall { segment: *seg },
        });
    }

    if neighbors.len() > sensing.max_neighbors {
        neighbors.sort_by(|a, b| a.distance.total_cmp(&b.distance));
        neighbors.truncate(sensing.max_neighbors);
    }
    neighbors.sort_by(|a, b| {
        a.risk
            .total_cmp(&b.risk)
            .then_with(|| b.distance.total_cmp(&a.distance))
    });

    let v_des = desired_velocity(me, v_max, dt);
    Observation {
        self_block: [
            me.velocity.x,
            me.velocity.y,
            me.orientation,
            v_des.x,
            v_des.y,
            me.collision_radius,
        ],
        position: me.position,
        neighbors,
    }
}
