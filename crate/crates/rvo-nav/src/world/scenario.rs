//! Scenario generation: circle, random, and corridor layouts.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Segment;
use crate::kinematics::wrap_angle;
use crate::vec2::Vec2;
use crate::world::RobotState;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    /// Robots evenly spaced on a circle, goals on the opposite side.
    Circle,
    /// Start and goal positions rejection-sampled with a minimum interval.
    Random,
    /// Two facing rows inside a segment-walled corridor.
    Corridor,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    pub robot_count: usize,
    /// Width and height of the workspace (m).
    pub world_size: (f64, f64),
    /// Circle layout radius (m).
    pub circle_radius: f64,
    /// Minimum pairwise interval for sampled positions (m).
    pub min_separation: f64,
    /// Physical robot radius (m).
    pub robot_radius: f64,
    /// Virtual collision radius R_c (m).
    pub collision_radius: f64,
    /// Extra static line obstacles beyond the ones a layout itself adds.
    pub segment_obstacles: Vec<(f64, f64, f64, f64)>,
    pub rng_seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            kind: ScenarioKind::Circle,
            robot_count: 4,
            world_size: (9.0, 9.0),
            circle_radius: 4.5,
            min_separation: 1.0,
            robot_radius: 0.2,
            collision_radius: 0.3,
            segment_obstacles: Vec::new(),
            rng_seed: 0,
        }
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("could not place {robot_count} robots at separation {min_separation} within {tries} tries")]
    PackingFailed {
        robot_count: usize,
        min_separation: f64,
        tries: usize,
    },
    #[error("scenario needs at least 2 robots, got {0}")]
    TooFewRobots(usize),
}

const PACKING_TRIES: usize = 10_000;

/// Corridor concretization: 10 m long, 4 m wide, walls as two horizontal
/// segments, start columns 0.8 m in from each end.
const CORRIDOR_HALF_LEN: f64 = 5.0;
const CORRIDOR_HALF_WIDTH: f64 = 2.0;
const CORRIDOR_ROW_HALF_SPAN: f64 = 1.5;
const CORRIDOR_COLUMN_X: f64 = 4.2;

impl ScenarioConfig {
    pub fn extra_segments(&self) -> Vec<Segment> {
        self.segment_obstacles
            .iter()
            .map(|&(ax, ay, bx, by)| Segment::new(Vec2::new(ax, ay), Vec2::new(bx, by)))
            .collect()
    }
}

/// Generate robot states and static segments for a scenario.
///
/// Randomness (orientations, sampled positions) is drawn from the given
/// stream, so the same stream state reproduces the same scenario.
pub fn generate_scenario(
    cfg: &ScenarioConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<RobotState>, Vec<Segment>), ScenarioError> {
    if cfg.robot_count < 2 {
        return Err(ScenarioError::TooFewRobots(cfg.robot_count));
    }
    let mut segments = cfg.extra_segments();
    let robots = match cfg.kind {
        ScenarioKind::Circle => circle_layout(cfg, rng),
        ScenarioKind::Random => random_layout(cfg, rng)?,
        ScenarioKind::Corridor => {
            segments.extend(corridor_walls());
            corridor_layout(cfg)?
        }
    };
    Ok((robots, segments))
}

fn make_robot(cfg: &ScenarioConfig, id: usize, position: Vec2, orientation: f64, goal: Vec2) -> RobotState {
    RobotState {
        id,
        position,
        orientation: wrap_angle(orientation),
        velocity: Vec2::ZERO,
        radius: cfg.robot_radius,
        collision_radius: cfg.collision_radius,
        goal,
        arrived: false,
        collided: false,
    }
}

fn circle_layout(cfg: &ScenarioConfig, rng: &mut ChaCha8Rng) -> Vec<RobotState> {
    let n = cfg.robot_count;
    (0..n)
        .map(|i| {
            let theta = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
            let position = Vec2::from_angle(theta) * cfg.circle_radius;
            let orientation = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
            make_robot(cfg, i, position, orientation, -position)
        })
        .collect()
}

fn sample_separated(
    count: usize,
    half_w: f64,
    half_h: f64,
    min_sep: f64,
    rng: &mut ChaCha8Rng,
) -> Option<Vec<Vec2>> {
    let mut points: Vec<Vec2> = Vec::with_capacity(count);
    let mut tries = 0;
    while points.len() < count {
        if tries >= PACKING_TRIES {
            return None;
        }
        tries += 1;
        let p = Vec2::new(rng.gen_range(-half_w..half_w), rng.gen_range(-half_h..half_h));
        if points.iter().all(|q| q.distance(p) >= min_sep) {
            points.push(p);
        }
    }
    Some(points)
}

fn random_layout(cfg: &ScenarioConfig, rng: &mut ChaCha8Rng) -> Result<Vec<RobotState>, ScenarioError> {
    let (w, h) = cfg.world_size;
    let packing_err = || ScenarioError::PackingFailed {
        robot_count: cfg.robot_count,
        min_separation: cfg.min_separation,
        tries: PACKING_TRIES,
    };
    let starts = sample_separated(cfg.robot_count, w / 2.0, h / 2.0, cfg.min_separation, rng)
        .ok_or_else(packing_err)?;
    let goals = sample_separated(cfg.robot_count, w / 2.0, h / 2.0, cfg.min_separation, rng)
        .ok_or_else(packing_err)?;
    Ok(starts
        .into_iter()
        .zip(goals)
        .enumerate()
        .map(|(i, (p, g))| {
            let orientation = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
            make_robot(cfg, i, p, orientation, g)
        })
        .collect())
}

fn corridor_walls() -> Vec<Segment> {
    vec![
        Segment::new(
            Vec2::new(-CORRIDOR_HALF_LEN, -CORRIDOR_HALF_WIDTH),
            Vec2::new(CORRIDOR_HALF_LEN, -CORRIDOR_HALF_WIDTH),
        ),
        Segment::new(
            Vec2::new(-CORRIDOR_HALF_LEN, CORRIDOR_HALF_WIDTH),
            Vec2::new(CORRIDOR_HALF_LEN, CORRIDOR_HALF_WIDTH),
        ),
    ]
}

fn corridor_layout(cfg: &ScenarioConfig) -> Result<Vec<RobotState>, ScenarioError> {
    let n = cfg.robot_count;
    let left_count = n.div_ceil(2);
    let right_count = n - left_count;
    let rows = |k: usize| -> Vec<f64> {
        if k == 1 {
            vec![0.0]
        } else {
            (0..k)
                .map(|i| {
                    -CORRIDOR_ROW_HALF_SPAN
                        + 2.0 * CORRIDOR_ROW_HALF_SPAN * i as f64 / (k - 1) as f64
                })
                .collect()
        }
    };
    // The facing rows must respect the same interval as sampled layouts.
    let spacing_ok = |k: usize| k <= 1 || 2.0 * CORRIDOR_ROW_HALF_SPAN / (k - 1) as f64 >= cfg.min_separation;
    if !spacing_ok(left_count) || !spacing_ok(right_count) {
        return Err(ScenarioError::PackingFailed {
            robot_count: n,
            min_separation: cfg.min_separation,
            tries: 0,
        });
    }
    let mut robots = Vec::with_capacity(n);
    for (i, y) in rows(left_count).into_iter().enumerate() {
        let p = Vec2::new(-CORRIDOR_COLUMN_X, y);
        robots.push(make_robot(cfg, i, p, 0.0, Vec2::new(CORRIDOR_COLUMN_X, y)));
    }
    for (j, y) in rows(right_count).into_iter().enumerate() {
        let p = Vec2::new(CORRIDOR_COLUMN_X, y);
        robots.push(make_robot(
            cfg,
            left_count + j,
            p,
            std::f64::consts::PI,
            Vec2::new(-CORRIDOR_COLUMN_X, y),
        ));
    }
    Ok(robots)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn circle_positions_and_antipodal_goals() {
        let cfg = ScenarioConfig { robot_count: 4, ..Default::default() };
        let (robots, segments) = generate_scenario(&cfg, &mut rng(1)).unwrap();
        assert!(segments.is_empty());
        assert_eq!(robots.len(), 4);
        for (i, r) in robots.iter().enumerate() {
            let theta = std::f64::consts::PI / 2.0 * i as f64;
            assert_relative_eq!(r.position.x, 4.5 * theta.cos(), epsilon = 1e-12);
            assert_relative_eq!(r.position.y, 4.5 * theta.sin(), epsilon = 1e-12);
            assert_eq!(r.goal, -r.position);
        }
    }

    #[test]
    fn random_layout_respects_minimum_interval() {
        let cfg = ScenarioConfig {
            kind: ScenarioKind::Random,
            robot_count: 10,
            world_size: (10.0, 10.0),
            ..Default::default()
        };
        let (robots, _) = generate_scenario(&cfg, &mut rng(2)).unwrap();
        for i in 0..robots.len() {
            for j in 0..i {
                assert!(robots[i].position.distance(robots[j].position) >= 1.0);
                assert!(robots[i].goal.distance(robots[j].goal) >= 1.0);
            }
        }
    }

    #[test]
    fn same_seed_reproduces_scenario() {
        let cfg = ScenarioConfig {
            kind: ScenarioKind::Random,
            robot_count: 6,
            ..Default::default()
        };
        let (a, _) = generate_scenario(&cfg, &mut rng(3)).unwrap();
        let (b, _) = generate_scenario(&cfg, &mut rng(3)).unwrap();
        for (ra, rb) in a.iter().zip(&b) {
            assert_eq!(ra.position, rb.position);
            assert_eq!(ra.goal, rb.goal);
            assert_eq!(ra.orientation, rb.orientation);
        }
    }

    #[test]
    fn impossible_packing_fails() {
        let cfg = ScenarioConfig {
            kind: ScenarioKind::Random,
            robot_count: 100,
            world_size: (3.0, 3.0),
            ..Default::default()
        };
        assert!(matches!(
            generate_scenario(&cfg, &mut rng(4)),
            Err(ScenarioError::PackingFailed { .. })
        ));
    }

    #[test]
    fn corridor_has_walls_and_facing_groups() {
        let cfg = ScenarioConfig {
            kind: ScenarioKind::Corridor,
            robot_count: 8,
            ..Default::default()
        };
        let (robots, segments) = generate_scenario(&cfg, &mut rng(5)).unwrap();
        assert_eq!(segments.len(), 2);
        assert_eq!(robots.len(), 8);
        let left: Vec<_> = robots.iter().filter(|r| r.position.x < 0.0).collect();
        let right: Vec<_> = robots.iter().filter(|r| r.position.x > 0.0).collect();
        assert_eq!(left.len(), 4);
        assert_eq!(right.len(), 4);
        for r in &robots {
            assert_relative_eq!(r.goal.x, -r.position.x, epsilon = 1e-12);
            assert_relative_eq!(r.goal.y, r.position.y, epsilon = 1e-12);
            assert!(r.position.y.abs() < CORRIDOR_HALF_WIDTH);
        }
    }
}
