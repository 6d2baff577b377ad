//! The multi-robot world: stepping, collision and arrival detection, episode
//! lifecycle, and trajectory records.

mod observe;
mod scenario;

pub use observe::{desired_velocity, sense, NeighborObs, NeighborSource, Observation, SensingConfig};
pub use scenario::{generate_scenario, ScenarioConfig, ScenarioError, ScenarioKind};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::Segment;
use crate::kinematics::{apply_increment, integrate, to_diff_drive, KinematicsConfig};
use crate::reward::{assess, rvo_reward, RewardParams};
use crate::vec2::Vec2;

/// Per-robot ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct RobotState {
    pub id: usize,
    pub position: Vec2,
    /// Heading in (-pi, pi].
    pub orientation: f64,
    /// Realized world-frame velocity (m/s).
    pub velocity: Vec2,
    /// Physical radius (m).
    pub radius: f64,
    /// Virtual collision radius R_c >= radius (m).
    pub collision_radius: f64,
    pub goal: Vec2,
    pub arrived: bool,
    pub collided: bool,
}

impl RobotState {
    /// A stationary robot with default radii, mostly for tests.
    pub fn at(position: Vec2, orientation: f64, goal: Vec2) -> Self {
        RobotState {
            id: 0,
            position,
            orientation,
            velocity: Vec2::ZERO,
            radius: 0.2,
            collision_radius: 0.3,
            goal,
            arrived: false,
            collided: false,
        }
    }

    pub fn active(&self) -> bool {
        !self.arrived && !self.collided
    }
}

/// Why a robot's episode segment ended (or `Running` while it has not).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DoneReason {
    Arrived,
    Collision,
    Timeout,
    Running,
}

impl DoneReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DoneReason::Arrived => "arrived",
            DoneReason::Collision => "collision",
            DoneReason::Timeout => "timeout",
            DoneReason::Running => "running",
        }
    }

    pub fn parse(s: &str) -> Option<DoneReason> {
        match s {
            "arrived" => Some(DoneReason::Arrived),
            "collision" => Some(DoneReason::Collision),
            "timeout" => Some(DoneReason::Timeout),
            "running" => Some(DoneReason::Running),
            _ => None,
        }
    }
}

/// World-level episode status.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WorldStatus {
    Running,
    AllArrived,
    Collision,
    Timeout,
}

/// Everything about the world other than the scenario layout.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub kinematics: KinematicsConfig,
    pub sensing: SensingConfig,
    pub reward: RewardParams,
    /// A robot has arrived when its goal is closer than this (m).
    pub arrival_tol: f64,
    /// Episode step budget before a timeout.
    pub max_steps: usize,
    /// Swap the cone-based reward for the distance-based one (the
    /// reward-function ablation).
    pub distance_reward: bool,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            kinematics: KinematicsConfig::default(),
            sensing: SensingConfig::default(),
            reward: RewardParams::default(),
            arrival_tol: 0.1,
            max_steps: 300,
            distance_reward: false,
        }
    }
}

/// Distance-based reward used only by the reward-function ablation:
/// progress toward the goal, with terminal bonus and penalty.
fn distance_reward(progress: f64, arrived: bool, collided: bool) -> f64 {
    const PROGRESS_SCALE: f64 = 2.5;
    const ARRIVAL_BONUS: f64 = 10.0;
    const COLLISION_PENALTY: f64 = 15.0;
    if collided {
        -COLLISION_PENALTY
    } else if arrived {
        ARRIVAL_BONUS
    } else {
        PROGRESS_SCALE * progress
    }
}

/// What one robot experienced during a step.
#[derive(Clone, Debug)]
pub struct RobotStep {
    /// Observation of the post-step world. For robots that are still
    /// running this is the next policy input; for finished robots it is the
    /// terminal view and no bootstrap should be taken from it.
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub reason: DoneReason,
}

/// Outcome of a world step: entries only for robots that acted.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub per_robot: Vec<Option<RobotStep>>,
    pub status: WorldStatus,
}

pub struct World {
    robots: Vec<RobotState>,
    segments: Vec<Segment>,
    pub config: WorldConfig,
    scenario: ScenarioConfig,
    rng: ChaCha8Rng,
    step_count: usize,
    status: WorldStatus,
}

impl World {
    /// Build a world from a scenario; the seed in the scenario config fixes
    /// the layout stream across resets.
    pub fn new(scenario: ScenarioConfig, config: WorldConfig) -> Result<World, ScenarioError> {
        let mut rng = ChaCha8Rng::seed_from_u64(scenario.rng_seed);
        let (robots, segments) = generate_scenario(&scenario, &mut rng)?;
        Ok(World {
            robots,
            segments,
            config,
            scenario,
            rng,
            step_count: 0,
            status: WorldStatus::Running,
        })
    }

    /// Build a world directly from states, for tests and replay.
    pub fn from_states(robots: Vec<RobotState>, segments: Vec<Segment>, config: WorldConfig) -> World {
        World {
            robots,
            segments,
            config,
            scenario: ScenarioConfig::default(),
            rng: ChaCha8Rng::seed_from_u64(0),
            step_count: 0,
            status: WorldStatus::Running,
        }
    }

    /// Start a fresh episode, drawing the next layout from the scenario
    /// stream (the circle layout keeps positions fixed but redraws
    /// orientations; the random layout redraws everything).
    pub fn reset(&mut self) -> Result<(), ScenarioError> {
        let (robots, segments) = generate_scenario(&self.scenario, &mut self.rng)?;
        self.robots = robots;
        self.segments = segments;
        self.step_count = 0;
        self.status = WorldStatus::Running;
        Ok(())
    }

    pub fn robots(&self) -> &[RobotState] {
        &self.robots
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn status(&self) -> WorldStatus {
        self.status
    }

    pub fn step_count(&self) -> usize {
        self.step_count
    }

    pub fn is_done(&self) -> bool {
        self.status != WorldStatus::Running
    }

    /// Observation of one robot against the currently active set.
    pub fn sense_robot(&self, id: usize) -> Observation {
        sense(
            &self.robots,
            &self.segments,
            id,
            |r| r.active(),
            &self.config.sensing,
            self.config.kinematics.v_max,
            self.config.kinematics.dt,
        )
    }

    /// Observations for every active robot (inactive slots are `None`).
    pub fn observations(&self) -> Vec<Option<Observation>> {
        self.robots
            .iter()
            .map(|r| r.active().then(|| self.sense_robot(r.id)))
            .collect()
    }

    /// Advance the world one step. `actions` holds one velocity increment
    /// per robot slot; entries for inactive robots are ignored.
    ///
    /// Robots integrate simultaneously, then collisions (at collision
    /// radii, against robots and segments) and arrivals are detected,
    /// rewards are computed on the post-step world, and the episode status
    /// is updated. Any collision or a step-budget timeout ends the episode.
    pub fn step(&mut self, actions: &[Vec2]) -> StepOutcome {
        assert_eq!(actions.len(), self.robots.len(), "one action slot per robot");
        assert!(!self.is_done(), "stepping a finished episode");

        let actors: Vec<usize> =
            self.robots.iter().filter(|r| r.active()).map(|r| r.id).collect();
        let prev_goal_dist: Vec<f64> = self
            .robots
            .iter()
            .map(|r| r.position.distance(r.goal))
            .collect();

        // Simultaneous integration from the pre-step snapshot.
        for &i in &actors {
            let robot = &self.robots[i];
            let v_cmd = apply_increment(robot.velocity, actions[i], &self.config.kinematics);
            let cmd = to_diff_drive(v_cmd, robot.orientation, &self.config.kinematics);
            self.robots[i] = integrate(robot, cmd, &self.config.kinematics);
        }
        self.step_count += 1;

        // Collisions at collision radii: robot-robot and robot-segment.
        for ai in 0..actors.len() {
            for aj in 0..ai {
                let (i, j) = (actors[ai], actors[aj]);
                let d = self.robots[i].position.distance(self.robots[j].position);
                if d <= self.robots[i].collision_radius + self.robots[j].collision_radius {
                    self.robots[i].collided = true;
                    self.robots[j].collided = true;
                }
            }
            let i = actors[ai];
            for seg in &self.segments {
                if seg.distance(self.robots[i].position) <= self.robots[i].collision_radius {
                    self.robots[i].collided = true;
                }
            }
        }
        let any_collision = actors.iter().any(|&i| self.robots[i].collided);

        // Arrivals (a robot that collided this step cannot also arrive).
        for &i in &actors {
            let r = &mut self.robots[i];
            if !r.collided && r.position.distance(r.goal) < self.config.arrival_tol {
                r.arrived = true;
            }
        }

        let timeout = self.step_count >= self.config.max_steps;
        let all_arrived = self.robots.iter().all(|r| r.arrived);
        self.status = if any_collision {
            WorldStatus::Collision
        } else if all_arrived {
            WorldStatus::AllArrived
        } else if timeout {
            WorldStatus::Timeout
        } else {
            WorldStatus::Running
        };

        // One post-step sensing pass per actor. Newly arrived robots are
        // already despawned from everyone's view; colliding robots are still
        // present, so their partners see the overlap (xi = 0).
        let mut per_robot: Vec<Option<RobotStep>> = vec![None; self.robots.len()];
        for &i in &actors {
            let observation = self.sense_robot(i);
            let robot = &self.robots[i];
            let reward = if self.config.distance_reward {
                let progress = prev_goal_dist[i] - robot.position.distance(robot.goal);
                distance_reward(progress, robot.arrived, robot.collided)
            } else {
                let risk = assess(&observation, robot.velocity);
                let v_des = observation.desired_velocity();
                let mut r = rvo_reward(robot.velocity, v_des, risk, &self.config.reward);
                if robot.arrived {
                    r += self.config.reward.arrival_bonus;
                }
                if robot.collided {
                    r -= self.config.reward.collision_penalty;
                }
                r
            };
            let reason = if robot.collided {
                DoneReason::Collision
            } else if robot.arrived {
                DoneReason::Arrived
            } else if self.status == WorldStatus::Timeout {
                DoneReason::Timeout
            } else {
                DoneReason::Running
            };
            let done = reason != DoneReason::Running || self.is_done();
            per_robot[i] = Some(RobotStep { observation, reward, done, reason });
        }

        StepOutcome { per_robot, status: self.status }
    }
}

/// A control policy: maps a robot's observation to a velocity increment.
pub trait Policy {
    fn act(&mut self, robot_id: usize, obs: &Observation) -> Vec2;
}

impl<P: Policy + ?Sized> Policy for Box<P> {
    fn act(&mut self, robot_id: usize, obs: &Observation) -> Vec2 {
        (**self).act(robot_id, obs)
    }
}

/// One logged row of an episode trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRow {
    pub step: usize,
    pub robot_id: usize,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub vx: f64,
    pub vy: f64,
    pub reward: f64,
    pub done_reason: DoneReason,
}

/// A full episode trajectory with metrics derived purely from the rows.
#[derive(Clone, Debug)]
pub struct EpisodeRecord {
    pub rows: Vec<StepRow>,
    pub robot_count: usize,
    pub outcome: WorldStatus,
    pub success: bool,
    /// Steps until the last arrival (success) or until the episode ended.
    pub steps: usize,
    /// Mean over robots of path length divided by active time (m/s).
    pub mean_speed: f64,
}

impl EpisodeRecord {
    /// Derive outcome and metrics from raw rows. This is the single source
    /// of truth: loading a record from disk reproduces the same report.
    pub fn from_rows(rows: Vec<StepRow>, dt: f64) -> EpisodeRecord {
        let robot_count = rows.iter().map(|r| r.robot_id + 1).max().unwrap_or(0);
        let mut last_reason = vec![DoneReason::Running; robot_count];
        let mut last_step = vec![0usize; robot_count];
        let mut path_len = vec![0.0f64; robot_count];
        let mut prev_pos: Vec<Option<Vec2>> = vec![None; robot_count];
        let mut max_step = 0;
        for row in &rows {
            let id = row.robot_id;
            let p = Vec2::new(row.x, row.y);
            if let Some(q) = prev_pos[id] {
                path_len[id] += q.distance(p);
            }
            prev_pos[id] = Some(p);
            if row.step >= last_step[id] {
                last_step[id] = row.step;
                last_reason[id] = row.done_reason;
            }
            max_step = max_step.max(row.step);
        }
        let any_collision = rows.iter().any(|r| r.done_reason == DoneReason::Collision);
        let all_arrived =
            robot_count > 0 && last_reason.iter().all(|&r| r == DoneReason::Arrived);
        let outcome = if any_collision {
            WorldStatus::Collision
        } else if all_arrived {
            WorldStatus::AllArrived
        } else {
            WorldStatus::Timeout
        };
        let steps = if all_arrived {
            last_step.iter().copied().max().unwrap_or(max_step)
        } else {
            max_step
        };
        let mean_speed = if robot_count == 0 {
            0.0
        } else {
            (0..robot_count)
                .map(|i| {
                    if last_step[i] == 0 {
                        0.0
                    } else {
                        path_len[i] / (last_step[i] as f64 * dt)
                    }
                })
                .sum::<f64>()
                / robot_count as f64
        };
        EpisodeRecord {
            rows,
            robot_count,
            outcome,
            success: all_arrived,
            steps,
            mean_speed,
        }
    }

    pub const CSV_HEADER: &'static str = "step,robot_id,x,y,theta,vx,vy,reward,done_reason";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.step,
                r.robot_id,
                r.x,
                r.y,
                r.theta,
                r.vx,
                r.vy,
                r.reward,
                r.done_reason.as_str()
            ));
        }
        out
    }

    pub fn from_csv(text: &str, dt: f64) -> Result<EpisodeRecord, String> {
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if lineno == 0 {
                if line.trim() != Self::CSV_HEADER {
                    return Err(format!("unexpected header: {line}"));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 9 {
                return Err(format!("line {}: expected 9 fields, got {}", lineno + 1, fields.len()));
            }
            let parse_f = |s: &str, what: &str| -> Result<f64, String> {
                s.parse::<f64>().map_err(|_| format!("line {}: bad {what}: {s}", lineno + 1))
            };
            rows.push(StepRow {
                step: fields[0]
                    .parse()
                    .map_err(|_| format!("line {}: bad step: {}", lineno + 1, fields[0]))?,
                robot_id: fields[1]
                    .parse()
                    .map_err(|_| format!("line {}: bad robot_id: {}", lineno + 1, fields[1]))?,
                x: parse_f(fields[2], "x")?,
                y: parse_f(fields[3], "y")?,
                theta: parse_f(fields[4], "theta")?,
                vx: parse_f(fields[5], "vx")?,
                vy: parse_f(fields[6], "vy")?,
                reward: parse_f(fields[7], "reward")?,
                done_reason: DoneReason::parse(fields[8])
                    .ok_or_else(|| format!("line {}: bad done_reason: {}", lineno + 1, fields[8]))?,
            });
        }
        if rows.is_empty() {
            return Err("record has no rows".to_string());
        }
        Ok(EpisodeRecord::from_rows(rows, dt))
    }
}

/// Drive one episode to completion (or to `max_steps`) and log it.
pub fn run_episode(world: &mut World, policy: &mut dyn Policy, max_steps: usize) -> EpisodeRecord {
    let mut rows: Vec<StepRow> = Vec::new();
    for r in world.robots() {
        rows.push(StepRow {
            step: 0,
            robot_id: r.id,
            x: r.position.x,
            y: r.position.y,
            theta: r.orientation,
            vx: r.velocity.x,
            vy: r.velocity.y,
            reward: 0.0,
            done_reason: DoneReason::Running,
        });
    }
    let mut observations = world.observations();
    let mut steps = 0;
    while !world.is_done() && steps < max_steps {
        let actions: Vec<Vec2> = world
            .robots()
            .iter()
            .map(|r| match &observations[r.id] {
                Some(obs) => policy.act(r.id, obs),
                None => Vec2::ZERO,
            })
            .collect();
        let outcome = world.step(&actions);
        steps += 1;
        for (id, slot) in outcome.per_robot.iter().enumerate() {
            if let Some(rs) = slot {
                let robot = &world.robots()[id];
                rows.push(StepRow {
                    step: world.step_count(),
                    robot_id: id,
                    x: robot.position.x,
                    y: robot.position.y,
                    theta: robot.orientation,
                    vx: robot.velocity.x,
                    vy: robot.velocity.y,
                    reward: rs.reward,
                    done_reason: rs.reason,
                });
                observations[id] = (!rs.done).then(|| rs.observation.clone());
            }
        }
    }
    EpisodeRecord::from_rows(rows, world.config.kinematics.dt)
}
