//! Reactive, learning-free velocity selection: sample candidate velocities
//! and pick the one closest to the desired velocity among those outside
//! every sensed cone. When every candidate is unsafe, fall back to the best
//! trade-off between expected collision time and deviation.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{collision_time, contains, segment_collision_time};
use crate::vec2::Vec2;
use crate::world::{NeighborSource, Observation, Policy};

/// Horizon used to score unreachable collisions when ranking unsafe
/// candidates (an infinite time would erase the deviation term).
const TIME_CAP: f64 = 20.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    /// Number of random candidates (reflection pairs count as two).
    pub sample_count: usize,
    /// Radius of the sampled velocity disc (m/s).
    pub candidate_radius: f64,
    /// Weight of the deviation term when all candidates are unsafe.
    pub penalty_weight: f64,
    /// Extra radius (m) added to the own collision radius when testing
    /// candidate safety. A differential-drive robot cannot track the
    /// selected holonomic velocity exactly, so picking velocities on the
    /// cone boundary grazes into contact; the margin absorbs that tracking
    /// error. Candidates safe only without the margin are still preferred
    /// over the unsafe fallback.
    pub safety_margin: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            sample_count: 200,
            candidate_radius: 1.5,
            penalty_weight: 1.0,
            safety_margin: 0.1,
        }
    }
}

/// Candidate set: the desired velocity, the current velocity, zero, and
/// uniform samples in the disc together with their point reflections (so
/// the set is symmetric under v -> -v and mirrored scenes make mirrored
/// choices).
fn candidates(
    v_des: Vec2,
    v_current: Vec2,
    cfg: &SamplerConfig,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec2> {
    let mut out = vec![v_des, v_current, Vec2::ZERO];
    let pairs = cfg.sample_count.div_ceil(2);
    for _ in 0..pairs {
        let r = cfg.candidate_radius * rng.gen::<f64>().sqrt();
        let theta = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
        let v = Vec2::from_angle(theta) * r;
        out.push(v);
        out.push(-v);
    }
    out
}

/// Minimum expected collision time of a candidate velocity against every
/// sensed source, capped at [`TIME_CAP`].
fn min_collision_time(obs: &Observation, v: Vec2) -> f64 {
    let own_radius = obs.self_block[5];
    let mut best = TIME_CAP;
    for n in &obs.neighbors {
        let t = match &n.source {
            NeighborSource::Robot { rel_pos, velocity, collision_radius } => {
                collision_time(*rel_pos, v - *velocity, own_radius + collision_radius)
            }
            NeighborSource::Wall { segment } => {
                segment_collision_time(obs.position, v, *segment, own_radius)
            }
        };
        best = best.min(t);
    }
    best
}

fn is_safe(obs: &Observation, v: Vec2) -> bool {
    obs.neighbors.iter().all(|n| !contains(&n.cone, v))
}

/// Rebuild the observation's cones with the own radius inflated, keeping
/// each neighbor's kind (reciprocal for robots, plain for walls).
fn inflated_cones(obs: &Observation, margin: f64) -> Vec<crate::geometry::VoCone> {
    use crate::geometry::{rvo_disc, vo_segment, Disc};
    let own_radius = obs.self_block[5] + margin;
    let me = Disc::new(obs.position, own_radius);
    let v_me = obs.velocity();
    obs.neighbors
        .iter()
        .map(|n| match &n.source {
            NeighborSource::Robot { rel_pos, velocity, collision_radius } => rvo_disc(
                me,
                v_me,
                Disc::new(obs.position + *rel_pos, *collision_radius),
                *velocity,
            ),
            NeighborSource::Wall { segment } => vo_segment(me, *segment),
        })
        .collect()
}

/// Lexicographic (deviation, angle) order used to break ties.
fn tie_key(v: Vec2, v_des: Vec2) -> (f64, f64) {
    ((v - v_des).norm(), v.angle())
}

fn key_less(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)).is_lt()
}

/// Pick a velocity for the current observation.
///
/// Among candidates outside every cone the one nearest to `v_des` wins;
/// with no safe candidate, the one maximizing
/// `min expected collision time - penalty_weight * ||v - v_des||`.
pub fn select_velocity(
    obs: &Observation,
    v_des: Vec2,
    v_current: Vec2,
    cfg: &SamplerConfig,
    rng: &mut ChaCha8Rng,
) -> Vec2 {
    let cands = candidates(v_des, v_current, cfg, rng);
    select_from_candidates(obs, v_des, &cands, cfg)
}

/// Deterministic core of [`select_velocity`], split out so tests can check
/// the selection rule on a known candidate set.
pub fn select_from_candidates(
    obs: &Observation,
    v_des: Vec2,
    cands: &[Vec2],
    cfg: &SamplerConfig,
) -> Vec2 {
    // First tier: safe against margin-inflated cones.
    if cfg.safety_margin > 0.0 && !obs.neighbors.is_empty() {
        let cones = inflated_cones(obs, cfg.safety_margin);
        let mut best: Option<(Vec2, (f64, f64))> = None;
        for &v in cands {
            if cones.iter().all(|c| !contains(c, v)) {
                let key = tie_key(v, v_des);
                if best.as_ref().is_none_or(|(_, k)| key_less(key, *k)) {
                    best = Some((v, key));
                }
            }
        }
        if let Some((v, _)) = best {
            return v;
        }
    }
    // Second tier: safe against the observation's own cones.
    let mut best_safe: Option<(Vec2, (f64, f64))> = None;
    for &v in cands {
        if is_safe(obs, v) {
            let key = tie_key(v, v_des);
            if best_safe.as_ref().is_none_or(|(_, k)| key_less(key, *k)) {
                best_safe = Some((v, key));
            }
        }
    }
    if let Some((v, _)) = best_safe {
        return v;
    }
    // Everything is unsafe: trade expected collision time against deviation.
    let mut best: Option<(Vec2, f64, (f64, f64))> = None;
    for &v in cands {
        let score = min_collision_time(obs, v) - cfg.penalty_weight * (v - v_des).norm();
        let key = tie_key(v, v_des);
        let better = match &best {
            None => true,
            Some((_, s, k)) => score > *s || (score == *s && key_less(key, *k)),
        };
        if better {
            best = Some((v, score, key));
        }
    }
    best.expect("candidate set is never empty").0
}

/// The sampling baseline behind the [`Policy`] trait. Each robot owns an
/// independent RNG stream, so selections do not depend on stepping order.
pub struct BaselinePolicy {
    pub cfg: SamplerConfig,
    /// Velocity-increment scale of the world's kinematics (to invert).
    pub mu: f64,
    base_seed: u64,
    rngs: Vec<Option<ChaCha8Rng>>,
}

impl BaselinePolicy {
    pub fn new(cfg: SamplerConfig, mu: f64, base_seed: u64) -> BaselinePolicy {
        BaselinePolicy { cfg, mu, base_seed, rngs: Vec::new() }
    }

    fn rng_for(&mut self, robot_id: usize) -> &mut ChaCha8Rng {
        use rand::SeedableRng;
        if robot_id >= self.rngs.len() {
            self.rngs.resize_with(robot_id + 1, || None);
        }
        let seed = self.base_seed;
        self.rngs[robot_id]
            .get_or_insert_with(|| ChaCha8Rng::seed_from_u64(seed ^ (robot_id as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)))
    }
}

impl Policy for BaselinePolicy {
    fn act(&mut self, robot_id: usize, obs: &Observation) -> Vec2 {
        let v_des = obs.desired_velocity();
        let v_current = obs.velocity();
        let cfg = self.cfg;
        let rng = self.rng_for(robot_id);
        let v = select_velocity(obs, v_des, v_current, &cfg, rng);
        (v - v_current) / self.mu
    }
}
