//! PPO training: per-robot rollout buffers, generalized advantage
//! estimation, clipped-surrogate policy updates with a KL early stop, and
//! the two-stage curriculum driver.

mod trainer;

pub use trainer::{train, CurveRow, TrainError, TrainReport};

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::nn::graph::{Graph, Var};
use crate::nn::optim::Adam;
use crate::nn::policy::{
    NetConfig, ObsBatch, PolicyNet, LOG_STD_MAX, LOG_STD_MIN,
};
use crate::nn::tensor::Tensor;
use crate::vec2::Vec2;
use crate::world::{Observation, Policy, ScenarioConfig, World, WorldConfig};

const LN_2PI: f64 = 1.8378770664093453;

/// One interaction record.
#[derive(Clone, Debug)]
pub struct Transition {
    pub obs: Observation,
    pub action: [f64; 2],
    pub reward: f64,
    pub value: f64,
    pub logp_old: f64,
    /// Whether the robot's episode segment terminated after this step.
    pub done: bool,
}

/// Trajectory of one robot plus its computed advantages and returns.
#[derive(Clone, Debug, Default)]
pub struct RolloutBuffer {
    pub transitions: Vec<Transition>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    /// Value of the state after the final transition, zero if it was done.
    pub bootstrap_value: f64,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    /// Fill `advantages` and `returns`:
    /// `delta_t = r_t + gamma * V_{t+1} * (1 - done_t) - V_t` and
    /// `A_t = delta_t + gamma * lambda * (1 - done_t) * A_{t+1}`,
    /// bootstrapping the value after the last step unless it was terminal.
    pub fn compute_gae(&mut self, gamma: f64, lambda: f64, bootstrap_value: f64) {
        let n = self.transitions.len();
        self.bootstrap_value = bootstrap_value;
        self.advantages = vec![0.0; n];
        self.returns = vec![0.0; n];
        let mut next_adv = 0.0;
        for t in (0..n).rev() {
            let tr = &self.transitions[t];
            let cont = if tr.done { 0.0 } else { 1.0 };
            let next_value = if t + 1 < n {
                self.transitions[t + 1].value
            } else {
                bootstrap_value
            };
            let delta = tr.reward + gamma * next_value * cont - tr.value;
            next_adv = delta + gamma * lambda * cont * next_adv;
            self.advantages[t] = next_adv;
            self.returns[t] = next_adv + tr.value;
        }
    }
}

/// Normalize to zero mean and unit standard deviation (a copy); returns the
/// input unchanged when the spread is degenerate.
pub fn normalize_advantages(adv: &[f64]) -> Vec<f64> {
    let n = adv.len() as f64;
    if adv.is_empty() {
        return Vec::new();
    }
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < 1e-12 {
        return adv.iter().map(|a| a - mean).collect();
    }
    adv.iter().map(|a| (a - mean) / std).collect()
}

/// Which component the training run swaps out, if any.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AblationKind {
    #[default]
    None,
    /// Raw `[p, v, R]` neighbor blocks instead of cone vectors.
    NonRvoObs,
    /// Single forward GRU instead of the bidirectional pair.
    UniRecurrent,
    /// Distance-based reward instead of the cone-area reward.
    DistanceReward,
}

impl AblationKind {
    pub fn tag(self) -> &'static str {
        match self {
            AblationKind::None => "rl-rvo",
            AblationKind::NonRvoObs => "non-rvo-obs",
            AblationKind::UniRecurrent => "uni-recurrent",
            AblationKind::DistanceReward => "distance-reward",
        }
    }

    pub fn parse(s: &str) -> Option<AblationKind> {
        match s {
            "rl-rvo" | "none" => Some(AblationKind::None),
            "non-rvo-obs" => Some(AblationKind::NonRvoObs),
            "uni-recurrent" => Some(AblationKind::UniRecurrent),
            "distance-reward" => Some(AblationKind::DistanceReward),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Steps collected per robot per epoch (T).
    pub steps_per_rollout: usize,
    /// Policy gradient steps per buffer (K_iter).
    pub policy_epochs: usize,
    /// Value regression steps per buffer (H_iter).
    pub value_epochs: usize,
    /// Approximate-KL threshold that stops the policy loop.
    pub kl_limit: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub clip_eps: f64,
    /// Stage-1 epoch count (e1) and robot count.
    pub stage1_epochs: usize,
    pub stage1_robots: usize,
    /// Stage-2 epoch budget (e2) and robot count.
    pub stage2_epochs: usize,
    pub stage2_robots: usize,
    pub net: NetConfig,
    pub scenario: ScenarioConfig,
    pub world: WorldConfig,
    pub seed: u64,
    /// Evaluate every this many epochs (1 = every epoch).
    pub eval_every: usize,
    pub eval_episodes: usize,
    /// Early stop once the eval success rate stays at or above this...
    pub stop_success: f64,
    /// ...for this many consecutive evaluations (stage 2; optionally 1).
    pub stop_patience: usize,
    /// Apply the early-stopping rule during stage 1 as well.
    pub early_stop_stage1: bool,
    pub checkpoint_every: usize,
    pub ablation: AblationKind,
    /// Whether value regression also updates the shared encoder, or only
    /// the critic head.
    pub critic_updates_encoder: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps_per_rollout: 450,
            policy_epochs: 50,
            value_epochs: 50,
            kl_limit: 0.01,
            lr_actor: 4e-6,
            lr_critic: 5e-5,
            gamma: 0.99,
            lambda: 0.95,
            clip_eps: 0.2,
            stage1_epochs: 200,
            stage1_robots: 4,
            stage2_epochs: 1000,
            stage2_robots: 10,
            net: NetConfig::default(),
            scenario: ScenarioConfig::default(),
            world: WorldConfig::default(),
            seed: 0,
            eval_every: 1,
            eval_episodes: 20,
            stop_success: 0.95,
            stop_patience: 5,
            early_stop_stage1: false,
            checkpoint_every: 50,
            ablation: AblationKind::None,
            critic_updates_encoder: true,
        }
    }
}

impl TrainConfig {
    /// Resolve the ablation into the network and world settings.
    pub fn apply_ablation(&mut self) {
        match self.ablation {
            AblationKind::None => {}
            AblationKind::NonRvoObs => self.net.obs_mode = crate::nn::policy::ObsMode::Raw,
            AblationKind::UniRecurrent => {
                self.net.recurrent = crate::nn::policy::RecurrentMode::Forward
            }
            AblationKind::DistanceReward => self.world.distance_reward = true,
        }
    }
}

/// The learned policy behind the [`Policy`] trait: samples during training,
/// returns the mean in deterministic mode.
pub struct NeuralPolicy {
    pub net: PolicyNet,
    pub deterministic: bool,
    pub rng: ChaCha8Rng,
}

impl NeuralPolicy {
    pub fn new(net: PolicyNet, seed: u64) -> NeuralPolicy {
        use rand::SeedableRng;
        NeuralPolicy { net, deterministic: false, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn deterministic(net: PolicyNet) -> NeuralPolicy {
        use rand::SeedableRng;
        NeuralPolicy { net, deterministic: true, rng: ChaCha8Rng::seed_from_u64(0) }
    }
}

impl Policy for NeuralPolicy {
    fn act(&mut self, _robot_id: usize, obs: &Observation) -> Vec2 {
        let (dist, _) = self.net.forward(obs);
        let (a, _) = if self.deterministic { dist.mode() } else { dist.sample(&mut self.rng) };
        Vec2::new(a[0], a[1])
    }
}

/// Run the frozen policy for `steps_per_robot` steps in every world and
/// collect one buffer per (world, robot). Episodes reset on termination and
/// collection continues until every buffer holds exactly the requested
/// number of transitions; the values and log-probabilities come from the
/// snapshot that selected the actions.
pub fn collect_rollouts(
    worlds: &mut [World],
    net: &PolicyNet,
    steps_per_robot: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<RolloutBuffer>, TrainError> {
    let robots_per_world: Vec<usize> = worlds.iter().map(|w| w.robots().len()).collect();
    let buffer_index = |w: usize, r: usize| -> usize {
        robots_per_world[..w].iter().sum::<usize>() + r
    };
    let total: usize = robots_per_world.iter().sum();
    let mut buffers: Vec<RolloutBuffer> = (0..total).map(|_| RolloutBuffer::default()).collect();
    // Observation right after each buffer's final transition, captured the
    // moment the buffer fills (the world may step further for the others).
    let mut boot_obs: Vec<Option<Observation>> = vec![None; total];
    // The observation each robot will act on next, if mid-episode.
    let mut pending: Vec<Vec<Option<Observation>>> = Vec::with_capacity(worlds.len());
    for world in worlds.iter_mut() {
        if world.is_done() {
            world.reset()?;
        }
        pending.push(world.observations());
    }

    while buffers.iter().any(|b| b.len() < steps_per_robot) {
        // Evaluate every pending observation in one batch.
        let mut keys: Vec<(usize, usize)> = Vec::new();
        let mut obs_refs: Vec<&Observation> = Vec::new();
        for (w, world_pending) in pending.iter().enumerate() {
            for (r, slot) in world_pending.iter().enumerate() {
                if let Some(obs) = slot {
                    keys.push((w, r));
                    obs_refs.push(obs);
                }
            }
        }
        let outputs = net.forward_batch(&obs_refs);
        let mut actions: Vec<Vec<Vec2>> = robots_per_world
            .iter()
            .map(|&n| vec![Vec2::ZERO; n])
            .collect();
        let mut sampled: Vec<([f64; 2], f64, f64)> = Vec::with_capacity(keys.len());
        for ((w, r), (dist, value)) in keys.iter().zip(&outputs) {
            let (a, logp) = dist.sample(rng);
            actions[*w][*r] = Vec2::new(a[0], a[1]);
            sampled.push((a, logp, *value));
        }

        for (w, world) in worlds.iter_mut().enumerate() {
            let outcome = world.step(&actions[w]);
            for ((kw, r), (a, logp, value)) in keys.iter().zip(&sampled) {
                if *kw != w {
                    continue;
                }
                let slot = &mut pending[w][*r];
                let acted_obs = slot.take().expect("acted robot had an observation");
                let step = outcome.per_robot[*r].as_ref().expect("acted robot has a result");
                let idx = buffer_index(w, *r);
                if buffers[idx].len() < steps_per_robot {
                    buffers[idx].transitions.push(Transition {
                        obs: acted_obs,
                        action: *a,
                        reward: step.reward,
                        value: *value,
                        logp_old: *logp,
                        done: step.done,
                    });
                    if buffers[idx].len() == steps_per_robot && !step.done {
                        boot_obs[idx] = Some(step.observation.clone());
                    }
                }
                if !step.done {
                    *slot = Some(step.observation.clone());
                }
            }
            if world.is_done() {
                world.reset()?;
                pending[w] = world.observations();
            }
        }
    }

    // Bootstrap values for buffers whose last transition is mid-episode.
    let mut boot_keys: Vec<usize> = Vec::new();
    let mut boot_refs: Vec<&Observation> = Vec::new();
    for (idx, slot) in boot_obs.iter().enumerate() {
        let last_done = buffers[idx].transitions.last().map(|t| t.done).unwrap_or(true);
        if let (Some(obs), false) = (slot.as_ref(), last_done) {
            boot_keys.push(idx);
            boot_refs.push(obs);
        }
    }
    let mut bootstraps = vec![0.0; total];
    if !boot_refs.is_empty() {
        for (idx, (_, value)) in boot_keys.iter().zip(net.forward_batch(&boot_refs)) {
            bootstraps[*idx] = value;
        }
    }
    for (idx, b) in buffers.iter_mut().enumerate() {
        let done_at_end = b.transitions.last().map(|t| t.done).unwrap_or(true);
        b.bootstrap_value = if done_at_end { 0.0 } else { bootstraps[idx] };
    }
    Ok(buffers)
}

/// Losses and diagnostics of one [`ppo_update`] call.
#[derive(Clone, Copy, Debug, Default)]
pub struct UpdateReport {
    /// Mean (over buffers) of the last surrogate loss.
    pub policy_loss: f64,
    /// Mean of the last value regression loss.
    pub value_loss: f64,
    /// Mean of the final approximate KL per buffer.
    pub kl: f64,
    /// Total policy gradient steps actually applied.
    pub policy_steps: usize,
    /// Number of buffers whose policy loop stopped early on KL.
    pub kl_stops: usize,
}

/// Optimizer pair used across updates (Adam moments persist).
pub struct Optimizers {
    pub actor: Adam,
    pub critic: Adam,
    actor_group: Vec<usize>,
    critic_group: Vec<usize>,
    critic_head_group: Vec<usize>,
}

impl Optimizers {
    pub fn new(net: &PolicyNet, lr_actor: f64, lr_critic: f64) -> Optimizers {
        let shapes: Vec<(usize, usize)> =
            net.params.named().iter().map(|(_, t)| t.shape()).collect();
        Optimizers {
            actor: Adam::new(lr_actor, &shapes),
            critic: Adam::new(lr_critic, &shapes),
            actor_group: net.params.actor_group(),
            critic_group: net.params.critic_group(),
            critic_head_group: net.params.critic_head_group(),
        }
    }
}

/// In-graph log-probability of stored actions under the current policy.
fn logp_node(g: &mut Graph, mean: Var, log_std: Var, actions: Var) -> Var {
    let sigma = g.exp(log_std);
    let diff = g.sub(actions, mean);
    let z = g.div(diff, sigma);
    let sq = g.mul(z, z);
    let half = g.scale(sq, 0.5);
    let with_ls = g.add(half, log_std);
    let with_c = g.add_scalar(with_ls, 0.5 * LN_2PI);
    let summed = g.row_sum(with_c);
    g.scale(summed, -1.0)
}

/// Algorithm core: for each buffer, up to `policy_epochs` clipped-surrogate
/// steps (stopping once the approximate KL passes the limit), then
/// `value_epochs` value regression steps. The shared encoder receives
/// gradients from both phases.
pub fn ppo_update(
    net: &mut PolicyNet,
    opt: &mut Optimizers,
    buffers: &[RolloutBuffer],
    cfg: &TrainConfig,
) -> Result<UpdateReport, TrainError> {
    let mut report = UpdateReport::default();
    let mut buffers_used = 0usize;
    for buffer in buffers {
        if buffer.is_empty() {
            continue;
        }
        buffers_used += 1;
        let n = buffer.len();
        let obs_refs: Vec<&Observation> = buffer.transitions.iter().map(|t| &t.obs).collect();
        let batch = ObsBatch::build(&obs_refs, &net.cfg);
        let actions = Tensor::from_fn(n, 2, |i, j| buffer.transitions[i].action[j]);
        let logp_old = Tensor::from_fn(n, 1, |i, _| buffer.transitions[i].logp_old);
        let advantages = normalize_advantages(&buffer.advantages);
        let adv = Tensor::from_fn(n, 1, |i, _| advantages[i]);
        let returns = Tensor::from_fn(n, 1, |i, _| buffer.returns[i]);

        // Policy phase.
        let mut last_kl = 0.0;
        for _ in 0..cfg.policy_epochs {
            let mut g = Graph::new();
            let vars = net.bind(&mut g);
            let (mean, _) = net.forward_on(&mut g, &vars, &batch);
            let actions_v = g.input(actions.clone());
            let logp_new = logp_node(&mut g, mean, vars.log_std, actions_v);
            let kl = {
                let lp = g.value(logp_new);
                (0..n).map(|i| logp_old.get(i, 0) - lp.get(i, 0)).sum::<f64>() / n as f64
            };
            last_kl = kl;
            if kl > cfg.kl_limit {
                report.kl_stops += 1;
                break;
            }
            let logp_old_v = g.input(logp_old.clone());
            let shift = g.sub(logp_new, logp_old_v);
            let ratio = g.exp(shift);
            let adv_v = g.input(adv.clone());
            let s1 = g.mul(ratio, adv_v);
            let clipped = g.clip(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps);
            let s2 = g.mul(clipped, adv_v);
            let surrogate = g.min(s1, s2);
            let objective = g.mean(surrogate);
            let loss = g.scale(objective, -1.0);
            let loss_value = g.value(loss).item();
            if !loss_value.is_finite() {
                return Err(TrainError::NonFiniteLoss { phase: "policy" });
            }
            report.policy_loss = loss_value;
            g.backward(loss);
            opt.actor.begin_step();
            let mut named = net.params.named_mut();
            for &i in &opt.actor_group {
                if let Some(grad) = g.grad(vars.all[i]) {
                    opt.actor.update(i, named[i].1, grad);
                }
            }
            for v in net.params.log_std.data_mut() {
                *v = v.clamp(LOG_STD_MIN, LOG_STD_MAX);
            }
            report.policy_steps += 1;
        }
        report.kl += last_kl;

        // Value phase.
        for _ in 0..cfg.value_epochs {
            let mut g = Graph::new();
            let vars = net.bind(&mut g);
            let (_, value) = net.forward_on(&mut g, &vars, &batch);
            let ret_v = g.input(returns.clone());
            let diff = g.sub(value, ret_v);
            let sq = g.mul(diff, diff);
            let loss = g.mean(sq);
            let loss_value = g.value(loss).item();
            if !loss_value.is_finite() {
                return Err(TrainError::NonFiniteLoss { phase: "value" });
            }
            report.value_loss = loss_value;
            g.backward(loss);
            opt.critic.begin_step();
            let mut named = net.params.named_mut();
            let group = if cfg.critic_updates_encoder {
                &opt.critic_group
            } else {
                &opt.critic_head_group
            };
            for &i in group {
                if let Some(grad) = g.grad(vars.all[i]) {
                    opt.critic.update(i, named[i].1, grad);
                }
            }
        }
    }
    if buffers_used > 0 {
        report.kl /= buffers_used as f64;
    }
    Ok(report)
}
