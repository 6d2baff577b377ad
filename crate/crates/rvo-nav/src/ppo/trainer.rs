//! The two-stage training driver: rollouts, updates, periodic evaluation,
//! checkpoints, and the training-curve log.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::nn::checkpoint::{self, CheckpointError};
use crate::nn::policy::PolicyNet;
use crate::ppo::{collect_rollouts, ppo_update, Optimizers, TrainConfig};
use crate::world::{ScenarioError, World, WorldStatus};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("scenario error: {0}")]
    Scenario(#[from] ScenarioError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint error: {0}")]
    Checkpoint(#[from] CheckpointError),
    #[error("non-finite {phase} loss (training diverged; check the learning rates)")]
    NonFiniteLoss { phase: &'static str },
}

/// One row of the training curve.
#[derive(Clone, Copy, Debug)]
pub struct CurveRow {
    pub epoch: usize,
    pub mean_reward: f64,
    pub success_rate: f64,
    pub mean_steps: f64,
    pub kl: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub wall_time_s: f64,
}

pub const CURVE_HEADER: &str =
    "epoch,mean_reward,success_rate,mean_steps,kl,policy_loss,value_loss,wall_time_s";

#[derive(Debug)]
pub struct TrainReport {
    pub epochs_run: usize,
    pub curve: Vec<CurveRow>,
    pub final_checkpoint: PathBuf,
    /// Parameters at the best evaluation seen during training, selected by
    /// success rate and then step cost (the quantities the early-stopping
    /// rule watches).
    pub best_checkpoint: PathBuf,
    pub best_success: f64,
    pub curve_path: PathBuf,
    /// Success rate of the last evaluation performed during training.
    pub final_success: f64,
}

/// Deterministic evaluation over a fixed seed set; returns the success rate
/// and the mean step count of successful episodes (or of all episodes when
/// none succeed). Observations are batched per step across robots, so this
/// stays cheap enough to run every epoch.
pub fn eval_policy(
    net: &PolicyNet,
    cfg: &TrainConfig,
    robots: usize,
    episodes: usize,
    seed_base: u64,
) -> Result<(f64, f64), TrainError> {
    let mut successes = 0usize;
    let mut success_steps = 0usize;
    let mut all_steps = 0usize;
    for ep in 0..episodes {
        let mut scenario = cfg.scenario.clone();
        scenario.robot_count = robots;
        scenario.rng_seed = seed_base.wrapping_add(ep as u64);
        let mut world = World::new(scenario, cfg.world.clone())?;
        while !world.is_done() {
            let observations = world.observations();
            let mut ids: Vec<usize> = Vec::new();
            let mut refs: Vec<&crate::world::Observation> = Vec::new();
            for (id, slot) in observations.iter().enumerate() {
                if let Some(obs) = slot {
                    ids.push(id);
                    refs.push(obs);
                }
            }
            let outputs = net.forward_batch(&refs);
            let mut actions = vec![crate::vec2::Vec2::ZERO; world.robots().len()];
            for (id, (dist, _)) in ids.iter().zip(&outputs) {
                let (a, _) = dist.mode();
                actions[*id] = crate::vec2::Vec2::new(a[0], a[1]);
            }
            world.step(&actions);
        }
        all_steps += world.step_count();
        if world.status() == WorldStatus::AllArrived {
            successes += 1;
            success_steps += world.step_count();
        }
    }
    let success_rate = successes as f64 / episodes as f64;
    let mean_steps = if successes > 0 {
        success_steps as f64 / successes as f64
    } else {
        all_steps as f64 / episodes as f64
    };
    Ok((success_rate, mean_steps))
}

fn write_curve(path: &Path, rows: &[CurveRow]) -> std::io::Result<()> {
    let mut out = String::from(CURVE_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{:.3}\n",
            r.epoch,
            r.mean_reward,
            r.success_rate,
            r.mean_steps,
            r.kl,
            r.policy_loss,
            r.value_loss,
            r.wall_time_s
        ));
    }
    std::fs::write(path, out)
}

/// Run the full schedule: stage 1 at `stage1_robots` for `stage1_epochs`,
/// then stage 2 at `stage2_robots` for up to `stage2_epochs` with early
/// stopping once the evaluation success rate holds at or above the
/// threshold for `stop_patience` consecutive evaluations.
pub fn train(config: &TrainConfig, out_dir: &Path) -> Result<TrainReport, TrainError> {
    let mut cfg = config.clone();
    cfg.apply_ablation();
    std::fs::create_dir_all(out_dir)?;

    let mut net = PolicyNet::new(cfg.net.clone(), cfg.seed);
    let mut opt = Optimizers::new(&net, cfg.lr_actor, cfg.lr_critic);
    let mut rollout_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let eval_seed_base = cfg.seed.wrapping_add(0x5eed_0000);

    let started = Instant::now();
    let mut curve: Vec<CurveRow> = Vec::new();
    let mut epoch_global = 0usize;
    let mut last_success = 0.0f64;
    let mut last_mean_steps = 0.0f64;
    let best_checkpoint = out_dir.join("best.ckpt");
    let mut best_success = f64::NEG_INFINITY;
    let mut best_steps = f64::INFINITY;

    let meta = |epoch: usize, cfg: &TrainConfig| {
        format!("ablation = \"{}\"\nepoch = {}", cfg.ablation.tag(), epoch)
    };

    let stages = [
        (cfg.stage1_epochs, cfg.stage1_robots, cfg.early_stop_stage1),
        (cfg.stage2_epochs, cfg.stage2_robots, true),
    ];
    for (stage_idx, &(stage_epochs, stage_robots, early_stop)) in stages.iter().enumerate() {
        if stage_epochs == 0 {
            continue;
        }
        let mut scenario = cfg.scenario.clone();
        scenario.robot_count = stage_robots;
        scenario.rng_seed = cfg
            .scenario
            .rng_seed
            .wrapping_add(stage_idx as u64 * 7919);
        let mut worlds = vec![World::new(scenario, cfg.world.clone())?];
        let mut streak = 0usize;

        for _ in 0..stage_epochs {
            epoch_global += 1;
            let mut buffers =
                collect_rollouts(&mut worlds, &net, cfg.steps_per_rollout, &mut rollout_rng)?;
            let mut reward_sum = 0.0;
            let mut reward_count = 0usize;
            for b in &mut buffers {
                let boot = b.bootstrap_value;
                b.compute_gae(cfg.gamma, cfg.lambda, boot);
                reward_sum += b.transitions.iter().map(|t| t.reward).sum::<f64>();
                reward_count += b.len();
            }
            let report = ppo_update(&mut net, &mut opt, &buffers, &cfg)?;

            if epoch_global % cfg.eval_every == 0 {
                let (succ, steps) =
                    eval_policy(&net, &cfg, stage_robots, cfg.eval_episodes, eval_seed_base)?;
                last_success = succ;
                last_mean_steps = steps;
                // Keep the best model by success rate, then by step cost.
                if succ > best_success || (succ == best_success && steps < best_steps) {
                    best_success = succ;
                    best_steps = steps;
                    checkpoint::save(&best_checkpoint, &net, &meta(epoch_global, &cfg))?;
                }
                if succ >= cfg.stop_success {
                    streak += 1;
                } else {
                    streak = 0;
                }
                eprintln!(
                    "epoch {epoch_global:4} ({} robots): reward {:8.3}  success {:.2}  steps {:6.1}  kl {:.4}  [{:.0}s]",
                    stage_robots,
                    reward_sum / reward_count.max(1) as f64,
                    succ,
                    steps,
                    report.kl,
                    started.elapsed().as_secs_f64()
                );
            }
            curve.push(CurveRow {
                epoch: epoch_global,
                mean_reward: reward_sum / reward_count.max(1) as f64,
                success_rate: last_success,
                mean_steps: last_mean_steps,
                kl: report.kl,
                policy_loss: report.policy_loss,
                value_loss: report.value_loss,
                wall_time_s: started.elapsed().as_secs_f64(),
            });
            if cfg.checkpoint_every > 0 && epoch_global % cfg.checkpoint_every == 0 {
                let path = out_dir.join(format!("ckpt_{epoch_global:05}.ckpt"));
                checkpoint::save(&path, &net, &meta(epoch_global, &cfg))?;
            }
            if early_stop && streak >= cfg.stop_patience {
                break;
            }
        }
    }

    let final_checkpoint = out_dir.join("final.ckpt");
    checkpoint::save(&final_checkpoint, &net, &meta(epoch_global, &cfg))?;
    if !best_checkpoint.exists() {
        checkpoint::save(&best_checkpoint, &net, &meta(epoch_global, &cfg))?;
    }
    let curve_path = out_dir.join("curves.csv");
    write_curve(&curve_path, &curve)?;
    Ok(TrainReport {
        epochs_run: epoch_global,
        curve,
        final_checkpoint,
        best_checkpoint,
        best_success: best_success.max(0.0),
        curve_path,
        final_success: last_success,
    })
}
