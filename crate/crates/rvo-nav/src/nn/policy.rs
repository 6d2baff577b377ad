//! The recurrent actor-critic: a bidirectional GRU folds the variable-length
//! neighbor sequence into a fixed feature, which is concatenated with the
//! proprioceptive block, layer-normalized, and fed to separate actor and
//! critic stacks. The actor outputs a tanh-squashed mean; the log standard
//! deviation is a free parameter updated alongside the network.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::nn::graph::{Graph, Var};
use crate::nn::tensor::Tensor;
use crate::world::Observation;

pub const ACTION_DIM: usize = 2;
pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
const LN_EPS: f64 = 1e-5;
const LN_2PI: f64 = 1.8378770664093453; // ln(2*pi)

/// What the neighbor blocks contain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObsMode {
    /// Cone blocks `[apex, left, right, d, r_e]` (8 reals).
    Cones,
    /// Raw relative state `[p, v, R]` (5 reals); the observation ablation.
    Raw,
}

/// How the neighbor sequence is folded.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecurrentMode {
    /// Forward and backward GRUs, final hidden states summed.
    Bidirectional,
    /// A single forward GRU; the recurrent-module ablation.
    Forward,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetConfig {
    /// Hidden width of the GRUs and the fully connected layers.
    pub hidden: usize,
    pub obs_mode: ObsMode,
    pub recurrent: RecurrentMode,
    /// Encode orientation as (cos, sin) instead of one radian scalar.
    pub trig_orientation: bool,
    /// Initial value of both log-std components.
    pub log_std_init: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            hidden: 256,
            obs_mode: ObsMode::Cones,
            recurrent: RecurrentMode::Bidirectional,
            trig_orientation: false,
            log_std_init: (0.5f64).ln(),
        }
    }
}

impl NetConfig {
    pub fn neighbor_width(&self) -> usize {
        match self.obs_mode {
            ObsMode::Cones => 8,
            ObsMode::Raw => 5,
        }
    }

    pub fn self_width(&self) -> usize {
        if self.trig_orientation {
            7
        } else {
            6
        }
    }

    pub fn trunk_width(&self) -> usize {
        self.hidden + self.self_width()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GruParams {
    pub w_z: Tensor,
    pub w_r: Tensor,
    pub w_h: Tensor,
    pub u_z: Tensor,
    pub u_r: Tensor,
    pub u_h: Tensor,
    pub b_z: Tensor,
    pub b_r: Tensor,
    pub b_h: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearParams {
    pub w: Tensor,
    pub b: Tensor,
}

/// All trainable arrays of the actor-critic.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyParams {
    pub gru_fw: GruParams,
    pub gru_bw: Option<GruParams>,
    pub ln_gain: Tensor,
    pub ln_bias: Tensor,
    /// Two hidden layers plus the 2-unit output layer.
    pub actor: [LinearParams; 3],
    /// Two hidden layers plus the scalar output layer.
    pub critic: [LinearParams; 3],
    /// State-independent `(1, 2)` log standard deviation.
    pub log_std: Tensor,
}

fn gru_names(prefix: &str) -> [String; 9] {
    ["w_z", "w_r", "w_h", "u_z", "u_r", "u_h", "b_z", "b_r", "b_h"]
        .map(|n| format!("{prefix}.{n}"))
}

impl GruParams {
    fn tensors(&self) -> [&Tensor; 9] {
        [
            &self.w_z, &self.w_r, &self.w_h, &self.u_z, &self.u_r, &self.u_h, &self.b_z,
            &self.b_r, &self.b_h,
        ]
    }

    fn tensors_mut(&mut self) -> [&mut Tensor; 9] {
        [
            &mut self.w_z,
            &mut self.w_r,
            &mut self.w_h,
            &mut self.u_z,
            &mut self.u_r,
            &mut self.u_h,
            &mut self.b_z,
            &mut self.b_r,
            &mut self.b_h,
        ]
    }
}

impl PolicyParams {
    /// Canonical (name, tensor) listing; the order defines the parameter
    /// indices used by the optimizer and the checkpoint format.
    pub fn named(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = Vec::new();
        for (name, t) in gru_names("gru_fw").into_iter().zip(self.gru_fw.tensors()) {
            out.push((name, t));
        }
        if let Some(bw) = &self.gru_bw {
            for (name, t) in gru_names("gru_bw").into_iter().zip(bw.tensors()) {
                out.push((name, t));
            }
        }
        out.push(("ln.gain".to_string(), &self.ln_gain));
        out.push(("ln.bias".to_string(), &self.ln_bias));
        for (i, l) in self.actor.iter().enumerate() {
            out.push((format!("actor.{i}.w"), &l.w));
            out.push((format!("actor.{i}.b"), &l.b));
        }
        for (i, l) in self.critic.iter().enumerate() {
            out.push((format!("critic.{i}.w"), &l.w));
            out.push((format!("critic.{i}.b"), &l.b));
        }
        out.push(("log_std".to_string(), &self.log_std));
        out
    }

    pub fn named_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out: Vec<(String, &mut Tensor)> = Vec::new();
        for (name, t) in gru_names("gru_fw").into_iter().zip(self.gru_fw.tensors_mut()) {
            out.push((name, t));
        }
        if let Some(bw) = &mut self.gru_bw {
            for (name, t) in gru_names("gru_bw").into_iter().zip(bw.tensors_mut()) {
                out.push((name, t));
            }
        }
        out.push(("ln.gain".to_string(), &mut self.ln_gain));
        out.push(("ln.bias".to_string(), &mut self.ln_bias));
        for (i, l) in self.actor.iter_mut().enumerate() {
            out.push((format!("actor.{i}.w"), &mut l.w));
            out.push((format!("actor.{i}.b"), &mut l.b));
        }
        for (i, l) in self.critic.iter_mut().enumerate() {
            out.push((format!("critic.{i}.w"), &mut l.w));
            out.push((format!("critic.{i}.b"), &mut l.b));
        }
        out.push(("log_std".to_string(), &mut self.log_std));
        out
    }

    /// Indices stepped with the actor learning rate: everything except the
    /// critic head (the shared encoder belongs to both groups).
    pub fn actor_group(&self) -> Vec<usize> {
        self.named()
            .iter()
            .enumerate()
            .filter(|(_, (n, _))| !n.starts_with("critic."))
            .map(|(i, _)| i)
            .collect()
    }

    /// Indices stepped with the critic learning rate: everything except the
    /// actor head and the log-std.
    pub fn critic_group(&self) -> Vec<usize> {
        self.named()
            .iter()
            .enumerate()
            .filter(|(_, (n, _))| !n.starts_with("actor.") && n != "log_std")
            .map(|(i, _)| i)
            .collect()
    }

    /// Just the critic head, leaving the shared encoder to the policy loss.
    pub fn critic_head_group(&self) -> Vec<usize> {
        self.named()
            .iter()
            .enumerate()
            .filter(|(_, (n, _))| n.starts_with("critic."))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn all_finite(&self) -> bool {
        self.named().iter().all(|(_, t)| t.all_finite())
    }
}

/// One standard normal draw (Box-Muller).
pub(crate) fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn fan_in_uniform(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let limit = 1.0 / (rows as f64).sqrt();
    Tensor::from_fn(rows, cols, |_, _| rng.gen_range(-limit..limit))
}

/// Orthogonal square matrix via Gram-Schmidt on a Gaussian draw.
fn orthogonal(n: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    while cols.len() < n {
        let mut v: Vec<f64> = (0..n).map(|_| standard_normal(rng)).collect();
        for c in &cols {
            let dot: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
            for (vi, ci) in v.iter_mut().zip(c) {
                *vi -= dot * ci;
            }
        }
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-8 {
            continue; // essentially-dependent draw; redraw
        }
        for vi in &mut v {
            *vi /= norm;
        }
        cols.push(v);
    }
    Tensor::from_fn(n, n, |i, j| cols[j][i])
}

fn init_gru(input: usize, hidden: usize, rng: &mut ChaCha8Rng) -> GruParams {
    GruParams {
        w_z: fan_in_uniform(input, hidden, rng),
        w_r: fan_in_uniform(input, hidden, rng),
        w_h: fan_in_uniform(input, hidden, rng),
        u_z: orthogonal(hidden, rng),
        u_r: orthogonal(hidden, rng),
        u_h: orthogonal(hidden, rng),
        b_z: Tensor::zeros(1, hidden),
        b_r: Tensor::zeros(1, hidden),
        b_h: Tensor::zeros(1, hidden),
    }
}

fn init_linear(input: usize, output: usize, rng: &mut ChaCha8Rng) -> LinearParams {
    LinearParams {
        w: fan_in_uniform(input, output, rng),
        b: Tensor::zeros(1, output),
    }
}

/// A diagonal Gaussian over the 2D velocity increment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActionDistribution {
    /// Each component in [-1, 1] (tanh output).
    pub mean: [f64; 2],
    pub log_std: [f64; 2],
}

impl ActionDistribution {
    fn clamped_log_std(&self) -> [f64; 2] {
        [
            self.log_std[0].clamp(LOG_STD_MIN, LOG_STD_MAX),
            self.log_std[1].clamp(LOG_STD_MIN, LOG_STD_MAX),
        ]
    }

    pub fn log_prob(&self, action: [f64; 2]) -> f64 {
        let ls = self.clamped_log_std();
        let mut lp = 0.0;
        for d in 0..2 {
            let sigma = ls[d].exp();
            let z = (action[d] - self.mean[d]) / sigma;
            lp -= 0.5 * z * z + ls[d] + 0.5 * LN_2PI;
        }
        lp
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> ([f64; 2], f64) {
        let ls = self.clamped_log_std();
        let mut a = [0.0; 2];
        for d in 0..2 {
            a[d] = self.mean[d] + ls[d].exp() * standard_normal(rng);
        }
        (a, self.log_prob(a))
    }

    /// Deterministic mode: the mean with its own log-probability.
    pub fn mode(&self) -> ([f64; 2], f64) {
        (self.mean, self.log_prob(self.mean))
    }
}

/// Graph handles for every parameter plus the heads, in canonical order.
pub struct NetVars {
    pub all: Vec<Var>,
    pub gru_fw: GruVars,
    pub gru_bw: Option<GruVars>,
    pub ln_gain: Var,
    pub ln_bias: Var,
    pub actor: [LinVars; 3],
    pub critic: [LinVars; 3],
    pub log_std: Var,
}

pub struct GruVars {
    pub w_z: Var,
    pub w_r: Var,
    pub w_h: Var,
    pub u_z: Var,
    pub u_r: Var,
    pub u_h: Var,
    pub b_z: Var,
    pub b_r: Var,
    pub b_h: Var,
}

pub struct LinVars {
    pub w: Var,
    pub b: Var,
}

/// A batch of observations flattened into padded, masked step tensors.
pub struct ObsBatch {
    pub n: usize,
    /// `steps_fw[t]`: block t of each sequence (zero rows past the end).
    steps_fw: Vec<Tensor>,
    /// `steps_bw[t]`: block `len-1-t` of each sequence.
    steps_bw: Vec<Tensor>,
    /// `(n, 1)` validity masks per step.
    masks: Vec<Tensor>,
    self_block: Tensor,
}

impl ObsBatch {
    pub fn build(observations: &[&Observation], cfg: &NetConfig) -> ObsBatch {
        let n = observations.len();
        let nw = cfg.neighbor_width();
        let max_len = observations.iter().map(|o| o.neighbors.len()).max().unwrap_or(0);
        let block = |o: &Observation, idx: usize| -> Vec<f64> {
            let nb = &o.neighbors[idx];
            match cfg.obs_mode {
                ObsMode::Cones => nb.block().to_vec(),
                ObsMode::Raw => nb.raw_block(o.velocity(), o.position).to_vec(),
            }
        };
        let mut steps_fw = Vec::with_capacity(max_len);
        let mut steps_bw = Vec::with_capacity(max_len);
        let mut masks = Vec::with_capacity(max_len);
        for t in 0..max_len {
            let mut fw = Tensor::zeros(n, nw);
            let mut bw = Tensor::zeros(n, nw);
            let mut mask = Tensor::zeros(n, 1);
            for (i, o) in observations.iter().enumerate() {
                let len = o.neighbors.len();
                if t < len {
                    for (j, v) in block(o, t).into_iter().enumerate() {
                        fw.set(i, j, v);
                    }
                    for (j, v) in block(o, len - 1 - t).into_iter().enumerate() {
                        bw.set(i, j, v);
                    }
                    mask.set(i, 0, 1.0);
                }
            }
            steps_fw.push(fw);
            steps_bw.push(bw);
            masks.push(mask);
        }
        let sw = cfg.self_width();
        let mut self_block = Tensor::zeros(n, sw);
        for (i, o) in observations.iter().enumerate() {
            let s = o.self_block;
            let row: Vec<f64> = if cfg.trig_orientation {
                vec![s[0], s[1], s[2].cos(), s[2].sin(), s[3], s[4], s[5]]
            } else {
                s.to_vec()
            };
            for (j, v) in row.into_iter().enumerate() {
                self_block.set(i, j, v);
            }
        }
        ObsBatch { n, steps_fw, steps_bw, masks, self_block }
    }
}

/// The actor-critic network: configuration plus parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyNet {
    pub cfg: NetConfig,
    pub params: PolicyParams,
}

impl PolicyNet {
    pub fn new(cfg: NetConfig, seed: u64) -> PolicyNet {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = cfg.hidden;
        let nw = cfg.neighbor_width();
        let tw = cfg.trunk_width();
        let params = PolicyParams {
            gru_fw: init_gru(nw, h, &mut rng),
            gru_bw: match cfg.recurrent {
                RecurrentMode::Bidirectional => Some(init_gru(nw, h, &mut rng)),
                RecurrentMode::Forward => None,
            },
            ln_gain: Tensor::from_fn(1, tw, |_, _| 1.0),
            ln_bias: Tensor::zeros(1, tw),
            actor: [
                init_linear(tw, h, &mut rng),
                init_linear(h, h, &mut rng),
                init_linear(h, ACTION_DIM, &mut rng),
            ],
            critic: [
                init_linear(tw, h, &mut rng),
                init_linear(h, h, &mut rng),
                init_linear(h, 1, &mut rng),
            ],
            log_std: Tensor::from_fn(1, ACTION_DIM, |_, _| cfg.log_std_init),
        };
        PolicyNet { cfg, params }
    }

    /// Register every parameter as a trainable leaf, in canonical order.
    pub fn bind(&self, g: &mut Graph) -> NetVars {
        let mut all = Vec::new();
        let bind_gru = |g: &mut Graph, p: &GruParams, all: &mut Vec<Var>| {
            let vars: Vec<Var> = p.tensors().iter().map(|t| g.leaf((**t).clone())).collect();
            all.extend(&vars);
            GruVars {
                w_z: vars[0],
                w_r: vars[1],
                w_h: vars[2],
                u_z: vars[3],
                u_r: vars[4],
                u_h: vars[5],
                b_z: vars[6],
                b_r: vars[7],
                b_h: vars[8],
            }
        };
        let gru_fw = bind_gru(g, &self.params.gru_fw, &mut all);
        let gru_bw = self.params.gru_bw.as_ref().map(|p| bind_gru(g, p, &mut all));
        let ln_gain = g.leaf(self.params.ln_gain.clone());
        let ln_bias = g.leaf(self.params.ln_bias.clone());
        all.push(ln_gain);
        all.push(ln_bias);
        let bind_lin = |g: &mut Graph, l: &LinearParams, all: &mut Vec<Var>| {
            let w = g.leaf(l.w.clone());
            let b = g.leaf(l.b.clone());
            all.push(w);
            all.push(b);
            LinVars { w, b }
        };
        let actor = [
            bind_lin(g, &self.params.actor[0], &mut all),
            bind_lin(g, &self.params.actor[1], &mut all),
            bind_lin(g, &self.params.actor[2], &mut all),
        ];
        let critic = [
            bind_lin(g, &self.params.critic[0], &mut all),
            bind_lin(g, &self.params.critic[1], &mut all),
            bind_lin(g, &self.params.critic[2], &mut all),
        ];
        let log_std = g.leaf(self.params.log_std.clone());
        all.push(log_std);
        NetVars { all, gru_fw, gru_bw, ln_gain, ln_bias, actor, critic, log_std }
    }

    /// Build the forward pass on a graph; returns (action mean, value).
    pub fn forward_on(&self, g: &mut Graph, vars: &NetVars, batch: &ObsBatch) -> (Var, Var) {
        let n = batch.n;
        let h = self.cfg.hidden;
        let zero_h = Tensor::zeros(n, h);
        let run_gru = |g: &mut Graph, p: &GruVars, steps: &[Tensor]| -> Var {
            let mut hidden = g.input(zero_h.clone());
            for (t, x_t) in steps.iter().enumerate() {
                let x = g.input(x_t.clone());
                let next = gru_step(g, p, x, hidden);
                // Keep the previous hidden state past each sequence's end.
                let mask = g.input(batch.masks[t].clone());
                let delta = g.sub(next, hidden);
                let masked = g.mul(delta, mask);
                hidden = g.add(hidden, masked);
            }
            hidden
        };
        let feature = {
            let fw = run_gru(g, &vars.gru_fw, &batch.steps_fw);
            match &vars.gru_bw {
                Some(bw) => {
                    let bw = run_gru(g, bw, &batch.steps_bw);
                    g.add(fw, bw)
                }
                None => fw,
            }
        };
        let self_block = g.input(batch.self_block.clone());
        let trunk = g.concat_cols(feature, self_block);
        let normed = g.layer_norm_row(trunk, LN_EPS);
        let gained = g.mul(normed, vars.ln_gain);
        let z = g.add(gained, vars.ln_bias);

        let mlp = |g: &mut Graph, layers: &[LinVars; 3], z: Var| -> Var {
            let h1 = linear(g, &layers[0], z);
            let h1 = g.relu(h1);
            let h2 = linear(g, &layers[1], h1);
            let h2 = g.relu(h2);
            linear(g, &layers[2], h2)
        };
        let mean = mlp(g, &vars.actor, z);
        let mean = g.tanh(mean);
        let value = mlp(g, &vars.critic, z);
        (mean, value)
    }

    /// Values-only batched forward: one distribution and value per input.
    ///
    /// Runs the hand-unrolled inference path, which borrows the weights
    /// instead of copying them onto a tape; it computes exactly the same
    /// floating-point operations as the graph path.
    pub fn forward_batch(&self, observations: &[&Observation]) -> Vec<(ActionDistribution, f64)> {
        if observations.is_empty() {
            return Vec::new();
        }
        let batch = ObsBatch::build(observations, &self.cfg);
        let (means, values) = self.forward_values(&batch);
        let ls = &self.params.log_std;
        let log_std = [ls.get(0, 0), ls.get(0, 1)];
        (0..batch.n)
            .map(|i| {
                (
                    ActionDistribution {
                        mean: [means.get(i, 0), means.get(i, 1)],
                        log_std,
                    },
                    values.get(i, 0),
                )
            })
            .collect()
    }

    /// Inference forward pass over a prepared batch: (means, values).
    pub fn forward_values(&self, batch: &ObsBatch) -> (Tensor, Tensor) {
        let n = batch.n;
        let h = self.cfg.hidden;
        let run_gru = |p: &GruParams, steps: &[Tensor]| -> Tensor {
            let mut hidden = Tensor::zeros(n, h);
            for (t, x) in steps.iter().enumerate() {
                let z = gate_values(x, &p.w_z, &hidden, &p.u_z, &p.b_z, sigmoid);
                let r = gate_values(x, &p.w_r, &hidden, &p.u_r, &p.b_r, sigmoid);
                let rh = ew_mul(&r, &hidden);
                let cand = gate_values(x, &p.w_h, &rh, &p.u_h, &p.b_h, f64::tanh);
                // h + mask * z * (cand - h)
                let mask = &batch.masks[t];
                for i in 0..n {
                    let m = mask.get(i, 0);
                    for j in 0..h {
                        let hv = hidden.get(i, j);
                        let delta = z.get(i, j) * (cand.get(i, j) - hv);
                        hidden.set(i, j, hv + m * delta);
                    }
                }
            }
            hidden
        };
        let mut feature = run_gru(&self.params.gru_fw, &batch.steps_fw);
        if let Some(bw) = &self.params.gru_bw {
            let back = run_gru(bw, &batch.steps_bw);
            for (f, b) in feature.data_mut().iter_mut().zip(back.data()) {
                *f += b;
            }
        }
        // trunk = layer_norm(concat(feature, self_block)) * gain + bias
        let sw = self.cfg.self_width();
        let tw = self.cfg.trunk_width();
        let mut z = Tensor::zeros(n, tw);
        for i in 0..n {
            let mut row: Vec<f64> = Vec::with_capacity(tw);
            row.extend_from_slice(feature.row_slice(i));
            row.extend_from_slice(&batch.self_block.row_slice(i)[..sw]);
            let mean = row.iter().sum::<f64>() / tw as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / tw as f64;
            let inv = 1.0 / (var.sqrt() + LN_EPS);
            for (j, v) in row.into_iter().enumerate() {
                let normed = (v - mean) * inv;
                z.set(i, j, normed * self.params.ln_gain.get(0, j) + self.params.ln_bias.get(0, j));
            }
        }
        let mlp = |layers: &[LinearParams; 3], z: &Tensor| -> Tensor {
            let h1 = affine(z, &layers[0].w, &layers[0].b).map(|x| x.max(0.0));
            let h2 = affine(&h1, &layers[1].w, &layers[1].b).map(|x| x.max(0.0));
            affine(&h2, &layers[2].w, &layers[2].b)
        };
        let mean = mlp(&self.params.actor, &z).map(f64::tanh);
        let value = mlp(&self.params.critic, &z);
        (mean, value)
    }

    pub fn forward(&self, obs: &Observation) -> (ActionDistribution, f64) {
        self.forward_batch(&[obs]).pop().expect("one output")
    }

    /// Fold a neighbor sequence into the fixed-width feature (the summed
    /// final hidden states). Exposed for tests and inspection.
    pub fn encode_neighbors(&self, blocks: &[Vec<f64>]) -> Vec<f64> {
        let nw = self.cfg.neighbor_width();
        for b in blocks {
            assert_eq!(b.len(), nw, "neighbor block width");
        }
        let n = 1;
        let max_len = blocks.len();
        let steps_fw: Vec<Tensor> =
            (0..max_len).map(|t| Tensor::from_vec(n, nw, blocks[t].clone())).collect();
        let steps_bw: Vec<Tensor> = (0..max_len)
            .map(|t| Tensor::from_vec(n, nw, blocks[max_len - 1 - t].clone()))
            .collect();
        let masks: Vec<Tensor> = (0..max_len).map(|_| Tensor::from_vec(1, 1, vec![1.0])).collect();
        let batch = ObsBatch {
            n,
            steps_fw,
            steps_bw,
            masks,
            self_block: Tensor::zeros(1, self.cfg.self_width()),
        };
        let mut g = Graph::new();
        let vars = self.bind(&mut g);
        let run = |g: &mut Graph, p: &GruVars, steps: &[Tensor]| -> Var {
            let mut hidden = g.input(Tensor::zeros(1, self.cfg.hidden));
            for x_t in steps {
                let x = g.input(x_t.clone());
                hidden = gru_step(g, p, x, hidden);
            }
            hidden
        };
        let fw = run(&mut g, &vars.gru_fw, &batch.steps_fw);
        let feature = match &vars.gru_bw {
            Some(bw) => {
                let b = run(&mut g, bw, &batch.steps_bw);
                g.add(fw, b)
            }
            None => fw,
        };
        g.value(feature).data().to_vec()
    }
}

fn linear(g: &mut Graph, l: &LinVars, x: Var) -> Var {
    let y = g.matmul(x, l.w);
    g.add(y, l.b)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `act(x @ w + h @ u + b)` without touching the tape.
fn gate_values(
    x: &Tensor,
    w: &Tensor,
    h: &Tensor,
    u: &Tensor,
    b: &Tensor,
    act: impl Fn(f64) -> f64,
) -> Tensor {
    let mut out = x.matmul(w);
    let hu = h.matmul(u);
    let cols = out.cols();
    for i in 0..out.rows() {
        for j in 0..cols {
            let v = out.get(i, j) + hu.get(i, j) + b.get(0, j);
            out.set(i, j, act(v));
        }
    }
    out
}

fn ew_mul(a: &Tensor, b: &Tensor) -> Tensor {
    let mut out = a.clone();
    for (o, y) in out.data_mut().iter_mut().zip(b.data()) {
        *o *= y;
    }
    out
}

fn affine(x: &Tensor, w: &Tensor, b: &Tensor) -> Tensor {
    let mut out = x.matmul(w);
    let cols = out.cols();
    for i in 0..out.rows() {
        for j in 0..cols {
            let v = out.get(i, j) + b.get(0, j);
            out.set(i, j, v);
        }
    }
    out
}

/// One GRU cell update over a batch:
/// `z = sig(xW_z + hU_z + b_z)`, `r = sig(xW_r + hU_r + b_r)`,
/// `cand = tanh(xW_h + (r*h)U_h + b_h)`, `h' = (1-z)*h + z*cand`.
pub fn gru_step(g: &mut Graph, p: &GruVars, x: Var, h: Var) -> Var {
    let gate = |g: &mut Graph, w: Var, u: Var, b: Var, x: Var, hh: Var| -> Var {
        let xw = g.matmul(x, w);
        let hu = g.matmul(hh, u);
        let s = g.add(xw, hu);
        g.add(s, b)
    };
    let z_pre = gate(g, p.w_z, p.u_z, p.b_z, x, h);
    let z = g.sigmoid(z_pre);
    let r_pre = gate(g, p.w_r, p.u_r, p.b_r, x, h);
    let r = g.sigmoid(r_pre);
    let rh = g.mul(r, h);
    let c_pre = gate(g, p.w_h, p.u_h, p.b_h, x, rh);
    let cand = g.tanh(c_pre);
    // h + z*(cand - h) == (1-z)*h + z*cand
    let delta = g.sub(cand, h);
    let zd = g.mul(z, delta);
    g.add(h, zd)
}
