//! Shared oracles and helpers for the integration suites. Everything here
//! is independent of the library's analytic implementations: contact is
//! detected by forward integration, gradients by central differences.

use rvo_nav::nn::{Graph, Tensor, Var};
use rvo_nav::vec2::Vec2;

/// First time two discs moving at constant velocities reach the combined
/// radius, by stepping; `None` within the horizon.
pub fn contact_time_oracle(
    p_a: Vec2,
    v_a: Vec2,
    p_b: Vec2,
    v_b: Vec2,
    combined: f64,
    dt: f64,
    horizon: f64,
) -> Option<f64> {
    let mut t = 0.0;
    while t <= horizon {
        let pa = p_a + v_a * t;
        let pb = p_b + v_b * t;
        if pa.distance(pb) <= combined {
            return Some(t);
        }
        t += dt;
    }
    None
}

/// Evaluate a scalar graph function of leaf tensors.
pub fn eval_loss(build: &dyn Fn(&mut Graph, &[Var]) -> Var, leaves: &[Tensor]) -> f64 {
    let mut g = Graph::new();
    let vars: Vec<Var> = leaves.iter().map(|t| g.leaf(t.clone())).collect();
    let loss = build(&mut g, &vars);
    g.value(loss).item()
}

/// Reverse-mode gradients of the same function.
pub fn autodiff_gradients(
    build: &dyn Fn(&mut Graph, &[Var]) -> Var,
    leaves: &[Tensor],
) -> Vec<Tensor> {
    let mut g = Graph::new();
    let vars: Vec<Var> = leaves.iter().map(|t| g.leaf(t.clone())).collect();
    let loss = build(&mut g, &vars);
    g.backward(loss);
    vars.iter()
        .zip(leaves)
        .map(|(v, t)| g.grad(*v).cloned().unwrap_or_else(|| Tensor::zeros(t.rows(), t.cols())))
        .collect()
}

/// Central finite differences, h on every element of every leaf.
pub fn finite_diff_gradients(
    build: &dyn Fn(&mut Graph, &[Var]) -> Var,
    leaves: &[Tensor],
    h: f64,
) -> Vec<Tensor> {
    leaves
        .iter()
        .enumerate()
        .map(|(pi, t)| {
            let mut out = Tensor::zeros(t.rows(), t.cols());
            for e in 0..t.len() {
                let mut plus = leaves.to_vec();
                plus[pi].data_mut()[e] += h;
                let mut minus = leaves.to_vec();
                minus[pi].data_mut()[e] -= h;
                out.data_mut()[e] = (eval_loss(build, &plus) - eval_loss(build, &minus)) / (2.0 * h);
            }
            out
        })
        .collect()
}

/// Largest relative disagreement between autodiff and finite differences,
/// with |x| <= 1 treated as absolute error.
pub fn max_gradient_error(build: &dyn Fn(&mut Graph, &[Var]) -> Var, leaves: &[Tensor]) -> f64 {
    let ad = autodiff_gradients(build, leaves);
    let fd = finite_diff_gradients(build, leaves, 1e-5);
    let mut worst = 0.0f64;
    for (a, f) in ad.iter().zip(&fd) {
        for (x, y) in a.data().iter().zip(f.data()) {
            let scale = x.abs().max(y.abs()).max(1.0);
            worst = worst.max((x - y).abs() / scale);
        }
    }
    worst
}
