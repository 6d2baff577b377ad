//! A small reverse-mode autodiff tape over dense matrices.
//!
//! Operations append nodes to a [`Graph`]; values are computed eagerly and
//! gradients flow backward through the tape on demand. Nodes reference only
//! earlier nodes, so creation order is already a topological order.
//!
//! Binary elementwise ops support two broadcast forms for the right operand:
//! a `(1, c)` row against an `(n, c)` left, and an `(n, 1)` column against an
//! `(n, c)` left. Gradients of a broadcast operand are reduced by summation.

use crate::nn::tensor::Tensor;

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Exp(Var),
    ConcatCols(Var, Var),
    RowSum(Var),
    Mean(Var),
    LayerNormRow(Var, f64),
    Clip(Var, f64, f64),
    Min(Var, Var),
}

struct Node {
    value: Tensor,
    grad: Option<Tensor>,
    op: Op,
    needs_grad: bool,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// How the right operand of an elementwise op lines up with the left.
#[derive(Clone, Copy, PartialEq, Eq)]
enum Broadcast {
    None,
    Row,
    Col,
}

fn broadcast_kind(a: (usize, usize), b: (usize, usize)) -> Broadcast {
    if a == b {
        Broadcast::None
    } else if b.0 == 1 && b.1 == a.1 {
        Broadcast::Row
    } else if b.1 == 1 && b.0 == a.0 {
        Broadcast::Col
    } else {
        panic!("incompatible elementwise shapes {a:?} vs {b:?}");
    }
}

fn zip_broadcast(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let (rows, cols) = a.shape();
    match broadcast_kind(a.shape(), b.shape()) {
        Broadcast::None => Tensor::from_fn(rows, cols, |i, j| f(a.get(i, j), b.get(i, j))),
        Broadcast::Row => Tensor::from_fn(rows, cols, |i, j| f(a.get(i, j), b.get(0, j))),
        Broadcast::Col => Tensor::from_fn(rows, cols, |i, j| f(a.get(i, j), b.get(i, 0))),
    }
}

/// Reduce a full-shape gradient onto the (possibly broadcast) shape of `b`.
fn reduce_to(grad: &Tensor, b_shape: (usize, usize)) -> Tensor {
    if grad.shape() == b_shape {
        return grad.clone();
    }
    let (rows, cols) = grad.shape();
    if b_shape.0 == 1 {
        let mut out = Tensor::zeros(1, cols);
        for i in 0..rows {
            for j in 0..cols {
                out.data_mut()[j] += grad.get(i, j);
            }
        }
        out
    } else {
        let mut out = Tensor::zeros(rows, 1);
        for i in 0..rows {
            let mut s = 0.0;
            for j in 0..cols {
                s += grad.get(i, j);
            }
            out.data_mut()[i] = s;
        }
        out
    }
}

impl Graph {
    pub fn new() -> Graph {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, grad: None, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// A constant: gradients are not tracked through it.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A trainable leaf: `grad()` is available after `backward()`.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).matmul(self.value(b));
        let needs = self.needs(a) || self.needs(b);
        self.push(value, Op::MatMul(a, b), needs)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = zip_broadcast(self.value(a), self.value(b), |x, y| x + y);
        let needs = self.needs(a) || self.needs(b);
        self.push(value, Op::Add(a, b), needs)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = zip_broadcast(self.value(a), self.value(b), |x, y| x - y);
        let needs = self.needs(a) || self.needs(b);
        self.push(value, Op::Sub(a, b), needs)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = zip_broadcast(self.value(a), self.value(b), |x, y| x * y);
        let needs = self.needs(a) || self.needs(b);
        self.push(value, Op::Mul(a, b), needs)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        let value = zip_broadcast(self.value(a), self.value(b), |x, y| x / y);
        let needs = self.needs(a) || self.needs(b);
        self.push(value, Op::Div(a, b), needs)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let value = self.value(a).map(|x| x * k);
        let needs = self.needs(a);
        self.push(value, Op::Scale(a, k), needs)
    }

    pub fn add_scalar(&mut self, a: Var, k: f64) -> Var {
        let value = self.value(a).map(|x| x + k);
        let needs = self.needs(a);
        self.push(value, Op::AddScalar(a), needs)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| 1.0 / (1.0 + (-x).exp()));
        let needs = self.needs(a);
        self.push(value, Op::Sigmoid(a), needs)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::tanh);
        let needs = self.needs(a);
        self.push(value, Op::Tanh(a), needs)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x.max(0.0));
        let needs = self.needs(a);
        self.push(value, Op::Relu(a), needs)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::exp);
        let needs = self.needs(a);
        self.push(value, Op::Exp(a), needs)
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.rows(), tb.rows(), "concat row mismatch");
        let (rows, ca, cb) = (ta.rows(), ta.cols(), tb.cols());
        let value = Tensor::from_fn(rows, ca + cb, |i, j| {
            if j < ca {
                ta.get(i, j)
            } else {
                tb.get(i, j - ca)
            }
        });
        let needs = self.needs(a) || self.needs(b);
        self.push(value, Op::ConcatCols(a, b), needs)
    }

    pub fn row_sum(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let value = Tensor::from_fn(t.rows(), 1, |i, _| t.row_slice(i).iter().sum());
        let needs = self.needs(a);
        self.push(value, Op::RowSum(a), needs)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let value = Tensor::scalar(t.data().iter().sum::<f64>() / t.len() as f64);
        let needs = self.needs(a);
        self.push(value, Op::Mean(a), needs)
    }

    /// Per-row normalization: subtract the row mean, divide by the row
    /// standard deviation plus `eps`. Gain and bias are composed outside.
    pub fn layer_norm_row(&mut self, a: Var, eps: f64) -> Var {
        let t = self.value(a);
        let (rows, cols) = t.shape();
        let mut value = Tensor::zeros(rows, cols);
        for i in 0..rows {
            let row = t.row_slice(i);
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / cols as f64;
            let inv = 1.0 / (var.sqrt() + eps);
            for j in 0..cols {
                value.set(i, j, (row[j] - mean) * inv);
            }
        }
        let needs = self.needs(a);
        self.push(value, Op::LayerNormRow(a, eps), needs)
    }

    pub fn clip(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let value = self.value(a).map(|x| x.clamp(lo, hi));
        let needs = self.needs(a);
        self.push(value, Op::Clip(a, lo, hi), needs)
    }

    pub fn min(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape(), tb.shape(), "min shape mismatch");
        let value = zip_broadcast(ta, tb, f64::min);
        let needs = self.needs(a) || self.needs(b);
        self.push(value, Op::Min(a, b), needs)
    }

    fn accumulate(&mut self, v: Var, delta: Tensor) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        match &mut self.nodes[v.0].grad {
            Some(g) => {
                for (gv, dv) in g.data_mut().iter_mut().zip(delta.data()) {
                    *gv += dv;
                }
            }
            slot @ None => *slot = Some(delta),
        }
    }

    /// Backpropagate from a scalar loss node. Gradients accumulate; call on
    /// a fresh graph for each optimization step.
    pub fn backward(&mut self, loss: Var) {
        assert_eq!(self.value(loss).shape(), (1, 1), "loss must be scalar");
        self.nodes[loss.0].grad = Some(Tensor::scalar(1.0));
        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].needs_grad {
                continue;
            }
            // Parents always have smaller indices, so this node's grad is
            // final; take it to avoid a copy and restore it afterwards.
            let Some(grad) = self.nodes[idx].grad.take() else {
                continue;
            };
            match self.nodes[idx].op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    if self.needs(a) {
                        let da = grad.matmul_transpose_b(self.value(b));
                        self.accumulate(a, da);
                    }
                    if self.needs(b) {
                        let db = self.value(a).matmul_transpose_a(&grad);
                        self.accumulate(b, db);
                    }
                }
                Op::Add(a, b) => {
                    if self.needs(a) {
                        self.accumulate(a, grad.clone());
                    }
                    if self.needs(b) {
                        let db = reduce_to(&grad, self.value(b).shape());
                        self.accumulate(b, db);
                    }
                }
                Op::Sub(a, b) => {
                    if self.needs(a) {
                        self.accumulate(a, grad.clone());
                    }
                    if self.needs(b) {
                        let db = reduce_to(&grad, self.value(b).shape()).map(|x| -x);
                        self.accumulate(b, db);
                    }
                }
                Op::Mul(a, b) => {
                    if self.needs(a) {
                        let da = zip_broadcast(&grad, self.value(b), |g, y| g * y);
                        self.accumulate(a, da);
                    }
                    if self.needs(b) {
                        let x = self.value(a);
                        let prod = Tensor::from_fn(grad.rows(), grad.cols(), |i, j| {
                            grad.get(i, j) * x.get(i, j)
                        });
                        let db = reduce_to(&prod, self.value(b).shape());
                        self.accumulate(b, db);
                    }
                }
                Op::Div(a, b) => {
                    if self.needs(a) {
                        let da = zip_broadcast(&grad, self.value(b), |g, y| g / y);
                        self.accumulate(a, da);
                    }
                    if self.needs(b) {
                        // d/db (a/b) = -a / b^2
                        let y = &self.nodes[idx].value;
                        let gy = Tensor::from_fn(grad.rows(), grad.cols(), |i, j| {
                            grad.get(i, j) * y.get(i, j)
                        });
                        let over_b = zip_broadcast(&gy, self.value(b), |g, bb| -g / bb);
                        let db = reduce_to(&over_b, self.value(b).shape());
                        self.accumulate(b, db);
                    }
                }
                Op::Scale(a, k) => {
                    self.accumulate(a, grad.map(|g| g * k));
                }
                Op::AddScalar(a) => {
                    self.accumulate(a, grad.clone());
                }
                Op::Sigmoid(a) => {
                    let y = &self.nodes[idx].value;
                    let da = Tensor::from_fn(grad.rows(), grad.cols(), |i, j| {
                        let s = y.get(i, j);
                        grad.get(i, j) * s * (1.0 - s)
                    });
                    self.accumulate(a, da);
                }
                Op::Tanh(a) => {
                    let y = &self.nodes[idx].value;
                    let da = Tensor::from_fn(grad.rows(), grad.cols(), |i, j| {
                        let t = y.get(i, j);
                        grad.get(i, j) * (1.0 - t * t)
                    });
                    self.accumulate(a, da);
                }
                Op::Relu(a) => {
                    let x = self.value(a);
                    let da = Tensor::from_fn(grad.rows(), grad.cols(), |i, j| {
                        if x.get(i, j) > 0.0 {
                            grad.get(i, j)
                        } else {
                            0.0
                        }
                    });
                    self.accumulate(a, da);
                }
                Op::Exp(a) => {
                    let y = &self.nodes[idx].value;
                    let da = Tensor::from_fn(grad.rows(), grad.cols(), |i, j| {
                        grad.get(i, j) * y.get(i, j)
                    });
                    self.accumulate(a, da);
                }
                Op::ConcatCols(a, b) => {
                    let ca = self.value(a).cols();
                    let rows = grad.rows();
                    let cb = grad.cols() - ca;
                    if self.needs(a) {
                        let da = Tensor::from_fn(rows, ca, |i, j| grad.get(i, j));
                        self.accumulate(a, da);
                    }
                    if self.needs(b) {
                        let db = Tensor::from_fn(rows, cb, |i, j| grad.get(i, j + ca));
                        self.accumulate(b, db);
                    }
                }
                Op::RowSum(a) => {
                    let (rows, cols) = self.value(a).shape();
                    let da = Tensor::from_fn(rows, cols, |i, _| grad.get(i, 0));
                    self.accumulate(a, da);
                }
                Op::Mean(a) => {
                    let (rows, cols) = self.value(a).shape();
                    let g = grad.item() / (rows * cols) as f64;
                    self.accumulate(a, Tensor::from_fn(rows, cols, |_, _| g));
                }
                Op::LayerNormRow(a, eps) => {
                    let x = self.value(a);
                    let y = &self.nodes[idx].value;
                    let (rows, cols) = x.shape();
                    let mut da = Tensor::zeros(rows, cols);
                    for i in 0..rows {
                        let xrow = x.row_slice(i);
                        let mean = xrow.iter().sum::<f64>() / cols as f64;
                        let var =
                            xrow.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
                        let sigma = var.sqrt();
                        let inv = 1.0 / (sigma + eps);
                        let grow = grad.row_slice(i);
                        let yrow = y.row_slice(i);
                        let gmean = grow.iter().sum::<f64>() / cols as f64;
                        let gy: f64 = grow.iter().zip(yrow).map(|(g, v)| g * v).sum();
                        for j in 0..cols {
                            // d/dx_j of (x - mean)/(sigma + eps): the sigma
                            // path vanishes for constant rows (y = 0).
                            let sigma_term = if sigma > 0.0 {
                                gy * yrow[j] / (cols as f64 * sigma)
                            } else {
                                0.0
                            };
                            da.set(i, j, inv * (grow[j] - gmean) - sigma_term);
                        }
                    }
                    self.accumulate(a, da);
                }
                Op::Clip(a, lo, hi) => {
                    let x = self.value(a);
                    let da = Tensor::from_fn(grad.rows(), grad.cols(), |i, j| {
                        let v = x.get(i, j);
                        if v > lo && v < hi {
                            grad.get(i, j)
                        } else {
                            0.0
                        }
                    });
                    self.accumulate(a, da);
                }
                Op::Min(a, b) => {
                    let (ta, tb) = (self.value(a), self.value(b));
                    let da = Tensor::from_fn(grad.rows(), grad.cols(), |i, j| {
                        if ta.get(i, j) <= tb.get(i, j) {
                            grad.get(i, j)
                        } else {
                            0.0
                        }
                    });
                    let db = Tensor::from_fn(grad.rows(), grad.cols(), |i, j| {
                        if ta.get(i, j) <= tb.get(i, j) {
                            0.0
                        } else {
                            grad.get(i, j)
                        }
                    });
                    if self.needs(a) {
                        self.accumulate(a, da);
                    }
                    if self.needs(b) {
                        self.accumulate(b, db);
                    }
                }
            }
            self.nodes[idx].grad = Some(grad);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Central finite differences on every element of every leaf.
    pub fn finite_diff_gradients(
        build: &dyn Fn(&mut Graph, &[Var]) -> Var,
        leaves: &[Tensor],
        h: f64,
    ) -> Vec<Tensor> {
        let eval = |params: &[Tensor]| -> f64 {
            let mut g = Graph::new();
            let vars: Vec<Var> = params.iter().map(|t| g.leaf(t.clone())).collect();
            let loss = build(&mut g, &vars);
            g.value(loss).item()
        };
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
                    out.data_mut()[e] = (eval(&plus) - eval(&minus)) / (2.0 * h);
                }
                out
            })
            .collect()
    }

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
            .map(|(v, t)| {
                g.grad(*v)
                    .cloned()
                    .unwrap_or_else(|| Tensor::zeros(t.rows(), t.cols()))
            })
            .collect()
    }

    pub fn assert_gradients_match(
        build: &dyn Fn(&mut Graph, &[Var]) -> Var,
        leaves: &[Tensor],
        tol: f64,
    ) {
        let ad = autodiff_gradients(build, leaves);
        let fd = finite_diff_gradients(build, leaves, 1e-5);
        for (pi, (a, f)) in ad.iter().zip(&fd).enumerate() {
            for e in 0..a.len() {
                let (x, y) = (a.data()[e], f.data()[e]);
                let scale = x.abs().max(y.abs()).max(1.0);
                assert!(
                    (x - y).abs() <= tol * scale,
                    "param {pi} elem {e}: autodiff {x} vs finite-diff {y}"
                );
            }
        }
    }

    fn rand_tensor(rows: usize, cols: usize, seed: u64) -> Tensor {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn matmul_chain_gradients() {
        let build = |g: &mut Graph, vars: &[Var]| {
            let y = g.matmul(vars[0], vars[1]);
            let z = g.tanh(y);
            g.mean(z)
        };
        let leaves = vec![rand_tensor(3, 4, 1), rand_tensor(4, 2, 2)];
        assert_gradients_match(&build, &leaves, 1e-6);
    }

    #[test]
    fn broadcast_gradients() {
        // Row-broadcast bias and column-broadcast mask together.
        let build = |g: &mut Graph, vars: &[Var]| {
            let x = g.add(vars[0], vars[1]); // (n,c) + (1,c)
            let m = g.mul(x, vars[2]); // (n,c) * (n,1)
            let d = g.div(m, vars[3]); // (n,c) / (1,c)
            let s = g.sigmoid(d);
            g.mean(s)
        };
        let leaves = vec![
            rand_tensor(4, 3, 3),
            rand_tensor(1, 3, 4),
            rand_tensor(4, 1, 5),
            rand_tensor(1, 3, 6).map(|x| x + 2.5),
        ];
        assert_gradients_match(&build, &leaves, 1e-6);
    }

    #[test]
    fn layer_norm_gradients() {
        let build = |g: &mut Graph, vars: &[Var]| {
            let y = g.layer_norm_row(vars[0], 1e-5);
            let gained = g.mul(y, vars[1]);
            let shifted = g.add(gained, vars[2]);
            let t = g.tanh(shifted);
            g.mean(t)
        };
        let leaves = vec![rand_tensor(3, 6, 7), rand_tensor(1, 6, 8), rand_tensor(1, 6, 9)];
        assert_gradients_match(&build, &leaves, 1e-6);
    }

    #[test]
    fn layer_norm_constant_row_is_stable() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::zeros(2, 5));
        let y = g.layer_norm_row(x, 1e-5);
        let loss = g.mean(y);
        g.backward(loss);
        assert!(g.grad(x).unwrap().all_finite());
        assert!(g.value(y).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn layer_norm_normalizes_rows() {
        let t = rand_tensor(5, 64, 10).map(|x| 3.0 * x + 0.7);
        let mut g = Graph::new();
        let x = g.input(t);
        let y = g.layer_norm_row(x, 1e-5);
        for i in 0..5 {
            let row = g.value(y).row_slice(i);
            let mean = row.iter().sum::<f64>() / row.len() as f64;
            let std =
                (row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / row.len() as f64).sqrt();
            assert!(mean.abs() < 1e-6, "row mean {mean}");
            assert!((std - 1.0).abs() < 1e-4, "row std {std}");
        }
    }

    #[test]
    fn concat_relu_exp_clip_min_gradients() {
        let build = |g: &mut Graph, vars: &[Var]| {
            let c = g.concat_cols(vars[0], vars[1]);
            let r = g.relu(c);
            let e = g.exp(r);
            let cl = g.clip(e, 0.8, 2.0);
            let other = g.add_scalar(vars[2], 1.0);
            let other2 = g.concat_cols(other, other);
            let m = g.min(cl, other2);
            let s = g.row_sum(m);
            g.mean(s)
        };
        // Keep values away from the relu/clip kinks so central differences
        // are valid.
        let a = rand_tensor(3, 2, 11).map(|x| x + 3.0 * x.signum());
        let b = rand_tensor(3, 2, 12).map(|x| x + 3.0 * x.signum());
        let c = rand_tensor(3, 2, 13).map(|x| 0.4 * x);
        assert_gradients_match(&build, &[a, b, c], 1e-6);
    }

    #[test]
    fn grad_accumulates_through_shared_nodes() {
        // f(x) = mean(x * x) must get both product paths.
        let build = |g: &mut Graph, vars: &[Var]| {
            let sq = g.mul(vars[0], vars[0]);
            g.mean(sq)
        };
        let x = rand_tensor(2, 3, 14);
        let grads = autodiff_gradients(&build, &[x.clone()]);
        for e in 0..x.len() {
            let expect = 2.0 * x.data()[e] / 6.0;
            assert!((grads[0].data()[e] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn inputs_do_not_collect_gradients() {
        let mut g = Graph::new();
        let x = g.input(rand_tensor(2, 2, 15));
        let w = g.leaf(rand_tensor(2, 2, 16));
        let y = g.matmul(x, w);
        let loss = g.mean(y);
        g.backward(loss);
        assert!(g.grad(x).is_none());
        assert!(g.grad(w).is_some());
    }
}
