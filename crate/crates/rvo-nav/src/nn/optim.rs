//! Adam with per-parameter moment buffers.

use crate::nn::tensor::Tensor;

pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    /// `shapes` must list every parameter in canonical order; the optimizer
    /// is then addressed by parameter index.
    pub fn new(lr: f64, shapes: &[(usize, usize)]) -> Adam {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: shapes.iter().map(|&(r, c)| Tensor::zeros(r, c)).collect(),
            v: shapes.iter().map(|&(r, c)| Tensor::zeros(r, c)).collect(),
        }
    }

    /// Start one optimization step (advances the bias-correction counter).
    pub fn begin_step(&mut self) {
        self.t += 1;
    }

    /// Apply the Adam update for one parameter. Call between `begin_step`s.
    pub fn update(&mut self, idx: usize, param: &mut Tensor, grad: &Tensor) {
        assert!(self.t > 0, "call begin_step first");
        assert_eq!(param.shape(), grad.shape(), "param/grad shape mismatch");
        let m = &mut self.m[idx];
        let v = &mut self.v[idx];
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for ((p, g), (mi, vi)) in param
            .data_mut()
            .iter_mut()
            .zip(grad.data())
            .zip(m.data_mut().iter_mut().zip(v.data_mut()))
        {
            *mi = self.beta1 * *mi + (1.0 - self.beta1) * g;
            *vi = self.beta2 * *vi + (1.0 - self.beta2) * g * g;
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}
