use serde::{Deserialize, Serialize};

use crate::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

/// Adam with bias-corrected moments.
#[derive(Clone, Debug)]
pub struct Adam<F> {
    pub config: AdamConfig,
    t: u64,
    m: Vec<Tensor<F>>,
    v: Vec<Tensor<F>>,
    skipped: u64,
}

impl<F: Real> Adam<F> {
    pub fn new(config: AdamConfig, params: &[&Tensor<F>]) -> Self {
        let zeros = |p: &&Tensor<F>| Tensor::zeros(p.dims());
        Self {
            config,
            t: 0,
            m: params.iter().map(zeros).collect(),
            v: params.iter().map(zeros).collect(),
            skipped: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Number of steps dropped because of non-finite gradients.
    pub fn skipped(&self) -> u64 {
        self.skipped
    }

    /// Applies one update. Returns `false` (leaving everything untouched)
    /// when any gradient is non-finite.
    pub fn step(&mut self, params: &mut [&mut Tensor<F>], grads: &[Tensor<F>]) -> bool {
        assert_eq!(params.len(), grads.len(), "param/grad count");
        assert_eq!(params.len(), self.m.len(), "param/state count");
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            self.skipped += 1;
            log::warn!("adam: non-finite gradient in tensor {i}, step skipped");
            return false;
        }
        self.t += 1;
        let c = &self.config;
        let (b1, b2) = (F::of(c.beta1), F::of(c.beta2));
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        let step = F::of(c.lr / bc1);
        let inv_bc2 = F::of(1.0 / bc2);
        let eps = F::of(c.eps);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            let it = p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut().iter_mut().zip(v.data_mut().iter_mut()));
            for ((pv, &gv), (mv, vv)) in it {
                *mv = b1 * *mv + (F::one() - b1) * gv;
                *vv = b2 * *vv + (F::one() - b2) * gv * gv;
                *pv = *pv - step * *mv / ((*vv * inv_bc2).sqrt() + eps);
            }
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = Tensor::<f64>::vector(vec![1.0, -2.0]);
        let mut adam = Adam::new(AdamConfig::default(), &[&p]);
        for _ in 0..5 {
            adam.step(&mut [&mut p], &[Tensor::zeros(&[2])]);
        }
        assert_eq!(p.data(), &[1.0, -2.0]);
    }

    #[test]
    fn constant_gradient_step_tends_to_lr() {
        let mut p = Tensor::<f64>::vector(vec![0.0]);
        let cfg = AdamConfig::with_lr(0.01);
        let mut adam = Adam::new(cfg, &[&p]);
        let mut last = 0.0;
        for _ in 0..2000 {
            let before = p.data()[0];
            adam.step(&mut [&mut p], &[Tensor::vector(vec![-3.0])]);
            last = p.data()[0] - before;
        }
        assert!((last - 0.01).abs() < 1e-6, "step {last}");
    }

    #[test]
    fn scalar_three_steps_match_recurrence() {
        // hand-unrolled Adam: lr 0.1, grads 1, -2, 0.5
        let (lr, b1, b2, eps) = (0.1f64, 0.9f64, 0.999f64, 1e-8f64);
        let gs = [1.0, -2.0, 0.5];
        let (mut x, mut m, mut v) = (0.3f64, 0.0f64, 0.0f64);
        for (t, g) in gs.iter().enumerate() {
            let t = (t + 1) as i32;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            x -= lr * mh / (vh.sqrt() + eps);
        }
        let mut p = Tensor::<f64>::vector(vec![0.3]);
        let mut adam = Adam::new(AdamConfig::with_lr(lr), &[&p]);
        for g in gs {
            adam.step(&mut [&mut p], &[Tensor::vector(vec![g])]);
        }
        assert!((p.data()[0] - x).abs() < 1e-7, "{} vs {x}", p.data()[0]);
    }

    #[test]
    fn non_finite_gradient_skips() {
        let mut p = Tensor::<f32>::vector(vec![1.0]);
        let mut adam = Adam::new(AdamConfig::default(), &[&p]);
        assert!(!adam.step(&mut [&mut p], &[Tensor::vector(vec![f32::NAN])]));
        assert_eq!(p.data(), &[1.0]);
        assert_eq!(adam.steps(), 0);
        assert_eq!(adam.skipped(), 1);
    }
}
