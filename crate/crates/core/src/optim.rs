//! Adam with bias correction over flat parameter slices.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct Adam<S> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// L2 penalty folded into the gradient. Zero disables it.
    pub weight_decay: f64,
    pub step: u64,
    moments: Vec<(Vec<S>, Vec<S>)>,
}

impl<S: Scalar> Adam<S> {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            step: 0,
            moments: Vec::new(),
        }
    }

    pub fn with_weight_decay(mut self, weight_decay: f64) -> Self {
        self.weight_decay = weight_decay;
        self
    }

    /// First and second moment accumulators, one pair per parameter slice.
    pub fn moments(&self) -> &[(Vec<S>, Vec<S>)] {
        &self.moments
    }

    /// One update. Parameter and gradient slices pair up positionally and
    /// must keep their shapes across calls.
    pub fn step(&mut self, params: &mut [&mut [S]], grads: &[&[S]]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::Shape(format!(
                "{} parameter slices but {} gradient slices",
                params.len(),
                grads.len()
            )));
        }
        if self.moments.is_empty() {
            self.moments = params
                .iter()
                .map(|p| (vec![S::zero(); p.len()], vec![S::zero(); p.len()]))
                .collect();
        }
        if self.moments.len() != params.len() {
            return Err(Error::Shape("parameter group count changed".into()));
        }
        for ((p, g), (m, _)) in params.iter().zip(grads).zip(&self.moments) {
            if p.len() != g.len() || p.len() != m.len() {
                return Err(Error::Shape(format!(
                    "parameter of length {} with gradient of length {}",
                    p.len(),
                    g.len()
                )));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (S::of(self.beta1), S::of(self.beta2));
        let bc1 = S::of(1.0 - self.beta1.powi(t));
        let bc2 = S::of(1.0 - self.beta2.powi(t));
        let (lr, eps, wd) = (S::of(self.lr), S::of(self.eps), S::of(self.weight_decay));
        let one = S::one();
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.moments.iter_mut()) {
            for i in 0..p.len() {
                let gi = g[i] + wd * p[i];
                m[i] = b1 * m[i] + (one - b1) * gi;
                v[i] = b2 * v[i] + (one - b2) * gi * gi;
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                p[i] = p[i] - lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
