use rand::seq::index;
use rand::Rng;

use super::config::{OptimizerConfig, OptimizerKind, Subsampling};

/// Gradient ascent over a flat parameter vector.
#[derive(Clone, Debug)]
pub struct Optimizer {
    cfg: OptimizerConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Optimizer {
    pub fn new(cfg: OptimizerConfig, dim: usize) -> Self {
        Optimizer { cfg, m: vec![0.0; dim], v: vec![0.0; dim], t: 0 }
    }

    pub fn ascend(&mut self, params: &mut [f64], grad: &[f64]) {
        let c = &self.cfg;
        self.t += 1;
        match c.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p += c.lr * g;
                }
            }
            OptimizerKind::Adam => {
                let b1t = 1.0 - c.beta1.powi(self.t as i32);
                let b2t = 1.0 - c.beta2.powi(self.t as i32);
                for i in 0..params.len() {
                    self.m[i] = c.beta1 * self.m[i] + (1.0 - c.beta1) * grad[i];
                    self.v[i] = c.beta2 * self.v[i] + (1.0 - c.beta2) * grad[i] * grad[i];
                    let mh = self.m[i] / b1t;
                    let vh = self.v[i] / b2t;
                    params[i] += c.lr * mh / (vh.sqrt() + c.eps);
                }
            }
        }
    }
}

/// Indices of one minibatch, in increasing order.
pub fn subsample<R: Rng + ?Sized>(n: usize, q: f64, mode: Subsampling, rng: &mut R) -> Vec<usize> {
    assert!(q > 0.0 && q <= 1.0, "sampling ratio must lie in (0, 1]");
    if q >= 1.0 {
        return (0..n).collect();
    }
    match mode {
        Subsampling::Poisson => (0..n).filter(|_| rng.random_bool(q)).collect(),
        Subsampling::FixedSize => {
            let m = ((q * n as f64).ceil() as usize).min(n);
            let mut v = index::sample(rng, n, m).into_vec();
            v.sort_unstable();
            v
        }
    }
}
