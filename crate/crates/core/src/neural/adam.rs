use serde::{Deserialize, Serialize};

use super::network::Params;

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(lr: f64, n_params: usize) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: vec![0.0; n_params], v: vec![0.0; n_params] }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn update(&mut self, params: &mut Params, grad: &Params) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let mut k = 0;
        for (p, g) in params.slices_mut().into_iter().zip(grad.slices()) {
            for (pi, gi) in p.iter_mut().zip(g) {
                let m = &mut self.m[k];
                let v = &mut self.v[k];
                *m = self.beta1 * *m + (1.0 - self.beta1) * gi;
                *v = self.beta2 * *v + (1.0 - self.beta2) * gi * gi;
                *pi -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
                k += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::network::{Dense, Activation};
    use crate::neural::lstm::LstmBlock;

    fn params(w: Vec<f64>) -> Params {
        Params {
            blocks: Vec::<LstmBlock>::new(),
            head: vec![Dense { input: w.len(), output: 1, w, b: vec![0.0], activation: Activation::Tanh }],
        }
    }

    #[test]
    fn first_step_moves_by_lr() {
        // With bias correction the first update is lr·g/(|g|+eps).
        let mut p = params(vec![1.0, -2.0]);
        let g = params(vec![0.3, -5.0]);
        let mut adam = Adam::new(0.01, p.len());
        adam.update(&mut p, &g);
        assert!((p.head[0].w[0] - (1.0 - 0.01)).abs() < 1e-9);
        assert!((p.head[0].w[1] - (-2.0 + 0.01)).abs() < 1e-9);
        assert_eq!(p.head[0].b[0], 0.0);
        assert_eq!(adam.steps(), 1);
    }
}
