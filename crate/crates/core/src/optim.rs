use ndarray::{Array2, Zip};

use crate::autodiff::{Gradients, ParamId, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq)]
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

/// Adam over a fixed subset of a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    ids: Vec<ParamId>,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
    t: u64,
}

impl Adam {
    pub fn new(cfg: AdamConfig, store: &ParamStore, ids: &[ParamId]) -> Self {
        let zeros = |id: &ParamId| Array2::zeros(store.get(*id).dim());
        Self {
            cfg,
            ids: ids.to_vec(),
            m: ids.iter().map(zeros).collect(),
            v: ids.iter().map(zeros).collect(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Collects this optimizer's gradients (zeros where a parameter was unused) and
    /// rescales them to a global L2 norm of at most `max_norm`. Returns the norm before clipping.
    pub fn collect_grads(&self, grads: &Gradients, store: &ParamStore, max_norm: Option<f64>) -> (Vec<Array2<f64>>, f64) {
        let mut gs: Vec<Array2<f64>> = self
            .ids
            .iter()
            .map(|id| grads.param(*id).cloned().unwrap_or_else(|| Array2::zeros(store.get(*id).dim())))
            .collect();
        let norm = gs.iter().map(|g| g.iter().map(|x| x * x).sum::<f64>()).sum::<f64>().sqrt();
        if let Some(max) = max_norm {
            if norm > max {
                let k = max / norm;
                gs.iter_mut().for_each(|g| g.mapv_inplace(|x| x * k));
            }
        }
        (gs, norm)
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &[Array2<f64>]) {
        assert_eq!(grads.len(), self.ids.len());
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.cfg;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for (k, id) in self.ids.iter().enumerate() {
            let p = store.get_mut(*id);
            Zip::from(p)
                .and(&mut self.m[k])
                .and(&mut self.v[k])
                .and(&grads[k])
                .for_each(|p, m, v, &g| {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let mhat = *m / bc1;
                    let vhat = *v / bc2;
                    *p -= lr * mhat / (vhat.sqrt() + eps);
                });
        }
    }
}
