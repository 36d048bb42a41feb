use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::params::ParamStore;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Global gradient-norm clip; `0` disables clipping.
    pub clip_norm: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            clip_norm: 0.0,
        }
    }
}

/// Adam with bias correction. Moments are kept per parameter in store order.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub step: u64,
    pub first_moment: Vec<Array2<f64>>,
    pub second_moment: Vec<Array2<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig, store: &ParamStore) -> Self {
        let zeros: Vec<Array2<f64>> = store
            .ids()
            .map(|id| Array2::zeros(store.value(id).dim()))
            .collect();
        Self {
            config,
            step: 0,
            first_moment: zeros.clone(),
            second_moment: zeros,
        }
    }

    /// Applies one update. `frozen[i]` parameters are left untouched.
    pub fn update(&mut self, store: &mut ParamStore, grads: &[Array2<f64>], frozen: &[bool]) {
        assert_eq!(grads.len(), store.len());
        self.step += 1;
        let c = self.config;
        let mut scale = 1.0;
        if c.clip_norm > 0.0 {
            let norm = grads
                .iter()
                .zip(frozen)
                .filter(|(_, f)| !**f)
                .map(|(g, _)| g.iter().map(|v| v * v).sum::<f64>())
                .sum::<f64>()
                .sqrt();
            if norm > c.clip_norm {
                scale = c.clip_norm / norm;
            }
        }
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        for (i, id) in store.ids().collect::<Vec<_>>().into_iter().enumerate() {
            if frozen.get(i).copied().unwrap_or(false) {
                continue;
            }
            let g = &grads[i];
            let m = &mut self.first_moment[i];
            let v = &mut self.second_moment[i];
            let p = store.value_mut(id);
            ndarray::Zip::from(p)
                .and(m)
                .and(v)
                .and(g)
                .for_each(|p, m, v, g| {
                    let g = g * scale;
                    *m = c.beta1 * *m + (1.0 - c.beta1) * g;
                    *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
                    let mh = *m / bc1;
                    let vh = *v / bc2;
                    *p -= c.learning_rate * mh / (vh.sqrt() + c.epsilon);
                });
        }
    }
}
