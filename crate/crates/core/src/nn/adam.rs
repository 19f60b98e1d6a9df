use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::ParamStore;
use crate::error::{Error, Result};
use crate::math::sqrt;

/// Adaptive moment estimation with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    steps: i32,
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            steps: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn steps(&self) -> i32 {
        self.steps
    }

    /// One update of every parameter that has an entry in `grads`.
    pub fn step(&mut self, params: &mut ParamStore, grads: &BTreeMap<String, Vec<f64>>) -> Result<()> {
        self.steps += 1;
        let c1 = 1.0 - libm::pow(self.beta1, self.steps as f64);
        let c2 = 1.0 - libm::pow(self.beta2, self.steps as f64);
        for (name, t) in params.iter_mut() {
            let Some(g) = grads.get(name) else { continue };
            if g.len() != t.len() {
                return Err(Error::Shape(alloc::format!("gradient for {name} has {} values, expected {}", g.len(), t.len())));
            }
            let m = self.m.entry(String::from(name)).or_insert_with(|| vec![0.0; g.len()]);
            let v = self.v.entry(String::from(name)).or_insert_with(|| vec![0.0; g.len()]);
            for (i, p) in t.data_mut().iter_mut().enumerate() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                *p -= self.lr * mh / (sqrt(vh) + self.eps);
            }
        }
        Ok(())
    }
}
