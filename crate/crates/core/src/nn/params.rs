use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::math::sqrt;

/// Named parameter tensors, iterated in name order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    seed: u64,
    tensors: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            tensors: BTreeMap::new(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn insert(&mut self, name: &str, t: Tensor) -> Result<()> {
        if self.tensors.contains_key(name) {
            return Err(Error::InvalidArgument(format!("duplicate parameter name {name}")));
        }
        self.tensors.insert(String::from(name), t);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar values.
    pub fn num_values(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    /// Registers every parameter as a differentiable leaf of `g`.
    pub fn bind(&self, g: &mut Graph) -> Result<Binding> {
        let mut vars = BTreeMap::new();
        for (name, t) in &self.tensors {
            vars.insert(name.clone(), g.input(t.clone())?);
        }
        Ok(Binding { vars })
    }

    /// Registers every parameter as a constant of `g`; for inference.
    pub fn bind_frozen(&self, g: &mut Graph) -> Result<Binding> {
        let mut vars = BTreeMap::new();
        for (name, t) in &self.tensors {
            vars.insert(name.clone(), g.constant(t.clone())?);
        }
        Ok(Binding { vars })
    }

    /// Same names, new values (as produced by `grad_check` perturbations).
    pub fn bind_values(&self, names: &[&str], vars: &[Var]) -> Binding {
        Binding {
            vars: names.iter().zip(vars).map(|(n, v)| (String::from(*n), *v)).collect(),
        }
    }
}

/// Parameter name to graph leaf.
#[derive(Debug, Clone, Default)]
pub struct Binding {
    vars: BTreeMap<String, Var>,
}

impl Binding {
    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::InvalidArgument(format!("unknown parameter {name}")))
    }

    /// Gradients after `g.backward`, zero-filled for parameters that did not contribute.
    pub fn grads(&self, g: &Graph) -> BTreeMap<String, Vec<f64>> {
        self.vars
            .iter()
            .map(|(name, &v)| {
                let grad = g.grad(v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; g.value(v).len()]);
                (name.clone(), grad)
            })
            .collect()
    }
}

/// Seeded initializer: weights uniform in `±sqrt(1 / fan_in)`.
pub struct Initializer {
    rng: ChaCha8Rng,
}

impl Initializer {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn uniform(&mut self, n: usize, bound: f64) -> Vec<f64> {
        (0..n).map(|_| self.rng.random_range(-bound..=bound)).collect()
    }

    /// `name.w` of shape `[fan_in x fan_out]` and `name.b` of shape `[1 x fan_out]`.
    pub fn linear(&mut self, store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize) -> Result<()> {
        let bound = sqrt(1.0 / fan_in as f64);
        let w = self.uniform(fan_in * fan_out, bound);
        let b = self.uniform(fan_out, bound);
        store.insert(&format!("{name}.w"), Tensor::matrix(fan_in, fan_out, w)?)?;
        store.insert(&format!("{name}.b"), Tensor::matrix(1, fan_out, b)?)
    }

    /// Linear layer with all-zero weight and bias.
    pub fn zero_linear(&mut self, store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize) -> Result<()> {
        store.insert(&format!("{name}.w"), Tensor::zeros(vec![fan_in, fan_out]))?;
        store.insert(&format!("{name}.b"), Tensor::zeros(vec![1, fan_out]))
    }

    /// Gain ones / bias zeros.
    pub fn layer_norm(&mut self, store: &mut ParamStore, name: &str, dim: usize) -> Result<()> {
        store.insert(&format!("{name}.gain"), Tensor::matrix(1, dim, vec![1.0; dim])?)?;
        store.insert(&format!("{name}.bias"), Tensor::zeros(vec![1, dim]))
    }
}
