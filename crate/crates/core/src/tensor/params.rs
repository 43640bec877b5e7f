use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{Result, Shape, Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    /// Dotted path such as `cim.3.wconv_r.weight`; unique within a store.
    pub name: String,
    pub value: Tensor,
}

/// Named trainable tensors in registration order.
///
/// Initial values depend only on `(seed, name)`, so two models that share a
/// parameter name start from the same weights regardless of what else they
/// contain.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    params: Vec<Parameter>,
    index: HashMap<String, ParamId>,
    seed: u64,
}

fn rng_for(seed: u64, name: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(name.as_bytes());
    let digest = h.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}

impl ParamStore {
    pub fn new(seed: u64) -> Self {
        ParamStore { params: Vec::new(), index: HashMap::new(), seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn insert(&mut self, name: impl Into<String>, mut value: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(TensorError::DuplicateParameter(name));
        }
        let id = ParamId(self.params.len());
        value.requires_grad = true;
        value.grad = None;
        self.index.insert(name.clone(), id);
        self.params.push(Parameter { name, value });
        Ok(id)
    }

    /// Convolution weight `[out_c, in_c, k, k]` drawn from
    /// `U(-b, b)` with `b = sqrt(1 / (in_c * k * k))`. Values are drawn in
    /// single precision so they survive the `f32` weight container unchanged.
    pub fn init_conv_weight(&mut self, name: &str, out_c: usize, in_c: usize, k: usize) -> Result<ParamId> {
        let shape: Shape = [out_c, in_c, k, k];
        let bound = (1.0 / (in_c * k * k) as f64).sqrt() as f32;
        let mut rng = rng_for(self.seed, name);
        let data = (0..out_c * in_c * k * k)
            .map(|_| rng.gen_range(-bound..bound) as f64)
            .collect();
        self.insert(name, Tensor::new(shape, data)?)
    }

    /// A per-channel vector stored as `[1, c, 1, 1]`, filled with `value`.
    pub fn init_channel_vector(&mut self, name: &str, channels: usize, value: f64) -> Result<ParamId> {
        self.insert(name, Tensor::full([1, channels, 1, 1], value))
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<&Parameter> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    /// Total scalar count over all parameters.
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.value.grad = Some(vec![0.0; p.value.numel()]);
        }
    }

    pub(crate) fn ensure_grads(&mut self) {
        for p in &mut self.params {
            if p.value.grad.is_none() {
                p.value.grad = Some(vec![0.0; p.value.numel()]);
            }
        }
    }

    pub(crate) fn accumulate_grad(&mut self, id: ParamId, g: &[f64]) {
        let value = &mut self.params[id.0].value;
        let acc = value.grad.get_or_insert_with(|| vec![0.0; g.len()]);
        for (a, v) in acc.iter_mut().zip(g) {
            *a += v;
        }
    }

    pub fn grad(&self, id: ParamId) -> Option<&[f64]> {
        self.params[id.0].value.grad.as_deref()
    }

    /// Replaces the value of `name`, keeping its shape.
    pub fn set_value(&mut self, name: &str, data: Vec<f64>) -> Result<()> {
        let id = self.id(name).ok_or_else(|| TensorError::UnknownParameter(name.to_string()))?;
        let p = &mut self.params[id.0];
        let shape = p.value.shape();
        let mut t = Tensor::new(shape, data)?;
        t.requires_grad = true;
        p.value = t;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn initialization_is_name_addressed() {
        let mut a = ParamStore::new(7);
        a.init_conv_weight("x.weight", 2, 3, 3).unwrap();
        a.init_conv_weight("y.weight", 2, 3, 3).unwrap();
        let mut b = ParamStore::new(7);
        b.init_conv_weight("y.weight", 2, 3, 3).unwrap();
        assert_eq!(a.by_name("y.weight").unwrap().value, b.by_name("y.weight").unwrap().value);
        assert_ne!(a.by_name("x.weight").unwrap().value.data(), a.by_name("y.weight").unwrap().value.data());
    }

    #[test]
    fn init_respects_fan_in_bound() {
        let mut s = ParamStore::new(1);
        let id = s.init_conv_weight("w", 4, 5, 3).unwrap();
        let bound = (1.0f64 / 45.0).sqrt();
        assert!(s.get(id).value.data().iter().all(|v| v.abs() <= bound));
        assert!(s.get(id).value.data().iter().all(|&v| v == v as f32 as f64));
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut s = ParamStore::new(0);
        s.init_channel_vector("g", 2, 1.0).unwrap();
        assert!(matches!(s.init_channel_vector("g", 2, 1.0), Err(TensorError::DuplicateParameter(_))));
    }
}
