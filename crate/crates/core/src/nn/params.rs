use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
pub struct Parameter<T> {
    pub name: String,
    pub value: Tensor<T>,
    /// Frozen tensors (embedding tables, running statistics) never receive
    /// gradients.
    pub trainable: bool,
}

/// Ordered collection of named tensors owned by a model.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<T> {
    params: Vec<Parameter<T>>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore { params: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>, trainable: bool) -> ParamId {
        let name = name.into();
        debug_assert!(self.find(&name).is_none(), "duplicate parameter {name}");
        self.params.push(Parameter { name, value, trainable });
        ParamId(self.params.len() - 1)
    }

    /// Glorot-uniform matrix with the given fan sizes.
    pub fn add_glorot(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        fan_in: usize,
        fan_out: usize,
        rng: &mut ChaCha8Rng,
    ) -> ParamId {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| T::from_f64(rng.random_range(-limit..limit))).collect();
        let value = Tensor::new(shape.to_vec(), data).expect("glorot shape");
        self.add(name, value, true)
    }

    pub fn add_constant(&mut self, name: impl Into<String>, shape: &[usize], value: f64, trainable: bool) -> ParamId {
        self.add(name, Tensor::full(shape.to_vec(), T::from_f64(value)), trainable)
    }

    pub fn get(&self, id: ParamId) -> &Parameter<T> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter<T> {
        &mut self.params[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn by_name(&self, name: &str) -> Result<&Parameter<T>> {
        self.find(name)
            .map(|id| self.get(id))
            .ok_or_else(|| Error::usage(format!("no parameter named {name}")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter<T>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar values, optionally only trainable ones.
    pub fn count(&self, trainable_only: bool) -> usize {
        self.params
            .iter()
            .filter(|p| p.trainable || !trainable_only)
            .map(|p| p.value.len())
            .sum()
    }

    /// Sum of element counts for parameters whose name starts with `prefix`.
    pub fn count_prefix(&self, prefix: &str) -> usize {
        self.params
            .iter()
            .filter(|p| p.name.starts_with(prefix))
            .map(|p| p.value.len())
            .sum()
    }

    /// Copies every value into a store of another precision.
    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| Parameter {
                    name: p.name.clone(),
                    value: p.value.cast(),
                    trainable: p.trainable,
                })
                .collect(),
        }
    }

    /// Copies every parameter of `other` whose name and shape match one in
    /// `self`, returning the names copied.
    pub fn load_matching(&mut self, other: &ParamStore<T>) -> Vec<String> {
        let mut copied = Vec::new();
        for p in self.params.iter_mut() {
            if let Ok(src) = other.by_name(&p.name) {
                if src.value.shape() == p.value.shape() {
                    p.value = src.value.clone();
                    copied.push(p.name.clone());
                }
            }
        }
        copied
    }

    /// Overwrites values by name from `other`; shapes must agree and every
    /// parameter in `self` must be present.
    pub fn load_from(&mut self, other: &ParamStore<T>) -> Result<()> {
        for p in self.params.iter_mut() {
            let src = other.by_name(&p.name)?;
            if src.value.shape() != p.value.shape() {
                return Err(Error::shape("parameter load", p.value.shape(), src.value.shape()));
            }
            p.value = src.value.clone();
        }
        Ok(())
    }
}
