use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::Tensor;
use crate::error::{Error, Result};

/// Index of a parameter inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named trainable tensors with their accumulated gradients.
///
/// Values sit behind `Arc` so tapes on several threads can read them while a
/// single owner applies optimizer updates between steps.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Arc<Tensor>>,
    grads: Vec<Tensor>,
    frozen: Vec<bool>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.id(&name).is_some() {
            return Err(Error::Argument(format!("duplicate parameter name {name}")));
        }
        let grad = Tensor::new(value.shape().to_vec(), vec![0.0; value.numel()])?;
        self.names.push(name);
        self.values.push(Arc::new(value));
        self.grads.push(grad);
        self.frozen.push(false);
        Ok(ParamId(self.names.len() - 1))
    }

    /// Inserts a `rows x cols` matrix drawn from `N(0, scale^2)`.
    pub fn insert_normal(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        scale: f64,
        rng: &mut impl Rng,
    ) -> Result<ParamId> {
        let normal = Normal::new(0.0, scale.max(f64::MIN_POSITIVE))
            .map_err(|e| Error::Argument(e.to_string()))?;
        let data = (0..rows * cols).map(|_| normal.sample(rng)).collect();
        self.insert(name, Tensor::new(vec![rows, cols], data)?)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn require(&self, name: &str) -> Result<ParamId> {
        self.id(name)
            .ok_or_else(|| Error::Checkpoint(format!("missing parameter {name}")))
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.names.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub(crate) fn shared_value(&self, id: ParamId) -> Arc<Tensor> {
        Arc::clone(&self.values[id.0])
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        Arc::make_mut(&mut self.values[id.0])
    }

    pub fn set_value(&mut self, id: ParamId, value: Tensor) -> Result<()> {
        if value.shape() != self.values[id.0].shape() {
            return Err(Error::shape("set_value", self.values[id.0].shape(), value.shape()));
        }
        self.values[id.0] = Arc::new(value);
        Ok(())
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.grads[id.0]
    }

    pub fn is_frozen(&self, id: ParamId) -> bool {
        self.frozen[id.0]
    }

    /// Freezes (or unfreezes) every parameter whose name starts with `prefix`.
    pub fn set_frozen_prefix(&mut self, prefix: &str, frozen: bool) {
        for (name, flag) in self.names.iter().zip(self.frozen.iter_mut()) {
            if name.starts_with(prefix) {
                *flag = frozen;
            }
        }
    }

    pub fn zero_grad(&mut self) {
        for g in &mut self.grads {
            g.data_mut().fill(0.0);
        }
    }

    /// Adds `grads` into the stored gradients.
    pub fn accumulate(&mut self, grads: &Gradients) -> Result<()> {
        for (i, g) in grads.entries.iter().enumerate() {
            if let Some(g) = g {
                let target = self
                    .grads
                    .get_mut(i)
                    .ok_or_else(|| Error::State(format!("gradient for unknown parameter {i}")))?;
                target.add_assign(g)?;
            }
        }
        Ok(())
    }

    /// Scales all stored gradients, e.g. to average a minibatch.
    pub fn scale_grads(&mut self, factor: f64) {
        for g in &mut self.grads {
            for v in g.data_mut() {
                *v *= factor;
            }
        }
    }

    pub fn num_values(&self) -> usize {
        self.values.iter().map(|v| v.numel()).sum()
    }

    /// Copies every parameter of `other` whose name also exists here.
    pub fn copy_matching(&mut self, other: &ParamStore) -> Result<usize> {
        let mut copied = 0;
        for id in other.ids() {
            if let Some(mine) = self.id(other.name(id)) {
                self.set_value(mine, other.value(id).clone())?;
                copied += 1;
            }
        }
        Ok(copied)
    }
}

/// Per-parameter gradients produced by one backward pass.
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    pub(crate) entries: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.entries.get(id.0).and_then(Option::as_ref)
    }

    /// Sums `other` into `self`.
    pub fn merge(&mut self, other: Gradients) -> Result<()> {
        if self.entries.len() < other.entries.len() {
            self.entries.resize(other.entries.len(), None);
        }
        for (mine, theirs) in self.entries.iter_mut().zip(other.entries) {
            match (mine.as_mut(), theirs) {
                (Some(m), Some(t)) => m.add_assign(&t)?,
                (None, Some(t)) => *mine = Some(t),
                _ => {}
            }
        }
        Ok(())
    }
}
