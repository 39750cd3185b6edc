use std::collections::BTreeMap;

use super::real::Real;
use super::tensor::Tensor;
use super::EngineError;

/// Named trainable tensors, iterated in lexicographic name order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParameterSet<T: Real = f32> {
    tensors: BTreeMap<String, Tensor<T>>,
}

impl<T: Real> ParameterSet<T> {
    pub fn new() -> Self {
        Self {
            tensors: BTreeMap::new(),
        }
    }

    /// Registers a parameter; names must be unique.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<T>) -> Result<(), EngineError> {
        let name = name.into();
        if self.tensors.contains_key(&name) {
            return Err(EngineError::DuplicateParameter(name));
        }
        self.tensors.insert(name, tensor.with_requires_grad(true));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.tensors.get_mut(name)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor<T>, EngineError> {
        self.tensors
            .get(name)
            .ok_or_else(|| EngineError::UnknownParameter(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<T>)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    pub fn zero_grads(&mut self) {
        self.tensors.values_mut().for_each(Tensor::zero_grad);
    }

    pub fn clear_grads(&mut self) {
        self.tensors.values_mut().for_each(Tensor::clear_grad);
    }

    pub fn cast<U: Real>(&self) -> ParameterSet<U> {
        ParameterSet {
            tensors: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), v.cast()))
                .collect(),
        }
    }
}

/// Plain gradient descent: `w <- w - lr * grad`, then gradients are zeroed.
///
/// Every parameter must carry a gradient; a parameter the loss never reached
/// still has one after `backward` only if a previous step allocated it, so
/// callers zero rather than clear between steps.
pub fn sgd_update<T: Real>(params: &mut ParameterSet<T>, learning_rate: T) -> Result<(), EngineError> {
    if !learning_rate.is_finite() || learning_rate < T::zero() {
        return Err(EngineError::InvalidLearningRate(learning_rate.as_f64()));
    }
    if let Some((name, _)) = params.iter().find(|(_, t)| t.grad().is_none()) {
        return Err(EngineError::MissingGradient(name.to_string()));
    }
    for (_, tensor) in params.iter_mut() {
        let grad = tensor.grad().expect("checked above").to_vec();
        tensor
            .values_mut()
            .iter_mut()
            .zip(&grad)
            .for_each(|(w, g)| *w = *w - learning_rate * *g);
        tensor.zero_grad();
    }
    Ok(())
}
