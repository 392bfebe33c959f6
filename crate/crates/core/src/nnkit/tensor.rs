use std::collections::btree_map::{self, BTreeMap};

use crate::error::{Error, Result};

/// Dense row-major tensor. Parameters are stored as `f32`; the same type
/// with `f64` elements serves as activation, gradient and shadow storage.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T = f32> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Copy + Default> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if shape.iter().any(|&d| d == 0) || data.len() != expected {
            return Err(Error::ShapeMismatch { expected: shape, actual: vec![data.len()] });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self { shape, data: vec![T::default(); n] }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub(crate) fn from_raw(shape: Vec<usize>, data: Vec<T>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }
}

impl Tensor<f32> {
    pub fn to_f64(&self) -> Tensor<f64> {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&v| f64::from(v)).collect() }
    }
}

impl Tensor<f64> {
    pub fn to_f32(&self) -> Tensor<f32> {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&v| v as f32).collect() }
    }
}

/// Named tensors, iterated in lexicographic name order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T = f32> {
    entries: BTreeMap<String, Tensor<T>>,
}

impl<T> Default for ModelParams<T> {
    fn default() -> Self {
        Self { entries: BTreeMap::new() }
    }
}

impl<T: Copy + Default> ModelParams<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<T>) -> Result<()> {
        match self.entries.entry(name.into()) {
            btree_map::Entry::Occupied(e) => Err(Error::DuplicateName(e.key().clone())),
            btree_map::Entry::Vacant(e) => {
                e.insert(tensor);
                Ok(())
            }
        }
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        self.entries.get(name).ok_or_else(|| Error::MissingParam(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<T>> {
        self.entries.get_mut(name).ok_or_else(|| Error::MissingParam(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<T>)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total scalar parameter count.
    pub fn param_count(&self) -> usize {
        self.entries.values().map(Tensor::len).sum()
    }

    pub fn zeros_like<U: Copy + Default>(&self) -> ModelParams<U> {
        ModelParams {
            entries: self.entries.iter().map(|(k, v)| (k.clone(), Tensor::zeros(v.shape.clone()))).collect(),
        }
    }

    /// Errors unless `other` has exactly the same names and shapes.
    pub fn check_same_layout<U>(&self, other: &ModelParams<U>) -> Result<()> {
        if self.entries.len() != other.entries.len() {
            return Err(Error::ShapeMismatch { expected: vec![self.entries.len()], actual: vec![other.entries.len()] });
        }
        for ((ka, va), (kb, vb)) in self.entries.iter().zip(&other.entries) {
            if ka != kb {
                return Err(Error::MissingParam(ka.clone()));
            }
            if va.shape != vb.shape {
                return Err(Error::ShapeMismatch { expected: va.shape.clone(), actual: vb.shape.clone() });
            }
        }
        Ok(())
    }
}

impl ModelParams<f32> {
    /// 64-bit working copy used for compute and finite differences.
    pub fn to_f64(&self) -> ModelParams<f64> {
        ModelParams { entries: self.entries.iter().map(|(k, v)| (k.clone(), v.to_f64())).collect() }
    }
}

impl ModelParams<f64> {
    pub fn to_f32(&self) -> ModelParams<f32> {
        ModelParams { entries: self.entries.iter().map(|(k, v)| (k.clone(), v.to_f32())).collect() }
    }

    /// `self += scale * other`, entry by entry. Layouts must match.
    pub fn add_scaled(&mut self, other: &ModelParams<f64>, scale: f64) {
        for (a, b) in self.entries.values_mut().zip(other.entries.values()) {
            for (x, y) in a.data.iter_mut().zip(&b.data) {
                *x += scale * y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for t in self.entries.values_mut() {
            t.data.iter_mut().for_each(|v| *v *= s);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_names_rejected() {
        let mut p = ModelParams::<f32>::new();
        p.insert("a", Tensor::zeros(vec![2])).unwrap();
        assert!(matches!(p.insert("a", Tensor::zeros(vec![2])), Err(Error::DuplicateName(_))));
    }

    #[test]
    fn iteration_is_lexicographic() {
        let mut p = ModelParams::<f32>::new();
        for name in ["fc2.weight", "conv1.bias", "fc1.bias"] {
            p.insert(name, Tensor::zeros(vec![1])).unwrap();
        }
        assert_eq!(p.names().collect::<Vec<_>>(), ["conv1.bias", "fc1.bias", "fc2.weight"]);
    }

    #[test]
    fn tensor_shape_checked() {
        assert!(Tensor::<f32>::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::<f32>::new(vec![2, 0], vec![]).is_err());
        assert!(Tensor::<f32>::new(vec![2, 3], vec![0.0; 6]).is_ok());
    }
}
