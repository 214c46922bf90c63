use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use ndarray::{Array2, Zip};

use crate::error::{Result, SrlError};
use crate::scalar::Scalar;

/// Flat, ordered collection of named tensors.
///
/// Networks index into their set positionally, so the order of insertion is
/// part of a network's layout. EMA partners must share names and shapes.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterSet<T> {
    names: Vec<String>,
    tensors: Vec<Array2<T>>,
}

impl<T: Scalar> Default for ParameterSet<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParameterSet<T> {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Array2<T>) {
        self.names.push(name.into());
        self.tensors.push(tensor);
    }

    pub fn extend(&mut self, other: ParameterSet<T>) {
        self.names.extend(other.names);
        self.tensors.extend(other.tensors);
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(String::as_str)
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Array2<T>> {
        self.tensors.iter()
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Array2<T>> {
        self.tensors.iter_mut()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Array2<T>)> {
        self.names.iter().map(String::as_str).zip(self.tensors.iter())
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Array2<T>)> {
        self.names.iter().map(String::as_str).zip(self.tensors.iter_mut())
    }

    pub fn tensor(&self, index: usize) -> &Array2<T> {
        &self.tensors[index]
    }

    pub fn tensor_mut(&mut self, index: usize) -> &mut Array2<T> {
        &mut self.tensors[index]
    }

    pub fn get(&self, name: &str) -> Option<&Array2<T>> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Array2<T>> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(move |i| &mut self.tensors[i])
    }

    /// Total number of scalars.
    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    pub fn scalar_at(&self, flat: usize) -> T {
        let (t, i) = self.locate(flat);
        self.tensors[t].as_slice().expect("standard layout")[i]
    }

    pub fn set_scalar_at(&mut self, flat: usize, value: T) {
        let (t, i) = self.locate(flat);
        self.tensors[t].as_slice_mut().expect("standard layout")[i] = value;
    }

    fn locate(&self, mut flat: usize) -> (usize, usize) {
        for (t, tensor) in self.tensors.iter().enumerate() {
            if flat < tensor.len() {
                return (t, flat);
            }
            flat -= tensor.len();
        }
        panic!("flat parameter index out of range");
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Errors unless `other` has the same names and shapes in the same order.
    pub fn check_compatible(&self, other: &ParameterSet<T>) -> Result<()> {
        if self.len() != other.len() {
            return Err(SrlError::Shape {
                name: "<parameter count>".into(),
                left: (self.len(), 0),
                right: (other.len(), 0),
            });
        }
        for ((n1, t1), (n2, t2)) in self.iter().zip(other.iter()) {
            if n1 != n2 || t1.dim() != t2.dim() {
                return Err(SrlError::Shape {
                    name: format!("{n1}/{n2}"),
                    left: t1.dim(),
                    right: t2.dim(),
                });
            }
        }
        Ok(())
    }

    /// Hash of the exact bit patterns, used to prove a set was not touched.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for (name, t) in self.iter() {
            name.hash(&mut h);
            t.dim().hash(&mut h);
            for v in t.iter() {
                v.as_f64().to_bits().hash(&mut h);
            }
        }
        h.finish()
    }
}

/// `target <- tau * online + (1 - tau) * target`, elementwise.
pub fn ema_update<T: Scalar>(
    target: &mut ParameterSet<T>,
    online: &ParameterSet<T>,
    tau: T,
) -> Result<()> {
    if !(tau >= T::zero() && tau <= T::one()) {
        return Err(SrlError::InvalidArgument(format!(
            "EMA rate must lie in [0, 1], got {tau}"
        )));
    }
    target.check_compatible(online)?;
    let keep = T::one() - tau;
    for (t, o) in target.tensors.iter_mut().zip(online.tensors.iter()) {
        Zip::from(t).and(o).for_each(|t, &o| *t = tau * o + keep * *t);
    }
    Ok(())
}
