use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::tensor::{DType, Tensor};

/// Ordered, uniquely named learnable tensors.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    entries: Vec<(String, Tensor)>,
}

impl ParamSet {
    pub fn new(entries: Vec<(String, Tensor)>) -> Result<Self> {
        let mut seen = HashSet::new();
        for (name, _) in &entries {
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidArgument(format!("duplicate parameter name '{name}'")));
            }
        }
        Ok(ParamSet { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn tensors(&self) -> Vec<Tensor> {
        self.entries.iter().map(|(_, t)| t.clone()).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }

    /// Same names with replacement tensors, which must keep each shape.
    pub fn with_tensors(&self, tensors: Vec<Tensor>) -> Result<Self> {
        if tensors.len() != self.entries.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} tensors, got {}",
                self.entries.len(),
                tensors.len()
            )));
        }
        let mut entries = Vec::with_capacity(tensors.len());
        for ((name, old), t) in self.entries.iter().zip(tensors) {
            if old.shape() != t.shape() {
                return Err(Error::InvalidArgument(format!(
                    "shape of '{name}' changes from {:?} to {:?}",
                    old.shape(),
                    t.shape()
                )));
            }
            entries.push((name.clone(), t));
        }
        Ok(ParamSet { entries })
    }

    pub fn cast(&self, dtype: DType) -> ParamSet {
        ParamSet {
            entries: self.entries.iter().map(|(n, t)| (n.clone(), t.cast(dtype))).collect(),
        }
    }

    pub fn detach(&self) -> ParamSet {
        ParamSet {
            entries: self.entries.iter().map(|(n, t)| (n.clone(), t.detach())).collect(),
        }
    }

    /// Names, shapes, dtypes and values all bitwise equal.
    pub fn bit_eq(&self, other: &ParamSet) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|((na, ta), (nb, tb))| na == nb && ta.bit_eq(tb))
    }
}
