use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl NamedArray {
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Ordered collection of named parameter arrays.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    arrays: Vec<NamedArray>,
    index: HashMap<String, usize>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) -> Result<usize> {
        let name = name.into();
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::Config(format!(
                "parameter {name}: shape {shape:?} does not hold {} values",
                data.len()
            )));
        }
        if self.index.contains_key(&name) {
            return Err(Error::Config(format!("duplicate parameter {name}")));
        }
        let id = self.arrays.len();
        self.index.insert(name.clone(), id);
        self.arrays.push(NamedArray { name, shape, data });
        Ok(id)
    }

    pub fn id(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::Config(format!("missing parameter {name}")))
    }

    pub fn get(&self, name: &str) -> Result<&NamedArray> {
        Ok(&self.arrays[self.id(name)?])
    }

    /// Looks up `name` and checks its shape.
    pub fn expect(&self, name: &str, shape: &[usize]) -> Result<(usize, &[f64])> {
        let id = self.id(name)?;
        let a = &self.arrays[id];
        if a.shape != shape {
            return Err(Error::Config(format!(
                "parameter {name} has shape {:?}, expected {shape:?}",
                a.shape
            )));
        }
        Ok((id, &a.data))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn by_id(&self, id: usize) -> &NamedArray {
        &self.arrays[id]
    }

    pub fn by_id_mut(&mut self, id: usize) -> &mut NamedArray {
        &mut self.arrays[id]
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut NamedArray> {
        let id = self.id(name)?;
        Ok(&mut self.arrays[id])
    }

    pub fn len(&self) -> usize {
        self.arrays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrays.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &NamedArray> {
        self.arrays.iter()
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.arrays.iter().map(NamedArray::len).sum()
    }

    pub fn from_arrays(arrays: Vec<NamedArray>) -> Result<Self> {
        let mut p = Self::new();
        for a in arrays {
            p.insert(a.name, a.shape, a.data)?;
        }
        Ok(p)
    }
}

/// Gradient buffers aligned with a [`ParamSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    data: Vec<Vec<f64>>,
}

impl Grads {
    pub fn zeros_like(params: &ParamSet) -> Self {
        Self {
            data: params.iter().map(|a| vec![0.0; a.len()]).collect(),
        }
    }

    pub fn slot(&self, id: usize) -> &[f64] {
        &self.data[id]
    }

    pub fn slot_mut(&mut self, id: usize) -> &mut [f64] {
        &mut self.data[id]
    }

    pub fn add(&mut self, other: &Grads) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().flatten().for_each(|v| *v *= s);
    }

    pub fn l2_norm(&self) -> f64 {
        self.data.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().flatten().all(|v| v.is_finite())
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.iter().map(Vec::as_slice)
    }
}
