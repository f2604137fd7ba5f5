use indexmap::IndexMap;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct WeightArray {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl WeightArray {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(Error::WeightFormat(format!(
                "dims {dims:?} need {n} values, got {}",
                data.len()
            )));
        }
        Ok(WeightArray { dims, data })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Named parameter arrays in insertion order. Lookup is by name only.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightStore {
    entries: IndexMap<String, WeightArray>,
}

impl WeightStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, array: WeightArray) -> Result<()> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(Error::WeightFormat(format!("duplicate entry {name:?}")));
        }
        self.entries.insert(name, array);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&WeightArray> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::MissingWeight(name.to_string()))
    }

    /// Values of `name`, which must have exactly `dims`.
    pub fn expect(&self, name: &str, dims: &[usize]) -> Result<&[f32]> {
        let array = self.get(name)?;
        if array.dims != dims {
            return Err(Error::WeightDims {
                name: name.to_string(),
                expected: dims.to_vec(),
                found: array.dims.clone(),
            });
        }
        Ok(&array.data)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &WeightArray)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut WeightArray)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn element_count(&self) -> usize {
        self.entries.values().map(WeightArray::len).sum()
    }
}
