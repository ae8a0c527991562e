//! Flat parameter vector with a named-block registry.
//!
//! Fits optimize one flat vector; the registry maps semantic blocks (scale,
//! offsets, one trajectory-network block per trial) onto disjoint slices that
//! partition the vector.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ParamVector {
    values: Vec<f64>,
    blocks: Vec<(String, Range<usize>)>,
}

impl ParamVector {
    pub fn new() -> Self {
        ParamVector {
            values: Vec::new(),
            blocks: Vec::new(),
        }
    }

    /// Append a named block; blocks partition the vector by construction.
    pub fn push_block(&mut self, name: impl Into<String>, values: &[f64]) -> Range<usize> {
        let start = self.values.len();
        self.values.extend_from_slice(values);
        let range = start..self.values.len();
        self.blocks.push((name.into(), range.clone()));
        range
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn block_range(&self, name: &str) -> Option<Range<usize>> {
        self.blocks
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, r)| r.clone())
    }

    pub fn block(&self, name: &str) -> Option<&[f64]> {
        self.block_range(name).map(|r| &self.values[r])
    }

    pub fn block_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        self.block_range(name).map(move |r| &mut self.values[r])
    }

    pub fn block_names(&self) -> impl Iterator<Item = &str> {
        self.blocks.iter().map(|(n, _)| n.as_str())
    }

    pub fn validate_finite(&self) -> Result<()> {
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            let block = self
                .blocks
                .iter()
                .find(|(_, r)| r.contains(&i))
                .map(|(n, _)| n.as_str())
                .unwrap_or("?");
            return Err(Error::Config(format!(
                "non-finite parameter at index {i} (block `{block}`)"
            )));
        }
        Ok(())
    }
}

impl Default for ParamVector {
    fn default() -> Self {
        Self::new()
    }
}
