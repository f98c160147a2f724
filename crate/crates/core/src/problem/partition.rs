use std::ops::Range;

use crate::error::{check_dim, Error, Result};

/// Splits the stacked decision vector `x = (x¹, …, xᵐ)` into agent blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockPartition {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
    dim: usize,
}

impl BlockPartition {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::invalid("partition needs at least one agent"));
        }
        if let Some(i) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::invalid(format!("agent {i} has an empty block")));
        }
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut acc = 0;
        for &s in &sizes {
            offsets.push(acc);
            acc += s;
        }
        Ok(Self {
            sizes,
            offsets,
            dim: acc,
        })
    }

    /// `m` agents with one scalar decision each.
    pub fn scalar(m: usize) -> Result<Self> {
        Self::new(vec![1; m])
    }

    /// `m` agents with `n_i` decisions each.
    pub fn uniform(m: usize, n_i: usize) -> Result<Self> {
        Self::new(vec![n_i; m])
    }

    pub fn agents(&self) -> usize {
        self.sizes.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn size(&self, i: usize) -> usize {
        self.sizes[i]
    }

    pub fn range(&self, i: usize) -> Range<usize> {
        self.offsets[i]..self.offsets[i] + self.sizes[i]
    }

    pub fn block<'a>(&self, x: &'a [f64], i: usize) -> &'a [f64] {
        &x[self.range(i)]
    }

    /// Index of the agent owning coordinate `j`.
    pub fn owner(&self, j: usize) -> usize {
        match self.offsets.binary_search(&j) {
            Ok(i) => i,
            Err(i) => i - 1,
        }
    }

    pub fn check(&self, x: &[f64]) -> Result<()> {
        check_dim(self.dim, x.len())
    }

    /// Concatenate per-agent blocks into a stacked vector.
    pub fn stack(&self, blocks: &[Vec<f64>]) -> Result<Vec<f64>> {
        check_dim(self.agents(), blocks.len())?;
        let mut out = Vec::with_capacity(self.dim);
        for (i, b) in blocks.iter().enumerate() {
            check_dim(self.sizes[i], b.len())?;
            out.extend_from_slice(b);
        }
        Ok(out)
    }

    pub fn split(&self, x: &[f64]) -> Vec<Vec<f64>> {
        (0..self.agents())
            .map(|i| self.block(x, i).to_vec())
            .collect()
    }
}
