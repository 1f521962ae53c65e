//! Dense K-dimensional tensors in row-major flat storage.
//!
//! Cost tensors and couplings over `K` discrete margins with `n_k` atoms each
//! are dense arrays of `prod(n_k)` cells. Everything in this crate stays at
//! desk scale (at most ten million cells), so a flat `Vec<f64>` with explicit
//! strides is both the simplest and the fastest representation: the solver
//! hot loops walk the flat buffer once per pass while tracking the
//! multi-index with an odometer counter.

use crate::error::{Error, Result};

/// Dense row-major tensor over a fixed shape.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    strides: Vec<usize>,
    data: Vec<f64>,
}

/// Row-major strides for `shape` (last axis contiguous).
fn strides_for(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1usize; shape.len()];
    for k in (0..shape.len().saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * shape[k + 1];
    }
    strides
}

/// Number of cells for `shape`, or `None` on overflow or an empty axis.
pub fn cell_count(shape: &[usize]) -> Option<usize> {
    if shape.is_empty() || shape.iter().any(|&n| n == 0) {
        return None;
    }
    shape.iter().try_fold(1usize, |acc, &n| acc.checked_mul(n))
}

impl DenseTensor {
    /// All-zero tensor.
    pub fn zeros(shape: &[usize]) -> Result<Self> {
        let cells = cell_count(shape).ok_or_else(|| Error::InvalidArgument(
            format!("tensor shape {shape:?} has no cells"),
        ))?;
        Ok(DenseTensor {
            shape: shape.to_vec(),
            strides: strides_for(shape),
            data: vec![0.0; cells],
        })
    }

    /// Build a tensor by evaluating `f` at every multi-index, in row-major
    /// order. The multi-index slice passed to `f` is reused between calls.
    pub fn from_fn(shape: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        let mut t = Self::zeros(shape)?;
        let mut idx = MultiIndex::new(shape);
        for c in 0..t.data.len() {
            t.data[c] = f(idx.indices());
            idx.advance();
        }
        Ok(t)
    }

    /// Wrap an existing row-major buffer.
    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let cells = cell_count(shape).ok_or_else(|| Error::InvalidArgument(
            format!("tensor shape {shape:?} has no cells"),
        ))?;
        if data.len() != cells {
            return Err(Error::InvalidArgument(format!(
                "buffer has {} entries, shape {shape:?} needs {cells}",
                data.len()
            )));
        }
        Ok(DenseTensor {
            shape: shape.to_vec(),
            strides: strides_for(shape),
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    /// Number of axes.
    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    /// Number of cells.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Flat offset of a multi-index.
    pub fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        idx.iter()
            .zip(&self.strides)
            .map(|(&i, &s)| i * s)
            .sum()
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: f64) {
        let o = self.offset(idx);
        self.data[o] = value;
    }

    /// Sum of all cells.
    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Maximum cell value (`-inf` only for an impossible empty tensor).
    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Minimum cell value.
    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Marginal sum along `axis`: out[i] = sum of all cells whose `axis`
    /// index is `i`.
    pub fn marginal(&self, axis: usize) -> Vec<f64> {
        assert!(axis < self.ndim(), "axis {axis} out of range");
        let n = self.shape[axis];
        let stride = self.strides[axis];
        // The flat buffer decomposes as outer blocks of n * stride cells;
        // within a block, the axis index advances every `stride` cells.
        let block = n * stride;
        let mut out = vec![0.0; n];
        let mut base = 0;
        while base < self.data.len() {
            let mut off = base;
            for slot in out.iter_mut() {
                let mut acc = 0.0;
                for c in off..off + stride {
                    acc += self.data[c];
                }
                *slot += acc;
                off += stride;
            }
            base += block;
        }
        out
    }

    /// Multiply every cell by `factors[i]` where `i` is the cell's index
    /// along `axis`.
    pub fn scale_axis(&mut self, axis: usize, factors: &[f64]) {
        assert!(axis < self.ndim(), "axis {axis} out of range");
        assert_eq!(factors.len(), self.shape[axis]);
        let stride = self.strides[axis];
        let block = self.shape[axis] * stride;
        let mut base = 0;
        while base < self.data.len() {
            let mut off = base;
            for &f in factors {
                for c in off..off + stride {
                    self.data[c] *= f;
                }
                off += stride;
            }
            base += block;
        }
    }

    /// Inner product with another tensor of the same shape.
    pub fn dot(&self, other: &DenseTensor) -> f64 {
        assert_eq!(self.shape, other.shape, "shapes must match");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a * b)
            .sum()
    }
}

/// Odometer over a multi-index in row-major order: the last axis spins
/// fastest. `advance` reports the deepest axis that changed, which lets a
/// caller maintain prefix sums over the leading axes cheaply.
#[derive(Debug, Clone)]
pub struct MultiIndex {
    shape: Vec<usize>,
    idx: Vec<usize>,
}

impl MultiIndex {
    pub fn new(shape: &[usize]) -> Self {
        MultiIndex {
            shape: shape.to_vec(),
            idx: vec![0; shape.len()],
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.idx
    }

    /// Step to the next multi-index. Returns the smallest axis number whose
    /// index changed, or `None` after the last index wraps back to zero.
    pub fn advance(&mut self) -> Option<usize> {
        for k in (0..self.idx.len()).rev() {
            self.idx[k] += 1;
            if self.idx[k] < self.shape[k] {
                return Some(k);
            }
            self.idx[k] = 0;
        }
        None
    }

    pub fn reset(&mut self) {
        self.idx.iter_mut().for_each(|i| *i = 0);
    }
}
