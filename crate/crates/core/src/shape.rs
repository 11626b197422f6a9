//! Dense 2D/3D grid indexing with `x` varying fastest.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GridShape {
    dims: Vec<usize>,
}

impl GridShape {
    pub fn new(dims: &[usize]) -> Result<Self> {
        if !(2..=3).contains(&dims.len()) {
            return Err(Error::param(format!(
                "grids must be 2D or 3D, got {} dimensions",
                dims.len()
            )));
        }
        if dims.contains(&0) {
            return Err(Error::param(format!("grid dimensions must be positive: {dims:?}")));
        }
        Ok(Self {
            dims: dims.to_vec(),
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Linear index of `coords` (must be in range).
    #[inline]
    pub fn index(&self, coords: &[usize]) -> usize {
        let mut idx = 0;
        for axis in (0..self.dims.len()).rev() {
            idx = idx * self.dims[axis] + coords[axis];
        }
        idx
    }

    /// Coordinates of a linear index, padded with zeros to three axes.
    #[inline]
    pub fn coords(&self, mut index: usize) -> [usize; 3] {
        let mut c = [0usize; 3];
        for (axis, &d) in self.dims.iter().enumerate() {
            c[axis] = index % d;
            index /= d;
        }
        c
    }
}
