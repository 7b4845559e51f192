//! Uniform size grid on `(0, a]`.
//!
//! The half line of sizes is truncated at `a` and split into `n_x` cells
//! `E_j = ((j-1)h, jh]` of width `h = a / n_x`. Because a particle of size
//! `x` splits into two halves, a chain started below `a/2` never leaves
//! `(0, a/2 + h]` after one step, so evolved measures live on the first
//! `n_x / 2 + 1` cells only.

use crate::error::{Error, Result};

/// Uniform grid over `(0, a]` with an even number of cells.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    a: f64,
    n_x: usize,
    h: f64,
}

impl Grid {
    /// Builds the grid with right boundary `a` and `n_x` cells.
    ///
    /// `a` must be positive and finite; `n_x` must be even and at least 2.
    /// The mesh width is `h = a / n_x`.
    pub fn new(a: f64, n_x: usize) -> Result<Self> {
        if !a.is_finite() || a <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "grid bound a must be positive and finite, got {a}"
            )));
        }
        if n_x < 2 || n_x % 2 != 0 {
            return Err(Error::InvalidParameter(format!(
                "cell count n_x must be even and >= 2, got {n_x}"
            )));
        }
        Ok(Self { a, n_x, h: a / n_x as f64 })
    }

    /// Right boundary of the grid.
    pub fn a(&self) -> f64 {
        self.a
    }

    /// Number of cells.
    pub fn n_x(&self) -> usize {
        self.n_x
    }

    /// Mesh width `h = a / n_x`.
    pub fn h(&self) -> f64 {
        self.h
    }

    /// Grid point `x_j = j h` for `j = 0, ..., n_x`.
    pub fn point(&self, j: usize) -> f64 {
        j as f64 * self.h
    }

    /// Dimension of the state space of the halving chain: `n_x / 2 + 1`.
    ///
    /// One step from anywhere on the grid lands in a cell at or below
    /// `(a/2, a/2 + h]`, so only the first `n_x / 2` cells plus one
    /// overflow cell carry mass.
    pub fn chain_dim(&self) -> usize {
        self.n_x / 2 + 1
    }

    /// Number of cells needed to hold a measure projected from the whole
    /// half line: `n_x` cells inside `(0, a]` plus one overflow cell.
    pub fn full_dim(&self) -> usize {
        self.n_x + 1
    }

    /// Grid with the same bound and twice the resolution.
    pub fn refined(&self) -> Grid {
        Grid { a: self.a, n_x: self.n_x * 2, h: self.h / 2.0 }
    }

    /// Non-fatal quality warnings: a coarse mesh (`h > 1`) degrades the
    /// first-order accuracy, and a short domain (`a <= 3h`) leaves almost
    /// no room between the halving boundary and the truncation.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.h > 1.0 {
            out.push(format!("mesh width h = {} exceeds 1; expect poor resolution", self.h));
        }
        if self.a <= 3.0 * self.h {
            out.push(format!(
                "grid bound a = {} is within 3 mesh widths of the origin; truncation dominates",
                self.a
            ));
        }
        out
    }

    /// Index of the cell containing `size`, i.e. the smallest `i` with
    /// `size <= i h`, robust to floating point representation of grid
    /// points: a value within relative `1e-9` of a grid point `j h`
    /// counts as that point (cell `j`), not the next cell up.
    ///
    /// The result is at least 1 and may exceed `n_x` for sizes beyond the
    /// grid. `size` must be positive.
    pub(crate) fn ceil_index(&self, size: f64) -> usize {
        let q = size / self.h;
        let r = q.round();
        let snapped = if (q - r).abs() <= 1e-9 * q.abs().max(1.0) { r } else { q.ceil() };
        if snapped < 1.0 {
            1
        } else {
            snapped as usize
        }
    }
}
