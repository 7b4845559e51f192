//! Trajectory sampling for the discrete chain.
//!
//! One step from size `xi`: round up to the grid index `i = ceil(xi/h)`.
//! Beyond the grid (`i > n_x`) the next size is uniform on
//! `(a/2, a/2 + h]`. Otherwise draw the landing cell by inverting the
//! tail values `Q[i][2k] = exp(-(P[2k] - P[i]))` with one exponential
//! clock (no row materialization, O(log n_x) per step), then place the
//! size uniformly inside the landing cell. All draws come from a
//! deterministic counter-based stream seeded with 64 bits; independent
//! trajectories should use distinct seeds (the stream is splittable via
//! distinct seeds or stream ids).

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fmt::g17;
use crate::grid::Grid;
use crate::measure::PiecewiseUniformMeasure;
use crate::model::{prefix_integral, ModelSpec};

/// Where a size sits on the grid: the 1-based index of its cell, and
/// whether that index falls beyond the last cell (in which case the
/// degenerate transition applies and `index` must not be used to address
/// grid data).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GridPos {
    /// `ceil(size / h)`, robust to sizes within 1e-9 relative of a grid
    /// point.
    pub index: usize,
    /// True when `index > n_x`.
    pub beyond_grid: bool,
}

/// Rounds a positive size to its cell index `i = ceil(size/h)`; sizes
/// exactly on a grid point `x_j` (cells are left-open, right-closed)
/// give `i = j`.
pub fn round_to_grid(size: f64, grid: Grid) -> Result<GridPos> {
    if !size.is_finite() || size <= 0.0 {
        return Err(Error::Domain(format!("size must be positive and finite, got {size}")));
    }
    let index = grid.ceil_index(size);
    Ok(GridPos { index, beyond_grid: index > grid.n_x() })
}

/// A trajectory's mutable state: current size plus its private random
/// stream.
#[derive(Clone, Debug)]
pub struct ChainState {
    size: f64,
    rng: ChaCha8Rng,
}

impl ChainState {
    /// Starts a trajectory at `size` with a 64-bit seed.
    pub fn new(size: f64, seed: u64) -> Result<Self> {
        if !size.is_finite() || size <= 0.0 {
            return Err(Error::Domain(format!(
                "initial size must be positive and finite, got {size}"
            )));
        }
        Ok(Self { size, rng: ChaCha8Rng::seed_from_u64(seed) })
    }

    /// Current size.
    pub fn size(&self) -> f64 {
        self.size
    }
}

/// Uniform draw on the half-open interval `(0, 1]`, so logarithms and
/// right-closed cells are safe.
fn unit_open_closed(rng: &mut ChaCha8Rng) -> f64 {
    1.0 - rng.gen::<f64>()
}

/// Sampler for one model and grid; holds only the prefix sums (O(n_x))
/// and is immutable, so trajectories can share it across threads.
pub struct ChainSampler {
    grid: Grid,
    /// P[k] at all indices (start levels) ...
    prefix: Vec<f64>,
    /// ... and at even indices only (landing-cell search).
    even_prefix: Vec<f64>,
}

impl ChainSampler {
    /// Precomputes the prefix sums of `model` on `grid`.
    pub fn new(model: &ModelSpec, grid: Grid) -> Result<Self> {
        let prefix = prefix_integral(model, grid)?;
        let even_prefix = prefix.iter().copied().step_by(2).collect();
        Ok(Self { grid, prefix, even_prefix })
    }

    /// Grid the sampler was built on.
    pub fn grid(&self) -> Grid {
        self.grid
    }

    /// Advances the state one step and returns the new size.
    ///
    /// The landing cell `k` is the smallest with `P[2k] > P[i] + E` for a
    /// standard exponential draw `E` (the overflow cell when no such `k`
    /// exists), which reproduces the kernel row probabilities
    /// `Q[2k-2] - Q[2k]` exactly. In-grid steps consume two uniforms
    /// (clock, position), beyond-grid steps one (position).
    pub fn step(&self, state: &mut ChainState) -> Result<f64> {
        let pos = round_to_grid(state.size, self.grid)?;
        let next = if pos.beyond_grid {
            let u = unit_open_closed(&mut state.rng);
            self.grid.a() / 2.0 + u * self.grid.h()
        } else {
            let clock = self.prefix[pos.index] - unit_open_closed(&mut state.rng).ln();
            // First even index whose prefix value exceeds the clock;
            // entry 0 is 0 <= clock, so the result is a 1-based cell.
            let cell = self.even_prefix.partition_point(|&p| p <= clock);
            let u = unit_open_closed(&mut state.rng);
            self.grid.point(cell - 1) + u * self.grid.h()
        };
        state.size = next;
        Ok(next)
    }
}

/// Runs a full trajectory: returns `[init, xi_1, ..., xi_{n_steps}]`,
/// deterministic in `seed`. Every entry after the first lies in
/// `(0, a/2 + h]`.
pub fn simulate_path(
    model: &ModelSpec,
    grid: Grid,
    init: f64,
    n_steps: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let sampler = ChainSampler::new(model, grid)?;
    let mut state = ChainState::new(init, seed)?;
    let mut path = Vec::with_capacity(n_steps + 1);
    path.push(init);
    for _ in 0..n_steps {
        path.push(sampler.step(&mut state)?);
    }
    Ok(path)
}

/// Normalized cell-occupancy counts of a batch of sizes, as a measure on
/// the chain cells `E_1 .. E_{n_x/2+1}`. Sizes must lie in the chain's
/// range `(0, a/2 + h]` (every post-step size does).
pub fn empirical_histogram(sizes: &[f64], grid: Grid) -> Result<PiecewiseUniformMeasure> {
    if sizes.is_empty() {
        return Err(Error::InvalidParameter("histogram of an empty batch".into()));
    }
    let dim = grid.chain_dim();
    let mut counts = vec![0usize; dim];
    for &s in sizes {
        let pos = round_to_grid(s, grid)?;
        if pos.index > dim {
            return Err(Error::Validation(format!(
                "size {s} lies beyond the chain range (0, {}]",
                grid.a() / 2.0 + grid.h()
            )));
        }
        counts[pos.index - 1] += 1;
    }
    let total = sizes.len() as f64;
    PiecewiseUniformMeasure::new(grid, counts.into_iter().map(|c| c as f64 / total).collect())
}

/// Writes a trajectory as CSV with columns `step,size`.
pub fn write_trajectory_csv<W: Write>(w: &mut W, path: &[f64]) -> Result<()> {
    writeln!(w, "step,size")?;
    for (step, &size) in path.iter().enumerate() {
        writeln!(w, "{step},{}", g17(size))?;
    }
    Ok(())
}
