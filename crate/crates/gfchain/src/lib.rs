//! Numerical toolkit for stochastic growth-fragmentation chains: the
//! Markov chain of cell sizes at birth when a cell grows at rate `g(x)`
//! and splits into two equal halves at rate `B(x)`.
//!
//! Only the ratio `S(x) = B(x)/g(x)` enters the transition law. The
//! crate discretizes the chain with a finite volume scheme on a uniform
//! grid over `(0, a]`:
//!
//! * [`model`]: the ratio `S` (built-in examples, tables, closures),
//!   its grid prefix sums, and continuous-kernel quadrature oracles;
//! * [`kernel`]: the row-stochastic transition matrix built from
//!   tail differences of the prefix sums;
//! * [`measure`]: piecewise-uniform measures, the projection onto grid
//!   cells, power iteration to the invariant measure, and
//!   total-variation distances (same grid and across one refinement);
//! * [`sampler`]: seeded trajectory simulation of the discrete chain;
//! * [`analysis`]: mesh-refinement convergence studies and numerical
//!   checks of the geometric drift and tail inequalities.
//!
//! The scheme is first order: halving the mesh roughly halves the
//! distance between successive invariant measures.
//!
//! # Quick start
//!
//! ```
//! use gfchain::{Grid, ModelSpec, TransitionMatrix};
//! use gfchain::measure::{invariant_measure, PiecewiseUniformMeasure};
//!
//! // Cells grow at rate x and split at rate x^2, so S(x) = x.
//! let model = ModelSpec::example1();
//! let grid = Grid::new(5.0, 250)?;
//! let matrix = TransitionMatrix::build(&model, grid)?;
//! let start = PiecewiseUniformMeasure::uniform(grid);
//! let (pi, iterations) = invariant_measure(&matrix, &start, 1e-12, 100_000)?;
//!
//! assert!(iterations < 60);
//! assert!((pi.total_mass() - 1.0).abs() < 1e-9);
//! // The size-at-birth distribution peaks near x = 0.66.
//! let peak = pi.masses().iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
//! assert!((0.5..0.9).contains(&grid.point(peak + 1)));
//! # Ok::<(), gfchain::Error>(())
//! ```

pub mod analysis;
pub mod error;
mod fmt;
pub mod grid;
pub mod kernel;
pub mod measure;
pub mod model;
pub mod sampler;

pub use error::{Error, Result};
pub use grid::Grid;
pub use kernel::TransitionMatrix;
pub use measure::PiecewiseUniformMeasure;
pub use model::{GrowthParams, ModelSpec};

// Compile the guide's code blocks as documentation tests so the book can
// never drift from the library.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/kernel.md")]
    mod kernel {}
    #[doc = include_str!("../../../book/src/measures.md")]
    mod measures {}
    #[doc = include_str!("../../../book/src/sampling.md")]
    mod sampling {}
    #[doc = include_str!("../../../book/src/convergence.md")]
    mod convergence {}
    #[doc = include_str!("../../../book/src/diagnostics.md")]
    mod diagnostics {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
