//! Piecewise-uniform measures on the grid cells, their evolution under
//! the transition matrix, invariant measures by power iteration, and
//! total-variation distances (same grid and across one refinement).

use std::io::Write;

use crate::error::{Error, Result};
use crate::fmt::g17;
use crate::grid::Grid;
use crate::kernel::TransitionMatrix;

/// A measure that is uniform within each grid cell, stored as one mass
/// per cell starting at `E_1`.
///
/// Chain-support measures use `n_x/2 + 1` entries, projections of
/// measures on the whole half line use `n_x + 1` (the last entry holding
/// everything beyond `a`); any length in `1..=n_x+1` is accepted so
/// truncated vectors compose.
#[derive(Clone, Debug)]
pub struct PiecewiseUniformMeasure {
    grid: Grid,
    masses: Vec<f64>,
}

impl PiecewiseUniformMeasure {
    /// Wraps a mass vector (not necessarily normalized: intermediates and
    /// scaled measures are legal). Masses must be finite and nonnegative,
    /// and the length must fit the grid.
    pub fn new(grid: Grid, masses: Vec<f64>) -> Result<Self> {
        if masses.is_empty() || masses.len() > grid.full_dim() {
            return Err(Error::DimensionMismatch {
                expected: grid.full_dim(),
                got: masses.len(),
            });
        }
        for (j, &v) in masses.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Validation(format!(
                    "mass on cell {} is {v}, expected finite nonnegative",
                    j + 1
                )));
            }
        }
        Ok(Self { grid, masses })
    }

    /// Like [`PiecewiseUniformMeasure::new`] but requires total mass 1
    /// within 1e-12.
    pub fn probability(grid: Grid, masses: Vec<f64>) -> Result<Self> {
        let m = Self::new(grid, masses)?;
        let total = m.total_mass();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Validation(format!(
                "total mass {total} is not 1 within 1e-12"
            )));
        }
        Ok(m)
    }

    /// Equal masses on the chain cells `E_1 .. E_{n_x/2+1}`: the standard
    /// starting vector for power iteration.
    pub fn uniform(grid: Grid) -> Self {
        let dim = grid.chain_dim();
        Self { grid, masses: vec![1.0 / dim as f64; dim] }
    }

    /// All mass on one chain cell (1-based `unit <= n_x/2+1`).
    pub fn point_mass(grid: Grid, unit: usize) -> Result<Self> {
        let dim = grid.chain_dim();
        if unit < 1 || unit > dim {
            return Err(Error::InvalidParameter(format!(
                "cell {unit} outside 1..={dim}"
            )));
        }
        let mut masses = vec![0.0; dim];
        masses[unit - 1] = 1.0;
        Ok(Self { grid, masses })
    }

    /// Mass per cell, starting at `E_1`.
    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    /// Grid the measure lives on.
    pub fn grid(&self) -> Grid {
        self.grid
    }

    /// Number of cells carrying the measure.
    pub fn len(&self) -> usize {
        self.masses.len()
    }

    /// True when the vector is empty (never, by construction).
    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    /// Sum of all masses.
    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// Masses scaled by `1/h`: the piecewise-constant density. Summing
    /// times `h` recovers total mass.
    pub fn to_density(&self) -> Vec<f64> {
        self.masses.iter().map(|&m| m / self.grid.h()).collect()
    }

    /// Writes `x_left,x_right,mass,density` rows with a header line,
    /// 17 significant digits throughout.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "x_left,x_right,mass,density")?;
        for (j, &mass) in self.masses.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{}",
                g17(self.grid.point(j)),
                g17(self.grid.point(j + 1)),
                g17(mass),
                g17(mass / self.grid.h())
            )?;
        }
        Ok(())
    }
}

/// Projects a probability distribution, given through its cumulative
/// function `cdf(x) = mu((0, x])`, onto the grid cells: cell `E_j` gets
/// `cdf(x_j) - cdf(x_{j-1})`, and an appended cell `E_{n_x+1}` collects
/// the tail `1 - cdf(a)`. The output is a probability vector of length
/// `n_x + 1`.
///
/// Applying the projection to a measure already piecewise uniform on the
/// grid reproduces it: the projection is idempotent.
pub fn project_fv<F: Fn(f64) -> f64>(cdf: F, grid: Grid) -> Result<PiecewiseUniformMeasure> {
    let mut samples = Vec::with_capacity(grid.full_dim());
    for j in 0..=grid.n_x() {
        let c = cdf(grid.point(j));
        if !c.is_finite() {
            return Err(Error::Validation(format!(
                "cdf({}) = {c} is not finite",
                grid.point(j)
            )));
        }
        if let Some(&prev) = samples.last() {
            if c < prev {
                return Err(Error::Validation(format!(
                    "cdf decreases between x = {} and x = {}",
                    grid.point(j - 1),
                    grid.point(j)
                )));
            }
        }
        samples.push(c);
    }
    if samples[0].abs() > 1e-12 {
        return Err(Error::Validation(format!(
            "cdf(0) = {} but a size distribution has no mass at 0",
            samples[0]
        )));
    }
    if samples[grid.n_x()] > 1.0 + 1e-12 {
        return Err(Error::Validation(format!(
            "cdf({}) = {} exceeds 1",
            grid.a(),
            samples[grid.n_x()]
        )));
    }
    let mut masses: Vec<f64> = samples.windows(2).map(|w| w[1] - w[0]).collect();
    masses.push((1.0 - samples[grid.n_x()]).max(0.0));
    PiecewiseUniformMeasure::new(grid, masses)
}

/// One step of the measure recurrence: `mu -> mu * P`. Preserves total
/// mass and nonnegativity; the input must live on the matrix's grid with
/// matching dimension.
pub fn evolve_step(
    mu: &PiecewiseUniformMeasure,
    p: &TransitionMatrix,
) -> Result<PiecewiseUniformMeasure> {
    if mu.grid() != p.grid() {
        return Err(Error::GridMismatch(
            "measure and matrix were built on different grids".into(),
        ));
    }
    if mu.len() != p.dim() {
        return Err(Error::DimensionMismatch { expected: p.dim(), got: mu.len() });
    }
    PiecewiseUniformMeasure::new(mu.grid(), p.apply_left(mu.masses()))
}

/// Matrices up to this dimension are materialized once for power
/// iteration; larger ones stream rows from the prefix sums each pass to
/// keep memory O(n_x).
const DENSE_ITERATION_LIMIT: usize = 2048;

/// Power iteration `mu <- mu * P` until the l1 change between successive
/// iterates is at most `tol`. Returns the fixed point and the number of
/// multiplications performed; because the matrix is row-stochastic, the
/// returned measure also satisfies `|pi P - pi|_1 <= tol`.
pub fn invariant_measure(
    p: &TransitionMatrix,
    init: &PiecewiseUniformMeasure,
    tol: f64,
    max_iter: usize,
) -> Result<(PiecewiseUniformMeasure, usize)> {
    if !tol.is_finite() || tol <= 0.0 {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {tol}")));
    }
    if max_iter == 0 {
        return Err(Error::InvalidParameter("max_iter must be at least 1".into()));
    }
    if init.grid() != p.grid() {
        return Err(Error::GridMismatch(
            "initial measure and matrix were built on different grids".into(),
        ));
    }
    if init.len() != p.dim() {
        return Err(Error::DimensionMismatch { expected: p.dim(), got: init.len() });
    }
    let total = init.total_mass();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::Validation(format!(
            "power iteration needs a probability vector; total mass is {total}"
        )));
    }

    let dense: Option<Vec<Vec<f64>>> =
        (p.dim() <= DENSE_ITERATION_LIMIT).then(|| p.to_dense());
    let step = |v: &[f64]| -> Vec<f64> {
        match &dense {
            Some(rows) => {
                let mut out = vec![0.0; v.len()];
                for (w, row) in v.iter().zip(rows) {
                    if *w != 0.0 {
                        for (o, m) in out.iter_mut().zip(row) {
                            *o += w * m;
                        }
                    }
                }
                out
            }
            None => p.apply_left(v),
        }
    };

    let mut cur = init.masses().to_vec();
    let mut residual = f64::INFINITY;
    for it in 1..=max_iter {
        let next = step(&cur);
        residual = cur.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        cur = next;
        if residual <= tol {
            return Ok((PiecewiseUniformMeasure::new(p.grid(), cur)?, it));
        }
    }
    Err(Error::NonConvergence { iterations: max_iter, residual })
}

/// l1 distance between two measures on the same grid with equal cell
/// counts.
pub fn tv_same_grid(
    mu: &PiecewiseUniformMeasure,
    nu: &PiecewiseUniformMeasure,
) -> Result<f64> {
    if mu.grid() != nu.grid() {
        return Err(Error::GridMismatch(
            "total variation compares measures on one grid".into(),
        ));
    }
    if mu.len() != nu.len() {
        return Err(Error::DimensionMismatch { expected: mu.len(), got: nu.len() });
    }
    Ok(mu.masses().iter().zip(nu.masses()).map(|(a, b)| (a - b).abs()).sum())
}

/// l1 distance across one mesh refinement: fine cell `i` (1-based) lies
/// inside coarse cell `ceil(i/2)`, which contributes half its mass, so
///
/// `sum_i |fine[i] - coarse[ceil(i/2)] / 2|`,
///
/// with out-of-range coarse entries contributing 0. Exact refinements
/// (each coarse mass split in half) give distance 0.
pub fn tv_cross_grid(
    fine: &PiecewiseUniformMeasure,
    coarse: &PiecewiseUniformMeasure,
) -> Result<f64> {
    let (fg, cg) = (fine.grid(), coarse.grid());
    if fg.a() != cg.a() || fg.n_x() != 2 * cg.n_x() {
        return Err(Error::GridMismatch(format!(
            "cross-grid distance needs the same bound and a doubled cell count; \
             got fine (a={}, n_x={}) vs coarse (a={}, n_x={})",
            fg.a(),
            fg.n_x(),
            cg.a(),
            cg.n_x()
        )));
    }
    let coarse_mass =
        |j: usize| if j >= 1 && j <= coarse.len() { coarse.masses()[j - 1] } else { 0.0 };
    let mut sum = 0.0;
    for (i0, &f) in fine.masses().iter().enumerate() {
        let i = i0 + 1;
        sum += (f - 0.5 * coarse_mass(i.div_ceil(2))).abs();
    }
    Ok(sum)
}
