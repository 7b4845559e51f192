//! Discrete transition kernel of the halving chain.
//!
//! From a starting grid point `x_i`, the probability that the next size
//! at birth exceeds `x_k` is approximated with right-endpoint prefix sums
//! of the ratio:
//!
//! `Q[i][k] = exp(-(P[max(i, k)] - P[i]))`, where `P[k] = h Σ_{j<=k} S(x_j)`.
//!
//! Cell masses are differences of these tails at even indices (the next
//! size is half of the split size, so cell `E_k` of the next size
//! corresponds to `(x_{2k-2}, x_{2k}]` of the split size), plus one final
//! entry `Q[i][n_x]` for everything beyond `a/2`. Rows telescope to
//! exactly 1 by construction.

use std::io::Write;

use crate::error::{Error, Result};
use crate::fmt::g17;
use crate::grid::Grid;
use crate::model::{prefix_integral, ModelSpec};

/// Tail values `Q[k] = exp(-(P[max(i, k)] - P[i]))` for `k = 0..=n_x`.
///
/// `Q[k] = 1` for `k <= i` (empty sum), and the sequence is nonincreasing
/// with values in `(0, 1]`.
pub fn q_row(prefix: &[f64], i: usize) -> Result<Vec<f64>> {
    if prefix.is_empty() || i >= prefix.len() {
        return Err(Error::InvalidParameter(format!(
            "start index {i} outside prefix range 0..{}",
            prefix.len().max(1) - 1
        )));
    }
    let p_i = prefix[i];
    Ok(prefix
        .iter()
        .enumerate()
        .map(|(k, &p_k)| if k <= i { 1.0 } else { (-(p_k - p_i)).exp() })
        .collect())
}

/// Folds a tail row into cell masses: entry `k` (1-based, `k <= n_x/2`)
/// is `Q[2k-2] - Q[2k]`, and the final entry is `Q[n_x]`, the mass beyond
/// `a/2`. The entries telescope to `Q[0] = 1`.
pub fn transition_row(q: &[f64]) -> Result<Vec<f64>> {
    if q.len() < 3 || q.len() % 2 == 0 {
        return Err(Error::InvalidParameter(format!(
            "tail row must have odd length n_x + 1 >= 3, got {}",
            q.len()
        )));
    }
    let n2 = (q.len() - 1) / 2;
    let mut row = Vec::with_capacity(n2 + 1);
    for k in 1..=n2 {
        // Monotone in exact arithmetic; clamp shields against one ulp of
        // exp rounding.
        row.push((q[2 * k - 2] - q[2 * k]).max(0.0));
    }
    row.push(q[2 * n2]);
    Ok(row)
}

enum Backing {
    /// Rows derived on demand from the shared prefix sums: O(n_x) memory.
    Prefix(Vec<f64>),
    /// Explicitly stored rows (synthetic matrices in tests and tools).
    Rows(Vec<Vec<f64>>),
}

/// Row-stochastic transition matrix of the discrete chain on the cells
/// `E_1 .. E_{n_x/2+1}`.
///
/// Row `r` (0-based) is the distribution of the next cell when the
/// current size rounds to grid index `i = r + 1`; the last row covers
/// the overflow cell `(a/2, a/2 + h]`. Every row sums to 1 within 1e-12
/// and has no mass strictly below cell `ceil(i/2)`.
pub struct TransitionMatrix {
    grid: Grid,
    tag: String,
    backing: Backing,
}

impl TransitionMatrix {
    /// Builds the kernel matrix for `model` on `grid`. Only the prefix
    /// sums are stored; rows are reconstructed on demand.
    pub fn build(model: &ModelSpec, grid: Grid) -> Result<Self> {
        let prefix = prefix_integral(model, grid)?;
        Ok(Self { grid, tag: model.tag().to_string(), backing: Backing::Prefix(prefix) })
    }

    /// Wraps explicit rows (each a probability vector of length
    /// `grid.chain_dim()`) as a matrix. Intended for synthetic kernels;
    /// validates shape, nonnegativity, and row sums.
    pub fn from_rows(grid: Grid, tag: impl Into<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = grid.chain_dim();
        if rows.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: rows.len() });
        }
        for (r, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: row.len() });
            }
            let mut sum = 0.0;
            for &v in row {
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::Validation(format!(
                        "row {r} has entry {v}, expected finite nonnegative"
                    )));
                }
                sum += v;
            }
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::Validation(format!("row {r} sums to {sum}, expected 1")));
            }
        }
        Ok(Self { grid, tag: tag.into(), backing: Backing::Rows(rows) })
    }

    /// Number of rows and columns: `n_x / 2 + 1`.
    pub fn dim(&self) -> usize {
        self.grid.chain_dim()
    }

    /// Grid the matrix was built on.
    pub fn grid(&self) -> Grid {
        self.grid
    }

    /// Tag of the model that generated the matrix.
    pub fn model_tag(&self) -> &str {
        &self.tag
    }

    /// Row `r` (0-based, `r < dim`) as a probability vector.
    ///
    /// # Panics
    /// Panics if `r >= dim`, like slice indexing.
    pub fn row(&self, r: usize) -> Vec<f64> {
        assert!(r < self.dim(), "row {r} out of range 0..{}", self.dim());
        let mut buf = vec![0.0; self.dim()];
        self.row_into(r, &mut buf);
        buf
    }

    fn row_into(&self, r: usize, buf: &mut [f64]) {
        match &self.backing {
            Backing::Rows(rows) => buf.copy_from_slice(&rows[r]),
            Backing::Prefix(prefix) => {
                let i = r + 1;
                let n2 = self.grid.n_x() / 2;
                let p_i = prefix[i];
                let mut prev = 1.0;
                for k in 1..=n2 {
                    let idx = 2 * k;
                    let q = if idx > i { (-(prefix[idx] - p_i)).exp() } else { 1.0 };
                    buf[k - 1] = (prev - q).max(0.0);
                    prev = q;
                }
                buf[n2] = prev;
            }
        }
    }

    /// Materializes all rows (O(dim^2) memory).
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.dim()).map(|r| self.row(r)).collect()
    }

    /// Left action `v -> v * P` of the matrix on a mass vector.
    pub(crate) fn apply_left(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.dim());
        let dim = self.dim();
        let mut out = vec![0.0; dim];
        match &self.backing {
            Backing::Rows(rows) => {
                for (w, row) in v.iter().zip(rows) {
                    if *w != 0.0 {
                        for (o, m) in out.iter_mut().zip(row) {
                            *o += w * m;
                        }
                    }
                }
            }
            Backing::Prefix(_) => {
                let mut scratch = vec![0.0; dim];
                for (r, w) in v.iter().enumerate() {
                    if *w != 0.0 {
                        self.row_into(r, &mut scratch);
                        for (o, m) in out.iter_mut().zip(&scratch) {
                            *o += w * m;
                        }
                    }
                }
            }
        }
        out
    }

    /// Writes the matrix as CSV: a comment header naming the parameters,
    /// then one comma-separated row per line, 17 significant digits.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(
            w,
            "# gf-kernel matrix a={} nx={} model={}",
            self.grid.a(),
            self.grid.n_x(),
            self.tag
        )?;
        let mut buf = vec![0.0; self.dim()];
        for r in 0..self.dim() {
            self.row_into(r, &mut buf);
            let line: Vec<String> = buf.iter().map(|&v| g17(v)).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn assert_close(actual: f64, expected: f64, tol: f64, what: &str) {
        assert!(
            (actual - expected).abs() <= tol,
            "{what}: got {actual}, expected {expected} (tol {tol})"
        );
    }

    fn example1_prefix_a2_nx4() -> Vec<f64> {
        let grid = Grid::new(2.0, 4).unwrap();
        prefix_integral(&ModelSpec::example1(), grid).unwrap()
    }

    #[test]
    fn q_row_hand_values() {
        let p = example1_prefix_a2_nx4();
        let q0 = q_row(&p, 0).unwrap();
        let expected = [1.0, (-0.25f64).exp(), (-0.75f64).exp(), (-1.5f64).exp(), (-2.5f64).exp()];
        for (k, (&got, &want)) in q0.iter().zip(expected.iter()).enumerate() {
            assert_close(got, want, 1e-15, &format!("Q[0][{k}]"));
        }
        let q1 = q_row(&p, 1).unwrap();
        assert_eq!(&q1[..2], &[1.0, 1.0]);
        assert_close(q1[2], (-0.5f64).exp(), 1e-15, "Q[1][2]");
        assert_close(q1[4], (-2.25f64).exp(), 1e-15, "Q[1][4]");
    }

    #[test]
    fn q_row_is_one_up_to_start_and_nonincreasing() {
        let p = example1_prefix_a2_nx4();
        for i in 0..=4 {
            let q = q_row(&p, i).unwrap();
            for (k, &v) in q.iter().enumerate() {
                if k <= i {
                    assert_eq!(v, 1.0);
                }
                assert!(v > 0.0 && v <= 1.0);
                if k > 0 {
                    assert!(v <= q[k - 1]);
                }
            }
        }
        assert!(q_row(&p, 5).is_err());
        assert!(q_row(&[], 0).is_err());
    }

    #[test]
    fn transition_row_hand_values() {
        let p = example1_prefix_a2_nx4();
        let row0 = transition_row(&q_row(&p, 0).unwrap()).unwrap();
        let e = |t: f64| (-t).exp();
        assert_close(row0[0], 1.0 - e(0.75), 1e-15, "row0[0]");
        assert_close(row0[1], e(0.75) - e(2.5), 1e-15, "row0[1]");
        assert_close(row0[2], e(2.5), 1e-15, "row0[2]");

        let row1 = transition_row(&q_row(&p, 1).unwrap()).unwrap();
        assert_close(row1[0], 1.0 - e(0.5), 1e-15, "row1[0]");
        assert_close(row1[1], e(0.5) - e(2.25), 1e-15, "row1[1]");
        assert_close(row1[2], e(2.25), 1e-15, "row1[2]");
    }

    #[test]
    fn start_at_last_grid_point_is_degenerate() {
        // From x_{n_x} every tail value is 1, so all mass lands in the
        // overflow cell.
        let p = example1_prefix_a2_nx4();
        let row = transition_row(&q_row(&p, 4).unwrap()).unwrap();
        assert_eq!(row, vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn transition_row_rejects_bad_lengths() {
        assert!(transition_row(&[1.0]).is_err());
        assert!(transition_row(&[1.0, 0.5]).is_err());
        assert!(transition_row(&[1.0, 0.5, 0.25]).is_ok());
    }

    #[test]
    fn three_by_three_matrix_matches_hand_derivation() {
        let grid = Grid::new(2.0, 4).unwrap();
        let m = TransitionMatrix::build(&ModelSpec::example1(), grid).unwrap();
        assert_eq!(m.dim(), 3);
        let e = |t: f64| (-t).exp();
        let expected = [
            [1.0 - e(0.5), e(0.5) - e(2.25), e(2.25)],
            [0.0, 1.0 - e(1.75), e(1.75)],
            [0.0, 1.0 - e(1.0), e(1.0)],
        ];
        for (r, want) in expected.iter().enumerate() {
            let row = m.row(r);
            for (k, &v) in want.iter().enumerate() {
                assert_close(row[k], v, 1e-15, &format!("row {r} entry {k}"));
            }
        }
    }

    #[test]
    fn smallest_grid_builds_stochastic_matrix() {
        let grid = Grid::new(1.0, 2).unwrap();
        for name in ["example1", "example2", "example3", "example4"] {
            let m = TransitionMatrix::build(&ModelSpec::builtin(name).unwrap(), grid).unwrap();
            assert_eq!(m.dim(), 2);
            for r in 0..2 {
                let sum: f64 = m.row(r).iter().sum();
                assert!((sum - 1.0).abs() <= 1e-12, "{name} row {r} sums to {sum}");
            }
        }
    }

    #[test]
    fn from_rows_validates() {
        let grid = Grid::new(2.0, 2).unwrap();
        assert!(TransitionMatrix::from_rows(grid, "t", vec![vec![0.5, 0.5]]).is_err());
        assert!(TransitionMatrix::from_rows(
            grid,
            "t",
            vec![vec![0.5, 0.5], vec![0.7, 0.7]]
        )
        .is_err());
        assert!(TransitionMatrix::from_rows(
            grid,
            "t",
            vec![vec![0.5, 0.5], vec![-0.1, 1.1]]
        )
        .is_err());
        let m =
            TransitionMatrix::from_rows(grid, "t", vec![vec![0.5, 0.5], vec![0.0, 1.0]]).unwrap();
        assert_eq!(m.row(1), vec![0.0, 1.0]);
        assert_eq!(m.model_tag(), "t");
    }

    #[test]
    fn csv_header_names_parameters() {
        let grid = Grid::new(2.0, 4).unwrap();
        let m = TransitionMatrix::build(&ModelSpec::example1(), grid).unwrap();
        let mut out = Vec::new();
        m.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "# gf-kernel matrix a=2 nx=4 model=example1");
        assert_eq!(lines.count(), 3);
        // Every data line round-trips to the matrix entries.
        for (r, line) in text.lines().skip(1).enumerate() {
            let parsed: Vec<f64> = line.split(',').map(|t| t.parse().unwrap()).collect();
            assert_eq!(parsed, m.row(r));
        }
    }

    /// Exact cell masses of the continuous kernel for `S(x) = x`:
    /// the tail is `exp(-(4 y^2 - x^2) / 2)`.
    fn continuous_masses_linear(x: f64, grid: Grid) -> Vec<f64> {
        let tail = |y: f64| {
            if y <= x / 2.0 {
                1.0
            } else {
                (-(4.0 * y * y - x * x) / 2.0).exp()
            }
        };
        let n2 = grid.n_x() / 2;
        let mut masses = Vec::with_capacity(n2 + 1);
        for k in 1..=n2 {
            masses.push(tail(grid.point(k - 1)) - tail(grid.point(k)));
        }
        masses.push(tail(grid.point(n2)));
        masses
    }

    #[test]
    fn rows_approach_continuous_kernel_at_first_order() {
        // Max row TV distance against the exact continuous cell masses
        // shrinks roughly in half when h does.
        let model = ModelSpec::example1();
        let mut discrepancies = Vec::new();
        for n_x in [50usize, 100, 200] {
            let grid = Grid::new(5.0, n_x).unwrap();
            let m = TransitionMatrix::build(&model, grid).unwrap();
            let mut worst: f64 = 0.0;
            for r in 0..m.dim() {
                let row = m.row(r);
                let exact = continuous_masses_linear(grid.point(r + 1), grid);
                let tv: f64 = row.iter().zip(&exact).map(|(a, b)| (a - b).abs()).sum();
                worst = worst.max(tv);
            }
            discrepancies.push(worst);
        }
        println!("kernel vs continuous max row TV: {discrepancies:?}");
        for w in discrepancies.windows(2) {
            let ratio = w[0] / w[1];
            assert!(
                (1.7..=2.3).contains(&ratio),
                "halving h changed the discrepancy by {ratio}, expected ~2: {discrepancies:?}"
            );
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn rows_are_stochastic_with_half_grid_support(
            a in 0.5f64..10.0,
            half in 1usize..=20,
            model_idx in 0usize..4,
        ) {
            let names = ["example1", "example2", "example3", "example4"];
            let model = ModelSpec::builtin(names[model_idx]).unwrap();
            let grid = Grid::new(a, 2 * half).unwrap();
            let m = TransitionMatrix::build(&model, grid).unwrap();
            for r in 0..m.dim() {
                let i = r + 1;
                let row = m.row(r);
                let sum: f64 = row.iter().sum();
                prop_assert!((sum - 1.0).abs() <= 1e-12, "row {} sums to {}", r, sum);
                for (k0, &v) in row.iter().enumerate() {
                    prop_assert!(v >= 0.0 && v <= 1.0);
                    // No mass strictly below cell ceil(i/2).
                    if k0 + 1 < i.div_ceil(2) {
                        prop_assert!(v == 0.0, "row {} cell {} should be empty", r, k0 + 1);
                    }
                }
            }
        }
    }
}
