//! Model specification: the fragmentation-to-growth rate ratio `S`.
//!
//! A growth-fragmentation chain tracks the size at birth of a cell that
//! grows at rate `g(x)` and splits in half at rate `B(x)`. Only the ratio
//! `S(x) = B(x) / g(x)` enters the transition law: starting from size `x`,
//! the next size at birth has tail probability `exp(-∫_x^{2y} S)` for
//! `y >= x/2` and density `p(x, y) = 2 S(2y) exp(-∫_x^{2y} S)`.
//!
//! This module holds the ratio itself (built-in examples, tabulated grid
//! values, or custom closures), the prefix sums of `S` over a grid that
//! every discrete object is built from, and continuous-kernel quadrature
//! oracles used by the ergodicity diagnostics.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Declared growth bounds: `m x^(alpha-1) <= S(x) <= M x^(alpha-1)` for
/// all `x > x0`. These are user-supplied assertions, never inferred; the
/// drift and tail diagnostics refuse to run without them.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GrowthParams {
    /// Lower constant `m`.
    pub lower: f64,
    /// Upper constant `M`.
    pub upper: f64,
    /// Power `alpha` (the ratio grows like `x^(alpha-1)`).
    pub alpha: f64,
    /// Threshold `x0` past which the bounds hold.
    pub x0: f64,
}

impl GrowthParams {
    /// Validates `0 < m <= M`, `alpha > 0`, `x0 >= 0`, all finite.
    pub fn new(lower: f64, upper: f64, alpha: f64, x0: f64) -> Result<Self> {
        let ok = lower.is_finite()
            && upper.is_finite()
            && alpha.is_finite()
            && x0.is_finite()
            && lower > 0.0
            && upper >= lower
            && alpha > 0.0
            && x0 >= 0.0;
        if !ok {
            return Err(Error::InvalidParameter(format!(
                "growth bounds require 0 < m <= M, alpha > 0, x0 >= 0; \
                 got m={lower}, M={upper}, alpha={alpha}, x0={x0}"
            )));
        }
        Ok(Self { lower, upper, alpha, x0 })
    }

    /// Constants of the geometric drift bound
    /// `PV(x) <= C1 V(x) exp(-C2 (x/2)^alpha)` for `x > 2 x0`:
    /// `C1 = 2^alpha M / ((2^alpha - 1) m)` and
    /// `C2 = m (2^alpha - 1) / alpha`.
    pub fn drift_constants(&self) -> (f64, f64) {
        let two_alpha = 2f64.powf(self.alpha);
        let c1 = two_alpha * self.upper / ((two_alpha - 1.0) * self.lower);
        let c2 = self.lower * (two_alpha - 1.0) / self.alpha;
        (c1, c2)
    }
}

#[derive(Clone)]
enum Kind {
    Closure { f: Arc<dyn Fn(f64) -> f64 + Send + Sync>, integrable_at_origin: bool },
    /// Values of S at the grid points x_1..x_{n_x}, valid nowhere else.
    Table { grid: Grid, values: Vec<f64> },
}

/// The rate ratio `S(x) = B(x)/g(x)` together with an identifying tag and
/// optional growth bounds.
///
/// Values must be nonnegative wherever queried. Tabulated models answer
/// only at the exact grid points they were given; they never interpolate.
#[derive(Clone)]
pub struct ModelSpec {
    kind: Kind,
    tag: String,
    growth: Option<GrowthParams>,
}

impl std::fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelSpec").field("tag", &self.tag).field("growth", &self.growth).finish()
    }
}

impl ModelSpec {
    /// `S(x) = x` (cells grow at unit rate, split at rate `x^2`).
    /// Growth bounds `(m, M, alpha, x0) = (1, 1, 2, 0)` hold exactly.
    pub fn example1() -> Self {
        Self {
            kind: Kind::Closure { f: Arc::new(|x| x), integrable_at_origin: true },
            tag: "example1".into(),
            growth: Some(GrowthParams { lower: 1.0, upper: 1.0, alpha: 2.0, x0: 0.0 }),
        }
    }

    /// `S(x) = max(x, x^2)/x = max(1, x)`: Lipschitz but not smooth.
    /// Growth bounds `(1, 1, 2, 1)`.
    pub fn example2() -> Self {
        Self {
            kind: Kind::Closure { f: Arc::new(|x: f64| x.max(1.0)), integrable_at_origin: true },
            tag: "example2".into(),
            growth: Some(GrowthParams { lower: 1.0, upper: 1.0, alpha: 2.0, x0: 1.0 }),
        }
    }

    /// `S(x) = x + 1/x` for `x > 1`, `x` otherwise: a jump at `x = 1`.
    /// Growth bounds `(1, 2, 2, 1)`.
    pub fn example3() -> Self {
        Self {
            kind: Kind::Closure {
                f: Arc::new(|x: f64| if x > 1.0 { x + 1.0 / x } else { x }),
                integrable_at_origin: true,
            },
            tag: "example3".into(),
            growth: Some(GrowthParams { lower: 1.0, upper: 2.0, alpha: 2.0, x0: 1.0 }),
        }
    }

    /// `S(x) = 1 + 1/x`: blows up at the origin and is not integrable
    /// there, so the exponential weight function is unavailable.
    /// Growth bounds `(1, 2, 1, 1)`.
    pub fn example4() -> Self {
        Self {
            kind: Kind::Closure {
                f: Arc::new(|x: f64| 1.0 + 1.0 / x),
                integrable_at_origin: false,
            },
            tag: "example4".into(),
            growth: Some(GrowthParams { lower: 1.0, upper: 2.0, alpha: 1.0, x0: 1.0 }),
        }
    }

    /// Looks up a built-in model by name (`example1` .. `example4`).
    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "example1" => Some(Self::example1()),
            "example2" => Some(Self::example2()),
            "example3" => Some(Self::example3()),
            "example4" => Some(Self::example4()),
            _ => None,
        }
    }

    /// Model given by tabulated values `S(x_j)` at the grid points
    /// `x_1 .. x_{n_x}` (so `values.len() == n_x`). The table is valid at
    /// exactly those points; evaluation anywhere else is an error, and the
    /// weight-function quadratures are therefore unavailable.
    pub fn from_table(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_x() {
            return Err(Error::DimensionMismatch { expected: grid.n_x(), got: values.len() });
        }
        for (j, &v) in values.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Validation(format!(
                    "table value S(x_{}) = {v} must be finite and nonnegative",
                    j + 1
                )));
            }
        }
        Ok(Self { kind: Kind::Table { grid, values }, tag: "table".into(), growth: None })
    }

    /// Model from an arbitrary rate-ratio closure. The closure must return
    /// nonnegative finite values for every `x > 0` it is queried at, and is
    /// assumed integrable at the origin (use [`ModelSpec::custom_singular`]
    /// otherwise).
    pub fn custom(tag: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            kind: Kind::Closure { f: Arc::new(f), integrable_at_origin: true },
            tag: tag.into(),
            growth: None,
        }
    }

    /// Like [`ModelSpec::custom`] but for ratios that are not integrable
    /// at the origin; the weight-function quadratures will refuse to run.
    pub fn custom_singular(
        tag: impl Into<String>,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            kind: Kind::Closure { f: Arc::new(f), integrable_at_origin: false },
            tag: tag.into(),
            growth: None,
        }
    }

    /// Attaches growth bounds after spot-checking them on a log-spaced
    /// lattice of points above `x0` (64 points up to `max(8, 8 x0)`, with
    /// a 1e-9 relative slack). Tabulated models skip the numeric check
    /// since they cannot be evaluated off their grid.
    pub fn with_growth_params(mut self, gp: GrowthParams) -> Result<Self> {
        if let Kind::Closure { .. } = self.kind {
            let hi = (8.0 * gp.x0).max(8.0);
            let lo = (gp.x0 * 1.0001).max(gp.x0 + 1e-6).min(hi / 2.0);
            let n = 64;
            for k in 0..n {
                let t = k as f64 / (n - 1) as f64;
                let x = lo * (hi / lo).powf(t);
                let s = self.s(x)?;
                let envelope = x.powf(gp.alpha - 1.0);
                let slack = 1e-9 * envelope.max(1.0);
                if s < gp.lower * envelope - slack || s > gp.upper * envelope + slack {
                    return Err(Error::Validation(format!(
                        "growth bounds violated at x = {x}: S(x) = {s} outside \
                         [{} x^{}, {} x^{}]",
                        gp.lower,
                        gp.alpha - 1.0,
                        gp.upper,
                        gp.alpha - 1.0
                    )));
                }
            }
        }
        self.growth = Some(gp);
        Ok(self)
    }

    /// Identifying tag (used in CSV headers).
    pub fn tag(&self) -> &str {
        &self.tag
    }

    /// Declared growth bounds, if any.
    pub fn growth_params(&self) -> Option<GrowthParams> {
        self.growth
    }

    /// Whether `∫_0^x S` converges, i.e. the weight function exists.
    pub fn integrable_at_origin(&self) -> bool {
        match &self.kind {
            Kind::Closure { integrable_at_origin, .. } => *integrable_at_origin,
            // Finitely many tabulated values cannot encode a singularity,
            // but they also cannot be integrated off-grid.
            Kind::Table { .. } => false,
        }
    }

    /// Evaluates `S(x)`. Errors on nonpositive `x`, on non-finite or
    /// negative closure output, and on off-grid queries of table models.
    pub fn s(&self, x: f64) -> Result<f64> {
        if !x.is_finite() || x <= 0.0 {
            return Err(Error::Eval { x, reason: "ratio is defined for positive sizes".into() });
        }
        match &self.kind {
            Kind::Closure { f, .. } => {
                let v = f(x);
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::Eval {
                        x,
                        reason: format!("ratio returned {v}, expected finite nonnegative"),
                    });
                }
                Ok(v)
            }
            Kind::Table { grid, values } => {
                let q = x / grid.h();
                let j = q.round();
                if (q - j).abs() > 1e-9 * q.abs().max(1.0) {
                    return Err(Error::Eval {
                        x,
                        reason: "tabulated model evaluated off its grid points".into(),
                    });
                }
                let j = j as usize;
                if j < 1 || j > grid.n_x() {
                    return Err(Error::Eval {
                        x,
                        reason: format!("grid point index {j} outside 1..={}", grid.n_x()),
                    });
                }
                Ok(values[j - 1])
            }
        }
    }
}

/// Right-endpoint prefix sums of the ratio over the grid:
/// `P[k] = h * (S(x_1) + ... + S(x_k))` for `k = 0..=n_x`, with `P[0] = 0`.
///
/// `P[k] - P[i]` approximates `∫_{x_i}^{x_k} S`, which is all the discrete
/// kernel ever needs. The origin is never evaluated, so ratios singular at
/// 0 are fine here.
pub fn prefix_integral(model: &ModelSpec, grid: Grid) -> Result<Vec<f64>> {
    let mut p = Vec::with_capacity(grid.n_x() + 1);
    p.push(0.0);
    let mut acc = 0.0;
    for j in 1..=grid.n_x() {
        let x = grid.point(j);
        let s = model.s(x).map_err(|e| match e {
            Error::Eval { reason, .. } => Error::Eval { x, reason },
            other => other,
        })?;
        acc += grid.h() * s;
        p.push(acc);
    }
    Ok(p)
}

/// Composite midpoint rule for `∫_lo^hi f` with panel width at most
/// `max_step`. Exact for affine integrands; `O(step^2)` otherwise.
fn integrate_midpoint<F: Fn(f64) -> Result<f64>>(
    f: &F,
    lo: f64,
    hi: f64,
    max_step: f64,
) -> Result<f64> {
    if hi <= lo {
        return Ok(0.0);
    }
    let n = ((hi - lo) / max_step).ceil().max(1.0) as usize;
    let d = (hi - lo) / n as f64;
    let mut acc = 0.0;
    for k in 0..n {
        acc += f(lo + (k as f64 + 0.5) * d)?;
    }
    Ok(acc * d)
}

fn require_weight_function(model: &ModelSpec) -> Result<()> {
    if !model.integrable_at_origin() {
        return Err(Error::SingularModel(model.tag().to_string()));
    }
    Ok(())
}

/// Weight function `V(x) = exp(∫_0^x S)`, computed by composite midpoint
/// quadrature with panel width at most `quad_step`. Always at least 1.
///
/// Errors for models whose ratio is not integrable at the origin (the
/// weight is undefined there) and for tabulated models (no off-grid
/// evaluation).
pub fn lyapunov_v(model: &ModelSpec, x: f64, quad_step: f64) -> Result<f64> {
    require_weight_function(model)?;
    check_quad_step(quad_step)?;
    if !x.is_finite() || x < 0.0 {
        return Err(Error::Domain(format!("weight function needs x >= 0, got {x}")));
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    let integral = integrate_midpoint(&|t| model.s(t), 0.0, x, quad_step)?;
    Ok(integral.exp())
}

fn check_quad_step(quad_step: f64) -> Result<()> {
    if !quad_step.is_finite() || quad_step <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "quadrature step must be positive, got {quad_step}"
        )));
    }
    Ok(())
}

/// Probability that the next size at birth exceeds `y`, starting from
/// size `x`: `exp(-∫_x^{2y} S)`. Defined for `y >= x/2`; equals 1 at
/// `y = x/2` and is nonincreasing in `y`.
pub fn tail_probability(model: &ModelSpec, x: f64, y: f64, quad_step: f64) -> Result<f64> {
    check_quad_step(quad_step)?;
    if !x.is_finite() || x <= 0.0 {
        return Err(Error::Domain(format!("tail probability needs x > 0, got {x}")));
    }
    if !y.is_finite() || y < x / 2.0 {
        return Err(Error::Domain(format!(
            "tail probability defined for y >= x/2; got x = {x}, y = {y}"
        )));
    }
    let integral = integrate_midpoint(&|t| model.s(t), x, 2.0 * y, quad_step)?;
    Ok((-integral).exp())
}

/// Transition density of the size at birth: `2 S(2y) exp(-∫_x^{2y} S)`
/// for `y >= x/2`, and 0 below `x/2` (a cell of size `x` cannot produce
/// a half smaller than `x/2`). The factor 2 is the Jacobian of the
/// half-size change of variables; the density integrates to 1 over
/// `(x/2, ∞)`.
pub fn density_p(model: &ModelSpec, x: f64, y: f64, quad_step: f64) -> Result<f64> {
    check_quad_step(quad_step)?;
    if !x.is_finite() || x <= 0.0 || !y.is_finite() || y <= 0.0 {
        return Err(Error::Domain(format!("density needs x > 0, y > 0; got x = {x}, y = {y}")));
    }
    if y < x / 2.0 {
        return Ok(0.0);
    }
    Ok(2.0 * model.s(2.0 * y)? * tail_probability(model, x, y, quad_step)?)
}

/// Hard cap on quadrature panels for the tail integrals; generous enough
/// for any ratio that actually decays.
const MAX_PV_PANELS: usize = 50_000_000;
/// Consecutive negligible panels required before truncating the tail.
const PV_TRUNCATE_RUN: usize = 16;

/// `∫_lower^∞ p(x, y) V(y) dy` by truncated composite midpoint
/// quadrature: panels stop after a run of contributions below 1e-14 of
/// the running total. `lower` is clamped up to `x/2` (the density
/// vanishes below it).
///
/// The integrand is evaluated as `2 S(2y) exp(∫_0^x S - ∫_y^{2y} S)`,
/// with the bracket advanced incrementally between panel midpoints so
/// each panel costs three ratio evaluations.
pub fn pv_tail(model: &ModelSpec, x: f64, lower: f64, quad_step: f64) -> Result<f64> {
    require_weight_function(model)?;
    check_quad_step(quad_step)?;
    if !x.is_finite() || x <= 0.0 {
        return Err(Error::Domain(format!("tail integral needs x > 0, got {x}")));
    }
    if !lower.is_finite() {
        return Err(Error::Domain(format!("tail integral lower limit must be finite, got {lower}")));
    }
    let lo = lower.max(x / 2.0);
    // exp(V_x - G(y)) with V_x = ∫_0^x S and G(y) = ∫_y^{2y} S equals
    // V(y) * tail_probability(x, y).
    let vx = integrate_midpoint(&|t| model.s(t), 0.0, x, quad_step)?;
    let d = quad_step;
    let mut m = lo + d / 2.0;
    let mut g = integrate_midpoint(&|t| model.s(t), m, 2.0 * m, quad_step)?;
    let mut total = 0.0;
    let mut small_run = 0;
    for _ in 0..MAX_PV_PANELS {
        let term = d * 2.0 * model.s(2.0 * m)? * (vx - g).exp();
        total += term;
        if term <= 1e-14 * total {
            small_run += 1;
            if small_run >= PV_TRUNCATE_RUN {
                return Ok(total);
            }
        } else {
            small_run = 0;
        }
        // G(m + d) = G(m) + ∫_{2m}^{2m+2d} S - ∫_m^{m+d} S, one midpoint
        // panel each.
        g += 2.0 * d * model.s(2.0 * m + d)? - d * model.s(m + d / 2.0)?;
        m += d;
    }
    Err(Error::Validation(
        "tail integral did not decay within the panel budget; ratio may not grow enough".into(),
    ))
}

/// `PV(x) = ∫_{x/2}^∞ p(x, y) V(y) dy`: the expected weight after one
/// step of the continuous chain. This is the quantity the geometric
/// drift inequality bounds.
pub fn continuous_pv(model: &ModelSpec, x: f64, quad_step: f64) -> Result<f64> {
    pv_tail(model, x, x / 2.0, quad_step)
}
