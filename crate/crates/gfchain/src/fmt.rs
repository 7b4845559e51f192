//! Numeric formatting shared by the CSV writers.

/// Scientific notation with 17 significant digits (1 + 16 after the
/// point): enough to round-trip any f64 losslessly and deterministically.
pub(crate) fn g17(v: f64) -> String {
    format!("{v:.16e}")
}
