//! Central-difference verification of analytic gradients.

use crate::error::{Error, Result};

/// Outcome of [`grad_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    /// `max_i |analytic_i − numeric_i| / max(1, |analytic_i|, |numeric_i|)`.
    pub max_rel_error: f64,
    /// Coordinate where the maximum occurred.
    pub worst_index: usize,
}

/// Compares `analytic` against central differences of `f` around `x0` with step `h`.
pub fn grad_check(
    f: impl Fn(&[f64]) -> f64,
    analytic: &[f64],
    x0: &[f64],
    h: f64,
) -> Result<GradCheck> {
    if h.is_nan() || h <= 0.0 {
        return Err(Error::InvalidValue(format!(
            "step must be positive, got {h}"
        )));
    }
    if analytic.len() != x0.len() {
        return Err(Error::Shape(format!(
            "{} analytic components for {} coordinates",
            analytic.len(),
            x0.len()
        )));
    }
    let mut x = x0.to_vec();
    let mut worst = GradCheck {
        max_rel_error: 0.0,
        worst_index: 0,
    };
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + h;
        let plus = f(&x);
        x[i] = orig - h;
        let minus = f(&x);
        x[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Numeric(format!(
                "function is not finite near coordinate {i}"
            )));
        }
        let numeric = (plus - minus) / (2.0 * h);
        let a = analytic[i];
        let err = (a - numeric).abs() / 1.0f64.max(a.abs()).max(numeric.abs());
        if err > worst.max_rel_error || err.is_nan() {
            worst = GradCheck {
                max_rel_error: err,
                worst_index: i,
            };
        }
    }
    Ok(worst)
}
