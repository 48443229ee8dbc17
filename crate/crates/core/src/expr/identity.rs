//! Numerical identity testing: is an expression zero on a box?
//!
//! The expression is sampled at tensor-product Chebyshev nodes over the
//! variables it actually depends on and compared against a tolerance that is
//! relative to the largest intermediate value seen during evaluation, so that
//! cancellation of large terms does not register as a nonzero residual.

use thiserror::Error;

use super::{Bindings, Expr, Var};

/// Relative tolerance for treating a residual as zero.
pub const EPS_CLASS: f64 = 1e-9;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum IdentityError {
    #[error("expression `{0}` could not be evaluated at any sample point")]
    Indeterminate(String),
}

/// Sampling intervals for each variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleBox {
    pub x: (f64, f64),
    pub t: (f64, f64),
    pub w: (f64, f64),
}

impl SampleBox {
    /// Box over `[a, b]` in `x` with the default `t ∈ [0, 1]`, `w ∈ [-2, 2]`.
    /// Infinite endpoints are replaced by a finite window.
    pub fn new(a: f64, b: f64) -> Self {
        Self {
            x: finite_window(a, b),
            t: (0.0, 1.0),
            w: (-2.0, 2.0),
        }
    }

    fn range(&self, v: Var) -> (f64, f64) {
        match v {
            Var::X => self.x,
            Var::T => self.t,
            Var::W => self.w,
        }
    }

    /// Sample points for the free variables of `e`.
    pub fn points(&self, e: &Expr) -> Vec<Bindings> {
        let vars = e.free_vars();
        let per_axis = match vars.len() {
            0 => return vec![Bindings::new()],
            1 => 64,
            2 => 8,
            _ => 4,
        };
        let axes: Vec<(Var, Vec<f64>)> = vars
            .iter()
            .map(|&v| {
                let (lo, hi) = self.range(v);
                (v, chebyshev_nodes(lo, hi, per_axis))
            })
            .collect();
        let mut out = vec![Bindings::new()];
        for (v, nodes) in &axes {
            out = out
                .iter()
                .flat_map(|b| nodes.iter().map(move |&s| b.with(*v, s)))
                .collect();
        }
        out
    }
}

/// Finite stand-in for a possibly infinite interval.
pub(crate) fn finite_window(a: f64, b: f64) -> (f64, f64) {
    match (a.is_finite(), b.is_finite()) {
        (true, true) => (a, b),
        (true, false) => (a, a + 10.0),
        (false, true) => (b - 10.0, b),
        (false, false) => (-5.0, 5.0),
    }
}

/// `n` Chebyshev points of the first kind, strictly inside `(a, b)`.
pub fn chebyshev_nodes(a: f64, b: f64, n: usize) -> Vec<f64> {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    (0..n)
        .map(|k| {
            let theta = std::f64::consts::PI * (2 * k + 1) as f64 / (2 * n) as f64;
            mid - half * theta.cos()
        })
        .collect()
}

/// Test whether `e` vanishes identically for `x ∈ (a, b)`, `t ∈ [0, 1]`,
/// `w ∈ [-2, 2]`.
pub fn is_identically_zero(e: &Expr, a: f64, b: f64) -> Result<bool, IdentityError> {
    is_identically_zero_on(e, &SampleBox::new(a, b))
}

/// Test whether `e` vanishes identically on the box. Points where `e` cannot
/// be evaluated are skipped; if all of them fail the result is
/// [`IdentityError::Indeterminate`].
pub fn is_identically_zero_on(e: &Expr, bx: &SampleBox) -> Result<bool, IdentityError> {
    if let Some(c) = e.as_const() {
        return Ok(c.abs() < EPS_CLASS);
    }
    let mut evaluated = 0usize;
    for b in bx.points(e) {
        match e.eval_with_scale(&b) {
            Ok((v, scale)) => {
                evaluated += 1;
                if v.abs() >= EPS_CLASS * (1.0 + scale) {
                    return Ok(false);
                }
            }
            Err(_) => continue,
        }
    }
    if evaluated == 0 {
        return Err(IdentityError::Indeterminate(e.to_string()));
    }
    Ok(true)
}
