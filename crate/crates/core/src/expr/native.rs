//! Numerically evaluated nodes that carry their own symbolic derivative.

use std::fmt;
use std::sync::Arc;

use super::{Bindings, EvalError, Expr, Var};
use crate::numeric;

/// A function embedded in an expression tree whose value is computed
/// numerically but whose partial derivatives are again expressions.
pub trait NativeFn: Send + Sync + fmt::Debug {
    /// Short human-readable rendering used by `Display`.
    fn label(&self) -> String;
    fn depends_on(&self, v: Var) -> bool;
    fn eval(&self, b: &Bindings) -> Result<f64, EvalError>;
    /// Partial derivative of the node `this` (which wraps `self`).
    fn derivative(&self, this: &Expr, v: Var) -> Expr;
    /// Simultaneous substitution of free variables.
    fn substitute(&self, map: &[(Var, Expr)]) -> Expr;
}

const QUAD_TOL: f64 = 1e-13;

/// Values of the integrand's free variables other than the bound one,
/// expressed in terms of the outer variables. `None` means the outer
/// variable of the same name.
type Params = [Option<Expr>; 3];

fn idx(v: Var) -> usize {
    match v {
        Var::X => 0,
        Var::T => 1,
        Var::W => 2,
    }
}

fn param(params: &Params, v: Var) -> Expr {
    params[idx(v)].clone().unwrap_or_else(|| Expr::var(v))
}

fn inner_bindings(
    body: &Expr,
    bound: Var,
    params: &Params,
    outer: &Bindings,
) -> Result<Bindings, EvalError> {
    let mut b = Bindings::new();
    for u in Var::ALL {
        if u != bound && body.depends_on(u) {
            b = b.with(u, param(params, u).eval(outer)?);
        }
    }
    Ok(b)
}

fn params_depend_on(body: &Expr, bound: Var, params: &Params, v: Var) -> bool {
    Var::ALL
        .iter()
        .any(|&u| u != bound && body.depends_on(u) && param(params, u).depends_on(v))
}

fn substitute_params(body: &Expr, bound: Var, params: &Params, map: &[(Var, Expr)]) -> Params {
    let mut out: Params = [None, None, None];
    for u in Var::ALL {
        if u != bound && body.depends_on(u) {
            out[idx(u)] = Some(param(params, u).substitute_many(map));
        }
    }
    out
}

/// The body with the bound variable replaced by `at` and the remaining
/// variables replaced by their parameter expressions.
fn instantiate(body: &Expr, bound: Var, params: &Params, at: &Expr) -> Expr {
    let mut map = vec![(bound, at.clone())];
    for u in Var::ALL {
        if u != bound {
            if let Some(p) = &params[idx(u)] {
                map.push((u, p.clone()));
            }
        }
    }
    body.substitute_many(&map)
}

/// `∫_{lower}^{upper} integrand d(bound)`.
#[derive(Debug, Clone)]
pub struct Integral {
    integrand: Expr,
    bound: Var,
    lower: f64,
    upper: Expr,
    params: Params,
}

impl Integral {
    /// Integral of `integrand` in the variable `bound` from the constant
    /// `lower` to `upper`.
    pub fn expr(integrand: Expr, bound: Var, lower: f64, upper: Expr) -> Expr {
        if integrand.is_const_value(0.0) {
            return Expr::zero();
        }
        if !integrand.depends_on(bound) {
            // constant in the integration variable
            return integrand * (upper - lower);
        }
        Expr::native(Arc::new(Integral {
            integrand,
            bound,
            lower,
            upper,
            params: [None, None, None],
        }))
    }

    /// Running antiderivative `∫_{lower}^{v} integrand dv`.
    pub fn primitive(integrand: Expr, v: Var, lower: f64) -> Expr {
        Self::expr(integrand, v, lower, Expr::var(v))
    }
}

impl NativeFn for Integral {
    fn label(&self) -> String {
        format!(
            "int[{}..{}]({}) d{}",
            self.lower, self.upper, self.integrand, self.bound
        )
    }

    fn depends_on(&self, v: Var) -> bool {
        self.upper.depends_on(v) || params_depend_on(&self.integrand, self.bound, &self.params, v)
    }

    fn eval(&self, b: &Bindings) -> Result<f64, EvalError> {
        let upper = self.upper.eval(b)?;
        let base = inner_bindings(&self.integrand, self.bound, &self.params, b)?;
        let scale = 1.0 + (upper - self.lower).abs();
        let r = numeric::adaptive_simpson(
            |s| self.integrand.eval(&base.with(self.bound, s)),
            self.lower,
            upper,
            QUAD_TOL * scale,
        )
        .map_err(|e| EvalError::domain(e.to_string()))?;
        r
    }

    fn derivative(&self, _this: &Expr, v: Var) -> Expr {
        let edge = instantiate(&self.integrand, self.bound, &self.params, &self.upper);
        let mut out = edge * self.upper.diff(v);
        for u in Var::ALL {
            if u == self.bound || !self.integrand.depends_on(u) {
                continue;
            }
            let dp = param(&self.params, u).diff(v);
            if dp.is_const_value(0.0) {
                continue;
            }
            let inner = Integral {
                integrand: self.integrand.diff(u),
                bound: self.bound,
                lower: self.lower,
                upper: self.upper.clone(),
                params: self.params.clone(),
            };
            let term = if inner.integrand.is_const_value(0.0) {
                Expr::zero()
            } else {
                Expr::native(Arc::new(inner))
            };
            out = out + term * dp;
        }
        out
    }

    fn substitute(&self, map: &[(Var, Expr)]) -> Expr {
        Expr::native(Arc::new(Integral {
            integrand: self.integrand.clone(),
            bound: self.bound,
            lower: self.lower,
            upper: self.upper.substitute_many(map),
            params: substitute_params(&self.integrand, self.bound, &self.params, map),
        }))
    }
}

/// Solution `s` of `forward(s) = target` inside an interval, where
/// `forward` is strictly monotone in its bound variable. The root is
/// bracketed by stepping outward from `start`.
#[derive(Debug, Clone)]
pub struct Inverse {
    forward: Expr,
    bound: Var,
    target: Expr,
    interval: (f64, f64),
    start: f64,
    params: Params,
}

impl Inverse {
    /// `interval` endpoints may be infinite; `start` must lie inside it.
    pub fn expr(forward: Expr, bound: Var, target: Expr, interval: (f64, f64), start: f64) -> Expr {
        Expr::native(Arc::new(Inverse {
            forward,
            bound,
            target,
            interval,
            start,
            params: [None, None, None],
        }))
    }

    fn step_out(&self, from: f64, k: i32, right: bool) -> f64 {
        let edge = if right {
            self.interval.1
        } else {
            self.interval.0
        };
        if edge.is_finite() {
            edge - (edge - from) * 0.5f64.powi(k)
        } else {
            let d = 2f64.powi(k - 1);
            if right {
                from + d
            } else {
                from - d
            }
        }
    }
}

impl NativeFn for Inverse {
    fn label(&self) -> String {
        format!("inv[{} : {} = {}]", self.bound, self.forward, self.target)
    }

    fn depends_on(&self, v: Var) -> bool {
        self.target.depends_on(v) || params_depend_on(&self.forward, self.bound, &self.params, v)
    }

    fn eval(&self, b: &Bindings) -> Result<f64, EvalError> {
        let target = self.target.eval(b)?;
        let base = inner_bindings(&self.forward, self.bound, &self.params, b)?;
        let slope = self.forward.diff(self.bound);
        let g = |s: f64| -> Result<(f64, f64), EvalError> {
            let at = base.with(self.bound, s);
            Ok((self.forward.eval(&at)? - target, slope.eval(&at)?))
        };
        let (g0, d0) = g(self.start)?;
        if g0 == 0.0 {
            return Ok(self.start);
        }
        // walk toward the root until the sign flips
        let right = (g0 > 0.0) != (d0 > 0.0);
        let mut inner = self.start;
        let mut outer = None;
        for k in 1..=80 {
            let s = self.step_out(self.start, k, right);
            match g(s) {
                Ok((gs, _)) if gs.signum() != g0.signum() => {
                    outer = Some(s);
                    break;
                }
                Ok(_) => inner = s,
                Err(_) => break,
            }
        }
        let outer = outer.ok_or_else(|| {
            EvalError::domain(format!(
                "inverse map: no preimage of {target} in the interval"
            ))
        })?;
        let (lo, hi) = if inner < outer {
            (inner, outer)
        } else {
            (outer, inner)
        };
        numeric::bracketed_newton(|s| g(s).ok(), lo, hi, 1e-15)
            .map_err(|e| EvalError::domain(format!("inverse map: {e}")))
    }

    fn derivative(&self, this: &Expr, v: Var) -> Expr {
        // implicit differentiation of forward(s(v), p(v)) = target(v)
        let slope = instantiate(
            &self.forward.diff(self.bound),
            self.bound,
            &self.params,
            this,
        );
        let mut num = self.target.diff(v);
        for u in Var::ALL {
            if u == self.bound || !self.forward.depends_on(u) {
                continue;
            }
            let dp = param(&self.params, u).diff(v);
            if dp.is_const_value(0.0) {
                continue;
            }
            let fu = instantiate(&self.forward.diff(u), self.bound, &self.params, this);
            num = num - fu * dp;
        }
        num / slope
    }

    fn substitute(&self, map: &[(Var, Expr)]) -> Expr {
        Expr::native(Arc::new(Inverse {
            forward: self.forward.clone(),
            bound: self.bound,
            target: self.target.substitute_many(map),
            interval: self.interval,
            start: self.start,
            params: substitute_params(&self.forward, self.bound, &self.params, map),
        }))
    }
}

/// `inner(arg)` for an `inner` that depends on `x` alone and has no
/// symbolic substitution of its own.
#[derive(Debug, Clone)]
pub struct Compose {
    inner: Expr,
    arg: Expr,
}

impl Compose {
    pub fn expr(inner: Expr, arg: Expr) -> Expr {
        if arg == Expr::x() {
            return inner;
        }
        Expr::native(Arc::new(Compose { inner, arg }))
    }
}

impl NativeFn for Compose {
    fn label(&self) -> String {
        format!("({})[x := {}]", self.inner, self.arg)
    }

    fn depends_on(&self, v: Var) -> bool {
        self.arg.depends_on(v)
    }

    fn eval(&self, b: &Bindings) -> Result<f64, EvalError> {
        let a = self.arg.eval(b)?;
        self.inner.eval(&Bindings::x(a))
    }

    fn derivative(&self, _this: &Expr, v: Var) -> Expr {
        let da = self.arg.diff(v);
        if da.is_const_value(0.0) {
            return Expr::zero();
        }
        Compose::expr(self.inner.diff(Var::X), self.arg.clone()) * da
    }

    fn substitute(&self, map: &[(Var, Expr)]) -> Expr {
        Compose::expr(self.inner.clone(), self.arg.substitute_many(map))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn primitive_of_exponential() {
        let h = Integral::primitive(Expr::exp(Expr::t()), Var::T, 0.0);
        let v = h.eval(&Bindings::t(1.0)).unwrap();
        assert!((v - (1f64.exp() - 1.0)).abs() < 1e-12);
        // fundamental theorem
        let d = h.diff(Var::T).eval(&Bindings::t(0.3)).unwrap();
        assert!((d - 0.3f64.exp()).abs() < 1e-15);
    }

    #[test]
    fn leibniz_rule_with_parameter() {
        // F(x, t) = ∫_0^x e^{s t} ds = (e^{xt} - 1)/t
        let f = Integral::primitive(Expr::exp(Expr::x() * Expr::t()), Var::X, 0.0);
        let (x, t) = (0.8, 0.6);
        let b = Bindings::xt(x, t);
        let exact = ((x * t).exp() - 1.0) / t;
        assert!((f.eval(&b).unwrap() - exact).abs() < 1e-12);
        let dt_exact = (x * (x * t).exp() * t - ((x * t).exp() - 1.0)) / (t * t);
        let dt = f.diff(Var::T).eval(&b).unwrap();
        assert!((dt - dt_exact).abs() < 1e-11, "{dt} vs {dt_exact}");
    }

    #[test]
    fn substitution_does_not_capture() {
        // ∫_0^x (s + t) ds with t := x  gives x^2/2 + x^2
        let f = Integral::primitive(Expr::x() + Expr::t(), Var::X, 0.0);
        let g = f.substitute(Var::T, &Expr::x());
        let v = g.eval(&Bindings::x(2.0)).unwrap();
        assert!((v - 6.0).abs() < 1e-12);
        let d = g.diff(Var::X).eval(&Bindings::x(2.0)).unwrap();
        // d/dx (3x^2/2) = 3x
        assert!((d - 6.0).abs() < 1e-11);
    }

    #[test]
    fn constant_integrand_folds() {
        let f = Integral::primitive(Expr::constant(2.0), Var::X, 1.0);
        assert_eq!(f.eval(&Bindings::x(4.0)).unwrap(), 6.0);
    }

    #[test]
    fn inverse_of_cubic() {
        let fwd = Expr::x().square() * Expr::x() + Expr::x();
        let inv = Inverse::expr(
            fwd,
            Var::X,
            Expr::t(),
            (f64::NEG_INFINITY, f64::INFINITY),
            0.0,
        );
        let s = inv.eval(&Bindings::t(10.0)).unwrap();
        assert!((s - 2.0).abs() < 1e-13);
        // ds/dt = 1 / (3 s^2 + 1)
        let d = inv.diff(Var::T).eval(&Bindings::t(10.0)).unwrap();
        assert!((d - 1.0 / 13.0).abs() < 1e-13);
    }

    #[test]
    fn inverse_of_log_on_half_line() {
        // log x = y on (0, inf), starting far from the root on both sides
        let inv = Inverse::expr(
            Expr::log(Expr::x()),
            Var::X,
            Expr::t(),
            (0.0, f64::INFINITY),
            1.0,
        );
        for y in [-20.0, -1.0, 0.0, 3.0, 30.0] {
            let s = inv.eval(&Bindings::t(y)).unwrap();
            assert!((s - f64::exp(y)).abs() < 1e-12 * f64::exp(y), "{y}: {s}");
        }
    }

    #[test]
    fn inverse_outside_bracket_is_domain_error() {
        let inv = Inverse::expr(Expr::x(), Var::X, Expr::t(), (0.0, 1.0), 0.5);
        assert!(matches!(
            inv.eval(&Bindings::t(5.0)),
            Err(EvalError::Domain(_))
        ));
    }
}
