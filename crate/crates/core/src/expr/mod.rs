//! Immutable expression trees over the variables `x`, `t` and `w`.
//!
//! Every drift, noise coefficient, symmetry generator and discriminant in the
//! crate is an [`Expr`]. Trees are reference counted and never mutated; the
//! smart constructors fold constants so that derivatives stay compact.
//!
//! Besides the elementary node kinds there is a [`Node::Native`] escape hatch
//! for numerically defined functions (antiderivatives, inverse maps, ODE
//! solutions) that still know their own symbolic derivative.

mod diff;
pub(crate) mod identity;
pub mod native;
mod parse;
mod print;

use std::fmt;
use std::ops;
use std::sync::Arc;

use thiserror::Error;

pub use identity::{
    chebyshev_nodes, is_identically_zero, is_identically_zero_on, IdentityError, SampleBox,
    EPS_CLASS,
};
pub use native::NativeFn;
pub use parse::{parse, ParseError};

/// Free variables an expression may depend on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    X,
    T,
    W,
}

impl Var {
    pub const ALL: [Var; 3] = [Var::X, Var::T, Var::W];

    pub(crate) fn bit(self) -> u8 {
        match self {
            Var::X => 1,
            Var::T => 2,
            Var::W => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Var::X => "x",
            Var::T => "t",
            Var::W => "w",
        }
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Values assigned to the free variables for an evaluation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Bindings {
    pub x: Option<f64>,
    pub t: Option<f64>,
    pub w: Option<f64>,
}

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn at(x: f64, t: f64, w: f64) -> Self {
        Self {
            x: Some(x),
            t: Some(t),
            w: Some(w),
        }
    }

    pub fn x(x: f64) -> Self {
        Self {
            x: Some(x),
            ..Self::default()
        }
    }

    pub fn xt(x: f64, t: f64) -> Self {
        Self {
            x: Some(x),
            t: Some(t),
            w: None,
        }
    }

    pub fn t(t: f64) -> Self {
        Self {
            t: Some(t),
            ..Self::default()
        }
    }

    pub fn get(&self, v: Var) -> Option<f64> {
        match v {
            Var::X => self.x,
            Var::T => self.t,
            Var::W => self.w,
        }
    }

    #[must_use]
    pub fn with(mut self, v: Var, value: f64) -> Self {
        match v {
            Var::X => self.x = Some(value),
            Var::T => self.t = Some(value),
            Var::W => self.w = Some(value),
        }
        self
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EvalError {
    #[error("variable `{0}` is unbound")]
    Unbound(Var),
    #[error("domain error: {0}")]
    Domain(String),
}

impl EvalError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        EvalError::Domain(msg.into())
    }
}

/// Expression node kinds.
#[derive(Debug, Clone)]
pub enum Node {
    Const(f64),
    Var(Var),
    Add(Expr, Expr),
    Sub(Expr, Expr),
    Mul(Expr, Expr),
    Div(Expr, Expr),
    /// Power with a constant exponent.
    Pow(Expr, f64),
    Neg(Expr),
    Exp(Expr),
    Log(Expr),
    Sqrt(Expr),
    Sin(Expr),
    Cos(Expr),
    Native(Arc<dyn NativeFn>),
}

struct Inner {
    node: Node,
    vars: u8,
}

/// Shared, immutable expression tree.
#[derive(Clone)]
pub struct Expr(Arc<Inner>);

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({self})")
    }
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        if Arc::ptr_eq(&self.0, &other.0) {
            return true;
        }
        use Node::*;
        match (self.node(), other.node()) {
            (Const(a), Const(b)) => a.to_bits() == b.to_bits() || a == b,
            (Var(a), Var(b)) => a == b,
            (Add(a, b), Add(c, d))
            | (Sub(a, b), Sub(c, d))
            | (Mul(a, b), Mul(c, d))
            | (Div(a, b), Div(c, d)) => a == c && b == d,
            (Pow(a, p), Pow(b, q)) => a == b && p == q,
            (Neg(a), Neg(b))
            | (Exp(a), Exp(b))
            | (Log(a), Log(b))
            | (Sqrt(a), Sqrt(b))
            | (Sin(a), Sin(b))
            | (Cos(a), Cos(b)) => a == b,
            (Native(a), Native(b)) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }
}

fn child_vars(node: &Node) -> u8 {
    use Node::*;
    match node {
        Const(_) => 0,
        Var(v) => v.bit(),
        Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) => a.0.vars | b.0.vars,
        Pow(a, _) | Neg(a) | Exp(a) | Log(a) | Sqrt(a) | Sin(a) | Cos(a) => a.0.vars,
        Native(n) => self::Var::ALL
            .iter()
            .filter(|v| n.depends_on(**v))
            .fold(0, |acc, v| acc | v.bit()),
    }
}

impl Expr {
    fn from_node(node: Node) -> Self {
        let vars = child_vars(&node);
        Expr(Arc::new(Inner { node, vars }))
    }

    pub fn node(&self) -> &Node {
        &self.0.node
    }

    pub fn constant(c: f64) -> Self {
        Self::from_node(Node::Const(c))
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn one() -> Self {
        Self::constant(1.0)
    }

    pub fn var(v: Var) -> Self {
        Self::from_node(Node::Var(v))
    }

    pub fn x() -> Self {
        Self::var(Var::X)
    }

    pub fn t() -> Self {
        Self::var(Var::T)
    }

    pub fn w() -> Self {
        Self::var(Var::W)
    }

    pub fn native(f: Arc<dyn NativeFn>) -> Self {
        Self::from_node(Node::Native(f))
    }

    /// The constant payload if this node is a constant.
    pub fn as_const(&self) -> Option<f64> {
        match self.node() {
            Node::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn is_const_value(&self, value: f64) -> bool {
        self.as_const() == Some(value)
    }

    pub fn depends_on(&self, v: Var) -> bool {
        self.0.vars & v.bit() != 0
    }

    /// True when no variable occurs in the tree.
    pub fn is_closed(&self) -> bool {
        self.0.vars == 0
    }

    pub fn free_vars(&self) -> Vec<Var> {
        Var::ALL
            .iter()
            .copied()
            .filter(|v| self.depends_on(*v))
            .collect()
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(p), Some(q)) => Expr::constant(p + q),
            (Some(p), None) if p == 0.0 => b,
            (None, Some(q)) if q == 0.0 => a,
            _ => Self::from_node(Node::Add(a, b)),
        }
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(p), Some(q)) => Expr::constant(p - q),
            (None, Some(q)) if q == 0.0 => a,
            (Some(p), None) if p == 0.0 => Expr::neg(b),
            _ => Self::from_node(Node::Sub(a, b)),
        }
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(p), Some(q)) => Expr::constant(p * q),
            (Some(p), _) | (_, Some(p)) if p == 0.0 => Expr::zero(),
            (Some(p), None) if p == 1.0 => b,
            (None, Some(q)) if q == 1.0 => a,
            _ => Self::from_node(Node::Mul(a, b)),
        }
    }

    pub fn div(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(p), Some(q)) if q != 0.0 => Expr::constant(p / q),
            (Some(p), None) if p == 0.0 => Expr::zero(),
            (None, Some(q)) if q == 1.0 => a,
            _ => Self::from_node(Node::Div(a, b)),
        }
    }

    pub fn pow(a: Expr, p: f64) -> Expr {
        if p == 0.0 {
            return Expr::one();
        }
        if p == 1.0 {
            return a;
        }
        if let Some(c) = a.as_const() {
            let v = c.powf(p);
            if v.is_finite() {
                return Expr::constant(v);
            }
        }
        Self::from_node(Node::Pow(a, p))
    }

    pub fn neg(a: Expr) -> Expr {
        match a.node() {
            Node::Const(c) => Expr::constant(-c),
            Node::Neg(inner) => inner.clone(),
            _ => Self::from_node(Node::Neg(a)),
        }
    }

    fn unary(a: Expr, fold: impl Fn(f64) -> Option<f64>, make: impl Fn(Expr) -> Node) -> Expr {
        if let Some(v) = a.as_const().and_then(&fold) {
            if v.is_finite() {
                return Expr::constant(v);
            }
        }
        Self::from_node(make(a))
    }

    pub fn exp(a: Expr) -> Expr {
        Self::unary(a, |c| Some(c.exp()), Node::Exp)
    }

    pub fn log(a: Expr) -> Expr {
        Self::unary(a, |c| (c > 0.0).then(|| c.ln()), Node::Log)
    }

    pub fn sqrt(a: Expr) -> Expr {
        Self::unary(a, |c| (c >= 0.0).then(|| c.sqrt()), Node::Sqrt)
    }

    pub fn sin(a: Expr) -> Expr {
        Self::unary(a, |c| Some(c.sin()), Node::Sin)
    }

    pub fn cos(a: Expr) -> Expr {
        Self::unary(a, |c| Some(c.cos()), Node::Cos)
    }

    pub fn square(&self) -> Expr {
        Expr::pow(self.clone(), 2.0)
    }

    /// Evaluate at the given bindings. Singular points raise
    /// [`EvalError::Domain`]; a non-finite value is never returned.
    pub fn eval(&self, b: &Bindings) -> Result<f64, EvalError> {
        self.eval_inner(b, &mut None)
    }

    /// Evaluate with every variable bound.
    pub fn eval_at(&self, x: f64, t: f64, w: f64) -> Result<f64, EvalError> {
        self.eval(&Bindings::at(x, t, w))
    }

    /// Evaluate and also report the largest magnitude of any sub-term.
    pub fn eval_with_scale(&self, b: &Bindings) -> Result<(f64, f64), EvalError> {
        let mut scale = Some(0.0);
        let v = self.eval_inner(b, &mut scale)?;
        Ok((v, scale.unwrap_or(0.0)))
    }

    fn eval_inner(&self, b: &Bindings, scale: &mut Option<f64>) -> Result<f64, EvalError> {
        use Node::*;
        let v = match self.node() {
            Const(c) => *c,
            Var(v) => b.get(*v).ok_or(EvalError::Unbound(*v))?,
            Add(p, q) => p.eval_inner(b, scale)? + q.eval_inner(b, scale)?,
            Sub(p, q) => p.eval_inner(b, scale)? - q.eval_inner(b, scale)?,
            Mul(p, q) => p.eval_inner(b, scale)? * q.eval_inner(b, scale)?,
            Div(p, q) => {
                let num = p.eval_inner(b, scale)?;
                let den = q.eval_inner(b, scale)?;
                if den == 0.0 {
                    return Err(EvalError::domain("division by zero"));
                }
                num / den
            }
            Pow(p, e) => {
                let base = p.eval_inner(b, scale)?;
                if base < 0.0 && e.fract() != 0.0 {
                    return Err(EvalError::domain("non-integer power of a negative number"));
                }
                if base == 0.0 && *e < 0.0 {
                    return Err(EvalError::domain("negative power of zero"));
                }
                if e.fract() == 0.0 && e.abs() <= 64.0 {
                    base.powi(*e as i32)
                } else {
                    base.powf(*e)
                }
            }
            Neg(p) => -p.eval_inner(b, scale)?,
            Exp(p) => p.eval_inner(b, scale)?.exp(),
            Log(p) => {
                let a = p.eval_inner(b, scale)?;
                if a <= 0.0 {
                    return Err(EvalError::domain("logarithm of a non-positive number"));
                }
                a.ln()
            }
            Sqrt(p) => {
                let a = p.eval_inner(b, scale)?;
                if a < 0.0 {
                    return Err(EvalError::domain("square root of a negative number"));
                }
                a.sqrt()
            }
            Sin(p) => p.eval_inner(b, scale)?.sin(),
            Cos(p) => p.eval_inner(b, scale)?.cos(),
            Native(n) => n.eval(b)?,
        };
        if !v.is_finite() {
            return Err(EvalError::domain(format!("non-finite value in `{self}`")));
        }
        if let Some(s) = scale.as_mut() {
            *s = s.max(v.abs());
        }
        Ok(v)
    }

    /// Replace every free occurrence of `v` by `e`.
    pub fn substitute(&self, v: Var, e: &Expr) -> Expr {
        self.substitute_many(&[(v, e.clone())])
    }

    /// Simultaneous substitution; replacements are not themselves rewritten.
    pub fn substitute_many(&self, map: &[(Var, Expr)]) -> Expr {
        if map.iter().all(|(v, _)| !self.depends_on(*v)) {
            return self.clone();
        }
        use Node::*;
        let s = |a: &Expr| a.substitute_many(map);
        match self.node() {
            Const(_) => self.clone(),
            Var(u) => map
                .iter()
                .find(|(v, _)| v == u)
                .map_or_else(|| self.clone(), |(_, e)| e.clone()),
            Add(a, b) => Expr::add(s(a), s(b)),
            Sub(a, b) => Expr::sub(s(a), s(b)),
            Mul(a, b) => Expr::mul(s(a), s(b)),
            Div(a, b) => Expr::div(s(a), s(b)),
            Pow(a, p) => Expr::pow(s(a), *p),
            Neg(a) => Expr::neg(s(a)),
            Exp(a) => Expr::exp(s(a)),
            Log(a) => Expr::log(s(a)),
            Sqrt(a) => Expr::sqrt(s(a)),
            Sin(a) => Expr::sin(s(a)),
            Cos(a) => Expr::cos(s(a)),
            Native(n) => n.substitute(map),
        }
    }

    /// Substitute a constant value for a variable.
    pub fn fix(&self, v: Var, value: f64) -> Expr {
        self.substitute(v, &Expr::constant(value))
    }

    /// Exact partial derivative with respect to `v`.
    pub fn diff(&self, v: Var) -> Expr {
        diff::differentiate(self, v)
    }

    /// Repeated partial derivative.
    pub fn diff_n(&self, v: Var, n: usize) -> Expr {
        (0..n).fold(self.clone(), |e, _| e.diff(v))
    }

    /// Number of nodes in the tree (shared subtrees counted once per use).
    pub fn size(&self) -> usize {
        use Node::*;
        1 + match self.node() {
            Const(_) | Var(_) | Native(_) => 0,
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) => a.size() + b.size(),
            Pow(a, _) | Neg(a) | Exp(a) | Log(a) | Sqrt(a) | Sin(a) | Cos(a) => a.size(),
        }
    }
}

/// Free-function form of [`Expr::diff`].
pub fn differentiate(e: &Expr, v: Var) -> Expr {
    e.diff(v)
}

impl From<f64> for Expr {
    fn from(c: f64) -> Self {
        Expr::constant(c)
    }
}

impl From<Var> for Expr {
    fn from(v: Var) -> Self {
        Expr::var(v)
    }
}

macro_rules! binop {
    ($tr:ident, $method:ident, $ctor:path) => {
        impl ops::$tr<Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                $ctor(self, rhs)
            }
        }
        impl ops::$tr<&Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                $ctor(self, rhs.clone())
            }
        }
        impl ops::$tr<Expr> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                $ctor(self.clone(), rhs)
            }
        }
        impl ops::$tr<&Expr> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                $ctor(self.clone(), rhs.clone())
            }
        }
        impl ops::$tr<f64> for Expr {
            type Output = Expr;
            fn $method(self, rhs: f64) -> Expr {
                $ctor(self, Expr::constant(rhs))
            }
        }
        impl ops::$tr<f64> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: f64) -> Expr {
                $ctor(self.clone(), Expr::constant(rhs))
            }
        }
        impl ops::$tr<Expr> for f64 {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                $ctor(Expr::constant(self), rhs)
            }
        }
        impl ops::$tr<&Expr> for f64 {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                $ctor(Expr::constant(self), rhs.clone())
            }
        }
    };
}

binop!(Add, add, Expr::add);
binop!(Sub, sub, Expr::sub);
binop!(Mul, mul, Expr::mul);
binop!(Div, div, Expr::div);

impl ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::neg(self)
    }
}

impl ops::Neg for &Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::neg(self.clone())
    }
}
