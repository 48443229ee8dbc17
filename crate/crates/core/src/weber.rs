//! Drifts with a four-dimensional Fokker–Planck symmetry algebra.
//!
//! Case I means `f' + f² = p(x) = μ0 + μ1 x + μ2 x²`. Putting `f = u'/u`
//! linearises this to `u'' = p u`; for `μ2 > 0` an affine change `z = a x + b`
//! turns it into the Weber equation `v'' + (λ + ½ − z²/4) v = 0`, whose
//! recessive solution at `+∞` is the parabolic cylinder function `D_λ`.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::expr::{chebyshev_nodes, is_identically_zero, Bindings, EvalError, Expr, NativeFn, Var};
use crate::fp_symmetry::gamma;
use crate::ito::Domain;
use crate::numeric::dopri5;
use crate::{Error, Result};

/// Anchor of the asymptotic normalisation for the numeric `D_λ`.
pub const D_ANCHOR: f64 = 12.0;

/// Parameters of the standard-form reduction for `μ2 > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeberProblem {
    pub mu: [f64; 3],
    /// `z = a x + b`.
    pub a: f64,
    pub b: f64,
    pub lambda: f64,
}

pub fn riccati_to_weber(mu0: f64, mu1: f64, mu2: f64) -> Result<WeberProblem> {
    if !(mu2 > 0.0) {
        return Err(Error::invalid(format!(
            "standard Weber form needs mu2 > 0, got {mu2}"
        )));
    }
    let r = mu2.sqrt();
    let scale = (4.0 / mu2).powf(0.25);
    Ok(WeberProblem {
        mu: [mu0, mu1, mu2],
        a: scale * r,
        b: scale * mu1 / (2.0 * r),
        lambda: mu1 * mu1 / (8.0 * mu2 * r) - mu0 / (2.0 * r) - 0.5,
    })
}

impl WeberProblem {
    pub fn z(&self, x: f64) -> f64 {
        self.a * x + self.b
    }

    pub fn p(&self, x: f64) -> f64 {
        let [m0, m1, m2] = self.mu;
        m0 + m1 * x + m2 * x * x
    }

    /// `p` recovered from the standard form: `a² (z²/4 − λ − ½)`.
    pub fn p_from_standard(&self, x: f64) -> f64 {
        let z = self.z(x);
        self.a * self.a * (0.25 * z * z - self.lambda - 0.5)
    }

    /// `λ` as a non-negative integer, when it is one to within 1e-9.
    pub fn integer_lambda(&self) -> Option<u32> {
        let n = self.lambda.round();
        ((self.lambda - n).abs() < 1e-9 && n >= 0.0).then_some(n as u32)
    }
}

/// Physicists' Hermite polynomial.
pub fn hermite(n: i64, z: f64) -> Result<f64> {
    if n < 0 {
        return Err(Error::invalid(format!(
            "Hermite degree must be non-negative, got {n}"
        )));
    }
    let (mut h0, mut h1) = (1.0, 2.0 * z);
    if n == 0 {
        return Ok(h0);
    }
    for k in 1..n {
        let h2 = 2.0 * z * h1 - 2.0 * k as f64 * h0;
        h0 = h1;
        h1 = h2;
    }
    Ok(h1)
}

/// `H_n(s)` as an expression in `s`.
pub fn hermite_expr(n: u32, s: &Expr) -> Expr {
    let (mut h0, mut h1) = (Expr::one(), 2.0 * s);
    if n == 0 {
        return h0;
    }
    for k in 1..n {
        let h2 = 2.0 * s * &h1 - (2.0 * k as f64) * &h0;
        h0 = h1;
        h1 = h2;
    }
    h1
}

/// `D_λ(z)`: closed form for integer `λ ≥ 0`, otherwise numeric.
pub fn parabolic_cylinder_d(lambda: f64, z: f64) -> Result<f64> {
    let n = lambda.round();
    if (lambda - n).abs() < 1e-9 && n >= 0.0 {
        let n = n as i64;
        let h = hermite(n, z / std::f64::consts::SQRT_2)?;
        return Ok(2f64.powf(-0.5 * n as f64) * (-0.25 * z * z).exp() * h);
    }
    parabolic_cylinder_d_numeric(lambda, z)
}

/// `(D, D')` at the anchor from the asymptotic expansion
/// `D ~ e^{−z²/4} Σ a_k z^{λ−2k}`.
fn asymptotic(lambda: f64, z: f64) -> (f64, f64) {
    let mut coef = 1.0;
    let mut d = 0.0;
    let mut dd = 0.0;
    let mut last = f64::INFINITY;
    for k in 0..40 {
        let pw = lambda - 2.0 * k as f64;
        let term = coef * z.powf(pw);
        if term.abs() > last || term == 0.0 {
            break;
        }
        last = term.abs();
        d += term;
        dd += coef * (pw * z.powf(pw - 1.0) - 0.5 * z.powf(pw + 1.0));
        if term.abs() < 1e-18 * d.abs() {
            break;
        }
        // a_{k+1} = −a_k (λ−2k)(λ−2k−1) / (2(k+1))
        coef *= -(pw) * (pw - 1.0) / (2.0 * (k + 1) as f64);
    }
    let e = (-0.25 * z * z).exp();
    (e * d, e * dd)
}

/// Integrate the Weber equation inward from the anchor.
pub fn parabolic_cylinder_d_numeric(lambda: f64, z: f64) -> Result<f64> {
    if !(z.abs() <= D_ANCHOR) {
        return Err(Error::domain(format!(
            "numeric D is available on [-{D_ANCHOR}, {D_ANCHOR}], got z = {z}"
        )));
    }
    let (d0, dd0) = asymptotic(lambda, D_ANCHOR);
    if z == D_ANCHOR {
        return Ok(d0);
    }
    let rhs = |s: f64, y: &[f64; 2]| [y[1], (0.25 * s * s - lambda - 0.5) * y[0]];
    let y = dopri5(rhs, D_ANCHOR, [d0, dd0], z, 1e-13, 1e-300)?;
    Ok(y[0])
}

/// Solution of `f' = p(x) − f²` with `f(x0) = f0`, evaluated by ODE
/// integration.
#[derive(Debug, Clone)]
pub struct RiccatiDrift {
    pub mu: [f64; 3],
    pub x0: f64,
    pub f0: f64,
}

impl RiccatiDrift {
    fn p(&self) -> Expr {
        let x = Expr::x();
        self.mu[0] + self.mu[1] * &x + self.mu[2] * x.square()
    }

    pub fn expr(self) -> Expr {
        Expr::native(Arc::new(self))
    }

    fn value(&self, x: f64) -> std::result::Result<f64, crate::NumericError> {
        let [m0, m1, m2] = self.mu;
        let rhs = |s: f64, y: &[f64; 1]| [m0 + m1 * s + m2 * s * s - y[0] * y[0]];
        Ok(dopri5(rhs, self.x0, [self.f0], x, 1e-13, 1e-13)?[0])
    }
}

impl NativeFn for RiccatiDrift {
    fn label(&self) -> String {
        format!(
            "riccati[{}, {}, {}; f({}) = {}]",
            self.mu[0], self.mu[1], self.mu[2], self.x0, self.f0
        )
    }

    fn depends_on(&self, v: Var) -> bool {
        v == Var::X
    }

    fn eval(&self, b: &Bindings) -> std::result::Result<f64, EvalError> {
        let x = b.get(Var::X).ok_or(EvalError::Unbound(Var::X))?;
        let v = self
            .value(x)
            .map_err(|e| EvalError::domain(format!("riccati drift at x = {x}: {e}")))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::domain(format!(
                "riccati drift blew up before x = {x}"
            )))
        }
    }

    fn derivative(&self, this: &Expr, v: Var) -> Expr {
        if v == Var::X {
            self.p() - this.square()
        } else {
            Expr::zero()
        }
    }

    fn substitute(&self, map: &[(Var, Expr)]) -> Expr {
        match map.iter().find(|(v, _)| *v == Var::X) {
            Some((_, e)) if *e != Expr::x() => {
                let inner = self.clone().expr();
                crate::expr::native::Compose::expr(inner, e.clone())
            }
            _ => self.clone().expr(),
        }
    }
}

/// Which solution of `u'' = p u` to use.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Branch {
    /// Hermite branch when `λ` is a non-negative integer, otherwise initial
    /// data `(1, f0)` at the left end of the domain.
    Auto {
        f0: Option<f64>,
    },
    Hermite,
    Initial {
        f0: f64,
    },
}

impl Default for Branch {
    fn default() -> Self {
        Branch::Auto { f0: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "branch", rename_all = "snake_case")]
pub enum BranchUsed {
    Hermite { n: u32 },
    Initial { x0: f64, f0: f64 },
}

impl fmt::Display for BranchUsed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BranchUsed::Hermite { n } => write!(f, "hermite (n = {n})"),
            BranchUsed::Initial { x0, f0 } => write!(f, "initial data f({x0}) = {f0}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GeneratedDrift {
    pub f: Expr,
    /// Closed-form `u` on the Hermite branch.
    pub u: Option<Expr>,
    pub branch: BranchUsed,
    pub problem: Option<WeberProblem>,
    /// Zeros of `u` (poles of `f`) found outside the domain.
    pub poles: Vec<f64>,
    pub riccati_residual: f64,
    pub gamma_xx_residual: f64,
}

fn bisect_root(g: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let glo = g(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if (g(mid) > 0.0) == (glo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Real zeros of `H_n`; all lie in `|s| < √(2n+1)`.
fn hermite_zeros(n: u32) -> Vec<f64> {
    let r = (2.0 * n as f64 + 1.0).sqrt() + 1.0;
    let m = 4000 * (n as usize + 1);
    let h = |s: f64| hermite(n as i64, s).unwrap_or(f64::NAN);
    let mut out = Vec::new();
    let mut prev = (-r, h(-r));
    for i in 1..=m {
        let s = -r + 2.0 * r * i as f64 / m as f64;
        let v = h(s);
        if v == 0.0 {
            out.push(s);
        } else if prev.1 != 0.0 && (v > 0.0) != (prev.1 > 0.0) {
            out.push(bisect_root(h, prev.0, s));
        }
        prev = (s, v);
    }
    out
}

/// Zero crossings of the solution of `u'' = p u`, `u(x0) = 1`, `u'(x0) = f0`
/// on `[x0, x1]`.
fn linear_crossings(mu: [f64; 3], x0: f64, f0: f64, x1: f64) -> Result<Vec<f64>> {
    let [m0, m1, m2] = mu;
    let rhs = |s: f64, y: &[f64; 2]| [y[1], (m0 + m1 * s + m2 * s * s) * y[0]];
    let n = 2000;
    let mut y = [1.0, f0];
    let mut out = Vec::new();
    let mut s = x0;
    for i in 1..=n {
        let next = x0 + (x1 - x0) * i as f64 / n as f64;
        let y1 = dopri5(rhs, s, y, next, 1e-12, 1e-300)?;
        if (y1[0] > 0.0) != (y[0] > 0.0) || y1[0] == 0.0 {
            let (a, ya) = (s, y);
            let root = bisect_root(
                |q| dopri5(rhs, a, ya, q, 1e-12, 1e-300).map_or(f64::NAN, |v| v[0]),
                s,
                next,
            );
            out.push(root);
        }
        y = y1;
        s = next;
    }
    Ok(out)
}

/// Build a drift with `f' + f² = μ0 + μ1 x + μ2 x²` on the domain and check
/// that it is genuinely case I.
pub fn generate_max_symmetry_drift(
    mu: [f64; 3],
    branch: Branch,
    domain: &Domain,
) -> Result<GeneratedDrift> {
    let (lo, hi) = domain.window();
    let problem = riccati_to_weber(mu[0], mu[1], mu[2]).ok();
    let hermite_n = problem.and_then(|p| p.integer_lambda());
    let use_hermite = match branch {
        Branch::Hermite => {
            if hermite_n.is_none() {
                return Err(Error::invalid(match problem {
                    Some(p) => format!("lambda = {} is not a non-negative integer", p.lambda),
                    None => "the Hermite branch needs mu2 > 0".to_string(),
                }));
            }
            true
        }
        Branch::Auto { .. } => hermite_n.is_some(),
        Branch::Initial { .. } => false,
    };

    let (f, u, used, poles, riccati_residual) = if use_hermite {
        let p = problem.expect("checked above");
        let n = hermite_n.expect("checked above");
        let sqrt2 = std::f64::consts::SQRT_2;
        let z = p.a * Expr::x() + p.b;
        let s = &z / sqrt2;
        let hn = hermite_expr(n, &s);
        let u = 2f64.powf(-0.5 * n as f64) * Expr::exp(-0.25 * z.square()) * &hn;
        let f = if n == 0 {
            -0.5 * p.a * &z
        } else {
            let ratio = hermite_expr(n - 1, &s) / &hn;
            (2.0 * n as f64 * p.a / sqrt2) * ratio - 0.5 * p.a * &z
        };
        let poles: Vec<f64> = hermite_zeros(n)
            .into_iter()
            .map(|r| (sqrt2 * r - p.b) / p.a)
            .collect();
        if let Some(x) = poles.iter().find(|x| domain.contains(**x)) {
            return Err(Error::domain(format!(
                "u vanishes at x = {x} inside the domain {domain}; f has a pole there"
            )));
        }
        let res =
            f.diff(Var::X) + f.square() - (mu[0] + mu[1] * Expr::x() + mu[2] * Expr::x().square());
        let mut worst = 0.0f64;
        for x in chebyshev_nodes(lo, hi, 64) {
            worst = worst.max(res.eval(&Bindings::x(x))?.abs());
        }
        (f, Some(u), BranchUsed::Hermite { n }, poles, worst)
    } else {
        let f0 =
            match branch {
                Branch::Initial { f0 } | Branch::Auto { f0: Some(f0) } => f0,
                _ => return Err(Error::invalid(
                    "no Hermite branch here; supply the initial slope f0 = u'/u at the left end",
                )),
            };
        let crossings = linear_crossings(mu, lo, f0, hi)?;
        if let Some(x) = crossings.first() {
            return Err(Error::domain(format!(
                "u vanishes at x = {x} inside the domain {domain}; f has a pole there"
            )));
        }
        let node = RiccatiDrift { mu, x0: lo, f0 };
        let f = node.expr();
        // fourth-order central differences
        let h = 1e-3;
        let mut worst = 0.0f64;
        let ev = |x: f64| f.eval(&Bindings::x(x));
        for x in chebyshev_nodes(lo + 2.0 * h, hi - 2.0 * h, 64) {
            let d = (ev(x - 2.0 * h)? - 8.0 * ev(x - h)? + 8.0 * ev(x + h)? - ev(x + 2.0 * h)?)
                / (12.0 * h);
            let fx = ev(x)?;
            let r = d + fx * fx - (mu[0] + mu[1] * x + mu[2] * x * x);
            worst = worst.max(r.abs());
        }
        (
            f,
            None,
            BranchUsed::Initial { x0: lo, f0 },
            Vec::new(),
            worst,
        )
    };

    let gxx = gamma(&f, &Expr::one()).diff_n(Var::X, 2);
    let mut gamma_xx_residual = 0.0f64;
    for x in chebyshev_nodes(lo, hi, 64) {
        gamma_xx_residual = gamma_xx_residual.max(gxx.eval(&Bindings::x(x))?.abs());
    }
    if !is_identically_zero(&gxx, lo, hi)? {
        return Err(Error::Verification(format!(
            "generated drift has gamma_xx up to {gamma_xx_residual:.3e}"
        )));
    }
    Ok(GeneratedDrift {
        f,
        u,
        branch: used,
        problem,
        poles,
        riccati_residual,
        gamma_xx_residual,
    })
}

impl GeneratedDrift {
    /// `(x, f(x))` at `n` equally spaced points of `[lo, hi]`.
    pub fn sample(&self, lo: f64, hi: f64, n: usize) -> Result<Vec<(f64, f64)>> {
        (0..n)
            .map(|i| {
                let x = if n == 1 {
                    lo
                } else {
                    lo + (hi - lo) * i as f64 / (n - 1) as f64
                };
                Ok((x, self.f.eval(&Bindings::x(x))?))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use crate::fokker_planck::build_fp;
    use crate::fp_symmetry::{classify_fp, FpCase};
    use crate::ito::ItoEquation;

    const S3: f64 = 1.7320508075688772;

    #[test]
    fn standard_form_of_the_example() {
        let p = riccati_to_weber(0.0, 2.0 * S3, 1.0).unwrap();
        assert!((p.lambda - 1.0).abs() < 1e-12);
        assert!((p.a - 2f64.sqrt()).abs() < 1e-12);
        assert!((p.b - 6f64.sqrt()).abs() < 1e-12);
        assert_eq!(p.integer_lambda(), Some(1));
        for x in chebyshev_nodes(-1.0, 3.0, 16) {
            assert!((p.p(x) - p.p_from_standard(x)).abs() < 1e-12);
        }
        let q = riccati_to_weber(0.0, 0.0, 1.0).unwrap();
        assert!((q.a - 2f64.sqrt()).abs() < 1e-15 && q.b == 0.0 && (q.lambda + 0.5).abs() < 1e-15);
        assert!(riccati_to_weber(0.0, 0.0, 0.0).is_err());
        let r = riccati_to_weber(0.7, -1.1, 2.5).unwrap();
        for x in chebyshev_nodes(-2.0, 2.0, 16) {
            assert!((r.p(x) - r.p_from_standard(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn hermite_values() {
        assert_eq!(hermite(0, 0.3).unwrap(), 1.0);
        assert_eq!(hermite(1, 1.5).unwrap(), 3.0);
        assert_eq!(hermite(3, 2.0).unwrap(), 40.0);
        assert!(hermite(-1, 0.0).is_err());
        let e = hermite_expr(4, &Expr::x());
        assert_eq!(e.eval(&Bindings::x(0.7)).unwrap(), hermite(4, 0.7).unwrap());
    }

    #[test]
    fn parabolic_cylinder_closed_and_numeric() {
        let e = (-1.0f64).exp();
        assert!((parabolic_cylinder_d(1.0, 2.0).unwrap() - 2.0 * e).abs() < 1e-15);
        assert!((parabolic_cylinder_d(0.0, 1.0).unwrap() - (-0.25f64).exp()).abs() < 1e-15);
        let num = parabolic_cylinder_d_numeric(1.0, 2.0).unwrap();
        assert!((num - 2.0 * e).abs() < 1e-9, "{num}");
        let num = parabolic_cylinder_d_numeric(2.0, -1.5).unwrap();
        assert!((num - parabolic_cylinder_d(2.0, -1.5).unwrap()).abs() < 1e-9);
        assert!(parabolic_cylinder_d_numeric(0.5, 12.5).is_err());
        // D_{-1}(0) = √(π/2)
        let d = parabolic_cylinder_d(-1.0, 0.0).unwrap();
        assert!(
            (d - (std::f64::consts::PI / 2.0).sqrt()).abs() < 1e-8,
            "{d}"
        );
    }

    #[test]
    fn worked_example_drift() {
        let dom = Domain::new(-1.0, 3.0).unwrap();
        let g = generate_max_symmetry_drift([0.0, 2.0 * S3, 1.0], Branch::default(), &dom).unwrap();
        assert_eq!(g.branch, BranchUsed::Hermite { n: 1 });
        let expect = parse("1/(x + sqrt(3)) - (x + sqrt(3))").unwrap();
        for x in chebyshev_nodes(-1.0, 3.0, 64) {
            let b = Bindings::x(x);
            assert!((g.f.eval(&b).unwrap() - expect.eval(&b).unwrap()).abs() < 1e-9);
            // u = D_1(z) = (√2 x + √6) e^{−x²/2 − √3 x − 3/2}
            let u = (2f64.sqrt() * x + 6f64.sqrt()) * (-0.5 * x * x - S3 * x - 1.5).exp();
            assert!((g.u.as_ref().unwrap().eval(&b).unwrap() - u).abs() < 1e-12 * (1.0 + u));
        }
        assert!(g.gamma_xx_residual < 1e-9);
        assert!(g.riccati_residual < 1e-8);
        assert_eq!(g.poles.len(), 1);
        assert!((g.poles[0] + S3).abs() < 1e-12);
    }

    #[test]
    fn pole_inside_domain_is_reported() {
        let dom = Domain::new(-3.0, 3.0).unwrap();
        let err =
            generate_max_symmetry_drift([0.0, 2.0 * S3, 1.0], Branch::Hermite, &dom).unwrap_err();
        assert!(
            matches!(err, Error::Domain(ref m) if m.contains("-1.73")),
            "{err}"
        );
    }

    #[test]
    fn heat_and_cosh_from_initial_data() {
        let dom = Domain::new(-2.0, 2.0).unwrap();
        let g = generate_max_symmetry_drift([0.0, 0.0, 0.0], Branch::Initial { f0: 0.0 }, &dom)
            .unwrap();
        assert!(g.f.eval(&Bindings::x(1.3)).unwrap().abs() < 1e-14);

        let g = generate_max_symmetry_drift(
            [1.0, 0.0, 0.0],
            Branch::Initial {
                f0: (-2.0f64).tanh(),
            },
            &dom,
        )
        .unwrap();
        for x in [-1.5, 0.0, 0.4, 1.9] {
            let f = g.f.eval(&Bindings::x(x)).unwrap();
            assert!((f - x.tanh()).abs() < 1e-10, "{x}: {f}");
        }
        assert!(g.riccati_residual < 1e-8);
        assert!(g.gamma_xx_residual < 1e-9);
        let fpe = build_fp(&ItoEquation::unit(g.f.clone(), dom).unwrap());
        let class = classify_fp(&fpe).unwrap();
        let FpCase::CaseI { mu } = class.case else {
            panic!("{:?}", class.case)
        };
        assert!((mu[0] - 1.0).abs() < 1e-6 && mu[1].abs() < 1e-6 && mu[2].abs() < 1e-6);
    }

    #[test]
    fn non_integer_lambda_needs_initial_data() {
        let dom = Domain::new(-1.0, 1.0).unwrap();
        assert!(matches!(
            generate_max_symmetry_drift([0.3, 0.0, 1.0], Branch::default(), &dom),
            Err(Error::Invalid(_))
        ));
        let g = generate_max_symmetry_drift([0.3, 0.0, 1.0], Branch::Auto { f0: Some(0.5) }, &dom)
            .unwrap();
        assert!(matches!(g.branch, BranchUsed::Initial { .. }));
        let fpe = build_fp(&ItoEquation::unit(g.f.clone(), dom).unwrap());
        let FpCase::CaseI { mu } = classify_fp(&fpe).unwrap().case else {
            panic!()
        };
        assert!((mu[0] - 0.3).abs() < 1e-6 && mu[1].abs() < 1e-6 && (mu[2] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn crossing_in_numeric_branch() {
        // u'' = 0 with u(-1) = 1, u'(-1) = -1 vanishes at x = 0
        let dom = Domain::new(-1.0, 1.0).unwrap();
        let err = generate_max_symmetry_drift([0.0, 0.0, 0.0], Branch::Initial { f0: -1.0 }, &dom)
            .unwrap_err();
        assert!(matches!(err, Error::Domain(_)), "{err}");
    }
}
