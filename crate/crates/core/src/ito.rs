//! Scalar Ito equations `dx = f(x,t) dt + σ(x,t) dw`, reduction to unit
//! noise, and the determining equations for standard symmetries
//! `X = φ(x,t,w) ∂x`.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::expr::native::{Integral, Inverse};
use crate::expr::{chebyshev_nodes, is_identically_zero_on, Bindings, Expr, SampleBox, Var};
use crate::{Error, Result};

/// Open spatial interval `(a, b)`; either end may be infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain {
    pub a: f64,
    pub b: f64,
}

impl Domain {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if a.is_nan() || b.is_nan() || a >= b {
            return Err(Error::invalid(format!("empty domain ({a}, {b})")));
        }
        Ok(Self { a, b })
    }

    pub fn real_line() -> Self {
        Self {
            a: f64::NEG_INFINITY,
            b: f64::INFINITY,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        x > self.a && x < self.b
    }

    pub fn is_bounded(&self) -> bool {
        self.a.is_finite() && self.b.is_finite()
    }

    /// Finite window used for sampling; equal to the domain when bounded.
    pub fn window(&self) -> (f64, f64) {
        crate::expr::identity::finite_window(self.a, self.b)
    }

    /// Default identity-test box: `x` over the window, `t ∈ [0,1]`, `w ∈ [-2,2]`.
    pub fn sample_box(&self) -> SampleBox {
        SampleBox::new(self.a, self.b)
    }

    /// A fixed interior point: the midpoint of a bounded domain, one unit
    /// inside the finite end of a half-line, or the origin.
    pub fn reference_point(&self) -> f64 {
        match (self.a.is_finite(), self.b.is_finite()) {
            (true, true) => 0.5 * (self.a + self.b),
            (true, false) => self.a + 1.0,
            (false, true) => self.b - 1.0,
            (false, false) => 0.0,
        }
    }

    /// `n` equally spaced points strictly inside the window.
    pub fn interior_points(&self, n: usize) -> Vec<f64> {
        let (lo, hi) = self.window();
        (1..=n)
            .map(|i| lo + (hi - lo) * i as f64 / (n + 1) as f64)
            .collect()
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.a, self.b)
    }
}

/// Drift, noise coefficient and spatial domain.
#[derive(Debug, Clone)]
pub struct ItoEquation {
    pub f: Expr,
    pub sigma: Expr,
    pub domain: Domain,
    pub autonomous: bool,
}

impl ItoEquation {
    /// Validate and build. The noise coefficient must not vanish or change
    /// sign on the sampled domain; neither coefficient may depend on `w`.
    pub fn new(f: Expr, sigma: Expr, domain: Domain) -> Result<Self> {
        if f.depends_on(Var::W) || sigma.depends_on(Var::W) {
            return Err(Error::invalid("coefficients may not depend on w"));
        }
        check_nonvanishing(&sigma, &domain, "sigma")?;
        let bx = domain.sample_box();
        let autonomous = !f.depends_on(Var::T) && !sigma.depends_on(Var::T)
            || (is_identically_zero_on(&f.diff(Var::T), &bx)?
                && is_identically_zero_on(&sigma.diff(Var::T), &bx)?);
        Ok(Self {
            f,
            sigma,
            domain,
            autonomous,
        })
    }

    /// Unit-noise equation.
    pub fn unit(f: Expr, domain: Domain) -> Result<Self> {
        Self::new(f, Expr::one(), domain)
    }

    pub fn has_unit_noise(&self) -> bool {
        self.sigma.is_const_value(1.0)
    }
}

/// Fail if `e` is zero or changes sign anywhere on the sample set.
pub(crate) fn check_nonvanishing(e: &Expr, domain: &Domain, what: &str) -> Result<()> {
    let (lo, hi) = domain.window();
    let xs = chebyshev_nodes(lo, hi, 64);
    let ts = [0.0, 0.25, 0.5, 0.75, 1.0];
    let mut sign = 0.0;
    for &t in &ts {
        for &x in &xs {
            let v = match e.eval(&Bindings::at(x, t, 0.0)) {
                Ok(v) => v,
                Err(_) => continue,
            };
            if v == 0.0 {
                return Err(Error::domain(format!(
                    "{what} vanishes at x = {x}, t = {t}"
                )));
            }
            if sign != 0.0 && v.signum() != sign {
                return Err(Error::domain(format!(
                    "{what} changes sign on the domain (near x = {x}, t = {t})"
                )));
            }
            sign = v.signum();
        }
    }
    if sign == 0.0 {
        return Err(Error::domain(format!(
            "{what} cannot be evaluated on the domain"
        )));
    }
    Ok(())
}

/// Monotone change of variable `ξ = ξ(x,t)` with its inverse.
#[derive(Debug, Clone)]
pub struct Transform {
    /// `ξ` as an expression in `x` and `t`.
    pub forward: Expr,
    /// `x` as an expression in `t` and the variable `x`, which here stands
    /// for `ξ`.
    pub inverse: Expr,
    pub x_ref: f64,
}

impl Transform {
    pub fn identity() -> Self {
        Self {
            forward: Expr::x(),
            inverse: Expr::x(),
            x_ref: 0.0,
        }
    }

    pub fn apply(&self, x: f64, t: f64) -> Result<f64> {
        Ok(self.forward.eval(&Bindings::xt(x, t))?)
    }

    pub fn invert(&self, xi: f64, t: f64) -> Result<f64> {
        Ok(self.inverse.eval(&Bindings::xt(xi, t))?)
    }

    /// `(x, ξ)` pairs on `n` interior points of the domain at time `t`.
    pub fn table(&self, domain: &Domain, n: usize, t: f64) -> Result<Vec<(f64, f64)>> {
        domain
            .interior_points(n)
            .into_iter()
            .map(|x| Ok((x, self.apply(x, t)?)))
            .collect()
    }
}

/// Reduce to unit noise by `ξ = ∫ dx / σ`.
///
/// Constant `σ` gives `ξ = x/σ`. Otherwise the primitive is computed by
/// quadrature from the domain's reference point and inverted numerically.
/// Time-dependent `σ` is accepted only when it factors as `a(t) s(x)`.
/// The new drift is `Φ = ξ_t + f/σ − ½ σ_x` re-expressed in `ξ`.
pub fn normalize_noise(eq: &ItoEquation) -> Result<(ItoEquation, Transform)> {
    let sigma = &eq.sigma;
    let x_ref = eq.domain.reference_point();
    if let Some(c) = sigma.as_const() {
        let forward = Expr::x() / c;
        let inverse = c * Expr::x();
        let phi = (eq.f.clone() / c).substitute(Var::X, &inverse);
        let (lo, hi) = if c > 0.0 {
            (eq.domain.a / c, eq.domain.b / c)
        } else {
            (eq.domain.b / c, eq.domain.a / c)
        };
        let out = ItoEquation::new(phi, Expr::one(), Domain::new(lo, hi)?)?;
        return Ok((
            out,
            Transform {
                forward,
                inverse,
                x_ref: 0.0,
            },
        ));
    }
    if sigma.depends_on(Var::T) {
        let ratio = sigma.diff(Var::T) / sigma;
        let separable = is_identically_zero_on(&ratio.diff(Var::X), &eq.domain.sample_box())
            .map_err(|_| Error::domain("noise coefficient not evaluable on the domain"))?;
        if !separable {
            return Err(Error::Unsupported(
                "time-dependent noise must factor as a(t)*s(x)".into(),
            ));
        }
    }
    let forward = Integral::primitive(Expr::one() / sigma, Var::X, x_ref);
    let inverse = Inverse::expr(
        forward.clone(),
        Var::X,
        Expr::x(),
        (eq.domain.a, eq.domain.b),
        x_ref,
    );
    let phi_x = forward.diff(Var::T) + &eq.f / sigma - 0.5 * sigma.diff(Var::X);
    let phi = phi_x.substitute(Var::X, &inverse);

    let image = |end: f64, left: bool| -> f64 {
        let fallback = {
            let s = sigma
                .eval(&Bindings::xt(x_ref, 0.0))
                .unwrap_or(1.0)
                .signum();
            if left == (s > 0.0) {
                f64::NEG_INFINITY
            } else {
                f64::INFINITY
            }
        };
        if !end.is_finite() {
            return fallback;
        }
        forward.eval(&Bindings::xt(end, 0.0)).unwrap_or(fallback)
    };
    let (ia, ib) = (image(eq.domain.a, true), image(eq.domain.b, false));
    let (lo, hi) = if ia < ib { (ia, ib) } else { (ib, ia) };
    let out = ItoEquation::new(phi, Expr::one(), Domain::new(lo, hi)?)?;
    Ok((
        out,
        Transform {
            forward,
            inverse,
            x_ref,
        },
    ))
}

/// `Δφ = φ_ww + 2σ φ_xw + σ² φ_xx`.
pub fn ito_laplacian(phi: &Expr, sigma: &Expr) -> Expr {
    let phi_x = phi.diff(Var::X);
    phi.diff_n(Var::W, 2) + 2.0 * sigma * phi_x.diff(Var::W) + sigma.square() * phi_x.diff(Var::X)
}

/// The two determining expressions for `X = φ ∂x`:
/// `φ_t + f φ_x − φ f_x + ½ Δφ` and `φ_w + σ φ_x − φ σ_x`.
pub fn determining_equations(eq: &ItoEquation, phi: &Expr) -> (Expr, Expr) {
    let phi_x = phi.diff(Var::X);
    let r1 = phi.diff(Var::T) + &eq.f * &phi_x - phi * eq.f.diff(Var::X)
        + 0.5 * ito_laplacian(phi, &eq.sigma);
    let r2 = phi.diff(Var::W) + &eq.sigma * &phi_x - phi * eq.sigma.diff(Var::X);
    (r1, r2)
}

/// Tensor grid on which determining residuals are evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualGrid {
    pub x: Vec<f64>,
    pub t: Vec<f64>,
    pub w: Vec<f64>,
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

impl ResidualGrid {
    /// 11 × 11 × 11 points: interior of the domain window, `t ∈ [0,1]`,
    /// `w ∈ [-2,2]`.
    pub fn default_for(domain: &Domain) -> Self {
        Self::sized(domain, 11)
    }

    pub fn sized(domain: &Domain, n: usize) -> Self {
        Self {
            x: domain.interior_points(n),
            t: linspace(0.0, 1.0, n),
            w: linspace(-2.0, 2.0, n),
        }
    }

    pub fn with_t(mut self, lo: f64, hi: f64) -> Self {
        self.t = linspace(lo, hi, self.t.len());
        self
    }

    pub fn points(&self) -> impl Iterator<Item = Bindings> + '_ {
        self.x.iter().flat_map(move |&x| {
            self.t
                .iter()
                .flat_map(move |&t| self.w.iter().map(move |&w| Bindings::at(x, t, w)))
        })
    }
}

/// Sup-norm residuals of the determining equations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Residuals {
    pub r1: f64,
    pub r2: f64,
    /// Largest intermediate magnitude seen while evaluating.
    pub scale: f64,
}

impl Residuals {
    pub const TOL: f64 = 1e-8;

    pub fn accepted(&self) -> bool {
        let tol = Self::TOL * (1.0 + self.scale);
        self.r1 < tol && self.r2 < tol
    }
}

/// Maximum of `|r|` over the grid along with the largest sub-term magnitude.
pub(crate) fn sup_norm<'a>(
    r: &Expr,
    points: impl Iterator<Item = Bindings> + 'a,
) -> Result<(f64, f64)> {
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    for b in points {
        let (v, s) = r.eval_with_scale(&b).map_err(|e| {
            Error::domain(format!(
                "residual grid touches a singular point ({:?}, {:?}, {:?}): {e}",
                b.x, b.t, b.w
            ))
        })?;
        worst = worst.max(v.abs());
        scale = scale.max(s);
    }
    Ok((worst, scale))
}

/// Evaluate both determining residuals for `φ` on the grid.
pub fn symmetry_residuals(eq: &ItoEquation, phi: &Expr, grid: &ResidualGrid) -> Result<Residuals> {
    let (e1, e2) = determining_equations(eq, phi);
    let (r1, s1) = sup_norm(&e1, grid.points())?;
    let (r2, s2) = sup_norm(&e2, grid.points())?;
    Ok(Residuals {
        r1,
        r2,
        scale: s1.max(s2),
    })
}

fn one() -> String {
    "1".to_string()
}

/// On-disk equation document. A `null` domain end means infinite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquationFile {
    pub drift: String,
    #[serde(default = "one")]
    pub sigma: String,
    #[serde(default)]
    pub domain: Option<[Option<f64>; 2]>,
}

impl EquationFile {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::invalid(format!("equation file: {e}")))
    }

    pub fn load(path: &Path) -> std::io::Result<String> {
        std::fs::read_to_string(path)
    }

    pub fn domain(&self) -> Result<Domain> {
        match self.domain {
            None => Ok(Domain::real_line()),
            Some([a, b]) => Domain::new(a.unwrap_or(f64::NEG_INFINITY), b.unwrap_or(f64::INFINITY)),
        }
    }

    pub fn to_equation(&self) -> Result<ItoEquation> {
        let f = crate::expr::parse(&self.drift)?;
        let sigma = crate::expr::parse(&self.sigma)?;
        ItoEquation::new(f, sigma, self.domain()?)
    }

    pub fn from_equation(eq: &ItoEquation) -> Self {
        let end = |v: f64| v.is_finite().then_some(v);
        Self {
            drift: eq.f.to_string(),
            sigma: eq.sigma.to_string(),
            domain: Some([end(eq.domain.a), end(eq.domain.b)]),
        }
    }
}
