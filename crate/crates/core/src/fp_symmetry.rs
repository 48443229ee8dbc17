//! Lie-point symmetries of the Fokker–Planck equation
//! `u_t + (f u)_x − ½ u_xx = 0`.
//!
//! Every symmetry has the form `X = τ(t) ∂t + ξ(x,t) ∂x + φ1(x,t) u ∂u`
//! (plus the superposition fields `ζ ∂u`). For an autonomous drift the
//! nontrivial algebra is 4-, 2- or 0-dimensional, decided by
//! `γ = −½ (f² + f_x)_x`:
//!
//! - case I: `γ_xx ≡ 0`, equivalently `f' + f² = μ0 + μ1 x + μ2 x²`;
//! - case II: `(γ_x + ν1)(x + ν0) + 3γ ≡ 0` for constants `ν0, ν1`;
//! - case III: neither.
//!
//! Writing `ξ = ½ x τ' + χ(t)` and `φ1 = −x χ' + χ f + ½ x f τ' − ¼ x² τ'' + g(t)`
//! reduces the determining system to ODEs for `τ`, `χ` and `g`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::expr::{chebyshev_nodes, is_identically_zero_on, parse, Bindings, Expr, Var};
use crate::fokker_planck::FpEquation;
use crate::ito::{sup_norm, Domain};
use crate::numeric::{least_squares, solve_dense};
use crate::{Error, Result};

/// Symmetry generator `τ ∂t + ξ ∂x + φ1 u ∂u`.
#[derive(Debug, Clone)]
pub struct VectorField {
    pub tau: Expr,
    pub xi: Expr,
    pub phi1: Expr,
    pub label: String,
}

impl VectorField {
    pub fn new(tau: Expr, xi: Expr, phi1: Expr) -> Self {
        Self {
            tau,
            xi,
            phi1,
            label: String::new(),
        }
    }

    #[must_use]
    pub fn labelled(mut self, label: &str) -> Self {
        self.label = label.to_string();
        self
    }

    /// `∂t`, present for autonomous equations.
    pub fn z0() -> Self {
        Self::new(Expr::one(), Expr::zero(), Expr::zero()).labelled("Z0")
    }

    /// `u ∂u`, from linearity.
    pub fn z1() -> Self {
        Self::new(Expr::zero(), Expr::zero(), Expr::one()).labelled("Z1")
    }

    /// `a X + b Y`.
    pub fn combine(a: f64, x: &VectorField, b: f64, y: &VectorField) -> Self {
        Self::new(
            a * &x.tau + b * &y.tau,
            a * &x.xi + b * &y.xi,
            a * &x.phi1 + b * &y.phi1,
        )
    }

    /// Build from the reduced data `(τ, χ, g)` and the drift.
    pub fn from_reduced(tau: &Expr, chi: &Expr, g: &Expr, f: &Expr) -> Self {
        let x = Expr::x();
        let tau1 = tau.diff(Var::T);
        let tau2 = tau1.diff(Var::T);
        let xi = 0.5 * &x * &tau1 + chi;
        let phi1 = -(&x * chi.diff(Var::T)) + chi * f + 0.5 * &x * f * &tau1
            - 0.25 * x.square() * &tau2
            + g;
        Self::new(tau.clone(), xi, phi1)
    }

    pub fn to_file(&self) -> VectorFieldFile {
        VectorFieldFile {
            tau: self.tau.to_string(),
            xi: self.xi.to_string(),
            phi1: self.phi1.to_string(),
        }
    }
}

impl fmt::Display for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.label.is_empty() {
            write!(f, "{} = ", self.label)?;
        }
        write!(
            f,
            "({}) dt + ({}) dx + ({}) u du",
            self.tau, self.xi, self.phi1
        )
    }
}

/// On-disk vector field: three expression strings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VectorFieldFile {
    #[serde(default = "zero_str")]
    pub tau: String,
    #[serde(default = "zero_str")]
    pub xi: String,
    #[serde(default = "zero_str")]
    pub phi1: String,
}

fn zero_str() -> String {
    "0".into()
}

impl VectorFieldFile {
    pub fn to_field(&self) -> Result<VectorField> {
        Ok(VectorField::new(
            parse(&self.tau)?,
            parse(&self.xi)?,
            parse(&self.phi1)?,
        ))
    }
}

/// `γ = −½ (f² + σ² f_x)_x`.
pub fn gamma(f: &Expr, sigma: &Expr) -> Expr {
    -0.5 * (f.square() + sigma.square() * f.diff(Var::X)).diff(Var::X)
}

/// Parameters of case II: `γ = c − b/(x+ν0)³ − ¼ ν1 x` and
/// `f' + f² = −2cx − b/(x+ν0)² + ¼ ν1 x² + ζ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CaseIIParams {
    pub nu0: f64,
    pub nu1: f64,
    pub b: f64,
    pub c: f64,
    pub zeta: f64,
}

impl CaseIIParams {
    /// `ρ = ν0² ν1 / 4 − ζ`.
    pub fn rho(&self) -> f64 {
        self.nu0 * self.nu0 * self.nu1 / 4.0 - self.zeta
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FpCase {
    CaseI { mu: [f64; 3] },
    CaseII(CaseIIParams),
    CaseIII,
}

impl FpCase {
    pub fn name(&self) -> &'static str {
        match self {
            FpCase::CaseI { .. } => "CaseI",
            FpCase::CaseII(_) => "CaseII",
            FpCase::CaseIII => "CaseIII",
        }
    }

    /// Dimension of the nontrivial algebra.
    pub fn count(&self) -> usize {
        match self {
            FpCase::CaseI { .. } => 4,
            FpCase::CaseII(_) => 2,
            FpCase::CaseIII => 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FpClass {
    pub case: FpCase,
    pub gamma: Expr,
    pub fields: Vec<VectorField>,
}

/// Grid for determining residuals: interior `x` nodes and `t ∈ [0,1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FpGrid {
    pub x: Vec<f64>,
    pub t: Vec<f64>,
}

impl FpGrid {
    pub fn default_for(domain: &Domain) -> Self {
        Self {
            x: domain.interior_points(21),
            t: (0..11).map(|i| i as f64 / 10.0).collect(),
        }
    }

    fn points(&self) -> impl Iterator<Item = Bindings> + '_ {
        self.x
            .iter()
            .flat_map(move |&x| self.t.iter().map(move |&t| Bindings::xt(x, t)))
    }
}

/// The three determining expressions for a candidate field, for unit noise
/// and a drift that may depend on `t`.
pub fn determining_expressions(f: &Expr, x: &VectorField) -> [Expr; 3] {
    let tau1 = x.tau.diff(Var::T);
    let f_x = f.diff(Var::X);
    let f_t = f.diff(Var::T);
    let p = &x.phi1;
    let p_x = p.diff(Var::X);
    let r1 = x.xi.diff(Var::X) - 0.5 * &tau1;
    let r2 = &p_x + x.xi.diff(Var::T) - 0.5 * &tau1 * f - &x.tau * &f_t - &x.xi * &f_x;
    let r3 = p.diff(Var::T) - 0.5 * p_x.diff(Var::X)
        + f * &p_x
        + &x.tau * f_x.diff(Var::T)
        + &x.xi * f_x.diff(Var::X)
        + &tau1 * &f_x;
    [r1, r2, r3]
}

/// Largest sup-norm over the grid of the three determining residuals.
pub fn fp_determining_residual(fpe: &FpEquation, x: &VectorField, grid: &FpGrid) -> Result<f64> {
    if !fpe.sigma.is_const_value(1.0) {
        return Err(Error::invalid(
            "determining residuals need unit noise; normalize first",
        ));
    }
    if x.tau.depends_on(Var::X) || x.tau.depends_on(Var::W) {
        return Err(Error::invalid("tau must depend on t alone"));
    }
    let mut worst = 0.0f64;
    for r in determining_expressions(&fpe.f, x) {
        worst = worst.max(sup_norm(&r, grid.points())?.0);
    }
    Ok(worst)
}

fn sample_x(domain: &Domain, n: usize) -> Vec<f64> {
    let (lo, hi) = domain.window();
    chebyshev_nodes(lo, hi, n)
}

/// `(f' + f²)(x)` for the Riccati checks.
fn riccati(f: &Expr) -> Expr {
    f.diff(Var::X) + f.square()
}

fn fit_quadratic(f: &Expr, domain: &Domain) -> Result<[f64; 3]> {
    let p = riccati(f);
    let xs = sample_x(domain, 64);
    let usable: Vec<(f64, f64)> = xs
        .iter()
        .filter_map(|&x| p.eval(&Bindings::x(x)).ok().map(|v| (x, v)))
        .collect();
    if usable.len() < 3 {
        return Err(crate::IdentityError::Indeterminate(p.to_string()).into());
    }
    let n = usable.len();
    let pick = [usable[n / 8], usable[n / 2], usable[n - 1 - n / 8]];
    let rows = pick.iter().map(|(x, _)| vec![1.0, *x, x * x]).collect();
    let rhs = pick.iter().map(|(_, v)| *v).collect();
    let m = solve_dense(rows, rhs)?;
    Ok([m[0], m[1], m[2]])
}

fn check_quadratic(f: &Expr, mu: [f64; 3], domain: &Domain) -> Result<f64> {
    let p = riccati(f);
    let mut worst = 0.0f64;
    let mut seen = 0;
    for x in sample_x(domain, 64) {
        let Ok((v, scale)) = p.eval_with_scale(&Bindings::x(x)) else {
            continue;
        };
        seen += 1;
        let q = mu[0] + mu[1] * x + mu[2] * x * x;
        worst = worst.max((v - q).abs() / (1.0 + scale.max(q.abs())));
    }
    if seen == 0 {
        return Err(crate::IdentityError::Indeterminate(p.to_string()).into());
    }
    Ok(worst)
}

/// Solve `(γ_x + ν1)(x + ν0) + 3γ ≡ 0` for `(ν0, ν1)`.
///
/// The relation is linear in `(ν0, ν1, μ)` with `μ = ν0 ν1`; three sample
/// points determine it and the remaining points validate it.
pub fn solve_g_constants(gamma: &Expr, domain: &Domain) -> Result<Option<(f64, f64)>> {
    let gx = gamma.diff(Var::X);
    let x = Expr::x();
    let lhs = &x * &gx + 3.0 * gamma;
    let (lo, hi) = domain.window();
    let mut solution = None;
    for attempt in 0..5 {
        // spread the three points and shift them on each retry
        let shift = 0.07 * attempt as f64;
        let pts: Vec<f64> = [0.15 + shift, 0.5 + 0.5 * shift, 0.85 - shift]
            .iter()
            .map(|s| lo + (hi - lo) * s)
            .collect();
        let mut rows = Vec::new();
        let mut rhs = Vec::new();
        let mut ok = true;
        for &p in &pts {
            match (gx.eval(&Bindings::x(p)), lhs.eval(&Bindings::x(p))) {
                (Ok(g), Ok(l)) => {
                    rows.push(vec![g, p, 1.0]);
                    rhs.push(-l);
                }
                _ => ok = false,
            }
        }
        if !ok {
            continue;
        }
        if let Ok(s) = solve_dense(rows, rhs) {
            solution = Some(s);
            break;
        }
    }
    let Some(s) = solution else {
        return Err(crate::IdentityError::Indeterminate(format!(
            "G-constant system for {gamma} is singular"
        ))
        .into());
    };
    let (nu0, nu1, mu) = (s[0], s[1], s[2]);
    if (mu - nu0 * nu1).abs() >= 1e-7 * (1.0 + (nu0 * nu1).abs()) {
        return Ok(None);
    }
    let g = (&gx + nu1) * (&x + nu0) + 3.0 * gamma;
    for p in sample_x(domain, 64) {
        let Ok((v, scale)) = g.eval_with_scale(&Bindings::x(p)) else {
            continue;
        };
        if v.abs() >= 1e-7 * (1.0 + scale) {
            return Ok(None);
        }
    }
    Ok(Some((nu0, nu1)))
}

/// Fit `γ ≈ c − b/(x+ν0)³ − ¼ ν1 x` by Gauss–Newton from the given seed,
/// then recover `ζ` from the Riccati relation.
fn fit_case_ii(
    f: &Expr,
    gamma: &Expr,
    seed: (f64, f64),
    domain: &Domain,
) -> Result<Option<CaseIIParams>> {
    let data: Vec<(f64, f64, f64)> = sample_x(domain, 64)
        .into_iter()
        .filter_map(|x| {
            gamma
                .eval_with_scale(&Bindings::x(x))
                .ok()
                .map(|(g, s)| (x, g, s))
        })
        .collect();
    if data.len() < 8 {
        return Err(crate::IdentityError::Indeterminate(gamma.to_string()).into());
    }
    let (mut nu0, mut nu1) = seed;
    // linear seed for (c, b)
    let rows: Vec<Vec<f64>> = data
        .iter()
        .map(|(x, _, _)| vec![1.0, -1.0 / (x + nu0).powi(3)])
        .collect();
    let rhs: Vec<f64> = data.iter().map(|(x, g, _)| g + 0.25 * nu1 * x).collect();
    let cb = least_squares(&rows, &rhs)?;
    let (mut c, mut b) = (cb[0], cb[1]);
    let model =
        |x: f64, c: f64, b: f64, nu0: f64, nu1: f64| c - b / (x + nu0).powi(3) - 0.25 * nu1 * x;
    for _ in 0..30 {
        let mut jac = Vec::with_capacity(data.len());
        let mut res = Vec::with_capacity(data.len());
        for &(x, g, _) in &data {
            let y = x + nu0;
            jac.push(vec![1.0, -1.0 / y.powi(3), 3.0 * b / y.powi(4), -0.25 * x]);
            res.push(g - model(x, c, b, nu0, nu1));
        }
        let Ok(step) = least_squares(&jac, &res) else {
            break;
        };
        c += step[0];
        b += step[1];
        nu0 += step[2];
        nu1 += step[3];
        if step.iter().all(|s| s.abs() < 1e-15) {
            break;
        }
    }
    for &(x, g, s) in &data {
        if (g - model(x, c, b, nu0, nu1)).abs() >= 1e-7 * (1.0 + s) {
            return Ok(None);
        }
    }
    let p = riccati(f);
    let mut zetas = Vec::new();
    for &(x, _, _) in &data {
        if let Ok((v, s)) = p.eval_with_scale(&Bindings::x(x)) {
            let z = v + 2.0 * c * x + b / (x + nu0).powi(2) - 0.25 * nu1 * x * x;
            zetas.push((z, s));
        }
    }
    let zeta = zetas.iter().map(|(z, _)| z).sum::<f64>() / zetas.len() as f64;
    if zetas
        .iter()
        .any(|(z, s)| (z - zeta).abs() >= 1e-7 * (1.0 + s))
    {
        return Ok(None);
    }
    Ok(Some(CaseIIParams {
        nu0,
        nu1,
        b,
        c,
        zeta,
    }))
}

/// Decide the case for a unit-noise autonomous equation and construct its
/// nontrivial fields.
pub fn classify_fp(fpe: &FpEquation) -> Result<FpClass> {
    if !fpe.sigma.is_const_value(1.0) {
        return Err(Error::invalid(
            "classification needs unit noise; normalize first",
        ));
    }
    if fpe.f.depends_on(Var::T) {
        return Err(Error::invalid("classification needs an autonomous drift"));
    }
    let f = &fpe.f;
    let domain = &fpe.domain;
    let g = gamma(f, &Expr::one());
    let g_xx = g.diff_n(Var::X, 2);
    if is_identically_zero_on(&g_xx, &domain.sample_box())? {
        let mu = fit_quadratic(f, domain)?;
        let fields = case_i_vector_fields(mu, f, domain)?;
        return Ok(FpClass {
            case: FpCase::CaseI { mu },
            gamma: g,
            fields,
        });
    }
    if let Some(seed) = solve_g_constants(&g, domain)? {
        if let Some(params) = fit_case_ii(f, &g, seed, domain)? {
            let fields = case_ii_vector_fields(&params, f)?;
            return Ok(FpClass {
                case: FpCase::CaseII(params),
                gamma: g,
                fields,
            });
        }
    }
    Ok(FpClass {
        case: FpCase::CaseIII,
        gamma: g,
        fields: Vec::new(),
    })
}

/// The quadratic `√μ2 x² + (μ1/√μ2) x + μ0/(2√μ2) + μ1²/(8 μ2 √μ2)` that
/// appears in the case-I fields for `μ2 > 0`.
pub fn case_i_zeta_quadratic(mu: [f64; 3]) -> Expr {
    let [m0, m1, m2] = mu;
    let s = m2.sqrt();
    s * Expr::x().square() + (m1 / s) * Expr::x() + (m0 / (2.0 * s) + m1 * m1 / (8.0 * m2 * s))
}

/// The four case-I fields for `f' + f² = μ0 + μ1 x + μ2 x²`.
pub fn case_i_vector_fields(mu: [f64; 3], f: &Expr, domain: &Domain) -> Result<Vec<VectorField>> {
    let worst = check_quadratic(f, mu, domain)?;
    if worst >= 1e-7 {
        return Err(Error::invalid(format!(
            "f' + f^2 is not {} + {} x + {} x^2 (relative residual {worst:.3e})",
            mu[0], mu[1], mu[2]
        )));
    }
    let [m0, m1, m2] = mu;
    let t = Expr::t();
    let x = Expr::x();
    if m2 > 0.0 {
        let s = m2.sqrt();
        let shift = m1 / (2.0 * m2);
        let zq = case_i_zeta_quadratic(mu);
        let up2 = Expr::exp(2.0 * s * &t);
        let dn2 = Expr::exp(-2.0 * s * &t);
        let up = Expr::exp(s * &t);
        let dn = Expr::exp(-s * &t);
        let xs = &x + shift;
        return Ok(vec![
            VectorField::new(
                &up2 / (2.0 * s),
                0.5 * &xs * &up2,
                0.5 * &up2 * (f * &xs - &zq - 0.5),
            )
            .labelled("X1"),
            VectorField::new(
                -(&dn2 / (2.0 * s)),
                0.5 * &xs * &dn2,
                0.5 * &dn2 * (f * &xs + &zq - 0.5),
            )
            .labelled("X2"),
            VectorField::new(Expr::zero(), up.clone(), &up * (f - s * &xs)).labelled("X3"),
            VectorField::new(Expr::zero(), dn.clone(), &dn * (f + s * &xs)).labelled("X4"),
        ]);
    }
    let fields = if m2 == 0.0 {
        let t2 = t.square();
        let t3 = &t2 * &t;
        vec![
            (
                t.clone(),
                0.375 * m1 * &t2,
                -(m1 * m1 / 16.0) * &t3 - 0.5 * m0 * &t,
            ),
            (
                0.5 * &t2,
                0.125 * m1 * &t3,
                -(m1 * m1 / 64.0) * &t3 * &t - 0.25 * &t - 0.25 * m0 * &t2,
            ),
            (Expr::zero(), Expr::one(), -0.5 * m1 * &t),
            (Expr::zero(), t.clone(), -0.25 * m1 * &t2),
        ]
    } else {
        let w = (-m2).sqrt();
        let a = m1 / (4.0 * m2);
        let reduced = |tau: Expr| {
            let chi = a * tau.diff(Var::T);
            let g = -(0.5 * m1 * a + 0.5 * m0) * &tau - 0.25 * tau.diff(Var::T);
            (tau, chi, g)
        };
        vec![
            reduced(Expr::sin(2.0 * w * &t) / (2.0 * w)),
            reduced(-(Expr::cos(2.0 * w * &t) / (2.0 * w))),
            (
                Expr::zero(),
                Expr::cos(w * &t),
                -(0.5 * m1 / w) * Expr::sin(w * &t),
            ),
            (
                Expr::zero(),
                Expr::sin(w * &t),
                (0.5 * m1 / w) * Expr::cos(w * &t),
            ),
        ]
    };
    Ok(fields
        .into_iter()
        .enumerate()
        .map(|(i, (tau, chi, g))| {
            VectorField::from_reduced(&tau, &chi, &g, f).labelled(&format!("X{}", i + 1))
        })
        .collect())
}

/// The two case-II fields. Fails when `c ≠ −¼ ν0 ν1`.
pub fn case_ii_vector_fields(p: &CaseIIParams, f: &Expr) -> Result<Vec<VectorField>> {
    let want = -0.25 * p.nu0 * p.nu1;
    if (p.c - want).abs() > 1e-9 * (1.0 + want.abs()) {
        return Err(Error::invalid(format!(
            "case II constraint violated: c = {} but -nu0*nu1/4 = {want}",
            p.c
        )));
    }
    let t = Expr::t();
    let x = Expr::x();
    let xs = &x + p.nu0;
    if p.nu1 > 0.0 {
        let s = p.nu1.sqrt();
        let rho = p.rho();
        let up = Expr::exp(s * &t);
        let dn = Expr::exp(-s * &t);
        return Ok(vec![
            VectorField::new(
                &up / s,
                0.5 * &xs * &up,
                0.5 * &up * (f * &xs - (s / 2.0) * xs.square() + (rho / s - 0.5)),
            )
            .labelled("X1"),
            VectorField::new(
                -(&dn / s),
                0.5 * &xs * &dn,
                0.5 * &dn * (f * &xs + (s / 2.0) * xs.square() - (rho / s + 0.5)),
            )
            .labelled("X2"),
        ]);
    }
    let taus = if p.nu1 == 0.0 {
        vec![t.clone(), 0.5 * t.square()]
    } else {
        let w = (-p.nu1).sqrt();
        vec![Expr::sin(w * &t) / w, -(Expr::cos(w * &t) / w)]
    };
    let k = 0.125 * p.nu0 * p.nu0 * p.nu1 + 0.5 * p.zeta;
    Ok(taus
        .into_iter()
        .enumerate()
        .map(|(i, tau)| {
            let tau1 = tau.diff(Var::T);
            let chi = 0.5 * p.nu0 * &tau1;
            let g = -k * &tau - 0.25 * &tau1;
            VectorField::from_reduced(&tau, &chi, &g, f).labelled(&format!("X{}", i + 1))
        })
        .collect())
}
