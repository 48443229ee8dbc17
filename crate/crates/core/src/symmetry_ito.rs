//! Classification of unit-noise scalar Ito equations by their standard
//! symmetries.
//!
//! An equation `dx = f dt + dw` has a time-preserving symmetry exactly when
//! the drift takes one of three shapes:
//!
//! - type A: `f = h(t)`, generator `φ = P(x − w − H(t))` with `H' = h`;
//! - type B: `f = h(t) + k(t) x`, generator `φ = e^{K(t)}` with `K' = k`;
//! - type C: `f = h(t) + k(t) e^{βx}`, generator `φ = e^{β(x − w − H(t))}`.
//!
//! Types A (with non-constant `P`) and C are random symmetries: the
//! generator depends on the Wiener value `w`.

use std::fmt;

use serde::Serialize;

use crate::expr::native::Integral;
use crate::expr::{chebyshev_nodes, is_identically_zero_on, Bindings, Expr, SampleBox, Var};
use crate::fp_symmetry::VectorField;
use crate::ito::{symmetry_residuals, Domain, ItoEquation, ResidualGrid, Residuals};
use crate::{Error, Result};

/// Relative tolerance for the constancy of `f''/f'` and of `f − k e^{βx}`.
pub const BETA_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum SymmetryKind {
    TypeA,
    TypeB,
    TypeC,
    NoSymmetry,
}

impl fmt::Display for SymmetryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SymmetryKind::TypeA => "TypeA",
            SymmetryKind::TypeB => "TypeB",
            SymmetryKind::TypeC => "TypeC",
            SymmetryKind::NoSymmetry => "NoSymmetry",
        };
        f.write_str(s)
    }
}

/// Outcome of a classification.
#[derive(Debug, Clone)]
pub struct SymmetryClass {
    pub kind: SymmetryKind,
    /// `h(t)`; a constant for autonomous drifts.
    pub h: Option<Expr>,
    /// `k(t)`; a constant for autonomous drifts.
    pub k: Option<Expr>,
    pub beta: Option<f64>,
    /// The emitted generator `φ(x,t,w)`; for type A the representative
    /// `P ≡ 1`.
    pub generator: Option<Expr>,
    pub random: bool,
    /// Determining residuals of `generator` on the default grid.
    pub residuals: Option<Residuals>,
    pub notes: Vec<String>,
}

impl SymmetryClass {
    fn none() -> Self {
        Self {
            kind: SymmetryKind::NoSymmetry,
            h: None,
            k: None,
            beta: None,
            generator: None,
            random: false,
            residuals: None,
            notes: Vec::new(),
        }
    }

    pub fn h0(&self) -> Option<f64> {
        self.h.as_ref().and_then(Expr::as_const)
    }

    pub fn k0(&self) -> Option<f64> {
        self.k.as_ref().and_then(Expr::as_const)
    }

    /// `H(t) = ∫_0^t h`.
    pub fn h_primitive(&self) -> Option<Expr> {
        self.h.as_ref().map(primitive_t)
    }

    /// The argument `x − w − H(t)` of the type-A family.
    pub fn case_a_arg(&self) -> Option<Expr> {
        (self.kind == SymmetryKind::TypeA)
            .then(|| Expr::x() - Expr::w() - self.h_primitive().unwrap())
    }

    /// The random type-A representative `P = identity`.
    pub fn random_representative(&self) -> Option<Expr> {
        self.case_a_arg()
    }
}

/// `∫_0^t e dt`, folded when `e` is constant in `t`.
fn primitive_t(e: &Expr) -> Expr {
    Integral::primitive(e.clone(), Var::T, 0.0)
}

fn verify(class: &mut SymmetryClass, f: &Expr, domain: &Domain, tspan: (f64, f64)) -> Result<()> {
    let Some(phi) = &class.generator else {
        return Ok(());
    };
    let eq = ItoEquation::unit(f.clone(), *domain)?;
    let grid = ResidualGrid::default_for(domain).with_t(tspan.0, tspan.1);
    let check = |phi: &Expr| -> Result<Residuals> {
        let r = symmetry_residuals(&eq, phi, &grid)?;
        if !r.accepted() {
            return Err(Error::Verification(format!(
                "generator {phi} of {} leaves residuals ({:.3e}, {:.3e})",
                class.kind, r.r1, r.r2
            )));
        }
        Ok(r)
    };
    let r = check(phi)?;
    if let Some(random) = class.random_representative() {
        check(&random)?;
    }
    class.residuals = Some(r);
    Ok(())
}

/// Sample points `(x, t)` for the parameter fits.
fn fit_points(domain: &Domain, tspan: (f64, f64), with_t: bool) -> Vec<Bindings> {
    let (lo, hi) = domain.window();
    if !with_t {
        return chebyshev_nodes(lo, hi, 64)
            .into_iter()
            .map(|x| Bindings::xt(x, tspan.0))
            .collect();
    }
    let xs = chebyshev_nodes(lo, hi, 8);
    let ts = chebyshev_nodes(tspan.0, tspan.1, 8);
    xs.iter()
        .flat_map(|&x| ts.iter().map(move |&t| Bindings::xt(x, t)))
        .collect()
}

/// Recover `β` with `f_xx = β f_x` and validate it on every sample point.
fn recover_beta(f1: &Expr, f2: &Expr, points: &[Bindings]) -> Result<Option<f64>> {
    let mut best: Option<(f64, Bindings)> = None;
    for b in points {
        if let Ok(v) = f1.eval(b) {
            if best.map_or(true, |(m, _)| v.abs() > m) {
                best = Some((v.abs(), *b));
            }
        }
    }
    let Some((m, at)) = best else {
        return Err(Error::domain(
            "drift derivative not evaluable on the domain",
        ));
    };
    if m == 0.0 {
        return Ok(None);
    }
    let beta = f2.eval(&at)? / f1.eval(&at)?;
    if beta == 0.0 || !beta.is_finite() {
        return Ok(None);
    }
    for b in points {
        let (Ok(a), Ok(c)) = (f1.eval(b), f2.eval(b)) else {
            continue;
        };
        if (c - beta * a).abs() > BETA_TOL * (c.abs() + (beta * a).abs()) + 1e-300 {
            return Ok(None);
        }
    }
    Ok(Some(beta))
}

/// Classify an autonomous unit-noise drift `f(x)`.
pub fn classify_autonomous(f: &Expr, domain: &Domain) -> Result<SymmetryClass> {
    if f.depends_on(Var::T) || f.depends_on(Var::W) {
        return Err(Error::invalid(
            "autonomous classification needs a drift in x alone",
        ));
    }
    let bx = domain.sample_box();
    let x_ref = domain.reference_point();
    let f1 = f.diff(Var::X);
    let mut class = SymmetryClass::none();

    if is_identically_zero_on(&f1, &bx)? {
        let h0 = f.eval(&Bindings::x(x_ref))?;
        class.kind = SymmetryKind::TypeA;
        class.h = Some(Expr::constant(h0));
        class.generator = Some(Expr::one());
        class.notes.push(
            "constant drift is also the k0 = 0 degeneration of types B and C; reported as type A"
                .into(),
        );
    } else {
        let f2 = f1.diff(Var::X);
        if is_identically_zero_on(&f2, &bx)? {
            let k0 = f1.eval(&Bindings::x(x_ref))?;
            let h0 = f.eval(&Bindings::x(x_ref))? - k0 * x_ref;
            class.kind = SymmetryKind::TypeB;
            class.h = Some(Expr::constant(h0));
            class.k = Some(Expr::constant(k0));
            class.generator = Some(Expr::exp(k0 * Expr::t()));
        } else {
            let f3 = f2.diff(Var::X);
            let log_linear = &f2 * &f2 - &f3 * &f1;
            if is_identically_zero_on(&log_linear, &bx)? {
                let pts = fit_points(domain, (0.0, 0.0), false);
                if let Some(beta) = recover_beta(&f1, &f2, &pts)? {
                    if let Some((h0, k0)) = fit_exponential(f, &f1, beta, &pts, x_ref)? {
                        class.kind = SymmetryKind::TypeC;
                        class.h = Some(Expr::constant(h0));
                        class.k = Some(Expr::constant(k0));
                        class.beta = Some(beta);
                        class.generator =
                            Some(Expr::exp(beta * (Expr::x() - Expr::w() - h0 * Expr::t())));
                        class.random = true;
                    }
                }
            }
        }
    }
    verify(&mut class, f, domain, (0.0, 1.0))?;
    Ok(class)
}

/// Given `β`, recover constant `(h0, k0)` with `f = h0 + k0 e^{βx}`.
fn fit_exponential(
    f: &Expr,
    f1: &Expr,
    beta: f64,
    pts: &[Bindings],
    x_ref: f64,
) -> Result<Option<(f64, f64)>> {
    let at = Bindings::x(x_ref);
    let k0 = f1.eval(&at)? / (beta * (beta * x_ref).exp());
    let h0 = f.eval(&at)? - k0 * (beta * x_ref).exp();
    for b in pts {
        let Ok(v) = f.eval(b) else { continue };
        let e = k0 * (beta * b.x.unwrap()).exp();
        if (v - h0 - e).abs() > BETA_TOL * (1.0 + v.abs() + e.abs()) {
            return Ok(None);
        }
    }
    Ok(Some((h0, k0)))
}

/// Classify a unit-noise drift `f(x,t)` for `t` in `tspan`.
pub fn classify_time_dependent(
    f: &Expr,
    domain: &Domain,
    tspan: (f64, f64),
) -> Result<SymmetryClass> {
    if f.depends_on(Var::W) {
        return Err(Error::invalid("drift may not depend on w"));
    }
    if !(tspan.0 < tspan.1) {
        return Err(Error::invalid(format!("empty time span {tspan:?}")));
    }
    let bx = SampleBox {
        t: tspan,
        ..domain.sample_box()
    };
    let x_ref = domain.reference_point();
    let f1 = f.diff(Var::X);
    let mut class = SymmetryClass::none();

    if is_identically_zero_on(&f1, &bx)? {
        let h = f.fix(Var::X, x_ref);
        class.kind = SymmetryKind::TypeA;
        class.h = Some(h);
        class.generator = Some(Expr::one());
    } else {
        let f2 = f1.diff(Var::X);
        if is_identically_zero_on(&f2, &bx)? {
            let k = f1.fix(Var::X, x_ref);
            let h = (f - &k * Expr::x()).fix(Var::X, x_ref);
            class.kind = SymmetryKind::TypeB;
            class.generator = Some(Expr::exp(primitive_t(&k)));
            class.h = Some(h);
            class.k = Some(k);
        } else {
            let pts = fit_points(domain, tspan, true);
            if let Some(beta) = recover_beta(&f1, &f2, &pts)? {
                let e_ref = (beta * x_ref).exp();
                let k = f1.fix(Var::X, x_ref) / (beta * e_ref);
                let h = f.fix(Var::X, x_ref) - &k * e_ref;
                let rest = f - &h - &k * Expr::exp(beta * Expr::x());
                let mut ok = true;
                for b in &pts {
                    let Ok((v, scale)) = rest.eval_with_scale(b) else {
                        continue;
                    };
                    if v.abs() > BETA_TOL * (1.0 + scale) {
                        ok = false;
                        break;
                    }
                }
                if ok {
                    class.kind = SymmetryKind::TypeC;
                    class.generator =
                        Some(Expr::exp(beta * (Expr::x() - Expr::w() - primitive_t(&h))));
                    class.h = Some(h);
                    class.k = Some(k);
                    class.beta = Some(beta);
                    class.random = true;
                }
            }
        }
    }
    verify(&mut class, f, domain, tspan)?;
    Ok(class)
}

/// Symmetries of the Fokker–Planck equation of a time-dependent type-C
/// drift `h(t) + k(t) e^{βx}`, beyond the superposition fields.
#[derive(Debug, Clone)]
pub enum TdCaseC {
    /// Only `u ∂u`.
    CaseA { fields: Vec<VectorField> },
    /// `h + k'/(βk) = c2` is constant: `∂t − (k'/(βk)) ∂x` and `u ∂u`.
    CaseB { c2: f64, fields: Vec<VectorField> },
}

impl TdCaseC {
    pub fn fields(&self) -> &[VectorField] {
        match self {
            TdCaseC::CaseA { fields } | TdCaseC::CaseB { fields, .. } => fields,
        }
    }
}

/// Decide whether `h + k'/(βk)` is constant on `tspan`.
pub fn td_case_c_fp_constraint(
    h: &Expr,
    k: &Expr,
    beta: f64,
    tspan: (f64, f64),
) -> Result<TdCaseC> {
    if beta == 0.0 {
        return Err(Error::invalid("beta must be nonzero"));
    }
    if h.depends_on(Var::X) || k.depends_on(Var::X) {
        return Err(Error::invalid("h and k must depend on t alone"));
    }
    let mut sign = 0.0;
    for t in chebyshev_nodes(tspan.0, tspan.1, 64) {
        let v = k.eval(&Bindings::t(t))?;
        if v == 0.0 || (sign != 0.0 && v.signum() != sign) {
            return Err(Error::domain(format!("k vanishes near t = {t}")));
        }
        sign = v.signum();
    }
    let drift_shift = k.diff(Var::T) / (beta * k);
    let q = h + &drift_shift;
    let bx = SampleBox {
        x: (0.0, 1.0),
        t: tspan,
        w: (0.0, 1.0),
    };
    if is_identically_zero_on(&q.diff(Var::T), &bx)? {
        let c2 = q.eval(&Bindings::t(0.5 * (tspan.0 + tspan.1)))?;
        let x1 = VectorField::new(Expr::one(), -drift_shift, Expr::zero()).labelled("X1");
        Ok(TdCaseC::CaseB {
            c2,
            fields: vec![x1, VectorField::z1()],
        })
    } else {
        Ok(TdCaseC::CaseA {
            fields: vec![VectorField::z1()],
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn line() -> Domain {
        Domain::real_line()
    }

    #[test]
    fn constant_drift_is_type_a() {
        let c = classify_autonomous(&parse("2").unwrap(), &line()).unwrap();
        assert_eq!(c.kind, SymmetryKind::TypeA);
        assert_eq!(c.h0(), Some(2.0));
        assert_eq!(c.generator.as_ref().unwrap().as_const(), Some(1.0));
        assert!(!c.random);
        let arg = c.case_a_arg().unwrap();
        assert_eq!(arg.eval_at(1.0, 0.5, 0.25).unwrap(), 1.0 - 0.25 - 1.0);
    }

    #[test]
    fn affine_drift_is_type_b() {
        let c = classify_autonomous(&parse("1 + 3*x").unwrap(), &line()).unwrap();
        assert_eq!(c.kind, SymmetryKind::TypeB);
        assert_eq!((c.h0(), c.k0()), (Some(1.0), Some(3.0)));
        let phi = c.generator.unwrap();
        assert!((phi.eval(&Bindings::t(0.5)).unwrap() - 1.5f64.exp()).abs() < 1e-15);
        assert!(!c.random);
    }

    #[test]
    fn exponential_drift_is_type_c() {
        let c = classify_autonomous(&parse("2 + 5*exp(-x)").unwrap(), &line()).unwrap();
        assert_eq!(c.kind, SymmetryKind::TypeC);
        assert!((c.beta.unwrap() + 1.0).abs() < 1e-14);
        assert!((c.h0().unwrap() - 2.0).abs() < 1e-12);
        assert!((c.k0().unwrap() - 5.0).abs() < 1e-12);
        assert!(c.random);
        let phi = c.generator.unwrap();
        let expect = (-(0.3f64 - 0.2 - 2.0 * 0.4)).exp();
        assert!((phi.eval_at(0.3, 0.4, 0.2).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn quadratic_drift_has_no_symmetry() {
        let c = classify_autonomous(&parse("x^2").unwrap(), &line()).unwrap();
        assert_eq!(c.kind, SymmetryKind::NoSymmetry);
        assert!(c.generator.is_none());
    }

    #[test]
    fn near_degenerate_exponential_is_not_type_c() {
        let c =
            classify_autonomous(&parse("2 + 5*exp(0.000000000001*x)").unwrap(), &line()).unwrap();
        assert!(
            matches!(c.kind, SymmetryKind::TypeA | SymmetryKind::TypeB),
            "{:?}",
            c.kind
        );
    }

    #[test]
    fn reparsed_drift_classifies_identically() {
        for src in [
            "2",
            "1 + 3*x",
            "2 + 5*exp(-x)",
            "x^2",
            "1/(x + sqrt(3)) - (x + sqrt(3))",
        ] {
            let f = parse(src).unwrap();
            let dom = Domain::new(-1.0, 3.0).unwrap();
            let a = classify_autonomous(&f, &dom).unwrap();
            let b = classify_autonomous(&parse(&f.to_string()).unwrap(), &dom).unwrap();
            assert_eq!(a.kind, b.kind);
            assert_eq!(a.beta, b.beta);
            assert_eq!(a.h0(), b.h0());
        }
    }

    #[test]
    fn time_dependent_families() {
        let c = classify_time_dependent(&parse("t").unwrap(), &line(), (0.0, 1.0)).unwrap();
        assert_eq!(c.kind, SymmetryKind::TypeA);
        let big_h = c.h_primitive().unwrap();
        assert!((big_h.eval(&Bindings::t(0.8)).unwrap() - 0.32).abs() < 1e-12);

        let c = classify_time_dependent(&parse("t*x").unwrap(), &line(), (0.0, 1.0)).unwrap();
        assert_eq!(c.kind, SymmetryKind::TypeB);
        let phi = c.generator.unwrap();
        assert!((phi.eval(&Bindings::t(0.8)).unwrap() - 0.32f64.exp()).abs() < 1e-12);

        let f = parse("exp(t) + exp(t)*exp(x)").unwrap();
        let c = classify_time_dependent(&f, &line(), (0.0, 1.0)).unwrap();
        assert_eq!(c.kind, SymmetryKind::TypeC);
        assert!((c.beta.unwrap() - 1.0).abs() < 1e-12);
        let big_h = c.h_primitive().unwrap();
        assert!((big_h.eval(&Bindings::t(0.6)).unwrap() - (0.6f64.exp() - 1.0)).abs() < 1e-12);
        let phi = c.generator.unwrap();
        let expect = (0.3f64 - 0.1 - 0.6f64.exp() + 1.0).exp();
        assert!((phi.eval_at(0.3, 0.6, 0.1).unwrap() - expect).abs() < 1e-11);
        assert!(c.residuals.unwrap().accepted());

        let c = classify_time_dependent(&parse("t*x^2").unwrap(), &line(), (0.0, 1.0)).unwrap();
        assert_eq!(c.kind, SymmetryKind::NoSymmetry);
    }

    #[test]
    fn fp_constraint_cases() {
        let k = parse("exp(t)").unwrap();
        match td_case_c_fp_constraint(&Expr::constant(2.0), &k, 1.0, (0.0, 1.0)).unwrap() {
            TdCaseC::CaseB { c2, fields } => {
                assert!((c2 - 3.0).abs() < 1e-12);
                assert_eq!(fields.len(), 2);
                assert!((fields[0].xi.eval(&Bindings::t(0.3)).unwrap() + 1.0).abs() < 1e-14);
            }
            other => panic!("{other:?}"),
        }
        match td_case_c_fp_constraint(&Expr::constant(0.7), &Expr::one(), 2.0, (0.0, 1.0)).unwrap()
        {
            TdCaseC::CaseB { c2, .. } => assert_eq!(c2, 0.7),
            other => panic!("{other:?}"),
        }
        let r = td_case_c_fp_constraint(&Expr::t(), &k, 1.0, (0.0, 1.0)).unwrap();
        assert!(matches!(r, TdCaseC::CaseA { .. }));
        assert_eq!(r.fields().len(), 1);
        assert!(
            td_case_c_fp_constraint(&Expr::t(), &parse("t - 0.5").unwrap(), 1.0, (0.0, 1.0))
                .is_err()
        );
    }
}
