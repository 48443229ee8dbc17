use super::{Expr, Node, Var};

pub(super) fn differentiate(e: &Expr, v: Var) -> Expr {
    if !e.depends_on(v) {
        return Expr::zero();
    }
    use Node::*;
    match e.node() {
        Const(_) => Expr::zero(),
        Var(u) => {
            if *u == v {
                Expr::one()
            } else {
                Expr::zero()
            }
        }
        Add(a, b) => a.diff(v) + b.diff(v),
        Sub(a, b) => a.diff(v) - b.diff(v),
        Mul(a, b) => a.diff(v) * b + a * b.diff(v),
        Div(a, b) => {
            let da = a.diff(v);
            let db = b.diff(v);
            if db.is_const_value(0.0) {
                da / b
            } else {
                (da * b - a * db) / b.square()
            }
        }
        Pow(a, p) => *p * Expr::pow(a.clone(), p - 1.0) * a.diff(v),
        Neg(a) => -a.diff(v),
        Exp(a) => e * a.diff(v),
        Log(a) => a.diff(v) / a,
        Sqrt(a) => a.diff(v) / (2.0 * e),
        Sin(a) => Expr::cos(a.clone()) * a.diff(v),
        Cos(a) => -(Expr::sin(a.clone()) * a.diff(v)),
        Native(n) => n.derivative(e, v),
    }
}

#[cfg(test)]
mod tests {
    use super::super::{parse, Bindings};
    use super::*;

    fn central(e: &Expr, v: Var, b: Bindings, h: f64) -> f64 {
        let at = |d: f64| {
            let base = b.get(v).unwrap();
            e.eval(&b.with(v, base + d)).unwrap()
        };
        (at(h) - at(-h)) / (2.0 * h)
    }

    #[test]
    fn affine_drift_derivative() {
        let f = parse("1 + 3*x").unwrap();
        assert_eq!(f.diff(Var::X).as_const(), Some(3.0));
        assert_eq!(f.diff_n(Var::X, 2).as_const(), Some(0.0));
    }

    #[test]
    fn exponential_drift_derivative() {
        // d/dx k e^{beta x} = k beta e^{beta x}
        let f = parse("5*exp(-x)").unwrap();
        let df = f.diff(Var::X);
        for x in [-1.0, 0.0, 0.7, 2.0] {
            let got = df.eval(&Bindings::x(x)).unwrap();
            assert!((got - (-5.0 * (-x).exp())).abs() < 1e-14);
        }
    }

    #[test]
    fn weber_drift_slope_at_origin() {
        // expected -1/3 - 1, frozen from the finite-difference oracle below
        let f = parse("1/(x + sqrt(3)) - (x + sqrt(3))").unwrap();
        let df = f.diff(Var::X).eval(&Bindings::x(0.0)).unwrap();
        let fd = central(&f, Var::X, Bindings::x(0.0), 1e-6);
        assert!((fd - (-4.0 / 3.0)).abs() < 1e-8);
        assert!((df - (-4.0 / 3.0)).abs() < 1e-14);
    }

    #[test]
    fn chain_rule_through_functions() {
        let e = parse("sqrt(1 + x^2) * log(2 + t) - exp(x*w)").unwrap();
        let b = Bindings::at(0.3, 0.2, -0.4);
        for v in Var::ALL {
            let got = e.diff(v).eval(&b).unwrap();
            let fd = central(&e, v, b, 1e-6);
            assert!(
                (got - fd).abs() < 1e-7 * (1.0 + fd.abs()),
                "{v}: {got} vs {fd}"
            );
        }
    }

    #[test]
    fn trig_nodes() {
        let e = Expr::sin(2.0 * Expr::t());
        let d = e.diff(Var::T).eval(&Bindings::t(0.4)).unwrap();
        assert!((d - 2.0 * (0.8f64).cos()).abs() < 1e-15);
        let c = Expr::cos(Expr::t())
            .diff(Var::T)
            .eval(&Bindings::t(0.4))
            .unwrap();
        assert!((c + (0.4f64).sin()).abs() < 1e-15);
    }
}
