use std::fmt;

use super::{Expr, Node};

// binding strength: + - < * / < unary - < ^ < atoms
const SUM: u8 = 1;
const PRODUCT: u8 = 2;
const UNARY: u8 = 3;
const ATOM: u8 = 5;

fn strength(e: &Expr) -> u8 {
    match e.node() {
        Node::Add(..) | Node::Sub(..) => SUM,
        Node::Mul(..) | Node::Div(..) => PRODUCT,
        Node::Neg(_) => UNARY,
        Node::Pow(..) => 4,
        Node::Const(c) if *c < 0.0 || c.is_sign_negative() => UNARY,
        _ => ATOM,
    }
}

fn write_const(f: &mut fmt::Formatter<'_>, c: f64) -> fmt::Result {
    if c < 0.0 || (c == 0.0 && c.is_sign_negative()) {
        write!(f, "-{}", -c)
    } else {
        write!(f, "{c}")
    }
}

fn write_at(f: &mut fmt::Formatter<'_>, e: &Expr, min: u8) -> fmt::Result {
    if strength(e) < min {
        f.write_str("(")?;
        write_expr(f, e)?;
        f.write_str(")")
    } else {
        write_expr(f, e)
    }
}

fn write_expr(f: &mut fmt::Formatter<'_>, e: &Expr) -> fmt::Result {
    use Node::*;
    match e.node() {
        Const(c) => write_const(f, *c),
        Var(v) => f.write_str(v.name()),
        Add(a, b) => {
            write_at(f, a, SUM)?;
            f.write_str(" + ")?;
            write_at(f, b, PRODUCT)
        }
        Sub(a, b) => {
            write_at(f, a, SUM)?;
            f.write_str(" - ")?;
            write_at(f, b, PRODUCT)
        }
        Mul(a, b) => {
            write_at(f, a, PRODUCT)?;
            f.write_str("*")?;
            write_at(f, b, UNARY)
        }
        Div(a, b) => {
            write_at(f, a, PRODUCT)?;
            f.write_str("/")?;
            write_at(f, b, UNARY)
        }
        Neg(a) => {
            f.write_str("-")?;
            write_at(f, a, UNARY)
        }
        Pow(a, p) => {
            write_at(f, a, ATOM)?;
            f.write_str("^")?;
            if *p < 0.0 {
                write!(f, "(-{})", -p)
            } else {
                write!(f, "{p}")
            }
        }
        Exp(a) => write_fn(f, "exp", a),
        Log(a) => write_fn(f, "log", a),
        Sqrt(a) => write_fn(f, "sqrt", a),
        Sin(a) => write_fn(f, "sin", a),
        Cos(a) => write_fn(f, "cos", a),
        Native(n) => f.write_str(&n.label()),
    }
}

fn write_fn(f: &mut fmt::Formatter<'_>, name: &str, a: &Expr) -> fmt::Result {
    write!(f, "{name}(")?;
    write_expr(f, a)?;
    f.write_str(")")
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_expr(f, self)
    }
}

#[cfg(test)]
mod tests {
    use super::super::{parse, Bindings, Expr};
    use proptest::prelude::*;

    #[test]
    fn prints_readably() {
        let e = parse("2 + 5*exp(-x)").unwrap();
        assert_eq!(e.to_string(), "2 + 5*exp(-x)");
        let e = parse("(x + 1)^2 / (t - w)").unwrap();
        assert_eq!(e.to_string(), "(x + 1)^2/(t - w)");
        assert_eq!(parse("x - (t - w)").unwrap().to_string(), "x - (t - w)");
        assert_eq!(parse("x^(-2)").unwrap().to_string(), "x^(-2)");
    }

    #[test]
    fn negative_constants_round_trip() {
        let e = Expr::constant(-3.0) * Expr::x();
        let back = parse(&e.to_string()).unwrap();
        assert_eq!(back, e);
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            (-5.0f64..5.0).prop_map(Expr::constant),
            Just(Expr::x()),
            Just(Expr::t()),
            Just(Expr::w()),
        ];
        leaf.prop_recursive(5, 40, 2, |inner| {
            prop_oneof![
                (inner.clone(), inner.clone()).prop_map(|(a, b)| a + b),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| a - b),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| a * b),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| a / b),
                (inner.clone(), 0u8..4).prop_map(|(a, p)| Expr::pow(a, p as f64 - 1.0)),
                inner.clone().prop_map(|a| -a),
                inner.clone().prop_map(Expr::exp),
                inner.clone().prop_map(Expr::log),
                inner.clone().prop_map(Expr::sqrt),
            ]
        })
    }

    proptest! {
        #[test]
        fn parse_print_round_trip(e in arb_expr()) {
            let printed = e.to_string();
            let back = parse(&printed).unwrap();
            prop_assert_eq!(&back, &e, "printed as {}", printed);
            prop_assert_eq!(back.to_string(), printed);
        }

        #[test]
        fn derivatives_match_central_differences(e in arb_expr(), x in -1.5f64..1.5, t in 0.1f64..1.0, w in -1.0f64..1.0) {
            let b = Bindings::at(x, t, w);
            for v in super::super::Var::ALL {
                let h = 1e-6;
                let base = b.get(v).unwrap();
                let plus = e.eval(&b.with(v, base + h));
                let minus = e.eval(&b.with(v, base - h));
                let exact = e.diff(v).eval(&b);
                if let (Ok(p), Ok(m), Ok(d), Ok(f0)) = (plus, minus, exact, e.eval(&b)) {
                    let fd = (p - m) / (2.0 * h);
                    // skip points where the function is badly conditioned for h = 1e-6
                    let curvature = (p - 2.0 * f0 + m).abs() / (h * h);
                    prop_assume!(curvature.is_finite() && curvature < 1e4 && f0.abs() < 1e6);
                    prop_assert!((d - fd).abs() <= 1e-5 * (1.0 + d.abs()).max(fd.abs()),
                        "{} d/d{}: exact {} fd {}", e, v, d, fd);
                }
            }
        }

        #[test]
        fn mixed_partials_commute(e in arb_expr(), x in -1.5f64..1.5, t in 0.1f64..1.0, w in -1.0f64..1.0) {
            let b = Bindings::at(x, t, w);
            use super::super::Var::*;
            for (p, q) in [(X, T), (X, W), (T, W)] {
                let a = e.diff(p).diff(q).eval(&b);
                let c = e.diff(q).diff(p).eval(&b);
                if let (Ok(a), Ok(c)) = (a, c) {
                    prop_assert!((a - c).abs() <= 1e-9 * (1.0 + a.abs().max(c.abs())), "{} vs {}", a, c);
                }
            }
        }

        #[test]
        fn folding_preserves_values(a in -3.0f64..3.0, b in -3.0f64..3.0, x in -2.0f64..2.0) {
            // folded and unfolded forms of (a + b) * x
            let folded = (Expr::constant(a) + Expr::constant(b)) * Expr::x();
            let direct = (a + b) * x;
            let v = folded.eval(&Bindings::x(x)).unwrap();
            prop_assert!((v - direct).abs() <= 1e-14 * (1.0 + direct.abs()));
        }
    }
}
