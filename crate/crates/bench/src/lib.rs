//! Fixtures shared by the benchmarks in `benches/`.

use stochsym_core::{parse, Domain, Expr, ItoEquation};

/// `dx = (2 + 5 e^{-x}) dt + dw` on the real line.
pub fn type_c() -> ItoEquation {
    unit("2 + 5*exp(-x)", Domain::real_line())
}

pub fn ou() -> ItoEquation {
    unit("-x", Domain::real_line())
}

/// Drift with maximal FP symmetry from the Hermite branch.
pub fn weber_drift() -> ItoEquation {
    unit(
        "1/(x + sqrt(3)) - (x + sqrt(3))",
        Domain::new(-1.0, 3.0).unwrap(),
    )
}

fn unit(src: &str, domain: Domain) -> ItoEquation {
    let f: Expr = parse(src).expect("fixture parses");
    ItoEquation::unit(f, domain).expect("fixture is valid")
}
