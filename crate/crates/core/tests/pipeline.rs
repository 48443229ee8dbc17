//! End-to-end runs through several modules at once.

use stochsym_core::fp_symmetry::{fp_determining_residual, FpGrid};
use stochsym_core::kozlov::solve_on_path;
use stochsym_core::montecarlo::{euler_on_path, Initial, SimConfig};
use stochsym_core::weber::{Branch, BranchUsed};
use stochsym_core::*;

#[test]
fn weber_drift_closes_the_loop() {
    // generate from μ, classify the result, recover μ
    for (mu, dom) in [
        ([0.0, 2.0 * 3f64.sqrt(), 1.0], (-1.0, 3.0)),
        ([-1.0, 0.0, 1.0], (-2.0, 2.0)),
    ] {
        let domain = Domain::new(dom.0, dom.1).unwrap();
        let g = generate_max_symmetry_drift(mu, Branch::default(), &domain).unwrap();
        let fpe = build_fp(&ItoEquation::unit(g.f.clone(), domain).unwrap());
        let class = classify_fp(&fpe).unwrap();
        let FpCase::CaseI { mu: got } = class.case else {
            panic!("{mu:?}: {:?}", class.case);
        };
        for (a, b) in got.iter().zip(mu) {
            assert!((a - b).abs() < 1e-7, "{got:?} vs {mu:?}");
        }
        let grid = FpGrid::default_for(&domain);
        for x in &class.fields {
            assert!(
                fp_determining_residual(&fpe, x, &grid).unwrap() < 1e-8,
                "{x}"
            );
        }
    }
}

#[test]
fn numeric_branch_drift_has_four_fields() {
    // λ = -1/2 is not a non-negative integer, so the drift comes from the ODE branch
    let domain = Domain::new(-1.0, 1.0).unwrap();
    let g =
        generate_max_symmetry_drift([0.0, 0.0, 1.0], Branch::Initial { f0: 0.0 }, &domain).unwrap();
    assert!(
        matches!(g.branch, BranchUsed::Initial { .. }),
        "{}",
        g.branch
    );
    assert!(g.gamma_xx_residual < 1e-6);
    let fpe = build_fp(&ItoEquation::unit(g.f, domain).unwrap());
    let class = classify_fp(&fpe).unwrap();
    assert_eq!(class.case.name(), "CaseI");
    assert_eq!(class.fields.len(), 4);
}

#[test]
fn type_b_pathwise_matches_exact_on_same_noise() {
    let f = parse("0.5 - 2*x").unwrap();
    let eq = ItoEquation::unit(f.clone(), Domain::real_line()).unwrap();
    let class = classify_autonomous(&f, &Domain::real_line()).unwrap();
    let map = kozlov_map(class.generator.as_ref().unwrap(), &Domain::real_line()).unwrap();
    let geq = transform_equation(&eq, &map).unwrap();
    assert!(geq.proper);
    // exact OU on a fine path versus the Kozlov solution on the same path
    let path = WienerPath::generate(5, 0, 1e-4, 1.0).unwrap();
    let kz = solve_on_path(&geq, &path, 1.0).unwrap();
    let em = euler_on_path(&eq, &path, 1.0).unwrap();
    let (_, xk) = *kz.last().unwrap();
    assert!(
        (xk - em.last().unwrap()).abs() < 5e-3,
        "{xk} vs {}",
        em.last().unwrap()
    );
}

#[test]
fn normalized_equation_classifies_like_the_original() {
    // dx = -x dt + 3 dw becomes dξ = -ξ dt + dw
    let eq = ItoEquation::new(
        parse("-x").unwrap(),
        parse("3").unwrap(),
        Domain::real_line(),
    )
    .unwrap();
    let (unit, tr) = normalize_noise(&eq).unwrap();
    assert!((tr.apply(3.0, 0.0).unwrap() - 1.0).abs() < 1e-15);
    let class = classify_autonomous(&unit.f, &unit.domain).unwrap();
    assert_eq!(class.kind, SymmetryKind::TypeB);
    assert!((class.k0().unwrap() + 1.0).abs() < 1e-12);
}

#[test]
fn fp_density_matches_ensemble_moments_for_type_c() {
    let domain = Domain::new(-10.0, 2.0).unwrap();
    let eq = ItoEquation::unit(parse("1 + exp(x)").unwrap(), domain).unwrap();
    let cfg = SimConfig::new(
        40_000,
        5e-3,
        0.5,
        11,
        Initial::Normal {
            mean: -5.0,
            sd: 0.5,
        },
    );
    let ens = simulate_ensemble(&eq, &cfg).unwrap();
    let st = ens.stats();
    let grid = Grid1d::new(-10.0, 2.0, 241).unwrap();
    let u0 = DensityGrid::gaussian(grid, -5.0, 0.5).unwrap();
    let sol = solve_fp(&build_fp(&eq), &u0, 5e-3, 0.5).unwrap();
    let z = (st.mean - sol.last().mean()) / st.mean_se;
    assert!(z.abs() < 4.0, "mean z = {z}");
}
