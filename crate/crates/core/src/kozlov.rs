//! Rectifying a symmetry `φ ∂x` by `y = ∫ dx/φ`, the transformed equation
//! `dy = F(t,w) dt + S(t,w) dw`, and its pathwise integration.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::expr::native::{Integral, Inverse};
use crate::expr::{chebyshev_nodes, is_identically_zero_on, Bindings, Expr, SampleBox, Var};
use crate::ito::{Domain, ItoEquation};
use crate::{Error, Result};

/// Agreement required of `F` and `S` across `x` at fixed `(t, w)`.
pub const X_INDEPENDENCE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum MapForm {
    /// `φ` independent of `x`: `y = x/φ`.
    Scaling,
    /// `φ = A(t,w) e^{βx}`: `y = −1/(βφ)`.
    Exponential { beta: f64 },
    /// Quadrature from the reference point with a numeric inverse.
    Quadrature,
}

/// `y(x,t,w)` and its inverse.
#[derive(Debug, Clone)]
pub struct KozlovMap {
    pub phi: Expr,
    pub y: Expr,
    /// `x` in terms of `t`, `w` and the variable `x`, which stands for `y`.
    pub inverse: Expr,
    pub form: MapForm,
    pub x_ref: f64,
    pub domain: Domain,
}

impl KozlovMap {
    pub fn forward(&self, x: f64, t: f64, w: f64) -> Result<f64> {
        Ok(self.y.eval(&Bindings::at(x, t, w))?)
    }

    pub fn map_back(&self, y: f64, t: f64, w: f64) -> Result<f64> {
        let x = self.inverse.eval(&Bindings::at(y, t, w))?;
        if !self.domain.contains(x) {
            return Err(Error::domain(format!(
                "mapped-back x = {x} leaves {}",
                self.domain
            )));
        }
        Ok(x)
    }
}

fn phi_box(domain: &Domain) -> SampleBox {
    domain.sample_box()
}

fn check_phi(phi: &Expr, domain: &Domain) -> Result<()> {
    let (lo, hi) = domain.window();
    let mut sign = 0.0;
    for x in chebyshev_nodes(lo, hi, 32) {
        for t in [0.0, 0.5, 1.0] {
            for w in [-2.0, 0.0, 2.0] {
                let Ok(v) = phi.eval(&Bindings::at(x, t, w)) else {
                    continue;
                };
                if v == 0.0 || (sign != 0.0 && v.signum() != sign) {
                    return Err(Error::domain(format!(
                        "generator vanishes near x = {x}, t = {t}, w = {w}"
                    )));
                }
                sign = v.signum();
            }
        }
    }
    if sign == 0.0 {
        return Err(Error::domain("generator cannot be evaluated on the domain"));
    }
    Ok(())
}

/// Build `y = ∫ dx/φ` with `(t, w)` held fixed.
pub fn kozlov_map(phi: &Expr, domain: &Domain) -> Result<KozlovMap> {
    check_phi(phi, domain)?;
    let x_ref = domain.reference_point();
    let bx = phi_box(domain);
    let phi_x = phi.diff(Var::X);
    let y_var = Expr::x();
    if is_identically_zero_on(&phi_x, &bx)? {
        return Ok(KozlovMap {
            phi: phi.clone(),
            y: Expr::x() / phi,
            inverse: &y_var * phi,
            form: MapForm::Scaling,
            x_ref,
            domain: *domain,
        });
    }
    let log_slope = &phi_x / phi;
    if is_identically_zero_on(&log_slope.diff(Var::X), &bx)? {
        let beta = log_slope.eval(&Bindings::at(x_ref, 0.0, 0.0))?;
        let constant = tw_grid().into_iter().all(|(t, w)| {
            log_slope
                .eval(&Bindings::at(x_ref, t, w))
                .is_ok_and(|b| (b - beta).abs() <= 1e-12 * (1.0 + beta.abs()))
        });
        if constant && beta != 0.0 {
            let phi0 = phi.fix(Var::X, x_ref);
            let y = -(Expr::one() / (beta * phi));
            // φ(x) = φ(x_ref) e^{β(x − x_ref)} = −1/(βy)
            let inverse = x_ref + Expr::log(-(Expr::one() / (beta * &y_var)) / phi0) / beta;
            return Ok(KozlovMap {
                phi: phi.clone(),
                y,
                inverse,
                form: MapForm::Exponential { beta },
                x_ref,
                domain: *domain,
            });
        }
    }
    let y = Integral::primitive(Expr::one() / phi, Var::X, x_ref);
    let inverse = Inverse::expr(y.clone(), Var::X, y_var, (domain.a, domain.b), x_ref);
    Ok(KozlovMap {
        phi: phi.clone(),
        y,
        inverse,
        form: MapForm::Quadrature,
        x_ref,
        domain: *domain,
    })
}

/// `dy = F(t,w) dt + S(t,w) dw`.
#[derive(Debug, Clone)]
pub struct GeneralizedItoEquation {
    pub drift: Expr,
    pub noise: Expr,
    pub map: KozlovMap,
    /// `F` and `S` free of `w`: an ordinary Ito equation.
    pub proper: bool,
    /// Largest spread of `F` and `S` across `x` at fixed `(t, w)`.
    pub x_spread: f64,
}

fn tw_grid() -> Vec<(f64, f64)> {
    let ts = [0.0, 0.25, 0.5, 0.75, 1.0];
    let ws = [-2.0, -1.0, 0.0, 1.0, 2.0];
    ts.iter()
        .flat_map(|&t| ws.iter().map(move |&w| (t, w)))
        .collect()
}

/// Largest relative spread of `e` across `x` at fixed `(t, w)`.
fn x_spread(e: &Expr, domain: &Domain, x_ref: f64) -> Result<f64> {
    let (lo, hi) = domain.window();
    let xs = chebyshev_nodes(lo, hi, 16);
    let mut worst = 0.0f64;
    for (t, w) in tw_grid() {
        let (base, s0) = e.eval_with_scale(&Bindings::at(x_ref, t, w))?;
        for &x in &xs {
            let Ok((v, s)) = e.eval_with_scale(&Bindings::at(x, t, w)) else {
                continue;
            };
            worst = worst.max((v - base).abs() / (1.0 + s.max(s0)));
        }
    }
    Ok(worst)
}

/// Apply the Ito formula to `y(x,t,w)` with `x` and `w` driven by the same
/// Wiener increment, and check the result no longer depends on `x`.
pub fn transform_equation(eq: &ItoEquation, map: &KozlovMap) -> Result<GeneralizedItoEquation> {
    let y = &map.y;
    let s = &eq.sigma;
    let y_x = y.diff(Var::X);
    let y_w = y.diff(Var::W);
    let lap = s.square() * y_x.diff(Var::X) + 2.0 * s * y_x.diff(Var::W) + y_w.diff(Var::W);
    let f_full = y.diff(Var::T) + &eq.f * &y_x + 0.5 * lap;
    let s_full = s * &y_x + &y_w;
    let spread =
        x_spread(&f_full, &map.domain, map.x_ref)?.max(x_spread(&s_full, &map.domain, map.x_ref)?);
    if spread >= X_INDEPENDENCE_TOL {
        return Err(Error::Verification(format!(
            "transformed coefficients still depend on y (spread {spread:.3e}); \
             the generator is not a symmetry of this equation"
        )));
    }
    let drift = f_full.fix(Var::X, map.x_ref);
    let noise = s_full.fix(Var::X, map.x_ref);
    let tw = SampleBox {
        x: (0.0, 1.0),
        t: (0.0, 1.0),
        w: (-2.0, 2.0),
    };
    let proper = is_identically_zero_on(&drift.diff(Var::W), &tw)?
        && is_identically_zero_on(&noise.diff(Var::W), &tw)?;
    Ok(GeneralizedItoEquation {
        drift,
        noise,
        map: map.clone(),
        proper,
        x_spread: spread,
    })
}

/// Sampled Wiener path on a uniform grid, `w(0) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct WienerPath {
    pub dt: f64,
    pub values: Vec<f64>,
    pub seed: u64,
    pub stream: u64,
}

impl WienerPath {
    /// Path `stream` of the master seed, with `round(t_end/dt)` steps.
    pub fn generate(seed: u64, stream: u64, dt: f64, t_end: f64) -> Result<Self> {
        if !(dt > 0.0 && t_end > 0.0) {
            return Err(Error::invalid("dt and T must be positive"));
        }
        let steps = (t_end / dt).round().max(1.0) as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Ok(Self::from_rng(&mut rng, dt, steps, seed, stream))
    }

    pub(crate) fn from_rng(
        rng: &mut ChaCha8Rng,
        dt: f64,
        steps: usize,
        seed: u64,
        stream: u64,
    ) -> Self {
        let sd = dt.sqrt();
        let mut values = Vec::with_capacity(steps + 1);
        let mut w = 0.0;
        values.push(w);
        for _ in 0..steps {
            let z: f64 = rng.sample(StandardNormal);
            w += sd * z;
            values.push(w);
        }
        Self {
            dt,
            values,
            seed,
            stream,
        }
    }

    pub fn steps(&self) -> usize {
        self.values.len() - 1
    }

    pub fn t_end(&self) -> f64 {
        self.dt * self.steps() as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.dt
    }

    pub fn increments(&self) -> Vec<f64> {
        self.values.windows(2).map(|p| p[1] - p[0]).collect()
    }

    /// Every `factor`-th sample; the step count must divide evenly.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || self.steps() % factor != 0 {
            return Err(Error::invalid(format!(
                "cannot coarsen {} steps by {factor}",
                self.steps()
            )));
        }
        Ok(Self {
            dt: self.dt * factor as f64,
            values: self.values.iter().step_by(factor).copied().collect(),
            seed: self.seed,
            stream: self.stream,
        })
    }
}

/// `y_i` on the path grid: trapezoid rule for `∫F dt`, left-point sums for
/// `∫S dw`.
pub fn integrate_path(
    geq: &GeneralizedItoEquation,
    path: &WienerPath,
    y0: f64,
) -> Result<Vec<f64>> {
    let n = path.steps();
    let mut out = Vec::with_capacity(n + 1);
    let mut y = y0;
    out.push(y);
    let at = |i: usize| Bindings::at(0.0, path.time(i), path.values[i]);
    let mut f_prev = geq.drift.eval(&at(0))?;
    for i in 0..n {
        let s = geq.noise.eval(&at(i))?;
        let f_next = geq.drift.eval(&at(i + 1))?;
        y += 0.5 * (f_prev + f_next) * path.dt + s * (path.values[i + 1] - path.values[i]);
        out.push(y);
        f_prev = f_next;
    }
    Ok(out)
}

/// Integrate in `y` from `x0` and map every point back to `x`.
pub fn solve_on_path(
    geq: &GeneralizedItoEquation,
    path: &WienerPath,
    x0: f64,
) -> Result<Vec<(f64, f64)>> {
    let y0 = geq.map.forward(x0, 0.0, 0.0)?;
    let ys = integrate_path(geq, path, y0)?;
    ys.iter()
        .enumerate()
        .map(|(i, &y)| Ok((y, geq.map.map_back(y, path.time(i), path.values[i])?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use crate::montecarlo::euler_on_path;
    use crate::symmetry_ito::classify_autonomous;

    fn at(e: &Expr, x: f64, t: f64, w: f64) -> f64 {
        e.eval(&Bindings::at(x, t, w)).unwrap()
    }

    #[test]
    fn closed_form_maps() {
        let line = Domain::real_line();
        let k0 = 0.7;
        let m = kozlov_map(&Expr::exp(k0 * Expr::t()), &line).unwrap();
        assert_eq!(m.form, MapForm::Scaling);
        assert!((at(&m.y, 2.0, 0.5, 0.0) - 2.0 * (-0.35f64).exp()).abs() < 1e-15);
        assert!((m.map_back(at(&m.y, 2.0, 0.5, 0.0), 0.5, 0.0).unwrap() - 2.0).abs() < 1e-14);

        let m = kozlov_map(&Expr::one(), &line).unwrap();
        assert_eq!(m.y, Expr::x());

        let beta = -1.3;
        let phi = Expr::exp(beta * (Expr::x() - Expr::w()));
        let m = kozlov_map(&phi, &line).unwrap();
        assert_eq!(m.form, MapForm::Exponential { beta });
        let (x, w) = (0.4, -0.6);
        let expect = -(1.0 / beta) * (-beta * (x - w)).exp();
        assert!((at(&m.y, x, 0.0, w) - expect).abs() < 1e-14);
        // y_x = 1/φ
        assert!((at(&m.y.diff(Var::X), x, 0.0, w) - 1.0 / at(&phi, x, 0.0, w)).abs() < 1e-14);
        assert!((m.map_back(expect, 0.0, w).unwrap() - x).abs() < 1e-13);
    }

    #[test]
    fn inverse_branch_is_guarded() {
        let m = kozlov_map(&Expr::exp(Expr::x()), &Domain::real_line()).unwrap();
        // y = −e^{−x} < 0, so y = 0.5 has no preimage
        assert!(m.map_back(0.5, 0.0, 0.0).is_err());
    }

    #[test]
    fn quadrature_map_round_trip() {
        let dom = Domain::new(-2.0, 2.0).unwrap();
        let phi = parse("2 + sin(x) + t").unwrap();
        let m = kozlov_map(&phi, &dom).unwrap();
        assert_eq!(m.form, MapForm::Quadrature);
        let y = m.forward(1.2, 0.5, 0.0).unwrap();
        assert!((m.map_back(y, 0.5, 0.0).unwrap() - 1.2).abs() < 1e-12);
        assert!((at(&m.y.diff(Var::X), 0.3, 0.5, 0.0) - 1.0 / (2.5 + 0.3f64.sin())).abs() < 1e-14);
    }

    #[test]
    fn vanishing_generator_is_rejected() {
        assert!(matches!(
            kozlov_map(&Expr::x(), &Domain::new(-1.0, 1.0).unwrap()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn case_b_becomes_drift_free() {
        let k0 = -0.8;
        let eq = ItoEquation::unit(k0 * Expr::x(), Domain::real_line()).unwrap();
        let m = kozlov_map(&Expr::exp(k0 * Expr::t()), &eq.domain).unwrap();
        let g = transform_equation(&eq, &m).unwrap();
        assert!(g.proper);
        for (t, w) in tw_grid() {
            assert!(at(&g.drift, 0.0, t, w).abs() < 1e-14);
            assert!((at(&g.noise, 0.0, t, w) - (-k0 * t).exp()).abs() < 1e-14);
            assert!(at(&g.noise.diff(Var::W), 0.0, t, w).abs() < 1e-10);
        }
    }

    #[test]
    fn case_a_is_identity() {
        let eq = ItoEquation::unit(Expr::constant(2.0), Domain::real_line()).unwrap();
        let g = transform_equation(&eq, &kozlov_map(&Expr::one(), &eq.domain).unwrap()).unwrap();
        assert_eq!(at(&g.drift, 0.0, 0.3, 1.0), 2.0);
        assert_eq!(at(&g.noise, 0.0, 0.3, 1.0), 1.0);
        let path = WienerPath::generate(5, 0, 0.01, 1.0).unwrap();
        let ys = integrate_path(&g, &path, 0.5).unwrap();
        let expect = 0.5 + 2.0 + path.values.last().unwrap();
        assert!((ys.last().unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn case_c_generalized_equation() {
        let f = parse("2 + 5*exp(-x)").unwrap();
        let eq = ItoEquation::unit(f.clone(), Domain::real_line()).unwrap();
        let class = classify_autonomous(&f, &eq.domain).unwrap();
        let m = kozlov_map(class.generator.as_ref().unwrap(), &eq.domain).unwrap();
        let g = transform_equation(&eq, &m).unwrap();
        assert!(!g.proper);
        for (t, w) in tw_grid() {
            assert!((at(&g.drift, 0.0, t, w) - 5.0 * (-(w + 2.0 * t)).exp()).abs() < 1e-12);
            assert!(at(&g.noise, 0.0, t, w).abs() < 1e-14);
        }
        // y = e^{x − w − 2t}
        assert!((at(&m.y, 0.3, 0.2, -0.1) - (0.3f64 + 0.1 - 0.4).exp()).abs() < 1e-14);
    }

    #[test]
    fn non_symmetry_is_rejected() {
        let eq = ItoEquation::unit(Expr::x().square(), Domain::new(-1.0, 1.0).unwrap()).unwrap();
        let m = kozlov_map(&Expr::one(), &eq.domain).unwrap();
        assert!(matches!(
            transform_equation(&eq, &m),
            Err(Error::Verification(_))
        ));
    }

    #[test]
    fn wiener_paths_are_reproducible() {
        let a = WienerPath::generate(42, 3, 1e-2, 1.0).unwrap();
        let b = WienerPath::generate(42, 3, 1e-2, 1.0).unwrap();
        let c = WienerPath::generate(42, 4, 1e-2, 1.0).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.values, c.values);
        assert_eq!(a.steps(), 100);
        assert_eq!(a.values[0], 0.0);
        let coarse = a.coarsen(4).unwrap();
        assert_eq!(coarse.steps(), 25);
        assert_eq!(coarse.values[25], a.values[100]);
        assert!(a.coarsen(3).is_err());
    }

    #[test]
    fn case_b_path_matches_euler() {
        let k0 = -1.0;
        let eq = ItoEquation::unit(k0 * Expr::x(), Domain::real_line()).unwrap();
        let m = kozlov_map(&Expr::exp(k0 * Expr::t()), &eq.domain).unwrap();
        let g = transform_equation(&eq, &m).unwrap();
        let path = WienerPath::generate(9, 0, 1e-4, 1.0).unwrap();
        let xk = solve_on_path(&g, &path, 1.0).unwrap().last().unwrap().1;
        let xe = *euler_on_path(&eq, &path, 1.0).unwrap().last().unwrap();
        assert!((xk - xe).abs() < 5e-3, "{xk} vs {xe}");
    }
}
