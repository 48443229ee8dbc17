//! The forward equation `u_t + (f u)_x − ½ (σ² u)_xx = 0` and a
//! conservative Crank–Nicolson solver with zero-flux boundaries.

use std::fmt;

use serde::Serialize;

use crate::expr::{Bindings, Expr, Var};
use crate::ito::{Domain, ItoEquation};
use crate::numeric::solve_tridiagonal;
use crate::{Error, Result};

/// Cell Péclet number above which a warning is recorded.
pub const PECLET_WARN: f64 = 2.0;
/// Cell Péclet number above which the solve is refused.
pub const PECLET_MAX: f64 = 10.0;
/// Negative values at or above this are clipped to zero silently.
pub const CLIP_TOL: f64 = 1e-12;
/// Values below this abort the solve.
pub const NEGATIVE_MAX: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct FpEquation {
    pub f: Expr,
    pub sigma: Expr,
    pub domain: Domain,
}

/// Coefficients of the non-conservative form `u_t + a u + b u_x + c u_xx = 0`.
#[derive(Debug, Clone)]
pub struct ExpandedFp {
    pub a: Expr,
    pub b: Expr,
    pub c: Expr,
}

pub fn build_fp(eq: &ItoEquation) -> FpEquation {
    FpEquation {
        f: eq.f.clone(),
        sigma: eq.sigma.clone(),
        domain: eq.domain,
    }
}

impl FpEquation {
    pub fn diffusion(&self) -> Expr {
        self.sigma.square()
    }

    /// For unit noise: `a = f_x`, `b = f`, `c = −½`.
    pub fn expanded(&self) -> ExpandedFp {
        let d = self.diffusion();
        let dx = d.diff(Var::X);
        ExpandedFp {
            a: self.f.diff(Var::X) - 0.5 * dx.diff(Var::X),
            b: &self.f - dx,
            c: -0.5 * d,
        }
    }
}

impl fmt::Display for FpEquation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "u_t + (({}) u)_x - 1/2 (({}) u)_xx = 0",
            self.f,
            self.diffusion()
        )
    }
}

/// Uniform grid of `n` nodes on `[lo, hi]`, endpoints included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Grid1d {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Grid1d {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::invalid(format!("bad grid interval [{lo}, {hi}]")));
        }
        if n < 3 {
            return Err(Error::invalid("grid needs at least 3 nodes"));
        }
        Ok(Self { lo, hi, n })
    }

    pub fn dx(&self) -> f64 {
        (self.hi - self.lo) / (self.n - 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        if i + 1 == self.n {
            self.hi
        } else {
            self.lo + i as f64 * self.dx()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.x(i)).collect()
    }

    /// Trapezoid weights.
    pub fn weights(&self) -> Vec<f64> {
        let dx = self.dx();
        let mut w = vec![dx; self.n];
        w[0] = 0.5 * dx;
        w[self.n - 1] = 0.5 * dx;
        w
    }

    /// Index of the node whose cell contains `x`. Cells are the trapezoid
    /// cells, half-width at the two ends, so nothing outside `[lo, hi]`.
    pub fn cell_of(&self, x: f64) -> Option<usize> {
        let dx = self.dx();
        if !(x >= self.lo && x <= self.hi) {
            return None;
        }
        let i = ((x - self.lo) / dx + 0.5).floor() as usize;
        Some(i.min(self.n - 1))
    }
}

/// Density values on a grid at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    pub grid: Grid1d,
    pub t: f64,
    pub u: Vec<f64>,
}

impl DensityGrid {
    pub fn new(grid: Grid1d, t: f64, u: Vec<f64>) -> Result<Self> {
        if u.len() != grid.n {
            return Err(Error::invalid(format!(
                "{} values for a grid of {} nodes",
                u.len(),
                grid.n
            )));
        }
        Ok(Self { grid, t, u })
    }

    /// Normal density, renormalised to unit discrete mass.
    pub fn gaussian(grid: Grid1d, mean: f64, sd: f64) -> Result<Self> {
        if !(sd > 0.0) {
            return Err(Error::invalid("standard deviation must be positive"));
        }
        let u: Vec<f64> = grid
            .nodes()
            .iter()
            .map(|x| (-0.5 * ((x - mean) / sd).powi(2)).exp())
            .collect();
        let mut d = Self { grid, t: 0.0, u };
        let m = d.mass();
        if m <= 0.0 {
            return Err(Error::invalid("initial density has no mass on the grid"));
        }
        d.u.iter_mut().for_each(|v| *v /= m);
        Ok(d)
    }

    pub fn mass(&self) -> f64 {
        self.grid
            .weights()
            .iter()
            .zip(&self.u)
            .map(|(w, u)| w * u)
            .sum()
    }

    fn moment(&self, k: i32, c: f64) -> f64 {
        let w = self.grid.weights();
        (0..self.grid.n)
            .map(|i| w[i] * self.u[i] * (self.grid.x(i) - c).powi(k))
            .sum::<f64>()
            / self.mass()
    }

    pub fn mean(&self) -> f64 {
        self.moment(1, 0.0)
    }

    pub fn variance(&self) -> f64 {
        self.moment(2, self.mean())
    }

    pub fn min_value(&self) -> f64 {
        self.u.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Trapezoid L1 distance; grids must match.
    pub fn l1_distance(&self, other: &DensityGrid) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::invalid("densities live on different grids"));
        }
        Ok(self
            .grid
            .weights()
            .iter()
            .zip(self.u.iter().zip(&other.u))
            .map(|(w, (a, b))| w * (a - b).abs())
            .sum())
    }
}

#[derive(Debug, Clone)]
pub struct FpSolution {
    /// Initial state, evenly spaced intermediate states, final state.
    pub snapshots: Vec<DensityGrid>,
    pub warnings: Vec<String>,
    pub max_peclet: f64,
    /// Most negative value seen before clipping.
    pub min_value: f64,
    pub steps: usize,
    pub dt: f64,
}

impl FpSolution {
    pub fn last(&self) -> &DensityGrid {
        self.snapshots
            .last()
            .expect("at least the initial snapshot")
    }

    pub fn mass_drift(&self) -> f64 {
        (self.last().mass() - self.snapshots[0].mass()).abs()
    }
}

/// Face coefficients: the discrete flux through face `i+½` is
/// `a_i u_i + b_i u_{i+1}` (positive towards increasing `x` for `−J`).
struct Faces {
    a: Vec<f64>,
    b: Vec<f64>,
    peclet: f64,
}

fn faces(fpe: &FpEquation, grid: &Grid1d, t: f64) -> Result<Faces> {
    let dx = grid.dx();
    let d = fpe.diffusion();
    let eval = |e: &Expr, x: f64| {
        e.eval(&Bindings::xt(x, t)).map_err(|err| {
            Error::domain(format!(
                "coefficient not defined at x = {x}, t = {t}: {err}"
            ))
        })
    };
    let dn: Vec<f64> = (0..grid.n)
        .map(|i| eval(&d, grid.x(i)))
        .collect::<Result<_>>()?;
    let mut a = Vec::with_capacity(grid.n - 1);
    let mut b = Vec::with_capacity(grid.n - 1);
    let mut peclet = 0.0f64;
    for i in 0..grid.n - 1 {
        let fm = eval(&fpe.f, grid.x(i) + 0.5 * dx)?;
        a.push(-dn[i] / (2.0 * dx) - 0.5 * fm);
        b.push(dn[i + 1] / (2.0 * dx) - 0.5 * fm);
        peclet = peclet.max(fm.abs() * dx / (0.5 * (dn[i] + dn[i + 1])));
    }
    Ok(Faces { a, b, peclet })
}

/// Tridiagonal operator `A` with `du/dt = A u`.
fn operator(fc: &Faces, w: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = w.len();
    let mut lower = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut upper = vec![0.0; n];
    for i in 0..n {
        let mut d = 0.0;
        if i + 1 < n {
            d += fc.a[i];
            upper[i] = fc.b[i] / w[i];
        }
        if i > 0 {
            d -= fc.b[i - 1];
            lower[i] = -fc.a[i - 1] / w[i];
        }
        diag[i] = d / w[i];
    }
    (lower, diag, upper)
}

/// Crank–Nicolson from `u0.t` to `u0.t + t_end`, keeping `snapshots`
/// intermediate states (plus the initial and final ones).
pub fn solve_fp_with(
    fpe: &FpEquation,
    u0: &DensityGrid,
    dt: f64,
    t_end: f64,
    snapshots: usize,
) -> Result<FpSolution> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid("dt must be positive"));
    }
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(Error::invalid("final time must be non-negative"));
    }
    let grid = u0.grid;
    let (a, b) = (fpe.domain.a, fpe.domain.b);
    if grid.lo < a || grid.hi > b {
        return Err(Error::domain(format!(
            "grid [{}, {}] leaves the domain {}",
            grid.lo, grid.hi, fpe.domain
        )));
    }
    if u0.u.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::invalid(
            "initial density must be finite and non-negative",
        ));
    }
    let steps = (t_end / dt)
        .round()
        .max(if t_end > 0.0 { 1.0 } else { 0.0 }) as usize;
    let dt = if steps > 0 { t_end / steps as f64 } else { dt };
    let w = grid.weights();
    let every = if snapshots == 0 {
        usize::MAX
    } else {
        (steps / (snapshots + 1)).max(1)
    };

    let mut out = FpSolution {
        snapshots: vec![u0.clone()],
        warnings: Vec::new(),
        max_peclet: 0.0,
        min_value: u0.min_value(),
        steps,
        dt,
    };
    let mut u = u0.u.clone();
    let mut t = u0.t;
    let mut warned = false;
    for step in 1..=steps {
        let fc = faces(fpe, &grid, t + 0.5 * dt)?;
        out.max_peclet = out.max_peclet.max(fc.peclet);
        if fc.peclet > PECLET_MAX {
            return Err(Error::Unstable(format!(
                "cell Peclet number {:.3} exceeds {PECLET_MAX}; refine the grid",
                fc.peclet
            )));
        }
        if fc.peclet > PECLET_WARN && !warned {
            warned = true;
            out.warnings.push(format!(
                "cell Peclet number {:.3} exceeds {PECLET_WARN} at t = {t}",
                fc.peclet
            ));
        }
        let (lo, di, up) = operator(&fc, &w);
        let n = grid.n;
        let mut rhs = vec![0.0; n];
        for i in 0..n {
            let mut v = u[i] + 0.5 * dt * di[i] * u[i];
            if i > 0 {
                v += 0.5 * dt * lo[i] * u[i - 1];
            }
            if i + 1 < n {
                v += 0.5 * dt * up[i] * u[i + 1];
            }
            rhs[i] = v;
        }
        let lhs_lo: Vec<f64> = lo.iter().map(|v| -0.5 * dt * v).collect();
        let lhs_di: Vec<f64> = di.iter().map(|v| 1.0 - 0.5 * dt * v).collect();
        let lhs_up: Vec<f64> = up.iter().map(|v| -0.5 * dt * v).collect();
        u = solve_tridiagonal(&lhs_lo, &lhs_di, &lhs_up, &rhs)?;
        t = u0.t + step as f64 * dt;
        for v in u.iter_mut() {
            if !v.is_finite() {
                return Err(Error::Unstable(format!("non-finite density at t = {t}")));
            }
            if *v < 0.0 {
                out.min_value = out.min_value.min(*v);
                if *v < -NEGATIVE_MAX {
                    return Err(Error::Unstable(format!(
                        "negative density {v:.3e} at t = {t}"
                    )));
                }
                if *v >= -CLIP_TOL {
                    *v = 0.0;
                }
            }
        }
        if step % every == 0 && step != steps {
            out.snapshots.push(DensityGrid {
                grid,
                t,
                u: u.clone(),
            });
        }
    }
    if out.min_value < -CLIP_TOL {
        out.warnings.push(format!(
            "density dipped to {:.3e}; values below {CLIP_TOL:e} were kept",
            out.min_value
        ));
    }
    if steps > 0 {
        out.snapshots.push(DensityGrid { grid, t, u });
    }
    Ok(out)
}

/// Crank–Nicolson solve returning the initial and final states.
pub fn solve_fp(fpe: &FpEquation, u0: &DensityGrid, dt: f64, t_end: f64) -> Result<FpSolution> {
    solve_fp_with(fpe, u0, dt, t_end, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn fpe(src: &str, domain: Domain) -> FpEquation {
        build_fp(&ItoEquation::unit(parse(src).unwrap(), domain).unwrap())
    }

    #[test]
    fn expanded_form_for_unit_noise() {
        let (h0, k0, beta) = (0.3, -1.7, 0.6);
        let f = h0 + k0 * Expr::x();
        let e = fpe(&format!("{h0} + {k0}*x"), Domain::real_line()).expanded();
        let b = Bindings::xt(0.4, 0.0);
        assert_eq!(e.a.eval(&b).unwrap(), k0);
        assert!((e.b.eval(&b).unwrap() - f.eval(&b).unwrap()).abs() < 1e-15);
        assert_eq!(e.c.as_const(), Some(-0.5));

        let g = h0 + k0 * Expr::exp(beta * Expr::x());
        let eq = build_fp(&ItoEquation::unit(g, Domain::real_line()).unwrap());
        let a = eq.expanded().a.eval(&b).unwrap();
        assert!((a - k0 * beta * (beta * 0.4f64).exp()).abs() < 1e-14);

        let heat = fpe("0", Domain::real_line()).expanded();
        assert!(heat.a.is_const_value(0.0) && heat.b.is_const_value(0.0));
    }

    #[test]
    fn heat_variance_grows_linearly() {
        let eq = fpe("0", Domain::real_line());
        let grid = Grid1d::new(-10.0, 10.0, 801).unwrap();
        let u0 = DensityGrid::gaussian(grid, 0.0, 0.5).unwrap();
        let sol = solve_fp(&eq, &u0, 1e-3, 1.0).unwrap();
        let v = sol.last().variance();
        assert!((v - 1.25).abs() < 0.005 * 1.25, "variance {v}");
        assert!(sol.mass_drift() < 1e-8);
        assert!(sol.min_value >= -1e-10);
    }

    #[test]
    fn one_step_conserves_mass() {
        let dom = Domain::new(-4.0, 4.0).unwrap();
        for src in ["-x", "1 + exp(x)", "sin(3*x) + t"] {
            let eq = fpe(src, dom);
            let grid = Grid1d::new(-4.0, 2.0, 301).unwrap();
            let u0 = DensityGrid::gaussian(grid, -1.0, 0.4).unwrap();
            let sol = solve_fp(&eq, &u0, 1e-2, 1e-2).unwrap();
            assert!(sol.mass_drift() < 1e-10, "{src}");
        }
    }

    #[test]
    fn ou_reaches_stationary_density() {
        let eq = fpe("-x", Domain::real_line());
        let grid = Grid1d::new(-6.0, 6.0, 601).unwrap();
        let u0 = DensityGrid::gaussian(grid, 1.0, 0.3).unwrap();
        let sol = solve_fp(&eq, &u0, 1e-2, 10.0).unwrap();
        let exact: Vec<f64> = grid.nodes().iter().map(|x| (-x * x).exp()).collect();
        let mut ex = DensityGrid::new(grid, 10.0, exact).unwrap();
        let m = ex.mass();
        ex.u.iter_mut().for_each(|v| *v /= m);
        let l1 = sol.last().l1_distance(&ex).unwrap();
        assert!(l1 < 1e-3, "L1 {l1}");
    }

    #[test]
    fn self_convergence_is_second_order() {
        let eq = fpe("-x + sin(x)", Domain::real_line());
        let run = |n: usize, dt: f64| {
            let grid = Grid1d::new(-5.0, 5.0, n).unwrap();
            let u0 = DensityGrid::gaussian(grid, 0.5, 0.5).unwrap();
            solve_fp(&eq, &u0, dt, 0.5).unwrap().last().clone()
        };
        let fine = run(801, 0.5 / 400.0);
        let err = |d: &DensityGrid| {
            let stride = (fine.grid.n - 1) / (d.grid.n - 1);
            let w = d.grid.weights();
            (0..d.grid.n)
                .map(|i| w[i] * (d.u[i] - fine.u[i * stride]).abs())
                .sum::<f64>()
        };
        let e1 = err(&run(51, 0.5 / 25.0));
        let e2 = err(&run(101, 0.5 / 50.0));
        assert!(e1 / e2 >= 3.0, "ratio {}", e1 / e2);
    }

    #[test]
    fn peclet_limits() {
        let eq = fpe("40", Domain::real_line());
        let grid = Grid1d::new(-5.0, 5.0, 21).unwrap();
        let u0 = DensityGrid::gaussian(grid, 0.0, 1.0).unwrap();
        assert!(matches!(
            solve_fp(&eq, &u0, 1e-3, 1e-3),
            Err(Error::Unstable(_))
        ));
        let eq = fpe("6", Domain::real_line());
        let sol = solve_fp(&eq, &u0, 1e-3, 1e-3).unwrap();
        assert_eq!(sol.warnings.len(), 1);
    }

    #[test]
    fn grid_must_fit_domain() {
        let eq = fpe("1/x", Domain::new(0.0, 5.0).unwrap());
        let grid = Grid1d::new(-1.0, 4.0, 51).unwrap();
        let u0 = DensityGrid::gaussian(grid, 2.0, 0.5).unwrap();
        assert!(matches!(
            solve_fp(&eq, &u0, 1e-3, 1e-2),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn snapshots_are_spaced() {
        let eq = fpe("0", Domain::real_line());
        let grid = Grid1d::new(-5.0, 5.0, 101).unwrap();
        let u0 = DensityGrid::gaussian(grid, 0.0, 1.0).unwrap();
        let sol = solve_fp_with(&eq, &u0, 0.01, 1.0, 4).unwrap();
        assert_eq!(sol.snapshots.len(), 6);
        assert!((sol.last().t - 1.0).abs() < 1e-12);
        assert!((sol.snapshots[1].t - 0.2).abs() < 1e-12);
    }

    #[test]
    fn cell_lookup() {
        let g = Grid1d::new(0.0, 1.0, 11).unwrap();
        assert_eq!(g.cell_of(0.0), Some(0));
        assert_eq!(g.cell_of(0.04), Some(0));
        assert_eq!(g.cell_of(0.06), Some(1));
        assert_eq!(g.cell_of(0.97), Some(10));
        assert_eq!(g.cell_of(1.0), Some(10));
        assert_eq!(g.cell_of(1.01), None);
        assert_eq!(g.cell_of(-0.01), None);
    }
}
