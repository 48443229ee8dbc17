//! Euler–Maruyama ensembles, exact samplers for types A and B, histogram
//! densities and cross-validation against the density solver.
//!
//! Path `i` draws from `ChaCha8Rng::seed_from_u64(seed)` on stream `i`: the
//! initial value first (when random), then one normal per step. Results do
//! not depend on how paths are scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::expr::Bindings;
use crate::fokker_planck::{build_fp, solve_fp, DensityGrid, Grid1d};
use crate::ito::ItoEquation;
use crate::kozlov::WienerPath;
use crate::symmetry_ito::{SymmetryClass, SymmetryKind};
use crate::{Error, Result};

/// Largest tolerated fraction of excluded paths.
pub const MAX_EXCLUSION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Initial {
    Point { x0: f64 },
    Normal { mean: f64, sd: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimConfig {
    pub n_paths: usize,
    pub dt: f64,
    pub t_end: f64,
    pub seed: u64,
    pub initial: Initial,
    /// Keep every `save_every`-th state of each path; 0 keeps none.
    pub save_every: usize,
}

impl SimConfig {
    pub fn new(n_paths: usize, dt: f64, t_end: f64, seed: u64, initial: Initial) -> Self {
        Self {
            n_paths,
            dt,
            t_end,
            seed,
            initial,
            save_every: 0,
        }
    }

    fn validate(&self) -> Result<usize> {
        if self.n_paths == 0 {
            return Err(Error::invalid("need at least one path"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite() && self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::invalid("dt and T must be positive"));
        }
        if let Initial::Normal { sd, .. } = self.initial {
            if !(sd >= 0.0) {
                return Err(Error::invalid("initial sd must be non-negative"));
            }
        }
        Ok((self.t_end / self.dt).round().max(1.0) as usize)
    }
}

/// One simulated path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathResult {
    /// Final state, or `None` if the path left the domain.
    pub terminal: Option<f64>,
    /// Saved states; stops early for excluded paths.
    pub saved: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PathEnsemble {
    pub config: SimConfig,
    pub steps: usize,
    /// Step actually used: `T / steps`.
    pub dt: f64,
    pub paths: Vec<PathResult>,
    pub excluded: usize,
}

impl PathEnsemble {
    fn assemble(config: SimConfig, steps: usize, paths: Vec<PathResult>) -> Result<Self> {
        let excluded = paths.iter().filter(|p| p.terminal.is_none()).count();
        let out = Self {
            config,
            steps,
            dt: config.t_end / steps as f64,
            paths,
            excluded,
        };
        if out.exclusion_fraction() > MAX_EXCLUSION {
            return Err(Error::domain(format!(
                "{:.1}% of paths left the domain; widen it",
                100.0 * out.exclusion_fraction()
            )));
        }
        Ok(out)
    }

    pub fn exclusion_fraction(&self) -> f64 {
        self.excluded as f64 / self.paths.len() as f64
    }

    /// Terminal values of the paths that stayed in the domain.
    pub fn terminal(&self) -> Vec<f64> {
        self.paths.iter().filter_map(|p| p.terminal).collect()
    }

    /// Times of the saved states.
    pub fn saved_times(&self) -> Vec<f64> {
        if self.config.save_every == 0 {
            return Vec::new();
        }
        (0..=self.steps)
            .step_by(self.config.save_every)
            .map(|i| i as f64 * self.dt)
            .collect()
    }

    pub fn stats(&self) -> SampleStats {
        SampleStats::of(&self.terminal())
    }
}

/// Mean and variance with standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SampleStats {
    pub n: usize,
    pub mean: f64,
    pub mean_se: f64,
    pub variance: f64,
    pub variance_se: f64,
}

impl SampleStats {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len();
        let nf = n as f64;
        let mean = xs.iter().sum::<f64>() / nf;
        let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / nf;
        let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / nf;
        let variance = if n > 1 { m2 * nf / (nf - 1.0) } else { 0.0 };
        Self {
            n,
            mean,
            mean_se: (variance / nf).sqrt(),
            variance,
            variance_se: ((m4 - m2 * m2).max(0.0) / nf).sqrt(),
        }
    }
}

fn path_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn draw_initial(rng: &mut ChaCha8Rng, init: Initial) -> f64 {
    match init {
        Initial::Point { x0 } => x0,
        Initial::Normal { mean, sd } => {
            let z: f64 = rng.sample(StandardNormal);
            mean + sd * z
        }
    }
}

fn run_paths<F>(config: SimConfig, steps: usize, step: F) -> Vec<PathResult>
where
    F: Fn(f64, f64, f64) -> Option<f64> + Sync,
{
    let dt = config.t_end / steps as f64;
    let sd = dt.sqrt();
    (0..config.n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(config.seed, i);
            let mut x = draw_initial(&mut rng, config.initial);
            let mut saved = Vec::new();
            let keep = config.save_every;
            if keep > 0 {
                saved.push(x);
            }
            for k in 0..steps {
                let z: f64 = rng.sample(StandardNormal);
                match step(x, k as f64 * dt, sd * z) {
                    Some(next) => x = next,
                    None => {
                        return PathResult {
                            terminal: None,
                            saved,
                        }
                    }
                }
                if keep > 0 && (k + 1) % keep == 0 {
                    saved.push(x);
                }
            }
            PathResult {
                terminal: Some(x),
                saved,
            }
        })
        .collect()
}

/// Euler–Maruyama `x ← x + f dt + σ Δw`; paths that leave the domain (or hit
/// a point where a coefficient is undefined) are excluded.
pub fn simulate_ensemble(eq: &ItoEquation, config: &SimConfig) -> Result<PathEnsemble> {
    let steps = config.validate()?;
    let dt = config.t_end / steps as f64;
    let unit = eq.has_unit_noise();
    let domain = eq.domain;
    let step = |x: f64, t: f64, dw: f64| -> Option<f64> {
        if !domain.contains(x) {
            return None;
        }
        let b = Bindings::xt(x, t);
        let f = eq.f.eval(&b).ok()?;
        let s = if unit { 1.0 } else { eq.sigma.eval(&b).ok()? };
        let next = x + f * dt + s * dw;
        domain.contains(next).then_some(next)
    };
    let paths = run_paths(*config, steps, step);
    PathEnsemble::assemble(*config, steps, paths)
}

/// Euler–Maruyama on a given Wiener path.
pub fn euler_on_path(eq: &ItoEquation, path: &WienerPath, x0: f64) -> Result<Vec<f64>> {
    let mut xs = Vec::with_capacity(path.values.len());
    let mut x = x0;
    xs.push(x);
    for i in 0..path.steps() {
        let b = Bindings::xt(x, path.time(i));
        let dw = path.values[i + 1] - path.values[i];
        x += eq.f.eval(&b)? * path.dt + eq.sigma.eval(&b)? * dw;
        if !eq.domain.contains(x) {
            return Err(Error::domain(format!(
                "path left {} at step {}",
                eq.domain,
                i + 1
            )));
        }
        xs.push(x);
    }
    Ok(xs)
}

/// Exact transitions for autonomous types A and B: `x ← x + h0 dt + Δw`, or
/// the Ornstein–Uhlenbeck transition
/// `x ← e^{k0 dt} x + h0 (e^{k0 dt} − 1)/k0 + √((e^{2 k0 dt} − 1)/(2 k0)) Z`.
pub fn exact_sampler(
    class: &SymmetryClass,
    eq: &ItoEquation,
    config: &SimConfig,
) -> Result<PathEnsemble> {
    match class.kind {
        SymmetryKind::TypeA | SymmetryKind::TypeB => {}
        SymmetryKind::TypeC => {
            return Err(Error::Unsupported(
                "type C has no closed-form transition; integrate pathwise with `stochsym kozlov`"
                    .into(),
            ))
        }
        SymmetryKind::NoSymmetry => {
            return Err(Error::Unsupported(
                "no symmetry, so no exact sampler".into(),
            ))
        }
    }
    if !eq.has_unit_noise() {
        return Err(Error::invalid(
            "exact sampler needs unit noise; normalize first",
        ));
    }
    let (Some(h0), k0) = (class.h0(), class.k0().unwrap_or(0.0)) else {
        return Err(Error::Unsupported(
            "exact sampler needs constant h0 and k0".into(),
        ));
    };
    if class.k.as_ref().is_some_and(|k| k.as_const().is_none()) {
        return Err(Error::Unsupported(
            "exact sampler needs constant h0 and k0".into(),
        ));
    }
    let steps = config.validate()?;
    let dt = config.t_end / steps as f64;
    let domain = eq.domain;
    let sqdt = dt.sqrt();
    let (decay, shift, sd) = if k0 == 0.0 {
        (1.0, h0 * dt, sqdt)
    } else {
        let e = (k0 * dt).exp();
        (e, h0 * (e - 1.0) / k0, ((e * e - 1.0) / (2.0 * k0)).sqrt())
    };
    // `run_paths` hands out √dt·Z; rescale to the exact transition sd
    let scale = sd / sqdt;
    let step = |x: f64, _t: f64, dw: f64| -> Option<f64> {
        let next = decay * x + shift + scale * dw;
        domain.contains(next).then_some(next)
    };
    let paths = run_paths(*config, steps, step);
    PathEnsemble::assemble(*config, steps, paths)
}

/// Histogram on the trapezoid cells of `grid`, normalised by the total
/// number of paths, so its mass is one minus the excluded fraction.
pub fn histogram(values: &[f64], n_total: usize, grid: Grid1d, t: f64) -> (DensityGrid, usize) {
    let w = grid.weights();
    let mut counts = vec![0usize; grid.n];
    let mut outside = 0;
    for &x in values {
        match grid.cell_of(x) {
            Some(i) => counts[i] += 1,
            None => outside += 1,
        }
    }
    let u = counts
        .iter()
        .zip(&w)
        .map(|(&c, &wi)| c as f64 / (n_total as f64 * wi))
        .collect();
    (DensityGrid { grid, t, u }, outside)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrossvalConfig {
    pub sim: SimConfig,
    pub grid: Grid1d,
    /// Time step of the density solve.
    pub fp_dt: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CrossvalReport {
    pub l1: f64,
    pub mc: SampleStats,
    pub fp_mean: f64,
    pub fp_variance: f64,
    /// `(mc − fp) / se` for the mean and the variance.
    pub mean_z: f64,
    pub variance_z: f64,
    pub exclusion_fraction: f64,
    pub fp_mass_drift: f64,
    pub warnings: Vec<String>,
}

/// Compare the ensemble histogram at `T` with the density solve from the
/// same normal initial law.
pub fn crossval(eq: &ItoEquation, config: &CrossvalConfig) -> Result<CrossvalReport> {
    let Initial::Normal { mean, sd } = config.sim.initial else {
        return Err(Error::invalid(
            "cross-validation needs a normal initial law",
        ));
    };
    let fpe = build_fp(eq);
    let u0 = DensityGrid::gaussian(config.grid, mean, sd)?;
    let sol = solve_fp(&fpe, &u0, config.fp_dt, config.sim.t_end)?;
    let fp = sol.last();

    let ens = simulate_ensemble(eq, &config.sim)?;
    let terminal = ens.terminal();
    let (hist, outside) = histogram(&terminal, ens.paths.len(), config.grid, config.sim.t_end);
    let exclusion_fraction = (ens.excluded + outside) as f64 / ens.paths.len() as f64;
    if exclusion_fraction > MAX_EXCLUSION {
        return Err(Error::domain(format!(
            "{:.1}% of paths ended outside the grid",
            100.0 * exclusion_fraction
        )));
    }
    let inside: Vec<f64> = terminal
        .iter()
        .copied()
        .filter(|x| config.grid.cell_of(*x).is_some())
        .collect();
    let mc = SampleStats::of(&inside);
    let (fp_mean, fp_variance) = (fp.mean(), fp.variance());
    Ok(CrossvalReport {
        l1: hist.l1_distance(fp)?,
        mc,
        fp_mean,
        fp_variance,
        mean_z: (mc.mean - fp_mean) / mc.mean_se,
        variance_z: (mc.variance - fp_variance) / mc.variance_se,
        exclusion_fraction,
        fp_mass_drift: sol.mass_drift(),
        warnings: sol.warnings.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse, Expr};
    use crate::ito::Domain;
    use crate::symmetry_ito::classify_autonomous;

    fn unit(src: &str, domain: Domain) -> ItoEquation {
        ItoEquation::unit(parse(src).unwrap(), domain).unwrap()
    }

    #[test]
    fn brownian_moments() {
        let eq = unit("0", Domain::real_line());
        let n = 20_000;
        let cfg = SimConfig::new(n, 0.05, 2.0, 11, Initial::Point { x0: 0.0 });
        let s = simulate_ensemble(&eq, &cfg).unwrap().stats();
        let nf = n as f64;
        assert!(s.mean.abs() < 3.0 * 2f64.sqrt() / nf.sqrt(), "{s:?}");
        assert!(
            (s.variance - 2.0).abs() < 3.0 * (2.0 / nf).sqrt() * 2.0,
            "{s:?}"
        );
    }

    #[test]
    fn reproducible_across_thread_counts() {
        let eq = unit("-x + sin(x)", Domain::real_line());
        let cfg = SimConfig::new(64, 0.01, 0.5, 7, Initial::Normal { mean: 0.0, sd: 1.0 });
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| simulate_ensemble(&eq, &cfg).unwrap().terminal())
        };
        assert_eq!(run(1), run(8));
    }

    #[test]
    fn exclusion_threshold() {
        let eq = unit("0", Domain::new(-0.5, 0.5).unwrap());
        let cfg = SimConfig::new(200, 0.01, 1.0, 3, Initial::Point { x0: 0.0 });
        assert!(matches!(
            simulate_ensemble(&eq, &cfg),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn saved_states() {
        let eq = unit("1", Domain::real_line());
        let mut cfg = SimConfig::new(3, 0.1, 1.0, 1, Initial::Point { x0: 0.0 });
        cfg.save_every = 5;
        let ens = simulate_ensemble(&eq, &cfg).unwrap();
        assert_eq!(ens.saved_times(), vec![0.0, 0.5, 1.0]);
        assert!(ens.paths.iter().all(|p| p.saved.len() == 3));
        assert_eq!(ens.paths[0].saved[2], ens.paths[0].terminal.unwrap());
    }

    #[test]
    fn exact_sampler_contract() {
        let f = parse("2").unwrap();
        let eq = ItoEquation::unit(f.clone(), Domain::real_line()).unwrap();
        let class = classify_autonomous(&f, &eq.domain).unwrap();
        let cfg = SimConfig::new(20_000, 0.1, 1.0, 5, Initial::Point { x0: 1.0 });
        let s = exact_sampler(&class, &eq, &cfg).unwrap().stats();
        assert!((s.mean - 3.0).abs() < 3.0 * s.mean_se);
        assert!((s.variance - 1.0).abs() < 3.0 * s.variance_se);

        let f = parse("-x").unwrap();
        let eq = ItoEquation::unit(f.clone(), Domain::real_line()).unwrap();
        let class = classify_autonomous(&f, &eq.domain).unwrap();
        let s = exact_sampler(&class, &eq, &cfg).unwrap().stats();
        let e = (-1.0f64).exp();
        assert!((s.mean - e).abs() < 3.0 * s.mean_se, "{s:?}");
        assert!(
            (s.variance - (1.0 - e * e) / 2.0).abs() < 3.0 * s.variance_se,
            "{s:?}"
        );

        let f = parse("1 + exp(x)").unwrap();
        let eq = ItoEquation::unit(f.clone(), Domain::real_line()).unwrap();
        let class = classify_autonomous(&f, &eq.domain).unwrap();
        assert!(matches!(
            exact_sampler(&class, &eq, &cfg),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn histogram_mass_accounts_for_exclusions() {
        let grid = Grid1d::new(-1.0, 1.0, 21).unwrap();
        let xs = [-1.0, -0.99, 0.0, 0.3, 0.96, 1.0, 1.2, -3.0];
        let (h, outside) = histogram(&xs, 10, grid, 0.0);
        assert_eq!(outside, 2);
        // 6 of 10 inside the grid
        assert!((h.mass() - 0.6).abs() < 1e-14);
    }

    #[test]
    fn euler_on_path_matches_ensemble_step() {
        let eq =
            ItoEquation::new(Expr::x() * -1.0, Expr::constant(0.5), Domain::real_line()).unwrap();
        let path = WienerPath::generate(1, 0, 0.1, 1.0).unwrap();
        let xs = euler_on_path(&eq, &path, 1.0).unwrap();
        let mut x = 1.0;
        for (i, dw) in path.increments().iter().enumerate() {
            x += -x * 0.1 + 0.5 * dw;
            assert!((xs[i + 1] - x).abs() < 1e-15);
        }
    }

    #[test]
    fn small_crossval_ou() {
        let eq = unit("-x", Domain::real_line());
        let cfg = CrossvalConfig {
            sim: SimConfig::new(20_000, 0.01, 1.0, 2, Initial::Normal { mean: 0.5, sd: 0.5 }),
            grid: Grid1d::new(-5.0, 5.0, 101).unwrap(),
            fp_dt: 0.01,
        };
        let r = crossval(&eq, &cfg).unwrap();
        assert!(r.l1 < 0.06, "{r:?}");
        assert!(r.mean_z.abs() < 4.0 && r.variance_z.abs() < 4.0, "{r:?}");
    }
}
