//! One function per subcommand. Each fills the report and returns `Ok` or a
//! structured failure.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde_json::{json, Value};
use stochsym_core::fokker_planck::solve_fp_with;
use stochsym_core::fp_symmetry::{fp_determining_residual, FpGrid, VectorFieldFile};
use stochsym_core::kozlov::solve_on_path;
use stochsym_core::montecarlo::{euler_on_path, CrossvalConfig, Initial, SimConfig};
use stochsym_core::weber::Branch;
use stochsym_core::*;

use crate::report::{num, CliResult, Failure, Report};
use crate::{
    ClassifyArgs, CrossvalArgs, EquationArg, FpSolveArgs, FpVerifyArgs, KozlovArgs, NormalizeArgs,
    SimulateArgs, WeberArgs,
};

fn load_equation(path: &Path) -> CliResult<ItoEquation> {
    let text = EquationFile::load(path)
        .map_err(|e| Failure::new("io", format!("{}: {e}", path.display())))?;
    Ok(EquationFile::from_json(&text)?.to_equation()?)
}

fn floats(s: &str, n: usize, what: &str) -> CliResult<Vec<f64>> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| {
            Failure::invalid(format!(
                "{what}: expected {n} comma-separated numbers, got `{s}`"
            ))
        })?;
    if v.len() != n {
        return Err(Failure::invalid(format!(
            "{what}: expected {n} numbers, got {}",
            v.len()
        )));
    }
    Ok(v)
}

fn parse_grid(s: &str) -> CliResult<Grid1d> {
    let v = floats(s, 3, "--grid")?;
    if v[2].fract() != 0.0 || v[2] < 3.0 {
        return Err(Failure::invalid("--grid: Nx must be an integer >= 3"));
    }
    Ok(Grid1d::new(v[0], v[1], v[2] as usize)?)
}

fn parse_init(s: &str) -> CliResult<Initial> {
    if let Some(rest) = s.strip_prefix("gaussian:") {
        let v = floats(rest, 2, "--init gaussian")?;
        return Ok(Initial::Normal {
            mean: v[0],
            sd: v[1],
        });
    }
    if let Some(rest) = s.strip_prefix("point:") {
        let v = floats(rest, 1, "--init point")?;
        return Ok(Initial::Point { x0: v[0] });
    }
    Err(Failure::invalid(format!(
        "--init: expected gaussian:mean,sd or point:x0, got `{s}`"
    )))
}

fn gaussian_init(s: &str) -> CliResult<(f64, f64)> {
    match parse_init(s)? {
        Initial::Normal { mean, sd } => Ok((mean, sd)),
        Initial::Point { .. } => Err(Failure::invalid("--init must be gaussian:mean,sd here")),
    }
}

fn csv_writer(path: &Path, header: &str) -> CliResult<BufWriter<File>> {
    let file =
        File::create(path).map_err(|e| Failure::new("io", format!("{}: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{header}")?;
    Ok(w)
}

fn domain_json(d: &Domain) -> Value {
    json!([num(d.a), num(d.b)])
}

fn unit_noise(eq: &ItoEquation, report: &mut Report) -> CliResult<ItoEquation> {
    if eq.has_unit_noise() {
        return Ok(eq.clone());
    }
    let (unit, tr) = normalize_noise(eq)?;
    report.put(
        "normalized",
        json!({
            "xi": tr.forward.to_string(),
            "drift": unit.f.to_string(),
            "domain": domain_json(&unit.domain),
        }),
    );
    Ok(unit)
}

fn class_json(class: &SymmetryClass) -> Value {
    let text = |e: &Option<Expr>| {
        e.as_ref().map(|e| match e.as_const() {
            Some(c) => num(c),
            None => Value::String(e.to_string()),
        })
    };
    json!({
        "h": text(&class.h),
        "k": text(&class.k),
        "beta": class.beta.map(num),
    })
}

pub fn classify(a: &ClassifyArgs, report: &mut Report) -> CliResult<()> {
    let eq = load_equation(&a.equation)?;
    let eq = unit_noise(&eq, report)?;
    let class = if eq.f.depends_on(Var::T) {
        let ts = floats(&a.tspan, 2, "--tspan")?;
        classify_time_dependent(&eq.f, &eq.domain, (ts[0], ts[1]))?
    } else {
        classify_autonomous(&eq.f, &eq.domain)?
    };
    report.put("kind", class.kind);
    report.put("parameters", class_json(&class));
    report.put("beta", class.beta.map(num));
    report.put("generator", class.generator.as_ref().map(Expr::to_string));
    report.put("random", class.random);
    report.put(
        "residuals",
        class.residuals.map(|r| vec![num(r.r1), num(r.r2)]),
    );
    report.put("notes", &class.notes);
    Ok(())
}

pub fn normalize(a: &NormalizeArgs, report: &mut Report) -> CliResult<()> {
    let eq = load_equation(&a.equation)?;
    let (unit, tr) = normalize_noise(&eq)?;
    report.put("equation", EquationFile::from_equation(&unit));
    report.put("xi", tr.forward.to_string());
    report.put("inverse", tr.inverse.to_string());
    let table = tr.table(&eq.domain, a.samples, a.at_t)?;
    match &a.out {
        Some(path) => {
            let mut w = csv_writer(path, "x,xi")?;
            for (x, xi) in &table {
                writeln!(w, "{x},{xi}")?;
            }
            w.flush()?;
            report.put("table_csv", path);
        }
        None => report.put(
            "table",
            table
                .iter()
                .map(|&(x, xi)| json!({"x": num(x), "xi": num(xi)}))
                .collect::<Vec<_>>(),
        ),
    }
    Ok(())
}

pub fn kozlov(a: &KozlovArgs, report: &mut Report) -> CliResult<()> {
    let orig = load_equation(&a.equation)?;
    let (eq, tr) = if orig.has_unit_noise() {
        (orig.clone(), None)
    } else {
        let (unit, tr) = normalize_noise(&orig)?;
        (unit, Some(tr))
    };
    if eq.f.depends_on(Var::T) {
        return Err(Failure::new(
            "unsupported",
            "pathwise integration is implemented for autonomous drifts",
        ));
    }
    let class = classify_autonomous(&eq.f, &eq.domain)?;
    let Some(phi) = &class.generator else {
        return Err(Failure::new(
            "unsupported",
            "equation has no standard symmetry",
        ));
    };
    let map = kozlov_map(phi, &eq.domain)?;
    let geq = transform_equation(&eq, &map)?;
    report.put("kind", class.kind);
    report.put("generator", phi.to_string());
    report.put("map", map.form);
    report.put("y", map.y.to_string());
    report.put("drift_y", geq.drift.to_string());
    report.put("noise_y", geq.noise.to_string());
    report.put("proper", geq.proper);

    let x0 = a.x0.unwrap_or_else(|| orig.domain.reference_point());
    let xi0 = match &tr {
        Some(tr) => tr.apply(x0, 0.0)?,
        None => x0,
    };
    let mut out = match &a.out {
        Some(p) => Some(csv_writer(p, "path_id,t,y,x")?),
        None => None,
    };
    let mut terminal = Vec::new();
    let mut em_gap = 0.0f64;
    for id in 0..a.paths {
        let path = WienerPath::generate(a.seed, id, a.dt, a.t_end)?;
        let sol = solve_on_path(&geq, &path, xi0)?;
        let em = euler_on_path(&eq, &path, xi0)?;
        let back = |xi: f64, t: f64| -> CliResult<f64> {
            Ok(match &tr {
                Some(tr) => tr.invert(xi, t)?,
                None => xi,
            })
        };
        for (i, &(y, xi)) in sol.iter().enumerate() {
            let t = path.time(i);
            if let Some(w) = out.as_mut() {
                writeln!(w, "{id},{t},{y},{}", back(xi, t)? + 0.0)?;
            }
        }
        let (_, xi_t) = *sol.last().expect("path has a start point");
        em_gap = em_gap.max((xi_t - em.last().copied().unwrap_or(f64::NAN)).abs());
        terminal.push(back(xi_t, path.t_end())?);
    }
    if let Some(mut w) = out {
        w.flush()?;
    }
    report.put("x0", x0);
    report.put(
        "terminal",
        stochsym_core::montecarlo::SampleStats::of(&terminal),
    );
    report.put("max_gap_to_euler", num(em_gap));
    Ok(())
}

pub fn simulate(a: &SimulateArgs, report: &mut Report) -> CliResult<()> {
    let eq = load_equation(&a.equation)?;
    let initial = match &a.init {
        Some(s) => parse_init(s)?,
        None => Initial::Point {
            x0: eq.domain.reference_point(),
        },
    };
    let mut cfg = SimConfig::new(a.n, a.dt, a.t_end, a.seed, initial);
    if a.out.is_some() {
        cfg.save_every = a.save_every.max(1);
    }
    let ens = match a.method.as_str() {
        "em" => simulate_ensemble(&eq, &cfg)?,
        "exact" => {
            if !eq.has_unit_noise() || eq.f.depends_on(Var::T) {
                return Err(Failure::new(
                    "unsupported",
                    "exact sampling needs unit noise and an autonomous drift",
                ));
            }
            let class = classify_autonomous(&eq.f, &eq.domain)?;
            exact_sampler(&class, &eq, &cfg)?
        }
        other => return Err(Failure::invalid(format!("--method: unknown `{other}`"))),
    };
    report.put("steps", ens.steps);
    report.put("dt_used", ens.dt);
    report.put("terminal", ens.stats());
    report.put("excluded", ens.excluded);
    report.put("exclusion_fraction", ens.exclusion_fraction());
    if let Some(path) = &a.out {
        let mut w = csv_writer(path, "path_id,t,x")?;
        let times = ens.saved_times();
        for (id, p) in ens.paths.iter().enumerate() {
            for (t, x) in times.iter().zip(&p.saved) {
                writeln!(w, "{id},{t},{x}")?;
            }
        }
        w.flush()?;
        report.put("paths_csv", path);
    }
    Ok(())
}

pub fn fp_solve(a: &FpSolveArgs, report: &mut Report) -> CliResult<()> {
    let eq = load_equation(&a.equation)?;
    let fpe = build_fp(&eq);
    let grid = parse_grid(&a.grid)?;
    let (mean, sd) = gaussian_init(&a.init)?;
    let u0 = DensityGrid::gaussian(grid, mean, sd)?;
    let sol = solve_fp_with(&fpe, &u0, a.dt, a.t_end, a.snapshots)?;
    report.put("equation", fpe.to_string());
    report.put("steps", sol.steps);
    report.put("dt_used", sol.dt);
    report.put("mass_drift", num(sol.mass_drift()));
    report.put("max_peclet", num(sol.max_peclet));
    report.put("min_value", num(sol.min_value));
    report.put(
        "moments",
        sol.snapshots
            .iter()
            .map(|s| json!({"t": num(s.t), "mass": num(s.mass()), "mean": num(s.mean()), "variance": num(s.variance())}))
            .collect::<Vec<_>>(),
    );
    report.put("warnings", &sol.warnings);
    if let Some(path) = &a.out {
        let mut w = csv_writer(path, "t,x,u")?;
        for s in &sol.snapshots {
            for (x, u) in s.grid.nodes().iter().zip(&s.u) {
                writeln!(w, "{},{x},{u}", s.t)?;
            }
        }
        w.flush()?;
        report.put("densities_csv", path);
    }
    Ok(())
}

pub fn fp_classify(a: &EquationArg, report: &mut Report) -> CliResult<()> {
    let eq = load_equation(&a.equation)?;
    let eq = unit_noise(&eq, report)?;
    let fpe = build_fp(&eq);
    let class = classify_fp(&fpe)?;
    report.put("case", class.case.name());
    match &class.case {
        FpCase::CaseI { mu } => report.put("mu", mu.map(num)),
        FpCase::CaseII(p) => report.put("parameters", p),
        FpCase::CaseIII => {}
    }
    report.put("gamma", class.gamma.to_string());
    let grid = FpGrid::default_for(&fpe.domain);
    let mut fields = Vec::new();
    let mut residuals = Vec::new();
    for x in &class.fields {
        let file = x.to_file();
        fields.push(json!({"label": x.label, "tau": file.tau, "xi": file.xi, "phi1": file.phi1}));
        residuals.push(num(fp_determining_residual(&fpe, x, &grid)?));
    }
    report.put("fields", fields);
    report.put("residuals", residuals);
    Ok(())
}

pub fn fp_verify(a: &FpVerifyArgs, report: &mut Report) -> CliResult<()> {
    let eq = load_equation(&a.equation)?;
    let fpe = build_fp(&eq);
    let text = std::fs::read_to_string(&a.field)
        .map_err(|e| Failure::new("io", format!("{}: {e}", a.field.display())))?;
    let file: VectorFieldFile = serde_json::from_str(&text)?;
    let x = file.to_field()?;
    let r = fp_determining_residual(&fpe, &x, &FpGrid::default_for(&fpe.domain))?;
    report.put("field", x.to_string());
    report.put("residual", num(r));
    report.put("tolerance", a.tol);
    if !(r < a.tol) {
        return Err(Failure::new(
            "verification",
            format!("residual {r:.3e} exceeds {:.1e}", a.tol),
        ));
    }
    Ok(())
}

fn parse_branch(s: &str) -> CliResult<Branch> {
    match s {
        "auto" => Ok(Branch::Auto { f0: None }),
        "hermite" => Ok(Branch::Hermite),
        _ => match s.strip_prefix("initial:") {
            Some(v) => Ok(Branch::Initial {
                f0: floats(v, 1, "--branch initial")?[0],
            }),
            None => Err(Failure::invalid(format!(
                "--branch: expected auto, hermite or initial:f0, got `{s}`"
            ))),
        },
    }
}

pub fn weber_gen(a: &WeberArgs, report: &mut Report) -> CliResult<()> {
    let mu = floats(&a.mu, 3, "--mu")?;
    let d = floats(&a.domain, 2, "--domain")?;
    let domain = Domain::new(d[0], d[1])?;
    let g = generate_max_symmetry_drift([mu[0], mu[1], mu[2]], parse_branch(&a.branch)?, &domain)?;
    if let Some(p) = &g.problem {
        report.put("lambda", num(p.lambda));
        report.put("z", json!({"a": num(p.a), "b": num(p.b)}));
    }
    report.put("branch", g.branch);
    report.put("f", g.f.to_string());
    report.put("u", g.u.as_ref().map(Expr::to_string));
    report.put(
        "poles",
        g.poles.iter().copied().map(num).collect::<Vec<_>>(),
    );
    report.put("riccati_residual", num(g.riccati_residual));
    report.put("gamma_xx_residual", num(g.gamma_xx_residual));
    let (lo, hi) = domain.window();
    let samples = g.sample(lo, hi, a.samples)?;
    match &a.out {
        Some(path) => {
            let mut w = csv_writer(path, "x,f")?;
            for (x, f) in &samples {
                writeln!(w, "{x},{f}")?;
            }
            w.flush()?;
            report.put("samples_csv", path);
        }
        None => report.put(
            "samples",
            samples
                .iter()
                .map(|&(x, f)| json!({"x": num(x), "f": num(f)}))
                .collect::<Vec<_>>(),
        ),
    }
    Ok(())
}

pub fn crossval(a: &CrossvalArgs, report: &mut Report) -> CliResult<()> {
    let eq = load_equation(&a.equation)?;
    let (mean, sd) = gaussian_init(&a.init)?;
    let cfg = CrossvalConfig {
        sim: SimConfig::new(a.n, a.dt, a.t_end, a.seed, Initial::Normal { mean, sd }),
        grid: parse_grid(&a.grid)?,
        fp_dt: a.fp_dt.unwrap_or(a.dt),
    };
    let r = stochsym_core::crossval(&eq, &cfg)?;
    report.put("L1", num(r.l1));
    report.put(
        "moments",
        json!({
            "mc_mean": num(r.mc.mean),
            "mc_variance": num(r.mc.variance),
            "fp_mean": num(r.fp_mean),
            "fp_variance": num(r.fp_variance),
        }),
    );
    report.put(
        "errors",
        json!({
            "mean_se": num(r.mc.mean_se),
            "variance_se": num(r.mc.variance_se),
            "mean_z": num(r.mean_z),
            "variance_z": num(r.variance_z),
        }),
    );
    report.put("exclusion_fraction", num(r.exclusion_fraction));
    report.put("fp_mass_drift", num(r.fp_mass_drift));
    report.put("warnings", &r.warnings);
    Ok(())
}
