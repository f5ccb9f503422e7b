use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Args;
use serde::Serialize;
use serde_json::json;
use stefan_core::barriers::{check_flux_bound, solve_w, BarrierParams};
use stefan_core::duality::{certify, restrict, Budgets, Caps, CertifyOptions, Verdict};
use stefan_core::forward::{run, run_from, SolveConfig};
use stefan_core::grid::format_real as f;
use stefan_core::representation::green_terms;
use stefan_core::similarity::{numeric_front, NeumannSolution};
use stefan_core::testfn::green_family;
use stefan_core::{BallDomain, Field, Grid, SpaceTimeField};

use crate::config::{parse_config, ExperimentConfig, Needs};
use crate::rundir::{read_field, read_run, write_run};
use crate::{io_err, write_manifest, CliError, Status};

fn create(path: &Path) -> Result<BufWriter<fs::File>, CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    Ok(BufWriter::new(
        fs::File::create(path).map_err(io_err(path))?,
    ))
}

fn manifest_beside(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    out.with_file_name(name)
}

fn solve_config(cfg: &ExperimentConfig, level: u32) -> Result<SolveConfig, CliError> {
    let t = cfg.time()?;
    let mut sc = SolveConfig::new(cfg.grid(level)?, t.horizon, t.dt / (1u64 << level) as f64);
    sc.boundary = cfg.boundary();
    sc.newton_tol = cfg.solver.newton_tol;
    sc.max_newton = cfg.solver.max_newton;
    sc.store_every = t.store_every;
    Ok(sc)
}

#[derive(Debug, Args, Serialize)]
pub struct ForwardArgs {
    /// Experiment configuration (TOML)
    #[arg(long)]
    pub config: PathBuf,
    /// Output run directory
    #[arg(long)]
    pub out: PathBuf,
}

pub fn forward(args: &ForwardArgs) -> Result<Status, CliError> {
    let started = Instant::now();
    let cfg = parse_config(&args.config, Needs::Forward)?;
    let nl = cfg.nonlinearity().map_err(|e| CliError::Config(vec![e]))?;
    let sc = solve_config(&cfg, 0)?;
    let result = run(&cfg.measure()?, &sc, &nl)?;
    write_run(&args.out, &cfg, &result)?;
    let drift = result.mass_drift();
    let fallbacks = result.ledger.iter().filter(|r| r.fallback).count();
    let pass =
        sc.boundary != stefan_core::Boundary::ZeroFlux || drift <= cfg.solver.conservation_tol;
    let status = Status::from_pass(pass);
    println!(
        "steps {}  stored slices {}  relative mass drift {drift:.3e}",
        result.ledger.len(),
        result.history.len()
    );
    write_manifest(
        &args.out.join("manifest.json"),
        "forward",
        &cfg,
        started,
        status,
        json!({
            "scheme": "implicit Euler in time, 3/5-point Laplacian of alpha(u), Newton with Gauss-Seidel fallback",
            "steps": result.ledger.len(),
            "mass_drift": drift,
            "fallback_steps": fallbacks,
            "ledger": "ledger.csv",
        }),
    )?;
    Ok(status)
}

#[derive(Debug, Args, Serialize)]
pub struct BarrierArgs {
    /// Shell radius R (> 1)
    #[arg(long = "R")]
    pub radius: f64,
    /// Horizon T
    #[arg(long = "T")]
    pub horizon: f64,
    /// Output CSV
    #[arg(long)]
    pub out: PathBuf,
    /// Intervals on [1, R] (default: spacing 0.01)
    #[arg(long)]
    pub intervals: Option<usize>,
    /// Time step
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
}

pub const BARRIER_HEADER: &str = "t,numeric_flux,closed_form_flux,envelope,slack,pass";

pub fn barrier_table(args: &BarrierArgs) -> Result<Status, CliError> {
    let started = Instant::now();
    let intervals = args
        .intervals
        .unwrap_or(((args.radius - 1.0) / 0.01).ceil().max(3.0) as usize);
    let p = BarrierParams {
        radius: args.radius,
        horizon: args.horizon,
        intervals,
        dt: args.dt,
    };
    let report = check_flux_bound(&solve_w(&p)?, &p)?;
    let mut w = create(&args.out)?;
    let e = io_err(&args.out);
    let body = (|| {
        writeln!(w, "{BARRIER_HEADER}")?;
        for r in &report.rows {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                f(r.t),
                f(r.numeric_flux),
                f(r.closed_form_flux),
                f(r.envelope),
                f(r.slack),
                r.pass
            )?;
        }
        w.flush()
    })();
    body.map_err(e)?;
    let status = Status::from_pass(report.passed());
    let failing = report.rows.iter().filter(|r| !r.pass).count();
    println!(
        "{} rows, {failing} above envelope + slack",
        report.rows.len()
    );
    write_manifest(
        &manifest_beside(&args.out),
        "barrier-table",
        args,
        started,
        status,
        json!({ "intervals": intervals }),
    )?;
    Ok(status)
}

#[derive(Debug, Args, Serialize)]
pub struct RepresentArgs {
    /// Run directory written by `forward`
    #[arg(long)]
    pub run: PathBuf,
    /// Ball radius
    #[arg(long = "R")]
    pub radius: f64,
    #[arg(long)]
    pub t1: f64,
    #[arg(long)]
    pub t2: f64,
    /// Fail (exit 1) when any residual exceeds this
    #[arg(long)]
    pub tol: Option<f64>,
    /// Also write the table to this CSV
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub const REPRESENT_HEADER: &str = "function,at_t2,at_t1,boundary,time_part,space_part,residual";

pub fn represent_check(args: &RepresentArgs) -> Result<Status, CliError> {
    let started = Instant::now();
    let loaded = read_run(&args.run)?;
    let nl = loaded
        .config
        .nonlinearity()
        .map_err(|e| CliError::Config(vec![e]))?;
    let u = &loaded.history;
    let ball = BallDomain::new(u.grid(), args.radius)?;
    let mut lines = vec![REPRESENT_HEADER.to_string()];
    let mut worst = 0.0f64;
    for (k, phi) in green_family(u.grid().dim(), args.radius).iter().enumerate() {
        let g = green_terms(u, &nl, phi, &ball, args.t1, args.t2)?;
        worst = worst.max(g.residual);
        lines.push(format!(
            "{k},{},{},{},{},{},{}",
            f(g.at_t2),
            f(g.at_t1),
            f(g.boundary),
            f(g.time_part),
            f(g.space_part),
            f(g.residual)
        ));
    }
    let text = lines.join("\n") + "\n";
    print!("{text}");
    let status = Status::from_pass(args.tol.map_or(true, |t| worst <= t));
    if let Some(out) = &args.out {
        let mut w = create(out)?;
        w.write_all(text.as_bytes())
            .and_then(|_| w.flush())
            .map_err(io_err(out))?;
        write_manifest(
            &manifest_beside(out),
            "represent-check",
            args,
            started,
            status,
            json!({ "max_residual": worst }),
        )?;
    }
    Ok(status)
}

#[derive(Debug, Args, Serialize)]
pub struct CertifyArgs {
    /// First run directory
    #[arg(long = "runA")]
    pub run_a: PathBuf,
    /// Second run directory; same grid or one refinement finer
    #[arg(long = "runB")]
    pub run_b: PathBuf,
    /// `bump` or `bump:<p>` for (1 - |x|^2)^p on the unit ball, or `csv:<path>`
    #[arg(long, default_value = "bump")]
    pub theta: String,
    #[arg(long)]
    pub t0: f64,
    /// Total error budget
    #[arg(long)]
    pub eps: f64,
    /// Report CSV (one row per term)
    #[arg(long)]
    pub out: PathBuf,
    /// Gaussian exponent (default: runA's measure.gauss_c)
    #[arg(long)]
    pub gauss_c: Option<f64>,
    /// Smallest shell radius scanned
    #[arg(long, default_value_t = 2.0)]
    pub l_min: f64,
    /// Cap on δ in time steps
    #[arg(long, default_value_t = Caps::default().delta_steps)]
    pub delta_cap: usize,
    /// Cap on 1/m in cells
    #[arg(long, default_value_t = Caps::default().m_cells)]
    pub m_cap: f64,
    /// Cap on γ in time steps
    #[arg(long, default_value_t = Caps::default().gamma_steps)]
    pub gamma_cap: usize,
}

pub const CERTIFY_HEADER: &str = "name,computed,bound,slack,budget,pass";

pub fn parse_theta(spec: &str, grid: &Grid) -> Result<Field, CliError> {
    if let Some(path) = spec.strip_prefix("csv:") {
        let f = read_field(Path::new(path))?;
        if !f.grid().same_as(grid) {
            return Err(CliError::Input("Θ grid differs from the run grid".into()));
        }
        return Ok(f);
    }
    let p = match spec {
        "bump" => 2.0,
        s => s
            .strip_prefix("bump:")
            .and_then(|p| p.parse::<f64>().ok())
            .filter(|p| *p > 0.0)
            .ok_or_else(|| CliError::Input(format!("unrecognised Θ spec {s:?}")))?,
    };
    Ok(Field::from_fn(*grid, 0.0, |x| {
        let r2 = x[0] * x[0] + x[1] * x[1];
        if r2 < 1.0 {
            (1.0 - r2).powf(p)
        } else {
            0.0
        }
    }))
}

fn align(a: &SpaceTimeField, b: SpaceTimeField) -> Result<SpaceTimeField, CliError> {
    if b.grid().same_as(a.grid()) {
        return Ok(b);
    }
    let r = restrict(&b, a.grid())
        .map_err(|_| CliError::Input("runB must share runA's grid or refine it once".into()))?;
    Ok(SpaceTimeField::from_slices(
        *a.grid(),
        r.t_start(),
        r.dt(),
        r.slices().to_vec(),
    )?)
}

pub fn dual_certify(args: &CertifyArgs) -> Result<Status, CliError> {
    let started = Instant::now();
    let a = read_run(&args.run_a)?;
    let b = read_run(&args.run_b)?;
    let nl = a
        .config
        .nonlinearity()
        .map_err(|e| CliError::Config(vec![e]))?;
    if b.config.nonlinearity().ok().as_ref() != Some(&nl) {
        return Err(CliError::Input("runs use different nonlinearities".into()));
    }
    let gauss_c = args
        .gauss_c
        .or(a.config.measure.as_ref().and_then(|m| m.gauss_c))
        .ok_or_else(|| {
            CliError::Input("no gauss_c: pass --gauss-c or set measure.gauss_c in runA".into())
        })?;
    let u = a.history;
    let v = align(&u, b.history)?;
    let theta = parse_theta(&args.theta, u.grid())?;
    let opts = CertifyOptions {
        gauss_c,
        l_min: args.l_min,
        caps: Caps {
            delta_steps: args.delta_cap,
            m_cells: args.m_cap,
            gamma_steps: args.gamma_cap,
        },
    };
    let rep = certify(&u, &v, &theta, &nl, args.t0, &Budgets::new(args.eps), &opts)?;
    let mut w = create(&args.out)?;
    let body = (|| {
        writeln!(w, "{CERTIFY_HEADER}")?;
        for t in &rep.terms {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                t.name,
                f(t.computed),
                f(t.bound),
                f(t.slack),
                f(t.budget),
                t.pass
            )?;
        }
        w.flush()
    })();
    body.map_err(io_err(&args.out))?;
    let json_path = args.out.with_extension("json");
    let text = serde_json::to_string_pretty(&rep).map_err(|e| CliError::Input(e.to_string()))?;
    fs::write(&json_path, text).map_err(io_err(&json_path))?;
    let status = Status::from_pass(rep.verdict == Verdict::Pass);
    println!(
        "target {:.6e}  certified {:.6e}  eps {:e}  verdict {:?}",
        rep.target, rep.certified, rep.eps, rep.verdict
    );
    if let Some(o) = &rep.obstruction {
        println!("obstruction: {o}");
    }
    write_manifest(
        &manifest_beside(&args.out),
        "dual-certify",
        args,
        started,
        status,
        json!({ "gauss_c": gauss_c, "schedule": rep.schedule, "report": json_path.display().to_string() }),
    )?;
    Ok(status)
}

#[derive(Debug, Args, Serialize)]
pub struct ConvergenceArgs {
    /// Experiment configuration (TOML)
    #[arg(long)]
    pub config: PathBuf,
    /// Output CSV
    #[arg(long)]
    pub out: PathBuf,
}

pub const CONVERGENCE_HEADER: &str = "level,h,dt,error,order";

/// Least-squares slope of `log e` against `log h`.
pub fn fitted_order(h: &[f64], e: &[f64]) -> f64 {
    let x: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = e.iter().map(|v| v.ln()).collect();
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

fn final_slice(h: &SpaceTimeField) -> SpaceTimeField {
    let k = h.len() - 1;
    SpaceTimeField::from_slices(*h.grid(), h.time(k), h.dt(), vec![h.slice(k).to_vec()])
        .expect("one slice")
}

pub fn convergence(args: &ConvergenceArgs) -> Result<Status, CliError> {
    let started = Instant::now();
    let cfg = parse_config(&args.config, Needs::Convergence)?;
    let nl = cfg.nonlinearity().map_err(|e| CliError::Config(vec![e]))?;
    let c = &cfg.convergence;
    let levels = c.levels as u32;
    let mut rows: Vec<(f64, f64, f64)> = Vec::new();
    if c.mode == "neumann" {
        let sol = NeumannSolution::new(c.liquid, c.solid)?;
        for level in 0..levels {
            let mut sc = solve_config(&cfg, level)?;
            sc.store_every = 1;
            let u0 = Field::from_fn(
                sc.grid,
                0.0,
                |x| if x[0] < 0.0 { c.liquid } else { -c.solid },
            );
            let hist = run_from(u0, &sc, &nl)?.history;
            let window = hist.window(0.25 * sc.horizon, sc.horizon);
            let n = window.len().max(1) as f64;
            let err = window
                .map(|k| (numeric_front(&sc.grid, hist.slice(k)) - sol.front(hist.time(k))).abs())
                .sum::<f64>()
                / n;
            rows.push((sc.grid.spacing(), sc.dt, err));
        }
    } else {
        let mu = cfg.measure()?;
        let mut finals = Vec::new();
        for level in 0..=levels {
            let sc = solve_config(&cfg, level)?;
            finals.push((
                sc.grid.spacing(),
                sc.dt,
                final_slice(&run(&mu, &sc, &nl)?.history),
            ));
        }
        for pair in finals.windows(2) {
            let (h, dt, coarse) = &pair[0];
            let fine = restrict(&pair[1].2, coarse.grid())?;
            let g = coarse.grid();
            let err = coarse
                .slice(0)
                .iter()
                .zip(fine.slice(0))
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
                * g.cell_volume();
            rows.push((*h, *dt, err));
        }
    }
    let hs: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let es: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let order = fitted_order(&hs, &es);
    let mut w = create(&args.out)?;
    let body = (|| {
        writeln!(w, "{CONVERGENCE_HEADER}")?;
        for (k, (h, dt, e)) in rows.iter().enumerate() {
            let local = if k == 0 {
                f64::NAN
            } else {
                (rows[k - 1].2 / e).ln() / (rows[k - 1].0 / h).ln()
            };
            writeln!(w, "{k},{},{},{},{}", f(*h), f(*dt), f(*e), f(local))?;
        }
        w.flush()
    })();
    body.map_err(io_err(&args.out))?;
    let status = Status::from_pass(order >= c.min_order);
    println!(
        "errors {es:?}  fitted order {order:.3} (threshold {})",
        c.min_order
    );
    write_manifest(
        &manifest_beside(&args.out),
        "convergence",
        &cfg,
        started,
        status,
        json!({ "fitted_order": order }),
    )?;
    Ok(status)
}
