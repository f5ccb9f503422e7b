//! Implicit Euler enthalpy scheme `u^{k+1} - dt L α(u^{k+1}) = u^k` and the
//! residual checks for its discrete solutions.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{laplacian_values, max_abs, Boundary, Field, Grid, SpaceTimeField};
use crate::linsolve::WeightedSystem;
use crate::measures::SignedMeasure;
use crate::nonlinearity::Nonlinearity;
use crate::testfn::SpaceTimeTest;

#[derive(Debug, Clone, PartialEq)]
pub struct SolveConfig {
    pub grid: Grid,
    pub horizon: f64,
    pub dt: f64,
    pub boundary: Boundary,
    pub newton_tol: f64,
    pub max_newton: usize,
    pub store_every: usize,
}

impl SolveConfig {
    pub fn new(grid: Grid, horizon: f64, dt: f64) -> Self {
        Self {
            grid,
            horizon,
            dt,
            boundary: Boundary::ZeroFlux,
            newton_tol: 1e-12,
            max_newton: 50,
            store_every: 1,
        }
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    pub fn validate(&self, gauss_c: Option<f64>) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::Inadmissible(format!(
                "time step must be positive, got {}",
                self.dt
            )));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::NonPositiveTime(self.horizon));
        }
        if self.store_every == 0 {
            return Err(Error::Inadmissible("store_every must be at least 1".into()));
        }
        if !(self.newton_tol > 0.0) || self.max_newton == 0 {
            return Err(Error::Inadmissible(
                "newton tolerance and iteration cap must be positive".into(),
            ));
        }
        if let Some(c) = gauss_c {
            let limit = 0.25 / c;
            if self.horizon > limit * (1.0 + 1e-12) {
                return Err(Error::Horizon {
                    horizon: self.horizon,
                    limit,
                    gauss_c: c,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepStats {
    pub iterations: usize,
    pub residual: f64,
    pub fallback: bool,
}

/// One implicit step operator on a fixed grid.
pub struct Stepper<'a> {
    pub grid: &'a Grid,
    pub nl: &'a Nonlinearity,
    pub dt: f64,
    pub boundary: Boundary,
    pub tol: f64,
    pub max_iter: usize,
}

fn correction_bc(bc: Boundary) -> Boundary {
    match bc {
        Boundary::ZeroFlux => Boundary::ZeroFlux,
        Boundary::Dirichlet(_) => Boundary::Dirichlet(0.0),
    }
}

impl<'a> Stepper<'a> {
    pub fn new(grid: &'a Grid, nl: &'a Nonlinearity, dt: f64) -> Self {
        Self {
            grid,
            nl,
            dt,
            boundary: Boundary::ZeroFlux,
            tol: 1e-12,
            max_iter: 50,
        }
    }

    pub fn from_config(cfg: &'a SolveConfig, nl: &'a Nonlinearity) -> Self {
        Self {
            grid: &cfg.grid,
            nl,
            dt: cfg.dt,
            boundary: cfg.boundary,
            tol: cfg.newton_tol,
            max_iter: cfg.max_newton,
        }
    }

    fn residual(&self, u: &[f64], u_old: &[f64]) -> Vec<f64> {
        let alpha = self.nl.apply(u);
        let lap = laplacian_values(self.grid, &alpha, self.boundary);
        u.iter()
            .zip(u_old)
            .zip(&lap)
            .map(|((ui, oi), li)| ui - oi - self.dt * li)
            .collect()
    }

    /// Advances `u_old` by one step. A state that already satisfies the
    /// equation is returned unchanged.
    pub fn step(&self, u_old: &[f64]) -> Result<(Vec<f64>, StepStats)> {
        let h = self.grid.spacing();
        let alpha_old = self.nl.apply(u_old);
        let scale = 1.0_f64
            .max(max_abs(u_old))
            .max(self.dt / (h * h) * max_abs(&alpha_old));
        let tol = self.tol * scale;

        let u = u_old.to_vec();
        let f = self.residual(&u, u_old);
        if max_abs(&f) <= tol {
            return Ok((
                u,
                StepStats {
                    iterations: 0,
                    residual: max_abs(&f),
                    fallback: false,
                },
            ));
        }

        let mut iterations = 0;
        let mut theta = None;
        if self.nl.slope_at_infinity() > 0.0 {
            if let Some((t, it)) = self.minimize_energy(u_old, tol)? {
                theta = Some(t);
                iterations = it;
            } else {
                iterations = self.max_iter;
            }
        }
        let fallback = theta.is_none();
        let theta = match theta {
            Some(t) => t,
            None => {
                let mut u = u_old.to_vec();
                self.gauss_seidel(&mut u, u_old, tol)?;
                self.nl.apply(&u)
            }
        };

        // conservative reconstruction: the update is exactly a sum of face fluxes
        let lap = laplacian_values(self.grid, &theta, self.boundary);
        let u_new: Vec<f64> = u_old
            .iter()
            .zip(&lap)
            .map(|(o, l)| o + self.dt * l)
            .collect();
        let residual = max_abs(&self.residual(&u_new, u_old));
        Ok((
            u_new,
            StepStats {
                iterations,
                residual,
                fallback,
            },
        ))
    }

    /// Minimises the strictly convex energy
    /// `sum Φ(θ_i) - u_old_i θ_i + dt/2 |∇_h θ|^2` over temperatures, where
    /// `Φ' = α^{-1}`. Its minimiser is `α(u_new)`. Semismooth Newton with
    /// an exact line search; cells sitting on a flat value of `α` whose
    /// enthalpy stays inside the preimage are held fixed.
    fn minimize_energy(&self, u_old: &[f64], tol: f64) -> Result<Option<(Vec<f64>, usize)>> {
        let n = u_old.len();
        let nl = self.nl;
        let cbc = correction_bc(self.boundary);
        let flats = nl.flat_values();
        let zeros = vec![0.0; n];
        let mut theta = nl.apply(u_old);
        for it in 1..=self.max_iter {
            let lt = laplacian_values(self.grid, &theta, self.boundary);
            let u: Vec<f64> = u_old
                .iter()
                .zip(&lt)
                .map(|(b, l)| b + self.dt * l)
                .collect();
            if it > 1 && max_abs(&self.residual(&u, u_old)) <= tol {
                return Ok(Some((theta, it - 1)));
            }
            let mut pinned = vec![false; n];
            let mut at_kink = vec![false; n];
            let mut grad = vec![0.0; n];
            let mut curv = vec![0.0; n];
            for i in 0..n {
                let (lo, hi) = nl.preimage(theta[i]);
                at_kink[i] = lo < hi;
                if u[i] > hi {
                    grad[i] = hi - u[i];
                    curv[i] = 1.0 / nl.slope(hi);
                } else if u[i] < lo {
                    grad[i] = lo - u[i];
                    curv[i] = 1.0 / nl.slope_left(lo);
                } else if at_kink[i] {
                    pinned[i] = true;
                } else {
                    curv[i] = 1.0 / nl.slope(lo);
                }
            }
            let mut d = vec![0.0; n];
            for _ in 0..8 {
                let active: Vec<bool> = pinned.iter().map(|p| !p).collect();
                let rhs: Vec<f64> = grad.iter().map(|g| -g).collect();
                d = WeightedSystem {
                    grid: self.grid,
                    bc: cbc,
                    active: &active,
                    weight: &curv,
                    dt: self.dt,
                    fixed: &zeros,
                }
                .solve(&rhs, None)?;
                let mut changed = false;
                for i in 0..n {
                    if !pinned[i] && at_kink[i] && d[i] * grad[i] > 0.0 {
                        pinned[i] = true;
                        changed = true;
                    }
                }
                if !changed {
                    break;
                }
                for i in 0..n {
                    if pinned[i] {
                        d[i] = 0.0;
                    }
                }
            }
            let ld = laplacian_values(self.grid, &d, cbc);
            let slope_at = |tau: f64| -> f64 {
                let mut acc = 0.0;
                for i in 0..n {
                    if d[i] == 0.0 {
                        continue;
                    }
                    let (lo, hi) = nl.preimage(theta[i] + tau * d[i]);
                    let beta = if d[i] > 0.0 { hi } else { lo };
                    acc += d[i] * (beta - u[i] - tau * self.dt * ld[i]);
                }
                acc
            };
            if !(slope_at(0.0) < 0.0) {
                return Ok(None);
            }
            let tau = if slope_at(1.0) <= 0.0 {
                1.0
            } else {
                let (mut a, mut b) = (0.0, 1.0);
                for _ in 0..200 {
                    let m = 0.5 * (a + b);
                    if m <= a || m >= b {
                        break;
                    }
                    if slope_at(m) < 0.0 {
                        a = m;
                    } else {
                        b = m;
                    }
                }
                b
            };
            for i in 0..n {
                if d[i] == 0.0 {
                    continue;
                }
                let mut next = theta[i] + tau * d[i];
                for &k in &flats {
                    let tc = (k - theta[i]) / d[i];
                    if tc > 0.0 && (tc - tau).abs() <= 1e-9 * tau {
                        next = k;
                    }
                }
                theta[i] = next;
            }
        }
        let lt = laplacian_values(self.grid, &theta, self.boundary);
        let u: Vec<f64> = u_old
            .iter()
            .zip(&lt)
            .map(|(b, l)| b + self.dt * l)
            .collect();
        if max_abs(&self.residual(&u, u_old)) <= tol {
            return Ok(Some((theta, self.max_iter)));
        }
        Ok(None)
    }

    fn gauss_seidel(&self, u: &mut [f64], u_old: &[f64], tol: f64) -> Result<()> {
        let grid = self.grid;
        let h = grid.spacing();
        let k = self.dt / (h * h);
        let mut alpha = self.nl.apply(u);
        let max_sweeps = 200_000;
        for sweep in 0..max_sweeps {
            for i in 0..u.len() {
                let mut faces = 0.0;
                let mut sum = 0.0;
                for nb in grid.neighbors(i).iter().take(grid.faces_per_cell()) {
                    match (nb, self.boundary) {
                        (Some(j), _) => {
                            faces += 1.0;
                            sum += alpha[*j];
                        }
                        (None, Boundary::ZeroFlux) => {}
                        (None, Boundary::Dirichlet(g)) => {
                            faces += 1.0;
                            sum += g;
                        }
                    }
                }
                u[i] = self.nl.solve_shifted(k * faces, u_old[i] + k * sum);
                alpha[i] = self.nl.eval(u[i]);
            }
            if sweep % 20 == 19 {
                let r = max_abs(&self.residual(u, u_old));
                if r <= tol {
                    return Ok(());
                }
            }
        }
        Err(Error::NewtonDivergence {
            residual: max_abs(&self.residual(u, u_old)),
            iterations: self.max_iter,
        })
    }
}

/// One implicit step with the default tolerances and zero-flux box.
pub fn step(u_old: &Field, nl: &Nonlinearity, dt: f64) -> Result<Field> {
    let (v, _) = Stepper::new(u_old.grid(), nl, dt).step(u_old.values())?;
    Field::new(*u_old.grid(), v, u_old.time() + dt)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    pub mass: f64,
    pub newton_iterations: usize,
    pub residual: f64,
    pub fallback: bool,
}

#[derive(Debug, Clone)]
pub struct Run {
    pub history: SpaceTimeField,
    pub ledger: Vec<StepRecord>,
}

impl Run {
    /// Largest relative drift of the discrete mass from its initial value.
    pub fn mass_drift(&self) -> f64 {
        let m0 = self.history.slice(0).iter().sum::<f64>() * self.history.grid().cell_volume();
        let abs0 = self.history.slice(0).iter().map(|v| v.abs()).sum::<f64>()
            * self.history.grid().cell_volume();
        let scale = m0.abs().max(abs0).max(f64::MIN_POSITIVE);
        self.ledger
            .iter()
            .map(|r| (r.mass - m0).abs() / scale)
            .fold(0.0, f64::max)
    }
}

pub fn run(mu: &SignedMeasure, cfg: &SolveConfig, nl: &Nonlinearity) -> Result<Run> {
    cfg.validate(mu.gauss_c())?;
    let u0 = mu.cell_average(&cfg.grid, 0.0)?;
    run_from(u0, cfg, nl)
}

pub fn run_from(u0: Field, cfg: &SolveConfig, nl: &Nonlinearity) -> Result<Run> {
    cfg.validate(None)?;
    if !u0.grid().same_as(&cfg.grid) {
        return Err(Error::GridMismatch(
            "initial field grid differs from the configured grid".into(),
        ));
    }
    let t0 = u0.time();
    let vol = cfg.grid.cell_volume();
    let stepper = Stepper::from_config(cfg, nl);
    let mut history = SpaceTimeField::new(cfg.grid, t0, cfg.dt * cfg.store_every as f64)?;
    let mut u = u0.into_values();
    history.push(u.clone())?;
    let mut ledger = Vec::with_capacity(cfg.steps());
    for k in 1..=cfg.steps() {
        let (next, stats) = stepper.step(&u)?;
        u = next;
        ledger.push(StepRecord {
            step: k,
            time: t0 + k as f64 * cfg.dt,
            mass: u.iter().sum::<f64>() * vol,
            newton_iterations: stats.iterations,
            residual: stats.residual,
            fallback: stats.fallback,
        });
        if k % cfg.store_every == 0 {
            history.push(u.clone())?;
        }
    }
    Ok(Run { history, ledger })
}

/// Half-width of a centred box leaving a margin where `exp(-c d^2) <= 1e-12`
/// beyond the support of `mu`.
pub fn suggest_half_width(mu: &SignedMeasure, c: f64, support_extent: f64) -> f64 {
    let atoms = mu
        .atoms()
        .iter()
        .map(|a| a.position[0].abs().max(a.position[1].abs()))
        .fold(0.0, f64::max);
    atoms.max(support_extent) + (1e12f64.ln() / c).sqrt()
}

fn check_support(grid: &Grid, phi: &dyn SpaceTimeTest) -> Result<()> {
    let (c, r) = phi.space_support();
    let lo = grid.box_lo();
    let hi = grid.box_hi();
    let axes = grid.dim();
    for a in 0..axes {
        if c[a] - r <= lo[a] || c[a] + r >= hi[a] {
            return Err(Error::Support(format!(
                "spatial support radius {r} around {c:?} leaves the box"
            )));
        }
    }
    Ok(())
}

/// `∬ α(u) Δφ + u φ_t` with slice `k` standing for `(t_k - dt, t_k]` and
/// the test function sampled at the interval midpoint.
pub fn distributional_residual(
    u: &SpaceTimeField,
    nl: &Nonlinearity,
    phi: &dyn SpaceTimeTest,
) -> Result<f64> {
    let grid = u.grid();
    check_support(grid, phi)?;
    let Some((ta, tb)) = phi.time_support() else {
        return Err(Error::Support(
            "test function must have compact support in time".into(),
        ));
    };
    if ta <= u.t_start() || tb >= u.t_end() {
        return Err(Error::Support(format!(
            "time support [{ta}, {tb}] must lie strictly inside ({}, {})",
            u.t_start(),
            u.t_end()
        )));
    }
    let dt = u.dt();
    let vol = grid.cell_volume();
    let mut acc = 0.0;
    for k in 1..u.len() {
        let tm = u.time(k) - 0.5 * dt;
        if tm + 0.5 * dt < ta || tm - 0.5 * dt > tb {
            continue;
        }
        let s = u.slice(k);
        for (i, &ui) in s.iter().enumerate() {
            let x = grid.center(i);
            let lap = phi.laplacian(x, tm);
            let pt = phi.time_derivative(x, tm);
            if lap != 0.0 || pt != 0.0 {
                acc += nl.eval(ui) * lap + ui * pt;
            }
        }
    }
    Ok(acc * vol * dt)
}

/// `∫ u(x, t) ψ(x) dx` at the stored slice nearest to each requested time.
pub fn initial_trace(
    u: &SpaceTimeField,
    psi: impl Fn([f64; 2]) -> f64,
    times: &[f64],
) -> Result<Vec<f64>> {
    let grid = u.grid();
    let weights: Vec<f64> = (0..grid.len()).map(|i| psi(grid.center(i))).collect();
    times
        .iter()
        .map(|&t| {
            let k = u.nearest_index(t)?;
            Ok(u.slice(k)
                .iter()
                .zip(&weights)
                .map(|(a, b)| a * b)
                .sum::<f64>()
                * grid.cell_volume())
        })
        .collect()
}

/// `max |u|` over stored slices with `t_k >= eps`.
pub fn sup_after(u: &SpaceTimeField, eps: f64) -> Result<f64> {
    if eps > u.t_end() + 1e-12 * u.dt() {
        return Err(Error::TimeOutOfRange {
            time: eps,
            start: u.t_start(),
            end: u.t_end(),
        });
    }
    Ok((0..u.len())
        .filter(|&k| u.time(k) >= eps - 1e-12 * u.dt())
        .map(|k| max_abs(u.slice(k)))
        .fold(0.0, f64::max))
}

pub fn l1_distance(grid: &Grid, a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() * grid.cell_volume()
}
