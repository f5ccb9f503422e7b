//! Gaussian barriers on `[1, R]` and their use as flux bounds at the
//! outer sphere for variable-coefficient heat problems.
//!
//! `w` solves `w_t = w_xx` on `(1, R)` with `w(1, t) = 1`, `w(R, t) = 0`,
//! `w(x, 0) = 0`; `w̃` is the explicit two-image supersolution.

use std::f64::consts::PI;

use libm::erfc;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{normal_derivative, BallDomain, Boundary, Field, Grid, SpaceTimeField};
use crate::linsolve::implicit_diffusion;

/// Flux-bound constant `4/√π` shared by every envelope in this crate.
pub const ENVELOPE_CONSTANT: f64 = 4.0 / 1.772_453_850_905_516;

fn check_time(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveTime(t))
    }
}

fn z_pair(x: f64, t: f64, r: f64) -> (f64, f64) {
    let s = 2.0 * t.sqrt();
    ((x - 1.0) / s, (2.0 * r - 1.0 - x) / s)
}

pub fn wtilde(x: f64, t: f64, r: f64) -> Result<f64> {
    check_time(t)?;
    let (z1, z2) = z_pair(x, t, r);
    Ok(2.0 * (erfc(z1) - erfc(z2)))
}

pub fn wtilde_dx(x: f64, t: f64, r: f64) -> Result<f64> {
    check_time(t)?;
    let (z1, z2) = z_pair(x, t, r);
    Ok(-2.0 / (PI * t).sqrt() * ((-z1 * z1).exp() + (-z2 * z2).exp()))
}

pub fn wtilde_dxx(x: f64, t: f64, r: f64) -> Result<f64> {
    check_time(t)?;
    let (z1, z2) = z_pair(x, t, r);
    Ok(2.0 / (PI.sqrt() * t) * (z1 * (-z1 * z1).exp() - z2 * (-z2 * z2).exp()))
}

pub fn wtilde_dt(x: f64, t: f64, r: f64) -> Result<f64> {
    check_time(t)?;
    let (z1, z2) = z_pair(x, t, r);
    // d/dt erfc(z) = z e^{-z^2} / (√π t) for z ∝ t^{-1/2}
    Ok(2.0 / (PI.sqrt() * t) * (z1 * (-z1 * z1).exp() - z2 * (-z2 * z2).exp()))
}

/// `|∂w̃/∂x (R, t)| = (4/√(πt)) exp(-(R-1)^2 / 4t)`.
pub fn wtilde_dx_at_r(t: f64, r: f64) -> Result<f64> {
    check_time(t)?;
    Ok(4.0 / (PI * t).sqrt() * (-(r - 1.0).powi(2) / (4.0 * t)).exp())
}

/// `(4/√π) exp(-R^2 / 8t)`.
pub fn envelope(t: f64, r: f64) -> Result<f64> {
    check_time(t)?;
    Ok(ENVELOPE_CONSTANT * (-r * r / (8.0 * t)).exp())
}

/// Envelope with the constant replaced by one.
pub fn unit_envelope(t: f64, r: f64) -> Result<f64> {
    check_time(t)?;
    Ok((-r * r / (8.0 * t)).exp())
}

#[derive(Debug, Clone, Serialize)]
pub struct AdmissibleRadius {
    pub horizon: f64,
    pub r0: f64,
    /// Smallest scanned radius where the bound also holds with constant one.
    pub r0_unit_constant: Option<f64>,
}

/// True when `w̃(1, t) > 1` and `|w̃_x(R, t)| <= envelope(t, R)` on every
/// sampled `t` in `(0, T]` (log-spaced plus uniform samples).
pub fn radius_is_admissible(r: f64, horizon: f64, unit_constant: bool) -> bool {
    if !(r > 1.0) {
        return false;
    }
    let samples = time_samples(horizon);
    samples.iter().all(|&t| {
        let inner = wtilde(1.0, t, r).map(|v| v > 1.0).unwrap_or(false);
        let flux = wtilde_dx_at_r(t, r).unwrap_or(f64::INFINITY);
        let env = if unit_constant {
            unit_envelope(t, r)
        } else {
            envelope(t, r)
        }
        .unwrap_or(0.0);
        inner && flux <= env
    })
}

fn time_samples(horizon: f64) -> Vec<f64> {
    let mut v: Vec<f64> = (0..400)
        .map(|k| horizon * 10f64.powf(-8.0 * (1.0 - k as f64 / 399.0)))
        .collect();
    v.extend((1..=400).map(|k| horizon * k as f64 / 400.0));
    v
}

/// Scans `R = 1 + k * step` upward and returns the first admissible radius
/// for the horizon `T`.
pub fn admissible_radius(horizon: f64, step: f64) -> Result<AdmissibleRadius> {
    check_time(horizon)?;
    let find = |unit: bool| -> Option<f64> {
        (1..200_000)
            .map(|k| 1.0 + k as f64 * step)
            .take_while(|r| *r < 1.0 + 50.0 * (1.0 + horizon.sqrt()))
            .find(|&r| radius_is_admissible(r, horizon, unit))
    };
    let r0 = find(false).ok_or_else(|| Error::Inadmissible("no admissible radius found".into()))?;
    Ok(AdmissibleRadius {
        horizon,
        r0,
        r0_unit_constant: find(true),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierParams {
    pub radius: f64,
    pub horizon: f64,
    /// Number of intervals on `[1, R]`.
    pub intervals: usize,
    pub dt: f64,
}

impl BarrierParams {
    pub fn spacing(&self) -> f64 {
        (self.radius - 1.0) / self.intervals as f64
    }

    fn validate(&self) -> Result<()> {
        if !(self.radius > 1.0) {
            return Err(Error::Inadmissible(format!(
                "barrier radius must exceed 1, got {}",
                self.radius
            )));
        }
        if self.intervals < 3 {
            return Err(Error::Inadmissible(
                "barrier grid needs at least 3 intervals".into(),
            ));
        }
        check_time(self.horizon)?;
        check_time(self.dt)
    }
}

/// Implicit Euler solve on the nodes `1 + j (R-1)/N`; stored as a field
/// whose cell centres are those nodes, one slice per step.
pub fn solve_w(p: &BarrierParams) -> Result<SpaceTimeField> {
    p.validate()?;
    let hw = p.spacing();
    let nodes = p.intervals + 1;
    let grid = Grid::new_1d(1.0 - 0.5 * hw, hw, nodes)?;
    let mask: Vec<bool> = (0..nodes).map(|j| j > 0 && j < p.intervals).collect();
    let mut outside = vec![0.0; nodes];
    outside[0] = 1.0;
    let coef = vec![1.0; nodes];
    let steps = (p.horizon / p.dt).round() as usize;
    let mut out = SpaceTimeField::new(grid, 0.0, p.dt)?;
    let mut w = vec![0.0; nodes];
    out.push(w.clone())?;
    for _ in 0..steps {
        w = implicit_diffusion(&grid, Boundary::ZeroFlux, &mask, &coef, p.dt, &w, &outside)?;
        out.push(w.clone())?;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct FluxRow {
    pub t: f64,
    pub numeric_flux: f64,
    pub closed_form_flux: f64,
    pub envelope: f64,
    pub slack: f64,
    pub pass: bool,
    pub unit_constant_holds: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct FluxReport {
    pub rows: Vec<FluxRow>,
    pub first_failure: Option<f64>,
    /// Whether the bound with constant one held at every stored time; this
    /// is reported, not required.
    pub unit_constant_holds: bool,
    pub monotone_in_time: bool,
    pub within_unit_interval: bool,
}

impl FluxReport {
    pub fn passed(&self) -> bool {
        self.first_failure.is_none()
    }
}

/// Compares the one-sided numeric flux at `x = R` with the envelope, slack
/// `10 h^2 max|w|`.
pub fn check_flux_bound(w: &SpaceTimeField, p: &BarrierParams) -> Result<FluxReport> {
    let hw = w.grid().spacing();
    let n = w.grid().len();
    if n < 3 {
        return Err(Error::Grid("barrier field too short".into()));
    }
    let wmax = w.max_abs();
    let slack = 10.0 * hw * hw * wmax;
    let mut rows = Vec::with_capacity(w.len());
    let mut monotone = true;
    let mut bounded = true;
    for k in 0..w.len() {
        let s = w.slice(k);
        bounded &= s.iter().all(|v| (-1e-12..=1.0 + 1e-12).contains(v));
        if k > 0 {
            monotone &= s.iter().zip(w.slice(k - 1)).all(|(a, b)| *a >= b - 1e-12);
        }
        let t = w.time(k);
        if t <= 0.0 {
            continue;
        }
        let flux = ((3.0 * s[n - 1] - 4.0 * s[n - 2] + s[n - 3]) / (2.0 * hw)).abs();
        let env = envelope(t, p.radius)?;
        rows.push(FluxRow {
            t,
            numeric_flux: flux,
            closed_form_flux: wtilde_dx_at_r(t, p.radius)?,
            envelope: env,
            slack,
            pass: flux <= env + slack,
            unit_constant_holds: flux <= unit_envelope(t, p.radius)? + slack,
        });
    }
    Ok(FluxReport {
        first_failure: rows.iter().find(|r| !r.pass).map(|r| r.t),
        unit_constant_holds: rows.iter().all(|r| r.unit_constant_holds),
        monotone_in_time: monotone,
        within_unit_interval: bounded,
        rows,
    })
}

/// Ball, time mesh and horizon for the two-dimensional comparison runs.
#[derive(Debug, Clone)]
pub struct ComparisonSetup {
    pub grid: Grid,
    pub radius: f64,
    pub horizon: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ShellFluxRow {
    pub t: f64,
    pub max_flux: f64,
    pub envelope: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    /// `max (h - W)` over ball cells with `x_1 > 1` and all times.
    pub max_excess: f64,
    pub slack: f64,
    pub comparison_holds: bool,
    pub flux: Vec<ShellFluxRow>,
    pub flux_slack: f64,
    pub flux_holds: bool,
    pub constant: f64,
    pub max_flux_ratio: f64,
}

impl ComparisonReport {
    pub fn passed(&self) -> bool {
        self.comparison_holds && self.flux_holds
    }
}

/// Discrete barrier `W(x, t) = w(x_1, t)` on the columns of a 2D grid: one
/// on columns with `x_1 <= 1`, zero on columns past `R`, and the
/// constant-coefficient implicit scheme in between. Returns one slice per
/// time step, expanded to every cell.
pub fn column_barrier(setup: &ComparisonSetup) -> Result<SpaceTimeField> {
    let grid = &setup.grid;
    let [nx, ny] = grid.cells();
    let h = grid.spacing();
    let x0 = grid.origin()[0];
    let line = Grid::new_1d(x0, h, nx)?;
    let xs: Vec<f64> = (0..nx).map(|i| x0 + (i as f64 + 0.5) * h).collect();
    let mask: Vec<bool> = xs.iter().map(|&x| x > 1.0 && x <= setup.radius).collect();
    let outside: Vec<f64> = xs
        .iter()
        .map(|&x| if x <= 1.0 { 1.0 } else { 0.0 })
        .collect();
    let coef = vec![1.0; nx];
    let steps = (setup.horizon / setup.dt).round() as usize;
    let mut w: Vec<f64> = outside
        .iter()
        .zip(&mask)
        .map(|(o, m)| if *m { 0.0 } else { *o })
        .collect();
    let expand = |w: &[f64]| -> Vec<f64> { (0..nx * ny).map(|idx| w[idx % nx]).collect() };
    let mut out = SpaceTimeField::new(*grid, 0.0, setup.dt)?;
    out.push(expand(&w))?;
    for _ in 0..steps {
        w = implicit_diffusion(
            &line,
            Boundary::ZeroFlux,
            &mask,
            &coef,
            setup.dt,
            &w,
            &outside,
        )?;
        out.push(expand(&w))?;
    }
    Ok(out)
}

/// Solves `h_t = d(x, t) Δh` on the ball with zero shell values by the
/// implicit scheme `(I - dt D^{k+1} L) h^{k+1} = h^k`.
pub fn solve_variable_heat(
    setup: &ComparisonSetup,
    ball: &BallDomain,
    f: &Field,
    t_start: f64,
    d: &dyn Fn([f64; 2], f64) -> f64,
) -> Result<SpaceTimeField> {
    let grid = &setup.grid;
    let steps = ((setup.horizon - t_start) / setup.dt).round() as usize;
    let zeros = vec![0.0; grid.len()];
    let mut h: Vec<f64> = f
        .values()
        .iter()
        .enumerate()
        .map(|(i, v)| if ball.contains(i) { *v } else { 0.0 })
        .collect();
    let mut out = SpaceTimeField::new(*grid, t_start, setup.dt)?;
    out.push(h.clone())?;
    for k in 1..=steps {
        let t = t_start + k as f64 * setup.dt;
        let coef: Vec<f64> = (0..grid.len()).map(|i| d(grid.center(i), t)).collect();
        h = implicit_diffusion(
            grid,
            Boundary::Dirichlet(0.0),
            ball.mask(),
            &coef,
            setup.dt,
            &h,
            &zeros,
        )?;
        out.push(h.clone())?;
    }
    Ok(out)
}

fn shell_flux_rows(
    h: &SpaceTimeField,
    ball: &BallDomain,
    radius: f64,
) -> Result<Vec<ShellFluxRow>> {
    let mut rows = Vec::with_capacity(h.len());
    for k in 1..h.len() {
        let t = h.time(k);
        let nd = normal_derivative(&h.field(k), ball)?;
        let max_flux = nd.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        rows.push(ShellFluxRow {
            t,
            max_flux,
            envelope: envelope(t, radius)?,
        });
    }
    Ok(rows)
}

fn validate_datum(f: &Field, grid: &Grid) -> Result<()> {
    if !f.grid().same_as(grid) {
        return Err(Error::GridMismatch(
            "datum lives on a different grid".into(),
        ));
    }
    for (i, &v) in f.values().iter().enumerate() {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Inadmissible(format!(
                "datum value {v} outside [0, 1]"
            )));
        }
        if v != 0.0 && grid.radius_of(i) > 1.0 + 1e-12 {
            return Err(Error::Inadmissible(
                "datum must be supported in the unit ball".into(),
            ));
        }
    }
    Ok(())
}

/// Runs the variable-coefficient problem from `f` and checks `h <= W` on
/// `B(R) ∩ {x_1 > 1}` and the shell flux against the envelope.
pub fn comparison_h_vs_w(
    setup: &ComparisonSetup,
    f: &Field,
    d: &dyn Fn([f64; 2], f64) -> f64,
) -> Result<(ComparisonReport, SpaceTimeField)> {
    validate_datum(f, &setup.grid)?;
    let ball = BallDomain::new(&setup.grid, setup.radius)?;
    let h = solve_variable_heat(setup, &ball, f, 0.0, d)?;
    let w = column_barrier(setup)?;
    let report = compare_with_barrier(setup, &ball, &h, &w, 0)?;
    Ok((report, h))
}

fn compare_with_barrier(
    setup: &ComparisonSetup,
    ball: &BallDomain,
    h: &SpaceTimeField,
    w: &SpaceTimeField,
    offset: usize,
) -> Result<ComparisonReport> {
    let grid = &setup.grid;
    let hs = grid.spacing();
    let region: Vec<usize> = ball
        .interior()
        .iter()
        .copied()
        .filter(|&i| grid.center(i)[0] > 1.0)
        .collect();
    let mut max_excess = f64::NEG_INFINITY;
    for k in 0..h.len() {
        let hk = h.slice(k);
        let wk = w.slice(k + offset);
        for &i in &region {
            max_excess = max_excess.max(hk[i] - wk[i]);
        }
    }
    let slack = 10.0 * hs * hs * h.max_abs() + 1e-10;
    let flux = shell_flux_rows(h, ball, setup.radius)?;
    let flux_slack = 10.0 * hs * hs;
    let flux_holds = flux.iter().all(|r| r.max_flux <= r.envelope + flux_slack);
    let max_flux_ratio = flux
        .iter()
        .map(|r| r.max_flux / (r.envelope + flux_slack))
        .fold(0.0, f64::max);
    Ok(ComparisonReport {
        max_excess,
        slack,
        comparison_holds: max_excess <= slack,
        flux,
        flux_slack,
        flux_holds,
        constant: ENVELOPE_CONSTANT,
        max_flux_ratio,
    })
}

/// Continues from `h(·, T1)` with the constant-coefficient heat equation on
/// `(T1, T)` and checks the shell flux bound; when the restart datum lies
/// below the barrier at `T1` the barrier comparison is checked too.
pub fn restart_bound(
    setup: &ComparisonSetup,
    h_at_t1: &Field,
    t1: f64,
) -> Result<ComparisonReport> {
    let ball = BallDomain::new(&setup.grid, setup.radius)?;
    let r = solve_variable_heat(setup, &ball, h_at_t1, t1, &|_, _| 1.0)?;
    let w = column_barrier(setup)?;
    let offset = (t1 / setup.dt).round() as usize;
    if offset + r.len() > w.len() {
        return Err(Error::Region(
            "restart window exceeds the barrier horizon".into(),
        ));
    }
    compare_with_barrier(setup, &ball, &r, &w, offset)
}

/// Rotates a square-grid field by 90 degrees about the origin.
pub fn rotate_quarter(f: &Field) -> Result<Field> {
    let g = f.grid();
    let [nx, ny] = g.cells();
    if g.dim() != 2 || nx != ny {
        return Err(Error::Grid("rotation needs a square 2D grid".into()));
    }
    let mut out = vec![0.0; g.len()];
    for j in 0..ny {
        for i in 0..nx {
            out[g.index(nx - 1 - j, i)] = f.values()[g.index(i, j)];
        }
    }
    Field::new(*g, out, f.time())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for k in 1..n {
            s += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn wtilde_vanishes_at_r_and_exceeds_one_at_one() {
        for &t in &[0.01, 0.3, 1.0, 5.0] {
            assert!(wtilde(10.0, t, 10.0).unwrap().abs() < 1e-15);
        }
        assert!(wtilde(1.0, 0.5, 10.0).unwrap() > 1.0);
        assert!(wtilde(1.0, 0.0, 10.0).is_err());
    }

    #[test]
    fn wtilde_matches_defining_integral() {
        let (r, t) = (4.0, 0.7);
        for &x in &[1.0, 1.5, 2.5, 3.9] {
            let k = |s: f64| {
                4.0 / (4.0 * PI * t).sqrt()
                    * ((-(x - s).powi(2) / (4.0 * t)).exp()
                        - (-(x + s - 2.0 * r).powi(2) / (4.0 * t)).exp())
            };
            let v = simpson(&k, -30.0, 1.0, 20_000);
            assert!((v - wtilde(x, t, r).unwrap()).abs() < 1e-10);
        }
    }

    #[test]
    fn heat_equation_and_flux_formula() {
        for k in 0..20 {
            let x = 1.0 + 0.45 * k as f64;
            let t = 0.05 + 0.1 * k as f64;
            let r = 10.0;
            let lhs = wtilde_dxx(x, t, r).unwrap();
            let e = 1e-4;
            let fd = (wtilde(x, t + e, r).unwrap() - wtilde(x, t - e, r).unwrap()) / (2.0 * e);
            assert!((fd - lhs).abs() < 1e-6);
            assert!((wtilde_dt(x, t, r).unwrap() - lhs).abs() < 1e-12);
        }
        let d = wtilde_dx(10.0, 1.0, 10.0).unwrap().abs();
        assert!((d - wtilde_dx_at_r(1.0, 10.0).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn flux_scaling_identity() {
        let (t, r) = (0.3, 5.0);
        let ratio = wtilde_dx_at_r(4.0 * t, 2.0 * r - 1.0).unwrap() / wtilde_dx_at_r(t, r).unwrap();
        assert!((ratio - 0.5).abs() < 1e-14);
        assert!(wtilde_dx_at_r(1e-4, 3.0).unwrap() < 1e-300);
    }

    #[test]
    fn envelope_monotonicity() {
        assert!(envelope(0.5, 3.0).unwrap() > envelope(0.5, 4.0).unwrap());
        assert!(envelope(0.5, 3.0).unwrap() < envelope(0.6, 3.0).unwrap());
    }

    #[test]
    fn admissible_radius_for_unit_horizon() {
        let a = admissible_radius(1.0, 0.01).unwrap();
        assert!(a.r0 > 2.0 + 2f64.sqrt() && a.r0 < 4.0, "{}", a.r0);
        assert!(radius_is_admissible(10.0, 1.0, false));
        assert!(!radius_is_admissible(1.2, 1.0, false));
    }

    #[test]
    fn barrier_solution_properties() {
        let p = BarrierParams {
            radius: 4.0,
            horizon: 20.0,
            intervals: 60,
            dt: 0.05,
        };
        let w = solve_w(&p).unwrap();
        let rep = check_flux_bound(&w, &p).unwrap();
        assert!(rep.monotone_in_time && rep.within_unit_interval);
        let last = w.slice(w.len() - 1);
        for (j, v) in last.iter().enumerate() {
            let x = 1.0 + j as f64 * p.spacing();
            assert!((v - (4.0 - x) / 3.0).abs() < 1e-3);
        }
    }

    #[test]
    fn small_radius_flags_failure() {
        let p = BarrierParams {
            radius: 1.3,
            horizon: 1.0,
            intervals: 30,
            dt: 0.01,
        };
        let w = solve_w(&p).unwrap();
        let rep = check_flux_bound(&w, &p).unwrap();
        assert!(!rep.passed());
        assert!(rep.first_failure.is_some());
    }

    #[test]
    fn rotation_round_trip() {
        let g = Grid::new_2d([-1.0, -1.0], 0.25, [8, 8]).unwrap();
        let f = Field::from_fn(g, 0.0, |x| x[0] + 3.0 * x[1]);
        let mut r = f.clone();
        for _ in 0..4 {
            r = rotate_quarter(&r).unwrap();
        }
        assert_eq!(r, f);
        let q = rotate_quarter(&f).unwrap();
        // a quarter turn maps (x, y) to (-y, x)
        let src = g.cell_of([0.375, -0.625]).unwrap();
        let dst = g.cell_of([0.625, 0.375]).unwrap();
        assert_eq!(q.values()[dst], f.values()[src]);
    }
}
