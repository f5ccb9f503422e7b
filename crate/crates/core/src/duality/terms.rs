use serde::Serialize;

use super::coefficient::DualCoefficient;
use crate::barriers::ENVELOPE_CONSTANT;
use crate::error::{Error, Result};
use crate::grid::{
    gradient_energy, laplacian_masked, BallDomain, Boundary, Field, Grid, SpaceTimeField,
};
use crate::linsolve::implicit_diffusion;
use crate::nonlinearity::Nonlinearity;

/// Two discrete solutions on one grid and time mesh, with the differences
/// `a = α(u) - α(v)` and `w = u - v` precomputed.
#[derive(Debug, Clone)]
pub struct Pair {
    pub grid: Grid,
    pub dt: f64,
    pub a: Vec<Vec<f64>>,
    pub w: Vec<Vec<f64>>,
    pub alpha_u: SpaceTimeField,
    pub alpha_v: SpaceTimeField,
    /// `a` at infinity; `q` diffuses with this slope.
    pub slope: f64,
    /// Sup of `|a - slope * w|` over every stored value, capped by `2B`.
    pub kappa: f64,
}

impl Pair {
    pub fn new(u: &SpaceTimeField, v: &SpaceTimeField, nl: &Nonlinearity) -> Result<Self> {
        u.check_compatible(v)?;
        if u.t_start().abs() > 1e-12 {
            return Err(Error::Region(
                "solution histories must start at t = 0".into(),
            ));
        }
        if nl.lipschitz() > 1.0 + 1e-12 {
            return Err(Error::Inadmissible(format!(
                "the barrier requires a Lipschitz constant <= 1, got {}",
                nl.lipschitz()
            )));
        }
        let slope = nl.slope_at_infinity();
        if !(slope > 0.0) {
            return Err(Error::Inadmissible(
                "slope at infinity must be positive".into(),
            ));
        }
        let alpha_u = u.map(|x| nl.eval(x));
        let alpha_v = v.map(|x| nl.eval(x));
        let diff = |p: &[Vec<f64>], q: &[Vec<f64>]| -> Vec<Vec<f64>> {
            p.iter()
                .zip(q)
                .map(|(x, y)| x.iter().zip(y).map(|(s, t)| s - t).collect())
                .collect()
        };
        let a = diff(alpha_u.slices(), alpha_v.slices());
        let w = diff(u.slices(), v.slices());
        let kappa = a
            .iter()
            .flatten()
            .zip(w.iter().flatten())
            .map(|(x, y)| (x - slope * y).abs())
            .fold(0.0, f64::max)
            .min(2.0 * nl.offset_bound());
        Ok(Self {
            grid: *u.grid(),
            dt: u.dt(),
            a,
            w,
            alpha_u,
            alpha_v,
            slope,
            kappa,
        })
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    /// Index of the slice at time `t`, which must be on the mesh.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let k = (t / self.dt).round();
        if k < 0.0 || k as usize >= self.len() {
            return Err(Error::TimeOutOfRange {
                time: t,
                start: 0.0,
                end: self.time(self.len() - 1),
            });
        }
        if (k * self.dt - t).abs() > 1e-9 * self.dt.max(t.abs()) + 1e-12 {
            return Err(Error::OffMesh(t));
        }
        Ok(k as usize)
    }

    /// `Σ_B w^k Θ vol`.
    pub fn pairing(&self, k: usize, theta: &[f64], ball: &BallDomain) -> f64 {
        let w = &self.w[k];
        ball.interior()
            .iter()
            .map(|&i| w[i] * theta[i])
            .sum::<f64>()
            * self.grid.cell_volume()
    }
}

/// A computed representation term next to its a-priori bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TermValue {
    pub signed: f64,
    pub computed: f64,
    pub bound: f64,
    pub slack: f64,
}

impl TermValue {
    fn new(signed: f64, bound: f64, slack: f64) -> Self {
        Self {
            signed,
            computed: signed.abs(),
            bound,
            slack,
        }
    }

    pub fn holds(&self) -> bool {
        self.computed <= self.bound + self.slack
    }
}

/// Checks that `Θ` lives on the ball grid, is non-negative and vanishes
/// outside the unit ball.
pub fn check_theta(theta: &Field, ball: &BallDomain) -> Result<()> {
    let g = ball.grid();
    if !g.same_as(theta.grid()) {
        return Err(Error::GridMismatch(
            "Θ and the ball live on different grids".into(),
        ));
    }
    for (i, &v) in theta.values().iter().enumerate() {
        if v < 0.0 || !v.is_finite() {
            return Err(Error::Support(format!(
                "Θ must be finite and non-negative, cell {i} has {v}"
            )));
        }
        if v != 0.0 && g.radius_of(i) > 1.0 + 1e-12 {
            return Err(Error::Support(format!(
                "Θ is non-zero at cell {i} outside the unit ball"
            )));
        }
    }
    Ok(())
}

/// Backward solve of `φ_t + c_m Δφ = 0` on the ball with `φ = 0` on the
/// shell and `φ(t0) = Θ`: `(I - dt c_m^{k+1} L_B) φ^k = φ^{k+1}` for
/// `k` from the `t0` index down to the `delta` index. Slices start at
/// `delta`.
pub fn solve_dual(
    coef: &DualCoefficient,
    theta: &Field,
    ball: &BallDomain,
    t0: f64,
    delta: f64,
) -> Result<SpaceTimeField> {
    check_theta(theta, ball)?;
    if !coef.cm.grid().same_as(ball.grid()) {
        return Err(Error::GridMismatch(
            "coefficient and ball live on different grids".into(),
        ));
    }
    let top = coef.cm.index_of(t0)?;
    let bottom = coef.cm.index_of(delta)?;
    if bottom > top {
        return Err(Error::Region(format!("delta {delta} exceeds t0 {t0}")));
    }
    backward(
        ball,
        coef.cm.dt(),
        theta.values(),
        top - bottom,
        |k| coef.cm.slice(bottom + k + 1),
        coef.cm.time(bottom),
    )
}

/// Constant-slope backward heat `(I - dt a L_B) q^k = q^{k+1}` from `q = φ(δ)`
/// at slice `steps` down to slice 0 (time 0).
pub fn solve_q(
    phi_delta: &Field,
    ball: &BallDomain,
    slope: f64,
    dt: f64,
    steps: usize,
) -> Result<SpaceTimeField> {
    let coef = vec![slope; ball.grid().len()];
    backward(ball, dt, phi_delta.values(), steps, |_| &coef, 0.0)
}

fn backward<'c>(
    ball: &BallDomain,
    dt: f64,
    end: &[f64],
    steps: usize,
    coef: impl Fn(usize) -> &'c [f64],
    t_start: f64,
) -> Result<SpaceTimeField> {
    let g = ball.grid();
    let mask = ball.mask();
    let zero = vec![0.0; g.len()];
    let mut out = vec![Vec::new(); steps + 1];
    out[steps] = end
        .iter()
        .zip(mask)
        .map(|(&v, &m)| if m { v } else { 0.0 })
        .collect();
    for k in (0..steps).rev() {
        out[k] = implicit_diffusion(g, Boundary::ZeroFlux, mask, coef(k), dt, &out[k + 1], &zero)?;
    }
    SpaceTimeField::from_slices(*g, t_start, dt, out)
}

/// Discrete energy balance of the dual solve:
/// `½|∇φ(δ)|² + Σ dt c_m |L_B φ|² + defect = ½|∇Θ|²` with `defect >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyBalance {
    pub initial: f64,
    pub dissipation: f64,
    pub terminal: f64,
    /// `terminal - initial - dissipation`.
    pub residual: f64,
}

impl EnergyBalance {
    pub fn dissipative(&self) -> bool {
        self.dissipation <= self.terminal * (1.0 + 1e-12)
    }
}

pub fn energy_identity(
    phi: &SpaceTimeField,
    coef: &DualCoefficient,
    ball: &BallDomain,
) -> Result<EnergyBalance> {
    let base = coef.cm.index_of(phi.t_start())?;
    let cm = |k: usize| coef.cm.slice(base + k);
    Ok(balance(phi, ball, cm))
}

fn balance<'c>(
    phi: &SpaceTimeField,
    ball: &BallDomain,
    coef: impl Fn(usize) -> &'c [f64],
) -> EnergyBalance {
    let g = ball.grid();
    let mask = ball.mask();
    let vol = g.cell_volume();
    let n = phi.len();
    let mut dissipation = 0.0;
    for k in 0..n - 1 {
        let lap = laplacian_masked(g, phi.slice(k), mask);
        let c = coef(k + 1);
        dissipation += ball
            .interior()
            .iter()
            .map(|&i| c[i] * lap[i] * lap[i])
            .sum::<f64>();
    }
    dissipation *= vol * phi.dt();
    let initial = gradient_energy(g, phi.slice(0), mask);
    let terminal = gradient_energy(g, phi.slice(n - 1), mask);
    EnergyBalance {
        initial,
        dissipation,
        terminal,
        residual: terminal - initial - dissipation,
    }
}

/// Interior sum of `III = Σ dt Σ_B [L_B φ^k a^{k+1} + w^{k+1}(φ^{k+1} - φ^k)/dt]`
/// over `(δ, t0]` and its Cauchy-Schwarz bound
/// `sup|w| (Σ dt c_m |L_B φ|²)^{1/2} j^{1/2}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThirdTerm {
    pub value: TermValue,
    pub sup_w: f64,
    pub dissipation: f64,
    pub j: f64,
}

pub fn bound_iii(
    pair: &Pair,
    phi: &SpaceTimeField,
    coef: &DualCoefficient,
    ball: &BallDomain,
) -> Result<ThirdTerm> {
    let g = ball.grid();
    let vol = g.cell_volume();
    let base = pair.index_of(phi.t_start())?;
    let n = phi.len();
    let (mut signed, mut magnitude, mut sup_w) = (0.0, 0.0, 0.0f64);
    for k in 0..n - 1 {
        let kk = base + k + 1;
        let lap = laplacian_masked(g, phi.slice(k), ball.mask());
        let (a, w) = (&pair.a[kk], &pair.w[kk]);
        let (p0, p1) = (phi.slice(k), phi.slice(k + 1));
        for &i in ball.interior() {
            let x = pair.dt * lap[i] * a[i];
            let y = w[i] * (p1[i] - p0[i]);
            signed += x + y;
            magnitude += x.abs() + y.abs();
            sup_w = sup_w.max(w[i].abs());
        }
    }
    let energy = energy_identity(phi, coef, ball)?;
    let j = coef.j_value(ball, base + 1..base + n);
    let bound = sup_w * energy.dissipation.sqrt() * j.sqrt();
    Ok(ThirdTerm {
        value: TermValue::new(signed * vol, bound, 1e-9 * magnitude * vol),
        sup_w,
        dissipation: energy.dissipation,
        j,
    })
}

/// `Σ_k dt Σ_faces a_outer^{k+1} ψ_inner^k h^{n-2}` for `ψ` slices
/// `lo..hi` (pair indices): the discrete shell flux term.
fn shell_sum(pair: &Pair, psi: &SpaceTimeField, base: usize, ball: &BallDomain) -> (f64, f64) {
    let g = ball.grid();
    let scale = g.cell_volume() / (g.spacing() * g.spacing());
    let (mut signed, mut weight) = (0.0, 0.0);
    for k in 0..psi.len() - 1 {
        let a = &pair.a[base + k + 1];
        let p = psi.slice(k);
        for f in ball.faces() {
            signed += a[f.outer] * p[f.inner];
            weight += a[f.outer].abs();
        }
    }
    (
        signed * scale * pair.dt,
        weight * g.face_measure() * pair.dt,
    )
}

/// `Σ dt Σ_faces h^{n-1} |a_outer| exp(-c r_outer²)` over slices `lo..hi`.
pub fn shell_majorant(
    pair: &Pair,
    ball: &BallDomain,
    gauss_c: f64,
    steps: std::ops::Range<usize>,
) -> f64 {
    let g = ball.grid();
    let weights: Vec<f64> = ball
        .faces()
        .iter()
        .map(|f| (-gauss_c * g.radius_of(f.outer).powi(2)).exp())
        .collect();
    let mut acc = 0.0;
    for k in steps {
        let a = &pair.a[k];
        acc += ball
            .faces()
            .iter()
            .zip(&weights)
            .map(|(f, wt)| a[f.outer].abs() * wt)
            .sum::<f64>();
    }
    acc * g.face_measure() * pair.dt
}

fn max_shell_radius(ball: &BallDomain) -> f64 {
    let g = ball.grid();
    ball.shell()
        .iter()
        .map(|&s| g.radius_of(s))
        .fold(ball.radius(), f64::max)
}

/// `C ‖Θ‖ exp(c r_shell² - R²/(8 s))` with `s` the largest dual age.
pub fn envelope_factor(ball: &BallDomain, theta_sup: f64, gauss_c: f64, age: f64) -> f64 {
    let r = ball.radius();
    let rs = max_shell_radius(ball);
    ENVELOPE_CONSTANT * theta_sup * (gauss_c * rs * rs - r * r / (8.0 * age)).exp()
}

fn flux_slack(ball: &BallDomain, theta_sup: f64, dt: f64) -> f64 {
    let h = ball.grid().spacing();
    10.0 * (h * h + dt) * theta_sup
}

/// Shell term of the dual over `(δ, t0)` against the envelope bound.
pub fn bound_ii(
    pair: &Pair,
    phi: &SpaceTimeField,
    theta: &Field,
    ball: &BallDomain,
    gauss_c: f64,
    t0: f64,
) -> Result<TermValue> {
    let base = pair.index_of(phi.t_start())?;
    let (signed, weight) = shell_sum(pair, phi, base, ball);
    let age = t0 - phi.t_start();
    let sup = theta.max_abs();
    let s = shell_majorant(pair, ball, gauss_c, base + 1..base + phi.len());
    let bound = if age > 0.0 {
        envelope_factor(ball, sup, gauss_c, age) * s
    } else {
        0.0
    };
    Ok(TermValue::new(
        signed,
        bound,
        flux_slack(ball, sup, pair.dt) * weight,
    ))
}

/// Shell term of `q` over `(γ, δ)`; `q` slices start at time 0.
pub fn bound_i2(
    pair: &Pair,
    q: &SpaceTimeField,
    theta: &Field,
    ball: &BallDomain,
    gauss_c: f64,
    t0: f64,
    gamma: usize,
) -> Result<TermValue> {
    let tail = SpaceTimeField::from_slices(
        *q.grid(),
        q.time(gamma),
        q.dt(),
        q.slices()[gamma..].to_vec(),
    )?;
    let (signed, weight) = shell_sum(pair, &tail, gamma, ball);
    let sup = theta.max_abs();
    let s = shell_majorant(pair, ball, gauss_c, gamma + 1..q.len());
    let bound = envelope_factor(ball, sup, gauss_c, t0 - q.time(gamma)) * s;
    Ok(TermValue::new(
        signed,
        bound,
        flux_slack(ball, sup, pair.dt) * weight,
    ))
}

/// The steps of the `I3` bound, each checked separately.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChainCheck {
    /// `Σ dt a |L_B q|²`.
    pub q_dissipation: f64,
    pub half_grad_phi_delta: f64,
    pub half_grad_theta: f64,
    pub holds: bool,
}

pub fn bound_i3(
    pair: &Pair,
    q: &SpaceTimeField,
    theta: &Field,
    ball: &BallDomain,
    gamma: usize,
) -> Result<(TermValue, ChainCheck)> {
    let g = ball.grid();
    let vol = g.cell_volume();
    let top = q.len() - 1;
    let (mut signed, mut magnitude) = (0.0, 0.0);
    for k in gamma..top {
        let lap = laplacian_masked(g, q.slice(k), ball.mask());
        let (a, w) = (&pair.a[k + 1], &pair.w[k + 1]);
        let (p0, p1) = (q.slice(k), q.slice(k + 1));
        for &i in ball.interior() {
            let x = pair.dt * lap[i] * a[i];
            let y = w[i] * (p1[i] - p0[i]);
            signed += x + y;
            magnitude += x.abs() + y.abs();
        }
    }
    let coef = vec![pair.slope; g.len()];
    let energy = balance(q, ball, |_| &coef);
    let half_theta = gradient_energy(g, theta.values(), ball.mask());
    let chain = ChainCheck {
        q_dissipation: energy.dissipation,
        half_grad_phi_delta: energy.terminal,
        half_grad_theta: half_theta,
        holds: energy.dissipation <= energy.terminal * (1.0 + 1e-12)
            && energy.terminal <= half_theta * (1.0 + 1e-12),
    };
    let delta = q.time(top);
    let bound = pair.kappa * (ball.volume() * delta).sqrt() * (half_theta / pair.slope).sqrt();
    Ok((
        TermValue::new(signed * vol, bound, 1e-9 * magnitude * vol),
        chain,
    ))
}

/// `I1 = Σ_B w^γ q^γ` split as `Σ w^γ (q^γ - q^0) + Σ w^γ q^0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FirstTerm {
    pub value: TermValue,
    pub drift: f64,
    pub trace: f64,
    pub q_shift: f64,
}

pub fn eval_i1(
    pair: &Pair,
    q: &SpaceTimeField,
    ball: &BallDomain,
    gamma: usize,
    l1_sup: f64,
) -> FirstTerm {
    let vol = pair.grid.cell_volume();
    let (w, qg, q0) = (&pair.w[gamma], q.slice(gamma), q.slice(0));
    let (mut drift, mut trace, mut shift) = (0.0, 0.0, 0.0f64);
    for &i in ball.interior() {
        drift += w[i] * (qg[i] - q0[i]);
        trace += w[i] * q0[i];
        shift = shift.max((qg[i] - q0[i]).abs());
    }
    let (drift, trace) = (drift * vol, trace * vol);
    let bound = l1_sup * shift + trace.abs();
    FirstTerm {
        value: TermValue::new(drift + trace, bound, 1e-12 * (l1_sup * shift + trace.abs())),
        drift,
        trace,
        q_shift: shift,
    }
}

/// `max_k Σ_B |w^k| vol` over slices `0..=top`.
pub fn l1_uniform_bound(pair: &Pair, ball: &BallDomain, top: usize) -> f64 {
    let vol = pair.grid.cell_volume();
    pair.w[..=top]
        .iter()
        .map(|w| ball.interior().iter().map(|&i| w[i].abs()).sum::<f64>() * vol)
        .fold(0.0, f64::max)
}

/// `Σ_k Σ_B φ^k [w^{k+1} - w^k - dt L a^{k+1}] vol`: how far the pair is
/// from satisfying the same discrete scheme.
pub fn scheme_defect(pair: &Pair, psi: &SpaceTimeField, base: usize, ball: &BallDomain) -> f64 {
    let g = ball.grid();
    let mut acc = 0.0;
    for k in 0..psi.len() - 1 {
        let kk = base + k;
        let lap = crate::grid::laplacian_values(g, &pair.a[kk + 1], Boundary::ZeroFlux);
        let p = psi.slice(k);
        for &i in ball.interior() {
            acc += p[i] * (pair.w[kk + 1][i] - pair.w[kk][i] - pair.dt * lap[i]);
        }
    }
    acc * g.cell_volume()
}
