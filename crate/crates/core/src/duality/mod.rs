//! Duality certificate for `|∫(u - v)(t0) Θ|` between two discrete
//! solutions: dual coefficient, backward dual solve, the five-term
//! representation and parameter selection.

mod coefficient;
mod terms;
mod twin;

pub use coefficient::{build_c, floor_and_smooth, DualCoefficient};
pub use terms::{
    bound_i2, bound_i3, bound_ii, bound_iii, check_theta, energy_identity, envelope_factor,
    eval_i1, l1_uniform_bound, scheme_defect, shell_majorant, solve_dual, solve_q, ChainCheck,
    EnergyBalance, FirstTerm, Pair, TermValue, ThirdTerm,
};
pub use twin::{restrict, twin_runs, TwinRuns};

use serde::{Deserialize, Serialize};

use crate::barriers::radius_is_admissible;
use crate::error::{Error, Result};
use crate::grid::{
    gradient_energy, shell_time_integral, weighted_l1, BallDomain, Field, SpaceTimeField,
};
use crate::nonlinearity::Nonlinearity;

/// Total tolerance and its split over `II, I2, I3, III, I1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Budgets {
    pub eps: f64,
    pub shares: [f64; 5],
}

impl Budgets {
    pub const NAMES: [&'static str; 5] = ["II", "I2", "I3", "III", "I1"];

    pub fn new(eps: f64) -> Self {
        Self {
            eps,
            shares: [0.05, 0.05, 0.4, 0.3, 0.2],
        }
    }

    pub fn of(&self, term: usize) -> f64 {
        self.eps * self.shares[term]
    }

    fn validate(&self) -> Result<()> {
        let total: f64 = self.shares.iter().sum();
        if !(self.eps > 0.0)
            || self.shares.iter().any(|s| !(*s >= 0.0))
            || (total - 1.0).abs() > 1e-9
        {
            return Err(Error::Inadmissible(
                "budget must be positive with shares summing to one".into(),
            ));
        }
        Ok(())
    }
}

/// One scanned shell radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShellRow {
    pub radius: f64,
    pub shell_integral: f64,
    pub threshold: f64,
    pub admissible: bool,
    pub qualifies: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShellScan {
    /// `∬ (|α(u)| + |α(v)|) exp(-c|x|²)` over the whole run.
    pub total: f64,
    pub rows: Vec<ShellRow>,
    pub chosen: f64,
}

impl ShellScan {
    pub fn qualifying(&self) -> impl Iterator<Item = &ShellRow> {
        self.rows.iter().filter(|r| r.qualifies)
    }
}

/// Scans radii `l_min + k h` whose balls fit in the box and keeps those with
/// `∫_shell ∫ (|α(u)| + |α(v)|) e^{-c|x|²} <= M / R^n` and an admissible
/// barrier for horizon `t0`.
pub fn choose_r(pair: &Pair, gauss_c: f64, l_min: f64, t0: f64) -> Result<ShellScan> {
    let grid = pair.grid;
    let total = weighted_l1(&pair.alpha_u, gauss_c)? + weighted_l1(&pair.alpha_v, gauss_c)?;
    let sum = pair.alpha_u.map(f64::abs);
    let sum = SpaceTimeField::from_slices(
        grid,
        0.0,
        pair.dt,
        sum.slices()
            .iter()
            .zip(pair.alpha_v.slices())
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y.abs()).collect())
            .collect(),
    )?;
    let t_end = pair.time(pair.len() - 1);
    let mut rows = Vec::new();
    let h = grid.spacing();
    for k in 0.. {
        let radius = l_min + k as f64 * h;
        let Ok(ball) = BallDomain::new(&grid, radius) else {
            break;
        };
        let shell_integral = shell_time_integral(&sum, &ball, 0.0, t_end, |x| {
            (-gauss_c * (x[0] * x[0] + x[1] * x[1])).exp()
        })?;
        let threshold = total / radius.powi(grid.dim() as i32);
        let admissible = radius_is_admissible(radius, t0, false);
        rows.push(ShellRow {
            radius,
            shell_integral,
            threshold,
            admissible,
            qualifies: admissible && shell_integral <= threshold,
        });
    }
    let chosen = rows
        .iter()
        .find(|r| r.qualifies)
        .ok_or(Error::NoQualifyingShell)?
        .radius;
    Ok(ShellScan {
        total,
        rows,
        chosen,
    })
}

/// Lower limits on the swept parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Caps {
    /// `δ >= delta_steps * dt`.
    pub delta_steps: usize,
    /// `1/m >= m_cells * h`.
    pub m_cells: f64,
    /// `γ >= gamma_steps * dt`.
    pub gamma_steps: usize,
}

impl Default for Caps {
    fn default() -> Self {
        Self {
            delta_steps: 4,
            m_cells: 2.0,
            gamma_steps: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Schedule {
    pub t0: f64,
    pub radius: f64,
    pub delta: f64,
    pub m: f64,
    pub gamma: f64,
    /// Parameters that stopped at their cap without meeting their budget.
    pub binding: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TermRow {
    pub name: String,
    pub computed: f64,
    pub bound: f64,
    pub slack: f64,
    pub budget: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Pass,
    Fail,
}

/// Split of `I1` at one `γ` of the sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub gamma: f64,
    pub drift: f64,
    pub trace: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateReport {
    pub schedule: Schedule,
    pub terms: Vec<TermRow>,
    /// `Σ_B (u - v)(t0) Θ`.
    pub target: f64,
    /// `target` minus the sum of the five signed terms.
    pub defect: f64,
    pub certified: f64,
    pub eps: f64,
    pub energy: EnergyBalance,
    pub chain: ChainCheck,
    pub third: ThirdTerm,
    pub traces: Vec<TraceRow>,
    pub shells: ShellScan,
    pub obstruction: Option<String>,
    pub verdict: Verdict,
}

impl CertificateReport {
    pub fn term(&self, name: &str) -> Option<&TermRow> {
        self.terms.iter().find(|t| t.name == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertifyOptions {
    pub gauss_c: f64,
    /// Smallest shell radius scanned.
    pub l_min: f64,
    pub caps: Caps,
}

/// Dyadic times `top / 2^j` snapped to the mesh, down to `floor` steps.
fn dyadic(top: usize, floor: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut j = 1;
    loop {
        let k = (top as f64 / 2f64.powi(j)).round() as usize;
        if k < floor.max(1) {
            break;
        }
        if out.last() != Some(&k) {
            out.push(k);
        }
        j += 1;
    }
    if out.is_empty() && top > floor.max(1) {
        out.push(floor.max(1));
    }
    out
}

/// Certifies `|Σ (u - v)(t0) Θ|` against `budgets.eps`. Parameters are
/// chosen in the order radius, `δ`, `m`, `γ`; each takes the first value
/// whose bound meets its budget, otherwise the best value at its cap.
pub fn certify(
    u: &SpaceTimeField,
    v: &SpaceTimeField,
    theta: &Field,
    nl: &Nonlinearity,
    t0: f64,
    budgets: &Budgets,
    opts: &CertifyOptions,
) -> Result<CertificateReport> {
    budgets.validate()?;
    let c = opts.gauss_c;
    if !(c > 0.0) {
        return Err(Error::NonPositiveExponent(c));
    }
    if !(t0 > 0.0) || t0 >= 0.125 / c {
        return Err(Error::Inadmissible(format!(
            "t0 = {t0} must lie in (0, 1/(8c)) = (0, {})",
            0.125 / c
        )));
    }
    let pair = Pair::new(u, v, nl)?;
    let top = pair.index_of(t0)?;
    let dt = pair.dt;
    let h = pair.grid.spacing();
    let sup = theta.max_abs();
    let mut binding = Vec::new();

    let shells = choose_r(&pair, c, opts.l_min, t0)?;
    let mut radius = shells.chosen;
    let mut best = f64::INFINITY;
    for row in shells.qualifying() {
        let ball = BallDomain::new(&pair.grid, row.radius)?;
        let prelim =
            envelope_factor(&ball, sup, c, t0) * shell_majorant(&pair, &ball, c, 1..top + 1);
        if prelim < best {
            best = prelim;
            radius = row.radius;
        }
        if prelim <= budgets.of(0) + budgets.of(1) {
            break;
        }
    }
    if best > budgets.of(0) + budgets.of(1) {
        binding.push("radius".into());
    }
    let ball = BallDomain::new(&pair.grid, radius)?;
    check_theta(theta, &ball)?;

    let half_theta = gradient_energy(&pair.grid, theta.values(), ball.mask());
    let i3_bound = |d: usize| {
        pair.kappa * (ball.volume() * d as f64 * dt).sqrt() * (half_theta / pair.slope).sqrt()
    };
    let deltas = dyadic(top, opts.caps.delta_steps);
    let d_idx = *deltas
        .iter()
        .find(|&&d| i3_bound(d) <= budgets.of(2))
        .or_else(|| {
            binding.push("delta".into());
            deltas.last()
        })
        .ok_or_else(|| {
            Error::Region(format!(
                "t0 leaves no room for delta >= {} steps",
                opts.caps.delta_steps
            ))
        })?;
    let delta = d_idx as f64 * dt;

    let window = SpaceTimeField::from_slices(
        pair.grid,
        0.0,
        dt,
        build_c(u, v, nl)?.slices()[..=top].to_vec(),
    )?;
    let mut m = 1.0;
    let mut chosen: Option<(DualCoefficient, SpaceTimeField, ThirdTerm)> = None;
    loop {
        let coef = floor_and_smooth(&window, m)?;
        let phi = solve_dual(&coef, theta, &ball, t0, delta)?;
        let third = bound_iii(&pair, &phi, &coef, &ball)?;
        let better = chosen
            .as_ref()
            .map_or(true, |b| third.value.bound < b.2.value.bound);
        let met = third.value.bound <= budgets.of(3);
        if better || met {
            chosen = Some((coef, phi, third));
        }
        if met {
            break;
        }
        if 0.5 / m < opts.caps.m_cells * h {
            binding.push("m".into());
            break;
        }
        m *= 2.0;
    }
    let (coef, phi, third) = chosen.expect("at least one m is tried");
    let energy = energy_identity(&phi, &coef, &ball)?;
    let ii = bound_ii(&pair, &phi, theta, &ball, c, t0)?;

    let q = solve_q(&phi.field(0), &ball, pair.slope, dt, d_idx)?;
    let l1 = l1_uniform_bound(&pair, &ball, top);
    let gammas = dyadic(d_idx, opts.caps.gamma_steps);
    let traces: Vec<TraceRow> = gammas
        .iter()
        .map(|&g| {
            let f = eval_i1(&pair, &q, &ball, g, l1);
            TraceRow {
                gamma: g as f64 * dt,
                drift: f.drift,
                trace: f.trace,
                bound: f.value.bound,
            }
        })
        .collect();
    let g_idx = match gammas
        .iter()
        .zip(&traces)
        .find(|(_, t)| t.bound <= budgets.of(4))
    {
        Some((&g, _)) => g,
        None => {
            binding.push("gamma".into());
            gammas
                .iter()
                .zip(&traces)
                .min_by(|a, b| a.1.bound.total_cmp(&b.1.bound))
                .map(|p| *p.0)
                .unwrap_or(0)
        }
    };
    let i1 = eval_i1(&pair, &q, &ball, g_idx, l1);
    let i2 = bound_i2(&pair, &q, theta, &ball, c, t0, g_idx)?;
    let (i3, chain) = bound_i3(&pair, &q, theta, &ball, g_idx)?;

    let limit = eval_i1(&pair, &q, &ball, 0, l1).trace;
    let largest = traces.iter().map(|t| t.trace.abs()).fold(0.0, f64::max);
    let obstruction = (limit.abs() > 0.5 * largest && limit.abs() > 1e-9 * (l1 * sup).max(f64::MIN_POSITIVE)).then(|| {
        format!(
            "initial-trace pairing does not tend to zero along the gamma sweep: {:.3e} at gamma = {:.3e}, {:.3e} in the limit gamma = 0",
            traces.first().map_or(limit, |t| t.trace),
            traces.first().map_or(0.0, |t| t.gamma),
            limit
        )
    });
    let mut traces = traces;
    traces.push(TraceRow {
        gamma: 0.0,
        drift: 0.0,
        trace: limit,
        bound: limit.abs(),
    });

    let values = [ii, i2, i3, third.value, i1.value];
    let terms: Vec<TermRow> = values
        .iter()
        .enumerate()
        .map(|(k, t)| TermRow {
            name: Budgets::NAMES[k].into(),
            computed: t.computed,
            bound: t.bound,
            slack: t.slack,
            budget: budgets.of(k),
            pass: t.holds(),
        })
        .collect();
    let target = pair.pairing(top, theta.values(), &ball);
    let defect = target - values.iter().map(|t| t.signed).sum::<f64>();
    let certified: f64 = values.iter().map(|t| t.bound).sum();
    let verdict =
        if terms.iter().all(|t| t.pass) && certified <= budgets.eps && obstruction.is_none() {
            Verdict::Pass
        } else {
            Verdict::Fail
        };
    Ok(CertificateReport {
        schedule: Schedule {
            t0,
            radius,
            delta,
            m: coef.m,
            gamma: g_idx as f64 * dt,
            binding,
        },
        terms,
        target,
        defect,
        certified,
        eps: budgets.eps,
        energy,
        chain,
        third,
        traces,
        shells,
        obstruction,
        verdict,
    })
}

/// Runs `certify` on successive windows `[s, s + t0]`, each rebased so that
/// its start is the initial time.
pub fn certify_windows(
    u: &SpaceTimeField,
    v: &SpaceTimeField,
    theta: &Field,
    nl: &Nonlinearity,
    starts: &[f64],
    t0: f64,
    budgets: &Budgets,
    opts: &CertifyOptions,
) -> Result<Vec<CertificateReport>> {
    starts
        .iter()
        .map(|&s| {
            let lo = u.index_of(s)?;
            let hi = u.index_of(s + t0)?;
            let cut = |f: &SpaceTimeField| {
                SpaceTimeField::from_slices(*f.grid(), 0.0, f.dt(), f.slices()[lo..=hi].to_vec())
            };
            certify(&cut(u)?, &cut(v)?, theta, nl, t0, budgets, opts)
        })
        .collect()
}
