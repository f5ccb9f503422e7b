//! Space-time mollification of discrete solutions and the Green-type
//! representation identity on a ball.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BallDomain, Grid, SpaceTimeField};
use crate::nonlinearity::Nonlinearity;
use crate::testfn::SpaceTimeTest;

/// How the base bump is scaled with `m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MollifierScaling {
    /// `m^{n+1} φ(m y, m s)`: unit mass.
    #[default]
    MassNormalized,
    /// `m φ(m y, m s)`: mass `m^{-n}`.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MollifierSpec {
    pub m: f64,
    #[serde(default)]
    pub scaling: MollifierScaling,
}

impl MollifierSpec {
    pub fn new(m: f64) -> Self {
        Self {
            m,
            scaling: MollifierScaling::MassNormalized,
        }
    }

    pub fn support_radius(&self) -> f64 {
        1.0 / self.m
    }
}

/// Discrete kernel: offsets `(di, dj, dk)` with weights.
#[derive(Debug, Clone)]
pub struct Kernel {
    pub offsets: Vec<(isize, isize, isize)>,
    pub weights: Vec<f64>,
    pub reach: [usize; 3],
}

impl Kernel {
    /// Samples `(1 - m^2 (|y|^2 + s^2))^4` on the grid/time lattice and
    /// rescales to the requested mass.
    pub fn build(grid: &Grid, dt: f64, spec: &MollifierSpec) -> Result<Self> {
        if !(spec.m > 0.0) || !spec.m.is_finite() {
            return Err(Error::Inadmissible(format!(
                "mollifier index must be positive, got {}",
                spec.m
            )));
        }
        let h = grid.spacing();
        let rad = spec.support_radius();
        let kx = (rad / h).floor() as usize;
        let ky = if grid.dim() == 2 { kx } else { 0 };
        let kt = (rad / dt).floor() as usize;
        let mut offsets = Vec::new();
        let mut weights = Vec::new();
        for dk in -(kt as isize)..=kt as isize {
            for dj in -(ky as isize)..=ky as isize {
                for di in -(kx as isize)..=kx as isize {
                    let y2 = ((di as f64) * h).powi(2) + ((dj as f64) * h).powi(2);
                    let s2 = ((dk as f64) * dt).powi(2);
                    let z = 1.0 - spec.m * spec.m * (y2 + s2);
                    if z > 0.0 {
                        offsets.push((di, dj, dk));
                        weights.push(z.powi(4));
                    }
                }
            }
        }
        let total: f64 = weights.iter().sum();
        let mass = match spec.scaling {
            MollifierScaling::MassNormalized => 1.0,
            MollifierScaling::Literal => spec.m.powi(-(grid.dim() as i32)),
        };
        for w in &mut weights {
            *w *= mass / total;
        }
        Ok(Self {
            offsets,
            weights,
            reach: [kx, ky, kt],
        })
    }

    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Mollified enthalpy and temperature on the cells and slices where the
/// kernel fits; `valid` marks those cells, other entries are zero.
#[derive(Debug, Clone)]
pub struct Mollified {
    pub u_m: SpaceTimeField,
    pub w_m: SpaceTimeField,
    pub valid: Vec<bool>,
    /// Index into the input field of the first output slice.
    pub first_slice: usize,
}

pub fn mollify(u: &SpaceTimeField, nl: &Nonlinearity, spec: &MollifierSpec) -> Result<Mollified> {
    let grid = *u.grid();
    let kernel = Kernel::build(&grid, u.dt(), spec)?;
    let [kx, ky, kt] = kernel.reach;
    let [nx, ny] = grid.cells();
    if u.len() <= 2 * kt || nx <= 2 * kx || ny <= 2 * ky {
        return Err(Error::Region(
            "mollifier support does not fit in the field".into(),
        ));
    }
    let valid: Vec<bool> = (0..grid.len())
        .map(|idx| {
            let (i, j) = grid.coords(idx);
            i >= kx && i + kx < nx && j >= ky && j + ky < ny
        })
        .collect();
    let w = u.map(|v| nl.eval(v));
    let first = kt;
    let mut u_m = SpaceTimeField::new(grid, u.time(first), u.dt())?;
    let mut w_m = SpaceTimeField::new(grid, u.time(first), u.dt())?;
    for k in first..u.len() - kt {
        let mut su = vec![0.0; grid.len()];
        let mut sw = vec![0.0; grid.len()];
        for idx in 0..grid.len() {
            if !valid[idx] {
                continue;
            }
            let (i, j) = grid.coords(idx);
            let (mut au, mut aw) = (0.0, 0.0);
            for (&(di, dj, dk), &kw) in kernel.offsets.iter().zip(&kernel.weights) {
                let src = grid.index((i as isize - di) as usize, (j as isize - dj) as usize);
                let kk = (k as isize - dk) as usize;
                au += kw * u.slice(kk)[src];
                aw += kw * w.slice(kk)[src];
            }
            su[idx] = au;
            sw[idx] = aw;
        }
        u_m.push(su)?;
        w_m.push(sw)?;
    }
    Ok(Mollified {
        u_m,
        w_m,
        valid,
        first_slice: first,
    })
}

/// The five pieces of the representation identity and its residual
/// `|lhs - (at_t1 - boundary + interior)|`, where `interior` holds both
/// `∬ u φ_t` and `∬ α(u) Δφ`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GreenTerms {
    pub at_t2: f64,
    pub at_t1: f64,
    pub boundary: f64,
    pub time_part: f64,
    pub space_part: f64,
    pub residual: f64,
}

const SUBSAMPLES: usize = 32;

/// Quadrature nodes for integrals over the ball: whole cells at their
/// centres, cut cells by a `32^n` midpoint subgrid restricted to the ball.
/// Integrands are cell values times `phi` at the node.
struct BallQuadrature {
    nodes: Vec<(usize, [f64; 2], f64)>,
}

impl BallQuadrature {
    fn new(grid: &Grid, r: f64) -> Self {
        let h = grid.spacing();
        let vol = grid.cell_volume();
        let dim = grid.dim();
        let mut nodes = Vec::new();
        for i in 0..grid.len() {
            let c = grid.center(i);
            let axes = &c[..dim];
            let far: f64 = axes
                .iter()
                .map(|x| (x.abs() + 0.5 * h).powi(2))
                .sum::<f64>()
                .sqrt();
            let near: f64 = axes
                .iter()
                .map(|x| (x.abs() - 0.5 * h).max(0.0).powi(2))
                .sum::<f64>()
                .sqrt();
            if far <= r {
                nodes.push((i, c, vol));
            } else if near < r {
                let n = SUBSAMPLES;
                let sub = |k: usize| (k as f64 + 0.5) / n as f64 - 0.5;
                let w = vol / (n as f64).powi(dim as i32);
                for a in 0..n {
                    for b in 0..if dim == 2 { n } else { 1 } {
                        let x = [
                            c[0] + sub(a) * h,
                            if dim == 2 { c[1] + sub(b) * h } else { 0.0 },
                        ];
                        if x[0] * x[0] + x[1] * x[1] <= r * r {
                            nodes.push((i, x, w));
                        }
                    }
                }
            }
        }
        Self { nodes }
    }

    fn integrate(&self, vals: &[f64], f: impl Fn([f64; 2]) -> f64) -> f64 {
        self.nodes.iter().map(|&(i, x, w)| w * vals[i] * f(x)).sum()
    }
}

/// Temperature at the sphere crossing of each shell cell, linearly
/// interpolated from the shell cell and its inward neighbour along the
/// dominant axis, and the crossing point itself.
fn shell_traces(theta: &[f64], ball: &BallDomain) -> Vec<(f64, [f64; 2])> {
    let g = ball.grid();
    let r = ball.radius();
    let h = g.spacing();
    ball.shell()
        .iter()
        .map(|&s| {
            let c = g.center(s);
            let axis = if g.dim() == 2 && c[1].abs() > c[0].abs() {
                1
            } else {
                0
            };
            let sign: isize = if c[axis] >= 0.0 { 1 } else { -1 };
            let (i, j) = g.coords(s);
            let inner = if axis == 0 {
                g.index((i as isize - sign) as usize, j)
            } else {
                g.index(i, (j as isize - sign) as usize)
            };
            let other = c[1 - axis];
            let xb = (r * r - other * other).max(0.0).sqrt();
            let frac = ((xb - g.center(inner)[axis].abs()) / h).clamp(0.0, 1.0);
            let val = theta[inner] + frac * (theta[s] - theta[inner]);
            let norm = (c[0] * c[0] + c[1] * c[1]).sqrt();
            let p = if g.dim() == 1 {
                [sign as f64 * r, 0.0]
            } else {
                [r * c[0] / norm, r * c[1] / norm]
            };
            (val, p)
        })
        .collect()
}

/// Evaluates each term of the identity on the window `(t1, t2]` with
/// cut-cell ball quadrature, midpoint times for the space-time integrals, and exact
/// derivatives of `phi`.
pub fn green_terms(
    u: &SpaceTimeField,
    nl: &Nonlinearity,
    phi: &dyn SpaceTimeTest,
    ball: &BallDomain,
    t1: f64,
    t2: f64,
) -> Result<GreenTerms> {
    let grid = u.grid();
    if !grid.same_as(ball.grid()) {
        return Err(Error::GridMismatch(
            "field and ball live on different grids".into(),
        ));
    }
    if !(t2 > t1) {
        return Err(Error::Region(format!("empty time window ({t1}, {t2}]")));
    }
    let k1 = u.index_of(t1)?;
    let k2 = u.index_of(t2)?;
    let dt = u.dt();
    // φ must vanish on the shell over the whole window
    let scale = 1.0 + phi.value([0.0, 0.0], t1).abs();
    for &s in ball.shell() {
        for t in [t1, 0.5 * (t1 + t2), t2] {
            let v = phi.value(grid.center(s), t);
            if v.abs() > 1e-12 * scale {
                return Err(Error::Support(format!(
                    "test function is {v} on shell cell {s}"
                )));
            }
        }
    }
    let quad = BallQuadrature::new(grid, ball.radius());
    let at_t1 = quad.integrate(u.slice(k1), |x| phi.value(x, u.time(k1)));
    let at_t2 = quad.integrate(u.slice(k2), |x| phi.value(x, u.time(k2)));
    let sigma = ball.shell_weight();
    let r = ball.radius();
    let (mut boundary, mut time_part, mut space_part) = (0.0, 0.0, 0.0);
    for k in k1 + 1..=k2 {
        let tm = u.time(k) - 0.5 * dt;
        let s = u.slice(k);
        let theta: Vec<f64> = s.iter().map(|&v| nl.eval(v)).collect();
        for (val, p) in shell_traces(&theta, ball) {
            let gphi = phi.gradient(p, tm);
            let dn = (gphi[0] * p[0] + gphi[1] * p[1]) / r;
            boundary += sigma * val * dn * dt;
        }
        time_part += quad.integrate(s, |x| phi.time_derivative(x, tm)) * dt;
        space_part += quad.integrate(&theta, |x| phi.laplacian(x, tm)) * dt;
    }
    let residual = (at_t2 - (at_t1 - boundary + time_part + space_part)).abs();
    Ok(GreenTerms {
        at_t2,
        at_t1,
        boundary,
        time_part,
        space_part,
        residual,
    })
}

pub fn green_residual(
    u: &SpaceTimeField,
    nl: &Nonlinearity,
    phi: &dyn SpaceTimeTest,
    ball: &BallDomain,
    t1: f64,
    t2: f64,
) -> Result<f64> {
    green_terms(u, nl, phi, ball, t1, t2).map(|g| g.residual)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testfn::{green_family, PolyBump, TimeFactor};

    fn field_1d(f: impl Fn(f64, f64) -> f64, n: usize, steps: usize, dt: f64) -> SpaceTimeField {
        let g = Grid::new_1d(-2.0, 4.0 / n as f64, n).unwrap();
        let slices = (0..=steps)
            .map(|k| (0..n).map(|i| f(g.center(i)[0], k as f64 * dt)).collect())
            .collect();
        SpaceTimeField::from_slices(g, 0.0, dt, slices).unwrap()
    }

    #[test]
    fn kernel_has_unit_mass_and_literal_scaling() {
        let g = Grid::new_2d([-1.0, -1.0], 0.05, [40, 40]).unwrap();
        let k = Kernel::build(&g, 0.02, &MollifierSpec::new(4.0)).unwrap();
        assert!((k.mass() - 1.0).abs() < 1e-12);
        let lit = MollifierSpec {
            m: 4.0,
            scaling: MollifierScaling::Literal,
        };
        let k = Kernel::build(&g, 0.02, &lit).unwrap();
        assert!((k.mass() - 1.0 / 16.0).abs() < 1e-12);
    }

    #[test]
    fn constants_and_linear_profiles_are_preserved() {
        let nl = Nonlinearity::two_phase();
        let u = field_1d(|x, _| 3.0 + 0.0 * x, 80, 60, 0.01);
        let m = mollify(&u, &nl, &MollifierSpec::new(5.0)).unwrap();
        for k in 0..m.u_m.len() {
            for (i, v) in m.u_m.slice(k).iter().enumerate() {
                if m.valid[i] {
                    assert!((v - 3.0).abs() < 1e-12);
                    assert!((m.w_m.slice(k)[i] - 2.0).abs() < 1e-12);
                }
            }
        }
        let u = field_1d(|x, t| 2.0 * x + t, 80, 60, 0.01);
        let m = mollify(&u, &nl, &MollifierSpec::new(5.0)).unwrap();
        let g = u.grid();
        for k in 0..m.u_m.len() {
            let t = m.u_m.time(k);
            for (i, v) in m.u_m.slice(k).iter().enumerate() {
                if m.valid[i] {
                    assert!((v - (2.0 * g.center(i)[0] + t)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn support_must_fit() {
        let nl = Nonlinearity::two_phase();
        let u = field_1d(|_, _| 1.0, 20, 4, 0.01);
        assert!(mollify(&u, &nl, &MollifierSpec::new(0.5)).is_err());
    }

    #[test]
    fn mushy_constant_residual_is_quadrature_error() {
        let nl = Nonlinearity::two_phase();
        let u = field_1d(|_, _| 0.4, 100, 50, 0.01);
        let ball = BallDomain::new(u.grid(), 1.5).unwrap();
        for phi in green_family(1, 1.5) {
            let r = green_residual(&u, &nl, &phi, &ball, 0.1, 0.4).unwrap();
            assert!(r < 1e-5, "{r}");
        }
        let zero = field_1d(|_, _| 0.0, 100, 50, 0.01);
        let phi = &green_family(1, 1.5)[0];
        assert_eq!(
            green_residual(&zero, &nl, phi, &ball, 0.1, 0.4).unwrap(),
            0.0
        );
    }

    #[test]
    fn rejects_test_function_alive_on_shell() {
        let nl = Nonlinearity::two_phase();
        let u = field_1d(|_, _| 0.4, 100, 50, 0.01);
        let ball = BallDomain::new(u.grid(), 1.0).unwrap();
        let wide = PolyBump::new(1, [0.0, 0.0], 1.8, 2, TimeFactor::Poly(vec![1.0]));
        assert!(green_residual(&u, &nl, &wide, &ball, 0.1, 0.4).is_err());
    }
}
