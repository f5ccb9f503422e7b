//! Self-similar two-phase solution for step data: liquid enthalpy `A > 1`
//! left of the origin, solid enthalpy `-A' < -1` right of it. The front
//! sits at `2 λ sqrt(t)`.

use std::f64::consts::PI;

use libm::{erf, erfc};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeumannSolution {
    pub liquid: f64,
    pub solid: f64,
    pub lambda: f64,
}

impl NeumannSolution {
    /// `liquid = A`, `solid = A'`, both greater than one.
    pub fn new(liquid: f64, solid: f64) -> Result<Self> {
        if !(liquid > 1.0 && solid > 1.0) {
            return Err(Error::Inadmissible(format!(
                "step data must leave the latent interval, got A={liquid}, A'={solid}"
            )));
        }
        let tl = liquid - 1.0;
        let ts = solid - 1.0;
        let g = |l: f64| 2.0 * PI.sqrt() * l * (l * l).exp() - tl / erfc(-l) + ts / erfc(l);
        let (mut lo, mut hi) = (-1.0, 1.0);
        while g(lo) > 0.0 {
            lo *= 2.0;
        }
        while g(hi) < 0.0 {
            hi *= 2.0;
        }
        while hi - lo > 1e-13 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(Self {
            liquid,
            solid,
            lambda: 0.5 * (lo + hi),
        })
    }

    pub fn front(&self, t: f64) -> f64 {
        2.0 * self.lambda * t.sqrt()
    }

    /// Temperature `α(u)` at `(x, t)`.
    pub fn temperature(&self, x: f64, t: f64) -> f64 {
        let xi = x / (2.0 * t.sqrt());
        let tl = self.liquid - 1.0;
        let ts = self.solid - 1.0;
        if xi < self.lambda {
            tl - tl * (1.0 + erf(xi)) / erfc(-self.lambda)
        } else {
            -ts + ts * erfc(xi) / erfc(self.lambda)
        }
    }

    pub fn enthalpy(&self, x: f64, t: f64) -> f64 {
        let th = self.temperature(x, t);
        if x < self.front(t) {
            th + 1.0
        } else {
            th - 1.0
        }
    }

    /// Step data projected on a 1D grid (the jump sits on a cell face when
    /// the origin is one).
    pub fn initial_field(&self, grid: &Grid) -> Field {
        let h = grid.spacing();
        Field::from_fn(*grid, 0.0, |x| {
            let lo = x[0] - 0.5 * h;
            let hi = x[0] + 0.5 * h;
            let liquid_part = ((0.0f64).min(hi) - lo).clamp(0.0, h) / h;
            liquid_part * self.liquid - (1.0 - liquid_part) * self.solid
        })
    }
}

/// Front location read off a discrete profile: left box edge plus the
/// integrated liquid fraction `clamp((u + 1)/2, 0, 1)`.
pub fn numeric_front(grid: &Grid, values: &[f64]) -> f64 {
    let h = grid.spacing();
    grid.box_lo()[0]
        + values
            .iter()
            .map(|u| ((u + 1.0) / 2.0).clamp(0.0, 1.0))
            .sum::<f64>()
            * h
}
