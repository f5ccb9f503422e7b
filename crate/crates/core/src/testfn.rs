//! Smooth test functions with closed-form derivatives: polynomial bumps in
//! space times a polynomial or bump factor in time.

use serde::{Deserialize, Serialize};

pub trait SpaceTimeTest {
    fn value(&self, x: [f64; 2], t: f64) -> f64;
    fn time_derivative(&self, x: [f64; 2], t: f64) -> f64;
    fn gradient(&self, x: [f64; 2], t: f64) -> [f64; 2];
    fn laplacian(&self, x: [f64; 2], t: f64) -> f64;
    /// Ball `(center, radius)` outside of which the function vanishes.
    fn space_support(&self) -> ([f64; 2], f64);
    /// Closed time interval outside of which the function vanishes, if any.
    fn time_support(&self) -> Option<(f64, f64)>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TimeFactor {
    /// `sum_k c_k t^k`.
    Poly(Vec<f64>),
    /// `(1 - s^2)^p` with `s` mapping `[t0, t1]` onto `[-1, 1]`, zero outside.
    Bump { t0: f64, t1: f64, p: u32 },
}

impl TimeFactor {
    pub fn value(&self, t: f64) -> f64 {
        match self {
            TimeFactor::Poly(c) => c.iter().rev().fold(0.0, |acc, ck| acc * t + ck),
            TimeFactor::Bump { t0, t1, p } => {
                let s = (2.0 * t - t0 - t1) / (t1 - t0);
                if s.abs() >= 1.0 {
                    0.0
                } else {
                    (1.0 - s * s).powi(*p as i32)
                }
            }
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match self {
            TimeFactor::Poly(c) => c
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(0.0, |acc, (k, ck)| acc * t + k as f64 * ck),
            TimeFactor::Bump { t0, t1, p } => {
                let s = (2.0 * t - t0 - t1) / (t1 - t0);
                if s.abs() >= 1.0 {
                    0.0
                } else {
                    let p = *p as i32;
                    p as f64 * (1.0 - s * s).powi(p - 1) * (-2.0 * s) * 2.0 / (t1 - t0)
                }
            }
        }
    }

    fn support(&self) -> Option<(f64, f64)> {
        match self {
            TimeFactor::Poly(_) => None,
            TimeFactor::Bump { t0, t1, .. } => Some((*t0, *t1)),
        }
    }
}

/// `(1 - |x - a|^2 / rho^2)^p` for `|x - a| < rho`, times a time factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyBump {
    pub dim: usize,
    pub center: [f64; 2],
    pub rho: f64,
    pub p: u32,
    pub time: TimeFactor,
}

impl PolyBump {
    pub fn new(dim: usize, center: [f64; 2], rho: f64, p: u32, time: TimeFactor) -> Self {
        let center = if dim == 1 { [center[0], 0.0] } else { center };
        Self {
            dim,
            center,
            rho,
            p,
            time,
        }
    }

    fn offset(&self, x: [f64; 2]) -> ([f64; 2], f64) {
        let d = [
            x[0] - self.center[0],
            if self.dim == 1 {
                0.0
            } else {
                x[1] - self.center[1]
            },
        ];
        (d, d[0] * d[0] + d[1] * d[1])
    }

    pub fn space_value(&self, x: [f64; 2]) -> f64 {
        let (_, r2) = self.offset(x);
        let z = 1.0 - r2 / (self.rho * self.rho);
        if z <= 0.0 {
            0.0
        } else {
            z.powi(self.p as i32)
        }
    }

    fn space_gradient(&self, x: [f64; 2]) -> [f64; 2] {
        let (d, r2) = self.offset(x);
        let rho2 = self.rho * self.rho;
        let z = 1.0 - r2 / rho2;
        // on the sphere itself the p = 1 gradient is the interior limit
        if z < -1e-12 || (z <= 0.0 && self.p > 1) {
            return [0.0, 0.0];
        }
        let z = z.max(0.0);
        let p = self.p as i32;
        let f = p as f64 * z.powi(p - 1) * (-2.0 / rho2);
        [f * d[0], f * d[1]]
    }

    fn space_laplacian(&self, x: [f64; 2]) -> f64 {
        let (_, r2) = self.offset(x);
        let rho2 = self.rho * self.rho;
        let z = 1.0 - r2 / rho2;
        if z <= 0.0 {
            return 0.0;
        }
        let p = self.p as i32;
        let n = self.dim as f64;
        let mut lap = p as f64 * z.powi(p - 1) * (-2.0 * n / rho2);
        if p >= 2 {
            lap += (p * (p - 1)) as f64 * z.powi(p - 2) * 4.0 * r2 / (rho2 * rho2);
        }
        lap
    }
}

impl SpaceTimeTest for PolyBump {
    fn value(&self, x: [f64; 2], t: f64) -> f64 {
        self.space_value(x) * self.time.value(t)
    }

    fn time_derivative(&self, x: [f64; 2], t: f64) -> f64 {
        self.space_value(x) * self.time.derivative(t)
    }

    fn gradient(&self, x: [f64; 2], t: f64) -> [f64; 2] {
        let g = self.space_gradient(x);
        let f = self.time.value(t);
        [g[0] * f, g[1] * f]
    }

    fn laplacian(&self, x: [f64; 2], t: f64) -> f64 {
        self.space_laplacian(x) * self.time.value(t)
    }

    fn space_support(&self) -> ([f64; 2], f64) {
        (self.center, self.rho)
    }

    fn time_support(&self) -> Option<(f64, f64)> {
        self.time.support()
    }
}

/// Five test functions vanishing on the sphere of radius `r`, three of
/// them with nonzero normal derivative there.
pub fn green_family(dim: usize, r: f64) -> Vec<PolyBump> {
    vec![
        PolyBump::new(dim, [0.0, 0.0], r, 1, TimeFactor::Poly(vec![1.0])),
        PolyBump::new(
            dim,
            [0.0, 0.0],
            r,
            1,
            TimeFactor::Poly(vec![1.0, 2.0, -1.0]),
        ),
        PolyBump::new(dim, [0.0, 0.0], r, 2, TimeFactor::Poly(vec![2.0, -1.0])),
        PolyBump::new(
            dim,
            [0.2 * r, 0.0],
            0.6 * r,
            3,
            TimeFactor::Poly(vec![0.5, 0.0, 1.0]),
        ),
        PolyBump::new(
            dim,
            [-0.1 * r, 0.1 * r],
            0.8 * r,
            4,
            TimeFactor::Poly(vec![1.0, -0.5]),
        ),
    ]
}
