use super::{Field, Grid, SpaceTimeField};
use crate::error::{Error, Result};

/// A face separating a ball cell from a shell cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryFace {
    pub inner: usize,
    pub outer: usize,
}

/// Cells whose centres satisfy `|x| <= R`, plus the one-cell shell of
/// outside cells that share a face with them.
#[derive(Debug, Clone)]
pub struct BallDomain {
    grid: Grid,
    radius: f64,
    inside: Vec<bool>,
    interior: Vec<usize>,
    shell: Vec<usize>,
    faces: Vec<BoundaryFace>,
}

impl BallDomain {
    pub fn new(grid: &Grid, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::BallDoesNotFit { radius });
        }
        let tol = 1e-12 * radius;
        let inside: Vec<bool> = (0..grid.len())
            .map(|i| grid.radius_of(i) <= radius + tol)
            .collect();
        let interior: Vec<usize> = (0..grid.len()).filter(|&i| inside[i]).collect();
        if interior.is_empty() {
            return Err(Error::BallDoesNotFit { radius });
        }
        let mut faces = Vec::new();
        let mut is_shell = vec![false; grid.len()];
        for &i in &interior {
            for n in grid.neighbors(i).iter().take(grid.faces_per_cell()) {
                match n {
                    None => return Err(Error::BallDoesNotFit { radius }),
                    Some(j) if !inside[*j] => {
                        faces.push(BoundaryFace {
                            inner: i,
                            outer: *j,
                        });
                        is_shell[*j] = true;
                    }
                    _ => {}
                }
            }
        }
        let shell: Vec<usize> = (0..grid.len()).filter(|&i| is_shell[i]).collect();
        for &s in &shell {
            let nb = grid.neighbors(s);
            if nb.iter().take(grid.faces_per_cell()).any(|n| n.is_none()) {
                return Err(Error::BallDoesNotFit { radius });
            }
        }
        Ok(Self {
            grid: *grid,
            radius,
            inside,
            interior,
            shell,
            faces,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn mask(&self) -> &[bool] {
        &self.inside
    }

    pub fn contains(&self, idx: usize) -> bool {
        self.inside[idx]
    }

    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    pub fn shell(&self) -> &[usize] {
        &self.shell
    }

    pub fn faces(&self) -> &[BoundaryFace] {
        &self.faces
    }

    /// Discrete volume: number of ball cells times the cell volume.
    pub fn volume(&self) -> f64 {
        self.interior.len() as f64 * self.grid.cell_volume()
    }

    /// Surface weight of each shell cell: one per endpoint in 1D, equal
    /// shares of the circumference in 2D.
    pub fn shell_weight(&self) -> f64 {
        if self.grid.dim() == 1 {
            1.0
        } else {
            2.0 * std::f64::consts::PI * self.radius / self.shell.len() as f64
        }
    }

    /// Per-cell weights for integrals over the ball, in units of the cell
    /// volume. In 1D the two edge cells get their overlap fraction with
    /// `[-R, R]`; in 2D the centre test decides.
    pub fn quadrature_weights(&self) -> Vec<f64> {
        let g = &self.grid;
        if g.dim() == 1 {
            let h = g.spacing();
            (0..g.len())
                .map(|i| {
                    let x = g.center(i)[0];
                    let lo = (x - 0.5 * h).max(-self.radius);
                    let hi = (x + 0.5 * h).min(self.radius);
                    ((hi - lo) / h).clamp(0.0, 1.0)
                })
                .collect()
        } else {
            self.inside
                .iter()
                .map(|&b| if b { 1.0 } else { 0.0 })
                .collect()
        }
    }
}

/// Outward normal derivative of `f` at the ball boundary, one value per
/// shell cell (in `ball.shell()` order). The axis derivative at the sphere
/// crossing comes from the quadratic through the three nearest ball cells
/// along the dominant axis (two when only two exist), divided by the axis
/// component of the normal.
pub fn normal_derivative(f: &Field, ball: &BallDomain) -> Result<Vec<f64>> {
    let g = ball.grid();
    if !g.same_as(f.grid()) {
        return Err(Error::GridMismatch(
            "field and ball live on different grids".into(),
        ));
    }
    let r = ball.radius();
    let vals = f.values();
    let along = |s: usize, axis: usize| -> Result<f64> {
        let c = g.center(s);
        let other = c[1 - axis];
        let sign: isize = if c[axis] >= 0.0 { 1 } else { -1 };
        let (i, j) = g.coords(s);
        let step = |k: isize| -> Option<usize> {
            let (ii, jj) = if axis == 0 {
                (i as isize - sign * k, j as isize)
            } else {
                (i as isize, j as isize - sign * k)
            };
            let [nx, ny] = g.cells();
            if ii < 0 || jj < 0 || ii >= nx as isize || jj >= ny as isize {
                return None;
            }
            let idx = g.index(ii as usize, jj as usize);
            ball.contains(idx).then_some(idx)
        };
        let (Some(a), Some(b)) = (step(1), step(2)) else {
            return Err(Error::ShellStencil { cell: s });
        };
        let xb = (r * r - other * other).max(0.0).sqrt();
        // outward coordinate, zero at the crossing
        let pos = |idx: usize| g.center(idx)[axis].abs() - xb;
        let dfdx = match step(3) {
            Some(c3) => {
                let (s1, s2, s3) = (pos(a), pos(b), pos(c3));
                let (f1, f2, f3) = (vals[a], vals[b], vals[c3]);
                f1 * (-s2 - s3) / ((s1 - s2) * (s1 - s3))
                    + f2 * (-s1 - s3) / ((s2 - s1) * (s2 - s3))
                    + f3 * (-s1 - s2) / ((s3 - s1) * (s3 - s2))
            }
            None => (vals[a] - vals[b]) / (pos(a) - pos(b)),
        };
        Ok(dfdx * r / xb)
    };
    ball.shell()
        .iter()
        .map(|&s| {
            let c = g.center(s);
            if g.dim() == 1 {
                return along(s, 0);
            }
            let (ax, ay) = (c[0].abs(), c[1].abs());
            // diagonal cells average both axes so quarter turns commute
            if (ax - ay).abs() <= 1e-12 * (ax + ay) {
                Ok(0.5 * (along(s, 0)? + along(s, 1)?))
            } else {
                along(s, if ay > ax { 1 } else { 0 })
            }
        })
        .collect()
}

/// `sum_k dt * sum_shell sigma * g * weight(x)` over slices with
/// `t1 < t_k <= t2`, where `sigma` is the shell surface weight.
pub fn shell_time_integral(
    g: &SpaceTimeField,
    ball: &BallDomain,
    t1: f64,
    t2: f64,
    weight: impl Fn([f64; 2]) -> f64,
) -> Result<f64> {
    if !(t2 > t1) {
        return Err(Error::Region(format!("empty time window ({t1}, {t2}]")));
    }
    if !g.grid().same_as(ball.grid()) {
        return Err(Error::GridMismatch(
            "field and ball live on different grids".into(),
        ));
    }
    let grid = ball.grid();
    let w: Vec<f64> = ball
        .shell()
        .iter()
        .map(|&s| weight(grid.center(s)))
        .collect();
    let sigma = ball.shell_weight();
    let mut acc = 0.0;
    for k in g.window(t1, t2) {
        let slice = g.slice(k);
        acc += ball
            .shell()
            .iter()
            .zip(&w)
            .map(|(&s, wi)| slice[s] * wi)
            .sum::<f64>();
    }
    Ok(acc * sigma * g.dt())
}
