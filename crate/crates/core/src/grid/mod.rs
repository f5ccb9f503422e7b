//! Uniform cell-centred grids in one or two dimensions, fields on them,
//! time histories of fields, and the discrete operators shared by the
//! solver and the certificate.
//!
//! Storage is row-major with rows along the second axis: cell `(i, j)`
//! lives at `j * nx + i`. In one dimension `j` is always zero.

mod ball;
mod csv;

pub use ball::{normal_derivative, shell_time_integral, BallDomain, BoundaryFace};
pub use csv::{format_real, read_field_csv, write_field_csv, FieldHeader};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    dim: usize,
    origin: [f64; 2],
    spacing: f64,
    cells: [usize; 2],
}

/// Treatment of faces on the outer edge of the grid box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Boundary {
    /// Mirror ghost: no flux through the box faces.
    ZeroFlux,
    /// Ghost cells beyond the box carry the given value.
    Dirichlet(f64),
}

impl Grid {
    pub fn new(dim: usize, origin: [f64; 2], spacing: f64, cells: [usize; 2]) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::Grid(format!("dimension must be 1 or 2, got {dim}")));
        }
        if !(spacing > 0.0) || !spacing.is_finite() {
            return Err(Error::Grid(format!(
                "spacing must be positive, got {spacing}"
            )));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::Grid("origin must be finite".into()));
        }
        if cells[0] < 3 || (dim == 2 && cells[1] < 3) {
            return Err(Error::Grid(format!(
                "need at least 3 cells per axis, got {cells:?}"
            )));
        }
        let (origin, cells) = if dim == 1 {
            ([origin[0], 0.0], [cells[0], 1])
        } else {
            (origin, cells)
        };
        Ok(Self {
            dim,
            origin,
            spacing,
            cells,
        })
    }

    pub fn new_1d(origin: f64, spacing: f64, cells: usize) -> Result<Self> {
        Self::new(1, [origin, 0.0], spacing, [cells, 1])
    }

    pub fn new_2d(origin: [f64; 2], spacing: f64, cells: [usize; 2]) -> Result<Self> {
        Self::new(2, origin, spacing, cells)
    }

    /// Box `[-half_width, half_width]^dim` split into cells of the given spacing.
    pub fn centered(dim: usize, half_width: f64, spacing: f64) -> Result<Self> {
        let n = (2.0 * half_width / spacing).round() as usize;
        let origin = -0.5 * n as f64 * spacing;
        Self::new(dim, [origin, origin], spacing, [n, n])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn origin(&self) -> [f64; 2] {
        self.origin
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn cells(&self) -> [usize; 2] {
        self.cells
    }

    pub fn len(&self) -> usize {
        self.cells[0] * self.cells[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.dim as i32)
    }

    /// Measure of one cell face (`1` in one dimension, `h` in two).
    pub fn face_measure(&self) -> f64 {
        self.spacing.powi(self.dim as i32 - 1)
    }

    pub fn box_lo(&self) -> [f64; 2] {
        self.origin
    }

    pub fn box_hi(&self) -> [f64; 2] {
        [
            self.origin[0] + self.cells[0] as f64 * self.spacing,
            self.origin[1] + self.cells[1] as f64 * self.spacing,
        ]
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.cells[0] + i
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.cells[0], idx / self.cells[0])
    }

    #[inline]
    pub fn center(&self, idx: usize) -> [f64; 2] {
        let (i, j) = self.coords(idx);
        let x = self.origin[0] + (i as f64 + 0.5) * self.spacing;
        if self.dim == 1 {
            [x, 0.0]
        } else {
            [x, self.origin[1] + (j as f64 + 0.5) * self.spacing]
        }
    }

    #[inline]
    pub fn radius_of(&self, idx: usize) -> f64 {
        let c = self.center(idx);
        (c[0] * c[0] + c[1] * c[1]).sqrt()
    }

    /// Neighbour across each face, ordered `-x, +x` (then `-y, +y` in 2D);
    /// `None` beyond the box.
    #[inline]
    pub fn neighbors(&self, idx: usize) -> [Option<usize>; 4] {
        let (i, j) = self.coords(idx);
        let [nx, ny] = self.cells;
        let mut out = [None; 4];
        out[0] = (i > 0).then(|| idx - 1);
        out[1] = (i + 1 < nx).then(|| idx + 1);
        if self.dim == 2 {
            out[2] = (j > 0).then(|| idx - nx);
            out[3] = (j + 1 < ny).then(|| idx + nx);
        }
        out
    }

    pub fn faces_per_cell(&self) -> usize {
        2 * self.dim
    }

    /// Cell containing `p`; points on a shared face go to the cell on the
    /// positive side.
    pub fn cell_of(&self, p: [f64; 2]) -> Option<usize> {
        let h = self.spacing;
        let fi = ((p[0] - self.origin[0]) / h).floor();
        if fi < 0.0 || fi >= self.cells[0] as f64 {
            return None;
        }
        let fj = if self.dim == 2 {
            let fj = ((p[1] - self.origin[1]) / h).floor();
            if fj < 0.0 || fj >= self.cells[1] as f64 {
                return None;
            }
            fj
        } else {
            0.0
        };
        Some(self.index(fi as usize, fj as usize))
    }

    pub fn same_as(&self, other: &Grid) -> bool {
        self.dim == other.dim
            && self.cells == other.cells
            && (self.spacing - other.spacing).abs() <= 1e-12 * self.spacing
            && (0..2).all(|a| (self.origin[a] - other.origin[a]).abs() <= 1e-9 * self.spacing)
    }

    /// Coarsens by a factor of two per axis; cell counts must be even.
    pub fn coarsened(&self) -> Result<Self> {
        let [nx, ny] = self.cells;
        if nx % 2 != 0 || (self.dim == 2 && ny % 2 != 0) {
            return Err(Error::Grid("cannot coarsen an odd cell count".into()));
        }
        let cells = if self.dim == 1 {
            [nx / 2, 1]
        } else {
            [nx / 2, ny / 2]
        };
        Self::new(self.dim, self.origin, 2.0 * self.spacing, cells)
    }

    /// Refines by a factor of two per axis.
    pub fn refined(&self) -> Result<Self> {
        let [nx, ny] = self.cells;
        let cells = if self.dim == 1 {
            [2 * nx, 1]
        } else {
            [2 * nx, 2 * ny]
        };
        Self::new(self.dim, self.origin, 0.5 * self.spacing, cells)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
    time: f64,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<f64>, time: f64) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "field has {} values for {} cells",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Grid("field values must be finite".into()));
        }
        Ok(Self { grid, values, time })
    }

    pub fn zeros(grid: Grid, time: f64) -> Self {
        Self {
            values: vec![0.0; grid.len()],
            grid,
            time,
        }
    }

    pub fn from_fn(grid: Grid, time: f64, f: impl Fn([f64; 2]) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.center(i))).collect();
        Self { grid, values, time }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn with_time(mut self, time: f64) -> Self {
        self.time = time;
        self
    }

    /// Midpoint-rule integral over the box.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.values)
    }
}

pub(crate) fn max_abs(values: &[f64]) -> f64 {
    values.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Sequence of fields on one grid at uniformly spaced times
/// `t_start + k * dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeField {
    grid: Grid,
    t_start: f64,
    dt: f64,
    slices: Vec<Vec<f64>>,
}

impl SpaceTimeField {
    pub fn new(grid: Grid, t_start: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::Grid(format!("time step must be positive, got {dt}")));
        }
        Ok(Self {
            grid,
            t_start,
            dt,
            slices: Vec::new(),
        })
    }

    pub fn from_slices(grid: Grid, t_start: f64, dt: f64, slices: Vec<Vec<f64>>) -> Result<Self> {
        let mut out = Self::new(grid, t_start, dt)?;
        for s in slices {
            out.push(s)?;
        }
        Ok(out)
    }

    pub fn push(&mut self, values: Vec<f64>) -> Result<()> {
        if values.len() != self.grid.len() {
            return Err(Error::GridMismatch(format!(
                "slice has {} values for {} cells",
                values.len(),
                self.grid.len()
            )));
        }
        self.slices.push(values);
        Ok(())
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t_start + k as f64 * self.dt
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.len().saturating_sub(1))
    }

    pub fn slice(&self, k: usize) -> &[f64] {
        &self.slices[k]
    }

    pub fn slices(&self) -> &[Vec<f64>] {
        &self.slices
    }

    pub fn field(&self, k: usize) -> Field {
        Field {
            grid: self.grid,
            values: self.slices[k].clone(),
            time: self.time(k),
        }
    }

    /// Index of the stored slice at time `t`, which must lie on the mesh.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let k = self.nearest_index(t)?;
        if (self.time(k) - t).abs() > 1e-9 * self.dt.max(t.abs()) + 1e-12 {
            return Err(Error::OffMesh(t));
        }
        Ok(k)
    }

    /// Index of the stored slice nearest to `t`.
    pub fn nearest_index(&self, t: f64) -> Result<usize> {
        let end = self.t_end();
        let slack = 0.5 * self.dt;
        if self.is_empty() || t < self.t_start - slack || t > end + slack {
            return Err(Error::TimeOutOfRange {
                time: t,
                start: self.t_start,
                end,
            });
        }
        let k = ((t - self.t_start) / self.dt).round().max(0.0) as usize;
        Ok(k.min(self.len() - 1))
    }

    /// Slices `k` with `t1 < t_k <= t2`; each stands for the interval
    /// `(t_k - dt, t_k]` in time integrals.
    pub fn window(&self, t1: f64, t2: f64) -> std::ops::Range<usize> {
        let eps = 1e-9 * self.dt;
        let lo = (0..self.len())
            .find(|&k| self.time(k) > t1 + eps)
            .unwrap_or(self.len());
        let hi = (0..self.len())
            .rev()
            .find(|&k| self.time(k) <= t2 + eps)
            .map(|k| k + 1)
            .unwrap_or(0);
        lo..hi.max(lo)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> SpaceTimeField {
        SpaceTimeField {
            grid: self.grid,
            t_start: self.t_start,
            dt: self.dt,
            slices: self
                .slices
                .iter()
                .map(|s| s.iter().map(|&v| f(v)).collect())
                .collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.slices.iter().map(|s| max_abs(s)).fold(0.0, f64::max)
    }

    pub fn check_compatible(&self, other: &SpaceTimeField) -> Result<()> {
        if !self.grid.same_as(&other.grid) {
            return Err(Error::GridMismatch("space grids differ".into()));
        }
        if self.len() != other.len()
            || (self.dt - other.dt).abs() > 1e-12 * self.dt
            || (self.t_start - other.t_start).abs() > 1e-12 * self.dt.max(1.0)
        {
            return Err(Error::GridMismatch("time meshes differ".into()));
        }
        Ok(())
    }
}

/// Three-point (1D) or five-point (2D) Laplacian with the given box boundary.
pub fn laplacian(f: &Field, bc: Boundary) -> Field {
    Field {
        grid: f.grid,
        values: laplacian_values(&f.grid, &f.values, bc),
        time: f.time,
    }
}

pub fn laplacian_values(grid: &Grid, values: &[f64], bc: Boundary) -> Vec<f64> {
    let inv_h2 = 1.0 / (grid.spacing * grid.spacing);
    (0..grid.len())
        .map(|i| {
            let ui = values[i];
            let mut acc = 0.0;
            for n in grid.neighbors(i).iter().take(grid.faces_per_cell()) {
                match (n, bc) {
                    (Some(j), _) => acc += values[*j] - ui,
                    (None, Boundary::ZeroFlux) => {}
                    (None, Boundary::Dirichlet(g)) => acc += g - ui,
                }
            }
            acc * inv_h2
        })
        .collect()
}

/// Laplacian of the zero extension of `values` outside `mask`; zero on
/// cells outside the mask.
pub fn laplacian_masked(grid: &Grid, values: &[f64], mask: &[bool]) -> Vec<f64> {
    let inv_h2 = 1.0 / (grid.spacing * grid.spacing);
    (0..grid.len())
        .map(|i| {
            if !mask[i] {
                return 0.0;
            }
            let ui = values[i];
            let mut acc = 0.0;
            for n in grid.neighbors(i).iter().take(grid.faces_per_cell()) {
                let uj = match n {
                    Some(j) if mask[*j] => values[*j],
                    _ => 0.0,
                };
                acc += uj - ui;
            }
            acc * inv_h2
        })
        .collect()
}

/// `1/2 * sum over faces of ((f_j - f_i)/h)^2 * h^dim` for the zero
/// extension of `values` outside `mask` (box faces carry no term).
pub fn gradient_energy(grid: &Grid, values: &[f64], mask: &[bool]) -> f64 {
    let h = grid.spacing;
    let val = |i: usize| if mask[i] { values[i] } else { 0.0 };
    let mut acc = 0.0;
    for i in 0..grid.len() {
        let nb = grid.neighbors(i);
        let plus = if grid.dim == 1 {
            [nb[1], None]
        } else {
            [nb[1], nb[3]]
        };
        for j in plus.into_iter().flatten() {
            let d = val(j) - val(i);
            acc += d * d;
        }
    }
    0.5 * acc / (h * h) * grid.cell_volume()
}

/// Space-time integral of `|u| exp(-c|x|^2)`; every stored slice stands for
/// an interval of length `dt`.
pub fn weighted_l1(u: &SpaceTimeField, c: f64) -> Result<f64> {
    if !(c > 0.0) {
        return Err(Error::NonPositiveExponent(c));
    }
    let grid = &u.grid;
    let weights: Vec<f64> = (0..grid.len())
        .map(|i| {
            let r = grid.radius_of(i);
            (-c * r * r).exp()
        })
        .collect();
    let total: f64 = u
        .slices
        .iter()
        .map(|s| {
            s.iter()
                .zip(&weights)
                .map(|(v, w)| v.abs() * w)
                .sum::<f64>()
        })
        .sum();
    Ok(total * grid.cell_volume() * u.dt)
}
