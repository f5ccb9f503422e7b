//! Linear solves for implicit diffusion steps on a subset of grid cells.
//!
//! Every system here has the symmetric form
//! `w_i y_i - k * sum_faces (y_j - y_i) = b_i` on the active cells with
//! `k = dt / h^2`, `w_i > 0`, and `y_j` taken from a fixed vector on
//! inactive neighbours. In 1D each run of active cells is tridiagonal and
//! is solved directly; in 2D Jacobi-preconditioned conjugate gradients is
//! used.

use crate::error::{Error, Result};
use crate::grid::{Boundary, Grid};

const CG_TOL: f64 = 1e-14;

pub struct WeightedSystem<'a> {
    pub grid: &'a Grid,
    pub bc: Boundary,
    pub active: &'a [bool],
    /// Diagonal weight `w_i`, only read on active cells.
    pub weight: &'a [f64],
    pub dt: f64,
    /// Values used for inactive neighbours; copied into the result there.
    pub fixed: &'a [f64],
}

impl WeightedSystem<'_> {
    fn k(&self) -> f64 {
        self.dt / (self.grid.spacing() * self.grid.spacing())
    }

    /// Diagonal entry and the contribution of known neighbours to the
    /// right-hand side for cell `i`.
    fn row(&self, i: usize) -> (f64, f64) {
        let k = self.k();
        let mut diag = self.weight[i];
        let mut known = 0.0;
        for n in self
            .grid
            .neighbors(i)
            .iter()
            .take(self.grid.faces_per_cell())
        {
            match (n, self.bc) {
                (Some(j), _) => {
                    diag += k;
                    if !self.active[*j] {
                        known += k * self.fixed[*j];
                    }
                }
                (None, Boundary::ZeroFlux) => {}
                (None, Boundary::Dirichlet(g)) => {
                    diag += k;
                    known += k * g;
                }
            }
        }
        (diag, known)
    }

    pub fn solve(&self, rhs: &[f64], guess: Option<&[f64]>) -> Result<Vec<f64>> {
        let n = self.grid.len();
        debug_assert_eq!(rhs.len(), n);
        let mut y = self.fixed.to_vec();
        if self.grid.dim() == 1 {
            self.solve_tridiagonal(rhs, &mut y);
            Ok(y)
        } else {
            self.solve_cg(rhs, guess, &mut y)?;
            Ok(y)
        }
    }

    fn solve_tridiagonal(&self, rhs: &[f64], y: &mut [f64]) {
        let n = self.grid.len();
        let k = self.k();
        let mut start = 0;
        let mut c_prime = vec![0.0; n];
        let mut d_prime = vec![0.0; n];
        while start < n {
            if !self.active[start] {
                start += 1;
                continue;
            }
            let mut end = start;
            while end + 1 < n && self.active[end + 1] {
                end += 1;
            }
            for i in start..=end {
                let (diag, known) = self.row(i);
                let b = rhs[i] + known;
                let lower = if i > start { -k } else { 0.0 };
                let upper = if i < end { -k } else { 0.0 };
                let denom = if i > start {
                    diag - lower * c_prime[i - 1]
                } else {
                    diag
                };
                c_prime[i] = upper / denom;
                d_prime[i] = if i > start {
                    (b - lower * d_prime[i - 1]) / denom
                } else {
                    b / denom
                };
            }
            y[end] = d_prime[end];
            for i in (start..end).rev() {
                y[i] = d_prime[i] - c_prime[i] * y[i + 1];
            }
            start = end + 1;
        }
    }

    fn solve_cg(&self, rhs: &[f64], guess: Option<&[f64]>, y: &mut [f64]) -> Result<()> {
        let grid = self.grid;
        let k = self.k();
        let cells: Vec<usize> = (0..grid.len()).filter(|&i| self.active[i]).collect();
        if cells.is_empty() {
            return Ok(());
        }
        let mut local = vec![usize::MAX; grid.len()];
        for (p, &i) in cells.iter().enumerate() {
            local[i] = p;
        }
        let m = cells.len();
        let mut diag = vec![0.0; m];
        let mut b = vec![0.0; m];
        let mut nbrs: Vec<[usize; 4]> = vec![[usize::MAX; 4]; m];
        for (p, &i) in cells.iter().enumerate() {
            let (d, known) = self.row(i);
            diag[p] = d;
            b[p] = rhs[i] + known;
            for (f, n) in grid.neighbors(i).iter().enumerate() {
                if let Some(j) = n {
                    if self.active[*j] {
                        nbrs[p][f] = local[*j];
                    }
                }
            }
        }
        let apply = |x: &[f64], out: &mut [f64]| {
            for p in 0..m {
                let mut s = diag[p] * x[p];
                for &q in &nbrs[p] {
                    if q != usize::MAX {
                        s -= k * x[q];
                    }
                }
                out[p] = s;
            }
        };
        let mut x: Vec<f64> = match guess {
            Some(g) => cells.iter().map(|&i| g[i]).collect(),
            None => b.iter().zip(&diag).map(|(bi, di)| bi / di).collect(),
        };
        let bnorm = norm(&b);
        if bnorm == 0.0 {
            for &i in &cells {
                y[i] = 0.0;
            }
            return Ok(());
        }
        let mut r = vec![0.0; m];
        apply(&x, &mut r);
        for p in 0..m {
            r[p] = b[p] - r[p];
        }
        let mut z: Vec<f64> = r.iter().zip(&diag).map(|(ri, di)| ri / di).collect();
        let mut dir = z.clone();
        let mut rz = dot(&r, &z);
        let mut ad = vec![0.0; m];
        let max_iter = 20 * m + 100;
        let mut iters = 0;
        let mut rel = norm(&r) / bnorm;
        while rel > CG_TOL && iters < max_iter {
            apply(&dir, &mut ad);
            let alpha = rz / dot(&dir, &ad);
            for p in 0..m {
                x[p] += alpha * dir[p];
                r[p] -= alpha * ad[p];
            }
            iters += 1;
            // periodic true-residual refresh keeps the recurrence honest
            if iters % 50 == 0 {
                apply(&x, &mut ad);
                for p in 0..m {
                    r[p] = b[p] - ad[p];
                }
            }
            rel = norm(&r) / bnorm;
            for p in 0..m {
                z[p] = r[p] / diag[p];
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for p in 0..m {
                dir[p] = z[p] + beta * dir[p];
            }
        }
        apply(&x, &mut ad);
        let true_rel = ad
            .iter()
            .zip(&b)
            .map(|(a, bi)| (a - bi).powi(2))
            .sum::<f64>()
            .sqrt()
            / bnorm;
        if true_rel > 1e-10 {
            return Err(Error::LinearSolver {
                residual: true_rel,
                iterations: iters,
            });
        }
        for (p, &i) in cells.iter().enumerate() {
            y[i] = x[p];
        }
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solves `x - dt * a .* L x = rhs` on `mask`, where `L` is the Laplacian
/// of the extension of `x` by `outside` off the mask (box faces per `bc`).
/// Cells with `a_i = 0` simply take `rhs_i`.
pub fn implicit_diffusion(
    grid: &Grid,
    bc: Boundary,
    mask: &[bool],
    coef: &[f64],
    dt: f64,
    rhs: &[f64],
    outside: &[f64],
) -> Result<Vec<f64>> {
    let n = grid.len();
    let mut active = vec![false; n];
    let mut weight = vec![0.0; n];
    let mut fixed = outside.to_vec();
    let mut scaled = vec![0.0; n];
    for i in 0..n {
        if !mask[i] {
            continue;
        }
        if coef[i] > 0.0 {
            active[i] = true;
            weight[i] = 1.0 / coef[i];
            scaled[i] = rhs[i] / coef[i];
        } else {
            fixed[i] = rhs[i];
        }
    }
    WeightedSystem {
        grid,
        bc,
        active: &active,
        weight: &weight,
        dt,
        fixed: &fixed,
    }
    .solve(&scaled, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::laplacian_masked;

    fn check(grid: &Grid, mask: &[bool], coef: &[f64], dt: f64) {
        let n = grid.len();
        let rhs: Vec<f64> = (0..n)
            .map(|i| ((i * 7919) % 13) as f64 / 13.0 - 0.3)
            .collect();
        let zero = vec![0.0; n];
        let x = implicit_diffusion(grid, Boundary::ZeroFlux, mask, coef, dt, &rhs, &zero).unwrap();
        let lx = laplacian_masked(grid, &x, mask);
        for i in 0..n {
            if mask[i] {
                let r = x[i] - dt * coef[i] * lx[i] - rhs[i];
                assert!(r.abs() < 1e-10, "cell {i}: {r}");
            } else {
                assert_eq!(x[i], 0.0);
            }
        }
    }

    #[test]
    fn masked_1d_solve_satisfies_equation() {
        let g = Grid::new_1d(-1.0, 0.02, 100).unwrap();
        let mask: Vec<bool> = (0..g.len()).map(|i| g.radius_of(i) < 0.7).collect();
        let coef: Vec<f64> = (0..g.len())
            .map(|i| {
                if i % 5 == 0 {
                    0.0
                } else {
                    0.3 + 0.01 * (i % 7) as f64
                }
            })
            .collect();
        check(&g, &mask, &coef, 0.01);
    }

    #[test]
    fn masked_2d_solve_satisfies_equation() {
        let g = Grid::new_2d([-1.0, -1.0], 0.05, [40, 40]).unwrap();
        let mask: Vec<bool> = (0..g.len()).map(|i| g.radius_of(i) < 0.8).collect();
        let coef: Vec<f64> = (0..g.len())
            .map(|i| {
                if i % 11 == 0 {
                    0.0
                } else {
                    0.1 + 0.9 * ((i % 3) as f64) / 2.0
                }
            })
            .collect();
        check(&g, &mask, &coef, 0.05);
    }

    #[test]
    fn zero_flux_box_preserves_sum() {
        let g = Grid::new_2d([0.0, 0.0], 0.1, [12, 9]).unwrap();
        let mask = vec![true; g.len()];
        let coef = vec![1.0; g.len()];
        let rhs: Vec<f64> = (0..g.len()).map(|i| (i as f64).sin()).collect();
        let x = implicit_diffusion(
            &g,
            Boundary::ZeroFlux,
            &mask,
            &coef,
            0.3,
            &rhs,
            &vec![0.0; g.len()],
        )
        .unwrap();
        let s0: f64 = rhs.iter().sum();
        let s1: f64 = x.iter().sum();
        assert!((s0 - s1).abs() < 1e-9);
    }
}
