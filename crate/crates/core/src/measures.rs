//! Signed initial data: finitely many atoms plus a piecewise-constant density.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub position: [f64; 2],
    pub weight: f64,
}

/// Piecewise-constant density on the box `[lo, hi]` split into
/// `shape[0] x shape[1]` equal pieces (row-major, first axis fastest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Density {
    lo: [f64; 2],
    hi: [f64; 2],
    shape: [usize; 2],
    values: Vec<f64>,
}

impl Density {
    pub fn new(
        dim: usize,
        lo: [f64; 2],
        hi: [f64; 2],
        shape: [usize; 2],
        values: Vec<f64>,
    ) -> Result<Self> {
        let axes = if dim == 1 { 1 } else { 2 };
        let (lo, hi, shape) = if dim == 1 {
            ([lo[0], -0.5], [hi[0], 0.5], [shape[0], 1])
        } else {
            (lo, hi, shape)
        };
        for a in 0..axes {
            if !(hi[a] > lo[a]) || !lo[a].is_finite() || !hi[a].is_finite() {
                return Err(Error::Measure(format!("density box axis {a} is empty")));
            }
            if shape[a] == 0 {
                return Err(Error::Measure("density shape must be positive".into()));
            }
        }
        if values.len() != shape[0] * shape[1] {
            return Err(Error::Measure(format!(
                "density has {} values for shape {:?}",
                values.len(),
                &shape[..axes]
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Measure("density values must be finite".into()));
        }
        Ok(Self {
            lo,
            hi,
            shape,
            values,
        })
    }

    pub fn uniform(dim: usize, lo: [f64; 2], hi: [f64; 2], value: f64) -> Result<Self> {
        Self::new(dim, lo, hi, [1, 1], vec![value])
    }

    /// Each piece as `(lo, hi, value)`.
    fn pieces(&self) -> impl Iterator<Item = ([f64; 2], [f64; 2], f64)> + '_ {
        let dx = (self.hi[0] - self.lo[0]) / self.shape[0] as f64;
        let dy = (self.hi[1] - self.lo[1]) / self.shape[1] as f64;
        self.values.iter().enumerate().map(move |(k, &v)| {
            let i = k % self.shape[0];
            let j = k / self.shape[0];
            let lo = [self.lo[0] + i as f64 * dx, self.lo[1] + j as f64 * dy];
            let hi = [lo[0] + dx, lo[1] + dy];
            (lo, hi, v)
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignedMeasure {
    dim: usize,
    atoms: Vec<Atom>,
    densities: Vec<Density>,
    gauss_c: Option<f64>,
}

/// `∫_a^b exp(-c x^2) dx`, evaluated through erf/erfc on the side that
/// avoids cancellation.
pub fn gaussian_segment(a: f64, b: f64, c: f64) -> f64 {
    let s = c.sqrt();
    let k = 0.5 * std::f64::consts::PI.sqrt() / s;
    if a >= 0.0 {
        k * (libm::erfc(s * a) - libm::erfc(s * b))
    } else if b <= 0.0 {
        k * (libm::erfc(-s * b) - libm::erfc(-s * a))
    } else {
        k * (libm::erf(s * b) - libm::erf(s * a))
    }
}

const GL8: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (-0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (-0.183_434_642_495_649_8, 0.362_683_783_378_362_0),
    (0.183_434_642_495_649_8, 0.362_683_783_378_362_0),
    (0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
];

fn overlap(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    (a1.min(b1) - a0.max(b0)).max(0.0)
}

impl SignedMeasure {
    pub fn new(dim: usize) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::Measure(format!(
                "dimension must be 1 or 2, got {dim}"
            )));
        }
        Ok(Self {
            dim,
            atoms: Vec::new(),
            densities: Vec::new(),
            gauss_c: None,
        })
    }

    pub fn with_atom(mut self, position: [f64; 2], weight: f64) -> Result<Self> {
        if !weight.is_finite() || position.iter().any(|p| !p.is_finite()) {
            return Err(Error::Measure(
                "atom position and weight must be finite".into(),
            ));
        }
        let position = if self.dim == 1 {
            [position[0], 0.0]
        } else {
            position
        };
        self.atoms.push(Atom { position, weight });
        Ok(self)
    }

    pub fn with_density(mut self, density: Density) -> Self {
        self.densities.push(density);
        self
    }

    pub fn with_gauss_c(mut self, c: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(Error::NonPositiveExponent(c));
        }
        self.gauss_c = Some(c);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn gauss_c(&self) -> Option<f64> {
        self.gauss_c
    }

    /// Sum of two measures; the declared exponent is the larger one.
    pub fn plus(&self, other: &SignedMeasure) -> Result<SignedMeasure> {
        if self.dim != other.dim {
            return Err(Error::Measure(
                "cannot add measures of different dimension".into(),
            ));
        }
        let gauss_c = match (self.gauss_c, other.gauss_c) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        };
        Ok(SignedMeasure {
            dim: self.dim,
            atoms: self.atoms.iter().chain(&other.atoms).copied().collect(),
            densities: self
                .densities
                .iter()
                .chain(&other.densities)
                .cloned()
                .collect(),
            gauss_c,
        })
    }

    pub fn is_zero(&self) -> bool {
        self.atoms.iter().all(|a| a.weight == 0.0)
            && self
                .densities
                .iter()
                .all(|d| d.values.iter().all(|v| *v == 0.0))
    }

    fn piece_measure(&self, lo: [f64; 2], hi: [f64; 2]) -> f64 {
        if self.dim == 1 {
            hi[0] - lo[0]
        } else {
            (hi[0] - lo[0]) * (hi[1] - lo[1])
        }
    }

    pub fn total_mass(&self) -> f64 {
        let atoms: f64 = self.atoms.iter().map(|a| a.weight).sum();
        let dens: f64 = self
            .densities
            .iter()
            .flat_map(|d| d.pieces())
            .map(|(lo, hi, v)| v * self.piece_measure(lo, hi))
            .sum();
        atoms + dens
    }

    /// `∫ exp(-c|x|^2) d|μ|`.
    pub fn gaussian_moment(&self, c: f64) -> Result<f64> {
        if !(c > 0.0) {
            return Err(Error::NonPositiveExponent(c));
        }
        let atoms: f64 = self
            .atoms
            .iter()
            .map(|a| {
                let r2 = a.position[0].powi(2) + a.position[1].powi(2);
                a.weight.abs() * (-c * r2).exp()
            })
            .sum();
        let dens: f64 = self
            .densities
            .iter()
            .flat_map(|d| d.pieces())
            .map(|(lo, hi, v)| {
                let gx = gaussian_segment(lo[0], hi[0], c);
                let gy = if self.dim == 1 {
                    1.0
                } else {
                    gaussian_segment(lo[1], hi[1], c)
                };
                v.abs() * gx * gy
            })
            .sum();
        Ok(atoms + dens)
    }

    /// `∫ ψ dμ`; density pieces use 8-point Gauss-Legendre on a 4-way split
    /// per axis.
    pub fn pair_with(&self, psi: impl Fn([f64; 2]) -> f64) -> f64 {
        let atoms: f64 = self.atoms.iter().map(|a| a.weight * psi(a.position)).sum();
        let sub = 4;
        let mut dens = 0.0;
        for d in &self.densities {
            for (lo, hi, v) in d.pieces() {
                if v == 0.0 {
                    continue;
                }
                let hx = (hi[0] - lo[0]) / sub as f64;
                let hy = (hi[1] - lo[1]) / sub as f64;
                let mut acc = 0.0;
                for si in 0..sub {
                    let cx = lo[0] + (si as f64 + 0.5) * hx;
                    for &(xi, wi) in &GL8 {
                        let x = cx + 0.5 * hx * xi;
                        if self.dim == 1 {
                            acc += wi * 0.5 * hx * psi([x, 0.0]);
                            continue;
                        }
                        for sj in 0..sub {
                            let cy = lo[1] + (sj as f64 + 0.5) * hy;
                            for &(yj, wj) in &GL8 {
                                let y = cy + 0.5 * hy * yj;
                                acc += wi * wj * 0.25 * hx * hy * psi([x, y]);
                            }
                        }
                    }
                }
                dens += v * acc;
            }
        }
        atoms + dens
    }

    /// Cell averages on `grid`: (atom mass in cell + density integral over
    /// cell) / cell volume.
    pub fn cell_average(&self, grid: &Grid, time: f64) -> Result<Field> {
        if grid.dim() != self.dim {
            return Err(Error::GridMismatch(format!(
                "measure is {}-dimensional, grid is {}-dimensional",
                self.dim,
                grid.dim()
            )));
        }
        let vol = grid.cell_volume();
        let h = grid.spacing();
        let o = grid.origin();
        let [nx, ny] = grid.cells();
        let blo = grid.box_lo();
        let bhi = grid.box_hi();
        let mut values = vec![0.0; grid.len()];
        for d in &self.densities {
            for (lo, hi, v) in d.pieces() {
                let outside_x = lo[0] < blo[0] - 1e-12 || hi[0] > bhi[0] + 1e-12;
                let outside_y = self.dim == 2 && (lo[1] < blo[1] - 1e-12 || hi[1] > bhi[1] + 1e-12);
                if v != 0.0 && (outside_x || outside_y) {
                    return Err(Error::Measure(
                        "density support extends beyond the grid box".into(),
                    ));
                }
                if v == 0.0 {
                    continue;
                }
                let i0 = (((lo[0] - o[0]) / h).floor().max(0.0) as usize).min(nx - 1);
                let i1 = (((hi[0] - o[0]) / h).ceil().max(0.0) as usize).min(nx);
                let (j0, j1) = if self.dim == 1 {
                    (0, 1)
                } else {
                    (
                        (((lo[1] - o[1]) / h).floor().max(0.0) as usize).min(ny - 1),
                        (((hi[1] - o[1]) / h).ceil().max(0.0) as usize).min(ny),
                    )
                };
                for j in j0..j1 {
                    let oy = if self.dim == 1 {
                        1.0
                    } else {
                        let y0 = o[1] + j as f64 * h;
                        overlap(y0, y0 + h, lo[1], hi[1])
                    };
                    if oy == 0.0 {
                        continue;
                    }
                    for i in i0..i1 {
                        let x0 = o[0] + i as f64 * h;
                        let ox = overlap(x0, x0 + h, lo[0], hi[0]);
                        values[grid.index(i, j)] += v * ox * oy / vol;
                    }
                }
            }
        }
        for a in &self.atoms {
            let idx = grid.cell_of(a.position).ok_or(Error::AtomOutsideBox {
                position: a.position,
            })?;
            values[idx] += a.weight / vol;
        }
        Field::new(*grid, values, time)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        fn rec(
            f: &dyn Fn(f64) -> f64,
            a: f64,
            b: f64,
            fa: f64,
            fm: f64,
            fb: f64,
            whole: f64,
            tol: f64,
            depth: u32,
        ) -> f64 {
            let m = 0.5 * (a + b);
            let lm = 0.5 * (a + m);
            let rm = 0.5 * (m + b);
            let flm = f(lm);
            let frm = f(rm);
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            let delta = left + right - whole;
            if depth == 0 || delta.abs() <= 15.0 * tol {
                return left + right + delta / 15.0;
            }
            rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
        let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        rec(f, a, b, fa, fm, fb, whole, tol, 50)
    }

    #[test]
    fn moment_of_single_atom() {
        let mu = SignedMeasure::new(2)
            .unwrap()
            .with_atom([0.3, -0.4], 1.0)
            .unwrap();
        let v = mu.gaussian_moment(2.0).unwrap();
        assert!((v - (-2.0f64 * 0.25).exp()).abs() < 1e-15);
        assert_eq!(
            SignedMeasure::new(1).unwrap().gaussian_moment(1.0).unwrap(),
            0.0
        );
        assert!(mu.gaussian_moment(0.0).is_err());
    }

    #[test]
    fn moment_of_density_matches_quadrature() {
        let d = Density::uniform(1, [-1.0, 0.0], [1.0, 0.0], 1.0).unwrap();
        let mu = SignedMeasure::new(1).unwrap().with_density(d);
        let oracle = simpson(&|x: f64| (-x * x).exp(), -1.0, 1.0, 1e-14);
        assert!((mu.gaussian_moment(1.0).unwrap() - oracle).abs() < 1e-10);

        let d = Density::new(
            2,
            [0.5, -2.0],
            [3.0, 1.0],
            [2, 3],
            vec![1.0, -2.0, 0.5, 3.0, -1.0, 0.25],
        )
        .unwrap();
        let mu = SignedMeasure::new(2).unwrap().with_density(d.clone());
        let mut oracle = 0.0;
        for (lo, hi, v) in d.pieces() {
            let gx = simpson(&|x: f64| (-0.7 * x * x).exp(), lo[0], hi[0], 1e-14);
            let gy = simpson(&|y: f64| (-0.7 * y * y).exp(), lo[1], hi[1], 1e-14);
            oracle += v.abs() * gx * gy;
        }
        assert!((mu.gaussian_moment(0.7).unwrap() - oracle).abs() < 1e-10);
    }

    #[test]
    fn gaussian_segment_far_tail() {
        let oracle = simpson(&|x: f64| (-x * x).exp(), 5.0, 6.0, 1e-22);
        let v = gaussian_segment(5.0, 6.0, 1.0);
        assert!(((v - oracle) / oracle).abs() < 1e-10);
        let v = gaussian_segment(-6.0, -5.0, 1.0);
        assert!(((v - oracle) / oracle).abs() < 1e-10);
    }

    #[test]
    fn cell_average_examples() {
        let g = Grid::new_1d(-2.0, 0.5, 8).unwrap();
        let mu = SignedMeasure::new(1)
            .unwrap()
            .with_atom([0.25, 0.0], 2.0)
            .unwrap();
        let f = mu.cell_average(&g, 0.0).unwrap();
        let k = g.cell_of([0.25, 0.0]).unwrap();
        assert_eq!(f.values()[k], 4.0);
        assert_eq!(f.values().iter().filter(|v| **v != 0.0).count(), 1);

        let z = SignedMeasure::new(1)
            .unwrap()
            .cell_average(&g, 0.0)
            .unwrap();
        assert!(z.values().iter().all(|v| *v == 0.0));

        let d = Density::uniform(1, [-2.0, 0.0], [2.0, 0.0], 1.0).unwrap();
        let one = SignedMeasure::new(1)
            .unwrap()
            .with_density(d)
            .cell_average(&g, 0.0)
            .unwrap();
        assert!(one.values().iter().all(|v| (*v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn atom_on_face_goes_to_positive_side() {
        let g = Grid::new_1d(-1.0, 0.5, 4).unwrap();
        let mu = SignedMeasure::new(1)
            .unwrap()
            .with_atom([0.0, 0.0], 1.0)
            .unwrap();
        let f = mu.cell_average(&g, 0.0).unwrap();
        assert_eq!(f.values(), &[0.0, 0.0, 2.0, 0.0]);
    }

    #[test]
    fn atom_outside_rejected() {
        let g = Grid::new_1d(-1.0, 0.5, 4).unwrap();
        let mu = SignedMeasure::new(1)
            .unwrap()
            .with_atom([1.5, 0.0], 1.0)
            .unwrap();
        assert!(matches!(
            mu.cell_average(&g, 0.0),
            Err(Error::AtomOutsideBox { .. })
        ));
    }

    #[test]
    fn pairing_is_exact_on_polynomials() {
        let d = Density::new(
            2,
            [-1.0, -1.0],
            [1.0, 0.5],
            [3, 2],
            vec![1.0, 2.0, -1.0, 0.5, 0.0, 3.0],
        )
        .unwrap();
        let mu = SignedMeasure::new(2)
            .unwrap()
            .with_density(d.clone())
            .with_atom([0.1, 0.2], 2.0)
            .unwrap();
        let psi = |x: [f64; 2]| x[0] * x[0] * x[1] + 1.0;
        let mut oracle = 2.0 * psi([0.1, 0.2]);
        for (lo, hi, v) in d.pieces() {
            let ix2 = (hi[0].powi(3) - lo[0].powi(3)) / 3.0;
            let iy = (hi[1].powi(2) - lo[1].powi(2)) / 2.0;
            let area = (hi[0] - lo[0]) * (hi[1] - lo[1]);
            oracle += v * (ix2 * iy + area);
        }
        assert!((mu.pair_with(psi) - oracle).abs() < 1e-12);
    }

    fn arb_measure() -> impl Strategy<Value = SignedMeasure> {
        (
            prop::collection::vec((-1.9f64..1.9, -1.9f64..1.9, -5.0f64..5.0), 0..6),
            prop::collection::vec(-3.0f64..3.0, 6),
            -1.7f64..0.0,
            0.1f64..1.7,
        )
            .prop_map(|(atoms, vals, lo, hi)| {
                let d = Density::new(2, [lo, lo * 0.5], [hi, hi], [3, 2], vals).unwrap();
                let mut mu = SignedMeasure::new(2).unwrap().with_density(d);
                for (x, y, w) in atoms {
                    mu = mu.with_atom([x, y], w).unwrap();
                }
                mu
            })
    }

    proptest! {
        #[test]
        fn projection_conserves_mass(mu in arb_measure()) {
            let g = Grid::new_2d([-2.0, -2.0], 0.13, [31, 31]).unwrap();
            let f = mu.cell_average(&g, 0.0).unwrap();
            let m = mu.total_mass();
            let scale = 1.0 + m.abs() + f.values().iter().map(|v| v.abs()).sum::<f64>() * g.cell_volume();
            prop_assert!((f.integral() - m).abs() <= 1e-13 * scale);
        }

        #[test]
        fn projection_is_linear(a in arb_measure(), b in arb_measure()) {
            let g = Grid::new_2d([-2.0, -2.0], 0.13, [31, 31]).unwrap();
            let fa = a.cell_average(&g, 0.0).unwrap();
            let fb = b.cell_average(&g, 0.0).unwrap();
            let fab = a.plus(&b).unwrap().cell_average(&g, 0.0).unwrap();
            for i in 0..g.len() {
                let s = fa.values()[i] + fb.values()[i];
                prop_assert!((fab.values()[i] - s).abs() <= 1e-12 * (1.0 + s.abs()));
            }
        }
    }
}
