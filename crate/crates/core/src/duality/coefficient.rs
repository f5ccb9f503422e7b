use crate::error::{Error, Result};
use crate::grid::{BallDomain, SpaceTimeField};
use crate::nonlinearity::Nonlinearity;

/// Most taps kept on each side of a separable smoothing pass.
const MAX_TAPS: usize = 32;

/// Difference quotient `c = (α(u) - α(v)) / (u - v)`, zero where `u == v`.
pub fn build_c(
    u: &SpaceTimeField,
    v: &SpaceTimeField,
    nl: &Nonlinearity,
) -> Result<SpaceTimeField> {
    u.check_compatible(v)?;
    let slices = u
        .slices()
        .iter()
        .zip(v.slices())
        .map(|(a, b)| {
            a.iter()
                .zip(b)
                .map(|(&x, &y)| nl.difference_quotient(x, y))
                .collect()
        })
        .collect();
    SpaceTimeField::from_slices(*u.grid(), u.t_start(), u.dt(), slices)
}

/// The raw coefficient, its regularization `c_m` and the index `m`.
#[derive(Debug, Clone)]
pub struct DualCoefficient {
    pub c: SpaceTimeField,
    pub cm: SpaceTimeField,
    pub m: f64,
}

impl DualCoefficient {
    pub fn floor(&self) -> f64 {
        1.0 / self.m
    }

    /// `Σ dt Σ |c - c_m|² / c_m · vol` over ball cells and slices in `steps`.
    pub fn j_value(&self, ball: &BallDomain, steps: std::ops::Range<usize>) -> f64 {
        let vol = self.c.grid().cell_volume();
        let mut acc = 0.0;
        for k in steps {
            let (c, cm) = (self.c.slice(k), self.cm.slice(k));
            acc += ball
                .interior()
                .iter()
                .map(|&i| (c[i] - cm[i]).powi(2) / cm[i])
                .sum::<f64>();
        }
        acc * vol * self.c.dt()
    }

    /// Same sum over every cell and every slice.
    pub fn j_total(&self) -> f64 {
        let vol = self.c.grid().cell_volume();
        let acc: f64 = self
            .c
            .slices()
            .iter()
            .zip(self.cm.slices())
            .map(|(c, cm)| {
                c.iter()
                    .zip(cm)
                    .map(|(a, b)| (a - b).powi(2) / b)
                    .sum::<f64>()
            })
            .sum();
        acc * vol * self.c.dt()
    }
}

/// Clamps `c` from below at `1/m`, then smooths with a separable bump of
/// half-width `1/m` in every space direction and in time. Indices past
/// the box or the time range are mirrored.
pub fn floor_and_smooth(c: &SpaceTimeField, m: f64) -> Result<DualCoefficient> {
    if !(m >= 1.0) || !m.is_finite() {
        return Err(Error::Inadmissible(format!(
            "regularization index must be >= 1, got {m}"
        )));
    }
    let floor = 1.0 / m;
    let grid = *c.grid();
    let [nx, ny] = grid.cells();
    let mut data: Vec<Vec<f64>> = c
        .slices()
        .iter()
        .map(|s| s.iter().map(|v| v.max(floor)).collect())
        .collect();
    let top = data.iter().flatten().fold(floor, |a, &b| a.max(b));

    let xs = taps(floor, grid.spacing());
    for s in data.iter_mut() {
        *s = pass(s, &xs, nx, |j, i| grid.index(i, j), ny);
        if grid.dim() == 2 {
            *s = pass(s, &xs, ny, |i, j| grid.index(i, j), nx);
        }
    }
    let ts = taps(floor, c.dt());
    let nt = data.len();
    if nt > 1 && ts.len() > 1 {
        let mut out = vec![vec![0.0; grid.len()]; nt];
        for (k, row) in out.iter_mut().enumerate() {
            for &(d, w) in &ts {
                let src = &data[mirror(k as isize + d, nt)];
                for (o, s) in row.iter_mut().zip(src) {
                    *o += w * s;
                }
            }
        }
        data = out;
    }
    for s in data.iter_mut() {
        for v in s.iter_mut() {
            *v = v.clamp(floor, top);
        }
    }
    Ok(DualCoefficient {
        c: c.clone(),
        cm: SpaceTimeField::from_slices(grid, c.t_start(), c.dt(), data)?,
        m,
    })
}

/// Offsets and normalized weights of `(1 - (d/width)^2)^4` sampled with
/// lattice spacing `step`, thinned to at most `MAX_TAPS` per side.
fn taps(width: f64, step: f64) -> Vec<(isize, f64)> {
    let reach = (width / step).floor() as isize;
    let stride = ((reach as usize).div_ceil(MAX_TAPS)).max(1) as isize;
    let mut out: Vec<(isize, f64)> = (-reach..=reach)
        .filter(|d| d % stride == 0)
        .map(|d| {
            let s = d as f64 * step / width;
            (d, (1.0 - s * s).max(0.0).powi(4))
        })
        .filter(|&(_, w)| w > 0.0)
        .collect();
    let total: f64 = out.iter().map(|p| p.1).sum();
    for p in out.iter_mut() {
        p.1 /= total;
    }
    out
}

fn mirror(mut i: isize, n: usize) -> usize {
    let n = n as isize;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - i - 1;
        } else {
            return i as usize;
        }
    }
}

/// One smoothing pass along lines of length `len`; `at(line, pos)` maps to
/// the flat index.
fn pass(
    src: &[f64],
    taps: &[(isize, f64)],
    len: usize,
    at: impl Fn(usize, usize) -> usize,
    lines: usize,
) -> Vec<f64> {
    if taps.len() <= 1 {
        return src.to_vec();
    }
    let mut out = vec![0.0; src.len()];
    for line in 0..lines {
        for p in 0..len {
            out[at(line, p)] = taps
                .iter()
                .map(|&(d, w)| w * src[at(line, mirror(p as isize + d, len))])
                .sum();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use proptest::prelude::*;

    fn stf(grid: Grid, f: impl Fn([f64; 2], f64) -> f64, n: usize, dt: f64) -> SpaceTimeField {
        let slices = (0..n)
            .map(|k| {
                (0..grid.len())
                    .map(|i| f(grid.center(i), k as f64 * dt))
                    .collect()
            })
            .collect();
        SpaceTimeField::from_slices(grid, 0.0, dt, slices).unwrap()
    }

    #[test]
    fn zero_coefficient_gives_floor_everywhere() {
        let g = Grid::new_1d(-1.0, 0.05, 40).unwrap();
        let c = stf(g, |_, _| 0.0, 11, 0.01);
        let d = floor_and_smooth(&c, 8.0).unwrap();
        assert!(d.cm.slices().iter().flatten().all(|&v| v == 0.125));
        let expect = 0.125 * 2.0 * 0.01 * 11.0;
        assert!((d.j_total() - expect).abs() < 1e-12);
    }

    #[test]
    fn equal_states_give_zero_quotient() {
        let g = Grid::new_1d(-1.0, 0.1, 20).unwrap();
        let u = stf(g, |x, t| x[0] + t, 3, 0.1);
        let c = build_c(&u, &u, &Nonlinearity::two_phase()).unwrap();
        assert!(c.slices().iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn mirror_reflects_repeatedly() {
        assert_eq!(mirror(-1, 5), 0);
        assert_eq!(mirror(5, 5), 4);
        assert_eq!(mirror(-7, 3), 0);
        assert_eq!(mirror(2, 3), 2);
    }

    proptest! {
        #[test]
        fn smoothing_respects_floor_and_ceiling(
            vals in proptest::collection::vec(0.0f64..=1.0, 12 * 12 * 5),
            m in 1.0f64..20.0,
        ) {
            let g = Grid::new_2d([0.0, 0.0], 0.1, [12, 12]).unwrap();
            let slices: Vec<Vec<f64>> = vals.chunks(144).map(|c| c.to_vec()).collect();
            let c = SpaceTimeField::from_slices(g, 0.0, 0.02, slices).unwrap();
            let d = floor_and_smooth(&c, m).unwrap();
            let top = vals.iter().fold(1.0 / m, |a, &b| a.max(b));
            for &v in d.cm.slices().iter().flatten() {
                prop_assert!(v >= 1.0 / m && v <= top);
            }
        }
    }
}
