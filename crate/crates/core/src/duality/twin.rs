use crate::error::{Error, Result};
use crate::forward::{run, SolveConfig};
use crate::grid::{Grid, SpaceTimeField};
use crate::measures::SignedMeasure;
use crate::nonlinearity::Nonlinearity;

/// Averages each coarse cell's children. `coarse` must be `fine` coarsened.
pub fn restrict(fine: &SpaceTimeField, coarse: &Grid) -> Result<SpaceTimeField> {
    let f = fine.grid();
    if !f.coarsened()?.same_as(coarse) {
        return Err(Error::GridMismatch(
            "coarse grid is not the fine grid coarsened by two".into(),
        ));
    }
    let children: Vec<Vec<usize>> = (0..coarse.len())
        .map(|c| {
            let (i, j) = coarse.coords(c);
            if coarse.dim() == 1 {
                vec![f.index(2 * i, 0), f.index(2 * i + 1, 0)]
            } else {
                vec![
                    f.index(2 * i, 2 * j),
                    f.index(2 * i + 1, 2 * j),
                    f.index(2 * i, 2 * j + 1),
                    f.index(2 * i + 1, 2 * j + 1),
                ]
            }
        })
        .collect();
    let share = 1.0 / children[0].len() as f64;
    let slices = fine
        .slices()
        .iter()
        .map(|s| {
            children
                .iter()
                .map(|ch| ch.iter().map(|&k| s[k]).sum::<f64>() * share)
                .collect()
        })
        .collect();
    SpaceTimeField::from_slices(*coarse, fine.t_start(), fine.dt(), slices)
}

/// A coarse run and a finer run of the same data brought to the coarse
/// grid and time mesh.
#[derive(Debug, Clone)]
pub struct TwinRuns {
    pub coarse: SpaceTimeField,
    pub fine: SpaceTimeField,
}

/// Solves with `(h, dt)` and `(h/2, dt/dt_ratio)`; the fine history is
/// stored every `dt_ratio` steps and restricted to the coarse grid.
pub fn twin_runs(
    mu: &SignedMeasure,
    grid: &Grid,
    dt: f64,
    horizon: f64,
    nl: &Nonlinearity,
    dt_ratio: usize,
) -> Result<TwinRuns> {
    if dt_ratio == 0 {
        return Err(Error::Inadmissible(
            "time refinement ratio must be at least 1".into(),
        ));
    }
    let coarse = run(mu, &SolveConfig::new(*grid, horizon, dt), nl)?.history;
    let mut cfg = SolveConfig::new(grid.refined()?, horizon, dt / dt_ratio as f64);
    cfg.store_every = dt_ratio;
    let fine = run(mu, &cfg, nl)?.history;
    let fine = restrict(&fine, grid)?;
    let fine =
        SpaceTimeField::from_slices(*grid, coarse.t_start(), coarse.dt(), fine.slices().to_vec())?;
    coarse.check_compatible(&fine)?;
    Ok(TwinRuns { coarse, fine })
}
