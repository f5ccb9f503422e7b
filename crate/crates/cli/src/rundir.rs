//! Run directories: `config.toml`, `ledger.csv`, `slices/u_NNNNN.csv` and
//! `manifest.json`.

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use stefan_core::forward::Run;
use stefan_core::grid::{format_real as f, read_field_csv, write_field_csv};
use stefan_core::{Field, SpaceTimeField};

use crate::config::{parse_config, ExperimentConfig, Needs};
use crate::{io_err, CliError};

pub const LEDGER_HEADER: &str = "step,time,mass,newton_iterations,residual,fallback";

pub fn write_run(dir: &Path, cfg: &ExperimentConfig, run: &Run) -> Result<(), CliError> {
    let slices = dir.join("slices");
    fs::create_dir_all(&slices).map_err(io_err(&slices))?;
    let text = toml::to_string(cfg).map_err(|e| CliError::Input(e.to_string()))?;
    let cfg_path = dir.join("config.toml");
    fs::write(&cfg_path, text).map_err(io_err(&cfg_path))?;
    for k in 0..run.history.len() {
        let p = slices.join(format!("u_{k:05}.csv"));
        let f = fs::File::create(&p).map_err(io_err(&p))?;
        write_field_csv(&run.history.field(k), BufWriter::new(f))?;
    }
    let p = dir.join("ledger.csv");
    let mut w = BufWriter::new(fs::File::create(&p).map_err(io_err(&p))?);
    writeln!(w, "{LEDGER_HEADER}").map_err(io_err(&p))?;
    for r in &run.ledger {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.step,
            f(r.time),
            f(r.mass),
            r.newton_iterations,
            f(r.residual),
            r.fallback
        )
        .map_err(io_err(&p))?;
    }
    w.flush().map_err(io_err(&p))
}

pub struct LoadedRun {
    pub config: ExperimentConfig,
    pub history: SpaceTimeField,
}

fn slice_paths(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let slices = dir.join("slices");
    let mut paths: Vec<PathBuf> = fs::read_dir(&slices)
        .map_err(io_err(&slices))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    paths.sort();
    if paths.len() < 2 {
        return Err(CliError::Input(format!(
            "{} holds fewer than two slices",
            slices.display()
        )));
    }
    Ok(paths)
}

pub fn read_field(path: &Path) -> Result<Field, CliError> {
    let f = fs::File::open(path).map_err(io_err(path))?;
    Ok(read_field_csv(BufReader::new(f))?)
}

pub fn read_run(dir: &Path) -> Result<LoadedRun, CliError> {
    let config = parse_config(&dir.join("config.toml"), Needs::Nothing)?;
    let fields = slice_paths(dir)?
        .iter()
        .map(|p| read_field(p))
        .collect::<Result<Vec<_>, _>>()?;
    let grid = *fields[0].grid();
    if fields.iter().any(|f| !f.grid().same_as(&grid)) {
        return Err(CliError::Input(format!(
            "slices in {} use different grids",
            dir.display()
        )));
    }
    let t0 = fields[0].time();
    let dt = (fields[fields.len() - 1].time() - t0) / (fields.len() - 1) as f64;
    let history = SpaceTimeField::from_slices(
        grid,
        t0,
        dt,
        fields.into_iter().map(Field::into_values).collect(),
    )?;
    Ok(LoadedRun { config, history })
}
