//! Experiment configuration: strict TOML with every violation reported.

use std::path::Path;

use serde::{Deserialize, Serialize};
use stefan_core::measures::{Density, SignedMeasure};
use stefan_core::{Boundary, Grid, Nonlinearity};

use crate::CliError;

/// Reference text for every configuration key, shown by `--help`.
pub const KEYS_HELP: &str = "\
CONFIGURATION KEYS (TOML, unknown keys are rejected)
  seed                       integer recorded in the manifest (default 0)

  [nonlinearity]
    kind = \"two_phase\" | \"knots\"   two_phase is alpha(u) = (u-1)+ - (u+1)-  (default two_phase)
    knots = [[u, a], ...]          breakpoints of alpha, sorted in u (kind = \"knots\")
    slope = B                      slope beyond the outer knots (kind = \"knots\")

  [measure]
    dim = 1 | 2                    spatial dimension
    atom = [[x, w], ...]           point masses; [x, y, w] in 2D
    gauss_c = c                    Gaussian moment exponent; enforces T <= 1/(4c)
    [measure.density]
      box = [lo.., hi..]           bounding box, 2 numbers in 1D, 4 in 2D
      values = [...]               cell values, row-major
      shape = [n..]                cells per axis (default: len(values) in 1D)

  [grid]
    half_width = L                 centred box [-L, L]^dim
    origin = [x..]                 lower corner (instead of half_width)
    cells = n                      cells per axis
    spacing = h                    (with origin) cell width; otherwise 2L/cells

  [time]
    horizon = T                    final time
    dt = k                         time step
    store_every = s                keep every s-th slice (default 1)

  [solver]
    boundary = \"zero_flux\" | \"dirichlet\"   truncation boundary (default zero_flux)
    newton_tol = tol               (default 1e-12)
    max_newton = n                 (default 50)
    conservation_tol = tol         forward check on zero-flux runs (default 1e-12)

  [convergence]
    mode = \"self\" | \"neumann\"      successive-level differences or the similarity front (default self)
    levels = n                     number of resolutions, each halving h and dt (default 3)
    liquid = A, solid = A'         step data for mode = \"neumann\" (default 3.0, 1.5)
    min_order = p                  pass threshold on the fitted order (default 0.8)
";

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub nonlinearity: NonlinearitySpec,
    pub measure: Option<MeasureSpec>,
    pub grid: Option<GridSpec>,
    pub time: Option<TimeSpec>,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub convergence: ConvergenceSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct NonlinearitySpec {
    #[serde(default = "two_phase")]
    pub kind: String,
    pub knots: Option<Vec<[f64; 2]>>,
    pub slope: Option<f64>,
}

fn two_phase() -> String {
    "two_phase".into()
}

impl Default for NonlinearitySpec {
    fn default() -> Self {
        Self {
            kind: two_phase(),
            knots: None,
            slope: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MeasureSpec {
    pub dim: usize,
    #[serde(default)]
    pub atom: Vec<Vec<f64>>,
    pub gauss_c: Option<f64>,
    pub density: Option<DensitySpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DensitySpec {
    #[serde(rename = "box")]
    pub bounds: Vec<f64>,
    pub values: Vec<f64>,
    pub shape: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub half_width: Option<f64>,
    pub origin: Option<Vec<f64>>,
    pub cells: usize,
    pub spacing: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    pub horizon: f64,
    pub dt: f64,
    #[serde(default = "one")]
    pub store_every: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default = "zero_flux")]
    pub boundary: String,
    #[serde(default = "newton_tol")]
    pub newton_tol: f64,
    #[serde(default = "max_newton")]
    pub max_newton: usize,
    #[serde(default = "newton_tol")]
    pub conservation_tol: f64,
}

fn zero_flux() -> String {
    "zero_flux".into()
}
fn newton_tol() -> f64 {
    1e-12
}
fn max_newton() -> usize {
    50
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self {
            boundary: zero_flux(),
            newton_tol: newton_tol(),
            max_newton: max_newton(),
            conservation_tol: newton_tol(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceSpec {
    #[serde(default = "self_mode")]
    pub mode: String,
    #[serde(default = "three")]
    pub levels: usize,
    #[serde(default = "liquid")]
    pub liquid: f64,
    #[serde(default = "solid")]
    pub solid: f64,
    #[serde(default = "min_order")]
    pub min_order: f64,
}

fn self_mode() -> String {
    "self".into()
}
fn three() -> usize {
    3
}
fn liquid() -> f64 {
    3.0
}
fn solid() -> f64 {
    1.5
}
fn min_order() -> f64 {
    0.8
}

impl Default for ConvergenceSpec {
    fn default() -> Self {
        Self {
            mode: self_mode(),
            levels: three(),
            liquid: liquid(),
            solid: solid(),
            min_order: min_order(),
        }
    }
}

/// Which blocks a subcommand needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Needs {
    Forward,
    Convergence,
    Nothing,
}

pub fn parse_config(path: &Path, needs: Needs) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(vec![format!("{}: {e}", path.display())]))?;
    parse_config_str(&text, needs)
}

pub fn parse_config_str(text: &str, needs: Needs) -> Result<ExperimentConfig, CliError> {
    let value: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| CliError::Config(vec![e.message().to_string()]))?;
    let mut problems = unknown_keys(&value);
    if !problems.is_empty() {
        return Err(CliError::Config(problems));
    }
    let cfg: ExperimentConfig = toml::Value::Table(value)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Config(vec![e.message().to_string()]))?;
    problems.extend(cfg.violations(needs));
    if problems.is_empty() {
        Ok(cfg)
    } else {
        Err(CliError::Config(problems))
    }
}

const KNOWN: &[(&str, &[&str])] = &[
    (
        "",
        &[
            "seed",
            "nonlinearity",
            "measure",
            "grid",
            "time",
            "solver",
            "convergence",
        ],
    ),
    ("nonlinearity", &["kind", "knots", "slope"]),
    ("measure", &["dim", "atom", "gauss_c", "density"]),
    ("measure.density", &["box", "values", "shape"]),
    ("grid", &["half_width", "origin", "cells", "spacing"]),
    ("time", &["horizon", "dt", "store_every"]),
    (
        "solver",
        &["boundary", "newton_tol", "max_newton", "conservation_tol"],
    ),
    (
        "convergence",
        &["mode", "levels", "liquid", "solid", "min_order"],
    ),
];

fn unknown_keys(root: &toml::Table) -> Vec<String> {
    fn walk(table: &toml::Table, prefix: &str, out: &mut Vec<String>) {
        let allowed = KNOWN
            .iter()
            .find(|(p, _)| *p == prefix)
            .map(|(_, k)| *k)
            .unwrap_or(&[]);
        for (key, value) in table {
            let path = if prefix.is_empty() {
                key.clone()
            } else {
                format!("{prefix}.{key}")
            };
            if !allowed.contains(&key.as_str()) {
                out.push(format!("unknown key `{path}`"));
            } else if let toml::Value::Table(t) = value {
                walk(t, &path, out);
            }
        }
    }
    let mut out = Vec::new();
    walk(root, "", &mut out);
    out
}

impl ExperimentConfig {
    /// Every semantic problem, not just the first.
    pub fn violations(&self, needs: Needs) -> Vec<String> {
        let mut v = Vec::new();
        if let Err(e) = self.nonlinearity() {
            v.push(e);
        }
        let dim = self.measure.as_ref().map(|m| m.dim);
        if needs == Needs::Forward && self.measure.is_none() {
            v.push("missing [measure] block".into());
        }
        if needs != Needs::Nothing {
            if self.grid.is_none() {
                v.push("missing [grid] block".into());
            }
            if self.time.is_none() {
                v.push("missing [time] block".into());
            }
        }
        if let Some(m) = &self.measure {
            if m.dim != 1 && m.dim != 2 {
                v.push(format!("measure.dim must be 1 or 2, got {}", m.dim));
            }
            for (k, a) in m.atom.iter().enumerate() {
                if a.len() != m.dim + 1 {
                    v.push(format!(
                        "measure.atom[{k}] needs {} numbers, got {}",
                        m.dim + 1,
                        a.len()
                    ));
                }
            }
            if let Some(c) = m.gauss_c {
                if !(c > 0.0) {
                    v.push(format!("measure.gauss_c must be positive, got {c}"));
                } else if let Some(t) = &self.time {
                    if t.horizon > 0.25 / c * (1.0 + 1e-12) {
                        v.push(format!(
                            "time.horizon = {} exceeds the Gaussian-moment horizon 1/(4 gauss_c) = {}",
                            t.horizon,
                            0.25 / c
                        ));
                    }
                }
            }
            if let Some(d) = &m.density {
                if d.bounds.len() != 2 * m.dim {
                    v.push(format!("measure.density.box needs {} numbers", 2 * m.dim));
                }
                let shape = d.shape.clone().unwrap_or_else(|| vec![d.values.len()]);
                if shape.len() != m.dim {
                    v.push("measure.density.shape needs one entry per axis".into());
                } else if shape.iter().product::<usize>() != d.values.len() {
                    v.push("measure.density.values length does not match its shape".into());
                }
            }
        }
        if let Some(g) = &self.grid {
            match (g.half_width, &g.origin) {
                (Some(_), Some(_)) => {
                    v.push("grid: give either half_width or origin, not both".into())
                }
                (None, None) => v.push("grid: one of half_width or origin is required".into()),
                (Some(l), None) if !(l > 0.0) => {
                    v.push(format!("grid.half_width must be positive, got {l}"))
                }
                (None, Some(o)) => {
                    if g.spacing.is_none() {
                        v.push("grid.spacing is required with grid.origin".into());
                    }
                    if let Some(d) = dim {
                        if o.len() != d {
                            v.push(format!("grid.origin needs {d} numbers"));
                        }
                    }
                }
                _ => {}
            }
            if g.cells < 3 {
                v.push(format!("grid.cells must be at least 3, got {}", g.cells));
            }
            if let Some(h) = g.spacing {
                if !(h > 0.0) {
                    v.push(format!("grid.spacing must be positive, got {h}"));
                }
            }
        }
        if let Some(t) = &self.time {
            if !(t.horizon > 0.0) {
                v.push(format!("time.horizon must be positive, got {}", t.horizon));
            }
            if !(t.dt > 0.0) {
                v.push(format!("time.dt must be positive, got {}", t.dt));
            }
            if t.store_every == 0 {
                v.push("time.store_every must be at least 1".into());
            }
        }
        if !["zero_flux", "dirichlet"].contains(&self.solver.boundary.as_str()) {
            v.push(format!(
                "solver.boundary must be zero_flux or dirichlet, got {:?}",
                self.solver.boundary
            ));
        }
        if !(self.solver.newton_tol > 0.0) || self.solver.max_newton == 0 {
            v.push("solver.newton_tol and solver.max_newton must be positive".into());
        }
        if needs == Needs::Convergence {
            let c = &self.convergence;
            if !["self", "neumann"].contains(&c.mode.as_str()) {
                v.push(format!(
                    "convergence.mode must be self or neumann, got {:?}",
                    c.mode
                ));
            }
            if c.levels < 2 {
                v.push("convergence.levels must be at least 2".into());
            }
            if c.mode == "self" && self.measure.is_none() {
                v.push("convergence.mode = \"self\" needs a [measure] block".into());
            }
            if c.mode == "neumann" {
                if !(c.liquid > 1.0 && c.solid > 1.0) {
                    v.push("convergence.liquid and convergence.solid must exceed 1".into());
                }
                if dim.unwrap_or(1) != 1 {
                    v.push("convergence.mode = \"neumann\" is one-dimensional".into());
                }
            }
        }
        v
    }

    pub fn nonlinearity(&self) -> Result<Nonlinearity, String> {
        let n = &self.nonlinearity;
        match n.kind.as_str() {
            "two_phase" => {
                if n.knots.is_some() || n.slope.is_some() {
                    return Err(
                        "nonlinearity.knots and slope only apply to kind = \"knots\"".into(),
                    );
                }
                Ok(Nonlinearity::two_phase())
            }
            "knots" => {
                let (Some(k), Some(b)) = (&n.knots, n.slope) else {
                    return Err("nonlinearity kind = \"knots\" needs knots and slope".into());
                };
                Nonlinearity::from_knots(k.iter().map(|p| (p[0], p[1])).collect(), b)
                    .map_err(|e| format!("nonlinearity: {e}"))
            }
            other => Err(format!(
                "nonlinearity.kind must be two_phase or knots, got {other:?}"
            )),
        }
    }

    pub fn dim(&self) -> usize {
        self.measure.as_ref().map_or(1, |m| m.dim)
    }

    pub fn measure(&self) -> Result<SignedMeasure, CliError> {
        let m = self
            .measure
            .as_ref()
            .ok_or_else(|| CliError::Config(vec!["missing [measure] block".into()]))?;
        let mut mu = SignedMeasure::new(m.dim)?;
        for a in &m.atom {
            let pos = if m.dim == 1 {
                [a[0], 0.0]
            } else {
                [a[0], a[1]]
            };
            mu = mu.with_atom(pos, a[m.dim])?;
        }
        if let Some(d) = &m.density {
            let (lo, hi, shape) = if m.dim == 1 {
                (
                    [d.bounds[0], 0.0],
                    [d.bounds[1], 0.0],
                    [d.shape.as_ref().map_or(d.values.len(), |s| s[0]), 1],
                )
            } else {
                let s = d
                    .shape
                    .as_ref()
                    .ok_or_else(|| CliError::Config(vec!["2D density needs shape".into()]))?;
                (
                    [d.bounds[0], d.bounds[1]],
                    [d.bounds[2], d.bounds[3]],
                    [s[0], s[1]],
                )
            };
            mu = mu.with_density(Density::new(m.dim, lo, hi, shape, d.values.clone())?);
        }
        if let Some(c) = m.gauss_c {
            mu = mu.with_gauss_c(c)?;
        }
        Ok(mu)
    }

    /// The grid at refinement `level` (spacing halved per level).
    pub fn grid(&self, level: u32) -> Result<Grid, CliError> {
        let g = self
            .grid
            .as_ref()
            .ok_or_else(|| CliError::Config(vec!["missing [grid] block".into()]))?;
        let dim = self.dim();
        let f = 1usize << level;
        let cells = g.cells * f;
        let (origin, h) = match (g.half_width, &g.origin) {
            (Some(l), _) => (
                [-l, if dim == 2 { -l } else { 0.0 }],
                2.0 * l / g.cells as f64,
            ),
            (None, Some(o)) => (
                [o[0], o.get(1).copied().unwrap_or(0.0)],
                g.spacing.unwrap_or(0.0),
            ),
            (None, None) => {
                return Err(CliError::Config(vec![
                    "grid needs half_width or origin".into()
                ]))
            }
        };
        Ok(Grid::new(
            dim,
            origin,
            h / f as f64,
            [cells, if dim == 2 { cells } else { 1 }],
        )?)
    }

    pub fn time(&self) -> Result<&TimeSpec, CliError> {
        self.time
            .as_ref()
            .ok_or_else(|| CliError::Config(vec!["missing [time] block".into()]))
    }

    pub fn boundary(&self) -> Boundary {
        if self.solver.boundary == "dirichlet" {
            Boundary::Dirichlet(0.0)
        } else {
            Boundary::ZeroFlux
        }
    }
}
