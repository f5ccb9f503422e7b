//! Browser bindings: a 1D melting run, the barrier flux table and a
//! twin-run certificate.

use serde::Serialize;
use stefan_core::barriers::{check_flux_bound, solve_w, BarrierParams};
use stefan_core::duality::{certify, twin_runs, Budgets, Caps, CertifyOptions};
use stefan_core::forward::{run, SolveConfig};
use stefan_core::measures::SignedMeasure;
use stefan_core::{Field, Grid, Nonlinearity};
use wasm_bindgen::prelude::*;

fn js(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

#[derive(Debug, Serialize)]
pub struct Profile {
    pub x: Vec<f64>,
    pub enthalpy: Vec<f64>,
    pub temperature: Vec<f64>,
    pub mass_drift: f64,
}

/// Solves on `[-half_width, half_width]` from atoms `(positions[k], weights[k])`
/// and returns the state at `horizon`.
pub fn forward_profile(
    positions: &[f64],
    weights: &[f64],
    half_width: f64,
    cells: usize,
    horizon: f64,
    dt: f64,
) -> stefan_core::Result<Profile> {
    if positions.len() != weights.len() {
        return Err(stefan_core::Error::Measure("one weight per atom".into()));
    }
    let grid = Grid::new_1d(-half_width, 2.0 * half_width / cells as f64, cells)?;
    let mut mu = SignedMeasure::new(1)?;
    for (&p, &w) in positions.iter().zip(weights) {
        mu = mu.with_atom([p, 0.0], w)?;
    }
    let nl = Nonlinearity::two_phase();
    let r = run(&mu, &SolveConfig::new(grid, horizon, dt), &nl)?;
    let last = r.history.slice(r.history.len() - 1).to_vec();
    Ok(Profile {
        x: (0..cells).map(|i| grid.center(i)[0]).collect(),
        temperature: nl.apply(&last),
        enthalpy: last,
        mass_drift: r.mass_drift(),
    })
}

#[derive(Debug, Serialize)]
pub struct BarrierTable {
    pub t: Vec<f64>,
    pub numeric_flux: Vec<f64>,
    pub envelope: Vec<f64>,
    pub passed: bool,
}

pub fn barrier_table(radius: f64, horizon: f64) -> stefan_core::Result<BarrierTable> {
    let p = BarrierParams {
        radius,
        horizon,
        intervals: ((radius - 1.0) / 0.02).ceil().max(3.0) as usize,
        dt: horizon / 500.0,
    };
    let rep = check_flux_bound(&solve_w(&p)?, &p)?;
    Ok(BarrierTable {
        t: rep.rows.iter().map(|r| r.t).collect(),
        numeric_flux: rep.rows.iter().map(|r| r.numeric_flux).collect(),
        envelope: rep.rows.iter().map(|r| r.envelope + r.slack).collect(),
        passed: rep.passed(),
    })
}

#[derive(Debug, Serialize)]
pub struct Certificate {
    pub target: f64,
    pub certified: f64,
    pub verdict: String,
    pub obstruction: Option<String>,
    pub terms: Vec<(String, f64, f64)>,
}

/// Twin runs of one atom pair at `cells` and `2 cells`, certified at
/// `t0 = 0.2` with `Θ = (1 - x²)²`. A non-zero `mass_shift` perturbs the
/// second run's datum.
pub fn twin_certificate(
    cells: usize,
    eps: f64,
    mass_shift: f64,
) -> stefan_core::Result<Certificate> {
    let (t0, c) = (0.2, 0.5);
    let grid = Grid::new_1d(-6.0, 12.0 / cells as f64, cells)?;
    let dt = t0 / 16.0 * (400.0 / cells.max(400) as f64).powi(2);
    let nl = Nonlinearity::two_phase();
    let mu = |shift: f64| -> stefan_core::Result<SignedMeasure> {
        SignedMeasure::new(1)?
            .with_atom([0.3, 0.0], 2.0 + shift)?
            .with_atom([-3.5, 0.0], 3.0)?
            .with_gauss_c(c)
    };
    let a = twin_runs(&mu(0.0)?, &grid, dt, t0, &nl, 1)?;
    let v = if mass_shift == 0.0 {
        a.fine
    } else {
        twin_runs(&mu(mass_shift)?, &grid, dt, t0, &nl, 1)?.fine
    };
    let theta = Field::from_fn(grid, 0.0, |x| (1.0 - x[0] * x[0]).max(0.0).powi(2));
    let opts = CertifyOptions {
        gauss_c: c,
        l_min: 3.5,
        caps: Caps::default(),
    };
    let rep = certify(&a.coarse, &v, &theta, &nl, t0, &Budgets::new(eps), &opts)?;
    Ok(Certificate {
        target: rep.target,
        certified: rep.certified,
        verdict: format!("{:?}", rep.verdict).to_uppercase(),
        obstruction: rep.obstruction,
        terms: rep
            .terms
            .into_iter()
            .map(|t| (t.name, t.computed, t.bound))
            .collect(),
    })
}

fn to_json<T: Serialize>(v: &T) -> Result<String, JsError> {
    serde_json::to_string(v).map_err(js)
}

#[wasm_bindgen(js_name = forwardProfile)]
pub fn forward_profile_js(
    positions: &[f64],
    weights: &[f64],
    half_width: f64,
    cells: usize,
    horizon: f64,
    dt: f64,
) -> Result<String, JsError> {
    to_json(&forward_profile(positions, weights, half_width, cells, horizon, dt).map_err(js)?)
}

#[wasm_bindgen(js_name = barrierTable)]
pub fn barrier_table_js(radius: f64, horizon: f64) -> Result<String, JsError> {
    to_json(&barrier_table(radius, horizon).map_err(js)?)
}

#[wasm_bindgen(js_name = twinCertificate)]
pub fn twin_certificate_js(cells: usize, eps: f64, mass_shift: f64) -> Result<String, JsError> {
    to_json(&twin_certificate(cells, eps, mass_shift).map_err(js)?)
}
