use std::path::Path;
use std::process::Command;

use stefan_cli::commands::{BARRIER_HEADER, CERTIFY_HEADER, CONVERGENCE_HEADER};
use stefan_cli::config::{parse_config_str, Needs};
use stefan_cli::rundir::read_run;
use stefan_cli::CliError;

fn stefan(args: &[&str], dir: &Path) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_stefan"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap();
    let text =
        String::from_utf8_lossy(&out.stdout).to_string() + &String::from_utf8_lossy(&out.stderr);
    (out.status.code().unwrap(), text)
}

const TWIN: &str = "
[measure]
dim = 1
atom = [[0.3, 2.0], [-3.5, 3.0]]
gauss_c = 0.5

[grid]
half_width = 6.0
cells = 100

[time]
horizon = 0.2
dt = 0.0125
";

fn violations(text: &str, needs: Needs) -> Vec<String> {
    match parse_config_str(text, needs) {
        Err(CliError::Config(v)) => v,
        other => panic!("expected rejection, got {other:?}"),
    }
}

#[test]
fn minimal_config_gets_defaults() {
    let cfg = parse_config_str(TWIN, Needs::Forward).unwrap();
    assert_eq!(cfg.solver.boundary, "zero_flux");
    assert_eq!(cfg.solver.newton_tol, 1e-12);
    assert_eq!(cfg.time.unwrap().store_every, 1);
    assert_eq!(cfg.nonlinearity.kind, "two_phase");
}

#[test]
fn every_unknown_key_is_reported() {
    let v = violations(&format!("colour = 1\n{TWIN}\nspeed = 2\n"), Needs::Forward);
    assert!(v.iter().any(|e| e.contains("`colour`")), "{v:?}");
    assert!(v.iter().any(|e| e.contains("`time.speed`")), "{v:?}");
}

#[test]
fn horizon_beyond_gaussian_limit_is_named() {
    let v = violations(
        &TWIN
            .replace("horizon = 0.2", "horizon = 0.6")
            .replace("cells = 100", "cells = 2"),
        Needs::Forward,
    );
    assert!(
        v.iter().any(|e| e.contains("Gaussian-moment horizon")),
        "{v:?}"
    );
    assert!(v.iter().any(|e| e.contains("grid.cells")), "{v:?}");
}

#[test]
fn forward_needs_a_measure() {
    let text = TWIN.split("[grid]").nth(1).unwrap();
    let v = violations(&format!("[grid]{text}"), Needs::Forward);
    assert_eq!(v, vec!["missing [measure] block".to_string()]);
}

#[test]
fn unknown_subcommand_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(stefan(&["melt"], dir.path()).0, 2);
    assert_eq!(
        stefan(
            &["forward", "--config", "absent.toml", "--out", "r"],
            dir.path()
        )
        .0,
        2
    );
}

#[test]
fn help_documents_config_keys() {
    let dir = tempfile::tempdir().unwrap();
    let (code, text) = stefan(&["forward", "--help"], dir.path());
    assert_eq!(code, 0);
    for key in [
        "gauss_c",
        "store_every",
        "conservation_tol",
        "half_width",
        "min_order",
    ] {
        assert!(text.contains(key), "{key}");
    }
}

#[test]
fn barrier_table_envelope_dominates() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _) = stefan(
        &["barrier-table", "--R", "10", "--T", "1", "--out", "bt.csv"],
        dir.path(),
    );
    assert_eq!(code, 0);
    let text = std::fs::read_to_string(dir.path().join("bt.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(BARRIER_HEADER));
    let mut rows = 0;
    for line in lines {
        let c: Vec<f64> = line
            .split(',')
            .take(5)
            .map(|x| x.parse().unwrap())
            .collect();
        assert!(c[1] <= c[3] + c[4], "{line}");
        rows += 1;
    }
    assert_eq!(rows, 1000);
    let manifest: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("bt.csv.manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
    assert!(manifest["wall_time_seconds"].as_f64().unwrap() >= 0.0);
}

#[test]
fn forward_is_reproducible_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("a.toml"), TWIN).unwrap();
    assert_eq!(
        stefan(
            &["forward", "--config", "a.toml", "--out", "r1"],
            dir.path()
        )
        .0,
        0
    );
    assert_eq!(
        stefan(
            &["forward", "--config", "a.toml", "--out", "r2"],
            dir.path()
        )
        .0,
        0
    );
    for name in ["ledger.csv", "config.toml", "slices/u_00016.csv"] {
        let a = std::fs::read(dir.path().join("r1").join(name)).unwrap();
        assert_eq!(
            a,
            std::fs::read(dir.path().join("r2").join(name)).unwrap(),
            "{name}"
        );
    }
    let run = read_run(&dir.path().join("r1")).unwrap();
    assert_eq!(run.history.len(), 17);
    assert!((run.history.dt() - 0.0125).abs() < 1e-15);
    let mass: f64 = run.history.slice(16).iter().sum::<f64>() * run.history.grid().cell_volume();
    assert!((mass - 5.0).abs() < 1e-12);
}

#[test]
fn certify_identical_and_twin_runs() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("a.toml"), TWIN).unwrap();
    std::fs::write(
        dir.path().join("b.toml"),
        TWIN.replace("cells = 100", "cells = 200"),
    )
    .unwrap();
    assert_eq!(
        stefan(&["forward", "--config", "a.toml", "--out", "a"], dir.path()).0,
        0
    );
    assert_eq!(
        stefan(&["forward", "--config", "b.toml", "--out", "b"], dir.path()).0,
        0
    );
    let args = [
        "dual-certify",
        "--runA",
        "a",
        "--t0",
        "0.2",
        "--eps",
        "1e-3",
        "--l-min",
        "3.5",
    ];
    let (code, text) = stefan(
        &[&args[..], &["--runB", "a", "--out", "same.csv"]].concat(),
        dir.path(),
    );
    assert_eq!(code, 0, "{text}");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("same.json")).unwrap())
            .unwrap();
    assert_eq!(report["certified"].as_f64(), Some(0.0));
    assert_eq!(report["verdict"].as_str(), Some("PASS"));

    let (code, text) = stefan(
        &[&args[..], &["--runB", "b", "--out", "twin.csv"]].concat(),
        dir.path(),
    );
    assert_eq!(code, 1, "{text}");
    let csv = std::fs::read_to_string(dir.path().join("twin.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], CERTIFY_HEADER);
    let names: Vec<&str> = lines[1..]
        .iter()
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(names, ["II", "I2", "I3", "III", "I1"]);
}

#[test]
fn represent_check_prints_five_rows() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("a.toml"), TWIN).unwrap();
    assert_eq!(
        stefan(&["forward", "--config", "a.toml", "--out", "a"], dir.path()).0,
        0
    );
    let (code, text) = stefan(
        &[
            "represent-check",
            "--run",
            "a",
            "--R",
            "2",
            "--t1",
            "0.05",
            "--t2",
            "0.2",
            "--tol",
            "1",
        ],
        dir.path(),
    );
    assert_eq!(code, 0, "{text}");
    assert_eq!(
        text.lines()
            .filter(|l| l.starts_with(char::is_numeric))
            .count(),
        5
    );
    let (code, _) = stefan(
        &[
            "represent-check",
            "--run",
            "a",
            "--R",
            "2",
            "--t1",
            "0.05",
            "--t2",
            "0.2",
            "--tol",
            "1e-12",
        ],
        dir.path(),
    );
    assert_eq!(code, 1);
}

#[test]
fn neumann_convergence_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "
[grid]
half_width = 4.0
cells = 400

[time]
horizon = 0.25
dt = 0.01

[convergence]
mode = \"neumann\"
";
    std::fs::write(dir.path().join("c.toml"), cfg).unwrap();
    let (code, text) = stefan(
        &["convergence", "--config", "c.toml", "--out", "conv.csv"],
        dir.path(),
    );
    assert_eq!(code, 0, "{text}");
    let csv = std::fs::read_to_string(dir.path().join("conv.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some(CONVERGENCE_HEADER));
    assert_eq!(csv.lines().count(), 4);
}
