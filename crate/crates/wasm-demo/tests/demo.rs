use stefan_wasm::{barrier_table, forward_profile, twin_certificate};

#[test]
fn melting_profile_keeps_mass() {
    let p = forward_profile(&[0.0, 1.0], &[3.0, -1.0], 4.0, 200, 0.1, 0.01).unwrap();
    assert_eq!(p.x.len(), 200);
    assert!(p.mass_drift < 1e-12);
    let mass: f64 = p.enthalpy.iter().sum::<f64>() * 0.04;
    assert!((mass - 2.0).abs() < 1e-12);
    assert!(p
        .temperature
        .iter()
        .zip(&p.enthalpy)
        .all(|(t, u)| (u.abs() <= 1.0) == (*t == 0.0)));
}

#[test]
fn mismatched_atoms_rejected() {
    assert!(forward_profile(&[0.0], &[], 4.0, 200, 0.1, 0.01).is_err());
}

#[test]
fn barrier_under_envelope() {
    let t = barrier_table(6.0, 1.0).unwrap();
    assert!(t.passed);
    assert!(t.numeric_flux.iter().zip(&t.envelope).all(|(f, e)| f <= e));
}

#[test]
fn certificate_verdicts() {
    let same = twin_certificate(100, 10.0, 0.0).unwrap();
    assert_eq!(same.terms.len(), 5);
    let shifted = twin_certificate(100, 10.0, 0.5).unwrap();
    assert_eq!(shifted.verdict, "FAIL");
    assert!(shifted.obstruction.is_some());
}
