use proptest::prelude::*;
use stefan_core::duality::*;
use stefan_core::measures::SignedMeasure;
use stefan_core::{BallDomain, Field, Grid, Nonlinearity, SpaceTimeField};

fn bump(g: Grid) -> Field {
    Field::from_fn(g, 0.0, |x| {
        let r2 = x[0] * x[0] + x[1] * x[1];
        if r2 < 1.0 {
            (1.0 - r2).powi(2)
        } else {
            0.0
        }
    })
}

fn constant(g: Grid, value: f64, n: usize, dt: f64) -> SpaceTimeField {
    SpaceTimeField::from_slices(g, 0.0, dt, vec![vec![value; g.len()]; n]).unwrap()
}

fn grid_1d(n: usize, half: f64) -> Grid {
    Grid::new_1d(-half, 2.0 * half / n as f64, n).unwrap()
}

#[test]
fn quotient_examples() {
    let g = grid_1d(10, 1.0);
    let nl = Nonlinearity::two_phase();
    let c = build_c(&constant(g, 2.0, 2, 0.1), &constant(g, 0.0, 2, 0.1), &nl).unwrap();
    assert!(c.slices().iter().flatten().all(|&v| v == 0.5));
    let c = build_c(&constant(g, 0.5, 2, 0.1), &constant(g, -0.5, 2, 0.1), &nl).unwrap();
    assert!(c.slices().iter().flatten().all(|&v| v == 0.0));
}

#[test]
fn unit_coefficient_is_kept() {
    let g = grid_1d(30, 1.0);
    let d = floor_and_smooth(&constant(g, 1.0, 8, 0.05), 4.0).unwrap();
    assert!(d
        .cm
        .slices()
        .iter()
        .flatten()
        .all(|&v| (v - 1.0).abs() < 1e-15));
    assert!(d.j_total() < 1e-28);
}

#[test]
fn checkerboard_j_decreases() {
    let g = Grid::new_2d([-1.0, -1.0], 1.0 / 64.0, [128, 128]).unwrap();
    let dt = 1.0 / 64.0;
    let slices = (0..16)
        .map(|k| {
            (0..g.len())
                .map(|i| {
                    let (a, b) = g.coords(i);
                    ((a / 16 + b / 16 + k / 4) % 2) as f64
                })
                .collect()
        })
        .collect();
    let c = SpaceTimeField::from_slices(g, 0.0, dt, slices).unwrap();
    let js: Vec<f64> = [4.0, 8.0, 16.0, 32.0]
        .iter()
        .map(|&m| floor_and_smooth(&c, m).unwrap().j_total())
        .collect();
    assert!(js.windows(2).all(|w| w[1] < w[0]), "{js:?}");
}

/// Implicit-Euler heat kernel on the infinite lattice after `n` steps,
/// `(1/π) ∫_0^π cos(dξ) (1 + 4λ sin²(ξ/2))^{-n} dξ`, by the trapezoid rule.
fn lattice_kernel(d: i64, n: usize, lambda: f64) -> f64 {
    let pts = 4096;
    let step = std::f64::consts::PI / pts as f64;
    let f = |xi: f64| {
        (d as f64 * xi).cos() * (1.0 + 4.0 * lambda * (0.5 * xi).sin().powi(2)).powi(-(n as i32))
    };
    let inner: f64 = (1..pts).map(|k| f(k as f64 * step)).sum();
    (inner + 0.5 * (f(0.0) + f(std::f64::consts::PI))) * step / std::f64::consts::PI
}

#[test]
fn unit_dual_matches_lattice_kernel() {
    let g = grid_1d(320, 8.0);
    let h = g.spacing();
    let (t0, dt) = (0.2, 0.01);
    let coef = floor_and_smooth(&constant(g, 1.0, 21, dt), 2.0).unwrap();
    let ball = BallDomain::new(&g, 7.0).unwrap();
    let theta = bump(g);
    let phi = solve_dual(&coef, &theta, &ball, t0, 0.0).unwrap();
    for back in [1usize, 5, 20] {
        let slice = phi.slice(20 - back);
        let kernel: Vec<f64> = (0..g.len() as i64)
            .map(|d| lattice_kernel(d, back, dt / (h * h)))
            .collect();
        let peak = slice.iter().cloned().fold(0.0, f64::max);
        for i in 0..g.len() {
            if g.center(i)[0].abs() > 3.0 {
                continue;
            }
            let oracle: f64 = (0..g.len())
                .map(|j| kernel[(i as i64 - j as i64).unsigned_abs() as usize] * theta.values()[j])
                .sum();
            assert!(
                (slice[i] - oracle).abs() <= 1e-6 * peak,
                "step {back} cell {i}: {} vs {oracle}",
                slice[i]
            );
        }
    }
}

#[test]
fn zero_target_gives_zero_dual_and_energy() {
    let g = grid_1d(100, 5.0);
    let coef = floor_and_smooth(&constant(g, 0.3, 11, 0.02), 4.0).unwrap();
    let ball = BallDomain::new(&g, 4.0).unwrap();
    let zero = Field::zeros(g, 0.0);
    let phi = solve_dual(&coef, &zero, &ball, 0.2, 0.04).unwrap();
    assert!(phi.max_abs() == 0.0);
    let e = energy_identity(&phi, &coef, &ball).unwrap();
    assert_eq!(
        (e.initial + e.dissipation, e.terminal, e.residual),
        (0.0, 0.0, 0.0)
    );
    let q = solve_q(&phi.field(0), &ball, 1.0, 0.02, 2).unwrap();
    assert!(q.max_abs() == 0.0);
}

#[test]
fn energy_defect_is_first_order() {
    let g = grid_1d(400, 5.0);
    let ball = BallDomain::new(&g, 4.0).unwrap();
    let theta = bump(g);
    let residual = |steps: usize| {
        let dt = 0.2 / steps as f64;
        let coef = floor_and_smooth(&constant(g, 1.0, steps + 1, dt), 2.0).unwrap();
        let phi = solve_dual(&coef, &theta, &ball, 0.2, 0.0).unwrap();
        let e = energy_identity(&phi, &coef, &ball).unwrap();
        assert!(e.dissipative() && e.residual >= 0.0);
        e.residual
    };
    let r: Vec<f64> = [40, 80, 160].iter().map(|&s| residual(s)).collect();
    for w in r.windows(2) {
        assert!((w[0] / w[1] - 2.0).abs() < 0.3, "{r:?}");
    }
}

#[test]
fn shell_choice_for_zero_data() {
    let g = grid_1d(200, 8.0);
    let z = constant(g, 0.0, 5, 0.01);
    let pair = Pair::new(&z, &z, &Nonlinearity::two_phase()).unwrap();
    let scan = choose_r(&pair, 0.5, 4.0, 0.04).unwrap();
    assert_eq!(scan.total, 0.0);
    assert!(scan.rows.iter().all(|r| r.qualifies == r.admissible));
    assert!(scan.chosen >= 4.0 && scan.chosen < 4.0 + 1e-9 + scan.rows.len() as f64 * g.spacing());
    assert!(matches!(
        choose_r(&pair, 0.5, 7.9, 0.04),
        Err(stefan_core::Error::NoQualifyingShell)
    ));
}

#[test]
fn q_converges_uniformly_at_the_initial_time() {
    let g = grid_1d(300, 6.0);
    let ball = BallDomain::new(&g, 5.0).unwrap();
    let theta = bump(g);
    let q = solve_q(&theta, &ball, 1.0, 0.001, 128).unwrap();
    let sup = theta.max_abs();
    assert!(q.slices().iter().flatten().all(|v| v.abs() <= sup));
    let gaps: Vec<f64> = [64, 32, 16, 8, 4]
        .iter()
        .map(|&k| {
            q.slice(k)
                .iter()
                .zip(q.slice(0))
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
}

fn twins(n: usize) -> TwinRuns {
    let mu = SignedMeasure::new(1)
        .unwrap()
        .with_atom([0.3, 0.0], 2.0)
        .unwrap()
        .with_gauss_c(0.5)
        .unwrap();
    twin_runs(
        &mu,
        &grid_1d(n, 6.0),
        0.2 / 16.0,
        0.2,
        &Nonlinearity::two_phase(),
        1,
    )
    .unwrap()
}

#[test]
fn third_and_first_terms_vanish_for_equal_inputs() {
    let tw = twins(200);
    let nl = Nonlinearity::two_phase();
    let pair = Pair::new(&tw.coarse, &tw.coarse, &nl).unwrap();
    let g = *tw.coarse.grid();
    let ball = BallDomain::new(&g, 4.0).unwrap();
    let coef = floor_and_smooth(&build_c(&tw.coarse, &tw.coarse, &nl).unwrap(), 4.0).unwrap();
    let phi = solve_dual(&coef, &bump(g), &ball, 0.2, 0.05).unwrap();
    let iii = bound_iii(&pair, &phi, &coef, &ball).unwrap();
    assert_eq!((iii.value.computed, iii.value.bound), (0.0, 0.0));
    let q = solve_q(&phi.field(0), &ball, 1.0, pair.dt, 4).unwrap();
    let i1 = eval_i1(&pair, &q, &ball, 2, l1_uniform_bound(&pair, &ball, 16));
    assert_eq!((i1.value.signed, i1.drift, i1.trace), (0.0, 0.0, 0.0));
}

#[test]
fn third_term_bound_scales_with_root_delta() {
    let tw = twins(200);
    let nl = Nonlinearity::two_phase();
    let pair = Pair::new(&tw.coarse, &tw.fine, &nl).unwrap();
    let g = *tw.coarse.grid();
    let ball = BallDomain::new(&g, 4.0).unwrap();
    let theta = bump(g);
    let coef = floor_and_smooth(&build_c(&tw.coarse, &tw.fine, &nl).unwrap(), 4.0).unwrap();
    let bound = |d: usize| {
        let phi = solve_dual(&coef, &theta, &ball, 0.2, d as f64 * pair.dt).unwrap();
        let q = solve_q(&phi.field(0), &ball, 1.0, pair.dt, d).unwrap();
        let (v, chain) = bound_i3(&pair, &q, &theta, &ball, 1).unwrap();
        assert!(chain.holds && v.holds());
        v.bound
    };
    let (a, b) = (bound(8), bound(4));
    assert!((a / b - 2f64.sqrt()).abs() < 1e-12);
}

#[test]
fn flat_q_has_no_drift() {
    let tw = twins(200);
    let pair = Pair::new(&tw.coarse, &tw.fine, &Nonlinearity::two_phase()).unwrap();
    let g = *tw.coarse.grid();
    let ball = BallDomain::new(&g, 4.0).unwrap();
    let flat = SpaceTimeField::from_slices(g, 0.0, pair.dt, vec![vec![0.7; g.len()]; 5]).unwrap();
    let f = eval_i1(&pair, &flat, &ball, 3, 1.0);
    assert_eq!(f.drift, 0.0);
    assert_eq!(f.q_shift, 0.0);
}

#[test]
fn l1_bound_respects_sup_times_volume() {
    let tw = twins(200);
    let pair = Pair::new(&tw.coarse, &tw.fine, &Nonlinearity::two_phase()).unwrap();
    let ball = BallDomain::new(tw.coarse.grid(), 4.0).unwrap();
    let top = pair.len() - 1;
    let u = tw.coarse.max_abs().max(tw.fine.max_abs());
    let l1 = l1_uniform_bound(&pair, &ball, top);
    assert!(l1.is_finite() && l1 <= 2.0 * u * ball.volume());
    let same = Pair::new(&tw.coarse, &tw.coarse, &Nonlinearity::two_phase()).unwrap();
    assert_eq!(l1_uniform_bound(&same, &ball, top), 0.0);
}

#[test]
fn identical_inputs_certify_zero() {
    let tw = twins(200);
    let g = *tw.coarse.grid();
    let opts = CertifyOptions {
        gauss_c: 0.5,
        l_min: 3.5,
        caps: Caps::default(),
    };
    let rep = certify(
        &tw.coarse,
        &tw.coarse,
        &bump(g),
        &Nonlinearity::two_phase(),
        0.2,
        &Budgets::new(1e-6),
        &opts,
    )
    .unwrap();
    assert_eq!(rep.certified, 0.0);
    assert_eq!(rep.verdict, Verdict::Pass);
}

#[test]
fn mass_mismatch_is_refused() {
    let nl = Nonlinearity::two_phase();
    let g = grid_1d(200, 6.0);
    let run = |mass: f64| {
        let mu = SignedMeasure::new(1)
            .unwrap()
            .with_atom([0.2, 0.0], mass)
            .unwrap();
        stefan_core::forward::run(
            &mu,
            &stefan_core::forward::SolveConfig::new(g, 0.2, 0.0125),
            &nl,
        )
        .unwrap()
        .history
    };
    let opts = CertifyOptions {
        gauss_c: 0.5,
        l_min: 3.5,
        caps: Caps::default(),
    };
    let rep = certify(
        &run(2.0),
        &run(2.5),
        &bump(g),
        &nl,
        0.2,
        &Budgets::new(10.0),
        &opts,
    )
    .unwrap();
    assert!(rep.obstruction.is_some());
    assert_eq!(rep.verdict, Verdict::Fail);
}

#[test]
fn rejects_late_target_time() {
    let tw = twins(200);
    let g = *tw.coarse.grid();
    let opts = CertifyOptions {
        gauss_c: 0.7,
        l_min: 3.5,
        caps: Caps::default(),
    };
    let err = certify(
        &tw.coarse,
        &tw.fine,
        &bump(g),
        &Nonlinearity::two_phase(),
        0.2,
        &Budgets::new(1.0),
        &opts,
    );
    assert!(matches!(err, Err(stefan_core::Error::Inadmissible(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn quotient_stays_in_unit_interval(pairs in proptest::collection::vec((-4.0f64..4.0, -4.0f64..4.0), 20)) {
        let g = grid_1d(20, 1.0);
        let u = SpaceTimeField::from_slices(g, 0.0, 0.1, vec![pairs.iter().map(|p| p.0).collect()]).unwrap();
        let v = SpaceTimeField::from_slices(g, 0.0, 0.1, vec![pairs.iter().map(|p| p.1).collect()]).unwrap();
        let c = build_c(&u, &v, &Nonlinearity::two_phase()).unwrap();
        prop_assert!(c.slice(0).iter().all(|&x| (0.0..=1.0).contains(&x)));
    }

    #[test]
    fn smoothing_is_monotone(base in proptest::collection::vec(0.0f64..1.0, 40 * 6), bump_by in proptest::collection::vec(0.0f64..0.5, 40 * 6), m in 1.0f64..12.0) {
        let g = grid_1d(40, 1.0);
        let lo: Vec<Vec<f64>> = base.chunks(40).map(|c| c.to_vec()).collect();
        let hi: Vec<Vec<f64>> = base.chunks(40).zip(bump_by.chunks(40)).map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect()).collect();
        let a = floor_and_smooth(&SpaceTimeField::from_slices(g, 0.0, 0.05, lo).unwrap(), m).unwrap();
        let b = floor_and_smooth(&SpaceTimeField::from_slices(g, 0.0, 0.05, hi).unwrap(), m).unwrap();
        for (x, y) in a.cm.slices().iter().flatten().zip(b.cm.slices().iter().flatten()) {
            prop_assert!(x <= y);
        }
    }

    #[test]
    fn dual_obeys_maximum_principle(vals in proptest::collection::vec(0.05f64..1.0, 60 * 9), m in 1.0f64..16.0) {
        let g = grid_1d(60, 3.0);
        let c = SpaceTimeField::from_slices(g, 0.0, 0.02, vals.chunks(60).map(|c| c.to_vec()).collect()).unwrap();
        let coef = floor_and_smooth(&c, m).unwrap();
        let ball = BallDomain::new(&g, 2.5).unwrap();
        let theta = bump(g);
        let phi = solve_dual(&coef, &theta, &ball, 0.16, 0.0).unwrap();
        let sup = theta.max_abs();
        prop_assert!(phi.slices().iter().flatten().all(|v| v.abs() <= sup));
        let e = energy_identity(&phi, &coef, &ball).unwrap();
        prop_assert!(e.dissipation <= e.terminal);
    }
}
