use nalgebra::DVector;
use pdae_eps::epsilon_expansion::{exact_mode_trajectories, mode_propagator, solve_limit_system};
use pdae_eps::error_metrics::{bochner_l2, bochner_linf, error_report, Measure, References};
use pdae_eps::linalg::SparseMatrix;
use pdae_eps::pdae_core::{
    solve_eps_system, DiscretePdae, ForcingSpec, State, TimeGrid, Trajectory,
};
use pdae_eps::pipe_model::{build_pipe_system, initial_data, InitialDataPreset};
use pdae_eps::Error;
use proptest::prelude::*;

#[test]
fn l2_of_decaying_exponential() {
    let sys = build_pipe_system(3).unwrap();
    let grid = TimeGrid::uniform(1.0, 20000).unwrap();
    let v = DVector::from_vec(vec![0.0, 0.0, 1.0, -0.5, 0.25]);
    let values: Vec<DVector<f64>> = grid.nodes().iter().map(|t| &v * (-t).exp()).collect();
    let exact = ((1.0 - (-2.0f64).exp()) / 2.0 * sys.g_h().quad_form(&v)).sqrt();
    assert!((bochner_l2(&values, sys.g_h(), &grid) - exact).abs() < 1e-9);
    let zeros = vec![DVector::zeros(5); grid.len()];
    assert_eq!(bochner_l2(&zeros, sys.g_h(), &grid), 0.0);
}

#[test]
fn linf_of_single_spike() {
    let g = SparseMatrix::from_diagonal(&[0.5, 2.0]);
    let mut values = vec![DVector::zeros(2); 9];
    values[4] = DVector::from_vec(vec![0.0, 1.5]);
    assert!((bochner_linf(&values, &g) - 4.5f64.sqrt()).abs() < 1e-15);
    values[4] = DVector::from_vec(vec![18.0f64.sqrt(), 0.0]);
    assert!((bochner_linf(&values, &g) - 3.0).abs() < 1e-14);
}

#[test]
fn linf_of_mode_difference_matches_dense_sampling() {
    let sys = build_pipe_system(1).unwrap();
    let (p, m) = initial_data(InitialDataPreset::Data42, 1).unwrap();
    let eps = 0.05;
    let a = std::f64::consts::PI;
    let grid = TimeGrid::uniform(1.0, 10000).unwrap();
    let traj = exact_mode_trajectories(&sys, eps, &p, &m, &grid).unwrap();
    let traj0 = exact_mode_trajectories(&sys, 0.0, &p, &m, &grid).unwrap();
    let d = traj.difference(&traj0).unwrap();
    let on_grid = bochner_linf(d.states().iter().map(|s| &s.p), sys.g_h());

    let samples = 1_000_000;
    let dense = (0..=samples)
        .map(|i| {
            let t = i as f64 / samples as f64;
            let diff = mode_propagator(a, eps, t)[0][0] - (-a * a * t).exp();
            diff.abs() / 2f64.sqrt()
        })
        .fold(0.0, f64::max);
    assert!((on_grid - dense).abs() < 1e-6, "{on_grid} vs {dense}");
}

fn pipe_run(
    n: usize,
    eps: f64,
    preset: InitialDataPreset,
    steps: usize,
) -> (DiscretePdae, Trajectory, Trajectory) {
    let sys = build_pipe_system(n).unwrap();
    let (p, m) = initial_data(preset, n).unwrap();
    let grid = TimeGrid::uniform(1.0, steps).unwrap();
    let traj = solve_eps_system(
        &sys,
        &State::initial(p.clone(), m, 2),
        eps,
        &grid,
        &ForcingSpec::Zero,
    )
    .unwrap();
    let traj0 = solve_limit_system(&sys, &p, &grid, &ForcingSpec::Zero).unwrap();
    (sys, traj, traj0)
}

#[test]
fn identical_trajectories_give_zero() {
    let (sys, traj, _) = pipe_run(2, 0.1, InitialDataPreset::Data45, 50);
    let refs = References {
        limit: Some(&traj),
        hat: Some(&traj),
    };
    let report = error_report(&sys, &traj, refs, 0.1, &Measure::ALL).unwrap();
    assert_eq!(report.values.len(), 8);
    assert!(report.values.values().all(|&v| v == 0.0));
}

#[test]
fn sqrt_eps_weighting() {
    let (sys, traj, traj0) = pipe_run(2, 0.25, InitialDataPreset::Data43, 200);
    let refs = References {
        limit: Some(&traj0),
        hat: None,
    };
    let report = error_report(&sys, &traj, refs, 0.25, &[Measure::MSqrtEpsLinfL2]).unwrap();
    let d = traj.difference(&traj0).unwrap();
    let plain = bochner_linf(d.states().iter().map(|s| &s.m), sys.g_m());
    assert_eq!(report.values[&Measure::MSqrtEpsLinfL2], 0.5 * plain);
}

#[test]
fn lambda_paths_agree() {
    let (sys, traj, traj0) = pipe_run(2, 0.125, InitialDataPreset::Data42, 2000);
    let refs = References {
        limit: Some(&traj0),
        hat: None,
    };
    let report = error_report(&sys, &traj, refs, 0.125, &[Measure::LambdaL2]).unwrap();
    let canonical = report.values[&Measure::LambdaL2];
    assert!(canonical > 0.0);
    assert!(
        report.lambda_gap.unwrap() <= 1e-8,
        "{:?}",
        report.lambda_gap
    );
    assert!((report.lambda_direct.unwrap() - canonical).abs() <= 1e-8);
}

#[test]
fn missing_reference_is_an_error() {
    let (sys, traj, traj0) = pipe_run(1, 0.1, InitialDataPreset::Data45, 10);
    let refs = References {
        limit: Some(&traj0),
        hat: None,
    };
    assert!(matches!(
        error_report(&sys, &traj, refs, 0.1, &[Measure::MhatL2L2]),
        Err(Error::MissingReference { .. })
    ));
    let none = References::default();
    assert!(error_report(&sys, &traj, none, 0.1, &[Measure::PLinfL2]).is_err());
    assert!(error_report(&sys, &traj, none, 0.1, &[])
        .unwrap()
        .values
        .is_empty());
}

fn random_traj(seed: &[f64], scale: f64) -> Trajectory {
    let grid = TimeGrid::uniform(1.0, 4).unwrap();
    let states = grid
        .nodes()
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let c = |j: usize| scale * seed[(7 * i + j) % seed.len()];
            State::new(
                t,
                DVector::from_vec(vec![c(0), c(1), c(2)]),
                DVector::from_vec(vec![c(3), c(4)]),
                DVector::from_vec(vec![c(5), c(6)]),
            )
        })
        .collect();
    Trajectory::new(grid, states).unwrap()
}

fn all_values(sys: &DiscretePdae, a: &Trajectory, b: &Trajectory, eps: f64) -> Vec<f64> {
    let refs = References {
        limit: Some(b),
        hat: Some(b),
    };
    error_report(sys, a, refs, eps, &Measure::ALL)
        .unwrap()
        .values
        .into_values()
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn triangle_inequality(
        a in prop::collection::vec(-3.0f64..3.0, 35),
        b in prop::collection::vec(-3.0f64..3.0, 35),
        c in prop::collection::vec(-3.0f64..3.0, 35),
        eps in 1e-4f64..1.0,
    ) {
        let sys = build_pipe_system(1).unwrap();
        let (ta, tb, tc) = (random_traj(&a, 1.0), random_traj(&b, 1.0), random_traj(&c, 1.0));
        let ac = all_values(&sys, &ta, &tc, eps);
        let ab = all_values(&sys, &ta, &tb, eps);
        let bc = all_values(&sys, &tb, &tc, eps);
        for i in 0..ac.len() {
            prop_assert!(ac[i] <= ab[i] + bc[i] + 1e-12);
        }
    }

    #[test]
    fn homogeneity(
        a in prop::collection::vec(-3.0f64..3.0, 35),
        k in -6i32..6,
        s in -4.0f64..4.0,
        eps in 1e-4f64..1.0,
    ) {
        let sys = build_pipe_system(1).unwrap();
        let zero = random_traj(&a, 0.0);
        let base = all_values(&sys, &random_traj(&a, 1.0), &zero, eps);
        let pow2 = 2f64.powi(k);
        for sign in [1.0, -1.0] {
            let scaled = all_values(&sys, &random_traj(&a, sign * pow2), &zero, eps);
            for (x, y) in base.iter().zip(&scaled) {
                prop_assert_eq!(*y, pow2 * x);
            }
        }
        let scaled = all_values(&sys, &random_traj(&a, s), &zero, eps);
        for (x, y) in base.iter().zip(&scaled) {
            prop_assert!((y - s.abs() * x).abs() <= 1e-14 * (1.0 + s.abs() * x));
        }
    }
}
