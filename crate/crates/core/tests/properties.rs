use nalgebra::DVector;
use pdae_eps::error_metrics::{ErrorRow, ErrorTable, Measure};
use pdae_eps::pdae_core::{
    check_energy_estimate, solve_eps_system, ForcingSpec, OperatorConstants, State, TimeGrid,
};
use pdae_eps::pipe_model::{build_pipe_system, initial_data, InitialDataPreset};
use pdae_eps::sweep_rates::{epsilon_grid, estimate_rates};
use proptest::prelude::*;

fn arb_preset() -> impl Strategy<Value = InitialDataPreset> {
    prop::sample::select(InitialDataPreset::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn d_is_elliptic(n in 1usize..24, seed in prop::collection::vec(-1.0f64..1.0, 25)) {
        let sys = build_pipe_system(n).unwrap();
        let c = OperatorConstants::estimate(&sys).unwrap();
        let v = DVector::from_iterator(n + 1, seed.iter().copied().cycle().take(n + 1));
        let lhs = sys.d_mat().quad_form(&v);
        prop_assert!(lhs >= c.c_d * sys.g_m().quad_form(&v) * (1.0 - 1e-12));
    }

    #[test]
    fn h1_norm_dominates_l2(n in 1usize..64, seed in prop::collection::vec(-1.0f64..1.0, 66)) {
        let sys = build_pipe_system(n).unwrap();
        let x = DVector::from_iterator(n + 2, seed.iter().copied().cycle().take(n + 2));
        prop_assert!(sys.g_p().quad_form(&x) >= sys.g_h().quad_form(&x) * (1.0 - 1e-12));
    }

    #[test]
    fn power_laws_are_recovered(a in 0.1f64..3.0, c in 1e-3f64..1e3, j_max in 3usize..31) {
        let rows = epsilon_grid(j_max)
            .into_iter()
            .map(|eps| ErrorRow { n: 1, eps, measure: Measure::PLinfL2, value: c * eps.powf(a) })
            .collect();
        let rates = estimate_rates(&ErrorTable::from_rows(rows).unwrap()).unwrap();
        prop_assert!((rates.rows[0].alpha - a).abs() <= 1e-12);
        prop_assert_eq!(rates.rows[0].slopes.len(), j_max - 1);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn energy_estimate_and_constraint(n in 1usize..=8, eps in 0.01f64..1.0, preset in arb_preset(), scale in 0.1f64..10.0) {
        let sys = build_pipe_system(n).unwrap();
        let consts = OperatorConstants::estimate(&sys).unwrap();
        let (p, m) = initial_data(preset, n).unwrap();
        let init = State::initial(p * scale, m * scale, 2);
        let grid = TimeGrid::uniform(1.0, 400).unwrap();
        let traj = solve_eps_system(&sys, &init, eps, &grid, &ForcingSpec::Zero).unwrap();
        let report = check_energy_estimate(&sys, &traj, &consts, eps, &init, 1.0);
        prop_assert!(report.satisfied);
        let mut prev = f64::INFINITY;
        for s in traj.states() {
            prop_assert!(sys.b_mat().mul_vec(&s.p).amax() <= 1e-9);
            let e = sys.g_h().quad_form(&s.p) + eps * sys.g_m().quad_form(&s.m);
            prop_assert!(e <= prev * (1.0 + 1e-8));
            prev = e;
        }
    }
}
