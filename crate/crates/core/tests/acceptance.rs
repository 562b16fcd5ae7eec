//! Acceptance criteria, one PASS/FAIL line each. Exits nonzero if any fails.

use std::time::Instant;

use pdae_eps::epsilon_expansion::{exact_mode_trajectories, solve_limit_system};
use pdae_eps::error_metrics::{
    bochner_linf, error_report, ErrorRow, ErrorTable, Measure, References,
};
use pdae_eps::pdae_core::{
    check_energy_estimate, consistency_defect, recover_multiplier, solve_eps_system, DiscretePdae,
    ForcingSpec, OperatorConstants, State, TimeGrid, Trajectory,
};
use pdae_eps::pipe_model::{build_pipe_system, initial_data, InitialDataPreset};
use pdae_eps::sweep_rates::{
    epsilon_grid, estimate_rates, figure_preset, run_sweep, RateTable, DEFAULT_N_LIST,
};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn merge(parts: Vec<Outcome>) -> Outcome {
    let pass = parts.iter().all(|o| o.pass);
    let detail = parts
        .into_iter()
        .map(|o| format!("{}{}", if o.pass { "" } else { "[x] " }, o.detail))
        .collect::<Vec<_>>()
        .join("; ");
    check(pass, detail)
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

fn figure_rates(id: u32) -> RateTable {
    let config = figure_preset(id).expect("valid figure id");
    estimate_rates(&run_sweep(&config).expect("sweep")).expect("rates")
}

fn alpha(rates: &RateTable, n: usize, m: Measure) -> f64 {
    rates.alpha(n, m).unwrap_or(f64::NAN)
}

fn all_n(rates: &RateTable, m: Measure, ok: impl Fn(f64) -> bool, label: &str) -> Outcome {
    let values: Vec<f64> = DEFAULT_N_LIST.iter().map(|&n| alpha(rates, n, m)).collect();
    let bad: Vec<String> = DEFAULT_N_LIST
        .iter()
        .zip(&values)
        .filter(|(_, &a)| !ok(a))
        .map(|(n, a)| format!("n={n}: {a:.4}"))
        .collect();
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &a| {
            (l.min(a), h.max(a))
        });
    if bad.is_empty() {
        check(true, format!("{label} in [{lo:.4}, {hi:.4}] for all n"))
    } else {
        check(false, format!("{label} out of range at {}", bad.join(", ")))
    }
}

fn linf(sys: &DiscretePdae, a: &Trajectory, b: &Trajectory) -> (f64, f64) {
    let d = a.difference(b).expect("shared grid");
    (
        bochner_linf(d.states().iter().map(|s| &s.p), sys.g_h()),
        bochner_linf(d.states().iter().map(|s| &s.m), sys.g_m()),
    )
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let n = 4;
    let eps = 0.1;
    let sys = build_pipe_system(n).unwrap();
    let (p, m) = initial_data(InitialDataPreset::Data42, n).unwrap();
    let init = State::initial(p.clone(), m.clone(), 2);
    let run = |steps: usize| {
        let grid = TimeGrid::uniform(1.0, steps).unwrap();
        let num = solve_eps_system(&sys, &init, eps, &grid, &ForcingSpec::Zero).unwrap();
        let exact = exact_mode_trajectories(&sys, eps, &p, &m, &grid).unwrap();
        linf(&sys, &num, &exact)
    };
    let (ep, em) = run(100_000);
    let errs: Vec<f64> = [250, 500, 1000, 2000].iter().map(|&s| run(s).0).collect();
    let orders: Vec<f64> = errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let elapsed = start.elapsed().as_secs_f64();
    merge(vec![
        check(
            ep <= 1e-4 && em <= 1e-4,
            format!("p err {ep:.2e}, m err {em:.2e}"),
        ),
        check(
            orders.iter().all(|o| (1.9..=2.1).contains(o)),
            format!(
                "orders {:?}",
                orders.iter().map(|o| format!("{o:.3}")).collect::<Vec<_>>()
            ),
        ),
        check(elapsed < 30.0, format!("runtime {elapsed:.1} s")),
    ])
}

fn criterion_2(fig3: &RateTable) -> Outcome {
    all_n(
        fig3,
        Measure::MSqrtEpsLinfL2,
        |a| within(a, 0.5, 1e-3),
        "alpha(m_sqrteps_linf_l2)",
    )
}

fn criterion_3(fig4: &RateTable) -> Outcome {
    all_n(
        fig4,
        Measure::PLinfL2,
        |a| within(a, 1.0, 0.05),
        "alpha(p_linf_l2)",
    )
}

fn criterion_4(fig2: &RateTable) -> Outcome {
    let a1 = alpha(fig2, 1, Measure::PLinfL2);
    let a256 = alpha(fig2, 256, Measure::PLinfL2);
    merge(vec![
        check(within(a1, 0.96, 0.05), format!("p_linf_l2 n=1 {a1:.4}")),
        check(
            within(a256, 0.525, 0.05),
            format!("p_linf_l2 n=256 {a256:.4}"),
        ),
        all_n(
            fig2,
            Measure::ML2L2,
            |a| within(a, 0.5, 0.05),
            "alpha(m_l2_l2)",
        ),
    ])
}

fn criterion_5(fig5: &RateTable) -> Outcome {
    let a1 = alpha(fig5, 1, Measure::PhatLinfL2);
    let a256 = alpha(fig5, 256, Measure::PhatLinfL2);
    merge(vec![
        check(within(a1, 1.95, 0.07), format!("phat_linf_l2 n=1 {a1:.4}")),
        check(
            within(a256, 1.523, 0.05),
            format!("phat_linf_l2 n=256 {a256:.4}"),
        ),
        all_n(
            fig5,
            Measure::MhatL2L2,
            |a| (1.40..=1.55).contains(&a),
            "alpha(mhat_l2_l2)",
        ),
    ])
}

fn criterion_6(fig2: &RateTable, fig4: &RateTable) -> Outcome {
    let l4 = alpha(fig4, 256, Measure::LambdaL2);
    let l2: Vec<f64> = DEFAULT_N_LIST
        .iter()
        .map(|&n| alpha(fig2, n, Measure::LambdaL2))
        .collect();
    let decreasing = l2.windows(2).all(|w| w[1] <= w[0]);
    let last = *l2.last().unwrap();
    merge(vec![
        check(
            (0.70..=0.85).contains(&l4),
            format!("data44 lambda n=256 {l4:.4}"),
        ),
        check(
            decreasing,
            format!(
                "data42 lambda nonincreasing in n ({:.4} -> {last:.4})",
                l2[0]
            ),
        ),
        check(last <= 0.30, format!("data42 lambda n=256 {last:.4}")),
    ])
}

fn criterion_7() -> Outcome {
    let mut constraint = 0.0f64;
    let mut monotone = true;
    let mut recovery = 0.0f64;
    let mut gap = 0.0f64;
    for n in [1, 2, 4, 8] {
        let sys = build_pipe_system(n).unwrap();
        for preset in InitialDataPreset::ALL {
            let (p, m) = initial_data(preset, n).unwrap();
            for eps in [0.5, 0.05, 0.005] {
                let grid = TimeGrid::uniform(1.0, 1000).unwrap();
                let traj = solve_eps_system(
                    &sys,
                    &State::initial(p.clone(), m.clone(), 2),
                    eps,
                    &grid,
                    &ForcingSpec::Zero,
                )
                .unwrap();
                let traj0 = solve_limit_system(&sys, &p, &grid, &ForcingSpec::Zero).unwrap();
                let mut prev = f64::INFINITY;
                for s in traj.states() {
                    constraint = constraint.max(sys.b_mat().mul_vec(&s.p).amax());
                    let e = sys.g_h().quad_form(&s.p) + eps * sys.g_m().quad_form(&s.m);
                    monotone &= e <= prev * (1.0 + 1e-8);
                    prev = e;
                    let r = sys.k_t().mul_vec(&s.m) - sys.a_mat().mul_vec(&s.p);
                    let l = recover_multiplier(&sys, &r).unwrap();
                    recovery = recovery.max((&l - &s.lambda).amax() / (1.0 + s.lambda.amax()));
                }
                let refs = References {
                    limit: Some(&traj0),
                    hat: None,
                };
                let report = error_report(&sys, &traj, refs, eps, &[Measure::LambdaL2]).unwrap();
                gap = gap.max(report.lambda_gap.unwrap());
            }
        }
    }

    let mut defect = 0.0f64;
    for n in [1, 2, 8, 64, 256] {
        let sys = build_pipe_system(n).unwrap();
        for preset in [InitialDataPreset::Data44, InitialDataPreset::Data45] {
            let (p, m) = initial_data(preset, n).unwrap();
            defect = defect.max(
                consistency_defect(&sys, &State::initial(p, m, 2), &ForcingSpec::Zero).unwrap(),
            );
        }
    }

    let mut runner = TestRunner::new(Config {
        cases: 20,
        failure_persistence: None,
        ..Config::default()
    });
    let cases = std::cell::Cell::new(0);
    let energy = runner.run(
        &(
            1usize..=8,
            0.01f64..=1.0,
            prop::sample::select(InitialDataPreset::ALL.to_vec()),
        ),
        |(n, eps, preset)| {
            cases.set(cases.get() + 1);
            let sys = build_pipe_system(n).unwrap();
            let consts = OperatorConstants::estimate(&sys).unwrap();
            let (p, m) = initial_data(preset, n).unwrap();
            let init = State::initial(p, m, 2);
            let grid = TimeGrid::uniform(1.0, 500).unwrap();
            let traj = solve_eps_system(&sys, &init, eps, &grid, &ForcingSpec::Zero).unwrap();
            prop_assert!(check_energy_estimate(&sys, &traj, &consts, eps, &init, 1.0).satisfied);
            Ok(())
        },
    );

    merge(vec![
        check(constraint <= 1e-9, format!("constraint {constraint:.1e}")),
        check(monotone, "energy nonincreasing"),
        check(
            recovery <= 1e-8,
            format!("multiplier recovery {recovery:.1e}"),
        ),
        check(gap <= 1e-8, format!("lambda path gap {gap:.1e}")),
        check(defect <= 1e-12, format!("consistent defect {defect:.1e}")),
        check(
            energy.is_ok() && cases.get() >= 20,
            format!("energy estimate on {} random configs", cases.get()),
        ),
    ])
}

fn criterion_8() -> Outcome {
    let mut worst = 0.0f64;
    for a in [0.5, 1.0, 1.5, 2.0] {
        let rows = epsilon_grid(30)
            .into_iter()
            .map(|eps| ErrorRow {
                n: 1,
                eps,
                measure: Measure::PLinfL2,
                value: 2.5 * eps.powf(a),
            })
            .collect();
        let rates = estimate_rates(&ErrorTable::from_rows(rows).unwrap()).unwrap();
        worst = worst.max((rates.rows[0].alpha - a).abs());
    }
    check(worst <= 1e-12, format!("max |alpha - a| {worst:.1e}"))
}

fn main() {
    let mut failed = 0;
    let mut report = |id: u32, o: Outcome| {
        println!(
            "criterion {id}: {} - {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        if !o.pass {
            failed += 1;
        }
    };
    report(1, criterion_1());
    let fig2 = figure_rates(2);
    let fig3 = figure_rates(3);
    let fig4 = figure_rates(4);
    let fig5 = figure_rates(5);
    report(2, criterion_2(&fig3));
    report(3, criterion_3(&fig4));
    report(4, criterion_4(&fig2));
    report(5, criterion_5(&fig5));
    report(6, criterion_6(&fig2, &fig4));
    report(7, criterion_7());
    report(8, criterion_8());
    println!("{failed} of 8 criteria failed");
    if failed > 0 {
        std::process::exit(1);
    }
}
