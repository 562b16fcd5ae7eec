//! Parabolic limit `ε = 0`, the first-order correction, the combined expansion
//! `p̂ = p₀ + εp₁`, `m̂ = m₀ + εm₁`, and an exact mode-wise solution of the pipe model.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::SparseMatrix;
use crate::pdae_core::{
    check_initial_constraint, DiscretePdae, ForcingSpec, SolverOptions, State, StepSolver,
    TimeGrid, Trajectory,
};

/// The expansion terms and their combination for one `ε`.
#[derive(Clone, Debug)]
pub struct ExpansionBundle {
    pub traj0: Trajectory,
    pub traj1: Trajectory,
    pub eps: f64,
    pub hat: Trajectory,
}

impl ExpansionBundle {
    pub fn new(traj0: Trajectory, traj1: Trajectory, eps: f64) -> Result<Self> {
        let hat = hat_solution(&traj0, &traj1, eps)?;
        Ok(Self {
            traj0,
            traj1,
            eps,
            hat,
        })
    }
}

/// Node-wise `traj0 + ε·traj1`, multiplier included.
pub fn hat_solution(traj0: &Trajectory, traj1: &Trajectory, eps: f64) -> Result<Trajectory> {
    traj0.combine(1.0, traj1, eps)
}

pub fn solve_limit_system(
    sys: &DiscretePdae,
    p0_init: &DVector<f64>,
    grid: &TimeGrid,
    forcing: &ForcingSpec,
) -> Result<Trajectory> {
    solve_limit_system_with(sys, p0_init, grid, forcing, &SolverOptions::default())
}

/// Implicit midpoint for `G_H ṗ₀ + (L + A)p₀ + Bᵀλ₀ = g + KᵀD⁻¹f`, `Bp₀ = h`, followed
/// by `m₀ = D⁻¹(f − Kp₀)` at every node.
pub fn solve_limit_system_with(
    sys: &DiscretePdae,
    p0_init: &DVector<f64>,
    grid: &TimeGrid,
    forcing: &ForcingSpec,
    opts: &SolverOptions,
) -> Result<Trajectory> {
    let (np, nm, nq) = (sys.dim_p(), sys.dim_m(), sys.dim_q());
    if p0_init.len() != np {
        return Err(Error::dims("limit initial p", np, p0_init.len()));
    }
    forcing.validate(sys, grid)?;
    check_initial_constraint(sys, p0_init, &forcing.h(0, nq), opts.constraint_tol)?;

    let stiff = SparseMatrix::linear_combination(&[(1.0, sys.l_mat()), (1.0, sys.a_mat())]);
    let build = |dt: f64| {
        let top = SparseMatrix::linear_combination(&[(1.0 / dt, sys.g_h()), (0.5, &stiff)]);
        SparseMatrix::block(
            &[np, nq],
            &[np, nq],
            &[&[Some(&top), Some(sys.b_t())], &[Some(sys.b_mat()), None]],
        )
    };
    let mut stepper = StepSolver::new(build, (np..np + nq).collect(), opts);

    let g_tilde = |i: usize| {
        let f = forcing.f(i, nm);
        let mut g = forcing.g(i, np);
        if !forcing.is_zero() {
            g += sys.k_t().mul_vec(&sys.solve_d(&f));
        }
        g
    };
    let node_state = |i: usize, p: &DVector<f64>| {
        let m = sys.solve_d(&(forcing.f(i, nm) - sys.k_mat().mul_vec(p)));
        let r = g_tilde(i) - stiff.mul_vec(p);
        let mut lambda = sys.multipliers().recover(&r);
        if !forcing.is_zero() {
            lambda -= sys.multipliers().solve_s(&forcing.h_dot(grid, i, nq));
        }
        State::new(grid.nodes()[i], p.clone(), m, lambda)
    };

    let mut states = Vec::with_capacity(grid.len());
    let mut p = p0_init.clone();
    states.push(node_state(0, &p));
    let mut g_prev = g_tilde(0);
    for i in 0..grid.n_steps() {
        let g_next = g_tilde(i + 1);
        let g_mid = (&g_prev + &g_next) * 0.5;
        let h_next = forcing.h(i + 1, nq);
        let x = stepper.solve(grid.step(i), grid.nodes()[i + 1], |dt| {
            let mut rhs = DVector::zeros(np + nq);
            let top = sys.g_h().mul_vec(&p) / dt - stiff.mul_vec(&p) * 0.5 + &g_mid;
            rhs.rows_mut(0, np).copy_from(&top);
            rhs.rows_mut(np, nq).copy_from(&h_next);
            rhs
        })?;
        p = x.rows(0, np).into_owned();
        states.push(node_state(i + 1, &p));
        g_prev = g_next;
    }
    Trajectory::new(grid.clone(), states)
}

/// `ṁ₀ = D⁻¹(ḟ − K ṗ₀)` at every node, with `ṗ₀ = G_H⁻¹(g − Ap₀ + Kᵀm₀ − Bᵀλ₀)` taken
/// from the limit equation rather than from differencing.
pub fn limit_flux_rate(
    sys: &DiscretePdae,
    traj0: &Trajectory,
    forcing: &ForcingSpec,
) -> Result<Vec<DVector<f64>>> {
    let (np, nm) = (sys.dim_p(), sys.dim_m());
    let grid = traj0.grid();
    forcing.validate(sys, grid)?;
    Ok(traj0
        .states()
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let r = forcing.g(i, np) - sys.a_mat().mul_vec(&s.p) + sys.k_t().mul_vec(&s.m)
                - sys.b_t().mul_vec(&s.lambda);
            let p_dot = sys.solve_g_h(&r);
            sys.solve_d(&(forcing.f_dot(grid, i, nm) - sys.k_mat().mul_vec(&p_dot)))
        })
        .collect())
}

pub fn solve_correction_system(
    sys: &DiscretePdae,
    traj0: &Trajectory,
    grid: &TimeGrid,
    forcing: &ForcingSpec,
) -> Result<Trajectory> {
    solve_correction_system_with(sys, traj0, grid, forcing, &SolverOptions::default())
}

/// The correction `(p₁, m₁, λ₁)` solves the limit structure driven by `f = −G_M ṁ₀`
/// with `g = h = 0` and `p₁(0) = 0`. `forcing` is the forcing of the limit problem.
pub fn solve_correction_system_with(
    sys: &DiscretePdae,
    traj0: &Trajectory,
    grid: &TimeGrid,
    forcing: &ForcingSpec,
    opts: &SolverOptions,
) -> Result<Trajectory> {
    if traj0.grid() != grid {
        return Err(Error::GridMismatch(
            "limit trajectory and correction grid differ".into(),
        ));
    }
    let f1: Vec<DVector<f64>> = limit_flux_rate(sys, traj0, forcing)?
        .iter()
        .map(|md| -sys.g_m().mul_vec(md))
        .collect();
    let n = grid.len();
    let forcing1 = ForcingSpec::Sampled {
        g: vec![DVector::zeros(sys.dim_p()); n],
        f: f1,
        h: vec![DVector::zeros(sys.dim_q()); n],
    };
    solve_limit_system_with(sys, &DVector::zeros(sys.dim_p()), grid, &forcing1, opts)
}

/// Fundamental matrix `e^{Mt}` of `ṗ = a m`, `ε ṁ = −a p − m`, i.e.
/// `M = [[0, a], [−a/ε, −1/ε]]`, returned as `[[Φ₀₀, Φ₀₁], [Φ₁₀, Φ₁₁]]`.
///
/// Well separated real eigenvalues use the spectral form; otherwise (nearly
/// repeated or complex pair) `e^{Mt} = e^{st}(C·I + S·(M − sI))` with `s = −1/(2ε)`,
/// which stays finite through the defective case.
pub fn mode_propagator(a: f64, eps: f64, t: f64) -> [[f64; 2]; 2] {
    assert!(eps > 0.0, "mode_propagator needs eps > 0");
    let d = 1.0 - 4.0 * eps * a * a;
    if d > 0.01 {
        let r = d.sqrt();
        let slow = -2.0 * a * a / (1.0 + r);
        let fast = -(1.0 + r) / (2.0 * eps);
        let (e1, e2) = ((slow * t).exp(), (fast * t).exp());
        let half = 0.5 * (1.0 + r);
        let cross = 2.0 * eps * a * a / (1.0 + r);
        return [
            [(half * e1 - cross * e2) / r, eps * a * (e1 - e2) / r],
            [-a * (e1 - e2) / r, (half * e2 - cross * e1) / r],
        ];
    }
    let s = -0.5 / eps;
    let omega = d.abs().sqrt() / (2.0 * eps);
    let x = omega * t;
    let (c, sfac) = if d >= 0.0 {
        if x < 0.5 {
            let es = (s * t).exp();
            let sinhc = if x == 0.0 { 1.0 } else { x.sinh() / x };
            (es * x.cosh(), es * t * sinhc)
        } else {
            let ep = ((s + omega) * t).exp();
            let em = ((s - omega) * t).exp();
            (0.5 * (ep + em), (ep - em) / (2.0 * omega))
        }
    } else {
        let es = (s * t).exp();
        let sinc = if x == 0.0 { 1.0 } else { x.sin() / x };
        (es * x.cos(), es * t * sinc)
    };
    let h = 0.5 / eps;
    [[c + sfac * h, sfac * a], [-sfac * a / eps, c - sfac * h]]
}

fn pure_mode_check(sys: &DiscretePdae, p: &DVector<f64>, m: &DVector<f64>) -> Result<usize> {
    if p.len() != sys.dim_p() {
        return Err(Error::dims("oracle initial p", sys.dim_p(), p.len()));
    }
    if m.len() != sys.dim_m() {
        return Err(Error::dims("oracle initial m", sys.dim_m(), m.len()));
    }
    let n = sys.dim_m() - 1;
    if sys.dim_p() != n + 2 || sys.dim_q() != 2 {
        return Err(Error::InvalidSystem(
            "mode oracle needs the pipe discretization".into(),
        ));
    }
    let scale = 1.0 + p.amax();
    if p[0].abs() > 1e-14 * scale || p[1].abs() > 1e-14 * scale {
        return Err(Error::OracleRequiresPureModes);
    }
    Ok(n)
}

fn assemble_modes(
    sys: &DiscretePdae,
    grid: &TimeGrid,
    n: usize,
    mut node: impl FnMut(f64, &mut DVector<f64>, &mut DVector<f64>),
) -> Result<Trajectory> {
    let states = grid
        .nodes()
        .iter()
        .map(|&t| {
            let mut p = DVector::zeros(n + 2);
            let mut m = DVector::zeros(n + 1);
            node(t, &mut p, &mut m);
            let lambda = sys.multipliers().apply_lambda_map(&m);
            State::new(t, p, m, lambda)
        })
        .collect();
    Trajectory::new(grid.clone(), states)
}

/// Exact pipe solution obtained mode by mode. With `eps = 0` this is the limit solution
/// (and `m_init` is ignored). The multiplier is `S⁻¹BG_H⁻¹Kᵀm`, which for the pipe is
/// the flux trace `(−m(0), m(1))`.
pub fn exact_mode_trajectories(
    sys: &DiscretePdae,
    eps: f64,
    p_init: &DVector<f64>,
    m_init: &DVector<f64>,
    grid: &TimeGrid,
) -> Result<Trajectory> {
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "eps must be nonnegative, got {eps}"
        )));
    }
    let n = pure_mode_check(sys, p_init, m_init)?;
    assemble_modes(sys, grid, n, |t, p, m| {
        if eps == 0.0 {
            for k in 1..=n {
                let a = k as f64 * std::f64::consts::PI;
                let pk = p_init[k + 1] * (-a * a * t).exp();
                p[k + 1] = pk;
                m[k] = -a * pk;
            }
        } else {
            m[0] = m_init[0] * (-t / eps).exp();
            for k in 1..=n {
                let a = k as f64 * std::f64::consts::PI;
                let phi = mode_propagator(a, eps, t);
                let (p0, m0) = (p_init[k + 1], m_init[k]);
                p[k + 1] = phi[0][0] * p0 + phi[0][1] * m0;
                m[k] = phi[1][0] * p0 + phi[1][1] * m0;
            }
        }
    })
}

/// Exact first-order correction of the pipe: per mode `a = kπ`,
/// `p₁ = −a⁴p(0) t e^{−a²t}` and `m₁ = (a⁵t − a³) p(0) e^{−a²t}`.
pub fn exact_correction_trajectories(
    sys: &DiscretePdae,
    p_init: &DVector<f64>,
    grid: &TimeGrid,
) -> Result<Trajectory> {
    let n = pure_mode_check(sys, p_init, &DVector::zeros(sys.dim_m()))?;
    assemble_modes(sys, grid, n, |t, p, m| {
        for k in 1..=n {
            let a = k as f64 * std::f64::consts::PI;
            let a2 = a * a;
            let decay = p_init[k + 1] * (-a2 * t).exp();
            p[k + 1] = -a2 * a2 * t * decay;
            m[k] = (a2 * a2 * a * t - a2 * a) * decay;
        }
    })
}
