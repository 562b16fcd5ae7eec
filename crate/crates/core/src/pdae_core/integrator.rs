use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::{norm_inf, Factorization, SparseMatrix, Strategy};

use super::constants::OperatorConstants;
use super::system::DiscretePdae;
use super::time::{ForcingSpec, State, TimeGrid, Trajectory};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    /// Allowed `‖B p(0) − h(0)‖_∞`, relative to `1 + ‖h(0)‖_∞`.
    pub constraint_tol: f64,
    /// Allowed normwise relative residual of each step's linear solve.
    pub residual_tol: f64,
    pub strategy: Strategy,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            constraint_tol: 1e-9,
            residual_tol: 1e-10,
            strategy: Strategy::Auto,
        }
    }
}

/// Factorization of a step matrix, reused while the step size does not change.
pub(crate) struct StepSolver<F> {
    build: F,
    pinned: Vec<usize>,
    strategy: Strategy,
    residual_tol: f64,
    cached: Option<(f64, SparseMatrix, Factorization)>,
}

impl<F: Fn(f64) -> SparseMatrix> StepSolver<F> {
    pub(crate) fn new(build: F, pinned: Vec<usize>, opts: &SolverOptions) -> Self {
        Self {
            build,
            pinned,
            strategy: opts.strategy,
            residual_tol: opts.residual_tol,
            cached: None,
        }
    }

    /// `rhs` receives the step size of the cached matrix, which equals `dt` up to the
    /// rounding of the grid nodes.
    pub(crate) fn solve(
        &mut self,
        dt: f64,
        t: f64,
        rhs: impl Fn(f64) -> DVector<f64>,
    ) -> Result<DVector<f64>> {
        let reuse = matches!(&self.cached, Some((h, _, _)) if (h - dt).abs() <= 1e-12 * dt);
        if !reuse {
            let mat = (self.build)(dt);
            let fact = Factorization::general(&mat, &self.pinned, self.strategy)?;
            self.cached = Some((dt, mat, fact));
        }
        let (h, mat, fact) = self.cached.as_ref().unwrap();
        let b = rhs(*h);
        let x = fact.solve(&b);
        let r = norm_inf(&(mat.mul_vec(&x) - &b));
        let scale = mat.max_abs() * norm_inf(&x) + norm_inf(&b);
        if r > self.residual_tol * scale {
            return Err(Error::StepResidual {
                residual: r / scale,
                tol: self.residual_tol,
                t,
            });
        }
        Ok(x)
    }
}

pub(crate) fn check_initial_constraint(
    sys: &DiscretePdae,
    p: &DVector<f64>,
    h0: &DVector<f64>,
    tol: f64,
) -> Result<()> {
    let defect = norm_inf(&(sys.b_mat().mul_vec(p) - h0));
    let allowed = tol * (1.0 + norm_inf(h0));
    if defect > allowed || defect.is_nan() {
        return Err(Error::InconsistentInitialValue {
            defect,
            tol: allowed,
        });
    }
    Ok(())
}

pub fn solve_eps_system(
    sys: &DiscretePdae,
    init: &State,
    eps: f64,
    grid: &TimeGrid,
    forcing: &ForcingSpec,
) -> Result<Trajectory> {
    solve_eps_system_with(sys, init, eps, grid, forcing, &SolverOptions::default())
}

/// Implicit midpoint for `(p, m)` with the constraint imposed at the new node.
///
/// Each step solves
///
/// ```text
/// [ G_H/Δt + A/2   −Kᵀ/2            Bᵀ ] [p⁺]   [ G_H p/Δt − A p/2 + Kᵀ m/2 + ḡ       ]
/// [ K/2            εG_M/Δt + D/2    0  ] [m⁺] = [ εG_M m/Δt − K p/2 − D m/2 + f̄      ]
/// [ B              0                0  ] [μ ]   [ h⁺                                 ]
/// ```
///
/// and the node multiplier is recovered from the momentum equation.
pub fn solve_eps_system_with(
    sys: &DiscretePdae,
    init: &State,
    eps: f64,
    grid: &TimeGrid,
    forcing: &ForcingSpec,
    opts: &SolverOptions,
) -> Result<Trajectory> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::NonPositiveEpsilon(eps));
    }
    init.check_dims(sys)?;
    forcing.validate(sys, grid)?;
    let (np, nm, nq) = (sys.dim_p(), sys.dim_m(), sys.dim_q());
    check_initial_constraint(sys, &init.p, &forcing.h(0, nq), opts.constraint_tol)?;

    let k_half = sys.k_mat().scaled(0.5);
    let neg_kt_half = sys.k_t().scaled(-0.5);
    let build = |dt: f64| {
        let top = SparseMatrix::linear_combination(&[(1.0 / dt, sys.g_h()), (0.5, sys.a_mat())]);
        let mid = SparseMatrix::linear_combination(&[(eps / dt, sys.g_m()), (0.5, sys.d_mat())]);
        SparseMatrix::block(
            &[np, nm, nq],
            &[np, nm, nq],
            &[
                &[Some(&top), Some(&neg_kt_half), Some(sys.b_t())],
                &[Some(&k_half), Some(&mid), None],
                &[Some(sys.b_mat()), None, None],
            ],
        )
    };
    let mut stepper = StepSolver::new(build, (np + nm..np + nm + nq).collect(), opts);

    let node_lambda = |i: usize, p: &DVector<f64>, m: &DVector<f64>| {
        let r = forcing.g(i, np) - sys.a_mat().mul_vec(p) + sys.k_t().mul_vec(m);
        let mut lambda = sys.multipliers().recover(&r);
        if !forcing.is_zero() {
            lambda -= sys.multipliers().solve_s(&forcing.h_dot(grid, i, nq));
        }
        lambda
    };

    let nodes = grid.nodes();
    let mut states = Vec::with_capacity(grid.len());
    let (mut p, mut m) = (init.p.clone(), init.m.clone());
    states.push(State::new(
        nodes[0],
        p.clone(),
        m.clone(),
        node_lambda(0, &p, &m),
    ));
    for i in 0..grid.n_steps() {
        let g_mid = (forcing.g(i, np) + forcing.g(i + 1, np)) * 0.5;
        let f_mid = (forcing.f(i, nm) + forcing.f(i + 1, nm)) * 0.5;
        let h_next = forcing.h(i + 1, nq);
        let x = stepper.solve(grid.step(i), nodes[i + 1], |dt| {
            let mut rhs = DVector::zeros(np + nm + nq);
            let top = sys.g_h().mul_vec(&p) / dt - sys.a_mat().mul_vec(&p) * 0.5
                + sys.k_t().mul_vec(&m) * 0.5
                + &g_mid;
            let mid = sys.g_m().mul_vec(&m) * (eps / dt)
                - sys.k_mat().mul_vec(&p) * 0.5
                - sys.d_mat().mul_vec(&m) * 0.5
                + &f_mid;
            rhs.rows_mut(0, np).copy_from(&top);
            rhs.rows_mut(np, nm).copy_from(&mid);
            rhs.rows_mut(np + nm, nq).copy_from(&h_next);
            rhs
        })?;
        p = x.rows(0, np).into_owned();
        m = x.rows(np, nm).into_owned();
        let lambda = node_lambda(i + 1, &p, &m);
        states.push(State::new(nodes[i + 1], p.clone(), m.clone(), lambda));
    }
    Trajectory::new(grid.clone(), states)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnergyReport {
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
    pub satisfied: bool,
}

/// Compares `‖p‖²_H + ε‖m‖²_M + c_D ∫‖m‖²_M` against `C e^{(1+2C_A)t}(‖p₀‖²_H + ε‖m₀‖²_M)`
/// at every node of an unforced trajectory.
pub fn check_energy_estimate(
    sys: &DiscretePdae,
    traj: &Trajectory,
    consts: &OperatorConstants,
    eps: f64,
    init: &State,
    constant: f64,
) -> EnergyReport {
    let states = traj.states();
    let m_sq: Vec<f64> = states.iter().map(|s| sys.g_m().quad_form(&s.m)).collect();
    let integral = traj.grid().cumulative_trapezoid(&m_sq);
    let e0 = sys.g_h().quad_form(&init.p) + eps * sys.g_m().quad_form(&init.m);
    let lhs: Vec<f64> = states
        .iter()
        .zip(&m_sq)
        .zip(&integral)
        .map(|((s, msq), int)| sys.g_h().quad_form(&s.p) + eps * msq + consts.c_d * int)
        .collect();
    let rhs: Vec<f64> = states
        .iter()
        .map(|s| constant * ((1.0 + 2.0 * consts.c_a) * s.t).exp() * e0)
        .collect();
    let satisfied = lhs
        .iter()
        .zip(&rhs)
        .all(|(l, r)| *l <= r * (1.0 + 1e-12) + f64::MIN_POSITIVE);
    EnergyReport {
        lhs,
        rhs,
        satisfied,
    }
}
