use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Dyn, LU};

use crate::error::{Error, Result};
use crate::linalg::{Factorization, SparseMatrix, Strategy};

use super::constants::OperatorConstants;
use super::time::{ForcingSpec, State};

const SYMMETRY_TOL: f64 = 1e-12;

/// One Galerkin discretization of the constrained system
///
/// ```text
/// G_H ṗ + A p − Kᵀ m + Bᵀ λ = g
/// ε G_M ṁ + K p + D m       = f
/// B p                       = h
/// ```
///
/// Matrices are validated once and the factorizations needed by the solvers are
/// cached; the value is immutable afterwards and cheap to clone.
#[derive(Clone, Debug)]
pub struct DiscretePdae {
    inner: Arc<Inner>,
}

#[derive(Debug)]
struct Inner {
    g_h: SparseMatrix,
    g_p: SparseMatrix,
    g_m: SparseMatrix,
    a: SparseMatrix,
    k: SparseMatrix,
    k_t: SparseMatrix,
    d: SparseMatrix,
    b: SparseMatrix,
    b_t: SparseMatrix,
    l: SparseMatrix,
    g_h_fact: Factorization,
    g_m_fact: Factorization,
    d_fact: Factorization,
    multipliers: MultiplierMap,
}

/// Matrices of a [`DiscretePdae`], in the order `G_H, G_P, G_M, A, K, D, B`.
#[derive(Clone, Debug)]
pub struct PdaeMatrices {
    pub g_h: SparseMatrix,
    pub g_p: SparseMatrix,
    pub g_m: SparseMatrix,
    pub a: SparseMatrix,
    pub k: SparseMatrix,
    pub d: SparseMatrix,
    pub b: SparseMatrix,
}

impl DiscretePdae {
    pub fn new(mats: PdaeMatrices) -> Result<Self> {
        Self::with_strategy(mats, Strategy::Auto)
    }

    pub fn with_strategy(mats: PdaeMatrices, strategy: Strategy) -> Result<Self> {
        let PdaeMatrices {
            g_h,
            g_p,
            g_m,
            a,
            k,
            d,
            b,
        } = mats;
        let dim_p = g_h.nrows();
        let dim_m = g_m.nrows();
        let dim_q = b.nrows();
        if dim_p == 0 || dim_m == 0 || dim_q == 0 {
            return Err(Error::InvalidSystem(
                "all dimensions must be positive".into(),
            ));
        }
        for (what, m, shape) in [
            ("G_H", &g_h, (dim_p, dim_p)),
            ("G_P", &g_p, (dim_p, dim_p)),
            ("G_M", &g_m, (dim_m, dim_m)),
            ("A", &a, (dim_p, dim_p)),
            ("K", &k, (dim_m, dim_p)),
            ("D", &d, (dim_m, dim_m)),
            ("B", &b, (dim_q, dim_p)),
        ] {
            if m.shape() != shape {
                return Err(Error::InvalidSystem(format!(
                    "{what} has shape {:?}, expected {shape:?}",
                    m.shape()
                )));
            }
        }
        if dim_q > dim_p {
            return Err(Error::ConstraintNotSurjective);
        }
        for (what, m) in [("G_H", &g_h), ("G_P", &g_p), ("G_M", &g_m)] {
            if !m.is_symmetric(SYMMETRY_TOL) {
                return Err(Error::InvalidSystem(format!("{what} is not symmetric")));
            }
        }
        let spd = |what: &str, m: &SparseMatrix| {
            Factorization::spd(m, strategy)
                .map_err(|_| Error::InvalidSystem(format!("{what} is not positive definite")))
        };
        let g_h_fact = spd("G_H", &g_h)?;
        let g_m_fact = spd("G_M", &g_m)?;
        spd("G_P", &g_p)?;
        if dim_m <= crate::linalg::DENSE_LIMIT {
            let sym = SparseMatrix::linear_combination(&[(1.0, &d), (1.0, &d.transpose())]);
            if Factorization::spd(&sym, Strategy::Dense).is_err() {
                return Err(Error::InvalidSystem(
                    "D + Dᵀ is not positive definite".into(),
                ));
            }
        }
        if dim_p <= 512 {
            let gap = SparseMatrix::linear_combination(&[(1.0, &g_p), (-1.0, &g_h)]).to_dense();
            let lo = gap.symmetric_eigenvalues().min();
            if lo < -1e-10 * g_p.max_abs() {
                return Err(Error::InvalidSystem("G_P does not dominate G_H".into()));
            }
        }
        let d_fact =
            Factorization::general(&d, &[], strategy).map_err(|_| Error::OperatorNotInvertible)?;
        let l = schur_with(&k, &d, &d_fact)?;
        let k_t = k.transpose();
        let b_t = b.transpose();
        let multipliers = MultiplierMap::new(&g_h_fact, &b, &k)?;
        Ok(Self {
            inner: Arc::new(Inner {
                g_h,
                g_p,
                g_m,
                a,
                k,
                k_t,
                d,
                b,
                b_t,
                l,
                g_h_fact,
                g_m_fact,
                d_fact,
                multipliers,
            }),
        })
    }

    pub fn dim_p(&self) -> usize {
        self.inner.g_h.nrows()
    }
    pub fn dim_m(&self) -> usize {
        self.inner.g_m.nrows()
    }
    pub fn dim_q(&self) -> usize {
        self.inner.b.nrows()
    }
    pub fn g_h(&self) -> &SparseMatrix {
        &self.inner.g_h
    }
    pub fn g_p(&self) -> &SparseMatrix {
        &self.inner.g_p
    }
    pub fn g_m(&self) -> &SparseMatrix {
        &self.inner.g_m
    }
    pub fn a_mat(&self) -> &SparseMatrix {
        &self.inner.a
    }
    pub fn k_mat(&self) -> &SparseMatrix {
        &self.inner.k
    }
    pub fn k_t(&self) -> &SparseMatrix {
        &self.inner.k_t
    }
    pub fn d_mat(&self) -> &SparseMatrix {
        &self.inner.d
    }
    pub fn b_mat(&self) -> &SparseMatrix {
        &self.inner.b
    }
    pub fn b_t(&self) -> &SparseMatrix {
        &self.inner.b_t
    }
    /// `L = Kᵀ D⁻¹ K`.
    pub fn l_mat(&self) -> &SparseMatrix {
        &self.inner.l
    }
    pub fn multipliers(&self) -> &MultiplierMap {
        &self.inner.multipliers
    }

    pub fn solve_g_h(&self, r: &DVector<f64>) -> DVector<f64> {
        self.inner.g_h_fact.solve(r)
    }
    pub fn solve_g_m(&self, r: &DVector<f64>) -> DVector<f64> {
        self.inner.g_m_fact.solve(r)
    }
    pub fn solve_d(&self, r: &DVector<f64>) -> DVector<f64> {
        self.inner.d_fact.solve(r)
    }

    /// `‖r‖²` in the dual of the m-space, `rᵀ G_M⁻¹ r`.
    pub fn dual_m_norm_sq(&self, r: &DVector<f64>) -> f64 {
        r.dot(&self.solve_g_m(r))
    }
}

/// `L = Kᵀ D⁻¹ K`. Diagonal `D` keeps `L` sparse; otherwise `D⁻¹K` is formed densely.
pub fn assemble_schur(k: &SparseMatrix, d: &SparseMatrix) -> Result<SparseMatrix> {
    if d.nrows() != d.ncols() || d.nrows() != k.nrows() {
        return Err(Error::dims("D rows", k.nrows(), d.nrows()));
    }
    let fact =
        Factorization::general(d, &[], Strategy::Auto).map_err(|_| Error::OperatorNotInvertible)?;
    schur_with(k, d, &fact)
}

fn schur_with(k: &SparseMatrix, d: &SparseMatrix, d_fact: &Factorization) -> Result<SparseMatrix> {
    let n = d.nrows();
    let diagonal = d.triplets().all(|(i, j, _)| i == j);
    if diagonal {
        let inv: Vec<f64> = (0..n).map(|i| d.get(i, i)).map(|v| 1.0 / v).collect();
        if inv.iter().any(|v| !v.is_finite()) {
            return Err(Error::OperatorNotInvertible);
        }
        let d_inv_k = SparseMatrix::from_triplets(
            k.nrows(),
            k.ncols(),
            k.triplets().map(|(i, j, v)| (i, j, v * inv[i])),
        );
        return Ok(k.transpose().mul(&d_inv_k));
    }
    let d_inv_k = d_fact.solve_columns(&k.to_dense());
    Ok(SparseMatrix::from_dense(
        &(k.transpose().to_dense() * d_inv_k),
    ))
}

/// Solves `[(L + A + C_A·G_H), Bᵀ; B, 0](p̄; λ̄) = (g; 0)` and returns `(p̄, m̄, λ̄)`
/// with `m̄ = −D⁻¹ K p̄`.
pub fn solve_auxiliary(
    sys: &DiscretePdae,
    consts: &OperatorConstants,
    g: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>)> {
    let (np, nq) = (sys.dim_p(), sys.dim_q());
    if g.len() != np {
        return Err(Error::dims("auxiliary right-hand side", np, g.len()));
    }
    let top = SparseMatrix::linear_combination(&[
        (1.0, sys.l_mat()),
        (1.0, sys.a_mat()),
        (consts.c_a, sys.g_h()),
    ]);
    let mat = SparseMatrix::block(
        &[np, nq],
        &[np, nq],
        &[&[Some(&top), Some(sys.b_t())], &[Some(sys.b_mat()), None]],
    );
    let pinned: Vec<usize> = (np..np + nq).collect();
    let fact = Factorization::general(&mat, &pinned, Strategy::Auto)
        .map_err(|_| Error::AuxiliaryNotSolvable)?;
    let mut rhs = DVector::zeros(np + nq);
    rhs.rows_mut(0, np).copy_from(g);
    let x = fact.solve(&rhs);
    let p = x.rows(0, np).into_owned();
    let lambda = x.rows(np, nq).into_owned();
    let m = -sys.solve_d(&sys.k_mat().mul_vec(&p));
    Ok((p, m, lambda))
}

/// `λ = (B G_H⁻¹ Bᵀ)⁻¹ B G_H⁻¹ r` for a residual `r` in dual p-coordinates.
pub fn recover_multiplier(sys: &DiscretePdae, residual: &DVector<f64>) -> Result<DVector<f64>> {
    if residual.len() != sys.dim_p() {
        return Err(Error::dims(
            "multiplier residual",
            sys.dim_p(),
            residual.len(),
        ));
    }
    Ok(sys.multipliers().recover(residual))
}

/// `‖f(0) − K p(0) − D m(0)‖` in the dual m-norm.
pub fn consistency_defect(sys: &DiscretePdae, init: &State, forcing: &ForcingSpec) -> Result<f64> {
    init.check_dims(sys)?;
    if let ForcingSpec::Sampled { f, .. } = forcing {
        if let Some(f0) = f.first() {
            if f0.len() != sys.dim_m() {
                return Err(Error::dims("forcing f", sys.dim_m(), f0.len()));
            }
        }
    }
    let r = forcing.f(0, sys.dim_m()) - sys.k_mat().mul_vec(&init.p) - sys.d_mat().mul_vec(&init.m);
    Ok(sys.dual_m_norm_sq(&r).max(0.0).sqrt())
}

/// Precomputed pieces of the multiplier recovery.
#[derive(Clone, Debug)]
pub struct MultiplierMap {
    /// `G_H⁻¹ Bᵀ`, `dim_p × dim_q`.
    gi_bt: DMatrix<f64>,
    s_lu: LU<f64, Dyn, Dyn>,
    /// `S⁻¹ B G_H⁻¹ Kᵀ`, `dim_q × dim_m`.
    lambda_map: DMatrix<f64>,
}

impl MultiplierMap {
    fn new(g_h_fact: &Factorization, b: &SparseMatrix, k: &SparseMatrix) -> Result<Self> {
        let gi_bt = g_h_fact.solve_columns(&b.transpose().to_dense());
        let s = b.to_dense() * &gi_bt;
        let s_lu = s.clone().lu();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        let u = s_lu.u();
        for i in 0..u.nrows() {
            lo = lo.min(u[(i, i)].abs());
            hi = hi.max(u[(i, i)].abs());
        }
        if !(hi > 0.0) || !(lo > 1e-12 * hi) {
            return Err(Error::ConstraintNotSurjective);
        }
        // (K G_H⁻¹ Bᵀ)ᵀ = B G_H⁻¹ Kᵀ by symmetry of G_H.
        let kgb = DMatrix::from_fn(k.nrows(), gi_bt.ncols(), |i, c| {
            k.row(i).map(|(j, v)| v * gi_bt[(j, c)]).sum()
        });
        let lambda_map = s_lu
            .solve(&kgb.transpose())
            .ok_or(Error::ConstraintNotSurjective)?;
        Ok(Self {
            gi_bt,
            s_lu,
            lambda_map,
        })
    }

    pub fn recover(&self, residual: &DVector<f64>) -> DVector<f64> {
        self.solve_s(&(self.gi_bt.transpose() * residual))
    }

    /// `S⁻¹ v` with `S = B G_H⁻¹ Bᵀ`.
    pub fn solve_s(&self, v: &DVector<f64>) -> DVector<f64> {
        self.s_lu.solve(v).expect("checked at construction")
    }

    /// `S⁻¹ B G_H⁻¹ Kᵀ`, mapping m-coefficients to the multiplier they induce.
    pub fn lambda_map(&self) -> &DMatrix<f64> {
        &self.lambda_map
    }

    pub fn apply_lambda_map(&self, m: &DVector<f64>) -> DVector<f64> {
        &self.lambda_map * m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn toy() -> DiscretePdae {
        // Three p unknowns, two m unknowns, one constraint.
        let g_h = SparseMatrix::from_dense(&DMatrix::from_row_slice(
            3,
            3,
            &[2.0, 0.5, 0.0, 0.5, 2.0, 0.3, 0.0, 0.3, 1.5],
        ));
        let g_p =
            SparseMatrix::linear_combination(&[(1.0, &g_h), (1.0, &SparseMatrix::identity(3))]);
        let g_m = SparseMatrix::from_diagonal(&[1.0, 0.5]);
        let k = SparseMatrix::from_dense(&DMatrix::from_row_slice(
            2,
            3,
            &[1.0, -1.0, 0.0, 0.0, 2.0, 1.0],
        ));
        let b = SparseMatrix::from_dense(&DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 1.0]));
        DiscretePdae::new(PdaeMatrices {
            g_h,
            g_p,
            g_m: g_m.clone(),
            a: SparseMatrix::zeros(3, 3),
            k,
            d: g_m,
            b,
        })
        .unwrap()
    }

    #[test]
    fn schur_trivial_cases() {
        let k = SparseMatrix::from_dense(&DMatrix::from_row_slice(
            2,
            3,
            &[1.0, 2.0, 0.0, 0.0, -1.0, 3.0],
        ));
        let id = SparseMatrix::identity(2);
        let l = assemble_schur(&k, &id).unwrap();
        assert_relative_eq!(
            l.to_dense(),
            k.to_dense().transpose() * k.to_dense(),
            epsilon = 1e-14
        );
        let zero = assemble_schur(&SparseMatrix::zeros(2, 3), &id).unwrap();
        assert_eq!(zero.nnz(), 0);
        let singular = SparseMatrix::from_diagonal(&[1.0, 0.0]);
        assert!(matches!(
            assemble_schur(&k, &singular),
            Err(Error::OperatorNotInvertible)
        ));
    }

    #[test]
    fn schur_with_full_d_matches_dense() {
        let k = SparseMatrix::from_dense(&DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.5, -1.0]));
        let d = DMatrix::from_row_slice(2, 2, &[2.0, 0.4, -0.3, 1.0]);
        let l = assemble_schur(&k, &SparseMatrix::from_dense(&d)).unwrap();
        let expect = k.to_dense().transpose() * d.try_inverse().unwrap() * k.to_dense();
        assert_relative_eq!(l.to_dense(), expect, epsilon = 1e-13);
    }

    #[test]
    fn multiplier_left_inverse_and_kernel() {
        let sys = toy();
        let mu = DVector::from_vec(vec![0.7]);
        let r = sys.b_t().mul_vec(&mu);
        assert_relative_eq!(recover_multiplier(&sys, &r).unwrap(), mu, epsilon = 1e-14);
        // G_H·z with B z = 0 is H-orthogonal to range(Bᵀ).
        let z = DVector::from_vec(vec![1.0, -2.0, 1.0]);
        let r = sys.g_h().mul_vec(&z);
        assert!(recover_multiplier(&sys, &r).unwrap().norm() < 1e-14);
    }

    #[test]
    fn rejects_bad_systems() {
        let sys = toy();
        let mut mats = PdaeMatrices {
            g_h: sys.g_h().clone(),
            g_p: sys.g_p().clone(),
            g_m: sys.g_m().clone(),
            a: sys.a_mat().clone(),
            k: sys.k_mat().clone(),
            d: SparseMatrix::from_diagonal(&[1.0, 0.0]),
            b: sys.b_mat().clone(),
        };
        assert!(DiscretePdae::new(mats.clone()).is_err());
        mats.d = sys.d_mat().clone();
        mats.b = SparseMatrix::zeros(1, 3);
        assert!(matches!(
            DiscretePdae::new(mats.clone()),
            Err(Error::ConstraintNotSurjective)
        ));
        mats.b = sys.b_mat().clone();
        mats.g_h = SparseMatrix::from_diagonal(&[1.0, -1.0, 1.0]);
        assert!(DiscretePdae::new(mats).is_err());
    }

    #[test]
    fn defect_of_constructed_consistent_state_vanishes() {
        let sys = toy();
        let p = DVector::from_vec(vec![1.0, 0.5, -1.5]);
        let m = -sys.solve_d(&sys.k_mat().mul_vec(&p));
        let s = State::initial(p, m, 1);
        assert!(consistency_defect(&sys, &s, &ForcingSpec::Zero).unwrap() < 1e-14);
    }
}
