use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

use super::system::DiscretePdae;

/// Continuity and coercivity constants of a discrete system, measured in the norms
/// induced by the Gram matrices (`G_H` for A, `G_P` on the p-side of K and B, `G_M`
/// for the m-space).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OperatorConstants {
    pub c_d: f64,
    pub c_a: f64,
    pub c_k_upper: f64,
    pub c_d_upper: f64,
    pub c_b: f64,
    pub beta: f64,
    pub c_k: f64,
    pub c_l: f64,
}

/// Dense estimation is limited to this many p-unknowns.
pub const ESTIMATE_LIMIT: usize = 2048;

impl OperatorConstants {
    /// Computes all constants from generalized eigen- and singular values. Cost is
    /// cubic in the dimension.
    pub fn estimate(sys: &DiscretePdae) -> Result<Self> {
        if sys.dim_p() > ESTIMATE_LIMIT {
            return Err(Error::InvalidArgument(format!(
                "constant estimation is dense; dim_p = {} exceeds {ESTIMATE_LIMIT}",
                sys.dim_p()
            )));
        }
        let l_h = cholesky_factor(&sys.g_h().to_dense(), "G_H")?;
        let l_p = cholesky_factor(&sys.g_p().to_dense(), "G_P")?;
        let l_m = cholesky_factor(&sys.g_m().to_dense(), "G_M")?;

        let d = sys.d_mat().to_dense();
        let d_w = whiten(&l_m, &d, &l_m);
        let d_sym = (&d_w + d_w.transpose()) * 0.5;
        let c_d = d_sym.symmetric_eigenvalues().min();
        let c_d_upper = d_w.singular_values().max();

        let c_a = whiten(&l_h, &sys.a_mat().to_dense(), &l_h)
            .singular_values()
            .max();
        let k = sys.k_mat().to_dense();
        let c_k_upper = whiten(&l_m, &k, &l_p).singular_values().max();

        let b = sys.b_mat().to_dense();
        let b_w = right_whiten(&b, &l_p);
        let sv_b = b_w.singular_values();
        let c_b = sv_b.max();
        let beta = sv_b.min();

        // Restrict to ker B with a G_P-orthonormal basis of the kernel.
        let z = kernel_basis(&b)?;
        let (c_k, c_l) = if z.ncols() == 0 {
            (f64::INFINITY, f64::INFINITY)
        } else {
            let gz = z.transpose() * sys.g_p().to_dense() * &z;
            let l_z = cholesky_factor(&gz, "Zᵀ G_P Z")?;
            let kz = &k * &z;
            let c_k = whiten(&l_m, &kz, &l_z).singular_values().min();
            let lz = z.transpose() * sys.l_mat().to_dense() * &z;
            let lz = whiten(&l_z, &lz, &l_z);
            let c_l = ((&lz + lz.transpose()) * 0.5).symmetric_eigenvalues().min();
            (c_k, c_l)
        };

        Ok(Self {
            c_d,
            c_a,
            c_k_upper,
            c_d_upper,
            c_b,
            beta,
            c_k,
            c_l,
        })
    }

    /// Checks the structural relations between the constants.
    pub fn is_consistent(&self) -> bool {
        let all = [
            self.c_d,
            self.c_a,
            self.c_k_upper,
            self.c_d_upper,
            self.c_b,
            self.beta,
            self.c_k,
            self.c_l,
        ];
        all.iter().all(|c| !c.is_nan() && *c >= 0.0)
            && self.c_d > 0.0
            && self.beta > 0.0
            && self.c_k > 0.0
            && self.c_l > 0.0
            && self.c_d <= self.c_d_upper * (1.0 + 1e-12)
            && self.c_k <= self.c_k_upper * (1.0 + 1e-12)
    }
}

fn cholesky_factor(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    m.clone()
        .cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::InvalidSystem(format!("{what} is not positive definite")))
}

/// `L_a⁻¹ X L_b⁻ᵀ`.
fn whiten(l_a: &DMatrix<f64>, x: &DMatrix<f64>, l_b: &DMatrix<f64>) -> DMatrix<f64> {
    let left = l_a.solve_lower_triangular(x).expect("positive diagonal");
    right_whiten(&left, l_b)
}

/// `X L⁻ᵀ`.
fn right_whiten(x: &DMatrix<f64>, l: &DMatrix<f64>) -> DMatrix<f64> {
    l.solve_lower_triangular(&x.transpose())
        .expect("positive diagonal")
        .transpose()
}

fn kernel_basis(b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = b.ncols();
    let eig = SymmetricEigen::new(b.transpose() * b);
    let top = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let cols: Vec<usize> = (0..n)
        .filter(|&i| eig.eigenvalues[i].abs() <= 1e-12 * top)
        .collect();
    if cols.len() + b.nrows() != n {
        return Err(Error::ConstraintNotSurjective);
    }
    Ok(eig.eigenvectors.select_columns(&cols))
}
