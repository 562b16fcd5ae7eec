//! Single gas pipe on `(0, 1)` with damping and closed ends: `∂ₜp = −∂ₓm`,
//! `ε∂ₜm = −∂ₓp − m`, with the boundary traces of `p` constrained through a multiplier.
//!
//! Pressure space: `e^{−x}, e^{x}, sin(πx), …, sin(nπx)`.
//! Flux space: `1, cos(πx), …, cos(nπx)`. All matrices are assembled in closed form.

use std::f64::consts::{E, PI};
use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::SparseMatrix;
use crate::pdae_core::{DiscretePdae, PdaeMatrices};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PipeBasis {
    n: usize,
}

impl PipeBasis {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("pipe basis needs n >= 1".into()));
        }
        Ok(Self { n })
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn dim_p(&self) -> usize {
        self.n + 2
    }
    pub fn dim_m(&self) -> usize {
        self.n + 1
    }
    pub fn dim_q(&self) -> usize {
        2
    }

    /// Index of `sin(kπx)` among the p-coefficients.
    pub fn sine_index(k: usize) -> usize {
        k + 1
    }

    pub fn p_function(&self, j: usize, x: f64) -> f64 {
        match j {
            0 => (-x).exp(),
            1 => x.exp(),
            _ => ((j - 1) as f64 * PI * x).sin(),
        }
    }

    pub fn p_derivative(&self, j: usize, x: f64) -> f64 {
        match j {
            0 => -(-x).exp(),
            1 => x.exp(),
            _ => {
                let w = (j - 1) as f64 * PI;
                w * (w * x).cos()
            }
        }
    }

    pub fn m_function(&self, i: usize, x: f64) -> f64 {
        (i as f64 * PI * x).cos()
    }

    pub fn eval_p(&self, coeffs: &DVector<f64>, x: f64) -> f64 {
        (0..self.dim_p())
            .map(|j| coeffs[j] * self.p_function(j, x))
            .sum()
    }

    pub fn eval_m(&self, coeffs: &DVector<f64>, x: f64) -> f64 {
        (0..self.dim_m())
            .map(|i| coeffs[i] * self.m_function(i, x))
            .sum()
    }
}

/// `(−1)^k`.
fn alt(k: usize) -> f64 {
    if k.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// Matrices of the pipe discretization with `n` sine and cosine modes.
pub fn pipe_matrices(n: usize) -> Result<PdaeMatrices> {
    let basis = PipeBasis::new(n)?;
    let (dp, dm) = (basis.dim_p(), basis.dim_m());
    let em = (-1.0f64).exp();

    let mut g_h = Vec::new();
    let mut deriv = Vec::new();
    let mut k_mat = Vec::new();

    let exp_sq = [(1.0 - em * em) / 2.0, (E * E - 1.0) / 2.0];
    for (c, &v) in exp_sq.iter().enumerate() {
        g_h.push((c, c, v));
        deriv.push((c, c, v));
    }
    g_h.extend([(0, 1, 1.0), (1, 0, 1.0)]);
    deriv.extend([(0, 1, -1.0), (1, 0, -1.0)]);

    for (c, ec) in [(0usize, em), (1usize, E)] {
        k_mat.push((0, c, ec - 1.0));
        for k in 1..=n {
            let w = k as f64 * PI;
            let denom = 1.0 + w * w;
            let s = PipeBasis::sine_index(k);
            let gh = w * (1.0 - alt(k) * ec) / denom;
            let dv = w * (alt(k) * ec - 1.0) / denom;
            g_h.extend([(c, s, gh), (s, c, gh)]);
            deriv.extend([(c, s, dv), (s, c, dv)]);
            k_mat.push((k, c, (alt(k) * ec - 1.0) / denom));
        }
    }
    for k in 1..=n {
        let w = k as f64 * PI;
        let s = PipeBasis::sine_index(k);
        g_h.push((s, s, 0.5));
        deriv.push((s, s, 0.5 * w * w));
        k_mat.push((k, s, 0.5 * w));
    }

    let g_h = SparseMatrix::from_triplets(dp, dp, g_h);
    let deriv = SparseMatrix::from_triplets(dp, dp, deriv);
    let g_p = SparseMatrix::linear_combination(&[(1.0, &g_h), (1.0, &deriv)]);
    let mut m_diag = vec![0.5; dm];
    m_diag[0] = 1.0;
    let g_m = SparseMatrix::from_diagonal(&m_diag);
    let b = SparseMatrix::from_triplets(2, dp, [(0, 0, 1.0), (0, 1, 1.0), (1, 0, em), (1, 1, E)]);
    Ok(PdaeMatrices {
        g_h,
        g_p,
        g_m: g_m.clone(),
        a: SparseMatrix::zeros(dp, dp),
        k: SparseMatrix::from_triplets(dm, dp, k_mat),
        d: g_m,
        b,
    })
}

pub fn build_pipe_system(n: usize) -> Result<DiscretePdae> {
    DiscretePdae::new(pipe_matrices(n)?)
}

/// Fourier laws of the initial pressure and flux, identified by the names used on the
/// command line (`data42` … `data45`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum InitialDataPreset {
    /// `p_k = k^{−1.55}`, `m = 0`.
    Data42,
    /// `p = 0`, `m_k = π k^{−0.55}`.
    Data43,
    /// `p_k = k^{−2.55}`, `m_k = −π k^{−1.55}`; satisfies `∂ₓp(0) = −m(0)`.
    Data44,
    /// `p_k = k^{−3.55}`, `m_k = −π k^{−2.55}`; satisfies `∂ₓp(0) = −m(0)`.
    Data45,
}

impl InitialDataPreset {
    pub const ALL: [InitialDataPreset; 4] =
        [Self::Data42, Self::Data43, Self::Data44, Self::Data45];

    /// Amplitude of `sin(kπx)`, `k ≥ 1`.
    pub fn p_law(self, k: usize) -> f64 {
        let k = k as f64;
        match self {
            Self::Data42 => k.powf(-1.55),
            Self::Data43 => 0.0,
            Self::Data44 => k.powf(-2.55),
            Self::Data45 => k.powf(-3.55),
        }
    }

    /// Amplitude of `cos(kπx)`; the constant mode `k = 0` is always zero.
    pub fn m_law(self, k: usize) -> f64 {
        if k == 0 {
            return 0.0;
        }
        let k = k as f64;
        match self {
            Self::Data42 => 0.0,
            Self::Data43 => PI * k.powf(-0.55),
            Self::Data44 => -PI * k.powf(-1.55),
            Self::Data45 => -PI * k.powf(-2.55),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Data42 => "data42",
            Self::Data43 => "data43",
            Self::Data44 => "data44",
            Self::Data45 => "data45",
        }
    }
}

impl fmt::Display for InitialDataPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InitialDataPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown preset {s:?} (expected data42, data43, data44 or data45)"
                ))
            })
    }
}

/// Series coefficients truncated at mode `n`; the exponential directions stay zero.
pub fn initial_data(preset: InitialDataPreset, n: usize) -> Result<(DVector<f64>, DVector<f64>)> {
    let basis = PipeBasis::new(n)?;
    let mut p = DVector::zeros(basis.dim_p());
    let mut m = DVector::zeros(basis.dim_m());
    for k in 1..=n {
        p[PipeBasis::sine_index(k)] = preset.p_law(k);
        m[k] = preset.m_law(k);
    }
    Ok((p, m))
}

/// `(m(0), m(1))` for cosine coefficients `m`.
///
/// The discrete multiplier of the pipe equals `(−m(0), m(1))`: the outward normal at
/// the left end points in the negative direction.
pub fn trace_multiplier_reference(m: &DVector<f64>) -> (f64, f64) {
    let left = m.iter().sum();
    let right = m.iter().enumerate().map(|(k, v)| alt(k) * v).sum();
    (left, right)
}
