//! Space-time (Bochner) norms of trajectory differences.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::SparseMatrix;
use crate::pdae_core::{DiscretePdae, TimeGrid, Trajectory};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Measure {
    /// `p − p₀` in `L∞(L²)`.
    PLinfL2,
    /// `p − p₀` in `L²(H¹)`.
    PL2H1,
    /// `m − m₀` in `L²(L²)`.
    ML2L2,
    /// `√ε (m − m₀)` in `L∞(L²)`.
    MSqrtEpsLinfL2,
    /// `λ − λ₀` in `L²(ℝ^q)`.
    LambdaL2,
    /// `p − p̂` in `L∞(L²)`.
    PhatLinfL2,
    /// `p − p̂` in `L²(H¹)`.
    PhatL2H1,
    /// `m − m̂` in `L²(L²)`.
    MhatL2L2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reference {
    Limit,
    Hat,
}

impl Measure {
    pub const ALL: [Measure; 8] = [
        Measure::PLinfL2,
        Measure::PL2H1,
        Measure::ML2L2,
        Measure::MSqrtEpsLinfL2,
        Measure::LambdaL2,
        Measure::PhatLinfL2,
        Measure::PhatL2H1,
        Measure::MhatL2L2,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Measure::PLinfL2 => "p_linf_l2",
            Measure::PL2H1 => "p_l2_h1",
            Measure::ML2L2 => "m_l2_l2",
            Measure::MSqrtEpsLinfL2 => "m_sqrteps_linf_l2",
            Measure::LambdaL2 => "lambda_l2",
            Measure::PhatLinfL2 => "phat_linf_l2",
            Measure::PhatL2H1 => "phat_l2_h1",
            Measure::MhatL2L2 => "mhat_l2_l2",
        }
    }

    pub fn reference(self) -> Reference {
        match self {
            Measure::PhatLinfL2 | Measure::PhatL2H1 | Measure::MhatL2L2 => Reference::Hat,
            _ => Reference::Limit,
        }
    }

    pub fn needs_hat(self) -> bool {
        self.reference() == Reference::Hat
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Measure::ALL
            .into_iter()
            .find(|m| m.as_str() == s.trim())
            .ok_or_else(|| Error::InvalidArgument(format!("unknown measure {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorRow {
    pub n: usize,
    pub eps: f64,
    pub measure: Measure,
    pub value: f64,
}

/// Error values keyed by `(n, ε, measure)`, kept in insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ErrorTable {
    rows: Vec<ErrorRow>,
}

impl ErrorTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_rows(rows: Vec<ErrorRow>) -> Result<Self> {
        let mut table = Self::new();
        for r in rows {
            table.push(r)?;
        }
        Ok(table)
    }

    pub fn push(&mut self, row: ErrorRow) -> Result<()> {
        if !row.value.is_finite() || row.value < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "error value must be finite and nonnegative, got {}",
                row.value
            )));
        }
        if self
            .rows
            .iter()
            .any(|r| r.n == row.n && r.eps == row.eps && r.measure == row.measure)
        {
            return Err(Error::InvalidArgument(format!(
                "duplicate row (n = {}, eps = {}, {})",
                row.n, row.eps, row.measure
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn rows(&self) -> &[ErrorRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Distinct `(n, measure)` pairs in order of first appearance.
    pub fn series_keys(&self) -> Vec<(usize, Measure)> {
        let mut seen = HashSet::new();
        self.rows
            .iter()
            .map(|r| (r.n, r.measure))
            .filter(|k| seen.insert(*k))
            .collect()
    }

    /// `(ε, value)` pairs of one series, sorted by decreasing `ε`.
    pub fn series(&self, n: usize, measure: Measure) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = self
            .rows
            .iter()
            .filter(|r| r.n == n && r.measure == measure)
            .map(|r| (r.eps, r.value))
            .collect();
        out.sort_by(|a, b| b.0.total_cmp(&a.0));
        out
    }

    pub fn value(&self, n: usize, eps: f64, measure: Measure) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.n == n && r.eps == eps && r.measure == measure)
            .map(|r| r.value)
    }
}

fn sq_norms<'a>(
    values: impl IntoIterator<Item = &'a DVector<f64>>,
    gram: &SparseMatrix,
) -> Vec<f64> {
    values
        .into_iter()
        .map(|v| gram.quad_form(v).max(0.0))
        .collect()
}

/// `max_i √(vᵢᵀ G vᵢ)`.
pub fn bochner_linf<'a>(
    values: impl IntoIterator<Item = &'a DVector<f64>>,
    gram: &SparseMatrix,
) -> f64 {
    sq_norms(values, gram)
        .into_iter()
        .fold(0.0, f64::max)
        .sqrt()
}

/// `√(∫ vᵀ G v dt)` with the trapezoid rule on `grid`.
pub fn bochner_l2<'a>(
    values: impl IntoIterator<Item = &'a DVector<f64>>,
    gram: &SparseMatrix,
    grid: &TimeGrid,
) -> f64 {
    grid.trapezoid(&sq_norms(values, gram)).max(0.0).sqrt()
}

/// Reference trajectories an ε-solution is compared against.
#[derive(Clone, Copy, Debug, Default)]
pub struct References<'a> {
    pub limit: Option<&'a Trajectory>,
    pub hat: Option<&'a Trajectory>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorReport {
    pub values: BTreeMap<Measure, f64>,
    /// `λ − λ₀` computed from the stored multiplier nodes.
    pub lambda_direct: Option<f64>,
    /// `|direct − canonical|` for the multiplier error.
    pub lambda_gap: Option<f64>,
}

/// Evaluates the requested measures of `traj_eps` against the references.
///
/// The multiplier error is canonically `Λ(m − m₀)` with `Λ = S⁻¹BG_H⁻¹Kᵀ`; the
/// difference of the stored multipliers is reported alongside as a diagnostic.
pub fn error_report(
    sys: &DiscretePdae,
    traj_eps: &Trajectory,
    refs: References<'_>,
    eps: f64,
    measures: &[Measure],
) -> Result<ErrorReport> {
    let mut values = BTreeMap::new();
    let mut lambda_direct = None;
    let mut lambda_gap = None;
    let grid = traj_eps.grid();

    let limit_diff = diff_against(traj_eps, refs.limit, measures, Reference::Limit)?;
    let hat_diff = diff_against(traj_eps, refs.hat, measures, Reference::Hat)?;

    for &measure in measures {
        let diff = match measure.reference() {
            Reference::Limit => limit_diff.as_ref(),
            Reference::Hat => hat_diff.as_ref(),
        }
        .expect("references checked above");
        let ps = || diff.states().iter().map(|s| &s.p);
        let ms = || diff.states().iter().map(|s| &s.m);
        let value = match measure {
            Measure::PLinfL2 | Measure::PhatLinfL2 => bochner_linf(ps(), sys.g_h()),
            Measure::PL2H1 | Measure::PhatL2H1 => bochner_l2(ps(), sys.g_p(), grid),
            Measure::ML2L2 | Measure::MhatL2L2 => bochner_l2(ms(), sys.g_m(), grid),
            Measure::MSqrtEpsLinfL2 => eps.sqrt() * bochner_linf(ms(), sys.g_m()),
            Measure::LambdaL2 => {
                let id = SparseMatrix::identity(sys.dim_q());
                let mapped: Vec<DVector<f64>> = ms()
                    .map(|m| sys.multipliers().apply_lambda_map(m))
                    .collect();
                let canonical = bochner_l2(&mapped, &id, grid);
                let direct = bochner_l2(diff.states().iter().map(|s| &s.lambda), &id, grid);
                lambda_direct = Some(direct);
                lambda_gap = Some((direct - canonical).abs());
                canonical
            }
        };
        values.insert(measure, value);
    }
    Ok(ErrorReport {
        values,
        lambda_direct,
        lambda_gap,
    })
}

fn diff_against(
    traj: &Trajectory,
    reference: Option<&Trajectory>,
    measures: &[Measure],
    kind: Reference,
) -> Result<Option<Trajectory>> {
    let Some(first) = measures.iter().find(|m| m.reference() == kind) else {
        return Ok(None);
    };
    let reference = reference.ok_or(Error::MissingReference {
        measure: first.as_str(),
        reference: match kind {
            Reference::Limit => "limit",
            Reference::Hat => "hat",
        },
    })?;
    traj.difference(reference).map(Some)
}
