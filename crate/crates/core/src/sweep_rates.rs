//! ε-sweeps over the pipe model and median-slope rate estimation.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use rayon::prelude::*;

use crate::epsilon_expansion::{
    exact_correction_trajectories, exact_mode_trajectories, hat_solution, solve_correction_system,
    solve_limit_system,
};
use crate::error::{Error, Result};
use crate::error_metrics::{error_report, ErrorRow, ErrorTable, Measure, References};
use crate::pdae_core::{solve_eps_system, DiscretePdae, ForcingSpec, State, TimeGrid, Trajectory};
use crate::pipe_model::{build_pipe_system, initial_data, InitialDataPreset};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Integrator {
    /// Closed-form mode-wise solution of the pipe model.
    #[default]
    ExactMode,
    /// Implicit midpoint on the assembled saddle system.
    ImplicitMidpoint,
}

impl fmt::Display for Integrator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Integrator::ExactMode => "exact",
            Integrator::ImplicitMidpoint => "midpoint",
        })
    }
}

/// Time grid used for every ε of a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum GridKind {
    Uniform,
    /// Half of the nodes cluster geometrically in the initial layer of width ε.
    #[default]
    LayerGraded,
}

impl FromStr for GridKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "uniform" => Ok(GridKind::Uniform),
            "graded" => Ok(GridKind::LayerGraded),
            other => Err(Error::InvalidArgument(format!(
                "unknown grid {other:?} (expected uniform or graded)"
            ))),
        }
    }
}

impl fmt::Display for GridKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GridKind::Uniform => "uniform",
            GridKind::LayerGraded => "graded",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub n_list: Vec<usize>,
    pub j_max: usize,
    pub preset: InitialDataPreset,
    pub measures: Vec<Measure>,
    pub t_end: f64,
    pub n_steps: usize,
    pub integrator: Integrator,
    pub grid: GridKind,
}

pub const DEFAULT_N_LIST: [usize; 9] = [1, 2, 4, 8, 16, 32, 64, 128, 256];

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            n_list: DEFAULT_N_LIST.to_vec(),
            j_max: 30,
            preset: InitialDataPreset::Data42,
            measures: Vec::new(),
            t_end: 1.0,
            n_steps: 2000,
            integrator: Integrator::ExactMode,
            grid: GridKind::LayerGraded,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_list.is_empty() {
            return Err(Error::InvalidArgument("n_list must not be empty".into()));
        }
        if self.n_list[0] == 0 || self.n_list.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(
                "n_list must be positive and strictly ascending".into(),
            ));
        }
        if self.j_max < 2 {
            return Err(Error::InvalidArgument("j_max must be at least 2".into()));
        }
        if !(self.t_end > 0.0) || !self.t_end.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "t_end must be positive, got {}",
                self.t_end
            )));
        }
        if self.n_steps < 2 {
            return Err(Error::InvalidArgument("n_steps must be at least 2".into()));
        }
        let mut seen = self.measures.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.measures.len() {
            return Err(Error::InvalidArgument("measures must be distinct".into()));
        }
        Ok(())
    }

    fn grid_for(&self, eps: f64) -> Result<TimeGrid> {
        match self.grid {
            GridKind::Uniform => TimeGrid::uniform(self.t_end, self.n_steps),
            GridKind::LayerGraded => TimeGrid::layer_graded(self.t_end, eps, self.n_steps),
        }
    }
}

/// `ε_j = 2^{−3−j/2}` for `j = 1, …, j_max`, evaluated without rounding in the exponent.
pub fn epsilon_grid(j_max: usize) -> Vec<f64> {
    (1..=j_max)
        .map(|j| {
            let base = 2f64.powi(-3 - (j as i32 + 1) / 2);
            if j % 2 == 0 {
                base
            } else {
                base * std::f64::consts::SQRT_2
            }
        })
        .collect()
}

struct Refs {
    limit: Trajectory,
    correction: Option<Trajectory>,
}

fn references(
    sys: &DiscretePdae,
    config: &SweepConfig,
    p0: &DVector<f64>,
    grid: &TimeGrid,
) -> Result<Refs> {
    let need_hat = config.measures.iter().any(|m| m.needs_hat());
    let m_unused = DVector::zeros(sys.dim_m());
    match config.integrator {
        Integrator::ExactMode => Ok(Refs {
            limit: exact_mode_trajectories(sys, 0.0, p0, &m_unused, grid)?,
            correction: need_hat
                .then(|| exact_correction_trajectories(sys, p0, grid))
                .transpose()?,
        }),
        Integrator::ImplicitMidpoint => {
            let limit = solve_limit_system(sys, p0, grid, &ForcingSpec::Zero)?;
            let correction = need_hat
                .then(|| solve_correction_system(sys, &limit, grid, &ForcingSpec::Zero))
                .transpose()?;
            Ok(Refs { limit, correction })
        }
    }
}

/// Runs every `(n, ε)` combination and collects the requested measures. Rows are ordered
/// by `n`, then `j`, then the order of `config.measures`, independent of scheduling.
pub fn run_sweep(config: &SweepConfig) -> Result<ErrorTable> {
    config.validate()?;
    let mut table = ErrorTable::new();
    if config.measures.is_empty() {
        return Ok(table);
    }
    let eps_list = epsilon_grid(config.j_max);
    for &n in &config.n_list {
        let sys = build_pipe_system(n)?;
        let (p0, m0) = initial_data(config.preset, n)?;
        let shared = match config.grid {
            GridKind::Uniform => {
                let grid = config.grid_for(eps_list[0])?;
                Some(references(&sys, config, &p0, &grid).map_err(|e| annotate(e, n, 0.0))?)
            }
            GridKind::LayerGraded => None,
        };
        let rows: Vec<Vec<ErrorRow>> = eps_list
            .par_iter()
            .map(|&eps| {
                sweep_point(&sys, config, &p0, &m0, eps, shared.as_ref())
                    .map_err(|e| annotate(e, n, eps))
            })
            .collect::<Result<_>>()?;
        for row in rows.into_iter().flatten() {
            table.push(row)?;
        }
    }
    Ok(table)
}

fn annotate(e: Error, n: usize, eps: f64) -> Error {
    Error::Sweep {
        n,
        eps,
        source: Box::new(e),
    }
}

fn sweep_point(
    sys: &DiscretePdae,
    config: &SweepConfig,
    p0: &DVector<f64>,
    m0: &DVector<f64>,
    eps: f64,
    shared: Option<&Refs>,
) -> Result<Vec<ErrorRow>> {
    let grid = config.grid_for(eps)?;
    let owned;
    let refs = match shared {
        Some(r) => r,
        None => {
            owned = references(sys, config, p0, &grid)?;
            &owned
        }
    };
    let traj = match config.integrator {
        Integrator::ExactMode => exact_mode_trajectories(sys, eps, p0, m0, &grid)?,
        Integrator::ImplicitMidpoint => {
            let init = State::initial(p0.clone(), m0.clone(), sys.dim_q());
            solve_eps_system(sys, &init, eps, &grid, &ForcingSpec::Zero)?
        }
    };
    let hat = refs
        .correction
        .as_ref()
        .map(|c| hat_solution(&refs.limit, c, eps))
        .transpose()?;
    let report = error_report(
        sys,
        &traj,
        References {
            limit: Some(&refs.limit),
            hat: hat.as_ref(),
        },
        eps,
        &config.measures,
    )?;
    Ok(config
        .measures
        .iter()
        .map(|&measure| ErrorRow {
            n: sys.dim_m() - 1,
            eps,
            measure,
            value: report.values[&measure],
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateRow {
    pub n: usize,
    pub measure: Measure,
    pub alpha: f64,
    /// Slopes between successive ε; `NaN` where an endpoint value was not positive.
    pub slopes: Vec<f64>,
    /// Indices (in decreasing-ε order) of values excluded as nonpositive.
    pub excluded: Vec<usize>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RateTable {
    pub rows: Vec<RateRow>,
}

impl RateTable {
    pub fn alpha(&self, n: usize, measure: Measure) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.n == n && r.measure == measure)
            .map(|r| r.alpha)
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Distinct measures in order of first appearance.
    pub fn measures(&self) -> Vec<Measure> {
        let mut out: Vec<Measure> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.measure) {
                out.push(r.measure);
            }
        }
        out
    }
}

/// Median with the mean of the central pair for even counts.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    })
}

/// Fits `err = C(n) ε^α` per `(n, measure)` by the median of successive log-log slopes.
pub fn estimate_rates(errors: &ErrorTable) -> Result<RateTable> {
    let mut rows = Vec::new();
    for (n, measure) in errors.series_keys() {
        let series = errors.series(n, measure);
        let excluded: Vec<usize> = series
            .iter()
            .enumerate()
            .filter(|(_, (_, v))| !(*v > 0.0))
            .map(|(i, _)| i)
            .collect();
        let valid = series.len() - excluded.len();
        if valid < 3 {
            return Err(Error::InsufficientData {
                n,
                measure: measure.as_str(),
                valid,
            });
        }
        let slopes: Vec<f64> = series
            .windows(2)
            .map(|w| {
                let ((e0, v0), (e1, v1)) = (w[0], w[1]);
                if v0 > 0.0 && v1 > 0.0 {
                    (v1.ln() - v0.ln()) / (e1.ln() - e0.ln())
                } else {
                    f64::NAN
                }
            })
            .collect();
        let finite: Vec<f64> = slopes.iter().copied().filter(|s| s.is_finite()).collect();
        let alpha = median(&finite).ok_or(Error::InsufficientData {
            n,
            measure: measure.as_str(),
            valid,
        })?;
        rows.push(RateRow {
            n,
            measure,
            alpha,
            slopes,
            excluded,
        });
    }
    Ok(RateTable { rows })
}

/// Sweep configuration of one of the four packaged experiments (ids 2 to 5).
pub fn figure_preset(id: u32) -> Result<SweepConfig> {
    use Measure::*;
    let (preset, measures) = match id {
        2 => (
            InitialDataPreset::Data42,
            vec![PLinfL2, PL2H1, ML2L2, LambdaL2],
        ),
        3 => (
            InitialDataPreset::Data43,
            vec![PLinfL2, MSqrtEpsLinfL2, ML2L2, LambdaL2],
        ),
        4 => (
            InitialDataPreset::Data44,
            vec![PLinfL2, PL2H1, MSqrtEpsLinfL2, ML2L2, LambdaL2],
        ),
        5 => (
            InitialDataPreset::Data45,
            vec![PhatLinfL2, PhatL2H1, MhatL2L2],
        ),
        other => {
            return Err(Error::InvalidArgument(format!(
                "figure id must be 2, 3, 4 or 5, got {other}"
            )))
        }
    };
    Ok(SweepConfig {
        preset,
        measures,
        ..SweepConfig::default()
    })
}
