use nalgebra::DVector;

use crate::error::{Error, Result};

use super::system::DiscretePdae;

/// Strictly increasing time nodes on `[0, T]` with `nodes[0] = 0` and `nodes[last] = T`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeGrid {
    nodes: Vec<f64>,
}

impl TimeGrid {
    pub fn uniform(t_end: f64, n_steps: usize) -> Result<Self> {
        check_horizon(t_end)?;
        if n_steps == 0 {
            return Err(Error::InvalidArgument("n_steps must be positive".into()));
        }
        let mut nodes: Vec<f64> = (0..=n_steps)
            .map(|i| t_end * i as f64 / n_steps as f64)
            .collect();
        nodes[n_steps] = t_end;
        Ok(Self { nodes })
    }

    /// Uniform nodes merged with a geometric family that starts at `layer_width·1e-4`.
    ///
    /// Roughly half of the `n_steps` intervals resolve the initial layer of width
    /// `layer_width`; the rest keep the step bounded away from it.
    pub fn layer_graded(t_end: f64, layer_width: f64, n_steps: usize) -> Result<Self> {
        check_horizon(t_end)?;
        if !(layer_width > 0.0) || !layer_width.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "layer width must be positive, got {layer_width}"
            )));
        }
        if n_steps < 2 {
            return Err(Error::InvalidArgument(
                "graded grids need n_steps >= 2".into(),
            ));
        }
        let n_uniform = n_steps / 2;
        let n_geometric = n_steps - n_uniform;
        let start = (layer_width * 1e-4).min(t_end / n_steps as f64);
        let ratio = (t_end / start).ln() / (n_geometric - 1).max(1) as f64;

        let mut nodes = Vec::with_capacity(n_steps + 2);
        nodes.push(0.0);
        nodes.extend((0..n_geometric).map(|i| start * (ratio * i as f64).exp()));
        nodes.extend((1..=n_uniform).map(|i| t_end * i as f64 / n_uniform as f64));
        nodes.sort_by(f64::total_cmp);

        // Nodes closer than a quarter of the local geometric step are merged, so
        // interleaving the two families never produces a sliver step.
        let shrink = 0.25 * (1.0 - (-ratio).exp());
        let mut merged: Vec<f64> = Vec::with_capacity(nodes.len());
        for t in nodes {
            let t = t.min(t_end);
            match merged.last() {
                Some(&last) if t - last <= (shrink * t).max(1e-12 * t_end) => {}
                _ => merged.push(t),
            }
        }
        *merged.last_mut().unwrap() = t_end;
        Self::from_nodes(merged)
    }

    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::InvalidArgument(
                "a time grid needs at least two nodes".into(),
            ));
        }
        if nodes[0] != 0.0 {
            return Err(Error::InvalidArgument("time grid must start at 0".into()));
        }
        if let Some(w) = nodes
            .windows(2)
            .find(|w| !(w[1] > w[0]) || !w[1].is_finite())
        {
            return Err(Error::InvalidArgument(format!(
                "time nodes must increase strictly ({} -> {})",
                w[0], w[1]
            )));
        }
        Ok(Self { nodes })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn n_steps(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn t_end(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    pub fn step(&self, i: usize) -> f64 {
        self.nodes[i + 1] - self.nodes[i]
    }

    /// Composite trapezoid rule for samples given at the nodes.
    pub fn trapezoid(&self, values: &[f64]) -> f64 {
        assert_eq!(values.len(), self.nodes.len(), "trapezoid sample count");
        self.nodes
            .windows(2)
            .zip(values.windows(2))
            .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
            .sum()
    }

    /// Running trapezoid integral, `out[i] = ∫₀^{tᵢ}`.
    pub fn cumulative_trapezoid(&self, values: &[f64]) -> Vec<f64> {
        assert_eq!(values.len(), self.nodes.len(), "trapezoid sample count");
        let mut acc = 0.0;
        let mut out = Vec::with_capacity(values.len());
        out.push(0.0);
        for i in 0..self.n_steps() {
            acc += 0.5 * self.step(i) * (values[i] + values[i + 1]);
            out.push(acc);
        }
        out
    }

    /// Second-order derivative estimate at node `i` from node samples.
    pub fn derivative(&self, samples: &[DVector<f64>], i: usize) -> DVector<f64> {
        let t = &self.nodes;
        let n = t.len();
        if n == 2 {
            return (&samples[1] - &samples[0]) / (t[1] - t[0]);
        }
        // Three-point Lagrange stencil, one-sided at the ends.
        let (a, b, c) = match i {
            0 => (0, 1, 2),
            _ if i == n - 1 => (n - 3, n - 2, n - 1),
            _ => (i - 1, i, i + 1),
        };
        let x = t[i];
        let w = |j: usize, k: usize, l: usize| {
            ((x - t[k]) + (x - t[l])) / ((t[j] - t[k]) * (t[j] - t[l]))
        };
        &samples[a] * w(a, b, c) + &samples[b] * w(b, a, c) + &samples[c] * w(c, a, b)
    }
}

fn check_horizon(t_end: f64) -> Result<()> {
    if t_end > 0.0 && t_end.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "t_end must be positive, got {t_end}"
        )))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct State {
    pub t: f64,
    pub p: DVector<f64>,
    pub m: DVector<f64>,
    pub lambda: DVector<f64>,
}

impl State {
    pub fn new(t: f64, p: DVector<f64>, m: DVector<f64>, lambda: DVector<f64>) -> Self {
        Self { t, p, m, lambda }
    }

    pub fn zeros(sys: &DiscretePdae) -> Self {
        Self::new(
            0.0,
            DVector::zeros(sys.dim_p()),
            DVector::zeros(sys.dim_m()),
            DVector::zeros(sys.dim_q()),
        )
    }

    /// Initial state with zero multiplier.
    pub fn initial(p: DVector<f64>, m: DVector<f64>, dim_q: usize) -> Self {
        Self::new(0.0, p, m, DVector::zeros(dim_q))
    }

    pub fn is_finite(&self) -> bool {
        self.p
            .iter()
            .chain(self.m.iter())
            .chain(self.lambda.iter())
            .all(|x| x.is_finite())
    }

    pub(crate) fn check_dims(&self, sys: &DiscretePdae) -> Result<()> {
        if self.p.len() != sys.dim_p() {
            return Err(Error::dims("state p", sys.dim_p(), self.p.len()));
        }
        if self.m.len() != sys.dim_m() {
            return Err(Error::dims("state m", sys.dim_m(), self.m.len()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    grid: TimeGrid,
    states: Vec<State>,
}

impl Trajectory {
    pub fn new(grid: TimeGrid, states: Vec<State>) -> Result<Self> {
        if states.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} states for {} nodes",
                states.len(),
                grid.len()
            )));
        }
        if let Some((i, s)) = states
            .iter()
            .enumerate()
            .find(|(i, s)| s.t != grid.nodes()[*i])
        {
            return Err(Error::GridMismatch(format!(
                "state {i} at t = {} but node is {}",
                s.t,
                grid.nodes()[i]
            )));
        }
        let first = &states[0];
        let shape = (first.p.len(), first.m.len(), first.lambda.len());
        if states
            .iter()
            .any(|s| (s.p.len(), s.m.len(), s.lambda.len()) != shape)
        {
            return Err(Error::InvalidArgument(
                "trajectory states differ in dimension".into(),
            ));
        }
        Ok(Self { grid, states })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }

    pub fn last(&self) -> &State {
        self.states.last().unwrap()
    }

    pub fn same_grid(&self, other: &Trajectory) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch(
                "trajectories live on different grids".into(),
            ))
        }
    }

    /// Node-wise `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &Trajectory, b: f64) -> Result<Trajectory> {
        self.same_grid(other)?;
        let states = self
            .states
            .iter()
            .zip(&other.states)
            .map(|(x, y)| {
                State::new(
                    x.t,
                    &x.p * a + &y.p * b,
                    &x.m * a + &y.m * b,
                    &x.lambda * a + &y.lambda * b,
                )
            })
            .collect();
        Trajectory::new(self.grid.clone(), states)
    }

    /// Node-wise `self − other`.
    pub fn difference(&self, other: &Trajectory) -> Result<Trajectory> {
        self.combine(1.0, other, -1.0)
    }
}

/// Right-hand sides `g`, `f`, `h` sampled on the solver's grid.
#[derive(Clone, Debug, Default, PartialEq)]
pub enum ForcingSpec {
    #[default]
    Zero,
    Sampled {
        g: Vec<DVector<f64>>,
        f: Vec<DVector<f64>>,
        h: Vec<DVector<f64>>,
    },
}

impl ForcingSpec {
    pub fn validate(&self, sys: &DiscretePdae, grid: &TimeGrid) -> Result<()> {
        let ForcingSpec::Sampled { g, f, h } = self else {
            return Ok(());
        };
        for (name, samples, dim) in [
            ("g", g, sys.dim_p()),
            ("f", f, sys.dim_m()),
            ("h", h, sys.dim_q()),
        ] {
            if samples.len() != grid.len() {
                return Err(Error::GridMismatch(format!(
                    "forcing {name} has {} samples for {} nodes",
                    samples.len(),
                    grid.len()
                )));
            }
            if let Some(v) = samples.iter().find(|v| v.len() != dim) {
                return Err(Error::dims("forcing sample", dim, v.len()));
            }
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, ForcingSpec::Zero)
    }

    pub fn g(&self, i: usize, dim: usize) -> DVector<f64> {
        match self {
            ForcingSpec::Zero => DVector::zeros(dim),
            ForcingSpec::Sampled { g, .. } => g[i].clone(),
        }
    }

    pub fn f(&self, i: usize, dim: usize) -> DVector<f64> {
        match self {
            ForcingSpec::Zero => DVector::zeros(dim),
            ForcingSpec::Sampled { f, .. } => f[i].clone(),
        }
    }

    pub fn h(&self, i: usize, dim: usize) -> DVector<f64> {
        match self {
            ForcingSpec::Zero => DVector::zeros(dim),
            ForcingSpec::Sampled { h, .. } => h[i].clone(),
        }
    }

    pub fn f_dot(&self, grid: &TimeGrid, i: usize, dim: usize) -> DVector<f64> {
        match self {
            ForcingSpec::Zero => DVector::zeros(dim),
            ForcingSpec::Sampled { f, .. } => grid.derivative(f, i),
        }
    }

    pub fn h_dot(&self, grid: &TimeGrid, i: usize, dim: usize) -> DVector<f64> {
        match self {
            ForcingSpec::Zero => DVector::zeros(dim),
            ForcingSpec::Sampled { h, .. } => grid.derivative(h, i),
        }
    }
}
