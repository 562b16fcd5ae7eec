//! Compressed sparse row storage and the direct solvers used by the PDAE integrators.
//!
//! Two factorization strategies are available. Small systems are converted to dense
//! storage and factorized with LU (or Cholesky for Gram matrices). Large systems are
//! factorized by block elimination: a small *border* index set is chosen so that the
//! remaining *interior* unknowns split into tiny decoupled blocks, and the border is
//! solved through a dense Schur complement. The spectral pipe matrices (sine modes
//! coupled only through the two exponential enrichment functions and the trace
//! multipliers) have exactly this arrowhead shape.

use std::collections::VecDeque;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, LU};

use crate::error::{Error, Result};

/// Dense factorization is used up to this matrix order.
pub const DENSE_LIMIT: usize = 4097;

const MAX_BLOCK: usize = 8;
const MAX_BORDER: usize = 64;
const PIVOT_RATIO_TOL: f64 = 1e-14;

#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            row_ptr: vec![0; nrows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n])
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        Self::from_triplets(n, n, diag.iter().enumerate().map(|(i, &v)| (i, i, v)))
    }

    /// Builds a matrix from `(row, col, value)` entries. Duplicates are summed and exact
    /// zeros are dropped, so the sparsity pattern reflects the true structure.
    pub fn from_triplets<I>(nrows: usize, ncols: usize, entries: I) -> Self
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nrows];
        for (i, j, v) in entries {
            assert!(i < nrows && j < ncols, "triplet ({i}, {j}) out of bounds");
            rows[i].push((j, v));
        }
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(j, _)| j);
            let mut k = 0;
            while k < row.len() {
                let j = row[k].0;
                let mut sum = 0.0;
                while k < row.len() && row[k].0 == j {
                    sum += row[k].1;
                    k += 1;
                }
                if sum != 0.0 {
                    col_idx.push(j);
                    values.push(sum);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let (r, c) = m.shape();
        let entries = (0..r).flat_map(|i| (0..c).map(move |j| (i, j, m[(i, j)])));
        Self::from_triplets(r, c, entries)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.triplets() {
            d[(i, j)] = v;
        }
        d
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nrows, self.ncols)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[range.clone()].binary_search(&j) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn transpose(&self) -> Self {
        Self::from_triplets(
            self.ncols,
            self.nrows,
            self.triplets().map(|(i, j, v)| (j, i, v)),
        )
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        if s == 0.0 {
            return Self::zeros(self.nrows, self.ncols);
        }
        out
    }

    /// `Σ cᵢ·Aᵢ` over matrices of a common shape.
    pub fn linear_combination(terms: &[(f64, &SparseMatrix)]) -> Self {
        let (r, c) = terms.first().map(|(_, m)| m.shape()).unwrap_or((0, 0));
        for (_, m) in terms {
            assert_eq!(m.shape(), (r, c), "linear_combination shape mismatch");
        }
        let entries = terms
            .iter()
            .flat_map(|&(s, m)| m.triplets().map(move |(i, j, v)| (i, j, s * v)));
        Self::from_triplets(r, c, entries)
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.ncols, "mul_vec dimension mismatch");
        DVector::from_iterator(
            self.nrows,
            (0..self.nrows).map(|i| self.row(i).map(|(j, v)| v * x[j]).sum()),
        )
    }

    /// `Aᵀx` without forming the transpose.
    pub fn tr_mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.nrows, "tr_mul_vec dimension mismatch");
        let mut y = DVector::zeros(self.ncols);
        for (i, j, v) in self.triplets() {
            y[j] += v * x[i];
        }
        y
    }

    pub fn mul(&self, rhs: &SparseMatrix) -> SparseMatrix {
        assert_eq!(self.ncols, rhs.nrows, "sparse product dimension mismatch");
        let entries = (0..self.nrows).flat_map(|i| {
            self.row(i)
                .flat_map(move |(k, a)| rhs.row(k).map(move |(j, b)| (i, j, a * b)))
        });
        Self::from_triplets(self.nrows, rhs.ncols, entries)
    }

    /// `xᵀAx`.
    pub fn quad_form(&self, x: &DVector<f64>) -> f64 {
        (0..self.nrows)
            .map(|i| x[i] * self.row(i).map(|(j, v)| v * x[j]).sum::<f64>())
            .sum()
    }

    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        if self.nrows != self.ncols {
            return false;
        }
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        self.triplets()
            .all(|(i, j, v)| (v - self.get(j, i)).abs() <= rel_tol * scale)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Assembles a block matrix. `blocks[r][c]` is `None` for a zero block; row and
    /// column block sizes are given explicitly.
    pub fn block(
        row_sizes: &[usize],
        col_sizes: &[usize],
        blocks: &[&[Option<&SparseMatrix>]],
    ) -> Self {
        let row_off: Vec<usize> = offsets(row_sizes);
        let col_off: Vec<usize> = offsets(col_sizes);
        let mut entries = Vec::new();
        for (br, row) in blocks.iter().enumerate() {
            for (bc, blk) in row.iter().enumerate() {
                if let Some(m) = blk {
                    assert_eq!(m.shape(), (row_sizes[br], col_sizes[bc]), "block shape");
                    entries.extend(
                        m.triplets()
                            .map(|(i, j, v)| (i + row_off[br], j + col_off[bc], v)),
                    );
                }
            }
        }
        Self::from_triplets(row_off[row_sizes.len()], col_off[col_sizes.len()], entries)
    }
}

fn offsets(sizes: &[usize]) -> Vec<usize> {
    let mut off = vec![0];
    for s in sizes {
        off.push(off.last().unwrap() + s);
    }
    off
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Strategy {
    /// Dense below [`DENSE_LIMIT`], block elimination above.
    #[default]
    Auto,
    Dense,
    Bordered,
}

/// A reusable direct solver for one square matrix.
#[derive(Clone, Debug)]
pub struct Factorization {
    n: usize,
    kind: FactorKind,
}

#[derive(Clone, Debug)]
enum FactorKind {
    Lu(DenseLu),
    Cholesky(Cholesky<f64, Dyn>),
    Bordered(Box<BorderedFactor>),
}

impl Factorization {
    /// General (possibly indefinite, nonsymmetric) matrix. Indices in `pinned` are
    /// always placed in the border of a block elimination; use it for unknowns with a
    /// zero diagonal such as Lagrange multipliers.
    pub fn general(a: &SparseMatrix, pinned: &[usize], strategy: Strategy) -> Result<Self> {
        let n = square(a)?;
        let kind = match resolve(strategy, n) {
            Strategy::Dense => FactorKind::Lu(dense_lu(&a.to_dense())?),
            _ => FactorKind::Bordered(Box::new(BorderedFactor::new(a, pinned)?)),
        };
        Ok(Self { n, kind })
    }

    /// Symmetric positive-definite matrix; the dense path uses Cholesky and fails if the
    /// matrix is not positive definite.
    pub fn spd(a: &SparseMatrix, strategy: Strategy) -> Result<Self> {
        let n = square(a)?;
        let kind = match resolve(strategy, n) {
            Strategy::Dense => FactorKind::Cholesky(
                Cholesky::new(a.to_dense())
                    .ok_or(Error::SingularSystem("not positive definite"))?,
            ),
            _ => FactorKind::Bordered(Box::new(BorderedFactor::new(a, &[])?)),
        };
        Ok(Self { n, kind })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn is_dense(&self) -> bool {
        !matches!(self.kind, FactorKind::Bordered(_))
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        assert_eq!(rhs.len(), self.n, "solve dimension mismatch");
        match &self.kind {
            FactorKind::Lu(lu) => lu
                .solve(rhs)
                .expect("factorization checked at construction"),
            FactorKind::Cholesky(ch) => ch.solve(rhs),
            FactorKind::Bordered(b) => b.solve(rhs),
        }
    }

    /// Solves for every column of a dense right-hand side.
    pub fn solve_columns(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(rhs.nrows(), rhs.ncols());
        for c in 0..rhs.ncols() {
            let col = self.solve(&rhs.column(c).into_owned());
            out.set_column(c, &col);
        }
        out
    }
}

fn square(a: &SparseMatrix) -> Result<usize> {
    if a.nrows() != a.ncols() {
        return Err(Error::dims("square matrix", a.nrows(), a.ncols()));
    }
    Ok(a.nrows())
}

fn resolve(strategy: Strategy, n: usize) -> Strategy {
    match strategy {
        Strategy::Auto if n <= DENSE_LIMIT => Strategy::Dense,
        Strategy::Auto => Strategy::Bordered,
        s => s,
    }
}

/// LU of `R A C` with power-of-two row and column scalings `R`, `C`, so the pivot
/// test measures conditioning rather than the units of the unknowns.
#[derive(Clone, Debug)]
struct DenseLu {
    lu: LU<f64, Dyn, Dyn>,
    row: DVector<f64>,
    col: DVector<f64>,
}

impl DenseLu {
    fn solve(&self, b: &DVector<f64>) -> Option<DVector<f64>> {
        let x = self.lu.solve(&b.component_mul(&self.row))?;
        Some(x.component_mul(&self.col))
    }

    fn solve_matrix(&self, b: &DMatrix<f64>) -> Option<DMatrix<f64>> {
        let mut scaled = b.clone();
        for (i, mut r) in scaled.row_iter_mut().enumerate() {
            r *= self.row[i];
        }
        let mut x = self.lu.solve(&scaled)?;
        for (i, mut r) in x.row_iter_mut().enumerate() {
            r *= self.col[i];
        }
        Some(x)
    }
}

fn pow2_inverse(m: f64) -> f64 {
    if m > 0.0 && m.is_finite() {
        2f64.powi(-m.log2().round() as i32)
    } else {
        1.0
    }
}

fn dense_lu(a: &DMatrix<f64>) -> Result<DenseLu> {
    let n = a.nrows();
    let row = DVector::from_iterator(n, a.row_iter().map(|r| pow2_inverse(r.amax())));
    let mut scaled = a.clone();
    for (i, mut r) in scaled.row_iter_mut().enumerate() {
        r *= row[i];
    }
    let col = DVector::from_iterator(n, scaled.column_iter().map(|c| pow2_inverse(c.amax())));
    for (j, mut c) in scaled.column_iter_mut().enumerate() {
        c *= col[j];
    }
    let lu = scaled.lu();
    if n > 0 {
        let u = lu.u();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for i in 0..n {
            let d = u[(i, i)].abs();
            lo = lo.min(d);
            hi = hi.max(d);
        }
        if !(hi > 0.0) || !(lo > PIVOT_RATIO_TOL * hi) {
            return Err(Error::SingularSystem("vanishing LU pivot"));
        }
    }
    Ok(DenseLu { lu, row, col })
}

#[derive(Clone, Debug)]
struct InteriorBlock {
    indices: Vec<usize>,
    lu: DenseLu,
    /// `A_II⁻¹ A_IB` restricted to this block (rows) and all border columns.
    coupling: DMatrix<f64>,
}

#[derive(Clone, Debug)]
struct BorderedFactor {
    n: usize,
    border: Vec<usize>,
    /// Interior entries of the border rows: `(border row, column, value)`.
    border_rows: Vec<Vec<(usize, f64)>>,
    blocks: Vec<InteriorBlock>,
    schur: DenseLu,
}

impl BorderedFactor {
    fn new(a: &SparseMatrix, pinned: &[usize]) -> Result<Self> {
        let n = a.nrows();
        let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (i, j, _) in a.triplets() {
            if i != j {
                adjacency[i].push(j);
                adjacency[j].push(i);
            }
        }
        for adj in adjacency.iter_mut() {
            adj.sort_unstable();
            adj.dedup();
        }

        let mut in_border = vec![false; n];
        for &p in pinned {
            in_border[p] = true;
        }
        loop {
            let components = interior_components(&adjacency, &in_border);
            if components.iter().all(|c| c.len() <= MAX_BLOCK) {
                match Self::assemble(a, &in_border, &components) {
                    Ok(f) => return Ok(f),
                    Err(singular) => {
                        // A singular interior block joins the border.
                        for i in singular {
                            in_border[i] = true;
                        }
                    }
                }
            } else {
                let worst = (0..n)
                    .filter(|&i| !in_border[i])
                    .max_by_key(|&i| adjacency[i].iter().filter(|&&j| !in_border[j]).count())
                    .expect("non-empty interior");
                in_border[worst] = true;
            }
            if in_border.iter().filter(|&&b| b).count() > MAX_BORDER {
                return Err(Error::InvalidSystem(
                    "matrix has no bordered block-diagonal structure; use a dense factorization"
                        .into(),
                ));
            }
        }
    }

    /// Returns the indices of a singular interior block on failure.
    fn assemble(
        a: &SparseMatrix,
        in_border: &[bool],
        components: &[Vec<usize>],
    ) -> std::result::Result<Self, Vec<usize>> {
        let n = a.nrows();
        let border: Vec<usize> = (0..n).filter(|&i| in_border[i]).collect();
        let b = border.len();
        let mut border_pos = vec![usize::MAX; n];
        for (k, &i) in border.iter().enumerate() {
            border_pos[i] = k;
        }

        let mut blocks = Vec::with_capacity(components.len());
        for comp in components {
            let m = comp.len();
            let mut local = DMatrix::zeros(m, m);
            let mut a_ib = DMatrix::zeros(m, b);
            for (r, &i) in comp.iter().enumerate() {
                for (j, v) in a.row(i) {
                    if in_border[j] {
                        a_ib[(r, border_pos[j])] = v;
                    } else if let Some(c) = comp.iter().position(|&x| x == j) {
                        local[(r, c)] = v;
                    }
                }
            }
            let lu = dense_lu(&local).map_err(|_| comp.clone())?;
            let coupling = lu.solve_matrix(&a_ib).ok_or_else(|| comp.clone())?;
            blocks.push(InteriorBlock {
                indices: comp.clone(),
                lu,
                coupling,
            });
        }

        let mut coupling_row: Vec<(usize, usize)> = vec![(usize::MAX, 0); n];
        for (bi, blk) in blocks.iter().enumerate() {
            for (r, &i) in blk.indices.iter().enumerate() {
                coupling_row[i] = (bi, r);
            }
        }

        let mut schur = DMatrix::zeros(b, b);
        let mut border_rows = Vec::with_capacity(b);
        for (k, &i) in border.iter().enumerate() {
            let mut interior = Vec::new();
            for (j, v) in a.row(i) {
                if in_border[j] {
                    schur[(k, border_pos[j])] += v;
                } else {
                    interior.push((j, v));
                    let (bi, r) = coupling_row[j];
                    let w = blocks[bi].coupling.row(r);
                    for l in 0..b {
                        schur[(k, l)] -= v * w[l];
                    }
                }
            }
            border_rows.push(interior);
        }
        let schur = dense_lu(&schur).map_err(|_| Vec::new())?;
        Ok(Self {
            n,
            border,
            border_rows,
            blocks,
            schur,
        })
    }

    fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let mut x = DVector::zeros(self.n);
        for blk in &self.blocks {
            let r = DVector::from_iterator(blk.indices.len(), blk.indices.iter().map(|&i| rhs[i]));
            let y = blk.lu.solve(&r).expect("checked at construction");
            for (k, &i) in blk.indices.iter().enumerate() {
                x[i] = y[k];
            }
        }
        let t = DVector::from_iterator(
            self.border.len(),
            self.border
                .iter()
                .zip(&self.border_rows)
                .map(|(&i, row)| rhs[i] - row.iter().map(|&(j, v)| v * x[j]).sum::<f64>()),
        );
        let xb = if self.border.is_empty() {
            t
        } else {
            self.schur.solve(&t).expect("checked at construction")
        };
        for blk in &self.blocks {
            let corr = &blk.coupling * &xb;
            for (k, &i) in blk.indices.iter().enumerate() {
                x[i] -= corr[k];
            }
        }
        for (k, &i) in self.border.iter().enumerate() {
            x[i] = xb[k];
        }
        x
    }
}

fn interior_components(adjacency: &[Vec<usize>], in_border: &[bool]) -> Vec<Vec<usize>> {
    let n = adjacency.len();
    let mut seen = in_border.to_vec();
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut comp = Vec::new();
        while let Some(i) = queue.pop_front() {
            comp.push(i);
            for &j in &adjacency[i] {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Infinity norm of a dense vector.
pub fn norm_inf(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}
