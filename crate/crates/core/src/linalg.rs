//! Dense numerical primitives: kernel projectors, particular solutions,
//! subspace intersections, block matrices and the mixed matrix norm.
//!
//! Everything here is a pure function of its inputs. Numerical rank is
//! decided by an SVD with singular values below [`RANK_TOL`] times the
//! largest singular value treated as zero.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative singular-value cutoff used for every rank decision.
pub const RANK_TOL: f64 = 1e-10;

/// Tolerance for row-stochasticity checks.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Absolute tolerance for subspace membership tests.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

/// Full right-singular factorisation of `a`, padded with zero rows so that
/// `v` is always a complete `n x n` orthogonal matrix.
struct FullSvd {
    /// Left singular vectors, `max(r, n) x n`.
    u: DMatrix<f64>,
    sigma: Vec<f64>,
    /// Columns are right singular vectors.
    v: DMatrix<f64>,
    threshold: f64,
}

impl FullSvd {
    fn new(a: &DMatrix<f64>) -> FullSvd {
        let (r, n) = a.shape();
        let rows = r.max(n);
        let mut padded = DMatrix::zeros(rows, n);
        padded.view_mut((0, 0), (r, n)).copy_from(a);
        let svd = padded.svd(true, true);
        let sigma: Vec<f64> = svd.singular_values.iter().copied().collect();
        let sigma_max = sigma.iter().copied().fold(0.0_f64, f64::max);
        FullSvd {
            u: svd.u.expect("u requested"),
            v: svd.v_t.expect("v_t requested").transpose(),
            sigma,
            threshold: RANK_TOL * sigma_max,
        }
    }

    fn is_zero(&self, k: usize) -> bool {
        // `sigma_max == 0` makes the threshold zero, so compare with <= there.
        if self.threshold == 0.0 {
            self.sigma[k] <= 0.0
        } else {
            self.sigma[k] < self.threshold
        }
    }

    fn rank(&self) -> usize {
        (0..self.sigma.len()).filter(|&k| !self.is_zero(k)).count()
    }

    fn kernel_columns(&self) -> DMatrix<f64> {
        let n = self.v.nrows();
        let idx: Vec<usize> = (0..self.sigma.len()).filter(|&k| self.is_zero(k)).collect();
        let mut out = DMatrix::zeros(n, idx.len());
        for (c, &k) in idx.iter().enumerate() {
            out.set_column(c, &self.v.column(k));
        }
        out
    }
}

/// Numerical rank of `a`.
pub fn rank(a: &DMatrix<f64>) -> usize {
    if a.ncols() == 0 {
        return 0;
    }
    FullSvd::new(a).rank()
}

/// Orthonormal basis (as columns) of `ker a`.
pub fn kernel_basis(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.ncols();
    if a.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    FullSvd::new(a).kernel_columns()
}

/// Orthogonal projector onto `ker a`, symmetrised.
pub fn kernel_projector(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.ncols() == 0 {
        return Err(Error::shape("kernel projector needs at least one column"));
    }
    let k = kernel_basis(a);
    Ok(symmetrize(&(&k * k.transpose())))
}

/// Minimum-norm solution of `a x = b`.
///
/// Fails with [`Error::InconsistentEquation`] when the least-squares
/// residual exceeds `1e-9 * (1 + |b|)`.
pub fn particular_solution(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let (r, n) = a.shape();
    if b.len() != r {
        return Err(Error::shape(format!(
            "right-hand side has length {}, matrix has {} rows",
            b.len(),
            r
        )));
    }
    if n == 0 {
        return Err(Error::shape("system has no unknowns"));
    }
    let mut x = DVector::zeros(n);
    if r > 0 {
        let svd = FullSvd::new(a);
        let mut padded_b = DVector::zeros(svd.u.nrows());
        padded_b.rows_mut(0, r).copy_from(b);
        for k in 0..svd.sigma.len() {
            if svd.is_zero(k) {
                continue;
            }
            let coef = svd.u.column(k).dot(&padded_b) / svd.sigma[k];
            x.axpy(coef, &svd.v.column(k), 1.0);
        }
    }
    let residual = (a * &x - b).norm();
    if residual > 1e-9 * (1.0 + b.norm()) {
        return Err(Error::InconsistentEquation { residual });
    }
    Ok(x)
}

pub fn symmetrize(p: &DMatrix<f64>) -> DMatrix<f64> {
    (p + p.transpose()) * 0.5
}

/// Largest singular value; zero for empty matrices.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    a.singular_values().iter().copied().fold(0.0, f64::max)
}

pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// True when `s` is square, entry-wise nonnegative and every row sums to one.
pub fn is_row_stochastic(s: &DMatrix<f64>, tol: f64) -> bool {
    if !s.is_square() || s.nrows() == 0 {
        return false;
    }
    s.row_iter().all(|row| {
        row.iter().all(|&v| v >= -tol && v.is_finite()) && (row.sum() - 1.0).abs() <= tol
    })
}

fn check_projectors(projectors: &[DMatrix<f64>]) -> Result<usize> {
    let first = projectors
        .first()
        .ok_or_else(|| Error::contract("empty projector family"))?;
    let n = first.nrows();
    if n == 0 {
        return Err(Error::shape("projectors must be at least 1x1"));
    }
    for (i, p) in projectors.iter().enumerate() {
        if p.shape() != (n, n) {
            return Err(Error::shape(format!(
                "projector {} is {:?}, expected {}x{}",
                i,
                p.shape(),
                n,
                n
            )));
        }
    }
    Ok(n)
}

/// A linear subspace represented by an orthonormal basis (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct Subspace {
    basis: DMatrix<f64>,
}

impl Subspace {
    pub fn from_orthonormal(basis: DMatrix<f64>) -> Self {
        Subspace { basis }
    }

    /// The whole of R^n.
    pub fn full(n: usize) -> Self {
        Subspace {
            basis: DMatrix::identity(n, n),
        }
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.basis * (self.basis.transpose() * v)
    }

    /// Orthogonal projector onto the subspace.
    pub fn projector(&self) -> DMatrix<f64> {
        symmetrize(&(&self.basis * self.basis.transpose()))
    }

    pub fn contains(&self, v: &DVector<f64>, tol: f64) -> bool {
        (self.project(v) - v).norm() <= tol
    }

    /// Every basis vector of `self` lies in `other`.
    pub fn is_subset_of(&self, other: &Subspace, tol: f64) -> bool {
        self.basis
            .column_iter()
            .all(|c| other.contains(&c.into_owned(), tol))
    }
}

/// Orthonormal basis of the intersection of the images of `projectors`,
/// computed as the kernel of the stacked matrix of `I - P_i`.
pub fn subspace_intersection(projectors: &[DMatrix<f64>]) -> Result<Subspace> {
    let n = check_projectors(projectors)?;
    let m = projectors.len();
    let mut stacked = DMatrix::zeros(m * n, n);
    let eye = DMatrix::<f64>::identity(n, n);
    for (i, p) in projectors.iter().enumerate() {
        stacked.view_mut((i * n, 0), (n, n)).copy_from(&(&eye - p));
    }
    Ok(Subspace::from_orthonormal(kernel_basis(&stacked)))
}

/// Whether the agents indexed by `subset` (0-based) are redundant: the
/// intersection over the complement is contained in the intersection over
/// `subset`.
pub fn is_redundant(projectors: &[DMatrix<f64>], subset: &[usize]) -> Result<bool> {
    let m = projectors.len();
    check_projectors(projectors)?;
    let mut in_subset = vec![false; m];
    for &i in subset {
        if i >= m {
            return Err(Error::contract(format!("agent index {i} out of range 0..{m}")));
        }
        in_subset[i] = true;
    }
    let k = in_subset.iter().filter(|&&b| b).count();
    if k == 0 || k == m {
        return Err(Error::contract(
            "redundancy is defined only for nonempty proper subsets",
        ));
    }
    let (inside, outside): (Vec<_>, Vec<_>) = projectors
        .iter()
        .enumerate()
        .partition(|(i, _)| in_subset[*i]);
    let inside: Vec<DMatrix<f64>> = inside.into_iter().map(|(_, p)| p.clone()).collect();
    let outside: Vec<DMatrix<f64>> = outside.into_iter().map(|(_, p)| p.clone()).collect();
    let cap_out = subspace_intersection(&outside)?;
    let cap_in = subspace_intersection(&inside)?;
    Ok(cap_out.is_subset_of(&cap_in, MEMBERSHIP_TOL))
}

/// Largest family size for which all proper subsets are enumerated.
pub const MAX_REDUNDANCY_AGENTS: usize = 12;

/// True when no nonempty proper subset of agents is redundant.
pub fn is_non_redundant(projectors: &[DMatrix<f64>]) -> Result<bool> {
    let m = projectors.len();
    if m > MAX_REDUNDANCY_AGENTS {
        return Err(Error::BudgetExceeded(format!(
            "non-redundancy check enumerates 2^m subsets; m = {m} exceeds {MAX_REDUNDANCY_AGENTS}"
        )));
    }
    check_projectors(projectors)?;
    for mask in 1u32..((1u32 << m) - 1) {
        let subset: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        if is_redundant(projectors, &subset)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Result of quotienting out the common image of a projector family.
#[derive(Debug, Clone)]
pub struct Quotient {
    /// `d x n`, rows an orthonormal basis of the complement of the intersection.
    pub q: DMatrix<f64>,
    /// `Q P_i Q'` for every agent, each `d x d`.
    pub reduced: Vec<DMatrix<f64>>,
}

/// Reduce a projector family to one whose images intersect trivially.
pub fn quotient_projectors(projectors: &[DMatrix<f64>]) -> Result<Quotient> {
    check_projectors(projectors)?;
    let cap = subspace_intersection(projectors)?;
    let complement = kernel_basis(&cap.basis().transpose());
    if complement.ncols() == 0 {
        return Err(Error::DegenerateQuotient);
    }
    let q = complement.transpose();
    let reduced = projectors
        .iter()
        .map(|p| symmetrize(&(&q * p * q.transpose())))
        .collect();
    Ok(Quotient { q, reduced })
}

/// An `mn x mn` matrix viewed as an `m x m` grid of `n x n` blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockMatrix {
    m: usize,
    n: usize,
    data: DMatrix<f64>,
}

impl BlockMatrix {
    pub fn zeros(m: usize, n: usize) -> Self {
        BlockMatrix {
            m,
            n,
            data: DMatrix::zeros(m * n, m * n),
        }
    }

    pub fn identity(m: usize, n: usize) -> Self {
        BlockMatrix {
            m,
            n,
            data: DMatrix::identity(m * n, m * n),
        }
    }

    pub fn from_dense(m: usize, n: usize, data: DMatrix<f64>) -> Result<Self> {
        if data.shape() != (m * n, m * n) {
            return Err(Error::shape(format!(
                "dense matrix is {:?}, expected {}x{}",
                data.shape(),
                m * n,
                m * n
            )));
        }
        Ok(BlockMatrix { m, n, data })
    }

    /// Block-diagonal matrix with the given (equal-size, square) blocks.
    pub fn block_diagonal(blocks: &[DMatrix<f64>]) -> Result<Self> {
        let n = check_projectors(blocks)?;
        let m = blocks.len();
        let mut out = BlockMatrix::zeros(m, n);
        for (i, b) in blocks.iter().enumerate() {
            out.set_block(i, i, b);
        }
        Ok(out)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn as_dense(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_dense(self) -> DMatrix<f64> {
        self.data
    }

    pub fn block(&self, i: usize, j: usize) -> DMatrix<f64> {
        self.data
            .view((i * self.n, j * self.n), (self.n, self.n))
            .into_owned()
    }

    pub fn set_block(&mut self, i: usize, j: usize, value: &DMatrix<f64>) {
        self.data
            .view_mut((i * self.n, j * self.n), (self.n, self.n))
            .copy_from(value);
    }

    fn same_shape(&self, other: &BlockMatrix) -> Result<()> {
        if self.m != other.m || self.n != other.n {
            return Err(Error::shape(format!(
                "block shapes differ: ({}, {}) vs ({}, {})",
                self.m, self.n, other.m, other.n
            )));
        }
        Ok(())
    }

    /// `self * rhs`.
    pub fn mul(&self, rhs: &BlockMatrix) -> Result<BlockMatrix> {
        self.same_shape(rhs)?;
        Ok(BlockMatrix {
            m: self.m,
            n: self.n,
            data: &self.data * &rhs.data,
        })
    }

    pub fn add(&self, rhs: &BlockMatrix) -> Result<BlockMatrix> {
        self.same_shape(rhs)?;
        Ok(BlockMatrix {
            m: self.m,
            n: self.n,
            data: &self.data + &rhs.data,
        })
    }

    pub fn scale(&self, c: f64) -> BlockMatrix {
        BlockMatrix {
            m: self.m,
            n: self.n,
            data: &self.data * c,
        }
    }

    pub fn apply(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        if v.len() != self.m * self.n {
            return Err(Error::shape(format!(
                "vector has length {}, expected {}",
                v.len(),
                self.m * self.n
            )));
        }
        Ok(&self.data * v)
    }

    /// `<Q>`: the `m x m` matrix of blockwise spectral norms.
    pub fn block_norms(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.m, self.m, |i, j| spectral_norm(&self.block(i, j)))
    }
}

/// Mixed matrix norm: infinity norm of the matrix of blockwise spectral norms.
pub fn mixed_norm(q: &BlockMatrix) -> f64 {
    q.block_norms()
        .row_iter()
        .map(|row| row.sum())
        .fold(0.0, f64::max)
}

/// `S ⊗ I_n` as a block matrix.
pub fn kron_lift(s: &DMatrix<f64>, n: usize) -> Result<BlockMatrix> {
    if !s.is_square() {
        return Err(Error::shape("kron_lift expects a square matrix"));
    }
    let m = s.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let mut out = BlockMatrix::zeros(m, n);
    for i in 0..m {
        for j in 0..m {
            if s[(i, j)] != 0.0 {
                out.set_block(i, j, &(&eye * s[(i, j)]));
            }
        }
    }
    Ok(out)
}

/// `P (S ⊗ I) P` with `P = diag(P_1, ..., P_m)`; block `(i, j)` is
/// `S_ij P_i P_j`.
pub fn sandwich(projectors: &[DMatrix<f64>], s: &DMatrix<f64>) -> Result<BlockMatrix> {
    let n = check_projectors(projectors)?;
    let m = projectors.len();
    if s.shape() != (m, m) {
        return Err(Error::shape(format!(
            "stochastic matrix is {:?}, expected {m}x{m}",
            s.shape()
        )));
    }
    if !is_row_stochastic(s, STOCHASTIC_TOL) {
        return Err(Error::contract("matrix is not row-stochastic"));
    }
    let mut out = BlockMatrix::zeros(m, n);
    for i in 0..m {
        for j in 0..m {
            let w = s[(i, j)];
            if w != 0.0 {
                out.set_block(i, j, &(&projectors[i] * &projectors[j] * w));
            }
        }
    }
    Ok(out)
}
