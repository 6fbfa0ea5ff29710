//! Distributed least squares by state augmentation over a spanning tree.
//!
//! Agent `i` replaces `A_i x = b_i` with
//! `[A_i^T A_i | h_i ⊗ I] xbar = A_i^T b_i`, where `h_i` is row `i` of the
//! tree's incidence matrix. The stacked augmented system is square and
//! nonsingular, and the first `n` coordinates of its solution solve the
//! normal equations.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graphs::GraphSchedule;
use crate::linalg;
use crate::sync_engine::{run_sync, AgentEquation, Problem, RunOptions};
use crate::trace::Trace;

/// An oriented spanning tree and its `m x (m-1)` incidence matrix
/// (`+1` at the tail of each edge, `-1` at the head).
#[derive(Debug, Clone, PartialEq)]
pub struct TreeTopology {
    m: usize,
    edges: Vec<(usize, usize)>,
    h: DMatrix<f64>,
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

impl TreeTopology {
    pub fn incidence(m: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if m == 0 {
            return Err(Error::contract("a tree needs at least one vertex"));
        }
        if edges.len() != m - 1 {
            return Err(Error::contract(format!(
                "a spanning tree on {m} vertices has {} edges, got {}",
                m - 1,
                edges.len()
            )));
        }
        let mut parent: Vec<usize> = (0..m).collect();
        let mut h = DMatrix::zeros(m, m - 1);
        for (k, &(tail, head)) in edges.iter().enumerate() {
            if tail >= m || head >= m {
                return Err(Error::contract(format!("edge ({tail}, {head}) out of range")));
            }
            let (a, b) = (find(&mut parent, tail), find(&mut parent, head));
            if a == b {
                return Err(Error::contract(format!("edge ({tail}, {head}) closes a cycle")));
            }
            parent[a] = b;
            h[(tail, k)] = 1.0;
            h[(head, k)] = -1.0;
        }
        Ok(TreeTopology {
            m,
            edges: edges.to_vec(),
            h,
        })
    }

    /// `0 -> 1 -> ... -> m-1`.
    pub fn path(m: usize) -> Result<Self> {
        let edges: Vec<_> = (1..m).map(|k| (k - 1, k)).collect();
        TreeTopology::incidence(m, &edges)
    }

    /// `0 -> k` for every other `k`.
    pub fn star(m: usize) -> Result<Self> {
        let edges: Vec<_> = (1..m).map(|k| (0, k)).collect();
        TreeTopology::incidence(m, &edges)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }
}

fn augmented_blocks(eqs: &[AgentEquation], tree: &TreeTopology) -> Result<Vec<AgentEquation>> {
    let m = eqs.len();
    if m != tree.m() {
        return Err(Error::shape(format!(
            "{m} agents but the tree has {} vertices",
            tree.m()
        )));
    }
    let n = eqs[0].a.ncols();
    let mut out = Vec::with_capacity(m);
    for (i, eq) in eqs.iter().enumerate() {
        if eq.a.ncols() != n || eq.a.nrows() != eq.b.len() {
            return Err(Error::shape(format!("agent {i} has inconsistent dimensions")));
        }
        if linalg::rank(&eq.a) < n {
            return Err(Error::RankError(format!("A_{i} does not have full column rank")));
        }
        let mut c = DMatrix::zeros(n, n * m);
        c.view_mut((0, 0), (n, n)).copy_from(&(eq.a.transpose() * &eq.a));
        for k in 0..m - 1 {
            let hik = tree.h()[(i, k)];
            if hik != 0.0 {
                c.view_mut((0, n + k * n), (n, n))
                    .copy_from(&(DMatrix::<f64>::identity(n, n) * hik));
            }
        }
        out.push(AgentEquation::new(c, eq.a.transpose() * &eq.b));
    }
    Ok(out)
}

/// The augmented per-agent problem in `nm` unknowns.
pub fn augment(eqs: &[AgentEquation], tree: &TreeTopology) -> Result<Problem> {
    if eqs.is_empty() {
        return Err(Error::contract("no agents"));
    }
    Problem::new(augmented_blocks(eqs, tree)?)
}

/// Stacked `(M, q)` of the augmented system.
pub fn augmented_system(eqs: &[AgentEquation], tree: &TreeTopology) -> Result<(DMatrix<f64>, DVector<f64>)> {
    if eqs.is_empty() {
        return Err(Error::contract("no agents"));
    }
    let blocks = augmented_blocks(eqs, tree)?;
    let n = eqs[0].a.ncols();
    let m = eqs.len();
    let mut big = DMatrix::zeros(n * m, n * m);
    let mut q = DVector::zeros(n * m);
    for (i, blk) in blocks.iter().enumerate() {
        big.view_mut((i * n, 0), (n, n * m)).copy_from(&blk.a);
        q.rows_mut(i * n, n).copy_from(&blk.b);
    }
    Ok((big, q))
}

#[derive(Debug, Clone)]
pub struct LsqResult {
    pub x_hat: DVector<f64>,
    pub trace: Trace,
    /// `|A^T A x_hat - A^T b|_2`.
    pub normal_residual: f64,
}

fn stack(eqs: &[AgentEquation]) -> (DMatrix<f64>, DVector<f64>) {
    let rows: usize = eqs.iter().map(|e| e.a.nrows()).sum();
    let n = eqs[0].a.ncols();
    let mut a = DMatrix::zeros(rows, n);
    let mut b = DVector::zeros(rows);
    let mut r = 0;
    for e in eqs {
        let k = e.a.nrows();
        a.view_mut((r, 0), (k, n)).copy_from(&e.a);
        b.rows_mut(r, k).copy_from(&e.b);
        r += k;
    }
    (a, b)
}

/// Run the synchronous solver on the augmented problem and read off the
/// first `n` coordinates of the agents' average.
pub fn solve_lsq(
    eqs: &[AgentEquation],
    tree: &TreeTopology,
    schedule: &GraphSchedule,
    opts: &RunOptions,
) -> Result<LsqResult> {
    let problem = augment(eqs, tree)?;
    let trace = run_sync(&problem, schedule, opts)?;
    let n = eqs[0].a.ncols();
    let avg = trace
        .final_average()
        .ok_or_else(|| Error::contract("empty trace"))?;
    let x_hat = avg.rows(0, n).into_owned();
    let (a, b) = stack(eqs);
    let normal_residual = (a.transpose() * (&a * &x_hat - b)).norm();
    Ok(LsqResult {
        x_hat,
        trace,
        normal_residual,
    })
}

/// Direct dense solve of `A^T A x = A^T b`.
pub fn normal_equations_oracle(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if a.nrows() != b.len() {
        return Err(Error::shape("matrix rows and right-hand side differ"));
    }
    if linalg::rank(a) < a.ncols() {
        return Err(Error::RankError("A does not have full column rank".into()));
    }
    let chol = (a.transpose() * a)
        .cholesky()
        .ok_or_else(|| Error::RankError("normal matrix is not positive definite".into()))?;
    Ok(chol.solve(&(a.transpose() * b)))
}
