//! Convergence-rate certificates and contraction checks for products of
//! `P (S ⊗ I) P` matrices.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphs::{self, Digraph};
use crate::linalg::{self, BlockMatrix};
use crate::rng::seeded;

/// Largest number of candidate products the exhaustive mode will enumerate.
pub const EXHAUSTIVE_BUDGET: u128 = 2_000_000;

/// Largest vertex count for the route dynamic program in [`block_complete`].
pub const MAX_ROUTE_VERTICES: usize = 20;

/// Strict-contraction margin used by [`contraction_check`].
pub const CONTRACTION_MARGIN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RhoMethod {
    Exhaustive,
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RhoMode {
    Exhaustive,
    /// Max over `count` seeded random covering products. A lower estimate.
    Sampled { seed: u64, count: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateCertificate {
    pub m: usize,
    pub n: usize,
    pub q: usize,
    pub rho: f64,
    pub lambda: f64,
    pub method: RhoMethod,
    pub samples: Option<u64>,
}

fn require_trivial_intersection(projectors: &[DMatrix<f64>]) -> Result<()> {
    let cap = linalg::subspace_intersection(projectors)?;
    if cap.dim() != 0 {
        return Err(Error::contract(format!(
            "projector images share a {}-dimensional subspace",
            cap.dim()
        )));
    }
    Ok(())
}

/// `(1 - (m-1)(1-rho)/m^q)^(1/q)` with `q = (m-1)^2`.
pub fn lambda_from_rho(m: usize, rho: f64) -> Result<f64> {
    if m < 2 {
        return Err(Error::contract("the rate bound needs at least two agents"));
    }
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::contract(format!("rho must lie in [0, 1), got {rho}")));
    }
    let q = ((m - 1) * (m - 1)) as i32;
    let mf = m as f64;
    let inner = 1.0 - (mf - 1.0) * (1.0 - rho) / mf.powi(q);
    Ok(inner.powf(1.0 / q as f64))
}

pub fn lambda_bound(cert: &RateCertificate) -> Result<f64> {
    lambda_from_rho(cert.m, cert.rho)
}

/// `rho = max |P_{j_1} ... P_{j_{q+1}}|_2` over products of length
/// `(m-1)^2 + 1` in which every agent index appears at least once.
pub fn rho_bound(projectors: &[DMatrix<f64>], mode: RhoMode) -> Result<RateCertificate> {
    require_trivial_intersection(projectors)?;
    let m = projectors.len();
    if m < 2 {
        return Err(Error::contract("the rate bound needs at least two agents"));
    }
    let n = projectors[0].nrows();
    let q = (m - 1) * (m - 1);
    let len = q + 1;
    let (rho, method, samples) = match mode {
        RhoMode::Exhaustive => {
            let total = (m as u128).checked_pow(len as u32).unwrap_or(u128::MAX);
            if total > EXHAUSTIVE_BUDGET {
                return Err(Error::BudgetExceeded(format!(
                    "{m}^{len} = {total} products exceed the budget of {EXHAUSTIVE_BUDGET}"
                )));
            }
            let mut best = 0.0_f64;
            let eye = DMatrix::identity(n, n);
            enumerate_covering(projectors, len, 0, &eye, &mut best);
            (best, RhoMethod::Exhaustive, None)
        }
        RhoMode::Sampled { seed, count } => {
            let mut rng = seeded(seed);
            let mut best = 0.0_f64;
            for _ in 0..count {
                let mut seq: Vec<usize> = (0..m).collect();
                seq.extend((m..len).map(|_| rng.gen_range(0..m)));
                seq.shuffle(&mut rng);
                let prod = seq
                    .iter()
                    .fold(DMatrix::identity(n, n), |acc, &j| acc * &projectors[j]);
                best = best.max(linalg::spectral_norm(&prod));
            }
            (best, RhoMethod::Sampled, Some(count))
        }
    };
    let lambda = if rho < 1.0 { lambda_from_rho(m, rho)? } else { 1.0 };
    Ok(RateCertificate {
        m,
        n,
        q,
        rho,
        lambda,
        method,
        samples,
    })
}

fn enumerate_covering(
    projectors: &[DMatrix<f64>],
    remaining: usize,
    seen: u64,
    prefix: &DMatrix<f64>,
    best: &mut f64,
) {
    let m = projectors.len();
    let missing = m - seen.count_ones() as usize;
    if remaining == 0 {
        if missing == 0 {
            *best = best.max(linalg::spectral_norm(prefix));
        }
        return;
    }
    if missing > remaining {
        return;
    }
    for (j, p) in projectors.iter().enumerate() {
        let next = prefix * p;
        enumerate_covering(projectors, remaining - 1, seen | (1 << j), &next, best);
    }
}

fn check_stochastic_seq(seq: &[DMatrix<f64>]) -> Result<usize> {
    let first = seq
        .first()
        .ok_or_else(|| Error::contract("empty stochastic sequence"))?;
    let m = first.nrows();
    for (k, s) in seq.iter().enumerate() {
        if s.shape() != (m, m) || !linalg::is_row_stochastic(s, linalg::STOCHASTIC_TOL) {
            return Err(Error::contract(format!("matrix {k} is not {m}x{m} row-stochastic")));
        }
    }
    Ok(m)
}

/// The nominal bound of a sandwich product: `S_q ... S_1`.
pub fn nominal_bound(seq: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
    let m = check_stochastic_seq(seq)?;
    Ok(seq.iter().fold(DMatrix::identity(m, m), |acc, s| s * acc))
}

/// Whether some route `j = i_0, i_1, ..., i_q = i` with arc `(i_{k-1}, i_k)`
/// in graph `k` visits every vertex.
pub fn block_complete(seq: &[Digraph], i: usize, j: usize) -> Result<bool> {
    let m = match seq.first() {
        Some(g) => g.m(),
        None => return Ok(i == j && i == 0),
    };
    if m > MAX_ROUTE_VERTICES {
        return Err(Error::BudgetExceeded(format!(
            "route search over {m} vertices exceeds {MAX_ROUTE_VERTICES}"
        )));
    }
    if seq.iter().any(|g| g.m() != m) {
        return Err(Error::shape("graphs in the sequence differ in size"));
    }
    if i >= m || j >= m {
        return Err(Error::contract("vertex out of range"));
    }
    let masks = 1usize << m;
    let states = m * masks;
    let words = states.div_ceil(64);
    let index = |v: usize, mask: usize| v * masks + mask;
    let mut cur = vec![0u64; words];
    let start = index(j, 1 << j);
    cur[start / 64] |= 1 << (start % 64);
    for g in seq {
        let mut next = vec![0u64; words];
        for (w, &word) in cur.iter().enumerate() {
            let mut bits = word;
            while bits != 0 {
                let s = w * 64 + bits.trailing_zeros() as usize;
                bits &= bits - 1;
                let (v, mask) = (s / masks, s % masks);
                for to in 0..m {
                    if g.has_arc(v, to) {
                        let ns = index(to, mask | (1 << to));
                        next[ns / 64] |= 1 << (ns % 64);
                    }
                }
            }
        }
        cur = next;
    }
    let goal = index(i, masks - 1);
    Ok(cur[goal / 64] & (1 << (goal % 64)) != 0)
}

/// Flocking matrices of a graph sequence.
pub fn flocking_sequence(graphs: &[Digraph]) -> Result<Vec<DMatrix<f64>>> {
    graphs.iter().map(Digraph::flocking_matrix).collect()
}

/// `P(S_q ⊗ I)P ... P(S_1 ⊗ I)P`; the bare `P` for an empty sequence.
pub fn transition_product(projectors: &[DMatrix<f64>], seq: &[DMatrix<f64>]) -> Result<BlockMatrix> {
    let mut acc = BlockMatrix::block_diagonal(projectors)?;
    let mut first = true;
    for s in seq {
        let step = linalg::sandwich(projectors, s)?;
        acc = if first { step } else { step.mul(&acc)? };
        first = false;
    }
    Ok(acc)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionReport {
    pub mixed_norm: f64,
    pub is_contraction: bool,
}

fn check_repeatedly_connected(graphs: &[Digraph], l: usize) -> Result<()> {
    if l == 0 {
        return Err(Error::contract("window length must be positive"));
    }
    if graphs.len() >= l && !graphs::is_repeatedly_jointly_strongly_connected(graphs, l, 1)? {
        return Err(Error::contract(format!(
            "graph sequence is not repeatedly {l}-connected"
        )));
    }
    Ok(())
}

/// Mixed norm of the transition product over a repeatedly `l`-connected
/// sequence of length at least `(m-1)^2 l`.
pub fn contraction_check(
    projectors: &[DMatrix<f64>],
    graphs: &[Digraph],
    l: usize,
) -> Result<ContractionReport> {
    require_trivial_intersection(projectors)?;
    let m = projectors.len();
    let needed = (m - 1) * (m - 1) * l;
    if graphs.len() < needed {
        return Err(Error::contract(format!(
            "need at least (m-1)^2 l = {needed} graphs, got {}",
            graphs.len()
        )));
    }
    check_repeatedly_connected(graphs, l)?;
    let prod = transition_product(projectors, &flocking_sequence(graphs)?)?;
    let mixed_norm = linalg::mixed_norm(&prod);
    Ok(ContractionReport {
        mixed_norm,
        is_contraction: mixed_norm < 1.0 - CONTRACTION_MARGIN,
    })
}

/// Mixed norm of every prefix product `M_t`, `t = 0..=len`.
pub fn mixed_norm_decay(
    projectors: &[DMatrix<f64>],
    graphs: &[Digraph],
    l: usize,
) -> Result<Vec<(usize, f64)>> {
    require_trivial_intersection(projectors)?;
    check_repeatedly_connected(graphs, l)?;
    let mut acc = BlockMatrix::block_diagonal(projectors)?;
    let mut out = vec![(0, linalg::mixed_norm(&acc))];
    for (k, g) in graphs.iter().enumerate() {
        let step = linalg::sandwich(projectors, &g.flocking_matrix()?)?;
        acc = step.mul(&acc)?;
        out.push((k + 1, linalg::mixed_norm(&acc)));
    }
    Ok(out)
}
