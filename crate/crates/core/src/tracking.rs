//! Tracking the solution of a slowly varying square system `A(t) x = b(t)`.
//!
//! At step `t` each agent already knows its rows at `t + 1`, picks the
//! minimum-norm solution `z_i` of them and corrects it with the projected
//! neighbor average:
//!
//! ```text
//! x_i(t+1) = z_i - (1/m_i) P_i(t) (m_i z_i - sum_j x_j(t))
//! ```
//!
//! where `P_i(t)` projects onto `ker A_i(t+1)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graphs::{Digraph, GraphSchedule};
use crate::linalg;
use crate::sync_engine::FEAS_TOL;
use crate::trace::{self, StepRecord, Trace};

pub const DEFAULT_DET_FLOOR: f64 = 1e-6;

/// `base + sin(frequency (t - 1)) perturbation`.
#[derive(Debug, Clone, PartialEq)]
pub struct SinusoidalMatrix {
    pub base: DMatrix<f64>,
    pub perturbation: DMatrix<f64>,
    pub frequency: f64,
}

impl SinusoidalMatrix {
    pub fn constant(base: DMatrix<f64>) -> Self {
        let perturbation = DMatrix::zeros(base.nrows(), base.ncols());
        SinusoidalMatrix {
            base,
            perturbation,
            frequency: 0.0,
        }
    }

    pub fn at(&self, t: u64) -> DMatrix<f64> {
        let s = (self.frequency * (t as f64 - 1.0)).sin();
        &self.base + &self.perturbation * s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SinusoidalVector {
    pub base: DVector<f64>,
    pub perturbation: DVector<f64>,
    pub frequency: f64,
}

impl SinusoidalVector {
    pub fn constant(base: DVector<f64>) -> Self {
        let perturbation = DVector::zeros(base.len());
        SinusoidalVector {
            base,
            perturbation,
            frequency: 0.0,
        }
    }

    pub fn at(&self, t: u64) -> DVector<f64> {
        let s = (self.frequency * (t as f64 - 1.0)).sin();
        &self.base + &self.perturbation * s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeVaryingProblem {
    a: SinusoidalMatrix,
    b: SinusoidalVector,
    row_blocks: Vec<usize>,
    det_floor: f64,
}

/// One agent's rows at a given time, with the pieces the update needs.
#[derive(Debug, Clone)]
pub struct AgentSample {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    /// `A_i^T (A_i A_i^T)^{-1} b_i`.
    pub z: DVector<f64>,
    /// Projector onto `ker A_i`.
    pub projector: DMatrix<f64>,
}

impl TimeVaryingProblem {
    pub fn new(
        a: SinusoidalMatrix,
        b: SinusoidalVector,
        row_blocks: Vec<usize>,
        det_floor: f64,
    ) -> Result<Self> {
        let n = a.base.nrows();
        if a.base.shape() != (n, n) || a.perturbation.shape() != (n, n) {
            return Err(Error::shape("A(t) must be square"));
        }
        if b.base.len() != n || b.perturbation.len() != n {
            return Err(Error::shape("b(t) length differs from A(t)"));
        }
        if row_blocks.is_empty() || row_blocks.contains(&0) || row_blocks.iter().sum::<usize>() != n {
            return Err(Error::shape(format!(
                "row blocks {row_blocks:?} must be positive and sum to {n}"
            )));
        }
        if det_floor.is_nan() || det_floor <= 0.0 {
            return Err(Error::contract("determinant floor must be positive"));
        }
        Ok(TimeVaryingProblem {
            a,
            b,
            row_blocks,
            det_floor,
        })
    }

    pub fn m(&self) -> usize {
        self.row_blocks.len()
    }

    pub fn n(&self) -> usize {
        self.a.base.nrows()
    }

    pub fn row_blocks(&self) -> &[usize] {
        &self.row_blocks
    }

    pub fn det_floor(&self) -> f64 {
        self.det_floor
    }

    pub fn a_at(&self, t: u64) -> DMatrix<f64> {
        self.a.at(t)
    }

    pub fn b_at(&self, t: u64) -> DVector<f64> {
        self.b.at(t)
    }

    /// Same problem with both perturbations multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.a.perturbation *= factor;
        out.b.perturbation *= factor;
        out
    }

    /// Per-agent data at time `t`; fails if some `det(A_i A_i^T)` is below
    /// the floor.
    pub fn agent_data(&self, t: u64) -> Result<Vec<AgentSample>> {
        let a = self.a_at(t);
        let b = self.b_at(t);
        let n = self.n();
        let mut out = Vec::with_capacity(self.m());
        let mut r = 0;
        for (i, &k) in self.row_blocks.iter().enumerate() {
            let ai = a.rows(r, k).into_owned();
            let bi = b.rows(r, k).into_owned();
            r += k;
            let gram = &ai * ai.transpose();
            let det = gram.determinant();
            if det.abs() < self.det_floor {
                return Err(Error::RankError(format!(
                    "agent {i} at t = {t}: |det(A_i A_i^T)| = {:.3e} below floor {:.1e}",
                    det.abs(),
                    self.det_floor
                )));
            }
            let inv = gram
                .try_inverse()
                .ok_or_else(|| Error::RankError(format!("agent {i} at t = {t}: singular Gram matrix")))?;
            let pinv = ai.transpose() * inv;
            let z = &pinv * &bi;
            let projector = linalg::symmetrize(&(DMatrix::identity(n, n) - &pinv * &ai));
            out.push(AgentSample {
                a: ai,
                b: bi,
                z,
                projector,
            });
        }
        Ok(out)
    }
}

fn check_graph(g: &Digraph, m: usize) -> Result<()> {
    if g.m() != m {
        return Err(Error::shape("graph and problem disagree on the agent count"));
    }
    if !g.has_all_self_arcs() {
        return Err(Error::contract("neighbor graph is missing self-arcs"));
    }
    Ok(())
}

fn step_with(
    states: &[DVector<f64>],
    g: &Digraph,
    samples: &[AgentSample],
    z: &[DVector<f64>],
) -> Result<Vec<DVector<f64>>> {
    let m = samples.len();
    check_graph(g, m)?;
    if states.len() != m || z.len() != m {
        return Err(Error::shape("one state and one z per agent are required"));
    }
    let mut out = Vec::with_capacity(m);
    for (i, s) in samples.iter().enumerate() {
        let mut sum = DVector::zeros(s.z.len());
        let mut count = 0usize;
        for j in g.in_neighbors(i) {
            sum += &states[j];
            count += 1;
        }
        let mi = count as f64;
        let x = &z[i] - (&s.projector * (&z[i] * mi - sum)) / mi;
        let residual = (&s.a * &x - &s.b).norm();
        if residual > FEAS_TOL * (1.0 + s.b.norm()) {
            return Err(Error::FeasibilityDrift { agent: i, residual });
        }
        out.push(x);
    }
    Ok(out)
}

/// `x(t) -> x(t + 1)` over neighbor graph `g = N(t)`.
pub fn tracking_step(
    states: &[DVector<f64>],
    g: &Digraph,
    tvp: &TimeVaryingProblem,
    t: u64,
) -> Result<Vec<DVector<f64>>> {
    let samples = tvp.agent_data(t + 1)?;
    let z: Vec<_> = samples.iter().map(|s| s.z.clone()).collect();
    step_with(states, g, &samples, &z)
}

/// As [`tracking_step`] but with caller-chosen solutions `z_i` of the
/// agents' rows at `t + 1`.
pub fn tracking_step_with(
    states: &[DVector<f64>],
    g: &Digraph,
    tvp: &TimeVaryingProblem,
    t: u64,
    z: &[DVector<f64>],
) -> Result<Vec<DVector<f64>>> {
    let samples = tvp.agent_data(t + 1)?;
    for (i, (s, zi)) in samples.iter().zip(z).enumerate() {
        let residual = (&s.a * zi - &s.b).norm();
        if residual > FEAS_TOL * (1.0 + s.b.norm()) {
            return Err(Error::contract(format!("z_{i} does not solve agent {i}'s rows")));
        }
    }
    step_with(states, g, &samples, z)
}

/// `x*(t) = A(t)^{-1} b(t)`.
pub fn true_solution(tvp: &TimeVaryingProblem, t: u64) -> Result<DVector<f64>> {
    tvp.a_at(t)
        .lu()
        .solve(&tvp.b_at(t))
        .ok_or_else(|| Error::Singular(format!("A({t}) is singular")))
}

/// `|(x_1 - x*(t), ..., x_m - x*(t))|_2`.
pub fn tracking_error(states: &[DVector<f64>], tvp: &TimeVaryingProblem, t: u64) -> Result<f64> {
    let x = true_solution(tvp, t)?;
    Ok(states.iter().map(|s| (s - &x).norm_squared()).sum::<f64>().sqrt())
}

/// The drift `x*(t) - x*(t + 1)`, computed from the increments of `A` and `b`
/// as `A(t+1)^{-1} dA A(t)^{-1} b(t) - A(t+1)^{-1} db`.
pub fn delta_readout(tvp: &TimeVaryingProblem, t: u64) -> Result<DVector<f64>> {
    let a0 = tvp.a_at(t);
    let a1 = tvp.a_at(t + 1);
    let d_a = &a1 - &a0;
    let d_b = tvp.b_at(t + 1) - tvp.b_at(t);
    let lu1 = a1.lu();
    let x0 = true_solution(tvp, t)?;
    let singular = || Error::Singular(format!("A({}) is singular", t + 1));
    let first = lu1.solve(&(d_a * x0)).ok_or_else(singular)?;
    let second = lu1.solve(&d_b).ok_or_else(singular)?;
    Ok(first - second)
}

/// Largest per-agent `|A_i(t) x_i - b_i(t)|`.
pub fn feasibility_residual(states: &[DVector<f64>], tvp: &TimeVaryingProblem, t: u64) -> Result<f64> {
    let a = tvp.a_at(t);
    let b = tvp.b_at(t);
    let mut worst = 0.0_f64;
    let mut r = 0;
    for (x, &k) in states.iter().zip(tvp.row_blocks()) {
        let res = (a.rows(r, k) * x - b.rows(r, k)).norm();
        worst = worst.max(res);
        r += k;
    }
    Ok(worst)
}

/// Run `t = 1..=horizon` from `initial = x(1)`. Each record carries the
/// per-agent errors against `x*(t)`; `residual` is `|A(t) xbar - b(t)|`
/// at the agent average. `converged` means the error over the second half
/// of the run stays below `|e(1)|_2`.
pub fn run_tracking(
    tvp: &TimeVaryingProblem,
    schedule: &GraphSchedule,
    initial: Vec<DVector<f64>>,
    horizon: u64,
) -> Result<Trace> {
    let m = tvp.m();
    let n = tvp.n();
    if schedule.m() != m {
        return Err(Error::shape("schedule and problem disagree on the agent count"));
    }
    if initial.len() != m || initial.iter().any(|x| x.len() != n) {
        return Err(Error::shape(format!("expected {m} initial states of length {n}")));
    }
    if horizon == 0 {
        return Err(Error::contract("horizon must be at least 1"));
    }
    let mut out = Trace::default();
    let mut states = initial;
    for t in 1..=horizon {
        let x = true_solution(tvp, t)?;
        let avg = trace::average(&states);
        out.steps.push(StepRecord {
            t,
            per_agent_error: states.iter().map(|s| (s - &x).norm()).collect(),
            disagreement: trace::disagreement(&states),
            residual: (tvp.a_at(t) * avg - tvp.b_at(t)).norm(),
            states: states.clone(),
        });
        if t < horizon {
            states = tracking_step(&states, &schedule.graph_at(t)?, tvp, t)?;
        }
    }
    let e1 = out.steps[0].error_norm();
    let tail = out.steps[out.steps.len() / 2..]
        .iter()
        .map(StepRecord::error_norm)
        .fold(0.0, f64::max);
    out.converged = tail < e1;
    out.empirical_rate = out.rate_fit().map(|f| f.slope);
    Ok(out)
}
