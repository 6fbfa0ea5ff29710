//! Synchronous projection-consensus solver.
//!
//! Each agent `i` privately knows `A_i x = b_i` and keeps a state `x_i`
//! satisfying it. At every step it moves toward the average of its
//! in-neighbors, but only along `ker A_i`:
//!
//! ```text
//! x_i <- x_i - (1/m_i) P_i (m_i x_i - sum_{j in N_i} x_j)
//! ```
//!
//! so every private constraint holds at all times and consensus forces the
//! common value to solve the stacked system.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::graphs::{Digraph, GraphSchedule};
use crate::linalg::{self, BlockMatrix};
use crate::rng::seeded;
use crate::trace::{self, ErrorReference, StepRecord, Trace};

/// Relative feasibility tolerance `|A_i x_i - b_i| <= FEAS_TOL (1 + |b_i|)`.
pub const FEAS_TOL: f64 = 1e-8;

/// One agent's private equation before any preprocessing.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentEquation {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl AgentEquation {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Self {
        AgentEquation { a, b }
    }
}

/// A preprocessed agent: its equation, kernel projector, kernel basis and
/// minimum-norm particular solution.
#[derive(Debug, Clone)]
pub struct AgentBlock {
    a: DMatrix<f64>,
    b: DVector<f64>,
    projector: DMatrix<f64>,
    kernel: DMatrix<f64>,
    particular: DVector<f64>,
}

impl AgentBlock {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        let particular = linalg::particular_solution(&a, &b)?;
        let kernel = linalg::kernel_basis(&a);
        let projector = linalg::symmetrize(&(&kernel * kernel.transpose()));
        Ok(AgentBlock {
            a,
            b,
            projector,
            kernel,
            particular,
        })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn projector(&self) -> &DMatrix<f64> {
        &self.projector
    }

    pub fn kernel(&self) -> &DMatrix<f64> {
        &self.kernel
    }

    pub fn particular(&self) -> &DVector<f64> {
        &self.particular
    }

    pub fn constraint_residual(&self, x: &DVector<f64>) -> f64 {
        (&self.a * x - &self.b).norm()
    }

    pub fn is_feasible(&self, x: &DVector<f64>) -> bool {
        self.constraint_residual(x) <= FEAS_TOL * (1.0 + self.b.norm())
    }
}

/// The distributed system `A x = b` split into agent blocks.
#[derive(Debug, Clone)]
pub struct Problem {
    n: usize,
    agents: Vec<AgentBlock>,
    solvable: bool,
    x_star: Option<DVector<f64>>,
}

impl Problem {
    /// Preprocess every agent. Each private equation must be consistent.
    /// When the stacked system has a unique solution it is stored as `x_star`.
    pub fn new(equations: Vec<AgentEquation>) -> Result<Self> {
        let first = equations
            .first()
            .ok_or_else(|| Error::contract("a problem needs at least one agent"))?;
        let n = first.a.ncols();
        for (i, eq) in equations.iter().enumerate() {
            if eq.a.ncols() != n {
                return Err(Error::shape(format!(
                    "agent {i} has {} unknowns, expected {n}",
                    eq.a.ncols()
                )));
            }
        }
        let agents = equations
            .into_iter()
            .map(|eq| AgentBlock::new(eq.a, eq.b))
            .collect::<Result<Vec<_>>>()?;
        let mut problem = Problem {
            n,
            agents,
            solvable: false,
            x_star: None,
        };
        let (a, b) = (problem.stacked_a(), problem.stacked_b());
        match linalg::particular_solution(&a, &b) {
            Ok(x) => {
                problem.solvable = true;
                if linalg::rank(&a) == n {
                    problem.x_star = Some(x);
                }
            }
            Err(Error::InconsistentEquation { .. }) => {}
            Err(e) => return Err(e),
        }
        Ok(problem)
    }

    /// Split the rows of `(a, b)` into consecutive agent blocks.
    pub fn from_stacked(a: &DMatrix<f64>, b: &DVector<f64>, row_blocks: &[usize]) -> Result<Self> {
        Problem::new(split_rows(a, b, row_blocks)?)
    }

    /// Override the reference solution; it must satisfy every agent equation.
    pub fn with_x_star(mut self, x: DVector<f64>) -> Result<Self> {
        if x.len() != self.n {
            return Err(Error::shape("x_star has the wrong length"));
        }
        for (i, ag) in self.agents.iter().enumerate() {
            let r = ag.constraint_residual(&x);
            if r > 1e-9 * (1.0 + ag.b.norm()) {
                return Err(Error::contract(format!(
                    "x_star violates agent {i} (residual {r:.3e})"
                )));
            }
        }
        self.x_star = Some(x);
        Ok(self)
    }

    pub fn m(&self) -> usize {
        self.agents.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn agents(&self) -> &[AgentBlock] {
        &self.agents
    }

    pub fn solvable(&self) -> bool {
        self.solvable
    }

    pub fn x_star(&self) -> Option<&DVector<f64>> {
        self.x_star.as_ref()
    }

    pub fn projectors(&self) -> Vec<DMatrix<f64>> {
        self.agents.iter().map(|a| a.projector.clone()).collect()
    }

    pub fn stacked_a(&self) -> DMatrix<f64> {
        let rows: usize = self.agents.iter().map(|a| a.a.nrows()).sum();
        let mut out = DMatrix::zeros(rows, self.n);
        let mut r = 0;
        for ag in &self.agents {
            out.view_mut((r, 0), ag.a.shape()).copy_from(&ag.a);
            r += ag.a.nrows();
        }
        out
    }

    pub fn stacked_b(&self) -> DVector<f64> {
        let parts: Vec<f64> = self.agents.iter().flat_map(|a| a.b.iter().copied()).collect();
        DVector::from_vec(parts)
    }

    /// `|A x - b|` for the stacked system.
    pub fn residual(&self, x: &DVector<f64>) -> f64 {
        self.agents
            .iter()
            .map(|ag| (&ag.a * x - &ag.b).norm_squared())
            .sum::<f64>()
            .sqrt()
    }

    pub(crate) fn check_states(&self, states: &[DVector<f64>]) -> Result<()> {
        if states.len() != self.m() {
            return Err(Error::shape(format!(
                "{} states for {} agents",
                states.len(),
                self.m()
            )));
        }
        for (i, x) in states.iter().enumerate() {
            if x.len() != self.n {
                return Err(Error::shape(format!("state {i} has length {}", x.len())));
            }
            let residual = self.agents[i].constraint_residual(x);
            if residual > FEAS_TOL * (1.0 + self.agents[i].b.norm()) {
                return Err(Error::FeasibilityDrift { agent: i, residual });
            }
        }
        Ok(())
    }
}

pub fn split_rows(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    row_blocks: &[usize],
) -> Result<Vec<AgentEquation>> {
    if a.nrows() != b.len() {
        return Err(Error::shape("matrix rows and right-hand side differ"));
    }
    if row_blocks.iter().sum::<usize>() != a.nrows() {
        return Err(Error::shape(format!(
            "row blocks sum to {}, matrix has {} rows",
            row_blocks.iter().sum::<usize>(),
            a.nrows()
        )));
    }
    let mut out = Vec::with_capacity(row_blocks.len());
    let mut r = 0;
    for &k in row_blocks {
        out.push(AgentEquation::new(
            a.rows(r, k).into_owned(),
            b.rows(r, k).into_owned(),
        ));
        r += k;
    }
    Ok(out)
}

/// Seeded feasible starting states `x_i(1) = z_i + K_i u_i`, `u_i ~ U[-1, 1]`.
pub fn init_states(problem: &Problem, seed: u64) -> Vec<DVector<f64>> {
    let mut rng = seeded(seed);
    problem
        .agents
        .iter()
        .map(|ag| {
            let k = ag.kernel.ncols();
            let u = DVector::from_fn(k, |_, _| rng.gen_range(-1.0..=1.0));
            &ag.particular + &ag.kernel * u
        })
        .collect()
}

/// One agent's update against a snapshot, averaging over `neighbors`.
pub(crate) fn agent_update(
    agent: &AgentBlock,
    own: &DVector<f64>,
    snapshot: &[DVector<f64>],
    neighbors: impl Iterator<Item = usize>,
) -> DVector<f64> {
    let mut sum = DVector::zeros(own.len());
    let mut count = 0usize;
    for j in neighbors {
        sum += &snapshot[j];
        count += 1;
    }
    let mi = count as f64;
    let pull = own * mi - sum;
    own - (&agent.projector * pull) / mi
}

fn check_graph(g: &Digraph, m: usize) -> Result<()> {
    if g.m() != m {
        return Err(Error::shape(format!(
            "graph has {} vertices, problem has {m} agents",
            g.m()
        )));
    }
    if !g.has_all_self_arcs() {
        return Err(Error::contract("neighbor graph is missing self-arcs"));
    }
    Ok(())
}

/// One synchronous step over neighbor graph `g`.
pub fn sync_step(states: &[DVector<f64>], g: &Digraph, problem: &Problem) -> Result<Vec<DVector<f64>>> {
    problem.check_states(states)?;
    check_graph(g, problem.m())?;
    Ok(problem
        .agents
        .iter()
        .enumerate()
        .map(|(i, ag)| agent_update(ag, &states[i], states, g.in_neighbors(i)))
        .collect())
}

/// Convex-combination variant: `x_i <- x_i - P_i (x_i - sum_j W_ij x_j)`.
/// One scalar weight per neighbor multiplies the whole neighbor state.
pub fn weighted_step(
    states: &[DVector<f64>],
    g: &Digraph,
    w: &DMatrix<f64>,
    problem: &Problem,
) -> Result<Vec<DVector<f64>>> {
    problem.check_states(states)?;
    let m = problem.m();
    check_graph(g, m)?;
    if w.shape() != (m, m) {
        return Err(Error::shape("weight matrix has the wrong shape"));
    }
    if !linalg::is_row_stochastic(w, linalg::STOCHASTIC_TOL) {
        return Err(Error::contract("weight matrix is not row-stochastic"));
    }
    for i in 0..m {
        for j in 0..m {
            let on_arc = g.has_arc(j, i);
            let wij = w[(i, j)];
            if on_arc && wij <= 0.0 {
                return Err(Error::contract(format!(
                    "weight ({i}, {j}) must be positive on an arc"
                )));
            }
            if !on_arc && wij != 0.0 {
                return Err(Error::contract(format!(
                    "weight ({i}, {j}) is nonzero off the graph"
                )));
            }
        }
    }
    Ok(problem
        .agents
        .iter()
        .enumerate()
        .map(|(i, ag)| {
            let mut mix = DVector::zeros(problem.n);
            for j in g.in_neighbors(i) {
                mix.axpy(w[(i, j)], &states[j], 1.0);
            }
            &states[i] - &ag.projector * (&states[i] - mix)
        })
        .collect())
}

/// `P (F ⊗ I) P`, the map taking `e(t)` to `e(t+1)`.
pub fn error_transition(projectors: &[DMatrix<f64>], f: &DMatrix<f64>) -> Result<BlockMatrix> {
    linalg::sandwich(projectors, f)
}

/// Stack `x_i - x` into one `mn` vector.
pub fn stacked_error(states: &[DVector<f64>], x: &DVector<f64>) -> DVector<f64> {
    let n = x.len();
    let mut out = DVector::zeros(states.len() * n);
    for (i, s) in states.iter().enumerate() {
        out.rows_mut(i * n, n).copy_from(&(s - x));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    /// Maximum number of update steps.
    pub max_steps: u64,
    /// Stop once both disagreement and residual are at most `tol`.
    pub tol: f64,
    /// Seed for the initial states.
    pub seed: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            max_steps: 100_000,
            tol: 1e-9,
            seed: 0,
        }
    }
}

pub(crate) fn record(problem: &Problem, t: u64, states: &[DVector<f64>]) -> StepRecord {
    StepRecord {
        t,
        disagreement: trace::disagreement(states),
        residual: problem.residual(&trace::average(states)),
        states: states.to_vec(),
        per_agent_error: Vec::new(),
    }
}

pub(crate) fn error_reference(problem: &Problem) -> ErrorReference {
    match problem.x_star() {
        Some(x) => ErrorReference::Known(x.clone()),
        None => ErrorReference::FinalConsensus,
    }
}

/// Run from seeded initial states.
pub fn run_sync(problem: &Problem, schedule: &GraphSchedule, opts: &RunOptions) -> Result<Trace> {
    run_sync_from(problem, schedule, init_states(problem, opts.seed), opts)
}

/// Run from the given states until both disagreement and residual drop to
/// `tol`, or `max_steps` updates have been applied.
pub fn run_sync_from(
    problem: &Problem,
    schedule: &GraphSchedule,
    initial: Vec<DVector<f64>>,
    opts: &RunOptions,
) -> Result<Trace> {
    if !problem.solvable() {
        return Err(Error::contract("run_sync requires a solvable system"));
    }
    if schedule.m() != problem.m() {
        return Err(Error::shape("schedule and problem disagree on the agent count"));
    }
    problem.check_states(&initial)?;
    let mut out = Trace::default();
    let mut states = initial;
    let mut t = 1u64;
    loop {
        let rec = record(problem, t, &states);
        let done = rec.disagreement <= opts.tol && rec.residual <= opts.tol;
        out.steps.push(rec);
        if done {
            out.converged = true;
            out.converged_at = Some(t);
            break;
        }
        if t > opts.max_steps {
            break;
        }
        let g = schedule.graph_at(t)?;
        states = sync_step(&states, &g, problem)?;
        t += 1;
    }
    out.assign_errors(&error_reference(problem));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn row(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, v.len(), v)
    }

    fn vec(v: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(v)
    }

    fn axes_problem() -> Problem {
        Problem::new(vec![
            AgentEquation::new(row(&[1.0, 0.0]), vec(&[1.0])),
            AgentEquation::new(row(&[0.0, 1.0]), vec(&[2.0])),
        ])
        .unwrap()
    }

    #[test]
    fn init_identity_blocks_ignore_seed() {
        let p = Problem::new(vec![
            AgentEquation::new(DMatrix::identity(2, 2), vec(&[1.0, 2.0])),
            AgentEquation::new(DMatrix::identity(2, 2), vec(&[1.0, 2.0])),
        ])
        .unwrap();
        for seed in [0, 5, 99] {
            for x in init_states(&p, seed) {
                assert_abs_diff_eq!(x, vec(&[1.0, 2.0]), epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn init_fixes_constrained_coordinate() {
        let p = Problem::new(vec![AgentEquation::new(row(&[1.0, 0.0]), vec(&[1.0]))]).unwrap();
        let x = &init_states(&p, 3)[0];
        assert_abs_diff_eq!(x[0], 1.0, epsilon = 1e-14);
        assert!(x[1].abs() <= 1.0);
        assert_eq!(init_states(&p, 3), init_states(&p, 3));
    }

    #[test]
    fn inconsistent_agent_rejected() {
        let err = Problem::new(vec![AgentEquation::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 0.0]),
            vec(&[1.0, 2.0]),
        )])
        .unwrap_err();
        assert!(matches!(err, Error::InconsistentEquation { .. }));
    }

    #[test]
    fn step_worked_example() {
        let p = axes_problem();
        let g = Digraph::complete(2).unwrap();
        let out = sync_step(&[vec(&[1.0, 0.0]), vec(&[0.0, 2.0])], &g, &p).unwrap();
        assert_abs_diff_eq!(out[0], vec(&[1.0, 1.0]), epsilon = 1e-15);
        assert_abs_diff_eq!(out[1], vec(&[0.5, 2.0]), epsilon = 1e-15);
    }

    #[test]
    fn consensus_is_fixed_point() {
        let p = axes_problem();
        let s = vec![vec(&[1.0, 2.0]), vec(&[1.0, 2.0])];
        let out = sync_step(&s, &Digraph::complete(2).unwrap(), &p).unwrap();
        assert_eq!(out, s);

        let single = Problem::new(vec![AgentEquation::new(row(&[1.0, 1.0]), vec(&[1.0]))]).unwrap();
        let s = vec![vec(&[0.25, 0.75])];
        assert_eq!(
            sync_step(&s, &Digraph::self_loops(1).unwrap(), &single).unwrap(),
            s
        );
    }

    #[test]
    fn drifted_state_rejected() {
        let p = axes_problem();
        let err = sync_step(
            &[vec(&[1.1, 0.0]), vec(&[0.0, 2.0])],
            &Digraph::complete(2).unwrap(),
            &p,
        )
        .unwrap_err();
        assert!(matches!(err, Error::FeasibilityDrift { agent: 0, .. }));
    }

    #[test]
    fn weighted_examples() {
        let p = axes_problem();
        let g = Digraph::complete(2).unwrap();
        let s = [vec(&[1.0, 0.0]), vec(&[0.0, 2.0])];
        let w = DMatrix::from_row_slice(2, 2, &[0.75, 0.25, 0.25, 0.75]);
        let out = weighted_step(&s, &g, &w, &p).unwrap();
        assert_abs_diff_eq!(out[0], vec(&[1.0, 0.5]), epsilon = 1e-15);

        let f = g.flocking_matrix().unwrap();
        let a = weighted_step(&s, &g, &f, &p).unwrap();
        let b = sync_step(&s, &g, &p).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-14);
        }

        let loops = Digraph::self_loops(2).unwrap();
        let same = weighted_step(&s, &loops, &DMatrix::identity(2, 2), &p).unwrap();
        assert_eq!(same.as_slice(), &s);

        // support mismatch and non-stochastic weights
        assert!(weighted_step(&s, &loops, &w, &p).is_err());
        let bad = DMatrix::from_row_slice(2, 2, &[0.7, 0.2, 0.25, 0.75]);
        assert!(weighted_step(&s, &g, &bad, &p).is_err());
    }

    #[test]
    fn transition_matches_step() {
        let p = axes_problem();
        let g = Digraph::complete(2).unwrap();
        let f = g.flocking_matrix().unwrap();
        let x_star = vec(&[1.0, 2.0]);
        let s = vec![vec(&[1.0, 0.0]), vec(&[0.0, 2.0])];
        let e1 = stacked_error(&s, &x_star);
        assert_eq!(e1, vec(&[0.0, -2.0, -1.0, 0.0]));
        let e2 = error_transition(&p.projectors(), &f).unwrap().apply(&e1).unwrap();
        assert_abs_diff_eq!(e2, vec(&[0.0, -1.0, -0.5, 0.0]), epsilon = 1e-15);
        let next = sync_step(&s, &g, &p).unwrap();
        assert_abs_diff_eq!(stacked_error(&next, &x_star), e2, epsilon = 1e-15);

        let eye = DMatrix::identity(2, 2);
        let t = error_transition(&[eye.clone(), eye], &f).unwrap();
        assert_eq!(t, linalg::kron_lift(&f, 2).unwrap());
        let t = error_transition(&p.projectors(), &DMatrix::identity(2, 2)).unwrap();
        assert_eq!(t, BlockMatrix::block_diagonal(&p.projectors()).unwrap());
    }

    #[test]
    fn run_complete_graph_converges() {
        let p = axes_problem();
        let sched = GraphSchedule::fixed(Digraph::complete(2).unwrap()).unwrap();
        let tr = run_sync(&p, &sched, &RunOptions::default()).unwrap();
        assert!(tr.converged);
        assert!(tr.last().unwrap().residual <= 1e-9);
        assert!(tr.empirical_rate.unwrap() < 0.0);
    }

    #[test]
    fn single_agent_converges_immediately() {
        let p = Problem::new(vec![AgentEquation::new(row(&[1.0, 1.0]), vec(&[1.0]))]).unwrap();
        let sched = GraphSchedule::fixed(Digraph::self_loops(1).unwrap()).unwrap();
        let tr = run_sync(&p, &sched, &RunOptions::default()).unwrap();
        assert!(tr.converged);
        assert_eq!(tr.converged_at, Some(1));
    }

    #[test]
    fn unsolvable_system_rejected() {
        let p = Problem::new(vec![
            AgentEquation::new(row(&[1.0]), vec(&[0.0])),
            AgentEquation::new(row(&[1.0]), vec(&[2.0])),
        ])
        .unwrap();
        assert!(!p.solvable());
        let sched = GraphSchedule::fixed(Digraph::complete(2).unwrap()).unwrap();
        assert!(run_sync(&p, &sched, &RunOptions::default()).is_err());
    }
}
