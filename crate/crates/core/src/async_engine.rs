//! Asynchronous projection consensus.
//!
//! Each agent fires at its own event times. All event times are merged into
//! one increasing timeline `t_1 < t_2 < ...` starting at the latest first
//! event; at `t_p` every firing agent updates from the common snapshot and
//! everyone else holds. At its first event an agent only sees itself.

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphs::{self, Digraph, GraphSchedule, MAX_VERTICES};
use crate::rng::{derive_seed, seeded};
use crate::sync_engine::{agent_update, error_reference, init_states, record, Problem};
use crate::trace::Trace;

/// Slack allowed when validating gaps against their bounds.
pub const GAP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSchedule {
    times: Vec<Vec<f64>>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

fn check_bounds(lower: &[f64], upper: &[f64]) -> Result<()> {
    if lower.len() != upper.len() {
        return Err(Error::shape("gap bound lists differ in length"));
    }
    if lower.is_empty() || lower.len() > MAX_VERTICES {
        return Err(Error::contract(format!("agent count must be in 1..={MAX_VERTICES}")));
    }
    for (i, (&lo, &hi)) in lower.iter().zip(upper).enumerate() {
        if !(lo.is_finite() && hi.is_finite() && 0.0 < lo && lo < hi) {
            return Err(Error::contract(format!(
                "agent {i}: gap bounds must satisfy 0 < T < T_bar, got ({lo}, {hi})"
            )));
        }
    }
    Ok(())
}

impl EventSchedule {
    /// Validate explicit per-agent event times against gap bounds.
    pub fn from_times(times: Vec<Vec<f64>>, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        check_bounds(&lower, &upper)?;
        if times.len() != lower.len() {
            return Err(Error::shape("one time list per agent is required"));
        }
        for (i, ts) in times.iter().enumerate() {
            if ts.is_empty() {
                return Err(Error::contract(format!("agent {i} has no events")));
            }
            if ts.iter().any(|t| !t.is_finite()) {
                return Err(Error::contract(format!("agent {i} has a non-finite event time")));
            }
            for w in ts.windows(2) {
                let gap = w[1] - w[0];
                if gap < lower[i] - GAP_TOL || gap > upper[i] + GAP_TOL {
                    return Err(Error::contract(format!(
                        "agent {i}: gap {gap} outside [{}, {}]",
                        lower[i], upper[i]
                    )));
                }
            }
        }
        Ok(EventSchedule {
            times,
            lower,
            upper,
        })
    }

    /// Every agent fires at `0, period, 2 period, ...` (`count` events),
    /// with bounds `[period / 2, period]`.
    pub fn grid(m: usize, period: f64, count: usize) -> Result<Self> {
        let ts: Vec<f64> = (0..count).map(|k| k as f64 * period).collect();
        EventSchedule::from_times(vec![ts; m], vec![period / 2.0; m], vec![period; m])
    }

    pub fn m(&self) -> usize {
        self.times.len()
    }

    pub fn times(&self, i: usize) -> &[f64] {
        &self.times[i]
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn max_upper(&self) -> f64 {
        self.upper.iter().copied().fold(0.0, f64::max)
    }

    pub fn min_lower(&self) -> f64 {
        self.lower.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Seeded schedule: first event uniform in `[0, T_bar_i]`, gaps uniform in
/// `[T_i, T_bar_i]`, until the last event passes `horizon`.
pub fn generate_schedule(
    m: usize,
    lower: &[f64],
    upper: &[f64],
    horizon: f64,
    seed: u64,
) -> Result<EventSchedule> {
    check_bounds(lower, upper)?;
    if lower.len() != m {
        return Err(Error::shape(format!("expected {m} gap bounds, got {}", lower.len())));
    }
    if !horizon.is_finite() || horizon < 0.0 {
        return Err(Error::contract("horizon must be a finite nonnegative time"));
    }
    let times = (0..m)
        .map(|i| {
            let mut rng = seeded(derive_seed(seed, &[i as u64]));
            let mut t = rng.gen_range(0.0..=upper[i]);
            let mut ts = vec![t];
            while t <= horizon {
                t += rng.gen_range(lower[i]..=upper[i]);
                ts.push(t);
            }
            ts
        })
        .collect();
    EventSchedule::from_times(times, lower.to_vec(), upper.to_vec())
}

/// Least `q` with `max T_bar <= q min T`. Any two merged indices `mq` apart
/// are at least `max T_bar` apart in time.
pub fn window_multiplier(sched: &EventSchedule) -> usize {
    (sched.max_upper() / sched.min_lower() - 1e-12).ceil().max(1.0) as usize
}

#[derive(Debug, Clone, PartialEq)]
pub struct Timeline {
    m: usize,
    times: Vec<f64>,
    firing: Vec<u64>,
    first: Vec<u64>,
}

impl Timeline {
    /// Merge all event times at or after `max_i t_i1`. Exact ties collapse.
    pub fn merge(sched: &EventSchedule) -> Timeline {
        let m = sched.m();
        let start = sched
            .times
            .iter()
            .map(|ts| ts[0])
            .fold(f64::NEG_INFINITY, f64::max);
        let mut events: Vec<(f64, usize, bool)> = sched
            .times
            .iter()
            .enumerate()
            .flat_map(|(i, ts)| {
                ts.iter()
                    .enumerate()
                    .filter(|(_, &t)| t >= start)
                    .map(move |(k, &t)| (t, i, k == 0))
            })
            .collect();
        events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut tl = Timeline {
            m,
            times: Vec::new(),
            firing: Vec::new(),
            first: Vec::new(),
        };
        for (t, i, is_first) in events {
            if tl.times.last() != Some(&t) {
                tl.times.push(t);
                tl.firing.push(0);
                tl.first.push(0);
            }
            let p = tl.times.len() - 1;
            tl.firing[p] |= 1 << i;
            if is_first {
                tl.first[p] |= 1 << i;
            }
        }
        tl
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `t_p`, 1-based.
    pub fn time(&self, p: usize) -> f64 {
        self.times[p - 1]
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn fires(&self, p: usize, i: usize) -> bool {
        self.firing[p - 1] & (1 << i) != 0
    }

    pub fn is_first_event(&self, p: usize, i: usize) -> bool {
        self.first[p - 1] & (1 << i) != 0
    }

    pub fn firing_agents(&self, p: usize) -> Vec<usize> {
        (0..self.m).filter(|&i| self.fires(p, i)).collect()
    }

    fn check_index(&self, p: usize) -> Result<()> {
        if p == 0 || p > self.len() {
            return Err(Error::contract(format!(
                "merged index {p} outside 1..={}",
                self.len()
            )));
        }
        Ok(())
    }
}

fn extended_from(timeline: &Timeline, p: usize, base: &Digraph) -> Result<Digraph> {
    timeline.check_index(p)?;
    if base.m() != timeline.m() {
        return Err(Error::shape("base graph and timeline disagree on the agent count"));
    }
    let mut g = Digraph::self_loops(base.m())?;
    for i in 0..base.m() {
        if timeline.fires(p, i) && !timeline.is_first_event(p, i) {
            for j in base.in_neighbors(i) {
                g.add_arc(j, i)?;
            }
        }
    }
    Ok(g)
}

/// Neighbor graph in force at merged index `p`; the base graph is `N(p)`.
pub fn extended_neighbor_graph(timeline: &Timeline, p: usize, base: &GraphSchedule) -> Result<Digraph> {
    timeline.check_index(p)?;
    extended_from(timeline, p, &base.graph_at(p as u64)?)
}

/// Whether `base` is a spanning subgraph of the composed extended graphs
/// over merged indices `a..=b`.
pub fn window_spanning_check(timeline: &Timeline, base: &Digraph, a: usize, b: usize) -> Result<bool> {
    if a > b {
        return Err(Error::contract("window start after its end"));
    }
    let seq = (a..=b)
        .map(|p| extended_from(timeline, p, base))
        .collect::<Result<Vec<_>>>()?;
    Ok(base.is_subgraph_of(&graphs::compose_sequence(&seq)?))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsyncOptions {
    /// Maximum number of merged event indices to process.
    pub max_events: u64,
    pub tol: f64,
    pub seed: u64,
}

impl Default for AsyncOptions {
    fn default() -> Self {
        AsyncOptions {
            max_events: 100_000,
            tol: 1e-9,
            seed: 0,
        }
    }
}

/// Run from seeded initial states. Record `p` holds `x(t_p)`.
pub fn async_run(
    problem: &Problem,
    base: &GraphSchedule,
    sched: &EventSchedule,
    opts: &AsyncOptions,
) -> Result<Trace> {
    async_run_from(problem, base, sched, init_states(problem, opts.seed), opts)
}

pub fn async_run_from(
    problem: &Problem,
    base: &GraphSchedule,
    sched: &EventSchedule,
    initial: Vec<DVector<f64>>,
    opts: &AsyncOptions,
) -> Result<Trace> {
    if !problem.solvable() {
        return Err(Error::contract("async_run requires a solvable system"));
    }
    let m = problem.m();
    if base.m() != m || sched.m() != m {
        return Err(Error::shape("schedule, events and problem disagree on the agent count"));
    }
    problem.check_states(&initial)?;
    let timeline = Timeline::merge(sched);
    let mut out = Trace::default();
    let mut states = initial;
    let mut p = 1u64;
    loop {
        let rec = record(problem, p, &states);
        let done = rec.disagreement <= opts.tol && rec.residual <= opts.tol;
        out.steps.push(rec);
        if done {
            out.converged = true;
            out.converged_at = Some(p);
            break;
        }
        if p > opts.max_events || p as usize > timeline.len() {
            break;
        }
        let g = extended_neighbor_graph(&timeline, p as usize, base)?;
        let snapshot = &states;
        let next: Vec<DVector<f64>> = (0..m)
            .map(|i| {
                if timeline.fires(p as usize, i) {
                    agent_update(&problem.agents()[i], &snapshot[i], snapshot, g.in_neighbors(i))
                } else {
                    snapshot[i].clone()
                }
            })
            .collect();
        states = next;
        p += 1;
    }
    out.assign_errors(&error_reference(problem));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounds_validated() {
        assert!(matches!(
            generate_schedule(2, &[1.0, 1.0], &[1.0, 2.0], 10.0, 0),
            Err(Error::ContractViolation(_))
        ));
        assert!(EventSchedule::from_times(vec![vec![0.0, 3.0]], vec![0.5], vec![1.0]).is_err());
        assert!(EventSchedule::from_times(vec![vec![0.0, 0.7]], vec![0.5], vec![1.0]).is_ok());
    }

    #[test]
    fn generated_schedule_respects_bounds() {
        let s = generate_schedule(3, &[0.5; 3], &[1.7; 3], 50.0, 4).unwrap();
        for i in 0..3 {
            let ts = s.times(i);
            assert!((0.0..=1.7).contains(&ts[0]));
            assert!(*ts.last().unwrap() > 50.0);
            for w in ts.windows(2) {
                assert!(w[1] - w[0] >= 0.5 && w[1] - w[0] <= 1.7);
            }
        }
        assert_eq!(s, generate_schedule(3, &[0.5; 3], &[1.7; 3], 50.0, 4).unwrap());
    }

    #[test]
    fn near_periodic_schedule() {
        let eps = 1e-9;
        let s = generate_schedule(1, &[1.0 - eps], &[1.0], 20.0, 8).unwrap();
        for w in s.times(0).windows(2) {
            assert!((w[1] - w[0] - 1.0).abs() <= eps);
        }
    }

    #[test]
    fn common_grid_merges_to_itself() {
        let s = EventSchedule::grid(3, 1.0, 5).unwrap();
        let tl = Timeline::merge(&s);
        assert_eq!(tl.times(), &[0.0, 1.0, 2.0, 3.0, 4.0]);
        for p in 1..=5 {
            assert_eq!(tl.firing_agents(p), vec![0, 1, 2]);
            assert_eq!(tl.is_first_event(p, 0), p == 1);
        }
    }

    #[test]
    fn merge_drops_events_before_latest_start() {
        let s = EventSchedule::from_times(
            vec![vec![0.0, 1.0, 2.0], vec![1.5, 2.0, 3.0]],
            vec![0.5, 0.5],
            vec![1.0, 1.0],
        )
        .unwrap();
        let tl = Timeline::merge(&s);
        assert_eq!(tl.times(), &[1.5, 2.0, 3.0]);
        assert_eq!(tl.firing_agents(1), vec![1]);
        assert!(tl.is_first_event(1, 1));
        assert_eq!(tl.firing_agents(2), vec![0, 1]);
        assert!(!tl.is_first_event(2, 0));
    }

    fn two_agent_timeline() -> Timeline {
        // agent 1 fires alone at t = 1.5, past its first event
        let s = EventSchedule::from_times(
            vec![vec![0.0, 1.0, 2.0], vec![0.5, 1.0, 1.5]],
            vec![0.5, 0.5],
            vec![1.0, 1.0],
        )
        .unwrap();
        Timeline::merge(&s)
    }

    #[test]
    fn extended_graph_examples() {
        let tl = two_agent_timeline();
        assert_eq!(tl.times(), &[0.5, 1.0, 1.5, 2.0]);
        let base = GraphSchedule::fixed(Digraph::complete(2).unwrap()).unwrap();

        let g = extended_neighbor_graph(&tl, 3, &base).unwrap();
        let expect = Digraph::from_arcs(2, &[(0, 1)], true).unwrap();
        assert_eq!(g, expect);

        // agent 1's first event: self only
        let g1 = extended_neighbor_graph(&tl, 1, &base).unwrap();
        assert_eq!(g1, Digraph::self_loops(2).unwrap());

        // both fire past their first events
        assert_eq!(extended_neighbor_graph(&tl, 2, &base).unwrap(), Digraph::complete(2).unwrap());
        assert!(extended_neighbor_graph(&tl, 0, &base).is_err());
    }

    #[test]
    fn window_check_examples() {
        let tl = two_agent_timeline();
        let k = Digraph::complete(2).unwrap();
        assert!(!window_spanning_check(&tl, &k, 3, 3).unwrap());
        assert!(window_spanning_check(&tl, &k, 2, 2).unwrap());
        let loops = Digraph::self_loops(2).unwrap();
        for p in 1..=tl.len() {
            assert!(window_spanning_check(&tl, &loops, p, p).unwrap());
        }
    }

    #[test]
    fn multiplier() {
        let s = generate_schedule(2, &[0.5, 0.5], &[1.7, 1.7], 5.0, 1).unwrap();
        assert_eq!(window_multiplier(&s), 4);
        let s = generate_schedule(1, &[0.5], &[1.0], 5.0, 1).unwrap();
        assert_eq!(window_multiplier(&s), 2);
    }
}
