//! Config-driven experiment runs with CSV traces and JSON summaries.
//!
//! All randomness flows from the config's top-level `seed` through
//! [`derive_seed`]: label 1 seeds the problem generator, 2 the graph
//! schedule, 3 the initial states, 4 the event schedule and 5 the sampled
//! rate estimate.

mod config;
mod recipes;

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

pub use config::{
    parse_config, parse_event_schedule, parse_graph_literal, parse_schedule_spec, AsyncSpec,
    BlockSpec, EngineSpec, ExperimentConfig, GeneratorSpec, GraphSpec, LsqSpec, Mode, OutputSpec,
    ProblemSpec, RateMethodSpec, RateSpec, ScheduleSpec, SinMatrixSpec, SinVectorSpec,
    TrackingSpec, TreeSpec,
};
pub use recipes::{recipe, RECIPES};

use crate::analysis::{self, RateCertificate, RhoMode};
use crate::async_engine::{async_run, generate_schedule, AsyncOptions, EventSchedule};
use crate::error::{Error, Result};
use crate::graphs::{Digraph, GraphSchedule};
use crate::lsq::{solve_lsq, TreeTopology};
use crate::rng::derive_seed;
use crate::sync_engine::{run_sync, Problem, RunOptions};
use crate::trace::Trace;
use crate::tracking::run_tracking;

pub const SEED_PROBLEM: u64 = 1;
pub const SEED_SCHEDULE: u64 = 2;
pub const SEED_INIT: u64 = 3;
pub const SEED_EVENTS: u64 = 4;
pub const SEED_RATE: u64 = 5;

pub const CSV_HEADER: &str = "t,agent,err,disagreement,residual";
pub const TRACE_FILE: &str = "trace.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const DEFAULT_TRACKING_HORIZON: u64 = 300;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub mode: Mode,
    pub converged: bool,
    pub converged_at: Option<u64>,
    pub empirical_rate: Option<f64>,
    pub final_residual: f64,
    pub final_disagreement: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_cert: Option<RateCertificate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_hat: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normal_residual: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub summary: Summary,
    pub trace: Trace,
}

impl RunReport {
    /// 0 when the run converged, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.summary.converged {
            0
        } else {
            2
        }
    }
}

fn sub(cfg: &ExperimentConfig, label: u64) -> u64 {
    derive_seed(cfg.seed, &[label])
}

fn step_budget(cfg: &ExperimentConfig) -> u64 {
    match cfg.engine.horizon {
        Some(h) => cfg.engine.max_steps.min(h.saturating_sub(1)),
        None => cfg.engine.max_steps,
    }
}

fn schedule(cfg: &ExperimentConfig, m: usize) -> Result<GraphSchedule> {
    match &cfg.schedule {
        Some(s) => s.build("schedule", m, sub(cfg, SEED_SCHEDULE)),
        None => GraphSchedule::fixed(Digraph::complete(m)?),
    }
}

fn problem(cfg: &ExperimentConfig) -> Result<Problem> {
    let spec = cfg
        .problem
        .as_ref()
        .ok_or_else(|| Error::config("problem", "missing"))?;
    Problem::new(spec.equations(sub(cfg, SEED_PROBLEM))?)
}

fn summarize(mode: Mode, trace: &Trace) -> Summary {
    let last = trace.last();
    Summary {
        mode,
        converged: trace.converged,
        converged_at: trace.converged_at,
        empirical_rate: trace.empirical_rate,
        final_residual: last.map_or(f64::NAN, |r| r.residual),
        final_disagreement: last.map_or(f64::NAN, |r| r.disagreement),
        lambda_cert: None,
        x_hat: None,
        normal_residual: None,
    }
}

/// Run the configured experiment without touching the filesystem.
pub fn execute(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    let run_opts = RunOptions {
        max_steps: step_budget(cfg),
        tol: cfg.engine.tol,
        seed: sub(cfg, SEED_INIT),
    };
    let (trace, mut summary) = match cfg.mode {
        Mode::Sync | Mode::Necessity => {
            let p = problem(cfg)?;
            let trace = run_sync(&p, &schedule(cfg, p.m())?, &run_opts)?;
            let s = summarize(cfg.mode, &trace);
            (trace, s)
        }
        Mode::Rate => {
            let p = problem(cfg)?;
            let spec = cfg.rate.clone().unwrap_or_default();
            let mode = match spec.method {
                RateMethodSpec::Exhaustive => RhoMode::Exhaustive,
                RateMethodSpec::Sampled => RhoMode::Sampled {
                    seed: sub(cfg, SEED_RATE),
                    count: spec.samples,
                },
            };
            let cert = analysis::rho_bound(&p.projectors(), mode)
                .map_err(|e| Error::config("rate", e.to_string()))?;
            let trace = run_sync(&p, &schedule(cfg, p.m())?, &run_opts)?;
            let mut s = summarize(cfg.mode, &trace);
            s.lambda_cert = Some(cert);
            (trace, s)
        }
        Mode::Async => {
            let p = problem(cfg)?;
            let spec = cfg.async_events.as_ref().expect("validated");
            let events = match &spec.times {
                Some(times) => EventSchedule::from_times(times.clone(), spec.lower.clone(), spec.upper.clone())
                    .map_err(|e| Error::config("async.times", e.to_string()))?,
                None => {
                    let horizon = spec.events as f64 * spec.upper.iter().copied().fold(0.0, f64::max);
                    generate_schedule(p.m(), &spec.lower, &spec.upper, horizon, sub(cfg, SEED_EVENTS))?
                }
            };
            let opts = AsyncOptions {
                max_events: spec.events.min(step_budget(cfg)),
                tol: cfg.engine.tol,
                seed: sub(cfg, SEED_INIT),
            };
            let trace = async_run(&p, &schedule(cfg, p.m())?, &events, &opts)?;
            let s = summarize(cfg.mode, &trace);
            (trace, s)
        }
        Mode::Tracking => {
            let (tvp, init) = cfg.tracking.as_ref().expect("validated").build()?;
            let horizon = cfg.engine.horizon.unwrap_or(DEFAULT_TRACKING_HORIZON);
            let trace = run_tracking(&tvp, &schedule(cfg, tvp.m())?, init, horizon)?;
            let s = summarize(cfg.mode, &trace);
            (trace, s)
        }
        Mode::Lsq => {
            let spec = cfg
                .problem
                .as_ref()
                .ok_or_else(|| Error::config("problem", "missing"))?;
            let eqs = spec.equations(sub(cfg, SEED_PROBLEM))?;
            let tree = match &cfg.lsq {
                Some(l) => l.tree.build(eqs.len())?,
                None => TreeTopology::path(eqs.len())?,
            };
            let res = solve_lsq(&eqs, &tree, &schedule(cfg, eqs.len())?, &run_opts)?;
            let mut s = summarize(cfg.mode, &res.trace);
            s.x_hat = Some(res.x_hat.iter().copied().collect());
            s.normal_residual = Some(res.normal_residual);
            (res.trace, s)
        }
    };
    summary.mode = cfg.mode;
    Ok(RunReport { summary, trace })
}

/// Long-form CSV, one row per `(t, agent)`.
pub fn trace_csv(trace: &Trace) -> String {
    let mut out = String::with_capacity(64 * trace.steps.len());
    out.push_str(CSV_HEADER);
    out.push('\n');
    for rec in &trace.steps {
        for agent in 0..rec.states.len() {
            let err = rec.per_agent_error.get(agent).copied().unwrap_or(f64::NAN);
            let _ = writeln!(
                out,
                "{},{},{:.16e},{:.16e},{:.16e}",
                rec.t, agent, err, rec.disagreement, rec.residual
            );
        }
    }
    out
}

pub fn summary_json(summary: &Summary) -> String {
    let mut s = serde_json::to_string_pretty(summary).expect("summary serializes");
    s.push('\n');
    s
}

/// Execute and write `trace.csv` and `summary.json` into `out_dir`.
/// Returns the process exit code.
pub fn run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<i32> {
    let report = execute(cfg)?;
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join(TRACE_FILE), trace_csv(&report.trace))?;
    fs::write(out_dir.join(SUMMARY_FILE), summary_json(&report.summary))?;
    Ok(report.exit_code())
}
