//! JSON experiment configuration: schema, parsing and validation.
//!
//! Every parse error carries the path of the offending field.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::async_engine::EventSchedule;
use crate::error::{Error, Result};
use crate::graphs::{Digraph, GraphSchedule, RandomScheduleParams, WindowStyle, MAX_VERTICES};
use crate::lsq::TreeTopology;
use crate::rng::seeded;
use crate::sync_engine::{split_rows, AgentEquation};
use crate::tracking::{SinusoidalMatrix, SinusoidalVector, TimeVaryingProblem, DEFAULT_DET_FLOOR};

pub const MAX_DIM: usize = 64;
pub const MAX_BLOCK_ROWS: usize = 256;
pub const MAX_STEPS: u64 = 10_000_000;
pub const MAX_EVENTS_PER_AGENT: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Sync,
    Async,
    Tracking,
    Lsq,
    Rate,
    Necessity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<ProblemSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<ScheduleSpec>,
    #[serde(default)]
    pub engine: EngineSpec,
    #[serde(default, rename = "async", skip_serializing_if = "Option::is_none")]
    pub async_events: Option<AsyncSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tracking: Option<TrackingSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lsq: Option<LsqSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<RateSpec>,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    Blocks(Vec<BlockSpec>),
    Generator(GeneratorSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockSpec {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub m: usize,
    pub n: usize,
    pub block_rows: Vec<usize>,
    /// Defaults to a sub-seed of the top-level seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "yes")]
    pub solvable: bool,
    /// Rank of the stacked matrix; full rank when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
    /// Redraw until `sigma_1 / sigma_rank` of the stacked matrix is at most
    /// this value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_condition: Option<f64>,
}

pub const MAX_GENERATOR_DRAWS: usize = 10_000;

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    pub m: usize,
    #[serde(default)]
    pub arcs: Vec<(usize, usize)>,
    #[serde(default = "yes")]
    pub self_arcs: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ScheduleSpec {
    Fixed {
        graph: GraphSpec,
    },
    Periodic {
        period: Vec<GraphSpec>,
    },
    SeededRandom {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        m: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
        l: usize,
        #[serde(default)]
        window_style: WindowStyle,
        #[serde(default = "default_density")]
        density: f64,
    },
}

fn default_density() -> f64 {
    0.15
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineSpec {
    #[serde(default = "default_max_steps")]
    pub max_steps: u64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Last time index for tracking runs; caps the step count elsewhere.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<u64>,
}

fn default_max_steps() -> u64 {
    10_000
}

fn default_tol() -> f64 {
    1e-9
}

impl Default for EngineSpec {
    fn default() -> Self {
        EngineSpec {
            max_steps: default_max_steps(),
            tol: default_tol(),
            horizon: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AsyncSpec {
    /// Per-agent lower gap bounds `T_i`.
    pub lower: Vec<f64>,
    /// Per-agent upper gap bounds `T_bar_i`.
    pub upper: Vec<f64>,
    /// Explicit event times; generated from the seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<Vec<f64>>>,
    /// Number of merged events to simulate.
    #[serde(default = "default_events")]
    pub events: u64,
}

fn default_events() -> u64 {
    2_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SinMatrixSpec {
    pub base: Vec<Vec<f64>>,
    pub perturbation: Vec<Vec<f64>>,
    pub frequency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SinVectorSpec {
    pub base: Vec<f64>,
    pub perturbation: Vec<f64>,
    pub frequency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackingSpec {
    pub a: SinMatrixSpec,
    pub b: SinVectorSpec,
    pub row_blocks: Vec<usize>,
    pub initial: Vec<Vec<f64>>,
    #[serde(default = "default_det_floor")]
    pub det_floor: f64,
    /// Multiplies both perturbations.
    #[serde(default = "one")]
    pub amplitude: f64,
}

fn default_det_floor() -> f64 {
    DEFAULT_DET_FLOOR
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TreeSpec {
    Named(String),
    Edges(Vec<(usize, usize)>),
}

impl Default for TreeSpec {
    fn default() -> Self {
        TreeSpec::Named("path".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct LsqSpec {
    #[serde(default)]
    pub tree: TreeSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RateMethodSpec {
    #[default]
    Exhaustive,
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateSpec {
    #[serde(default)]
    pub method: RateMethodSpec,
    #[serde(default = "default_samples")]
    pub samples: u64,
}

fn default_samples() -> u64 {
    10_000
}

impl Default for RateSpec {
    fn default() -> Self {
        RateSpec {
            method: RateMethodSpec::Exhaustive,
            samples: default_samples(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
}

fn parse_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::config(path, e.into_inner().to_string())
    })
}

/// Parse and validate a configuration document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = parse_json(text)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Parse a graph literal such as `{"m": 3, "arcs": [[0, 1], [1, 2]]}`.
pub fn parse_graph_literal(text: &str) -> Result<Digraph> {
    let spec: GraphSpec = parse_json(text)?;
    spec.build("graph")
}

/// Parse a schedule spec; `m` is needed for seeded-random specs that omit it.
pub fn parse_schedule_spec(text: &str, m: usize) -> Result<GraphSchedule> {
    let spec: ScheduleSpec = parse_json(text)?;
    spec.build("schedule", m, 0)
}

/// Parse explicit per-agent event times with their gap bounds:
/// `{"lower": [...], "upper": [...], "times": [[...], ...]}`.
pub fn parse_event_schedule(text: &str) -> Result<EventSchedule> {
    let spec: AsyncSpec = parse_json(text)?;
    let times = spec
        .times
        .clone()
        .ok_or_else(|| Error::config("times", "explicit event times are required"))?;
    spec.check("", spec.lower.len())?;
    EventSchedule::from_times(times, spec.lower, spec.upper)
        .map_err(|e| Error::config("times", e.to_string()))
}

fn at(path: &str, field: &str) -> String {
    if path.is_empty() {
        field.to_string()
    } else {
        format!("{path}.{field}")
    }
}

fn dense(rows: &[Vec<f64>], path: &str) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 {
        return Err(Error::config(path, "matrix must be nonempty"));
    }
    if r > MAX_BLOCK_ROWS || c > MAX_DIM {
        return Err(Error::config(path, "matrix exceeds size limits"));
    }
    for (k, row) in rows.iter().enumerate() {
        if row.len() != c {
            return Err(Error::config(format!("{path}[{k}]"), "ragged matrix row"));
        }
        if row.iter().any(|x| !x.is_finite()) {
            return Err(Error::config(format!("{path}[{k}]"), "non-finite entry"));
        }
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn vector(v: &[f64], len: usize, path: &str) -> Result<DVector<f64>> {
    if v.len() != len {
        return Err(Error::config(path, format!("expected length {len}, got {}", v.len())));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::config(path, "non-finite entry"));
    }
    Ok(DVector::from_row_slice(v))
}

fn check_agent_count(m: usize, path: &str) -> Result<()> {
    if m == 0 || m > MAX_VERTICES {
        return Err(Error::config(path, format!("agent count must be in 1..={MAX_VERTICES}")));
    }
    Ok(())
}

impl GraphSpec {
    pub fn build(&self, path: &str) -> Result<Digraph> {
        check_agent_count(self.m, &at(path, "m"))?;
        Digraph::from_arcs(self.m, &self.arcs, self.self_arcs)
            .map_err(|e| Error::config(at(path, "arcs"), e.to_string()))
    }
}

impl ScheduleSpec {
    /// `m` is the agent count of the problem; `seed` is used when the spec
    /// does not pin its own.
    pub fn build(&self, path: &str, m: usize, seed: u64) -> Result<GraphSchedule> {
        let wrap = |field: &str, e: Error| Error::config(at(path, field), e.to_string());
        let sched = match self {
            ScheduleSpec::Fixed { graph } => {
                GraphSchedule::fixed(graph.build(&at(path, "graph"))?).map_err(|e| wrap("graph", e))?
            }
            ScheduleSpec::Periodic { period } => {
                let graphs = period
                    .iter()
                    .enumerate()
                    .map(|(k, g)| g.build(&format!("{}[{k}]", at(path, "period"))))
                    .collect::<Result<Vec<_>>>()?;
                GraphSchedule::periodic(graphs).map_err(|e| wrap("period", e))?
            }
            ScheduleSpec::SeededRandom {
                m: spec_m,
                seed: spec_seed,
                l,
                window_style,
                density,
            } => {
                let m = spec_m.unwrap_or(m);
                check_agent_count(m, &at(path, "m"))?;
                GraphSchedule::seeded_random(RandomScheduleParams {
                    m,
                    seed: spec_seed.unwrap_or(seed),
                    l: *l,
                    window_style: *window_style,
                    density: *density,
                })
                .map_err(|e| wrap("l", e))?
            }
        };
        if sched.m() != m {
            return Err(Error::config(
                path,
                format!("schedule has {} vertices, expected {m}", sched.m()),
            ));
        }
        Ok(sched)
    }
}

impl GeneratorSpec {
    fn check(&self, path: &str) -> Result<()> {
        check_agent_count(self.m, &at(path, "m"))?;
        if self.n == 0 || self.n > MAX_DIM {
            return Err(Error::config(at(path, "n"), format!("must be in 1..={MAX_DIM}")));
        }
        if self.block_rows.len() != self.m {
            return Err(Error::config(
                at(path, "block_rows"),
                format!("expected {} entries", self.m),
            ));
        }
        if self.block_rows.iter().any(|&r| r == 0 || r > MAX_BLOCK_ROWS) {
            return Err(Error::config(
                at(path, "block_rows"),
                format!("each block needs 1..={MAX_BLOCK_ROWS} rows"),
            ));
        }
        let rows: usize = self.block_rows.iter().sum();
        if let Some(c) = self.max_condition {
            if !(c.is_finite() && c >= 1.0) {
                return Err(Error::config(at(path, "max_condition"), "must be finite and at least 1"));
            }
        }
        if let Some(r) = self.rank {
            if r == 0 || r > rows.min(self.n) {
                return Err(Error::config(
                    at(path, "rank"),
                    format!("must be in 1..={}", rows.min(self.n)),
                ));
            }
        }
        Ok(())
    }

    /// Entries uniform in `[-1, 1]`. A reduced rank is realized as a
    /// product of two uniform factors. Solvable right-hand sides are
    /// `A x0` for a uniform `x0`; otherwise `b` is uniform.
    pub fn generate(&self, seed: u64) -> Result<Vec<AgentEquation>> {
        self.check("problem.generator")?;
        let mut rng = seeded(self.seed.unwrap_or(seed));
        let rows: usize = self.block_rows.iter().sum();
        let n = self.n;
        let rank = self.rank.unwrap_or(rows.min(n));
        let mut uniform = |r: usize, c: usize| DMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..=1.0));
        let mut draws = 0;
        let a = loop {
            let a = if rank < rows.min(n) {
                uniform(rows, rank) * uniform(rank, n)
            } else {
                uniform(rows, n)
            };
            let Some(bound) = self.max_condition else { break a };
            let sv = a.clone().svd(false, false).singular_values;
            let mut sorted: Vec<f64> = sv.iter().copied().collect();
            sorted.sort_by(|x, y| y.total_cmp(x));
            if sorted[rank - 1] > 0.0 && sorted[0] / sorted[rank - 1] <= bound {
                break a;
            }
            draws += 1;
            if draws >= MAX_GENERATOR_DRAWS {
                return Err(Error::config(
                    "problem.generator.max_condition",
                    format!("no draw in {MAX_GENERATOR_DRAWS} met the bound"),
                ));
            }
        };
        let b = if self.solvable {
            &a * uniform(n, 1).column(0)
        } else {
            uniform(rows, 1).column(0).into_owned()
        };
        split_rows(&a, &b, &self.block_rows)
    }
}

impl ProblemSpec {
    pub fn equations(&self, seed: u64) -> Result<Vec<AgentEquation>> {
        match self {
            ProblemSpec::Blocks(blocks) => {
                let path = "problem.blocks";
                check_agent_count(blocks.len(), path)?;
                let mut n = None;
                blocks
                    .iter()
                    .enumerate()
                    .map(|(i, blk)| {
                        let p = format!("{path}[{i}]");
                        let a = dense(&blk.a, &at(&p, "a"))?;
                        if *n.get_or_insert(a.ncols()) != a.ncols() {
                            return Err(Error::config(at(&p, "a"), "column count differs between agents"));
                        }
                        let b = vector(&blk.b, a.nrows(), &at(&p, "b"))?;
                        Ok(AgentEquation::new(a, b))
                    })
                    .collect()
            }
            ProblemSpec::Generator(g) => g.generate(seed),
        }
    }

    pub fn m(&self) -> usize {
        match self {
            ProblemSpec::Blocks(b) => b.len(),
            ProblemSpec::Generator(g) => g.m,
        }
    }
}

impl AsyncSpec {
    fn check(&self, path: &str, m: usize) -> Result<()> {
        check_agent_count(m, path)?;
        for (field, v) in [("lower", &self.lower), ("upper", &self.upper)] {
            if v.len() != m {
                return Err(Error::config(at(path, field), format!("expected {m} entries")));
            }
        }
        for i in 0..m {
            let (lo, hi) = (self.lower[i], self.upper[i]);
            if !(lo.is_finite() && hi.is_finite() && 0.0 < lo && lo < hi) {
                return Err(Error::config(
                    format!("{}[{i}]", at(path, "lower")),
                    "gap bounds must satisfy 0 < lower < upper",
                ));
            }
        }
        if let Some(times) = &self.times {
            if times.len() != m {
                return Err(Error::config(at(path, "times"), format!("expected {m} lists")));
            }
            if times.iter().any(|ts| ts.len() > MAX_EVENTS_PER_AGENT) {
                return Err(Error::config(at(path, "times"), "too many events"));
            }
        }
        if self.events == 0 || self.events > MAX_STEPS {
            return Err(Error::config(at(path, "events"), format!("must be in 1..={MAX_STEPS}")));
        }
        let span = self.events as f64 * self.upper.iter().copied().fold(0.0, f64::max);
        let fewest = self.lower.iter().copied().fold(f64::INFINITY, f64::min);
        if self.times.is_none() && span / fewest > (MAX_EVENTS_PER_AGENT as f64) {
            return Err(Error::config(at(path, "events"), "generated schedule would be too long"));
        }
        Ok(())
    }
}

impl TrackingSpec {
    pub fn build(&self) -> Result<(TimeVaryingProblem, Vec<DVector<f64>>)> {
        let path = "tracking";
        let base = dense(&self.a.base, "tracking.a.base")?;
        let n = base.nrows();
        let pert = dense(&self.a.perturbation, "tracking.a.perturbation")?;
        if base.shape() != (n, n) || pert.shape() != (n, n) {
            return Err(Error::config("tracking.a", "base and perturbation must be square and equal in size"));
        }
        for (field, f) in [("a.frequency", self.a.frequency), ("b.frequency", self.b.frequency), ("amplitude", self.amplitude)] {
            if !f.is_finite() {
                return Err(Error::config(at(path, field), "must be finite"));
            }
        }
        let a = SinusoidalMatrix {
            base,
            perturbation: pert,
            frequency: self.a.frequency,
        };
        let b = SinusoidalVector {
            base: vector(&self.b.base, n, "tracking.b.base")?,
            perturbation: vector(&self.b.perturbation, n, "tracking.b.perturbation")?,
            frequency: self.b.frequency,
        };
        let m = self.row_blocks.len();
        check_agent_count(m, "tracking.row_blocks")?;
        let tvp = TimeVaryingProblem::new(a, b, self.row_blocks.clone(), self.det_floor)
            .map_err(|e| Error::config("tracking.row_blocks", e.to_string()))?
            .scaled(self.amplitude);
        if self.initial.len() != m {
            return Err(Error::config("tracking.initial", format!("expected {m} states")));
        }
        let init = self
            .initial
            .iter()
            .enumerate()
            .map(|(i, x)| vector(x, n, &format!("tracking.initial[{i}]")))
            .collect::<Result<Vec<_>>>()?;
        Ok((tvp, init))
    }
}

impl TreeSpec {
    pub fn build(&self, m: usize) -> Result<TreeTopology> {
        let wrap = |e: Error| Error::config("lsq.tree", e.to_string());
        match self {
            TreeSpec::Named(name) if name == "path" => TreeTopology::path(m).map_err(wrap),
            TreeSpec::Named(name) if name == "star" => TreeTopology::star(m).map_err(wrap),
            TreeSpec::Named(name) => Err(Error::config(
                "lsq.tree",
                format!("unknown tree `{name}`; expected \"path\", \"star\" or an edge list"),
            )),
            TreeSpec::Edges(edges) => TreeTopology::incidence(m, edges).map_err(wrap),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        parse_config(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Static checks that need no numerical work.
    pub fn validate(&self) -> Result<()> {
        let e = &self.engine;
        if e.max_steps > MAX_STEPS {
            return Err(Error::config("engine.max_steps", format!("must be at most {MAX_STEPS}")));
        }
        if !(e.tol.is_finite() && e.tol > 0.0) {
            return Err(Error::config("engine.tol", "must be positive and finite"));
        }
        if let Some(h) = e.horizon {
            if h == 0 || h > MAX_STEPS {
                return Err(Error::config("engine.horizon", format!("must be in 1..={MAX_STEPS}")));
            }
        }
        let need = |present: bool, field: &str| {
            if present {
                Ok(())
            } else {
                Err(Error::config(field, format!("required in {:?} mode", self.mode).to_lowercase()))
            }
        };
        if self.mode == Mode::Tracking {
            need(self.tracking.is_some(), "tracking")?;
            need(self.schedule.is_some(), "schedule")?;
            return Ok(());
        }
        need(self.problem.is_some(), "problem")?;
        let problem = self.problem.as_ref().expect("checked above");
        if let ProblemSpec::Generator(g) = problem {
            g.check("problem.generator")?;
        }
        let m = problem.m();
        check_agent_count(m, "problem")?;
        match self.mode {
            Mode::Async => {
                need(self.async_events.is_some(), "async")?;
                self.async_events.as_ref().expect("checked").check("async", m)?;
            }
            Mode::Lsq => {
                if let Some(l) = &self.lsq {
                    l.tree.build(m)?;
                }
            }
            _ => {}
        }
        if self.mode != Mode::Rate {
            need(self.schedule.is_some(), "schedule")?;
        }
        Ok(())
    }
}
