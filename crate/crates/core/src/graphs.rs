//! Directed neighbor graphs on at most 64 vertices.
//!
//! An arc `(j, i)` means "j is a neighbor of i": agent j's state flows to
//! agent i. Each vertex stores its in-neighbors as a 64-bit mask.

use std::fmt;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded};

pub const MAX_VERTICES: usize = 64;

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Digraph {
    m: usize,
    /// `in_mask[i]` has bit `j` set iff `(j, i)` is an arc.
    in_mask: Vec<u64>,
}

impl fmt::Debug for Digraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Digraph")
            .field("m", &self.m)
            .field("arcs", &self.arcs().collect::<Vec<_>>())
            .finish()
    }
}

fn full_mask(m: usize) -> u64 {
    if m == 64 {
        u64::MAX
    } else {
        (1u64 << m) - 1
    }
}

impl Digraph {
    /// Graph with `m` vertices and no arcs.
    pub fn empty(m: usize) -> Result<Self> {
        if m == 0 || m > MAX_VERTICES {
            return Err(Error::contract(format!(
                "vertex count must be in 1..={MAX_VERTICES}, got {m}"
            )));
        }
        Ok(Digraph {
            m,
            in_mask: vec![0; m],
        })
    }

    pub fn self_loops(m: usize) -> Result<Self> {
        let mut g = Digraph::empty(m)?;
        for i in 0..m {
            g.in_mask[i] = 1 << i;
        }
        Ok(g)
    }

    pub fn complete(m: usize) -> Result<Self> {
        let mut g = Digraph::empty(m)?;
        g.in_mask.iter_mut().for_each(|mask| *mask = full_mask(m));
        Ok(g)
    }

    /// Directed ring `0 -> 1 -> ... -> m-1 -> 0` with self-arcs.
    pub fn ring(m: usize) -> Result<Self> {
        let mut g = Digraph::self_loops(m)?;
        for i in 0..m {
            g.in_mask[(i + 1) % m] |= 1 << i;
        }
        Ok(g)
    }

    /// Build from `(from, to)` pairs; self-arcs are added when `self_arcs`.
    pub fn from_arcs(m: usize, arcs: &[(usize, usize)], self_arcs: bool) -> Result<Self> {
        let mut g = if self_arcs {
            Digraph::self_loops(m)?
        } else {
            Digraph::empty(m)?
        };
        for &(j, i) in arcs {
            g.add_arc(j, i)?;
        }
        Ok(g)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn add_arc(&mut self, from: usize, to: usize) -> Result<()> {
        if from >= self.m || to >= self.m {
            return Err(Error::contract(format!(
                "arc ({from}, {to}) out of range for {} vertices",
                self.m
            )));
        }
        self.in_mask[to] |= 1 << from;
        Ok(())
    }

    pub fn has_arc(&self, from: usize, to: usize) -> bool {
        from < self.m && to < self.m && self.in_mask[to] & (1 << from) != 0
    }

    pub fn in_mask(&self, i: usize) -> u64 {
        self.in_mask[i]
    }

    /// In-neighbors of `i` in increasing order (includes `i` for neighbor graphs).
    pub fn in_neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        let mask = self.in_mask[i];
        (0..self.m).filter(move |j| mask & (1 << j) != 0)
    }

    pub fn in_degree(&self, i: usize) -> usize {
        self.in_mask[i].count_ones() as usize
    }

    /// All arcs `(from, to)`, ordered by `to` then `from`.
    pub fn arcs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.m).flat_map(move |i| self.in_neighbors(i).map(move |j| (j, i)))
    }

    pub fn arc_count(&self) -> usize {
        self.in_mask.iter().map(|m| m.count_ones() as usize).sum()
    }

    pub fn has_all_self_arcs(&self) -> bool {
        (0..self.m).all(|i| self.has_arc(i, i))
    }

    /// Arc set of `self` is contained in that of `other`.
    pub fn is_subgraph_of(&self, other: &Digraph) -> bool {
        self.m == other.m
            && self
                .in_mask
                .iter()
                .zip(&other.in_mask)
                .all(|(a, b)| a & !b == 0)
    }

    pub fn union(&self, other: &Digraph) -> Result<Digraph> {
        same_size(self, other)?;
        Ok(Digraph {
            m: self.m,
            in_mask: self
                .in_mask
                .iter()
                .zip(&other.in_mask)
                .map(|(a, b)| a | b)
                .collect(),
        })
    }

    /// Vertices reachable from `i` (including `i`), as a mask.
    pub fn reachable_from(&self, i: usize) -> u64 {
        // out-masks are the transpose of in-masks
        let out = self.out_masks();
        let mut seen = 1u64 << i;
        let mut frontier = seen;
        while frontier != 0 {
            let mut next = 0;
            let mut f = frontier;
            while f != 0 {
                let v = f.trailing_zeros() as usize;
                f &= f - 1;
                next |= out[v];
            }
            frontier = next & !seen;
            seen |= next;
        }
        seen
    }

    fn out_masks(&self) -> Vec<u64> {
        let mut out = vec![0u64; self.m];
        for (j, i) in self.arcs() {
            out[j] |= 1 << i;
        }
        out
    }

    pub fn is_strongly_connected(&self) -> bool {
        let all = full_mask(self.m);
        if self.reachable_from(0) != all {
            return false;
        }
        // every vertex reaches 0: reachability from 0 in the reversed graph
        let reversed = Digraph {
            m: self.m,
            in_mask: self.out_masks(),
        };
        reversed.reachable_from(0) == all
    }

    /// Vertices that are reachable from every vertex they can reach.
    pub fn essential_vertices(&self) -> Vec<usize> {
        let reach: Vec<u64> = (0..self.m).map(|i| self.reachable_from(i)).collect();
        (0..self.m)
            .filter(|&i| {
                let mut r = reach[i];
                while r != 0 {
                    let j = r.trailing_zeros() as usize;
                    r &= r - 1;
                    if reach[j] & (1 << i) == 0 {
                        return false;
                    }
                }
                true
            })
            .collect()
    }

    /// Equivalence classes of mutual reachability, each sorted, ordered by
    /// smallest member.
    pub fn mutually_reachable_classes(&self) -> Vec<Vec<usize>> {
        let reach: Vec<u64> = (0..self.m).map(|i| self.reachable_from(i)).collect();
        let mut assigned = 0u64;
        let mut classes = Vec::new();
        for i in 0..self.m {
            if assigned & (1 << i) != 0 {
                continue;
            }
            let class: Vec<usize> = (0..self.m)
                .filter(|&j| reach[i] & (1 << j) != 0 && reach[j] & (1 << i) != 0)
                .collect();
            for &j in &class {
                assigned |= 1 << j;
            }
            classes.push(class);
        }
        classes
    }

    /// Row-stochastic `D^{-1} A'`: row `i` averages over the in-neighbors of `i`.
    pub fn flocking_matrix(&self) -> Result<DMatrix<f64>> {
        if !self.has_all_self_arcs() {
            return Err(Error::contract(
                "flocking matrix requires a self-arc at every vertex",
            ));
        }
        let mut f = DMatrix::zeros(self.m, self.m);
        for i in 0..self.m {
            let w = 1.0 / self.in_degree(i) as f64;
            for j in self.in_neighbors(i) {
                f[(i, j)] = w;
            }
        }
        Ok(f)
    }

    /// Support graph of a nonnegative matrix: arc `(j, i)` iff `s[i][j] > 0`.
    pub fn support_of(s: &DMatrix<f64>) -> Result<Digraph> {
        if !s.is_square() {
            return Err(Error::shape("support graph needs a square matrix"));
        }
        let mut g = Digraph::empty(s.nrows())?;
        for i in 0..s.nrows() {
            for j in 0..s.ncols() {
                if s[(i, j)] > 0.0 {
                    g.in_mask[i] |= 1 << j;
                }
            }
        }
        Ok(g)
    }
}

fn same_size(a: &Digraph, b: &Digraph) -> Result<()> {
    if a.m != b.m {
        return Err(Error::shape(format!(
            "vertex counts differ: {} vs {}",
            a.m, b.m
        )));
    }
    Ok(())
}

/// `G_q ∘ G_p`: arc `(i, j)` iff some `k` has `(i, k)` in `G_p` and `(k, j)` in `G_q`.
pub fn compose(g_q: &Digraph, g_p: &Digraph) -> Result<Digraph> {
    same_size(g_q, g_p)?;
    let in_mask = (0..g_q.m)
        .map(|j| {
            let mut acc = 0u64;
            let mut mids = g_q.in_mask[j];
            while mids != 0 {
                let k = mids.trailing_zeros() as usize;
                mids &= mids - 1;
                acc |= g_p.in_mask[k];
            }
            acc
        })
        .collect();
    Ok(Digraph { m: g_q.m, in_mask })
}

/// Composition of a sequence in time order: `G_last ∘ ... ∘ G_first`.
pub fn compose_sequence(seq: &[Digraph]) -> Result<Digraph> {
    let (first, rest) = seq
        .split_first()
        .ok_or_else(|| Error::contract("cannot compose an empty sequence"))?;
    rest.iter().try_fold(first.clone(), |acc, g| compose(g, &acc))
}

/// Every complete window `G_{kl+τ₀-1} ∘ ... ∘ G_{(k-1)l+τ₀}` (1-based) inside
/// `seq` is strongly connected.
pub fn is_repeatedly_jointly_strongly_connected(
    seq: &[Digraph],
    l: usize,
    tau0: usize,
) -> Result<bool> {
    if l == 0 || tau0 == 0 {
        return Err(Error::contract("window length and offset must be positive"));
    }
    let needed = tau0 + l - 1;
    if seq.len() < needed {
        return Err(Error::InsufficientLength {
            needed,
            got: seq.len(),
        });
    }
    let mut start = tau0 - 1;
    while start + l <= seq.len() {
        if !compose_sequence(&seq[start..start + l])?.is_strongly_connected() {
            return Ok(false);
        }
        start += l;
    }
    Ok(true)
}

/// How the seeded-random generator lays out connectivity inside a window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum WindowStyle {
    /// A whole directed ring is planted at one seeded slot of each window.
    #[default]
    PlantedRing,
    /// The arcs of a seeded ring are scattered over the window's slots, so
    /// single graphs are usually disconnected while every window composes to
    /// a strongly connected graph.
    SplitRing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomScheduleParams {
    pub m: usize,
    pub seed: u64,
    /// Window length.
    pub l: usize,
    #[serde(default)]
    pub window_style: WindowStyle,
    /// Probability of each extra random arc.
    #[serde(default = "default_density")]
    pub density: f64,
}

fn default_density() -> f64 {
    0.15
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScheduleKind {
    Fixed(Digraph),
    Periodic(Vec<Digraph>),
    SeededRandom(RandomScheduleParams),
}

/// Deterministic generator of the neighbor-graph sequence `N(1), N(2), ...`.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSchedule {
    kind: ScheduleKind,
    horizon: Option<u64>,
}

impl GraphSchedule {
    pub fn fixed(g: Digraph) -> Result<Self> {
        check_neighbor_graph(&g)?;
        Ok(GraphSchedule {
            kind: ScheduleKind::Fixed(g),
            horizon: None,
        })
    }

    pub fn periodic(period: Vec<Digraph>) -> Result<Self> {
        let first = period
            .first()
            .ok_or_else(|| Error::contract("periodic schedule needs at least one graph"))?;
        for g in &period {
            same_size(first, g)?;
            check_neighbor_graph(g)?;
        }
        Ok(GraphSchedule {
            kind: ScheduleKind::Periodic(period),
            horizon: None,
        })
    }

    pub fn seeded_random(params: RandomScheduleParams) -> Result<Self> {
        if params.m == 0 || params.m > MAX_VERTICES {
            return Err(Error::contract(format!(
                "vertex count must be in 1..={MAX_VERTICES}"
            )));
        }
        if params.l == 0 {
            return Err(Error::contract("window length must be positive"));
        }
        if !(0.0..=1.0).contains(&params.density) {
            return Err(Error::contract("density must lie in [0, 1]"));
        }
        Ok(GraphSchedule {
            kind: ScheduleKind::SeededRandom(params),
            horizon: None,
        })
    }

    pub fn with_horizon(mut self, horizon: u64) -> Self {
        self.horizon = Some(horizon);
        self
    }

    pub fn kind(&self) -> &ScheduleKind {
        &self.kind
    }

    pub fn m(&self) -> usize {
        match &self.kind {
            ScheduleKind::Fixed(g) => g.m(),
            ScheduleKind::Periodic(p) => p[0].m(),
            ScheduleKind::SeededRandom(p) => p.m,
        }
    }

    /// `N(t)` for `t >= 1`.
    pub fn graph_at(&self, t: u64) -> Result<Digraph> {
        if t == 0 {
            return Err(Error::contract("schedule time starts at 1"));
        }
        if let Some(h) = self.horizon {
            if t > h {
                return Err(Error::HorizonExceeded { t, horizon: h });
            }
        }
        match &self.kind {
            ScheduleKind::Fixed(g) => Ok(g.clone()),
            ScheduleKind::Periodic(p) => Ok(p[((t - 1) % p.len() as u64) as usize].clone()),
            ScheduleKind::SeededRandom(p) => Ok(random_graph(p, t)),
        }
    }

    /// `N(1), ..., N(len)`.
    pub fn take(&self, len: usize) -> Result<Vec<Digraph>> {
        (1..=len as u64).map(|t| self.graph_at(t)).collect()
    }
}

fn check_neighbor_graph(g: &Digraph) -> Result<()> {
    if !g.has_all_self_arcs() {
        return Err(Error::contract("neighbor graphs must have a self-arc at every vertex"));
    }
    Ok(())
}

fn seeded_ring_order(m: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(rng);
    order
}

fn random_graph(p: &RandomScheduleParams, t: u64) -> Digraph {
    let m = p.m;
    let l = p.l as u64;
    let window = (t - 1) / l;
    let slot = ((t - 1) % l) as usize;

    // per-window layout is a function of (seed, window) only
    let mut window_rng = seeded(derive_seed(p.seed, &[0x57, window]));
    let order = seeded_ring_order(m, &mut window_rng);
    let ring_arcs: Vec<(usize, usize)> = if m > 1 {
        (0..m).map(|k| (order[k], order[(k + 1) % m])).collect()
    } else {
        Vec::new()
    };
    let mut g = Digraph::self_loops(m).expect("validated vertex count");
    match p.window_style {
        WindowStyle::PlantedRing => {
            let planted = window_rng.gen_range(0..p.l);
            if planted == slot {
                for &(j, i) in &ring_arcs {
                    g.in_mask[i] |= 1 << j;
                }
            }
        }
        WindowStyle::SplitRing => {
            for &(j, i) in &ring_arcs {
                if window_rng.gen_range(0..p.l) == slot {
                    g.in_mask[i] |= 1 << j;
                }
            }
        }
    }

    let mut rng = seeded(derive_seed(p.seed, &[0x47, t]));
    for i in 0..m {
        for j in 0..m {
            if i != j && rng.gen::<f64>() < p.density {
                g.in_mask[i] |= 1 << j;
            }
        }
    }
    g
}
