//! Interference graphs and their admissible schedules.
//!
//! Nodes are `0..n` with `n <= 32`, so a schedule (a stable set of the
//! graph) fits in one `u32` bitmask. Every graph enumerates its stable sets
//! once at construction; all measure and generator computations index into
//! that catalog.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hard cap on the node count.
pub const MAX_NODES: usize = 32;

/// Hard cap on the number of stable sets kept in a catalog.
pub const MAX_STABLE_SETS: usize = 1 << 22;

/// A schedule: the set of active nodes, as a bitmask (bit `v` = node `v`).
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Schedule(pub u32);

impl Schedule {
    pub const EMPTY: Schedule = Schedule(0);

    #[inline]
    pub fn singleton(v: usize) -> Self {
        Schedule(1 << v)
    }

    #[inline]
    pub fn is_active(self, v: usize) -> bool {
        self.0 >> v & 1 == 1
    }

    #[inline]
    pub fn with(self, v: usize) -> Self {
        Schedule(self.0 | 1 << v)
    }

    #[inline]
    pub fn without(self, v: usize) -> Self {
        Schedule(self.0 & !(1 << v))
    }

    /// Number of active nodes.
    #[inline]
    pub fn size(self) -> usize {
        self.0.count_ones() as usize
    }

    #[inline]
    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn active_nodes(self) -> impl Iterator<Item = usize> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let v = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(v)
            }
        })
    }

    /// Builds a schedule from a 0/1 indicator vector.
    pub fn from_indicator(indicator: &[u8]) -> Result<Self> {
        if indicator.len() > MAX_NODES {
            return Err(Error::Capacity(format!(
                "indicator of length {} exceeds {MAX_NODES} nodes",
                indicator.len()
            )));
        }
        let mut bits = 0u32;
        for (v, &x) in indicator.iter().enumerate() {
            match x {
                0 => {}
                1 => bits |= 1 << v,
                other => {
                    return Err(Error::invalid(
                        "indicator",
                        format!("entry {v} is {other}, expected 0 or 1"),
                    ))
                }
            }
        }
        Ok(Schedule(bits))
    }

    pub fn to_indicator(self, n: usize) -> Vec<u8> {
        (0..n).map(|v| self.is_active(v) as u8).collect()
    }

    /// Indicator string with node 0 first, e.g. `"0101"`.
    pub fn label(self, n: usize) -> String {
        (0..n)
            .map(|v| if self.is_active(v) { '1' } else { '0' })
            .collect()
    }
}

impl fmt::Debug for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Schedule({:#b})", self.0)
    }
}

/// Every stable set of a graph, with the maximum size and the maximum sets.
#[derive(Debug, Clone, PartialEq)]
pub struct StableSetCatalog {
    /// Sorted by bitmask value; index 0 is always the empty schedule.
    all_sets: Vec<Schedule>,
    upsilon: usize,
    /// Indices into `all_sets` of the sets of size `upsilon`.
    maximum: Vec<usize>,
}

impl StableSetCatalog {
    pub fn all_sets(&self) -> &[Schedule] {
        &self.all_sets
    }

    pub fn len(&self) -> usize {
        self.all_sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.all_sets.is_empty()
    }

    /// Maximum stable-set size.
    pub fn upsilon(&self) -> usize {
        self.upsilon
    }

    pub fn maximum_indices(&self) -> &[usize] {
        &self.maximum
    }

    pub fn maximum_sets(&self) -> impl Iterator<Item = Schedule> + '_ {
        self.maximum.iter().map(|&i| self.all_sets[i])
    }

    /// Position of `s` in [`Self::all_sets`], if it is a stable set.
    pub fn index_of(&self, s: Schedule) -> Option<usize> {
        self.all_sets.binary_search(&s).ok()
    }
}

/// Simple undirected conflict graph on nodes `0..n`.
#[derive(Debug, Clone, PartialEq)]
pub struct InterferenceGraph {
    n: usize,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<u32>,
    catalog: StableSetCatalog,
}

impl InterferenceGraph {
    /// Builds a graph from an explicit edge list. Edges are unordered; each
    /// pair may appear once.
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n == 0 {
            return Err(Error::Graph("node count must be at least 1".into()));
        }
        if n > MAX_NODES {
            return Err(Error::Capacity(format!(
                "{n} nodes exceeds the {MAX_NODES}-node limit for exhaustive enumeration"
            )));
        }
        let mut neighbors = vec![0u32; n];
        let mut normalized = Vec::with_capacity(edges.len());
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::NodeOutOfRange(i, j, n));
            }
            if i == j {
                return Err(Error::SelfLoop(i));
            }
            if neighbors[i] >> j & 1 == 1 {
                return Err(Error::DuplicateEdge(i, j));
            }
            neighbors[i] |= 1 << j;
            neighbors[j] |= 1 << i;
            normalized.push((i.min(j), i.max(j)));
        }
        let catalog = enumerate(&neighbors)?;
        Ok(InterferenceGraph {
            n,
            edges: normalized,
            neighbors,
            catalog,
        })
    }

    pub fn complete(n: usize) -> Result<Self> {
        let edges: Vec<_> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .collect();
        Self::new(n, &edges)
    }

    /// Cycle `0-1-...-(n-1)-0`; needs at least three nodes.
    pub fn cycle(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::Graph(format!("cycle needs at least 3 nodes, got {n}")));
        }
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        Self::new(n, &edges)
    }

    pub fn path(n: usize) -> Result<Self> {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Self::new(n, &edges)
    }

    pub fn edgeless(n: usize) -> Result<Self> {
        Self::new(n, &[])
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    /// Edges as `(min, max)` pairs in insertion order.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn are_adjacent(&self, v: usize, w: usize) -> bool {
        self.neighbors[v] >> w & 1 == 1
    }

    /// Neighbor set of `v` as a bitmask.
    #[inline]
    pub fn neighbor_mask(&self, v: usize) -> u32 {
        self.neighbors[v]
    }

    pub fn is_complete(&self) -> bool {
        self.edges.len() == self.n * (self.n - 1) / 2
    }

    /// `v` may activate from `s`: it is inactive and no neighbor is active.
    #[inline]
    pub fn can_activate(&self, s: Schedule, v: usize) -> bool {
        !s.is_active(v) && s.0 & self.neighbors[v] == 0
    }

    pub fn is_stable_schedule(&self, s: Schedule) -> bool {
        s.active_nodes().all(|v| s.0 & self.neighbors[v] == 0)
    }

    /// Checks the stable-set constraint on an indicator vector.
    pub fn is_stable(&self, indicator: &[u8]) -> Result<bool> {
        if indicator.len() != self.n {
            return Err(Error::LengthMismatch {
                what: "indicator",
                expected: self.n,
                got: indicator.len(),
            });
        }
        Ok(self.is_stable_schedule(Schedule::from_indicator(indicator)?))
    }

    pub fn stable_sets(&self) -> &StableSetCatalog {
        &self.catalog
    }
}

/// Returns the cached catalog of stable sets.
pub fn enumerate_stable_sets(g: &InterferenceGraph) -> &StableSetCatalog {
    g.stable_sets()
}

fn enumerate(neighbors: &[u32]) -> Result<StableSetCatalog> {
    let n = neighbors.len();
    let mut sets = Vec::new();
    // Depth-first over nodes in increasing order; `allowed` are nodes > the
    // last chosen one that conflict with nothing chosen so far.
    let full: u32 = if n == 32 { u32::MAX } else { (1u32 << n) - 1 };
    let mut stack = vec![(0u32, full)];
    while let Some((chosen, allowed)) = stack.pop() {
        sets.push(Schedule(chosen));
        if sets.len() > MAX_STABLE_SETS {
            return Err(Error::Capacity(format!(
                "graph has more than {MAX_STABLE_SETS} stable sets"
            )));
        }
        let mut rest = allowed;
        while rest != 0 {
            let v = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            // only nodes after v remain candidates, to emit each set once
            let higher = if v == 31 { 0 } else { u32::MAX << (v + 1) };
            stack.push((chosen | 1 << v, allowed & higher & !neighbors[v]));
        }
    }
    sets.sort_unstable();
    let upsilon = sets.iter().map(|s| s.size()).max().unwrap_or(0);
    let maximum = sets
        .iter()
        .enumerate()
        .filter(|(_, s)| s.size() == upsilon)
        .map(|(i, _)| i)
        .collect();
    Ok(StableSetCatalog {
        all_sets: sets,
        upsilon,
        maximum,
    })
}

/// Graph description as it appears in config files: a preset string such as
/// `"cycle:4"` or an explicit `{"nodes": n, "edges": [[i, j], ...]}` object.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GraphSpec {
    Preset(String),
    Explicit { nodes: usize, edges: Vec<[usize; 2]> },
}

impl GraphSpec {
    pub fn build(&self) -> Result<InterferenceGraph> {
        match self {
            GraphSpec::Preset(s) => s.parse(),
            GraphSpec::Explicit { nodes, edges } => {
                let pairs: Vec<_> = edges.iter().map(|e| (e[0], e[1])).collect();
                InterferenceGraph::new(*nodes, &pairs)
            }
        }
    }
}

impl FromStr for InterferenceGraph {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, count) = s
            .split_once(':')
            .ok_or_else(|| Error::Graph(format!("preset `{s}` is not of the form kind:n")))?;
        let n: usize = count
            .trim()
            .parse()
            .map_err(|_| Error::Graph(format!("preset `{s}` has a non-integer node count")))?;
        match kind.trim() {
            "complete" => Self::complete(n),
            "cycle" => Self::cycle(n),
            "path" => Self::path(n),
            "edgeless" => Self::edgeless(n),
            other => Err(Error::Graph(format!("unknown preset `{other}`"))),
        }
    }
}
