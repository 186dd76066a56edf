//! Communication graphs: construction, generation, identity assignment and
//! the BFS-based queries the verifier relies on.
//!
//! A [`Topology`] is immutable once built. Every constructor runs the same
//! validation: symmetric adjacency without self-loops, connectivity, the tree
//! edge count when the kind is [`TopologyKind::Tree`], and distinct identities
//! inside every closed 2-neighborhood.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Positional subscript of a process, 1-based. Only the engine and the
/// verifier see it; it never travels inside a message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProcessIndex(pub usize);

impl ProcessIndex {
    /// Zero-based position in per-process vectors.
    pub fn slot(self) -> usize {
        self.0 - 1
    }

    pub fn from_slot(slot: usize) -> Self {
        ProcessIndex(slot + 1)
    }
}

impl fmt::Display for ProcessIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

/// Identity carried in protocol messages. Distinct within distance 2, may be
/// reused further away.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Identity(pub u64);

impl fmt::Display for Identity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "id{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TopologyKind {
    Tree,
    General,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdentityMode {
    GlobalUnique,
    /// Greedy reuse across processes at distance > 2.
    Distance2Reuse,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TopologyError {
    #[error("a topology needs at least one process")]
    Empty,
    #[error("process index {index} is outside 1..={n}")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("self-loop on {0}")]
    SelfLoop(ProcessIndex),
    #[error("edge ({0}, {1}) listed twice")]
    DuplicateEdge(ProcessIndex, ProcessIndex),
    #[error("graph is not connected")]
    DisconnectedGraph,
    #[error("not a tree: {edges} edges for {n} processes")]
    NotATree { edges: usize, n: usize },
    #[error("{given} identities given for {n} processes")]
    IdentityCountMismatch { given: usize, n: usize },
    #[error("{a} and {b} are within distance 2 and share {identity}")]
    IdentityClashWithin2Hops {
        a: ProcessIndex,
        b: ProcessIndex,
        identity: Identity,
    },
    #[error("no tree on {n} processes has maximum degree {max_degree}")]
    InfeasibleDegreeCap { n: usize, max_degree: usize },
    #[error("malformed topology file: {0}")]
    Malformed(String),
    #[error("unknown built-in topology `{0}`")]
    UnknownBuiltin(String),
}

/// Immutable communication graph with identities.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    kind: TopologyKind,
    adjacency: Vec<Vec<ProcessIndex>>,
    identities: Vec<Identity>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphMetrics {
    pub delta: usize,
    pub depth: usize,
    pub per_process_degree: Vec<usize>,
}

impl Topology {
    /// Builds and validates a topology. Without identities, process `i`
    /// receives identity `i`.
    pub fn build(
        n: usize,
        edges: &[(usize, usize)],
        identities: Option<Vec<Identity>>,
        kind: TopologyKind,
    ) -> Result<Topology, TopologyError> {
        if n == 0 {
            return Err(TopologyError::Empty);
        }
        let mut adjacency: Vec<BTreeSet<ProcessIndex>> = vec![BTreeSet::new(); n];
        for &(a, b) in edges {
            for index in [a, b] {
                if index == 0 || index > n {
                    return Err(TopologyError::IndexOutOfRange { index, n });
                }
            }
            let (pa, pb) = (ProcessIndex(a), ProcessIndex(b));
            if a == b {
                return Err(TopologyError::SelfLoop(pa));
            }
            if !adjacency[pa.slot()].insert(pb) {
                return Err(TopologyError::DuplicateEdge(pa.min(pb), pa.max(pb)));
            }
            adjacency[pb.slot()].insert(pa);
        }
        if kind == TopologyKind::Tree && edges.len() != n - 1 {
            return Err(TopologyError::NotATree { edges: edges.len(), n });
        }
        let identities = match identities {
            Some(ids) if ids.len() != n => return Err(TopologyError::IdentityCountMismatch { given: ids.len(), n }),
            Some(ids) => ids,
            None => (1..=n as u64).map(Identity).collect(),
        };
        let topology = Topology {
            kind,
            adjacency: adjacency.into_iter().map(|set| set.into_iter().collect()).collect(),
            identities,
        };
        if topology.bfs_distances(ProcessIndex(1)).iter().any(Option::is_none) {
            return Err(TopologyError::DisconnectedGraph);
        }
        topology.validate_identities()?;
        Ok(topology)
    }

    /// Checks that every closed 1-neighborhood carries pairwise distinct
    /// identities, which covers every pair at distance 1 or 2.
    pub fn validate_identities(&self) -> Result<(), TopologyError> {
        for center in self.processes() {
            let mut seen: Vec<(Identity, ProcessIndex)> = std::iter::once(center)
                .chain(self.neighbors(center).iter().copied())
                .map(|p| (self.identity(p), p))
                .collect();
            seen.sort();
            for pair in seen.windows(2) {
                if pair[0].0 == pair[1].0 {
                    let (a, b) = (pair[0].1.min(pair[1].1), pair[0].1.max(pair[1].1));
                    return Err(TopologyError::IdentityClashWithin2Hops {
                        a,
                        b,
                        identity: pair[0].0,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.adjacency.len()
    }

    pub fn kind(&self) -> TopologyKind {
        self.kind
    }

    pub fn processes(&self) -> impl Iterator<Item = ProcessIndex> + '_ {
        (0..self.n()).map(ProcessIndex::from_slot)
    }

    pub fn neighbors(&self, p: ProcessIndex) -> &[ProcessIndex] {
        &self.adjacency[p.slot()]
    }

    pub fn degree(&self, p: ProcessIndex) -> usize {
        self.adjacency[p.slot()].len()
    }

    pub fn identity(&self, p: ProcessIndex) -> Identity {
        self.identities[p.slot()]
    }

    pub fn identities(&self) -> &[Identity] {
        &self.identities
    }

    pub fn neighbor_identities(&self, p: ProcessIndex) -> BTreeSet<Identity> {
        self.neighbors(p).iter().map(|&q| self.identity(q)).collect()
    }

    /// Resolves an identity as seen from `p`: `p` itself or one of its
    /// neighbors. Unique because identities are distinct within distance 2.
    pub fn resolve_local(&self, p: ProcessIndex, id: Identity) -> Option<ProcessIndex> {
        std::iter::once(p)
            .chain(self.neighbors(p).iter().copied())
            .find(|&q| self.identity(q) == id)
    }

    pub fn contains(&self, p: ProcessIndex) -> bool {
        p.0 >= 1 && p.0 <= self.n()
    }

    /// Sorted edge list with `a < b`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut edges = Vec::new();
        for p in self.processes() {
            for &q in self.neighbors(p) {
                if p < q {
                    edges.push((p.0, q.0));
                }
            }
        }
        edges
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Hop distance from `source` to every process; `None` when unreachable.
    pub fn bfs_distances(&self, source: ProcessIndex) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n()];
        let mut queue = VecDeque::new();
        dist[source.slot()] = Some(0);
        queue.push_back(source);
        while let Some(p) = queue.pop_front() {
            let d = dist[p.slot()].unwrap_or(0);
            for &q in self.neighbors(p) {
                if dist[q.slot()].is_none() {
                    dist[q.slot()] = Some(d + 1);
                    queue.push_back(q);
                }
            }
        }
        dist
    }

    /// Shortest-path hop count. Topologies are connected, so this is total.
    pub fn graph_distance(&self, a: ProcessIndex, b: ProcessIndex) -> usize {
        self.bfs_distances(a)[b.slot()].expect("validated topologies are connected")
    }

    /// Processes at distance exactly 1 or 2 from `p`, ascending.
    pub fn within_two_hops(&self, p: ProcessIndex) -> BTreeSet<ProcessIndex> {
        let mut out = BTreeSet::new();
        for &q in self.neighbors(p) {
            out.insert(q);
            out.extend(self.neighbors(q).iter().copied());
        }
        out.remove(&p);
        out
    }

    pub fn metrics(&self, root: ProcessIndex) -> GraphMetrics {
        let per_process_degree: Vec<usize> = self.adjacency.iter().map(Vec::len).collect();
        let depth = self
            .bfs_distances(root)
            .into_iter()
            .map(|d| d.expect("validated topologies are connected"))
            .max()
            .unwrap_or(0);
        GraphMetrics {
            delta: per_process_degree.iter().copied().max().unwrap_or(0),
            depth,
            per_process_degree,
        }
    }

    /// Re-assigns identities. Both modes keep identities distinct within
    /// distance 2; reuse mode walks BFS order from a seeded start process and
    /// gives each process the smallest identity not already taken within two
    /// hops.
    pub fn assign_identities(&self, mode: IdentityMode, seed: u64) -> Topology {
        let identities = match mode {
            IdentityMode::GlobalUnique => (1..=self.n() as u64).map(Identity).collect(),
            IdentityMode::Distance2Reuse => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let start = ProcessIndex(rng.gen_range(1..=self.n()));
                let mut assigned: Vec<Option<Identity>> = vec![None; self.n()];
                for p in self.bfs_order(start) {
                    let taken: BTreeSet<Identity> = self
                        .within_two_hops(p)
                        .into_iter()
                        .filter_map(|q| assigned[q.slot()])
                        .collect();
                    let id = (1..)
                        .map(Identity)
                        .find(|id| !taken.contains(id))
                        .expect("unbounded range");
                    assigned[p.slot()] = Some(id);
                }
                assigned.into_iter().map(|id| id.expect("BFS reaches all")).collect()
            }
        };
        Topology {
            kind: self.kind,
            adjacency: self.adjacency.clone(),
            identities,
        }
    }

    fn bfs_order(&self, start: ProcessIndex) -> Vec<ProcessIndex> {
        let mut seen = vec![false; self.n()];
        let mut order = Vec::with_capacity(self.n());
        let mut queue = VecDeque::from([start]);
        seen[start.slot()] = true;
        while let Some(p) = queue.pop_front() {
            order.push(p);
            for &q in self.neighbors(p) {
                if !seen[q.slot()] {
                    seen[q.slot()] = true;
                    queue.push_back(q);
                }
            }
        }
        order
    }

    /// Adds a new leaf attached to `parent` carrying `identity`. Returns the
    /// grown topology and the index of the new process.
    pub fn with_leaf(
        &self,
        parent: ProcessIndex,
        identity: Identity,
    ) -> Result<(Topology, ProcessIndex), TopologyError> {
        let joiner = ProcessIndex(self.n() + 1);
        let mut edges = self.edges();
        edges.push((parent.0, joiner.0));
        let mut identities = self.identities.clone();
        identities.push(identity);
        let grown = Topology::build(self.n() + 1, &edges, Some(identities), self.kind)?;
        Ok((grown, joiner))
    }

    pub fn to_file(&self) -> TopologyFile {
        TopologyFile {
            n: self.n(),
            kind: self.kind,
            edges: self.edges(),
            identities: Some(self.identities.iter().map(|id| id.0).collect()),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("topology serializes")
    }

    pub fn from_json(text: &str) -> Result<Topology, TopologyError> {
        let file: TopologyFile = serde_json::from_str(text).map_err(|e| TopologyError::Malformed(e.to_string()))?;
        file.into_topology()
    }
}

/// On-disk topology schema (JSON):
///
/// ```json
/// { "n": 3, "kind": "tree", "edges": [[1, 2], [2, 3]], "identities": [1, 2, 3] }
/// ```
///
/// `identities` is optional on input and always written on output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopologyFile {
    pub n: usize,
    pub kind: TopologyKind,
    pub edges: Vec<(usize, usize)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub identities: Option<Vec<u64>>,
}

impl TopologyFile {
    pub fn into_topology(self) -> Result<Topology, TopologyError> {
        let ids = self.identities.map(|ids| ids.into_iter().map(Identity).collect());
        Topology::build(self.n, &self.edges, ids, self.kind)
    }
}

/// Random tree on `n` processes whose degrees never exceed `max_degree`.
/// Each new process attaches to a uniformly chosen process with spare
/// capacity; labels are then shuffled so process 1 is not special.
pub fn generate_random_tree(n: usize, max_degree: usize, seed: u64) -> Result<Topology, TopologyError> {
    if n == 0 {
        return Err(TopologyError::Empty);
    }
    if (n >= 3 && max_degree < 2) || (n == 2 && max_degree < 1) {
        return Err(TopologyError::InfeasibleDegreeCap { n, max_degree });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut degree = vec![0usize; n];
    let mut open: Vec<usize> = vec![0];
    let mut raw_edges = Vec::with_capacity(n.saturating_sub(1));
    for v in 1..n {
        let pick = rng.gen_range(0..open.len());
        let u = open[pick];
        raw_edges.push((u, v));
        degree[u] += 1;
        degree[v] += 1;
        if degree[u] >= max_degree {
            open.swap_remove(pick);
        }
        if degree[v] < max_degree {
            open.push(v);
        }
    }
    let mut labels: Vec<usize> = (1..=n).collect();
    labels.shuffle(&mut rng);
    let edges: Vec<(usize, usize)> = raw_edges.into_iter().map(|(u, v)| (labels[u], labels[v])).collect();
    Topology::build(n, &edges, None, TopologyKind::Tree)
}

/// Random connected general graph: a random spanning tree plus `extra_edges`
/// chords (fewer if the graph saturates).
pub fn generate_random_connected_graph(n: usize, extra_edges: usize, seed: u64) -> Result<Topology, TopologyError> {
    let tree = generate_random_tree(n, n.max(2), seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x5bd1_e995));
    let mut present: BTreeSet<(usize, usize)> = tree.edges().into_iter().collect();
    let max_edges = n * (n - 1) / 2;
    let target = (present.len() + extra_edges).min(max_edges);
    while present.len() < target {
        let a = rng.gen_range(1..=n);
        let b = rng.gen_range(1..=n);
        if a != b {
            present.insert((a.min(b), a.max(b)));
        }
    }
    let edges: Vec<(usize, usize)> = present.into_iter().collect();
    Topology::build(n, &edges, None, TopologyKind::General)
}

pub const BUILTIN_NAMES: [&str; 5] = ["singleton", "path3", "star4", "table1", "binary15"];

/// Named fixtures. `table1` is the 5-process network p1~{p2,p4},
/// p2~{p1,p3,p5}, p3~{p2,p4}.
pub fn builtin(name: &str) -> Result<Topology, TopologyError> {
    match name {
        "singleton" => Topology::build(1, &[], None, TopologyKind::Tree),
        "path3" => Topology::build(3, &[(1, 2), (2, 3)], None, TopologyKind::Tree),
        "star4" => Topology::build(5, &[(1, 2), (1, 3), (1, 4), (1, 5)], None, TopologyKind::Tree),
        "table1" => Topology::build(
            5,
            &[(1, 2), (1, 4), (2, 3), (2, 5), (3, 4)],
            None,
            TopologyKind::General,
        ),
        "binary15" => {
            let edges: Vec<(usize, usize)> = (2..=15).map(|c| (c / 2, c)).collect();
            Topology::build(15, &edges, None, TopologyKind::Tree)
        }
        other => Err(TopologyError::UnknownBuiltin(other.to_string())),
    }
}
