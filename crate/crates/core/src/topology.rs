//! Communication graph with per-direction link parameters.
//!
//! Every undirected edge `(u, v)` carries a forward (`u → v`) and a backward
//! (`v → u`) base delay plus a shared jitter width. Edge weights for the
//! synchronisation algorithm are the static per-edge estimation-error bounds
//! returned by [`edge_kappa`]; all weighted distances in the crate are taken
//! over those weights.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{internal, param, Result};

/// Relative slack used when comparing physical parameters against their bounds.
const REL_TOL: f64 = 1e-12;

/// Dense node index in `0..n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Link parameters of one undirected edge, in seconds unless noted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeParams {
    /// Base delay in the `u → v` direction.
    pub fwd_delay: f64,
    /// Base delay in the `v → u` direction.
    pub bwd_delay: f64,
    /// Width of the additive per-message jitter; samples lie in `[base, base + jitter]`.
    pub jitter: f64,
    /// Path asymmetry bound (dimensionless fraction).
    pub eps_d: f64,
    /// Measurement uncertainty bound.
    pub eps_m: f64,
    /// Descriptive physical length. Not used by the algorithm.
    pub length: f64,
    /// Optional scripted `u → v` delays, replayed cyclically instead of sampling.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fwd_script: Option<Vec<f64>>,
    /// Optional scripted `v → u` delays.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bwd_script: Option<Vec<f64>>,
}

impl EdgeParams {
    /// Symmetric link with no jitter, handy for tests and presets.
    pub fn symmetric(delay: f64, eps_d: f64, eps_m: f64) -> Self {
        Self {
            fwd_delay: delay,
            bwd_delay: delay,
            jitter: 0.0,
            eps_d,
            eps_m,
            length: 1.0,
            fwd_script: None,
            bwd_script: None,
        }
    }

    /// Worst-case forward delay `d_{u,v}`.
    pub fn fwd_bound(&self) -> f64 {
        self.fwd_delay + self.jitter
    }

    /// Worst-case backward delay `d_{v,u}`.
    pub fn bwd_bound(&self) -> f64 {
        self.bwd_delay + self.jitter
    }

    /// `max{d_{u,v}, d_{v,u}}` over worst-case delays.
    pub fn max_delay(&self) -> f64 {
        self.fwd_bound().max(self.bwd_bound())
    }
}

/// Undirected edge between `u` and `v`; "forward" means `u → v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub u: NodeId,
    pub v: NodeId,
    pub params: EdgeParams,
}

/// Index into [`NetworkGraph::edges`].
pub type EdgeIdx = usize;

/// A graph violation reported by [`validate_graph`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphViolation {
    pub edge: Option<EdgeIdx>,
    pub field: String,
    pub message: String,
}

impl fmt::Display for GraphViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.edge {
            Some(e) => write!(f, "edge {e} [{}]: {}", self.field, self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

/// The communication network `G = (V, E)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGraph {
    n: usize,
    d_max: f64,
    edges: Vec<Edge>,
    /// Per node: `(neighbor, edge)` sorted by neighbor id.
    adjacency: Vec<Vec<(NodeId, EdgeIdx)>>,
}

impl NetworkGraph {
    /// Builds the graph. Only structural problems (bad endpoints, self loops,
    /// duplicate edges) are rejected here; physical parameters are checked by
    /// [`validate_graph`].
    pub fn new(n: usize, d_max: f64, edges: Vec<Edge>) -> Result<Self> {
        if n == 0 {
            return Err(param("graph needs at least one node"));
        }
        let mut adjacency = vec![Vec::new(); n];
        for (i, e) in edges.iter().enumerate() {
            if e.u.0 >= n || e.v.0 >= n {
                return Err(param(format!("edge {i}: endpoint out of range 0..{n}")));
            }
            if e.u == e.v {
                return Err(param(format!("edge {i}: self loop on node {}", e.u)));
            }
            if adjacency[e.u.0].iter().any(|&(w, _)| w == e.v) {
                return Err(param(format!("edge {i}: duplicate edge {}-{}", e.u, e.v)));
            }
            adjacency[e.u.0].push((e.v, i));
            adjacency[e.v.0].push((e.u, i));
        }
        for list in &mut adjacency {
            list.sort_by_key(|&(w, _)| w);
        }
        Ok(Self {
            n,
            d_max,
            edges,
            adjacency,
        })
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> {
        (0..self.n).map(NodeId)
    }

    pub fn d_max(&self) -> f64 {
        self.d_max
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, idx: EdgeIdx) -> &Edge {
        &self.edges[idx]
    }

    /// Neighbors of `v` with the connecting edge, ascending by neighbor id.
    pub fn neighbors(&self, v: NodeId) -> &[(NodeId, EdgeIdx)] {
        &self.adjacency[v.0]
    }

    pub fn degree(&self, v: NodeId) -> usize {
        self.adjacency[v.0].len()
    }

    pub fn edge_between(&self, v: NodeId, w: NodeId) -> Option<EdgeIdx> {
        self.adjacency
            .get(v.0)?
            .binary_search_by_key(&w, |&(x, _)| x)
            .ok()
            .map(|i| self.adjacency[v.0][i].1)
    }

    /// Base delay, jitter width and worst-case bound for the direction `from → to`.
    pub fn directed_delay(&self, from: NodeId, to: NodeId) -> Option<(f64, f64, f64)> {
        let e = &self.edges[self.edge_between(from, to)?];
        let base = if e.u == from {
            e.params.fwd_delay
        } else {
            e.params.bwd_delay
        };
        Some((base, e.params.jitter, base + e.params.jitter))
    }

    /// Largest measurement uncertainty over all edges.
    pub fn max_eps_m(&self) -> f64 {
        self.edges
            .iter()
            .map(|e| e.params.eps_m)
            .fold(0.0, f64::max)
    }

    pub fn is_connected(&self) -> bool {
        bfs(self, NodeId(0)).iter().all(Option::is_some)
    }

    /// Static edge weights `κ̂_e` for all edges, indexed like [`Self::edges`].
    pub fn kappa_weights(&self, theta: f64) -> Result<Vec<f64>> {
        self.edges
            .iter()
            .map(|e| edge_kappa(&e.params, theta))
            .collect()
    }
}

fn exceeds(lhs: f64, rhs: f64) -> bool {
    lhs > rhs + REL_TOL * rhs.abs().max(1.0)
}

/// Checks connectivity and every per-edge physical invariant.
///
/// Returns an empty list iff the graph is admissible.
pub fn validate_graph(g: &NetworkGraph) -> Vec<GraphViolation> {
    let mut out = Vec::new();
    if !g.is_connected() {
        out.push(GraphViolation {
            edge: None,
            field: "edges".into(),
            message: "graph not connected".into(),
        });
    }
    if !(g.d_max > 0.0) || !g.d_max.is_finite() {
        out.push(GraphViolation {
            edge: None,
            field: "d_max".into(),
            message: format!("d_max {} must be positive and finite", g.d_max),
        });
    }
    for (i, e) in g.edges.iter().enumerate() {
        let p = &e.params;
        let mut bad = |field: &str, message: String| {
            out.push(GraphViolation {
                edge: Some(i),
                field: field.into(),
                message,
            })
        };
        let finite = [p.fwd_delay, p.bwd_delay, p.jitter, p.eps_d, p.eps_m, p.length]
            .iter()
            .all(|x| x.is_finite());
        if !finite {
            bad("params", "non-finite parameter".into());
            continue;
        }
        if p.fwd_delay <= 0.0 {
            bad("fwd_delay", format!("fwd_delay {} must be positive", p.fwd_delay));
        }
        if p.bwd_delay <= 0.0 {
            bad("bwd_delay", format!("bwd_delay {} must be positive", p.bwd_delay));
        }
        if p.jitter < 0.0 {
            bad("jitter", format!("jitter {} must be non-negative", p.jitter));
        }
        if p.eps_d < 0.0 {
            bad("eps_d", format!("eps_d {} must be non-negative", p.eps_d));
        }
        if p.eps_m < 0.0 {
            bad("eps_m", format!("eps_m {} must be non-negative", p.eps_m));
        }
        if p.length <= 0.0 {
            bad("length", format!("length {} must be positive", p.length));
        }
        if p.fwd_bound() >= g.d_max {
            bad(
                "fwd_delay",
                format!("delay bound {} >= d_max {}", p.fwd_bound(), g.d_max),
            );
        }
        if p.bwd_bound() >= g.d_max {
            bad(
                "bwd_delay",
                format!("delay bound {} >= d_max {}", p.bwd_bound(), g.d_max),
            );
        }
        let asym = (p.fwd_delay - p.bwd_delay).abs() + p.jitter;
        let allowed = p.max_delay() * p.eps_d;
        if exceeds(asym, allowed) {
            bad("eps_d", format!("asymmetry {asym} > {allowed}"));
        }
        for (field, script, base) in [
            ("fwd_script", &p.fwd_script, p.fwd_delay),
            ("bwd_script", &p.bwd_script, p.bwd_delay),
        ] {
            if let Some(s) = script {
                if s.is_empty() {
                    bad(field, "scripted delay list is empty".into());
                }
                for (k, &d) in s.iter().enumerate() {
                    if !(d >= base && d <= base + p.jitter) {
                        bad(
                            field,
                            format!("scripted delay #{k} = {d} outside [{base}, {}]", base + p.jitter),
                        );
                    }
                }
            }
        }
    }
    out
}

fn bfs(g: &NetworkGraph, src: NodeId) -> Vec<Option<usize>> {
    let mut dist = vec![None; g.n];
    let mut queue = VecDeque::new();
    dist[src.0] = Some(0);
    queue.push_back(src);
    while let Some(x) = queue.pop_front() {
        let dx = dist[x.0].unwrap_or(0);
        for &(y, _) in g.neighbors(x) {
            if dist[y.0].is_none() {
                dist[y.0] = Some(dx + 1);
                queue.push_back(y);
            }
        }
    }
    dist
}

fn check_node(g: &NetworkGraph, v: NodeId) -> Result<()> {
    if v.0 >= g.n {
        return Err(param(format!("node {v} out of range 0..{}", g.n)));
    }
    Ok(())
}

/// Number of edges on a shortest unweighted path between `v` and `w`.
pub fn hop_distance(g: &NetworkGraph, v: NodeId, w: NodeId) -> Result<usize> {
    check_node(g, v)?;
    check_node(g, w)?;
    bfs(g, v)[w.0].ok_or_else(|| param(format!("node {w} unreachable from {v}")))
}

/// Hop diameter `D`: the largest hop distance over all node pairs.
pub fn hop_diameter(g: &NetworkGraph) -> usize {
    g.nodes()
        .map(|v| bfs(g, v).into_iter().flatten().max().unwrap_or(0))
        .max()
        .unwrap_or(0)
}

/// Static edge weight `κ̂_e = 2·(max{d_{u,v}, d_{v,u}}·(ϑ − 1 + ε_d) + ε_m)`.
///
/// The worst-case delays include the jitter width.
pub fn edge_kappa(e: &EdgeParams, theta: f64) -> Result<f64> {
    if !(theta >= 1.0) {
        return Err(param(format!("theta {theta} must be >= 1")));
    }
    Ok(2.0 * (e.max_delay() * (theta - 1.0 + e.eps_d) + e.eps_m))
}

#[derive(Clone, Copy, PartialEq)]
struct HeapEntry {
    dist: f64,
    node: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance, then on node id
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Single-source shortest path sums over `weights` (one weight per edge).
pub fn dijkstra(g: &NetworkGraph, weights: &[f64], src: NodeId) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; g.n];
    let mut heap = BinaryHeap::new();
    dist[src.0] = 0.0;
    heap.push(HeapEntry { dist: 0.0, node: src.0 });
    while let Some(HeapEntry { dist: d, node }) = heap.pop() {
        if d > dist[node] {
            continue;
        }
        for &(y, e) in &g.adjacency[node] {
            let nd = d + weights[e];
            if nd < dist[y.0] {
                dist[y.0] = nd;
                heap.push(HeapEntry { dist: nd, node: y.0 });
            }
        }
    }
    dist
}

/// `dist^X(v, w) = X · Σ_{e ∈ P(v,w)} κ̂_e` over a minimum-weight path.
pub fn weighted_distance(
    g: &NetworkGraph,
    weights: &[f64],
    v: NodeId,
    w: NodeId,
    multiplier: u32,
) -> Result<f64> {
    check_node(g, v)?;
    check_node(g, w)?;
    if multiplier == 0 {
        return Err(param("distance multiplier must be positive"));
    }
    let d = dijkstra(g, weights, v)[w.0];
    if !d.is_finite() {
        return Err(internal(format!("node {w} unreachable from {v}")));
    }
    Ok(f64::from(multiplier) * d)
}

/// A minimum-weight path from `v` to `w`; among equal-weight paths the
/// lexicographically smallest node sequence is returned.
pub fn shortest_path(g: &NetworkGraph, weights: &[f64], v: NodeId, w: NodeId) -> Result<Vec<NodeId>> {
    check_node(g, v)?;
    check_node(g, w)?;
    let to_w = dijkstra(g, weights, w);
    if !to_w[v.0].is_finite() {
        return Err(internal(format!("node {w} unreachable from {v}")));
    }
    let mut path = vec![v];
    let mut cur = v;
    while cur != w {
        let here = to_w[cur.0];
        let next = g
            .neighbors(cur)
            .iter()
            .find(|&&(y, e)| {
                let via = weights[e] + to_w[y.0];
                (via - here).abs() <= REL_TOL * here.max(1.0) && to_w[y.0] < here
            })
            .map(|&(y, _)| y)
            .ok_or_else(|| internal("shortest path reconstruction failed"))?;
        path.push(next);
        cur = next;
    }
    Ok(path)
}

/// All-pairs `κ̂`-weighted distances (multiplier 1).
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    dist: Vec<f64>,
}

impl DistanceMatrix {
    pub fn new(g: &NetworkGraph, weights: &[f64]) -> Self {
        let n = g.node_count();
        let mut dist = Vec::with_capacity(n * n);
        for v in g.nodes() {
            dist.extend(dijkstra(g, weights, v));
        }
        Self { n, dist }
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn get(&self, v: NodeId, w: NodeId) -> f64 {
        self.dist[v.0 * self.n + w.0]
    }

    /// Largest pairwise distance: the `κ̂`-weighted diameter.
    pub fn diameter(&self) -> f64 {
        self.dist.iter().copied().fold(0.0, f64::max)
    }
}
