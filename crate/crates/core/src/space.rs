//! Finite metric spaces with two backends: Euclidean point clouds (exact
//! geodesics) and weighted graphs (shortest-path length metric with edge
//! interpolation).
//!
//! A space is immutable after construction except for lazy extension by
//! *virtual points* created by [`FiniteMetricSpace::geodesic_point`]. The
//! extension takes `&mut self`, so the borrow checker enforces the intended
//! contract: extend first, then share read-only across threads.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for the metric-axiom checks performed at construction.
const METRIC_TOL: f64 = 1e-12;

/// Tolerance used to dedupe interpolated points against existing ones.
const DEDUPE_TOL: f64 = 1e-12;

static NEXT_SPACE_ID: AtomicU64 = AtomicU64::new(1);

/// Which construction produced the space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Euclidean,
    Graph,
}

/// A virtual point sitting on a graph edge, at arc length `from_u` from
/// endpoint `u` (with `u < v` canonically).
#[derive(Debug, Clone, Copy)]
struct EdgePoint {
    u: usize,
    v: usize,
    from_u: f64,
}

/// A finite metric space: an indexed point set with a symmetric distance
/// matrix and a geodesic-interpolation backend.
#[derive(Debug, Clone)]
pub struct FiniteMetricSpace {
    id: u64,
    backend: Backend,
    /// Number of points, including virtual ones appended by interpolation.
    n: usize,
    /// Number of points at construction time.
    base_n: usize,
    /// Row-major symmetric `n x n` distance matrix.
    dist: Vec<f64>,
    /// Euclidean backend: coordinates for every point (base and virtual).
    coords: Vec<Vec<f64>>,
    /// Graph backend: next hop on the chosen shortest path, `base_n x base_n`.
    next_hop: Vec<usize>,
    /// Graph backend: edge descriptors for virtual points, indexed by
    /// `point_index - base_n`.
    edge_points: Vec<EdgePoint>,
}

/// On-disk JSON schema for spaces.
///
/// Euclidean: `{"backend": "euclidean", "coords": [[...], ...]}`.
/// Graph: `{"backend": "graph", "n": 3, "edges": [[i, j, w], ...]}`.
/// The `backend` field may be omitted; it is inferred from which of
/// `coords`/`edges` is present.
#[derive(Debug, Serialize, Deserialize)]
struct SpaceFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    backend: Option<Backend>,
    #[serde(skip_serializing_if = "Option::is_none")]
    coords: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    edges: Option<Vec<(usize, usize, f64)>>,
}

impl FiniteMetricSpace {
    /// Builds a space from Euclidean coordinate vectors; the distance matrix
    /// holds the pairwise Euclidean norms.
    pub fn build_euclidean(coords: Vec<Vec<f64>>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidParameter("empty point set".into()));
        }
        let dim = coords[0].len();
        for c in &coords {
            if c.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: c.len(),
                });
            }
        }
        let n = coords.len();
        let mut dist = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = euclid(&coords[i], &coords[j]);
                dist[i * n + j] = d;
                dist[j * n + i] = d;
            }
        }
        let space = FiniteMetricSpace {
            id: NEXT_SPACE_ID.fetch_add(1, AtomicOrdering::Relaxed),
            backend: Backend::Euclidean,
            n,
            base_n: n,
            dist,
            coords,
            next_hop: Vec::new(),
            edge_points: Vec::new(),
        };
        space.validate_metric()?;
        Ok(space)
    }

    /// Builds the shortest-path length metric of a connected weighted graph.
    ///
    /// Edges are undirected with strictly positive weights. Shortest paths
    /// are computed per source with deterministic lexicographic tie-breaking
    /// on predecessor indices, so the interpolation chains are reproducible.
    pub fn build_graph_metric(edges: &[(usize, usize, f64)], n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("empty point set".into()));
        }
        let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, w) in edges {
            if i >= n || j >= n {
                return Err(Error::PointOutOfRange {
                    index: i.max(j),
                    len: n,
                });
            }
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "edge ({i}, {j}) has non-positive weight {w}"
                )));
            }
            if i == j {
                return Err(Error::InvalidParameter(format!("self-loop at {i}")));
            }
            adj[i].push((j, w));
            adj[j].push((i, w));
        }
        for nb in adj.iter_mut() {
            nb.sort_by(|a, b| a.0.cmp(&b.0));
        }

        let mut dist = vec![f64::INFINITY; n * n];
        let mut next_hop = vec![usize::MAX; n * n];
        for s in 0..n {
            let (d, pred) = dijkstra(&adj, s, n);
            for t in 0..n {
                if d[t].is_infinite() {
                    return Err(Error::Disconnected(s, t));
                }
                dist[s * n + t] = d[t];
            }
            // First hop out of s toward every target, walking predecessors.
            for t in 0..n {
                if t == s {
                    next_hop[s * n + t] = s;
                    continue;
                }
                let mut cur = t;
                while pred[cur] != s {
                    cur = pred[cur];
                }
                next_hop[s * n + t] = cur;
            }
        }

        let space = FiniteMetricSpace {
            id: NEXT_SPACE_ID.fetch_add(1, AtomicOrdering::Relaxed),
            backend: Backend::Graph,
            n,
            base_n: n,
            dist,
            coords: Vec::new(),
            next_hop,
            edge_points: Vec::new(),
        };
        space.validate_metric()?;
        Ok(space)
    }

    /// Parses a space from its JSON schema.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: SpaceFile =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        match (file.backend, file.coords, file.edges) {
            (Some(Backend::Euclidean), Some(coords), _) | (None, Some(coords), None) => {
                Self::build_euclidean(coords)
            }
            (Some(Backend::Graph), _, Some(edges)) | (None, None, Some(edges)) => {
                let n = file.n.ok_or_else(|| {
                    Error::Parse("graph space requires a point count \"n\"".into())
                })?;
                Self::build_graph_metric(&edges, n)
            }
            _ => Err(Error::Parse(
                "space file needs either \"coords\" or \"n\" + \"edges\"".into(),
            )),
        }
    }

    /// Serializes the base space (virtual points excluded) to JSON.
    pub fn to_json(&self) -> String {
        let file = match self.backend {
            Backend::Euclidean => SpaceFile {
                backend: Some(Backend::Euclidean),
                coords: Some(self.coords[..self.base_n].to_vec()),
                n: None,
                edges: None,
            },
            Backend::Graph => {
                let mut edges = Vec::new();
                for i in 0..self.base_n {
                    for j in (i + 1)..self.base_n {
                        // Recover base edges from next hops: j adjacent to i
                        // when the path i -> j is the single edge.
                        if self.next_hop[i * self.base_n + j] == j {
                            edges.push((i, j, self.dist[i * self.n + j]));
                        }
                    }
                }
                SpaceFile {
                    backend: Some(Backend::Graph),
                    coords: None,
                    n: Some(self.base_n),
                    edges: Some(edges),
                }
            }
        };
        serde_json::to_string_pretty(&file).expect("space serialization cannot fail")
    }

    /// Unique identity used to detect accidental mixing of spaces.
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    /// Total number of points, virtual ones included.
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Number of points at construction time.
    pub fn base_len(&self) -> usize {
        self.base_n
    }

    /// Distance between two points.
    pub fn dist(&self, i: usize, j: usize) -> f64 {
        assert!(i < self.n && j < self.n, "point index out of range");
        self.dist[i * self.n + j]
    }

    /// Coordinates of a point (Euclidean backend only).
    pub fn coords(&self, i: usize) -> Option<&[f64]> {
        self.coords.get(i).map(|c| c.as_slice())
    }

    /// The point at parameter `s` of the geodesic from `x0` to `x1`.
    ///
    /// Euclidean: the affine interpolation `(1-s) x0 + s x1`. Graph: the
    /// point at arc length `s * dist(x0, x1)` along the deterministic
    /// shortest-path chain, interpolating linearly inside an edge. Points
    /// that do not already exist are appended to the space with a fresh
    /// index and exact distances to every existing point.
    pub fn geodesic_point(&mut self, x0: usize, x1: usize, s: f64) -> Result<usize> {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::InvalidParameter(format!(
                "interpolation parameter {s} outside [0, 1]"
            )));
        }
        if x0 >= self.n || x1 >= self.n {
            return Err(Error::PointOutOfRange {
                index: x0.max(x1),
                len: self.n,
            });
        }
        if s == 0.0 || x0 == x1 {
            return Ok(x0);
        }
        if s == 1.0 {
            return Ok(x1);
        }
        match self.backend {
            Backend::Euclidean => self.euclidean_point(x0, x1, s),
            Backend::Graph => self.graph_point(x0, x1, s),
        }
    }

    fn euclidean_point(&mut self, x0: usize, x1: usize, s: f64) -> Result<usize> {
        let c: Vec<f64> = self.coords[x0]
            .iter()
            .zip(&self.coords[x1])
            .map(|(a, b)| (1.0 - s) * a + s * b)
            .collect();
        for (i, existing) in self.coords.iter().enumerate() {
            if euclid(existing, &c) <= DEDUPE_TOL {
                return Ok(i);
            }
        }
        let new_index = self.n;
        let row: Vec<f64> = self.coords.iter().map(|p| euclid(p, &c)).collect();
        self.append_point(row);
        self.coords.push(c);
        Ok(new_index)
    }

    fn graph_point(&mut self, x0: usize, x1: usize, s: f64) -> Result<usize> {
        if x0 >= self.base_n || x1 >= self.base_n {
            return Err(Error::BackendMissing(
                "graph interpolation requires base (non-virtual) endpoints".into(),
            ));
        }
        let total = self.dist(x0, x1);
        let target = s * total;
        let chain = self.chain(x0, x1);
        let mut acc = 0.0;
        for k in 1..chain.len() {
            let (u, v) = (chain[k - 1], chain[k]);
            let w = self.dist[u * self.n + v];
            if target <= acc + w + DEDUPE_TOL * (1.0 + total) {
                let from_u = (target - acc).clamp(0.0, w);
                if from_u <= DEDUPE_TOL * (1.0 + total) {
                    return Ok(u);
                }
                if from_u >= w - DEDUPE_TOL * (1.0 + total) {
                    return Ok(v);
                }
                return Ok(self.edge_point(u, v, from_u, w));
            }
            acc += w;
        }
        Ok(x1)
    }

    /// Materializes (or finds) the virtual point on edge `(u, v)` at arc
    /// length `from_u` from `u`.
    fn edge_point(&mut self, u: usize, v: usize, from_u: f64, weight: f64) -> usize {
        let (u, v, from_u) = if u < v { (u, v, from_u) } else { (v, u, weight - from_u) };
        for (k, ep) in self.edge_points.iter().enumerate() {
            if ep.u == u && ep.v == v && (ep.from_u - from_u).abs() <= DEDUPE_TOL * (1.0 + weight)
            {
                return self.base_n + k;
            }
        }
        let new_index = self.n;
        let mut row = Vec::with_capacity(self.n);
        for z in 0..self.n {
            let through_u = from_u + self.dist[u * self.n + z];
            let through_v = (weight - from_u) + self.dist[v * self.n + z];
            let mut d = through_u.min(through_v);
            if z >= self.base_n {
                let other = self.edge_points[z - self.base_n];
                if other.u == u && other.v == v {
                    d = d.min((other.from_u - from_u).abs());
                }
            }
            row.push(d);
        }
        self.append_point(row);
        self.edge_points.push(EdgePoint { u, v, from_u });
        new_index
    }

    /// Grows the distance matrix by one point whose distances to the
    /// existing points are `row`.
    fn append_point(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.n);
        let old_n = self.n;
        let new_n = old_n + 1;
        let mut dist = vec![0.0; new_n * new_n];
        for i in 0..old_n {
            for j in 0..old_n {
                dist[i * new_n + j] = self.dist[i * old_n + j];
            }
        }
        for (i, &d) in row.iter().enumerate() {
            dist[i * new_n + old_n] = d;
            dist[old_n * new_n + i] = d;
        }
        self.dist = dist;
        self.n = new_n;
    }

    /// The deterministic shortest-path chain between two base points.
    fn chain(&self, x0: usize, x1: usize) -> Vec<usize> {
        let mut chain = vec![x0];
        let mut cur = x0;
        while cur != x1 {
            cur = self.next_hop[cur * self.base_n + x1];
            chain.push(cur);
        }
        chain
    }

    /// Checks the metric axioms on the full matrix: zero diagonal, symmetry,
    /// nonnegativity and the triangle inequality.
    fn validate_metric(&self) -> Result<()> {
        let n = self.n;
        for i in 0..n {
            if self.dist[i * n + i] != 0.0 {
                return Err(Error::InvalidMetric(format!("dist({i}, {i}) != 0")));
            }
            for j in 0..n {
                let d = self.dist[i * n + j];
                if d < 0.0 || !d.is_finite() {
                    return Err(Error::InvalidMetric(format!("dist({i}, {j}) = {d}")));
                }
                if (d - self.dist[j * n + i]).abs() > METRIC_TOL {
                    return Err(Error::InvalidMetric(format!("asymmetry at ({i}, {j})")));
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let lhs = self.dist[i * n + k];
                    let rhs = self.dist[i * n + j] + self.dist[j * n + k];
                    if lhs > rhs + METRIC_TOL * (1.0 + lhs) {
                        return Err(Error::InvalidMetric(format!(
                            "triangle inequality fails on ({i}, {j}, {k})"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Max-heap entry ordered so the smallest (distance, node) pops first.
#[derive(PartialEq)]
struct HeapEntry {
    dist: f64,
    node: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .partial_cmp(&self.dist)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Dijkstra with deterministic predecessors: on exact distance ties the
/// smaller predecessor index wins.
fn dijkstra(adj: &[Vec<(usize, f64)>], source: usize, n: usize) -> (Vec<f64>, Vec<usize>) {
    let mut dist = vec![f64::INFINITY; n];
    let mut pred = vec![usize::MAX; n];
    let mut done = vec![false; n];
    dist[source] = 0.0;
    pred[source] = source;
    let mut heap = BinaryHeap::new();
    heap.push(HeapEntry { dist: 0.0, node: source });
    while let Some(HeapEntry { dist: d, node: u }) = heap.pop() {
        if done[u] {
            continue;
        }
        done[u] = true;
        for &(v, w) in &adj[u] {
            let nd = d + w;
            if nd < dist[v] || (nd == dist[v] && u < pred[v] && !done[v]) {
                dist[v] = nd;
                pred[v] = u;
                heap.push(HeapEntry { dist: nd, node: v });
            }
        }
    }
    (dist, pred)
}
