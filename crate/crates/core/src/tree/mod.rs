//! Finite metric trees and cable systems.
//!
//! A [`CableSystem`] is a connected metric graph whose edges are isometric
//! copies of intervals. Global trees are acyclic; local trees may contain
//! cycles as long as every ball of radius `uniformity_radius` is a real tree.
//! Points are either vertices or positions along an edge, see [`TreePoint`].

mod ball;
mod field;
mod geodesic;
mod io;
mod refine;
mod search;

use std::collections::{BTreeMap, BTreeSet};
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use serde_json::Value;

use crate::error::{Error, Result};

pub use ball::{merge_intervals, nu_length, Ball};
pub use field::DistanceField;
pub use geodesic::{EdgePiece, PathSegment};
pub use io::SpaceFile;
pub use refine::Correspondence;
pub use search::{DistanceMap, EdgeProfile, Step, Trace};

pub type VertexId = usize;
pub type EdgeId = usize;

/// Relative tolerance used for all length comparisons.
pub const REL_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub a: VertexId,
    pub b: VertexId,
    pub len: f64,
}

impl Edge {
    pub fn other(&self, v: VertexId) -> VertexId {
        if v == self.a {
            self.b
        } else {
            self.a
        }
    }
}

/// A point of a cable system: a vertex, or a position `offset` measured from
/// endpoint `a` of `edge`.
///
/// Points produced by [`CableSystem::point`] are canonical: offsets within
/// `REL_TOL * len` of an endpoint collapse onto the vertex, so structural
/// equality coincides with geometric equality.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TreePoint {
    Vertex(VertexId),
    OnEdge { edge: EdgeId, offset: f64 },
}

/// Maps every edge of a refined space back to a sub-interval of an edge of
/// the root space it was derived from.
#[derive(Clone, Debug)]
pub(crate) struct Lineage {
    pub base: CableSystem,
    /// Per edge: (base edge, base offset of endpoint a, base offset of endpoint b).
    pub edge_origin: Vec<(EdgeId, f64, f64)>,
    /// Per base edge: refined edges covering it, sorted by base offset.
    pub by_base_edge: Vec<Vec<(f64, f64, EdgeId)>>,
}

#[derive(Clone, Debug)]
pub(crate) struct RootedTree {
    pub parent: Vec<Option<(VertexId, EdgeId)>>,
    pub depth: Vec<u32>,
    pub root_dist: Vec<f64>,
    /// Binary lifting table: `up[k][v]` is the 2^k-th ancestor.
    pub up: Vec<Vec<VertexId>>,
}

#[derive(Debug)]
struct Inner {
    labels: Vec<u64>,
    edges: Vec<Edge>,
    adj: Vec<Vec<(VertexId, EdgeId)>>,
    coords: Option<Vec<[f64; 2]>>,
    uniformity_radius: f64,
    local_tree: bool,
    meta: BTreeMap<String, Value>,
    rooted: Option<RootedTree>,
    lineage: Option<Lineage>,
    fingerprint: u64,
}

/// Immutable cable system. Cloning is cheap (shared storage).
#[derive(Clone, Debug)]
pub struct CableSystem(Arc<Inner>);

/// Collects vertices and edges by label and validates them into a
/// [`CableSystem`].
#[derive(Clone, Debug, Default)]
pub struct CableSystemBuilder {
    labels: Vec<u64>,
    edges: Vec<(u64, u64, f64)>,
    coords: BTreeMap<u64, [f64; 2]>,
    uniformity_radius: Option<f64>,
    local_tree: bool,
    meta: BTreeMap<String, Value>,
}

impl CableSystemBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn vertex(&mut self, label: u64) -> &mut Self {
        self.labels.push(label);
        self
    }

    pub fn vertices(&mut self, labels: impl IntoIterator<Item = u64>) -> &mut Self {
        self.labels.extend(labels);
        self
    }

    pub fn edge(&mut self, u: u64, v: u64, len: f64) -> &mut Self {
        self.edges.push((u, v, len));
        self
    }

    pub fn coord(&mut self, label: u64, xy: [f64; 2]) -> &mut Self {
        self.coords.insert(label, xy);
        self
    }

    pub fn uniformity_radius(&mut self, r: f64) -> &mut Self {
        self.uniformity_radius = Some(r);
        self
    }

    pub fn local_tree(&mut self, flag: bool) -> &mut Self {
        self.local_tree = flag;
        self
    }

    pub fn meta(&mut self, key: &str, value: Value) -> &mut Self {
        self.meta.insert(key.to_string(), value);
        self
    }

    pub fn build(&self) -> Result<CableSystem> {
        let mut labels = self.labels.clone();
        labels.sort_unstable();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::input("duplicate vertex identifier"));
        }
        if labels.is_empty() {
            return Err(Error::input("a cable system needs at least one vertex"));
        }
        let index = |label: u64| -> Result<VertexId> {
            labels
                .binary_search(&label)
                .map_err(|_| Error::input(format!("edge references unknown vertex {label}")))
        };
        let mut edges = Vec::with_capacity(self.edges.len());
        for &(u, v, len) in &self.edges {
            edges.push(Edge { a: index(u)?, b: index(v)?, len });
        }
        let coords = if self.coords.is_empty() {
            None
        } else {
            if self.coords.len() != labels.len() {
                return Err(Error::input("coordinates must be given for every vertex or none"));
            }
            let mut out = vec![[0.0; 2]; labels.len()];
            for (&label, &xy) in &self.coords {
                out[index(label)?] = xy;
            }
            Some(out)
        };
        CableSystem::from_parts(
            labels,
            edges,
            coords,
            self.uniformity_radius,
            self.local_tree,
            self.meta.clone(),
            None,
            true,
        )
    }
}

impl CableSystem {
    pub fn builder() -> CableSystemBuilder {
        CableSystemBuilder::new()
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_parts(
        labels: Vec<u64>,
        edges: Vec<Edge>,
        coords: Option<Vec<[f64; 2]>>,
        uniformity_radius: Option<f64>,
        local_tree: bool,
        meta: BTreeMap<String, Value>,
        lineage: Option<Lineage>,
        verify_local: bool,
    ) -> Result<Self> {
        let n = labels.len();
        let mut adj = vec![Vec::new(); n];
        let mut seen = BTreeSet::new();
        for (id, e) in edges.iter().enumerate() {
            if !(e.len.is_finite() && e.len > 0.0) {
                return Err(Error::input(format!("edge {id} has non-positive length {}", e.len)));
            }
            if e.a == e.b {
                return Err(Error::input(format!("edge {id} is a self-loop")));
            }
            if !seen.insert((e.a.min(e.b), e.a.max(e.b))) {
                return Err(Error::input(format!("edge {id} duplicates an existing edge")));
            }
            adj[e.a].push((e.b, id));
            adj[e.b].push((e.a, id));
        }
        // connectivity
        let mut visited = vec![false; n];
        let mut stack = vec![0];
        visited[0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for &(w, _) in &adj[v] {
                if !visited[w] {
                    visited[w] = true;
                    count += 1;
                    stack.push(w);
                }
            }
        }
        if count != n {
            return Err(Error::input("the graph is not connected"));
        }
        if !local_tree && edges.len() + 1 != n {
            return Err(Error::input(
                "the graph has a cycle; set local_tree for cable systems with loops",
            ));
        }
        let rooted = if local_tree { None } else { Some(RootedTree::new(&adj, &edges)) };

        let mut hasher = std::collections::hash_map::DefaultHasher::new();
        labels.hash(&mut hasher);
        for e in &edges {
            (e.a, e.b, e.len.to_bits()).hash(&mut hasher);
        }
        local_tree.hash(&mut hasher);
        let fingerprint = hasher.finish();

        let mut space = CableSystem(Arc::new(Inner {
            labels,
            edges,
            adj,
            coords,
            uniformity_radius: uniformity_radius.unwrap_or(f64::NAN),
            local_tree,
            meta,
            rooted,
            lineage,
            fingerprint,
        }));

        let radius = match uniformity_radius {
            Some(r) => {
                if !(r.is_finite() && r > 0.0) {
                    return Err(Error::input("uniformity_radius must be positive"));
                }
                r
            }
            None if local_tree => {
                let g = space.girth();
                if g.is_finite() {
                    g / 4.0
                } else {
                    space.diameter().max(f64::MIN_POSITIVE)
                }
            }
            None => space.diameter().max(f64::MIN_POSITIVE),
        };
        Arc::get_mut(&mut space.0).expect("fresh arc").uniformity_radius = radius;
        if local_tree && verify_local {
            space.verify_uniform_local_tree()?;
        }
        Ok(space)
    }

    pub fn vertex_count(&self) -> usize {
        self.0.labels.len()
    }

    pub fn edge_count(&self) -> usize {
        self.0.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.0.edges
    }

    pub fn edge(&self, e: EdgeId) -> &Edge {
        &self.0.edges[e]
    }

    pub fn labels(&self) -> &[u64] {
        &self.0.labels
    }

    pub fn label(&self, v: VertexId) -> u64 {
        self.0.labels[v]
    }

    pub fn vertex_by_label(&self, label: u64) -> Option<VertexId> {
        self.0.labels.binary_search(&label).ok()
    }

    pub fn neighbors(&self, v: VertexId) -> &[(VertexId, EdgeId)] {
        &self.0.adj[v]
    }

    pub fn degree(&self, v: VertexId) -> usize {
        self.0.adj[v].len()
    }

    pub fn coords(&self) -> Option<&[[f64; 2]]> {
        self.0.coords.as_deref()
    }

    pub fn uniformity_radius(&self) -> f64 {
        self.0.uniformity_radius
    }

    pub fn is_local_tree(&self) -> bool {
        self.0.local_tree
    }

    pub fn meta(&self) -> &BTreeMap<String, Value> {
        &self.0.meta
    }

    /// Returns a copy carrying an extra metadata entry.
    pub fn with_meta(&self, key: &str, value: Value) -> CableSystem {
        let mut meta = self.0.meta.clone();
        meta.insert(key.to_string(), value);
        CableSystem(Arc::new(Inner {
            labels: self.0.labels.clone(),
            edges: self.0.edges.clone(),
            adj: self.0.adj.clone(),
            coords: self.0.coords.clone(),
            uniformity_radius: self.0.uniformity_radius,
            local_tree: self.0.local_tree,
            meta,
            rooted: self.0.rooted.clone(),
            lineage: self.0.lineage.clone(),
            fingerprint: self.0.fingerprint,
        }))
    }

    pub fn total_length(&self) -> f64 {
        self.0.edges.iter().map(|e| e.len).sum()
    }

    pub fn max_edge_length(&self) -> f64 {
        self.0.edges.iter().map(|e| e.len).fold(0.0, f64::max)
    }

    pub fn min_edge_length(&self) -> f64 {
        self.0.edges.iter().map(|e| e.len).fold(f64::INFINITY, f64::min)
    }

    /// Content hash, stable within one process.
    pub fn fingerprint(&self) -> u64 {
        self.0.fingerprint
    }

    pub(crate) fn rooted(&self) -> Option<&RootedTree> {
        self.0.rooted.as_ref()
    }

    pub(crate) fn lineage(&self) -> Option<&Lineage> {
        self.0.lineage.as_ref()
    }

    /// The root space this one was refined from (itself when unrefined).
    pub fn base(&self) -> &CableSystem {
        match &self.0.lineage {
            Some(l) => &l.base,
            None => self,
        }
    }

    /// True when both spaces are refinements of the same root space.
    pub fn shares_base(&self, other: &CableSystem) -> bool {
        self.base().fingerprint() == other.base().fingerprint()
    }

    /// Canonical point on `edge` at `offset` from its endpoint `a`.
    pub fn point(&self, edge: EdgeId, offset: f64) -> Result<TreePoint> {
        let e = self
            .0
            .edges
            .get(edge)
            .ok_or_else(|| Error::input(format!("unknown edge {edge}")))?;
        let tol = REL_TOL * e.len;
        if !offset.is_finite() || offset < -tol || offset > e.len + tol {
            return Err(Error::input(format!(
                "offset {offset} outside edge {edge} of length {}",
                e.len
            )));
        }
        Ok(if offset <= tol {
            TreePoint::Vertex(e.a)
        } else if offset >= e.len - tol {
            TreePoint::Vertex(e.b)
        } else {
            TreePoint::OnEdge { edge, offset }
        })
    }

    pub fn vertex(&self, v: VertexId) -> Result<TreePoint> {
        if v < self.vertex_count() {
            Ok(TreePoint::Vertex(v))
        } else {
            Err(Error::input(format!("unknown vertex {v}")))
        }
    }

    /// Validates and canonicalizes a point.
    pub fn canonical(&self, p: &TreePoint) -> Result<TreePoint> {
        match *p {
            TreePoint::Vertex(v) => self.vertex(v),
            TreePoint::OnEdge { edge, offset } => self.point(edge, offset),
        }
    }

    /// Planar position of a point, when coordinates are present.
    pub fn position(&self, p: &TreePoint) -> Option<[f64; 2]> {
        let coords = self.0.coords.as_ref()?;
        Some(match *p {
            TreePoint::Vertex(v) => coords[v],
            TreePoint::OnEdge { edge, offset } => {
                let e = &self.0.edges[edge];
                let t = offset / e.len;
                let (pa, pb) = (coords[e.a], coords[e.b]);
                [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])]
            }
        })
    }

    /// Diameter via two farthest-point sweeps (exact on trees).
    pub fn diameter(&self) -> f64 {
        let (far, _) = self.farthest_from(&[TreePoint::Vertex(0)]);
        let (_, d) = self.farthest_from(&[far]);
        d
    }

    /// Farthest point of the space from a set of sources, with its distance.
    pub fn farthest_from(&self, sources: &[TreePoint]) -> (TreePoint, f64) {
        let map = self.distances_from(sources, f64::INFINITY);
        let mut best = (sources[0], 0.0);
        for v in 0..self.vertex_count() {
            if map.dist[v] > best.1 {
                best = (TreePoint::Vertex(v), map.dist[v]);
            }
        }
        for e in 0..self.edge_count() {
            let profile = map.edge_profile(self, e);
            let (s, d) = profile.maximum();
            if d > best.1 * (1.0 + REL_TOL) {
                if let Ok(p) = self.point(e, s) {
                    best = (p, d);
                }
            }
        }
        best
    }

    /// Midpoint of a diameter path; the centre of a finite tree.
    pub fn metric_center(&self) -> Result<TreePoint> {
        let (a, _) = self.farthest_from(&[TreePoint::Vertex(0)]);
        let (b, d) = self.farthest_from(&[a]);
        let path = self.geodesic_path(&a, &b)?;
        self.point_along(&path, 0.5 * d)
    }

    /// Length of the shortest cycle, `inf` for trees.
    pub fn girth(&self) -> f64 {
        if !self.0.local_tree || self.edge_count() + 1 == self.vertex_count() {
            return f64::INFINITY;
        }
        let mut best = f64::INFINITY;
        for (id, e) in self.0.edges.iter().enumerate() {
            let d = search::shortest_avoiding(self, e.a, e.b, id, best - e.len);
            best = best.min(d + e.len);
        }
        best
    }

    /// Checks that every open ball of radius `2 * uniformity_radius` centred
    /// at a vertex contains no cycle, which makes every ball of radius
    /// `uniformity_radius` a real tree in the induced metric.
    fn verify_uniform_local_tree(&self) -> Result<()> {
        let rho = 2.0 * self.uniformity_radius();
        for v in 0..self.vertex_count() {
            let map = self.distances_from(&[TreePoint::Vertex(v)], rho);
            let mut uf = UnionFind::new(self.vertex_count());
            for (id, e) in self.0.edges.iter().enumerate() {
                let (da, db) = (map.dist[e.a], map.dist[e.b]);
                if !(da.is_finite() && db.is_finite()) {
                    continue;
                }
                if 0.5 * (da + db + e.len) < rho && !uf.union(e.a, e.b) {
                    return Err(Error::input(format!(
                        "ball of radius {rho} around vertex {} contains a cycle through edge {id}; \
                         uniformity_radius is too large",
                        self.label(v)
                    )));
                }
            }
        }
        Ok(())
    }

    pub(crate) fn require_point(&self, p: &TreePoint) -> Result<TreePoint> {
        self.canonical(p)
    }
}

impl RootedTree {
    fn new(adj: &[Vec<(VertexId, EdgeId)>], edges: &[Edge]) -> Self {
        let n = adj.len();
        let mut parent = vec![None; n];
        let mut depth = vec![0u32; n];
        let mut root_dist = vec![0.0; n];
        let mut order = Vec::with_capacity(n);
        let mut visited = vec![false; n];
        visited[0] = true;
        order.push(0);
        let mut head = 0;
        while head < order.len() {
            let v = order[head];
            head += 1;
            for &(w, e) in &adj[v] {
                if !visited[w] {
                    visited[w] = true;
                    parent[w] = Some((v, e));
                    depth[w] = depth[v] + 1;
                    root_dist[w] = root_dist[v] + edges[e].len;
                    order.push(w);
                }
            }
        }
        let levels = (usize::BITS - n.leading_zeros()).max(1) as usize;
        let mut up = vec![(0..n).map(|v| parent[v].map_or(v, |(p, _)| p)).collect::<Vec<_>>()];
        for k in 1..levels {
            let prev = &up[k - 1];
            let next = (0..n).map(|v| prev[prev[v]]).collect();
            up.push(next);
        }
        RootedTree { parent, depth, root_dist, up }
    }

    pub fn lca(&self, mut u: VertexId, mut v: VertexId) -> VertexId {
        if self.depth[u] < self.depth[v] {
            std::mem::swap(&mut u, &mut v);
        }
        let mut diff = self.depth[u] - self.depth[v];
        let mut k = 0;
        while diff > 0 {
            if diff & 1 == 1 {
                u = self.up[k][u];
            }
            diff >>= 1;
            k += 1;
        }
        if u == v {
            return u;
        }
        for k in (0..self.up.len()).rev() {
            if self.up[k][u] != self.up[k][v] {
                u = self.up[k][u];
                v = self.up[k][v];
            }
        }
        self.up[0][u]
    }

    pub fn distance(&self, u: VertexId, v: VertexId) -> f64 {
        let w = self.lca(u, v);
        self.root_dist[u] + self.root_dist[v] - 2.0 * self.root_dist[w]
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// False when `a` and `b` were already connected.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra] = rb;
        true
    }
}
