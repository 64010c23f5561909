use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{CableSystem, EdgeId, TreePoint, VertexId, REL_TOL};

/// How a vertex was reached in a shortest-path search.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Step {
    Unreached,
    /// Reached directly from source `index`; along `edge` when the source is
    /// an interior point of that edge.
    Source { index: usize, edge: Option<EdgeId> },
    Via { from: VertexId, edge: EdgeId },
}

/// Shortest-path distances from a set of point sources, truncated at
/// `cutoff`. Vertices farther than the cutoff hold `inf`.
#[derive(Clone, Debug)]
pub struct DistanceMap {
    pub dist: Vec<f64>,
    pub pred: Vec<Step>,
    pub sources: Vec<TreePoint>,
    pub cutoff: f64,
}

#[derive(PartialEq)]
struct Item(f64, VertexId);

impl Eq for Item {}

impl Ord for Item {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Item {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl CableSystem {
    /// Multi-source Dijkstra over the cable system. Sources must be valid
    /// points.
    pub fn distances_from(&self, sources: &[TreePoint], cutoff: f64) -> DistanceMap {
        let n = self.vertex_count();
        let mut dist = vec![f64::INFINITY; n];
        let mut pred = vec![Step::Unreached; n];
        let mut heap = BinaryHeap::new();
        #[inline]
        fn relax(
            dist: &mut [f64],
            pred: &mut [Step],
            heap: &mut BinaryHeap<Item>,
            cutoff: f64,
            v: VertexId,
            d: f64,
            step: Step,
        ) {
            if d < dist[v] && d <= cutoff {
                dist[v] = d;
                pred[v] = step;
                heap.push(Item(d, v));
            }
        }
        for (index, p) in sources.iter().enumerate() {
            match *p {
                TreePoint::Vertex(v) => {
                    relax(&mut dist, &mut pred, &mut heap, cutoff, v, 0.0, Step::Source { index, edge: None })
                }
                TreePoint::OnEdge { edge, offset } => {
                    let e = self.edge(edge);
                    let step = Step::Source { index, edge: Some(edge) };
                    relax(&mut dist, &mut pred, &mut heap, cutoff, e.a, offset, step);
                    relax(&mut dist, &mut pred, &mut heap, cutoff, e.b, e.len - offset, step);
                }
            }
        }
        while let Some(Item(d, v)) = heap.pop() {
            if d > dist[v] {
                continue;
            }
            for &(w, e) in self.neighbors(v) {
                let step = Step::Via { from: v, edge: e };
                relax(&mut dist, &mut pred, &mut heap, cutoff, w, d + self.edge(e).len, step);
            }
        }
        DistanceMap { dist, pred, sources: sources.to_vec(), cutoff }
    }
}

/// Length of the shortest path from `a` to `b` that avoids edge `skip`,
/// or `inf` when none is shorter than `bound`.
pub(crate) fn shortest_avoiding(
    space: &CableSystem,
    a: VertexId,
    b: VertexId,
    skip: EdgeId,
    bound: f64,
) -> f64 {
    let mut dist = std::collections::HashMap::new();
    let mut heap = BinaryHeap::new();
    dist.insert(a, 0.0);
    heap.push(Item(0.0, a));
    while let Some(Item(d, v)) = heap.pop() {
        if v == b {
            return d;
        }
        if d > dist[&v] {
            continue;
        }
        for &(w, e) in space.neighbors(v) {
            if e == skip {
                continue;
            }
            let nd = d + space.edge(e).len;
            if nd < bound && nd < *dist.get(&w).unwrap_or(&f64::INFINITY) {
                dist.insert(w, nd);
                heap.push(Item(nd, w));
            }
        }
    }
    f64::INFINITY
}

impl DistanceMap {
    /// Distance from the source set to an arbitrary point.
    pub fn distance_to(&self, space: &CableSystem, q: &TreePoint) -> f64 {
        match *q {
            TreePoint::Vertex(v) => self.dist[v],
            TreePoint::OnEdge { edge, offset } => self.edge_profile(space, edge).eval(offset),
        }
    }

    /// Distance restricted to one edge, as a function of the offset.
    pub fn edge_profile(&self, space: &CableSystem, edge: EdgeId) -> EdgeProfile {
        let e = space.edge(edge);
        let on_edge: Vec<f64> = self
            .sources
            .iter()
            .filter_map(|p| match *p {
                TreePoint::OnEdge { edge: s, offset } if s == edge => Some(offset),
                _ => None,
            })
            .collect();
        EdgeProfile::new(e.len, self.dist[e.a], self.dist[e.b], &on_edge)
    }

    /// Shortest route from the nearest source to vertex `v`, or `None` when
    /// `v` was not reached.
    pub fn trace(&self, v: VertexId) -> Option<Trace> {
        let mut steps = Vec::new();
        let mut cur = v;
        loop {
            match self.pred[cur] {
                Step::Via { from, edge } => {
                    steps.push((edge, cur));
                    cur = from;
                }
                Step::Source { index, edge } => {
                    steps.reverse();
                    return Some(Trace { source: index, source_edge: edge, start: cur, steps });
                }
                Step::Unreached => return None,
            }
        }
    }
}

/// Route recovered from a [`DistanceMap`]: from source `source` (along
/// `source_edge` when it is an interior point) to vertex `start`, then along
/// `steps` as `(edge, next vertex)` pairs.
#[derive(Clone, Debug)]
pub struct Trace {
    pub source: usize,
    pub source_edge: Option<EdgeId>,
    pub start: VertexId,
    pub steps: Vec<(EdgeId, VertexId)>,
}

/// Piecewise-linear function `d(s) = min(d_a + s, d_b + len - s, |s - o_k|)`
/// on `[0, len]`, stored by its breakpoints.
#[derive(Clone, Debug)]
pub struct EdgeProfile {
    pub len: f64,
    /// Sorted `(offset, value)` pairs; `d` is linear between consecutive ones.
    pub knots: Vec<(f64, f64)>,
    da: f64,
    db: f64,
    sources: Vec<f64>,
}

impl EdgeProfile {
    pub fn new(len: f64, da: f64, db: f64, sources: &[f64]) -> Self {
        // each term as max of lines; the min of those is linear between
        // consecutive crossings of all lines involved
        let mut lines: Vec<(f64, f64)> = Vec::new();
        if da.is_finite() {
            lines.push((da, 1.0));
        }
        if db.is_finite() {
            lines.push((db + len, -1.0));
        }
        for &o in sources {
            lines.push((-o, 1.0));
            lines.push((o, -1.0));
        }
        let mut cand = vec![0.0, len];
        cand.extend(sources.iter().copied());
        for i in 0..lines.len() {
            for j in i + 1..lines.len() {
                let (c1, s1) = lines[i];
                let (c2, s2) = lines[j];
                if s1 != s2 {
                    let s = (c2 - c1) / (s1 - s2);
                    if s > 0.0 && s < len {
                        cand.push(s);
                    }
                }
            }
        }
        cand.sort_by(f64::total_cmp);
        let tol = REL_TOL * len;
        cand.dedup_by(|a, b| (*a - *b).abs() <= tol);
        if let Some(last) = cand.last_mut() {
            *last = len;
        }
        let mut profile = EdgeProfile { len, knots: Vec::new(), da, db, sources: sources.to_vec() };
        profile.knots = cand.iter().map(|&s| (s, profile.eval(s))).collect();
        profile
    }

    pub fn eval(&self, s: f64) -> f64 {
        let mut d = (self.da + s).min(self.db + self.len - s);
        for &o in &self.sources {
            d = d.min((s - o).abs());
        }
        d
    }

    pub fn maximum(&self) -> (f64, f64) {
        self.knots
            .iter()
            .copied()
            .fold((0.0, f64::NEG_INFINITY), |best, k| if k.1 > best.1 { k } else { best })
    }

    /// Interior local maxima of the profile.
    pub fn peaks(&self) -> Vec<f64> {
        let k = &self.knots;
        (1..k.len().saturating_sub(1))
            .filter(|&i| k[i].1.is_finite() && k[i].1 > k[i - 1].1 && k[i].1 > k[i + 1].1)
            .map(|i| k[i].0)
            .collect()
    }

    /// Offsets where the profile equals `level`.
    pub fn level_points(&self, level: f64) -> Vec<f64> {
        let mut out = Vec::new();
        let tol = REL_TOL * level.abs().max(self.len);
        for (i, &(s, v)) in self.knots.iter().enumerate() {
            if (v - level).abs() <= tol {
                out.push(s);
            }
            if let Some(&(s1, v1)) = self.knots.get(i + 1) {
                if v.is_finite() && v1.is_finite() && (v - level) * (v1 - level) < 0.0 {
                    out.push(s + (level - v) * (s1 - s) / (v1 - v));
                }
            }
        }
        out.sort_by(f64::total_cmp);
        out.dedup_by(|a, b| (*a - *b).abs() <= REL_TOL * self.len);
        out
    }

    /// Maximal sub-intervals where the profile is at most `r`.
    pub fn sublevel(&self, r: f64) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = Vec::new();
        let mut push = |lo: f64, hi: f64| {
            if let Some(last) = out.last_mut() {
                if lo <= last.1 + REL_TOL * self.len {
                    last.1 = last.1.max(hi);
                    return;
                }
            }
            out.push((lo, hi));
        };
        for w in self.knots.windows(2) {
            let ((s0, v0), (s1, v1)) = (w[0], w[1]);
            let in0 = v0 <= r;
            let in1 = v1 <= r;
            match (in0, in1) {
                (true, true) => push(s0, s1),
                (true, false) => {
                    let c = if v1.is_finite() { s0 + (r - v0) * (s1 - s0) / (v1 - v0) } else { s0 };
                    push(s0, c)
                }
                (false, true) => {
                    let c = if v0.is_finite() { s0 + (r - v0) * (s1 - s0) / (v1 - v0) } else { s1 };
                    push(c, s1)
                }
                (false, false) => {}
            }
        }
        if out.is_empty() && self.knots.len() == 1 && self.knots[0].1 <= r {
            out.push((0.0, 0.0));
        }
        out
    }
}
