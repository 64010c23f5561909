use super::{CableSystem, EdgePiece, TreePoint, VertexId, REL_TOL};
use crate::error::{Error, Result};

/// Closed metric ball as a union of edge sub-intervals.
#[derive(Clone, Debug)]
pub struct Ball {
    pub center: TreePoint,
    pub radius: f64,
    /// Disjoint pieces with `from < to`, sorted by edge then offset.
    pub pieces: Vec<EdgePiece>,
    /// Vertices at distance at most `radius`, with their distances.
    pub vertices: Vec<(VertexId, f64)>,
}

impl Ball {
    pub fn nu_length(&self) -> f64 {
        self.pieces.iter().map(EdgePiece::length).sum()
    }

    pub fn contains(&self, p: &TreePoint) -> bool {
        match *p {
            TreePoint::Vertex(v) => self.vertices.iter().any(|&(w, _)| w == v),
            TreePoint::OnEdge { edge, offset } => self
                .pieces
                .iter()
                .any(|q| q.edge == edge && q.from <= offset && offset <= q.to),
        }
    }
}

impl CableSystem {
    /// Exact closed ball `{y : d(center, y) <= r}`.
    pub fn ball(&self, center: &TreePoint, r: f64) -> Result<Ball> {
        let center = self.require_point(center)?;
        if !(r.is_finite() && r >= 0.0) {
            return Err(Error::input(format!("ball radius {r} must be nonnegative")));
        }
        let map = self.distances_from(&[center], r);
        let mut vertices = Vec::new();
        let mut edges = Vec::new();
        for v in 0..self.vertex_count() {
            if map.dist[v].is_finite() {
                vertices.push((v, map.dist[v]));
                edges.extend(self.neighbors(v).iter().map(|&(_, e)| e));
            }
        }
        if let TreePoint::OnEdge { edge, .. } = center {
            edges.push(edge);
        }
        edges.sort_unstable();
        edges.dedup();
        let mut pieces = Vec::new();
        for e in edges {
            for (lo, hi) in map.edge_profile(self, e).sublevel(r) {
                if hi > lo {
                    pieces.push(EdgePiece { edge: e, from: lo, to: hi });
                }
            }
        }
        Ok(Ball { center, radius: r, pieces, vertices })
    }
}

/// Merges overlapping intervals; the result is sorted and disjoint.
pub fn merge_intervals(mut intervals: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    intervals.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(intervals.len());
    for (lo, hi) in intervals {
        match out.last_mut() {
            Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
            _ => out.push((lo, hi)),
        }
    }
    out
}

/// Length measure of a union of edge sub-intervals, overlaps counted once.
pub fn nu_length(space: &CableSystem, segments: &[EdgePiece]) -> Result<f64> {
    let mut by_edge: Vec<(usize, f64, f64)> = Vec::with_capacity(segments.len());
    for s in segments {
        let len = space
            .edges()
            .get(s.edge)
            .ok_or_else(|| Error::input(format!("unknown edge {}", s.edge)))?
            .len;
        let tol = REL_TOL * len;
        if !(s.lo() >= -tol && s.hi() <= len + tol) {
            return Err(Error::input(format!(
                "sub-interval [{}, {}] outside edge {} of length {len}",
                s.lo(),
                s.hi(),
                s.edge
            )));
        }
        by_edge.push((s.edge, s.lo().max(0.0), s.hi().min(len)));
    }
    by_edge.sort_by(|a, b| a.0.cmp(&b.0));
    let mut total = 0.0;
    for chunk in by_edge.chunk_by(|a, b| a.0 == b.0) {
        let merged = merge_intervals(chunk.iter().map(|&(_, lo, hi)| (lo, hi)).collect());
        total += merged.iter().map(|(lo, hi)| hi - lo).sum::<f64>();
    }
    Ok(total)
}
