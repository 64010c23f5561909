use super::{CableSystem, EdgeId, TreePoint, VertexId};
use crate::error::{Error, Result};

/// Oriented sub-interval `[from, to]` (or `[to, from]`) of one edge, in edge
/// offsets.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EdgePiece {
    pub edge: EdgeId,
    pub from: f64,
    pub to: f64,
}

impl EdgePiece {
    pub fn length(&self) -> f64 {
        (self.to - self.from).abs()
    }

    pub fn lo(&self) -> f64 {
        self.from.min(self.to)
    }

    pub fn hi(&self) -> f64 {
        self.from.max(self.to)
    }
}

/// Geodesic arc from `start` to `end` as a chain of edge pieces.
#[derive(Clone, Debug)]
pub struct PathSegment {
    pub start: TreePoint,
    pub end: TreePoint,
    pub pieces: Vec<EdgePiece>,
}

impl PathSegment {
    /// ν-length: the sum of piece lengths.
    pub fn length(&self) -> f64 {
        self.pieces.iter().map(EdgePiece::length).sum()
    }
}

/// Ways to leave a point towards the vertex graph: (vertex, cost, piece).
fn exits(space: &CableSystem, p: &TreePoint) -> Vec<(VertexId, f64, Option<EdgePiece>)> {
    match *p {
        TreePoint::Vertex(v) => vec![(v, 0.0, None)],
        TreePoint::OnEdge { edge, offset } => {
            let e = space.edge(edge);
            vec![
                (e.a, offset, Some(EdgePiece { edge, from: offset, to: 0.0 })),
                (e.b, e.len - offset, Some(EdgePiece { edge, from: offset, to: e.len })),
            ]
        }
    }
}

fn reversed(piece: Option<EdgePiece>) -> Option<EdgePiece> {
    piece.map(|p| EdgePiece { edge: p.edge, from: p.to, to: p.from })
}

fn full_piece(space: &CableSystem, from: VertexId, edge: EdgeId) -> EdgePiece {
    let e = space.edge(edge);
    if e.a == from {
        EdgePiece { edge, from: 0.0, to: e.len }
    } else {
        EdgePiece { edge, from: e.len, to: 0.0 }
    }
}

impl CableSystem {
    /// Unique geodesic from `x` to `y` (within the uniformity radius on local
    /// trees; the shortest path beyond it).
    pub fn geodesic_path(&self, x: &TreePoint, y: &TreePoint) -> Result<PathSegment> {
        let x = self.require_point(x)?;
        let y = self.require_point(y)?;
        let mut path = PathSegment { start: x, end: y, pieces: Vec::new() };
        if x == y {
            return Ok(path);
        }
        if let (TreePoint::OnEdge { edge: ex, offset: ox }, TreePoint::OnEdge { edge: ey, offset: oy }) =
            (x, y)
        {
            if ex == ey {
                path.pieces.push(EdgePiece { edge: ex, from: ox, to: oy });
                return Ok(path);
            }
        }
        match self.rooted() {
            Some(tree) => {
                let mut best: Option<(f64, usize, usize)> = None;
                let xs = exits(self, &x);
                let ys = exits(self, &y);
                for (i, &(vx, cx, _)) in xs.iter().enumerate() {
                    for (j, &(vy, cy, _)) in ys.iter().enumerate() {
                        let c = cx + tree.distance(vx, vy) + cy;
                        if best.map_or(true, |b| c < b.0) {
                            best = Some((c, i, j));
                        }
                    }
                }
                let (_, i, j) = best.expect("at least one route");
                let (vx, _, px) = xs[i];
                let (vy, _, py) = ys[j];
                path.pieces.extend(px);
                path.pieces.extend(self.tree_route(vx, vy));
                path.pieces.extend(reversed(py));
            }
            None => {
                let map = self.distances_from(&[x], f64::INFINITY);
                let ys = exits(self, &y);
                let (vy, _, py) = ys
                    .iter()
                    .copied()
                    .min_by(|a, b| (map.dist[a.0] + a.1).total_cmp(&(map.dist[b.0] + b.1)))
                    .expect("at least one route");
                let trace = map.trace(vy).ok_or_else(|| Error::numerical("disconnected space"))?;
                if let (Some(edge), TreePoint::OnEdge { offset, .. }) = (trace.source_edge, x) {
                    let e = self.edge(edge);
                    let to = if trace.start == e.a { 0.0 } else { e.len };
                    path.pieces.push(EdgePiece { edge, from: offset, to });
                }
                let mut cur = trace.start;
                for (edge, next) in trace.steps {
                    path.pieces.push(full_piece(self, cur, edge));
                    cur = next;
                }
                path.pieces.extend(reversed(py));
            }
        }
        path.pieces.retain(|p| p.length() > 0.0);
        Ok(path)
    }

    /// Edge pieces from vertex `u` to vertex `v` on a global tree.
    fn tree_route(&self, u: VertexId, v: VertexId) -> Vec<EdgePiece> {
        let tree = self.rooted().expect("global tree");
        let w = tree.lca(u, v);
        let mut up = Vec::new();
        let mut cur = u;
        while cur != w {
            let (p, e) = tree.parent[cur].expect("below lca");
            up.push(full_piece(self, cur, e));
            cur = p;
        }
        let mut down = Vec::new();
        cur = v;
        while cur != w {
            let (p, e) = tree.parent[cur].expect("below lca");
            down.push(full_piece(self, p, e));
            cur = p;
        }
        down.reverse();
        up.extend(down);
        up
    }

    /// Geodesic distance, equal to the ν-length of [`Self::geodesic_path`].
    pub fn distance(&self, x: &TreePoint, y: &TreePoint) -> Result<f64> {
        Ok(self.geodesic_path(x, y)?.length())
    }

    /// Point at arc length `s` from the start of `path`, clamped to the path.
    pub fn point_along(&self, path: &PathSegment, s: f64) -> Result<TreePoint> {
        if s <= 0.0 {
            return Ok(path.start);
        }
        if s >= path.length() {
            return Ok(path.end);
        }
        let mut left = s;
        for piece in &path.pieces {
            let len = piece.length();
            if left <= len {
                let dir = (piece.to - piece.from).signum();
                return self.point(piece.edge, piece.from + dir * left);
            }
            left -= len;
        }
        Ok(path.end)
    }

    /// The tripod centre `c(u, v, w)`: the common point of the three pairwise
    /// geodesics.
    pub fn median(&self, u: &TreePoint, v: &TreePoint, w: &TreePoint) -> Result<TreePoint> {
        let uv = self.geodesic_path(u, v)?;
        let duv = uv.length();
        let duw = self.distance(u, w)?;
        let dvw = self.distance(v, w)?;
        if self.is_local_tree() {
            let r = self.uniformity_radius();
            if duv.max(duw).max(dvw) > r {
                return Err(Error::domain(format!(
                    "median points are not within a common tree ball (pairwise distance exceeds {r})"
                )));
            }
        }
        let g = (0.5 * (duv + duw - dvw)).clamp(0.0, duv);
        self.point_along(&uv, g)
    }
}
