use super::{CableSystem, Edge, EdgeId, Lineage, TreePoint, VertexId, REL_TOL};
use crate::error::{Error, Result};

/// Largest vertex count a refinement may produce.
pub const MAX_REFINED_VERTICES: usize = 5_000_000;

/// Maps points of a space onto the corresponding points of a subdivision of
/// it. Vertices keep their ids; edge `e` keeps id `e` for its first piece.
#[derive(Clone, Debug)]
pub struct Correspondence {
    /// Per old edge: `(lo, hi, new edge)` sorted by `lo`, in old offsets.
    pieces: Vec<Vec<(f64, f64, EdgeId)>>,
}

impl Correspondence {
    fn identity(space: &CableSystem) -> Self {
        Correspondence {
            pieces: space.edges().iter().enumerate().map(|(id, e)| vec![(0.0, e.len, id)]).collect(),
        }
    }

    /// Edges of the subdivision covering old edge `e`, in order from its
    /// endpoint `a`.
    pub fn edges_of(&self, e: EdgeId) -> impl Iterator<Item = EdgeId> + '_ {
        self.pieces[e].iter().map(|&(_, _, id)| id)
    }

    pub fn map(&self, refined: &CableSystem, p: &TreePoint) -> Result<TreePoint> {
        match *p {
            TreePoint::Vertex(v) => refined.vertex(v),
            TreePoint::OnEdge { edge, offset } => {
                let pieces = self
                    .pieces
                    .get(edge)
                    .ok_or_else(|| Error::input(format!("unknown edge {edge}")))?;
                let i = pieces.partition_point(|&(_, hi, _)| hi < offset).min(pieces.len() - 1);
                let (lo, _, new) = pieces[i];
                refined.point(new, (offset - lo).max(0.0))
            }
        }
    }
}

impl CableSystem {
    /// Subdivides every edge into `ceil(len / h)` equal parts.
    pub fn refine(&self, h: f64) -> Result<(CableSystem, Correspondence)> {
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::input(format!("mesh size {h} must be positive")));
        }
        let mut total = self.vertex_count();
        let cuts: Vec<Vec<f64>> = self
            .edges()
            .iter()
            .map(|e| {
                let ratio = e.len / h;
                let k = if (ratio - ratio.round()).abs() <= 1e-9 * ratio {
                    ratio.round()
                } else {
                    ratio.ceil()
                }
                .max(1.0) as usize;
                total = total.saturating_add(k - 1);
                (1..k).map(|i| e.len * i as f64 / k as f64).collect()
            })
            .collect();
        if total > MAX_REFINED_VERTICES {
            return Err(Error::Resource(format!(
                "refinement to h={h} needs {total} vertices (cap {MAX_REFINED_VERTICES})"
            )));
        }
        if total == self.vertex_count() {
            return Ok((self.clone(), Correspondence::identity(self)));
        }
        let (space, corr, _) = self.split_edges(cuts)?;
        Ok((space, corr))
    }

    /// Makes every given point a vertex. Returns the new space, the vertex id
    /// of each input point and the correspondence map.
    pub fn insert_points(
        &self,
        points: &[TreePoint],
    ) -> Result<(CableSystem, Vec<VertexId>, Correspondence)> {
        let mut cuts = vec![Vec::new(); self.edge_count()];
        let mut canon = Vec::with_capacity(points.len());
        for p in points {
            let p = self.canonical(p)?;
            if let TreePoint::OnEdge { edge, offset } = p {
                cuts[edge].push(offset);
            }
            canon.push(p);
        }
        if cuts.iter().all(Vec::is_empty) {
            let ids = canon
                .iter()
                .map(|p| match p {
                    TreePoint::Vertex(v) => *v,
                    TreePoint::OnEdge { .. } => unreachable!(),
                })
                .collect();
            return Ok((self.clone(), ids, Correspondence::identity(self)));
        }
        for (e, c) in cuts.iter_mut().enumerate() {
            c.sort_by(f64::total_cmp);
            let tol = REL_TOL * self.edge(e).len;
            c.dedup_by(|a, b| (*a - *b).abs() <= tol);
        }
        let (space, corr, _) = self.split_edges(cuts)?;
        let ids = canon
            .iter()
            .map(|p| match corr.map(&space, p)? {
                TreePoint::Vertex(v) => Ok(v),
                TreePoint::OnEdge { .. } => Err(Error::numerical("inserted point is not a vertex")),
            })
            .collect::<Result<_>>()?;
        Ok((space, ids, corr))
    }

    /// Splits each edge at the given sorted interior offsets.
    fn split_edges(
        &self,
        cuts: Vec<Vec<f64>>,
    ) -> Result<(CableSystem, Correspondence, Vec<Vec<VertexId>>)> {
        let n0 = self.vertex_count();
        let next_label = self.labels().last().copied().unwrap_or(0) + 1;
        let mut labels = self.labels().to_vec();
        let mut edges: Vec<Edge> = self.edges().to_vec();
        let mut coords = self.coords().map(<[_]>::to_vec);
        let mut pieces = Vec::with_capacity(self.edge_count());
        let mut new_ids = Vec::with_capacity(self.edge_count());
        // (parent edge, lo, hi) per new edge
        let mut origin: Vec<(EdgeId, f64, f64)> =
            self.edges().iter().enumerate().map(|(id, e)| (id, 0.0, e.len)).collect();
        for (id, c) in cuts.iter().enumerate() {
            let e = *self.edge(id);
            if c.is_empty() {
                pieces.push(vec![(0.0, e.len, id)]);
                new_ids.push(Vec::new());
                continue;
            }
            let mut chain = vec![e.a];
            let mut ids = Vec::with_capacity(c.len());
            for &s in c {
                let v = labels.len();
                labels.push(next_label + (v - n0) as u64);
                if let Some(xy) = coords.as_mut() {
                    let (pa, pb) = (xy[e.a], xy[e.b]);
                    let t = s / e.len;
                    xy.push([pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])]);
                }
                chain.push(v);
                ids.push(v);
            }
            chain.push(e.b);
            let mut offs = vec![0.0];
            offs.extend_from_slice(c);
            offs.push(e.len);
            let mut row = Vec::with_capacity(c.len() + 1);
            for k in 0..=c.len() {
                let edge = Edge { a: chain[k], b: chain[k + 1], len: offs[k + 1] - offs[k] };
                let new_id = if k == 0 {
                    edges[id] = edge;
                    id
                } else {
                    edges.push(edge);
                    origin.push((id, offs[k], offs[k + 1]));
                    edges.len() - 1
                };
                if k == 0 {
                    origin[id] = (id, offs[0], offs[1]);
                }
                row.push((offs[k], offs[k + 1], new_id));
            }
            pieces.push(row);
            new_ids.push(ids);
        }

        let lineage = self.compose_lineage(&origin);
        let space = CableSystem::from_parts(
            labels,
            edges,
            coords,
            Some(self.uniformity_radius()),
            self.is_local_tree(),
            self.meta().clone(),
            Some(lineage),
            false,
        )?;
        Ok((space, Correspondence { pieces }, new_ids))
    }

    /// Lineage of a subdivision whose edges cover `[lo, hi]` of parent edges.
    fn compose_lineage(&self, origin: &[(EdgeId, f64, f64)]) -> Lineage {
        let edge_origin: Vec<(EdgeId, f64, f64)> = origin
            .iter()
            .map(|&(pe, lo, hi)| match self.lineage() {
                Some(l) => {
                    let (be, st, en) = l.edge_origin[pe];
                    let dir = (en - st).signum();
                    (be, st + dir * lo, st + dir * hi)
                }
                None => (pe, lo, hi),
            })
            .collect();
        let base = self.base().clone();
        let mut by_base_edge = vec![Vec::new(); base.edge_count()];
        for (id, &(be, st, en)) in edge_origin.iter().enumerate() {
            by_base_edge[be].push((st.min(en), st.max(en), id));
        }
        for row in &mut by_base_edge {
            row.sort_by(|a, b| a.0.total_cmp(&b.0));
        }
        Lineage { base, edge_origin, by_base_edge }
    }

    /// The point of the root space this point corresponds to.
    pub fn to_base(&self, p: &TreePoint) -> Result<TreePoint> {
        let p = self.canonical(p)?;
        let Some(l) = self.lineage() else { return Ok(p) };
        match p {
            TreePoint::Vertex(v) if v < l.base.vertex_count() => Ok(p),
            TreePoint::Vertex(v) => {
                // interior vertex: any incident edge locates it
                let &(_, e) = self.neighbors(v).first().expect("subdivision vertex has edges");
                let at = if self.edge(e).a == v { 0.0 } else { self.edge(e).len };
                let (be, st, en) = l.edge_origin[e];
                l.base.point(be, st + (en - st).signum() * at)
            }
            TreePoint::OnEdge { edge, offset } => {
                let (be, st, en) = l.edge_origin[edge];
                l.base.point(be, st + (en - st).signum() * offset)
            }
        }
    }

    /// The point of this space corresponding to a point of the root space.
    pub fn from_base(&self, p: &TreePoint) -> Result<TreePoint> {
        let Some(l) = self.lineage() else { return self.canonical(p) };
        match l.base.canonical(p)? {
            TreePoint::Vertex(v) => Ok(TreePoint::Vertex(v)),
            TreePoint::OnEdge { edge, offset } => {
                let row = &l.by_base_edge[edge];
                let i = row.partition_point(|&(_, hi, _)| hi < offset).min(row.len() - 1);
                let (_, _, id) = row[i];
                let (_, st, en) = l.edge_origin[id];
                self.point(id, ((offset - st) * (en - st).signum()).max(0.0))
            }
        }
    }

    /// Maps a point of `other` to this space when both derive from the same
    /// root space.
    pub fn transfer(&self, other: &CableSystem, p: &TreePoint) -> Result<TreePoint> {
        if !self.shares_base(other) {
            return Err(Error::input("points belong to an unrelated space"));
        }
        self.from_base(&other.to_base(p)?)
    }
}
