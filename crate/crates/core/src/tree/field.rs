use super::{CableSystem, EdgeId, TreePoint, VertexId};
use crate::error::Result;

/// Distance to a closed set, sampled on a subdivision on which it is exactly
/// piecewise linear.
#[derive(Clone, Debug)]
pub struct DistanceField {
    pub space: CableSystem,
    /// Distance of every vertex of `space` to the set.
    pub dist: Vec<f64>,
    /// Vertex ids of the anchor points in `space`.
    pub anchors: Vec<VertexId>,
}

impl CableSystem {
    /// Distance to the set made of `anchors` plus the edges returned by
    /// `set_edges` (evaluated once the anchors are vertices). Peaks of the
    /// field and its crossings of every value in `levels` become vertices.
    pub fn distance_field(
        &self,
        anchors: &[TreePoint],
        set_edges: impl FnOnce(&CableSystem, &[VertexId]) -> Result<Vec<EdgeId>>,
        levels: &[f64],
    ) -> Result<DistanceField> {
        let (s1, ids, _) = self.insert_points(anchors)?;
        let inside = set_edges(&s1, &ids)?;
        let mut sources: Vec<TreePoint> = ids.iter().map(|&v| TreePoint::Vertex(v)).collect();
        let mut skip = vec![false; s1.edge_count()];
        for &e in &inside {
            skip[e] = true;
            let edge = s1.edge(e);
            sources.push(TreePoint::Vertex(edge.a));
            sources.push(TreePoint::Vertex(edge.b));
        }
        let map = s1.distances_from(&sources, f64::INFINITY);
        let mut extra = Vec::new();
        for e in 0..s1.edge_count() {
            if skip[e] {
                continue;
            }
            let profile = map.edge_profile(&s1, e);
            let mut cuts = profile.peaks();
            for &l in levels {
                cuts.extend(profile.level_points(l));
            }
            for s in cuts {
                if let Ok(p @ TreePoint::OnEdge { .. }) = s1.point(e, s) {
                    extra.push(p);
                }
            }
        }
        let (s2, _, _) = s1.insert_points(&extra)?;
        let map = s2.distances_from(&sources, f64::INFINITY);
        Ok(DistanceField { space: s2, dist: map.dist, anchors: ids })
    }

    /// Edges on the geodesic between two vertices.
    pub fn path_edges(&self, a: VertexId, b: VertexId) -> Result<Vec<EdgeId>> {
        let path = self.geodesic_path(&TreePoint::Vertex(a), &TreePoint::Vertex(b))?;
        Ok(path.pieces.iter().map(|p| p.edge).collect())
    }
}
