use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{CableSystem, CableSystemBuilder};
use crate::error::Result;

/// On-disk form of a cable system. Vertices are sorted by id, coordinates and
/// metadata are keyed by vertex id / name.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceFile {
    pub vertices: Vec<u64>,
    pub edges: Vec<(u64, u64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uniformity_radius: Option<f64>,
    #[serde(default)]
    pub local_tree: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coords: Option<BTreeMap<u64, [f64; 2]>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, Value>,
}

impl CableSystem {
    pub fn to_file(&self) -> SpaceFile {
        SpaceFile {
            vertices: self.labels().to_vec(),
            edges: self
                .edges()
                .iter()
                .map(|e| (self.label(e.a), self.label(e.b), e.len))
                .collect(),
            uniformity_radius: Some(self.uniformity_radius()),
            local_tree: self.is_local_tree(),
            coords: self
                .coords()
                .map(|xy| xy.iter().enumerate().map(|(v, &p)| (self.label(v), p)).collect()),
            meta: self.meta().clone(),
        }
    }

    pub fn from_file(file: &SpaceFile) -> Result<CableSystem> {
        let mut b = CableSystemBuilder::new();
        b.vertices(file.vertices.iter().copied()).local_tree(file.local_tree);
        for &(u, v, len) in &file.edges {
            b.edge(u, v, len);
        }
        if let Some(r) = file.uniformity_radius {
            b.uniformity_radius(r);
        }
        for (&label, &xy) in file.coords.iter().flatten() {
            b.coord(label, xy);
        }
        for (k, v) in &file.meta {
            b.meta(k, v.clone());
        }
        b.build()
    }

    pub fn to_json(&self) -> Value {
        serde_json::to_value(self.to_file()).expect("space serializes")
    }

    pub fn from_json(value: &Value) -> Result<CableSystem> {
        let file: SpaceFile = serde_json::from_value(value.clone())?;
        CableSystem::from_file(&file)
    }
}
