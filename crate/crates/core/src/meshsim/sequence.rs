use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// Mesh connectivity with per-node field values over time.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshGraphSequence {
    pub positions: Vec<Vec3>,
    /// Undirected edges, each stored once.
    pub edges: Vec<[u32; 2]>,
    pub field_channels: usize,
    /// Optional per-node surface-feature channels, constant over time.
    pub features: Option<Vec<Vec<f32>>>,
    /// One `nodes × field_channels` row-major block per time step.
    pub fields: Vec<Vec<f64>>,
}

impl MeshGraphSequence {
    pub fn new(
        positions: Vec<Vec3>,
        edges: Vec<[u32; 2]>,
        field_channels: usize,
        features: Option<Vec<Vec<f32>>>,
        fields: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let n = positions.len();
        if positions.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid_data("non-finite node position"));
        }
        let mut seen = HashSet::with_capacity(edges.len());
        for e in &edges {
            if e[0] as usize >= n || e[1] as usize >= n {
                return Err(Error::invalid_data(format!("edge {e:?} references a missing node")));
            }
            if e[0] == e[1] {
                return Err(Error::invalid_data(format!("self edge {e:?}")));
            }
            if !seen.insert((e[0].min(e[1]), e[0].max(e[1]))) {
                return Err(Error::invalid_data(format!("duplicate edge {e:?}")));
            }
        }
        if let Some(f) = &features {
            let width = f.first().map_or(0, Vec::len);
            if f.len() != n || f.iter().any(|r| r.len() != width) {
                return Err(Error::invalid_data("feature block does not match node count"));
            }
        }
        if field_channels == 0 {
            return Err(Error::invalid_data("sequence needs at least one field channel"));
        }
        if fields.iter().any(|s| s.len() != n * field_channels) {
            return Err(Error::invalid_data("field block size does not match nodes × channels"));
        }
        if fields.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid_data("non-finite field value"));
        }
        Ok(Self { positions, edges, field_channels, features, fields })
    }

    pub fn node_count(&self) -> usize {
        self.positions.len()
    }

    pub fn step_count(&self) -> usize {
        self.fields.len()
    }

    pub fn feature_channels(&self) -> usize {
        self.features.as_ref().and_then(|f| f.first()).map_or(0, Vec::len)
    }

    /// Copy without surface-feature channels.
    pub fn without_features(&self) -> Self {
        Self { features: None, ..self.clone() }
    }
}
