//! Low-dimensional projections, clustering and correlation of per-object vectors.

mod correlation;
mod kmeans;
mod pca;
mod plot;
mod table;
mod tsne;

pub use correlation::{correlation_table, pearson, CorrelationTable};
pub use kmeans::{kmeans, select_k, silhouette, ClusterAssignment, KSelection};
pub use pca::{pca_2d, Pca};
pub use plot::{bar_svg, heatmap_svg, scatter_svg};
pub use table::Table;
pub use tsne::{conditional_affinities, tsne_2d, TsneConfig, TsneResult};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Pca,
    Tsne,
}

/// 2D coordinates for a set of objects.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection2D {
    pub coords: Vec<[f64; 2]>,
    pub labels: Vec<String>,
    pub method: Method,
    /// Principal axes (PCA only).
    pub components: Option<[Vec<f64>; 2]>,
    pub explained_ratio: Option<[f64; 2]>,
}

impl Projection2D {
    pub fn with_labels(mut self, labels: Vec<String>) -> Self {
        self.labels = labels;
        self
    }

    pub fn svg(&self, title: &str) -> String {
        scatter_svg(&self.coords, &self.labels, title)
    }
}
