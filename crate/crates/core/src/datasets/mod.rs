//! Labelled graph collections: the synthetic COLORS and TRIANGLES tasks with
//! their exact label oracles, and train/validation/test split management.

mod oracle;
mod split;
mod synthetic;

pub use oracle::{
    closes_triangle, count_green, count_triangles, triangle_edges, triangle_nodes, GREEN_COLUMN, NUM_COLORS,
};
pub use split::{kfold_splits, Split, SplitSpec};
pub use synthetic::{gen_colors, gen_triangles, SyntheticConfig, SyntheticKind, MAX_RESAMPLES};

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graph::LabeledGraph;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub graphs: Vec<LabeledGraph>,
    pub num_classes: usize,
    pub feature_dim: usize,
}

impl Dataset {
    /// Checks that labels lie in `1..=num_classes` and that every graph has
    /// `feature_dim` feature columns.
    pub fn new(
        name: impl Into<String>,
        graphs: Vec<LabeledGraph>,
        num_classes: usize,
        feature_dim: usize,
    ) -> Result<Self> {
        for (i, g) in graphs.iter().enumerate() {
            if g.label == 0 || g.label > num_classes {
                return Err(Error::InvalidConfig(format!("graph {i} has label {} outside 1..={num_classes}", g.label)));
            }
            if g.graph.feature_dim() != feature_dim {
                return Err(Error::ShapeMismatch(format!(
                    "graph {i} has {} feature columns instead of {feature_dim}",
                    g.graph.feature_dim()
                )));
            }
        }
        Ok(Self { name: name.into(), graphs, num_classes, feature_dim })
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.graphs.iter().map(|g| g.label).collect()
    }

    /// `hist[c - 1]` is the number of graphs with label `c`.
    pub fn class_histogram(&self) -> Vec<usize> {
        let mut hist = vec![0; self.num_classes];
        for g in &self.graphs {
            hist[g.label - 1] += 1;
        }
        hist
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            name: self.name.clone(),
            graphs: idx.iter().map(|&i| self.graphs[i].clone()).collect(),
            num_classes: self.num_classes,
            feature_dim: self.feature_dim,
        }
    }

    /// The synthetic task this dataset was generated for, if any.
    pub fn synthetic_kind(&self) -> Option<SyntheticKind> {
        SyntheticKind::from_name(&self.name)
    }
}
