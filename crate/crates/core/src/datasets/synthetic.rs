use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use super::oracle::{count_green, count_triangles, NUM_COLORS};
use super::Dataset;
use crate::error::{Error, Result};
use crate::graph::{Graph, LabeledGraph};
use crate::rng::{self, GraphRng};
use crate::tensor::Matrix;

/// Resampling attempts per graph before a generator gives up.
pub const MAX_RESAMPLES: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum SyntheticKind {
    /// Label = number of green nodes.
    Colors,
    /// Label = number of triangles.
    Triangles,
}

impl SyntheticKind {
    pub fn name(self) -> &'static str {
        match self {
            SyntheticKind::Colors => "colors",
            SyntheticKind::Triangles => "triangles",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "colors" => Some(SyntheticKind::Colors),
            "triangles" => Some(SyntheticKind::Triangles),
            _ => None,
        }
    }

    /// The exact labelling function of the task.
    pub fn oracle(self, g: &Graph) -> Result<usize> {
        match self {
            SyntheticKind::Colors => count_green(g),
            SyntheticKind::Triangles => Ok(count_triangles(g)),
        }
    }

    pub fn generate(self, config: &SyntheticConfig, seed: u64) -> Result<Dataset> {
        match self {
            SyntheticKind::Colors => gen_colors(config, seed),
            SyntheticKind::Triangles => gen_triangles(config, seed),
        }
    }
}

/// Erdős–Rényi topology with a per-graph edge probability drawn uniformly
/// from `[edge_prob_min, edge_prob_max]` and a node count drawn uniformly
/// from `node_min..=node_max`. Graphs whose oracle label falls outside
/// `1..=max_label` are resampled.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SyntheticConfig {
    pub n_graphs: usize,
    pub node_min: usize,
    pub node_max: usize,
    pub edge_prob_min: f64,
    pub edge_prob_max: f64,
    pub max_label: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self { n_graphs: 1000, node_min: 4, node_max: 25, edge_prob_min: 0.1, edge_prob_max: 0.4, max_label: 10 }
    }
}

impl SyntheticConfig {
    pub fn with_size(n_graphs: usize) -> Self {
        Self { n_graphs, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.node_max == 0 || self.node_min > self.node_max {
            return Err(Error::Infeasible(format!(
                "node range {}..={} cannot hold a labelled graph",
                self.node_min, self.node_max
            )));
        }
        if self.max_label == 0 {
            return Err(Error::Infeasible("max_label must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.edge_prob_min)
            || !(0.0..=1.0).contains(&self.edge_prob_max)
            || self.edge_prob_min > self.edge_prob_max
        {
            return Err(Error::InvalidConfig(format!(
                "edge probability range [{}, {}]",
                self.edge_prob_min, self.edge_prob_max
            )));
        }
        Ok(())
    }

    fn sample_topology(&self, rng: &mut GraphRng) -> (usize, Vec<(usize, usize)>) {
        let n = rng.gen_range(self.node_min.max(1)..=self.node_max);
        let p = if self.edge_prob_min == self.edge_prob_max {
            self.edge_prob_min
        } else {
            rng.gen_range(self.edge_prob_min..=self.edge_prob_max)
        };
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                if rng.gen_bool(p) {
                    edges.push((u, v));
                }
            }
        }
        (n, edges)
    }
}

fn generate(
    config: &SyntheticConfig,
    seed: u64,
    kind: SyntheticKind,
    feature_dim: usize,
    mut sample: impl FnMut(&mut GraphRng) -> Result<Graph>,
) -> Result<Dataset> {
    config.validate()?;
    let mut rng = rng::seeded(seed);
    let mut graphs = Vec::with_capacity(config.n_graphs);
    for i in 0..config.n_graphs {
        let mut accepted = None;
        for _ in 0..MAX_RESAMPLES {
            let g = sample(&mut rng)?;
            let label = kind.oracle(&g)?;
            if (1..=config.max_label).contains(&label) {
                accepted = Some(LabeledGraph { graph: g, label });
                break;
            }
        }
        let lg = accepted.ok_or_else(|| {
            Error::Infeasible(format!(
                "graph {i}: no {} label in 1..={} after {MAX_RESAMPLES} draws",
                kind.name(),
                config.max_label
            ))
        })?;
        graphs.push(lg);
    }
    Dataset::new(kind.name(), graphs, config.max_label, feature_dim)
}

/// COLORS: every node is red, green or blue (one-hot in columns 0..3, green
/// at column 1) plus a uniform `[0, 1)` nuisance column; label = number of
/// green nodes.
pub fn gen_colors(config: &SyntheticConfig, seed: u64) -> Result<Dataset> {
    let dim = NUM_COLORS + 1;
    generate(config, seed, SyntheticKind::Colors, dim, |rng| {
        let (n, edges) = config.sample_topology(rng);
        let mut x = Matrix::zeros(n, dim);
        for v in 0..n {
            x.set(v, rng.gen_range(0..NUM_COLORS), 1.0);
            x.set(v, NUM_COLORS, rng.gen::<f32>());
        }
        Graph::new(n, edges, x)
    })
}

/// TRIANGLES: a single constant feature column, so that everything a model
/// knows about a graph comes from its current structure; label = number of
/// triangles.
pub fn gen_triangles(config: &SyntheticConfig, seed: u64) -> Result<Dataset> {
    generate(config, seed, SyntheticKind::Triangles, 1, |rng| {
        let (n, edges) = config.sample_topology(rng);
        Graph::new(n, edges, Matrix::filled(n, 1, 1.0))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_match_oracles() {
        let cfg = SyntheticConfig::with_size(200);
        let colors = gen_colors(&cfg, 3).unwrap();
        for g in &colors.graphs {
            assert_eq!(count_green(&g.graph).unwrap(), g.label);
            assert!((1..=10).contains(&g.label));
            assert_eq!(g.graph.feature_dim(), 4);
        }
        let tri = gen_triangles(&cfg, 3).unwrap();
        for g in &tri.graphs {
            assert_eq!(count_triangles(&g.graph), g.label);
            assert!((1..=10).contains(&g.label));
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = SyntheticConfig::with_size(50);
        assert_eq!(gen_colors(&cfg, 11).unwrap(), gen_colors(&cfg, 11).unwrap());
        assert_eq!(gen_triangles(&cfg, 11).unwrap(), gen_triangles(&cfg, 11).unwrap());
        assert_ne!(gen_colors(&cfg, 11).unwrap(), gen_colors(&cfg, 12).unwrap());
    }

    #[test]
    fn generated_labels_cover_several_classes() {
        let cfg = SyntheticConfig::with_size(300);
        for ds in [gen_colors(&cfg, 1).unwrap(), gen_triangles(&cfg, 1).unwrap()] {
            let occupied = ds.class_histogram().iter().filter(|&&c| c > 0).count();
            assert!(occupied >= 6, "{}: {:?}", ds.name, ds.class_histogram());
        }
    }

    #[test]
    fn infeasible_ranges_are_rejected() {
        let cfg = SyntheticConfig { node_min: 5, node_max: 3, ..SyntheticConfig::with_size(1) };
        assert!(matches!(gen_colors(&cfg, 0), Err(Error::Infeasible(_))));
        let cfg = SyntheticConfig { node_min: 0, node_max: 0, ..SyntheticConfig::with_size(1) };
        assert!(matches!(gen_triangles(&cfg, 0), Err(Error::Infeasible(_))));
        // two nodes can never form a triangle
        let cfg = SyntheticConfig { node_min: 2, node_max: 2, ..SyntheticConfig::with_size(1) };
        assert!(matches!(gen_triangles(&cfg, 0), Err(Error::Infeasible(_))));
    }
}
