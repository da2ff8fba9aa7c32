//! Applying per-element transform decisions to graphs, plus the uniform and
//! ground-truth-aware baseline augmentations.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng;

use crate::datasets::{
    closes_triangle, count_green, triangle_edges, triangle_nodes, SyntheticKind, GREEN_COLUMN, NUM_COLORS,
};
use crate::error::{Error, Result};
use crate::graph::{canonical, Graph};

/// Default flip probability of the uniform and GT baselines.
pub const DEFAULT_RATE: f64 = 0.2;

/// The three transform categories the augmentation policy chooses from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Category {
    MaskNf,
    DropNode,
    PerturbEdge,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::MaskNf, Category::DropNode, Category::PerturbEdge];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Category::MaskNf => "masknf",
            Category::DropNode => "dropnode",
            Category::PerturbEdge => "perturbedge",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }
}

impl core::fmt::Display for Category {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

/// Baseline transforms; DropEdge only removes edges.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum TransformKind {
    MaskNf,
    DropNode,
    PerturbEdge,
    DropEdge,
}

impl TransformKind {
    pub fn name(self) -> &'static str {
        match self {
            TransformKind::MaskNf => "masknf",
            TransformKind::DropNode => "dropnode",
            TransformKind::PerturbEdge => "perturbedge",
            TransformKind::DropEdge => "dropedge",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [Self::MaskNf, Self::DropNode, Self::PerturbEdge, Self::DropEdge].into_iter().find(|k| k.name() == name)
    }

    pub fn category(self) -> Option<Category> {
        match self {
            TransformKind::MaskNf => Some(Category::MaskNf),
            TransformKind::DropNode => Some(Category::DropNode),
            TransformKind::PerturbEdge => Some(Category::PerturbEdge),
            TransformKind::DropEdge => None,
        }
    }
}

impl From<Category> for TransformKind {
    fn from(c: Category) -> Self {
        match c {
            Category::MaskNf => TransformKind::MaskNf,
            Category::DropNode => TransformKind::DropNode,
            Category::PerturbEdge => TransformKind::PerturbEdge,
        }
    }
}

/// `o^M`: row-major `num_nodes × d` cells, `true` = zero this feature.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskDecision {
    pub rows: usize,
    pub cols: usize,
    pub mask: Vec<bool>,
}

impl MaskDecision {
    pub fn none(rows: usize, cols: usize) -> Self {
        Self { rows, cols, mask: vec![false; rows * cols] }
    }
}

/// `o^D`: `true` = drop this node.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DropDecision(pub Vec<bool>);

/// `o^P` over the droppable (existing) and addable (non-edge) candidates.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PerturbDecision {
    pub droppable: Vec<(usize, usize)>,
    pub drop: Vec<bool>,
    pub addable: Vec<(usize, usize)>,
    pub add: Vec<bool>,
}

impl PerturbDecision {
    /// Every edge of `g` droppable, `addable` as given, nothing selected.
    pub fn none(g: &Graph, addable: Vec<(usize, usize)>) -> Self {
        let droppable = g.edges().to_vec();
        Self { drop: vec![false; droppable.len()], add: vec![false; addable.len()], droppable, addable }
    }

    pub fn num_selected(&self) -> usize {
        self.drop.iter().chain(&self.add).filter(|&&o| o).count()
    }
}

/// One category's decision payload.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Decision {
    MaskNf(MaskDecision),
    DropNode(DropDecision),
    PerturbEdge(PerturbDecision),
}

impl Decision {
    pub fn category(&self) -> Category {
        match self {
            Decision::MaskNf(_) => Category::MaskNf,
            Decision::DropNode(_) => Category::DropNode,
            Decision::PerturbEdge(_) => Category::PerturbEdge,
        }
    }

    /// Number of positive element decisions.
    pub fn num_modified(&self) -> usize {
        match self {
            Decision::MaskNf(m) => m.mask.iter().filter(|&&o| o).count(),
            Decision::DropNode(d) => d.0.iter().filter(|&&o| o).count(),
            Decision::PerturbEdge(p) => p.num_selected(),
        }
    }

    pub fn apply(&self, g: &Graph) -> Result<Graph> {
        match self {
            Decision::MaskNf(m) => apply_mask_nf(g, m),
            Decision::DropNode(d) => apply_drop_node(g, d),
            Decision::PerturbEdge(p) => apply_perturb_edge(g, p),
        }
    }
}

pub fn apply_mask_nf(g: &Graph, m: &MaskDecision) -> Result<Graph> {
    if (m.rows, m.cols) != (g.num_nodes(), g.feature_dim()) || m.mask.len() != m.rows * m.cols {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} mask for a {}x{} feature matrix",
            m.rows,
            m.cols,
            g.num_nodes(),
            g.feature_dim()
        )));
    }
    let mut x = g.features().clone();
    for (value, &o) in x.as_mut_slice().iter_mut().zip(&m.mask) {
        if o {
            *value = 0.0;
        }
    }
    g.with_features(x)
}

/// Removes the marked nodes. Marking every node leaves the graph unchanged,
/// since downstream models need at least one node.
pub fn apply_drop_node(g: &Graph, d: &DropDecision) -> Result<Graph> {
    if d.0.len() != g.num_nodes() {
        return Err(Error::ShapeMismatch(format!("drop decision of length {} for {} nodes", d.0.len(), g.num_nodes())));
    }
    if d.0.iter().all(|&o| o) {
        return Ok(g.clone());
    }
    Ok(g.remove_masked(&d.0))
}

pub fn apply_perturb_edge(g: &Graph, p: &PerturbDecision) -> Result<Graph> {
    if p.drop.len() != p.droppable.len() || p.add.len() != p.addable.len() {
        return Err(Error::ShapeMismatch("perturb decision lengths differ from candidate sets".into()));
    }
    if p.addable.len() > g.num_edges() {
        return Err(Error::InvalidGraph(format!(
            "{} addable candidates exceed {} edges",
            p.addable.len(),
            g.num_edges()
        )));
    }
    let mut dropped = vec![false; g.num_edges()];
    for (&(u, v), &o) in p.droppable.iter().zip(&p.drop) {
        let e = canonical(u, v);
        let pos = g
            .edges()
            .binary_search(&e)
            .map_err(|_| Error::InvalidGraph(format!("droppable pair {e:?} is not an edge")))?;
        dropped[pos] |= o;
    }
    let mut edges: Vec<(usize, usize)> = g.edges().iter().zip(&dropped).filter(|(_, &d)| !d).map(|(&e, _)| e).collect();
    for (&(u, v), &o) in p.addable.iter().zip(&p.add) {
        if g.has_edge(u, v) {
            return Err(Error::InvalidGraph(format!("addable pair ({u}, {v}) is already an edge")));
        }
        if o {
            edges.push((u, v));
        }
    }
    g.with_edges(edges)
}

/// Up to `|E|` non-edges of `g`, drawn uniformly without replacement and
/// returned in canonical order.
pub fn sample_addable<R: Rng + ?Sized>(g: &Graph, rng: &mut R) -> Vec<(usize, usize)> {
    let non_edges = g.non_edges();
    let k = g.num_edges().min(non_edges.len());
    let mut picked: Vec<usize> = index::sample(rng, non_edges.len(), k).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| non_edges[i]).collect()
}

fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::InvalidConfig(format!("transform rate {rate} outside [0, 1]")));
    }
    Ok(())
}

fn flips<R: Rng + ?Sized>(n: usize, rate: f64, rng: &mut R) -> Vec<bool> {
    (0..n).map(|_| rng.gen_bool(rate)).collect()
}

/// Independent Bernoulli(`rate`) flips restricted to `eligible` elements.
fn flips_where<R: Rng + ?Sized>(eligible: &[bool], rate: f64, rng: &mut R) -> Vec<bool> {
    eligible.iter().map(|&e| e && rng.gen_bool(rate)).collect()
}

pub fn uniform_mask_nf<R: Rng + ?Sized>(g: &Graph, rate: f64, rng: &mut R) -> Result<Graph> {
    check_rate(rate)?;
    let (rows, cols) = (g.num_nodes(), g.feature_dim());
    apply_mask_nf(g, &MaskDecision { rows, cols, mask: flips(rows * cols, rate, rng) })
}

pub fn uniform_drop_node<R: Rng + ?Sized>(g: &Graph, rate: f64, rng: &mut R) -> Result<Graph> {
    check_rate(rate)?;
    apply_drop_node(g, &DropDecision(flips(g.num_nodes(), rate, rng)))
}

pub fn uniform_perturb_edge<R: Rng + ?Sized>(g: &Graph, rate: f64, rng: &mut R) -> Result<Graph> {
    check_rate(rate)?;
    let addable = sample_addable(g, rng);
    let drop = flips(g.num_edges(), rate, rng);
    let add = flips(addable.len(), rate, rng);
    apply_perturb_edge(g, &PerturbDecision { droppable: g.edges().to_vec(), drop, addable, add })
}

pub fn uniform_drop_edge<R: Rng + ?Sized>(g: &Graph, rate: f64, rng: &mut R) -> Result<Graph> {
    check_rate(rate)?;
    let drop = flips(g.num_edges(), rate, rng);
    apply_perturb_edge(
        g,
        &PerturbDecision { droppable: g.edges().to_vec(), drop, addable: Vec::new(), add: Vec::new() },
    )
}

pub fn uniform_transform<R: Rng + ?Sized>(kind: TransformKind, g: &Graph, rate: f64, rng: &mut R) -> Result<Graph> {
    match kind {
        TransformKind::MaskNf => uniform_mask_nf(g, rate, rng),
        TransformKind::DropNode => uniform_drop_node(g, rate, rng),
        TransformKind::PerturbEdge => uniform_perturb_edge(g, rate, rng),
        TransformKind::DropEdge => uniform_drop_edge(g, rate, rng),
    }
}

/// Whether `gt_transform` is defined for this dataset and category.
pub fn gt_defined(dataset: SyntheticKind, category: Category) -> bool {
    !(dataset == SyntheticKind::Triangles && category == Category::MaskNf)
}

/// Uniform transform restricted to elements that cannot affect the dataset's
/// label oracle.
///
/// COLORS: MaskNF leaves the color columns alone, DropNode never drops green
/// nodes, PerturbEdge is unrestricted (structure does not affect the label).
/// TRIANGLES: DropNode never drops a node of any triangle; PerturbEdge never
/// drops a triangle edge and adds a selected candidate only if it closes no
/// triangle in the graph built so far. MaskNF is undefined on TRIANGLES.
pub fn gt_transform<R: Rng + ?Sized>(
    dataset: SyntheticKind,
    category: Category,
    g: &Graph,
    rate: f64,
    rng: &mut R,
) -> Result<Graph> {
    check_rate(rate)?;
    match (dataset, category) {
        (SyntheticKind::Colors, Category::MaskNf) => {
            let (rows, cols) = (g.num_nodes(), g.feature_dim());
            let eligible: Vec<bool> = (0..rows * cols).map(|i| i % cols >= NUM_COLORS).collect();
            apply_mask_nf(g, &MaskDecision { rows, cols, mask: flips_where(&eligible, rate, rng) })
        }
        (SyntheticKind::Colors, Category::DropNode) => {
            count_green(g)?;
            let eligible: Vec<bool> = (0..g.num_nodes()).map(|v| g.features().get(v, GREEN_COLUMN) != 1.0).collect();
            apply_drop_node(g, &DropDecision(flips_where(&eligible, rate, rng)))
        }
        (SyntheticKind::Colors, Category::PerturbEdge) => uniform_perturb_edge(g, rate, rng),
        (SyntheticKind::Triangles, Category::DropNode) => {
            let protected = triangle_nodes(g);
            let eligible: Vec<bool> = protected.iter().map(|&p| !p).collect();
            apply_drop_node(g, &DropDecision(flips_where(&eligible, rate, rng)))
        }
        (SyntheticKind::Triangles, Category::PerturbEdge) => {
            let addable = sample_addable(g, rng);
            let eligible: Vec<bool> = triangle_edges(g).iter().map(|&p| !p).collect();
            let drop = flips_where(&eligible, rate, rng);
            let mut current = apply_perturb_edge(g, &PerturbDecision::none(g, Vec::new()).with_drop(drop))?;
            for (u, v) in addable {
                if rng.gen_bool(rate) && !closes_triangle(&current, u, v) {
                    let mut edges = current.edges().to_vec();
                    edges.push((u, v));
                    current = current.with_edges(edges)?;
                }
            }
            Ok(current)
        }
        (SyntheticKind::Triangles, Category::MaskNf) => {
            Err(Error::UndefinedTransform("MaskNF has no ground-truth variant on TRIANGLES".into()))
        }
    }
}

impl PerturbDecision {
    fn with_drop(mut self, drop: Vec<bool>) -> Self {
        self.drop = drop;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{count_triangles, gen_colors, gen_triangles, SyntheticConfig};
    use crate::rng;
    use crate::tensor::Matrix;

    fn path3() -> Graph {
        Graph::new(3, [(0, 1), (1, 2)], Matrix::from_rows(&[[1.0f32, 2.0], [3.0, 4.0], [5.0, 6.0]]).unwrap()).unwrap()
    }

    #[test]
    fn mask_examples() {
        let g = path3();
        assert_eq!(apply_mask_nf(&g, &MaskDecision::none(3, 2)).unwrap(), g);
        let all = MaskDecision { rows: 3, cols: 2, mask: vec![true; 6] };
        let out = apply_mask_nf(&g, &all).unwrap();
        assert!(out.features().as_slice().iter().all(|&x| x == 0.0));
        assert_eq!(out.edges(), g.edges());
        let mut one = MaskDecision::none(3, 2);
        one.mask[3] = true;
        let out = apply_mask_nf(&g, &one).unwrap();
        assert_eq!(out.features().as_slice(), &[1.0, 2.0, 3.0, 0.0, 5.0, 6.0]);
        assert!(apply_mask_nf(&g, &MaskDecision::none(2, 2)).is_err());
    }

    #[test]
    fn drop_examples() {
        let g = path3();
        assert_eq!(apply_drop_node(&g, &DropDecision(vec![false; 3])).unwrap(), g);
        let out = apply_drop_node(&g, &DropDecision(vec![false, true, false])).unwrap();
        assert_eq!((out.num_nodes(), out.num_edges()), (2, 0));
        assert_eq!(apply_drop_node(&g, &DropDecision(vec![true; 3])).unwrap(), g);
    }

    #[test]
    fn perturb_examples() {
        let k3 = Graph::complete(3, 1);
        assert_eq!(apply_perturb_edge(&k3, &PerturbDecision::none(&k3, vec![])).unwrap(), k3);
        let mut p = PerturbDecision::none(&k3, vec![]);
        p.drop[0] = true;
        let out = apply_perturb_edge(&k3, &p).unwrap();
        assert_eq!(count_triangles(&k3), 1);
        assert_eq!(count_triangles(&out), 0);
        assert_eq!(out.num_edges(), 2);

        let g = path3();
        let p = PerturbDecision { droppable: vec![], drop: vec![], addable: vec![(0, 2)], add: vec![true] };
        assert_eq!(apply_perturb_edge(&g, &p).unwrap().num_edges(), 3);
        let bad = PerturbDecision { droppable: vec![], drop: vec![], addable: vec![(0, 1)], add: vec![false] };
        assert!(apply_perturb_edge(&g, &bad).is_err());
        let bad = PerturbDecision { droppable: vec![(0, 2)], drop: vec![true], addable: vec![], add: vec![] };
        assert!(apply_perturb_edge(&g, &bad).is_err());
    }

    #[test]
    fn addable_set_is_bounded_and_disjoint() {
        let mut r = rng::seeded(1);
        let g = path3();
        let a = sample_addable(&g, &mut r);
        assert_eq!(a, vec![(0, 2)]);
        let k4 = Graph::complete(4, 1);
        assert!(sample_addable(&k4, &mut r).is_empty());
        let ds = gen_triangles(&SyntheticConfig::with_size(20), 2).unwrap();
        for lg in &ds.graphs {
            let a = sample_addable(&lg.graph, &mut r);
            assert!(a.len() <= lg.graph.num_edges());
            assert!(a.iter().all(|&(u, v)| u < v && !lg.graph.has_edge(u, v)));
        }
    }

    #[test]
    fn rate_zero_is_identity() {
        let ds = gen_colors(&SyntheticConfig::with_size(10), 0).unwrap();
        let mut r = rng::seeded(0);
        for lg in &ds.graphs {
            for kind in
                [TransformKind::MaskNf, TransformKind::DropNode, TransformKind::PerturbEdge, TransformKind::DropEdge]
            {
                assert_eq!(uniform_transform(kind, &lg.graph, 0.0, &mut r).unwrap(), lg.graph);
            }
            assert_eq!(uniform_drop_node(&lg.graph, 1.0, &mut r).unwrap(), lg.graph);
        }
        assert!(uniform_mask_nf(&path3(), 1.5, &mut r).is_err());
    }

    #[test]
    fn uniform_flip_frequency() {
        let g = Graph::unfeatured(1, Vec::<(usize, usize)>::new(), 1).unwrap();
        let g = g.with_features(Matrix::filled(1, 1, 1.0)).unwrap();
        let mut r = rng::seeded(5);
        let trials = 10_000;
        let masked =
            (0..trials).filter(|_| uniform_mask_nf(&g, 0.2, &mut r).unwrap().features().get(0, 0) == 0.0).count();
        assert!((masked as f64 / trials as f64 - 0.2).abs() < 0.01);
        let k2 = Graph::complete(2, 1);
        let dropped = (0..trials).filter(|_| uniform_drop_edge(&k2, 0.3, &mut r).unwrap().num_edges() == 0).count();
        assert!((dropped as f64 / trials as f64 - 0.3).abs() < 0.01);
    }

    #[test]
    fn gt_transforms_preserve_labels() {
        let cfg = SyntheticConfig::with_size(100);
        let colors = gen_colors(&cfg, 4).unwrap();
        let triangles = gen_triangles(&cfg, 4).unwrap();
        let mut r = rng::seeded(8);
        for lg in &colors.graphs {
            for c in Category::ALL {
                let out = gt_transform(SyntheticKind::Colors, c, &lg.graph, 0.5, &mut r).unwrap();
                assert_eq!(count_green(&out).unwrap(), lg.label);
            }
        }
        for lg in &triangles.graphs {
            for c in [Category::DropNode, Category::PerturbEdge] {
                let out = gt_transform(SyntheticKind::Triangles, c, &lg.graph, 0.5, &mut r).unwrap();
                assert_eq!(count_triangles(&out), lg.label);
            }
        }
        let g = &triangles.graphs[0].graph;
        assert!(matches!(
            gt_transform(SyntheticKind::Triangles, Category::MaskNf, g, 0.2, &mut r),
            Err(Error::UndefinedTransform(_))
        ));
    }

    #[test]
    fn gt_masknf_keeps_color_columns() {
        let ds = gen_colors(&SyntheticConfig::with_size(20), 9).unwrap();
        let mut r = rng::seeded(9);
        for lg in &ds.graphs {
            let out = gt_transform(SyntheticKind::Colors, Category::MaskNf, &lg.graph, 1.0, &mut r).unwrap();
            for v in 0..out.num_nodes() {
                assert_eq!(out.features().row(v)[..NUM_COLORS], lg.graph.features().row(v)[..NUM_COLORS]);
                assert_eq!(out.features().get(v, NUM_COLORS), 0.0);
            }
        }
    }

    #[test]
    fn uniform_dropnode_breaks_triangle_labels() {
        let ds = gen_triangles(&SyntheticConfig::with_size(300), 6).unwrap();
        let mut r = rng::seeded(6);
        let changed = ds
            .graphs
            .iter()
            .filter(|lg| count_triangles(&uniform_drop_node(&lg.graph, 0.2, &mut r).unwrap()) != lg.label)
            .count();
        assert!(changed > 0);
    }

    #[test]
    fn names_round_trip() {
        for c in Category::ALL {
            assert_eq!(Category::from_name(c.name()), Some(c));
            assert_eq!(Category::from_index(c.index()), Some(c));
        }
        assert_eq!(TransformKind::from_name("dropedge"), Some(TransformKind::DropEdge));
    }
}
