use alloc::boxed::Box;
use alloc::format;
use alloc::rc::Rc;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::autograd::{Tape, Var};
use crate::datasets::{Dataset, Split, SyntheticKind};
use crate::error::{Error, Result};
use crate::graph::{Graph, GraphBatch};
use crate::nn::{readout, Adam, AdamConfig, GnnKind, GnnStack, Mlp, ParamStore, Readout};
use crate::policy::PolicyModel;
use crate::rng;
use crate::scalar::Scalar;
use crate::transforms::{gt_transform, uniform_transform, Category, TransformKind};

const EVAL_BATCH: usize = 256;

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct ClassifierConfig {
    pub kind: GnnKind,
    pub layers: usize,
    pub hidden: usize,
    pub readout: Readout,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            kind: GnnKind::Gin,
            layers: 3,
            hidden: 64,
            readout: Readout::Mean,
            epochs: 100,
            batch_size: 32,
            lr: 1e-3,
        }
    }
}

impl ClassifierConfig {
    /// Architecture used for a dataset: max pooling with width 128 on COLORS,
    /// sum pooling with width 64 on TRIANGLES, mean pooling elsewhere.
    pub fn for_dataset(name: &str) -> Self {
        match SyntheticKind::from_name(name) {
            Some(SyntheticKind::Colors) => Self { hidden: 128, readout: Readout::Max, ..Self::default() },
            Some(SyntheticKind::Triangles) => Self { hidden: 64, readout: Readout::Sum, ..Self::default() },
            None => Self::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.hidden == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig("classifier layers, hidden size and batch size must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidConfig(format!("classifier learning rate {}", self.lr)));
        }
        Ok(())
    }
}

/// GNN stack, readout and a two-layer MLP head over the pooled embedding.
#[derive(Clone, Debug)]
pub struct Classifier {
    pub gnn: GnnStack,
    pub head: Mlp,
    pub readout: Readout,
    pub store: ParamStore<f32>,
    pub num_classes: usize,
}

impl Classifier {
    pub fn new(feature_dim: usize, num_classes: usize, config: &ClassifierConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        if num_classes < 2 {
            return Err(Error::DegenerateDataset(format!("{num_classes} classes")));
        }
        let mut r = rng::stream(seed, 0xC1A5);
        let mut store = ParamStore::new();
        let gnn = GnnStack::new(&mut store, "gnn", config.kind, feature_dim, config.hidden, config.layers, &mut r);
        let head = Mlp::new(&mut store, "head", &[config.hidden, config.hidden, num_classes], &mut r);
        Ok(Self { gnn, head, readout: config.readout, store, num_classes })
    }

    /// Class logits (`B×K`, column `c` scores label `c + 1`).
    pub fn logits<T: Scalar>(&self, tape: &mut Tape<'_, T>, graphs: &[&Graph]) -> Result<Var> {
        let batch = GraphBatch::new(graphs)?;
        let prop = self.gnn.propagation::<T>(&batch.graph);
        let x = tape.constant(batch.graph.features().cast());
        let h = self.gnn.forward(tape, x, &prop)?;
        let h = tape.relu(h);
        let pooled = readout(tape, h, Rc::from(batch.segment), graphs.len(), self.readout)?;
        self.head.forward(tape, pooled)
    }

    /// Predicted labels in `1..=num_classes`.
    pub fn predict(&self, graphs: &[&Graph]) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(graphs.len());
        for chunk in graphs.chunks(EVAL_BATCH) {
            let mut tape = Tape::new(&self.store);
            let logits = self.logits(&mut tape, chunk)?;
            for row in tape.value(logits).iter_rows() {
                let mut best = 0;
                for (c, &z) in row.iter().enumerate() {
                    if z > row[best] {
                        best = c;
                    }
                }
                out.push(best + 1);
            }
        }
        Ok(out)
    }
}

/// Fraction of `indices` whose label `model` predicts correctly (0 for none).
pub fn evaluate(model: &Classifier, dataset: &Dataset, indices: &[usize]) -> Result<f64> {
    if indices.is_empty() {
        return Ok(0.0);
    }
    let graphs: Vec<&Graph> = indices.iter().map(|&i| &dataset.graphs[i].graph).collect();
    let pred = model.predict(&graphs)?;
    let correct = pred.iter().zip(indices).filter(|(&p, &i)| p == dataset.graphs[i].label).count();
    Ok(correct as f64 / indices.len() as f64)
}

/// How training graphs are transformed before each pass over them.
#[derive(Clone, Debug)]
pub enum Augmentation {
    None,
    Uniform {
        kind: TransformKind,
        rate: f64,
    },
    Gt {
        dataset: SyntheticKind,
        category: Category,
        rate: f64,
    },
    /// A frozen policy; `cap_fraction` overrides the policy's own cap
    /// (0 disables it).
    Policy {
        model: Box<PolicyModel>,
        cap_fraction: f64,
    },
}

impl Augmentation {
    pub fn name(&self) -> alloc::string::String {
        match self {
            Augmentation::None => "none".into(),
            Augmentation::Uniform { kind, .. } => format!("uniform-{}", kind.name()),
            Augmentation::Gt { category, .. } => format!("gt-{}", category.name()),
            Augmentation::Policy { .. } => "graphaug".into(),
        }
    }

    pub fn apply<R: Rng + ?Sized>(&self, g: &Graph, rng: &mut R) -> Result<Graph> {
        match self {
            Augmentation::None => Ok(g.clone()),
            Augmentation::Uniform { kind, rate } => uniform_transform(*kind, g, *rate, rng),
            Augmentation::Gt { dataset, category, rate } => gt_transform(*dataset, *category, g, *rate, rng),
            Augmentation::Policy { model, cap_fraction } => {
                Ok(model.augment_with_cap(g, *cap_fraction, rng)?.final_graph)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierEpoch {
    pub epoch: usize,
    pub loss: f64,
    pub val_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierRun {
    pub test_accuracy: f64,
    pub best_val_accuracy: f64,
    pub best_epoch: usize,
    pub history: Vec<ClassifierEpoch>,
}

/// Trains a classifier on `split.train`, augmenting every training graph
/// afresh each epoch, keeps the parameters of the epoch with the highest
/// validation accuracy (earliest on ties) and reports their test accuracy.
pub fn train_classifier(
    dataset: &Dataset,
    split: &Split,
    augmentation: &Augmentation,
    config: &ClassifierConfig,
    seed: u64,
) -> Result<(Classifier, ClassifierRun)> {
    if split.train.is_empty() {
        return Err(Error::DegenerateDataset("empty training split".into()));
    }
    let mut model = Classifier::new(dataset.feature_dim, dataset.num_classes, config, seed)?;
    let mut adam = Adam::new(&model.store, AdamConfig::with_lr(config.lr));
    let mut order = split.train.clone();
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, ParamStore<f32>)> = None;
    for epoch in 0..config.epochs {
        let mut r = rng::stream(seed, 0xC1A5_0000 + epoch as u64);
        order.shuffle(&mut r);
        let aug_seed = rng::derive_seed(seed, 0xA06_0000 + epoch as u64);
        let (mut loss_sum, mut seen) = (0.0, 0usize);
        for batch in order.chunks(config.batch_size) {
            let mut graphs = Vec::with_capacity(batch.len());
            for &i in batch {
                let mut gr = rng::stream(aug_seed, i as u64);
                graphs.push(augmentation.apply(&dataset.graphs[i].graph, &mut gr)?);
            }
            let refs: Vec<&Graph> = graphs.iter().collect();
            let classes: Rc<[usize]> = batch.iter().map(|&i| dataset.graphs[i].label - 1).collect();
            let grads = {
                let mut tape = Tape::new(&model.store);
                let logits = model.logits(&mut tape, &refs)?;
                let loss = tape.cross_entropy(logits, classes);
                let l = tape.scalar(loss) as f64;
                if !l.is_finite() {
                    return Err(Error::Divergence(format!("classifier loss {l} at epoch {epoch}")));
                }
                loss_sum += l * batch.len() as f64;
                seen += batch.len();
                tape.backward(loss)
            };
            adam.step(&mut model.store, &grads)?;
        }
        let val_accuracy = evaluate(&model, dataset, &split.val)?;
        let loss = loss_sum / seen as f64;
        log::debug!("classifier epoch {epoch}: loss {loss:.4} val {val_accuracy:.4}");
        history.push(ClassifierEpoch { epoch, loss, val_accuracy });
        if best.as_ref().is_none_or(|(acc, _, _)| val_accuracy > *acc) {
            best = Some((val_accuracy, epoch, model.store.clone()));
        }
    }
    let (best_val_accuracy, best_epoch) = match best {
        Some((acc, epoch, store)) => {
            model.store = store;
            (acc, epoch)
        }
        None => (0.0, 0),
    };
    let test_accuracy = evaluate(&model, dataset, &split.test)?;
    Ok((model, ClassifierRun { test_accuracy, best_val_accuracy, best_epoch, history }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{gen_colors, SyntheticConfig};
    use crate::nn::gradcheck::check_param_gradients;

    fn small() -> ClassifierConfig {
        ClassifierConfig { hidden: 16, epochs: 3, batch_size: 8, ..ClassifierConfig::for_dataset("colors") }
    }

    #[test]
    fn logits_are_permutation_invariant_per_graph() {
        let ds = gen_colors(&SyntheticConfig::with_size(3), 4).unwrap();
        let model = Classifier::new(4, ds.num_classes, &small(), 1).unwrap();
        let g = &ds.graphs[0].graph;
        let perm: Vec<usize> = (0..g.num_nodes()).rev().collect();
        let p = g.permute(&perm).unwrap();
        let mut tape = Tape::new(&model.store);
        let l = model.logits(&mut tape, &[g, &p]).unwrap();
        let v = tape.value(l);
        for c in 0..v.cols() {
            assert!((v.get(0, c) - v.get(1, c)).abs() < 1e-4);
        }
    }

    #[test]
    fn classifier_gradients_check() {
        let ds = gen_colors(&SyntheticConfig::with_size(3), 5).unwrap();
        for (kind, readout) in [(GnnKind::Gin, Readout::Max), (GnnKind::Gcn, Readout::Mean)] {
            let cfg = ClassifierConfig { kind, readout, hidden: 5, layers: 2, ..small() };
            let model = Classifier::new(4, ds.num_classes, &cfg, 2).unwrap();
            let mut store = model.store.cast::<f64>();
            let mut r = rng::seeded(3);
            for id in store.ids().collect::<Vec<_>>() {
                if store.name(id).ends_with("bias") {
                    for x in store.get_mut(id).as_mut_slice() {
                        *x = r.gen_range(-0.5..0.5);
                    }
                }
            }
            let graphs: Vec<&Graph> = ds.graphs.iter().map(|g| &g.graph).collect();
            let classes: Rc<[usize]> = ds.graphs.iter().map(|g| g.label - 1).collect();
            let err = check_param_gradients(&mut store, 1e-6, |tape| {
                let l = model.logits(tape, &graphs).unwrap();
                tape.cross_entropy(l, classes.clone())
            });
            assert!(err < 1e-4, "{kind:?}: {err}");
        }
    }

    #[test]
    fn training_is_deterministic_and_selects_best_validation() {
        let ds = gen_colors(&SyntheticConfig::with_size(60), 6).unwrap();
        let split = Split::contiguous(40, 10, 10);
        let aug = Augmentation::Uniform { kind: TransformKind::DropNode, rate: 0.2 };
        let (_, a) = train_classifier(&ds, &split, &aug, &small(), 9).unwrap();
        let (_, b) = train_classifier(&ds, &split, &aug, &small(), 9).unwrap();
        assert_eq!(a, b);
        let max = a.history.iter().map(|e| e.val_accuracy).fold(f64::MIN, f64::max);
        assert_eq!(a.best_val_accuracy, max);
        let first = a.history.iter().position(|e| e.val_accuracy == max).unwrap();
        assert_eq!(a.best_epoch, first);
    }

    #[test]
    fn learns_a_size_threshold() {
        let base = gen_colors(&SyntheticConfig::with_size(300), 7).unwrap();
        let graphs = base
            .graphs
            .iter()
            .map(|g| crate::graph::LabeledGraph {
                graph: g.graph.clone(),
                label: 1 + (g.graph.num_nodes() > 14) as usize,
            })
            .collect();
        let ds = Dataset::new("sizes", graphs, 2, 4).unwrap();
        let split = Split::contiguous(200, 50, 50);
        let cfg = ClassifierConfig { hidden: 16, epochs: 15, readout: Readout::Sum, ..small() };
        let (_, run) = train_classifier(&ds, &split, &Augmentation::None, &cfg, 1).unwrap();
        assert!(run.test_accuracy > 0.75, "{run:?}");
    }
}
