//! Graph matching network scoring whether two graphs share a label. Both
//! graphs run through the same layers; each layer also passes cross-graph
//! attention messages between them.

use alloc::format;
use alloc::rc::Rc;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::autograd::{Propagation, Tape, Var};
use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::graph::{Graph, GraphBatch};
use crate::nn::{readout, Adam, AdamConfig, Linear, Mlp, ParamId, ParamStore, Readout};
use crate::rng;
use crate::scalar::Scalar;
use crate::tensor::Matrix;

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct RewardConfig {
    pub layers: usize,
    pub hidden: usize,
    pub readout: Readout,
    /// `false` removes the cross-graph attention messages.
    pub cross_graph: bool,
    /// Graphs with more nodes are never paired.
    pub max_nodes: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Freshly sampled training pairs per epoch, per training graph.
    pub pairs_per_graph: usize,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            layers: 3,
            hidden: 128,
            readout: Readout::Sum,
            cross_graph: true,
            max_nodes: 200,
            epochs: 10,
            batch_size: 32,
            lr: 1e-4,
            pairs_per_graph: 1,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0
            || self.hidden == 0
            || self.batch_size == 0
            || self.max_nodes == 0
            || self.pairs_per_graph == 0
        {
            return Err(Error::InvalidConfig("reward model sizes must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidConfig(format!("reward learning rate {}", self.lr)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct MatchingLayer {
    eps: ParamId,
    update: Mlp,
}

/// Architecture of the matching network.
#[derive(Clone, Debug)]
pub struct MatchingNet {
    feature_dim: usize,
    readout: Readout,
    cross_graph: bool,
    input: Linear,
    layers: Vec<MatchingLayer>,
    head: Mlp,
}

/// `softmax_j(h_v · h_j)` over the rows of `other`, one row per row of `h`.
pub fn cross_attention_weights(h: &Matrix<f64>, other: &Matrix<f64>) -> Result<Matrix<f64>> {
    if other.rows() == 0 {
        return Err(Error::EmptyGraph("cross-graph attention over an empty graph"));
    }
    let mut w = h.matmul_t(other, false, true)?;
    for r in 0..w.rows() {
        crate::autograd::softmax_in_place(w.row_mut(r));
    }
    Ok(w)
}

/// `μ_v = Σ_i w_iv (h_v − h_i)` for a single node embedding `h_v`.
pub fn cross_graph_message(h_v: &[f64], other: &Matrix<f64>) -> Result<Vec<f64>> {
    let hv = Matrix::row_vector(h_v.to_vec());
    let w = cross_attention_weights(&hv, other)?;
    let mut out = h_v.to_vec();
    for (i, &wi) in w.row(0).iter().enumerate() {
        for (o, &x) in out.iter_mut().zip(other.row(i)) {
            *o -= wi * x;
        }
    }
    Ok(out)
}

impl MatchingNet {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        feature_dim: usize,
        config: &RewardConfig,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let h = config.hidden;
        let input = Linear::new(store, "reward.input", feature_dim, h, rng);
        let width = if config.cross_graph { 2 * h } else { h };
        let layers = (0..config.layers)
            .map(|i| MatchingLayer {
                eps: store.zeros(format!("reward.layer{i}.eps"), 1, 1),
                update: Mlp::new(store, &format!("reward.layer{i}.update"), &[width, h, h], rng),
            })
            .collect();
        let head = Mlp::new(store, "reward.head", &[h, h, 1], rng);
        // untrained scores start at exactly 0.5
        let out = head.layers()[head.layers().len() - 1].weight();
        store.get_mut(out).as_mut_slice().iter_mut().for_each(|w| *w = T::zero());
        Ok(Self { feature_dim, readout: config.readout, cross_graph: config.cross_graph, input, layers, head })
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    /// Same-label logits (`B×1`) for `B` graph pairs.
    pub fn logits<T: Scalar>(&self, tape: &mut Tape<'_, T>, pairs: &[(&Graph, &Graph)]) -> Result<Var> {
        for (i, (g1, g2)) in pairs.iter().enumerate() {
            for g in [g1, g2] {
                if g.feature_dim() != self.feature_dim {
                    return Err(Error::ShapeMismatch(format!(
                        "pair {i}: reward model expects {} features, got {}",
                        self.feature_dim,
                        g.feature_dim()
                    )));
                }
                if g.is_empty() {
                    return Err(Error::EmptyGraph("reward model input"));
                }
            }
        }
        let left: Vec<&Graph> = pairs.iter().map(|p| p.0).collect();
        let right: Vec<&Graph> = pairs.iter().map(|p| p.1).collect();
        let (left, right) = (GraphBatch::new(&left)?, GraphBatch::new(&right)?);
        let b = pairs.len();
        let bounds = |batch: &GraphBatch| -> Rc<[usize]> {
            let mut o = batch.offsets.clone();
            o.push(batch.graph.num_nodes());
            o.into()
        };
        let (ol, or) = (bounds(&left), bounds(&right));
        let (pl, pr) = (
            Rc::new(Propagation::<T>::neighbor_sum(&left.graph)),
            Rc::new(Propagation::<T>::neighbor_sum(&right.graph)),
        );
        let xl = tape.constant(left.graph.features().cast());
        let xr = tape.constant(right.graph.features().cast());
        let mut hl = self.input.forward(tape, xl)?;
        let mut hr = self.input.forward(tape, xr)?;
        for (i, layer) in self.layers.iter().enumerate() {
            if i > 0 {
                hl = tape.relu(hl);
                hr = tape.relu(hr);
            }
            let eps = tape.param(layer.eps);
            let one_plus = tape.affine(eps, T::one(), T::one());
            let update = |tape: &mut Tape<'_, T>, h: Var, prop: &Rc<Propagation<T>>, cross: Option<Var>| {
                let agg = tape.propagate(prop, h);
                let own = tape.scale_by(h, one_plus);
                let x = tape.add(own, agg);
                let x = match cross {
                    Some(mu) => tape.concat_cols(x, mu),
                    None => x,
                };
                layer.update.forward(tape, x)
            };
            let (mu_l, mu_r) = if self.cross_graph {
                (
                    Some(tape.cross_message(hl, hr, ol.clone(), or.clone())),
                    Some(tape.cross_message(hr, hl, or.clone(), ol.clone())),
                )
            } else {
                (None, None)
            };
            let nl = update(tape, hl, &pl, mu_l)?;
            let nr = update(tape, hr, &pr, mu_r)?;
            hl = nl;
            hr = nr;
        }
        let gl = readout(tape, hl, left.segment.into(), b, self.readout)?;
        let gr = readout(tape, hr, right.segment.into(), b, self.readout)?;
        let diff = tape.sub(gl, gr);
        let diff = tape.abs(diff);
        self.head.forward(tape, diff)
    }
}

/// A matching network with its (single precision) parameters.
#[derive(Clone, Debug)]
pub struct RewardModel {
    pub net: MatchingNet,
    pub store: ParamStore<f32>,
    pub config: RewardConfig,
}

impl RewardModel {
    pub fn new(feature_dim: usize, config: RewardConfig, seed: u64) -> Result<Self> {
        let mut store = ParamStore::new();
        let net = MatchingNet::new(&mut store, feature_dim, &config, &mut rng::stream(seed, 0x4E_3A4D))?;
        Ok(Self { net, store, config })
    }

    /// `s(g1, g2)`, the predicted probability that both graphs share a label.
    pub fn score(&self, g1: &Graph, g2: &Graph) -> Result<f64> {
        Ok(self.score_batch(&[(g1, g2)])?[0])
    }

    pub fn score_batch(&self, pairs: &[(&Graph, &Graph)]) -> Result<Vec<f64>> {
        if pairs.is_empty() {
            return Ok(Vec::new());
        }
        let mut tape = Tape::new(&self.store);
        let logits = self.net.logits(&mut tape, pairs)?;
        Ok(tape.value(logits).as_slice().iter().map(|&z| crate::autograd::sigmoid(z as f64)).collect())
    }
}

/// A sampled pair of dataset indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Pair {
    pub first: usize,
    pub second: usize,
    pub same: bool,
}

/// `n_pairs` pairs of distinct graphs from `candidates` (dataset indices),
/// half with equal labels (rounded up) and half with different labels, in
/// shuffled order.
pub fn sample_pairs<R: Rng + ?Sized>(
    dataset: &Dataset,
    candidates: &[usize],
    n_pairs: usize,
    rng: &mut R,
) -> Result<Vec<Pair>> {
    let mut by_label: Vec<Vec<usize>> = vec![Vec::new(); dataset.num_classes + 1];
    for &i in candidates {
        by_label[dataset.graphs[i].label].push(i);
    }
    let present: Vec<usize> = (0..by_label.len()).filter(|&l| !by_label[l].is_empty()).collect();
    if present.len() < 2 {
        return Err(Error::DegenerateDataset(format!("pair sampling needs two labels, found {}", present.len())));
    }
    let pos_sources: Vec<usize> =
        candidates.iter().copied().filter(|&i| by_label[dataset.graphs[i].label].len() >= 2).collect();
    let n_pos = n_pairs - n_pairs / 2;
    if n_pos > 0 && pos_sources.is_empty() {
        return Err(Error::DegenerateDataset("no label has two graphs to pair".into()));
    }
    let mut pairs = Vec::with_capacity(n_pairs);
    for _ in 0..n_pos {
        let first = *pos_sources.choose(rng).expect("nonempty");
        let same = &by_label[dataset.graphs[first].label];
        let second = loop {
            let j = *same.choose(rng).expect("nonempty");
            if j != first {
                break j;
            }
        };
        pairs.push(Pair { first, second, same: true });
    }
    for _ in n_pos..n_pairs {
        let first = *candidates.choose(rng).expect("nonempty");
        let label = dataset.graphs[first].label;
        let other = loop {
            let l = *present.choose(rng).expect("nonempty");
            if l != label {
                break l;
            }
        };
        let second = *by_label[other].choose(rng).expect("nonempty");
        pairs.push(Pair { first, second, same: false });
    }
    pairs.shuffle(rng);
    Ok(pairs)
}

/// Indices of graphs small enough for the quadratic attention.
pub fn pairable(dataset: &Dataset, indices: &[usize], max_nodes: usize) -> Vec<usize> {
    indices.iter().copied().filter(|&i| dataset.graphs[i].graph.num_nodes() <= max_nodes).collect()
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RewardHistory {
    pub first_batch_loss: f64,
    pub epoch_loss: Vec<f64>,
    /// Graphs excluded for exceeding `max_nodes`.
    pub skipped: usize,
}

/// Trains a fresh matching network with binary cross-entropy on balanced
/// same/different-label pairs drawn from the `train` graphs of `dataset`.
pub fn train_reward_model(
    dataset: &Dataset,
    train: &[usize],
    config: &RewardConfig,
    seed: u64,
) -> Result<(RewardModel, RewardHistory)> {
    let mut model = RewardModel::new(dataset.feature_dim, config.clone(), seed)?;
    let usable = pairable(dataset, train, config.max_nodes);
    let mut history = RewardHistory { skipped: train.len() - usable.len(), ..RewardHistory::default() };
    if history.skipped > 0 {
        log::warn!("reward model: skipping {} graphs larger than {} nodes", history.skipped, config.max_nodes);
    }
    let pairs_per_epoch = (config.pairs_per_graph * usable.len()).max(2);
    let mut adam = Adam::new(&model.store, AdamConfig::with_lr(config.lr));
    for epoch in 0..config.epochs {
        let mut r = rng::stream(seed, 0x7041_0000 + epoch as u64);
        let pairs = sample_pairs(dataset, &usable, pairs_per_epoch, &mut r)?;
        let mut total = 0.0;
        for batch in pairs.chunks(config.batch_size) {
            let graphs: Vec<(&Graph, &Graph)> =
                batch.iter().map(|p| (&dataset.graphs[p.first].graph, &dataset.graphs[p.second].graph)).collect();
            let targets: Vec<f32> = batch.iter().map(|p| if p.same { 1.0 } else { 0.0 }).collect();
            let (loss, grads) = {
                let mut tape = Tape::new(&model.store);
                let logits = model.net.logits(&mut tape, &graphs)?;
                let loss = tape.bce_with_logits(logits, &targets);
                (tape.scalar(loss) as f64, tape.backward(loss))
            };
            if !loss.is_finite() {
                return Err(Error::Divergence(format!("reward loss became {loss} in epoch {epoch}")));
            }
            if epoch == 0 && total == 0.0 {
                history.first_batch_loss = loss;
            }
            total += loss * batch.len() as f64;
            adam.step(&mut model.store, &grads)?;
        }
        let mean = total / pairs.len() as f64;
        log::info!("reward epoch {epoch}: loss {mean:.4}");
        history.epoch_loss.push(mean);
    }
    Ok((model, history))
}

/// One evaluated pair.
#[derive(Clone, Debug, PartialEq)]
pub struct PairEval {
    pub pair_id: usize,
    pub label1: usize,
    pub label2: usize,
    pub score: f64,
    pub correct: bool,
}

/// Scores `pairs`; a pair counts as correct when `s > 0.5` exactly for
/// same-label pairs.
pub fn evaluate_pairs(model: &RewardModel, dataset: &Dataset, pairs: &[Pair]) -> Result<Vec<PairEval>> {
    let mut out = Vec::with_capacity(pairs.len());
    for (c, chunk) in pairs.chunks(64).enumerate() {
        let graphs: Vec<(&Graph, &Graph)> =
            chunk.iter().map(|p| (&dataset.graphs[p.first].graph, &dataset.graphs[p.second].graph)).collect();
        let scores = model.score_batch(&graphs)?;
        for (k, (p, s)) in chunk.iter().zip(scores).enumerate() {
            out.push(PairEval {
                pair_id: c * 64 + k,
                label1: dataset.graphs[p.first].label,
                label2: dataset.graphs[p.second].label,
                score: s,
                correct: (s > 0.5) == p.same,
            });
        }
    }
    Ok(out)
}

pub fn pair_accuracy(evals: &[PairEval]) -> f64 {
    if evals.is_empty() {
        return 0.0;
    }
    evals.iter().filter(|e| e.correct).count() as f64 / evals.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{gen_colors, SyntheticConfig};
    use crate::graph::LabeledGraph;
    use crate::nn::gradcheck::check_param_gradients;

    fn small() -> RewardConfig {
        RewardConfig { layers: 2, hidden: 8, ..RewardConfig::default() }
    }

    fn colors(n: usize, seed: u64) -> Dataset {
        gen_colors(&SyntheticConfig::with_size(n), seed).unwrap()
    }

    #[test]
    fn cross_message_examples() {
        let other = Matrix::from_rows(&[[1.0, 2.0]]).unwrap();
        assert_eq!(cross_graph_message(&[3.0, 5.0], &other).unwrap(), vec![2.0, 3.0]);
        let same = Matrix::from_rows(&[[0.3, -0.2], [0.3, -0.2], [0.3, -0.2]]).unwrap();
        assert!(cross_graph_message(&[0.3, -0.2], &same).unwrap().iter().all(|x| x.abs() < 1e-15));
        let mut r = rng::seeded(1);
        let h = Matrix::from_vec(4, 3, (0..12).map(|_| r.gen_range(-2.0..2.0)).collect()).unwrap();
        let o = Matrix::from_vec(5, 3, (0..15).map(|_| r.gen_range(-2.0..2.0)).collect()).unwrap();
        let w = cross_attention_weights(&h, &o).unwrap();
        for row in w.iter_rows() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(cross_graph_message(&[1.0, 2.0], &Matrix::zeros(0, 2)).is_err());
    }

    #[test]
    fn scores_are_symmetric_and_self_pairs_constant() {
        let ds = colors(20, 1);
        for cross_graph in [true, false] {
            let model = RewardModel::new(4, RewardConfig { cross_graph, ..small() }, 3).unwrap();
            let self_score = model.score(&ds.graphs[0].graph, &ds.graphs[0].graph).unwrap();
            for w in ds.graphs.windows(2) {
                let (a, b) = (&w[0].graph, &w[1].graph);
                let s1 = model.score(a, b).unwrap();
                let s2 = model.score(b, a).unwrap();
                assert!((s1 - s2).abs() < 1e-5);
                assert!(s1 > 0.0 && s1 < 1.0);
                assert!((model.score(b, b).unwrap() - self_score).abs() < 1e-6);
            }
        }
        let model = RewardModel::new(4, small(), 3).unwrap();
        let g3 = Graph::complete(3, 3);
        assert!(model.score(&ds.graphs[0].graph, &g3).is_err());
    }

    #[test]
    fn batched_scores_match_single_scores() {
        let ds = colors(6, 2);
        let model = RewardModel::new(4, small(), 4).unwrap();
        let pairs: Vec<(&Graph, &Graph)> = (0..5).map(|i| (&ds.graphs[i].graph, &ds.graphs[i + 1].graph)).collect();
        let batch = model.score_batch(&pairs).unwrap();
        for (p, s) in pairs.iter().zip(batch) {
            assert!((model.score(p.0, p.1).unwrap() - s).abs() < 1e-5);
        }
    }

    #[test]
    fn pair_sampling_is_balanced_and_deterministic() {
        let ds = colors(200, 3);
        let all: Vec<usize> = (0..ds.len()).collect();
        let pairs = sample_pairs(&ds, &all, 100, &mut rng::seeded(1)).unwrap();
        assert_eq!(pairs.iter().filter(|p| p.same).count(), 50);
        for p in &pairs {
            assert_ne!(p.first, p.second);
            assert_eq!(ds.graphs[p.first].label == ds.graphs[p.second].label, p.same);
        }
        assert_eq!(pairs, sample_pairs(&ds, &all, 100, &mut rng::seeded(1)).unwrap());

        let one_label =
            Dataset::new("x", vec![LabeledGraph { graph: Graph::complete(2, 1), label: 1 }; 3], 2, 1).unwrap();
        assert!(matches!(
            sample_pairs(&one_label, &[0, 1, 2], 4, &mut rng::seeded(0)),
            Err(Error::DegenerateDataset(_))
        ));
    }

    #[test]
    fn matching_network_gradients() {
        let ds = colors(3, 5);
        for cross_graph in [true, false] {
            let mut store = ParamStore::<f64>::new();
            let config = RewardConfig { cross_graph, ..small() };
            let net = MatchingNet::new(&mut store, 4, &config, &mut rng::seeded(6)).unwrap();
            // randomize zero-initialized biases and the zeroed output layer so
            // every gradient path is live and ReLU inputs avoid the kink at 0
            let biases: Vec<ParamId> =
                store.ids().filter(|&id| store.get(id).as_slice().iter().all(|&x| x == 0.0)).collect();
            let mut r = rng::seeded(7);
            for id in biases {
                store.get_mut(id).as_mut_slice().iter_mut().for_each(|b| *b = r.gen_range(-0.5..0.5));
            }
            let pairs = [(&ds.graphs[0].graph, &ds.graphs[1].graph), (&ds.graphs[2].graph, &ds.graphs[0].graph)];
            let err = check_param_gradients(&mut store, 1e-5, |tape| {
                let z = net.logits(tape, &pairs).unwrap();
                tape.bce_with_logits(z, &[1.0, 0.0])
            });
            assert!(err < 1e-4, "cross_graph={cross_graph}: {err}");
        }
    }

    #[test]
    fn untrained_loss_is_near_ln2_and_training_replays() {
        let ds = colors(64, 8);
        let train: Vec<usize> = (0..64).collect();
        let config = RewardConfig { epochs: 2, ..small() };
        let (m1, h1) = train_reward_model(&ds, &train, &config, 9).unwrap();
        assert!((h1.first_batch_loss - core::f64::consts::LN_2).abs() < 0.2, "{}", h1.first_batch_loss);
        let (m2, h2) = train_reward_model(&ds, &train, &config, 9).unwrap();
        assert_eq!(h1, h2);
        assert_eq!(m1.store.flatten_values(), m2.store.flatten_values());
    }
}
