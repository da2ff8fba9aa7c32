//! The learnable augmentation model: a GIN encoder over the graph plus a
//! virtual node, a GRU that picks a transform category at every step, and
//! per-element Bernoulli heads for MaskNF, DropNode and PerturbEdge.

use alloc::format;
use alloc::rc::Rc;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use rand::Rng;

use crate::autograd::{Tape, Var};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::nn::{GnnKind, GnnStack, Gru, Mlp, ParamId, ParamStore};
use crate::rng;
use crate::scalar::{Scalar, PROB_FLOOR};
use crate::tensor::Matrix;
use crate::transforms::{sample_addable, Category, Decision, DropDecision, MaskDecision, PerturbDecision};

/// Which parts of the policy are learned.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum PolicyMode {
    /// Learned category selection and learned element probabilities.
    Full,
    /// Learned category selection; every element flips with this fixed rate.
    CategoryOnly { rate: f64 },
    /// Always this category (`p(c) = 1`); learned element probabilities.
    SingleCategory(Category),
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct PolicyConfig {
    pub hidden: usize,
    pub gnn_layers: usize,
    pub category_hidden: usize,
    pub head_hidden: usize,
    /// Augmentation steps `T`.
    pub steps: usize,
    /// At most `ceil(cap_fraction · #eligible)` positive decisions survive
    /// each step; `0` disables the cap.
    pub cap_fraction: f64,
    pub mode: PolicyMode,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            gnn_layers: 3,
            category_hidden: 64,
            head_hidden: 128,
            steps: 8,
            cap_fraction: 0.05,
            mode: PolicyMode::Full,
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::InvalidConfig("policy needs at least one augmentation step".into()));
        }
        if !(0.0..=1.0).contains(&self.cap_fraction) {
            return Err(Error::InvalidConfig(format!("cap fraction {} outside [0, 1]", self.cap_fraction)));
        }
        if let PolicyMode::CategoryOnly { rate } = self.mode {
            if !(0.0..=1.0).contains(&rate) {
                return Err(Error::InvalidConfig(format!("category-only rate {rate} outside [0, 1]")));
            }
        }
        if self.hidden == 0 || self.gnn_layers == 0 || self.category_hidden == 0 || self.head_hidden == 0 {
            return Err(Error::InvalidConfig("policy widths and depth must be positive".into()));
        }
        Ok(())
    }
}

/// Architecture of the policy: parameter handles into a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct PolicyNet {
    config: PolicyConfig,
    feature_dim: usize,
    virtual_init: ParamId,
    encoder: GnnStack,
    gru: Gru,
    mlp_c: Mlp,
    mlp_m: Mlp,
    mlp_d: Mlp,
    mlp_p: Mlp,
}

/// Tape outputs of one encoder + category step.
struct StepVars {
    q: Var,
    /// `1×3` log category probabilities, absent in single-category mode.
    log_pc: Option<Var>,
    nodes: Var,
}

/// Added to the embedding variance before the encoder outputs are
/// standardized.
const EMBEDDING_EPS: f64 = 1e-5;

/// `ceil(fraction · eligible)`, tolerant of products such as
/// `0.05 · 60 = 3.0000000000000004`.
pub fn cap_limit(fraction: f64, eligible: usize) -> usize {
    Float::ceil(fraction * eligible as f64 - 1e-9).max(0.0) as usize
}

/// Keeps at most `limit` positives, preferring higher probability and then
/// lower index.
pub fn apply_cap(outcomes: &mut [bool], probs: &[f32], limit: usize) {
    let mut positives: Vec<usize> = (0..outcomes.len()).filter(|&i| outcomes[i]).collect();
    if positives.len() <= limit {
        return;
    }
    positives.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    for &i in &positives[limit..] {
        outcomes[i] = false;
    }
}

/// `Σ o·log p + (1 − o)·log(1 − p)` with probabilities clamped to
/// `[PROB_FLOOR, 1 − PROB_FLOOR]`.
pub fn bernoulli_log_prob(probs: &[f64], outcomes: &[bool]) -> f64 {
    probs
        .iter()
        .zip(outcomes)
        .map(|(&p, &o)| {
            let p = p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
            if o {
                Float::ln(p)
            } else {
                Float::ln(1.0 - p)
            }
        })
        .sum()
}

/// Differentiable [`bernoulli_log_prob`] of the probabilities in `probs`
/// (any shape, row-major against `outcomes`).
pub fn bernoulli_log_prob_var<T: Scalar>(tape: &mut Tape<'_, T>, probs: Var, outcomes: &[bool]) -> Var {
    let (rows, cols) = tape.value(probs).shape();
    debug_assert_eq!(rows * cols, outcomes.len());
    let p = tape.clamp(probs, T::lit(PROB_FLOOR), T::lit(1.0 - PROB_FLOOR));
    let lp = tape.ln(p);
    let q = tape.one_minus(p);
    let lq = tape.ln(q);
    let on = Matrix::from_vec(rows, cols, outcomes.iter().map(|&o| if o { T::one() } else { T::zero() }).collect())
        .expect("outcome shape");
    let off = on.map(|x| T::one() - x);
    let on = tape.constant(on);
    let off = tape.constant(off);
    let a = tape.mul(lp, on);
    let b = tape.mul(lq, off);
    let s = tape.add(a, b);
    tape.sum(s)
}

impl PolicyNet {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        feature_dim: usize,
        config: PolicyConfig,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        if feature_dim == 0 {
            return Err(Error::InvalidConfig("policy needs node features".into()));
        }
        let r = config.hidden;
        let virtual_init = store.glorot("policy.virtual_init", 1, feature_dim, rng);
        let encoder = GnnStack::new(store, "policy.encoder", GnnKind::Gin, feature_dim, r, config.gnn_layers, rng);
        let gru = Gru::new(store, "policy.gru", r, r, rng);
        let mlp_c = Mlp::new(store, "policy.mlp_c", &[r, config.category_hidden, 3], rng);
        let h = config.head_hidden;
        let mlp_m = Mlp::new(store, "policy.mlp_m", &[r, h, feature_dim], rng);
        let mlp_d = Mlp::new(store, "policy.mlp_d", &[r, h, 1], rng);
        let mlp_p = Mlp::new(store, "policy.mlp_p", &[r + 1, h, 1], rng);
        Ok(Self { config, feature_dim, virtual_init, encoder, gru, mlp_c, mlp_m, mlp_d, mlp_p })
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.config
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn category_head(&self) -> &Mlp {
        &self.mlp_c
    }

    pub fn drop_head(&self) -> &Mlp {
        &self.mlp_d
    }

    pub fn mask_head(&self) -> &Mlp {
        &self.mlp_m
    }

    pub fn perturb_head(&self) -> &Mlp {
        &self.mlp_p
    }

    /// Node embeddings (`n×r`) and the virtual node embedding (`1×r`) of `g`
    /// joined with a virtual node carrying the trainable initial feature.
    /// Node embeddings are standardized per column across the graph's nodes,
    /// the virtual node embedding across its own entries.
    pub fn encode<T: Scalar>(&self, tape: &mut Tape<'_, T>, g: &Graph) -> Result<(Var, Var)> {
        if g.is_empty() {
            return Err(Error::EmptyGraph("policy encoder input"));
        }
        if g.feature_dim() != self.feature_dim {
            return Err(Error::ShapeMismatch(format!(
                "policy built for {} features, graph has {}",
                self.feature_dim,
                g.feature_dim()
            )));
        }
        let n = g.num_nodes();
        let joined = g.add_virtual_node(&vec![0.0; self.feature_dim])?;
        let prop = self.encoder.propagation::<T>(&joined);
        let x = tape.constant(g.features().cast());
        let v0 = tape.param(self.virtual_init);
        let x = tape.concat_rows(x, v0);
        let h = self.encoder.forward(tape, x, &prop)?;
        let nodes = tape.gather_rows(h, (0..n).collect::<Vec<_>>().into());
        let nodes = tape.col_normalize(nodes, T::lit(EMBEDDING_EPS));
        let virt = tape.gather_rows(h, Rc::from(vec![n]));
        let virt = tape.row_normalize(virt, T::lit(EMBEDDING_EPS));
        Ok((nodes, virt))
    }

    fn step_forward<T: Scalar>(&self, tape: &mut Tape<'_, T>, g: &Graph, q_prev: Var) -> Result<StepVars> {
        let (nodes, virt) = self.encode(tape, g)?;
        if let PolicyMode::SingleCategory(_) = self.config.mode {
            return Ok(StepVars { q: q_prev, log_pc: None, nodes });
        }
        let q = self.gru.step(tape, q_prev, virt)?;
        let logits = self.mlp_c.forward(tape, q)?;
        let log_pc = tape.log_softmax(logits);
        Ok(StepVars { q, log_pc: Some(log_pc), nodes })
    }

    /// Element probabilities in decision order: `n×d` for MaskNF, `n×1` for
    /// DropNode, `(|E| + |Ē|)×1` for PerturbEdge (existing edges first).
    fn element_probs<T: Scalar>(
        &self,
        tape: &mut Tape<'_, T>,
        nodes: Var,
        g: &Graph,
        category: Category,
        addable: &[(usize, usize)],
    ) -> Result<Var> {
        let (rows, cols) = match category {
            Category::MaskNf => (g.num_nodes(), self.feature_dim),
            Category::DropNode => (g.num_nodes(), 1),
            Category::PerturbEdge => (g.num_edges() + addable.len(), 1),
        };
        if let PolicyMode::CategoryOnly { rate } = self.config.mode {
            return Ok(tape.constant(Matrix::filled(rows, cols, T::lit(rate))));
        }
        let logits = match category {
            Category::MaskNf => self.mlp_m.forward(tape, nodes)?,
            Category::DropNode => self.mlp_d.forward(tape, nodes)?,
            Category::PerturbEdge => {
                let pairs: Vec<(usize, usize)> = g.edges().iter().chain(addable).copied().collect();
                let us: Rc<[usize]> = pairs.iter().map(|p| p.0).collect::<Vec<_>>().into();
                let vs: Rc<[usize]> = pairs.iter().map(|p| p.1).collect::<Vec<_>>().into();
                let eu = tape.gather_rows(nodes, us);
                let ev = tape.gather_rows(nodes, vs);
                let sum = tape.add(eu, ev);
                let indicator = Matrix::from_vec(
                    rows,
                    1,
                    (0..rows).map(|i| if i < g.num_edges() { T::one() } else { T::zero() }).collect(),
                )?;
                let indicator = tape.constant(indicator);
                let input = tape.concat_cols(sum, indicator);
                self.mlp_p.forward(tape, input)?
            }
        };
        Ok(tape.sigmoid(logits))
    }

    fn category_log_prob<T: Scalar>(&self, tape: &mut Tape<'_, T>, step: &StepVars, category: Category) -> Option<Var> {
        step.log_pc.map(|lp| tape.pick(lp, Rc::from(vec![category.index()])))
    }

    /// `Σ_t log p(a_t)` of a recorded trajectory, recomputed on `tape` so that
    /// it is differentiable with respect to the policy parameters.
    pub fn trajectory_log_prob<T: Scalar>(&self, tape: &mut Tape<'_, T>, traj: &Trajectory) -> Result<Var> {
        let mut q = tape.constant(Matrix::zeros(1, self.config.hidden));
        let mut total: Option<Var> = None;
        for step in &traj.steps {
            let vars = self.step_forward(tape, &step.graph, q)?;
            q = vars.q;
            let category = step.decision.category();
            let mut terms = Vec::new();
            if let Some(lp) = self.category_log_prob(tape, &vars, category) {
                terms.push(tape.sum(lp));
            }
            let (applied, addable): (Vec<bool>, &[(usize, usize)]) = match &step.decision {
                Decision::MaskNf(m) => (m.mask.clone(), &[]),
                Decision::DropNode(d) => (d.0.clone(), &[]),
                Decision::PerturbEdge(p) => (p.drop.iter().chain(&p.add).copied().collect(), &p.addable),
            };
            let outcomes = step.sampled.clone().unwrap_or(applied);
            if !outcomes.is_empty() {
                let probs = self.element_probs(tape, vars.nodes, &step.graph, category, addable)?;
                terms.push(bernoulli_log_prob_var(tape, probs, &outcomes));
            }
            for term in terms {
                total = Some(match total {
                    Some(t) => tape.add(t, term),
                    None => term,
                });
            }
        }
        Ok(total.unwrap_or_else(|| tape.constant(Matrix::zeros(1, 1))))
    }
}

/// One recorded augmentation step.
#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    /// `G_{t-1}`.
    pub graph: Graph,
    /// `p_t^C` (one-hot in single-category mode).
    pub category_probs: [f64; 3],
    /// Element probabilities in decision order.
    pub probs: Vec<f32>,
    /// The decisions applied to `graph`, after the cap.
    pub decision: Decision,
    /// Bernoulli outcomes as sampled, when the cap changed them. The cap is a
    /// deterministic edit downstream of sampling, so `log p(a_t)` scores
    /// these rather than the applied decisions.
    pub sampled: Option<Vec<bool>>,
    /// `log p(a_t)`.
    pub log_prob: f64,
}

impl Step {
    pub fn category(&self) -> Category {
        self.decision.category()
    }
}

/// `G_0 → … → G_T` with the action taken at every step.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<Step>,
    pub final_graph: Graph,
    pub reward: Option<f64>,
}

impl Trajectory {
    pub fn initial_graph(&self) -> &Graph {
        self.steps.first().map_or(&self.final_graph, |s| &s.graph)
    }

    pub fn log_prob(&self) -> f64 {
        self.steps.iter().map(|s| s.log_prob).sum()
    }

    pub fn num_modified(&self) -> usize {
        self.steps.iter().map(|s| s.decision.num_modified()).sum()
    }

    /// Re-applies every recorded decision and checks that it reproduces the
    /// next recorded graph.
    pub fn check_chain(&self) -> Result<bool> {
        for (i, step) in self.steps.iter().enumerate() {
            let next = self.steps.get(i + 1).map_or(&self.final_graph, |s| &s.graph);
            if step.decision.apply(&step.graph)? != *next {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// A policy network together with its (single precision) parameters.
#[derive(Clone, Debug)]
pub struct PolicyModel {
    pub net: PolicyNet,
    pub store: ParamStore<f32>,
}

impl PolicyModel {
    pub fn new(feature_dim: usize, config: PolicyConfig, seed: u64) -> Result<Self> {
        let mut store = ParamStore::new();
        let net = PolicyNet::new(&mut store, feature_dim, config, &mut rng::stream(seed, 0x90_11C7))?;
        Ok(Self { net, store })
    }

    pub fn config(&self) -> &PolicyConfig {
        self.net.config()
    }

    /// Node embeddings and virtual-node embedding of `g`.
    pub fn encode(&self, g: &Graph) -> Result<(Matrix<f32>, Vec<f32>)> {
        let mut tape = Tape::new(&self.store);
        let (nodes, virt) = self.net.encode(&mut tape, g)?;
        Ok((tape.value(nodes).clone(), tape.value(virt).as_slice().to_vec()))
    }

    /// `p^D` for every node of `g`.
    pub fn drop_probabilities(&self, g: &Graph) -> Result<Vec<f32>> {
        let mut tape = Tape::new(&self.store);
        let (nodes, _) = self.net.encode(&mut tape, g)?;
        let p = self.net.element_probs(&mut tape, nodes, g, Category::DropNode, &[])?;
        Ok(tape.value(p).as_slice().to_vec())
    }

    /// `p_1^C` for `g` (from the zero initial GRU state).
    pub fn category_probabilities(&self, g: &Graph) -> Result<[f64; 3]> {
        let mut tape = Tape::new(&self.store);
        let q0 = tape.constant(Matrix::zeros(1, self.net.config.hidden));
        let vars = self.net.step_forward(&mut tape, g, q0)?;
        Ok(self.category_probs(&tape, &vars))
    }

    fn category_probs(&self, tape: &Tape<'_, f32>, vars: &StepVars) -> [f64; 3] {
        match (vars.log_pc, self.net.config.mode) {
            (Some(lp), _) => {
                let v = tape.value(lp).as_slice();
                [Float::exp(v[0] as f64), Float::exp(v[1] as f64), Float::exp(v[2] as f64)]
            }
            (None, PolicyMode::SingleCategory(c)) => {
                let mut p = [0.0; 3];
                p[c.index()] = 1.0;
                p
            }
            (None, _) => unreachable!("only single-category mode skips the category head"),
        }
    }

    /// Runs `T` augmentation steps from `g0`, sampling categories and element
    /// decisions, and records the trajectory (reward unset).
    pub fn augment<R: Rng + ?Sized>(&self, g0: &Graph, rng: &mut R) -> Result<Trajectory> {
        self.augment_with_cap(g0, self.net.config.cap_fraction, rng)
    }

    pub fn augment_with_cap<R: Rng + ?Sized>(&self, g0: &Graph, cap_fraction: f64, rng: &mut R) -> Result<Trajectory> {
        let mut tape = Tape::new(&self.store);
        let mut q = tape.constant(Matrix::zeros(1, self.net.config.hidden));
        let mut current = g0.clone();
        let mut steps = Vec::with_capacity(self.net.config.steps);
        for _ in 0..self.net.config.steps {
            let vars = self.net.step_forward(&mut tape, &current, q)?;
            q = vars.q;
            let category_probs = self.category_probs(&tape, &vars);
            let category = sample_category(&category_probs, rng);
            let addable = if category == Category::PerturbEdge { sample_addable(&current, rng) } else { Vec::new() };
            let probs_var = self.net.element_probs(&mut tape, vars.nodes, &current, category, &addable)?;
            let probs = tape.value(probs_var).as_slice().to_vec();
            let drawn: Vec<bool> = probs.iter().map(|&p| rng.gen::<f64>() < p as f64).collect();
            let mut log_prob = if drawn.is_empty() {
                0.0
            } else {
                let lp = bernoulli_log_prob_var(&mut tape, probs_var, &drawn);
                tape.scalar(lp) as f64
            };
            let mut outcomes = drawn.clone();
            if cap_fraction > 0.0 {
                let limit = cap_limit(cap_fraction, outcomes.len());
                apply_cap(&mut outcomes, &probs, limit);
            }
            let sampled = (outcomes != drawn).then_some(drawn);
            if !matches!(self.net.config.mode, PolicyMode::SingleCategory(_)) {
                log_prob += Float::ln(category_probs[category.index()].max(PROB_FLOOR));
            }
            let decision = match category {
                Category::MaskNf => Decision::MaskNf(MaskDecision {
                    rows: current.num_nodes(),
                    cols: current.feature_dim(),
                    mask: outcomes,
                }),
                Category::DropNode => Decision::DropNode(DropDecision(outcomes)),
                Category::PerturbEdge => {
                    let m = current.num_edges();
                    Decision::PerturbEdge(PerturbDecision {
                        droppable: current.edges().to_vec(),
                        drop: outcomes[..m].to_vec(),
                        addable,
                        add: outcomes[m..].to_vec(),
                    })
                }
            };
            let next = decision.apply(&current)?;
            steps.push(Step { graph: current, category_probs, probs, decision, sampled, log_prob });
            current = next;
        }
        Ok(Trajectory { steps, final_graph: current, reward: None })
    }

    /// `Σ_t log p(a_t)` recomputed through the network.
    pub fn log_prob(&self, traj: &Trajectory) -> Result<f64> {
        let mut tape = Tape::new(&self.store);
        let lp = self.net.trajectory_log_prob(&mut tape, traj)?;
        Ok(tape.scalar(lp).as_f64())
    }
}

/// Samples an index from a categorical distribution.
pub fn sample_category<R: Rng + ?Sized>(probs: &[f64; 3], rng: &mut R) -> Category {
    let u: f64 = rng.gen::<f64>() * probs.iter().sum::<f64>();
    let mut acc = 0.0;
    for c in Category::ALL {
        acc += probs[c.index()];
        if u < acc {
            return c;
        }
    }
    // rounding: fall back to the last category with positive mass
    Category::ALL.into_iter().rev().find(|c| probs[c.index()] > 0.0).unwrap_or(Category::PerturbEdge)
}
