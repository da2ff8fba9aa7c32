use alloc::format;
use alloc::rc::Rc;
use alloc::vec::Vec;

use rand::Rng;

use crate::autograd::{Propagation, SegmentReduce, Tape, Var};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::nn::params::{ParamId, ParamStore};
use crate::scalar::Scalar;

fn check_width<T: Scalar>(tape: &Tape<'_, T>, x: Var, expected: usize, what: &str) -> Result<()> {
    let got = tape.value(x).cols();
    if got != expected {
        return Err(Error::ShapeMismatch(format!("{what}: expected width {expected}, got {got}")));
    }
    Ok(())
}

/// `y = x W + b`
#[derive(Clone, Debug)]
pub struct Linear {
    weight: ParamId,
    bias: ParamId,
    in_dim: usize,
    out_dim: usize,
}

impl Linear {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut R,
    ) -> Self {
        let weight = store.glorot(format!("{name}.weight"), in_dim, out_dim, rng);
        let bias = store.zeros(format!("{name}.bias"), 1, out_dim);
        Self { weight, bias, in_dim, out_dim }
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<'_, T>, x: Var) -> Result<Var> {
        check_width(tape, x, self.in_dim, "linear input")?;
        let w = tape.param(self.weight);
        let b = tape.param(self.bias);
        let xw = tape.matmul(x, w);
        Ok(tape.add_row(xw, b))
    }

    pub fn weight(&self) -> ParamId {
        self.weight
    }

    pub fn bias(&self) -> ParamId {
        self.bias
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }
}

/// Multilayer perceptron with ReLU between layers. The last layer is left
/// linear; callers apply softmax or sigmoid as needed.
#[derive(Clone, Debug)]
pub struct Mlp {
    layers: Vec<Linear>,
}

impl Mlp {
    /// `dims = [in, hidden.., out]`, at least two entries.
    pub fn new<T: Scalar, R: Rng + ?Sized>(store: &mut ParamStore<T>, name: &str, dims: &[usize], rng: &mut R) -> Self {
        assert!(dims.len() >= 2, "an MLP needs input and output widths");
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(store, &format!("{name}.{i}"), w[0], w[1], rng))
            .collect();
        Self { layers }
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<'_, T>, x: Var) -> Result<Var> {
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            if i > 0 {
                h = tape.relu(h);
            }
            h = layer.forward(tape, h)?;
        }
        Ok(h)
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn layers(&self) -> &[Linear] {
        &self.layers
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum GnnKind {
    Gin,
    Gcn,
}

/// One message-passing layer.
///
/// * GIN: `h'_v = MLP((1 + ε) h_v + Σ_{u ∈ N(v)} h_u)` with trainable `ε`
///   (initialised to zero) and a two-layer ReLU MLP.
/// * GCN: `h' = ReLU(Â h W + b)` with `Â = D̃^{-1/2}(A + I)D̃^{-1/2}`.
#[derive(Clone, Debug)]
pub enum GnnLayer {
    Gin { eps: ParamId, mlp: Mlp },
    Gcn { linear: Linear },
}

impl GnnLayer {
    pub fn gin<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut R,
    ) -> Self {
        let eps = store.zeros(format!("{name}.eps"), 1, 1);
        let mlp = Mlp::new(store, &format!("{name}.mlp"), &[in_dim, out_dim, out_dim], rng);
        GnnLayer::Gin { eps, mlp }
    }

    pub fn gcn<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut R,
    ) -> Self {
        GnnLayer::Gcn { linear: Linear::new(store, &format!("{name}.linear"), in_dim, out_dim, rng) }
    }

    pub fn in_dim(&self) -> usize {
        match self {
            GnnLayer::Gin { mlp, .. } => mlp.in_dim(),
            GnnLayer::Gcn { linear } => linear.in_dim(),
        }
    }

    pub fn out_dim(&self) -> usize {
        match self {
            GnnLayer::Gin { mlp, .. } => mlp.out_dim(),
            GnnLayer::Gcn { linear } => linear.out_dim(),
        }
    }

    /// `prop` must be the neighbour-sum operator for GIN and the normalized
    /// operator for GCN (see [`GnnStack::propagation`]).
    pub fn forward<T: Scalar>(&self, tape: &mut Tape<'_, T>, h: Var, prop: &Rc<Propagation<T>>) -> Result<Var> {
        check_width(tape, h, self.in_dim(), "message passing input")?;
        match self {
            GnnLayer::Gin { eps, mlp } => {
                let agg = tape.propagate(prop, h);
                let eps = tape.param(*eps);
                let one_plus_eps = tape.affine(eps, T::one(), T::one());
                let own = tape.scale_by(h, one_plus_eps);
                let x = tape.add(own, agg);
                mlp.forward(tape, x)
            }
            GnnLayer::Gcn { linear } => {
                let w = tape.param(linear.weight());
                let xw = tape.matmul(h, w);
                let spread = tape.propagate(prop, xw);
                let b = tape.param(linear.bias());
                let z = tape.add_row(spread, b);
                Ok(tape.relu(z))
            }
        }
    }
}

/// Stack of message-passing layers. GIN layers are separated by ReLU; GCN
/// layers carry their own activation.
#[derive(Clone, Debug)]
pub struct GnnStack {
    kind: GnnKind,
    layers: Vec<GnnLayer>,
}

impl GnnStack {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        kind: GnnKind,
        in_dim: usize,
        hidden: usize,
        num_layers: usize,
        rng: &mut R,
    ) -> Self {
        assert!(num_layers >= 1);
        let layers = (0..num_layers)
            .map(|i| {
                let input = if i == 0 { in_dim } else { hidden };
                let lname = format!("{name}.{i}");
                match kind {
                    GnnKind::Gin => GnnLayer::gin(store, &lname, input, hidden, rng),
                    GnnKind::Gcn => GnnLayer::gcn(store, &lname, input, hidden, rng),
                }
            })
            .collect();
        Self { kind, layers }
    }

    pub fn kind(&self) -> GnnKind {
        self.kind
    }

    pub fn layers(&self) -> &[GnnLayer] {
        &self.layers
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn propagation<T: Scalar>(&self, g: &Graph) -> Rc<Propagation<T>> {
        Rc::new(match self.kind {
            GnnKind::Gin => Propagation::neighbor_sum(g),
            GnnKind::Gcn => Propagation::gcn_normalized(g),
        })
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<'_, T>, x: Var, prop: &Rc<Propagation<T>>) -> Result<Var> {
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            if i > 0 && self.kind == GnnKind::Gin {
                h = tape.relu(h);
            }
            h = layer.forward(tape, h, prop)?;
        }
        Ok(h)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Readout {
    Sum,
    Mean,
    Max,
}

impl Readout {
    fn reduce(self) -> SegmentReduce {
        match self {
            Readout::Sum => SegmentReduce::Sum,
            Readout::Mean => SegmentReduce::Mean,
            Readout::Max => SegmentReduce::Max,
        }
    }
}

/// Pools node rows into one row per graph. `segment[r]` is the graph of row
/// `r`; mean and max require every graph to have at least one node.
pub fn readout<T: Scalar>(
    tape: &mut Tape<'_, T>,
    h: Var,
    segment: Rc<[usize]>,
    num_graphs: usize,
    mode: Readout,
) -> Result<Var> {
    if mode != Readout::Sum {
        let mut seen = alloc::vec![false; num_graphs];
        segment.iter().for_each(|&s| seen[s] = true);
        if seen.iter().any(|s| !s) {
            return Err(Error::EmptyGraph("mean/max readout of a graph without nodes"));
        }
    }
    Ok(tape.segment_reduce(h, segment, num_graphs, mode.reduce()))
}

/// Readout of a single graph's node rows into a `1×r` vector.
pub fn readout_single<T: Scalar>(tape: &mut Tape<'_, T>, h: Var, mode: Readout) -> Result<Var> {
    let n = tape.value(h).rows();
    readout(tape, h, Rc::from(alloc::vec![0; n]), 1, mode)
}
