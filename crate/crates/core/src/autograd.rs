//! Tape-based reverse-mode automatic differentiation over dense matrices.
//!
//! A [`Tape`] records every operation applied to [`Var`] handles during a
//! forward pass; [`Tape::backward`] walks the record in reverse and returns
//! the gradients of the trainable parameters it touched. Tapes are cheap and
//! single-use: build one per forward pass and drop it after the update.

use alloc::rc::Rc;
use alloc::vec;
use alloc::vec::Vec;

use crate::graph::Graph;
use crate::nn::params::{Gradients, ParamId, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::Matrix;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Fixed sparse linear operator `out[dst] += w · h[src]` used for
/// neighbourhood aggregation.
#[derive(Clone, Debug)]
pub struct Propagation<T> {
    num_nodes: usize,
    entries: Vec<(u32, u32, T)>,
}

impl<T: Scalar> Propagation<T> {
    /// Unweighted neighbour sum: `out[v] = Σ_{u ∈ N(v)} h[u]`.
    pub fn neighbor_sum(g: &Graph) -> Self {
        let mut entries = Vec::with_capacity(2 * g.num_edges());
        for &(u, v) in g.edges() {
            entries.push((v as u32, u as u32, T::one()));
            entries.push((u as u32, v as u32, T::one()));
        }
        Self { num_nodes: g.num_nodes(), entries }
    }

    /// Symmetric normalized propagation with self-loops,
    /// `Â = D̃^{-1/2} (A + I) D̃^{-1/2}`.
    pub fn gcn_normalized(g: &Graph) -> Self {
        let deg: Vec<T> = g.degrees().into_iter().map(|d| T::one() / T::from_usize(d + 1).unwrap().sqrt()).collect();
        let mut entries = Vec::with_capacity(2 * g.num_edges() + g.num_nodes());
        for (v, &d) in deg.iter().enumerate() {
            entries.push((v as u32, v as u32, d * d));
        }
        for &(u, v) in g.edges() {
            let w = deg[u] * deg[v];
            entries.push((v as u32, u as u32, w));
            entries.push((u as u32, v as u32, w));
        }
        Self { num_nodes: g.num_nodes(), entries }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    fn apply(&self, h: &Matrix<T>) -> Matrix<T> {
        let cols = h.cols();
        let mut out = Matrix::zeros(self.num_nodes, cols);
        for &(dst, src, w) in &self.entries {
            let src_row = h.row(src as usize);
            let dst_row = out.row_mut(dst as usize);
            for (o, &x) in dst_row.iter_mut().zip(src_row) {
                *o += w * x;
            }
        }
        out
    }

    fn apply_transposed(&self, g: &Matrix<T>) -> Matrix<T> {
        let cols = g.cols();
        let mut out = Matrix::zeros(self.num_nodes, cols);
        for &(dst, src, w) in &self.entries {
            let g_row = g.row(dst as usize);
            let out_row = out.row_mut(src as usize);
            for (o, &x) in out_row.iter_mut().zip(g_row) {
                *o += w * x;
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SegmentReduce {
    Sum,
    Mean,
    Max,
}

enum Op<T> {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    /// `a · bᵀ`
    MatMulNt(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Affine(Var, T),
    ScaleBy(Var, Var),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Ln(Var),
    Abs(Var),
    Clamp(Var, T, T),
    Propagate(Var, Rc<Propagation<T>>),
    GatherRows(Var, Rc<[usize]>),
    ConcatCols(Var, Var),
    ConcatRows(Var, Var),
    SegmentSum(Var, Rc<[usize]>),
    SegmentMean(Var, Rc<[usize]>, Vec<usize>),
    SegmentMax(Var, Vec<usize>),
    RowSoftmax(Var),
    /// Saved `1 / σ` per row.
    RowNormalize(Var, Vec<T>),
    /// Saved `1 / σ` per column.
    ColNormalize(Var, Vec<T>),
    LogSoftmax(Var),
    Pick(Var, Rc<[usize]>),
    SumAll(Var),
    BceWithLogits(Var, Vec<T>),
    CrossMessage {
        a: Var,
        b: Var,
        offsets_a: Rc<[usize]>,
        offsets_b: Rc<[usize]>,
        weights: Vec<Matrix<T>>,
    },
}

struct Node<T> {
    value: Matrix<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Recording of one forward computation.
pub struct Tape<'s, T: Scalar> {
    store: &'s ParamStore<T>,
    nodes: Vec<Node<T>>,
    param_vars: Vec<Option<Var>>,
}

impl<'s, T: Scalar> Tape<'s, T> {
    pub fn new(store: &'s ParamStore<T>) -> Self {
        Self { store, nodes: Vec::new(), param_vars: vec![None; store.len()] }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix<T>, op: Op<T>) -> Var {
        let requires_grad = match &op {
            Op::Leaf => false,
            Op::Param(_) => true,
            op => op_inputs(op).iter().flatten().any(|v| self.nodes[v.0].requires_grad),
        };
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    #[inline]
    pub fn value(&self, v: Var) -> &Matrix<T> {
        &self.nodes[v.0].value
    }

    /// First entry of a value, for 1×1 results.
    pub fn scalar(&self, v: Var) -> T {
        self.value(v).as_slice()[0]
    }

    pub fn constant(&mut self, m: Matrix<T>) -> Var {
        self.push(m, Op::Leaf)
    }

    /// Trainable parameter; repeated calls reuse the same recording.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.index()] {
            return v;
        }
        let v = self.push(self.store.get(id).clone(), Op::Param(id));
        self.param_vars[id.index()] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).matmul(self.value(b)).expect("matmul shapes");
        self.push(value, Op::MatMul(a, b))
    }

    /// `a · bᵀ`
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).matmul_t(self.value(b), false, true).expect("matmul shapes");
        self.push(value, Op::MatMulNt(a, b))
    }

    fn zip(&self, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Matrix<T> {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.shape(), y.shape(), "elementwise operands differ in shape");
        let data = x.as_slice().iter().zip(y.as_slice()).map(|(&p, &q)| f(p, q)).collect();
        Matrix::from_vec(x.rows(), x.cols(), data).unwrap()
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.zip(a, b, |p, q| p + q);
        self.push(value, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.zip(a, b, |p, q| p - q);
        self.push(value, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = self.zip(a, b, |p, q| p * q);
        self.push(value, Op::Mul(a, b))
    }

    /// Adds a `1×c` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let r = self.value(row);
        assert_eq!(r.rows(), 1);
        assert_eq!(r.cols(), self.value(a).cols(), "broadcast row width");
        let mut value = self.value(a).clone();
        let rs = r.as_slice().to_vec();
        for i in 0..value.rows() {
            for (x, &b) in value.row_mut(i).iter_mut().zip(&rs) {
                *x += b;
            }
        }
        self.push(value, Op::AddRow(a, row))
    }

    /// `mul · a + add`
    pub fn affine(&mut self, a: Var, mul: T, add: T) -> Var {
        let value = self.value(a).map(|x| mul * x + add);
        self.push(value, Op::Affine(a, mul))
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        self.affine(a, s, T::zero())
    }

    /// `1 - a`
    pub fn one_minus(&mut self, a: Var) -> Var {
        self.affine(a, -T::one(), T::one())
    }

    /// Multiplies every entry of `a` by the `1×1` value `s`.
    pub fn scale_by(&mut self, a: Var, s: Var) -> Var {
        let k = self.scalar(s);
        let value = self.value(a).map(|x| k * x);
        self.push(value, Op::ScaleBy(a, s))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x.max(T::zero()));
        self.push(value, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(sigmoid);
        self.push(value, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x.tanh());
        self.push(value, Op::Tanh(a))
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x.ln());
        self.push(value, Op::Ln(a))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x.abs());
        self.push(value, Op::Abs(a))
    }

    /// Clamps into `[lo, hi]`; the gradient is zero where clamping is active.
    pub fn clamp(&mut self, a: Var, lo: T, hi: T) -> Var {
        let value = self.value(a).map(|x| x.max(lo).min(hi));
        self.push(value, Op::Clamp(a, lo, hi))
    }

    pub fn propagate(&mut self, prop: &Rc<Propagation<T>>, h: Var) -> Var {
        assert_eq!(prop.num_nodes(), self.value(h).rows(), "propagation size");
        let value = prop.apply(self.value(h));
        self.push(value, Op::Propagate(h, Rc::clone(prop)))
    }

    pub fn gather_rows(&mut self, a: Var, idx: Rc<[usize]>) -> Var {
        let value = self.value(a).select_rows(&idx);
        self.push(value, Op::GatherRows(a, idx))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).hstack(self.value(b)).expect("concat rows");
        self.push(value, Op::ConcatCols(a, b))
    }

    pub fn concat_rows(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).vstack(self.value(b)).expect("concat columns");
        self.push(value, Op::ConcatRows(a, b))
    }

    /// Pools rows by segment id into `num_segments` rows. `Mean` and `Max`
    /// require every segment to be nonempty.
    pub fn segment_reduce(&mut self, a: Var, segment: Rc<[usize]>, num_segments: usize, mode: SegmentReduce) -> Var {
        let x = self.value(a);
        assert_eq!(segment.len(), x.rows(), "segment ids per row");
        let cols = x.cols();
        let mut out = Matrix::zeros(num_segments, cols);
        match mode {
            SegmentReduce::Sum | SegmentReduce::Mean => {
                let mut counts = vec![0usize; num_segments];
                for (r, &s) in segment.iter().enumerate() {
                    counts[s] += 1;
                    for (o, &v) in out.row_mut(s).iter_mut().zip(x.row(r)) {
                        *o += v;
                    }
                }
                if mode == SegmentReduce::Sum {
                    return self.push(out, Op::SegmentSum(a, segment));
                }
                for (s, &c) in counts.iter().enumerate() {
                    assert!(c > 0, "mean over an empty segment");
                    let inv = T::one() / T::from_usize(c).unwrap();
                    out.row_mut(s).iter_mut().for_each(|v| *v *= inv);
                }
                self.push(out, Op::SegmentMean(a, segment, counts))
            }
            SegmentReduce::Max => {
                let mut arg = vec![usize::MAX; num_segments * cols];
                for (r, &s) in segment.iter().enumerate() {
                    for c in 0..cols {
                        let slot = s * cols + c;
                        let v = x.get(r, c);
                        if arg[slot] == usize::MAX || v > out.get(s, c) {
                            arg[slot] = r;
                            out.set(s, c, v);
                        }
                    }
                }
                assert!(arg.iter().all(|&r| r != usize::MAX) || cols == 0, "max over an empty segment");
                self.push(out, Op::SegmentMax(a, arg))
            }
        }
    }

    pub fn row_softmax(&mut self, a: Var) -> Var {
        let mut value = self.value(a).clone();
        for r in 0..value.rows() {
            softmax_in_place(value.row_mut(r));
        }
        self.push(value, Op::RowSoftmax(a))
    }

    /// Each row shifted to zero mean and scaled to unit variance,
    /// `(x − μ) / sqrt(σ² + eps)`.
    pub fn row_normalize(&mut self, a: Var, eps: T) -> Var {
        let mut value = self.value(a).clone();
        let cols = T::lit(value.cols() as f64);
        let mut inv = Vec::with_capacity(value.rows());
        for r in 0..value.rows() {
            let row = value.row_mut(r);
            let mean = row.iter().copied().sum::<T>() / cols;
            let var = row.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>() / cols;
            let k = T::one() / (var + eps).sqrt();
            row.iter_mut().for_each(|x| *x = (*x - mean) * k);
            inv.push(k);
        }
        self.push(value, Op::RowNormalize(a, inv))
    }

    /// Each column shifted to zero mean and scaled to unit variance over the
    /// rows, `(x − μ) / sqrt(σ² + eps)`.
    pub fn col_normalize(&mut self, a: Var, eps: T) -> Var {
        let mut value = self.value(a).clone();
        let (rows, cols) = value.shape();
        let n = T::lit(rows as f64);
        let mut inv = Vec::with_capacity(cols);
        for c in 0..cols {
            let mean = (0..rows).map(|r| value.get(r, c)).sum::<T>() / n;
            let var = (0..rows).map(|r| (value.get(r, c) - mean) * (value.get(r, c) - mean)).sum::<T>() / n;
            let k = T::one() / (var + eps).sqrt();
            for r in 0..rows {
                value.set(r, c, (value.get(r, c) - mean) * k);
            }
            inv.push(k);
        }
        self.push(value, Op::ColNormalize(a, inv))
    }

    pub fn log_softmax(&mut self, a: Var) -> Var {
        let mut value = self.value(a).clone();
        for r in 0..value.rows() {
            let row = value.row_mut(r);
            let m = row.iter().fold(T::neg_infinity(), |m, &x| m.max(x));
            let lse = m + row.iter().map(|&x| (x - m).exp()).sum::<T>().ln();
            row.iter_mut().for_each(|x| *x -= lse);
        }
        self.push(value, Op::LogSoftmax(a))
    }

    /// Column `idx[r]` of every row `r`, as an `n×1` column.
    pub fn pick(&mut self, a: Var, idx: Rc<[usize]>) -> Var {
        let x = self.value(a);
        assert_eq!(idx.len(), x.rows());
        let data = idx.iter().enumerate().map(|(r, &c)| x.get(r, c)).collect();
        let value = Matrix::from_vec(idx.len(), 1, data).unwrap();
        self.push(value, Op::Pick(a, idx))
    }

    /// Cross-graph attention messages for paired graphs stored as contiguous
    /// row blocks: block `i` of `a` (rows `offsets_a[i]..offsets_a[i + 1]`)
    /// attends over block `i` of `b`. For a row `h_v` of block `i`,
    /// `w = softmax_j(h_v · b_j)` and the message is `Σ_j w_j (h_v − b_j)`.
    ///
    /// Panics if a block of `b` paired with a nonempty block of `a` is empty.
    pub fn cross_message(&mut self, a: Var, b: Var, offsets_a: Rc<[usize]>, offsets_b: Rc<[usize]>) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        let h = x.cols();
        assert_eq!(h, y.cols(), "cross message widths");
        assert_eq!(offsets_a.len(), offsets_b.len(), "cross message pairing");
        let mut out = x.clone();
        let mut weights = Vec::with_capacity(offsets_a.len().saturating_sub(1));
        for i in 0..offsets_a.len().saturating_sub(1) {
            let (a0, a1, b0, b1) = (offsets_a[i], offsets_a[i + 1], offsets_b[i], offsets_b[i + 1]);
            let (n1, n2) = (a1 - a0, b1 - b0);
            assert!(n1 == 0 || n2 > 0, "cross attention over an empty graph");
            let xa = &x.as_slice()[a0 * h..a1 * h];
            let yb = &y.as_slice()[b0 * h..b1 * h];
            let mut w = Matrix::zeros(n1, n2);
            T::gemm(n1, h, n2, xa, false, yb, true, w.as_mut_slice(), false);
            for r in 0..n1 {
                softmax_in_place(w.row_mut(r));
            }
            // out = a - w b
            let mut wb = vec![T::zero(); n1 * h];
            T::gemm(n1, n2, h, w.as_slice(), false, yb, false, &mut wb, false);
            for (o, &d) in out.as_mut_slice()[a0 * h..a1 * h].iter_mut().zip(&wb) {
                *o -= d;
            }
            weights.push(w);
        }
        self.push(out, Op::CrossMessage { a, b, offsets_a, offsets_b, weights })
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Matrix::row_vector(vec![self.value(a).sum()]);
        self.push(value, Op::SumAll(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len().max(1);
        let s = self.sum(a);
        self.scale(s, T::one() / T::from_usize(n).unwrap())
    }

    /// Mean binary cross-entropy between logits (`n×1`) and 0/1 targets.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &[T]) -> Var {
        let z = self.value(logits);
        assert_eq!(z.len(), targets.len());
        let n = T::from_usize(targets.len().max(1)).unwrap();
        let total: T =
            z.as_slice().iter().zip(targets).map(|(&z, &y)| z.max(T::zero()) - z * y + (-z.abs()).exp().ln_1p()).sum();
        self.push(Matrix::row_vector(vec![total / n]), Op::BceWithLogits(logits, targets.to_vec()))
    }

    /// Mean cross-entropy of row-wise logits against class indices.
    pub fn cross_entropy(&mut self, logits: Var, classes: Rc<[usize]>) -> Var {
        let lp = self.log_softmax(logits);
        let picked = self.pick(lp, classes);
        let m = self.mean(picked);
        self.scale(m, -T::one())
    }

    /// Gradients of `root` (seeded with ones) w.r.t. the touched parameters.
    pub fn backward(&self, root: Var) -> Gradients<T> {
        self.backward_seeded(root, T::one())
    }

    /// Like [`Tape::backward`] with the root gradient filled with `seed`.
    pub fn backward_seeded(&self, root: Var, seed: T) -> Gradients<T> {
        let grads = self.run_backward(root, seed);
        let mut out = Gradients::empty(self.store.len());
        for (i, g) in grads.into_iter().enumerate() {
            if let (Op::Param(id), Some(g)) = (&self.nodes[i].op, g) {
                out.accumulate_one(*id, &g, T::one());
            }
        }
        out
    }

    /// Gradients of `root` w.r.t. arbitrary recorded values.
    pub fn grad_of(&self, root: Var, wrt: &[Var]) -> Vec<Option<Matrix<T>>> {
        // constants do not normally receive gradients; compute for all nodes
        let grads = self.run_backward_all(root, T::one());
        wrt.iter().map(|v| grads[v.0].clone()).collect()
    }

    fn run_backward(&self, root: Var, seed: T) -> Vec<Option<Matrix<T>>> {
        self.backward_impl(root, seed, false)
    }

    fn run_backward_all(&self, root: Var, seed: T) -> Vec<Option<Matrix<T>>> {
        self.backward_impl(root, seed, true)
    }

    fn backward_impl(&self, root: Var, seed: T, all: bool) -> Vec<Option<Matrix<T>>> {
        let mut grads: Vec<Option<Matrix<T>>> = Vec::with_capacity(root.0 + 1);
        grads.resize_with(root.0 + 1, || None);
        let (r, c) = self.value(root).shape();
        grads[root.0] = Some(Matrix::filled(r, c, seed));
        let wants = |v: Var| all || self.nodes[v.0].requires_grad;

        for i in (0..=root.0).rev() {
            let taken = if all { grads[i].clone() } else { grads[i].take() };
            let Some(g) = taken else { continue };
            let node = &self.nodes[i];
            let out = &node.value;
            match &node.op {
                Op::Leaf | Op::Param(_) => {
                    grads[i] = Some(g);
                }
                Op::MatMul(a, b) => {
                    if wants(*a) {
                        let ga = g.matmul_t(self.value(*b), false, true).unwrap();
                        acc(&mut grads, *a, ga);
                    }
                    if wants(*b) {
                        let gb = self.value(*a).matmul_t(&g, true, false).unwrap();
                        acc(&mut grads, *b, gb);
                    }
                }
                Op::MatMulNt(a, b) => {
                    if wants(*a) {
                        let ga = g.matmul(self.value(*b)).unwrap();
                        acc(&mut grads, *a, ga);
                    }
                    if wants(*b) {
                        let gb = g.matmul_t(self.value(*a), true, false).unwrap();
                        acc(&mut grads, *b, gb);
                    }
                }
                Op::Add(a, b) => {
                    if wants(*b) {
                        acc(&mut grads, *b, g.clone());
                    }
                    if wants(*a) {
                        acc(&mut grads, *a, g);
                    }
                }
                Op::Sub(a, b) => {
                    if wants(*b) {
                        acc(&mut grads, *b, g.map(|x| -x));
                    }
                    if wants(*a) {
                        acc(&mut grads, *a, g);
                    }
                }
                Op::Mul(a, b) => {
                    if wants(*a) {
                        acc(&mut grads, *a, hadamard(&g, self.value(*b)));
                    }
                    if wants(*b) {
                        acc(&mut grads, *b, hadamard(&g, self.value(*a)));
                    }
                }
                Op::CrossMessage { a, b, offsets_a, offsets_b, weights } => {
                    let (x, y) = (self.value(*a), self.value(*b));
                    let h = x.cols();
                    let mut ga = g.clone();
                    let mut gb = Matrix::zeros(y.rows(), h);
                    for (i, w) in weights.iter().enumerate() {
                        let (a0, a1, b0, b1) = (offsets_a[i], offsets_a[i + 1], offsets_b[i], offsets_b[i + 1]);
                        let (n1, n2) = (a1 - a0, b1 - b0);
                        if n1 == 0 {
                            continue;
                        }
                        let gi = &g.as_slice()[a0 * h..a1 * h];
                        let xa = &x.as_slice()[a0 * h..a1 * h];
                        let yb = &y.as_slice()[b0 * h..b1 * h];
                        // dW = -G bᵀ ; dB = -Wᵀ G
                        let mut dw = vec![T::zero(); n1 * n2];
                        T::gemm(n1, h, n2, gi, false, yb, true, &mut dw, false);
                        dw.iter_mut().for_each(|v| *v = -*v);
                        let mut gbi = vec![T::zero(); n2 * h];
                        T::gemm(n2, n1, h, w.as_slice(), true, gi, false, &mut gbi, false);
                        gbi.iter_mut().for_each(|v| *v = -*v);
                        // softmax backward: dS = W ⊙ (dW - rowsum(dW ⊙ W))
                        let mut ds = dw;
                        for r in 0..n1 {
                            let wr = w.row(r);
                            let dr = &mut ds[r * n2..(r + 1) * n2];
                            let dot: T = dr.iter().zip(wr).map(|(&p, &q)| p * q).sum();
                            for (d, &wv) in dr.iter_mut().zip(wr) {
                                *d = wv * (*d - dot);
                            }
                        }
                        T::gemm(n1, n2, h, &ds, false, yb, false, &mut ga.as_mut_slice()[a0 * h..a1 * h], true);
                        T::gemm(n2, n1, h, &ds, true, xa, false, &mut gbi, true);
                        for (o, &d) in gb.as_mut_slice()[b0 * h..b1 * h].iter_mut().zip(&gbi) {
                            *o += d;
                        }
                    }
                    if wants(*b) {
                        acc(&mut grads, *b, gb);
                    }
                    if wants(*a) {
                        acc(&mut grads, *a, ga);
                    }
                }
                Op::AddRow(a, row) => {
                    if wants(*row) {
                        let mut gr = Matrix::zeros(1, g.cols());
                        for r in 0..g.rows() {
                            for (o, &x) in gr.as_mut_slice().iter_mut().zip(g.row(r)) {
                                *o += x;
                            }
                        }
                        acc(&mut grads, *row, gr);
                    }
                    if wants(*a) {
                        acc(&mut grads, *a, g);
                    }
                }
                Op::Affine(a, mul) => {
                    let mul = *mul;
                    acc(&mut grads, *a, g.map(|x| mul * x));
                }
                Op::ScaleBy(a, s) => {
                    if wants(*s) {
                        let d: T = g.as_slice().iter().zip(self.value(*a).as_slice()).map(|(&p, &q)| p * q).sum();
                        acc(&mut grads, *s, Matrix::row_vector(vec![d]));
                    }
                    if wants(*a) {
                        let k = self.scalar(*s);
                        acc(&mut grads, *a, g.map(|x| k * x));
                    }
                }
                Op::Relu(a) => {
                    let ga = zip_with(&g, self.value(*a), |g, x| if x > T::zero() { g } else { T::zero() });
                    acc(&mut grads, *a, ga);
                }
                Op::Sigmoid(a) => {
                    let ga = zip_with(&g, out, |g, y| g * y * (T::one() - y));
                    acc(&mut grads, *a, ga);
                }
                Op::Tanh(a) => {
                    let ga = zip_with(&g, out, |g, y| g * (T::one() - y * y));
                    acc(&mut grads, *a, ga);
                }
                Op::Ln(a) => {
                    let ga = zip_with(&g, self.value(*a), |g, x| g / x);
                    acc(&mut grads, *a, ga);
                }
                Op::Abs(a) => {
                    let ga = zip_with(&g, self.value(*a), |g, x| {
                        if x > T::zero() {
                            g
                        } else if x < T::zero() {
                            -g
                        } else {
                            T::zero()
                        }
                    });
                    acc(&mut grads, *a, ga);
                }
                Op::Clamp(a, lo, hi) => {
                    let (lo, hi) = (*lo, *hi);
                    let ga = zip_with(&g, self.value(*a), |g, x| if x > lo && x < hi { g } else { T::zero() });
                    acc(&mut grads, *a, ga);
                }
                Op::Propagate(h, prop) => {
                    acc(&mut grads, *h, prop.apply_transposed(&g));
                }
                Op::GatherRows(a, idx) => {
                    let x = self.value(*a);
                    let mut ga = Matrix::zeros(x.rows(), x.cols());
                    for (r, &src) in idx.iter().enumerate() {
                        for (o, &v) in ga.row_mut(src).iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::ConcatCols(a, b) => {
                    let ca = self.value(*a).cols();
                    let cb = self.value(*b).cols();
                    if wants(*a) {
                        let mut ga = Matrix::zeros(g.rows(), ca);
                        for r in 0..g.rows() {
                            ga.row_mut(r).copy_from_slice(&g.row(r)[..ca]);
                        }
                        acc(&mut grads, *a, ga);
                    }
                    if wants(*b) {
                        let mut gb = Matrix::zeros(g.rows(), cb);
                        for r in 0..g.rows() {
                            gb.row_mut(r).copy_from_slice(&g.row(r)[ca..]);
                        }
                        acc(&mut grads, *b, gb);
                    }
                }
                Op::ConcatRows(a, b) => {
                    let ra = self.value(*a).rows();
                    let cols = g.cols();
                    let data = g.as_slice();
                    if wants(*a) {
                        let ga = Matrix::from_vec(ra, cols, data[..ra * cols].to_vec()).unwrap();
                        acc(&mut grads, *a, ga);
                    }
                    if wants(*b) {
                        let gb = Matrix::from_vec(g.rows() - ra, cols, data[ra * cols..].to_vec()).unwrap();
                        acc(&mut grads, *b, gb);
                    }
                }
                Op::SegmentSum(a, seg) => {
                    acc(&mut grads, *a, g.select_rows(seg));
                }
                Op::SegmentMean(a, seg, counts) => {
                    let mut ga = g.select_rows(seg);
                    for (r, &s) in seg.iter().enumerate() {
                        let inv = T::one() / T::from_usize(counts[s]).unwrap();
                        ga.row_mut(r).iter_mut().for_each(|v| *v *= inv);
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::SegmentMax(a, arg) => {
                    let x = self.value(*a);
                    let cols = x.cols();
                    let mut ga = Matrix::zeros(x.rows(), cols);
                    for (slot, &r) in arg.iter().enumerate() {
                        let c = slot % cols;
                        let s = slot / cols;
                        let v = ga.get(r, c) + g.get(s, c);
                        ga.set(r, c, v);
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::RowSoftmax(a) => {
                    let mut ga = g.clone();
                    for r in 0..g.rows() {
                        let y = out.row(r);
                        let dot: T = g.row(r).iter().zip(y).map(|(&p, &q)| p * q).sum();
                        for ((o, &gy), &yy) in ga.row_mut(r).iter_mut().zip(g.row(r)).zip(y) {
                            *o = yy * (gy - dot);
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::RowNormalize(a, inv) => {
                    let mut ga = g.clone();
                    let cols = T::lit(g.cols() as f64);
                    for (r, &k) in inv.iter().enumerate() {
                        let y = out.row(r);
                        let mean_g = g.row(r).iter().copied().sum::<T>() / cols;
                        let mean_gy = g.row(r).iter().zip(y).map(|(&p, &q)| p * q).sum::<T>() / cols;
                        for ((o, &gy), &yy) in ga.row_mut(r).iter_mut().zip(g.row(r)).zip(y) {
                            *o = k * (gy - mean_g - yy * mean_gy);
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::ColNormalize(a, inv) => {
                    let mut ga = g.clone();
                    let rows = g.rows();
                    let n = T::lit(rows as f64);
                    for (c, &k) in inv.iter().enumerate() {
                        let mean_g = (0..rows).map(|r| g.get(r, c)).sum::<T>() / n;
                        let mean_gy = (0..rows).map(|r| g.get(r, c) * out.get(r, c)).sum::<T>() / n;
                        for r in 0..rows {
                            ga.set(r, c, k * (g.get(r, c) - mean_g - out.get(r, c) * mean_gy));
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::LogSoftmax(a) => {
                    let mut ga = g.clone();
                    for r in 0..g.rows() {
                        let total: T = g.row(r).iter().copied().sum();
                        for (o, &ly) in ga.row_mut(r).iter_mut().zip(out.row(r)) {
                            *o -= ly.exp() * total;
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::Pick(a, idx) => {
                    let x = self.value(*a);
                    let mut ga = Matrix::zeros(x.rows(), x.cols());
                    for (r, &c) in idx.iter().enumerate() {
                        ga.set(r, c, g.get(r, 0));
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::SumAll(a) => {
                    let (r, c) = self.value(*a).shape();
                    acc(&mut grads, *a, Matrix::filled(r, c, g.as_slice()[0]));
                }
                Op::BceWithLogits(a, targets) => {
                    let z = self.value(*a);
                    let n = T::from_usize(targets.len().max(1)).unwrap();
                    let scale = g.as_slice()[0] / n;
                    let data = z.as_slice().iter().zip(targets).map(|(&z, &y)| scale * (sigmoid(z) - y)).collect();
                    acc(&mut grads, *a, Matrix::from_vec(z.rows(), z.cols(), data).unwrap());
                }
            }
        }
        grads
    }
}

fn op_inputs<T>(op: &Op<T>) -> [Option<Var>; 2] {
    match op {
        Op::Leaf | Op::Param(_) => [None, None],
        Op::MatMul(a, b)
        | Op::MatMulNt(a, b)
        | Op::Add(a, b)
        | Op::Sub(a, b)
        | Op::Mul(a, b)
        | Op::AddRow(a, b)
        | Op::CrossMessage { a, b, .. }
        | Op::ScaleBy(a, b)
        | Op::ConcatCols(a, b)
        | Op::ConcatRows(a, b) => [Some(*a), Some(*b)],
        Op::Affine(a, _)
        | Op::Relu(a)
        | Op::Sigmoid(a)
        | Op::Tanh(a)
        | Op::Ln(a)
        | Op::Abs(a)
        | Op::Clamp(a, _, _)
        | Op::Propagate(a, _)
        | Op::GatherRows(a, _)
        | Op::SegmentSum(a, _)
        | Op::SegmentMean(a, _, _)
        | Op::SegmentMax(a, _)
        | Op::RowSoftmax(a)
        | Op::RowNormalize(a, _)
        | Op::ColNormalize(a, _)
        | Op::LogSoftmax(a)
        | Op::Pick(a, _)
        | Op::SumAll(a)
        | Op::BceWithLogits(a, _) => [Some(*a), None],
    }
}

fn acc<T: Scalar>(grads: &mut [Option<Matrix<T>>], v: Var, g: Matrix<T>) {
    match &mut grads[v.0] {
        Some(x) => x.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn zip_with<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>, f: impl Fn(T, T) -> T) -> Matrix<T> {
    let data = a.as_slice().iter().zip(b.as_slice()).map(|(&p, &q)| f(p, q)).collect();
    Matrix::from_vec(a.rows(), a.cols(), data).unwrap()
}

fn hadamard<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Matrix<T> {
    zip_with(a, b, |p, q| p * q)
}

#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let m = row.iter().fold(T::neg_infinity(), |m, &x| m.max(x));
    let mut total = T::zero();
    for x in row.iter_mut() {
        *x = (*x - m).exp();
        total += *x;
    }
    for x in row.iter_mut() {
        *x = *x / total;
    }
}
