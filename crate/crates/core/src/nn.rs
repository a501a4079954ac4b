//! Tape-based reverse-mode differentiation over dense f64 matrices.
//!
//! The policy network is small (a few dozen tensors, hidden size 128), so a
//! straightforward arena tape is fast enough for full-sequence
//! backpropagation through event-driven episodes. Forward values are
//! computed eagerly when an op is pushed; `backward` walks the arena in
//! reverse, accumulating adjoints. Every op keeps double precision.

/// Logit value standing in for -inf on masked entries: most-negative finite
/// so downstream arithmetic stays finite.
pub const MASKED_LOGIT: f64 = f64::MIN;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "tensor shape/data mismatch");
        Tensor { rows, cols, data }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            rows: 1,
            cols: 1,
            data: vec![v],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.len(), 1);
        self.data[0]
    }
}

pub type NodeId = usize;

enum Op {
    Leaf,
    /// C = A (m,k) x B (k,n)
    MatMul(NodeId, NodeId),
    /// C = A (m,k) x B^T where B is (n,k)
    MatMulT(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    /// A (m,n) + bias (1,n) broadcast over rows
    AddRowBroadcast(NodeId, NodeId),
    Scale(NodeId, f64),
    AddConst(NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Exp(NodeId),
    SumAll(NodeId),
    /// Row r of a matrix as a (1,n) row vector.
    Row(NodeId, usize),
    /// Contiguous rows [start, start+len) as a (len,n) matrix.
    RowsSlice(NodeId, usize, usize),
    /// Horizontal concatenation of (1,n_i) rows.
    ConcatCols(Vec<NodeId>),
    /// y = sum_i w_i * row_i with caller-normalized constant weights.
    WeightedMeanRows(NodeId, Vec<f64>),
    /// Numerically stable log-softmax over the feasible entries of a (1,n)
    /// row; masked outputs are the MASKED_LOGIT constant and carry no
    /// gradient.
    MaskedLogSoftmax(NodeId, Vec<bool>),
    /// Element c of a (1,n) row as a scalar.
    Gather(NodeId, usize),
    /// Elementwise min; ties route the gradient to the first argument.
    MinElem(NodeId, NodeId),
    /// Clamp to [lo, hi]; zero gradient outside the open interval.
    Clamp(NodeId, f64, f64),
}

struct Node {
    op: Op,
    out: Tensor,
    grad: Vec<f64>,
}

/// Arena of computation nodes for one forward/backward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, out: Tensor) -> NodeId {
        let grad = vec![0.0; out.len()];
        self.nodes.push(Node { op, out, grad });
        self.nodes.len() - 1
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id].out
    }

    pub fn grad(&self, id: NodeId) -> &[f64] {
        &self.nodes[id].grad
    }

    pub fn leaf(&mut self, t: Tensor) -> NodeId {
        self.push(Op::Leaf, t)
    }

    pub fn scalar(&mut self, v: f64) -> NodeId {
        self.leaf(Tensor::scalar(v))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (ta, tb) = (&self.nodes[a].out, &self.nodes[b].out);
        assert_eq!(ta.cols, tb.rows, "matmul inner dims");
        let (m, k, n) = (ta.rows, ta.cols, tb.cols);
        let mut out = Tensor::zeros(m, n);
        for i in 0..m {
            for p in 0..k {
                let av = ta.data[i * k + p];
                if av == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += av * tb.data[p * n + j];
                }
            }
        }
        self.push(Op::MatMul(a, b), out)
    }

    pub fn matmul_t(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (ta, tb) = (&self.nodes[a].out, &self.nodes[b].out);
        assert_eq!(ta.cols, tb.cols, "matmul_t inner dims");
        let (m, k, n) = (ta.rows, ta.cols, tb.rows);
        let mut out = Tensor::zeros(m, n);
        for i in 0..m {
            for j in 0..n {
                let mut s = 0.0;
                for p in 0..k {
                    s += ta.data[i * k + p] * tb.data[j * k + p];
                }
                out.data[i * n + j] = s;
            }
        }
        self.push(Op::MatMulT(a, b), out)
    }

    fn binary_same_shape(&self, a: NodeId, b: NodeId) -> (usize, usize) {
        let (ta, tb) = (&self.nodes[a].out, &self.nodes[b].out);
        assert_eq!((ta.rows, ta.cols), (tb.rows, tb.cols), "shape mismatch");
        (ta.rows, ta.cols)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.binary_same_shape(a, b);
        let out = Tensor {
            rows: self.nodes[a].out.rows,
            cols: self.nodes[a].out.cols,
            data: self.nodes[a]
                .out
                .data
                .iter()
                .zip(&self.nodes[b].out.data)
                .map(|(x, y)| x + y)
                .collect(),
        };
        self.push(Op::Add(a, b), out)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.binary_same_shape(a, b);
        let out = Tensor {
            rows: self.nodes[a].out.rows,
            cols: self.nodes[a].out.cols,
            data: self.nodes[a]
                .out
                .data
                .iter()
                .zip(&self.nodes[b].out.data)
                .map(|(x, y)| x - y)
                .collect(),
        };
        self.push(Op::Sub(a, b), out)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.binary_same_shape(a, b);
        let out = Tensor {
            rows: self.nodes[a].out.rows,
            cols: self.nodes[a].out.cols,
            data: self.nodes[a]
                .out
                .data
                .iter()
                .zip(&self.nodes[b].out.data)
                .map(|(x, y)| x * y)
                .collect(),
        };
        self.push(Op::Mul(a, b), out)
    }

    pub fn add_row_broadcast(&mut self, a: NodeId, bias: NodeId) -> NodeId {
        let (ta, tb) = (&self.nodes[a].out, &self.nodes[bias].out);
        assert_eq!(tb.rows, 1, "bias must be a row vector");
        assert_eq!(ta.cols, tb.cols, "bias width");
        let mut out = ta.clone();
        for r in 0..ta.rows {
            for c in 0..ta.cols {
                out.data[r * ta.cols + c] += tb.data[c];
            }
        }
        self.push(Op::AddRowBroadcast(a, bias), out)
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> NodeId {
        let out = Tensor {
            rows: self.nodes[a].out.rows,
            cols: self.nodes[a].out.cols,
            data: self.nodes[a].out.data.iter().map(|x| x * s).collect(),
        };
        self.push(Op::Scale(a, s), out)
    }

    pub fn add_const(&mut self, a: NodeId, c: f64) -> NodeId {
        let out = Tensor {
            rows: self.nodes[a].out.rows,
            cols: self.nodes[a].out.cols,
            data: self.nodes[a].out.data.iter().map(|x| x + c).collect(),
        };
        self.push(Op::AddConst(a), out)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let out = Tensor {
            rows: self.nodes[a].out.rows,
            cols: self.nodes[a].out.cols,
            data: self.nodes[a].out.data.iter().map(|x| x.tanh()).collect(),
        };
        self.push(Op::Tanh(a), out)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let out = Tensor {
            rows: self.nodes[a].out.rows,
            cols: self.nodes[a].out.cols,
            data: self.nodes[a]
                .out
                .data
                .iter()
                .map(|x| 1.0 / (1.0 + (-x).exp()))
                .collect(),
        };
        self.push(Op::Sigmoid(a), out)
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let out = Tensor {
            rows: self.nodes[a].out.rows,
            cols: self.nodes[a].out.cols,
            data: self.nodes[a].out.data.iter().map(|x| x.exp()).collect(),
        };
        self.push(Op::Exp(a), out)
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let s: f64 = self.nodes[a].out.data.iter().sum();
        self.push(Op::SumAll(a), Tensor::scalar(s))
    }

    pub fn row(&mut self, a: NodeId, r: usize) -> NodeId {
        let ta = &self.nodes[a].out;
        assert!(r < ta.rows, "row index");
        let out = Tensor::from_vec(1, ta.cols, ta.data[r * ta.cols..(r + 1) * ta.cols].to_vec());
        self.push(Op::Row(a, r), out)
    }

    pub fn rows_slice(&mut self, a: NodeId, start: usize, len: usize) -> NodeId {
        let ta = &self.nodes[a].out;
        assert!(start + len <= ta.rows, "rows_slice out of range");
        let out = Tensor::from_vec(
            len,
            ta.cols,
            ta.data[start * ta.cols..(start + len) * ta.cols].to_vec(),
        );
        self.push(Op::RowsSlice(a, start, len), out)
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        let mut data = Vec::new();
        for &p in parts {
            let t = &self.nodes[p].out;
            assert_eq!(t.rows, 1, "concat_cols expects row vectors");
            data.extend_from_slice(&t.data);
        }
        let out = Tensor::from_vec(1, data.len(), data);
        self.push(Op::ConcatCols(parts.to_vec()), out)
    }

    /// Presence-weighted mean over rows; `weights` must sum to 1 (or be all
    /// zero for an empty pool).
    pub fn weighted_mean_rows(&mut self, a: NodeId, weights: Vec<f64>) -> NodeId {
        let ta = &self.nodes[a].out;
        assert_eq!(weights.len(), ta.rows, "one weight per row");
        let mut out = Tensor::zeros(1, ta.cols);
        for (r, w) in weights.iter().enumerate() {
            if *w == 0.0 {
                continue;
            }
            for c in 0..ta.cols {
                out.data[c] += w * ta.data[r * ta.cols + c];
            }
        }
        self.push(Op::WeightedMeanRows(a, weights), out)
    }

    pub fn masked_log_softmax(&mut self, a: NodeId, mask: Vec<bool>) -> NodeId {
        let ta = &self.nodes[a].out;
        assert_eq!(ta.rows, 1, "masked_log_softmax expects a row");
        assert_eq!(mask.len(), ta.cols, "mask width");
        assert!(mask.iter().any(|m| *m), "all entries masked");
        let mut mx = f64::NEG_INFINITY;
        for (i, &m) in mask.iter().enumerate() {
            if m && ta.data[i] > mx {
                mx = ta.data[i];
            }
        }
        let mut lse = 0.0;
        for (i, &m) in mask.iter().enumerate() {
            if m {
                lse += (ta.data[i] - mx).exp();
            }
        }
        let lse = mx + lse.ln();
        let mut out = Tensor::zeros(1, ta.cols);
        for (i, &m) in mask.iter().enumerate() {
            out.data[i] = if m { ta.data[i] - lse } else { MASKED_LOGIT };
        }
        self.push(Op::MaskedLogSoftmax(a, mask), out)
    }

    pub fn gather(&mut self, a: NodeId, idx: usize) -> NodeId {
        let ta = &self.nodes[a].out;
        assert_eq!(ta.rows, 1);
        assert!(idx < ta.cols, "gather index");
        let out = Tensor::scalar(ta.data[idx]);
        self.push(Op::Gather(a, idx), out)
    }

    pub fn min_elem(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.binary_same_shape(a, b);
        let out = Tensor {
            rows: self.nodes[a].out.rows,
            cols: self.nodes[a].out.cols,
            data: self.nodes[a]
                .out
                .data
                .iter()
                .zip(&self.nodes[b].out.data)
                .map(|(x, y)| x.min(*y))
                .collect(),
        };
        self.push(Op::MinElem(a, b), out)
    }

    pub fn clamp(&mut self, a: NodeId, lo: f64, hi: f64) -> NodeId {
        let out = Tensor {
            rows: self.nodes[a].out.rows,
            cols: self.nodes[a].out.cols,
            data: self.nodes[a]
                .out
                .data
                .iter()
                .map(|x| x.clamp(lo, hi))
                .collect(),
        };
        self.push(Op::Clamp(a, lo, hi), out)
    }

    /// Reverse pass from a scalar node. Gradients accumulate, so reuse a
    /// fresh tape per pass.
    pub fn backward(&mut self, root: NodeId) {
        assert_eq!(self.nodes[root].out.len(), 1, "backward needs a scalar");
        self.nodes[root].grad[0] = 1.0;
        for id in (0..=root).rev() {
            // Split borrows: take the grad out, write into parents.
            let grad = std::mem::take(&mut self.nodes[id].grad);
            match &self.nodes[id].op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let (a, b) = (*a, *b);
                    let (m, k) = (self.nodes[a].out.rows, self.nodes[a].out.cols);
                    let n = self.nodes[b].out.cols;
                    let a_data = self.nodes[a].out.data.clone();
                    let b_data = self.nodes[b].out.data.clone();
                    for i in 0..m {
                        for p in 0..k {
                            let mut s = 0.0;
                            for j in 0..n {
                                s += grad[i * n + j] * b_data[p * n + j];
                            }
                            self.nodes[a].grad[i * k + p] += s;
                        }
                    }
                    for p in 0..k {
                        for j in 0..n {
                            let mut s = 0.0;
                            for i in 0..m {
                                s += a_data[i * k + p] * grad[i * n + j];
                            }
                            self.nodes[b].grad[p * n + j] += s;
                        }
                    }
                }
                Op::MatMulT(a, b) => {
                    let (a, b) = (*a, *b);
                    let (m, k) = (self.nodes[a].out.rows, self.nodes[a].out.cols);
                    let n = self.nodes[b].out.rows;
                    let a_data = self.nodes[a].out.data.clone();
                    let b_data = self.nodes[b].out.data.clone();
                    // C (m,n) = A (m,k) B^T (k,n) with B (n,k)
                    for i in 0..m {
                        for p in 0..k {
                            let mut s = 0.0;
                            for j in 0..n {
                                s += grad[i * n + j] * b_data[j * k + p];
                            }
                            self.nodes[a].grad[i * k + p] += s;
                        }
                    }
                    for j in 0..n {
                        for p in 0..k {
                            let mut s = 0.0;
                            for i in 0..m {
                                s += grad[i * n + j] * a_data[i * k + p];
                            }
                            self.nodes[b].grad[j * k + p] += s;
                        }
                    }
                }
                Op::Add(a, b) => {
                    let (a, b) = (*a, *b);
                    for (g, d) in grad.iter().zip(self.nodes[a].grad.iter_mut()) {
                        *d += g;
                    }
                    for (g, d) in grad.iter().zip(self.nodes[b].grad.iter_mut()) {
                        *d += g;
                    }
                }
                Op::Sub(a, b) => {
                    let (a, b) = (*a, *b);
                    for (g, d) in grad.iter().zip(self.nodes[a].grad.iter_mut()) {
                        *d += g;
                    }
                    for (g, d) in grad.iter().zip(self.nodes[b].grad.iter_mut()) {
                        *d -= g;
                    }
                }
                Op::Mul(a, b) => {
                    let (a, b) = (*a, *b);
                    let b_data = self.nodes[b].out.data.clone();
                    let a_data = self.nodes[a].out.data.clone();
                    for (i, g) in grad.iter().enumerate() {
                        self.nodes[a].grad[i] += g * b_data[i];
                        self.nodes[b].grad[i] += g * a_data[i];
                    }
                }
                Op::AddRowBroadcast(a, bias) => {
                    let (a, bias) = (*a, *bias);
                    let cols = self.nodes[a].out.cols;
                    for (i, g) in grad.iter().enumerate() {
                        self.nodes[a].grad[i] += g;
                        self.nodes[bias].grad[i % cols] += g;
                    }
                }
                Op::Scale(a, s) => {
                    let (a, s) = (*a, *s);
                    for (g, d) in grad.iter().zip(self.nodes[a].grad.iter_mut()) {
                        *d += g * s;
                    }
                }
                Op::AddConst(a) => {
                    let a = *a;
                    for (g, d) in grad.iter().zip(self.nodes[a].grad.iter_mut()) {
                        *d += g;
                    }
                }
                Op::Tanh(a) => {
                    let a = *a;
                    let y = self.nodes[id].out.data.clone();
                    for (i, g) in grad.iter().enumerate() {
                        self.nodes[a].grad[i] += g * (1.0 - y[i] * y[i]);
                    }
                }
                Op::Sigmoid(a) => {
                    let a = *a;
                    let y = self.nodes[id].out.data.clone();
                    for (i, g) in grad.iter().enumerate() {
                        self.nodes[a].grad[i] += g * y[i] * (1.0 - y[i]);
                    }
                }
                Op::Exp(a) => {
                    let a = *a;
                    let y = self.nodes[id].out.data.clone();
                    for (i, g) in grad.iter().enumerate() {
                        self.nodes[a].grad[i] += g * y[i];
                    }
                }
                Op::SumAll(a) => {
                    let a = *a;
                    let g = grad[0];
                    for d in self.nodes[a].grad.iter_mut() {
                        *d += g;
                    }
                }
                Op::Row(a, r) => {
                    let (a, r) = (*a, *r);
                    let cols = self.nodes[a].out.cols;
                    for (c, g) in grad.iter().enumerate() {
                        self.nodes[a].grad[r * cols + c] += g;
                    }
                }
                Op::RowsSlice(a, start, len) => {
                    let (a, start, len) = (*a, *start, *len);
                    debug_assert_eq!(grad.len(), len * self.nodes[a].out.cols);
                    let cols = self.nodes[a].out.cols;
                    for (i, g) in grad.iter().enumerate() {
                        self.nodes[a].grad[start * cols + i] += g;
                    }
                }
                Op::ConcatCols(parts) => {
                    let parts = parts.clone();
                    let mut off = 0;
                    for p in parts {
                        let w = self.nodes[p].out.cols;
                        for c in 0..w {
                            self.nodes[p].grad[c] += grad[off + c];
                        }
                        off += w;
                    }
                }
                Op::WeightedMeanRows(a, weights) => {
                    let a = *a;
                    let weights = weights.clone();
                    let cols = self.nodes[a].out.cols;
                    for (r, w) in weights.iter().enumerate() {
                        if *w == 0.0 {
                            continue;
                        }
                        for c in 0..cols {
                            self.nodes[a].grad[r * cols + c] += w * grad[c];
                        }
                    }
                }
                Op::MaskedLogSoftmax(a, mask) => {
                    let a = *a;
                    let mask = mask.clone();
                    let y = self.nodes[id].out.data.clone();
                    let gsum: f64 = mask
                        .iter()
                        .enumerate()
                        .filter(|(_, m)| **m)
                        .map(|(i, _)| grad[i])
                        .sum();
                    for (i, &m) in mask.iter().enumerate() {
                        if m {
                            let p = y[i].exp();
                            self.nodes[a].grad[i] += grad[i] - p * gsum;
                        }
                    }
                }
                Op::Gather(a, idx) => {
                    let (a, idx) = (*a, *idx);
                    self.nodes[a].grad[idx] += grad[0];
                }
                Op::MinElem(a, b) => {
                    let (a, b) = (*a, *b);
                    let a_data = self.nodes[a].out.data.clone();
                    let b_data = self.nodes[b].out.data.clone();
                    for (i, g) in grad.iter().enumerate() {
                        if a_data[i] <= b_data[i] {
                            self.nodes[a].grad[i] += g;
                        } else {
                            self.nodes[b].grad[i] += g;
                        }
                    }
                }
                Op::Clamp(a, lo, hi) => {
                    let (a, lo, hi) = (*a, *lo, *hi);
                    let x = self.nodes[a].out.data.clone();
                    for (i, g) in grad.iter().enumerate() {
                        if x[i] > lo && x[i] < hi {
                            self.nodes[a].grad[i] += g;
                        }
                    }
                }
            }
            self.nodes[id].grad = grad;
        }
    }
}
