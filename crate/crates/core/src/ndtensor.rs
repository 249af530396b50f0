//! Dense `f64` tensors and a tape-based reverse-mode autodiff graph.
//!
//! The op set is deliberately small: exactly what a conv/pool/linear classifier
//! with a sigmoid multi-label head needs. Layout is row-major; 4-d activations
//! are `[batch, channels, height, width]`, convolution kernels are
//! `[out, in, k, k]` and dense weights are `[in, out]`.

use crate::error::{Error, Result};

/// Lower/upper clamp applied to probabilities inside [`Graph::bce_loss`].
pub const BCE_EPS: f64 = 1e-12;

/// Dense n-dimensional array with an optional gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    grad: Option<Vec<f64>>,
    requires_grad: bool,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::invalid(format!(
                "tensor shape {shape:?} has a zero dimension"
            )));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::ShapeMismatch {
                op: "Tensor::new",
                left: shape,
                right: vec![data.len()],
            });
        }
        Ok(Self {
            shape,
            data,
            grad: None,
            requires_grad: false,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; n],
            grad: None,
            requires_grad: false,
        }
    }

    pub fn scalar(v: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![v],
            grad: None,
            requires_grad: false,
        }
    }

    /// Marks the tensor as a trainable leaf.
    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn set_requires_grad(&mut self, flag: bool) {
        self.requires_grad = flag;
        if !flag {
            self.grad = None;
        }
    }

    /// Single element of a one-element tensor.
    pub fn item(&self) -> Result<f64> {
        if self.data.len() != 1 {
            return Err(Error::ShapeMismatch {
                op: "item",
                left: self.shape.clone(),
                right: vec![1],
            });
        }
        Ok(self.data[0])
    }

    fn accumulate_grad(&mut self, delta: &[f64]) {
        match &mut self.grad {
            Some(g) => g.iter_mut().zip(delta).for_each(|(g, d)| *g += d),
            None => self.grad = Some(delta.to_vec()),
        }
    }
}

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    AddBias(NodeId, NodeId),
    Conv2d(NodeId, NodeId),
    MaxPool2x2 { input: NodeId, argmax: Vec<usize> },
    GlobalAvgPool(NodeId),
    Relu(NodeId),
    Sigmoid(NodeId),
    BceLoss(NodeId, NodeId),
}

impl Op {
    fn inputs(&self) -> Vec<NodeId> {
        match self {
            Op::Leaf => vec![],
            Op::MatMul(a, b) | Op::AddBias(a, b) | Op::Conv2d(a, b) | Op::BceLoss(a, b) => {
                vec![*a, *b]
            }
            Op::MaxPool2x2 { input, .. } => vec![*input],
            Op::GlobalAvgPool(a) | Op::Relu(a) | Op::Sigmoid(a) => vec![*a],
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Tensor,
}

/// Append-only tape. Nodes are pushed in evaluation order, so every input id
/// precedes its consumer and reverse iteration is a valid topological order.
#[derive(Debug, Clone, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, t: Tensor) -> NodeId {
        self.push(Op::Leaf, t)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Mutable access to a leaf tensor (e.g. to perturb it for a gradient check).
    pub fn leaf_mut(&mut self, id: NodeId) -> Result<&mut Tensor> {
        let node = &mut self.nodes[id.0];
        match node.op {
            Op::Leaf => Ok(&mut node.value),
            _ => Err(Error::invalid("leaf_mut called on a non-leaf node")),
        }
    }

    /// Consumes the graph and returns the tensor held by `id`.
    pub fn take(mut self, id: NodeId) -> Tensor {
        std::mem::replace(&mut self.nodes[id.0].value, Tensor::scalar(0.0))
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    fn derived(&self, inputs: &[NodeId], shape: Vec<usize>, data: Vec<f64>) -> Tensor {
        let requires_grad = inputs.iter().any(|&i| self.value(i).requires_grad);
        Tensor {
            shape,
            data,
            grad: None,
            requires_grad,
        }
    }

    /// `[m, k] x [k, n] -> [m, n]`
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (sa, sb) = (ta.shape(), tb.shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                left: sa.to_vec(),
                right: sb.to_vec(),
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let av = ta.data[i * k + p];
                let brow = &tb.data[p * n..(p + 1) * n];
                row.iter_mut().zip(brow).for_each(|(o, &bv)| *o += av * bv);
            }
        }
        let t = self.derived(&[a, b], vec![m, n], out);
        Ok(self.push(Op::MatMul(a, b), t))
    }

    /// Adds a per-feature bias: `[n, f] + [f]` or `[n, c, h, w] + [c]`.
    pub fn add_bias(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId> {
        let (tx, tb) = (self.value(x), self.value(bias));
        let sx = tx.shape();
        let ok = tb.shape().len() == 1
            && match sx.len() {
                2 | 4 => sx[1] == tb.shape()[0],
                _ => false,
            };
        if !ok {
            return Err(Error::ShapeMismatch {
                op: "add_bias",
                left: sx.to_vec(),
                right: tb.shape().to_vec(),
            });
        }
        let channels = sx[1];
        let inner: usize = sx[2..].iter().product();
        let mut out = tx.data.clone();
        for (chunk_idx, chunk) in out.chunks_mut(inner).enumerate() {
            let b = tb.data[chunk_idx % channels];
            chunk.iter_mut().for_each(|v| *v += b);
        }
        let t = self.derived(&[x, bias], sx.to_vec(), out);
        Ok(self.push(Op::AddBias(x, bias), t))
    }

    /// Stride-1 convolution with "same" zero padding and an odd square kernel.
    pub fn conv2d(&mut self, x: NodeId, w: NodeId) -> Result<NodeId> {
        let (tx, tw) = (self.value(x), self.value(w));
        let (sx, sw) = (tx.shape(), tw.shape());
        if sx.len() != 4 || sw.len() != 4 || sx[1] != sw[1] || sw[2] != sw[3] || sw[2] % 2 == 0 {
            return Err(Error::ShapeMismatch {
                op: "conv2d",
                left: sx.to_vec(),
                right: sw.to_vec(),
            });
        }
        let dims = ConvDims::new(sx, sw);
        let mut out = vec![0.0; dims.n * dims.o * dims.h * dims.w];
        dims.for_each_tap(|n, o, c, kh, kw, dy, dx| {
            let wv = tw.data[dims.w_idx(o, c, kh, kw)];
            let (rows, cols) = dims.valid(dy, dx);
            for i in rows {
                let src = dims.x_idx(n, c, (i as isize + dy) as usize, 0);
                let dst = dims.y_idx(n, o, i, 0);
                for j in cols.clone() {
                    out[dst + j] += wv * tx.data[src + (j as isize + dx) as usize];
                }
            }
        });
        let t = self.derived(&[x, w], vec![dims.n, dims.o, dims.h, dims.w], out);
        Ok(self.push(Op::Conv2d(x, w), t))
    }

    /// 2x2 max pooling with stride 2; odd trailing rows/columns are dropped.
    pub fn max_pool_2x2(&mut self, x: NodeId) -> Result<NodeId> {
        let tx = self.value(x);
        let s = tx.shape();
        if s.len() != 4 || s[2] < 2 || s[3] < 2 {
            return Err(Error::ShapeMismatch {
                op: "max_pool_2x2",
                left: s.to_vec(),
                right: vec![2, 2],
            });
        }
        let (nc, h, w) = (s[0] * s[1], s[2], s[3]);
        let (oh, ow) = (h / 2, w / 2);
        let mut out = Vec::with_capacity(nc * oh * ow);
        let mut argmax = Vec::with_capacity(nc * oh * ow);
        for plane in 0..nc {
            let base = plane * h * w;
            for i in 0..oh {
                for j in 0..ow {
                    let mut best = base + 2 * i * w + 2 * j;
                    for (di, dj) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = base + (2 * i + di) * w + 2 * j + dj;
                        if tx.data[idx] > tx.data[best] {
                            best = idx;
                        }
                    }
                    argmax.push(best);
                    out.push(tx.data[best]);
                }
            }
        }
        let t = self.derived(&[x], vec![s[0], s[1], oh, ow], out);
        Ok(self.push(Op::MaxPool2x2 { input: x, argmax }, t))
    }

    /// `[n, c, h, w] -> [n, c]`
    pub fn global_avg_pool(&mut self, x: NodeId) -> Result<NodeId> {
        let tx = self.value(x);
        let s = tx.shape();
        if s.len() != 4 {
            return Err(Error::ShapeMismatch {
                op: "global_avg_pool",
                left: s.to_vec(),
                right: vec![0, 0, 0, 0],
            });
        }
        let hw = s[2] * s[3];
        let out = tx
            .data
            .chunks(hw)
            .map(|c| c.iter().sum::<f64>() / hw as f64)
            .collect();
        let t = self.derived(&[x], vec![s[0], s[1]], out);
        Ok(self.push(Op::GlobalAvgPool(x), t))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let tx = self.value(x);
        let out = tx.data.iter().map(|&v| v.max(0.0)).collect();
        let t = self.derived(&[x], tx.shape.clone(), out);
        self.push(Op::Relu(x), t)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let tx = self.value(x);
        let out = tx.data.iter().map(|&v| sigmoid(v)).collect();
        let t = self.derived(&[x], tx.shape.clone(), out);
        self.push(Op::Sigmoid(x), t)
    }

    /// Mean binary cross-entropy over every element; `targets` must be 0/1.
    pub fn bce_loss(&mut self, probs: NodeId, targets: NodeId) -> Result<NodeId> {
        let (tp, tt) = (self.value(probs), self.value(targets));
        if tp.shape() != tt.shape() {
            return Err(Error::ShapeMismatch {
                op: "bce_loss",
                left: tp.shape().to_vec(),
                right: tt.shape().to_vec(),
            });
        }
        if let Some(bad) = tt.data.iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(Error::invalid(format!(
                "bce_loss target {bad} is not in {{0, 1}}"
            )));
        }
        let n = tp.len() as f64;
        let loss = tp
            .data
            .iter()
            .zip(&tt.data)
            .map(|(&p, &y)| {
                let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
                -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
            })
            .sum::<f64>()
            / n;
        let t = self.derived(&[probs], vec![1], vec![loss]);
        Ok(self.push(Op::BceLoss(probs, targets), t))
    }

    /// Reverse sweep from a scalar node. Gradients are accumulated into the
    /// `grad` field of every leaf with `requires_grad`; calling twice without
    /// [`Tensor::zero_grad`] doubles them.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::invalid(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(vec![1.0]);

        for id in (0..=loss.0).rev() {
            let Some(g) = adj[id].take() else { continue };
            let node = &self.nodes[id];
            if !node.value.requires_grad {
                continue;
            }
            match &node.op {
                Op::Leaf => {
                    self.nodes[id].value.accumulate_grad(&g);
                }
                op => {
                    for (input, delta) in self.local_grads(op, &node.value, &g) {
                        if !self.value(input).requires_grad {
                            continue;
                        }
                        match &mut adj[input.0] {
                            Some(acc) => acc.iter_mut().zip(&delta).for_each(|(a, d)| *a += d),
                            slot => *slot = Some(delta),
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn local_grads(&self, op: &Op, out: &Tensor, g: &[f64]) -> Vec<(NodeId, Vec<f64>)> {
        let wants = |id: NodeId| self.value(id).requires_grad;
        match op {
            Op::Leaf => vec![],
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (ta.shape[0], ta.shape[1], tb.shape[1]);
                let mut res = Vec::new();
                if wants(*a) {
                    // dA = G · Bᵀ
                    let mut da = vec![0.0; m * k];
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let brow = &tb.data[p * n..(p + 1) * n];
                            da[i * k + p] = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
                        }
                    }
                    res.push((*a, da));
                }
                if wants(*b) {
                    // dB = Aᵀ · G
                    let mut db = vec![0.0; k * n];
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let av = ta.data[i * k + p];
                            let drow = &mut db[p * n..(p + 1) * n];
                            drow.iter_mut().zip(grow).for_each(|(d, &gv)| *d += av * gv);
                        }
                    }
                    res.push((*b, db));
                }
                res
            }
            Op::AddBias(x, b) => {
                let s = &out.shape;
                let channels = s[1];
                let inner: usize = s[2..].iter().product();
                let mut res = Vec::new();
                if wants(*x) {
                    res.push((*x, g.to_vec()));
                }
                if wants(*b) {
                    let mut db = vec![0.0; channels];
                    for (chunk_idx, chunk) in g.chunks(inner).enumerate() {
                        db[chunk_idx % channels] += chunk.iter().sum::<f64>();
                    }
                    res.push((*b, db));
                }
                res
            }
            Op::Conv2d(x, w) => {
                let (tx, tw) = (self.value(*x), self.value(*w));
                let dims = ConvDims::new(&tx.shape, &tw.shape);
                let (want_x, want_w) = (wants(*x), wants(*w));
                let mut dx_buf = if want_x { vec![0.0; tx.len()] } else { vec![] };
                let mut dw_buf = if want_w { vec![0.0; tw.len()] } else { vec![] };
                dims.for_each_tap(|n, o, c, kh, kw, dy, dxo| {
                    let widx = dims.w_idx(o, c, kh, kw);
                    let wv = tw.data[widx];
                    let (rows, cols) = dims.valid(dy, dxo);
                    let mut acc_w = 0.0;
                    for i in rows {
                        let src = dims.x_idx(n, c, (i as isize + dy) as usize, 0);
                        let gi = dims.y_idx(n, o, i, 0);
                        for j in cols.clone() {
                            let xi = src + (j as isize + dxo) as usize;
                            let gv = g[gi + j];
                            if want_x {
                                dx_buf[xi] += wv * gv;
                            }
                            acc_w += gv * tx.data[xi];
                        }
                    }
                    if want_w {
                        dw_buf[widx] += acc_w;
                    }
                });
                let mut res = Vec::new();
                if want_x {
                    res.push((*x, dx_buf));
                }
                if want_w {
                    res.push((*w, dw_buf));
                }
                res
            }
            Op::MaxPool2x2 { input, argmax } => {
                let mut dx = vec![0.0; self.value(*input).len()];
                for (&src, &gv) in argmax.iter().zip(g) {
                    dx[src] += gv;
                }
                vec![(*input, dx)]
            }
            Op::GlobalAvgPool(x) => {
                let s = &self.value(*x).shape;
                let hw = s[2] * s[3];
                let dx = g
                    .iter()
                    .flat_map(|&gv| std::iter::repeat_n(gv / hw as f64, hw))
                    .collect();
                vec![(*x, dx)]
            }
            Op::Relu(x) => {
                let tx = self.value(*x);
                let dx = tx
                    .data
                    .iter()
                    .zip(g)
                    .map(|(&v, &gv)| if v > 0.0 { gv } else { 0.0 })
                    .collect();
                vec![(*x, dx)]
            }
            Op::Sigmoid(x) => {
                let dx = out
                    .data
                    .iter()
                    .zip(g)
                    .map(|(&s, &gv)| gv * s * (1.0 - s))
                    .collect();
                vec![(*x, dx)]
            }
            Op::BceLoss(p, t) => {
                let (tp, tt) = (self.value(*p), self.value(*t));
                let n = tp.len() as f64;
                let dp = tp
                    .data
                    .iter()
                    .zip(&tt.data)
                    .map(|(&p, &y)| {
                        let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
                        g[0] * (p - y) / (p * (1.0 - p)) / n
                    })
                    .collect();
                vec![(*p, dp)]
            }
        }
    }

    /// Operation that produced `id`, e.g. `"relu"` or `"leaf"`.
    pub fn op_name(&self, id: NodeId) -> &'static str {
        match self.nodes[id.0].op {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::AddBias(..) => "add_bias",
            Op::Conv2d(..) => "conv2d",
            Op::MaxPool2x2 { .. } => "max_pool_2x2",
            Op::GlobalAvgPool(_) => "global_avg_pool",
            Op::Relu(_) => "relu",
            Op::Sigmoid(_) => "sigmoid",
            Op::BceLoss(..) => "bce_loss",
        }
    }

    /// Ids of all nodes in tape order, with their input ids.
    pub fn topology(&self) -> Vec<(NodeId, Vec<NodeId>)> {
        self.nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (NodeId(i), n.op.inputs()))
            .collect()
    }
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

#[derive(Clone, Copy)]
struct ConvDims {
    n: usize,
    c: usize,
    o: usize,
    h: usize,
    w: usize,
    k: usize,
}

impl ConvDims {
    fn new(sx: &[usize], sw: &[usize]) -> Self {
        Self {
            n: sx[0],
            c: sx[1],
            o: sw[0],
            h: sx[2],
            w: sx[3],
            k: sw[2],
        }
    }

    fn x_idx(&self, n: usize, c: usize, i: usize, j: usize) -> usize {
        ((n * self.c + c) * self.h + i) * self.w + j
    }

    fn y_idx(&self, n: usize, o: usize, i: usize, j: usize) -> usize {
        ((n * self.o + o) * self.h + i) * self.w + j
    }

    fn w_idx(&self, o: usize, c: usize, kh: usize, kw: usize) -> usize {
        ((o * self.c + c) * self.k + kh) * self.k + kw
    }

    /// Output rows/cols whose shifted input position stays inside the image.
    fn valid(&self, dy: isize, dx: isize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let clip = |d: isize, len: usize| {
            let lo = (-d).max(0) as usize;
            let hi = (len as isize - d.max(0)).max(0) as usize;
            lo.min(hi)..hi
        };
        (clip(dy, self.h), clip(dx, self.w))
    }

    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize, usize, usize, isize, isize)) {
        let pad = (self.k / 2) as isize;
        for n in 0..self.n {
            for o in 0..self.o {
                for c in 0..self.c {
                    for kh in 0..self.k {
                        for kw in 0..self.k {
                            f(n, o, c, kh, kw, kh as isize - pad, kw as isize - pad);
                        }
                    }
                }
            }
        }
    }
}
