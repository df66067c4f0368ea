//! Reverse-mode autodiff on a per-batch tape.
//!
//! The graph is rebuilt for every batch (define-by-run): nodes are appended
//! to an arena, so parents always precede children and the backward pass is
//! a single reverse sweep that visits each node exactly once. Every forward
//! op checks its output for NaN/Inf and fails instead of propagating them.

use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(usize);

enum Op {
    Leaf,
    Matmul(NodeId, NodeId),
    Add(NodeId, NodeId),
    AddRow { matrix: NodeId, row: NodeId },
    AddScalar(NodeId),
    Mul(NodeId, NodeId),
    Relu(NodeId),
    Softplus(NodeId),
    Exp(NodeId),
    Log(NodeId),
    Neg(NodeId),
    Scale(NodeId, f64),
    Sum(NodeId),
    Row { input: NodeId, index: usize },
    SliceCols { input: NodeId, start: usize, len: usize },
    L2Normalize(NodeId),
    SoftmaxXent { logits: NodeId, targets: Tensor, probs: Tensor },
    Gce { logits: NodeId, labels: Vec<usize>, q: f64, probs: Tensor },
    Ntcl { anchor: NodeId, keys: Tensor, positives: usize, tau: f64 },
    KlToUnit { mean: NodeId, std: NodeId },
    SclBatch { embeddings: NodeId, labels: Vec<usize>, tau: f64 },
}

struct Node {
    value: Tensor,
    op: Op,
    /// Per-sample values for batch losses (softmax cross-entropy), kept for
    /// the reliability sweep and diagnostics.
    per_sample: Option<Vec<f64>>,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Option<Vec<Tensor>>,
}

fn stable_softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Row-wise log-softmax with max subtraction; returns probabilities.
fn softmax_rows(logits: &Tensor) -> Tensor {
    let (rows, cols) = (logits.rows(), logits.cols());
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        let row = logits.row_slice(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for (j, &v) in row.iter().enumerate() {
            let e = (v - max).exp();
            out[r * cols + j] = e;
            denom += e;
        }
        for j in 0..cols {
            out[r * cols + j] /= denom;
        }
    }
    Tensor::matrix(rows, cols, out).expect("softmax preserves shape")
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Insert a leaf (parameter or constant input).
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push_unchecked(value, Op::Leaf, None)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Per-sample losses recorded by batch loss ops.
    pub fn per_sample(&self, id: NodeId) -> Option<&[f64]> {
        self.nodes[id.0].per_sample.as_deref()
    }

    /// Gradient of the last `backward` root with respect to `id`.
    pub fn grad(&self, id: NodeId) -> Result<&Tensor> {
        self.grads
            .as_ref()
            .map(|g| &g[id.0])
            .ok_or(Error::GradientsUnavailable)
    }

    fn push_unchecked(&mut self, value: Tensor, op: Op, per_sample: Option<Vec<f64>>) -> NodeId {
        self.nodes.push(Node { value, op, per_sample });
        NodeId(self.nodes.len() - 1)
    }

    fn push(&mut self, name: &'static str, value: Tensor, op: Op) -> Result<NodeId> {
        self.push_with(name, value, op, None)
    }

    fn push_with(
        &mut self,
        name: &'static str,
        value: Tensor,
        op: Op,
        per_sample: Option<Vec<f64>>,
    ) -> Result<NodeId> {
        if !value.all_finite() {
            return Err(Error::NonFinite { op: name });
        }
        Ok(self.push_unchecked(value, op, per_sample))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if av.shape().len() != 2 || bv.shape().len() != 2 || av.cols() != bv.rows() {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                details: format!("{:?} x {:?}", av.shape(), bv.shape()),
            });
        }
        let (m, k, n) = (av.rows(), av.cols(), bv.cols());
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let scale = av.data()[i * k + p];
                if scale != 0.0 {
                    let brow = &bv.data()[p * n..(p + 1) * n];
                    let orow = &mut out[i * n..(i + 1) * n];
                    for (o, &bvv) in orow.iter_mut().zip(brow) {
                        *o += scale * bvv;
                    }
                }
            }
        }
        self.push("matmul", Tensor::matrix(m, n, out)?, Op::Matmul(a, b))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if av.shape() != bv.shape() {
            return Err(Error::ShapeMismatch {
                op: "add",
                details: format!("{:?} vs {:?}", av.shape(), bv.shape()),
            });
        }
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x + y).collect();
        let value = Tensor::new(av.shape().to_vec(), data)?;
        self.push("add", value, Op::Add(a, b))
    }

    /// Broadcast-add a rank-1 row vector to every row of a matrix.
    pub fn add_row(&mut self, matrix: NodeId, row: NodeId) -> Result<NodeId> {
        let (mv, rv) = (&self.nodes[matrix.0].value, &self.nodes[row.0].value);
        if mv.shape().len() != 2 || rv.shape().len() != 1 || mv.cols() != rv.len() {
            return Err(Error::ShapeMismatch {
                op: "add_row",
                details: format!("{:?} + {:?}", mv.shape(), rv.shape()),
            });
        }
        let cols = mv.cols();
        let data = mv
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| x + rv.data()[i % cols])
            .collect();
        let value = Tensor::new(mv.shape().to_vec(), data)?;
        self.push("add_row", value, Op::AddRow { matrix, row })
    }

    pub fn add_scalar(&mut self, x: NodeId, c: f64) -> Result<NodeId> {
        let xv = &self.nodes[x.0].value;
        let data = xv.data().iter().map(|v| v + c).collect();
        let value = Tensor::new(xv.shape().to_vec(), data)?;
        self.push("add_scalar", value, Op::AddScalar(x))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if av.shape() != bv.shape() {
            return Err(Error::ShapeMismatch {
                op: "mul",
                details: format!("{:?} vs {:?}", av.shape(), bv.shape()),
            });
        }
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x * y).collect();
        let value = Tensor::new(av.shape().to_vec(), data)?;
        self.push("mul", value, Op::Mul(a, b))
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        let xv = &self.nodes[x.0].value;
        let data = xv.data().iter().map(|&v| v.max(0.0)).collect();
        let value = Tensor::new(xv.shape().to_vec(), data)?;
        self.push("relu", value, Op::Relu(x))
    }

    pub fn softplus(&mut self, x: NodeId) -> Result<NodeId> {
        let xv = &self.nodes[x.0].value;
        let data = xv.data().iter().map(|&v| stable_softplus(v)).collect();
        let value = Tensor::new(xv.shape().to_vec(), data)?;
        self.push("softplus", value, Op::Softplus(x))
    }

    pub fn exp(&mut self, x: NodeId) -> Result<NodeId> {
        let xv = &self.nodes[x.0].value;
        let data = xv.data().iter().map(|v| v.exp()).collect();
        let value = Tensor::new(xv.shape().to_vec(), data)?;
        self.push("exp", value, Op::Exp(x))
    }

    pub fn log(&mut self, x: NodeId) -> Result<NodeId> {
        let xv = &self.nodes[x.0].value;
        if xv.data().iter().any(|&v| v <= 0.0) {
            return Err(Error::InvalidArgument(
                "log of non-positive value".to_string(),
            ));
        }
        let data = xv.data().iter().map(|v| v.ln()).collect();
        let value = Tensor::new(xv.shape().to_vec(), data)?;
        self.push("log", value, Op::Log(x))
    }

    pub fn neg(&mut self, x: NodeId) -> Result<NodeId> {
        let xv = &self.nodes[x.0].value;
        let data = xv.data().iter().map(|v| -v).collect();
        let value = Tensor::new(xv.shape().to_vec(), data)?;
        self.push("neg", value, Op::Neg(x))
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> Result<NodeId> {
        let xv = &self.nodes[x.0].value;
        let data = xv.data().iter().map(|v| v * c).collect();
        let value = Tensor::new(xv.shape().to_vec(), data)?;
        self.push("scale", value, Op::Scale(x, c))
    }

    pub fn sum(&mut self, x: NodeId) -> Result<NodeId> {
        let total: f64 = self.nodes[x.0].value.data().iter().sum();
        self.push("sum", Tensor::scalar(total), Op::Sum(x))
    }

    /// Extract row `index` of a matrix as a rank-1 node.
    pub fn row(&mut self, input: NodeId, index: usize) -> Result<NodeId> {
        let xv = &self.nodes[input.0].value;
        if xv.shape().len() != 2 || index >= xv.rows() {
            return Err(Error::ShapeMismatch {
                op: "row",
                details: format!("row {} of {:?}", index, xv.shape()),
            });
        }
        let value = Tensor::vector(xv.row_slice(index).to_vec());
        self.push("row", value, Op::Row { input, index })
    }

    /// Extract a contiguous column range of a matrix.
    pub fn slice_cols(&mut self, input: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let xv = &self.nodes[input.0].value;
        if xv.shape().len() != 2 || start + len > xv.cols() {
            return Err(Error::ShapeMismatch {
                op: "slice_cols",
                details: format!("cols {}..{} of {:?}", start, start + len, xv.shape()),
            });
        }
        let (rows, cols) = (xv.rows(), xv.cols());
        let mut data = Vec::with_capacity(rows * len);
        for r in 0..rows {
            data.extend_from_slice(&xv.data()[r * cols + start..r * cols + start + len]);
        }
        let value = Tensor::matrix(rows, len, data)?;
        self.push("slice_cols", value, Op::SliceCols { input, start, len })
    }

    /// L2-normalize a vector, or each row of a matrix.
    pub fn l2_normalize(&mut self, x: NodeId) -> Result<NodeId> {
        let xv = &self.nodes[x.0].value;
        let (rows, cols) = (xv.rows(), xv.cols());
        let mut data = vec![0.0; xv.len()];
        for r in 0..rows {
            let row = &xv.data()[r * cols..(r + 1) * cols];
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm < 1e-12 {
                return Err(Error::InvalidArgument(
                    "cannot normalize a (near-)zero vector".to_string(),
                ));
            }
            for (o, &v) in data[r * cols..(r + 1) * cols].iter_mut().zip(row) {
                *o = v / norm;
            }
        }
        let value = Tensor::new(xv.shape().to_vec(), data)?;
        self.push("l2_normalize", value, Op::L2Normalize(x))
    }

    /// Mean soft-target cross-entropy over a batch of logits.
    ///
    /// Each target row must sum to 1 within 1e-6. Per-sample losses are kept
    /// on the node and available through [`Tape::per_sample`].
    pub fn softmax_cross_entropy(&mut self, logits: NodeId, targets: Tensor) -> Result<NodeId> {
        let lv = &self.nodes[logits.0].value;
        if lv.shape().len() != 2 || targets.shape() != lv.shape() {
            return Err(Error::ShapeMismatch {
                op: "softmax_cross_entropy",
                details: format!("logits {:?}, targets {:?}", lv.shape(), targets.shape()),
            });
        }
        let (rows, cols) = (lv.rows(), lv.cols());
        for r in 0..rows {
            let sum: f64 = targets.row_slice(r).iter().sum();
            if (sum - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidArgument(format!(
                    "target row {} sums to {}, expected 1",
                    r, sum
                )));
            }
        }
        let probs = softmax_rows(lv);
        let mut per_sample = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = lv.row_slice(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            let loss: f64 = targets
                .row_slice(r)
                .iter()
                .zip(row)
                .map(|(&t, &l)| t * (lse - l))
                .sum();
            per_sample.push(loss);
        }
        let mean = per_sample.iter().sum::<f64>() / rows as f64;
        self.push_with(
            "softmax_cross_entropy",
            Tensor::scalar(mean),
            Op::SoftmaxXent { logits, targets, probs },
            Some(per_sample),
        )
    }

    /// Mean generalized cross-entropy `(1 - p_y^q) / q` over a batch.
    pub fn gce(&mut self, logits: NodeId, labels: Vec<usize>, q: f64) -> Result<NodeId> {
        let lv = &self.nodes[logits.0].value;
        if lv.shape().len() != 2 || labels.len() != lv.rows() {
            return Err(Error::ShapeMismatch {
                op: "gce",
                details: format!("logits {:?}, {} labels", lv.shape(), labels.len()),
            });
        }
        if !(q > 0.0 && q <= 1.0) {
            return Err(Error::InvalidArgument(format!("gce q must be in (0, 1], got {q}")));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= lv.cols()) {
            return Err(Error::InvalidArgument(format!(
                "gce label {} out of range for {} classes",
                bad,
                lv.cols()
            )));
        }
        let probs = softmax_rows(lv);
        let per_sample: Vec<f64> = labels
            .iter()
            .enumerate()
            .map(|(r, &y)| (1.0 - probs.at(r, y).powf(q)) / q)
            .collect();
        let mean = per_sample.iter().sum::<f64>() / labels.len() as f64;
        self.push_with(
            "gce",
            Tensor::scalar(mean),
            Op::Gce { logits, labels, q, probs },
            Some(per_sample),
        )
    }

    /// Contrastive loss of one anchor against a key matrix whose first
    /// `positives` rows are the same-class keys and the rest are negatives:
    /// `-(1/P) sum_d log(exp(q.k_d/tau) / sum_all exp(q.k_j/tau))`.
    ///
    /// Gradient flows only through the anchor; keys are constants.
    pub fn ntcl(&mut self, anchor: NodeId, keys: Tensor, positives: usize, tau: f64) -> Result<NodeId> {
        let qv = &self.nodes[anchor.0].value;
        if tau <= 0.0 {
            return Err(Error::InvalidArgument(format!("temperature must be > 0, got {tau}")));
        }
        if keys.shape().len() != 2 || keys.cols() != qv.len() || qv.shape().len() != 1 {
            return Err(Error::ShapeMismatch {
                op: "ntcl",
                details: format!("anchor {:?}, keys {:?}", qv.shape(), keys.shape()),
            });
        }
        if positives == 0 || positives > keys.rows() {
            return Err(Error::InvalidArgument(format!(
                "ntcl needs 1..=K positive keys, got {} of {}",
                positives,
                keys.rows()
            )));
        }
        let sims: Vec<f64> = (0..keys.rows())
            .map(|j| dot(qv.data(), keys.row_slice(j)) / tau)
            .collect();
        let max = sims.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + sims.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
        let mean_pos = sims[..positives].iter().sum::<f64>() / positives as f64;
        let value = lse - mean_pos;
        self.push(
            "ntcl",
            Tensor::scalar(value),
            Op::Ntcl { anchor, keys, positives, tau },
        )
    }

    /// `KL(N(mu, diag(std^2)) || N(0, I))`, summed over dimensions and
    /// averaged over rows.
    pub fn kl_to_unit(&mut self, mean: NodeId, std: NodeId) -> Result<NodeId> {
        let (mv, sv) = (&self.nodes[mean.0].value, &self.nodes[std.0].value);
        if mv.shape() != sv.shape() {
            return Err(Error::ShapeMismatch {
                op: "kl_to_unit",
                details: format!("mean {:?} vs std {:?}", mv.shape(), sv.shape()),
            });
        }
        if sv.data().iter().any(|&s| s <= 0.0) {
            return Err(Error::InvalidArgument("kl_to_unit requires std > 0".to_string()));
        }
        let rows = mv.rows() as f64;
        let total: f64 = mv
            .data()
            .iter()
            .zip(sv.data())
            .map(|(&m, &s)| 0.5 * (m * m + s * s - 1.0 - 2.0 * s.ln()))
            .sum();
        self.push(
            "kl_to_unit",
            Tensor::scalar(total / rows),
            Op::KlToUnit { mean, std },
        )
    }

    /// Supervised contrastive loss over one batch: positives are same-label
    /// batch members, negatives the rest, averaged over all anchors. Anchors
    /// without a positive contribute zero.
    pub fn scl_batch(&mut self, embeddings: NodeId, labels: Vec<usize>, tau: f64) -> Result<NodeId> {
        let ev = &self.nodes[embeddings.0].value;
        if tau <= 0.0 {
            return Err(Error::InvalidArgument(format!("temperature must be > 0, got {tau}")));
        }
        if ev.shape().len() != 2 || labels.len() != ev.rows() {
            return Err(Error::ShapeMismatch {
                op: "scl_batch",
                details: format!("embeddings {:?}, {} labels", ev.shape(), labels.len()),
            });
        }
        if ev.rows() < 2 {
            return Err(Error::InvalidArgument("scl_batch needs a batch of at least 2".to_string()));
        }
        let batch = ev.rows();
        let mut total = 0.0;
        for i in 0..batch {
            let mut all = Vec::with_capacity(batch - 1);
            let mut pos = Vec::new();
            for j in 0..batch {
                if j == i {
                    continue;
                }
                let s = dot(ev.row_slice(i), ev.row_slice(j)) / tau;
                all.push(s);
                if labels[j] == labels[i] {
                    pos.push(s);
                }
            }
            if pos.is_empty() {
                continue;
            }
            total += logsumexp(&all) - logsumexp(&pos);
        }
        self.push(
            "scl_batch",
            Tensor::scalar(total / batch as f64),
            Op::SclBatch { embeddings, labels, tau },
        )
    }

    /// Reverse sweep from a scalar root: parents always precede children on
    /// the arena, so one pass in reverse index order visits each node once.
    /// Running backward twice on the same tape is an error.
    pub fn backward(&mut self, root: NodeId) -> Result<()> {
        if self.grads.is_some() {
            return Err(Error::BackwardAlreadyRun);
        }
        let root_value = &self.nodes[root.0].value;
        if !root_value.is_scalar() {
            return Err(Error::NonScalarRoot {
                shape: root_value.shape().to_vec(),
            });
        }
        let mut grads: Vec<Tensor> = self
            .nodes
            .iter()
            .map(|n| Tensor::zeros(n.value.shape().to_vec()))
            .collect();
        grads[root.0].data_mut()[0] = 1.0;

        for i in (0..=root.0).rev() {
            let (parent_grads, rest) = grads.split_at_mut(i);
            let gout = &rest[0];
            self.accumulate(i, gout, parent_grads);
        }
        self.grads = Some(grads);
        Ok(())
    }

    fn accumulate(&self, index: usize, gout: &Tensor, parents: &mut [Tensor]) {
        let node = &self.nodes[index];
        match &node.op {
            Op::Leaf => {}
            Op::Matmul(a, b) => {
                let av = &self.nodes[a.0].value;
                let bv = &self.nodes[b.0].value;
                let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                {
                    let ga = parents[a.0].data_mut();
                    for i in 0..m {
                        for p in 0..k {
                            let mut acc = 0.0;
                            for j in 0..n {
                                acc += gout.data()[i * n + j] * bv.data()[p * n + j];
                            }
                            ga[i * k + p] += acc;
                        }
                    }
                }
                let gb = parents[b.0].data_mut();
                for p in 0..k {
                    for i in 0..m {
                        let scale = av.data()[i * k + p];
                        if scale != 0.0 {
                            for j in 0..n {
                                gb[p * n + j] += scale * gout.data()[i * n + j];
                            }
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                axpy(parents[a.0].data_mut(), gout.data(), 1.0);
                axpy(parents[b.0].data_mut(), gout.data(), 1.0);
            }
            Op::AddRow { matrix, row } => {
                axpy(parents[matrix.0].data_mut(), gout.data(), 1.0);
                let cols = self.nodes[row.0].value.len();
                let grow = parents[row.0].data_mut();
                for (i, &g) in gout.data().iter().enumerate() {
                    grow[i % cols] += g;
                }
            }
            Op::AddScalar(x) => axpy(parents[x.0].data_mut(), gout.data(), 1.0),
            Op::Mul(a, b) => {
                let av = self.nodes[a.0].value.data();
                let bv = self.nodes[b.0].value.data();
                {
                    let ga = parents[a.0].data_mut();
                    for ((g, &go), &b) in ga.iter_mut().zip(gout.data()).zip(bv) {
                        *g += go * b;
                    }
                }
                let gb = parents[b.0].data_mut();
                for ((g, &go), &a) in gb.iter_mut().zip(gout.data()).zip(av) {
                    *g += go * a;
                }
            }
            Op::Relu(x) => {
                let xv = self.nodes[x.0].value.data();
                let gx = parents[x.0].data_mut();
                for ((g, &go), &v) in gx.iter_mut().zip(gout.data()).zip(xv) {
                    if v > 0.0 {
                        *g += go;
                    }
                }
            }
            Op::Softplus(x) => {
                let xv = self.nodes[x.0].value.data();
                let gx = parents[x.0].data_mut();
                for ((g, &go), &v) in gx.iter_mut().zip(gout.data()).zip(xv) {
                    *g += go * sigmoid(v);
                }
            }
            Op::Exp(x) => {
                let out = node.value.data();
                let gx = parents[x.0].data_mut();
                for ((g, &go), &o) in gx.iter_mut().zip(gout.data()).zip(out) {
                    *g += go * o;
                }
            }
            Op::Log(x) => {
                let xv = self.nodes[x.0].value.data();
                let gx = parents[x.0].data_mut();
                for ((g, &go), &v) in gx.iter_mut().zip(gout.data()).zip(xv) {
                    *g += go / v;
                }
            }
            Op::Neg(x) => axpy(parents[x.0].data_mut(), gout.data(), -1.0),
            Op::Scale(x, c) => axpy(parents[x.0].data_mut(), gout.data(), *c),
            Op::Sum(x) => {
                let g = gout.item();
                for v in parents[x.0].data_mut() {
                    *v += g;
                }
            }
            Op::Row { input, index } => {
                let cols = gout.len();
                let gx = parents[input.0].data_mut();
                axpy(&mut gx[index * cols..(index + 1) * cols], gout.data(), 1.0);
            }
            Op::SliceCols { input, start, len } => {
                let cols = self.nodes[input.0].value.cols();
                let gx = parents[input.0].data_mut();
                for r in 0..node.value.rows() {
                    for j in 0..*len {
                        gx[r * cols + start + j] += gout.data()[r * len + j];
                    }
                }
            }
            Op::L2Normalize(x) => {
                let xv = &self.nodes[x.0].value;
                let (rows, cols) = (xv.rows(), xv.cols());
                let out = node.value.data();
                let gx = parents[x.0].data_mut();
                for r in 0..rows {
                    let xrow = &xv.data()[r * cols..(r + 1) * cols];
                    let yrow = &out[r * cols..(r + 1) * cols];
                    let grow = &gout.data()[r * cols..(r + 1) * cols];
                    let norm = xrow.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let proj: f64 = grow.iter().zip(yrow).map(|(&g, &y)| g * y).sum();
                    for j in 0..cols {
                        gx[r * cols + j] += (grow[j] - proj * yrow[j]) / norm;
                    }
                }
            }
            Op::SoftmaxXent { logits, targets, probs } => {
                let g = gout.item() / probs.rows() as f64;
                let gl = parents[logits.0].data_mut();
                for ((gv, &p), &t) in gl.iter_mut().zip(probs.data()).zip(targets.data()) {
                    *gv += g * (p - t);
                }
            }
            Op::Gce { logits, labels, q, probs } => {
                let g = gout.item() / labels.len() as f64;
                let cols = probs.cols();
                let gl = parents[logits.0].data_mut();
                for (r, &y) in labels.iter().enumerate() {
                    let py_q = probs.at(r, y).powf(*q);
                    for j in 0..cols {
                        let delta = if j == y { 1.0 } else { 0.0 };
                        gl[r * cols + j] += g * py_q * (probs.at(r, j) - delta);
                    }
                }
            }
            Op::Ntcl { anchor, keys, positives, tau } => {
                let qv = self.nodes[anchor.0].value.data();
                let sims: Vec<f64> = (0..keys.rows())
                    .map(|j| dot(qv, keys.row_slice(j)) / tau)
                    .collect();
                let max = sims.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let denom: f64 = sims.iter().map(|s| (s - max).exp()).sum();
                let g = gout.item();
                let gq = parents[anchor.0].data_mut();
                for (j, &s) in sims.iter().enumerate() {
                    let w = (s - max).exp() / denom;
                    let coeff = w - if j < *positives { 1.0 / *positives as f64 } else { 0.0 };
                    axpy(gq, keys.row_slice(j), g * coeff / tau);
                }
            }
            Op::KlToUnit { mean, std } => {
                let g = gout.item() / self.nodes[mean.0].value.rows() as f64;
                {
                    let mv = self.nodes[mean.0].value.data();
                    let gm = parents[mean.0].data_mut();
                    for (gv, &m) in gm.iter_mut().zip(mv) {
                        *gv += g * m;
                    }
                }
                let sv = self.nodes[std.0].value.data();
                let gs = parents[std.0].data_mut();
                for (gv, &s) in gs.iter_mut().zip(sv) {
                    *gv += g * (s - 1.0 / s);
                }
            }
            Op::SclBatch { embeddings, labels, tau } => {
                let ev = &self.nodes[embeddings.0].value;
                let batch = ev.rows();
                let cols = ev.cols();
                let g = gout.item() / batch as f64;
                let ge = parents[embeddings.0].data_mut();
                for i in 0..batch {
                    let others: Vec<usize> = (0..batch).filter(|&j| j != i).collect();
                    let sims: Vec<f64> = others
                        .iter()
                        .map(|&j| dot(ev.row_slice(i), ev.row_slice(j)) / tau)
                        .collect();
                    let pos_idx: Vec<usize> = (0..others.len())
                        .filter(|&k| labels[others[k]] == labels[i])
                        .collect();
                    if pos_idx.is_empty() {
                        continue;
                    }
                    let all_lse = logsumexp(&sims);
                    let pos_sims: Vec<f64> = pos_idx.iter().map(|&k| sims[k]).collect();
                    let pos_lse = logsumexp(&pos_sims);
                    for (k, &j) in others.iter().enumerate() {
                        let mut coeff = (sims[k] - all_lse).exp();
                        if labels[j] == labels[i] {
                            coeff -= (sims[k] - pos_lse).exp();
                        }
                        let scale = g * coeff / tau;
                        axpy(
                            &mut ge[i * cols..(i + 1) * cols],
                            ev.row_slice(j),
                            scale,
                        );
                        axpy(
                            &mut ge[j * cols..(j + 1) * cols],
                            ev.row_slice(i),
                            scale,
                        );
                    }
                }
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(out: &mut [f64], x: &[f64], scale: f64) {
    for (o, &v) in out.iter_mut().zip(x) {
        *o += scale * v;
    }
}

fn logsumexp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}
