//! Define-by-run tape: every primitive records its inputs so the chain rule
//! can be replayed in reverse.
//!
//! Nodes are appended in execution order, which is already topological, so
//! the backward pass is a single reverse sweep that visits each node exactly
//! once. Gradient buffers are allocated lazily and only along subgraphs that
//! reach a tracked parameter; frozen leaves never receive one.

use super::{matmul_nt_raw, matmul_raw, matmul_tn_raw, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TensorId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(TensorId, TensorId),
    Mul(TensorId, TensorId),
    AddScalar(TensorId),
    MulScalar(TensorId, f64),
    Log(TensorId),
    Sum(TensorId),
    MatMul(TensorId, TensorId),
    /// a · bᵀ with a: m×k, b: n×k.
    MatMulNT(TensorId, TensorId),
    Softmax { x: TensorId, axis: usize },
    LayerNorm { x: TensorId, gain: TensorId, bias: TensorId, eps: f64 },
    Gelu(TensorId),
    L2NormRows(TensorId),
    TanhGate { x: TensorId, alpha: TensorId },
    GatedResidual { base: TensorId, update: TensorId, alpha: TensorId, omega: f64, use_tanh: bool },
    SliceRows { x: TensorId, start: usize },
    SliceCols { x: TensorId, start: usize, full_cols: usize },
    ConcatRows(Vec<TensorId>),
    ConcatCols(Vec<TensorId>),
    AddRowBroadcast { x: TensorId, bias: TensorId },
    MeanRows(TensorId),
}

#[derive(Debug)]
struct Node {
    tensor: Tensor,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default)]
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

    /// Insert a leaf. Whether gradients flow to it is taken from
    /// `tensor.requires_grad`; frozen tensors never get a grad buffer.
    pub fn leaf(&mut self, tensor: Tensor) -> TensorId {
        let needs = tensor.requires_grad;
        self.push(tensor, Op::Leaf, needs)
    }

    pub fn value(&self, id: TensorId) -> &Tensor {
        &self.nodes[id.0].tensor
    }

    pub fn data(&self, id: TensorId) -> &[f64] {
        &self.nodes[id.0].tensor.data
    }

    pub fn shape(&self, id: TensorId) -> &[usize] {
        &self.nodes[id.0].tensor.shape
    }

    pub fn grad(&self, id: TensorId) -> Option<&[f64]> {
        self.nodes[id.0].tensor.grad.as_deref()
    }

    /// Reset all gradient buffers so backward can be replayed.
    pub fn zero_grads(&mut self) {
        for node in &mut self.nodes {
            node.tensor.grad = None;
        }
    }

    fn push(&mut self, tensor: Tensor, op: Op, needs_grad: bool) -> TensorId {
        let id = TensorId(self.nodes.len());
        self.nodes.push(Node { tensor, op, needs_grad });
        id
    }

    fn needs(&self, id: TensorId) -> bool {
        self.nodes[id.0].needs_grad
    }

    fn push_unary(&mut self, input: TensorId, shape: Vec<usize>, data: Vec<f64>, op: Op) -> TensorId {
        let needs = self.needs(input);
        let t = Tensor { shape, data, requires_grad: false, grad: None };
        self.push(t, op, needs)
    }

    fn push_binary(
        &mut self,
        a: TensorId,
        b: TensorId,
        shape: Vec<usize>,
        data: Vec<f64>,
        op: Op,
    ) -> TensorId {
        let needs = self.needs(a) || self.needs(b);
        let t = Tensor { shape, data, requires_grad: false, grad: None };
        self.push(t, op, needs)
    }

    // ── Elementwise and scalar ops ─────────────────────────────────────

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.check_same_shape("add", a, b)?;
        let data = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(x, y)| x + y)
            .collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push_binary(a, b, shape, data, Op::Add(a, b)))
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.check_same_shape("mul", a, b)?;
        let data = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(x, y)| x * y)
            .collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push_binary(a, b, shape, data, Op::Mul(a, b)))
    }

    pub fn add_scalar(&mut self, a: TensorId, c: f64) -> TensorId {
        let data = self.data(a).iter().map(|x| x + c).collect();
        let shape = self.shape(a).to_vec();
        self.push_unary(a, shape, data, Op::AddScalar(a))
    }

    pub fn mul_scalar(&mut self, a: TensorId, c: f64) -> TensorId {
        let data = self.data(a).iter().map(|x| x * c).collect();
        let shape = self.shape(a).to_vec();
        self.push_unary(a, shape, data, Op::MulScalar(a, c))
    }

    /// Natural log. Callers clamp away from zero first where needed.
    pub fn log(&mut self, a: TensorId) -> TensorId {
        let data = self.data(a).iter().map(|x| x.ln()).collect();
        let shape = self.shape(a).to_vec();
        self.push_unary(a, shape, data, Op::Log(a))
    }

    /// Full reduction to a scalar of shape [1].
    pub fn sum(&mut self, a: TensorId) -> TensorId {
        let s: f64 = self.data(a).iter().sum();
        self.push_unary(a, vec![1], vec![s], Op::Sum(a))
    }

    // ── Linear algebra ─────────────────────────────────────────────────

    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (m, k) = self.dims2("matmul lhs", a)?;
        let (k2, n) = self.dims2("matmul rhs", b)?;
        if k != k2 {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let data = matmul_raw(self.data(a), self.data(b), m, k, n);
        Ok(self.push_binary(a, b, vec![m, n], data, Op::MatMul(a, b)))
    }

    /// a · bᵀ: a is m×k, b is n×k, result m×n.
    pub fn matmul_nt(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (m, k) = self.dims2("matmul_nt lhs", a)?;
        let (n, k2) = self.dims2("matmul_nt rhs", b)?;
        if k != k2 {
            return Err(Error::ShapeMismatch {
                op: "matmul_nt",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let data = matmul_nt_raw(self.data(a), self.data(b), m, k, n);
        Ok(self.push_binary(a, b, vec![m, n], data, Op::MatMulNT(a, b)))
    }

    /// Add a bias row to every row of a 2-D tensor.
    pub fn add_row_broadcast(&mut self, x: TensorId, bias: TensorId) -> Result<TensorId> {
        let (m, n) = self.dims2("add_row_broadcast lhs", x)?;
        if self.value(bias).numel() != n {
            return Err(Error::ShapeMismatch {
                op: "add_row_broadcast",
                lhs: self.shape(x).to_vec(),
                rhs: self.shape(bias).to_vec(),
            });
        }
        let bias_data = self.data(bias).to_vec();
        let mut data = self.data(x).to_vec();
        for i in 0..m {
            for j in 0..n {
                data[i * n + j] += bias_data[j];
            }
        }
        Ok(self.push_binary(x, bias, vec![m, n], data, Op::AddRowBroadcast { x, bias }))
    }

    /// Mean over rows of a 2-D tensor: m×n → n.
    pub fn mean_rows(&mut self, x: TensorId) -> Result<TensorId> {
        let (m, n) = self.dims2("mean_rows", x)?;
        let xd = self.data(x);
        let mut out = vec![0.0; n];
        for i in 0..m {
            for j in 0..n {
                out[j] += xd[i * n + j];
            }
        }
        out.iter_mut().for_each(|v| *v /= m as f64);
        Ok(self.push_unary(x, vec![n], out, Op::MeanRows(x)))
    }

    // ── Nonlinearities ─────────────────────────────────────────────────

    /// Softmax along `axis`, with the max subtracted before exponentiation.
    pub fn softmax(&mut self, x: TensorId, axis: usize) -> Result<TensorId> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(Error::contract(format!(
                "softmax axis {} out of range for shape {:?}",
                axis, shape
            )));
        }
        let data = softmax_forward(self.data(x), &shape, axis);
        Ok(self.push_unary(x, shape, data, Op::Softmax { x, axis }))
    }

    pub fn gelu(&mut self, x: TensorId) -> TensorId {
        let data = self.data(x).iter().map(|&v| gelu_scalar(v)).collect();
        let shape = self.shape(x).to_vec();
        self.push_unary(x, shape, data, Op::Gelu(x))
    }

    /// LayerNorm over the last dimension with affine gain/bias.
    pub fn layer_norm(
        &mut self,
        x: TensorId,
        gain: TensorId,
        bias: TensorId,
        eps: f64,
    ) -> Result<TensorId> {
        if eps <= 0.0 {
            return Err(Error::contract("layer_norm eps must be positive"));
        }
        let shape = self.shape(x).to_vec();
        let n = *shape.last().ok_or_else(|| Error::contract("layer_norm on rank-0"))?;
        if self.value(gain).numel() != n || self.value(bias).numel() != n {
            return Err(Error::ShapeMismatch {
                op: "layer_norm affine",
                lhs: shape,
                rhs: self.shape(gain).to_vec(),
            });
        }
        let rows = self.value(x).numel() / n;
        let xd = self.data(x);
        let g = self.data(gain);
        let b = self.data(bias);
        let mut out = vec![0.0; xd.len()];
        for r in 0..rows {
            let row = &xd[r * n..(r + 1) * n];
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let inv = 1.0 / (var + eps).sqrt();
            for j in 0..n {
                out[r * n + j] = (row[j] - mean) * inv * g[j] + b[j];
            }
        }
        let needs = self.needs(x) || self.needs(gain) || self.needs(bias);
        let t = Tensor { shape: self.shape(x).to_vec(), data: out, requires_grad: false, grad: None };
        Ok(self.push(t, Op::LayerNorm { x, gain, bias, eps }, needs))
    }

    /// Normalize each row of a 2-D tensor to unit Euclidean norm.
    /// All-zero rows pass through unchanged (documented degenerate case).
    pub fn l2_normalize_rows(&mut self, x: TensorId) -> Result<TensorId> {
        let (m, n) = self.dims2("l2_normalize_rows", x)?;
        let xd = self.data(x);
        let mut out = vec![0.0; xd.len()];
        for i in 0..m {
            let row = &xd[i * n..(i + 1) * n];
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                out[i * n..(i + 1) * n].copy_from_slice(row);
            } else {
                for j in 0..n {
                    out[i * n + j] = row[j] / norm;
                }
            }
        }
        Ok(self.push_unary(x, vec![m, n], out, Op::L2NormRows(x)))
    }

    /// tanh(alpha) · x with a scalar gate parameter.
    pub fn tanh_gate(&mut self, x: TensorId, alpha: TensorId) -> Result<TensorId> {
        if !self.value(alpha).is_scalar() {
            return Err(Error::contract("tanh_gate alpha must be a scalar"));
        }
        let g = self.data(alpha)[0].tanh();
        let data = self.data(x).iter().map(|v| g * v).collect();
        let shape = self.shape(x).to_vec();
        Ok(self.push_binary(x, alpha, shape, data, Op::TanhGate { x, alpha }))
    }

    /// base + gate(omega · alpha) · update, where gate is tanh or identity.
    ///
    /// When the gate value is exactly zero the output copies `base`
    /// bit-for-bit, which is what makes a fresh-init model identical to the
    /// frozen backbone; the alpha gradient is still computed in backward.
    pub fn gated_residual(
        &mut self,
        base: TensorId,
        update: TensorId,
        alpha: TensorId,
        omega: f64,
        use_tanh: bool,
    ) -> Result<TensorId> {
        self.check_same_shape("gated_residual", base, update)?;
        if !self.value(alpha).is_scalar() {
            return Err(Error::contract("gated_residual alpha must be a scalar"));
        }
        let pre = omega * self.data(alpha)[0];
        let g = if use_tanh { pre.tanh() } else { pre };
        let data = if g == 0.0 {
            self.data(base).to_vec()
        } else {
            self.data(base)
                .iter()
                .zip(self.data(update))
                .map(|(b, u)| b + g * u)
                .collect()
        };
        let shape = self.shape(base).to_vec();
        let needs = self.needs(base) || self.needs(update) || self.needs(alpha);
        let t = Tensor { shape, data, requires_grad: false, grad: None };
        Ok(self.push(t, Op::GatedResidual { base, update, alpha, omega, use_tanh }, needs))
    }

    // ── Shape surgery ──────────────────────────────────────────────────

    pub fn slice_rows(&mut self, x: TensorId, start: usize, end: usize) -> Result<TensorId> {
        let (m, n) = self.dims2("slice_rows", x)?;
        if start >= end || end > m {
            return Err(Error::contract(format!(
                "slice_rows [{start}, {end}) out of range for {m} rows"
            )));
        }
        let data = self.data(x)[start * n..end * n].to_vec();
        Ok(self.push_unary(x, vec![end - start, n], data, Op::SliceRows { x, start }))
    }

    pub fn slice_cols(&mut self, x: TensorId, start: usize, end: usize) -> Result<TensorId> {
        let (m, n) = self.dims2("slice_cols", x)?;
        if start >= end || end > n {
            return Err(Error::contract(format!(
                "slice_cols [{start}, {end}) out of range for {n} cols"
            )));
        }
        let w = end - start;
        let xd = self.data(x);
        let mut data = vec![0.0; m * w];
        for i in 0..m {
            data[i * w..(i + 1) * w].copy_from_slice(&xd[i * n + start..i * n + end]);
        }
        Ok(self.push_unary(x, vec![m, w], data, Op::SliceCols { x, start, full_cols: n }))
    }

    pub fn concat_rows(&mut self, parts: &[TensorId]) -> Result<TensorId> {
        if parts.is_empty() {
            return Err(Error::contract("concat_rows of zero tensors"));
        }
        let n = self.dims2("concat_rows", parts[0])?.1;
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let (m, pn) = self.dims2("concat_rows", p)?;
            if pn != n {
                return Err(Error::ShapeMismatch {
                    op: "concat_rows",
                    lhs: self.shape(parts[0]).to_vec(),
                    rhs: self.shape(p).to_vec(),
                });
            }
            rows += m;
            data.extend_from_slice(self.data(p));
        }
        let needs = parts.iter().any(|&p| self.needs(p));
        let t = Tensor { shape: vec![rows, n], data, requires_grad: false, grad: None };
        Ok(self.push(t, Op::ConcatRows(parts.to_vec()), needs))
    }

    pub fn concat_cols(&mut self, parts: &[TensorId]) -> Result<TensorId> {
        if parts.is_empty() {
            return Err(Error::contract("concat_cols of zero tensors"));
        }
        let m = self.dims2("concat_cols", parts[0])?.0;
        let widths: Vec<usize> = parts
            .iter()
            .map(|&p| self.dims2("concat_cols", p).map(|d| d.1))
            .collect::<Result<_>>()?;
        for &p in parts {
            if self.dims2("concat_cols", p)?.0 != m {
                return Err(Error::ShapeMismatch {
                    op: "concat_cols",
                    lhs: self.shape(parts[0]).to_vec(),
                    rhs: self.shape(p).to_vec(),
                });
            }
        }
        let total: usize = widths.iter().sum();
        let mut data = vec![0.0; m * total];
        let mut off = 0;
        for (&p, &w) in parts.iter().zip(&widths) {
            let pd = self.data(p);
            for i in 0..m {
                data[i * total + off..i * total + off + w].copy_from_slice(&pd[i * w..(i + 1) * w]);
            }
            off += w;
        }
        let needs = parts.iter().any(|&p| self.needs(p));
        let t = Tensor { shape: vec![m, total], data, requires_grad: false, grad: None };
        Ok(self.push(t, Op::ConcatCols(parts.to_vec()), needs))
    }

    // ── Backward ───────────────────────────────────────────────────────

    /// Reverse sweep from a scalar loss. Fills the grad buffers of every
    /// reachable `requires_grad` leaf; tracked leaves that do not participate
    /// get zero grads, frozen leaves get none.
    pub fn backward(&mut self, loss: TensorId) -> Result<()> {
        if !self.value(loss).is_scalar() {
            return Err(Error::contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        if !self.needs(loss) {
            return Err(Error::contract(
                "loss is not reachable from any tracked parameter",
            ));
        }
        self.nodes[loss.0].tensor.grad = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(grad) = std::mem::take(&mut self.nodes[i].tensor.grad) else {
                continue;
            };
            let op = self.nodes[i].op.clone();
            self.propagate(&op, i, &grad);
            self.nodes[i].tensor.grad = Some(grad);
        }

        // Tracked-but-unreached leaves still expose a zero gradient.
        for node in &mut self.nodes {
            if matches!(node.op, Op::Leaf) && node.tensor.requires_grad && node.tensor.grad.is_none()
            {
                node.tensor.grad = Some(vec![0.0; node.tensor.numel()]);
            }
        }
        Ok(())
    }

    fn acc(&mut self, id: TensorId, contrib: &[f64]) {
        if !self.needs(id) {
            return;
        }
        let node = &mut self.nodes[id.0];
        let numel = node.tensor.numel();
        let g = node.tensor.grad.get_or_insert_with(|| vec![0.0; numel]);
        debug_assert_eq!(g.len(), contrib.len());
        for (gv, cv) in g.iter_mut().zip(contrib) {
            *gv += cv;
        }
    }

    fn propagate(&mut self, op: &Op, out_idx: usize, dy: &[f64]) {
        match *op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.acc(a, dy);
                self.acc(b, dy);
            }
            Op::Mul(a, b) => {
                if self.needs(a) {
                    let da: Vec<f64> = dy.iter().zip(self.data(b)).map(|(g, v)| g * v).collect();
                    self.acc(a, &da);
                }
                if self.needs(b) {
                    let db: Vec<f64> = dy.iter().zip(self.data(a)).map(|(g, v)| g * v).collect();
                    self.acc(b, &db);
                }
            }
            Op::AddScalar(a) => self.acc(a, dy),
            Op::MulScalar(a, c) => {
                let da: Vec<f64> = dy.iter().map(|g| g * c).collect();
                self.acc(a, &da);
            }
            Op::Log(a) => {
                let da: Vec<f64> = dy.iter().zip(self.data(a)).map(|(g, v)| g / v).collect();
                self.acc(a, &da);
            }
            Op::Sum(a) => {
                let da = vec![dy[0]; self.nodes[a.0].tensor.numel()];
                self.acc(a, &da);
            }
            Op::MatMul(a, b) => {
                let (m, k) = (self.shape(a)[0], self.shape(a)[1]);
                let n = self.shape(b)[1];
                if self.needs(a) {
                    // dA = dC · Bᵀ
                    let da = matmul_nt_raw(dy, self.data(b), m, n, k);
                    self.acc(a, &da);
                }
                if self.needs(b) {
                    // dB = Aᵀ · dC
                    let db = matmul_tn_raw(self.data(a), dy, m, k, n);
                    self.acc(b, &db);
                }
            }
            Op::MatMulNT(a, b) => {
                let (m, k) = (self.shape(a)[0], self.shape(a)[1]);
                let n = self.shape(b)[0];
                if self.needs(a) {
                    // dA = dC · B
                    let da = matmul_raw(dy, self.data(b), m, n, k);
                    self.acc(a, &da);
                }
                if self.needs(b) {
                    // dB = dCᵀ · A
                    let db = matmul_tn_raw(dy, self.data(a), m, n, k);
                    self.acc(b, &db);
                }
            }
            Op::Softmax { x, axis } => {
                let y = &self.nodes[out_idx].tensor;
                let dx = softmax_backward(&y.data, dy, &y.shape, axis);
                self.acc(x, &dx);
            }
            Op::LayerNorm { x, gain, bias, eps } => {
                let shape = self.shape(x).to_vec();
                let n = *shape.last().unwrap();
                let rows = self.value(x).numel() / n;
                let xd = self.data(x).to_vec();
                let g = self.data(gain).to_vec();
                let mut dx = vec![0.0; xd.len()];
                let mut dgain = vec![0.0; n];
                let mut dbias = vec![0.0; n];
                for r in 0..rows {
                    let row = &xd[r * n..(r + 1) * n];
                    let dy_row = &dy[r * n..(r + 1) * n];
                    let mean = row.iter().sum::<f64>() / n as f64;
                    let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
                    let inv = 1.0 / (var + eps).sqrt();
                    let xhat: Vec<f64> = row.iter().map(|v| (v - mean) * inv).collect();
                    let dyh: Vec<f64> = dy_row.iter().zip(&g).map(|(d, gv)| d * gv).collect();
                    let mean_dyh = dyh.iter().sum::<f64>() / n as f64;
                    let mean_dyh_xhat =
                        dyh.iter().zip(&xhat).map(|(d, h)| d * h).sum::<f64>() / n as f64;
                    for j in 0..n {
                        dx[r * n + j] = inv * (dyh[j] - mean_dyh - xhat[j] * mean_dyh_xhat);
                        dgain[j] += dy_row[j] * xhat[j];
                        dbias[j] += dy_row[j];
                    }
                }
                self.acc(x, &dx);
                self.acc(gain, &dgain);
                self.acc(bias, &dbias);
            }
            Op::Gelu(a) => {
                let da: Vec<f64> = dy
                    .iter()
                    .zip(self.data(a))
                    .map(|(g, &v)| g * gelu_grad_scalar(v))
                    .collect();
                self.acc(a, &da);
            }
            Op::L2NormRows(x) => {
                let (m, n) = (self.shape(x)[0], self.shape(x)[1]);
                let xd = self.data(x).to_vec();
                let yd = self.nodes[out_idx].tensor.data.clone();
                let mut dx = vec![0.0; xd.len()];
                for i in 0..m {
                    let row = &xd[i * n..(i + 1) * n];
                    let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if norm == 0.0 {
                        continue; // degenerate rows carry no gradient
                    }
                    let y_row = &yd[i * n..(i + 1) * n];
                    let dy_row = &dy[i * n..(i + 1) * n];
                    let dot: f64 = y_row.iter().zip(dy_row).map(|(a, b)| a * b).sum();
                    for j in 0..n {
                        dx[i * n + j] = (dy_row[j] - y_row[j] * dot) / norm;
                    }
                }
                self.acc(x, &dx);
            }
            Op::TanhGate { x, alpha } => {
                let a = self.data(alpha)[0];
                let t = a.tanh();
                if self.needs(x) {
                    let dx: Vec<f64> = dy.iter().map(|g| g * t).collect();
                    self.acc(x, &dx);
                }
                if self.needs(alpha) {
                    let sech2 = 1.0 - t * t;
                    let dot: f64 = dy.iter().zip(self.data(x)).map(|(g, v)| g * v).sum();
                    self.acc(alpha, &[sech2 * dot]);
                }
            }
            Op::GatedResidual { base, update, alpha, omega, use_tanh } => {
                let a = self.data(alpha)[0];
                let pre = omega * a;
                let (gate, dgate_dalpha) = if use_tanh {
                    let t = pre.tanh();
                    (t, omega * (1.0 - t * t))
                } else {
                    (pre, omega)
                };
                self.acc(base, dy);
                if self.needs(update) {
                    let du: Vec<f64> = dy.iter().map(|g| g * gate).collect();
                    self.acc(update, &du);
                }
                if self.needs(alpha) {
                    let dot: f64 = dy.iter().zip(self.data(update)).map(|(g, v)| g * v).sum();
                    self.acc(alpha, &[dgate_dalpha * dot]);
                }
            }
            Op::SliceRows { x, start } => {
                let n = self.shape(x)[1];
                let mut dx = vec![0.0; self.value(x).numel()];
                dx[start * n..start * n + dy.len()].copy_from_slice(dy);
                self.acc(x, &dx);
            }
            Op::SliceCols { x, start, full_cols } => {
                let rows = self.shape(x)[0];
                let w = self.nodes[out_idx].tensor.shape[1];
                let mut dx = vec![0.0; self.value(x).numel()];
                for i in 0..rows {
                    dx[i * full_cols + start..i * full_cols + start + w]
                        .copy_from_slice(&dy[i * w..(i + 1) * w]);
                }
                self.acc(x, &dx);
            }
            Op::ConcatRows(ref parts) => {
                let mut off = 0;
                for &p in parts {
                    let len = self.value(p).numel();
                    if self.needs(p) {
                        let slice = dy[off..off + len].to_vec();
                        self.acc(p, &slice);
                    }
                    off += len;
                }
            }
            Op::ConcatCols(ref parts) => {
                let m = self.shape(parts[0])[0];
                let total = self.nodes[out_idx].tensor.shape[1];
                let mut off = 0;
                for &p in parts {
                    let w = self.shape(p)[1];
                    if self.needs(p) {
                        let mut dp = vec![0.0; m * w];
                        for i in 0..m {
                            dp[i * w..(i + 1) * w]
                                .copy_from_slice(&dy[i * total + off..i * total + off + w]);
                        }
                        self.acc(p, &dp);
                    }
                    off += w;
                }
            }
            Op::AddRowBroadcast { x, bias } => {
                self.acc(x, dy);
                if self.needs(bias) {
                    let (m, n) = (self.shape(x)[0], self.shape(x)[1]);
                    let mut db = vec![0.0; n];
                    for i in 0..m {
                        for j in 0..n {
                            db[j] += dy[i * n + j];
                        }
                    }
                    self.acc(bias, &db);
                }
            }
            Op::MeanRows(x) => {
                let (m, n) = (self.shape(x)[0], self.shape(x)[1]);
                let mut dx = vec![0.0; m * n];
                for i in 0..m {
                    for j in 0..n {
                        dx[i * n + j] = dy[j] / m as f64;
                    }
                }
                self.acc(x, &dx);
            }
        }
    }

    // ── Internal checks ────────────────────────────────────────────────

    fn dims2(&self, op: &'static str, id: TensorId) -> Result<(usize, usize)> {
        let s = self.shape(id);
        match s.len() {
            2 => Ok((s[0], s[1])),
            _ => Err(Error::contract(format!("{op} expects a 2-D tensor, got {s:?}"))),
        }
    }

    fn check_same_shape(&self, op: &'static str, a: TensorId, b: TensorId) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::ShapeMismatch {
                op,
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        Ok(())
    }
}

// ── Scalar math ────────────────────────────────────────────────────────

const GELU_C: f64 = 0.7978845608028654; // sqrt(2/pi)
const GELU_A: f64 = 0.044715;

fn gelu_scalar(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad_scalar(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_A * x * x * x);
    let t = u.tanh();
    let sech2 = 1.0 - t * t;
    0.5 * (1.0 + t) + 0.5 * x * sech2 * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

fn softmax_forward(x: &[f64], shape: &[usize], axis: usize) -> Vec<f64> {
    let len = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let mut out = vec![0.0; x.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |j: usize| (o * len + j) * inner + i;
            let mut max = f64::NEG_INFINITY;
            for j in 0..len {
                max = max.max(x[at(j)]);
            }
            let mut z = 0.0;
            for j in 0..len {
                let e = (x[at(j)] - max).exp();
                out[at(j)] = e;
                z += e;
            }
            for j in 0..len {
                out[at(j)] /= z;
            }
        }
    }
    out
}

fn softmax_backward(y: &[f64], dy: &[f64], shape: &[usize], axis: usize) -> Vec<f64> {
    let len = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let mut dx = vec![0.0; y.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |j: usize| (o * len + j) * inner + i;
            let mut dot = 0.0;
            for j in 0..len {
                dot += dy[at(j)] * y[at(j)];
            }
            for j in 0..len {
                dx[at(j)] = y[at(j)] * (dy[at(j)] - dot);
            }
        }
    }
    dx
}
