//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! Nodes are appended in evaluation order, so the node vector is already a
//! topological order. Every non-leaf value is a pure function of its inputs;
//! [`Graph::replay`] recomputes them to check that property.

use std::collections::BTreeMap;

use super::tensor::{
    gelu_grad_scalar, gelu_scalar, gemm, gemm_strided, layer_norm_saved, row_nll,
    softmax_in_place, Tensor, LAYER_NORM_EPS,
};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    /// `a · b`
    MatMul(NodeId, NodeId),
    /// `a · bᵀ`
    MatMulT(NodeId, NodeId),
    Add(NodeId, NodeId),
    Gather { table: NodeId, ids: Vec<usize> },
    /// Places `prefix` rows in front of each of `batch` equal blocks of `body`.
    PrependRows { prefix: NodeId, body: NodeId, batch: usize },
    /// Inverse of `PrependRows` for the forward value: drops `prefix` rows per block.
    DropPrefixRows { x: NodeId, batch: usize, prefix: usize },
    LayerNorm { x: NodeId, gain: NodeId, bias: NodeId },
    Gelu(NodeId),
    CausalAttention { q: NodeId, k: NodeId, v: NodeId, batch: usize, heads: usize },
    CrossEntropy { logits: NodeId, targets: Vec<Option<usize>> },
    Sum(NodeId),
}

#[derive(Clone, Debug)]
enum Saved {
    None,
    Norm { mean: Vec<f32>, rstd: Vec<f32> },
    Probs(Vec<f32>),
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: Tensor,
    saved: Saved,
}

/// Gradients keyed by leaf id.
pub type Gradients = BTreeMap<NodeId, Tensor>;

#[derive(Default, Clone, Debug)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Graph {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn is_leaf(&self, id: NodeId) -> bool {
        matches!(self.nodes[id.0].op, Op::Leaf)
    }

    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.nodes.push(Node { op: Op::Leaf, value, saved: Saved::None });
        NodeId(self.nodes.len() - 1)
    }

    fn push(&mut self, op: Op) -> Result<NodeId> {
        let (value, saved) = self.compute(&op)?;
        self.nodes.push(Node { op, value, saved });
        Ok(NodeId(self.nodes.len() - 1))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::MatMul(a, b))
    }

    pub fn matmul_t(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::MatMulT(a, b))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Add(a, b))
    }

    pub fn gather(&mut self, table: NodeId, ids: Vec<usize>) -> Result<NodeId> {
        self.push(Op::Gather { table, ids })
    }

    pub fn prepend_rows(&mut self, prefix: NodeId, body: NodeId, batch: usize) -> Result<NodeId> {
        self.push(Op::PrependRows { prefix, body, batch })
    }

    pub fn drop_prefix_rows(&mut self, x: NodeId, batch: usize, prefix: usize) -> Result<NodeId> {
        self.push(Op::DropPrefixRows { x, batch, prefix })
    }

    pub fn layer_norm(&mut self, x: NodeId, gain: NodeId, bias: NodeId) -> Result<NodeId> {
        self.push(Op::LayerNorm { x, gain, bias })
    }

    pub fn gelu(&mut self, x: NodeId) -> Result<NodeId> {
        self.push(Op::Gelu(x))
    }

    /// Multi-head causal self-attention over `batch` independent sequences
    /// stacked row-wise in `q`, `k`, `v`.
    pub fn causal_attention(
        &mut self,
        q: NodeId,
        k: NodeId,
        v: NodeId,
        batch: usize,
        heads: usize,
    ) -> Result<NodeId> {
        self.push(Op::CausalAttention { q, k, v, batch, heads })
    }

    /// Mean cross-entropy over the rows that carry a target.
    pub fn cross_entropy(&mut self, logits: NodeId, targets: Vec<Option<usize>>) -> Result<NodeId> {
        self.push(Op::CrossEntropy { logits, targets })
    }

    pub fn sum(&mut self, x: NodeId) -> Result<NodeId> {
        self.push(Op::Sum(x))
    }

    fn compute(&self, op: &Op) -> Result<(Tensor, Saved)> {
        let v = |id: NodeId| &self.nodes[id.0].value;
        let plain = |t: Tensor| Ok((t, Saved::None));
        match op {
            Op::Leaf => Err(Error::Contract("leaves carry no computation".into())),
            Op::MatMul(a, b) => plain(v(*a).matmul(v(*b))?),
            Op::MatMulT(a, b) => plain(v(*a).matmul_t(v(*b))?),
            Op::Add(a, b) => plain(v(*a).add(v(*b))?),
            Op::Gather { table, ids } => {
                let t = v(*table);
                let (rows, d) = t.dims2()?;
                let mut out = Vec::with_capacity(ids.len() * d);
                for &i in ids {
                    if i >= rows {
                        return Err(Error::Index(format!("gather row {i} of {rows}")));
                    }
                    out.extend_from_slice(t.row(i));
                }
                plain(Tensor::new(vec![ids.len(), d], out)?)
            }
            Op::PrependRows { prefix, body, batch } => {
                let (p, b) = (v(*prefix), v(*body));
                let d = b.cols();
                if *batch == 0 || b.rows() % batch != 0 {
                    return Err(Error::Shape("body rows not divisible by batch".into()));
                }
                let k = if p.numel() == 0 { 0 } else { p.rows() };
                if k > 0 && p.cols() != d {
                    return Err(Error::Shape(format!("prefix width {} vs {d}", p.cols())));
                }
                let n = b.rows() / batch;
                let mut out = Vec::with_capacity(batch * (k + n) * d);
                for s in 0..*batch {
                    out.extend_from_slice(&p.data()[..k * d]);
                    out.extend_from_slice(&b.data()[s * n * d..(s + 1) * n * d]);
                }
                plain(Tensor::new(vec![batch * (k + n), d], out)?)
            }
            Op::DropPrefixRows { x, batch, prefix } => {
                let t = v(*x);
                let d = t.cols();
                if *batch == 0 || t.rows() % batch != 0 || t.rows() / batch < *prefix {
                    return Err(Error::Shape("cannot drop prefix rows".into()));
                }
                let len = t.rows() / batch;
                let n = len - prefix;
                let mut out = Vec::with_capacity(batch * n * d);
                for s in 0..*batch {
                    let start = (s * len + prefix) * d;
                    out.extend_from_slice(&t.data()[start..start + n * d]);
                }
                plain(Tensor::new(vec![batch * n, d], out)?)
            }
            Op::LayerNorm { x, gain, bias } => {
                let (xv, g, b) = (v(*x), v(*gain), v(*bias));
                if g.numel() != xv.cols() || b.numel() != xv.cols() {
                    return Err(Error::Shape("layer_norm gain/bias width".into()));
                }
                let (out, mean, rstd) = layer_norm_saved(xv, g, b, LAYER_NORM_EPS);
                Ok((out, Saved::Norm { mean, rstd }))
            }
            Op::Gelu(x) => {
                let t = v(*x);
                let data = t.data().iter().map(|&x| gelu_scalar(x)).collect();
                plain(Tensor::new(t.shape().to_vec(), data)?)
            }
            Op::CausalAttention { q, k, v: vv, batch, heads } => {
                attention_forward(v(*q), v(*k), v(*vv), *batch, *heads)
                    .map(|(out, probs)| (out, Saved::Probs(probs)))
            }
            Op::CrossEntropy { logits, targets } => {
                let l = v(*logits);
                let (n, vocab) = l.dims2()?;
                if targets.len() != n {
                    return Err(Error::Shape(format!("{n} rows but {} targets", targets.len())));
                }
                let mut total = 0.0f64;
                let mut count = 0usize;
                let mut probs = l.data().to_vec();
                for (r, t) in targets.iter().enumerate() {
                    softmax_in_place(&mut probs[r * vocab..(r + 1) * vocab]);
                    if let Some(t) = *t {
                        if t >= vocab {
                            return Err(Error::Index(format!("target {t} outside vocabulary")));
                        }
                        total += row_nll(l.row(r), t);
                        count += 1;
                    }
                }
                if count == 0 {
                    return Err(Error::Contract("cross_entropy with no targets".into()));
                }
                Ok((Tensor::scalar((total / count as f64) as f32), Saved::Probs(probs)))
            }
            Op::Sum(x) => plain(Tensor::scalar(v(*x).sum() as f32)),
        }
    }

    /// Recomputes every non-leaf node from its inputs and reports whether each
    /// recomputed value equals the stored one bitwise.
    pub fn replay(&self) -> Result<bool> {
        for node in &self.nodes {
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let (value, _) = self.compute(&node.op)?;
            let same = value.shape() == node.value.shape()
                && value.data().iter().zip(node.value.data()).all(|(a, b)| a.to_bits() == b.to_bits());
            if !same {
                return Ok(false);
            }
        }
        Ok(true)
    }

    fn inputs(op: &Op) -> Vec<NodeId> {
        match op {
            Op::Leaf => vec![],
            Op::MatMul(a, b) | Op::MatMulT(a, b) | Op::Add(a, b) => vec![*a, *b],
            Op::Gather { table, .. } => vec![*table],
            Op::PrependRows { prefix, body, .. } => vec![*prefix, *body],
            Op::DropPrefixRows { x, .. } | Op::Gelu(x) | Op::Sum(x) => vec![*x],
            Op::LayerNorm { x, gain, bias } => vec![*x, *gain, *bias],
            Op::CausalAttention { q, k, v, .. } => vec![*q, *k, *v],
            Op::CrossEntropy { logits, .. } => vec![*logits],
        }
    }

    /// Gradients of the scalar `root` with respect to each leaf in `wanted`.
    /// Subgraphs that do not reach a wanted leaf are skipped entirely.
    pub fn backward(&self, root: NodeId, wanted: &[NodeId]) -> Result<Gradients> {
        if self.nodes[root.0].value.numel() != 1 {
            return Err(Error::Contract(format!(
                "backward root must be scalar, got shape {:?}",
                self.nodes[root.0].value.shape()
            )));
        }
        let mut needs = vec![false; self.nodes.len()];
        for &w in wanted {
            if w.0 >= self.nodes.len() || !self.is_leaf(w) {
                return Err(Error::Contract(format!("node {} is not a leaf of this graph", w.0)));
            }
            needs[w.0] = true;
        }
        for i in 0..=root.0 {
            if !needs[i] {
                needs[i] = Self::inputs(&self.nodes[i].op).iter().any(|x| needs[x.0]);
            }
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; root.0 + 1];
        grads[root.0] = Some(Tensor::full(self.nodes[root.0].value.shape(), 1.0));
        for i in (0..=root.0).rev() {
            if !needs[i] {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            if matches!(self.nodes[i].op, Op::Leaf) {
                grads[i] = Some(g);
                continue;
            }
            self.backprop_node(i, &g, &needs, &mut grads)?;
        }
        let mut out = Gradients::new();
        for &w in wanted {
            let g = grads
                .get_mut(w.0)
                .and_then(Option::take)
                .unwrap_or_else(|| Tensor::zeros(self.nodes[w.0].value.shape()));
            out.insert(w, g);
        }
        Ok(out)
    }

    fn backprop_node(
        &self,
        i: usize,
        g: &Tensor,
        needs: &[bool],
        grads: &mut [Option<Tensor>],
    ) -> Result<()> {
        let node = &self.nodes[i];
        let val = |id: NodeId| &self.nodes[id.0].value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let (m, p) = av.dims2()?;
                let n = bv.cols();
                if needs[a.0] {
                    let buf = grad_buf(grads, *a, av.shape());
                    gemm(m, n, p, g.data(), n as isize, 1, bv.data(), 1, n as isize, buf, true);
                }
                if needs[b.0] {
                    let buf = grad_buf(grads, *b, bv.shape());
                    gemm(p, m, n, av.data(), 1, p as isize, g.data(), n as isize, 1, buf, true);
                }
            }
            Op::MatMulT(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let (m, p) = av.dims2()?;
                let n = bv.rows();
                if needs[a.0] {
                    let buf = grad_buf(grads, *a, av.shape());
                    gemm(m, n, p, g.data(), n as isize, 1, bv.data(), p as isize, 1, buf, true);
                }
                if needs[b.0] {
                    let buf = grad_buf(grads, *b, bv.shape());
                    gemm(n, m, p, g.data(), 1, n as isize, av.data(), p as isize, 1, buf, true);
                }
            }
            Op::Add(a, b) => {
                for x in [a, b] {
                    if needs[x.0] {
                        let buf = grad_buf(grads, *x, g.shape());
                        for (o, d) in buf.iter_mut().zip(g.data()) {
                            *o += d;
                        }
                    }
                }
            }
            Op::Gather { table, ids } => {
                if needs[table.0] {
                    let shape = val(*table).shape().to_vec();
                    let d = shape[1];
                    let buf = grad_buf(grads, *table, &shape);
                    for (r, &id) in ids.iter().enumerate() {
                        let src = &g.data()[r * d..(r + 1) * d];
                        for (o, s) in buf[id * d..(id + 1) * d].iter_mut().zip(src) {
                            *o += s;
                        }
                    }
                }
            }
            Op::PrependRows { prefix, body, batch } => {
                let (p, b) = (val(*prefix), val(*body));
                let d = b.cols();
                let k = if p.numel() == 0 { 0 } else { p.rows() };
                let n = b.rows() / batch;
                if needs[prefix.0] && k > 0 {
                    let buf = grad_buf(grads, *prefix, p.shape());
                    for s in 0..*batch {
                        let src = &g.data()[s * (k + n) * d..(s * (k + n) + k) * d];
                        for (o, x) in buf.iter_mut().zip(src) {
                            *o += x;
                        }
                    }
                }
                if needs[body.0] {
                    let buf = grad_buf(grads, *body, b.shape());
                    for s in 0..*batch {
                        let src = &g.data()[(s * (k + n) + k) * d..(s + 1) * (k + n) * d];
                        for (o, x) in buf[s * n * d..(s + 1) * n * d].iter_mut().zip(src) {
                            *o += x;
                        }
                    }
                }
            }
            Op::DropPrefixRows { x, batch, prefix } => {
                if needs[x.0] {
                    let xv = val(*x);
                    let d = xv.cols();
                    let len = xv.rows() / batch;
                    let n = len - prefix;
                    let buf = grad_buf(grads, *x, xv.shape());
                    for s in 0..*batch {
                        let dst = &mut buf[(s * len + prefix) * d..(s + 1) * len * d];
                        for (o, v) in dst.iter_mut().zip(&g.data()[s * n * d..(s + 1) * n * d]) {
                            *o += v;
                        }
                    }
                }
            }
            Op::LayerNorm { x, gain, bias } => {
                let Saved::Norm { mean, rstd } = &node.saved else {
                    return Err(Error::Contract("layer_norm lost its statistics".into()));
                };
                let (xv, gv) = (val(*x), val(*gain));
                let d = xv.cols();
                let rows = xv.rows();
                let mut dgain = vec![0.0f32; d];
                let mut dbias = vec![0.0f32; d];
                let mut dx = if needs[x.0] { vec![0.0f32; xv.numel()] } else { Vec::new() };
                let mut xhat = vec![0.0f32; d];
                let mut dxhat = vec![0.0f32; d];
                for r in 0..rows {
                    let xr = &xv.data()[r * d..(r + 1) * d];
                    let gr = &g.data()[r * d..(r + 1) * d];
                    let (mu, rs) = (mean[r], rstd[r]);
                    let mut sum_dxhat = 0.0f32;
                    let mut sum_dxhat_xhat = 0.0f32;
                    for j in 0..d {
                        xhat[j] = (xr[j] - mu) * rs;
                        dgain[j] += gr[j] * xhat[j];
                        dbias[j] += gr[j];
                        dxhat[j] = gr[j] * gv.data()[j];
                        sum_dxhat += dxhat[j];
                        sum_dxhat_xhat += dxhat[j] * xhat[j];
                    }
                    if !dx.is_empty() {
                        let inv_d = 1.0 / d as f32;
                        for j in 0..d {
                            dx[r * d + j] = rs
                                * (dxhat[j] - sum_dxhat * inv_d - xhat[j] * sum_dxhat_xhat * inv_d);
                        }
                    }
                }
                if needs[x.0] {
                    add_into(grad_buf(grads, *x, xv.shape()), &dx);
                }
                if needs[gain.0] {
                    add_into(grad_buf(grads, *gain, gv.shape()), &dgain);
                }
                if needs[bias.0] {
                    let shape = val(*bias).shape().to_vec();
                    add_into(grad_buf(grads, *bias, &shape), &dbias);
                }
            }
            Op::Gelu(x) => {
                if needs[x.0] {
                    let xv = val(*x);
                    let buf = grad_buf(grads, *x, xv.shape());
                    for ((o, &xi), &gi) in buf.iter_mut().zip(xv.data()).zip(g.data()) {
                        *o += gi * gelu_grad_scalar(xi);
                    }
                }
            }
            Op::CausalAttention { q, k, v, batch, heads } => {
                let Saved::Probs(probs) = &node.saved else {
                    return Err(Error::Contract("attention lost its probabilities".into()));
                };
                let grads_qkv = attention_backward(
                    val(*q),
                    val(*k),
                    val(*v),
                    probs,
                    g,
                    *batch,
                    *heads,
                    [needs[q.0], needs[k.0], needs[v.0]],
                );
                for (id, gr) in [q, k, v].into_iter().zip(grads_qkv) {
                    if let Some(gr) = gr {
                        let shape = val(*id).shape().to_vec();
                        add_into(grad_buf(grads, *id, &shape), &gr);
                    }
                }
            }
            Op::CrossEntropy { logits, targets } => {
                if needs[logits.0] {
                    let Saved::Probs(probs) = &node.saved else {
                        return Err(Error::Contract("cross_entropy lost its softmax".into()));
                    };
                    let lv = val(*logits);
                    let vocab = lv.cols();
                    let count = targets.iter().filter(|t| t.is_some()).count();
                    let scale = g.data()[0] / count as f32;
                    let buf = grad_buf(grads, *logits, lv.shape());
                    for (r, t) in targets.iter().enumerate() {
                        let Some(t) = *t else { continue };
                        let row = &mut buf[r * vocab..(r + 1) * vocab];
                        for (o, p) in row.iter_mut().zip(&probs[r * vocab..(r + 1) * vocab]) {
                            *o += scale * p;
                        }
                        row[t] -= scale;
                    }
                }
            }
            Op::Sum(x) => {
                if needs[x.0] {
                    let shape = val(*x).shape().to_vec();
                    let s = g.data()[0];
                    for o in grad_buf(grads, *x, &shape).iter_mut() {
                        *o += s;
                    }
                }
            }
        }
        Ok(())
    }
}

fn grad_buf<'a>(grads: &'a mut [Option<Tensor>], id: NodeId, shape: &[usize]) -> &'a mut [f32] {
    grads[id.0].get_or_insert_with(|| Tensor::zeros(shape)).data_mut()
}

fn add_into(dst: &mut [f32], src: &[f32]) {
    for (o, s) in dst.iter_mut().zip(src) {
        *o += s;
    }
}

fn attention_dims(q: &Tensor, batch: usize, heads: usize) -> Result<(usize, usize, usize)> {
    let (rows, d) = q.dims2()?;
    if batch == 0 || rows % batch != 0 {
        return Err(Error::Shape(format!("{rows} rows do not split into {batch} sequences")));
    }
    if heads == 0 || d % heads != 0 {
        return Err(Error::Shape(format!("width {d} not divisible into {heads} heads")));
    }
    Ok((rows / batch, d, d / heads))
}

fn attention_forward(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    batch: usize,
    heads: usize,
) -> Result<(Tensor, Vec<f32>)> {
    let (len, d, dh) = attention_dims(q, batch, heads)?;
    if k.shape() != q.shape() || v.shape() != q.shape() {
        return Err(Error::Shape("q, k, v shapes differ".into()));
    }
    let scale = 1.0 / (dh as f32).sqrt();
    let mut probs = vec![0.0f32; batch * heads * len * len];
    let mut out = vec![0.0f32; batch * len * d];
    let ds = d as isize;
    for b in 0..batch {
        for h in 0..heads {
            let off = b * len * d + h * dh;
            let p = &mut probs[(b * heads + h) * len * len..(b * heads + h + 1) * len * len];
            gemm(len, dh, len, &q.data()[off..], ds, 1, &k.data()[off..], 1, ds, p, false);
            for i in 0..len {
                let row = &mut p[i * len..(i + 1) * len];
                for x in row[..=i].iter_mut() {
                    *x *= scale;
                }
                softmax_in_place(&mut row[..=i]);
                for x in row[i + 1..].iter_mut() {
                    *x = 0.0;
                }
            }
            gemm_strided(
                len,
                len,
                dh,
                p,
                len as isize,
                1,
                &v.data()[off..],
                ds,
                1,
                &mut out[off..],
                ds,
                1,
                false,
            );
        }
    }
    Ok((Tensor::new(q.shape().to_vec(), out)?, probs))
}

#[allow(clippy::too_many_arguments)]
fn attention_backward(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    probs: &[f32],
    dout: &Tensor,
    batch: usize,
    heads: usize,
    need: [bool; 3],
) -> [Option<Vec<f32>>; 3] {
    let len = q.rows() / batch;
    let d = q.cols();
    let dh = d / heads;
    let scale = 1.0 / (dh as f32).sqrt();
    let ds = d as isize;
    let ls = len as isize;
    let mut dq = vec![0.0f32; q.numel()];
    let mut dk = vec![0.0f32; q.numel()];
    let mut dv = vec![0.0f32; q.numel()];
    let mut dp = vec![0.0f32; len * len];
    for b in 0..batch {
        for h in 0..heads {
            let off = b * len * d + h * dh;
            let p = &probs[(b * heads + h) * len * len..(b * heads + h + 1) * len * len];
            let go = &dout.data()[off..];
            if need[2] {
                // dV = Pᵀ · dO
                gemm_strided(len, len, dh, p, 1, ls, go, ds, 1, &mut dv[off..], ds, 1, true);
            }
            if !(need[0] || need[1]) {
                continue;
            }
            // dP = dO · Vᵀ
            gemm(len, dh, len, go, ds, 1, &v.data()[off..], 1, ds, &mut dp, false);
            for i in 0..len {
                let pr = &p[i * len..(i + 1) * len];
                let dr = &mut dp[i * len..(i + 1) * len];
                let dot: f32 = pr[..=i].iter().zip(&dr[..=i]).map(|(a, b)| a * b).sum();
                for j in 0..=i {
                    dr[j] = pr[j] * (dr[j] - dot) * scale;
                }
                for x in dr[i + 1..].iter_mut() {
                    *x = 0.0;
                }
            }
            if need[0] {
                gemm_strided(
                    len,
                    len,
                    dh,
                    &dp,
                    ls,
                    1,
                    &k.data()[off..],
                    ds,
                    1,
                    &mut dq[off..],
                    ds,
                    1,
                    true,
                );
            }
            if need[1] {
                gemm_strided(
                    len,
                    len,
                    dh,
                    &dp,
                    1,
                    ls,
                    &q.data()[off..],
                    ds,
                    1,
                    &mut dk[off..],
                    ds,
                    1,
                    true,
                );
            }
        }
    }
    let pick = |flag: bool, buf: Vec<f32>| flag.then_some(buf);
    [pick(need[0], dq), pick(need[1], dk), pick(need[2], dv)]
}
