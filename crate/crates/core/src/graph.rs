//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Graph`] records every op applied during a forward pass together with
//! the activations its backward rule needs. Nodes are appended in evaluation
//! order, so walking the tape backwards from the loss is a valid reverse
//! topological order and visits each node once.

use std::collections::HashMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::params::{ParamId, ParameterStore};
use crate::tensor::{matmul_at_into, matmul_bt_into, matmul_into, softmax_in_place, Tensor};

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Debug)]
enum Op {
    Input,
    Param,
    MatMul(Var, Var),
    MatMulBt(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    SoftmaxRows(Var),
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Vec<f64>, rstd: Vec<f64> },
    Gelu(Var),
    Dropout { x: Var, mask: Vec<f64> },
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    SliceRows { x: Var, start: usize },
    SliceCols { x: Var, start: usize },
    MeanRows(Var),
    Sum(Var),
    GatherRows { table: Var, ids: Vec<usize> },
    CrossEntropy { logits: Var, targets: Vec<Option<usize>>, probs: Vec<f64>, scale: f64, floor: f64 },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
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

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data()[0]
    }

    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Input)
    }

    /// Leaf bound to a stored parameter. Repeated lookups of the same name
    /// return the same node so gradients accumulate once per use site.
    pub fn param(&mut self, store: &ParameterStore, name: &str) -> Result<Var> {
        let id = store.id(name)?;
        if let Some(&v) = self.params.get(&id) {
            return Ok(v);
        }
        let v = self.push(store.entry(id).value.clone(), Op::Param);
        self.params.insert(id, v);
        Ok(v)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (m, p, n) = (ta.rows(), ta.cols(), tb.cols());
        if tb.rows() != p {
            return Err(Error::shape(format!("matmul {:?} x {:?}", ta.shape(), tb.shape())));
        }
        let mut out = vec![0.0; m * n];
        matmul_into(ta.data(), tb.data(), &mut out, m, p, n);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::MatMul(a, b)))
    }

    /// `a · bᵀ`
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (m, p, n) = (ta.rows(), ta.cols(), tb.rows());
        if tb.cols() != p {
            return Err(Error::shape(format!("matmul_bt {:?} x {:?}ᵀ", ta.shape(), tb.shape())));
        }
        let mut out = vec![0.0; m * n];
        matmul_bt_into(ta.data(), tb.data(), &mut out, m, p, n);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::MatMulBt(a, b)))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let t = self.value(a).transpose();
        self.push(t, Op::Transpose(a))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rows() != tb.rows() || ta.cols() != tb.cols() {
            return Err(Error::shape(format!("add {:?} + {:?}", ta.shape(), tb.shape())));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
        let t = Tensor::matrix(ta.rows(), ta.cols(), data)?;
        Ok(self.push(t, Op::Add(a, b)))
    }

    /// Broadcast a length-`n` vector over every row of an `m×n` matrix.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(bias));
        let n = tx.cols();
        if tb.len() != n {
            return Err(Error::shape(format!("add_row {:?} + {:?}", tx.shape(), tb.shape())));
        }
        let mut data = tx.data().to_vec();
        for row in data.chunks_mut(n) {
            for (v, b) in row.iter_mut().zip(tb.data()) {
                *v += b;
            }
        }
        let t = Tensor::matrix(tx.rows(), n, data)?;
        Ok(self.push(t, Op::AddRow(x, bias)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rows() != tb.rows() || ta.cols() != tb.cols() {
            return Err(Error::shape(format!("mul {:?} * {:?}", ta.shape(), tb.shape())));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
        let t = Tensor::matrix(ta.rows(), ta.cols(), data)?;
        Ok(self.push(t, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let t = self.value(a).scale(s);
        self.push(t, Op::Scale(a, s))
    }

    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let t = self.value(x).softmax_rows();
        self.push(t, Op::SoftmaxRows(x))
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let (tx, tg, tb) = (self.value(x), self.value(gain), self.value(bias));
        let (m, n) = (tx.rows(), tx.cols());
        if n < 2 {
            return Err(Error::DegenerateRow);
        }
        if tg.len() != n || tb.len() != n {
            return Err(Error::shape(format!(
                "layer_norm width {n} with gain {:?} bias {:?}",
                tg.shape(),
                tb.shape()
            )));
        }
        let mut xhat = vec![0.0; m * n];
        let mut rstd = vec![0.0; m];
        let mut out = vec![0.0; m * n];
        for r in 0..m {
            let row = tx.row(r);
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            let rs = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            rstd[r] = rs;
            for c in 0..n {
                let h = (row[c] - mean) * rs;
                xhat[r * n + c] = h;
                out[r * n + c] = h * tg.data()[c] + tb.data()[c];
            }
        }
        let t = Tensor::matrix(m, n, out)?;
        Ok(self.push(t, Op::LayerNorm { x, gain, bias, xhat, rstd }))
    }

    /// Exact GELU, `x·Φ(x)` with the error function.
    pub fn gelu(&mut self, x: Var) -> Var {
        let t = self.value(x).map(gelu_scalar);
        self.push(t, Op::Gelu(x))
    }

    /// Inverted dropout. Identity in [`Mode::Infer`] or at rate zero.
    pub fn dropout<R: Rng>(&mut self, x: Var, rate: f64, mode: Mode, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidRate(rate));
        }
        if mode == Mode::Infer || rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - rate);
        let tx = self.value(x);
        let mask: Vec<f64> =
            (0..tx.len()).map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep }).collect();
        let data = tx.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let t = Tensor::matrix(tx.rows(), tx.cols(), data)?;
        Ok(self.push(t, Op::Dropout { x, mask }))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let tensors: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let t = Tensor::concat_rows(&tensors)?;
        Ok(self.push(t, Op::ConcatRows(parts.to_vec())))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or_else(|| Error::shape("concat of nothing"))?;
        let m = self.value(*first).rows();
        if parts.iter().any(|&p| self.value(p).rows() != m) {
            return Err(Error::shape("concat_cols with unequal row counts"));
        }
        let n: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut data = Vec::with_capacity(m * n);
        for r in 0..m {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let t = Tensor::matrix(m, n, data)?;
        Ok(self.push(t, Op::ConcatCols(parts.to_vec())))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(x).slice_rows(start, len)?;
        Ok(self.push(t, Op::SliceRows { x, start }))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let tx = self.value(x);
        let (m, n) = (tx.rows(), tx.cols());
        if len == 0 || start + len > n {
            return Err(Error::shape(format!("column slice {start}..{} of {n}", start + len)));
        }
        let mut data = Vec::with_capacity(m * len);
        for r in 0..m {
            data.extend_from_slice(&tx.row(r)[start..start + len]);
        }
        let t = Tensor::matrix(m, len, data)?;
        Ok(self.push(t, Op::SliceCols { x, start }))
    }

    pub fn mean_rows(&mut self, x: Var) -> Var {
        let tx = self.value(x);
        let (m, n) = (tx.rows(), tx.cols());
        let mut out = vec![0.0; n];
        for r in 0..m {
            for (o, v) in out.iter_mut().zip(tx.row(r)) {
                *o += v;
            }
        }
        out.iter_mut().for_each(|o| *o /= m as f64);
        let t = Tensor::matrix(1, n, out).expect("n >= 1");
        self.push(t, Op::MeanRows(x))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        self.push(Tensor::scalar(s), Op::Sum(x))
    }

    /// Row lookup into an embedding table.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let tt = self.value(table);
        let n = tt.cols();
        if ids.is_empty() {
            return Err(Error::EmptyInput);
        }
        let mut data = Vec::with_capacity(ids.len() * n);
        for &i in ids {
            if i >= tt.rows() {
                return Err(Error::shape(format!("row {i} of {}-row table", tt.rows())));
            }
            data.extend_from_slice(tt.row(i));
        }
        let t = Tensor::matrix(ids.len(), n, data)?;
        Ok(self.push(t, Op::GatherRows { table, ids: ids.to_vec() }))
    }

    /// `scale · Σ_r −log(max(softmax(logits_r)[target_r], floor))` over rows
    /// with a target; rows with `None` contribute nothing.
    pub fn cross_entropy(
        &mut self,
        logits: Var,
        targets: &[Option<usize>],
        scale: f64,
        floor: f64,
    ) -> Result<Var> {
        let tl = self.value(logits);
        let (m, n) = (tl.rows(), tl.cols());
        if targets.len() != m {
            return Err(Error::shape(format!("{} targets for {m} rows", targets.len())));
        }
        let mut probs = tl.data().to_vec();
        let mut loss = 0.0;
        for (r, row) in probs.chunks_mut(n).enumerate() {
            softmax_in_place(row);
            if let Some(t) = targets[r] {
                if t >= n {
                    return Err(Error::LabelOutOfRange { label: t, classes: n });
                }
                loss -= row[t].max(floor).ln();
            }
        }
        let t = Tensor::scalar(loss * scale);
        Ok(self.push(
            t,
            Op::CrossEntropy { logits, targets: targets.to_vec(), probs, scale, floor },
        ))
    }

    /// Reverse sweep from a scalar `loss`. Returns the adjoint of every node.
    pub fn gradients(&self, loss: Var) -> Result<Vec<Option<Tensor>>> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(lv.shape(), 1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.backprop_node(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(grads)
    }

    /// Accumulate `∂loss/∂θ` into the gradient slot of every trainable
    /// parameter that took part in the forward pass.
    pub fn backward(&self, loss: Var, store: &mut ParameterStore) -> Result<()> {
        let grads = self.gradients(loss)?;
        for (&id, &v) in &self.params {
            let entry = store.entry_mut(id);
            if !entry.trainable {
                continue;
            }
            if let Some(g) = &grads[v.0] {
                for (a, b) in entry.grad.data_mut().iter_mut().zip(g.data()) {
                    *a += b;
                }
            }
        }
        Ok(())
    }

    fn backprop_node(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[idx];
        let gd = g.data();
        match &node.op {
            Op::Input | Op::Param => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, p, n) = (ta.rows(), ta.cols(), tb.cols());
                let ga = acc(grads, *a, ta);
                matmul_bt_into(gd, tb.data(), ga, m, n, p);
                let gb = acc(grads, *b, tb);
                matmul_at_into(ta.data(), gd, gb, m, p, n);
            }
            Op::MatMulBt(a, b) => {
                // out = a·bᵀ ; da = g·b ; db = gᵀ·a
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, p, n) = (ta.rows(), ta.cols(), tb.rows());
                let ga = acc(grads, *a, ta);
                matmul_into(gd, tb.data(), ga, m, n, p);
                let gb = acc(grads, *b, tb);
                matmul_at_into(gd, ta.data(), gb, m, n, p);
            }
            Op::Transpose(a) => {
                let ta = self.value(*a);
                let (m, n) = (ta.rows(), ta.cols());
                let ga = acc(grads, *a, ta);
                for i in 0..m {
                    for j in 0..n {
                        ga[i * n + j] += gd[j * m + i];
                    }
                }
            }
            Op::Add(a, b) => {
                add_into(acc(grads, *a, self.value(*a)), gd);
                add_into(acc(grads, *b, self.value(*b)), gd);
            }
            Op::AddRow(x, b) => {
                add_into(acc(grads, *x, self.value(*x)), gd);
                let tb = self.value(*b);
                let n = tb.len();
                let gb = acc(grads, *b, tb);
                for row in gd.chunks(n) {
                    add_into(gb, row);
                }
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let ga = acc(grads, *a, ta);
                for ((o, gv), bv) in ga.iter_mut().zip(gd).zip(tb.data()) {
                    *o += gv * bv;
                }
                let gb = acc(grads, *b, tb);
                for ((o, gv), av) in gb.iter_mut().zip(gd).zip(ta.data()) {
                    *o += gv * av;
                }
            }
            Op::Scale(a, s) => {
                let ga = acc(grads, *a, self.value(*a));
                for (o, gv) in ga.iter_mut().zip(gd) {
                    *o += gv * s;
                }
            }
            Op::SoftmaxRows(x) => {
                let y = node.value.data();
                let n = node.value.cols();
                let gx = acc(grads, *x, self.value(*x));
                for ((yr, gr), or) in y.chunks(n).zip(gd.chunks(n)).zip(gx.chunks_mut(n)) {
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for ((o, yv), gv) in or.iter_mut().zip(yr).zip(gr) {
                        *o += yv * (gv - dot);
                    }
                }
            }
            Op::LayerNorm { x, gain, bias, xhat, rstd } => {
                let tg = self.value(*gain);
                let n = tg.len();
                let gain_v = tg.data().to_vec();
                {
                    let gg = acc(grads, *gain, tg);
                    for (gr, hr) in gd.chunks(n).zip(xhat.chunks(n)) {
                        for c in 0..n {
                            gg[c] += gr[c] * hr[c];
                        }
                    }
                }
                {
                    let gb = acc(grads, *bias, self.value(*bias));
                    for gr in gd.chunks(n) {
                        add_into(gb, gr);
                    }
                }
                let gx = acc(grads, *x, self.value(*x));
                for (r, ((gr, hr), or)) in
                    gd.chunks(n).zip(xhat.chunks(n)).zip(gx.chunks_mut(n)).enumerate()
                {
                    let dh: Vec<f64> = gr.iter().zip(&gain_v).map(|(a, b)| a * b).collect();
                    let mean_dh = dh.iter().sum::<f64>() / n as f64;
                    let mean_dh_h = dh.iter().zip(hr).map(|(a, b)| a * b).sum::<f64>() / n as f64;
                    for c in 0..n {
                        or[c] += rstd[r] * (dh[c] - mean_dh - hr[c] * mean_dh_h);
                    }
                }
            }
            Op::Gelu(x) => {
                let tx = self.value(*x);
                let gx = acc(grads, *x, tx);
                for ((o, gv), xv) in gx.iter_mut().zip(gd).zip(tx.data()) {
                    *o += gv * gelu_grad(*xv);
                }
            }
            Op::Dropout { x, mask } => {
                let gx = acc(grads, *x, self.value(*x));
                for ((o, gv), mv) in gx.iter_mut().zip(gd).zip(mask) {
                    *o += gv * mv;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let tp = self.value(p);
                    let len = tp.len();
                    add_into(acc(grads, p, tp), &gd[offset..offset + len]);
                    offset += len;
                }
            }
            Op::ConcatCols(parts) => {
                let n = node.value.cols();
                let mut col = 0;
                for &p in parts {
                    let tp = self.value(p);
                    let w = tp.cols();
                    let gp = acc(grads, p, tp);
                    for (r, orow) in gp.chunks_mut(w).enumerate() {
                        add_into(orow, &gd[r * n + col..r * n + col + w]);
                    }
                    col += w;
                }
            }
            Op::SliceRows { x, start } => {
                let tx = self.value(*x);
                let n = tx.cols();
                let gx = acc(grads, *x, tx);
                add_into(&mut gx[start * n..start * n + gd.len()], gd);
            }
            Op::SliceCols { x, start } => {
                let tx = self.value(*x);
                let n = tx.cols();
                let w = node.value.cols();
                let gx = acc(grads, *x, tx);
                for (r, grow) in gd.chunks(w).enumerate() {
                    add_into(&mut gx[r * n + start..r * n + start + w], grow);
                }
            }
            Op::MeanRows(x) => {
                let tx = self.value(*x);
                let (m, n) = (tx.rows(), tx.cols());
                let gx = acc(grads, *x, tx);
                for orow in gx.chunks_mut(n) {
                    for (o, gv) in orow.iter_mut().zip(gd) {
                        *o += gv / m as f64;
                    }
                }
            }
            Op::Sum(x) => {
                let gx = acc(grads, *x, self.value(*x));
                gx.iter_mut().for_each(|o| *o += gd[0]);
            }
            Op::GatherRows { table, ids } => {
                let tt = self.value(*table);
                let n = tt.cols();
                let gt = acc(grads, *table, tt);
                for (r, &i) in ids.iter().enumerate() {
                    add_into(&mut gt[i * n..(i + 1) * n], &gd[r * n..(r + 1) * n]);
                }
            }
            Op::CrossEntropy { logits, targets, probs, scale, floor } => {
                let tl = self.value(*logits);
                let n = tl.cols();
                let gl = acc(grads, *logits, tl);
                let s = gd[0] * scale;
                for (r, target) in targets.iter().enumerate() {
                    let Some(t) = *target else { continue };
                    let pr = &probs[r * n..(r + 1) * n];
                    if pr[t] <= *floor {
                        continue;
                    }
                    let orow = &mut gl[r * n..(r + 1) * n];
                    for (c, o) in orow.iter_mut().enumerate() {
                        let y = if c == t { 1.0 } else { 0.0 };
                        *o += s * (pr[c] - y);
                    }
                }
            }
        }
    }
}

fn acc<'a>(grads: &'a mut [Option<Tensor>], v: Var, like: &Tensor) -> &'a mut [f64] {
    grads[v.0].get_or_insert_with(|| Tensor::zeros(like.shape())).data_mut()
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

pub fn gelu_scalar(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

fn gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    cdf + x * pdf
}
