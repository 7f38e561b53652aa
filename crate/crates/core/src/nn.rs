//! Shared neural blocks built on [`Graph`]: linear maps, layer norm,
//! positional tables and multi-head attention.
//!
//! Parameters live in a [`ParameterStore`] under dotted names. Each block has
//! a `declare_*` function that registers its parameters and a forward
//! function that looks them up by the same prefix.

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::params::{Initializer, ParameterStore};
use crate::tensor::Tensor;

pub fn declare_linear(
    store: &mut ParameterStore,
    init: &mut Initializer,
    prefix: &str,
    fan_in: usize,
    fan_out: usize,
    bias: bool,
) -> Result<()> {
    store.insert(&format!("{prefix}.w"), init.xavier(fan_in, fan_out), true)?;
    if bias {
        store.insert(&format!("{prefix}.b"), init.zeros(fan_out), true)?;
    }
    Ok(())
}

/// `x·W (+ b)`; the bias is used when one was declared.
pub fn linear(g: &mut Graph, store: &ParameterStore, prefix: &str, x: Var) -> Result<Var> {
    let w = g.param(store, &format!("{prefix}.w"))?;
    let y = g.matmul(x, w)?;
    let bias = format!("{prefix}.b");
    if store.contains(&bias) {
        let b = g.param(store, &bias)?;
        g.add_row(y, b)
    } else {
        Ok(y)
    }
}

pub fn declare_layer_norm(
    store: &mut ParameterStore,
    init: &mut Initializer,
    prefix: &str,
    width: usize,
) -> Result<()> {
    store.insert(&format!("{prefix}.gain"), init.ones(width), true)?;
    store.insert(&format!("{prefix}.bias"), init.zeros(width), true)?;
    Ok(())
}

pub fn layer_norm(g: &mut Graph, store: &ParameterStore, prefix: &str, x: Var) -> Result<Var> {
    let gain = g.param(store, &format!("{prefix}.gain"))?;
    let bias = g.param(store, &format!("{prefix}.bias"))?;
    g.layer_norm(x, gain, bias)
}

/// Sine/cosine position table: even columns `sin(p/10000^(2i/d))`, odd
/// columns the matching cosine.
pub fn sinusoidal_positions(n: usize, d: usize) -> Result<Tensor> {
    if d % 2 == 1 {
        return Err(Error::OddWidth(d));
    }
    if n == 0 || d == 0 {
        return Err(Error::shape("position table needs positive extents"));
    }
    let mut data = vec![0.0; n * d];
    for pos in 0..n {
        for i in 0..d / 2 {
            let angle = pos as f64 / 10000f64.powf(2.0 * i as f64 / d as f64);
            data[pos * d + 2 * i] = angle.sin();
            data[pos * d + 2 * i + 1] = angle.cos();
        }
    }
    Tensor::matrix(n, d, data)
}

/// Layout of a multi-head attention block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttentionShape {
    pub width: usize,
    pub heads: usize,
    /// Output projection after concatenating heads.
    pub out_proj: bool,
}

impl AttentionShape {
    pub fn new(width: usize, heads: usize) -> Self {
        AttentionShape { width, heads, out_proj: true }
    }

    /// One head, no output projection: `softmax(QKᵀ/√d)·V` as written.
    pub fn literal(width: usize) -> Self {
        AttentionShape { width, heads: 1, out_proj: false }
    }

    fn check(&self) -> Result<usize> {
        if self.heads == 0 || !self.width.is_multiple_of(self.heads) {
            return Err(Error::shape(format!(
                "width {} not divisible by {} heads",
                self.width, self.heads
            )));
        }
        Ok(self.width / self.heads)
    }
}

pub fn declare_attention(
    store: &mut ParameterStore,
    init: &mut Initializer,
    prefix: &str,
    shape: AttentionShape,
) -> Result<()> {
    shape.check()?;
    let d = shape.width;
    for p in ["q", "k", "v"] {
        store.insert(&format!("{prefix}.w{p}"), init.xavier(d, d), true)?;
    }
    if shape.out_proj {
        store.insert(&format!("{prefix}.wo"), init.xavier(d, d), true)?;
    }
    Ok(())
}

/// Multi-head self attention (queries, keys and values from `x`).
pub fn msa(
    g: &mut Graph,
    store: &ParameterStore,
    prefix: &str,
    x: Var,
    shape: AttentionShape,
) -> Result<Var> {
    attention(g, store, prefix, x, x, shape, None)
}

/// Multi-head cross attention: queries from `x_q`, keys/values from `x_kv`.
pub fn mca_attn(
    g: &mut Graph,
    store: &ParameterStore,
    prefix: &str,
    x_q: Var,
    x_kv: Var,
    shape: AttentionShape,
) -> Result<Var> {
    attention(g, store, prefix, x_q, x_kv, shape, None)
}

/// Attention with an additive score mask (`m_q × m_kv`, large negative
/// entries block a position).
pub fn attention(
    g: &mut Graph,
    store: &ParameterStore,
    prefix: &str,
    x_q: Var,
    x_kv: Var,
    shape: AttentionShape,
    mask: Option<&Tensor>,
) -> Result<Var> {
    let head_width = shape.check()?;
    for (v, role) in [(x_q, "query"), (x_kv, "key/value")] {
        if g.value(v).cols() != shape.width {
            return Err(Error::shape(format!(
                "{role} width {} but attention width {}",
                g.value(v).cols(),
                shape.width
            )));
        }
    }
    let wq = g.param(store, &format!("{prefix}.wq"))?;
    let wk = g.param(store, &format!("{prefix}.wk"))?;
    let wv = g.param(store, &format!("{prefix}.wv"))?;
    let q = g.matmul(x_q, wq)?;
    let k = g.matmul(x_kv, wk)?;
    let v = g.matmul(x_kv, wv)?;
    let mask = match mask {
        Some(m) => {
            let (mq, mk) = (g.value(q).rows(), g.value(k).rows());
            if m.rows() != mq || m.cols() != mk {
                return Err(Error::shape(format!("mask {:?} for {mq}x{mk} scores", m.shape())));
            }
            Some(g.input(m.as_matrix()))
        }
        None => None,
    };
    let scale = 1.0 / (head_width as f64).sqrt();

    let mut heads = Vec::with_capacity(shape.heads);
    for h in 0..shape.heads {
        let (qh, kh, vh) = if shape.heads == 1 {
            (q, k, v)
        } else {
            let start = h * head_width;
            (
                g.slice_cols(q, start, head_width)?,
                g.slice_cols(k, start, head_width)?,
                g.slice_cols(v, start, head_width)?,
            )
        };
        let scores = g.matmul_bt(qh, kh)?;
        let mut scores = g.scale(scores, scale);
        if let Some(m) = mask {
            scores = g.add(scores, m)?;
        }
        let weights = g.softmax_rows(scores);
        heads.push(g.matmul(weights, vh)?);
    }
    let merged = if heads.len() == 1 { heads[0] } else { g.concat_cols(&heads)? };
    if shape.out_proj {
        let wo = g.param(store, &format!("{prefix}.wo"))?;
        g.matmul(merged, wo)
    } else {
        Ok(merged)
    }
}

/// Score mask for causal self attention over `n` positions.
pub fn causal_mask(n: usize) -> Tensor {
    let mut m = Tensor::zeros(&[n, n]);
    for i in 0..n {
        for j in i + 1..n {
            m.set(i, j, MASKED);
        }
    }
    m
}

/// Additive score for a blocked attention position. Finite so every
/// intermediate stays finite; `exp` of it underflows to exactly zero.
pub const MASKED: f64 = -1e30;
