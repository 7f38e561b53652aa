//! Visual context learning: a fixed set of learnable query vectors that
//! summarise a variable-length video into `n_q` rows.
//!
//! ```text
//! V_self  = softmax(ΘWq1 (ΘWk1)ᵀ / √d) · ΘWv1
//! V_pv    = τ + V
//! V_cross = softmax(V_self Wq2 (V_pv Wk2)ᵀ / √d) · V_pv Wv2
//! V_c     = FFN(MLP(V_cross))
//! ```
//!
//! Both attentions are single-head with `√d_time` scaling. MLP is
//! linear→GELU→linear at width `d_time`; FFN is the same with a
//! `ffn_ratio` hidden expansion. There is no residual path.

use crate::config::HyperConfig;
use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::nn::{self, AttentionShape};
use crate::params::{Initializer, ParameterStore};

pub const QUERY_INIT_STD: f64 = 0.02;

pub fn declare_vclm(
    store: &mut ParameterStore,
    init: &mut Initializer,
    cfg: &HyperConfig,
) -> Result<()> {
    let d = cfg.d_time;
    store.insert("vclm.theta", init.normal(&[cfg.n_q, d], QUERY_INIT_STD), true)?;
    nn::declare_attention(store, init, "vclm.self", AttentionShape::literal(d))?;
    nn::declare_attention(store, init, "vclm.cross", AttentionShape::literal(d))?;
    nn::declare_linear(store, init, "vclm.mlp.fc1", d, d, true)?;
    nn::declare_linear(store, init, "vclm.mlp.fc2", d, d, true)?;
    nn::declare_linear(store, init, "vclm.ffn.fc1", d, d * cfg.ffn_ratio, true)?;
    nn::declare_linear(store, init, "vclm.ffn.fc2", d * cfg.ffn_ratio, d, true)?;
    Ok(())
}

pub fn vclm_forward(
    g: &mut Graph,
    store: &ParameterStore,
    cfg: &HyperConfig,
    v_v: Var,
) -> Result<Var> {
    vclm_forward_with(g, store, cfg, v_v, true)
}

/// `positions = false` drops τ, which makes the output invariant to the
/// order of video rows.
pub fn vclm_forward_with(
    g: &mut Graph,
    store: &ParameterStore,
    cfg: &HyperConfig,
    v_v: Var,
    positions: bool,
) -> Result<Var> {
    let d = cfg.d_time;
    if g.value(v_v).cols() != d {
        return Err(Error::shape(format!(
            "video features are {} wide, expected d_time={d}",
            g.value(v_v).cols()
        )));
    }
    let literal = AttentionShape::literal(d);
    let theta = g.param(store, "vclm.theta")?;
    let v_self = nn::msa(g, store, "vclm.self", theta, literal)?;

    let v_pv = if positions {
        let tau = g.input(nn::sinusoidal_positions(g.value(v_v).rows(), d)?);
        g.add(tau, v_v)?
    } else {
        v_v
    };
    let v_cross = nn::mca_attn(g, store, "vclm.cross", v_self, v_pv, literal)?;

    let h = nn::linear(g, store, "vclm.mlp.fc1", v_cross)?;
    let h = g.gelu(h);
    let h = nn::linear(g, store, "vclm.mlp.fc2", h)?;
    let h = nn::linear(g, store, "vclm.ffn.fc1", h)?;
    let h = g.gelu(h);
    nn::linear(g, store, "vclm.ffn.fc2", h)
}
