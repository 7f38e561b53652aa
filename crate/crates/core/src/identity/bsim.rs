//! Bidirectional semantic interaction between video rows and player rows.
//!
//! ```text
//! V'  = MSA1(LN1(V))                 F'  = MSA2(LN2(F))
//! Vd  = LN3(V'·Wd1)                  Fd  = LN4(F'·Wd2)
//! V'' = MCA_ev(Vd, Fd)·Wu1           F'' = MCA_ve(Fd, Vd)·Wu2
//! Vb  = LN5(Drop(MLP1(GELU(V''))) + V'')
//! Fb  = LN6(Drop(MLP2(GELU(F''))) + F'')
//! ```
//!
//! LN3 and LN4 are shared by both exchange branches.

use rand::Rng;

use crate::config::HyperConfig;
use crate::error::{Error, Result};
use crate::graph::{Graph, Mode, Var};
use crate::nn::{self, AttentionShape};
use crate::params::{Initializer, ParameterStore};

#[derive(Debug, Clone, Copy)]
pub struct BsimOutput {
    pub v_bsi: Var,
    pub f_bsi: Var,
}

pub fn declare_bsim(
    store: &mut ParameterStore,
    init: &mut Initializer,
    cfg: &HyperConfig,
) -> Result<()> {
    let (d, dd) = (cfg.d_time, cfg.d_down);
    let hidden = d * cfg.mlp_ratio;
    for ln in ["ln1", "ln2", "ln5", "ln6"] {
        nn::declare_layer_norm(store, init, &format!("bsim.{ln}"), d)?;
    }
    for ln in ["ln3", "ln4"] {
        nn::declare_layer_norm(store, init, &format!("bsim.{ln}"), dd)?;
    }
    nn::declare_attention(store, init, "bsim.msa1", AttentionShape::new(d, cfg.n_heads))?;
    nn::declare_attention(store, init, "bsim.msa2", AttentionShape::new(d, cfg.n_heads))?;
    nn::declare_linear(store, init, "bsim.down1", d, dd, false)?;
    nn::declare_linear(store, init, "bsim.down2", d, dd, false)?;
    nn::declare_attention(store, init, "bsim.mca_ev", AttentionShape::new(dd, cfg.n_heads))?;
    nn::declare_attention(store, init, "bsim.mca_ve", AttentionShape::new(dd, cfg.n_heads))?;
    nn::declare_linear(store, init, "bsim.up1", dd, d, false)?;
    nn::declare_linear(store, init, "bsim.up2", dd, d, false)?;
    for mlp in ["mlp1", "mlp2"] {
        nn::declare_linear(store, init, &format!("bsim.{mlp}.fc1"), d, hidden, true)?;
        nn::declare_linear(store, init, &format!("bsim.{mlp}.fc2"), hidden, d, true)?;
    }
    Ok(())
}

pub fn bsim_forward<R: Rng>(
    g: &mut Graph,
    store: &ParameterStore,
    cfg: &HyperConfig,
    v_v: Var,
    f_k: Var,
    mode: Mode,
    rng: &mut R,
) -> Result<BsimOutput> {
    for (v, what) in [(v_v, "video"), (f_k, "player")] {
        if g.value(v).cols() != cfg.d_time {
            return Err(Error::shape(format!(
                "{what} features are {} wide, expected d_time={}",
                g.value(v).cols(),
                cfg.d_time
            )));
        }
    }
    let full = AttentionShape::new(cfg.d_time, cfg.n_heads);
    let down = AttentionShape::new(cfg.d_down, cfg.n_heads);

    let v = nn::layer_norm(g, store, "bsim.ln1", v_v)?;
    let v1 = nn::msa(g, store, "bsim.msa1", v, full)?;
    let f = nn::layer_norm(g, store, "bsim.ln2", f_k)?;
    let f1 = nn::msa(g, store, "bsim.msa2", f, full)?;

    let vd = nn::linear(g, store, "bsim.down1", v1)?;
    let vd = nn::layer_norm(g, store, "bsim.ln3", vd)?;
    let fd = nn::linear(g, store, "bsim.down2", f1)?;
    let fd = nn::layer_norm(g, store, "bsim.ln4", fd)?;

    let v2 = nn::mca_attn(g, store, "bsim.mca_ev", vd, fd, down)?;
    let v2 = nn::linear(g, store, "bsim.up1", v2)?;
    let f2 = nn::mca_attn(g, store, "bsim.mca_ve", fd, vd, down)?;
    let f2 = nn::linear(g, store, "bsim.up2", f2)?;

    let v_bsi = output_stage(g, store, cfg, "1", "ln5", v2, mode, rng)?;
    let f_bsi = output_stage(g, store, cfg, "2", "ln6", f2, mode, rng)?;
    Ok(BsimOutput { v_bsi, f_bsi })
}

#[allow(clippy::too_many_arguments)]
fn output_stage<R: Rng>(
    g: &mut Graph,
    store: &ParameterStore,
    cfg: &HyperConfig,
    branch: &str,
    ln: &str,
    x: Var,
    mode: Mode,
    rng: &mut R,
) -> Result<Var> {
    let h = g.gelu(x);
    let h = nn::linear(g, store, &format!("bsim.mlp{branch}.fc1"), h)?;
    let h = nn::linear(g, store, &format!("bsim.mlp{branch}.fc2"), h)?;
    let h = g.dropout(h, cfg.dropout_rate, mode, rng)?;
    let h = g.add(h, x)?;
    nn::layer_norm(g, store, &format!("bsim.{ln}"), h)
}
