//! Multimodal prompt: `[W_c V_c, W_v V_bsi, W_f F_bsi, W_n E_k]`.

use serde::{Deserialize, Serialize};

use crate::config::HyperConfig;
use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::nn;
use crate::params::{Initializer, ParameterStore};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Segment {
    Context,
    Video,
    Player,
    Name,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub segment: Segment,
    pub start: usize,
    pub len: usize,
}

/// Prompt rows held in a graph.
#[derive(Debug, Clone)]
pub struct PromptNode {
    pub rows: Var,
    pub spans: Vec<Span>,
}

impl PromptNode {
    pub fn materialize(&self, g: &Graph) -> MultimodalPrompt {
        MultimodalPrompt { rows: g.value(self.rows).clone(), spans: self.spans.clone() }
    }
}

/// Prompt rows as a plain tensor, with the spans that partition them.
#[derive(Debug, Clone, PartialEq)]
pub struct MultimodalPrompt {
    pub rows: Tensor,
    pub spans: Vec<Span>,
}

impl MultimodalPrompt {
    pub fn span(&self, segment: Segment) -> Option<Span> {
        self.spans.iter().copied().find(|s| s.segment == segment)
    }

    pub fn row_count(&self) -> usize {
        self.rows.rows()
    }
}

pub fn declare_projections(
    store: &mut ParameterStore,
    init: &mut Initializer,
    cfg: &HyperConfig,
) -> Result<()> {
    nn::declare_linear(store, init, "proj.c", cfg.d_time, cfg.d_llm, true)?;
    nn::declare_linear(store, init, "proj.v", cfg.d_time, cfg.d_llm, true)?;
    nn::declare_linear(store, init, "proj.f", cfg.d_time, cfg.d_llm, true)?;
    nn::declare_linear(store, init, "proj.n", cfg.d_llm, cfg.d_llm, true)?;
    Ok(())
}

/// Projects and concatenates the available parts in prompt order. The
/// player and name parts must be given together.
pub fn assemble_prompt(
    g: &mut Graph,
    store: &ParameterStore,
    cfg: &HyperConfig,
    v_c: Option<Var>,
    v: Var,
    f: Option<Var>,
    e: Option<Var>,
) -> Result<PromptNode> {
    if f.is_some() != e.is_some() {
        return Err(Error::shape("player and name rows must be given together"));
    }
    if let (Some(f), Some(e)) = (f, e) {
        if g.value(f).rows() != g.value(e).rows() {
            return Err(Error::shape(format!(
                "{} player rows but {} name rows",
                g.value(f).rows(),
                g.value(e).rows()
            )));
        }
    }
    let parts = [
        (Segment::Context, "proj.c", v_c, cfg.d_time),
        (Segment::Video, "proj.v", Some(v), cfg.d_time),
        (Segment::Player, "proj.f", f, cfg.d_time),
        (Segment::Name, "proj.n", e, cfg.d_llm),
    ];
    let mut rows = Vec::new();
    let mut spans = Vec::new();
    let mut start = 0;
    for (segment, proj, x, width) in parts {
        let Some(x) = x else { continue };
        let got = g.value(x).cols();
        if got != width {
            return Err(Error::shape(format!("{segment:?} rows are {got} wide, expected {width}")));
        }
        let len = g.value(x).rows();
        rows.push(nn::linear(g, store, proj, x)?);
        spans.push(Span { segment, start, len });
        start += len;
    }
    Ok(PromptNode { rows: g.concat_rows(&rows)?, spans })
}
