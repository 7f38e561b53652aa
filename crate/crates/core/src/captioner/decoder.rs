//! Causal transformer decoder over `[prompt rows ∥ token rows]`.
//!
//! Prompt rows attend to each other; token `t` attends to every prompt row
//! and to tokens `≤ t`. Token rows get sinusoidal positions, prompt rows
//! none (apart from the optional player/name slot embeddings). The output
//! layer is tied to the token table.

use rand::Rng;

use super::prompt::{MultimodalPrompt, PromptNode, Segment};
use super::vocab::{Vocabulary, BOS, NONE, PAD};
use crate::config::HyperConfig;
use crate::error::{Error, Result};
use crate::graph::{Graph, Mode, Var};
use crate::identity::NONE_NAME;
use crate::metrics::tokenize;
use crate::nn::{self, AttentionShape, MASKED};
use crate::params::{Initializer, ParameterStore};
use crate::tensor::Tensor;

pub const TOKEN_INIT_STD: f64 = 0.02;
pub const NLL_FLOOR: f64 = 1e-12;

pub fn declare_decoder(
    store: &mut ParameterStore,
    init: &mut Initializer,
    cfg: &HyperConfig,
    vocab_size: usize,
) -> Result<()> {
    let d = cfg.d_llm;
    store.insert("dec.tok", init.normal(&[vocab_size, d], TOKEN_INIT_STD), true)?;
    if cfg.slot_embeddings {
        store.insert("dec.slot", init.normal(&[cfg.k_players, d], TOKEN_INIT_STD), true)?;
    }
    for l in 0..cfg.decoder_layers {
        nn::declare_layer_norm(store, init, &format!("dec.l{l}.ln1"), d)?;
        nn::declare_attention(store, init, &format!("dec.l{l}.attn"), AttentionShape::new(d, cfg.n_heads))?;
        nn::declare_layer_norm(store, init, &format!("dec.l{l}.ln2"), d)?;
        nn::declare_linear(store, init, &format!("dec.l{l}.ff.fc1"), d, d * cfg.ffn_ratio, true)?;
        nn::declare_linear(store, init, &format!("dec.l{l}.ff.fc2"), d * cfg.ffn_ratio, d, true)?;
    }
    nn::declare_layer_norm(store, init, "dec.ln_f", d)?;
    store.insert("dec.out.b", init.zeros(vocab_size), true)?;
    Ok(())
}

/// `E_k`: each name mean-pools its token embeddings; `<none>` is a zero row.
pub fn embed_names(
    g: &mut Graph,
    store: &ParameterStore,
    vocab: &Vocabulary,
    names: &[String],
) -> Result<Var> {
    let table = g.param(store, "dec.tok")?;
    let d = g.value(table).cols();
    let mut rows = Vec::with_capacity(names.len());
    for name in names {
        if name == NONE_NAME {
            rows.push(g.input(Tensor::zeros(&[1, d])));
            continue;
        }
        let ids = vocab.encode(&tokenize(name))?;
        if ids.is_empty() {
            return Err(Error::UnknownToken(name.clone()));
        }
        let emb = g.gather_rows(table, &ids)?;
        rows.push(g.mean_rows(emb));
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput);
    }
    g.concat_rows(&rows)
}

/// Mask for `p` prompt rows followed by `t` token rows.
pub fn prefix_mask(p: usize, t: usize) -> Tensor {
    let n = p + t;
    let mut m = Tensor::zeros(&[n, n]);
    for i in 0..n {
        for j in 0..n {
            let blocked = if i < p { j >= p } else { j > i };
            if blocked {
                m.set(i, j, MASKED);
            }
        }
    }
    m
}

fn with_slots(g: &mut Graph, store: &ParameterStore, prompt: &PromptNode) -> Result<Var> {
    if !store.contains("dec.slot") {
        return Ok(prompt.rows);
    }
    let slots = g.param(store, "dec.slot")?;
    let k = g.value(slots).rows();
    let mut parts = Vec::with_capacity(prompt.spans.len());
    for s in &prompt.spans {
        let rows = g.slice_rows(prompt.rows, s.start, s.len)?;
        if matches!(s.segment, Segment::Player | Segment::Name) {
            if s.len != k {
                return Err(Error::shape(format!("{:?} span has {} rows, k={k}", s.segment, s.len)));
            }
            parts.push(g.add(rows, slots)?);
        } else {
            parts.push(rows);
        }
    }
    g.concat_rows(&parts)
}

/// Logits `T × V`; row `t` scores the token following `tokens[..=t]`.
#[allow(clippy::too_many_arguments)]
pub fn decoder_logits<R: Rng>(
    g: &mut Graph,
    store: &ParameterStore,
    cfg: &HyperConfig,
    prompt: &PromptNode,
    tokens: &[usize],
    mode: Mode,
    rng: &mut R,
) -> Result<Var> {
    if tokens.is_empty() {
        return Err(Error::EmptyInput);
    }
    if tokens.len() > cfg.max_len {
        return Err(Error::LengthCapExceeded { len: tokens.len(), cap: cfg.max_len });
    }
    let d = cfg.d_llm;
    let table = g.param(store, "dec.tok")?;
    let emb = g.gather_rows(table, tokens)?;
    let pos = g.input(nn::sinusoidal_positions(tokens.len(), d)?);
    let tok_rows = g.add(emb, pos)?;
    let prompt_rows = with_slots(g, store, prompt)?;
    let p = g.value(prompt_rows).rows();
    let t = tokens.len();
    let mask = prefix_mask(p, t);

    let mut h = g.concat_rows(&[prompt_rows, tok_rows])?;
    let shape = AttentionShape::new(d, cfg.n_heads);
    for l in 0..cfg.decoder_layers {
        let x = nn::layer_norm(g, store, &format!("dec.l{l}.ln1"), h)?;
        let a = nn::attention(g, store, &format!("dec.l{l}.attn"), x, x, shape, Some(&mask))?;
        let a = g.dropout(a, cfg.dropout_rate, mode, rng)?;
        h = g.add(h, a)?;
        let x = nn::layer_norm(g, store, &format!("dec.l{l}.ln2"), h)?;
        let f = nn::linear(g, store, &format!("dec.l{l}.ff.fc1"), x)?;
        let f = g.gelu(f);
        let f = nn::linear(g, store, &format!("dec.l{l}.ff.fc2"), f)?;
        let f = g.dropout(f, cfg.dropout_rate, mode, rng)?;
        h = g.add(h, f)?;
    }
    let h = g.slice_rows(h, p, t)?;
    let h = nn::layer_norm(g, store, "dec.ln_f", h)?;
    let logits = g.matmul_bt(h, table)?;
    let b = g.param(store, "dec.out.b")?;
    g.add_row(logits, b)
}

/// Next-token logits after `tokens` (which start with `<bos>`).
pub fn decoder_forward(
    store: &ParameterStore,
    cfg: &HyperConfig,
    prompt: &MultimodalPrompt,
    tokens: &[usize],
) -> Result<Vec<f64>> {
    let mut g = Graph::new();
    let rows = g.input(prompt.rows.clone());
    let node = PromptNode { rows, spans: prompt.spans.clone() };
    let mut rng = rand::rngs::mock::StepRng::new(0, 0);
    let logits = decoder_logits(&mut g, store, cfg, &node, tokens, Mode::Infer, &mut rng)?;
    let lt = g.value(logits);
    Ok(lt.row(lt.rows() - 1).to_vec())
}

/// `−Σ_t log P(β_t | β_<t, prompt)` over `t = 1..N_g`, `<pad>` targets
/// skipped. `target` starts with `<bos>`.
pub fn caption_loss<R: Rng>(
    g: &mut Graph,
    store: &ParameterStore,
    cfg: &HyperConfig,
    prompt: &PromptNode,
    target: &[usize],
    mode: Mode,
    rng: &mut R,
) -> Result<Var> {
    if target.len() < 2 || target[0] != BOS {
        return Err(Error::Schema("caption target must be <bos> followed by ≥ 1 token".into()));
    }
    let logits = decoder_logits(g, store, cfg, prompt, &target[..target.len() - 1], mode, rng)?;
    let targets: Vec<Option<usize>> =
        target[1..].iter().map(|&t| (t != PAD).then_some(t)).collect();
    g.cross_entropy(logits, &targets, 1.0, NLL_FLOOR)
}

/// Ids that decoding never emits.
pub const NEVER_GENERATED: [usize; 3] = [BOS, PAD, NONE];
