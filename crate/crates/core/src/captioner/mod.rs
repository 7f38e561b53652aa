//! Caption generation from a multimodal prompt: name embeddings, prompt
//! assembly, the decoder, the caption loss and beam search.

pub mod beam;
pub mod decoder;
pub mod prompt;
pub mod vocab;

pub use beam::{beam_search, greedy, CaptionHypothesis};
pub use decoder::{
    caption_loss, declare_decoder, decoder_forward, decoder_logits, embed_names, prefix_mask,
};
pub use prompt::{assemble_prompt, declare_projections, MultimodalPrompt, PromptNode, Segment, Span};
pub use vocab::{Vocabulary, BOS, EOS, NONE, PAD};

use crate::config::HyperConfig;
use crate::error::Result;
use crate::params::ParameterStore;

fn masked_logits(
    store: &ParameterStore,
    cfg: &HyperConfig,
    prompt: &MultimodalPrompt,
    prefix: &[usize],
) -> Result<Vec<f64>> {
    let mut logits = decoder_forward(store, cfg, prompt, prefix)?;
    for id in decoder::NEVER_GENERATED {
        if let Some(l) = logits.get_mut(id) {
            *l = f64::NEG_INFINITY;
        }
    }
    Ok(logits)
}

/// Beam-search decode of one caption; `beam_size = 1` is greedy. Returns
/// the best hypothesis with `<eos>` still attached when it was reached.
///
/// A plain beam can prune the greedy path early and end below it, so for
/// wider beams the greedy rollout is scored too and the better of the two
/// (same ranking as inside the beam) is returned.
pub fn generate(
    store: &ParameterStore,
    cfg: &HyperConfig,
    prompt: &MultimodalPrompt,
    beam_size: usize,
    max_len: usize,
) -> Result<CaptionHypothesis> {
    let max_len = max_len.min(cfg.max_len);
    let next = |p: &[usize]| masked_logits(store, cfg, prompt, p);
    let best = beam_search(next, BOS, EOS, beam_size, max_len)?;
    if beam_size <= 1 {
        return Ok(best);
    }
    let floor = greedy(next, BOS, EOS, max_len)?;
    Ok(if beam::rank(&floor, &best) == std::cmp::Ordering::Less { floor } else { best })
}

/// Argmax rollout with the same masking as [`generate`].
pub fn generate_greedy(
    store: &ParameterStore,
    cfg: &HyperConfig,
    prompt: &MultimodalPrompt,
    max_len: usize,
) -> Result<CaptionHypothesis> {
    let max_len = max_len.min(cfg.max_len);
    greedy(|p| masked_logits(store, cfg, prompt, p), BOS, EOS, max_len)
}

/// Generated ids without a trailing `<eos>`.
pub fn caption_body(h: &CaptionHypothesis) -> &[usize] {
    match h.tokens.last() {
        Some(&EOS) => &h.tokens[..h.tokens.len() - 1],
        _ => &h.tokens,
    }
}
