//! Identity-related information extraction: who is on screen, and how their
//! features relate to the video.

pub mod bsim;
pub mod pin;

pub use bsim::{bsim_forward, declare_bsim, BsimOutput};
pub use pin::{
    classify_player, declare_pin, encode_player_sequence, identify, mca_mpca, pin_loss,
    top_k_players, IdentifiedPlayer, PlayerCatalog, PlayerSequence, SequenceSource,
};

use crate::config::HyperConfig;
use crate::data::ClipRecord;
use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::params::ParameterStore;
use crate::tensor::Tensor;

/// Name used for padding rows when fewer than k players are available.
pub const NONE_NAME: &str = "<none>";

/// Where player identities come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdentityMode {
    /// Annotated key players looked up from the player-centric clip set.
    Train,
    /// Tracker candidates ranked by classifier confidence.
    Infer,
}

#[derive(Debug, Clone)]
pub struct IdentityEmbeddings {
    /// `k × d_time` player features, zero rows for padding.
    pub f_k: Var,
    /// `k` names, `<none>` for padding.
    pub names: Vec<String>,
    /// Confidence of each real row.
    pub confidences: Vec<f64>,
}

/// Player features and names for one clip, ordered by classifier confidence
/// and padded to `k` rows.
///
/// In train mode the annotated sequences are encoded inside `g`, so the
/// encoder receives gradients when its parameters are trainable.
pub fn build_identity_embeddings(
    g: &mut Graph,
    store: &ParameterStore,
    cfg: &HyperConfig,
    clip: &ClipRecord,
    mode: IdentityMode,
    k: usize,
    catalog: &PlayerCatalog,
) -> Result<IdentityEmbeddings> {
    let mut rows: Vec<(Var, String, f64)> = Vec::new();
    match mode {
        IdentityMode::Train => {
            if clip.player_sequences.is_empty() {
                return Err(Error::MissingSequences(clip.video_id.clone()));
            }
            let mut ranked = Vec::new();
            for (name, seq) in clip.player_names.iter().zip(&clip.player_sequences) {
                let f = encode_player_sequence(g, store, cfg, seq)?;
                let probs = classify_player(store, g.value(f), catalog)?;
                let (class_index, confidence) = pin::argmax(&probs);
                ranked.push((f, name.clone(), confidence, class_index));
            }
            ranked.sort_by(|a, b| {
                b.2.partial_cmp(&a.2)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(a.3.cmp(&b.3))
            });
            rows.extend(ranked.into_iter().take(k).map(|(f, n, c, _)| (f, n, c)));
        }
        IdentityMode::Infer => {
            let players = top_k_players(&clip.candidate_sequences, k, store, cfg, catalog)?;
            for p in players {
                let f = g.input(p.feature);
                rows.push((f, p.name, p.confidence));
            }
        }
    }

    let mut feats = Vec::with_capacity(k);
    let mut names = Vec::with_capacity(k);
    let mut confidences = Vec::with_capacity(k);
    for (f, n, c) in rows {
        feats.push(f);
        names.push(n);
        confidences.push(c);
    }
    while feats.len() < k {
        feats.push(g.input(Tensor::zeros(&[1, cfg.d_time])));
        names.push(NONE_NAME.to_string());
    }
    let f_k = g.concat_rows(&feats)?;
    Ok(IdentityEmbeddings { f_k, names, confidences })
}
