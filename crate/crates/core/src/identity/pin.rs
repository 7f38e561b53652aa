//! Player identification: a one-block sequence encoder over per-frame
//! features, a linear classification head and top-k confidence selection.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::config::HyperConfig;
use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::nn::{self, AttentionShape};
use crate::params::{Initializer, ParameterStore};
use crate::tensor::Tensor;

/// Log-probability floor used by the classification loss.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SequenceSource {
    Dataset,
    TrackerStub,
}

/// Cropped-box feature sequence of one tracked player, `t × d_in`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlayerSequence {
    pub frames: Tensor,
    pub label: Option<usize>,
    pub source: SequenceSource,
}

impl PlayerSequence {
    pub fn new(frames: Tensor, label: Option<usize>, source: SequenceSource) -> Self {
        PlayerSequence { frames: frames.as_matrix(), label, source }
    }

    pub fn len(&self) -> usize {
        self.frames.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Class index ↔ player name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlayerCatalog {
    names: Vec<String>,
}

impl PlayerCatalog {
    pub fn new(names: Vec<String>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for n in &names {
            if !seen.insert(n.as_str()) {
                return Err(Error::Schema(format!("duplicate player name `{n}`")));
            }
        }
        if names.is_empty() {
            return Err(Error::EmptyInput);
        }
        Ok(PlayerCatalog { names })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.names.get(index).map(String::as_str)
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentifiedPlayer {
    pub class_index: usize,
    pub name: String,
    pub confidence: f64,
    /// Encoder output, `1 × d_time`.
    pub feature: Tensor,
}

pub fn declare_pin(
    store: &mut ParameterStore,
    init: &mut Initializer,
    cfg: &HyperConfig,
    classes: usize,
) -> Result<()> {
    nn::declare_linear(store, init, "pin.in", cfg.d_in, cfg.d_time, true)?;
    nn::declare_attention(store, init, "pin.attn", AttentionShape::new(cfg.d_time, cfg.n_heads))?;
    nn::declare_linear(store, init, "pin.head", cfg.d_time, classes, true)?;
    Ok(())
}

/// `1 × d_time` sequence feature: input projection, sinusoidal positions,
/// one self-attention block with residual, mean over frames.
pub fn encode_player_sequence(
    g: &mut Graph,
    store: &ParameterStore,
    cfg: &HyperConfig,
    seq: &PlayerSequence,
) -> Result<Var> {
    if seq.is_empty() {
        return Err(Error::EmptySequence);
    }
    if seq.frames.cols() != cfg.d_in {
        return Err(Error::shape(format!(
            "sequence frames are {} wide, expected d_in={}",
            seq.frames.cols(),
            cfg.d_in
        )));
    }
    let x = g.input(seq.frames.clone());
    let h = nn::linear(g, store, "pin.in", x)?;
    let pos = g.input(nn::sinusoidal_positions(seq.len(), cfg.d_time)?);
    let h = g.add(h, pos)?;
    let a = nn::msa(g, store, "pin.attn", h, AttentionShape::new(cfg.d_time, cfg.n_heads))?;
    let h = g.add(h, a)?;
    Ok(g.mean_rows(h))
}

/// Logits `o_P = F_P·W + b` over the catalog.
pub fn player_logits(g: &mut Graph, store: &ParameterStore, f_p: Var) -> Result<Var> {
    nn::linear(g, store, "pin.head", f_p)
}

/// Class probabilities for one sequence feature.
pub fn classify_player(
    store: &ParameterStore,
    f_p: &Tensor,
    catalog: &PlayerCatalog,
) -> Result<Vec<f64>> {
    let w = store.value("pin.head.w")?;
    if f_p.cols() != w.rows() || f_p.rows() != 1 {
        return Err(Error::shape(format!(
            "feature {:?} for head {:?}",
            f_p.shape(),
            w.shape()
        )));
    }
    if w.cols() != catalog.len() {
        return Err(Error::shape(format!(
            "head has {} classes, catalog {}",
            w.cols(),
            catalog.len()
        )));
    }
    let mut g = Graph::new();
    let x = g.input(f_p.clone());
    let logits = player_logits(&mut g, store, x)?;
    Ok(g.value(logits).softmax_rows().into_data())
}

/// Mean cross-entropy of a batch of `(feature, label)` pairs.
pub fn pin_loss(
    g: &mut Graph,
    store: &ParameterStore,
    batch: &[(Var, usize)],
) -> Result<Var> {
    if batch.is_empty() {
        return Err(Error::EmptyInput);
    }
    let feats: Vec<Var> = batch.iter().map(|(f, _)| *f).collect();
    let stacked = g.concat_rows(&feats)?;
    let logits = player_logits(g, store, stacked)?;
    let targets: Vec<Option<usize>> = batch.iter().map(|(_, l)| Some(*l)).collect();
    g.cross_entropy(logits, &targets, 1.0 / batch.len() as f64, PROB_FLOOR)
}

/// Encode and classify one sequence.
pub fn identify(
    store: &ParameterStore,
    cfg: &HyperConfig,
    seq: &PlayerSequence,
    catalog: &PlayerCatalog,
) -> Result<IdentifiedPlayer> {
    let mut g = Graph::new();
    let f = encode_player_sequence(&mut g, store, cfg, seq)?;
    let feature = g.value(f).clone();
    let probs = classify_player(store, &feature, catalog)?;
    let (class_index, confidence) = argmax(&probs);
    Ok(IdentifiedPlayer {
        class_index,
        name: catalog.name(class_index).unwrap_or_default().to_string(),
        confidence,
        feature,
    })
}

/// First index of the maximum.
pub fn argmax(values: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, &v) in values.iter().enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}

/// Ordering used for top-k: higher confidence first, then lower class
/// index. Callers keep input order for full ties with a stable sort.
pub fn confidence_order(a: &IdentifiedPlayer, b: &IdentifiedPlayer) -> Ordering {
    b.confidence
        .partial_cmp(&a.confidence)
        .unwrap_or(Ordering::Equal)
        .then(a.class_index.cmp(&b.class_index))
}

/// Rank identified players and keep the best `k`. Repeated identities are
/// kept.
pub fn select_top_k(mut players: Vec<IdentifiedPlayer>, k: usize) -> Vec<IdentifiedPlayer> {
    players.sort_by(confidence_order);
    players.truncate(k);
    players
}

/// Identify every candidate sequence and keep the `k` most confident.
pub fn top_k_players(
    sequences: &[PlayerSequence],
    k: usize,
    store: &ParameterStore,
    cfg: &HyperConfig,
    catalog: &PlayerCatalog,
) -> Result<Vec<IdentifiedPlayer>> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    let players = sequences
        .iter()
        .map(|s| identify(store, cfg, s, catalog))
        .collect::<Result<Vec<_>>>()?;
    Ok(select_top_k(players, k))
}

/// Overall accuracy and mean per-class accuracy over the classes present in
/// `truth`.
pub fn mca_mpca(preds: &[usize], truth: &[usize]) -> Result<(f64, f64)> {
    if preds.is_empty() || truth.is_empty() {
        return Err(Error::EmptyInput);
    }
    if preds.len() != truth.len() {
        return Err(Error::shape(format!("{} predictions for {} labels", preds.len(), truth.len())));
    }
    let correct = preds.iter().zip(truth).filter(|(p, t)| p == t).count();
    let mca = correct as f64 / truth.len() as f64;

    let mut per_class: std::collections::BTreeMap<usize, (usize, usize)> = Default::default();
    for (p, t) in preds.iter().zip(truth) {
        let e = per_class.entry(*t).or_default();
        e.1 += 1;
        if p == t {
            e.0 += 1;
        }
    }
    let mpca = per_class.values().map(|&(c, n)| c as f64 / n as f64).sum::<f64>()
        / per_class.len() as f64;
    Ok((mca, mpca))
}
