//! Model geometry and named presets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperConfig {
    /// Width of precomputed per-frame features in the data.
    pub d_in: usize,
    pub d_time: usize,
    pub d_down: usize,
    pub d_llm: usize,
    pub n_q: usize,
    pub n_heads: usize,
    pub k_players: usize,
    pub n_frames_max: usize,
    pub seq_len_max: usize,
    pub beam_size: usize,
    pub dropout_rate: f64,
    /// Hidden width multiplier of the interaction-module MLPs.
    pub mlp_ratio: usize,
    /// Hidden width multiplier of the context-module feed-forward stage.
    pub ffn_ratio: usize,
    pub decoder_layers: usize,
    /// Caption length cap in tokens, `<bos>` excluded.
    pub max_len: usize,
    /// Add a learned per-slot embedding to player and name prompt rows so
    /// row `i` of each span can be matched; no other prompt positions.
    pub slot_embeddings: bool,
    pub seed: u64,
}

impl Default for HyperConfig {
    fn default() -> Self {
        HyperConfig::desk()
    }
}

impl HyperConfig {
    /// Single-CPU geometry used by the tests and the CLI by default.
    pub fn desk() -> Self {
        HyperConfig {
            d_in: 16,
            d_time: 32,
            d_down: 24,
            d_llm: 48,
            n_q: 8,
            n_heads: 4,
            k_players: 2,
            n_frames_max: 60,
            seq_len_max: 20,
            beam_size: 5,
            dropout_rate: 0.1,
            mlp_ratio: 1,
            ffn_ratio: 4,
            decoder_layers: 2,
            max_len: 24,
            slot_embeddings: true,
            seed: 0,
        }
    }

    /// The published geometry: 768-wide features, 512-wide interaction
    /// bottleneck, 32 context queries, top-2 players, beam 5.
    pub fn paper() -> Self {
        HyperConfig {
            d_in: 768,
            d_time: 768,
            d_down: 512,
            d_llm: 768,
            n_q: 32,
            n_heads: 8,
            ..HyperConfig::desk()
        }
    }

    /// Smallest geometry that still exercises every code path; used for
    /// gradient checks.
    pub fn tiny() -> Self {
        HyperConfig {
            d_in: 6,
            d_time: 8,
            d_down: 4,
            d_llm: 8,
            n_q: 2,
            n_heads: 2,
            decoder_layers: 1,
            max_len: 8,
            ..HyperConfig::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let extents = [
            ("d_in", self.d_in),
            ("d_time", self.d_time),
            ("d_down", self.d_down),
            ("d_llm", self.d_llm),
            ("n_q", self.n_q),
            ("n_heads", self.n_heads),
            ("k_players", self.k_players),
            ("n_frames_max", self.n_frames_max),
            ("seq_len_max", self.seq_len_max),
            ("beam_size", self.beam_size),
            ("mlp_ratio", self.mlp_ratio),
            ("ffn_ratio", self.ffn_ratio),
            ("decoder_layers", self.decoder_layers),
            ("max_len", self.max_len),
        ];
        if let Some((name, _)) = extents.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be at least 1")));
        }
        for (name, width) in [("d_time", self.d_time), ("d_down", self.d_down), ("d_llm", self.d_llm)] {
            if width % self.n_heads != 0 {
                return Err(Error::Config(format!(
                    "{name}={width} not divisible by n_heads={}",
                    self.n_heads
                )));
            }
        }
        if self.d_down > self.d_time {
            return Err(Error::Config(format!(
                "d_down={} exceeds d_time={}",
                self.d_down, self.d_time
            )));
        }
        if self.d_time % 2 == 1 || self.d_llm % 2 == 1 {
            return Err(Error::Config("d_time and d_llm must be even for position tables".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidRate(self.dropout_rate));
        }
        Ok(())
    }
}

/// Decoder training presets, one per language-model variant of the
/// published comparison. At desk scale they only change the learning rate,
/// decoder width and batch size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Preset {
    pub name: &'static str,
    pub model: &'static str,
    pub lr: f64,
    pub hidden: usize,
    pub batch_size: usize,
}

pub const PRESETS: [Preset; 6] = [
    Preset { name: "g", model: "GPT-2", lr: 5e-5, hidden: 768, batch_size: 64 },
    Preset { name: "q-0.5b", model: "Qwen2.5-0.5B", lr: 7e-5, hidden: 896, batch_size: 32 },
    Preset { name: "q-1.5b", model: "Qwen2.5-1.5B", lr: 5e-5, hidden: 1536, batch_size: 32 },
    Preset { name: "q-3b", model: "Qwen2.5-3B", lr: 1e-5, hidden: 2048, batch_size: 8 },
    Preset { name: "l-1b", model: "Llama3.2-1B", lr: 5e-5, hidden: 2048, batch_size: 32 },
    Preset { name: "l-3b", model: "Llama3.2-3B", lr: 7e-6, hidden: 3072, batch_size: 8 },
];

pub fn preset(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name)
}

/// Published learning rate and epoch count for the player classifier.
pub const PIN_PAPER_LR: f64 = 5e-5;
pub const PIN_PAPER_EPOCHS: usize = 50;
pub const CAPTIONER_PAPER_EPOCHS: usize = 100;

/// Bottleneck widths for the down-projection sweep: the published
/// 128/256/512/768 grid as fractions of `d_time`, rounded to a multiple of
/// the head count.
pub fn d_down_grid(cfg: &HyperConfig) -> Vec<usize> {
    let mut grid: Vec<usize> = [128.0, 256.0, 512.0, 768.0]
        .iter()
        .map(|f: &f64| {
            let raw = f / 768.0 * cfg.d_time as f64;
            let h = cfg.n_heads as f64;
            (((raw / h).round().max(1.0)) * h) as usize
        })
        .collect();
    grid.dedup();
    grid
}
