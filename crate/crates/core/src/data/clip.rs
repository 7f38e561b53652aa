use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::identity::PlayerSequence;
use crate::tensor::Tensor;

/// The nine major basketball event categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventType {
    Block,
    Foul,
    DefensiveRebound,
    OffensiveRebound,
    Turnover,
    TwoPointShot,
    ThreePointShot,
    Layup,
    Assist,
}

impl EventType {
    pub const ALL: [EventType; 9] = [
        EventType::Block,
        EventType::Foul,
        EventType::DefensiveRebound,
        EventType::OffensiveRebound,
        EventType::Turnover,
        EventType::TwoPointShot,
        EventType::ThreePointShot,
        EventType::Layup,
        EventType::Assist,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventType::Block => "block",
            EventType::Foul => "foul",
            EventType::DefensiveRebound => "defensive rebound",
            EventType::OffensiveRebound => "offensive rebound",
            EventType::Turnover => "turnover",
            EventType::TwoPointShot => "2-pt shot",
            EventType::ThreePointShot => "3-pt shot",
            EventType::Layup => "layup",
            EventType::Assist => "assist",
        }
    }

    pub fn index(self) -> usize {
        EventType::ALL.iter().position(|&e| e == self).expect("listed")
    }
}

impl fmt::Display for EventType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EventType::ALL
            .iter()
            .copied()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| Error::Schema(format!("unknown event type `{s}`")))
    }
}

/// One annotated clip.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipRecord {
    pub video_id: String,
    pub game_id: String,
    pub caption: String,
    pub event_type: EventType,
    /// One or two key players, in caption order.
    pub player_names: Vec<String>,
    /// One sequence per named player (may be empty for unannotated clips).
    pub player_sequences: Vec<PlayerSequence>,
    /// Key-player box tracks as `[x, y, w, h]`, kept as provenance only.
    pub boxes: Vec<Option<[f64; 4]>>,
    /// Unlabelled tracks handed to the tracker stub at inference.
    pub candidate_sequences: Vec<PlayerSequence>,
    /// Ground-truth names of the candidates when known (evaluation only).
    pub candidate_names: Vec<Option<String>>,
    /// `N_v × d_in` frame features.
    pub video_features: Tensor,
}

impl ClipRecord {
    pub fn validate(&self) -> Result<()> {
        let n = self.player_names.len();
        if !(1..=2).contains(&n) {
            return Err(Error::Schema(format!(
                "clip `{}` names {n} players, expected 1 or 2",
                self.video_id
            )));
        }
        if !self.player_sequences.is_empty() && self.player_sequences.len() != n {
            return Err(Error::Schema(format!(
                "clip `{}` has {} sequences for {n} players",
                self.video_id,
                self.player_sequences.len()
            )));
        }
        if self.video_features.shape().len() != 2 {
            return Err(Error::Schema(format!(
                "clip `{}` video features must be rank 2",
                self.video_id
            )));
        }
        let d_in = self.video_features.cols();
        for s in self.player_sequences.iter().chain(&self.candidate_sequences) {
            if s.is_empty() {
                return Err(Error::EmptySequence);
            }
            if s.frames.cols() != d_in {
                return Err(Error::Schema(format!(
                    "clip `{}` mixes feature widths {} and {d_in}",
                    self.video_id,
                    s.frames.cols()
                )));
            }
        }
        Ok(())
    }

    pub fn n_frames(&self) -> usize {
        self.video_features.rows()
    }
}
