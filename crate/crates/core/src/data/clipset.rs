//! Player-centric reorganisation of the training clips.

use std::collections::BTreeMap;

use super::clip::ClipRecord;
use crate::error::{Error, Result};
use crate::identity::PlayerSequence;

/// Player name → every `(video_id, sequence)` in which that player is named.
/// Iterates in name order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlayerCentricSet {
    pub by_player: BTreeMap<String, Vec<(String, PlayerSequence)>>,
}

impl PlayerCentricSet {
    pub fn len(&self) -> usize {
        self.by_player.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_player.is_empty()
    }

    pub fn clips_of(&self, name: &str) -> impl Iterator<Item = &str> {
        self.by_player.get(name).into_iter().flatten().map(|(v, _)| v.as_str())
    }

    pub fn sequence_count(&self) -> usize {
        self.by_player.values().map(Vec::len).sum()
    }
}

/// Group training clips under each named player. A clip naming the same
/// player twice is listed once under that player.
pub fn build_player_centric_set(records: &[ClipRecord]) -> Result<PlayerCentricSet> {
    let mut set = PlayerCentricSet::default();
    for r in records {
        if r.player_sequences.len() != r.player_names.len() {
            let missing = r.player_names.get(r.player_sequences.len()).cloned().unwrap_or_default();
            return Err(Error::MissingSequence { video_id: r.video_id.clone(), player: missing });
        }
        for (name, seq) in r.player_names.iter().zip(&r.player_sequences) {
            let entry = set.by_player.entry(name.clone()).or_default();
            if entry.last().is_some_and(|(v, _)| v == &r.video_id) {
                continue;
            }
            entry.push((r.video_id.clone(), seq.clone()));
        }
    }
    Ok(set)
}
