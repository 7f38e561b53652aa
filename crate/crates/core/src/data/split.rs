//! Game-level train/test partition.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::clip::ClipRecord;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_games: BTreeSet<String>,
    pub test_games: BTreeSet<String>,
}

impl SplitSpec {
    pub fn new(
        train: impl IntoIterator<Item = String>,
        test: impl IntoIterator<Item = String>,
    ) -> Result<Self> {
        let spec = SplitSpec {
            train_games: train.into_iter().collect(),
            test_games: test.into_iter().collect(),
        };
        if let Some(g) = spec.train_games.intersection(&spec.test_games).next() {
            return Err(Error::Config(format!("game `{g}` on both sides of the split")));
        }
        Ok(spec)
    }

    /// Sorted game ids, the first `35/40` of them (at least one, leaving at
    /// least one) for training.
    pub fn by_ratio(records: &[ClipRecord]) -> Result<Self> {
        let games: BTreeSet<String> = records.iter().map(|r| r.game_id.clone()).collect();
        if games.len() < 2 {
            return Err(Error::Config("need at least two games to split".into()));
        }
        let n_train = ((games.len() * 35) as f64 / 40.0).round() as usize;
        let n_train = n_train.clamp(1, games.len() - 1);
        let train: Vec<String> = games.iter().take(n_train).cloned().collect();
        let test: Vec<String> = games.iter().skip(n_train).cloned().collect();
        SplitSpec::new(train, test)
    }
}

pub fn split_by_game(
    records: &[ClipRecord],
    spec: &SplitSpec,
) -> Result<(Vec<ClipRecord>, Vec<ClipRecord>)> {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for r in records {
        if spec.train_games.contains(&r.game_id) {
            train.push(r.clone());
        } else if spec.test_games.contains(&r.game_id) {
            test.push(r.clone());
        } else {
            return Err(Error::UncoveredGame(r.game_id.clone()));
        }
    }
    Ok((train, test))
}
