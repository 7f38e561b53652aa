//! JSON Lines annotations with a tensor-archive sidecar.
//!
//! Each line:
//!
//! ```json
//! {"video_id": "g01-0003", "game_id": "g01", "caption": "...", "event_type": "layup",
//!  "players": [{"name": "L. Reed", "sequence_ref": "g01-0003/player/0", "bbox": [x, y, w, h]}],
//!  "video_ref": "g01-0003/video",
//!  "candidates": [{"sequence_ref": "g01-0003/cand/0", "name": "L. Reed"}]}
//! ```
//!
//! `bbox`, `candidates` and a candidate's `name` are optional. Refs name
//! entries in the sidecar archive, which sits next to the annotation file
//! with the extension `.tensors`.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::archive;
use super::clip::ClipRecord;
use crate::error::{Error, Result};
use crate::identity::{PlayerSequence, SequenceSource};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlayerLine {
    name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sequence_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bbox: Option<[f64; 4]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CandidateLine {
    sequence_ref: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AnnotationLine {
    video_id: String,
    game_id: String,
    caption: String,
    event_type: String,
    players: Vec<PlayerLine>,
    video_ref: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    candidates: Vec<CandidateLine>,
}

pub fn sidecar_path(annotations: &Path) -> PathBuf {
    annotations.with_extension("tensors")
}

pub fn load_annotations(path: &Path) -> Result<Vec<ClipRecord>> {
    let tensors: HashMap<String, Tensor> =
        archive::read_archive(&sidecar_path(path))?.into_iter().collect();
    let lookup = |r: &str| {
        tensors
            .get(r)
            .cloned()
            .ok_or_else(|| Error::Schema(format!("tensor ref `{r}` not in sidecar archive")))
    };

    let reader = BufReader::new(fs::File::open(path)?);
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let a: AnnotationLine = serde_json::from_str(&line)
            .map_err(|e| Error::Schema(format!("line {}: {e}", lineno + 1)))?;
        if !seen.insert(a.video_id.clone()) {
            return Err(Error::DuplicateVideoId(a.video_id));
        }
        let event_type = a.event_type.parse()?;
        let video_features = lookup(&a.video_ref)?;
        if video_features.shape().len() != 2 {
            return Err(Error::Schema(format!(
                "line {}: video `{}` must be rank 2, got {:?}",
                lineno + 1,
                a.video_ref,
                video_features.shape()
            )));
        }
        let with_refs = a.players.iter().filter(|p| p.sequence_ref.is_some()).count();
        if with_refs != 0 && with_refs != a.players.len() {
            return Err(Error::Schema(format!(
                "line {}: either every player or none carries a sequence_ref",
                lineno + 1
            )));
        }
        let mut player_sequences = Vec::new();
        for p in &a.players {
            if let Some(r) = &p.sequence_ref {
                player_sequences.push(sequence(lookup(r)?, r)?);
            }
        }
        let mut candidate_sequences = Vec::new();
        let mut candidate_names = Vec::new();
        for c in &a.candidates {
            let mut s = sequence(lookup(&c.sequence_ref)?, &c.sequence_ref)?;
            s.source = SequenceSource::TrackerStub;
            candidate_sequences.push(s);
            candidate_names.push(c.name.clone());
        }
        let record = ClipRecord {
            video_id: a.video_id,
            game_id: a.game_id,
            caption: a.caption,
            event_type,
            player_names: a.players.iter().map(|p| p.name.clone()).collect(),
            player_sequences,
            boxes: a.players.iter().map(|p| p.bbox).collect(),
            candidate_sequences,
            candidate_names,
            video_features,
        };
        record
            .validate()
            .map_err(|e| Error::Schema(format!("line {}: {e}", lineno + 1)))?;
        records.push(record);
    }
    Ok(records)
}

fn sequence(t: Tensor, name: &str) -> Result<PlayerSequence> {
    if t.shape().len() != 2 {
        return Err(Error::Schema(format!("sequence `{name}` must be rank 2, got {:?}", t.shape())));
    }
    Ok(PlayerSequence::new(t, None, SequenceSource::Dataset))
}

pub fn save_annotations(path: &Path, records: &[ClipRecord]) -> Result<()> {
    let mut tensors = Vec::new();
    let mut out = fs::File::create(path)?;
    for r in records {
        let video_ref = format!("{}/video", r.video_id);
        tensors.push((video_ref.clone(), r.video_features.clone()));
        let players = r
            .player_names
            .iter()
            .enumerate()
            .map(|(i, name)| {
                let sequence_ref = r.player_sequences.get(i).map(|s| {
                    let key = format!("{}/player/{i}", r.video_id);
                    tensors.push((key.clone(), s.frames.clone()));
                    key
                });
                PlayerLine {
                    name: name.clone(),
                    sequence_ref,
                    bbox: r.boxes.get(i).copied().flatten(),
                }
            })
            .collect();
        let candidates = r
            .candidate_sequences
            .iter()
            .enumerate()
            .map(|(j, s)| {
                let key = format!("{}/cand/{j}", r.video_id);
                tensors.push((key.clone(), s.frames.clone()));
                CandidateLine {
                    sequence_ref: key,
                    name: r.candidate_names.get(j).cloned().flatten(),
                }
            })
            .collect();
        let line = AnnotationLine {
            video_id: r.video_id.clone(),
            game_id: r.game_id.clone(),
            caption: r.caption.clone(),
            event_type: r.event_type.as_str().to_string(),
            players,
            video_ref,
            candidates,
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    archive::write_archive(&sidecar_path(path), &tensors)
}
