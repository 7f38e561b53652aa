//! Synthetic clip corpus with learnable structure.
//!
//! Each player owns a latent identity vector `u_p`. A player's track in a
//! clip is `u_p + σ·(√ρ·w + √(1−ρ)·ε_t)`: `w` is a per-track appearance
//! offset shared by all frames of the track (lighting, angle), `ε_t` is
//! per-frame noise. Video frames mix, through fixed random directions:
//!
//! * an ordered pair of phase vectors (first half, second half) chosen per
//!   event type, so some events differ only in order;
//! * a make/miss ramp for shots and a per-distance offset;
//! * in a random half of the frames, the acting player's appearance offset
//!   `w` with an "acting" marker; in the other half the receiving player's
//!   offset with a "receiving" marker (nothing for one-player events),
//!   plus an optional fixed identity trace `M·u_p`;
//! * Gaussian frame noise.
//!
//! With the default settings the video alone does not reveal who is on
//! screen, only which tracks act in the clip; names have to come from
//! the tracks, and roles from matching tracks against frames. Role frames
//! are scattered, so the phase order is only visible through positions.
//!
//! Captions come from fixed event templates filled with player names and
//! quantized distances.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::clip::{ClipRecord, EventType};
use crate::captioner::Vocabulary;
use crate::error::{Error, Result};
use crate::identity::{PlayerCatalog, PlayerSequence, SequenceSource};
use crate::metrics::tokenize;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_games: usize,
    pub n_players: usize,
    pub clips_per_game: usize,
    /// Overrides `n_games × clips_per_game`; clips are dealt to games in
    /// turn.
    pub total_clips: Option<usize>,
    /// Uses the first `n_event_types` entries of [`EventType::ALL`].
    pub n_event_types: usize,
    pub d_in: usize,
    /// Standard deviation of player-track noise.
    pub noise_sigma: f64,
    /// Share ρ of track noise variance that is constant over the track.
    pub track_noise_share: f64,
    pub seed: u64,
    /// When set, every player is named in exactly this many clips and
    /// `clips_per_game` is ignored.
    pub sequences_per_player: Option<usize>,
    pub seq_len: usize,
    pub min_frames: usize,
    pub max_frames: usize,
    /// Unlabelled blended tracks added to each clip's tracker candidates.
    pub distractors: usize,
    pub video_noise: f64,
    /// Weight of the fixed identity trace `M·u_p` in video frames.
    pub identity_strength: f64,
    /// Weight of the per-track appearance offset in video frames.
    pub appearance_strength: f64,
    pub role_strength: f64,
    pub phase_strength: f64,
    pub outcome_strength: f64,
    pub distance_strength: f64,
    pub two_point_distances: Vec<u32>,
    pub three_point_distances: Vec<u32>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_games: 40,
            n_players: 16,
            clips_per_game: 12,
            total_clips: None,
            n_event_types: 9,
            d_in: 16,
            noise_sigma: 0.5,
            track_noise_share: 0.5,
            seed: 0,
            sequences_per_player: None,
            seq_len: 8,
            min_frames: 8,
            max_frames: 12,
            distractors: 0,
            video_noise: 0.3,
            identity_strength: 0.0,
            appearance_strength: 1.0,
            role_strength: 1.0,
            phase_strength: 1.0,
            outcome_strength: 1.0,
            distance_strength: 0.8,
            two_point_distances: vec![4, 10, 16, 22],
            three_point_distances: vec![24, 26, 28],
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.n_games == 0 || self.n_players < 2 || self.d_in == 0 || self.seq_len == 0 {
            return bad("n_games, d_in and seq_len must be ≥ 1 and n_players ≥ 2");
        }
        if self.sequences_per_player.is_none()
            && self.total_clips.unwrap_or(self.n_games * self.clips_per_game) == 0
        {
            return bad("the corpus must have at least one clip");
        }
        if self.sequences_per_player == Some(0) {
            return bad("sequences_per_player must be ≥ 1");
        }
        if !(1..=EventType::ALL.len()).contains(&self.n_event_types) {
            return bad("n_event_types must be in 1..=9");
        }
        if self.min_frames < 2 || self.max_frames < self.min_frames {
            return bad("need 2 ≤ min_frames ≤ max_frames");
        }
        if self.noise_sigma < 0.0 || self.video_noise < 0.0 {
            return bad("noise levels must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.track_noise_share) {
            return bad("track_noise_share must be in [0, 1]");
        }
        if self.n_players > FIRST_INITIALS.len() * SURNAMES.len() {
            return bad("too many players for the name generator");
        }
        let all_in_range = |d: &[u32]| !d.is_empty() && d.iter().all(|x| (1..=30).contains(x));
        if !all_in_range(&self.two_point_distances) || !all_in_range(&self.three_point_distances) {
            return bad("distance lists must be nonempty with values in 1..=30");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub records: Vec<ClipRecord>,
    pub catalog: PlayerCatalog,
    pub vocab: Vocabulary,
}

const FIRST_INITIALS: &[char] = &[
    'L', 'K', 'S', 'J', 'D', 'A', 'C', 'G', 'T', 'R', 'M', 'B', 'P', 'N', 'E', 'Z',
];
const SURNAMES: &[&str] = &[
    "Reed", "Moss", "Hale", "Ortiz", "Banks", "Cole", "Dunn", "Frye", "Grant", "Hayes", "Irving",
    "Jensen", "Knox", "Lowe", "Marsh", "Nash", "Okafor", "Price", "Quinn", "Rhodes", "Sims",
    "Tate", "Vance", "Wells", "Young", "Abbott", "Boone", "Crane", "Drake", "Ellis", "Flynn",
    "Gibbs",
];

/// Name of player `p`: unique for `p < 16 × 32`.
pub fn player_name(p: usize) -> String {
    let surname = SURNAMES[p % SURNAMES.len()];
    let initial = FIRST_INITIALS[(p / SURNAMES.len() + p) % FIRST_INITIALS.len()];
    format!("{initial}. {surname}")
}

/// Every `"X. Surname"` pair in a caption, in order.
pub fn extract_player_names(caption: &str) -> Vec<String> {
    let words: Vec<&str> = caption.split_whitespace().collect();
    let mut names = Vec::new();
    let mut i = 0;
    while i + 1 < words.len() {
        let w = words[i].as_bytes();
        if w.len() == 2 && w[0].is_ascii_uppercase() && w[1] == b'.' {
            names.push(format!("{} {}", words[i], words[i + 1]));
            i += 2;
        } else {
            i += 1;
        }
    }
    names
}

pub fn is_two_player(e: EventType) -> bool {
    matches!(e, EventType::Block | EventType::Foul | EventType::Turnover | EventType::Assist)
}

/// First- and second-half phase vector indices per event. Pairs such as
/// block/foul use the same vectors in opposite order.
fn phase_pair(e: EventType) -> (usize, usize) {
    match e {
        EventType::Block => (0, 1),
        EventType::Foul => (1, 0),
        EventType::DefensiveRebound => (2, 3),
        EventType::OffensiveRebound => (3, 2),
        EventType::Turnover => (0, 2),
        EventType::TwoPointShot => (2, 0),
        EventType::ThreePointShot => (1, 3),
        EventType::Layup => (3, 1),
        EventType::Assist => (0, 3),
    }
}

pub fn caption_for(e: EventType, a: &str, b: &str, made: bool, distance: u32) -> String {
    let verb = if made { "makes" } else { "misses" };
    match e {
        EventType::Block => format!("{a} blocks the layup of {b}"),
        EventType::Foul => format!("{a} personal foul on {b}"),
        EventType::DefensiveRebound => format!("{a} defensive rebound"),
        EventType::OffensiveRebound => format!("{a} offensive rebound"),
        EventType::Turnover => format!("{a} bad pass steal by {b}"),
        EventType::TwoPointShot => format!("{a} {verb} {distance} ft jump shot"),
        EventType::ThreePointShot => format!("{a} {verb} {distance} ft 3pt jump shot"),
        EventType::Layup => format!("{a} {verb} driving layup"),
        EventType::Assist => format!("{a} makes {distance} ft jump shot assist by {b}"),
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize, std: f64) -> Vec<f64> {
    (0..n).map(|_| std * normal(rng)).collect()
}

fn unit(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let v = gaussian(rng, n, 1.0);
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    v.into_iter().map(|x| x * (n as f64).sqrt() / norm).collect()
}

/// Track frames `centre + σ·(√ρ·appearance + √(1−ρ)·ε_t)`.
fn track(
    rng: &mut ChaCha8Rng,
    centre: &[f64],
    appearance: &[f64],
    len: usize,
    cfg: &SynthConfig,
) -> Tensor {
    let d = centre.len();
    let shared = cfg.noise_sigma * cfg.track_noise_share.sqrt();
    let own = cfg.noise_sigma * (1.0 - cfg.track_noise_share).sqrt();
    let mut data = Vec::with_capacity(len * d);
    for _ in 0..len {
        for i in 0..d {
            data.push(centre[i] + shared * appearance[i] + own * normal(rng));
        }
    }
    Tensor::new(vec![len, d], data).expect("extent matches")
}

/// Player slots in clip order: concatenated random permutations, repaired
/// so that no two-player clip names the same player twice.
fn fill_slots(rng: &mut ChaCha8Rng, n_players: usize, needed: usize, events: &[EventType]) -> Vec<Vec<usize>> {
    let mut slots = Vec::with_capacity(needed + n_players);
    while slots.len() < needed {
        let mut perm: Vec<usize> = (0..n_players).collect();
        perm.shuffle(rng);
        slots.extend(perm);
    }
    let mut out = Vec::with_capacity(events.len());
    let mut i = 0;
    for &e in events {
        if is_two_player(e) {
            if slots[i] == slots[i + 1] {
                let j = (i + 2..slots.len())
                    .find(|&j| slots[j] != slots[i])
                    .expect("permutations of ≥ 2 players");
                slots.swap(i + 1, j);
            }
            out.push(vec![slots[i], slots[i + 1]]);
            i += 2;
        } else {
            out.push(vec![slots[i]]);
            i += 1;
        }
    }
    out
}

pub fn synth_generate(cfg: &SynthConfig) -> Result<SynthCorpus> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let d = cfg.d_in;
    let event_types = &EventType::ALL[..cfg.n_event_types];

    let identities: Vec<Vec<f64>> = (0..cfg.n_players).map(|_| gaussian(&mut rng, d, 1.0)).collect();
    let names: Vec<String> = (0..cfg.n_players).map(player_name).collect();
    let catalog = PlayerCatalog::new(names.clone())?;

    let phases: Vec<Vec<f64>> = (0..4).map(|_| unit(&mut rng, d)).collect();
    let roles: Vec<Vec<f64>> = (0..2).map(|_| unit(&mut rng, d)).collect();
    let outcome = unit(&mut rng, d);
    let max_distance = 30;
    let distance_dirs: Vec<Vec<f64>> = (0..=max_distance).map(|_| unit(&mut rng, d)).collect();
    let mixing: Vec<f64> = gaussian(&mut rng, d * d, 1.0 / (d as f64).sqrt());

    // Events first, then players, so balanced mode can size the corpus.
    let mut events = Vec::new();
    let needed = match cfg.sequences_per_player {
        None => {
            let n = cfg.total_clips.unwrap_or(cfg.n_games * cfg.clips_per_game);
            for _ in 0..n {
                events.push(event_types[rng.gen_range(0..event_types.len())]);
            }
            events.iter().map(|&e| if is_two_player(e) { 2 } else { 1 }).sum()
        }
        Some(per) => {
            let total = per * cfg.n_players;
            let singles: Vec<EventType> =
                event_types.iter().copied().filter(|&e| !is_two_player(e)).collect();
            let mut used = 0;
            while used < total {
                let mut e = event_types[rng.gen_range(0..event_types.len())];
                if is_two_player(e) && used + 2 > total {
                    let Some(&s) = singles.first() else {
                        return Err(Error::Config(
                            "balanced corpus needs a one-player event type".into(),
                        ));
                    };
                    e = s;
                }
                used += if is_two_player(e) { 2 } else { 1 };
                events.push(e);
            }
            total
        }
    };
    let players = fill_slots(&mut rng, cfg.n_players, needed, &events);

    let mut records = Vec::with_capacity(events.len());
    let game_width = format!("{}", cfg.n_games).len().max(2);
    for (c, (&event, who)) in events.iter().zip(&players).enumerate() {
        let game = c % cfg.n_games;
        let game_id = format!("g{game:0game_width$}");
        let video_id = format!("{game_id}-{c:05}");

        let made = rng.gen_bool(0.5);
        let distance = match event {
            EventType::ThreePointShot => {
                cfg.three_point_distances[rng.gen_range(0..cfg.three_point_distances.len())]
            }
            _ => cfg.two_point_distances[rng.gen_range(0..cfg.two_point_distances.len())],
        };
        let a = names[who[0]].as_str();
        let b = who.get(1).map(|&p| names[p].as_str()).unwrap_or("");
        let caption = caption_for(event, a, b, made, distance);

        let n_frames = rng.gen_range(cfg.min_frames..=cfg.max_frames);
        let mut frame_roles: Vec<usize> = (0..n_frames).map(|t| usize::from(2 * t >= n_frames)).collect();
        frame_roles.shuffle(&mut rng);
        let (p0, p1) = phase_pair(event);
        let shot = matches!(
            event,
            EventType::TwoPointShot | EventType::ThreePointShot | EventType::Layup
        );
        let has_distance = matches!(
            event,
            EventType::TwoPointShot | EventType::ThreePointShot | EventType::Assist
        );
        let sign = if made { 1.0 } else { -1.0 };
        let appearances: Vec<Vec<f64>> = who.iter().map(|_| gaussian(&mut rng, d, 1.0)).collect();
        let traces: Vec<Vec<f64>> = who
            .iter()
            .zip(&appearances)
            .map(|(&p, w)| {
                (0..d)
                    .map(|i| {
                        let fixed: f64 = (0..d).map(|j| mixing[i * d + j] * identities[p][j]).sum();
                        cfg.identity_strength * fixed + cfg.appearance_strength * w[i]
                    })
                    .collect()
            })
            .collect();
        let mut video = Vec::with_capacity(n_frames * d);
        for (t, &slot) in frame_roles.iter().enumerate() {
            let second_half = 2 * t >= n_frames;
            let phase = &phases[if second_half { p1 } else { p0 }];
            let ramp = (t + 1) as f64 / n_frames as f64;
            let trace = traces.get(slot);
            for i in 0..d {
                let mut v = cfg.phase_strength * phase[i];
                if shot {
                    v += cfg.outcome_strength * sign * ramp * outcome[i];
                }
                if has_distance {
                    v += cfg.distance_strength * distance_dirs[distance as usize][i];
                }
                if let Some(tr) = trace {
                    v += tr[i] + cfg.role_strength * roles[slot][i];
                }
                v += cfg.video_noise * normal(&mut rng);
                video.push(v);
            }
        }
        let video_features = Tensor::new(vec![n_frames, d], video)?;

        let player_sequences: Vec<PlayerSequence> = who
            .iter()
            .zip(&appearances)
            .map(|(&p, w)| {
                let frames = track(&mut rng, &identities[p], w, cfg.seq_len, cfg);
                PlayerSequence::new(frames, Some(p), SequenceSource::Dataset)
            })
            .collect();

        // The tracker sees the same players under the same appearance.
        let mut candidates: Vec<(PlayerSequence, Option<String>)> = who
            .iter()
            .zip(&appearances)
            .map(|(&p, w)| {
                let frames = track(&mut rng, &identities[p], w, cfg.seq_len, cfg);
                (
                    PlayerSequence::new(frames, None, SequenceSource::TrackerStub),
                    Some(names[p].clone()),
                )
            })
            .collect();
        for _ in 0..cfg.distractors {
            let p = rng.gen_range(0..cfg.n_players);
            let q = (p + rng.gen_range(1..cfg.n_players)) % cfg.n_players;
            let centre: Vec<f64> =
                (0..d).map(|i| 0.5 * identities[p][i] + 0.5 * identities[q][i]).collect();
            let w = gaussian(&mut rng, d, 1.0);
            let frames = track(&mut rng, &centre, &w, cfg.seq_len, cfg);
            candidates.push((PlayerSequence::new(frames, None, SequenceSource::TrackerStub), None));
        }
        candidates.shuffle(&mut rng);
        let (candidate_sequences, candidate_names) = candidates.into_iter().unzip();

        records.push(ClipRecord {
            video_id,
            game_id,
            caption,
            event_type: event,
            player_names: who.iter().map(|&p| names[p].clone()).collect(),
            player_sequences,
            boxes: vec![None; who.len()],
            candidate_sequences,
            candidate_names,
            video_features,
        });
    }

    let vocab = corpus_vocabulary(&records, &catalog);
    Ok(SynthCorpus { records, catalog, vocab })
}

/// Vocabulary over every caption token and every catalog name token.
pub fn corpus_vocabulary(records: &[ClipRecord], catalog: &PlayerCatalog) -> Vocabulary {
    let mut tokens: Vec<String> = Vec::new();
    for n in catalog.names() {
        tokens.extend(tokenize(n));
    }
    for r in records {
        tokens.extend(tokenize(&r.caption));
    }
    Vocabulary::build(tokens)
}
