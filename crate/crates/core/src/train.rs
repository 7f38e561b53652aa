//! Training loops and evaluation.
//!
//! Every source of randomness is derived from the configured seed and the
//! epoch index, so a run resumed from an end-of-epoch checkpoint replays
//! exactly what the uninterrupted run would have done.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{build_player_centric_set, ClipRecord};
use crate::error::{Error, Result};
use crate::graph::{Graph, Mode};
use crate::identity::{encode_player_sequence, identify, mca_mpca, pin_loss, PlayerSequence};
use crate::metrics::{evaluate_corpus, EvalPair, EvalReport, MetricConfig};
use crate::model::{AblationFlags, Generated, IavcModel};
use crate::optim::Adam;
use crate::params::ParameterStore;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PinTrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// Every `holdout_every`-th sequence of each player is held out for
    /// the per-epoch accuracy report (0 disables the held-out slice).
    pub holdout_every: usize,
    pub seed: u64,
}

impl Default for PinTrainConfig {
    fn default() -> Self {
        PinTrainConfig { epochs: 50, lr: 3e-3, batch_size: 32, holdout_every: 5, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PinEpoch {
    pub epoch: usize,
    pub loss: f64,
    pub mca: Option<f64>,
    pub mpca: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CaptionTrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub freeze_pin: bool,
    pub flags: AblationFlags,
    pub seed: u64,
}

impl Default for CaptionTrainConfig {
    fn default() -> Self {
        CaptionTrainConfig {
            epochs: 100,
            lr: 2e-3,
            batch_size: 8,
            freeze_pin: true,
            flags: AblationFlags::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionEpoch {
    pub epoch: usize,
    /// Mean summed token NLL per caption.
    pub loss: f64,
}

fn epoch_rng(seed: u64, stream: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos((epoch as u128) << 32);
    rng
}

const SHUFFLE_STREAM: u64 = 1;
const DROPOUT_STREAM: u64 = 2;

/// Labelled key-player sequences split into (train, held-out).
pub type LabelledSequences = Vec<(PlayerSequence, usize)>;

pub fn pin_split(
    model: &IavcModel,
    records: &[ClipRecord],
    holdout_every: usize,
) -> Result<(LabelledSequences, LabelledSequences)> {
    let set = build_player_centric_set(records)?;
    let mut train = Vec::new();
    let mut held = Vec::new();
    for (name, clips) in &set.by_player {
        let label = model
            .catalog
            .index(name)
            .ok_or_else(|| Error::Schema(format!("player `{name}` is not in the catalog")))?;
        for (i, (_, seq)) in clips.iter().enumerate() {
            let item = (seq.clone(), label);
            if holdout_every > 0 && i % holdout_every == holdout_every - 1 {
                held.push(item);
            } else {
                train.push(item);
            }
        }
    }
    Ok((train, held))
}

/// Accuracy of the classifier on labelled sequences.
pub fn pin_accuracy(model: &IavcModel, items: &[(PlayerSequence, usize)]) -> Result<(f64, f64)> {
    let mut preds = Vec::with_capacity(items.len());
    let mut truth = Vec::with_capacity(items.len());
    for (seq, label) in items {
        preds.push(identify(&model.store, &model.cfg, seq, &model.catalog)?.class_index);
        truth.push(*label);
    }
    mca_mpca(&preds, &truth)
}

fn with_only_trainable<T>(
    store: &mut ParameterStore,
    prefix: &str,
    f: impl FnOnce(&mut ParameterStore) -> Result<T>,
) -> Result<T> {
    let saved: Vec<bool> = store.iter().map(|e| e.trainable).collect();
    store.set_trainable("", false);
    store.set_trainable(prefix, true);
    let out = f(store);
    for (e, t) in store.iter_mut().zip(saved) {
        e.trainable = t;
    }
    out
}

/// Trains the player classifier on the key-player sequences of `records`.
pub fn train_pin(
    model: &mut IavcModel,
    records: &[ClipRecord],
    opts: &PinTrainConfig,
    adam: &mut Adam,
    on_epoch: &mut dyn FnMut(&PinEpoch),
) -> Result<Vec<PinEpoch>> {
    let (train, held) = pin_split(model, records, opts.holdout_every)?;
    if train.is_empty() {
        return Err(Error::EmptyInput);
    }
    let batch_size = opts.batch_size.max(1);
    let mut log = Vec::with_capacity(opts.epochs);
    for epoch in 0..opts.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut epoch_rng(opts.seed, SHUFFLE_STREAM, epoch));
        let mut total = 0.0;
        for batch in order.chunks(batch_size) {
            let cfg = model.cfg.clone();
            let loss = with_only_trainable(&mut model.store, "pin.", |store| {
                let mut g = Graph::new();
                let mut items = Vec::with_capacity(batch.len());
                for &i in batch {
                    let (seq, label) = &train[i];
                    items.push((encode_player_sequence(&mut g, store, &cfg, seq)?, *label));
                }
                let loss = pin_loss(&mut g, store, &items)?;
                store.zero_grads();
                g.backward(loss, store)?;
                adam.step(store);
                Ok(g.scalar(loss))
            })?;
            total += loss * batch.len() as f64;
        }
        let (mca, mpca) = if held.is_empty() {
            (None, None)
        } else {
            let (a, b) = pin_accuracy(model, &held)?;
            (Some(a), Some(b))
        };
        let entry = PinEpoch { epoch, loss: total / train.len() as f64, mca, mpca };
        on_epoch(&entry);
        log.push(entry);
    }
    model.store.zero_grads();
    Ok(log)
}

/// Trains the captioner for epochs `start_epoch..opts.epochs`.
pub fn train_captioner(
    model: &mut IavcModel,
    records: &[ClipRecord],
    opts: &CaptionTrainConfig,
    adam: &mut Adam,
    start_epoch: usize,
    on_epoch: &mut dyn FnMut(&CaptionEpoch),
) -> Result<Vec<CaptionEpoch>> {
    opts.flags.validate()?;
    if records.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let batch_size = opts.batch_size.max(1);
    let saved: Vec<bool> = model.store.iter().map(|e| e.trainable).collect();
    if opts.freeze_pin {
        model.store.set_trainable("pin.", false);
    }
    let mut log = Vec::new();
    let result = (|| {
        for epoch in start_epoch..opts.epochs {
            let mut order: Vec<usize> = (0..records.len()).collect();
            order.shuffle(&mut epoch_rng(opts.seed, SHUFFLE_STREAM, epoch));
            let mut dropout = epoch_rng(opts.seed, DROPOUT_STREAM, epoch);
            let mut total = 0.0;
            for batch in order.chunks(batch_size) {
                model.store.zero_grads();
                let scale = 1.0 / batch.len() as f64;
                for &i in batch {
                    let mut g = Graph::new();
                    let loss =
                        model.caption_loss(&mut g, &records[i], opts.flags, Mode::Train, &mut dropout)?;
                    total += g.scalar(loss);
                    let scaled = g.scale(loss, scale);
                    g.backward(scaled, &mut model.store)?;
                }
                adam.step(&mut model.store);
            }
            let entry = CaptionEpoch { epoch, loss: total / records.len() as f64 };
            on_epoch(&entry);
            log.push(entry);
        }
        Ok(())
    })();
    model.store.zero_grads();
    for (e, t) in model.store.iter_mut().zip(saved) {
        e.trainable = t;
    }
    result.map(|_| log)
}

/// Generates a caption per clip, in input order.
pub fn generate_all(
    model: &IavcModel,
    records: &[ClipRecord],
    flags: AblationFlags,
    beam_size: usize,
) -> Result<Vec<Generated>> {
    records.iter().map(|r| model.generate(r, flags, beam_size)).collect()
}

/// Scores generated captions against the records' captions. When the
/// records carry labelled tracker candidates, classifier MCA/MPCA over
/// them is added to the corpus block.
pub fn evaluate_model(
    model: &IavcModel,
    records: &[ClipRecord],
    flags: AblationFlags,
    beam_size: usize,
    metric_cfg: &MetricConfig,
    run_config: serde_json::Value,
) -> Result<(Vec<Generated>, EvalReport)> {
    let generated = generate_all(model, records, flags, beam_size)?;
    let pairs: Vec<EvalPair> = records
        .iter()
        .zip(&generated)
        .map(|(r, g)| EvalPair {
            video_id: r.video_id.clone(),
            candidate: g.caption.clone(),
            references: vec![r.caption.clone()],
            event_type: Some(r.event_type.to_string()),
        })
        .collect();
    let mut report = evaluate_corpus(&pairs, metric_cfg, run_config)?;
    let labelled = labelled_candidates(model, records);
    if !labelled.is_empty() {
        let (mca, mpca) = pin_accuracy(model, &labelled)?;
        report.corpus.mca = Some(mca);
        report.corpus.mpca = Some(mpca);
    }
    Ok((generated, report))
}

/// Tracker candidates whose ground-truth name is in the model's catalog.
pub fn labelled_candidates(model: &IavcModel, records: &[ClipRecord]) -> LabelledSequences {
    let mut out = Vec::new();
    for r in records {
        for (s, n) in r.candidate_sequences.iter().zip(&r.candidate_names) {
            if let Some(label) = n.as_deref().and_then(|n| model.catalog.index(n)) {
                out.push((s.clone(), label));
            }
        }
    }
    out
}
