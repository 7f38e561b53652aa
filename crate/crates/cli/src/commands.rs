use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use iavc::captioner::Vocabulary;
use iavc::config::d_down_grid;
use iavc::data::{
    load_annotations, load_checkpoint, save_annotations, save_checkpoint, split_by_game,
    synth::corpus_vocabulary, synth_generate, ClipRecord, OptimizerState, SplitSpec,
};
use iavc::identity::PlayerCatalog;
use iavc::metrics::{evaluate_corpus, tokenize, EvalPair, EvalReport};
use iavc::optim::Adam;
use iavc::train::{
    evaluate_model, generate_all, labelled_candidates, pin_accuracy, train_captioner, train_pin,
    CaptionEpoch, PinEpoch,
};
use iavc::{Error, IavcModel, Result};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{RunConfig, SplitSide};

pub struct Corpus {
    pub records: Vec<ClipRecord>,
    pub catalog: PlayerCatalog,
    pub vocab: Vocabulary,
}

/// Loads `rc.data`, or generates the synthetic corpus. Fixes `rc.model.d_in`
/// to the data's frame width.
pub fn load_corpus(rc: &mut RunConfig) -> Result<Corpus> {
    let corpus = match &rc.data {
        Some(path) => {
            let records = load_annotations(path)?;
            let mut names = BTreeSet::new();
            for r in &records {
                names.extend(r.player_names.iter().cloned());
                names.extend(r.candidate_names.iter().flatten().cloned());
            }
            let catalog = PlayerCatalog::new(names.into_iter().collect())?;
            let vocab = corpus_vocabulary(&records, &catalog);
            Corpus { records, catalog, vocab }
        }
        None => {
            let s = synth_generate(&rc.synth)?;
            Corpus { records: s.records, catalog: s.catalog, vocab: s.vocab }
        }
    };
    let first = corpus.records.first().ok_or(Error::EmptyCorpus)?;
    rc.model.d_in = first.video_features.cols();
    Ok(corpus)
}

pub fn split(rc: &RunConfig, records: &[ClipRecord]) -> Result<(Vec<ClipRecord>, Vec<ClipRecord>)> {
    let spec = match &rc.split {
        Some(s) => s.clone(),
        None => SplitSpec::by_ratio(records)?,
    };
    split_by_game(records, &spec)
}

fn select(rc: &RunConfig, records: Vec<ClipRecord>, side: SplitSide) -> Result<Vec<ClipRecord>> {
    if side == SplitSide::All {
        return Ok(records);
    }
    let (train, test) = split(rc, &records)?;
    Ok(if side == SplitSide::Train { train } else { test })
}

fn out_path(rc: &RunConfig, default: &str) -> PathBuf {
    rc.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn require_checkpoint(rc: &RunConfig) -> Result<&Path> {
    rc.checkpoint
        .as_deref()
        .ok_or_else(|| Error::MissingCheckpoint("no checkpoint given (use --checkpoint)".into()))
}

/// Companion file holding the run configuration of a JSON Lines artifact.
pub fn run_config_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".run.json");
    PathBuf::from(s)
}

fn write_json(path: &Path, v: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(v)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub struct PinRun {
    pub model: IavcModel,
    pub log: Vec<PinEpoch>,
    pub seconds: f64,
}

pub fn cmd_train_pin(rc: &mut RunConfig, on_epoch: &mut dyn FnMut(&PinEpoch)) -> Result<PinRun> {
    let corpus = load_corpus(rc)?;
    let (train, _) = split(rc, &corpus.records)?;
    let mut model = IavcModel::new(rc.model.clone(), corpus.catalog, corpus.vocab)?;
    let mut adam = Adam::new(rc.pin.lr);
    let start = Instant::now();
    let log = train_pin(&mut model, &train, &rc.pin, &mut adam, on_epoch)?;
    let seconds = start.elapsed().as_secs_f64();
    let extra = json!({ "run_config": rc.to_value(), "stage": "pin", "pin_log": log });
    save_checkpoint(&out_path(rc, "pin.ckpt"), &model.to_checkpoint(None, extra))?;
    Ok(PinRun { model, log, seconds })
}

pub struct CaptionRun {
    pub model: IavcModel,
    pub log: Vec<CaptionEpoch>,
    pub seconds: f64,
}

/// Trains from the checkpoint's parameters. With `rc.resume`, the
/// optimizer state and completed-epoch count come from the checkpoint too.
pub fn cmd_train_captioner(
    rc: &mut RunConfig,
    on_epoch: &mut dyn FnMut(&CaptionEpoch),
) -> Result<CaptionRun> {
    let ck = load_checkpoint(require_checkpoint(rc)?)?;
    let optimizer = ck.optimizer.clone();
    let done = ck.extra.get("captioner_epochs_done").and_then(Value::as_u64).unwrap_or(0) as usize;
    let pin_log = ck.extra.get("pin_log").cloned().unwrap_or(Value::Null);
    let mut model = IavcModel::from_checkpoint(ck)?;
    let mut corpus_rc = rc.clone();
    let corpus = load_corpus(&mut corpus_rc)?;
    rc.model = model.cfg.clone();
    let (train, _) = split(rc, &corpus.records)?;

    let mut adam = Adam::new(rc.captioner.lr);
    let start_epoch = if rc.resume {
        if let Some(OptimizerState { step, moments }) = optimizer {
            adam.restore(step, moments);
        }
        done
    } else {
        0
    };
    let start = Instant::now();
    let log = train_captioner(&mut model, &train, &rc.captioner, &mut adam, start_epoch, on_epoch)?;
    let seconds = start.elapsed().as_secs_f64();
    let (step, moments) = adam.state();
    let extra = json!({
        "run_config": rc.to_value(),
        "stage": "captioner",
        "captioner_epochs_done": rc.captioner.epochs.max(start_epoch),
        "captioner_log": log,
        "pin_log": pin_log,
    });
    let ck = model.to_checkpoint(Some(OptimizerState { step, moments }), extra);
    save_checkpoint(&out_path(rc, "captioner.ckpt"), &ck)?;
    Ok(CaptionRun { model, log, seconds })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionLine {
    pub video_id: String,
    pub caption: String,
    #[serde(default)]
    pub identified_players: Vec<iavc::model::IdentifiedName>,
}

pub fn cmd_generate(rc: &mut RunConfig) -> Result<Vec<CaptionLine>> {
    let model = IavcModel::from_checkpoint(load_checkpoint(require_checkpoint(rc)?)?)?;
    let corpus = load_corpus(rc)?;
    rc.model = model.cfg.clone();
    let records = select(rc, corpus.records, rc.generate.split)?;
    let beam = rc.generate.beam_size.unwrap_or(model.cfg.beam_size);
    let generated = generate_all(&model, &records, rc.captioner.flags, beam)?;
    let lines: Vec<CaptionLine> = records
        .iter()
        .zip(generated)
        .map(|(r, g)| CaptionLine {
            video_id: r.video_id.clone(),
            caption: g.caption,
            identified_players: g.identified_players,
        })
        .collect();
    let out = out_path(rc, "captions.jsonl");
    let mut f = fs::File::create(&out)?;
    for l in &lines {
        serde_json::to_writer(&mut f, l)?;
        f.write_all(b"\n")?;
    }
    write_json(&run_config_path(&out), &rc.to_value())?;
    Ok(lines)
}

#[derive(Deserialize)]
struct ReferenceLine {
    video_id: String,
    caption: String,
    #[serde(default)]
    event_type: Option<String>,
}

fn read_lines<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::Schema(format!("{} line {}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(out)
}

/// Scores a candidates file against a references file, both JSON Lines
/// keyed by `video_id`. Annotation files work as references. With a
/// checkpoint and a references file that carries labelled tracker
/// candidates, classifier MCA/MPCA are added.
pub fn cmd_eval(rc: &mut RunConfig) -> Result<EvalReport> {
    let missing = |what: &str| Error::Config(format!("eval needs --{what}"));
    let cand_path = rc.eval.candidates.clone().ok_or_else(|| missing("candidates"))?;
    let ref_path = rc.eval.references.clone().ok_or_else(|| missing("references"))?;
    let candidates: Vec<CaptionLine> = read_lines(&cand_path)?;
    let references: Vec<ReferenceLine> = read_lines(&ref_path)?;

    let mut by_id: HashMap<&str, &CaptionLine> = HashMap::new();
    for c in &candidates {
        if by_id.insert(&c.video_id, c).is_some() {
            return Err(Error::Alignment(format!("candidate `{}` appears twice", c.video_id)));
        }
    }
    let ref_ids: BTreeSet<&str> = references.iter().map(|r| r.video_id.as_str()).collect();
    if ref_ids.len() != references.len() {
        return Err(Error::Alignment("duplicate reference video_id".into()));
    }
    let cand_ids: BTreeSet<&str> = by_id.keys().copied().collect();
    if cand_ids != ref_ids {
        let only_c = cand_ids.difference(&ref_ids).next();
        let only_r = ref_ids.difference(&cand_ids).next();
        return Err(Error::Alignment(format!(
            "{} candidates vs {} references; first unmatched: {:?} / {:?}",
            cand_ids.len(),
            ref_ids.len(),
            only_c,
            only_r
        )));
    }
    let pairs: Vec<EvalPair> = references
        .iter()
        .map(|r| EvalPair {
            video_id: r.video_id.clone(),
            candidate: by_id[r.video_id.as_str()].caption.clone(),
            references: vec![r.caption.clone()],
            event_type: r.event_type.clone(),
        })
        .collect();
    let mut report = evaluate_corpus(&pairs, &rc.metrics, rc.to_value())?;

    if let Some(ck) = &rc.checkpoint {
        let model = IavcModel::from_checkpoint(load_checkpoint(ck)?)?;
        let records = load_annotations(&ref_path)?;
        let labelled = labelled_candidates(&model, &records);
        if !labelled.is_empty() {
            let (mca, mpca) = pin_accuracy(&model, &labelled)?;
            report.corpus.mca = Some(mca);
            report.corpus.mpca = Some(mpca);
        }
    }
    let out = out_path(rc, "report.json");
    fs::write(&out, report.to_json()? + "\n")?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub d_down: usize,
    pub n_q: usize,
    pub bleu4: f64,
    pub rouge_l: f64,
    pub meteor: f64,
    pub cider: f64,
    pub final_loss: f64,
}

/// Trains and scores every variant from the same classifier checkpoint:
/// each module-flag variant at the checkpoint geometry, then each
/// bottleneck width and query count with the full model.
pub fn cmd_ablate(rc: &mut RunConfig, on_row: &mut dyn FnMut(&AblationRow)) -> Result<Vec<AblationRow>> {
    let base = IavcModel::from_checkpoint(load_checkpoint(require_checkpoint(rc)?)?)?;
    let corpus = load_corpus(rc)?;
    rc.model = base.cfg.clone();
    let (train, test) = split(rc, &corpus.records)?;
    if rc.ablate.d_down.is_empty() {
        rc.ablate.d_down = d_down_grid(&base.cfg);
    }

    let mut jobs: Vec<(iavc::AblationFlags, usize, usize)> = rc
        .ablate
        .variants
        .iter()
        .map(|&f| (f, base.cfg.d_down, base.cfg.n_q))
        .collect();
    let full = iavc::AblationFlags::default();
    jobs.extend(rc.ablate.d_down.iter().map(|&d| (full, d, base.cfg.n_q)));
    jobs.extend(rc.ablate.n_q.iter().map(|&q| (full, base.cfg.d_down, q)));

    let mut rows = Vec::new();
    for (flags, d_down, n_q) in jobs {
        flags.validate()?;
        let mut model = if d_down == base.cfg.d_down && n_q == base.cfg.n_q {
            base.clone()
        } else {
            let cfg = iavc::HyperConfig { d_down, n_q, ..base.cfg.clone() };
            let mut m = IavcModel::new(cfg, base.catalog.clone(), base.vocab.clone())?;
            m.store.copy_matching_from(&base.store, "pin.");
            m
        };
        let opts = iavc::train::CaptionTrainConfig { flags, ..rc.captioner.clone() };
        let mut adam = Adam::new(opts.lr);
        let log = train_captioner(&mut model, &train, &opts, &mut adam, 0, &mut |_| {})?;
        let (_, report) =
            evaluate_model(&model, &test, flags, rc.ablate.beam_size, &rc.metrics, Value::Null)?;
        let row = AblationRow {
            variant: flags.label(),
            d_down,
            n_q,
            bleu4: report.corpus.bleu4,
            rouge_l: report.corpus.rouge_l,
            meteor: report.corpus.meteor,
            cider: report.corpus.cider,
            final_loss: log.last().map_or(f64::NAN, |e| e.loss),
        };
        on_row(&row);
        rows.push(row);
    }
    let out = out_path(rc, "ablation.json");
    write_json(&out, &json!({ "config": rc.to_value(), "rows": rows }))?;
    Ok(rows)
}

pub fn cmd_synth(rc: &mut RunConfig) -> Result<Vec<ClipRecord>> {
    rc.data = None;
    let corpus = load_corpus(rc)?;
    let out = out_path(rc, "synth.jsonl");
    save_annotations(&out, &corpus.records)?;
    write_json(&run_config_path(&out), &rc.to_value())?;
    Ok(corpus.records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitStats {
    pub clips: usize,
    pub games: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub clips: usize,
    pub games: usize,
    pub players: usize,
    pub train: SplitStats,
    pub test: SplitStats,
    pub event_types: BTreeMap<String, usize>,
    pub two_player_clips: usize,
    pub mean_caption_words: f64,
    pub max_caption_words: usize,
    pub vocabulary_size: usize,
    pub mean_frames: f64,
    pub clips_per_player_min: usize,
    pub clips_per_player_max: usize,
}

pub fn corpus_stats(rc: &RunConfig, corpus: &Corpus) -> Result<CorpusStats> {
    let records = &corpus.records;
    if records.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let games = |rs: &[ClipRecord]| rs.iter().map(|r| &r.game_id).collect::<BTreeSet<_>>().len();
    let (train, test) = split(rc, records)?;
    let mut event_types = BTreeMap::new();
    let mut per_player: BTreeMap<&str, usize> = BTreeMap::new();
    for r in records {
        *event_types.entry(r.event_type.to_string()).or_insert(0) += 1;
        let unique: BTreeSet<&str> = r.player_names.iter().map(String::as_str).collect();
        for n in unique {
            *per_player.entry(n).or_insert(0) += 1;
        }
    }
    let words: Vec<usize> = records.iter().map(|r| tokenize(&r.caption).len()).collect();
    let n = records.len() as f64;
    Ok(CorpusStats {
        clips: records.len(),
        games: games(records),
        players: per_player.len(),
        train: SplitStats { clips: train.len(), games: games(&train) },
        test: SplitStats { clips: test.len(), games: games(&test) },
        event_types,
        two_player_clips: records.iter().filter(|r| r.player_names.len() == 2).count(),
        mean_caption_words: words.iter().sum::<usize>() as f64 / n,
        max_caption_words: words.iter().copied().max().unwrap_or(0),
        vocabulary_size: corpus.vocab.len(),
        mean_frames: records.iter().map(|r| r.n_frames()).sum::<usize>() as f64 / n,
        clips_per_player_min: per_player.values().copied().min().unwrap_or(0),
        clips_per_player_max: per_player.values().copied().max().unwrap_or(0),
    })
}

pub fn cmd_stats(rc: &mut RunConfig) -> Result<CorpusStats> {
    let corpus = load_corpus(rc)?;
    let stats = corpus_stats(rc, &corpus)?;
    let doc = json!({ "config": rc.to_value(), "stats": stats });
    match &rc.out {
        Some(out) => write_json(out, &doc)?,
        None => println!("{}", serde_json::to_string_pretty(&doc)?),
    }
    Ok(stats)
}
