//! Caption metrics and corpus-level evaluation reports.

pub mod bleu;
pub mod cider;
pub mod meteor;
pub mod rouge;
pub mod tokenize;

pub use bleu::{bleu, BleuOptions};
pub use cider::{cider, CorpusStats};
pub use meteor::{meteor, MeteorParams};
pub use rouge::{lcs_len, rouge_l};
pub use tokenize::tokenize;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricConfig {
    pub bleu_n: usize,
    pub bleu_smoothing: bool,
    pub rouge_beta: f64,
    pub meteor_alpha: f64,
    pub meteor_gamma: f64,
    pub cider_n: usize,
    pub cider_scale: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            bleu_n: 4,
            bleu_smoothing: false,
            rouge_beta: 1.0,
            meteor_alpha: 0.9,
            meteor_gamma: 0.5,
            cider_n: 4,
            cider_scale: 10.0,
        }
    }
}

/// One clip to score: a raw candidate caption against raw references.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalPair {
    pub video_id: String,
    pub candidate: String,
    pub references: Vec<String>,
    pub event_type: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Scores {
    pub bleu4: f64,
    pub rouge_l: f64,
    pub meteor: f64,
    pub cider: f64,
}

impl Scores {
    fn mean(items: &[Scores]) -> Scores {
        let n = items.len() as f64;
        let mut m = Scores::default();
        for s in items {
            m.bleu4 += s.bleu4;
            m.rouge_l += s.rouge_l;
            m.meteor += s.meteor;
            m.cider += s.cider;
        }
        m.bleu4 /= n;
        m.rouge_l /= n;
        m.meteor /= n;
        m.cider /= n;
        m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipScore {
    pub video_id: String,
    pub candidate: String,
    pub references: Vec<String>,
    #[serde(flatten)]
    pub scores: Scores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusScores {
    pub bleu4: f64,
    pub rouge_l: f64,
    pub meteor: f64,
    pub cider: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mca: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mpca: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: serde_json::Value,
    pub per_clip: Vec<ClipScore>,
    pub corpus: CorpusScores,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub by_event_type: BTreeMap<String, Scores>,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub fn score_pair(
    candidate: &[String],
    references: &[Vec<String>],
    corpus: &CorpusStats,
    cfg: &MetricConfig,
) -> Scores {
    let opts = BleuOptions { max_n: cfg.bleu_n, smoothing: cfg.bleu_smoothing };
    let mp = MeteorParams { alpha: cfg.meteor_alpha, gamma: cfg.meteor_gamma };
    // Multi-reference ROUGE-L and METEOR take the best reference.
    let best = |f: &dyn Fn(&[String]) -> f64| references.iter().map(|r| f(r)).fold(0.0, f64::max);
    Scores {
        bleu4: bleu(candidate, references, opts),
        rouge_l: best(&|r| rouge_l(candidate, r, cfg.rouge_beta)),
        meteor: best(&|r| meteor(candidate, r, mp)),
        cider: cider(candidate, references, corpus, cfg.cider_n, cfg.cider_scale),
    }
}

/// Scores every pair against idf statistics built from all references of
/// the run, then reduces to corpus means in input order.
pub fn evaluate_corpus(
    pairs: &[EvalPair],
    cfg: &MetricConfig,
    run_config: serde_json::Value,
) -> Result<EvalReport> {
    if pairs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let refs: Vec<Vec<Vec<String>>> = pairs
        .iter()
        .map(|p| p.references.iter().map(|r| tokenize(r)).collect())
        .collect();
    let corpus = CorpusStats::build(&refs, cfg.cider_n);
    let mut per_clip = Vec::with_capacity(pairs.len());
    let mut groups: BTreeMap<String, Vec<Scores>> = BTreeMap::new();
    for (p, r) in pairs.iter().zip(&refs) {
        let scores = score_pair(&tokenize(&p.candidate), r, &corpus, cfg);
        if let Some(e) = &p.event_type {
            groups.entry(e.clone()).or_default().push(scores);
        }
        per_clip.push(ClipScore {
            video_id: p.video_id.clone(),
            candidate: p.candidate.clone(),
            references: p.references.clone(),
            scores,
        });
    }
    let all: Vec<Scores> = per_clip.iter().map(|c| c.scores).collect();
    let m = Scores::mean(&all);
    Ok(EvalReport {
        config: run_config,
        per_clip,
        corpus: CorpusScores {
            bleu4: m.bleu4,
            rouge_l: m.rouge_l,
            meteor: m.meteor,
            cider: m.cider,
            mca: None,
            mpca: None,
        },
        by_event_type: groups.into_iter().map(|(k, v)| (k, Scores::mean(&v))).collect(),
    })
}
