//! Measurement routines shared by the integration tests and the
//! acceptance report. Each returns numbers; callers decide thresholds.

#![allow(dead_code)]

use iavc::captioner::{self, declare_decoder, PromptNode, Segment, Span, BOS, EOS};
use iavc::gradcheck::grad_check;
use iavc::identity::{
    bsim_forward, declare_bsim, declare_pin, encode_player_sequence, pin_loss, PlayerSequence,
    SequenceSource,
};
use iavc::nn::{self, AttentionShape};
use iavc::params::Initializer;
use iavc::vclm::{declare_vclm, vclm_forward};
use iavc::{AblationFlags, Graph, HyperConfig, IavcModel, Mode, ParameterStore, Result, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::oracles::{self, perturb, random_matrix, tensor, M};

pub const GRAD_EPS: f64 = 1e-5;

fn no_rng() -> rand::rngs::mock::StepRng {
    rand::rngs::mock::StepRng::new(0, 0)
}

/// `Σ x ∘ w` for a fixed random `w`, so no output direction is privileged.
fn weighted(g: &mut Graph, x: Var, w: &Tensor) -> Result<Var> {
    let wv = g.input(w.clone());
    let m = g.mul(x, wv)?;
    Ok(g.sum(m))
}

fn weights(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
    tensor(&random_matrix(rng, r, c))
}

/// Gradient-check geometry: d_time 8, d_down 4, d_llm 8, n_q 2.
pub fn grad_config() -> HyperConfig {
    HyperConfig::tiny()
}

/// Max relative autodiff/finite-difference error per block.
pub fn gradient_suite() -> Result<Vec<(&'static str, f64)>> {
    let cfg = grad_config();
    let d = cfg.d_time;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut out = Vec::new();

    let shape = AttentionShape::new(d, cfg.n_heads);
    let mut store = ParameterStore::new();
    nn::declare_attention(&mut store, &mut Initializer::new(1), "a", shape)?;
    let x = weights(&mut rng, 3, d);
    let kv = weights(&mut rng, 4, d);
    let w3 = weights(&mut rng, 3, d);
    let err = grad_check(
        |g, s| {
            let xi = g.input(x.clone());
            let y = nn::msa(g, s, "a", xi, shape)?;
            weighted(g, y, &w3)
        },
        &mut store,
        GRAD_EPS,
    )?;
    out.push(("msa", err));
    let err = grad_check(
        |g, s| {
            let q = g.input(x.clone());
            let k = g.input(kv.clone());
            let y = nn::mca_attn(g, s, "a", q, k, shape)?;
            weighted(g, y, &w3)
        },
        &mut store,
        GRAD_EPS,
    )?;
    out.push(("mca_attn", err));

    let mut store = ParameterStore::new();
    nn::declare_layer_norm(&mut store, &mut Initializer::new(2), "ln", d)?;
    perturb(&mut store, &mut rng, 1.0);
    let err = grad_check(
        |g, s| {
            let xi = g.input(x.clone());
            let y = nn::layer_norm(g, s, "ln", xi)?;
            weighted(g, y, &w3)
        },
        &mut store,
        GRAD_EPS,
    )?;
    out.push(("layer_norm", err));

    let mut store = ParameterStore::new();
    declare_bsim(&mut store, &mut Initializer::new(3), &cfg)?;
    perturb(&mut store, &mut rng, 0.7);
    let video = weights(&mut rng, 3, d);
    let players = weights(&mut rng, 2, d);
    let wv = weights(&mut rng, 3, d);
    let wf = weights(&mut rng, 2, d);
    let err = grad_check(
        |g, s| {
            let v = g.input(video.clone());
            let f = g.input(players.clone());
            let o = bsim_forward(g, s, &cfg, v, f, Mode::Infer, &mut no_rng())?;
            let a = weighted(g, o.v_bsi, &wv)?;
            let b = weighted(g, o.f_bsi, &wf)?;
            g.add(a, b)
        },
        &mut store,
        GRAD_EPS,
    )?;
    out.push(("bsim_forward", err));

    let mut store = ParameterStore::new();
    declare_vclm(&mut store, &mut Initializer::new(4), &cfg)?;
    perturb(&mut store, &mut rng, 0.7);
    let wq = weights(&mut rng, cfg.n_q, d);
    let err = grad_check(
        |g, s| {
            let v = g.input(video.clone());
            let y = vclm_forward(g, s, &cfg, v)?;
            weighted(g, y, &wq)
        },
        &mut store,
        GRAD_EPS,
    )?;
    out.push(("vclm_forward", err));

    let vocab = 11;
    let mut store = ParameterStore::new();
    declare_decoder(&mut store, &mut Initializer::new(5), &cfg, vocab)?;
    perturb(&mut store, &mut rng, 0.5);
    let prompt = weights(&mut rng, 5, cfg.d_llm);
    let spans = vec![
        Span { segment: Segment::Video, start: 0, len: 1 },
        Span { segment: Segment::Player, start: 1, len: 2 },
        Span { segment: Segment::Name, start: 3, len: 2 },
    ];
    let target = [BOS, 6, 9, 4, EOS];
    let err = grad_check(
        |g, s| {
            let rows = g.input(prompt.clone());
            let node = PromptNode { rows, spans: spans.clone() };
            captioner::caption_loss(g, s, &cfg, &node, &target, Mode::Infer, &mut no_rng())
        },
        &mut store,
        GRAD_EPS,
    )?;
    out.push(("decoder_forward+caption_loss", err));

    let mut store = ParameterStore::new();
    declare_pin(&mut store, &mut Initializer::new(6), &cfg, 4)?;
    perturb(&mut store, &mut rng, 0.7);
    let seqs: Vec<(PlayerSequence, usize)> = (0..3)
        .map(|i| {
            let frames = tensor(&random_matrix(&mut rng, 2 + i, cfg.d_in));
            (PlayerSequence::new(frames, Some(i), SequenceSource::Dataset), i)
        })
        .collect();
    let err = grad_check(
        |g, s| {
            let mut batch = Vec::new();
            for (seq, label) in &seqs {
                batch.push((encode_player_sequence(g, s, &cfg, seq)?, *label));
            }
            pin_loss(g, s, &batch)
        },
        &mut store,
        GRAD_EPS,
    )?;
    out.push(("pin_loss", err));

    let (model, clip) = tiny_model_and_clip()?;
    let mut store = model.store.clone();
    let err = grad_check(
        |g, s| {
            let m = IavcModel { store: s.clone(), ..model.clone() };
            m.caption_loss(g, &clip, AblationFlags::default(), Mode::Infer, &mut no_rng())
        },
        &mut store,
        GRAD_EPS,
    )?;
    out.push(("full model caption loss", err));
    Ok(out)
}

fn tiny_model_and_clip() -> Result<(IavcModel, iavc::data::ClipRecord)> {
    let cfg = grad_config();
    let synth = iavc::data::SynthConfig {
        n_games: 1,
        clips_per_game: 4,
        n_players: 3,
        n_event_types: 3,
        d_in: cfg.d_in,
        min_frames: 3,
        max_frames: 4,
        seq_len: 3,
        ..Default::default()
    };
    let corpus = iavc::data::synth_generate(&synth)?;
    let model = IavcModel::new(cfg, corpus.catalog, corpus.vocab)?;
    let clip = corpus
        .records
        .into_iter()
        .find(|r| r.player_names.len() == 2)
        .unwrap_or_else(|| panic!("no two-player clip in the tiny corpus"));
    Ok((model, clip))
}

/// Largest deviation of the interaction module from its transcription over
/// `n` random instances.
pub fn bsim_fidelity(n: usize, seed: u64) -> Result<f64> {
    let cfg = HyperConfig { d_time: 8, d_down: 4, n_heads: 2, ..HyperConfig::desk() };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for case in 0..n {
        let mut store = ParameterStore::new();
        declare_bsim(&mut store, &mut Initializer::new(case as u64), &cfg)?;
        perturb(&mut store, &mut rng, 0.8);
        let n_v = rng.gen_range(1..=6);
        let k = rng.gen_range(1..=3);
        let video = random_matrix(&mut rng, n_v, cfg.d_time);
        let players = random_matrix(&mut rng, k, cfg.d_time);
        let mut g = Graph::new();
        let v = g.input(tensor(&video));
        let f = g.input(tensor(&players));
        let o = bsim_forward(&mut g, &store, &cfg, v, f, Mode::Infer, &mut no_rng())?;
        let (ov, of) = oracles::bsim(&store, cfg.n_heads, &video, &players);
        worst = worst.max(oracles::max_diff(&oracles::rows(g.value(o.v_bsi)), &ov));
        worst = worst.max(oracles::max_diff(&oracles::rows(g.value(o.f_bsi)), &of));
    }
    Ok(worst)
}

/// Same for the context-query module.
pub fn vclm_fidelity(n: usize, seed: u64) -> Result<f64> {
    let cfg = HyperConfig { d_time: 4, d_down: 4, n_q: 2, n_heads: 2, ..HyperConfig::desk() };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for case in 0..n {
        let mut store = ParameterStore::new();
        declare_vclm(&mut store, &mut Initializer::new(case as u64), &cfg)?;
        perturb(&mut store, &mut rng, 0.9);
        let n_v = rng.gen_range(1..=6);
        let video: M = random_matrix(&mut rng, n_v, cfg.d_time);
        let mut g = Graph::new();
        let x = g.input(tensor(&video));
        let y = vclm_forward(&mut g, &store, &cfg, x)?;
        worst = worst.max(oracles::max_diff(&oracles::rows(g.value(y)), &oracles::vclm(&store, &video)));
    }
    Ok(worst)
}

fn toks(s: &str) -> Vec<String> {
    iavc::metrics::tokenize(s)
}

/// One line per metric identity: `(name, got, want, tolerance)`.
pub fn metric_checks() -> Vec<(String, f64, f64, f64)> {
    use iavc::metrics::*;
    let mut out: Vec<(String, f64, f64, f64)> = Vec::new();
    let mut check = |name: &str, got: f64, want: f64, tol: f64| out.push((name.to_string(), got, want, tol));
    let b4 = BleuOptions::default();
    let b2 = BleuOptions { max_n: 2, smoothing: false };

    let s = toks("k. moss makes 24 ft 3pt jump shot");
    check("bleu identical", bleu(&s, std::slice::from_ref(&s), b4), 1.0, 0.0);
    check(
        "bleu brevity penalty",
        bleu(&toks("the cat"), &[toks("the cat sat")], b2),
        (-0.5f64).exp(),
        1e-9,
    );
    check("bleu no overlap", bleu(&toks("a b c d"), &[toks("e f g h")], b4), 0.0, 0.0);

    check("rouge identical", rouge_l(&s, &s, 1.0), 1.0, 0.0);
    check("rouge lcs 3 of 6", rouge_l(&toks("the cat sat"), &toks("the cat sat on the mat"), 1.0), 2.0 / 3.0, 1e-9);
    check("rouge disjoint", rouge_l(&toks("a b"), &toks("c d"), 1.0), 0.0, 0.0);

    let mp = MeteorParams::default();
    check("meteor no matches", meteor(&toks("a b"), &toks("c d"), mp), 0.0, 0.0);
    let pml = toks("player makes layup");
    let want = 1.0 - 0.5 * (1.0f64 / 3.0).powi(3);
    check("meteor one chunk of three", meteor(&pml, &pml, mp), want, 1e-9);
    check("meteor one chunk of three (4 dp)", (meteor(&pml, &pml, mp) * 1e4).round() / 1e4, 0.9815, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let words = ["a", "b", "c", "d", "e", "f"];
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let c: Vec<String> = (0..rng.gen_range(1..7)).map(|_| words[rng.gen_range(0..6)].to_string()).collect();
        let r: Vec<String> = (0..rng.gen_range(1..7)).map(|_| words[rng.gen_range(0..6)].to_string()).collect();
        let (m, ch) = meteor::align(&c, &r);
        if m == 0 {
            continue;
        }
        let recall = m as f64 / r.len() as f64;
        let pen = (ch as f64 / m as f64).powi(3);
        let got = meteor(&c, &r, MeteorParams { alpha: 1.0, gamma: 0.5 });
        worst = worst.max((got - (1.0 - 0.5 * pen) * recall).abs());
    }
    check("meteor alpha=1 reduces to recall", worst, 0.0, 1e-12);

    let docs = vec![
        vec![toks("player makes driving layup")],
        vec![toks("foul on k. moss")],
    ];
    let stats = CorpusStats::build(&docs, 4);
    let c = toks("player makes driving layup");
    check("cider self cosine", cider(&c, &docs[0], &stats, 4, 10.0), 10.0, 1e-9);
    check("cider no shared ngrams", cider(&toks("blocks the shot"), &docs[0], &stats, 4, 10.0), 0.0, 0.0);

    // Three documents: "a b c", "a b d", "e f". idf(a)=idf(b)=idf(a b)=ln 3/2,
    // idf(c)=idf(b c)=ln 3.
    let docs = vec![vec![toks("a b c")], vec![toks("a b d")], vec![toks("e f")]];
    let stats = CorpusStats::build(&docs, 2);
    let l = 1.5f64.ln();
    let l3 = 3f64.ln();
    let cos1 = (2.0 * (0.5 * l) * (l / 3.0)) / ((2.0 * (0.5 * l).powi(2)).sqrt() * (2.0 * (l / 3.0).powi(2) + (l3 / 3.0).powi(2)).sqrt());
    let cos2 = (l * l / 2.0) / (l * ((l / 2.0).powi(2) + (l3 / 2.0).powi(2)).sqrt());
    check("cider hand tf-idf n=1", cider(&toks("a b"), &docs[0], &stats, 1, 10.0), 10.0 * cos1, 1e-9);
    check("cider hand tf-idf n=2", cider(&toks("a b"), &docs[0], &stats, 2, 10.0), 10.0 * (cos1 + cos2) / 2.0, 1e-9);

    let cfg = MetricConfig::default();
    let same: Vec<EvalPair> = ["l. reed makes driving layup", "k. moss defensive rebound", "foul on s. hale"]
        .iter()
        .enumerate()
        .map(|(i, c)| EvalPair {
            video_id: format!("v{i}"),
            candidate: c.to_string(),
            references: vec![c.to_string()],
            event_type: None,
        })
        .collect();
    let rep = evaluate_corpus(&same, &cfg, serde_json::Value::Null).unwrap();
    check("corpus identical bleu4", rep.corpus.bleu4, 1.0, 0.0);
    check("corpus identical rouge_l", rep.corpus.rouge_l, 1.0, 0.0);
    let one = vec![EvalPair { candidate: "k. moss makes layup".into(), ..same[0].clone() }];
    let rep = evaluate_corpus(&one, &cfg, serde_json::Value::Null).unwrap();
    check("corpus single pair", rep.corpus.meteor, rep.per_clip[0].scores.meteor, 0.0);

    let vocab = ["l.", "reed", "makes", "misses", "layup", "jump", "shot", "foul", "on", "k.", "moss"];
    let sentence = |rng: &mut ChaCha8Rng| -> String {
        (0..rng.gen_range(2..8)).map(|_| vocab[rng.gen_range(0..vocab.len())]).collect::<Vec<_>>().join(" ")
    };
    let pairs: Vec<EvalPair> = (0..10)
        .map(|i| EvalPair {
            video_id: format!("r{i}"),
            candidate: sentence(&mut rng),
            references: vec![sentence(&mut rng)],
            event_type: None,
        })
        .collect();
    let rep = evaluate_corpus(&pairs, &cfg, serde_json::Value::Null).unwrap();
    let mean = |f: &dyn Fn(&iavc::metrics::Scores) -> f64| {
        rep.per_clip.iter().map(|c| f(&c.scores)).sum::<f64>() / rep.per_clip.len() as f64
    };
    check("corpus mean bleu4", rep.corpus.bleu4, mean(&|s| s.bleu4), 1e-12);
    check("corpus mean rouge_l", rep.corpus.rouge_l, mean(&|s| s.rouge_l), 1e-12);
    check("corpus mean meteor", rep.corpus.meteor, mean(&|s| s.meteor), 1e-12);
    check("corpus mean cider", rep.corpus.cider, mean(&|s| s.cider), 1e-12);
    out
}

fn brute_force_lcs(a: &[String], b: &[String]) -> usize {
    let mut best = 0;
    for mask in 0u32..(1 << a.len()) {
        let sub: Vec<&String> = (0..a.len()).filter(|i| mask >> i & 1 == 1).map(|i| &a[i]).collect();
        if sub.len() <= best {
            continue;
        }
        let mut it = b.iter();
        if sub.iter().all(|w| it.any(|x| x == *w)) {
            best = sub.len();
        }
    }
    best
}

/// Pairs (out of `n`) where the DP LCS differs from subset enumeration.
pub fn lcs_mismatches(n: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let words = ["a", "b", "c", "d"];
    let mut bad = 0;
    for _ in 0..n {
        let mut draw = || -> Vec<String> {
            (0..rng.gen_range(0..=8)).map(|_| words[rng.gen_range(0..4)].to_string()).collect()
        };
        let (a, b) = (draw(), draw());
        if iavc::metrics::lcs_len(&a, &b) != brute_force_lcs(&a, &b) {
            bad += 1;
        }
    }
    bad
}

fn random_prompt(rng: &mut ChaCha8Rng, cfg: &HyperConfig) -> captioner::MultimodalPrompt {
    let n_players = cfg.k_players;
    let n_video = rng.gen_range(1..=3);
    let rows = weights(rng, n_video + 2 * n_players, cfg.d_llm);
    captioner::MultimodalPrompt {
        rows,
        spans: vec![
            Span { segment: Segment::Video, start: 0, len: n_video },
            Span { segment: Segment::Player, start: n_video, len: n_players },
            Span { segment: Segment::Name, start: n_video + n_players, len: n_players },
        ],
    }
}

/// Every caption of at most `max_len` ids over `vocab` ids, each either
/// ending in `eos` or cut at `max_len`.
fn enumerate_captions(vocab: usize, eos: usize, max_len: usize) -> Vec<Vec<usize>> {
    let mut done = Vec::new();
    let mut open = vec![Vec::new()];
    while let Some(p) = open.pop() {
        for v in 0..vocab {
            let mut t = p.clone();
            t.push(v);
            if v == eos || t.len() == max_len {
                done.push(t);
            } else {
                open.push(t);
            }
        }
    }
    done
}

fn exhaustive_best(
    next: impl Fn(&[usize]) -> Vec<f64>,
    vocab: usize,
    eos: usize,
    max_len: usize,
) -> captioner::CaptionHypothesis {
    let mut all: Vec<captioner::CaptionHypothesis> = enumerate_captions(vocab, eos, max_len)
        .into_iter()
        .map(|tokens| {
            let mut prefix = vec![BOS];
            let mut lp = 0.0;
            for &t in &tokens {
                lp += captioner::beam::log_softmax(&next(&prefix))[t];
                prefix.push(t);
            }
            captioner::CaptionHypothesis { tokens, log_prob: lp, finished: true }
        })
        .collect();
    all.sort_by(captioner::beam::rank);
    all.swap_remove(0)
}

/// Mismatch counts for the decoding properties (0 everywhere is correct).
pub fn decoding_checks(n: usize, seed: u64) -> Result<Vec<(&'static str, usize)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = grad_config();
    let vocab = 11;
    let mut store = ParameterStore::new();
    declare_decoder(&mut store, &mut Initializer::new(seed), &cfg, vocab)?;
    perturb(&mut store, &mut rng, 0.8);

    let mut greedy_diff = 0;
    let mut beam_below_greedy = 0;
    for _ in 0..n {
        let prompt = random_prompt(&mut rng, &cfg);
        let b1 = captioner::generate(&store, &cfg, &prompt, 1, cfg.max_len)?;
        let gr = captioner::generate_greedy(&store, &cfg, &prompt, cfg.max_len)?;
        if b1.tokens != gr.tokens || b1.log_prob != gr.log_prob {
            greedy_diff += 1;
        }
        let b3 = captioner::generate(&store, &cfg, &prompt, 3, cfg.max_len)?;
        if b3.log_prob < gr.log_prob {
            beam_below_greedy += 1;
        }
    }

    // Three tokens (id 1 is eos), max length 3, hand-set stationary
    // probabilities: a beam of 2 against every caption. (A beam of 2 is
    // not exhaustive in general: with probabilities 0.3/0.2/0.5 it prunes
    // `[eos]` at the first step.) With prefix-dependent logits a beam
    // wide enough to hold every open prefix must find the best caption.
    let mut stationary_diff = 0;
    for probs in [[0.1, 0.15, 0.75], [0.25, 0.35, 0.4], [0.2, 0.5, 0.3], [0.45, 0.05, 0.5]] {
        let fixed: Vec<f64> = probs.iter().map(|p: &f64| p.ln()).collect();
        let stationary = |_: &[usize]| fixed.clone();
        let got = captioner::beam_search(|p| Ok(stationary(p)), BOS, EOS, 2, 3)?;
        if got.tokens != exhaustive_best(stationary, 3, EOS, 3).tokens {
            stationary_diff += 1;
        }
    }
    let mut full_width_diff = 0;
    for _ in 0..n {
        let table: Vec<f64> = (0..200).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let varying = |p: &[usize]| {
            let h = p.iter().fold(7usize, |a, &t| (a * 31 + t + 1) % 61);
            (0..3).map(|v| table[h * 3 + v]).collect::<Vec<f64>>()
        };
        let got = captioner::beam_search(|p| Ok(varying(p)), BOS, EOS, 27, 3)?;
        if got != exhaustive_best(varying, 3, EOS, 3) {
            full_width_diff += 1;
        }
    }

    let eos_first = captioner::beam_search(|_| Ok(vec![0.0, 9.0, 0.5]), BOS, EOS, 2, 5)?;
    let empty_body = usize::from(!captioner::caption_body(&eos_first).is_empty());

    Ok(vec![
        ("beam 1 differs from greedy", greedy_diff),
        ("beam 3 scores below greedy", beam_below_greedy),
        ("beam 2 misses exhaustive best (hand instances)", stationary_diff),
        ("full-width beam misses exhaustive best", full_width_diff),
        ("eos first leaves a body", empty_body),
    ])
}

fn small_corpus(seed: u64) -> Result<iavc::data::SynthCorpus> {
    iavc::data::synth_generate(&iavc::data::SynthConfig {
        n_games: 2,
        clips_per_game: 6,
        n_players: 4,
        d_in: grad_config().d_in,
        min_frames: 3,
        max_frames: 4,
        seq_len: 3,
        seed,
        ..Default::default()
    })
}

fn params_bitwise_equal(a: &ParameterStore, b: &ParameterStore) -> bool {
    a.len() == b.len()
        && a.iter().zip(b.iter()).all(|(x, y)| {
            x.name == y.name
                && x.trainable == y.trainable
                && x.value.shape() == y.value.shape()
                && x.value.data().iter().zip(y.value.data()).all(|(p, q)| p.to_bits() == q.to_bits())
        })
}

struct Run {
    model: IavcModel,
    adam: iavc::optim::Adam,
    losses: Vec<f64>,
}

fn train_run(corpus: &iavc::data::SynthCorpus, epochs: usize, from: Option<Run>) -> Result<Run> {
    let opts = iavc::train::CaptionTrainConfig { epochs, batch_size: 4, seed: 9, ..Default::default() };
    let (mut model, mut adam, start) = match from {
        Some(r) => {
            let start = r.losses.len();
            (r.model, r.adam, start)
        }
        None => {
            let model = IavcModel::new(
                HyperConfig { dropout_rate: 0.1, max_len: 16, ..grad_config() },
                corpus.catalog.clone(),
                corpus.vocab.clone(),
            )?;
            (model, iavc::optim::Adam::new(opts.lr), 0)
        }
    };
    let log = iavc::train::train_captioner(&mut model, &corpus.records, &opts, &mut adam, start, &mut |_| {})?;
    Ok(Run { model, adam, losses: log.iter().map(|e| e.loss).collect() })
}

fn checkpoint_of(run: &Run) -> Result<Vec<u8>> {
    let (step, moments) = run.adam.state();
    let ck = run.model.to_checkpoint(
        Some(iavc::data::OptimizerState { step, moments }),
        serde_json::json!({ "epochs_completed": run.losses.len() }),
    );
    iavc::data::checkpoint::encode_checkpoint(&ck)
}

fn report_json(model: &IavcModel, records: &[iavc::data::ClipRecord]) -> Result<String> {
    let (_, report) = iavc::train::evaluate_model(
        model,
        records,
        AblationFlags::default(),
        2,
        &Default::default(),
        serde_json::json!({ "seed": 9 }),
    )?;
    Ok(serde_json::to_string(&report)?)
}

/// Pass/fail per persistence and determinism property.
pub fn persistence_checks() -> Result<Vec<(&'static str, bool)>> {
    let corpus = small_corpus(4)?;
    let mut out = Vec::new();

    let a = train_run(&corpus, 2, None)?;
    let bytes = checkpoint_of(&a)?;
    let decoded = iavc::data::checkpoint::decode_checkpoint(&bytes)?;
    out.push(("checkpoint parameters round trip bitwise", params_bitwise_equal(&decoded.params, &a.model.store)));
    out.push(("checkpoint re-encodes to the same bytes", iavc::data::checkpoint::encode_checkpoint(&decoded)? == bytes));
    let (step, moments) = a.adam.state();
    let restored = decoded.optimizer.clone().expect("optimizer state");
    let same_moments = restored.step == step
        && restored.moments.len() == moments.len()
        && restored.moments.iter().zip(&moments).all(|(x, y)| {
            x.0 == y.0
                && x.1.iter().zip(&y.1).all(|(p, q)| p.to_bits() == q.to_bits())
                && x.2.iter().zip(&y.2).all(|(p, q)| p.to_bits() == q.to_bits())
        });
    out.push(("optimizer moments round trip bitwise", same_moments));

    let corrupt = |r: Result<iavc::data::Checkpoint>| matches!(r, Err(iavc::Error::CorruptFile(_)));
    out.push(("truncated checkpoint is CorruptFile", corrupt(iavc::data::checkpoint::decode_checkpoint(&bytes[..bytes.len() / 2]))));
    let mut flipped = bytes.clone();
    flipped[bytes.len() / 3] ^= 0x10;
    out.push(("flipped byte is CorruptFile", corrupt(iavc::data::checkpoint::decode_checkpoint(&flipped))));

    let b = train_run(&corpus, 2, None)?;
    out.push(("same seed gives identical checkpoint bytes", checkpoint_of(&b)? == bytes));
    let (ra, rb) = (report_json(&a.model, &corpus.records)?, report_json(&b.model, &corpus.records)?);
    out.push(("same seed gives identical reports", ra == rb));

    let straight = train_run(&corpus, 3, None)?;
    let first = train_run(&corpus, 1, None)?;
    let ck = iavc::data::checkpoint::decode_checkpoint(&checkpoint_of(&first)?)?;
    let opt = ck.optimizer.clone().expect("optimizer state");
    let mut adam = iavc::optim::Adam::new(iavc::train::CaptionTrainConfig::default().lr);
    adam.restore(opt.step, opt.moments);
    let resumed = train_run(
        &corpus,
        3,
        Some(Run { model: IavcModel::from_checkpoint(ck)?, adam, losses: first.losses.clone() }),
    )?;
    out.push(("resume gives the same next-epoch loss", resumed.losses.first() == straight.losses.get(1)));
    out.push(("resume gives identical final parameters", params_bitwise_equal(&resumed.model.store, &straight.model.store)));
    Ok(out)
}

fn bare_record(video_id: String, game_id: String) -> iavc::data::ClipRecord {
    iavc::data::ClipRecord {
        video_id,
        game_id,
        caption: "foul on l. reed".into(),
        event_type: iavc::data::EventType::Foul,
        player_names: vec!["L. Reed".into()],
        player_sequences: Vec::new(),
        boxes: Vec::new(),
        candidate_sequences: Vec::new(),
        candidate_names: Vec::new(),
        video_features: Tensor::zeros(&[1, 2]),
    }
}

/// Random corpora of 1000 records: the split must cover every record
/// exactly once and never put one game on both sides. Returns violations.
pub fn split_violations(trials: usize, seed: u64) -> Result<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bad = 0;
    for _ in 0..trials {
        let n_games = rng.gen_range(2..=50);
        let records: Vec<_> = (0..1000)
            .map(|i| bare_record(format!("c{i}"), format!("g{:02}", rng.gen_range(0..n_games))))
            .collect();
        let spec = iavc::data::SplitSpec::by_ratio(&records)?;
        let (train, test) = iavc::data::split_by_game(&records, &spec)?;
        let mut seen: Vec<&str> = train.iter().chain(&test).map(|r| r.video_id.as_str()).collect();
        seen.sort_unstable();
        let mut all: Vec<&str> = records.iter().map(|r| r.video_id.as_str()).collect();
        all.sort_unstable();
        let covered = seen == all;
        let leak = train.iter().any(|a| test.iter().any(|b| a.game_id == b.game_id));
        let misplaced = train.iter().any(|r| !spec.train_games.contains(&r.game_id))
            || test.iter().any(|r| !spec.test_games.contains(&r.game_id));
        if !covered || leak || misplaced || train.is_empty() || test.is_empty() {
            bad += 1;
        }
    }
    Ok(bad)
}

/// Held-out accuracy of a nearest-centroid classifier on frame means of
/// the key-player sequences, a check that identity survives the noise.
pub fn nearest_centroid_accuracy(noise_sigma: f64, seed: u64) -> Result<f64> {
    let corpus = iavc::data::synth_generate(&iavc::data::SynthConfig {
        noise_sigma,
        sequences_per_player: Some(20),
        seed,
        ..Default::default()
    })?;
    let set = iavc::data::build_player_centric_set(&corpus.records)?;
    let mean = |s: &PlayerSequence| -> Vec<f64> {
        let r = s.frames.rows() as f64;
        let c = s.frames.cols();
        (0..c).map(|j| s.frames.data().iter().skip(j).step_by(c).sum::<f64>() / r).collect()
    };
    let mut centroids = Vec::new();
    let mut held = Vec::new();
    for (name, clips) in &set.by_player {
        let (train, test) = clips.split_at(clips.len() / 2);
        let feats: Vec<Vec<f64>> = train.iter().map(|(_, s)| mean(s)).collect();
        let c: Vec<f64> =
            (0..feats[0].len()).map(|j| feats.iter().map(|f| f[j]).sum::<f64>() / feats.len() as f64).collect();
        centroids.push((name.clone(), c));
        held.extend(test.iter().map(|(_, s)| (name.clone(), mean(s))));
    }
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let correct = held
        .iter()
        .filter(|(name, f)| {
            let best = centroids
                .iter()
                .min_by(|a, b| dist(&a.1, f).total_cmp(&dist(&b.1, f)))
                .expect("centroids");
            &best.0 == name
        })
        .count();
    Ok(correct as f64 / held.len() as f64)
}

/// Random records naming one or two players from a small pool, checked
/// against a brute-force rebuild of the player-centric set. Returns
/// violations.
pub fn clipset_violations(n_records: usize, seed: u64) -> Result<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pool: Vec<String> = (0..12).map(|i| format!("P{i:02}")).collect();
    let records: Vec<_> = (0..n_records)
        .map(|i| {
            let mut r = bare_record(format!("c{i:04}"), format!("g{}", i % 9));
            let k = rng.gen_range(1..=2);
            r.player_names = (0..k).map(|_| pool[rng.gen_range(0..pool.len())].clone()).collect();
            r.player_sequences = (0..k)
                .map(|_| PlayerSequence::new(Tensor::full(&[1, 2], rng.gen()), None, SequenceSource::Dataset))
                .collect();
            r
        })
        .collect();
    let set = iavc::data::build_player_centric_set(&records)?;
    let mut bad = 0;
    for name in &pool {
        let want: Vec<(&str, &Tensor)> = records
            .iter()
            .filter_map(|r| {
                let i = r.player_names.iter().position(|n| n == name)?;
                Some((r.video_id.as_str(), &r.player_sequences[i].frames))
            })
            .collect();
        let got: Vec<(&str, &Tensor)> = set
            .by_player
            .get(name)
            .map(|v| v.iter().map(|(id, s)| (id.as_str(), &s.frames)).collect())
            .unwrap_or_default();
        if got != want {
            bad += 1;
        }
    }
    if set.by_player.keys().any(|k| !pool.contains(k)) {
        bad += 1;
    }
    Ok(bad)
}
