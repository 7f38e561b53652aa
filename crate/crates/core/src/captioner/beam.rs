//! Length-capped beam search over cumulative log-probability.

use std::cmp::Ordering;

use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct CaptionHypothesis {
    /// Generated ids, `<bos>` excluded, `<eos>` included when reached.
    pub tokens: Vec<usize>,
    pub log_prob: f64,
    pub finished: bool,
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z = logits.iter().map(|&x| (x - m).exp()).sum::<f64>().ln() + m;
    logits.iter().map(|&x| x - z).collect()
}

/// Higher log-probability first, then lexicographically smaller ids.
pub fn rank(a: &CaptionHypothesis, b: &CaptionHypothesis) -> Ordering {
    b.log_prob
        .partial_cmp(&a.log_prob)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.tokens.cmp(&b.tokens))
}

/// `next_logits(prefix)` scores the token after `prefix` (which begins with
/// `bos`). Tokens whose log-probability is not finite are never expanded.
pub fn beam_search<F>(
    mut next_logits: F,
    bos: usize,
    eos: usize,
    beam_size: usize,
    max_len: usize,
) -> Result<CaptionHypothesis>
where
    F: FnMut(&[usize]) -> Result<Vec<f64>>,
{
    let beam_size = beam_size.max(1);
    let max_len = max_len.max(1);
    let mut beams = vec![CaptionHypothesis { tokens: Vec::new(), log_prob: 0.0, finished: false }];
    while beams.iter().any(|b| !b.finished) {
        let mut cands = Vec::new();
        for b in beams {
            if b.finished {
                cands.push(b);
                continue;
            }
            let mut prefix = Vec::with_capacity(b.tokens.len() + 1);
            prefix.push(bos);
            prefix.extend_from_slice(&b.tokens);
            let lp = log_softmax(&next_logits(&prefix)?);
            for (v, &l) in lp.iter().enumerate() {
                if !l.is_finite() {
                    continue;
                }
                let mut tokens = b.tokens.clone();
                tokens.push(v);
                let finished = v == eos || tokens.len() >= max_len;
                cands.push(CaptionHypothesis { tokens, log_prob: b.log_prob + l, finished });
            }
        }
        cands.sort_by(rank);
        cands.truncate(beam_size);
        beams = cands;
    }
    Ok(beams.into_iter().next().expect("at least one hypothesis"))
}

/// Argmax rollout; ties go to the smallest id.
pub fn greedy<F>(mut next_logits: F, bos: usize, eos: usize, max_len: usize) -> Result<CaptionHypothesis>
where
    F: FnMut(&[usize]) -> Result<Vec<f64>>,
{
    let mut prefix = vec![bos];
    let mut log_prob = 0.0;
    loop {
        let lp = log_softmax(&next_logits(&prefix)?);
        let (v, l) = lp
            .iter()
            .copied()
            .enumerate()
            .filter(|(_, l)| l.is_finite())
            .fold((usize::MAX, f64::NEG_INFINITY), |best, (i, l)| if l > best.1 { (i, l) } else { best });
        prefix.push(v);
        log_prob += l;
        if v == eos || prefix.len() > max_len.max(1) {
            return Ok(CaptionHypothesis { tokens: prefix[1..].to_vec(), log_prob, finished: true });
        }
    }
}
