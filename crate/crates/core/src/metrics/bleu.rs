//! BLEU-N with per-reference clipping and a shortest-reference brevity
//! penalty.

use std::collections::HashMap;

pub(crate) fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BleuOptions {
    pub max_n: usize,
    /// Add-one smoothing of every precision (off by default).
    pub smoothing: bool,
}

impl Default for BleuOptions {
    fn default() -> Self {
        BleuOptions { max_n: 4, smoothing: false }
    }
}

/// Modified n-gram precision `p_n` as (clipped matches, candidate n-grams).
pub fn modified_precision(candidate: &[String], references: &[Vec<String>], n: usize) -> (usize, usize) {
    let cand = ngram_counts(candidate, n);
    let total: usize = cand.values().sum();
    let mut max_ref: HashMap<&[String], usize> = HashMap::new();
    for r in references {
        for (g, c) in ngram_counts(r, n) {
            let e = max_ref.entry(g).or_insert(0);
            *e = (*e).max(c);
        }
    }
    let clipped = cand
        .iter()
        .map(|(g, &c)| c.min(max_ref.get(g).copied().unwrap_or(0)))
        .sum();
    (clipped, total)
}

pub fn brevity_penalty(candidate_len: usize, shortest_ref: usize) -> f64 {
    if candidate_len > shortest_ref {
        1.0
    } else {
        (1.0 - shortest_ref as f64 / candidate_len as f64).exp()
    }
}

pub fn bleu(candidate: &[String], references: &[Vec<String>], opts: BleuOptions) -> f64 {
    if candidate.is_empty() || references.is_empty() || opts.max_n == 0 {
        return 0.0;
    }
    let w = 1.0 / opts.max_n as f64;
    let mut log_sum = 0.0;
    for n in 1..=opts.max_n {
        let (matched, total) = modified_precision(candidate, references, n);
        let p = if opts.smoothing {
            (matched as f64 + 1.0) / (total as f64 + 1.0)
        } else if matched == 0 {
            return 0.0;
        } else {
            matched as f64 / total as f64
        };
        log_sum += w * p.ln();
    }
    let shortest = references.iter().map(Vec::len).min().unwrap_or(0);
    brevity_penalty(candidate.len(), shortest) * log_sum.exp()
}
