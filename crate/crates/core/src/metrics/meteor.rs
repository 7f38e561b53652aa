//! METEOR with exact unigram matching and a chunk fragmentation penalty.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeteorParams {
    pub alpha: f64,
    pub gamma: f64,
}

impl Default for MeteorParams {
    fn default() -> Self {
        MeteorParams { alpha: 0.9, gamma: 0.5 }
    }
}

/// Match and chunk counts of the best exact alignment: the maximum number
/// of one-to-one matches, and among those the fewest contiguous chunks.
pub fn align(candidate: &[String], reference: &[String]) -> (usize, usize) {
    // Chunks are minimised by an exhaustive search over the (small) set of
    // maximum alignments; positions are grouped by word so the search only
    // branches on repeated words.
    let mut best: Option<(usize, usize)> = None;
    let mut used = vec![false; reference.len()];
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    let max_matches = max_matches(candidate, reference);
    search(candidate, reference, 0, &mut used, &mut pairs, max_matches, &mut best, &mut 0);
    best.unwrap_or((0, 0))
}

fn max_matches(candidate: &[String], reference: &[String]) -> usize {
    let mut counts = std::collections::HashMap::new();
    for r in reference {
        *counts.entry(r.as_str()).or_insert(0usize) += 1;
    }
    let mut m = 0;
    for c in candidate {
        if let Some(n) = counts.get_mut(c.as_str()) {
            if *n > 0 {
                *n -= 1;
                m += 1;
            }
        }
    }
    m
}

fn chunks(pairs: &[(usize, usize)]) -> usize {
    let mut n = 0;
    let mut prev: Option<(usize, usize)> = None;
    for &(c, r) in pairs {
        match prev {
            Some((pc, pr)) if c == pc + 1 && r == pr + 1 => {}
            _ => n += 1,
        }
        prev = Some((c, r));
    }
    n
}

const SEARCH_BUDGET: usize = 200_000;

#[allow(clippy::too_many_arguments)]
fn search(
    cand: &[String],
    refs: &[String],
    i: usize,
    used: &mut [bool],
    pairs: &mut Vec<(usize, usize)>,
    target: usize,
    best: &mut Option<(usize, usize)>,
    visited: &mut usize,
) {
    *visited += 1;
    let remaining = cand.len() - i;
    if pairs.len() + remaining < target || *visited > SEARCH_BUDGET && best.is_some() {
        return;
    }
    if i == cand.len() {
        let ch = chunks(pairs);
        if best.is_none_or(|(_, b)| ch < b) {
            *best = Some((pairs.len(), ch));
        }
        return;
    }
    for j in 0..refs.len() {
        if !used[j] && refs[j] == cand[i] {
            used[j] = true;
            pairs.push((i, j));
            search(cand, refs, i + 1, used, pairs, target, best, visited);
            pairs.pop();
            used[j] = false;
        }
    }
    search(cand, refs, i + 1, used, pairs, target, best, visited);
}

pub fn meteor(candidate: &[String], reference: &[String], params: MeteorParams) -> f64 {
    if candidate.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let (matches, chunks) = align(candidate, reference);
    if matches == 0 {
        return 0.0;
    }
    let m = matches as f64;
    let p = m / candidate.len() as f64;
    let r = m / reference.len() as f64;
    let fmean = p * r / (params.alpha * p + (1.0 - params.alpha) * r);
    let penalty = (chunks as f64 / m).powi(3);
    (1.0 - params.gamma * penalty) * fmean
}
