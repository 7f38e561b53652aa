//! CIDEr: TF-IDF n-gram cosine similarity averaged over references and
//! n-gram orders.

use std::collections::{BTreeMap, HashMap, HashSet};

use super::bleu::ngram_counts;

/// Document frequencies of every n-gram (n = 1..=max_n) over a reference
/// corpus, one document per clip.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusStats {
    df: HashMap<Vec<String>, usize>,
    documents: usize,
    max_n: usize,
}

impl CorpusStats {
    /// `documents[i]` is the reference set of clip `i`; an n-gram counts
    /// once per clip however many references contain it.
    pub fn build(documents: &[Vec<Vec<String>>], max_n: usize) -> Self {
        let mut df = HashMap::new();
        for refs in documents {
            let mut seen: HashSet<&[String]> = HashSet::new();
            for r in refs {
                for n in 1..=max_n {
                    for g in ngram_counts(r, n).into_keys() {
                        seen.insert(g);
                    }
                }
            }
            for g in seen {
                *df.entry(g.to_vec()).or_insert(0) += 1;
            }
        }
        CorpusStats { df, documents: documents.len(), max_n }
    }

    pub fn documents(&self) -> usize {
        self.documents
    }

    pub fn max_n(&self) -> usize {
        self.max_n
    }

    pub fn df(&self, gram: &[String]) -> usize {
        self.df.get(gram).copied().unwrap_or(0)
    }

    /// `ln(N / df)`. N-grams absent from the corpus are treated as df = 1.
    pub fn idf(&self, gram: &[String]) -> f64 {
        let df = self.df(gram).max(1);
        (self.documents as f64 / df as f64).ln()
    }
}

/// Ordered so that sums do not depend on hash iteration order.
fn tfidf<'a>(tokens: &'a [String], n: usize, corpus: &CorpusStats) -> BTreeMap<&'a [String], f64> {
    let counts = ngram_counts(tokens, n);
    let total: usize = counts.values().sum();
    counts
        .into_iter()
        .map(|(g, c)| (g, c as f64 / total as f64 * corpus.idf(g)))
        .collect()
}

fn cosine(a: &BTreeMap<&[String], f64>, b: &BTreeMap<&[String], f64>) -> f64 {
    let na: f64 = a.values().map(|v| v * v).sum::<f64>().sqrt();
    let nb: f64 = b.values().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let dot: f64 = a.iter().map(|(g, v)| v * b.get(g).copied().unwrap_or(0.0)).sum();
    dot / (na * nb)
}

pub fn cider(
    candidate: &[String],
    references: &[Vec<String>],
    corpus: &CorpusStats,
    max_n: usize,
    scale: f64,
) -> f64 {
    if candidate.is_empty() || references.is_empty() || max_n == 0 {
        return 0.0;
    }
    let mut total = 0.0;
    for n in 1..=max_n {
        let c = tfidf(candidate, n, corpus);
        let mean: f64 = references
            .iter()
            .map(|r| cosine(&c, &tfidf(r, n, corpus)))
            .sum::<f64>()
            / references.len() as f64;
        total += mean;
    }
    scale * total / max_n as f64
}
