//! Pointwise mutual information over fixed-width co-occurrence windows, and
//! the per-topic coherence report.

use std::collections::{BTreeMap, BTreeSet};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{NorError, Result};

/// Window-based co-occurrence statistics built from a tokenized corpus.
///
/// `unigrams[w]` counts the windows containing `w`; `pairs["w1 w2"]` (keys
/// lexicographically ordered, distinct words) counts the windows containing
/// both.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CooccurStats {
    pub window: usize,
    pub total_windows: u64,
    pub unigrams: BTreeMap<String, u64>,
    pub pairs: BTreeMap<String, u64>,
}

fn pair_key(a: &str, b: &str) -> String {
    if a <= b {
        format!("{a} {b}")
    } else {
        format!("{b} {a}")
    }
}

/// Builds statistics from documents (one whitespace-tokenized document per
/// line). Windows slide one token at a time; documents shorter than the
/// window form a single window.
pub fn build_cooccur<'a>(docs: impl Iterator<Item = &'a str>, window: usize) -> CooccurStats {
    assert!(window >= 2, "window must cover at least two tokens");
    let mut stats = CooccurStats {
        window,
        total_windows: 0,
        unigrams: BTreeMap::new(),
        pairs: BTreeMap::new(),
    };
    for doc in docs {
        let tokens: Vec<&str> = doc.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        let spans: Vec<&[&str]> = if tokens.len() <= window {
            vec![&tokens[..]]
        } else {
            tokens.windows(window).collect()
        };
        for span in spans {
            stats.total_windows += 1;
            let distinct: BTreeSet<&str> = span.iter().copied().collect();
            let words: Vec<&str> = distinct.into_iter().collect();
            for &w in &words {
                *stats.unigrams.entry(w.to_string()).or_insert(0) += 1;
            }
            for (ai, &a) in words.iter().enumerate() {
                for &b in &words[ai + 1..] {
                    *stats.pairs.entry(pair_key(a, b)).or_insert(0) += 1;
                }
            }
        }
    }
    stats
}

pub fn build_cooccur_from_text(text: &str, window: usize) -> CooccurStats {
    build_cooccur(text.lines(), window)
}

impl CooccurStats {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("cooccur serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| NorError::Format(e.to_string()))
    }
}

/// `ln( p(w_i, w_j) / (p(w_i) p(w_j)) )` with add-one smoothing on the joint
/// count only. Symmetric in its arguments. Errors when either word is
/// absent from the statistics.
pub fn pmi(stats: &CooccurStats, w_i: &str, w_j: &str) -> Result<f64> {
    let ci = *stats
        .unigrams
        .get(w_i)
        .ok_or_else(|| NorError::MissingWord(w_i.to_string()))?;
    let cj = *stats
        .unigrams
        .get(w_j)
        .ok_or_else(|| NorError::MissingWord(w_j.to_string()))?;
    if ci == 0 || cj == 0 {
        return Err(NorError::MissingWord(format!("{w_i} or {w_j} has zero count")));
    }
    let joint = stats.pairs.get(&pair_key(w_i, w_j)).copied().unwrap_or(0);
    let w = stats.total_windows as f64;
    Ok((((joint + 1) as f64) / w).ln() - (ci as f64 / w).ln() - (cj as f64 / w).ln())
}

/// Coherence report for one latent dimension.
#[derive(Debug, Clone, Serialize)]
pub struct TopicEntry {
    pub words: Vec<String>,
    /// Mean pairwise PMI over the pairs with available statistics, if any.
    pub mean_pmi: Option<f64>,
    /// Pairs skipped because a word was missing from the statistics.
    pub excluded_pairs: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct TopicReport {
    pub topics: Vec<TopicEntry>,
    /// Mean of the per-topic means over topics with at least one scored
    /// pair.
    pub overall_mean_pmi: Option<f64>,
}

/// Top `top_n` words per latent dimension by weight (ties broken by word
/// index), with mean pairwise PMI per topic and overall.
pub fn topic_report(
    theta: &Array2<f64>,
    vocab: &[String],
    top_n: usize,
    stats: &CooccurStats,
) -> Result<TopicReport> {
    if vocab.len() != theta.nrows() {
        return Err(NorError::DimMismatch(format!(
            "vocabulary has {} words for {} observed dimensions",
            vocab.len(),
            theta.nrows()
        )));
    }
    let k = theta.ncols();
    let mut topics = Vec::with_capacity(k);
    for kk in 0..k {
        let col = theta.column(kk);
        let mut order: Vec<usize> = (0..vocab.len()).collect();
        order.sort_by(|&a, &b| {
            col[b]
                .partial_cmp(&col[a])
                .expect("finite weights")
                .then(a.cmp(&b))
        });
        order.truncate(top_n);
        let words: Vec<String> = order.iter().map(|&i| vocab[i].clone()).collect();
        let mut total = 0.0;
        let mut scored = 0usize;
        let mut excluded = 0usize;
        for ai in 0..words.len() {
            for bi in ai + 1..words.len() {
                match pmi(stats, &words[ai], &words[bi]) {
                    Ok(v) => {
                        total += v;
                        scored += 1;
                    }
                    Err(NorError::MissingWord(_)) => excluded += 1,
                    Err(e) => return Err(e),
                }
            }
        }
        topics.push(TopicEntry {
            words,
            mean_pmi: (scored > 0).then(|| total / scored as f64),
            excluded_pairs: excluded,
        });
    }
    let means: Vec<f64> = topics.iter().filter_map(|t| t.mean_pmi).collect();
    let overall_mean_pmi = if means.is_empty() {
        None
    } else {
        Some(means.iter().sum::<f64>() / means.len() as f64)
    };
    Ok(TopicReport {
        topics,
        overall_mean_pmi,
    })
}
