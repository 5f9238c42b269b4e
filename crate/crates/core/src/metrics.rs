//! Reference-based n-gram caption metrics: corpus-level unigram BLEU
//! with brevity penalty, unigram F1 (ROUGE-1), LCS F-measure (ROUGE-L),
//! and consensus TF-IDF n-gram similarity (CIDEr).
//!
//! All four work on single-reference corpora: one reference caption per
//! candidate, aligned by index.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::corpus::TokenSequence;

/// Width of the Gaussian length penalty in CIDEr.
pub const CIDER_SIGMA: f64 = 6.0;

/// CIDEr aggregates n-gram orders 1 through this, uniformly weighted.
pub const CIDER_MAX_ORDER: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricError {
    #[error("{candidates} candidates but {references} references")]
    LengthMismatch {
        candidates: usize,
        references: usize,
    },
    #[error("metric is undefined on an empty corpus")]
    EmptyCorpus,
    #[error("CIDEr needs at least 2 samples to estimate IDF, got {size}")]
    CorpusTooSmallForIdf { size: usize },
}

/// Occurrence counts of the order-`n` token windows of one sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NGramCounts {
    n: usize,
    counts: BTreeMap<Vec<String>, u64>,
}

impl NGramCounts {
    pub fn from_tokens(tokens: &[String], n: usize) -> Self {
        let mut counts = BTreeMap::new();
        if n > 0 && tokens.len() >= n {
            for window in tokens.windows(n) {
                *counts.entry(window.to_vec()).or_insert(0) += 1;
            }
        }
        Self { n, counts }
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn count(&self, gram: &[String]) -> u64 {
        self.counts.get(gram).copied().unwrap_or(0)
    }

    /// Total number of windows (with multiplicity).
    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[String], u64)> {
        self.counts.iter().map(|(g, &c)| (g.as_slice(), c))
    }
}

fn check_corpus(
    candidates: &[TokenSequence],
    references: &[TokenSequence],
) -> Result<(), MetricError> {
    if candidates.len() != references.len() {
        return Err(MetricError::LengthMismatch {
            candidates: candidates.len(),
            references: references.len(),
        });
    }
    if candidates.is_empty() {
        return Err(MetricError::EmptyCorpus);
    }
    Ok(())
}

/// Corpus-level unigram BLEU: clipped unigram precision times the
/// brevity penalty `exp(1 - r/c)` applied when the candidate side is
/// shorter overall. An all-empty candidate side scores 0.
pub fn bleu1(
    candidates: &[TokenSequence],
    references: &[TokenSequence],
) -> Result<f64, MetricError> {
    check_corpus(candidates, references)?;
    let mut matched = 0u64;
    let mut cand_len = 0u64;
    let mut ref_len = 0u64;
    for (c, r) in candidates.iter().zip(references) {
        cand_len += c.tokens.len() as u64;
        ref_len += r.tokens.len() as u64;
        let cand = NGramCounts::from_tokens(&c.tokens, 1);
        let reference = NGramCounts::from_tokens(&r.tokens, 1);
        for (gram, count) in cand.iter() {
            matched += count.min(reference.count(gram));
        }
    }
    if cand_len == 0 {
        return Ok(0.0);
    }
    let precision = matched as f64 / cand_len as f64;
    let brevity = if cand_len >= ref_len {
        1.0
    } else {
        libm::exp(1.0 - ref_len as f64 / cand_len as f64)
    };
    Ok(precision * brevity)
}

/// Multi-reference BLEU-1: clipped counts match against the maximum
/// per-unigram count across an image's references, and the brevity
/// penalty uses the closest reference length per candidate (ties go to
/// the shorter reference). The single-reference [`bleu1`] is the
/// specialization this crate's corpora exercise.
pub fn bleu1_multi(
    candidates: &[TokenSequence],
    references: &[Vec<TokenSequence>],
) -> Result<f64, MetricError> {
    check_multi_corpus(candidates, references)?;
    let mut matched = 0u64;
    let mut cand_len = 0u64;
    let mut ref_len = 0u64;
    for (c, refs) in candidates.iter().zip(references) {
        cand_len += c.tokens.len() as u64;
        ref_len += closest_length(c.tokens.len(), refs) as u64;
        let cand = NGramCounts::from_tokens(&c.tokens, 1);
        let budgets: Vec<NGramCounts> = refs
            .iter()
            .map(|r| NGramCounts::from_tokens(&r.tokens, 1))
            .collect();
        for (gram, count) in cand.iter() {
            let budget = budgets.iter().map(|b| b.count(gram)).max().unwrap_or(0);
            matched += count.min(budget);
        }
    }
    if cand_len == 0 {
        return Ok(0.0);
    }
    let precision = matched as f64 / cand_len as f64;
    let brevity = if cand_len >= ref_len {
        1.0
    } else {
        libm::exp(1.0 - ref_len as f64 / cand_len as f64)
    };
    Ok(precision * brevity)
}

fn closest_length(cand_len: usize, refs: &[TokenSequence]) -> usize {
    let mut best = refs[0].len();
    for r in refs {
        let len = r.len();
        let (d_new, d_best) = (
            (len as i64 - cand_len as i64).abs(),
            (best as i64 - cand_len as i64).abs(),
        );
        if d_new < d_best || (d_new == d_best && len < best) {
            best = len;
        }
    }
    best
}

fn check_multi_corpus(
    candidates: &[TokenSequence],
    references: &[Vec<TokenSequence>],
) -> Result<(), MetricError> {
    if candidates.len() != references.len() {
        return Err(MetricError::LengthMismatch {
            candidates: candidates.len(),
            references: references.len(),
        });
    }
    if candidates.is_empty() || references.iter().any(Vec::is_empty) {
        return Err(MetricError::EmptyCorpus);
    }
    Ok(())
}

fn f_measure(precision: f64, recall: f64, beta: f64) -> f64 {
    let denom = recall + beta * beta * precision;
    if denom == 0.0 {
        0.0
    } else {
        (1.0 + beta * beta) * precision * recall / denom
    }
}

/// Unigram F1 between the two token multisets. Both-empty is 0.
pub fn rouge1(candidate: &TokenSequence, reference: &TokenSequence) -> f64 {
    if candidate.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let cand = NGramCounts::from_tokens(&candidate.tokens, 1);
    let reference_counts = NGramCounts::from_tokens(&reference.tokens, 1);
    let overlap: u64 = cand
        .iter()
        .map(|(g, c)| c.min(reference_counts.count(g)))
        .sum();
    let p = overlap as f64 / candidate.len() as f64;
    let r = overlap as f64 / reference.len() as f64;
    f_measure(p, r, 1.0)
}

fn lcs_length(a: &[String], b: &[String]) -> usize {
    let mut prev = alloc::vec![0usize; b.len() + 1];
    let mut curr = alloc::vec![0usize; b.len() + 1];
    for ai in a {
        for (j, bj) in b.iter().enumerate() {
            curr[j + 1] = if ai == bj {
                prev[j] + 1
            } else {
                prev[j + 1].max(curr[j])
            };
        }
        core::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}

/// Multi-reference ROUGE-1: the best per-reference F1.
pub fn rouge1_multi(candidate: &TokenSequence, references: &[TokenSequence]) -> f64 {
    references
        .iter()
        .map(|r| rouge1(candidate, r))
        .fold(0.0, f64::max)
}

/// LCS-based F-measure with plain F1 weighting.
pub fn rouge_l(candidate: &TokenSequence, reference: &TokenSequence) -> f64 {
    rouge_l_weighted(candidate, reference, 1.0)
}

/// Multi-reference ROUGE-L: the best per-reference F-measure.
pub fn rouge_l_multi(candidate: &TokenSequence, references: &[TokenSequence]) -> f64 {
    references
        .iter()
        .map(|r| rouge_l(candidate, r))
        .fold(0.0, f64::max)
}

/// LCS F-measure with an explicit recall weight:
/// `(1+beta^2)PR / (R + beta^2 P)`. Large `beta` leans on recall.
pub fn rouge_l_weighted(candidate: &TokenSequence, reference: &TokenSequence, beta: f64) -> f64 {
    if candidate.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let lcs = lcs_length(&candidate.tokens, &reference.tokens) as f64;
    let p = lcs / candidate.len() as f64;
    let r = lcs / reference.len() as f64;
    f_measure(p, r, beta)
}

/// Number of reference documents containing each n-gram, per order.
fn document_frequencies(references: &[TokenSequence]) -> Vec<BTreeMap<Vec<String>, u64>> {
    let mut df: Vec<BTreeMap<Vec<String>, u64>> = alloc::vec![BTreeMap::new(); CIDER_MAX_ORDER];
    for r in references {
        for (n, table) in df.iter_mut().enumerate() {
            let grams = NGramCounts::from_tokens(&r.tokens, n + 1);
            for (gram, _) in grams.iter() {
                *table.entry(gram.to_vec()).or_insert(0) += 1;
            }
        }
    }
    df
}

fn gaussian_length_penalty(cand_len: usize, ref_len: usize) -> f64 {
    let delta = cand_len as f64 - ref_len as f64;
    libm::exp(-delta * delta / (2.0 * CIDER_SIGMA * CIDER_SIGMA))
}

/// Consensus TF-IDF metric: for each order n, cosine similarity between
/// the TF-IDF-weighted n-gram vectors of candidate and reference,
/// scaled by a Gaussian penalty on the length difference and by 10;
/// orders are averaged uniformly and then samples are averaged.
///
/// IDF is `ln(corpus size / document frequency)` over the reference
/// corpus, with unseen n-grams treated as document frequency 1. At
/// least two samples are required for the IDF estimate to exist.
pub fn cider(
    candidates: &[TokenSequence],
    references: &[TokenSequence],
) -> Result<f64, MetricError> {
    check_corpus(candidates, references)?;
    if candidates.len() < 2 {
        return Err(MetricError::CorpusTooSmallForIdf {
            size: candidates.len(),
        });
    }
    let df = document_frequencies(references);
    let n_docs = references.len() as f64;
    let idf = |order: usize, gram: &[String]| {
        let d = df[order - 1].get(gram).copied().unwrap_or(0).max(1) as f64;
        libm::log(n_docs / d)
    };

    let mut total = 0.0;
    for (c, r) in candidates.iter().zip(references) {
        let penalty = gaussian_length_penalty(c.len(), r.len());
        let mut per_order_sum = 0.0;
        for n in 1..=CIDER_MAX_ORDER {
            let cand = NGramCounts::from_tokens(&c.tokens, n);
            let reference = NGramCounts::from_tokens(&r.tokens, n);
            let mut dot = 0.0;
            let mut norm_c = 0.0;
            let mut norm_r = 0.0;
            for (gram, count) in cand.iter() {
                let w = count as f64 * idf(n, gram);
                norm_c += w * w;
                let ref_count = reference.count(gram);
                if ref_count > 0 {
                    dot += w * (ref_count as f64 * idf(n, gram));
                }
            }
            for (gram, count) in reference.iter() {
                let w = count as f64 * idf(n, gram);
                norm_r += w * w;
            }
            let cos = if norm_c > 0.0 && norm_r > 0.0 {
                dot / (libm::sqrt(norm_c) * libm::sqrt(norm_r))
            } else {
                0.0
            };
            per_order_sum += 10.0 * penalty * cos;
        }
        total += per_order_sum / CIDER_MAX_ORDER as f64;
    }
    Ok(total / candidates.len() as f64)
}

/// Multi-reference CIDEr: the document frequency of an n-gram counts
/// the images whose reference set contains it, and a candidate's score
/// averages its similarity against each of that image's references.
pub fn cider_multi(
    candidates: &[TokenSequence],
    references: &[Vec<TokenSequence>],
) -> Result<f64, MetricError> {
    check_multi_corpus(candidates, references)?;
    if candidates.len() < 2 {
        return Err(MetricError::CorpusTooSmallForIdf {
            size: candidates.len(),
        });
    }
    // per-order document frequency over images
    let mut df: Vec<BTreeMap<Vec<String>, u64>> = alloc::vec![BTreeMap::new(); CIDER_MAX_ORDER];
    for refs in references {
        for (n, table) in df.iter_mut().enumerate() {
            let mut seen: BTreeMap<Vec<String>, ()> = BTreeMap::new();
            for r in refs {
                for (gram, _) in NGramCounts::from_tokens(&r.tokens, n + 1).iter() {
                    seen.insert(gram.to_vec(), ());
                }
            }
            for (gram, ()) in seen {
                *table.entry(gram).or_insert(0) += 1;
            }
        }
    }
    let n_docs = references.len() as f64;
    let idf = |order: usize, gram: &[String]| {
        let d = df[order - 1].get(gram).copied().unwrap_or(0).max(1) as f64;
        libm::log(n_docs / d)
    };

    let mut total = 0.0;
    for (c, refs) in candidates.iter().zip(references) {
        let mut per_ref_sum = 0.0;
        for r in refs {
            let penalty = gaussian_length_penalty(c.len(), r.len());
            let mut per_order_sum = 0.0;
            for n in 1..=CIDER_MAX_ORDER {
                let cand = NGramCounts::from_tokens(&c.tokens, n);
                let reference = NGramCounts::from_tokens(&r.tokens, n);
                let mut dot = 0.0;
                let mut norm_c = 0.0;
                let mut norm_r = 0.0;
                for (gram, count) in cand.iter() {
                    let w = count as f64 * idf(n, gram);
                    norm_c += w * w;
                    let ref_count = reference.count(gram);
                    if ref_count > 0 {
                        dot += w * (ref_count as f64 * idf(n, gram));
                    }
                }
                for (gram, count) in reference.iter() {
                    let w = count as f64 * idf(n, gram);
                    norm_r += w * w;
                }
                let cos = if norm_c > 0.0 && norm_r > 0.0 {
                    dot / (libm::sqrt(norm_c) * libm::sqrt(norm_r))
                } else {
                    0.0
                };
                per_order_sum += 10.0 * penalty * cos;
            }
            per_ref_sum += per_order_sum / CIDER_MAX_ORDER as f64;
        }
        total += per_ref_sum / refs.len() as f64;
    }
    Ok(total / candidates.len() as f64)
}

/// The CIDEr-D variant: candidate term frequencies are clipped to the
/// reference's when forming the numerator, which removes the reward for
/// repeating high-scoring n-grams.
pub fn cider_d(
    candidates: &[TokenSequence],
    references: &[TokenSequence],
) -> Result<f64, MetricError> {
    check_corpus(candidates, references)?;
    if candidates.len() < 2 {
        return Err(MetricError::CorpusTooSmallForIdf {
            size: candidates.len(),
        });
    }
    let df = document_frequencies(references);
    let n_docs = references.len() as f64;
    let idf = |order: usize, gram: &[String]| {
        let d = df[order - 1].get(gram).copied().unwrap_or(0).max(1) as f64;
        libm::log(n_docs / d)
    };

    let mut total = 0.0;
    for (c, r) in candidates.iter().zip(references) {
        let penalty = gaussian_length_penalty(c.len(), r.len());
        let mut per_order_sum = 0.0;
        for n in 1..=CIDER_MAX_ORDER {
            let cand = NGramCounts::from_tokens(&c.tokens, n);
            let reference = NGramCounts::from_tokens(&r.tokens, n);
            let mut dot = 0.0;
            let mut norm_c = 0.0;
            let mut norm_r = 0.0;
            for (gram, count) in cand.iter() {
                let i = idf(n, gram);
                let wc = count as f64 * i;
                norm_c += wc * wc;
                let wr = reference.count(gram) as f64 * i;
                dot += wc.min(wr) * wr;
            }
            for (gram, count) in reference.iter() {
                let w = count as f64 * idf(n, gram);
                norm_r += w * w;
            }
            let cos = if norm_c > 0.0 && norm_r > 0.0 {
                dot / (libm::sqrt(norm_c) * libm::sqrt(norm_r))
            } else {
                0.0
            };
            per_order_sum += 10.0 * penalty * cos;
        }
        total += per_order_sum / CIDER_MAX_ORDER as f64;
    }
    Ok(total / candidates.len() as f64)
}

/// Corpus-level scores for the four metrics. ROUGE values are means of
/// the per-pair scores.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricReport {
    pub bleu1: f64,
    pub rouge1: f64,
    pub rouge_l: f64,
    pub cider: f64,
    pub sample_count: usize,
}

pub fn score_corpus(
    candidates: &[TokenSequence],
    references: &[TokenSequence],
) -> Result<MetricReport, MetricError> {
    check_corpus(candidates, references)?;
    let n = candidates.len() as f64;
    let rouge1_mean = candidates
        .iter()
        .zip(references)
        .map(|(c, r)| rouge1(c, r))
        .sum::<f64>()
        / n;
    let rouge_l_mean = candidates
        .iter()
        .zip(references)
        .map(|(c, r)| rouge_l(c, r))
        .sum::<f64>()
        / n;
    Ok(MetricReport {
        bleu1: bleu1(candidates, references)?,
        rouge1: rouge1_mean,
        rouge_l: rouge_l_mean,
        cider: cider(candidates, references)?,
        sample_count: candidates.len(),
    })
}
