//! Medical-term lexicon: document frequencies over a corpus and the
//! rarity weights derived from them.
//!
//! A term's frequency is the number of samples whose token sequence
//! contains it and whose concept list marks it as medical (document
//! frequency, not token count). After dropping terms below the minimum
//! count, each surviving term `w` gets the weight
//!
//! ```text
//! G(w) = log(M / (1 + freq(w))) / log(M / (1 + f_min))
//! ```
//!
//! where `M` is the number of samples and `f_min` the smallest
//! surviving frequency. The rarest terms weigh exactly 1 and weights
//! fall as frequency rises. The ratio is independent of the logarithm
//! base. In the degenerate regime `1 + freq >= M` the raw value is
//! non-positive; such weights are clamped to a small floor so that a
//! training loss never rewards errors on very common terms.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::corpus::{tokenize, TokenSequence};

/// Weights at or below zero (possible only when `1 + freq >= M`) clamp
/// to this floor.
pub const DEFAULT_WEIGHT_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LexiconError {
    #[error("cannot build a lexicon from an empty sample list")]
    EmptyCorpus,
    #[error("empty lexicon: no term reached min_count {min_count}")]
    EmptyLexicon { min_count: u64 },
    #[error("term {term:?} is not in the lexicon")]
    UnknownTerm { term: String },
    #[error("invalid lexicon: {reason}")]
    Invalid { reason: String },
}

/// Medical-term document frequencies plus the corpus size they were
/// counted over. Immutable once built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TermLexicon {
    term_freq: BTreeMap<String, u64>,
    sample_count: u64,
    min_count: u64,
    f_min: u64,
}

impl TermLexicon {
    /// Assemble a lexicon from pre-counted frequencies, checking the
    /// structural invariants. Used when loading a persisted lexicon
    /// and when building paper-style fixtures.
    pub fn from_counts(
        term_freq: BTreeMap<String, u64>,
        sample_count: u64,
        min_count: u64,
    ) -> Result<Self, LexiconError> {
        if min_count == 0 {
            return Err(LexiconError::Invalid {
                reason: "min_count must be at least 1".to_string(),
            });
        }
        if term_freq.is_empty() {
            return Err(LexiconError::EmptyLexicon { min_count });
        }
        let mut f_min = u64::MAX;
        let mut f_max = 0;
        for (term, &freq) in &term_freq {
            if freq < min_count {
                return Err(LexiconError::Invalid {
                    reason: alloc::format!(
                        "term {term:?} has frequency {freq} below min_count {min_count}"
                    ),
                });
            }
            f_min = f_min.min(freq);
            f_max = f_max.max(freq);
        }
        if sample_count < f_max {
            return Err(LexiconError::Invalid {
                reason: alloc::format!(
                    "sample count {sample_count} is below the largest frequency {f_max}"
                ),
            });
        }
        Ok(Self {
            term_freq,
            sample_count,
            min_count,
            f_min,
        })
    }

    /// Document frequency of `term`, if present.
    pub fn freq(&self, term: &str) -> Option<u64> {
        self.term_freq.get(term).copied()
    }

    pub fn contains(&self, term: &str) -> bool {
        self.term_freq.contains_key(term)
    }

    /// Number of samples the lexicon was counted over (`M`).
    pub fn sample_count(&self) -> u64 {
        self.sample_count
    }

    /// Smallest frequency that survived the filter.
    pub fn f_min(&self) -> u64 {
        self.f_min
    }

    pub fn min_count(&self) -> u64 {
        self.min_count
    }

    pub fn len(&self) -> usize {
        self.term_freq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.term_freq.is_empty()
    }

    /// Terms with frequencies, in lexicographic term order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.term_freq.iter().map(|(t, &f)| (t.as_str(), f))
    }

    /// Median of the stored frequencies (upper median). Used to split
    /// terms into common and rare halves for recall reporting.
    pub fn median_freq(&self) -> u64 {
        let mut freqs: Vec<u64> = self.term_freq.values().copied().collect();
        freqs.sort_unstable();
        freqs[freqs.len() / 2]
    }
}

/// Derives the per-sample set of nominal medical words from a sample's
/// concept strings. The default implementation tokenizes each concept
/// string; a UMLS-backed linker can slot in behind the same trait.
pub trait TermExtractor {
    fn nominal_terms(&self, concepts: &[String]) -> BTreeSet<String>;
}

/// Treats concept strings as already nominal: each one is tokenized and
/// its words become medical terms for that sample.
#[derive(Debug, Clone, Copy, Default)]
pub struct TokenizedConcepts;

impl TermExtractor for TokenizedConcepts {
    fn nominal_terms(&self, concepts: &[String]) -> BTreeSet<String> {
        concepts
            .iter()
            .flat_map(|c| tokenize(c))
            .collect()
    }
}

/// Count document frequencies over `(tokens, concepts)` pairs and drop
/// terms seen in fewer than `min_count` samples.
pub fn build_lexicon(
    samples: &[(TokenSequence, Vec<String>)],
    min_count: u64,
) -> Result<TermLexicon, LexiconError> {
    build_lexicon_with(samples, min_count, &TokenizedConcepts)
}

pub fn build_lexicon_with<E: TermExtractor>(
    samples: &[(TokenSequence, Vec<String>)],
    min_count: u64,
    extractor: &E,
) -> Result<TermLexicon, LexiconError> {
    if samples.is_empty() {
        return Err(LexiconError::EmptyCorpus);
    }
    if min_count == 0 {
        return Err(LexiconError::Invalid {
            reason: "min_count must be at least 1".to_string(),
        });
    }
    let mut df: BTreeMap<String, u64> = BTreeMap::new();
    for (tokens, concepts) in samples {
        let medical = extractor.nominal_terms(concepts);
        // Each term counts once per sample no matter how often it occurs.
        let mut seen: BTreeSet<&str> = BTreeSet::new();
        for token in &tokens.tokens {
            if medical.contains(token.as_str()) {
                seen.insert(token.as_str());
            }
        }
        for term in seen {
            *df.entry(term.to_string()).or_insert(0) += 1;
        }
    }
    df.retain(|_, freq| *freq >= min_count);
    if df.is_empty() {
        return Err(LexiconError::EmptyLexicon { min_count });
    }
    TermLexicon::from_counts(df, samples.len() as u64, min_count)
}

/// The rarity-weight formula on raw numbers, before clamping.
///
/// Returns 1.0 exactly when `freq == f_min` (the numerator and
/// denominator coincide, so no rounding is allowed to creep in).
pub fn raw_rarity_weight(sample_count: u64, f_min: u64, freq: u64) -> f64 {
    if freq == f_min {
        return 1.0;
    }
    let m = sample_count as f64;
    libm::log(m / (1.0 + freq as f64)) / libm::log(m / (1.0 + f_min as f64))
}

fn clamp_weight(raw: f64, floor: f64) -> f64 {
    if raw.is_finite() && raw > floor {
        raw
    } else {
        floor
    }
}

/// Rarity weight of a lexicon term, clamped to
/// [`DEFAULT_WEIGHT_FLOOR`]. Unknown terms are an error; check
/// membership through [`mark_medical_positions`] first.
pub fn term_weight(lex: &TermLexicon, term: &str) -> Result<f64, LexiconError> {
    let freq = lex.freq(term).ok_or_else(|| LexiconError::UnknownTerm {
        term: term.to_string(),
    })?;
    Ok(clamp_weight(
        raw_rarity_weight(lex.sample_count, lex.f_min, freq),
        DEFAULT_WEIGHT_FLOOR,
    ))
}

/// Rarity weights for every lexicon term.
#[derive(Debug, Clone, PartialEq)]
pub struct TermWeightTable {
    weights: BTreeMap<String, f64>,
    /// Terms whose raw weight was non-positive and got clamped; callers
    /// may want to warn about these.
    clamped: Vec<String>,
    floor: f64,
}

impl TermWeightTable {
    pub fn weight(&self, term: &str) -> Option<f64> {
        self.weights.get(term).copied()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.weights.iter().map(|(t, &w)| (t.as_str(), w))
    }

    /// Terms that hit the clamp floor.
    pub fn clamped_terms(&self) -> &[String] {
        &self.clamped
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }
}

/// Evaluate the weight formula for every term in the lexicon.
pub fn weight_table(lex: &TermLexicon) -> TermWeightTable {
    weight_table_with_floor(lex, DEFAULT_WEIGHT_FLOOR)
}

pub fn weight_table_with_floor(lex: &TermLexicon, floor: f64) -> TermWeightTable {
    let mut weights = BTreeMap::new();
    let mut clamped = Vec::new();
    for (term, freq) in lex.iter() {
        let raw = raw_rarity_weight(lex.sample_count, lex.f_min, freq);
        let w = clamp_weight(raw, floor);
        if w != raw {
            clamped.push(term.to_string());
        }
        weights.insert(term.to_string(), w);
    }
    TermWeightTable {
        weights,
        clamped,
        floor,
    }
}

/// Positions of lexicon members in a token sequence, ascending.
pub fn mark_medical_positions(
    tokens: &TokenSequence,
    lex: &TermLexicon,
) -> Vec<(usize, String)> {
    tokens
        .tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| lex.contains(t))
        .map(|(i, t)| (i, t.clone()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn seq(id: &str, words: &[&str]) -> TokenSequence {
        TokenSequence::new(words.iter().map(|w| w.to_string()).collect(), id)
    }

    fn concepts(words: &[&str]) -> Vec<String> {
        words.iter().map(|w| w.to_string()).collect()
    }

    /// Six samples with medical terms a (6x), b (5x), c (2x).
    fn fixture_corpus() -> Vec<(TokenSequence, Vec<String>)> {
        let mut samples = Vec::new();
        for i in 0..6 {
            let mut words = vec!["a"];
            if i < 5 {
                words.push("b");
            }
            if i < 2 {
                words.push("c");
            }
            words.push("filler");
            samples.push((seq(&alloc::format!("s{i}"), &words), concepts(&["a", "b", "c"])));
        }
        samples
    }

    #[test]
    fn counts_document_frequency() {
        let lex = build_lexicon(&fixture_corpus(), 2).unwrap();
        assert_eq!(lex.freq("a"), Some(6));
        assert_eq!(lex.freq("b"), Some(5));
        assert_eq!(lex.freq("c"), Some(2));
        assert_eq!(lex.f_min(), 2);
        assert_eq!(lex.sample_count(), 6);
        // "filler" appears everywhere but is never a concept
        assert!(!lex.contains("filler"));
    }

    #[test]
    fn min_count_filter_drops_rare_terms() {
        // term "rare" in 4 of 10 samples, threshold 5
        let mut samples = Vec::new();
        for i in 0..10 {
            let words: &[&str] = if i < 4 { &["rare", "chest"] } else { &["chest"] };
            samples.push((seq(&alloc::format!("s{i}"), words), concepts(&["rare", "chest"])));
        }
        let lex = build_lexicon(&samples, 5).unwrap();
        assert!(!lex.contains("rare"));
        assert_eq!(lex.freq("chest"), Some(10));
        assert_eq!(lex.f_min(), 10);
    }

    #[test]
    fn duplicate_tokens_count_once_per_sample() {
        let samples = vec![(seq("s0", &["chest", "chest"]), concepts(&["chest"]))];
        let lex = build_lexicon(&samples, 1).unwrap();
        assert_eq!(lex.freq("chest"), Some(1));
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert_eq!(build_lexicon(&[], 1), Err(LexiconError::EmptyCorpus));
    }

    #[test]
    fn all_filtered_is_an_error() {
        let samples = vec![(seq("s0", &["x"]), concepts(&["x"]))];
        assert!(matches!(
            build_lexicon(&samples, 5),
            Err(LexiconError::EmptyLexicon { min_count: 5 })
        ));
    }

    #[test]
    fn multiword_concepts_are_split() {
        let samples = vec![
            (seq("s0", &["pleural", "effusion"]), concepts(&["Pleural Effusion"])),
            (seq("s1", &["pleural", "mass"]), concepts(&["Pleural Mass"])),
        ];
        let lex = build_lexicon(&samples, 1).unwrap();
        assert_eq!(lex.freq("pleural"), Some(2));
        assert_eq!(lex.freq("effusion"), Some(1));
    }

    #[test]
    fn weight_is_one_at_f_min() {
        let lex = build_lexicon(&fixture_corpus(), 2).unwrap();
        assert_eq!(term_weight(&lex, "c").unwrap(), 1.0);
    }

    #[test]
    fn paper_scale_weight() {
        // M=60918, f_min=5, freq=8761: direct evaluation of the formula
        // gives 0.2101890799402025.
        let w = raw_rarity_weight(60918, 5, 8761);
        assert!((w - 0.2101890799402025).abs() < 1e-12);
    }

    #[test]
    fn small_example_weights() {
        assert_eq!(raw_rarity_weight(100, 1, 1), 1.0);
        // ln(2)/ln(50)
        assert!((raw_rarity_weight(100, 1, 49) - 0.17718382013555792).abs() < 1e-12);
    }

    #[test]
    fn degenerate_weights_clamp_to_floor() {
        let lex = build_lexicon(&fixture_corpus(), 2).unwrap();
        // b: ln(6/6)/ln(6/3) = 0, a: ln(6/7)/ln(2) < 0; both clamp.
        assert_eq!(term_weight(&lex, "b").unwrap(), DEFAULT_WEIGHT_FLOOR);
        assert_eq!(term_weight(&lex, "a").unwrap(), DEFAULT_WEIGHT_FLOOR);
        let table = weight_table(&lex);
        assert_eq!(table.weight("c"), Some(1.0));
        assert_eq!(table.clamped_terms(), &["a".to_string(), "b".to_string()]);
    }

    #[test]
    fn unknown_term_is_an_error() {
        let lex = build_lexicon(&fixture_corpus(), 2).unwrap();
        assert!(matches!(
            term_weight(&lex, "missing"),
            Err(LexiconError::UnknownTerm { .. })
        ));
    }

    #[test]
    fn single_term_lexicon_weighs_one() {
        let mut counts = BTreeMap::new();
        counts.insert("lesion".to_string(), 7);
        let lex = TermLexicon::from_counts(counts, 7, 1).unwrap();
        assert_eq!(term_weight(&lex, "lesion").unwrap(), 1.0);
    }

    #[test]
    fn table_matches_term_weight() {
        let lex = build_lexicon(&fixture_corpus(), 2).unwrap();
        let table = weight_table(&lex);
        for (term, _) in lex.iter() {
            assert_eq!(table.weight(term), Some(term_weight(&lex, term).unwrap()));
        }
    }

    #[test]
    fn marks_positions_in_order() {
        let lex = build_lexicon(
            &[(seq("s0", &["mri", "chest"]), concepts(&["mri", "chest"]))],
            1,
        )
        .unwrap();
        let tokens = seq("q", &["sagittal", "mri", "of", "the", "chest"]);
        let marks = mark_medical_positions(&tokens, &lex);
        assert_eq!(
            marks,
            vec![(1, "mri".to_string()), (4, "chest".to_string())]
        );
    }

    #[test]
    fn no_members_no_marks() {
        let lex = build_lexicon(&[(seq("s0", &["mri"]), concepts(&["mri"]))], 1).unwrap();
        let tokens = seq("q", &["plain", "words", "only"]);
        assert!(mark_medical_positions(&tokens, &lex).is_empty());
    }

    #[test]
    fn repeated_token_reports_both_positions() {
        let lex = build_lexicon(&[(seq("s0", &["chest"]), concepts(&["chest"]))], 1).unwrap();
        let tokens = seq("q", &["chest", "x-ray", "of", "the", "chest", "wall"]);
        let marks = mark_medical_positions(&tokens, &lex);
        assert_eq!(
            marks,
            vec![(0, "chest".to_string()), (4, "chest".to_string())]
        );
    }

    #[test]
    fn from_counts_validates_invariants() {
        let mut counts = BTreeMap::new();
        counts.insert("chest".to_string(), 10);
        // sample count below max frequency
        assert!(TermLexicon::from_counts(counts.clone(), 5, 1).is_err());
        // frequency below min_count
        assert!(TermLexicon::from_counts(counts, 20, 11).is_err());
    }
}
