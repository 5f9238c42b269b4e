//! Brute-force re-implementations of the four caption metrics, written
//! independently of `medcap_core::metrics` and kept deliberately naive:
//! recursive LCS, explicit n-gram unions, textbook formulas. The main
//! implementations must agree with these within 1e-6 on fixtures of
//! partially overlapping captions.

use std::collections::HashMap;

use medcap_core::corpus::TokenSequence;
use medcap_core::metrics::{bleu1, cider, rouge1, rouge_l, score_corpus, CIDER_SIGMA};

fn seq(id: &str, words: &[&str]) -> TokenSequence {
    TokenSequence::new(words.iter().map(|w| w.to_string()).collect(), id)
}

// ---------------------------------------------------------------------------
// oracle implementations
// ---------------------------------------------------------------------------

fn oracle_bleu1(cands: &[TokenSequence], refs: &[TokenSequence]) -> f64 {
    let mut matched = 0usize;
    let mut cand_total = 0usize;
    let mut ref_total = 0usize;
    for (c, r) in cands.iter().zip(refs) {
        cand_total += c.tokens.len();
        ref_total += r.tokens.len();
        let mut budget: HashMap<&str, usize> = HashMap::new();
        for t in &r.tokens {
            *budget.entry(t.as_str()).or_insert(0) += 1;
        }
        for t in &c.tokens {
            if let Some(b) = budget.get_mut(t.as_str()) {
                if *b > 0 {
                    *b -= 1;
                    matched += 1;
                }
            }
        }
    }
    if cand_total == 0 {
        return 0.0;
    }
    let precision = matched as f64 / cand_total as f64;
    let bp = if cand_total >= ref_total {
        1.0
    } else {
        (1.0 - ref_total as f64 / cand_total as f64).exp()
    };
    precision * bp
}

fn multiset_overlap(a: &[String], b: &[String]) -> usize {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in b {
        *counts.entry(t.as_str()).or_insert(0) += 1;
    }
    let mut overlap = 0;
    for t in a {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    overlap
}

fn oracle_rouge1(c: &TokenSequence, r: &TokenSequence) -> f64 {
    if c.tokens.is_empty() || r.tokens.is_empty() {
        return 0.0;
    }
    let overlap = multiset_overlap(&c.tokens, &r.tokens) as f64;
    let p = overlap / c.tokens.len() as f64;
    let rec = overlap / r.tokens.len() as f64;
    if p + rec == 0.0 {
        0.0
    } else {
        2.0 * p * rec / (p + rec)
    }
}

/// Plain recursion with memoization; the main code uses a DP table.
fn lcs_recursive(a: &[String], b: &[String], i: usize, j: usize, memo: &mut HashMap<(usize, usize), usize>) -> usize {
    if i == 0 || j == 0 {
        return 0;
    }
    if let Some(&v) = memo.get(&(i, j)) {
        return v;
    }
    let v = if a[i - 1] == b[j - 1] {
        1 + lcs_recursive(a, b, i - 1, j - 1, memo)
    } else {
        lcs_recursive(a, b, i - 1, j, memo).max(lcs_recursive(a, b, i, j - 1, memo))
    };
    memo.insert((i, j), v);
    v
}

fn oracle_rouge_l(c: &TokenSequence, r: &TokenSequence) -> f64 {
    if c.tokens.is_empty() || r.tokens.is_empty() {
        return 0.0;
    }
    let lcs = lcs_recursive(
        &c.tokens,
        &r.tokens,
        c.tokens.len(),
        r.tokens.len(),
        &mut HashMap::new(),
    ) as f64;
    let p = lcs / c.tokens.len() as f64;
    let rec = lcs / r.tokens.len() as f64;
    if p + rec == 0.0 {
        0.0
    } else {
        2.0 * p * rec / (p + rec)
    }
}

fn ngrams_of(tokens: &[String], n: usize) -> Vec<Vec<String>> {
    if tokens.len() < n {
        return Vec::new();
    }
    tokens.windows(n).map(|w| w.to_vec()).collect()
}

fn count_of(grams: &[Vec<String>], g: &[String]) -> f64 {
    grams.iter().filter(|x| x.as_slice() == g).count() as f64
}

/// Direct evaluation over the explicit union of n-grams: raw counts as
/// term frequencies, idf = ln(corpus size / reference document
/// frequency), cosine similarity per order, Gaussian length penalty,
/// times ten, averaged over the four orders and then over samples.
fn oracle_cider(cands: &[TokenSequence], refs: &[TokenSequence]) -> f64 {
    let n_docs = refs.len() as f64;
    let mut total = 0.0;
    for (c, r) in cands.iter().zip(refs) {
        let mut per_n_sum = 0.0;
        for n in 1..=4 {
            let cg = ngrams_of(&c.tokens, n);
            let rg = ngrams_of(&r.tokens, n);
            // union of n-grams appearing in either side
            let mut union: Vec<Vec<String>> = Vec::new();
            for g in cg.iter().chain(rg.iter()) {
                if !union.contains(g) {
                    union.push(g.clone());
                }
            }
            let idf_of = |g: &[String]| {
                let df = refs
                    .iter()
                    .filter(|doc| ngrams_of(&doc.tokens, n).iter().any(|x| x.as_slice() == g))
                    .count() as f64;
                (n_docs / df.max(1.0)).ln()
            };
            let mut dot = 0.0;
            let mut norm_c = 0.0;
            let mut norm_r = 0.0;
            for g in &union {
                let idf = idf_of(g);
                let wc = count_of(&cg, g) * idf;
                let wr = count_of(&rg, g) * idf;
                dot += wc * wr;
                norm_c += wc * wc;
                norm_r += wr * wr;
            }
            let cos = if norm_c > 0.0 && norm_r > 0.0 {
                dot / (norm_c.sqrt() * norm_r.sqrt())
            } else {
                0.0
            };
            let delta = c.tokens.len() as f64 - r.tokens.len() as f64;
            let penalty = (-delta * delta / (2.0 * CIDER_SIGMA * CIDER_SIGMA)).exp();
            per_n_sum += 10.0 * penalty * cos;
        }
        total += per_n_sum / 4.0;
    }
    total / cands.len() as f64
}

// ---------------------------------------------------------------------------
// fixtures
// ---------------------------------------------------------------------------

/// Ten partially overlapping candidate/reference pairs of varying
/// length, including exact matches, disjoint pairs, and repetition.
fn fixture_corpus() -> (Vec<TokenSequence>, Vec<TokenSequence>) {
    let pairs: Vec<(Vec<&str>, Vec<&str>)> = vec![
        (
            vec!["sagittal", "t2-weighted", "mri", "of", "the", "spine"],
            vec!["sagittal", "t2-weighted", "mri", "of", "the", "cervical", "spine"],
        ),
        (
            vec!["chest", "x-ray", "showing", "pleural", "effusion"],
            vec!["chest", "radiograph", "with", "left", "pleural", "effusion"],
        ),
        (
            vec!["ct", "of", "the", "abdomen"],
            vec!["ct", "of", "the", "abdomen"],
        ),
        (
            vec!["ultrasound", "image"],
            vec!["axial", "ct", "slice", "through", "the", "liver"],
        ),
        (
            vec!["the", "the", "the", "lesion"],
            vec!["the", "lesion", "is", "small"],
        ),
        (
            vec!["mri", "brain"],
            vec!["mri", "of", "the", "brain", "without", "contrast"],
        ),
        (
            vec!["bone", "scan", "showing", "increased", "uptake"],
            vec!["bone", "scan", "shows", "uptake", "in", "the", "femur"],
        ),
        (
            vec!["a", "b", "c", "d"],
            vec!["d", "c", "b", "a"],
        ),
        (
            vec!["pet", "ct", "fusion", "image", "of", "the", "thorax"],
            vec!["fusion", "pet", "image", "of", "thorax"],
        ),
        (
            vec!["normal", "study"],
            vec!["normal", "study"],
        ),
    ];
    let cands = pairs
        .iter()
        .enumerate()
        .map(|(i, (c, _))| seq(&format!("c{i}"), c))
        .collect();
    let refs = pairs
        .iter()
        .enumerate()
        .map(|(i, (_, r))| seq(&format!("r{i}"), r))
        .collect();
    (cands, refs)
}

// ---------------------------------------------------------------------------
// agreement tests
// ---------------------------------------------------------------------------

#[test]
fn bleu1_matches_oracle_on_fixture() {
    let (cands, refs) = fixture_corpus();
    let got = bleu1(&cands, &refs).unwrap();
    let want = oracle_bleu1(&cands, &refs);
    assert!((got - want).abs() < 1e-6, "got {got}, oracle {want}");
}

#[test]
fn rouge1_matches_oracle_on_fixture() {
    let (cands, refs) = fixture_corpus();
    for (c, r) in cands.iter().zip(&refs) {
        let got = rouge1(c, r);
        let want = oracle_rouge1(c, r);
        assert!((got - want).abs() < 1e-6, "{}: got {got}, oracle {want}", c.source_id);
    }
}

#[test]
fn rouge_l_matches_oracle_on_fixture() {
    let (cands, refs) = fixture_corpus();
    for (c, r) in cands.iter().zip(&refs) {
        let got = rouge_l(c, r);
        let want = oracle_rouge_l(c, r);
        assert!((got - want).abs() < 1e-6, "{}: got {got}, oracle {want}", c.source_id);
    }
}

#[test]
fn cider_matches_oracle_on_fixture() {
    let (cands, refs) = fixture_corpus();
    let got = cider(&cands, &refs).unwrap();
    let want = oracle_cider(&cands, &refs);
    assert!((got - want).abs() < 1e-6, "got {got}, oracle {want}");
}

#[test]
fn cider_matches_oracle_on_three_sample_fixture() {
    let cands = vec![
        seq("c0", &["chest", "ct", "shows", "a", "nodule"]),
        seq("c1", &["pleural", "effusion", "on", "the", "left"]),
        seq("c2", &["unremarkable", "head", "mri"]),
    ];
    let refs = vec![
        seq("r0", &["chest", "ct", "shows", "a", "small", "nodule"]),
        seq("r1", &["left", "pleural", "effusion"]),
        seq("r2", &["normal", "brain", "mri"]),
    ];
    let got = cider(&cands, &refs).unwrap();
    let want = oracle_cider(&cands, &refs);
    assert!((got - want).abs() < 1e-6, "got {got}, oracle {want}");
}

#[test]
fn report_matches_oracles_on_fixture() {
    let (cands, refs) = fixture_corpus();
    let report = score_corpus(&cands, &refs).unwrap();
    assert!((report.bleu1 - oracle_bleu1(&cands, &refs)).abs() < 1e-6);
    let mean_r1: f64 = cands
        .iter()
        .zip(&refs)
        .map(|(c, r)| oracle_rouge1(c, r))
        .sum::<f64>()
        / cands.len() as f64;
    let mean_rl: f64 = cands
        .iter()
        .zip(&refs)
        .map(|(c, r)| oracle_rouge_l(c, r))
        .sum::<f64>()
        / cands.len() as f64;
    assert!((report.rouge1 - mean_r1).abs() < 1e-6);
    assert!((report.rouge_l - mean_rl).abs() < 1e-6);
    assert!((report.cider - oracle_cider(&cands, &refs)).abs() < 1e-6);
    assert_eq!(report.sample_count, 10);
}

#[test]
fn perfect_corpus_attains_the_maximum() {
    let (_, refs) = fixture_corpus();
    let cands = refs.clone();
    assert!((bleu1(&cands, &refs).unwrap() - 1.0).abs() < 1e-12);
    for (c, r) in cands.iter().zip(&refs) {
        assert!((rouge1(c, r) - 1.0).abs() < 1e-12);
        assert!((rouge_l(c, r) - 1.0).abs() < 1e-12);
    }
    // the CIDEr maximum on a corpus is its self-similarity value
    let got = cider(&cands, &refs).unwrap();
    let want = oracle_cider(&cands, &refs);
    assert!((got - want).abs() < 1e-6);
    // and no perturbed corpus scores above it
    let mut worse = cands.clone();
    worse[0].tokens[0] = "zzz".to_string();
    assert!(cider(&worse, &refs).unwrap() <= got + 1e-12);
}
