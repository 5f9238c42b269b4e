//! Caption ingestion types, text cleaning, and tokenization.
//!
//! Cleaning removes three families of disruptive content from captions:
//! demographic phrases ("62-year-old woman"), measurement phrases
//! ("1 cm × 1.3 cm", optionally with a leading "of"), and non-ASCII
//! codes. Each family is individually toggleable and every removal is
//! recorded as a byte span into the original text so the operation can
//! be audited.
//!
//! Removal runs to a fixpoint: deleting one span can make another
//! pattern contiguous (e.g. a measurement wedged inside a demographic
//! phrase), so scanning repeats until no rule fires. Captions from
//! which nothing was removed pass through byte-identical; captions with
//! removals get their whitespace collapsed to single spaces and
//! trimmed.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

/// One image-caption-concepts record as it arrives from a dataset file.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RawSample {
    pub id: String,
    pub caption: String,
    /// Concept identifier strings (e.g. UMLS CUIs or pre-resolved terms).
    pub concepts: Vec<String>,
    /// Opaque key into a feature file; never dereferenced here.
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub image_ref: Option<String>,
}

/// The three cleaning rule families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum CleanRule {
    DemographicPhrase,
    MeasurementPhrase,
    NonAscii,
}

impl CleanRule {
    pub fn name(&self) -> &'static str {
        match self {
            CleanRule::DemographicPhrase => "demographic-phrase",
            CleanRule::MeasurementPhrase => "measurement-phrase",
            CleanRule::NonAscii => "non-ascii",
        }
    }
}

/// Which rule families to apply. All on by default.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CleanRules {
    pub demographic: bool,
    pub measurement: bool,
    pub non_ascii: bool,
}

impl Default for CleanRules {
    fn default() -> Self {
        Self {
            demographic: true,
            measurement: true,
            non_ascii: true,
        }
    }
}

impl CleanRules {
    pub fn none() -> Self {
        Self {
            demographic: false,
            measurement: false,
            non_ascii: false,
        }
    }
}

/// A deleted byte range of the original text, tagged with the rule that
/// removed it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RemovedSpan {
    pub start: usize,
    pub end: usize,
    pub rule: CleanRule,
}

/// The outcome of cleaning one caption.
///
/// `cleaned` equals `original` with exactly the `removed_spans` deleted,
/// followed by whitespace renormalization when anything was removed.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CleaningReport {
    pub original: String,
    pub cleaned: String,
    pub removed_spans: Vec<RemovedSpan>,
}

/// A cleaned, tokenized caption.
///
/// Tokens are non-empty, lowercase, and contain no whitespace.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TokenSequence {
    pub tokens: Vec<String>,
    pub source_id: String,
}

impl TokenSequence {
    pub fn from_text(text: &str, source_id: impl Into<String>) -> Self {
        Self {
            tokens: tokenize(text),
            source_id: source_id.into(),
        }
    }

    pub fn new(tokens: Vec<String>, source_id: impl Into<String>) -> Self {
        Self {
            tokens,
            source_id: source_id.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// One character of the working text plus its byte range in the
/// original string. Deletions operate on these so spans always refer to
/// original coordinates.
#[derive(Clone, Copy)]
struct Piece {
    ch: char,
    start: usize,
    end: usize,
}

/// Clean a caption with the default rule set (all three families).
pub fn clean_caption(text: &str) -> CleaningReport {
    clean_caption_with(text, &CleanRules::default())
}

/// Clean a caption with an explicit rule selection.
pub fn clean_caption_with(text: &str, rules: &CleanRules) -> CleaningReport {
    let mut pieces: Vec<Piece> = text
        .char_indices()
        .map(|(i, ch)| Piece {
            ch,
            start: i,
            end: i + ch.len_utf8(),
        })
        .collect();
    let mut removed: Vec<RemovedSpan> = Vec::new();

    loop {
        let matches = find_matches(&pieces, rules);
        if matches.is_empty() {
            break;
        }
        for &(a, b, rule) in &matches {
            // A working-text match can cover original ranges separated by
            // earlier deletions; report one span per contiguous range.
            let mut start = pieces[a].start;
            let mut end = pieces[a].end;
            for piece in &pieces[a + 1..b] {
                if piece.start == end {
                    end = piece.end;
                } else {
                    removed.push(RemovedSpan { start, end, rule });
                    start = piece.start;
                    end = piece.end;
                }
            }
            removed.push(RemovedSpan { start, end, rule });
        }
        for &(a, b, _) in matches.iter().rev() {
            pieces.drain(a..b);
        }
    }

    let cleaned = if removed.is_empty() {
        text.to_string()
    } else {
        let working: String = pieces.iter().map(|p| p.ch).collect();
        collapse_whitespace(&working)
    };
    removed.sort_by_key(|s| s.start);
    CleaningReport {
        original: text.to_string(),
        cleaned,
        removed_spans: removed,
    }
}

fn collapse_whitespace(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for word in text.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

/// Scan the working text left to right, collecting non-overlapping
/// matches. Rule priority at a shared start: demographic, measurement,
/// non-ASCII.
fn find_matches(p: &[Piece], rules: &CleanRules) -> Vec<(usize, usize, CleanRule)> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < p.len() {
        if rules.demographic {
            if let Some(end) = match_demographic(p, i) {
                out.push((i, end, CleanRule::DemographicPhrase));
                i = end;
                continue;
            }
        }
        if rules.measurement {
            if let Some(end) = match_measurement(p, i) {
                out.push((i, end, CleanRule::MeasurementPhrase));
                i = end;
                continue;
            }
        }
        if rules.non_ascii {
            if let Some(end) = match_non_ascii(p, i) {
                out.push((i, end, CleanRule::NonAscii));
                i = end;
                continue;
            }
        }
        i += 1;
    }
    out
}

fn is_word(ch: char) -> bool {
    ch.is_alphanumeric()
}

fn boundary_before(p: &[Piece], i: usize) -> bool {
    i == 0 || !is_word(p[i - 1].ch)
}

fn boundary_after(p: &[Piece], end: usize) -> bool {
    end == p.len() || !is_word(p[end].ch)
}

fn skip_whitespace(p: &[Piece], mut i: usize) -> usize {
    while i < p.len() && p[i].ch.is_whitespace() {
        i += 1;
    }
    i
}

fn parse_digits(p: &[Piece], i: usize) -> Option<usize> {
    let mut j = i;
    while j < p.len() && p[j].ch.is_ascii_digit() {
        j += 1;
    }
    (j > i).then_some(j)
}

/// Integer or decimal number.
fn parse_number(p: &[Piece], i: usize) -> Option<usize> {
    let j = parse_digits(p, i)?;
    if j < p.len() && p[j].ch == '.' {
        if let Some(k) = parse_digits(p, j + 1) {
            return Some(k);
        }
    }
    Some(j)
}

/// ASCII case-insensitive literal.
fn parse_keyword(p: &[Piece], i: usize, kw: &str) -> Option<usize> {
    let mut j = i;
    for want in kw.chars() {
        if j >= p.len() || p[j].ch.to_ascii_lowercase() != want {
            return None;
        }
        j += 1;
    }
    Some(j)
}

/// Separator inside an age phrase: a hyphen (possibly space-padded) or
/// a whitespace run.
fn parse_age_separator(p: &[Piece], i: usize) -> Option<usize> {
    let j = skip_whitespace(p, i);
    if j < p.len() && p[j].ch == '-' {
        return Some(skip_whitespace(p, j + 1));
    }
    (j > i).then_some(j)
}

/// `<number>-year(s)-old <person-noun>`, hyphens interchangeable with
/// whitespace.
fn match_demographic(p: &[Piece], i: usize) -> Option<usize> {
    if !boundary_before(p, i) {
        return None;
    }
    let j = parse_digits(p, i)?;
    let j = parse_age_separator(p, j)?;
    let mut j = parse_keyword(p, j, "year")?;
    if j < p.len() && p[j].ch.eq_ignore_ascii_case(&'s') {
        j += 1;
    }
    let j = parse_age_separator(p, j)?;
    let j = parse_keyword(p, j, "old")?;
    let k = skip_whitespace(p, j);
    if k == j {
        return None;
    }
    parse_person_noun(p, k)
}

const PERSON_NOUNS: [&str; 10] = [
    "patients", "patient", "women", "woman", "girls", "girl", "boys", "boy", "men", "man",
];

fn parse_person_noun(p: &[Piece], i: usize) -> Option<usize> {
    for noun in PERSON_NOUNS {
        if let Some(j) = parse_keyword(p, i, noun) {
            if boundary_after(p, j) {
                return Some(j);
            }
        }
    }
    None
}

/// Measurement unit, longest first so "mm" wins over "m".
fn parse_unit(p: &[Piece], i: usize) -> Option<usize> {
    // "mm hg" spans two words
    if let Some(j) = parse_keyword(p, i, "mm") {
        let k = skip_whitespace(p, j);
        if k > j {
            if let Some(l) = parse_keyword(p, k, "hg") {
                if boundary_after(p, l) {
                    return Some(l);
                }
            }
        }
    }
    for unit in ["mmhg", "mm", "ml", "cm", "m"] {
        if let Some(j) = parse_keyword(p, i, unit) {
            if boundary_after(p, j) {
                return Some(j);
            }
        }
    }
    None
}

fn parse_dim_sign(p: &[Piece], i: usize) -> Option<usize> {
    if i < p.len() && matches!(p[i].ch, '\u{d7}' | 'x' | 'X' | '*') {
        Some(i + 1)
    } else {
        None
    }
}

/// Numbers with units, optionally chained by a dimension sign, with an
/// optional leading "of" connective: "of 1 cm × 1.3 cm", "120 mm hg".
/// The match ends at the last unit; a trailing bare number is left in
/// place.
fn match_measurement(p: &[Piece], i: usize) -> Option<usize> {
    if !boundary_before(p, i) {
        return None;
    }
    if let Some(j) = parse_keyword(p, i, "of") {
        let k = skip_whitespace(p, j);
        if k > j {
            if let Some(end) = parse_measurement_chain(p, k) {
                return Some(end);
            }
        }
    }
    parse_measurement_chain(p, i)
}

fn parse_measurement_chain(p: &[Piece], i: usize) -> Option<usize> {
    let mut j = parse_number(p, i)?;
    let mut last_unit_end = None;
    loop {
        let k = skip_whitespace(p, j);
        if let Some(u) = parse_unit(p, k) {
            j = u;
            last_unit_end = Some(u);
        }
        let k = skip_whitespace(p, j);
        let Some(sign_end) = parse_dim_sign(p, k) else {
            break;
        };
        let k = skip_whitespace(p, sign_end);
        let Some(num_end) = parse_number(p, k) else {
            break;
        };
        j = num_end;
    }
    last_unit_end
}

fn match_non_ascii(p: &[Piece], i: usize) -> Option<usize> {
    if p[i].ch.is_ascii() {
        return None;
    }
    let mut j = i;
    while j < p.len() && !p[j].ch.is_ascii() {
        j += 1;
    }
    Some(j)
}

/// Lowercase, split on whitespace, strip leading and trailing
/// punctuation from each token (internal characters such as the hyphen
/// in "t2-weighted" survive), drop empty results.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .filter_map(|word| {
            let trimmed = word.trim_matches(|c: char| !c.is_alphanumeric());
            if trimmed.is_empty() {
                None
            } else {
                Some(trimmed.to_lowercase())
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn spans(report: &CleaningReport) -> Vec<(usize, usize, &'static str)> {
        report
            .removed_spans
            .iter()
            .map(|s| (s.start, s.end, s.rule.name()))
            .collect()
    }

    #[test]
    fn removes_demographic_phrase() {
        let r = clean_caption("62-year-old woman with pleural effusion");
        assert_eq!(r.cleaned, "with pleural effusion");
        assert_eq!(spans(&r), vec![(0, 17, "demographic-phrase")]);
    }

    #[test]
    fn identity_when_no_rule_fires() {
        let r = clean_caption("late sagittal t2-weighted MRI");
        assert_eq!(r.cleaned, "late sagittal t2-weighted MRI");
        assert!(r.removed_spans.is_empty());
    }

    #[test]
    fn removes_measurement_with_connective() {
        let r = clean_caption("grey matter of 1 cm \u{d7} 1.3 cm seen");
        assert_eq!(r.cleaned, "grey matter seen");
        assert_eq!(r.removed_spans.len(), 1);
        assert_eq!(r.removed_spans[0].rule, CleanRule::MeasurementPhrase);
    }

    #[test]
    fn removes_blood_pressure_unit() {
        let r = clean_caption("pressure was 120 mm hg today");
        assert_eq!(r.cleaned, "pressure was today");
    }

    #[test]
    fn strips_non_ascii_runs() {
        let r = clean_caption("na\u{ef}ve r\u{e9}sum\u{e9}");
        assert_eq!(r.cleaned, "nave rsum");
        assert!(r
            .removed_spans
            .iter()
            .all(|s| s.rule == CleanRule::NonAscii));
    }

    #[test]
    fn deletion_can_enable_a_second_pass() {
        // Removing the measurement makes the demographic phrase contiguous.
        let r = clean_caption("62-year-old 5 cm man");
        assert_eq!(r.cleaned, "");
        assert!(r
            .removed_spans
            .iter()
            .any(|s| s.rule == CleanRule::MeasurementPhrase));
        assert!(r
            .removed_spans
            .iter()
            .any(|s| s.rule == CleanRule::DemographicPhrase));
    }

    #[test]
    fn spans_reconstruct_cleaned_text() {
        let text = "45-year-old patient, mass of 2 cm \u{d7} 3 cm \u{2014} stable";
        let r = clean_caption(text);
        let mut kept = String::new();
        let mut pos = 0;
        for s in &r.removed_spans {
            kept.push_str(&text[pos..s.start]);
            pos = s.end;
        }
        kept.push_str(&text[pos..]);
        let renorm: String = kept.split_whitespace().collect::<Vec<_>>().join(" ");
        assert_eq!(r.cleaned, renorm);
    }

    #[test]
    fn disabled_rules_pass_through() {
        let text = "62-year-old woman \u{e9} 1 cm";
        let r = clean_caption_with(text, &CleanRules::none());
        assert_eq!(r.cleaned, text);
        assert!(r.removed_spans.is_empty());
    }

    #[test]
    fn untouched_caption_is_byte_identical() {
        let text = "  double  spaces  kept  ";
        let r = clean_caption(text);
        assert_eq!(r.cleaned, text);
    }

    #[test]
    fn bare_number_is_not_a_measurement() {
        let r = clean_caption("figure 3 shows the lesion");
        assert_eq!(r.cleaned, "figure 3 shows the lesion");
    }

    #[test]
    fn age_without_person_noun_is_kept() {
        let r = clean_caption("a 62-year-old presented");
        assert_eq!(r.cleaned, "a 62-year-old presented");
    }

    #[test]
    fn tokenize_strips_outer_punctuation() {
        assert_eq!(
            tokenize("Sagittal T2-weighted MRI."),
            vec!["sagittal", "t2-weighted", "mri"]
        );
    }

    #[test]
    fn tokenize_empty() {
        assert!(tokenize("").is_empty());
    }

    #[test]
    fn tokenize_drops_parens() {
        assert_eq!(
            tokenize("pleural effusion (yellow arrow)"),
            vec!["pleural", "effusion", "yellow", "arrow"]
        );
    }

    #[test]
    fn tokenize_drops_pure_punctuation_tokens() {
        assert_eq!(tokenize("a -- b"), vec!["a", "b"]);
    }

    #[test]
    fn clean_is_idempotent_on_examples() {
        for text in [
            "62-year-old woman with pleural effusion",
            "grey matter of 1 cm \u{d7} 1.3 cm seen",
            "62-year-old 5 cm man",
            "plain caption",
            "",
        ] {
            let once = clean_caption(text);
            let twice = clean_caption(&once.cleaned);
            assert_eq!(twice.cleaned, once.cleaned, "input: {text:?}");
        }
    }
}
