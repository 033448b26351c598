//! Persian text normalisation, tokenisation and suffix stemming.
//!
//! The pipeline is table driven. Three versioned tables ship with the crate
//! (`data/folding-v1.tsv`, `data/suffixes-v1.txt`, `data/slang-v1.tsv`) and
//! are loaded once into [`Preprocessor::bundled`].
//!
//! Normalisation runs these steps in order:
//!
//! 1. character folding, diacritic deletion and digit unification (one
//!    per-character map from the folding table),
//! 2. whitespace collapse into single spaces, trimmed,
//! 3. per word segment: slang lookup on the segment as written, otherwise
//!    elongation collapse (a run of three or more identical letters becomes
//!    one letter) followed by a second slang lookup.
//!
//! A word segment is a maximal run of non-punctuation characters inside a
//! whitespace-delimited unit, i.e. exactly what the tokenizer later emits as
//! a token. Every output character remembers the byte span of the raw text
//! it came from, which is how [`Preprocessor::pipeline`] reports offsets into
//! the original string.

use std::collections::HashMap;
use std::ops::Range;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const FOLDING_V1: &str = include_str!("../data/folding-v1.tsv");
pub const SUFFIXES_V1: &str = include_str!("../data/suffixes-v1.txt");
pub const SLANG_V1: &str = include_str!("../data/slang-v1.tsv");

const ZWNJ: char = '\u{200C}';
const MIN_STEM_LETTERS: usize = 2;
const ELONGATION_RUN: usize = 3;

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("{table} line {line}: {reason}")]
    InvalidTable {
        table: &'static str,
        line: usize,
        reason: String,
    },
}

/// Ordered tokens with byte offsets into the text they were cut from.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSeq {
    pub tokens: Vec<String>,
    pub offsets: Vec<(usize, usize)>,
}

impl TokenSeq {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    fn push(&mut self, token: String, span: (usize, usize)) {
        self.tokens.push(token);
        self.offsets.push(span);
    }
}

/// Punctuation detached from words and dropped by the tokenizer.
pub fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation() || matches!(c, '\u{060C}' | '\u{061B}' | '\u{061F}' | '\u{00AB}' | '\u{00BB}')
}

fn is_arabic_script(c: char) -> bool {
    matches!(c as u32,
        0x0600..=0x06FF | 0x0750..=0x077F | 0x08A0..=0x08FF | 0xFB50..=0xFDFF | 0xFE70..=0xFEFF)
}

fn letter_count(s: &str) -> usize {
    s.chars().filter(|c| c.is_alphabetic()).count()
}

/// A character of normalized text together with the raw byte span it
/// derives from.
type Tracked = (char, Range<usize>);

#[derive(Debug, Clone)]
pub struct Preprocessor {
    /// `None` deletes the character.
    folding: HashMap<char, Option<char>>,
    suffixes: Vec<String>,
    slang: HashMap<String, String>,
}

impl Preprocessor {
    /// The v1 tables shipped with the crate.
    pub fn bundled() -> &'static Preprocessor {
        static BUNDLED: OnceLock<Preprocessor> = OnceLock::new();
        BUNDLED.get_or_init(|| {
            Preprocessor::from_tables(FOLDING_V1, SUFFIXES_V1, SLANG_V1)
                .expect("bundled preprocessing tables are valid")
        })
    }

    pub fn from_tables(folding: &str, suffixes: &str, slang: &str) -> Result<Self, PreprocessError> {
        let mut pre = Preprocessor {
            folding: parse_folding(folding)?,
            suffixes: Vec::new(),
            slang: HashMap::new(),
        };
        for (line, entry) in table_lines(suffixes) {
            if entry.is_empty() || entry.chars().any(|c| !is_arabic_script(c)) {
                return Err(invalid("suffixes", line, format!("bad suffix {entry:?}")));
            }
            pre.suffixes.push(entry.to_string());
        }
        for (line, entry) in table_lines(slang) {
            let (surface, normal) = entry
                .split_once('\t')
                .ok_or_else(|| invalid("slang", line, "expected two tab-separated columns".into()))?;
            for word in [surface, normal] {
                if !pre.is_plain_word(word) {
                    return Err(invalid("slang", line, format!("{word:?} is not a folded single word")));
                }
            }
            pre.slang.insert(surface.to_string(), normal.to_string());
        }
        // A replacement must itself be stable, or normalisation stops being idempotent.
        for (surface, normal) in &pre.slang {
            let collapsed: String = collapse_elongation(&plain(normal)).into_iter().map(|(c, _)| c).collect();
            if pre.slang.contains_key(normal) || pre.slang.contains_key(&collapsed) || &collapsed != normal {
                return Err(invalid("slang", 0, format!("replacement for {surface:?} is not stable")));
            }
        }
        Ok(pre)
    }

    fn is_plain_word(&self, word: &str) -> bool {
        !word.is_empty()
            && word
                .chars()
                .all(|c| !c.is_whitespace() && !is_punctuation(c) && !self.folding.contains_key(&c))
    }

    pub fn normalize(&self, text: &str) -> String {
        let units = self.normalize_tracked(text);
        let mut out = String::with_capacity(text.len());
        for (i, unit) in units.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            out.extend(unit.iter().map(|(c, _)| *c));
        }
        out
    }

    /// Normalized whitespace-delimited units with per-character provenance.
    fn normalize_tracked(&self, text: &str) -> Vec<Vec<Tracked>> {
        let mut units: Vec<Vec<Tracked>> = Vec::new();
        let mut current: Vec<Tracked> = Vec::new();
        for (start, raw) in text.char_indices() {
            let span = start..start + raw.len_utf8();
            let mapped = match self.folding.get(&raw) {
                Some(Some(to)) => *to,
                Some(None) => continue,
                None => raw,
            };
            if mapped.is_whitespace() {
                if !current.is_empty() {
                    units.push(std::mem::take(&mut current));
                }
            } else {
                current.push((mapped, span));
            }
        }
        if !current.is_empty() {
            units.push(current);
        }
        units.into_iter().map(|unit| self.normalize_unit(unit)).collect()
    }

    fn normalize_unit(&self, unit: Vec<Tracked>) -> Vec<Tracked> {
        let mut out = Vec::with_capacity(unit.len());
        let mut segment = Vec::new();
        for tracked in unit {
            if is_punctuation(tracked.0) {
                self.flush_segment(&mut segment, &mut out);
                out.push(tracked);
            } else {
                segment.push(tracked);
            }
        }
        self.flush_segment(&mut segment, &mut out);
        out
    }

    fn flush_segment(&self, segment: &mut Vec<Tracked>, out: &mut Vec<Tracked>) {
        if segment.is_empty() {
            return;
        }
        let seg = std::mem::take(segment);
        let whole = seg[0].1.start..seg[seg.len() - 1].1.end;
        let written: String = seg.iter().map(|(c, _)| *c).collect();
        if let Some(normal) = self.slang.get(&written) {
            out.extend(normal.chars().map(|c| (c, whole.clone())));
            return;
        }
        let collapsed = collapse_elongation(&seg);
        let folded: String = collapsed.iter().map(|(c, _)| *c).collect();
        match self.slang.get(&folded) {
            Some(normal) => out.extend(normal.chars().map(|c| (c, whole.clone()))),
            None => out.extend(collapsed),
        }
    }

    /// Splits normalized text into word tokens; punctuation is dropped and
    /// ZWNJ stays inside tokens. Offsets index into `text`.
    pub fn tokenize(&self, text: &str) -> TokenSeq {
        let mut seq = TokenSeq::default();
        let mut start: Option<usize> = None;
        for (i, c) in text.char_indices() {
            let boundary = c.is_whitespace() || is_punctuation(c);
            match (boundary, start) {
                (true, Some(s)) => {
                    seq.push(text[s..i].to_string(), (s, i));
                    start = None;
                }
                (false, None) => start = Some(i),
                _ => {}
            }
        }
        if let Some(s) = start {
            seq.push(text[s..].to_string(), (s, text.len()));
        }
        seq
    }

    /// Strips at most one suffix from a Persian-script token. Candidates are
    /// tried longest first (list order breaks ties); the first whose removal
    /// leaves at least two letters wins. Other tokens pass through.
    pub fn stem(&self, token: &str) -> String {
        let persian = token.chars().any(|c| c.is_alphabetic())
            && token.chars().filter(|c| c.is_alphabetic()).all(is_arabic_script);
        if !persian {
            return token.to_string();
        }
        let mut candidates: Vec<(usize, &str)> = self
            .suffixes
            .iter()
            .enumerate()
            .filter(|(_, s)| token.ends_with(s.as_str()))
            .map(|(i, s)| (i, s.as_str()))
            .collect();
        candidates.sort_by_key(|&(i, s)| (std::cmp::Reverse(s.chars().count()), i));
        for (_, suffix) in candidates {
            let rest = token[..token.len() - suffix.len()].trim_end_matches(ZWNJ);
            if letter_count(rest) >= MIN_STEM_LETTERS {
                return rest.to_string();
            }
        }
        token.to_string()
    }

    /// normalize → tokenize → stem, with offsets into the raw `text`.
    pub fn pipeline(&self, text: &str) -> TokenSeq {
        let mut seq = TokenSeq::default();
        for unit in self.normalize_tracked(text) {
            for word in unit.split(|(c, _)| is_punctuation(*c)).filter(|w| !w.is_empty()) {
                let token: String = word.iter().map(|(c, _)| *c).collect();
                let span = (word[0].1.start, word[word.len() - 1].1.end);
                seq.push(self.stem(&token), span);
            }
        }
        seq
    }
}

fn plain(word: &str) -> Vec<Tracked> {
    word.char_indices().map(|(i, c)| (c, i..i + c.len_utf8())).collect()
}

/// Collapses each run of [`ELONGATION_RUN`] or more identical letters into
/// one letter spanning the whole run.
fn collapse_elongation(seg: &[Tracked]) -> Vec<Tracked> {
    let mut out: Vec<Tracked> = Vec::with_capacity(seg.len());
    let mut i = 0;
    while i < seg.len() {
        let c = seg[i].0;
        let mut j = i + 1;
        while j < seg.len() && seg[j].0 == c {
            j += 1;
        }
        if c.is_alphabetic() && j - i >= ELONGATION_RUN {
            out.push((c, seg[i].1.start..seg[j - 1].1.end));
        } else {
            out.extend_from_slice(&seg[i..j]);
        }
        i = j;
    }
    out
}

fn invalid(table: &'static str, line: usize, reason: String) -> PreprocessError {
    PreprocessError::InvalidTable { table, line, reason }
}

/// Non-comment, non-blank lines with 1-based line numbers.
fn table_lines(content: &str) -> impl Iterator<Item = (usize, &str)> {
    content
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
}

fn parse_codepoint(field: &str) -> Option<char> {
    let hex = field.trim().strip_prefix("U+")?;
    char::from_u32(u32::from_str_radix(hex, 16).ok()?)
}

fn parse_folding(content: &str) -> Result<HashMap<char, Option<char>>, PreprocessError> {
    let mut map = HashMap::new();
    for (line, entry) in table_lines(content) {
        let (from, to) = entry.split_once('\t').unwrap_or((entry, ""));
        let from = parse_codepoint(from)
            .ok_or_else(|| invalid("folding", line, format!("bad source codepoint {from:?}")))?;
        let to = if to.trim().is_empty() {
            None
        } else {
            Some(parse_codepoint(to).ok_or_else(|| invalid("folding", line, format!("bad target {to:?}")))?)
        };
        if let Some(t) = to {
            if t.is_whitespace() || is_punctuation(t) {
                return Err(invalid("folding", line, "target may not be whitespace or punctuation".into()));
            }
        }
        if map.insert(from, to).is_some() {
            return Err(invalid("folding", line, format!("duplicate source U+{:04X}", from as u32)));
        }
    }
    if let Some(t) = map.values().flatten().find(|t| map.contains_key(t)) {
        return Err(invalid("folding", 0, format!("target U+{:04X} is also a source", *t as u32)));
    }
    Ok(map)
}

pub fn normalize(text: &str) -> String {
    Preprocessor::bundled().normalize(text)
}

pub fn tokenize(text: &str) -> TokenSeq {
    Preprocessor::bundled().tokenize(text)
}

pub fn stem(token: &str) -> String {
    Preprocessor::bundled().stem(token)
}

pub fn preprocess_pipeline(text: &str) -> TokenSeq {
    Preprocessor::bundled().pipeline(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(seq: &TokenSeq) -> Vec<&str> {
        seq.tokens.iter().map(String::as_str).collect()
    }

    #[test]
    fn slang_examples() {
        assert_eq!(normalize("gr8"), "great");
        assert_eq!(normalize("gooood"), "good");
        assert_eq!(normalize("the movie was gr8!"), "the movie was great!");
        assert_eq!(normalize("going"), "go");
    }

    #[test]
    fn arabic_yeh_folds_to_persian_yeh() {
        let out = normalize("\u{0641}\u{064A}\u{0644}\u{0645}");
        let cps: Vec<u32> = out.chars().map(|c| c as u32).collect();
        assert_eq!(cps, vec![0x0641, 0x06CC, 0x0644, 0x0645]);
        assert_eq!(out, "فیلم");
    }

    #[test]
    fn folding_digits_diacritics_whitespace() {
        assert_eq!(normalize("كتاب"), "کتاب");
        assert_eq!(normalize("۱۲۳ ٤٥"), "123 45");
        assert_eq!(normalize("كِتَاب"), "کتاب");
        assert_eq!(normalize("  a \t\n b  "), "a b");
        assert_eq!(normalize(""), "");
        assert_eq!(normalize("أ إ آ ؤ ئ ة"), "ا ا ا و ی ه");
        assert_eq!(normalize("أإآ"), "ا");
    }

    #[test]
    fn elongation_collapses_runs_of_three() {
        assert_eq!(normalize("خیلیییی خوب"), "خیلی خوب");
        assert_eq!(normalize("good"), "good");
        assert_eq!(normalize("soooo"), "so");
        assert_eq!(normalize("1000"), "1000");
        assert_eq!(normalize("!!!"), "!!!");
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(toks(&tokenize("The movie is great")), ["The", "movie", "is", "great"]);
        assert_eq!(toks(&tokenize("فیلم عالی بود.")), ["فیلم", "عالی", "بود"]);
        assert!(tokenize("").is_empty());
        assert_eq!(toks(&tokenize("«فیلم»،خوب؟")), ["فیلم", "خوب"]);
        assert_eq!(toks(&tokenize("کتاب\u{200C}ها")), ["کتاب\u{200C}ها"]);
        let seq = tokenize("ab, cd");
        assert_eq!(seq.offsets, vec![(0, 2), (4, 6)]);
    }

    #[test]
    fn stem_examples() {
        assert_eq!(stem("کتاب\u{200C}ها"), "کتاب");
        assert_eq!(stem("کتابها"), "کتاب");
        // ترین leaves the two-letter stem به, which satisfies the minimum.
        assert_eq!(stem("بهترین"), "به");
        assert_eq!(stem("go"), "go");
        assert_eq!(stem("ها"), "ها");
        assert_eq!(stem("عالی"), "عال");
        assert_eq!(stem("کتابهایش"), "کتاب");
        assert_eq!(stem("123"), "123");
    }

    #[test]
    fn stem_falls_back_to_shorter_suffix() {
        // های would leave one letter; ی is the next candidate and leaves three.
        assert_eq!(stem("بهای"), "بها");
    }

    #[test]
    fn pipeline_examples() {
        assert_eq!(toks(&preprocess_pipeline("I am going home")), ["I", "am", "go", "home"]);
        assert_eq!(toks(&preprocess_pipeline("فيلم ها")), ["فیلم", "ها"]);
        assert!(preprocess_pipeline("!!!").is_empty());
        assert!(preprocess_pipeline("").is_empty());
    }

    #[test]
    fn pipeline_offsets_point_into_raw_text() {
        let raw = "  فيلم،  gr8!! ";
        let seq = preprocess_pipeline(raw);
        assert_eq!(toks(&seq), ["فیلم", "great"]);
        assert_eq!(&raw[seq.offsets[0].0..seq.offsets[0].1], "فيلم");
        assert_eq!(&raw[seq.offsets[1].0..seq.offsets[1].1], "gr8");
    }

    #[test]
    fn rejects_unstable_slang() {
        let err = Preprocessor::from_tables(FOLDING_V1, SUFFIXES_V1, "a1\tb1\nb1\tc1\n").unwrap_err();
        assert!(matches!(err, PreprocessError::InvalidTable { table: "slang", .. }));
        let err = Preprocessor::from_tables(FOLDING_V1, SUFFIXES_V1, "x\tbooom\n").unwrap_err();
        assert!(matches!(err, PreprocessError::InvalidTable { table: "slang", .. }));
        assert!(Preprocessor::from_tables(FOLDING_V1, SUFFIXES_V1, "gr8\n").is_err());
    }

    #[test]
    fn rejects_chained_folding() {
        let err = Preprocessor::from_tables("U+0041\tU+0042\nU+0042\tU+0043\n", SUFFIXES_V1, SLANG_V1)
            .unwrap_err();
        assert!(matches!(err, PreprocessError::InvalidTable { table: "folding", .. }));
    }

    fn text_strategy() -> impl Strategy<Value = String> {
        let pieces = prop_oneof![
            any::<char>().prop_map(String::from),
            prop::sample::select(vec![
                "ي", "ك", "ة", "أ", "َ", "ٌ", "۵", "٣", " ", "\t", "\u{200C}", "،", "؟", "«", "!", ".",
                "gr8", "gooood", "going", "oooo", "ییی", "ها", "ترین", "فیلم", "a", "b",
            ])
            .prop_map(String::from),
        ];
        prop::collection::vec(pieces, 0..24).prop_map(|v| v.concat())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2000))]

        #[test]
        fn normalize_is_idempotent(text in text_strategy()) {
            let once = normalize(&text);
            prop_assert_eq!(normalize(&once), once);
        }

        #[test]
        fn pipeline_offsets_are_sound(text in text_strategy()) {
            let seq = preprocess_pipeline(&text);
            prop_assert_eq!(seq.tokens.len(), seq.offsets.len());
            let mut prev_end = 0;
            for (tok, &(s, e)) in seq.tokens.iter().zip(&seq.offsets) {
                prop_assert!(!tok.is_empty());
                prop_assert!(s < e && e <= text.len() && s >= prev_end);
                prop_assert!(text.is_char_boundary(s) && text.is_char_boundary(e));
                prev_end = e;
                let renormalized = stem(&normalize(&text[s..e]));
                prop_assert_eq!(tok, &renormalized);
            }
        }

        #[test]
        fn pipeline_matches_composed_steps(text in text_strategy()) {
            let composed: Vec<String> = tokenize(&normalize(&text)).tokens.iter().map(|t| stem(t)).collect();
            prop_assert_eq!(preprocess_pipeline(&text).tokens, composed);
        }

        #[test]
        fn stem_never_empties_or_lengthens(text in text_strategy()) {
            for tok in tokenize(&normalize(&text)).tokens {
                let s = stem(&tok);
                prop_assert!(!s.is_empty());
                prop_assert!(s.len() <= tok.len());
            }
        }
    }
}
