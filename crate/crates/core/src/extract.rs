//! Parsing model completions into typed answers.

use once_cell::sync::Lazy;
use regex::Regex;

use crate::answer::{Answer, AnswerKind, BEAKER_COUNT};

/// The marker sentence fragment answers are anchored to.
pub const ANSWER_MARKER: &str = "the answer is";

/// Window at the end of a completion inspected for looping output.
const REPETITION_TAIL: usize = 40;

static NUMBER_RE: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"-?\$?\s?-?[0-9][0-9,]*(?:\.[0-9]+)?").unwrap());
static OPTION_RE: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"(?s)^\s*:?\s*\(?([a-eA-E])\)?(?:[\s.,:;)].*)?$").unwrap());
static YESNO_RE: Lazy<Regex> = Lazy::new(|| Regex::new(r"(?i)^\s*:?\s*(yes|no)\b").unwrap());
static BEAKER_RE: Lazy<Regex> = Lazy::new(|| Regex::new(r"([1-7]):(_|[a-z]{1,4})").unwrap());

/// Extracts the answer a completion commits to, or `None` when no marker
/// is present or the span after it does not parse.
///
/// The scan uses the last case-insensitive occurrence of
/// `"the answer is"`: completions often restate the exemplars' answers
/// before producing their own, so the final statement wins. Never fails
/// on arbitrary text.
pub fn extract(text: &str, kind: AnswerKind) -> Option<Answer> {
    let span = after_last_marker(text)?;
    match kind {
        AnswerKind::Numeric => parse_numeric(span),
        AnswerKind::Option => parse_option(span),
        AnswerKind::YesNo => parse_yes_no(span),
        AnswerKind::BeakerState => parse_beaker_state(span),
    }
}

/// Scoring equality; a tag mismatch is `false`, not an error.
pub fn answers_equal(a: &Answer, b: &Answer) -> bool {
    a.matches(b)
}

/// Flags completions that looped instead of answering.
///
/// True iff no answer marker is present and either the completion ran
/// into the token cap or its final 40 characters consist of one block
/// repeated at least three times. The paper never quantifies its
/// repetition criterion; this heuristic is declared, not derived.
pub fn detect_repetition(text: &str, reached_token_cap: bool) -> bool {
    if find_last_marker(text).is_some() {
        return false;
    }
    if text.is_empty() {
        return false;
    }
    if reached_token_cap {
        return true;
    }
    let tail: Vec<char> = {
        let chars: Vec<char> = text.chars().collect();
        let start = chars.len().saturating_sub(REPETITION_TAIL);
        chars[start..].to_vec()
    };
    // Look for a suffix made of the same block repeated >= 3 times.
    for period in 1..=tail.len() / 3 {
        let needed = 3 * period;
        let suffix = &tail[tail.len() - needed..];
        let block = &suffix[..period];
        if suffix.chunks(period).all(|chunk| chunk == block) {
            return true;
        }
    }
    false
}

fn find_last_marker(text: &str) -> Option<usize> {
    let lower = text.to_lowercase();
    // Byte offsets agree between `text` and `lower` only for ASCII-equal
    // prefixes, so rescan on the original string around the match.
    let mut last = None;
    let mut from = 0;
    while let Some(pos) = lower[from..].find(ANSWER_MARKER) {
        last = Some(from + pos);
        from += pos + ANSWER_MARKER.len();
    }
    last
}

fn after_last_marker(text: &str) -> Option<&str> {
    // `to_lowercase` can change byte lengths for non-ASCII text, so the
    // offset from the lowered string is re-anchored defensively.
    let lower = text.to_lowercase();
    if lower.len() == text.len() {
        let pos = find_last_marker(text)?;
        return Some(&text[pos + ANSWER_MARKER.len()..]);
    }
    // Rare non-ASCII path: search case-sensitively for common casings.
    for marker in ["the answer is", "The answer is", "THE ANSWER IS"] {
        if let Some(pos) = text.rfind(marker) {
            return Some(&text[pos + marker.len()..]);
        }
    }
    None
}

fn parse_numeric(span: &str) -> Option<Answer> {
    let m = NUMBER_RE.find(span)?;
    let cleaned: String = m
        .as_str()
        .chars()
        .filter(|c| c.is_ascii_digit() || *c == '.' || *c == '-')
        .collect();
    let cleaned = cleaned.trim_end_matches('.');
    cleaned.parse::<f64>().ok().map(Answer::Numeric)
}

fn parse_option(span: &str) -> Option<Answer> {
    let caps = OPTION_RE.captures(span)?;
    let letter = caps.get(1)?.as_str().chars().next()?;
    Some(Answer::Option(letter.to_ascii_lowercase()))
}

fn parse_yes_no(span: &str) -> Option<Answer> {
    let caps = YESNO_RE.captures(span)?;
    Some(Answer::YesNo(caps
        .get(1)?
        .as_str()
        .eq_ignore_ascii_case("yes")))
}

fn parse_beaker_state(span: &str) -> Option<Answer> {
    let mut beakers: [Option<String>; BEAKER_COUNT] = Default::default();
    for caps in BEAKER_RE.captures_iter(span) {
        let idx: usize = caps.get(1)?.as_str().parse().ok()?;
        // Later pairs override earlier ones: answers typically restate
        // each beaker in prose first and then in the compact format.
        beakers[idx - 1] = Some(caps.get(2)?.as_str().to_string());
    }
    let mut out: Vec<String> = Vec::with_capacity(BEAKER_COUNT);
    for entry in beakers {
        out.push(entry?);
    }
    Some(Answer::BeakerState(out.try_into().ok()?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numeric_answers_strip_currency_commas_and_trailing_period() {
        assert_eq!(
            extract("So, Judy makes $7425 in a week. So the answer is 7425.", AnswerKind::Numeric),
            Some(Answer::Numeric(7425.0))
        );
        assert_eq!(
            extract("So the answer is $7,425.", AnswerKind::Numeric),
            Some(Answer::Numeric(7425.0))
        );
        assert_eq!(
            extract("So the answer is -10000.", AnswerKind::Numeric),
            Some(Answer::Numeric(-10000.0))
        );
        assert_eq!(
            extract("So the answer is 20.5 dollars.", AnswerKind::Numeric),
            Some(Answer::Numeric(20.5))
        );
    }

    #[test]
    fn option_answers_accept_parenthesized_and_bare_letters() {
        assert_eq!(
            extract("...So the answer is (d), rs . 630.", AnswerKind::Option),
            Some(Answer::Option('d'))
        );
        assert_eq!(
            extract("So the answer is b", AnswerKind::Option),
            Some(Answer::Option('b'))
        );
        assert_eq!(
            extract("So the answer is (c), 77.", AnswerKind::Option),
            Some(Answer::Option('c'))
        );
        // A word that merely starts with a-e is not an option letter.
        assert_eq!(extract("So the answer is bigger.", AnswerKind::Option), None);
    }

    #[test]
    fn yes_no_answers_parse_case_insensitively() {
        assert_eq!(
            extract("So the answer is no..", AnswerKind::YesNo),
            Some(Answer::YesNo(false))
        );
        assert_eq!(
            extract("So the answer is Yes.", AnswerKind::YesNo),
            Some(Answer::YesNo(true))
        );
    }

    #[test]
    fn beaker_state_parses_compact_format_and_prefers_last_listing() {
        let text = "So the answer is: First beaker has 2 yellow chemicals, denoted as 1:yy; \
                    second beaker has 1 green chemical, denoted as 2:g. The answer of these 7 \
                    beakers can also be written in the following format: 1:yy 2:g 3:_ 4:pp 5:_ 6:oo 7:_.";
        let expect = Answer::BeakerState([
            "yy".into(),
            "g".into(),
            "_".into(),
            "pp".into(),
            "_".into(),
            "oo".into(),
            "_".into(),
        ]);
        assert_eq!(extract(text, AnswerKind::BeakerState), Some(expect));
    }

    #[test]
    fn beaker_state_requires_all_seven_beakers() {
        assert_eq!(
            extract("So the answer is 1:yy 2:g 3:_.", AnswerKind::BeakerState),
            None
        );
    }

    #[test]
    fn last_marker_wins() {
        let text = "So the answer is 3. Wait, recomputing. So the answer is 5.";
        assert_eq!(extract(text, AnswerKind::Numeric), Some(Answer::Numeric(5.0)));
    }

    #[test]
    fn missing_marker_or_unparsable_span_returns_none() {
        assert_eq!(extract("no marker here", AnswerKind::Numeric), None);
        assert_eq!(extract("the answer is unclear", AnswerKind::Numeric), None);
        assert_eq!(extract("", AnswerKind::Numeric), None);
    }

    #[test]
    fn repetition_detects_looping_tails_without_markers() {
        assert!(detect_repetition("a b c a b c a b c a b c", false));
        assert!(!detect_repetition("some ordinary text. So the answer is 5.", false));
        assert!(!detect_repetition("", false));
        assert!(!detect_repetition("", true));
        assert!(detect_repetition("ran straight into the cap", true));
        // Marker present suppresses the flag even at the cap.
        assert!(!detect_repetition("loop loop loop So the answer is 5.", true));
    }
}
