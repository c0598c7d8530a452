//! Typed answers shared by exemplar graphs, extraction, and scoring.

use serde::{Deserialize, Serialize};

/// Number of beakers in a sequential-world state.
pub const BEAKER_COUNT: usize = 7;

/// Relative tolerance for comparing non-integer numeric answers.
pub const NUMERIC_REL_TOL: f64 = 1e-4;

/// A typed final answer.
///
/// `Numeric` covers math word problems, `Option` multiple-choice letters
/// (a-e), `YesNo` boolean questions, and `BeakerState` the seven-beaker
/// world encoding `1:yy 2:ooo ... 7:_` (one entry per beaker, `_` for
/// empty or 1-4 color characters).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Answer {
    Numeric(f64),
    Option(char),
    YesNo(bool),
    BeakerState([String; BEAKER_COUNT]),
}

/// The answer shape a dataset's questions expect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerKind {
    Numeric,
    Option,
    YesNo,
    BeakerState,
}

impl Answer {
    pub fn kind(&self) -> AnswerKind {
        match self {
            Answer::Numeric(_) => AnswerKind::Numeric,
            Answer::Option(_) => AnswerKind::Option,
            Answer::YesNo(_) => AnswerKind::YesNo,
            Answer::BeakerState(_) => AnswerKind::BeakerState,
        }
    }

    /// Equality used for scoring.
    ///
    /// Numeric answers compare exactly when both are integers and with
    /// relative tolerance [`NUMERIC_REL_TOL`] otherwise. Beaker contents
    /// compare per beaker with the color characters sorted first, since
    /// mixing order inside a beaker is not meaningful. A tag mismatch is
    /// `false`, not an error.
    pub fn matches(&self, other: &Answer) -> bool {
        match (self, other) {
            (Answer::Numeric(a), Answer::Numeric(b)) => numeric_eq(*a, *b),
            (Answer::Option(a), Answer::Option(b)) => {
                a.to_ascii_lowercase() == b.to_ascii_lowercase()
            }
            (Answer::YesNo(a), Answer::YesNo(b)) => a == b,
            (Answer::BeakerState(a), Answer::BeakerState(b)) => a
                .iter()
                .zip(b.iter())
                .all(|(x, y)| sort_colors(x) == sort_colors(y)),
            _ => false,
        }
    }

    /// Canonical surface form used when rendering answer sentences.
    pub fn display_text(&self) -> String {
        match self {
            Answer::Numeric(v) => format_number(*v),
            Answer::Option(c) => c.to_ascii_lowercase().to_string(),
            Answer::YesNo(true) => "yes".to_string(),
            Answer::YesNo(false) => "no".to_string(),
            Answer::BeakerState(beakers) => beakers
                .iter()
                .enumerate()
                .map(|(i, contents)| format!("{}:{}", i + 1, contents))
                .collect::<Vec<_>>()
                .join(" "),
        }
    }
}

fn numeric_eq(a: f64, b: f64) -> bool {
    if a == b {
        return true;
    }
    if a.fract() == 0.0 && b.fract() == 0.0 {
        return false;
    }
    (a - b).abs() <= NUMERIC_REL_TOL * a.abs().max(b.abs())
}

fn sort_colors(contents: &str) -> String {
    let mut chars: Vec<char> = contents.chars().collect();
    chars.sort_unstable();
    chars.into_iter().collect()
}

/// Formats a numeric answer without scientific notation or a trailing
/// `.0` on integers.
pub fn format_number(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        let mut s = format!("{}", v);
        if s.contains('e') {
            s = format!("{:.6}", v);
            while s.ends_with('0') {
                s.pop();
            }
            if s.ends_with('.') {
                s.pop();
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integer_answers_compare_exactly() {
        assert!(Answer::Numeric(7425.0).matches(&Answer::Numeric(7425.0)));
        assert!(!Answer::Numeric(475.0).matches(&Answer::Numeric(455.0)));
        assert!(!Answer::Numeric(100.0).matches(&Answer::Numeric(101.0)));
    }

    #[test]
    fn fractional_answers_use_relative_tolerance() {
        assert!(Answer::Numeric(0.3333).matches(&Answer::Numeric(0.33333)));
        assert!(!Answer::Numeric(0.5).matches(&Answer::Numeric(0.6)));
    }

    #[test]
    fn beaker_colors_compare_order_insensitively() {
        let a = Answer::BeakerState([
            "yg".into(),
            "bb".into(),
            "_".into(),
            "pp".into(),
            "_".into(),
            "oo".into(),
            "_".into(),
        ]);
        let b = Answer::BeakerState([
            "gy".into(),
            "bb".into(),
            "_".into(),
            "pp".into(),
            "_".into(),
            "oo".into(),
            "_".into(),
        ]);
        assert!(a.matches(&b));
    }

    #[test]
    fn tag_mismatch_is_false_not_error() {
        assert!(!Answer::Numeric(1.0).matches(&Answer::Option('a')));
    }

    #[test]
    fn display_text_round_trips_common_forms() {
        assert_eq!(Answer::Numeric(990.0).display_text(), "990");
        assert_eq!(Answer::Numeric(-10000.0).display_text(), "-10000");
        assert_eq!(Answer::Numeric(20.5).display_text(), "20.5");
        assert_eq!(Answer::Option('d').display_text(), "d");
        assert_eq!(Answer::YesNo(false).display_text(), "no");
    }
}
