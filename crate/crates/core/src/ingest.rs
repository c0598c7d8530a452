//! Benchmark loaders: normalize the six supported datasets into uniform
//! question records with gold answers and step counts.
//!
//! Loaders expect locally provided files in each dataset's published
//! format: JSON Lines for GSM8K; JSON arrays for AQUA-RAT, MathQA, SVAMP
//! and StrategyQA (JSON Lines is also accepted for these, since several
//! mirrors distribute them that way); tab-separated states and actions
//! for SCONE-Alchemy. Normalized records serialize as JSON Lines.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use once_cell::sync::Lazy;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::answer::{Answer, AnswerKind, BEAKER_COUNT};

/// The supported benchmarks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetId {
    Gsm8k,
    Aqua,
    #[serde(rename = "mathqa")]
    MathQa,
    Svamp,
    Scone,
    #[serde(rename = "strategyqa")]
    StrategyQa,
}

impl DatasetId {
    pub const ALL: [DatasetId; 6] = [
        DatasetId::Gsm8k,
        DatasetId::Aqua,
        DatasetId::MathQa,
        DatasetId::Svamp,
        DatasetId::Scone,
        DatasetId::StrategyQa,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            DatasetId::Gsm8k => "gsm8k",
            DatasetId::Aqua => "aqua",
            DatasetId::MathQa => "mathqa",
            DatasetId::Svamp => "svamp",
            DatasetId::Scone => "scone",
            DatasetId::StrategyQa => "strategyqa",
        }
    }

    pub fn parse(s: &str) -> Option<DatasetId> {
        match s.to_ascii_lowercase().as_str() {
            "gsm8k" => Some(DatasetId::Gsm8k),
            "aqua" | "aqua-rat" | "aquarat" => Some(DatasetId::Aqua),
            "mathqa" | "math_qa" => Some(DatasetId::MathQa),
            "svamp" => Some(DatasetId::Svamp),
            "scone" | "scone-alchemy" | "alchemy" => Some(DatasetId::Scone),
            "strategyqa" | "strategy_qa" => Some(DatasetId::StrategyQa),
        _ => None,
        }
    }

    /// The answer shape this dataset's questions carry.
    pub fn answer_kind(&self) -> AnswerKind {
        match self {
            DatasetId::Gsm8k | DatasetId::Svamp => AnswerKind::Numeric,
            DatasetId::Aqua | DatasetId::MathQa => AnswerKind::Option,
            DatasetId::StrategyQa => AnswerKind::YesNo,
            DatasetId::Scone => AnswerKind::BeakerState,
        }
    }

    /// Shot count the shipped exemplar sets use.
    pub fn default_shots(&self) -> usize {
        match self {
            DatasetId::Gsm8k | DatasetId::Svamp => 8,
            DatasetId::Aqua | DatasetId::MathQa => 4,
            DatasetId::Scone => 2,
            DatasetId::StrategyQa => 6,
        }
    }
}

impl fmt::Display for DatasetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One normalized benchmark question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub dataset: DatasetId,
    pub question_id: String,
    pub question_text: String,
    pub answer_kind: AnswerKind,
    pub gold: Answer,
    /// Absent when the dataset needs an annotation sidecar that was not
    /// supplied (AQUA-RAT).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_count: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<Vec<(char, String)>>,
}

impl QuestionRecord {
    /// The question as it appears in a prompt, with answer choices
    /// appended in the dataset's own surface format.
    pub fn prompt_text(&self) -> String {
        match (&self.options, self.dataset) {
            (Some(options), DatasetId::Aqua) => {
                let choices = options
                    .iter()
                    .map(|(letter, text)| format!("({letter}) {text}"))
                    .collect::<Vec<_>>()
                    .join(" ");
                format!("{} Answer Choices: {}", self.question_text, choices)
            }
            (Some(options), DatasetId::MathQa) => {
                let choices = options
                    .iter()
                    .map(|(letter, text)| format!("({letter}) {text} ,"))
                    .collect::<Vec<_>>()
                    .join(" ");
                format!("{} Options: {}", self.question_text, choices)
            }
            _ => self.question_text.clone(),
        }
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed record: {reason}")]
    Malformed {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("subsample of {requested} requested but only {available} records are loaded")]
    SampleTooLarge { requested: usize, available: usize },
    #[error("step bucket requires step_count >= 1, got {0}")]
    BadStepCount(u32),
}

/// Optional extras for loading.
#[derive(Debug, Default, Clone)]
pub struct IngestOptions {
    /// AQUA-RAT step-count sidecar: a JSON map from question id (the
    /// loader's `aqua-NNNN` ids) to step count. Without it AQUA records
    /// load with `step_count` absent.
    pub aqua_steps: Option<std::path::PathBuf>,
}

/// Loads and normalizes one dataset file.
pub fn load(dataset: DatasetId, path: &Path) -> Result<Vec<QuestionRecord>, IngestError> {
    load_with_options(dataset, path, &IngestOptions::default())
}

pub fn load_with_options(
    dataset: DatasetId,
    path: &Path,
    options: &IngestOptions,
) -> Result<Vec<QuestionRecord>, IngestError> {
    let text = fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let path_str = path.display().to_string();
    match dataset {
        DatasetId::Gsm8k => load_gsm8k(&text, &path_str),
        DatasetId::Aqua => {
            let sidecar = match &options.aqua_steps {
                Some(p) => Some(load_aqua_sidecar(p)?),
                None => None,
            };
            load_aqua(&text, &path_str, sidecar.as_ref())
        }
        DatasetId::MathQa => load_mathqa(&text, &path_str),
        DatasetId::Svamp => load_svamp(&text, &path_str),
        DatasetId::Scone => load_scone(&text, &path_str),
        DatasetId::StrategyQa => load_strategyqa(&text, &path_str),
    }
}

fn malformed(path: &str, line: usize, reason: impl Into<String>) -> IngestError {
    IngestError::Malformed {
        path: path.to_string(),
        line,
        reason: reason.into(),
    }
}

/// Parses a file that is either one JSON array or JSON Lines into
/// `(line_number, value)` pairs.
fn json_records(text: &str, path: &str) -> Result<Vec<(usize, serde_json::Value)>, IngestError> {
    let trimmed = text.trim_start();
    if trimmed.starts_with('[') {
        let values: Vec<serde_json::Value> = serde_json::from_str(text)
            .map_err(|e| malformed(path, e.line(), e.to_string()))?;
        return Ok(values.into_iter().map(|v| (0, v)).collect());
    }
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(line)
            .map_err(|e| malformed(path, idx + 1, e.to_string()))?;
        out.push((idx + 1, value));
    }
    Ok(out)
}

fn str_field<'a>(
    value: &'a serde_json::Value,
    names: &[&str],
    path: &str,
    line: usize,
) -> Result<&'a str, IngestError> {
    for name in names {
        if let Some(s) = value.get(*name).and_then(|v| v.as_str()) {
            return Ok(s);
        }
    }
    Err(malformed(
        path,
        line,
        format!("missing string field {:?}", names),
    ))
}

static WS_RE: Lazy<Regex> = Lazy::new(|| Regex::new(r"\s+").unwrap());

fn normalize_ws(s: &str) -> String {
    WS_RE.replace_all(s.trim(), " ").into_owned()
}

// --- GSM8K ---------------------------------------------------------------

static CALC_RE: Lazy<Regex> = Lazy::new(|| Regex::new(r"<<[^>]*>>").unwrap());

fn load_gsm8k(text: &str, path: &str) -> Result<Vec<QuestionRecord>, IngestError> {
    let mut out = Vec::new();
    for (line_no, value) in json_records(text, path)? {
        let question = str_field(&value, &["question"], path, line_no)?;
        let answer = str_field(&value, &["answer"], path, line_no)?;
        let gold_str = answer
            .rsplit("#### ")
            .next()
            .ok_or_else(|| malformed(path, line_no, "answer lacks a '#### <gold>' suffix"))?
            .trim();
        let gold: f64 = gold_str
            .replace(',', "")
            .parse()
            .map_err(|_| malformed(path, line_no, format!("gold `{gold_str}` is not numeric")))?;
        if !answer.contains("####") {
            return Err(malformed(path, line_no, "answer lacks a '#### <gold>' suffix"));
        }
        // One step per solution line carrying a calculator annotation.
        let steps = answer
            .lines()
            .filter(|l| CALC_RE.is_match(l))
            .count()
            .max(1) as u32;
        out.push(QuestionRecord {
            dataset: DatasetId::Gsm8k,
            question_id: format!("gsm8k-{:04}", out.len()),
            question_text: normalize_ws(question),
            answer_kind: AnswerKind::Numeric,
            gold: Answer::Numeric(gold),
            step_count: Some(steps),
            options: None,
        });
    }
    Ok(out)
}

// --- AQUA-RAT ------------------------------------------------------------

static CHOICE_RE: Lazy<Regex> = Lazy::new(|| Regex::new(r"^\(?([A-Ea-e])\s*\)\s*(.*)$").unwrap());

fn load_aqua_sidecar(path: &Path) -> Result<BTreeMap<String, u32>, IngestError> {
    let text = fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text)
        .map_err(|e| malformed(&path.display().to_string(), e.line(), e.to_string()))
}

fn load_aqua(
    text: &str,
    path: &str,
    sidecar: Option<&BTreeMap<String, u32>>,
) -> Result<Vec<QuestionRecord>, IngestError> {
    let mut out = Vec::new();
    for (line_no, value) in json_records(text, path)? {
        let question = str_field(&value, &["question"], path, line_no)?;
        let correct = str_field(&value, &["correct"], path, line_no)?;
        let raw_options = value
            .get("options")
            .and_then(|v| v.as_array())
            .ok_or_else(|| malformed(path, line_no, "missing `options` array"))?;
        let mut options = Vec::new();
        for raw in raw_options {
            let s = raw
                .as_str()
                .ok_or_else(|| malformed(path, line_no, "non-string option"))?;
            let caps = CHOICE_RE
                .captures(s.trim())
                .ok_or_else(|| malformed(path, line_no, format!("unparsable option `{s}`")))?;
            let letter = caps[1].chars().next().unwrap().to_ascii_lowercase();
            options.push((letter, normalize_ws(&caps[2])));
        }
        let gold = correct
            .trim()
            .chars()
            .next()
            .map(|c| c.to_ascii_lowercase())
            .filter(|c| ('a'..='e').contains(c))
            .ok_or_else(|| malformed(path, line_no, format!("bad gold letter `{correct}`")))?;
        if !options.iter().any(|(l, _)| *l == gold) {
            return Err(malformed(
                path,
                line_no,
                format!("gold letter `{gold}` not among option letters"),
            ));
        }
        let question_id = format!("aqua-{:04}", out.len());
        let step_count = sidecar.and_then(|m| m.get(&question_id).copied());
        out.push(QuestionRecord {
            dataset: DatasetId::Aqua,
            question_id,
            question_text: normalize_ws(question),
            answer_kind: AnswerKind::Option,
            gold: Answer::Option(gold),
            step_count,
            options: Some(options),
        });
    }
    Ok(out)
}

// --- MathQA ---------------------------------------------------------------

fn load_mathqa(text: &str, path: &str) -> Result<Vec<QuestionRecord>, IngestError> {
    let mut out = Vec::new();
    for (line_no, value) in json_records(text, path)? {
        let problem = str_field(&value, &["Problem", "problem"], path, line_no)?;
        let correct = str_field(&value, &["correct", "Correct"], path, line_no)?;
        let options_str = str_field(&value, &["options", "Options"], path, line_no)?;
        let options = parse_mathqa_options(options_str)
            .ok_or_else(|| malformed(path, line_no, format!("unparsable options `{options_str}`")))?;
        let gold = correct
            .trim()
            .chars()
            .next()
            .map(|c| c.to_ascii_lowercase())
            .filter(|c| ('a'..='e').contains(c))
            .ok_or_else(|| malformed(path, line_no, format!("bad gold letter `{correct}`")))?;
        // One step per operation of the annotated linear formula.
        let step_count = value
            .get("linear_formula")
            .and_then(|v| v.as_str())
            .map(|f| f.split('|').filter(|op| !op.trim().is_empty()).count().max(1) as u32);
        out.push(QuestionRecord {
            dataset: DatasetId::MathQa,
            question_id: format!("mathqa-{:04}", out.len()),
            question_text: normalize_ws(problem),
            answer_kind: AnswerKind::Option,
            gold: Answer::Option(gold),
            step_count,
            options: Some(options),
        });
    }
    Ok(out)
}

/// Splits MathQA's single options string, e.g.
/// `"a ) 90 , b ) 100 , c ) 110 , d ) 120 , e ) 130"`.
fn parse_mathqa_options(s: &str) -> Option<Vec<(char, String)>> {
    static OPT_SPLIT_RE: Lazy<Regex> =
        Lazy::new(|| Regex::new(r"(?:^|,)\s*([a-eA-E])\s*\)").unwrap());
    let mut found: Vec<(char, usize, usize)> = Vec::new();
    for caps in OPT_SPLIT_RE.captures_iter(s) {
        let letter = caps[1].chars().next()?.to_ascii_lowercase();
        let all = caps.get(0)?;
        found.push((letter, all.start(), all.end()));
    }
    if found.is_empty() {
        return None;
    }
    let mut out = Vec::new();
    for (i, (letter, _, text_start)) in found.iter().enumerate() {
        let end = if i + 1 < found.len() {
            found[i + 1].1
        } else {
            s.len()
        };
        let text = s[*text_start..end].trim().trim_end_matches(',').trim();
        out.push((*letter, normalize_ws(text)));
    }
    Some(out)
}

// --- SVAMP ----------------------------------------------------------------

fn load_svamp(text: &str, path: &str) -> Result<Vec<QuestionRecord>, IngestError> {
    let mut out = Vec::new();
    for (line_no, value) in json_records(text, path)? {
        let body = str_field(&value, &["Body", "body"], path, line_no)?;
        let question = str_field(&value, &["Question", "question"], path, line_no)?;
        let equation = str_field(&value, &["Equation", "equation"], path, line_no)?;
        let answer = value
            .get("Answer")
            .or_else(|| value.get("answer"))
            .and_then(|v| v.as_f64())
            .ok_or_else(|| malformed(path, line_no, "missing numeric `Answer`"))?;
        let id = value
            .get("ID")
            .or_else(|| value.get("id"))
            .and_then(|v| v.as_str())
            .map(|s| s.to_string())
            .unwrap_or_else(|| format!("svamp-{:04}", out.len()));
        // One step per arithmetic operator in the annotated equation.
        let steps = equation
            .chars()
            .filter(|c| matches!(c, '+' | '*' | '/'))
            .count()
            + equation
                .split_whitespace()
                .filter(|tok| *tok == "-")
                .count();
        let body = body.trim();
        let sep = if body.ends_with(['.', '?', '!', ',']) { " " } else { ". " };
        out.push(QuestionRecord {
            dataset: DatasetId::Svamp,
            question_id: id,
            question_text: normalize_ws(&format!("{body}{sep}{question}")),
            answer_kind: AnswerKind::Numeric,
            gold: Answer::Numeric(answer),
            step_count: Some(steps.max(1) as u32),
            options: None,
        });
    }
    Ok(out)
}

// --- SCONE-Alchemy ----------------------------------------------------------

/// Number of actions per SCONE-Alchemy task; every task graph has five
/// steps.
pub const SCONE_STEPS: u32 = 5;

const COLOR_NAMES: [(char, &str); 6] = [
    ('b', "brown"),
    ('g', "green"),
    ('o', "orange"),
    ('p', "purple"),
    ('r', "red"),
    ('y', "yellow"),
];

const ORDINALS: [&str; BEAKER_COUNT] = [
    "First", "Second", "Third", "Fourth", "Fifth", "Sixth", "Seventh",
];

fn color_name(c: char) -> &'static str {
    COLOR_NAMES
        .iter()
        .find(|(ch, _)| *ch == c)
        .map(|(_, name)| *name)
        .unwrap_or("colored")
}

/// Parses a SCONE world state like `1:ggg 2:_ ... 7:oo` into beaker
/// contents.
fn parse_scone_state(s: &str) -> Option<[String; BEAKER_COUNT]> {
    let mut beakers: [Option<String>; BEAKER_COUNT] = Default::default();
    for token in s.split_whitespace() {
        let (idx, contents) = token.split_once(':')?;
        let idx: usize = idx.parse().ok()?;
        if !(1..=BEAKER_COUNT).contains(&idx) {
            return None;
        }
        beakers[idx - 1] = Some(contents.to_string());
    }
    let mut out = Vec::with_capacity(BEAKER_COUNT);
    for entry in beakers {
        out.push(entry?);
    }
    out.try_into().ok()
}

/// English description of one beaker's initial contents.
fn describe_beaker(idx: usize, contents: &str) -> String {
    let ordinal = ORDINALS[idx];
    if contents == "_" || contents.is_empty() {
        return format!("{ordinal} beaker has 0 chemicals");
    }
    let n = contents.chars().count();
    let first = contents.chars().next().unwrap();
    let uniform = contents.chars().all(|c| c == first);
    let noun = if n == 1 { "chemical" } else { "chemicals" };
    if uniform {
        format!("{ordinal} beaker has {n} {} {noun}", color_name(first))
    } else {
        format!("{ordinal} beaker has {n} mixed {noun}")
    }
}

fn load_scone(text: &str, path: &str) -> Result<Vec<QuestionRecord>, IngestError> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let fields: Vec<&str> = line.split('\t').collect();
        // id, state0, (utterance, state) x 5
        if fields.len() < 2 + 2 * SCONE_STEPS as usize {
            return Err(malformed(
                path,
                line_no,
                format!("expected 12 tab-separated fields, got {}", fields.len()),
            ));
        }
        let id = fields[0];
        let initial = parse_scone_state(fields[1])
            .ok_or_else(|| malformed(path, line_no, "unparsable initial state"))?;
        let final_state = parse_scone_state(fields[fields.len() - 1])
            .ok_or_else(|| malformed(path, line_no, "unparsable final state"))?;
        let mut actions = Vec::new();
        for k in 0..SCONE_STEPS as usize {
            let utterance = fields[2 + 2 * k].trim();
            if utterance.is_empty() {
                return Err(malformed(path, line_no, format!("empty action {}", k + 1)));
            }
            let mut sentence = String::new();
            let mut chars = utterance.chars();
            if let Some(first) = chars.next() {
                sentence.extend(first.to_uppercase());
                sentence.push_str(chars.as_str());
            }
            if !sentence.ends_with('.') {
                sentence.push('.');
            }
            actions.push(sentence);
        }
        let initial_desc = initial
            .iter()
            .enumerate()
            .map(|(i, contents)| describe_beaker(i, contents))
            .collect::<Vec<_>>()
            .join("; ");
        let question_text = format!(
            "The world contains 7 beakers. Each beaker may contain up to 4 units of colored \
             chemical. The chemical can be poured into another beaker, drained away, or mixed. \
             The initial state of each beaker is: {initial_desc}. We perform the following \
             actions: {} Question: what are the chemicals in each beaker?",
            actions.join(" ")
        );
        out.push(QuestionRecord {
            dataset: DatasetId::Scone,
            question_id: format!("scone-{id}"),
            question_text,
            answer_kind: AnswerKind::BeakerState,
            gold: Answer::BeakerState(final_state),
            step_count: Some(SCONE_STEPS),
            options: None,
        });
    }
    Ok(out)
}

// --- StrategyQA -------------------------------------------------------------

fn load_strategyqa(text: &str, path: &str) -> Result<Vec<QuestionRecord>, IngestError> {
    let mut out = Vec::new();
    for (line_no, value) in json_records(text, path)? {
        let question = str_field(&value, &["question"], path, line_no)?;
        let answer = value
            .get("answer")
            .and_then(|v| v.as_bool())
            .ok_or_else(|| malformed(path, line_no, "missing boolean `answer`"))?;
        let qid = value
            .get("qid")
            .and_then(|v| v.as_str())
            .map(|s| s.to_string())
            .unwrap_or_else(|| format!("strategyqa-{:04}", out.len()));
        // One step per decomposition sub-question.
        let steps = value
            .get("decomposition")
            .and_then(|v| v.as_array())
            .map(|d| d.len().max(1) as u32);
        out.push(QuestionRecord {
            dataset: DatasetId::StrategyQa,
            question_id: qid,
            question_text: normalize_ws(question),
            answer_kind: AnswerKind::YesNo,
            gold: Answer::YesNo(answer),
            step_count: steps,
            options: None,
        });
    }
    Ok(out)
}

// --- Sampling and buckets ----------------------------------------------------

/// Seeded uniform sample without replacement; the surviving records keep
/// their original order. Reproducible across runs and platforms.
pub fn subsample(
    records: &[QuestionRecord],
    n: usize,
    seed: u64,
) -> Result<Vec<QuestionRecord>, IngestError> {
    if n > records.len() {
        return Err(IngestError::SampleTooLarge {
            requested: n,
            available: records.len(),
        });
    }
    if n == records.len() {
        return Ok(records.to_vec());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Partial Fisher-Yates over the index vector, then restore order.
    let mut indices: Vec<usize> = (0..records.len()).collect();
    for i in 0..n {
        let j = rng.gen_range(i..indices.len());
        indices.swap(i, j);
    }
    let mut chosen = indices[..n].to_vec();
    chosen.sort_unstable();
    Ok(chosen.into_iter().map(|i| records[i].clone()).collect())
}

/// Question grouping by reasoning-step count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StepBucket {
    B1,
    B2,
    B3,
    B4,
    B5plus,
}

impl fmt::Display for StepBucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            StepBucket::B1 => "1",
            StepBucket::B2 => "2",
            StepBucket::B3 => "3",
            StepBucket::B4 => "4",
            StepBucket::B5plus => ">=5",
        };
        f.write_str(s)
    }
}

/// Maps a step count into the five groups {1, 2, 3, 4, >=5}.
pub fn step_bucket(step_count: u32) -> Result<StepBucket, IngestError> {
    match step_count {
        0 => Err(IngestError::BadStepCount(0)),
        1 => Ok(StepBucket::B1),
        2 => Ok(StepBucket::B2),
        3 => Ok(StepBucket::B3),
        4 => Ok(StepBucket::B4),
        _ => Ok(StepBucket::B5plus),
    }
}

/// Percentage of records in each bucket (records without a step count
/// are skipped).
pub fn bucket_distribution(records: &[QuestionRecord]) -> BTreeMap<StepBucket, f64> {
    let mut counts: BTreeMap<StepBucket, usize> = BTreeMap::new();
    let mut total = 0usize;
    for r in records {
        if let Some(steps) = r.step_count {
            if let Ok(bucket) = step_bucket(steps) {
                *counts.entry(bucket).or_default() += 1;
                total += 1;
            }
        }
    }
    counts
        .into_iter()
        .map(|(b, c)| (b, 100.0 * c as f64 / total.max(1) as f64))
        .collect()
}

/// Serializes normalized records as JSON Lines.
pub fn to_jsonl(records: &[QuestionRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    out
}

/// Reads normalized records back from JSON Lines.
pub fn from_jsonl(text: &str, path: &str) -> Result<Vec<QuestionRecord>, IngestError> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: QuestionRecord = serde_json::from_str(line)
            .map_err(|e| malformed(path, idx + 1, e.to_string()))?;
        out.push(record);
    }
    Ok(out)
}
