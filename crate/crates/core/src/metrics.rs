//! Scoring: accuracy, per-step-bucket breakdowns, majority-vote decoding,
//! automatic error categories, gains against a baseline, and cost
//! accounting.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::answer::Answer;
use crate::client::Usage;
use crate::extract::detect_repetition;
use crate::ingest::{step_bucket, StepBucket};

/// Automatic error category for an incorrect record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AutoError {
    Repetition,
    NotExtracted,
    WrongAnswer,
}

/// Cheap size counters for one prompt/completion pair.
///
/// Whitespace tokens are a tokenizer-free proxy; endpoint-reported token
/// counts are kept alongside when available and preferred for ratios.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CostCounters {
    pub prompt_chars: u64,
    pub prompt_ws_tokens: u64,
    pub completion_chars: u64,
    pub completion_ws_tokens: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint_usage: Option<Usage>,
}

impl CostCounters {
    pub fn for_texts<'a>(prompt: &str, completions: impl Iterator<Item = &'a str>) -> Self {
        let mut counters = CostCounters {
            prompt_chars: prompt.chars().count() as u64,
            prompt_ws_tokens: prompt.split_whitespace().count() as u64,
            ..CostCounters::default()
        };
        for text in completions {
            counters.completion_chars += text.chars().count() as u64;
            counters.completion_ws_tokens += text.split_whitespace().count() as u64;
        }
        counters
    }
}

/// One scored question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub question_id: String,
    pub prompt_hash: String,
    pub completions: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extracted: Option<Answer>,
    pub gold: Answer,
    pub correct: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_count: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auto_error: Option<AutoError>,
    /// Human-assigned sub-category (e.g. wrong reasoning flow); never set
    /// automatically.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manual_label: Option<String>,
    /// Endpoint failure for this question (context length, auth, retries
    /// exhausted); the run continues past it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint_error: Option<String>,
    #[serde(default)]
    pub cost: CostCounters,
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("cannot score an empty record set")]
    Empty,
    #[error("{0} records lack step counts; bucket breakdown unavailable for them")]
    MissingStepCounts(usize),
    #[error("cost comparison needs identical question sets; {only_run} ids only in the run, {only_base} only in the baseline")]
    MismatchedQuestionSets { only_run: usize, only_base: usize },
}

/// Fraction of correct records.
pub fn accuracy(records: &[EvalRecord]) -> Result<f64, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::Empty);
    }
    let correct = records.iter().filter(|r| r.correct).count();
    Ok(correct as f64 / records.len() as f64)
}

/// Per-bucket accuracy; buckets with zero questions are simply absent.
/// Records without step counts are skipped and reported via the error
/// only when *all* records lack counts.
pub fn accuracy_by_bucket(
    records: &[EvalRecord],
) -> Result<BTreeMap<StepBucket, f64>, MetricsError> {
    let mut hits: BTreeMap<StepBucket, (usize, usize)> = BTreeMap::new();
    let mut missing = 0usize;
    for record in records {
        let Some(steps) = record.step_count else {
            missing += 1;
            continue;
        };
        let Ok(bucket) = step_bucket(steps) else {
            missing += 1;
            continue;
        };
        let entry = hits.entry(bucket).or_insert((0, 0));
        entry.1 += 1;
        if record.correct {
            entry.0 += 1;
        }
    }
    if hits.is_empty() {
        return Err(MetricsError::MissingStepCounts(missing));
    }
    Ok(hits
        .into_iter()
        .map(|(b, (c, t))| (b, c as f64 / t as f64))
        .collect())
}

/// Majority vote over sampled answers.
///
/// Answers group under scoring equality; the most frequent group wins
/// and ties break toward the group whose first member has the lowest
/// sample index. Extraction failures never vote; if every path failed
/// the vote is `None`.
pub fn majority_vote(answers: &[Option<Answer>]) -> Option<Answer> {
    // (representative, count, first index)
    let mut groups: Vec<(&Answer, usize, usize)> = Vec::new();
    for (index, answer) in answers.iter().enumerate() {
        let Some(answer) = answer else { continue };
        match groups.iter_mut().find(|(rep, _, _)| rep.matches(answer)) {
            Some(group) => group.1 += 1,
            None => groups.push((answer, 1, index)),
        }
    }
    groups
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.2.cmp(&a.2)))
        .map(|(rep, _, _)| rep.clone())
}

/// Assigns the automatic error category for a scored question.
///
/// Correct records get none. Otherwise: repetition when the (first)
/// completion loops without an answer marker, not-extracted when no
/// answer was parsed, wrong-answer when an answer was parsed but missed.
pub fn categorize(
    correct: bool,
    extracted: Option<&Answer>,
    completion: &str,
    reached_token_cap: bool,
) -> Option<AutoError> {
    if correct {
        return None;
    }
    if detect_repetition(completion, reached_token_cap) {
        return Some(AutoError::Repetition);
    }
    if extracted.is_none() {
        return Some(AutoError::NotExtracted);
    }
    Some(AutoError::WrongAnswer)
}

/// Difference in percentage points (inputs and output on the same scale).
pub fn point_gain(new: f64, base: f64) -> f64 {
    new - base
}

/// Relative gain in percent, the quantity quoted as "average relative
/// gain" in prose.
pub fn relative_gain_pct(new: f64, base: f64) -> f64 {
    (new - base) / base * 100.0
}

/// Aggregated cost totals over a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CostTotals {
    pub prompt_chars: u64,
    pub prompt_ws_tokens: u64,
    pub completion_chars: u64,
    pub completion_ws_tokens: u64,
    pub endpoint_prompt_tokens: u64,
    pub endpoint_completion_tokens: u64,
    pub endpoint_reported: bool,
}

impl CostTotals {
    fn accumulate(records: &[EvalRecord]) -> Self {
        let mut totals = CostTotals::default();
        let mut any_usage = false;
        for record in records {
            totals.prompt_chars += record.cost.prompt_chars;
            totals.prompt_ws_tokens += record.cost.prompt_ws_tokens;
            totals.completion_chars += record.cost.completion_chars;
            totals.completion_ws_tokens += record.cost.completion_ws_tokens;
            if let Some(usage) = record.cost.endpoint_usage {
                any_usage = true;
                totals.endpoint_prompt_tokens += usage.prompt_tokens;
                totals.endpoint_completion_tokens += usage.completion_tokens;
            }
        }
        totals.endpoint_reported = any_usage;
        totals
    }
}

/// Error-category counts for a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorCounts {
    pub repetition: usize,
    pub not_extracted: usize,
    pub wrong_answer: usize,
}

/// Scored summary of one run. Building the report is a fold over
/// records and is order-independent: shuffling records changes nothing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub total: usize,
    pub accuracy: f64,
    pub per_bucket_accuracy: BTreeMap<StepBucket, f64>,
    pub per_bucket_counts: BTreeMap<StepBucket, usize>,
    pub records_without_step_count: usize,
    pub errors: ErrorCounts,
    pub cost: CostTotals,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<BaselineComparison>,
}

/// Gains of a run over a named baseline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineComparison {
    pub baseline_name: String,
    pub baseline_accuracy: f64,
    /// new - base, in percentage points (accuracies are fractions, the
    /// gain is scaled by 100).
    pub point_gain: f64,
    /// (new - base) / base * 100.
    pub relative_gain_pct: f64,
}

impl RunReport {
    pub fn build(records: &[EvalRecord]) -> Result<Self, MetricsError> {
        let accuracy = accuracy(records)?;
        let mut per_bucket_counts: BTreeMap<StepBucket, usize> = BTreeMap::new();
        let mut missing = 0usize;
        for record in records {
            match record.step_count.map(step_bucket) {
                Some(Ok(bucket)) => *per_bucket_counts.entry(bucket).or_default() += 1,
                _ => missing += 1,
            }
        }
        let per_bucket_accuracy = accuracy_by_bucket(records).unwrap_or_default();
        let mut errors = ErrorCounts::default();
        for record in records {
            match record.auto_error {
                Some(AutoError::Repetition) => errors.repetition += 1,
                Some(AutoError::NotExtracted) => errors.not_extracted += 1,
                Some(AutoError::WrongAnswer) => errors.wrong_answer += 1,
                None => {}
            }
        }
        Ok(RunReport {
            total: records.len(),
            accuracy,
            per_bucket_accuracy,
            per_bucket_counts,
            records_without_step_count: missing,
            errors,
            cost: CostTotals::accumulate(records),
            baseline: None,
        })
    }

    /// Attaches point and relative gains against a baseline report.
    pub fn against_baseline(mut self, name: &str, baseline: &RunReport) -> Self {
        self.baseline = Some(BaselineComparison {
            baseline_name: name.to_string(),
            baseline_accuracy: baseline.accuracy,
            point_gain: point_gain(self.accuracy, baseline.accuracy) * 100.0,
            relative_gain_pct: relative_gain_pct(self.accuracy, baseline.accuracy),
        });
        self
    }
}

/// Cost ratios of a run against a baseline over the same questions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub prompt_chars_ratio: f64,
    pub prompt_ws_tokens_ratio: f64,
    pub completion_ws_tokens_ratio: f64,
    pub combined_ws_tokens_ratio: f64,
    /// Present only when both runs carry endpoint-reported token counts;
    /// preferred over the whitespace proxy when available.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub combined_endpoint_tokens_ratio: Option<f64>,
}

/// Compares run cost against a baseline run over the same question set.
pub fn cost_report(
    run: &[EvalRecord],
    baseline: &[EvalRecord],
) -> Result<CostReport, MetricsError> {
    if run.is_empty() || baseline.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut run_ids: Vec<&str> = run.iter().map(|r| r.question_id.as_str()).collect();
    let mut base_ids: Vec<&str> = baseline.iter().map(|r| r.question_id.as_str()).collect();
    run_ids.sort_unstable();
    base_ids.sort_unstable();
    if run_ids != base_ids {
        let only_run = run_ids.iter().filter(|id| !base_ids.contains(id)).count();
        let only_base = base_ids.iter().filter(|id| !run_ids.contains(id)).count();
        return Err(MetricsError::MismatchedQuestionSets { only_run, only_base });
    }
    let run_totals = CostTotals::accumulate(run);
    let base_totals = CostTotals::accumulate(baseline);
    let ratio = |a: u64, b: u64| a as f64 / (b as f64).max(1.0);
    let combined_endpoint = if run_totals.endpoint_reported && base_totals.endpoint_reported {
        Some(ratio(
            run_totals.endpoint_prompt_tokens + run_totals.endpoint_completion_tokens,
            base_totals.endpoint_prompt_tokens + base_totals.endpoint_completion_tokens,
        ))
    } else {
        None
    };
    Ok(CostReport {
        prompt_chars_ratio: ratio(run_totals.prompt_chars, base_totals.prompt_chars),
        prompt_ws_tokens_ratio: ratio(run_totals.prompt_ws_tokens, base_totals.prompt_ws_tokens),
        completion_ws_tokens_ratio: ratio(
            run_totals.completion_ws_tokens,
            base_totals.completion_ws_tokens,
        ),
        combined_ws_tokens_ratio: ratio(
            run_totals.prompt_ws_tokens + run_totals.completion_ws_tokens,
            base_totals.prompt_ws_tokens + base_totals.completion_ws_tokens,
        ),
        combined_endpoint_tokens_ratio: combined_endpoint,
    })
}
