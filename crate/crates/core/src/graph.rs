//! Reasoning-graph intermediate representation and structural analyses.
//!
//! An exemplar is a question, its given conditions, and an ordered list of
//! reasoning steps forming a DAG: every step may depend on earlier step
//! results or on question conditions. Step-to-step dependencies that skip
//! at least one intermediate step are the residual edges a linear
//! chain-of-thought rendering loses.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::answer::Answer;

/// Slot marker for the answer value inside `answer_sentence_template`.
pub const ANSWER_SLOT: &str = "{answer}";

/// A reference to one prerequisite of a reasoning step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrereqRef {
    /// A given condition from the question, by condition id.
    Condition(String),
    /// The result of an earlier step, by 1-based step index.
    #[serde(rename = "step")]
    StepResult(usize),
}

/// Integer operation stored on synthetic-task steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
}

impl ArithOp {
    /// Left-fold application over the operand list.
    pub fn apply(self, operands: &[i64]) -> Option<i64> {
        let mut iter = operands.iter().copied();
        let first = iter.next()?;
        let mut acc = first;
        for v in iter {
            acc = match self {
                ArithOp::Add => acc.checked_add(v)?,
                ArithOp::Sub => acc.checked_sub(v)?,
                ArithOp::Mul => acc.checked_mul(v)?,
            };
        }
        Some(acc)
    }
}

/// A numeric or textual step result value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StepValue {
    Num(f64),
    Text(String),
}

impl StepValue {
    pub fn as_num(&self) -> Option<f64> {
        match self {
            StepValue::Num(v) => Some(*v),
            StepValue::Text(_) => None,
        }
    }
}

/// One reasoning step.
///
/// `body_template` holds the step's surface text with exactly one
/// positional slot `{0}`, `{1}`, ... per entry of `prerequisites`; the
/// compiler fills each slot with the restatement of that prerequisite.
/// `result_phrase` is the verbatim token span that names this step's
/// result and is what later steps repeat. `cot_body` is the hand-written
/// linear phrasing used when the step is rendered without residual
/// restatements; it is only required for steps that reference a
/// non-immediately-preceding step result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningStep {
    pub index: usize,
    #[serde(default)]
    pub prerequisites: Vec<PrereqRef>,
    pub body_template: String,
    pub result_phrase: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result_value: Option<StepValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cot_body: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub op: Option<ArithOp>,
}

impl ReasoningStep {
    /// Step results this step depends on, in prerequisite order.
    pub fn step_prereqs(&self) -> impl Iterator<Item = usize> + '_ {
        self.prerequisites.iter().filter_map(|p| match p {
            PrereqRef::StepResult(j) => Some(*j),
            PrereqRef::Condition(_) => None,
        })
    }

    /// True when some prerequisite is a step result other than the
    /// immediately preceding step. Only these steps read differently
    /// with and without residual restatements.
    pub fn has_distant_prereq(&self) -> bool {
        self.step_prereqs().any(|j| j + 1 != self.index)
    }
}

/// A question with its conditions and reasoning-step DAG.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningGraph {
    pub question_text: String,
    #[serde(default)]
    pub conditions: BTreeMap<String, String>,
    pub steps: Vec<ReasoningStep>,
    pub final_answer: Answer,
    pub answer_sentence_template: String,
}

/// One invariant violation found by [`ReasoningGraph::validate`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    /// 1-based step index, when the violation is tied to a step.
    pub step: Option<usize>,
    pub reason: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.step {
            Some(i) => write!(f, "step {}: {}", i, self.reason),
            None => write!(f, "{}", self.reason),
        }
    }
}

/// Validation outcome; empty iff the graph satisfies every invariant.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            write!(f, "valid")
        } else {
            for (i, v) in self.violations.iter().enumerate() {
                if i > 0 {
                    writeln!(f)?;
                }
                write!(f, "{}", v)?;
            }
            Ok(())
        }
    }
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("invalid reasoning graph: {0}")]
    Invalid(ValidationReport),
    #[error("step {step} slot {{{slot}}} references unknown condition `{id}`")]
    UnknownCondition { step: usize, slot: usize, id: String },
    #[error("step {step} slot {{{slot}}} references out-of-range step {target}")]
    BadStepRef { step: usize, slot: usize, target: usize },
}

impl ReasoningGraph {
    /// Number of reasoning steps.
    pub fn step_count(&self) -> usize {
        self.steps.len()
    }

    /// Checks every structural invariant and reports each violation with
    /// its step index and reason. Pure and side-effect-free; an empty
    /// report means the graph is valid.
    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        let n = self.steps.len();
        if n == 0 {
            violations.push(Violation {
                step: None,
                reason: "graph has no steps".into(),
            });
        }
        for (pos, step) in self.steps.iter().enumerate() {
            let expect = pos + 1;
            if step.index != expect {
                violations.push(Violation {
                    step: Some(step.index),
                    reason: format!("step index {} out of order, expected {}", step.index, expect),
                });
            }
            for (slot, prereq) in step.prerequisites.iter().enumerate() {
                match prereq {
                    PrereqRef::StepResult(j) => {
                        if *j == 0 {
                            violations.push(Violation {
                                step: Some(step.index),
                                reason: format!("slot {{{slot}}} references step 0; step ids are 1-based"),
                            });
                        } else if *j >= step.index {
                            violations.push(Violation {
                                step: Some(step.index),
                                reason: format!("forward reference at step {}: slot {{{slot}}} references step {}", step.index, j),
                            });
                        }
                    }
                    PrereqRef::Condition(id) => {
                        if id.is_empty() {
                            violations.push(Violation {
                                step: Some(step.index),
                                reason: format!("slot {{{slot}}} has an empty condition id"),
                            });
                        } else if !self.conditions.contains_key(id) {
                            violations.push(Violation {
                                step: Some(step.index),
                                reason: format!("slot {{{slot}}} references unknown condition `{id}`"),
                            });
                        }
                    }
                }
            }
            for slot in 0..step.prerequisites.len() {
                let marker = format!("{{{slot}}}");
                let count = step.body_template.matches(&marker).count();
                if count != 1 {
                    violations.push(Violation {
                        step: Some(step.index),
                        reason: format!("body template contains {count} occurrences of slot {marker}, expected exactly 1"),
                    });
                }
            }
            if let Some(extra) = first_unexpected_slot(&step.body_template, step.prerequisites.len()) {
                violations.push(Violation {
                    step: Some(step.index),
                    reason: format!("body template references slot {{{extra}}} but the step has only {} prerequisites", step.prerequisites.len()),
                });
            }
            if step.result_phrase.is_empty() {
                violations.push(Violation {
                    step: Some(step.index),
                    reason: "result phrase is empty".into(),
                });
            } else if let Ok(text) = self.filled_step_text(step) {
                if !text.contains(&step.result_phrase) {
                    violations.push(Violation {
                        step: Some(step.index),
                        reason: format!("result phrase `{}` does not appear in the rendered step text", step.result_phrase),
                    });
                }
            }
        }
        // A template without an {answer} slot is tolerated as long as the
        // stored final answer is still extractable from the literal text.
        let sentence = self.rendered_answer_sentence();
        match crate::extract::extract(&sentence, self.final_answer.kind()) {
            Some(extracted) if extracted.matches(&self.final_answer) => {}
            Some(extracted) => violations.push(Violation {
                step: None,
                reason: format!(
                    "answer sentence extracts to {:?}, which does not match the stored final answer",
                    extracted
                ),
            }),
            None => violations.push(Violation {
                step: None,
                reason: "no answer is extractable from the rendered answer sentence".into(),
            }),
        }
        ValidationReport { violations }
    }

    /// Fills a step's template with the verbatim restatement of every
    /// prerequisite (exact-repeat form).
    pub fn filled_step_text(&self, step: &ReasoningStep) -> Result<String, GraphError> {
        let mut text = step.body_template.clone();
        for (slot, prereq) in step.prerequisites.iter().enumerate() {
            let fill = match prereq {
                PrereqRef::Condition(id) => {
                    self.conditions
                        .get(id)
                        .cloned()
                        .ok_or_else(|| GraphError::UnknownCondition {
                            step: step.index,
                            slot,
                            id: id.clone(),
                        })?
                }
                PrereqRef::StepResult(j) => self
                    .steps
                    .get(j.wrapping_sub(1))
                    .filter(|_| *j >= 1 && *j < step.index)
                    .map(|s| s.result_phrase.clone())
                    .ok_or(GraphError::BadStepRef {
                        step: step.index,
                        slot,
                        target: *j,
                    })?,
            };
            text = text.replacen(&format!("{{{slot}}}"), &fill, 1);
        }
        Ok(text)
    }

    /// The answer sentence with the `{answer}` slot filled.
    pub fn rendered_answer_sentence(&self) -> String {
        self.answer_sentence_template
            .replace(ANSWER_SLOT, &self.final_answer.display_text())
    }

    /// All step-to-step dependency edges `(source, target)`.
    fn step_result_edges(&self) -> Vec<(usize, usize)> {
        let mut edges = Vec::new();
        for step in &self.steps {
            for j in step.step_prereqs() {
                if j >= 1 && j < step.index {
                    edges.push((j, step.index));
                }
            }
        }
        edges.sort_by_key(|&(s, t)| (t, s));
        edges.dedup();
        edges
    }

    /// The residual edges: step-result dependencies `(j, i)` that skip at
    /// least one intermediate step (`i - j >= 2`). Condition recalls are
    /// not counted, matching how the placement ablation is defined over
    /// steps rather than edge kinds. Sorted ascending by (target, source).
    pub fn residual_edges(&self) -> Result<Vec<(usize, usize)>, GraphError> {
        let report = self.validate();
        if !report.is_valid() {
            return Err(GraphError::Invalid(report));
        }
        Ok(self
            .step_result_edges()
            .into_iter()
            .filter(|&(j, i)| i - j >= 2)
            .collect())
    }

    /// Largest step-to-step dependency distance, 0 when steps only use
    /// conditions.
    pub fn max_dependency_gap(&self) -> usize {
        self.step_result_edges()
            .iter()
            .map(|&(j, i)| i - j)
            .max()
            .unwrap_or(0)
    }

    /// Fraction of steps whose step-result prerequisites are a subset of
    /// `{i-1}`; 1.0 means a perfectly linear flow.
    pub fn linearity(&self) -> f64 {
        if self.steps.is_empty() {
            return 1.0;
        }
        let linear = self
            .steps
            .iter()
            .filter(|s| s.step_prereqs().all(|j| j + 1 == s.index))
            .count();
        linear as f64 / self.steps.len() as f64
    }
}

fn first_unexpected_slot(template: &str, n_slots: usize) -> Option<usize> {
    // Slots beyond the prerequisite list would silently survive filling.
    let mut idx = n_slots;
    while idx < n_slots + 64 {
        if template.contains(&format!("{{{idx}}}")) {
            return Some(idx);
        }
        idx += 1;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_chain(n: usize) -> ReasoningGraph {
        let steps = (1..=n)
            .map(|i| ReasoningStep {
                index: i,
                prerequisites: if i == 1 {
                    vec![]
                } else {
                    vec![PrereqRef::StepResult(i - 1)]
                },
                body_template: if i == 1 {
                    format!("Start with value {i}.")
                } else {
                    format!("From {{0}}, compute value {i}.")
                },
                result_phrase: format!("value {i}"),
                result_value: Some(StepValue::Num(i as f64)),
                cot_body: None,
                op: None,
            })
            .collect();
        ReasoningGraph {
            question_text: "chain question".into(),
            conditions: BTreeMap::new(),
            steps,
            final_answer: Answer::Numeric(n as f64),
            answer_sentence_template: "So the answer is {answer}.".into(),
        }
    }

    fn star_graph() -> ReasoningGraph {
        // Steps 1..4 independent, step 5 depends on all of them.
        let mut steps: Vec<ReasoningStep> = (1..=4)
            .map(|i| ReasoningStep {
                index: i,
                prerequisites: vec![],
                body_template: format!("Compute part {i}."),
                result_phrase: format!("part {i}"),
                result_value: Some(StepValue::Num(i as f64)),
                cot_body: None,
                op: None,
            })
            .collect();
        steps.push(ReasoningStep {
            index: 5,
            prerequisites: vec![
                PrereqRef::StepResult(1),
                PrereqRef::StepResult(2),
                PrereqRef::StepResult(3),
                PrereqRef::StepResult(4),
            ],
            body_template: "Combine {0}, {1}, {2} and {3} into the total 10.".into(),
            result_phrase: "total 10".into(),
            result_value: Some(StepValue::Num(10.0)),
            cot_body: Some("Combine everything into the total 10.".into()),
            op: None,
        });
        ReasoningGraph {
            question_text: "star question".into(),
            conditions: BTreeMap::new(),
            steps,
            final_answer: Answer::Numeric(10.0),
            answer_sentence_template: "So the answer is {answer}.".into(),
        }
    }

    #[test]
    fn single_step_graph_with_condition_is_valid() {
        let mut conditions = BTreeMap::new();
        conditions.insert("speed".to_string(), "20 km/hr".to_string());
        let g = ReasoningGraph {
            question_text: "How far at 20 km/hr for 2 hours?".into(),
            conditions,
            steps: vec![ReasoningStep {
                index: 1,
                prerequisites: vec![PrereqRef::Condition("speed".into())],
                body_template: "Travelling at {0} for 2 hours covers 40 km.".into(),
                result_phrase: "40 km".into(),
                result_value: Some(StepValue::Num(40.0)),
                cot_body: None,
                op: None,
            }],
            final_answer: Answer::Numeric(40.0),
            answer_sentence_template: "So the answer is {answer}.".into(),
        };
        assert!(g.validate().is_valid());
        assert_eq!(g.step_count(), 1);
        assert_eq!(g.residual_edges().unwrap(), vec![]);
        assert_eq!(g.max_dependency_gap(), 0);
    }

    #[test]
    fn forward_reference_is_reported_with_step_and_reason() {
        let mut g = linear_chain(3);
        g.steps[1].prerequisites = vec![PrereqRef::StepResult(3)];
        g.steps[1].body_template = "From {0}, compute value 2.".into();
        let report = g.validate();
        assert!(!report.is_valid());
        assert!(report
            .violations
            .iter()
            .any(|v| v.step == Some(2) && v.reason.contains("forward reference at step 2")));
    }

    #[test]
    fn unknown_condition_is_a_violation() {
        let mut g = linear_chain(2);
        g.steps[0].prerequisites = vec![PrereqRef::Condition("missing".into())];
        g.steps[0].body_template = "Start with {0}, giving value 1.".into();
        let report = g.validate();
        assert!(report
            .violations
            .iter()
            .any(|v| v.reason.contains("unknown condition `missing`")));
    }

    #[test]
    fn slot_count_mismatch_is_a_violation() {
        let mut g = linear_chain(2);
        g.steps[1].body_template = "No slot here, value 2.".into();
        let report = g.validate();
        assert!(report
            .violations
            .iter()
            .any(|v| v.reason.contains("expected exactly 1")));
    }

    #[test]
    fn linear_chain_has_no_residual_edges_and_gap_one() {
        let g = linear_chain(5);
        assert!(g.validate().is_valid());
        assert_eq!(g.residual_edges().unwrap(), vec![]);
        assert_eq!(g.max_dependency_gap(), 1);
        assert_eq!(g.linearity(), 1.0);
    }

    #[test]
    fn two_step_graph_with_condition_has_no_residuals() {
        let mut g = linear_chain(2);
        g.conditions.insert("c".into(), "seven".into());
        g.steps[1].prerequisites =
            vec![PrereqRef::StepResult(1), PrereqRef::Condition("c".into())];
        g.steps[1].body_template = "From {0} and {1}, compute value 2.".into();
        assert!(g.validate().is_valid());
        assert_eq!(g.residual_edges().unwrap(), vec![]);
    }

    #[test]
    fn star_graph_linearity_counts_only_skipping_steps() {
        let g = star_graph();
        assert!(g.validate().is_valid());
        assert_eq!(g.linearity(), 4.0 / 5.0);
        assert_eq!(
            g.residual_edges().unwrap(),
            vec![(1, 5), (2, 5), (3, 5)]
        );
        assert_eq!(g.max_dependency_gap(), 4);
    }

    #[test]
    fn residual_edges_rejects_invalid_graphs() {
        let mut g = linear_chain(3);
        g.steps[1].prerequisites = vec![PrereqRef::StepResult(3)];
        g.steps[1].body_template = "From {0}, compute value 2.".into();
        assert!(matches!(g.residual_edges(), Err(GraphError::Invalid(_))));
    }

    #[test]
    fn validate_is_idempotent() {
        let g = star_graph();
        assert_eq!(g.validate(), g.validate());
    }
}
