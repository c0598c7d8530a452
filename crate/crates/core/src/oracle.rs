//! Offline synthetic oracle for the residual-restatement hypothesis.
//!
//! Random integer-arithmetic task graphs with a controlled dependency-gap
//! distribution are solved by a "forgetful reasoner" that can only use a
//! prerequisite produced within the last `w` steps unless the prompt
//! rendering restates it at the consuming step. Restating prerequisites
//! therefore recovers solvability exactly where the window is too small,
//! which is the executable form of why restatement helps: placements
//! ordered by set inclusion give monotone solve rates, every task is
//! solvable under full placement, and restating only late steps beats
//! restating only early ones whenever the long gaps target late steps.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::answer::Answer;
use crate::compile::{select_residual_steps, Placement, RefStyle};
use crate::graph::{ArithOp, PrereqRef, ReasoningGraph, ReasoningStep, StepValue};

/// Bound on generated step values to keep arithmetic exact.
pub const VALUE_BOUND: i64 = 1_000_000;

/// A generated arithmetic task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTask {
    pub graph: ReasoningGraph,
    /// Multiset of step-to-step dependency gaps, ascending.
    pub gap_profile: Vec<usize>,
    pub seed: u64,
}

/// A reasoner that only remembers results from the last `window` steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForgetfulReasoner {
    pub window: usize,
}

impl ForgetfulReasoner {
    pub fn new(window: usize) -> Result<Self, OracleError> {
        if window == 0 {
            return Err(OracleError::BadWindow);
        }
        Ok(ForgetfulReasoner { window })
    }
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("reasoner window must be at least 1")]
    BadWindow,
    #[error("infeasible generator constraints: {0}")]
    Infeasible(String),
}

/// Generates a seeded random task graph.
///
/// Every step draws 1..=`max_fanin` prerequisites from the previous
/// `gap_ceiling` steps (and fresh question conditions), applies a stored
/// integer operation, and precomputes its value; |values| stays within
/// [`VALUE_BOUND`]. Deterministic per seed.
pub fn generate_task(
    n_steps: usize,
    max_fanin: usize,
    gap_ceiling: usize,
    seed: u64,
) -> Result<SyntheticTask, OracleError> {
    if n_steps == 0 {
        return Err(OracleError::Infeasible("n_steps must be at least 1".into()));
    }
    if max_fanin == 0 {
        return Err(OracleError::Infeasible("max_fanin must be at least 1".into()));
    }
    if n_steps > 1 && (gap_ceiling == 0 || gap_ceiling >= n_steps) {
        return Err(OracleError::Infeasible(format!(
            "gap_ceiling must satisfy 1 <= gap_ceiling < n_steps, got {gap_ceiling} for {n_steps} steps"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut conditions: BTreeMap<String, String> = BTreeMap::new();
    let mut condition_values: BTreeMap<String, i64> = BTreeMap::new();
    let mut steps: Vec<ReasoningStep> = Vec::with_capacity(n_steps);
    let mut values: Vec<i64> = Vec::with_capacity(n_steps);

    for index in 1..=n_steps {
        let fanin = rng.gen_range(1..=max_fanin);
        let window_start = index.saturating_sub(gap_ceiling).max(1);
        let mut prereqs: Vec<PrereqRef> = Vec::with_capacity(fanin);
        let mut operands: Vec<i64> = Vec::with_capacity(fanin);
        let mut used_steps: Vec<usize> = Vec::new();
        for _ in 0..fanin {
            let candidates: Vec<usize> = (window_start..index)
                .filter(|j| !used_steps.contains(j))
                .collect();
            let use_step = !candidates.is_empty() && rng.gen_bool(0.7);
            if use_step {
                let j = candidates[rng.gen_range(0..candidates.len())];
                used_steps.push(j);
                operands.push(values[j - 1]);
                prereqs.push(PrereqRef::StepResult(j));
            } else {
                let id = format!("c{}", conditions.len() + 1);
                let value = rng.gen_range(1..=9i64);
                conditions.insert(id.clone(), format!("{id} = {value}"));
                condition_values.insert(id.clone(), value);
                operands.push(value);
                prereqs.push(PrereqRef::Condition(id));
            }
        }
        let preferred = match rng.gen_range(0..3) {
            0 => ArithOp::Add,
            1 => ArithOp::Sub,
            _ => ArithOp::Mul,
        };
        // Fall back to ops that keep the value in bounds; dropping to a
        // single operand always succeeds.
        let (op, value) = [preferred, ArithOp::Add, ArithOp::Sub]
            .iter()
            .find_map(|op| {
                op.apply(&operands)
                    .filter(|v| v.abs() <= VALUE_BOUND)
                    .map(|v| (*op, v))
            })
            .unwrap_or_else(|| {
                operands.truncate(1);
                prereqs.truncate(1);
                (ArithOp::Add, operands[0])
            });
        let slots: Vec<String> = (0..prereqs.len()).map(|s| format!("{{{s}}}")).collect();
        let op_name = match op {
            ArithOp::Add => "sum",
            ArithOp::Sub => "difference",
            ArithOp::Mul => "product",
        };
        let result_phrase = format!("r{index} = {value}");
        let body_template = format!(
            "Step {index}: take the {op_name} of {} to get {result_phrase}.",
            slots.join(" and ")
        );
        steps.push(ReasoningStep {
            index,
            prerequisites: prereqs,
            body_template,
            result_phrase,
            result_value: Some(StepValue::Num(value as f64)),
            cot_body: Some(format!(
                "Step {index}: the {op_name} of the prerequisites is r{index} = {value}."
            )),
            op: Some(op),
        });
        values.push(value);
    }

    let final_value = *values.last().expect("n_steps >= 1");
    let condition_list = conditions
        .values()
        .cloned()
        .collect::<Vec<_>>()
        .join(", ");
    let graph = ReasoningGraph {
        question_text: format!(
            "Given {condition_list}, follow the {n_steps} arithmetic steps and report the final result."
        ),
        conditions,
        steps,
        final_answer: Answer::Numeric(final_value as f64),
        answer_sentence_template: "So the answer is {answer}.".to_string(),
    };
    let mut gap_profile: Vec<usize> = graph
        .steps
        .iter()
        .flat_map(|s| {
            let index = s.index;
            s.step_prereqs().map(move |j| index - j).collect::<Vec<_>>()
        })
        .collect();
    gap_profile.sort_unstable();
    Ok(SyntheticTask {
        graph,
        gap_profile,
        seed,
    })
}

/// Executes a task under a window-limited reasoner and a rendering
/// config.
///
/// A prerequisite value is available iff its source step lies within the
/// reasoner's window of the consuming step or the consuming step restates
/// its prerequisites under the placement; question conditions are always
/// available. Any unavailable prerequisite fails the whole task rather
/// than substituting a stale value, keeping the oracle exact. The
/// reference style is accepted because the rendering config carries it,
/// but availability does not depend on it: both styles restate.
pub fn simulate(
    task: &SyntheticTask,
    reasoner: ForgetfulReasoner,
    placement: Placement,
    _ref_style: RefStyle,
) -> bool {
    let n = task.graph.step_count();
    let restated = select_residual_steps(n, placement);
    for step in &task.graph.steps {
        let index = step.index;
        if restated.contains(&index) {
            continue;
        }
        for j in step.step_prereqs() {
            let available = j + reasoner.window >= index;
            if !available {
                return false;
            }
        }
    }
    // All prerequisites were available; replay the arithmetic and check
    // the final value against the stored gold.
    let mut values: Vec<i64> = Vec::with_capacity(n);
    for step in &task.graph.steps {
        let mut operands: Vec<i64> = Vec::with_capacity(step.prerequisites.len());
        for prereq in &step.prerequisites {
            match prereq {
                PrereqRef::StepResult(j) => operands.push(values[j - 1]),
                PrereqRef::Condition(id) => {
                    let Some(value) = task
                        .graph
                        .conditions
                        .get(id)
                        .and_then(|phrase| phrase.rsplit("= ").next())
                        .and_then(|s| s.trim().parse::<i64>().ok())
                    else {
                        return false;
                    };
                    operands.push(value);
                }
            }
        }
        let Some(op) = step.op else { return false };
        let Some(value) = op.apply(&operands) else {
            return false;
        };
        values.push(value);
    }
    let computed = *values.last().expect("n >= 1") as f64;
    Answer::Numeric(computed).matches(&task.graph.final_answer)
}

/// Mean of [`simulate`] over a task set.
pub fn solve_rate(
    tasks: &[SyntheticTask],
    reasoner: ForgetfulReasoner,
    placement: Placement,
    ref_style: RefStyle,
) -> f64 {
    if tasks.is_empty() {
        return 0.0;
    }
    let solved = tasks
        .iter()
        .filter(|t| simulate(t, reasoner, placement, ref_style))
        .count();
    solved as f64 / tasks.len() as f64
}

/// Generates `count` tasks with seeds `base_seed..base_seed+count`.
pub fn generate_tasks(
    count: usize,
    n_steps: usize,
    max_fanin: usize,
    gap_ceiling: usize,
    base_seed: u64,
) -> Result<Vec<SyntheticTask>, OracleError> {
    (0..count)
        .map(|i| generate_task(n_steps, max_fanin, gap_ceiling, base_seed + i as u64))
        .collect()
}
