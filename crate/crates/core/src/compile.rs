//! Deterministic rendering of reasoning graphs into prompt text.
//!
//! Three strategies share one pipeline: `Standard` renders question and
//! answer sentence only, `Cot` renders every step in its linear phrasing,
//! and `ResPrompt` renders the steps selected by the placement rule with
//! their prerequisites restated inline. Rendering is a pure function of
//! (exemplars, config, target question): equal inputs give equal bytes
//! and therefore equal hashes.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::graph::{GraphError, PrereqRef, ReasoningGraph, ReasoningStep, StepValue};

/// Prompting strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Standard,
    Cot,
    #[serde(rename = "resprompt")]
    ResPrompt,
}

/// Which steps restate their prerequisites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    NoResidual,
    FirstHalf,
    SecondHalf,
    /// Every other step, starting at step 2.
    Uniform,
    /// Every other step, starting at step 1.
    UniformOdd,
    Full,
}

/// How a restated prerequisite is written.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefStyle {
    /// Repeat the source phrase with the exact same tokens.
    ExactRepeat,
    /// Define `X<k>` at the source step and reference `X<k>` later.
    SymbolicVariable,
}

/// Exemplar ordering inside the prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ordering {
    AsGiven,
    Ascending,
    Descending,
    Alternating,
    Random,
}

/// Kind of deliberate prompt corruption.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    /// Replace intermediate numeric results with different numbers.
    WrongNumber,
    /// Rewire residual prerequisites to a different earlier step.
    WrongLink,
}

/// A noise request; `count` must be at least 1 and no larger than the
/// number of eligible sites in the exemplar set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub count: usize,
}

impl NoiseSpec {
    pub fn new(kind: NoiseKind, count: usize) -> Result<Self, CompileError> {
        if count == 0 {
            return Err(CompileError::ZeroNoiseCount);
        }
        Ok(NoiseSpec { kind, count })
    }
}

/// Default header line of every prompt.
pub const DEFAULT_HEADER: &str = "Answer the following questions.";

/// Everything that determines rendered prompt bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptConfig {
    pub strategy: Strategy,
    #[serde(default = "default_placement")]
    pub placement: Placement,
    #[serde(default = "default_ref_style")]
    pub ref_style: RefStyle,
    #[serde(default = "default_ordering")]
    pub ordering: Ordering,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseSpec>,
    #[serde(default = "default_header")]
    pub header: String,
}

fn default_placement() -> Placement {
    Placement::Full
}
fn default_ref_style() -> RefStyle {
    RefStyle::ExactRepeat
}
fn default_ordering() -> Ordering {
    Ordering::AsGiven
}
fn default_header() -> String {
    DEFAULT_HEADER.to_string()
}

impl PromptConfig {
    pub fn new(strategy: Strategy) -> Self {
        PromptConfig {
            strategy,
            placement: default_placement(),
            ref_style: default_ref_style(),
            ordering: default_ordering(),
            seed: 0,
            noise: None,
            header: default_header(),
        }
    }
}

impl Default for PromptConfig {
    fn default() -> Self {
        PromptConfig::new(Strategy::ResPrompt)
    }
}

/// A fully rendered prompt plus its content hash and the byte range each
/// exemplar occupies within the text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub text: String,
    /// SHA-256 of the text bytes, hex encoded.
    pub hash: String,
    pub per_exemplar_spans: Vec<(usize, usize)>,
}

#[derive(Debug, Error)]
pub enum CompileError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("step {step} needs a cot_body: it references a non-adjacent step result and was asked to render without residuals")]
    MissingCotBody { step: usize },
    #[error("exemplar list is empty")]
    EmptyExemplars,
    #[error("noise count must be at least 1")]
    ZeroNoiseCount,
    #[error("no eligible site: requested {requested} {kind:?} perturbations but only {available} sites exist")]
    NotEnoughNoiseSites {
        kind: NoiseKind,
        requested: usize,
        available: usize,
    },
}

/// SHA-256 hex digest of a prompt text; the hash is a pure function of
/// the bytes.
pub fn prompt_hash(text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    hex_encode(&hasher.finalize())
}

fn hex_encode(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// The step indices that restate their prerequisites under a placement.
///
/// `FirstHalf` is steps `1..=ceil(n/2)` and `SecondHalf` the rest, so the
/// two halves partition the step range. `Uniform` is the even-indexed
/// steps; `UniformOdd` exposes the other phase of "every other step".
pub fn select_residual_steps(n_steps: usize, placement: Placement) -> BTreeSet<usize> {
    let half = n_steps.div_ceil(2);
    match placement {
        Placement::NoResidual => BTreeSet::new(),
        Placement::Full => (1..=n_steps).collect(),
        Placement::FirstHalf => (1..=half).collect(),
        Placement::SecondHalf => (half + 1..=n_steps).collect(),
        Placement::Uniform => (1..=n_steps).filter(|i| i % 2 == 0).collect(),
        Placement::UniformOdd => (1..=n_steps).filter(|i| i % 2 == 1).collect(),
    }
}

/// Steps whose result some later step references.
fn referenced_steps(graph: &ReasoningGraph) -> BTreeSet<usize> {
    let mut set = BTreeSet::new();
    for step in &graph.steps {
        for j in step.step_prereqs() {
            if j < step.index {
                set.insert(j);
            }
        }
    }
    set
}

/// Renders one step.
///
/// With residuals, each prerequisite slot is filled with the source's
/// verbatim phrase (exact repeat) or with `X<j>` (symbolic); under the
/// symbolic style a step whose result is referenced later also gets
/// `, denoted as X<i>` appended to the first occurrence of its result
/// phrase. Without residuals, a step that references a non-adjacent step
/// result renders its `cot_body` (an error when absent); all other steps
/// render identically in both modes.
pub fn render_step(
    graph: &ReasoningGraph,
    step: &ReasoningStep,
    with_residuals: bool,
    ref_style: RefStyle,
) -> Result<String, CompileError> {
    let needs_definition = match ref_style {
        RefStyle::SymbolicVariable => referenced_steps(graph),
        RefStyle::ExactRepeat => BTreeSet::new(),
    };
    render_step_inner(graph, step, with_residuals, ref_style, &needs_definition)
}

fn render_step_inner(
    graph: &ReasoningGraph,
    step: &ReasoningStep,
    with_residuals: bool,
    ref_style: RefStyle,
    needs_definition: &BTreeSet<usize>,
) -> Result<String, CompileError> {
    if !with_residuals {
        if step.has_distant_prereq() {
            return step
                .cot_body
                .clone()
                .ok_or(CompileError::MissingCotBody { step: step.index });
        }
        return Ok(graph.filled_step_text(step)?);
    }
    match ref_style {
        RefStyle::ExactRepeat => Ok(graph.filled_step_text(step)?),
        RefStyle::SymbolicVariable => {
            let mut text = step.body_template.clone();
            for (slot, prereq) in step.prerequisites.iter().enumerate() {
                let fill = match prereq {
                    PrereqRef::Condition(id) => graph
                        .conditions
                        .get(id)
                        .cloned()
                        .ok_or_else(|| GraphError::UnknownCondition {
                            step: step.index,
                            slot,
                            id: id.clone(),
                        })?,
                    PrereqRef::StepResult(j) => format!("X{j}"),
                };
                text = text.replacen(&format!("{{{slot}}}"), &fill, 1);
            }
            if needs_definition.contains(&step.index) {
                let definition = format!("{}, denoted as X{}", step.result_phrase, step.index);
                text = text.replacen(&step.result_phrase, &definition, 1);
            }
            Ok(text)
        }
    }
}

/// Renders one exemplar (question plus answer paragraph) under a config.
pub fn render_exemplar(graph: &ReasoningGraph, config: &PromptConfig) -> Result<String, CompileError> {
    let mut out = format!("Question: {}\nAnswer: ", graph.question_text);
    match config.strategy {
        Strategy::Standard => {}
        Strategy::Cot | Strategy::ResPrompt => {
            let residual_set = match config.strategy {
                Strategy::Cot => BTreeSet::new(),
                _ => select_residual_steps(graph.step_count(), config.placement),
            };
            // A symbol definition is only useful if some step that renders
            // with residuals actually references it.
            let needs_definition = match config.ref_style {
                RefStyle::SymbolicVariable => {
                    let mut set = BTreeSet::new();
                    for step in &graph.steps {
                        if residual_set.contains(&step.index) {
                            set.extend(step.step_prereqs().filter(|j| *j < step.index));
                        }
                    }
                    set
                }
                RefStyle::ExactRepeat => BTreeSet::new(),
            };
            for step in &graph.steps {
                let with_residuals = residual_set.contains(&step.index);
                let text =
                    render_step_inner(graph, step, with_residuals, config.ref_style, &needs_definition)?;
                out.push_str(&text);
                out.push(' ');
            }
        }
    }
    out.push_str(&graph.rendered_answer_sentence());
    Ok(out)
}

/// Reorders exemplars for the prompt. Sort-based orderings are stable by
/// step count (ties keep the given order); `Alternating` interleaves the
/// fewest-step exemplar with the most-step one, then second-fewest with
/// second-most, and so on; `Random` is a seeded permutation.
pub fn order_exemplars(
    exemplars: Vec<ReasoningGraph>,
    ordering: Ordering,
    seed: u64,
) -> Vec<ReasoningGraph> {
    match ordering {
        Ordering::AsGiven => exemplars,
        Ordering::Ascending => {
            let mut v = exemplars;
            v.sort_by_key(|g| g.step_count());
            v
        }
        Ordering::Descending => {
            let mut v = exemplars;
            v.sort_by_key(|g| std::cmp::Reverse(g.step_count()));
            v
        }
        Ordering::Alternating => {
            let mut v = exemplars;
            v.sort_by_key(|g| g.step_count());
            let mut out = Vec::with_capacity(v.len());
            let mut items: std::collections::VecDeque<ReasoningGraph> = v.into();
            let mut take_front = true;
            while let Some(g) = if take_front {
                items.pop_front()
            } else {
                items.pop_back()
            } {
                out.push(g);
                take_front = !take_front;
            }
            out
        }
        Ordering::Random => {
            let mut v = exemplars;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            v.shuffle(&mut rng);
            v
        }
    }
}

/// Applies a noise spec to a copy of the exemplar list.
///
/// `WrongNumber` picks intermediate steps (never the final step) carrying
/// a numeric result and rewrites the value, its result phrase, and its
/// body text to a different number. `WrongLink` picks residual
/// prerequisites (step references with gap >= 2) and rewires them to a
/// different, seeded-chosen earlier step. The answer sentence is never
/// modified and perturbed graphs still validate.
pub fn inject_noise(
    exemplars: &[ReasoningGraph],
    spec: &NoiseSpec,
    seed: u64,
) -> Result<Vec<ReasoningGraph>, CompileError> {
    if spec.count == 0 {
        return Err(CompileError::ZeroNoiseCount);
    }
    let mut out = exemplars.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6e6f_6973_65);
    match spec.kind {
        NoiseKind::WrongNumber => {
            let mut sites = Vec::new();
            for (gi, g) in out.iter().enumerate() {
                let n = g.step_count();
                for (si, step) in g.steps.iter().enumerate() {
                    let is_intermediate = step.index < n;
                    let numeric = matches!(step.result_value, Some(StepValue::Num(_)));
                    if is_intermediate && numeric {
                        sites.push((gi, si));
                    }
                }
            }
            let chosen = choose_sites(&mut rng, sites, spec, NoiseKind::WrongNumber)?;
            for (gi, si) in chosen {
                let step = &mut out[gi].steps[si];
                let old = match step.result_value {
                    Some(StepValue::Num(v)) => v,
                    _ => unreachable!("site filtered on numeric values"),
                };
                let delta = rng.gen_range(1..=9) as f64;
                let new = old + delta;
                let old_text = crate::answer::format_number(old);
                let new_text = crate::answer::format_number(new);
                step.result_value = Some(StepValue::Num(new));
                step.result_phrase = replace_number(&step.result_phrase, &old_text, &new_text);
                step.body_template = replace_number(&step.body_template, &old_text, &new_text);
            }
        }
        NoiseKind::WrongLink => {
            let mut sites = Vec::new();
            for (gi, g) in out.iter().enumerate() {
                for (si, step) in g.steps.iter().enumerate() {
                    for (slot, prereq) in step.prerequisites.iter().enumerate() {
                        if let PrereqRef::StepResult(j) = prereq {
                            if step.index >= *j + 2 {
                                sites.push((gi, si, slot));
                            }
                        }
                    }
                }
            }
            let chosen = choose_sites(&mut rng, sites, spec, NoiseKind::WrongLink)?;
            for (gi, si, slot) in chosen {
                let step = &mut out[gi].steps[si];
                let old = match step.prerequisites[slot] {
                    PrereqRef::StepResult(j) => j,
                    _ => unreachable!("site filtered on step prerequisites"),
                };
                let candidates: Vec<usize> =
                    (1..step.index).filter(|j| *j != old).collect();
                let new = candidates[rng.gen_range(0..candidates.len())];
                step.prerequisites[slot] = PrereqRef::StepResult(new);
            }
        }
    }
    Ok(out)
}

fn choose_sites<T: Clone>(
    rng: &mut ChaCha8Rng,
    mut sites: Vec<T>,
    spec: &NoiseSpec,
    kind: NoiseKind,
) -> Result<Vec<T>, CompileError> {
    if sites.len() < spec.count {
        return Err(CompileError::NotEnoughNoiseSites {
            kind,
            requested: spec.count,
            available: sites.len(),
        });
    }
    sites.shuffle(rng);
    sites.truncate(spec.count);
    Ok(sites)
}

/// Replaces standalone occurrences of a number (not embedded in a longer
/// digit run) so that e.g. replacing `75` leaves `175` alone.
fn replace_number(text: &str, old: &str, new: &str) -> String {
    let bytes = text.as_bytes();
    let mut out = String::with_capacity(text.len());
    let mut i = 0;
    while i < bytes.len() {
        if text[i..].starts_with(old) {
            let before_ok = i == 0 || !bytes[i - 1].is_ascii_digit();
            let after = i + old.len();
            let after_ok = after >= bytes.len()
                || (!bytes[after].is_ascii_digit() && bytes[after] != b'.')
                || (bytes[after] == b'.'
                    && (after + 1 >= bytes.len() || !bytes[after + 1].is_ascii_digit()));
            if before_ok && after_ok {
                out.push_str(new);
                i += old.len();
                continue;
            }
        }
        let ch = text[i..].chars().next().unwrap();
        out.push(ch);
        i += ch.len_utf8();
    }
    out
}

/// Renders the few-shot block: header, then each exemplar, separated by
/// exactly one blank line, ending with a newline. This is the format the
/// shipped golden prompt files use.
pub fn fewshot_block(
    exemplars: &[ReasoningGraph],
    config: &PromptConfig,
) -> Result<String, CompileError> {
    Ok(fewshot_parts(exemplars, config)?.0 + "\n")
}

fn fewshot_parts(
    exemplars: &[ReasoningGraph],
    config: &PromptConfig,
) -> Result<(String, Vec<(usize, usize)>), CompileError> {
    if exemplars.is_empty() {
        return Err(CompileError::EmptyExemplars);
    }
    let ordered = order_exemplars(exemplars.to_vec(), config.ordering, config.seed);
    let noised = match &config.noise {
        Some(spec) => inject_noise(&ordered, spec, config.seed)?,
        None => ordered,
    };
    let mut text = config.header.clone();
    let mut spans = Vec::with_capacity(noised.len());
    for graph in &noised {
        text.push_str("\n\n");
        let start = text.len();
        text.push_str(&render_exemplar(graph, config)?);
        spans.push((start, text.len()));
    }
    Ok((text, spans))
}

/// Assembles the full prompt for one target question: the few-shot block
/// followed by `Question: <target>` and a trailing `Answer: ` awaiting
/// generation. Deterministic for fixed inputs.
pub fn assemble_prompt(
    exemplars: &[ReasoningGraph],
    config: &PromptConfig,
    target_question: &str,
) -> Result<RenderedPrompt, CompileError> {
    let (mut text, per_exemplar_spans) = fewshot_parts(exemplars, config)?;
    text.push_str("\n\nQuestion: ");
    text.push_str(target_question);
    text.push_str("\nAnswer: ");
    let hash = prompt_hash(&text);
    Ok(RenderedPrompt {
        text,
        hash,
        per_exemplar_spans,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exemplars::shipped;
    use crate::graph::StepValue;
    use crate::ingest::DatasetId;
    use proptest::prelude::{any, prop_assert_eq, proptest};
    use std::collections::BTreeMap;

    fn tobias() -> ReasoningGraph {
        shipped(DatasetId::Gsm8k)[1].clone()
    }

    fn tina() -> ReasoningGraph {
        shipped(DatasetId::Gsm8k)[0].clone()
    }

    fn set(items: &[usize]) -> BTreeSet<usize> {
        items.iter().copied().collect()
    }

    #[test]
    fn placement_sets_follow_the_half_and_parity_rules() {
        assert_eq!(select_residual_steps(4, Placement::Full), set(&[1, 2, 3, 4]));
        assert_eq!(select_residual_steps(5, Placement::FirstHalf), set(&[1, 2, 3]));
        assert_eq!(select_residual_steps(5, Placement::SecondHalf), set(&[4, 5]));
        assert_eq!(select_residual_steps(6, Placement::Uniform), set(&[2, 4, 6]));
        assert_eq!(select_residual_steps(6, Placement::UniformOdd), set(&[1, 3, 5]));
        assert_eq!(select_residual_steps(3, Placement::NoResidual), set(&[]));
        // The two halves always partition the steps.
        for n in 1..=9 {
            let mut both = select_residual_steps(n, Placement::FirstHalf);
            both.extend(select_residual_steps(n, Placement::SecondHalf));
            assert_eq!(both, select_residual_steps(n, Placement::Full));
        }
    }

    #[test]
    fn tobias_step4_exact_repeat_restates_both_sources() {
        let graph = tobias();
        let text = render_step(&graph, &graph.steps[3], true, RefStyle::ExactRepeat).unwrap();
        assert!(text.contains("earned from his allowance"));
        assert!(text.contains("from mowing lawns"));
        assert!(text.contains("$15 (allowance) + $60 (mowing) = $75"));
    }

    #[test]
    fn tobias_step4_symbolic_uses_x2_and_x3() {
        let graph = tobias();
        let text = render_step(&graph, &graph.steps[3], true, RefStyle::SymbolicVariable).unwrap();
        assert!(text.contains("X2"), "{text}");
        assert!(text.contains("X3"), "{text}");
        assert!(!text.contains("earned from his allowance"));
        // Step 4's own result feeds step 5, so it defines its symbol.
        assert!(text.contains("$75, denoted as X4"), "{text}");
    }

    #[test]
    fn symbolic_definition_appears_at_the_defining_step() {
        let graph = tobias();
        let text = render_step(&graph, &graph.steps[1], true, RefStyle::SymbolicVariable).unwrap();
        assert!(text.contains("earned from his allowance, denoted as X2"), "{text}");
    }

    #[test]
    fn adjacent_only_steps_render_identically_with_and_without_residuals() {
        let graph = tobias();
        // Step 6 depends on step 5 (adjacent) and a condition.
        let with = render_step(&graph, &graph.steps[5], true, RefStyle::ExactRepeat).unwrap();
        let without = render_step(&graph, &graph.steps[5], false, RefStyle::ExactRepeat).unwrap();
        assert_eq!(with, without);
    }

    #[test]
    fn missing_cot_body_on_a_distant_step_is_an_error() {
        let mut graph = tobias();
        graph.steps[4].cot_body = None;
        let err = render_step(&graph, &graph.steps[4], false, RefStyle::ExactRepeat).unwrap_err();
        assert!(matches!(err, CompileError::MissingCotBody { step: 5 }));
    }

    #[test]
    fn tina_cot_exemplar_ends_with_the_answer_sentence() {
        let text = render_exemplar(&tina(), &PromptConfig::new(Strategy::Cot)).unwrap();
        assert!(text.ends_with("So the answer is 990."), "{text}");
    }

    #[test]
    fn standard_strategy_renders_question_and_answer_sentence_only() {
        let text = render_exemplar(&tobias(), &PromptConfig::new(Strategy::Standard)).unwrap();
        assert!(text.starts_with("Question: Tobias is buying"));
        assert!(text.ends_with("Answer: So the answer is 5."));
        assert!(!text.contains("allowance he earned"));
    }

    #[test]
    fn no_residual_placement_is_byte_identical_to_cot_on_every_shipped_set() {
        for dataset in DatasetId::ALL {
            let mut config = PromptConfig::new(Strategy::ResPrompt);
            config.placement = Placement::NoResidual;
            let cot = PromptConfig::new(Strategy::Cot);
            for graph in shipped(dataset) {
                let a = render_exemplar(graph, &config).unwrap();
                let b = render_exemplar(graph, &cot).unwrap();
                assert_eq!(a, b, "{dataset}");
            }
        }
    }

    #[test]
    fn full_exact_rendering_restates_every_residual_source_phrase() {
        let config = PromptConfig::new(Strategy::ResPrompt);
        for dataset in DatasetId::ALL {
            for graph in shipped(dataset) {
                for (source, target) in graph.residual_edges().unwrap() {
                    let rendered =
                        render_step(&graph.clone(), &graph.steps[target - 1], true, config.ref_style)
                            .unwrap();
                    let phrase = &graph.steps[source - 1].result_phrase;
                    assert!(
                        rendered.contains(phrase),
                        "{dataset}: step {target} does not restate `{phrase}` from step {source}"
                    );
                }
            }
        }
    }

    #[test]
    fn resprompt_rendering_is_strictly_longer_than_cot_when_residuals_exist() {
        let full = PromptConfig::new(Strategy::ResPrompt);
        let cot = PromptConfig::new(Strategy::Cot);
        for dataset in DatasetId::ALL {
            for graph in shipped(dataset) {
                if graph.residual_edges().unwrap().is_empty() {
                    continue;
                }
                let a = render_exemplar(graph, &full).unwrap();
                let b = render_exemplar(graph, &cot).unwrap();
                assert!(a.len() > b.len(), "{dataset}: {} <= {}", a.len(), b.len());
            }
        }
    }

    fn chain_graph(steps: usize) -> ReasoningGraph {
        let steps_vec = (1..=steps)
            .map(|i| crate::graph::ReasoningStep {
                index: i,
                prerequisites: if i == 1 {
                    vec![]
                } else {
                    vec![PrereqRef::StepResult(i - 1)]
                },
                body_template: if i == 1 {
                    format!("Start at value {i}.")
                } else {
                    format!("From {{0}}, step to value {i}.")
                },
                result_phrase: format!("value {i}"),
                result_value: Some(StepValue::Num(i as f64)),
                cot_body: None,
                op: None,
            })
            .collect();
        ReasoningGraph {
            question_text: format!("chain of {steps}"),
            conditions: BTreeMap::new(),
            steps: steps_vec,
            final_answer: crate::answer::Answer::Numeric(steps as f64),
            answer_sentence_template: "So the answer is {answer}.".into(),
        }
    }

    #[test]
    fn ordering_sorts_interleaves_and_replays_deterministically() {
        let exemplars: Vec<ReasoningGraph> = [2, 5, 3, 4].iter().map(|n| chain_graph(*n)).collect();
        let counts = |v: &[ReasoningGraph]| v.iter().map(|g| g.step_count()).collect::<Vec<_>>();

        assert_eq!(counts(&order_exemplars(exemplars.clone(), Ordering::Ascending, 0)), vec![2, 3, 4, 5]);
        assert_eq!(counts(&order_exemplars(exemplars.clone(), Ordering::Descending, 0)), vec![5, 4, 3, 2]);
        assert_eq!(counts(&order_exemplars(exemplars.clone(), Ordering::Alternating, 0)), vec![2, 5, 3, 4]);
        assert_eq!(counts(&order_exemplars(exemplars.clone(), Ordering::AsGiven, 0)), vec![2, 5, 3, 4]);
        let r1 = counts(&order_exemplars(exemplars.clone(), Ordering::Random, 7));
        let r2 = counts(&order_exemplars(exemplars, Ordering::Random, 7));
        assert_eq!(r1, r2);
    }

    #[test]
    fn stable_sort_keeps_tied_exemplars_in_given_order() {
        let mut a = chain_graph(3);
        a.question_text = "first".into();
        let mut b = chain_graph(3);
        b.question_text = "second".into();
        let sorted = order_exemplars(vec![a, b], Ordering::Ascending, 0);
        assert_eq!(sorted[0].question_text, "first");
        assert_eq!(sorted[1].question_text, "second");
    }

    #[test]
    fn wrong_link_rewires_a_residual_prerequisite_and_still_validates() {
        let graph = tobias();
        let spec = NoiseSpec::new(NoiseKind::WrongLink, 1).unwrap();
        let before: Vec<(usize, usize)> = graph.residual_edges().unwrap();
        let mut changed = false;
        for seed in 0..16 {
            let noised = inject_noise(&[graph.clone()], &spec, seed).unwrap();
            assert!(noised[0].validate().is_valid(), "seed {seed}");
            let after = noised[0].residual_edges().unwrap();
            if after != before {
                changed = true;
            }
            // Backward-edge constraint survives rewiring.
            assert!(noised[0]
                .steps
                .iter()
                .all(|s| s.step_prereqs().all(|j| j < s.index)));
        }
        assert!(changed, "no seed produced a different wiring");
    }

    #[test]
    fn wrong_number_changes_an_intermediate_value_and_its_phrases() {
        let graph = tobias();
        let spec = NoiseSpec::new(NoiseKind::WrongNumber, 1).unwrap();
        let noised = inject_noise(&[graph.clone()], &spec, 3).unwrap();
        assert!(noised[0].validate().is_valid());
        assert_ne!(noised[0], graph);
        // The answer sentence is never touched.
        assert_eq!(
            noised[0].rendered_answer_sentence(),
            graph.rendered_answer_sentence()
        );
        let differing: Vec<usize> = graph
            .steps
            .iter()
            .zip(noised[0].steps.iter())
            .filter(|(a, b)| a != b)
            .map(|(a, _)| a.index)
            .collect();
        assert_eq!(differing.len(), 1);
        assert!(differing[0] < graph.step_count(), "final step must not be perturbed");
    }

    #[test]
    fn wrong_number_on_a_single_step_exemplar_reports_no_eligible_site() {
        let single = chain_graph(1);
        let spec = NoiseSpec::new(NoiseKind::WrongNumber, 1).unwrap();
        let err = inject_noise(&[single], &spec, 0).unwrap_err();
        assert!(matches!(
            err,
            CompileError::NotEnoughNoiseSites { available: 0, .. }
        ));
    }

    #[test]
    fn zero_count_noise_is_rejected_at_construction() {
        assert!(matches!(
            NoiseSpec::new(NoiseKind::WrongNumber, 0),
            Err(CompileError::ZeroNoiseCount)
        ));
    }

    #[test]
    fn assemble_prompt_is_deterministic_and_spans_cover_exemplars() {
        let exemplars = shipped(DatasetId::Aqua).to_vec();
        let config = PromptConfig::new(Strategy::ResPrompt);
        let a = assemble_prompt(&exemplars, &config, "What is 2 + 2?").unwrap();
        let b = assemble_prompt(&exemplars, &config, "What is 2 + 2?").unwrap();
        assert_eq!(a.hash, b.hash);
        assert_eq!(a.text, b.text);
        assert_eq!(a.per_exemplar_spans.len(), exemplars.len());
        for (start, end) in &a.per_exemplar_spans {
            assert!(a.text[*start..*end].starts_with("Question: "));
        }
        assert!(a.text.ends_with("\n\nQuestion: What is 2 + 2?\nAnswer: "));
    }

    #[test]
    fn assemble_prompt_rejects_an_empty_exemplar_list() {
        let config = PromptConfig::new(Strategy::Cot);
        assert!(matches!(
            assemble_prompt(&[], &config, "q"),
            Err(CompileError::EmptyExemplars)
        ));
    }

    #[test]
    fn full_prompt_extends_the_fewshot_block() {
        let exemplars = shipped(DatasetId::Scone).to_vec();
        let config = PromptConfig::new(Strategy::ResPrompt);
        let block = fewshot_block(&exemplars, &config).unwrap();
        let prompt = assemble_prompt(&exemplars, &config, "target?").unwrap();
        assert_eq!(
            prompt.text,
            format!("{block}\nQuestion: target?\nAnswer: ")
        );
    }

    proptest! {
        #[test]
        fn every_ordering_is_a_permutation(counts in proptest::collection::vec(1usize..7, 1..8), mode in 0usize..5, seed in any::<u64>()) {
            let ordering = [Ordering::AsGiven, Ordering::Ascending, Ordering::Descending, Ordering::Alternating, Ordering::Random][mode];
            let exemplars: Vec<ReasoningGraph> = counts.iter().map(|n| chain_graph(*n)).collect();
            let ordered = order_exemplars(exemplars.clone(), ordering, seed);
            let mut before: Vec<String> = exemplars.iter().map(|g| g.question_text.clone()).collect();
            let mut after: Vec<String> = ordered.iter().map(|g| g.question_text.clone()).collect();
            before.sort();
            after.sort();
            prop_assert_eq!(before, after);
        }

        #[test]
        fn equal_configs_render_equal_bytes(seed in any::<u64>(), mode in 0usize..5) {
            let ordering = [Ordering::AsGiven, Ordering::Ascending, Ordering::Descending, Ordering::Alternating, Ordering::Random][mode];
            let exemplars = shipped(DatasetId::StrategyQa).to_vec();
            let config = PromptConfig {
                ordering,
                seed,
                ..PromptConfig::new(Strategy::ResPrompt)
            };
            let a = assemble_prompt(&exemplars, &config, "Is water wet?").unwrap();
            let b = assemble_prompt(&exemplars, &config, "Is water wet?").unwrap();
            prop_assert_eq!(a.hash, b.hash);
        }
    }
}
