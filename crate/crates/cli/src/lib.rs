//! Command implementations behind the `resprompt` binary.
//!
//! Subcommands: `ingest` (normalize a benchmark file), `render` (write a
//! few-shot prompt file), `eval` (run questions against an endpoint and
//! score them), `report` (print or compare run reports), `simulate`
//! (forgetful-reasoner placement sweeps), and `cache` (stats/gc). All
//! randomness flows from the single `--seed` flag.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering as AtomicOrdering};
use std::sync::Mutex;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use resprompt_core::client::{
    CannedTransport, CompletionCache, CompletionClient, DecodeParams, HttpTransport, Transport,
};
use resprompt_core::compile::{
    assemble_prompt, fewshot_block, prompt_hash, NoiseKind, NoiseSpec, Placement,
    PromptConfig, RefStyle, Strategy,
};
use resprompt_core::exemplars;
use resprompt_core::extract::extract;
use resprompt_core::graph::ReasoningGraph;
use resprompt_core::ingest::{
    self, bucket_distribution, from_jsonl, load_with_options, subsample, DatasetId, IngestOptions,
    QuestionRecord,
};
use resprompt_core::metrics::{self, CostCounters, EvalRecord, RunReport};
use resprompt_core::oracle::{generate_tasks, solve_rate, ForgetfulReasoner};

pub mod args;

pub use args::{CacheAction, Cli, Command};

/// Everything needed to reproduce a run: config snapshot, prompt hash,
/// code version, and timestamps. A manifest plus the cache contents and
/// dataset files fully determines the report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub dataset: DatasetId,
    pub model: String,
    pub strategy: Strategy,
    pub config: PromptConfig,
    pub decode: DecodeParams,
    pub shots: usize,
    pub questions_file: String,
    pub question_count: usize,
    pub sample_seed: u64,
    /// SHA-256 of the rendered few-shot block shared by every prompt.
    pub fewshot_sha256: String,
    /// Deterministic hash of the config snapshot; names the run directory.
    pub manifest_hash: String,
    pub endpoint: String,
    pub endpoint_calls: u64,
    pub code_version: String,
    pub created_unix: u64,
}

fn parse_dataset(name: &str) -> Result<DatasetId> {
    DatasetId::parse(name).ok_or_else(|| anyhow!("unknown dataset `{name}`"))
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest(a) => cmd_ingest(a),
        Command::Render(a) => cmd_render(a).map(|_| ()),
        Command::Eval(a) => cmd_eval(a).map(|_| ()),
        Command::Report(a) => cmd_report(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Cache(a) => cmd_cache(a),
    }
}

// --- ingest -----------------------------------------------------------------

pub fn cmd_ingest(args: args::IngestArgs) -> Result<()> {
    let dataset = parse_dataset(&args.dataset)?;
    let options = IngestOptions {
        aqua_steps: args.steps.clone(),
    };
    let mut records = load_with_options(dataset, &args.input, &options)?;
    println!("loaded {} records from {}", records.len(), args.input.display());
    if let Some(n) = args.subsample {
        records = subsample(&records, n, args.seed)?;
        println!("subsampled to {} records (seed {})", records.len(), args.seed);
    }
    let missing = records.iter().filter(|r| r.step_count.is_none()).count();
    if missing > 0 {
        eprintln!(
            "warning: {missing} records lack step counts (no annotation sidecar); bucket breakdowns will skip them"
        );
    }
    let dist = bucket_distribution(&records);
    if !dist.is_empty() {
        let line = dist
            .iter()
            .map(|(b, pct)| format!("{b}: {pct:.1}%"))
            .collect::<Vec<_>>()
            .join("  ");
        println!("step buckets: {line}");
    }
    if let Some(parent) = args.output.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(&args.output, ingest::to_jsonl(&records))?;
    println!("wrote {}", args.output.display());
    Ok(())
}

// --- render -----------------------------------------------------------------

fn build_config(common: &args::PromptFlags) -> Result<PromptConfig> {
    let noise = match (&common.noise, common.noise_count) {
        (None, _) => None,
        (Some(kind), count) => {
            let kind = match kind.as_str() {
                "wrong-number" => NoiseKind::WrongNumber,
                "wrong-link" => NoiseKind::WrongLink,
                other => bail!("unknown noise kind `{other}` (wrong-number|wrong-link)"),
            };
            Some(NoiseSpec::new(kind, count)?)
        }
    };
    Ok(PromptConfig {
        strategy: common.strategy()?,
        placement: common.placement()?,
        ref_style: common.ref_style()?,
        ordering: common.ordering()?,
        seed: common.seed,
        noise,
        header: common.header.clone(),
    })
}

fn select_exemplars(dataset: DatasetId, shots: Option<usize>) -> Result<Vec<ReasoningGraph>> {
    let all = exemplars::shipped(dataset);
    let shots = shots.unwrap_or(all.len());
    if shots == 0 || shots > all.len() {
        bail!(
            "{dataset} ships {} exemplars; --shots must be between 1 and {}",
            all.len(),
            all.len()
        );
    }
    Ok(all[..shots].to_vec())
}

pub fn cmd_render(args: args::RenderArgs) -> Result<PathBuf> {
    let dataset = parse_dataset(&args.dataset)?;
    let config = build_config(&args.prompt)?;
    let shot_list = select_exemplars(dataset, args.shots)?;
    let block = fewshot_block(&shot_list, &config)?;
    let hash = prompt_hash(&block);
    let out = args.out.unwrap_or_else(|| {
        PathBuf::from(format!(
            "prompts/{}_{}_{}shot.txt",
            dataset,
            args.prompt.strategy.to_lowercase(),
            shot_list.len()
        ))
    });
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(&out, &block)?;
    println!("{}  sha256:{}", out.display(), hash);
    Ok(out)
}

// --- eval -------------------------------------------------------------------

fn build_transport(endpoint: Option<&str>) -> Result<(Box<dyn Transport>, String)> {
    let spec = match endpoint {
        Some(s) => s.to_string(),
        None => std::env::var("ENDPOINT_URL")
            .context("no --endpoint flag and ENDPOINT_URL is unset")?,
    };
    if let Some(path) = spec.strip_prefix("mock:") {
        let transport = CannedTransport::from_file(Path::new(path))?;
        let desc = transport.describe();
        Ok((Box::new(transport), desc))
    } else {
        let api_key = std::env::var("ENDPOINT_API_KEY").ok();
        let transport = HttpTransport::new(spec.clone(), api_key);
        let desc = transport.describe();
        Ok((Box::new(transport), desc))
    }
}

/// Stable hash of the reproducible part of a run configuration; names the
/// run directory so reruns of the same setup resume in place.
fn config_hash(
    dataset: DatasetId,
    model: &str,
    config: &PromptConfig,
    decode: &DecodeParams,
    shots: usize,
    questions_file: &str,
) -> String {
    let snapshot = serde_json::json!({
        "dataset": dataset,
        "model": model,
        "config": config,
        "decode": decode,
        "shots": shots,
        "questions": questions_file,
    });
    prompt_hash(&snapshot.to_string())[..12].to_string()
}

pub struct EvalOutcome {
    pub run_dir: PathBuf,
    pub report: RunReport,
    pub endpoint_calls: u64,
}

pub fn cmd_eval(args: args::EvalArgs) -> Result<EvalOutcome> {
    let dataset = parse_dataset(&args.dataset)?;
    let config = build_config(&args.prompt)?;
    let exemplar_list = select_exemplars(dataset, args.shots)?;

    let questions_text = fs::read_to_string(&args.questions)
        .with_context(|| format!("reading questions file {}", args.questions.display()))?;
    let mut questions = from_jsonl(&questions_text, &args.questions.display().to_string())?;
    if let Some(limit) = args.limit {
        questions.truncate(limit);
    }
    if questions.is_empty() {
        bail!("no questions to evaluate");
    }

    let decode = match args.self_consistency {
        Some(paths) => DecodeParams {
            max_new_tokens: args.max_new_tokens,
            ..DecodeParams::self_consistency(paths)
        },
        None => DecodeParams {
            max_new_tokens: args.max_new_tokens,
            ..DecodeParams::greedy()
        },
    };

    let hash12 = config_hash(
        dataset,
        &args.model,
        &config,
        &decode,
        exemplar_list.len(),
        &args.questions.display().to_string(),
    );
    let run_dir = args
        .run_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("runs").join(&hash12));
    fs::create_dir_all(&run_dir)?;
    let cache_dir = args.cache_dir.clone().unwrap_or_else(|| PathBuf::from("cache"));

    let (transport, endpoint_desc) = build_transport(args.endpoint.as_deref())?;
    let cache = CompletionCache::open(&cache_dir)?;
    let client = CompletionClient::new(transport, cache).with_concurrency(args.workers);

    let fewshot = fewshot_block(&exemplar_list, &config)?;
    let fewshot_sha256 = prompt_hash(&fewshot);

    let records = eval_questions(
        &client,
        &exemplar_list,
        &config,
        &decode,
        &args.model,
        &questions,
        args.workers.max(1),
    )?;

    let report = RunReport::build(&records)?;
    fs::write(run_dir.join("records.jsonl"), records_jsonl(&records))?;
    fs::write(
        run_dir.join("report.json"),
        serde_json::to_string_pretty(&report)? + "\n",
    )?;
    fs::write(run_dir.join("report.md"), render_report_md(&report))?;
    let manifest = RunManifest {
        dataset,
        model: args.model.clone(),
        strategy: config.strategy,
        config: config.clone(),
        decode,
        shots: exemplar_list.len(),
        questions_file: args.questions.display().to_string(),
        question_count: questions.len(),
        sample_seed: args.prompt.seed,
        fewshot_sha256,
        manifest_hash: hash12.clone(),
        endpoint: endpoint_desc,
        endpoint_calls: client.network_calls(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        created_unix: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    fs::write(
        run_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;

    println!(
        "evaluated {} questions: accuracy {:.4} ({} endpoint calls, run dir {})",
        report.total,
        report.accuracy,
        client.network_calls(),
        run_dir.display()
    );
    Ok(EvalOutcome {
        run_dir,
        report,
        endpoint_calls: client.network_calls(),
    })
}

/// Fans per-question work out to a bounded worker pool; results are
/// collected by question index so output order never depends on thread
/// scheduling, and all file writes happen afterwards on one thread.
#[allow(clippy::too_many_arguments)]
fn eval_questions(
    client: &CompletionClient,
    exemplar_list: &[ReasoningGraph],
    config: &PromptConfig,
    decode: &DecodeParams,
    model: &str,
    questions: &[QuestionRecord],
    workers: usize,
) -> Result<Vec<EvalRecord>> {
    let slots: Vec<Mutex<Option<EvalRecord>>> =
        questions.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = workers.min(questions.len()).max(1);
    std::thread::scope(|scope| -> Result<()> {
        let mut handles = Vec::new();
        for _ in 0..workers {
            handles.push(scope.spawn(|| -> Result<()> {
                loop {
                    let idx = next.fetch_add(1, AtomicOrdering::Relaxed);
                    if idx >= questions.len() {
                        return Ok(());
                    }
                    let record =
                        eval_one(client, exemplar_list, config, decode, model, &questions[idx])?;
                    *slots[idx].lock().unwrap() = Some(record);
                }
            }));
        }
        for handle in handles {
            handle.join().map_err(|_| anyhow!("worker panicked"))??;
        }
        Ok(())
    })?;
    Ok(slots
        .into_iter()
        .map(|slot| slot.into_inner().unwrap().expect("all slots filled"))
        .collect())
}

fn eval_one(
    client: &CompletionClient,
    exemplar_list: &[ReasoningGraph],
    config: &PromptConfig,
    decode: &DecodeParams,
    model: &str,
    question: &QuestionRecord,
) -> Result<EvalRecord> {
    let prompt = assemble_prompt(exemplar_list, config, &question.prompt_text())?;
    let completions = match client.complete(&prompt, decode, model) {
        Ok(records) => records,
        Err(err) => {
            // Endpoint failures are per-question data; the run continues.
            return Ok(EvalRecord {
                question_id: question.question_id.clone(),
                prompt_hash: prompt.hash.clone(),
                completions: vec![],
                extracted: None,
                gold: question.gold.clone(),
                correct: false,
                step_count: question.step_count,
                auto_error: Some(metrics::AutoError::NotExtracted),
                manual_label: None,
                endpoint_error: Some(err.to_string()),
                cost: CostCounters::for_texts(&prompt.text, std::iter::empty()),
            });
        }
    };
    let answers: Vec<_> = completions
        .iter()
        .map(|c| extract(&c.text, question.answer_kind))
        .collect();
    let voted = metrics::majority_vote(&answers);
    let correct = voted
        .as_ref()
        .map(|a| a.matches(&question.gold))
        .unwrap_or(false);
    let first_text = completions.first().map(|c| c.text.as_str()).unwrap_or("");
    let reached_cap = completions
        .first()
        .and_then(|c| c.usage)
        .map(|u| u.completion_tokens >= decode.max_new_tokens as u64)
        .unwrap_or(false);
    let auto_error = metrics::categorize(correct, voted.as_ref(), first_text, reached_cap);
    let mut cost = CostCounters::for_texts(&prompt.text, completions.iter().map(|c| c.text.as_str()));
    cost.endpoint_usage = completions.first().and_then(|c| c.usage);
    Ok(EvalRecord {
        question_id: question.question_id.clone(),
        prompt_hash: prompt.hash.clone(),
        completions: completions.into_iter().map(|c| c.text).collect(),
        extracted: voted,
        gold: question.gold.clone(),
        correct,
        step_count: question.step_count,
        auto_error,
        manual_label: None,
        endpoint_error: None,
        cost,
    })
}

fn records_jsonl(records: &[EvalRecord]) -> String {
    let mut out = String::new();
    for record in records {
        out.push_str(&serde_json::to_string(record).expect("record serializes"));
        out.push('\n');
    }
    out
}

fn render_report_md(report: &RunReport) -> String {
    let mut out = String::new();
    out.push_str("| metric | value |\n|---|---|\n");
    out.push_str(&format!("| questions | {} |\n", report.total));
    out.push_str(&format!("| accuracy | {:.4} |\n", report.accuracy));
    for (bucket, acc) in &report.per_bucket_accuracy {
        let count = report.per_bucket_counts.get(bucket).copied().unwrap_or(0);
        out.push_str(&format!("| accuracy @ {bucket} steps (n={count}) | {acc:.4} |\n"));
    }
    out.push_str(&format!(
        "| errors (repetition / not-extracted / wrong-answer) | {} / {} / {} |\n",
        report.errors.repetition, report.errors.not_extracted, report.errors.wrong_answer
    ));
    out.push_str(&format!(
        "| prompt ws tokens | {} |\n| completion ws tokens | {} |\n",
        report.cost.prompt_ws_tokens, report.cost.completion_ws_tokens
    ));
    if let Some(baseline) = &report.baseline {
        out.push_str(&format!(
            "| vs {} | {:+.2} points, {:+.2}% relative |\n",
            baseline.baseline_name, baseline.point_gain, baseline.relative_gain_pct
        ));
    }
    out
}

// --- report -----------------------------------------------------------------

fn load_records(run_dir: &Path) -> Result<Vec<EvalRecord>> {
    let path = run_dir.join("records.jsonl");
    let text = fs::read_to_string(&path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        records.push(
            serde_json::from_str(line)
                .with_context(|| format!("{}:{}: malformed record", path.display(), i + 1))?,
        );
    }
    Ok(records)
}

pub fn cmd_report(args: args::ReportArgs) -> Result<()> {
    let records = load_records(&args.run)?;
    let mut report = RunReport::build(&records)?;
    if let Some(baseline_dir) = &args.baseline {
        let baseline_records = load_records(baseline_dir)?;
        let baseline_report = RunReport::build(&baseline_records)?;
        report = report.against_baseline(&baseline_dir.display().to_string(), &baseline_report);
        let costs = metrics::cost_report(&records, &baseline_records)?;
        println!(
            "cost ratios vs baseline: prompt ws {:.3}, completion ws {:.3}, combined ws {:.3}{}",
            costs.prompt_ws_tokens_ratio,
            costs.completion_ws_tokens_ratio,
            costs.combined_ws_tokens_ratio,
            costs
                .combined_endpoint_tokens_ratio
                .map(|r| format!(", combined endpoint {r:.3}"))
                .unwrap_or_default()
        );
        fs::write(
            args.run.join("comparison.json"),
            serde_json::to_string_pretty(&serde_json::json!({
                "report": report,
                "cost": costs,
            }))? + "\n",
        )?;
    }
    print!("{}", render_report_md(&report));
    Ok(())
}

// --- simulate -----------------------------------------------------------------

const SWEEP_PLACEMENTS: [(Placement, &str); 5] = [
    (Placement::NoResidual, "no_residual"),
    (Placement::FirstHalf, "first_half"),
    (Placement::SecondHalf, "second_half"),
    (Placement::Uniform, "uniform"),
    (Placement::Full, "full"),
];

pub fn cmd_simulate(args: args::SimulateArgs) -> Result<()> {
    let windows: Vec<usize> = args
        .windows
        .split(',')
        .map(|w| w.trim().parse().context("bad --windows list"))
        .collect::<Result<_>>()?;
    let tasks = generate_tasks(args.tasks, args.steps, args.fanin, args.gap_ceiling, args.seed)?;
    let mut csv = String::from("window,tasks,steps,fanin,gap_ceiling,seed,no_residual,first_half,second_half,uniform,full\n");
    for &window in &windows {
        let reasoner = ForgetfulReasoner::new(window)?;
        let mut rates = Vec::new();
        for (placement, _) in SWEEP_PLACEMENTS {
            rates.push(solve_rate(&tasks, reasoner, placement, RefStyle::ExactRepeat));
        }
        let [none, first, second, uniform, full] = rates[..] else {
            unreachable!()
        };
        // The availability rule makes these orderings structural; a
        // violation means the simulator is broken.
        if !(none <= first + 1e-12 && none <= second + 1e-12 && second <= full + 1e-12
            && first <= full + 1e-12 && uniform <= full + 1e-12 && (full - 1.0).abs() < 1e-12)
        {
            bail!("dominance ordering violated at window {window}: {rates:?}");
        }
        csv.push_str(&format!(
            "{window},{},{},{},{},{},{none},{first},{second},{uniform},{full}\n",
            args.tasks, args.steps, args.fanin, args.gap_ceiling, args.seed
        ));
    }
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(&args.out, &csv)?;
    println!("wrote {} ({} windows x {} tasks)", args.out.display(), windows.len(), args.tasks);
    Ok(())
}

// --- cache -----------------------------------------------------------------

pub fn cmd_cache(args: args::CacheArgs) -> Result<()> {
    let cache = CompletionCache::open(&args.cache_dir)?;
    match args.action {
        CacheAction::Stats => {
            let stats = cache.stats();
            println!(
                "entries: {}  file bytes: {}  corrupt lines skipped: {}",
                stats.entries, stats.file_bytes, stats.corrupt_lines
            );
        }
        CacheAction::Gc => {
            let stats = cache.gc()?;
            println!(
                "compacted: entries: {}  file bytes: {}",
                stats.entries, stats.file_bytes
            );
        }
    }
    Ok(())
}
