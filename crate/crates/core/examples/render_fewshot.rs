//! Prints the rendered few-shot block for a dataset and strategy.
//!
//! Usage: render_fewshot <dataset> <standard|cot|resprompt>

use resprompt_core::compile::{fewshot_block, PromptConfig, Strategy};
use resprompt_core::exemplars;
use resprompt_core::ingest::DatasetId;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let dataset = DatasetId::parse(args.get(1).map(String::as_str).unwrap_or("gsm8k"))
        .expect("unknown dataset");
    let strategy = match args.get(2).map(String::as_str).unwrap_or("resprompt") {
        "standard" => Strategy::Standard,
        "cot" => Strategy::Cot,
        _ => Strategy::ResPrompt,
    };
    let config = PromptConfig::new(strategy);
    let block = fewshot_block(exemplars::shipped(dataset), &config).expect("render");
    print!("{block}");
}
