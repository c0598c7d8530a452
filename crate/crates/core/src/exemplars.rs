//! The shipped few-shot exemplar sets, embedded at compile time.
//!
//! One JSON graph file per exemplar, grouped by dataset. SVAMP shares the
//! GSM8K exemplar set (the two benchmarks are prompted with the same
//! eight exemplars).

use once_cell::sync::Lazy;

use crate::graph::ReasoningGraph;
use crate::ingest::DatasetId;

macro_rules! embedded {
    ($($path:literal),+ $(,)?) => {
        &[$(include_str!(concat!("../assets/exemplars/", $path))),+]
    };
}

const GSM8K: &[&str] = embedded![
    "gsm8k/01_tina.json",
    "gsm8k/02_tobias.json",
    "gsm8k/03_brennan.json",
    "gsm8k/04_noah.json",
    "gsm8k/05_betty.json",
    "gsm8k/06_julie.json",
    "gsm8k/07_roque.json",
    "gsm8k/08_james.json",
];

const AQUA: &[&str] = embedded![
    "aqua/01_distance.json",
    "aqua/02_clock.json",
    "aqua/03_interest.json",
    "aqua/04_fair.json",
];

const MATHQA: &[&str] = embedded![
    "mathqa/01_hostel.json",
    "mathqa/02_train.json",
    "mathqa/03_solution.json",
    "mathqa/04_trader.json",
];

const SCONE: &[&str] = embedded!["scone/01_throw_out.json", "scone/02_pour_mix.json"];

const STRATEGYQA: &[&str] = embedded![
    "strategyqa/01_albany.json",
    "strategyqa/02_amnesia.json",
    "strategyqa/03_trucks.json",
    "strategyqa/04_tibia.json",
    "strategyqa/05_dandelion.json",
    "strategyqa/06_bond.json",
];

fn parse_all(sources: &[&str]) -> Vec<ReasoningGraph> {
    sources
        .iter()
        .map(|s| serde_json::from_str(s).expect("shipped exemplar parses"))
        .collect()
}

static SETS: Lazy<[Vec<ReasoningGraph>; 5]> = Lazy::new(|| {
    [
        parse_all(GSM8K),
        parse_all(AQUA),
        parse_all(MATHQA),
        parse_all(SCONE),
        parse_all(STRATEGYQA),
    ]
});

/// The shipped exemplar graphs for a dataset, in prompt order.
pub fn shipped(dataset: DatasetId) -> &'static [ReasoningGraph] {
    match dataset {
        DatasetId::Gsm8k | DatasetId::Svamp => &SETS[0],
        DatasetId::Aqua => &SETS[1],
        DatasetId::MathQa => &SETS[2],
        DatasetId::Scone => &SETS[3],
        DatasetId::StrategyQa => &SETS[4],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_shipped_exemplar_validates() {
        for dataset in DatasetId::ALL {
            for (i, graph) in shipped(dataset).iter().enumerate() {
                let report = graph.validate();
                assert!(
                    report.is_valid(),
                    "{dataset} exemplar {i} invalid:\n{report}"
                );
            }
        }
    }

    #[test]
    fn shipped_shot_counts_match_the_per_dataset_defaults() {
        for dataset in DatasetId::ALL {
            assert_eq!(shipped(dataset).len(), dataset.default_shots(), "{dataset}");
        }
    }

    #[test]
    fn every_scone_task_graph_has_five_steps() {
        for graph in shipped(DatasetId::Scone) {
            assert_eq!(graph.step_count(), 5);
        }
    }
}
