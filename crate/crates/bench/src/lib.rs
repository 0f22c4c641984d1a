//! Fixtures shared by the benchmarks.

use editnet_core::oracle::{label_example, LabeledExample, OracleConfig};
use editnet_core::synth::{generate, SynthConfig};
use editnet_core::{Example, LeadExtractor, SalienceAbstractor};

/// `count` synthetic examples with six-sentence documents.
pub fn corpus(count: usize) -> Vec<Example> {
    let config = SynthConfig {
        examples: count,
        clean: 4,
        ..SynthConfig::default()
    };
    generate(&config, &SalienceAbstractor::default())
        .expect("valid synth config")
        .into_iter()
        .map(|s| s.example)
        .collect()
}

pub fn labeled(example: &Example, k: usize) -> LabeledExample {
    label_example(
        example,
        &LeadExtractor { k },
        &SalienceAbstractor::default(),
        &OracleConfig::default(),
    )
    .expect("labelable example")
}
