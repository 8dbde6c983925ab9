//! Ten independent shuffle/split/train/evaluate runs, reporting the spread.

use growl::evaluation::EvalConfig;
use growl::model::ModelConfig;
use growl::synth::{generate_corpus, SynthConfig};
use growl::trainer::{repeat_experiment, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = generate_corpus(&SynthConfig {
        n_scenes: 150,
        seed: 2,
        ..Default::default()
    })?;
    let cfg = TrainConfig {
        epochs: 40,
        ..Default::default()
    };
    let result = repeat_experiment(
        &corpus,
        10,
        0.6,
        &cfg,
        &ModelConfig::default(),
        &EvalConfig::default(),
        2,
    )?;
    print!("{}", result.to_csv());
    println!("mean F1 {:.4} +/- {:.4}", result.mean_f1, result.std_f1);
    Ok(())
}
