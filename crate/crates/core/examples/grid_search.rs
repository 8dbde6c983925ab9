//! Cross-validated search over embedding size and training length.
//!
//! The full default grid trains thousands of models; this runs a slice of it.

use growl::evaluation::EvalConfig;
use growl::model::ModelConfig;
use growl::synth::{generate_corpus, SynthConfig};
use growl::trainer::{grid_search, GridSpec, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = generate_corpus(&SynthConfig {
        n_scenes: 60,
        seed: 5,
        ..SynthConfig::hard()
    })?;
    let spec = GridSpec {
        embed_sizes: vec![2, 8, 20],
        epochs: vec![10, 30],
        folds: 5,
        repeats: 1,
        seed: 5,
    };
    let result = grid_search(
        &corpus.scenes,
        &spec,
        &TrainConfig::default(),
        &ModelConfig::default(),
        &EvalConfig::default(),
    )?;
    print!("{}", result.to_csv());
    println!(
        "best: embed_dim {} epochs {}",
        result.best_embed_dim, result.best_epochs
    );
    Ok(())
}
