//! Training with and without negative pairs. Without them the classifier
//! only ever sees "linked" examples and links everyone.
//!
//! `cargo run --release --example negative_injection_ablation -- [n_scenes] [epochs]`

use growl::evaluation::EvalConfig;
use growl::model::ModelConfig;
use growl::scene::split_dataset;
use growl::synth::{generate_corpus, SynthConfig};
use growl::trainer::{fit_and_score, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<usize> = std::env::args()
        .skip(1)
        .map(|a| a.parse())
        .collect::<Result<_, _>>()?;
    let n_scenes = args.first().copied().unwrap_or(300);
    let epochs = args.get(1).copied().unwrap_or(50);

    let corpus = generate_corpus(&SynthConfig {
        n_scenes,
        seed: 1,
        ..Default::default()
    })?;
    let (train, test) = split_dataset(&corpus, 0.6, 1)?;
    for negative_injection in [true, false] {
        let cfg = TrainConfig {
            epochs,
            negative_injection,
            seed: 1,
            ..Default::default()
        };
        let (f1, rate) = fit_and_score(
            &train.scenes,
            &test,
            &cfg,
            &ModelConfig::default(),
            &EvalConfig::default(),
        )?;
        println!("negative injection {negative_injection:>5}: mean F1 {f1:.4}, edge-positive rate {rate:.4}");
    }
    Ok(())
}
