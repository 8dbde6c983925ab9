//! Position-only features versus position plus facing on the hard corpus,
//! where neighboring groups stand nearly shoulder to shoulder.
//!
//! `cargo run --release --example orientation_ablation -- [seeds] [epochs]`

use growl::evaluation::EvalConfig;
use growl::graph::FeatureMode;
use growl::model::ModelConfig;
use growl::scene::split_dataset;
use growl::synth::{generate_corpus, SynthConfig};
use growl::trainer::{fit_and_score, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<usize> = std::env::args()
        .skip(1)
        .map(|a| a.parse())
        .collect::<Result<_, _>>()?;
    let seeds = args.first().copied().unwrap_or(5) as u64;
    let epochs = args.get(1).copied().unwrap_or(100);

    let mut gains = Vec::new();
    for seed in 0..seeds {
        let corpus = generate_corpus(&SynthConfig {
            seed,
            ..SynthConfig::hard()
        })?;
        let (train, test) = split_dataset(&corpus, 0.6, seed)?;
        let cfg = TrainConfig {
            epochs,
            seed,
            ..Default::default()
        };
        let score = |feature_mode| {
            let mcfg = ModelConfig {
                feature_mode,
                ..Default::default()
            };
            fit_and_score(&train.scenes, &test, &cfg, &mcfg, &EvalConfig::default())
                .map(|(f1, _)| f1)
        };
        let with = score(FeatureMode::WithOrientation)?;
        let without = score(FeatureMode::PositionOnly)?;
        println!("seed {seed}: with orientation {with:.4}  position only {without:.4}");
        gains.push(with - without);
    }
    println!(
        "mean gain {:.4}",
        gains.iter().sum::<f64>() / gains.len() as f64
    );
    Ok(())
}
