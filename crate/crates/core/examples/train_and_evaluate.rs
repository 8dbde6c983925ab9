//! Generate a synthetic corpus, split it, train, and report test F1.
//!
//! `cargo run --release --example train_and_evaluate -- [n_scenes] [epochs] [seed]`

use growl::evaluation::{evaluate, EvalConfig};
use growl::model::ModelConfig;
use growl::scene::split_dataset;
use growl::synth::{generate_corpus, SynthConfig};
use growl::trainer::{
    edge_positive_rate, predict_dataset, prediction_group_sets, train_on_scenes, TrainConfig,
    DEFAULT_THRESHOLD,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<u64> = std::env::args()
        .skip(1)
        .map(|a| a.parse())
        .collect::<Result<_, _>>()?;
    let n_scenes = args.first().copied().unwrap_or(500) as usize;
    let epochs = args.get(1).copied().unwrap_or(100) as usize;
    let seed = args.get(2).copied().unwrap_or(0);

    let corpus = generate_corpus(&SynthConfig {
        n_scenes,
        seed,
        ..Default::default()
    })?;
    let (train, test) = split_dataset(&corpus, 0.6, seed)?;
    let cfg = TrainConfig {
        epochs,
        seed,
        ..Default::default()
    };
    let outcome = train_on_scenes(&train.scenes, &cfg, &ModelConfig::default())?;
    for log in outcome.trace.iter().step_by((epochs / 10).max(1)) {
        println!("epoch {:>4}  loss {:.5}", log.epoch, log.mean_loss);
    }
    let preds = predict_dataset(&outcome.model, &test, DEFAULT_THRESHOLD)?;
    let report = evaluate(
        &prediction_group_sets(&preds),
        &test,
        &EvalConfig::default(),
    )?;
    println!(
        "test scenes {}  mean F1 {:.4} (std {:.4})  edge-positive rate {:.4}",
        test.len(),
        report.mean_f1,
        report.std_f1,
        edge_positive_rate(&preds)
    );
    Ok(())
}
