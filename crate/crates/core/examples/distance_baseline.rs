//! Single-linkage clustering on distance alone, for comparison with the
//! learned detector. It copes with well separated groups and falls apart
//! when groups stand close together.

use growl::evaluation::{evaluate, EvalConfig};
use growl::grouping::baseline_distance_clustering;
use growl::synth::{generate_corpus, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for (label, cfg) in [
        ("default", SynthConfig::default()),
        ("hard", SynthConfig::hard()),
    ] {
        let corpus = generate_corpus(&SynthConfig {
            n_scenes: 200,
            seed: 3,
            ..cfg
        })?;
        for radius in [0.9, 1.35, 1.8] {
            let preds: Vec<_> = corpus
                .scenes
                .iter()
                .map(|s| (s.frame_id.clone(), baseline_distance_clustering(s, radius)))
                .collect();
            let report = evaluate(&preds, &corpus, &EvalConfig::default())?;
            println!(
                "{label:>7} corpus, radius {radius:.2}: mean F1 {:.4}",
                report.mean_f1
            );
        }
    }
    Ok(())
}
