//! Train on hard scenes and draw a few test frames with ground truth and
//! predicted links overlaid.
//!
//! `cargo run --release --example render_predictions -- [out_dir]`

use std::path::PathBuf;

use growl::io::write_atomic;
use growl::model::ModelConfig;
use growl::render::render_scene;
use growl::scene::split_dataset;
use growl::synth::{generate_corpus, SynthConfig};
use growl::trainer::{predict_dataset, train_on_scenes, TrainConfig, DEFAULT_THRESHOLD};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = PathBuf::from(
        std::env::args()
            .nth(1)
            .unwrap_or_else(|| "render-out".into()),
    );
    let corpus = generate_corpus(&SynthConfig {
        n_scenes: 120,
        seed: 4,
        ..SynthConfig::hard()
    })?;
    let (train, test) = split_dataset(&corpus, 0.6, 4)?;
    let cfg = TrainConfig {
        epochs: 60,
        seed: 4,
        ..Default::default()
    };
    let model = train_on_scenes(&train.scenes, &cfg, &ModelConfig::default())?.model;
    let preds = predict_dataset(&model, &test, DEFAULT_THRESHOLD)?;
    for (scene, pred) in test.scenes.iter().zip(&preds).take(5) {
        let path = out.join(format!("{}.svg", scene.frame_id));
        write_atomic(&path, render_scene(scene, Some(pred)).as_bytes())?;
        println!(
            "{} ({} predicted groups)",
            path.display(),
            pred.groups.len()
        );
    }
    Ok(())
}
