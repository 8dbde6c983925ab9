//! Generate a synthetic corpus and save it as JSON and CSV.
//!
//! `cargo run --release --example synth_corpus -- [out_dir] [hard]`

use std::path::PathBuf;

use growl::graph::{build_graph, sample_stats, FeatureMode, Injection};
use growl::scene::{save_dataset, Format};
use growl::synth::{generate_corpus, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "synth-out".into()));
    let cfg = match args.next().as_deref() {
        Some("hard") => SynthConfig::hard(),
        _ => SynthConfig::default(),
    };
    let corpus = generate_corpus(&cfg)?;
    save_dataset(&corpus, &out.join("corpus.json"), Format::Json)?;
    save_dataset(&corpus, &out.join("corpus.csv"), Format::Csv)?;

    let graphs = corpus
        .scenes
        .iter()
        .map(|s| build_graph(s, FeatureMode::WithOrientation, Injection::FullNegative))
        .collect::<Result<Vec<_>, _>>()?;
    let stats = sample_stats(&graphs);
    let people: usize = corpus.scenes.iter().map(|s| s.individuals.len()).sum();
    let groups: usize = corpus
        .scenes
        .iter()
        .map(|s| s.groups.as_ref().map_or(0, Vec::len))
        .sum();
    println!("{} scenes, {people} people, {groups} groups", corpus.len());
    println!(
        "training pairs: {} positive, {} negative ({:.1}% positive)",
        stats.positives,
        stats.negatives,
        100.0 * stats.ratio
    );
    println!("wrote {}", out.display());
    Ok(())
}
