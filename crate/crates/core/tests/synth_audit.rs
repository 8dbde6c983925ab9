mod common;

use growl::evaluation::{evaluate, EvalConfig};
use growl::graph::{effort_angle, pair_distance};
use growl::grouping::{baseline_distance_clustering, GroupSet};
use growl::scene::{Dataset, Individual, Scene};
use growl::synth::{generate_corpus, SynthConfig};

/// Group label per individual; singletons get `None`.
fn membership(s: &Scene) -> Vec<Option<usize>> {
    let groups = s.groups.as_ref().unwrap();
    s.individuals
        .iter()
        .map(|i| groups.iter().position(|g| g.contains(&i.id)))
        .collect()
}

fn centroid(members: &[&Individual]) -> (f64, f64) {
    let n = members.len() as f64;
    (
        members.iter().map(|i| i.x).sum::<f64>() / n,
        members.iter().map(|i| i.y).sum::<f64>() / n,
    )
}

/// Group centers and lone individuals, the points the generator keeps apart.
fn anchors(s: &Scene) -> Vec<(f64, f64)> {
    let labels = membership(s);
    let groups = s.groups.as_ref().unwrap();
    let mut out: Vec<(f64, f64)> = (0..groups.len())
        .map(|g| {
            let members: Vec<&Individual> = s
                .individuals
                .iter()
                .zip(&labels)
                .filter(|(_, l)| **l == Some(g))
                .map(|(i, _)| i)
                .collect();
            centroid(&members)
        })
        .collect();
    out.extend(
        s.individuals
            .iter()
            .zip(&labels)
            .filter(|(_, l)| l.is_none())
            .map(|(i, _)| (i.x, i.y)),
    );
    out
}

fn min_anchor_gap(s: &Scene) -> f64 {
    let a = anchors(s);
    let mut best = f64::INFINITY;
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            best = best.min((a[i].0 - a[j].0).hypot(a[i].1 - a[j].1));
        }
    }
    best
}

fn jitter_free(base: SynthConfig) -> SynthConfig {
    SynthConfig {
        position_jitter: 0.0,
        orientation_jitter: 0.0,
        ..base
    }
}

#[test]
fn default_corpus_passes_validation_and_separation_audit() {
    let cfg = SynthConfig {
        seed: 3,
        ..Default::default()
    };
    let ds = generate_corpus(&cfg).unwrap();
    assert_eq!(ds.len(), 500);
    ds.validate().unwrap();
    for s in &ds.scenes {
        // centroids of jittered members wander by a few jitter widths at most
        assert!(
            min_anchor_gap(s) >= cfg.min_center_separation - 6.0 * cfg.position_jitter,
            "{}",
            s.frame_id
        );
    }
}

#[test]
fn jitter_free_anchors_are_separated_exactly() {
    for base in [SynthConfig::default(), SynthConfig::hard()] {
        let cfg = jitter_free(SynthConfig {
            n_scenes: 200,
            seed: 4,
            ..base
        });
        let ds = generate_corpus(&cfg).unwrap();
        for s in &ds.scenes {
            assert!(
                min_anchor_gap(s) >= cfg.min_center_separation - 1e-9,
                "{}",
                s.frame_id
            );
        }
    }
}

#[test]
fn jitter_free_groups_keep_their_distance() {
    let cfg = jitter_free(SynthConfig {
        n_scenes: 200,
        seed: 5,
        ..SynthConfig::hard()
    });
    let floor = cfg.min_center_separation - 2.0 * cfg.formation_radius;
    for s in &generate_corpus(&cfg).unwrap().scenes {
        let labels = membership(s);
        for i in 0..s.individuals.len() {
            for j in i + 1..s.individuals.len() {
                if labels[i].is_none() || labels[i] != labels[j] {
                    assert!(pair_distance(&s.individuals[i], &s.individuals[j]) >= floor - 1e-9);
                }
            }
        }
    }
}

/// A co-member costs less turning than any non-member who is no farther away.
#[test]
fn orientation_separates_groups_in_jitter_free_scenes() {
    for base in [SynthConfig::default(), SynthConfig::hard()] {
        let cfg = jitter_free(SynthConfig {
            n_scenes: 200,
            seed: 6,
            ..base
        });
        let mut compared = 0;
        for s in &generate_corpus(&cfg).unwrap().scenes {
            let labels = membership(s);
            let people = &s.individuals;
            for a in 0..people.len() {
                let Some(ga) = labels[a] else { continue };
                for b in (0..people.len()).filter(|&b| b != a && labels[b] == Some(ga)) {
                    let (dab, eab) = (
                        pair_distance(&people[a], &people[b]),
                        effort_angle(&people[a], &people[b]).unwrap(),
                    );
                    for c in (0..people.len()).filter(|&c| labels[c] != Some(ga)) {
                        if pair_distance(&people[a], &people[c]) <= dab {
                            compared += 1;
                            assert!(
                                effort_angle(&people[a], &people[c]).unwrap() > eab,
                                "{} {a} {b} {c}",
                                s.frame_id
                            );
                        }
                    }
                }
            }
        }
        if base.layout == growl::synth::Layout::Packed {
            assert!(
                compared > 0,
                "hard corpus never puts an outsider within reach"
            );
        }
    }
}

fn baseline_f1(ds: &Dataset, radius: f64) -> f64 {
    let preds: Vec<(String, GroupSet)> = ds
        .scenes
        .iter()
        .map(|s| (s.frame_id.clone(), baseline_distance_clustering(s, radius)))
        .collect();
    evaluate(&preds, ds, &EvalConfig::default())
        .unwrap()
        .mean_f1
}

#[test]
fn distance_baseline_struggles_only_on_the_hard_corpus() {
    let easy = generate_corpus(&SynthConfig {
        n_scenes: 200,
        seed: 7,
        ..Default::default()
    })
    .unwrap();
    let hard = generate_corpus(&SynthConfig {
        n_scenes: 200,
        seed: 7,
        ..SynthConfig::hard()
    })
    .unwrap();
    let radius = 2.0 * 0.6 + 0.15;
    let (e, h) = (baseline_f1(&easy, radius), baseline_f1(&hard, radius));
    println!("distance baseline F1: default {e:.3}, hard {h:.3}");
    assert!(e > h + 0.3, "default {e}, hard {h}");
}
