//! Oracles and generators shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use growl::evaluation::{EvalConfig, MatchStrategy};
use growl::graph::{
    all_pairs, build_graph, build_inference_graph, effort_angle, pair_distance, FeatureMode,
    Injection, SceneGraph,
};
use growl::grouping::{extract_groups, GroupSet};
use growl::model::{Aggregator, EdgeScope, GrowlModel, ModelConfig, ScoredEdge};
use growl::scene::{Dataset, Individual, Scene, Units, ViewTag};
use growl::trainer::{init_model, loss, loss_and_gradients, GradientBundle, TrainConfig};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const PROPERTY_CASES: u32 = 256;

/// Groups from per-person labels: people sharing a label form a group when
/// there are at least two of them.
pub fn groups_from_labels(ids: &[String], labels: &[usize]) -> Vec<Vec<String>> {
    let mut by_label: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for (id, &l) in ids.iter().zip(labels) {
        by_label.entry(l).or_default().push(id.clone());
    }
    by_label.into_values().filter(|g| g.len() >= 2).collect()
}

pub fn scene_from(people: &[(f64, f64, f64)], labels: Option<&[usize]>) -> Scene {
    let individuals: Vec<Individual> = people
        .iter()
        .enumerate()
        .map(|(i, &(x, y, t))| Individual::new(format!("p{i}"), x, y, t))
        .collect();
    let ids: Vec<String> = individuals.iter().map(|i| i.id.clone()).collect();
    Scene {
        frame_id: "frame".into(),
        view_tag: ViewTag::Topdown,
        individuals,
        groups: labels.map(|l| groups_from_labels(&ids, l)),
    }
}

pub fn random_scene<R: Rng>(rng: &mut R, n: usize, n_labels: usize) -> Scene {
    let people: Vec<(f64, f64, f64)> = (0..n)
        .map(|_| {
            (
                rng.random_range(0.0..3.0),
                rng.random_range(0.0..3.0),
                rng.random_range(-PI..PI),
            )
        })
        .collect();
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..n_labels)).collect();
    scene_from(&people, Some(&labels))
}

// ---------------------------------------------------------------------------
// gradient oracle

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, or 0 when both vanish.
pub fn normwise_relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale < 1e-12 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

/// Central differences of the training loss with respect to every
/// parameter, or `None` if some probe crosses an activation kink (the two
/// one-sided differences then disagree and the central one is meaningless).
pub fn numeric_gradients(
    g: &SceneGraph,
    model: &GrowlModel,
    cfg: &TrainConfig,
    step: f64,
) -> Option<Vec<Vec<f64>>> {
    let mut probe = model.clone();
    let center = loss(g, model, cfg).expect("loss");
    let sizes: Vec<usize> = model.tensors().iter().map(|t| t.len()).collect();
    let mut out = Vec::with_capacity(6);
    for (t, &len) in sizes.iter().enumerate() {
        let mut grad = vec![0.0; len];
        for k in 0..len {
            let orig = probe.tensors()[t][k];
            probe.tensors_mut()[t][k] = orig + step;
            let up = loss(g, &probe, cfg).expect("loss");
            probe.tensors_mut()[t][k] = orig - step;
            let down = loss(g, &probe, cfg).expect("loss");
            probe.tensors_mut()[t][k] = orig;
            let (fwd, bwd) = ((up - center) / step, (center - down) / step);
            if (fwd - bwd).abs() > 1e-3 * (fwd.abs() + bwd.abs()) + 1e-6 {
                return None;
            }
            grad[k] = (up - down) / (2.0 * step);
        }
        out.push(grad);
    }
    Some(out)
}

/// Random weights with nonzero biases, so every tensor carries gradient.
pub fn random_model<R: Rng>(config: ModelConfig, rng: &mut R) -> GrowlModel {
    let mut m = init_model(config, rng).expect("valid config");
    if config.mlp_bias {
        m.b1.mapv_inplace(|_| rng.random_range(-0.5..0.5));
        m.b2 = rng.random_range(-0.5..0.5);
    }
    m
}

pub struct GradientReport {
    /// Largest normwise relative error per tensor.
    pub worst: [f64; 6],
    /// Weight draws discarded because a probe crossed a kink.
    pub redraws: usize,
}

/// Compares analytic and central-difference gradients on `n_graphs` random
/// 5-node graphs, each with fresh random weights.
pub fn gradient_check(
    n_graphs: usize,
    seed: u64,
    model_cfg: ModelConfig,
    train_cfg: &TrainConfig,
) -> GradientReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradientReport {
        worst: [0.0; 6],
        redraws: 0,
    };
    let mut checked = 0;
    while checked < n_graphs {
        let scene = random_scene(&mut rng, 5, 3);
        let g = build_graph(&scene, model_cfg.feature_mode, train_cfg.injection()).expect("graph");
        if g.labeled_edges().is_empty() {
            continue;
        }
        let model = random_model(model_cfg, &mut rng);
        let Some(numeric) = numeric_gradients(&g, &model, train_cfg, 1e-5) else {
            report.redraws += 1;
            continue;
        };
        let (_, analytic) = loss_and_gradients(&g, &model, train_cfg).expect("gradients");
        for (t, (a, n)) in analytic.tensors().iter().zip(&numeric).enumerate() {
            // frozen biases report a zero gradient by design
            if !model_cfg.mlp_bias && (t == 3 || t == 5) {
                continue;
            }
            report.worst[t] = report.worst[t].max(normwise_relative_error(a, n));
        }
        checked += 1;
    }
    report
}

pub fn tensor_names() -> [&'static str; 6] {
    GradientBundle::NAMES
}

// ---------------------------------------------------------------------------
// matching oracle

/// Tolerance as an exact fraction `num / den`.
#[derive(Debug, Clone, Copy)]
pub struct Ratio(pub usize, pub usize);

impl Ratio {
    pub fn as_f64(self) -> f64 {
        self.0 as f64 / self.1 as f64
    }

    /// The match rule in integer arithmetic.
    pub fn matches(self, gt: &BTreeSet<String>, det: &BTreeSet<String>) -> bool {
        let n = gt.len();
        let correct = gt.intersection(det).count();
        let wrong = det.difference(gt).count();
        let need = (self.0 * n).div_ceil(self.1);
        let allow = ((self.1 - self.0) * n) / self.1;
        correct >= need && wrong <= allow
    }
}

fn as_sets(groups: &[Vec<String>]) -> Vec<BTreeSet<String>> {
    groups.iter().map(|g| g.iter().cloned().collect()).collect()
}

/// Largest number of one-to-one matches over all assignments.
pub fn brute_force_tp(gt: &GroupSet, det: &GroupSet, t: Ratio) -> usize {
    let gts = as_sets(&gt.groups);
    let dets = as_sets(&det.groups);
    fn search(
        i: usize,
        gts: &[BTreeSet<String>],
        dets: &[BTreeSet<String>],
        used: &mut Vec<bool>,
        t: Ratio,
    ) -> usize {
        if i == gts.len() {
            return 0;
        }
        let mut best = search(i + 1, gts, dets, used, t);
        for d in 0..dets.len() {
            if !used[d] && t.matches(&gts[i], &dets[d]) {
                used[d] = true;
                best = best.max(1 + search(i + 1, gts, dets, used, t));
                used[d] = false;
            }
        }
        best
    }
    search(0, &gts, &dets, &mut vec![false; dets.len()], t)
}

/// A random partition of `ids` into at most `max_groups` groups plus singletons.
pub fn random_group_set<R: Rng>(rng: &mut R, ids: &[String], max_groups: usize) -> GroupSet {
    // a draw of `max_groups` means "alone", encoded as a label nobody shares
    let labels: Vec<usize> = (0..ids.len())
        .map(|k| match rng.random_range(0..=max_groups) {
            l if l < max_groups => l,
            _ => 1000 + k,
        })
        .collect();
    partition(ids, &labels)
}

fn partition(ids: &[String], labels: &[usize]) -> GroupSet {
    let groups = groups_from_labels(ids, labels);
    let grouped: BTreeSet<&String> = groups.iter().flatten().collect();
    let singletons = ids
        .iter()
        .filter(|i| !grouped.contains(i))
        .cloned()
        .collect();
    GroupSet { groups, singletons }
}

/// A detection that mostly follows `gt`: each person keeps their group with
/// probability `keep`, otherwise joins a random label.
pub fn perturbed_group_set<R: Rng>(
    rng: &mut R,
    gt: &GroupSet,
    ids: &[String],
    keep: f64,
    max_groups: usize,
) -> GroupSet {
    let mut label_of: BTreeMap<&String, usize> = BTreeMap::new();
    for (gi, g) in gt.groups.iter().enumerate() {
        for m in g {
            label_of.insert(m, gi);
        }
    }
    let labels: Vec<usize> = ids
        .iter()
        .enumerate()
        .map(|(k, id)| match label_of.get(id) {
            Some(&l) if rng.random_bool(keep) => l,
            _ if rng.random_bool(0.5) => 1000 + k,
            _ => rng.random_range(0..max_groups),
        })
        .collect();
    partition(ids, &labels)
}

pub fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("n{i:02}")).collect()
}

/// Number of instances (out of `n`) where `strategy` finds fewer matches
/// than the exhaustive oracle at tolerance `t`.
pub fn matching_disagreements(
    n: usize,
    seed: u64,
    t: Ratio,
    strategy: MatchStrategy,
) -> Vec<(GroupSet, GroupSet, usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = EvalConfig {
        tolerance: t.as_f64(),
        strategy,
        ..Default::default()
    };
    let mut bad = Vec::new();
    for _ in 0..n {
        let universe = ids(rng.random_range(2..=20));
        let gt = random_group_set(&mut rng, &universe, 6);
        let det = if rng.random_bool(0.7) {
            let keep = rng.random_range(0.5..1.0);
            perturbed_group_set(&mut rng, &gt, &universe, keep, 6)
        } else {
            random_group_set(&mut rng, &universe, 6)
        };
        let got = growl::evaluation::match_groups(&gt, &det, &cfg).expect("same universe");
        let want = brute_force_tp(&gt, &det, t);
        assert_eq!(got.tp + got.fp, det.groups.len());
        assert_eq!(got.tp + got.fn_, gt.groups.len());
        if got.tp != want {
            bad.push((gt, det, got.tp, want));
        }
    }
    bad
}

// ---------------------------------------------------------------------------
// component oracle

/// Connected components by iterative depth-first search, as sets of ids,
/// singletons included.
pub fn dfs_components(node_ids: &[String], edges: &[ScoredEdge]) -> BTreeSet<BTreeSet<String>> {
    let index: BTreeMap<&str, usize> = node_ids
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let mut adj = vec![Vec::new(); node_ids.len()];
    for e in edges.iter().filter(|e| e.label == 1) {
        let (a, b) = (index[e.a.as_str()], index[e.b.as_str()]);
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut seen = vec![false; node_ids.len()];
    let mut out = BTreeSet::new();
    for start in 0..node_ids.len() {
        if seen[start] {
            continue;
        }
        let mut comp = BTreeSet::new();
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(v) = stack.pop() {
            comp.insert(node_ids[v].clone());
            for &u in &adj[v] {
                if !seen[u] {
                    seen[u] = true;
                    stack.push(u);
                }
            }
        }
        out.insert(comp);
    }
    out
}

pub fn random_labeling<R: Rng>(rng: &mut R, node_ids: &[String]) -> Vec<ScoredEdge> {
    let density = rng.random_range(0.0..0.6);
    all_pairs(node_ids.len())
        .map(|(i, j)| {
            let p: f64 = rng.random();
            let label = u8::from(rng.random_bool(density));
            ScoredEdge {
                a: node_ids[i].clone(),
                b: node_ids[j].clone(),
                p,
                label,
            }
        })
        .collect()
}

pub fn group_set_as_sets(gs: &GroupSet) -> BTreeSet<BTreeSet<String>> {
    gs.groups
        .iter()
        .map(|g| g.iter().cloned().collect())
        .chain(gs.singletons.iter().map(|s| BTreeSet::from([s.clone()])))
        .collect()
}

/// Labelings where `extract_groups` disagrees with depth-first search.
pub fn component_disagreements(n: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bad = 0;
    for _ in 0..n {
        let nodes = ids(rng.random_range(1..=12));
        let edges = random_labeling(&mut rng, &nodes);
        let got = extract_groups(&edges, &nodes).expect("known nodes");
        if group_set_as_sets(&got) != dfs_components(&nodes, &edges)
            || !got.is_partition_of(nodes.iter().map(String::as_str))
        {
            bad += 1;
        }
    }
    bad
}

// ---------------------------------------------------------------------------
// property suites

pub fn people(min: usize, max: usize) -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
    prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64, -PI..PI), min..=max)
}

fn aggregator() -> impl Strategy<Value = Aggregator> {
    prop_oneof![Just(Aggregator::SelfConcat), Just(Aggregator::Mean)]
}

fn small_model(seed: u64, aggregator: Aggregator) -> GrowlModel {
    let cfg = ModelConfig {
        embed_dim: 6,
        mlp_hidden: 8,
        aggregator,
        ..Default::default()
    };
    random_model(cfg, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()))
}

/// Relabeling nodes permutes embeddings the same way and leaves every
/// pair's score unchanged, on both the training and the complete graph.
pub fn check_permutation_equivariance(
    (pts, labels, perm): (Vec<(f64, f64, f64)>, Vec<usize>, Vec<usize>),
    seed: u64,
    agg: Aggregator,
) -> Result<(), TestCaseError> {
    let model = small_model(seed, agg);
    let original = scene_from(&pts, Some(&labels));
    let mut permuted = original.clone();
    permuted.individuals = perm
        .iter()
        .map(|&k| original.individuals[k].clone())
        .collect();

    for scope in [EdgeScope::TrainGraph, EdgeScope::FullyConnected] {
        let (g0, g1) = (
            build_graph(
                &original,
                FeatureMode::WithOrientation,
                Injection::FullNegative,
            )
            .unwrap(),
            build_graph(
                &permuted,
                FeatureMode::WithOrientation,
                Injection::FullNegative,
            )
            .unwrap(),
        );
        let h0 = model.embed_nodes(&g0, scope).unwrap();
        let h1 = model.embed_nodes(&g1, scope).unwrap();
        for (row, &k) in perm.iter().enumerate() {
            for (a, b) in h1.row(row).iter().zip(h0.row(k).iter()) {
                prop_assert!(close(*a, *b), "embedding of node {k} moved: {a} vs {b}");
            }
        }
    }
    let score_map = |s: &Scene| -> BTreeMap<(String, String), f64> {
        let g = build_inference_graph(s, FeatureMode::WithOrientation);
        model
            .predict_scene(&g, 0.5)
            .unwrap()
            .into_iter()
            .map(|e| {
                let key = if e.a < e.b { (e.a, e.b) } else { (e.b, e.a) };
                (key, e.p)
            })
            .collect()
    };
    let (s0, s1) = (score_map(&original), score_map(&permuted));
    prop_assert_eq!(s0.len(), s1.len());
    for (k, p) in &s0 {
        prop_assert!(close(*p, s1[k]), "score of {k:?} changed");
    }
    Ok(())
}

pub fn permutation_strategy(
) -> impl Strategy<Value = (Vec<(f64, f64, f64)>, Vec<usize>, Vec<usize>)> {
    people(2, 9).prop_flat_map(|pts| {
        let n = pts.len();
        (
            Just(pts),
            prop::collection::vec(0..3usize, n),
            Just((0..n).collect::<Vec<usize>>()).prop_shuffle(),
        )
    })
}

/// Scores lie in (0, 1) and do not depend on endpoint order.
pub fn check_score_symmetry(
    pts: Vec<(f64, f64, f64)>,
    seed: u64,
    agg: Aggregator,
) -> Result<(), TestCaseError> {
    let model = small_model(seed, agg);
    let g = build_inference_graph(&scene_from(&pts, None), FeatureMode::WithOrientation);
    let h = model.embed_nodes(&g, EdgeScope::FullyConnected).unwrap();
    for (i, j) in all_pairs(g.num_nodes()) {
        let uv = model.score_edge(h.row(i), h.row(j), None).unwrap();
        let vu = model.score_edge(h.row(j), h.row(i), None).unwrap();
        prop_assert_eq!(uv.to_bits(), vu.to_bits());
        prop_assert!(uv > 0.0 && uv < 1.0);
    }
    Ok(())
}

/// Rotating and translating the whole scene, with the same angle added to
/// every facing, leaves effort angles and distances unchanged.
pub fn check_rigid_invariance(
    a: (f64, f64, f64),
    b: (f64, f64, f64),
    phi: f64,
    shift: (f64, f64),
) -> Result<(), TestCaseError> {
    let ia = Individual::new("a", a.0, a.1, a.2);
    let ib = Individual::new("b", b.0, b.1, b.2);
    prop_assume!(pair_distance(&ia, &ib) > 1e-6);
    let move_it = |i: &Individual| {
        let (c, s) = (phi.cos(), phi.sin());
        Individual::new(
            i.id.clone(),
            c * i.x - s * i.y + shift.0,
            s * i.x + c * i.y + shift.1,
            i.theta + phi,
        )
    };
    let (ra, rb) = (move_it(&ia), move_it(&ib));
    let e0 = effort_angle(&ia, &ib).unwrap();
    let e1 = effort_angle(&ra, &rb).unwrap();
    prop_assert!((e0 - e1).abs() < 1e-9, "effort {e0} vs {e1}");
    prop_assert_eq!(e0.to_bits(), effort_angle(&ib, &ia).unwrap().to_bits());
    prop_assert!((0.0..=2.0 * PI).contains(&e0));
    let (d0, d1) = (pair_distance(&ia, &ib), pair_distance(&ra, &rb));
    prop_assert!((d0 - d1).abs() < 1e-9 * (1.0 + d0), "distance {d0} vs {d1}");
    prop_assert_eq!(d0.to_bits(), pair_distance(&ib, &ia).to_bits());
    Ok(())
}

/// Extracted groups partition the nodes, and adding a kept edge never
/// increases the number of components.
pub fn check_partition(n: usize, labels: Vec<bool>, extra: usize) -> Result<(), TestCaseError> {
    let nodes = ids(n);
    let mut edges: Vec<ScoredEdge> = all_pairs(n)
        .zip(labels)
        .map(|((i, j), on)| ScoredEdge {
            a: nodes[i].clone(),
            b: nodes[j].clone(),
            p: if on { 0.75 } else { 0.25 },
            label: u8::from(on),
        })
        .collect();
    let gs = extract_groups(&edges, &nodes).unwrap();
    prop_assert!(gs.is_partition_of(nodes.iter().map(String::as_str)));
    prop_assert!(gs.groups.iter().all(|g| g.len() >= 2));
    let before = gs.groups.len() + gs.singletons.len();
    if !edges.is_empty() {
        let k = extra % edges.len();
        edges[k].label = 1;
        let after = extract_groups(&edges, &nodes).unwrap();
        prop_assert!(after.groups.len() + after.singletons.len() <= before);
    }
    Ok(())
}

pub fn partition_strategy() -> impl Strategy<Value = (usize, Vec<bool>, usize)> {
    (1usize..=12).prop_flat_map(|n| {
        let pairs = n * (n - 1) / 2;
        (
            Just(n),
            prop::collection::vec(prop::bool::weighted(0.25), pairs),
            any::<usize>(),
        )
    })
}

pub fn dataset_strategy() -> impl Strategy<Value = Dataset> {
    let scene = (
        people(1, 8),
        prop::collection::vec(0..4usize, 8),
        any::<bool>(),
    )
        .prop_map(|(pts, labels, annotated)| {
            let mut s = scene_from(&pts, Some(&labels[..pts.len()]));
            if !annotated || s.groups.as_ref().is_some_and(|g| g.is_empty()) {
                s.groups = None;
            }
            s
        });
    prop::collection::vec(scene, 1..5).prop_map(|scenes| {
        let scenes = scenes
            .into_iter()
            .enumerate()
            .map(|(i, mut s)| {
                s.frame_id = format!("frame-{i}");
                s
            })
            .collect();
        Dataset::new("rt", Units::Meters, scenes)
    })
}

/// JSON and CSV both reproduce the dataset field for field.
pub fn check_round_trip(ds: Dataset) -> Result<(), TestCaseError> {
    let text = ds.to_json_string();
    let back = Dataset::from_json_str(&text, "mem").unwrap();
    prop_assert_eq!(&back, &ds);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rt.csv");
    growl::scene::save_dataset(&ds, &path, growl::scene::Format::Csv).unwrap();
    let back = growl::scene::load_dataset(&path, growl::scene::Format::Csv).unwrap();
    prop_assert_eq!(&back, &ds);
    Ok(())
}

fn report<T: std::fmt::Debug>(
    r: Result<(), proptest::test_runner::TestError<T>>,
) -> Result<(), String> {
    r.map_err(|e| format!("{e:?}"))
}

/// Runs every invariant suite for `cases` cases each and returns the first
/// failure per suite.
pub fn run_invariant_suites(cases: u32) -> Vec<(&'static str, Result<(), String>)> {
    let runner = || {
        TestRunner::new(Config {
            cases,
            failure_persistence: None,
            ..Config::default()
        })
    };
    vec![
        (
            "permutation equivariance",
            report(runner().run(
                &(permutation_strategy(), any::<u64>(), aggregator()),
                |(p, seed, agg)| check_permutation_equivariance(p, seed, agg),
            )),
        ),
        (
            "score symmetry",
            report(runner().run(
                &(people(2, 9), any::<u64>(), aggregator()),
                |(pts, seed, agg)| check_score_symmetry(pts, seed, agg),
            )),
        ),
        (
            "effort-angle rotation invariance",
            report(runner().run(
                &(
                    (-5.0..5.0f64, -5.0..5.0f64, -PI..PI),
                    (-5.0..5.0f64, -5.0..5.0f64, -PI..PI),
                    -PI..PI,
                    (-10.0..10.0f64, -10.0..10.0f64),
                ),
                |(a, b, phi, shift)| check_rigid_invariance(a, b, phi, shift),
            )),
        ),
        (
            "group-set partition",
            report(runner().run(&partition_strategy(), |(n, labels, extra)| {
                check_partition(n, labels, extra)
            })),
        ),
        (
            "dataset round trip",
            report(runner().run(&dataset_strategy(), check_round_trip)),
        ),
    ]
}

pub fn aggregator_strategy() -> impl Strategy<Value = Aggregator> {
    aggregator()
}
