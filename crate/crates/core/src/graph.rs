//! Scene graphs: node features, labeled positive/negative edges, and the
//! pairwise effort-angle and distance features.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene::{wrap_angle, Individual, Scene};

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("scene '{0}' has no ground-truth groups")]
    MissingGroundTruth(String),
    #[error("individuals '{0}' and '{1}' share a position; bearing undefined")]
    CoincidentPositions(String, String),
}

/// Node featurization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    /// `[x, y, cos θ, sin θ]`
    #[default]
    WithOrientation,
    /// `[x, y]`; the position-only ablation.
    PositionOnly,
    /// `[x, y, θ]` with θ in radians.
    RawAngle,
}

impl FeatureMode {
    pub fn dim(self) -> usize {
        match self {
            FeatureMode::WithOrientation => 4,
            FeatureMode::PositionOnly => 2,
            FeatureMode::RawAngle => 3,
        }
    }

    pub fn featurize(self, ind: &Individual) -> Vec<f64> {
        match self {
            FeatureMode::WithOrientation => vec![ind.x, ind.y, ind.theta.cos(), ind.theta.sin()],
            FeatureMode::PositionOnly => vec![ind.x, ind.y],
            FeatureMode::RawAngle => vec![ind.x, ind.y, ind.theta],
        }
    }
}

/// Which edges a training graph carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Injection {
    /// Every non-positive pair becomes a negative edge.
    #[default]
    FullNegative,
    /// Positive edges only (no negative injection).
    PositivesOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeFeatures {
    /// Total turning, in radians, for both people to face each other. In `[0, 2π]`.
    pub effort_angle: f64,
    pub distance: f64,
    /// Set when both endpoints share a position and `effort_angle` is the 0 fallback.
    #[serde(default)]
    pub coincident: bool,
}

impl EdgeFeatures {
    pub fn between(a: &Individual, b: &Individual) -> Self {
        let (effort_angle, coincident) = match effort_angle(a, b) {
            Ok(v) => (v, false),
            Err(_) => (0.0, true),
        };
        EdgeFeatures {
            effort_angle,
            distance: pair_distance(a, b),
            coincident,
        }
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.effort_angle, self.distance]
    }
}

/// Sum of the absolute turns each person needs to face the other.
pub fn effort_angle(a: &Individual, b: &Individual) -> Result<f64, GraphError> {
    let dx = b.x - a.x;
    let dy = b.y - a.y;
    if dx == 0.0 && dy == 0.0 {
        return Err(GraphError::CoincidentPositions(a.id.clone(), b.id.clone()));
    }
    let bearing_ab = dy.atan2(dx);
    let bearing_ba = (-dy).atan2(-dx);
    let turn_a = wrap_angle(bearing_ab - a.theta).abs();
    let turn_b = wrap_angle(bearing_ba - b.theta).abs();
    Ok((turn_a + turn_b).min(2.0 * PI))
}

pub fn pair_distance(a: &Individual, b: &Individual) -> f64 {
    (b.x - a.x).hypot(b.y - a.y)
}

/// Unordered node pair stored as `(lo, hi)` node indices.
pub type Pair = (usize, usize);

pub fn pair(i: usize, j: usize) -> Pair {
    if i < j {
        (i, j)
    } else {
        (j, i)
    }
}

/// All unordered pairs over `k` nodes in lexicographic order.
pub fn all_pairs(k: usize) -> impl Iterator<Item = Pair> {
    (0..k).flat_map(move |i| ((i + 1)..k).map(move |j| (i, j)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneGraph {
    pub frame_id: String,
    pub node_ids: Vec<String>,
    pub feature_mode: FeatureMode,
    pub features: Vec<Vec<f64>>,
    pub positive_edges: Vec<Pair>,
    pub negative_edges: Vec<Pair>,
    pub edge_features: BTreeMap<Pair, EdgeFeatures>,
}

impl SceneGraph {
    pub fn num_nodes(&self) -> usize {
        self.node_ids.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_mode.dim()
    }

    /// Labeled training samples: positives as 1, negatives as 0, in pair order.
    pub fn labeled_edges(&self) -> Vec<(Pair, f64)> {
        let mut out: Vec<(Pair, f64)> = self
            .positive_edges
            .iter()
            .map(|&p| (p, 1.0))
            .chain(self.negative_edges.iter().map(|&p| (p, 0.0)))
            .collect();
        out.sort_by_key(|e| e.0);
        out
    }

    /// Neighbor lists over `E_p ∪ E_n`.
    pub fn train_neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_nodes()];
        for &(i, j) in self.positive_edges.iter().chain(&self.negative_edges) {
            adj[i].push(j);
            adj[j].push(i);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    /// Neighbor lists of the complete graph.
    pub fn complete_neighbors(&self) -> Vec<Vec<usize>> {
        let k = self.num_nodes();
        (0..k)
            .map(|v| (0..k).filter(|&u| u != v).collect())
            .collect()
    }

    pub fn edge_feature(&self, p: Pair) -> Option<&EdgeFeatures> {
        self.edge_features.get(&p)
    }
}

fn nodes_and_features(s: &Scene, mode: FeatureMode) -> (Vec<String>, Vec<Vec<f64>>) {
    let ids = s.individuals.iter().map(|i| i.id.clone()).collect();
    let feats = s.individuals.iter().map(|i| mode.featurize(i)).collect();
    (ids, feats)
}

/// Training graph: positives are intra-group cliques; negatives per `injection`.
pub fn build_graph(
    s: &Scene,
    mode: FeatureMode,
    injection: Injection,
) -> Result<SceneGraph, GraphError> {
    let groups = s
        .groups
        .as_ref()
        .ok_or_else(|| GraphError::MissingGroundTruth(s.frame_id.clone()))?;
    let (node_ids, features) = nodes_and_features(s, mode);
    let index: HashMap<&str, usize> = node_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let mut group_of = vec![usize::MAX; node_ids.len()];
    for (g, members) in groups.iter().enumerate() {
        for m in members {
            group_of[index[m.as_str()]] = g;
        }
    }
    let mut positive_edges = Vec::new();
    let mut negative_edges = Vec::new();
    for (i, j) in all_pairs(node_ids.len()) {
        if group_of[i] != usize::MAX && group_of[i] == group_of[j] {
            positive_edges.push((i, j));
        } else if injection == Injection::FullNegative {
            negative_edges.push((i, j));
        }
    }
    let edge_features = positive_edges
        .iter()
        .chain(&negative_edges)
        .map(|&(i, j)| {
            (
                (i, j),
                EdgeFeatures::between(&s.individuals[i], &s.individuals[j]),
            )
        })
        .collect();
    Ok(SceneGraph {
        frame_id: s.frame_id.clone(),
        node_ids,
        feature_mode: mode,
        features,
        positive_edges,
        negative_edges,
        edge_features,
    })
}

/// Unlabeled graph for prediction: no edges, edge features for every pair.
pub fn build_inference_graph(s: &Scene, mode: FeatureMode) -> SceneGraph {
    let (node_ids, features) = nodes_and_features(s, mode);
    let edge_features = all_pairs(node_ids.len())
        .map(|(i, j)| {
            (
                (i, j),
                EdgeFeatures::between(&s.individuals[i], &s.individuals[j]),
            )
        })
        .collect();
    SceneGraph {
        frame_id: s.frame_id.clone(),
        node_ids,
        feature_mode: mode,
        features,
        positive_edges: Vec::new(),
        negative_edges: Vec::new(),
        edge_features,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SampleStats {
    pub positives: usize,
    pub negatives: usize,
    /// Share of positives among all samples; `f64::INFINITY` when there are
    /// no negatives.
    pub ratio: f64,
}

pub fn sample_stats(graphs: &[SceneGraph]) -> SampleStats {
    let positives: usize = graphs.iter().map(|g| g.positive_edges.len()).sum();
    let negatives: usize = graphs.iter().map(|g| g.negative_edges.len()).sum();
    let ratio = if negatives == 0 {
        f64::INFINITY
    } else {
        positives as f64 / (positives + negatives) as f64
    };
    SampleStats {
        positives,
        negatives,
        ratio,
    }
}
