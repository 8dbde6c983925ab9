//! Turning pairwise edge labels into interaction groups.

use std::collections::{BTreeSet, HashMap};

use petgraph::unionfind::UnionFind;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{all_pairs, pair_distance};
use crate::model::ScoredEdge;
use crate::scene::Scene;

#[derive(Debug, Error, PartialEq)]
pub enum GroupingError {
    #[error("scored edge references unknown node '{0}'")]
    UnknownNodeInScores(String),
}

/// Disjoint groups of two or more ids, plus everyone left on their own.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct GroupSet {
    pub groups: Vec<Vec<String>>,
    pub singletons: Vec<String>,
}

impl GroupSet {
    /// Ground truth of a scene; individuals outside every group are singletons.
    pub fn from_scene(scene: &Scene) -> Self {
        let groups = scene.groups.clone().unwrap_or_default();
        let grouped: BTreeSet<&str> = groups.iter().flatten().map(String::as_str).collect();
        let singletons = scene
            .individuals
            .iter()
            .filter(|i| !grouped.contains(i.id.as_str()))
            .map(|i| i.id.clone())
            .collect();
        GroupSet { groups, singletons }
    }

    /// Every id in the set, grouped or not.
    pub fn universe(&self) -> BTreeSet<&str> {
        self.groups
            .iter()
            .flatten()
            .chain(&self.singletons)
            .map(String::as_str)
            .collect()
    }

    /// True when groups are disjoint, each has ≥ 2 members, and every id
    /// appears exactly once across groups and singletons.
    pub fn is_partition_of<'a>(&self, ids: impl IntoIterator<Item = &'a str>) -> bool {
        let mut seen = BTreeSet::new();
        for g in &self.groups {
            if g.len() < 2 {
                return false;
            }
        }
        for id in self.groups.iter().flatten().chain(&self.singletons) {
            if !seen.insert(id.as_str()) {
                return false;
            }
        }
        let expected: BTreeSet<&str> = ids.into_iter().collect();
        seen == expected
    }
}

/// Connected components of `node_ids` under `edges`, as a group set.
/// Members keep node order; groups are ordered by their first member.
fn components(node_ids: &[String], edges: impl IntoIterator<Item = (usize, usize)>) -> GroupSet {
    let mut uf = UnionFind::<usize>::new(node_ids.len());
    for (i, j) in edges {
        uf.union(i, j);
    }
    let mut by_root: Vec<Vec<usize>> = vec![Vec::new(); node_ids.len()];
    let mut root_order = Vec::new();
    for v in 0..node_ids.len() {
        let r = uf.find(v);
        if by_root[r].is_empty() {
            root_order.push(r);
        }
        by_root[r].push(v);
    }
    let mut out = GroupSet::default();
    for r in root_order {
        let members = &by_root[r];
        if members.len() == 1 {
            out.singletons.push(node_ids[members[0]].clone());
        } else {
            out.groups
                .push(members.iter().map(|&v| node_ids[v].clone()).collect());
        }
    }
    out
}

/// Keeps label-1 edges and returns the connected components.
pub fn extract_groups(
    edges: &[ScoredEdge],
    node_ids: &[String],
) -> Result<GroupSet, GroupingError> {
    let index: HashMap<&str, usize> = node_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let lookup = |id: &str| {
        index
            .get(id)
            .copied()
            .ok_or_else(|| GroupingError::UnknownNodeInScores(id.to_string()))
    };
    let mut kept = Vec::new();
    for e in edges {
        let (a, b) = (lookup(&e.a)?, lookup(&e.b)?);
        if e.kept() {
            kept.push((a, b));
        }
    }
    Ok(components(node_ids, kept))
}

/// Links every pair closer than `radius` and returns the components.
pub fn baseline_distance_clustering(s: &Scene, radius: f64) -> GroupSet {
    let ids: Vec<String> = s.individuals.iter().map(|i| i.id.clone()).collect();
    let edges = all_pairs(ids.len())
        .filter(|&(i, j)| pair_distance(&s.individuals[i], &s.individuals[j]) <= radius)
        .collect::<Vec<_>>();
    components(&ids, edges)
}

/// Per-scene prediction record as written to prediction files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenePrediction {
    pub frame_id: String,
    pub groups: Vec<Vec<String>>,
    pub singletons: Vec<String>,
    pub edges: Vec<ScoredEdge>,
}

impl ScenePrediction {
    pub fn new(frame_id: impl Into<String>, groups: GroupSet, edges: Vec<ScoredEdge>) -> Self {
        ScenePrediction {
            frame_id: frame_id.into(),
            groups: groups.groups,
            singletons: groups.singletons,
            edges,
        }
    }

    pub fn group_set(&self) -> GroupSet {
        GroupSet {
            groups: self.groups.clone(),
            singletons: self.singletons.clone(),
        }
    }

    /// Fraction of scored pairs labeled 1.
    pub fn positive_rate(&self) -> Option<f64> {
        if self.edges.is_empty() {
            None
        } else {
            Some(self.edges.iter().filter(|e| e.kept()).count() as f64 / self.edges.len() as f64)
        }
    }
}
