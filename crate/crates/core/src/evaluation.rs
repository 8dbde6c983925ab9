//! Group-detection scoring with a tolerance ratio `T`.
//!
//! A detected group `D` counts as a correct detection of a ground-truth group
//! `G` when at least `T·|G|` of `G`'s members are in `D` and no more than
//! `(1−T)·|G|` of `D`'s members come from outside `G`. Matches are one-to-one.
//! Singletons on either side are ignored.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grouping::GroupSet;
use crate::scene::Dataset;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("ground truth and detections cover different ids in frame '{frame_id}'")]
    UniverseMismatch { frame_id: String },
    #[error("frame mismatch: {0}")]
    FrameMismatch(String),
    #[error("tolerance must lie in (0, 1], got {0}")]
    InvalidTolerance(f64),
}

/// How fractional membership thresholds become integer counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Rounding {
    /// ceil for the required overlap, floor for the allowed contamination.
    #[default]
    Strict,
    /// floor for the required overlap, ceil for the allowed contamination.
    Lenient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MatchStrategy {
    /// Largest overlaps first, ties broken on sorted member ids.
    #[default]
    Greedy,
    /// Maximum-cardinality bipartite matching.
    Optimal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub tolerance: f64,
    pub rounding: Rounding,
    pub strategy: MatchStrategy,
    /// Drop ground-truth members that are absent from the detections' ids.
    pub restrict_universe_to_detected: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            tolerance: 2.0 / 3.0,
            rounding: Rounding::Strict,
            strategy: MatchStrategy::Greedy,
            restrict_universe_to_detected: false,
        }
    }
}

const EPS: f64 = 1e-9;

impl EvalConfig {
    pub fn with_tolerance(tolerance: f64) -> Self {
        EvalConfig {
            tolerance,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        if !(self.tolerance > 0.0 && self.tolerance <= 1.0) {
            return Err(EvalError::InvalidTolerance(self.tolerance));
        }
        Ok(())
    }

    /// Minimum members of a size-`n` ground-truth group a detection must hold.
    pub fn required_overlap(&self, n: usize) -> usize {
        let t = self.tolerance * n as f64;
        match self.rounding {
            Rounding::Strict => (t - EPS).ceil() as usize,
            Rounding::Lenient => (t + EPS).floor() as usize,
        }
    }

    /// Maximum outsiders a detection may carry for a size-`n` group.
    pub fn allowed_contamination(&self, n: usize) -> usize {
        let t = (1.0 - self.tolerance) * n as f64;
        match self.rounding {
            Rounding::Strict => (t + EPS).floor().max(0.0) as usize,
            Rounding::Lenient => (t - EPS).ceil().max(0.0) as usize,
        }
    }

    pub fn is_match(&self, gt: &BTreeSet<&str>, det: &BTreeSet<&str>) -> bool {
        let overlap = gt.intersection(det).count();
        let outside = det.len() - overlap;
        overlap >= self.required_overlap(gt.len())
            && outside <= self.allowed_contamination(gt.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct MatchCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

fn as_sets(groups: &[Vec<String>]) -> Vec<BTreeSet<&str>> {
    groups
        .iter()
        .filter(|g| g.len() >= 2)
        .map(|g| g.iter().map(String::as_str).collect())
        .collect()
}

/// Counts matched (TP), unmatched detected (FP) and unmatched ground-truth (FN) groups.
pub fn match_groups(
    gt: &GroupSet,
    det: &GroupSet,
    cfg: &EvalConfig,
) -> Result<MatchCounts, EvalError> {
    cfg.validate()?;
    if gt.universe() != det.universe() {
        return Err(EvalError::UniverseMismatch {
            frame_id: String::new(),
        });
    }
    Ok(count_matches(
        &as_sets(&gt.groups),
        &as_sets(&det.groups),
        cfg,
    ))
}

fn count_matches(gt: &[BTreeSet<&str>], det: &[BTreeSet<&str>], cfg: &EvalConfig) -> MatchCounts {
    let tp = match cfg.strategy {
        MatchStrategy::Greedy => greedy_matching(gt, det, cfg),
        MatchStrategy::Optimal => optimal_matching(gt, det, cfg),
    };
    MatchCounts {
        tp,
        fp: det.len() - tp,
        fn_: gt.len() - tp,
    }
}

fn greedy_matching(gt: &[BTreeSet<&str>], det: &[BTreeSet<&str>], cfg: &EvalConfig) -> usize {
    let mut candidates: Vec<(usize, usize, usize)> = Vec::new();
    for (gi, g) in gt.iter().enumerate() {
        for (di, d) in det.iter().enumerate() {
            if cfg.is_match(g, d) {
                candidates.push((g.intersection(d).count(), gi, di));
            }
        }
    }
    candidates.sort_by(|a, b| {
        b.0.cmp(&a.0)
            .then_with(|| gt[a.1].iter().cmp(gt[b.1].iter()))
            .then_with(|| det[a.2].iter().cmp(det[b.2].iter()))
    });
    let mut gt_used = vec![false; gt.len()];
    let mut det_used = vec![false; det.len()];
    let mut tp = 0;
    for (_, gi, di) in candidates {
        if !gt_used[gi] && !det_used[di] {
            gt_used[gi] = true;
            det_used[di] = true;
            tp += 1;
        }
    }
    tp
}

fn optimal_matching(gt: &[BTreeSet<&str>], det: &[BTreeSet<&str>], cfg: &EvalConfig) -> usize {
    let adj: Vec<Vec<usize>> = gt
        .iter()
        .map(|g| {
            (0..det.len())
                .filter(|&di| cfg.is_match(g, &det[di]))
                .collect()
        })
        .collect();
    let mut owner: Vec<Option<usize>> = vec![None; det.len()];

    fn augment(
        gi: usize,
        adj: &[Vec<usize>],
        seen: &mut [bool],
        owner: &mut [Option<usize>],
    ) -> bool {
        for &di in &adj[gi] {
            if seen[di] {
                continue;
            }
            seen[di] = true;
            if owner[di].is_none_or(|other| augment(other, adj, seen, owner)) {
                owner[di] = Some(gi);
                return true;
            }
        }
        false
    }

    (0..gt.len())
        .filter(|&gi| augment(gi, &adj, &mut vec![false; det.len()], &mut owner))
        .count()
}

/// Precision, recall and F1 from match counts; 0/0 yields 0.
pub fn frame_f1(counts: MatchCounts) -> (f64, f64, f64) {
    let ratio = |num: usize, den: usize| {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let precision = ratio(counts.tp, counts.tp + counts.fp);
    let recall = ratio(counts.tp, counts.tp + counts.fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (precision, recall, f1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameScore {
    pub frame_id: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_frame: Vec<FrameScore>,
    pub mean_f1: f64,
    pub std_f1: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub mean_f1: f64,
    pub std_f1: f64,
    pub tolerance: f64,
}

impl EvalReport {
    pub fn summary(&self) -> EvalSummary {
        EvalSummary {
            mean_f1: self.mean_f1,
            std_f1: self.std_f1,
            tolerance: self.tolerance,
        }
    }

    /// `frame_id,precision,recall,f1,tp,fp,fn` rows.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.per_frame {
            w.serialize(row).expect("in-memory csv write");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv flush"))
            .expect("csv output is utf-8")
    }
}

/// Mean and sample standard deviation; the deviation of fewer than two values is 0.
pub fn mean_and_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn restrict_to(gt: &GroupSet, universe: &BTreeSet<&str>) -> GroupSet {
    let mut out = GroupSet::default();
    for g in &gt.groups {
        let kept: Vec<String> = g
            .iter()
            .filter(|id| universe.contains(id.as_str()))
            .cloned()
            .collect();
        match kept.len() {
            0 => {}
            1 => out.singletons.extend(kept),
            _ => out.groups.push(kept),
        }
    }
    out.singletons.extend(
        gt.singletons
            .iter()
            .filter(|id| universe.contains(id.as_str()))
            .cloned(),
    );
    out
}

/// Scores one frame.
pub fn score_frame(
    frame_id: &str,
    gt: &GroupSet,
    det: &GroupSet,
    cfg: &EvalConfig,
) -> Result<FrameScore, EvalError> {
    cfg.validate()?;
    let counts = if cfg.restrict_universe_to_detected {
        let gt = restrict_to(gt, &det.universe());
        count_matches(&as_sets(&gt.groups), &as_sets(&det.groups), cfg)
    } else {
        match_groups(gt, det, cfg).map_err(|e| match e {
            EvalError::UniverseMismatch { .. } => EvalError::UniverseMismatch {
                frame_id: frame_id.to_string(),
            },
            other => other,
        })?
    };
    let (precision, recall, f1) = frame_f1(counts);
    Ok(FrameScore {
        frame_id: frame_id.to_string(),
        precision,
        recall,
        f1,
        tp: counts.tp,
        fp: counts.fp,
        fn_: counts.fn_,
    })
}

/// Scores every frame of `gts` against the prediction with the same frame id.
/// Both sides must cover exactly the same frames.
pub fn evaluate(
    predictions: &[(String, GroupSet)],
    gts: &Dataset,
    cfg: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    cfg.validate()?;
    let mut by_frame: HashMap<&str, &GroupSet> = HashMap::new();
    for (frame, gs) in predictions {
        if by_frame.insert(frame.as_str(), gs).is_some() {
            return Err(EvalError::FrameMismatch(format!(
                "frame '{frame}' predicted twice"
            )));
        }
    }
    if let Some((frame, _)) = predictions.iter().find(|(f, _)| gts.scene(f).is_none()) {
        return Err(EvalError::FrameMismatch(format!(
            "predicted frame '{frame}' is not in the ground truth"
        )));
    }
    let mut per_frame = Vec::with_capacity(gts.scenes.len());
    for scene in &gts.scenes {
        let det = by_frame.get(scene.frame_id.as_str()).ok_or_else(|| {
            EvalError::FrameMismatch(format!("no prediction for frame '{}'", scene.frame_id))
        })?;
        per_frame.push(score_frame(
            &scene.frame_id,
            &GroupSet::from_scene(scene),
            det,
            cfg,
        )?);
    }
    let f1s: Vec<f64> = per_frame.iter().map(|f| f.f1).collect();
    let (mean_f1, std_f1) = mean_and_std(&f1s);
    Ok(EvalReport {
        per_frame,
        mean_f1,
        std_f1,
        tolerance: cfg.tolerance,
    })
}
