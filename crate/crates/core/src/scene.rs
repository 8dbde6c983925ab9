//! Social scenes: individuals with position and orientation, optional
//! ground-truth groups, and dataset ingestion in JSON or CSV form.

use std::collections::{BTreeMap, HashSet};
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("parse error in {location}: {message}")]
    Parse { location: String, message: String },
    #[error("validation error in frame '{frame_id}': {message}")]
    Validation { frame_id: String, message: String },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl SceneError {
    fn validation(frame_id: &str, message: impl Into<String>) -> Self {
        SceneError::Validation {
            frame_id: frame_id.to_string(),
            message: message.into(),
        }
    }
}

/// Wraps an angle into `[-π, π)`.
pub fn wrap_angle(theta: f64) -> f64 {
    if (-PI..PI).contains(&theta) {
        return theta;
    }
    let two_pi = 2.0 * PI;
    let mut w = theta - two_pi * ((theta + PI) / two_pi).floor();
    // floor() rounding can leave w at exactly π
    if w >= PI {
        w -= two_pi;
    }
    if w < -PI {
        w = -PI;
    }
    w
}

/// A person in a scene. `theta` is counter-clockwise from +x, in radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Individual {
    pub fn new(id: impl Into<String>, x: f64, y: f64, theta: f64) -> Self {
        Individual {
            id: id.into(),
            x,
            y,
            theta: wrap_angle(theta),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum ViewTag {
    #[default]
    #[serde(rename = "topdown")]
    Topdown,
    #[serde(rename = "egocentric-derived")]
    EgocentricDerived,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    #[default]
    Meters,
    Normalized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub frame_id: String,
    #[serde(default)]
    pub view_tag: ViewTag,
    pub individuals: Vec<Individual>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groups: Option<Vec<Vec<String>>>,
}

impl Scene {
    /// Checks id uniqueness, finiteness, and ground-truth group structure.
    pub fn validate(&self) -> Result<(), SceneError> {
        let mut ids = HashSet::new();
        for ind in &self.individuals {
            if !ind.x.is_finite() || !ind.y.is_finite() || !ind.theta.is_finite() {
                return Err(SceneError::validation(
                    &self.frame_id,
                    format!("non-finite coordinate for individual '{}'", ind.id),
                ));
            }
            if !(-PI..PI).contains(&ind.theta) {
                return Err(SceneError::validation(
                    &self.frame_id,
                    format!("theta of '{}' not wrapped into [-pi, pi)", ind.id),
                ));
            }
            if !ids.insert(ind.id.as_str()) {
                return Err(SceneError::validation(
                    &self.frame_id,
                    format!("duplicate individual id '{}'", ind.id),
                ));
            }
        }
        if let Some(groups) = &self.groups {
            let mut seen = HashSet::new();
            for group in groups {
                if group.len() < 2 {
                    return Err(SceneError::validation(
                        &self.frame_id,
                        format!("group {group:?} has fewer than 2 members"),
                    ));
                }
                for member in group {
                    if !ids.contains(member.as_str()) {
                        return Err(SceneError::validation(
                            &self.frame_id,
                            format!("group member '{member}' is not an individual of the scene"),
                        ));
                    }
                    if !seen.insert(member.as_str()) {
                        return Err(SceneError::validation(
                            &self.frame_id,
                            format!("id '{member}' appears in more than one group"),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn individual(&self, id: &str) -> Option<&Individual> {
        self.individuals.iter().find(|i| i.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    #[serde(default)]
    pub units: Units,
    pub scenes: Vec<Scene>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

impl Dataset {
    pub fn new(name: impl Into<String>, units: Units, scenes: Vec<Scene>) -> Self {
        Dataset {
            name: name.into(),
            units,
            scenes,
        }
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let mut frames = HashSet::new();
        for scene in &self.scenes {
            if !frames.insert(scene.frame_id.as_str()) {
                return Err(SceneError::validation(
                    &scene.frame_id,
                    "duplicate frame_id in dataset",
                ));
            }
            scene.validate()?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.scenes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenes.is_empty()
    }

    pub fn scene(&self, frame_id: &str) -> Option<&Scene> {
        self.scenes.iter().find(|s| s.frame_id == frame_id)
    }

    pub fn from_json_str(text: &str, origin: &str) -> Result<Self, SceneError> {
        let mut ds: Dataset = serde_json::from_str(text).map_err(|e| SceneError::Parse {
            location: format!("{origin}:{}:{}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        // theta may arrive unwrapped; canonicalize before validating
        for scene in &mut ds.scenes {
            for ind in &mut scene.individuals {
                ind.theta = wrap_angle(ind.theta);
            }
        }
        ds.validate()?;
        Ok(ds)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("dataset serialization is infallible")
    }

    /// Splits off `round(train_fraction * n)` scenes after a seeded shuffle.
    pub fn split(&self, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset), SceneError> {
        split_dataset(self, train_fraction, seed)
    }
}

pub fn load_dataset(path: &Path, format: Format) -> Result<Dataset, SceneError> {
    match format {
        Format::Json => {
            let text = read_to_string(path)?;
            Dataset::from_json_str(&text, &path.display().to_string())
        }
        Format::Csv => load_csv(path, &groups_path_for(path), Units::Meters),
    }
}

pub fn save_dataset(ds: &Dataset, path: &Path, format: Format) -> Result<(), SceneError> {
    match format {
        Format::Json => write_file(path, ds.to_json_string().as_bytes()),
        Format::Csv => save_csv(ds, path, &groups_path_for(path)),
    }
}

/// Companion group file for a CSV dataset: `scenes.csv` → `scenes.groups.csv`.
pub fn groups_path_for(path: &Path) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.groups.csv"))
}

fn read_to_string(path: &Path) -> Result<String, SceneError> {
    fs::read_to_string(path).map_err(|source| SceneError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), SceneError> {
    crate::io::write_atomic(path, bytes).map_err(|source| SceneError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Debug, Deserialize, Serialize)]
struct CsvIndividual {
    frame_id: String,
    id: String,
    x: f64,
    y: f64,
    theta: f64,
}

#[derive(Debug, Deserialize, Serialize)]
struct CsvMembership {
    frame_id: String,
    group_index: usize,
    id: String,
}

fn csv_error(path: &Path, e: csv::Error) -> SceneError {
    let location = match e.position() {
        Some(pos) => format!(
            "{}:line {} (record {})",
            path.display(),
            pos.line(),
            pos.record()
        ),
        None => path.display().to_string(),
    };
    SceneError::Parse {
        location,
        message: e.to_string(),
    }
}

/// Loads `frame_id,id,x,y,theta` rows plus an optional `frame_id,group_index,id`
/// group file. Frames keep first-appearance order. The dataset name is the file stem.
pub fn load_csv(path: &Path, groups_path: &Path, units: Units) -> Result<Dataset, SceneError> {
    let text = read_to_string(path)?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut order: Vec<String> = Vec::new();
    let mut by_frame: BTreeMap<String, Scene> = BTreeMap::new();
    for row in reader.deserialize::<CsvIndividual>() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let scene = by_frame.entry(row.frame_id.clone()).or_insert_with(|| {
            order.push(row.frame_id.clone());
            Scene {
                frame_id: row.frame_id.clone(),
                view_tag: ViewTag::Topdown,
                individuals: Vec::new(),
                groups: None,
            }
        });
        scene
            .individuals
            .push(Individual::new(row.id, row.x, row.y, row.theta));
    }

    if groups_path.exists() {
        let text = read_to_string(groups_path)?;
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let mut memberships: BTreeMap<String, BTreeMap<usize, Vec<String>>> = BTreeMap::new();
        for row in reader.deserialize::<CsvMembership>() {
            let row = row.map_err(|e| csv_error(groups_path, e))?;
            if !by_frame.contains_key(&row.frame_id) {
                return Err(SceneError::validation(
                    &row.frame_id,
                    "group file references a frame with no individuals",
                ));
            }
            memberships
                .entry(row.frame_id)
                .or_default()
                .entry(row.group_index)
                .or_default()
                .push(row.id);
        }
        for (frame, groups) in memberships {
            if let Some(scene) = by_frame.get_mut(&frame) {
                scene.groups = Some(groups.into_values().collect());
            }
        }
    }

    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let scenes = order
        .into_iter()
        .map(|f| by_frame.remove(&f).expect("frame recorded on first sight"))
        .collect();
    let ds = Dataset::new(name, units, scenes);
    ds.validate()?;
    Ok(ds)
}

pub fn save_csv(ds: &Dataset, path: &Path, groups_path: &Path) -> Result<(), SceneError> {
    let mut rows = csv::Writer::from_writer(Vec::new());
    let mut groups = csv::Writer::from_writer(Vec::new());
    let mut any_groups = false;
    for scene in &ds.scenes {
        for ind in &scene.individuals {
            rows.serialize(CsvIndividual {
                frame_id: scene.frame_id.clone(),
                id: ind.id.clone(),
                x: ind.x,
                y: ind.y,
                theta: ind.theta,
            })
            .map_err(|e| csv_error(path, e))?;
        }
        if let Some(gs) = &scene.groups {
            for (gi, group) in gs.iter().enumerate() {
                for id in group {
                    any_groups = true;
                    groups
                        .serialize(CsvMembership {
                            frame_id: scene.frame_id.clone(),
                            group_index: gi,
                            id: id.clone(),
                        })
                        .map_err(|e| csv_error(groups_path, e))?;
                }
            }
        }
    }
    let rows = rows.into_inner().map_err(|e| SceneError::Io {
        path: path.to_path_buf(),
        source: e.into_error(),
    })?;
    write_file(path, &rows)?;
    if any_groups {
        let groups = groups.into_inner().map_err(|e| SceneError::Io {
            path: groups_path.to_path_buf(),
            source: e.into_error(),
        })?;
        write_file(groups_path, &groups)?;
    }
    Ok(())
}

pub fn split_dataset(
    d: &Dataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset), SceneError> {
    if d.scenes.len() < 2 {
        return Err(SceneError::InsufficientData(format!(
            "need at least 2 scenes to split, got {}",
            d.scenes.len()
        )));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(SceneError::InsufficientData(format!(
            "train fraction {train_fraction} outside (0, 1)"
        )));
    }
    let mut order: Vec<usize> = (0..d.scenes.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (train_fraction * d.scenes.len() as f64).round() as usize;
    let pick = |idx: &[usize], suffix: &str| Dataset {
        name: format!("{}-{suffix}", d.name),
        units: d.units,
        scenes: idx.iter().map(|&i| d.scenes[i].clone()).collect(),
    };
    Ok((
        pick(&order[..n_train], "train"),
        pick(&order[n_train..], "test"),
    ))
}
