//! The link-prediction network: a two-layer mean-aggregating node embedding
//! followed by a two-layer MLP that scores concatenated node pairs.
//!
//! Each embedding layer computes, for every node `v`,
//!
//! ```text
//! m_v = MEAN({h_v} ∪ {h_u : u ∈ N(v)})
//! h'_v = σ(W · [h_v ∥ m_v])        (Aggregator::SelfConcat, default)
//! h'_v = σ(W · m_v)                (Aggregator::Mean)
//! ```
//!
//! With `Aggregator::Mean` every node of a complete graph aggregates the same
//! set, so all embeddings in a fully connected scene coincide. The default
//! keeps the node's own representation alongside the neighborhood mean.

use std::fs;
use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{all_pairs, EdgeFeatures, FeatureMode, SceneGraph};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint parse error: {0}")]
    Parse(String),
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("checkpoint shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    /// Logistic sigmoid.
    Sigmoid,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => logistic(x),
        }
    }

    /// Derivative expressed through the pre-activation `x` and output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Aggregator {
    /// `W · [h_v ∥ MEAN(self ∪ neighbors)]`
    #[default]
    SelfConcat,
    /// `W · MEAN(self ∪ neighbors)`
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeScope {
    /// Neighbors through the graph's stored positive and negative edges.
    TrainGraph,
    /// Every other node is a neighbor.
    FullyConnected,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub feature_mode: FeatureMode,
    pub embed_dim: usize,
    pub mlp_hidden: usize,
    pub use_edge_features: bool,
    pub activation: Activation,
    pub l2_normalize_layers: bool,
    pub aggregator: Aggregator,
    pub mlp_bias: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            feature_mode: FeatureMode::WithOrientation,
            embed_dim: 20,
            mlp_hidden: 32,
            use_edge_features: false,
            activation: Activation::Relu,
            l2_normalize_layers: false,
            aggregator: Aggregator::SelfConcat,
            mlp_bias: true,
        }
    }
}

impl ModelConfig {
    pub fn feature_dim(&self) -> usize {
        self.feature_mode.dim()
    }

    pub fn mlp_in(&self) -> usize {
        2 * self.embed_dim + if self.use_edge_features { 2 } else { 0 }
    }

    fn layer_in(&self, dim: usize) -> usize {
        match self.aggregator {
            Aggregator::SelfConcat => 2 * dim,
            Aggregator::Mean => dim,
        }
    }

    /// `(rows, cols)` of the two aggregation weight matrices.
    pub fn layer_shapes(&self) -> [(usize, usize); 2] {
        [
            (self.embed_dim, self.layer_in(self.feature_dim())),
            (self.embed_dim, self.layer_in(self.embed_dim)),
        ]
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.embed_dim == 0 || self.mlp_hidden == 0 {
            return Err(ModelError::InvalidConfig(
                "embed_dim and mlp_hidden must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrowlModel {
    pub config: ModelConfig,
    /// Layer-1 aggregation weights.
    pub w1: Array2<f64>,
    /// Layer-2 aggregation weights.
    pub w2: Array2<f64>,
    /// MLP hidden layer, `mlp_hidden × mlp_in`.
    pub m1: Array2<f64>,
    pub b1: Array1<f64>,
    /// MLP output row.
    pub m2: Array1<f64>,
    pub b2: f64,
}

impl GrowlModel {
    /// All-zero weights with shapes from `config`.
    pub fn zeros(config: ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let [l1, l2] = config.layer_shapes();
        Ok(GrowlModel {
            config,
            w1: Array2::zeros(l1),
            w2: Array2::zeros(l2),
            m1: Array2::zeros((config.mlp_hidden, config.mlp_in())),
            b1: Array1::zeros(config.mlp_hidden),
            m2: Array1::zeros(config.mlp_hidden),
            b2: 0.0,
        })
    }

    pub fn check_shapes(&self) -> Result<(), ModelError> {
        let c = &self.config;
        let [l1, l2] = c.layer_shapes();
        let checks = [
            ("W1", self.w1.dim(), l1),
            ("W2", self.w2.dim(), l2),
            ("M1", self.m1.dim(), (c.mlp_hidden, c.mlp_in())),
            ("b1", (1, self.b1.len()), (1, c.mlp_hidden)),
            ("M2", (1, self.m2.len()), (1, c.mlp_hidden)),
        ];
        for (name, got, want) in checks {
            if got != want {
                return Err(ModelError::ShapeMismatch(format!(
                    "{name} is {got:?}, config requires {want:?}"
                )));
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.w1
            .iter()
            .chain(&self.w2)
            .chain(&self.m1)
            .chain(&self.b1)
            .chain(&self.m2)
            .all(|v| v.is_finite())
            && self.b2.is_finite()
    }

    /// Trainable tensors in a fixed order: W1, W2, M1, b1, M2, b2.
    pub fn tensors_mut(&mut self) -> [&mut [f64]; 6] {
        [
            self.w1.as_slice_mut().expect("standard layout"),
            self.w2.as_slice_mut().expect("standard layout"),
            self.m1.as_slice_mut().expect("standard layout"),
            self.b1.as_slice_mut().expect("standard layout"),
            self.m2.as_slice_mut().expect("standard layout"),
            std::slice::from_mut(&mut self.b2),
        ]
    }

    pub fn tensors(&self) -> [&[f64]; 6] {
        [
            self.w1.as_slice().expect("standard layout"),
            self.w2.as_slice().expect("standard layout"),
            self.m1.as_slice().expect("standard layout"),
            self.b1.as_slice().expect("standard layout"),
            self.m2.as_slice().expect("standard layout"),
            std::slice::from_ref(&self.b2),
        ]
    }

    pub fn embed_nodes(&self, g: &SceneGraph, scope: EdgeScope) -> Result<Array2<f64>, ModelError> {
        Ok(self.embed_trace(g, scope)?.embeddings().clone())
    }

    pub(crate) fn embed_trace(
        &self,
        g: &SceneGraph,
        scope: EdgeScope,
    ) -> Result<EmbeddingTrace, ModelError> {
        self.check_graph(g)?;
        let neighbors = match scope {
            EdgeScope::TrainGraph => g.train_neighbors(),
            EdgeScope::FullyConnected => g.complete_neighbors(),
        };
        let k = g.num_nodes();
        let d = g.feature_dim();
        let mut h0 = Array2::zeros((k, d));
        for (v, f) in g.features.iter().enumerate() {
            for (c, &x) in f.iter().enumerate() {
                h0[[v, c]] = x;
            }
        }
        let mut layers = Vec::with_capacity(2);
        let mut current = h0;
        for w in [&self.w1, &self.w2] {
            let layer = self.layer_forward(&current, &neighbors, w);
            current = layer.output.clone();
            layers.push(layer);
        }
        Ok(EmbeddingTrace { neighbors, layers })
    }

    fn check_graph(&self, g: &SceneGraph) -> Result<(), ModelError> {
        if g.num_nodes() == 0 {
            return Err(ModelError::DimensionMismatch("graph has no nodes".into()));
        }
        if g.feature_dim() != self.config.feature_dim() {
            return Err(ModelError::DimensionMismatch(format!(
                "graph features have dimension {}, model expects {}",
                g.feature_dim(),
                self.config.feature_dim()
            )));
        }
        if let Some(bad) = g
            .features
            .iter()
            .find(|f| f.len() != self.config.feature_dim())
        {
            return Err(ModelError::DimensionMismatch(format!(
                "node feature vector of length {}",
                bad.len()
            )));
        }
        Ok(())
    }

    fn layer_forward(
        &self,
        h: &Array2<f64>,
        neighbors: &[Vec<usize>],
        w: &Array2<f64>,
    ) -> LayerTrace {
        let input = aggregate(h, neighbors, self.config.aggregator);
        let pre = input.dot(&w.t());
        let act = pre.mapv(|x| self.config.activation.apply(x));
        let (output, norms) = if self.config.l2_normalize_layers {
            let norms: Array1<f64> = act.map_axis(Axis(1), |row| row.dot(&row).sqrt());
            let mut out = act.clone();
            for (mut row, &n) in out.axis_iter_mut(Axis(0)).zip(norms.iter()) {
                if n > 0.0 {
                    row.mapv_inplace(|x| x / n);
                }
            }
            (out, Some(norms))
        } else {
            (act.clone(), None)
        };
        LayerTrace {
            input,
            pre,
            act,
            norms,
            output,
        }
    }

    /// MLP input for the ordered pair `(h_a, h_b)`.
    pub fn pair_input(
        &self,
        h_a: ArrayView1<f64>,
        h_b: ArrayView1<f64>,
        ef: Option<&EdgeFeatures>,
    ) -> Result<Array1<f64>, ModelError> {
        let e = self.config.embed_dim;
        if h_a.len() != e || h_b.len() != e {
            return Err(ModelError::DimensionMismatch(format!(
                "embeddings of length {} and {}, expected {e}",
                h_a.len(),
                h_b.len()
            )));
        }
        let mut x = Array1::zeros(self.config.mlp_in());
        x.slice_mut(s![..e]).assign(&h_a);
        x.slice_mut(s![e..2 * e]).assign(&h_b);
        if self.config.use_edge_features {
            let ef = ef.ok_or_else(|| {
                ModelError::DimensionMismatch("model uses edge features but none were given".into())
            })?;
            x[2 * e] = ef.effort_angle;
            x[2 * e + 1] = ef.distance;
        }
        Ok(x)
    }

    /// Pre-sigmoid MLP output for one concatenated input.
    pub fn logit(&self, x: ArrayView1<f64>) -> f64 {
        let hidden = self.m1.dot(&x) + &self.b1;
        hidden
            .iter()
            .zip(self.m2.iter())
            .map(|(&s, &w)| s.max(0.0) * w)
            .sum::<f64>()
            + self.b2
    }

    /// Edge probability, averaged over both concatenation orders.
    pub fn score_edge(
        &self,
        h_u: ArrayView1<f64>,
        h_v: ArrayView1<f64>,
        ef: Option<&EdgeFeatures>,
    ) -> Result<f64, ModelError> {
        let uv = self.pair_input(h_u, h_v, ef)?;
        let vu = self.pair_input(h_v, h_u, ef)?;
        Ok(0.5 * (logistic(self.logit(uv.view())) + logistic(self.logit(vu.view()))))
    }

    /// Scores every unordered pair of the scene on the fully connected graph.
    pub fn predict_scene(
        &self,
        g: &SceneGraph,
        threshold: f64,
    ) -> Result<Vec<ScoredEdge>, ModelError> {
        if g.num_nodes() < 2 {
            return Ok(Vec::new());
        }
        let h = self.embed_nodes(g, EdgeScope::FullyConnected)?;
        all_pairs(g.num_nodes())
            .map(|(i, j)| {
                let p = self.score_edge(h.row(i), h.row(j), g.edge_feature((i, j)))?;
                Ok(ScoredEdge {
                    a: g.node_ids[i].clone(),
                    b: g.node_ids[j].clone(),
                    p,
                    label: u8::from(p >= threshold),
                })
            })
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let ckpt = Checkpoint::from(self);
        let mut text =
            serde_json::to_string(&ckpt).expect("checkpoint serialization is infallible");
        text.push('\n');
        crate::io::write_atomic(path, text.as_bytes()).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = fs::read_to_string(path).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&Checkpoint::from(self))
            .expect("checkpoint serialization is infallible")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))?;
        let found = value
            .get("version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| ModelError::Parse("missing integer 'version'".into()))?
            as u32;
        if found != CHECKPOINT_VERSION {
            return Err(ModelError::VersionMismatch {
                found,
                expected: CHECKPOINT_VERSION,
            });
        }
        let ckpt: Checkpoint =
            serde_json::from_value(value).map_err(|e| ModelError::Parse(e.to_string()))?;
        ckpt.into_model()
    }
}

/// Cached intermediates of one embedding layer.
#[derive(Debug, Clone)]
pub(crate) struct LayerTrace {
    pub input: Array2<f64>,
    pub pre: Array2<f64>,
    pub act: Array2<f64>,
    pub norms: Option<Array1<f64>>,
    pub output: Array2<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct EmbeddingTrace {
    pub neighbors: Vec<Vec<usize>>,
    pub layers: Vec<LayerTrace>,
}

impl EmbeddingTrace {
    pub fn embeddings(&self) -> &Array2<f64> {
        &self.layers[1].output
    }
}

/// `MEAN({h_v} ∪ {h_u : u ∈ N(v)})` for every node.
pub fn mean_aggregate(h: &Array2<f64>, neighbors: &[Vec<usize>]) -> Array2<f64> {
    let mut out = h.clone();
    for (v, nbrs) in neighbors.iter().enumerate() {
        let mut row = out.row_mut(v);
        for &u in nbrs {
            row += &h.row(u);
        }
        row /= (nbrs.len() + 1) as f64;
    }
    out
}

pub(crate) fn aggregate(h: &Array2<f64>, neighbors: &[Vec<usize>], agg: Aggregator) -> Array2<f64> {
    let mean = mean_aggregate(h, neighbors);
    match agg {
        Aggregator::Mean => mean,
        Aggregator::SelfConcat => {
            ndarray::concatenate(Axis(1), &[h.view(), mean.view()]).expect("row counts agree")
        }
    }
}

/// Gradient of `aggregate` with respect to its input `h` (of width `dim`).
pub(crate) fn aggregate_backward(
    d_input: &Array2<f64>,
    neighbors: &[Vec<usize>],
    agg: Aggregator,
    dim: usize,
) -> Array2<f64> {
    let k = d_input.nrows();
    let (mut dh, d_mean) = match agg {
        Aggregator::Mean => (Array2::zeros((k, dim)), d_input.view()),
        Aggregator::SelfConcat => (
            d_input.slice(s![.., ..dim]).to_owned(),
            d_input.slice(s![.., dim..]),
        ),
    };
    for (v, nbrs) in neighbors.iter().enumerate() {
        let share = d_mean.row(v).mapv(|x| x / (nbrs.len() + 1) as f64);
        dh.row_mut(v).scaled_add(1.0, &share);
        for &u in nbrs {
            dh.row_mut(u).scaled_add(1.0, &share);
        }
    }
    dh
}

impl LayerTrace {
    /// Back-propagates `d_output` through normalization and activation to
    /// the pre-activation.
    pub fn d_pre(&self, d_output: &Array2<f64>, activation: Activation) -> Array2<f64> {
        let d_act = match &self.norms {
            None => d_output.clone(),
            Some(norms) => {
                let mut d_act = d_output.clone();
                for (v, &n) in norms.iter().enumerate() {
                    if n > 0.0 {
                        let y = self.output.row(v);
                        let dy = d_output.row(v);
                        let proj = y.dot(&dy);
                        let row = (&dy - &(&y * proj)) / n;
                        d_act.row_mut(v).assign(&row);
                    }
                }
                d_act
            }
        };
        let mut d_pre = d_act;
        ndarray::Zip::from(&mut d_pre)
            .and(&self.pre)
            .and(&self.act)
            .for_each(|g, &x, &y| *g *= activation.derivative(x, y));
        d_pre
    }
}

/// One scored unordered pair; serialized in prediction files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredEdge {
    pub a: String,
    pub b: String,
    pub p: f64,
    pub label: u8,
}

impl ScoredEdge {
    pub fn kept(&self) -> bool {
        self.label == 1
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    config: ModelConfig,
    #[serde(rename = "W1")]
    w1: Vec<Vec<f64>>,
    #[serde(rename = "W2")]
    w2: Vec<Vec<f64>>,
    #[serde(rename = "M1")]
    m1: Vec<Vec<f64>>,
    b1: Vec<f64>,
    #[serde(rename = "M2")]
    m2: Vec<Vec<f64>>,
    b2: f64,
}

fn rows_of(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.outer_iter().map(|r| r.to_vec()).collect()
}

fn matrix_from(
    name: &str,
    rows: Vec<Vec<f64>>,
    shape: (usize, usize),
) -> Result<Array2<f64>, ModelError> {
    let got_rows = rows.len();
    if got_rows != shape.0 || rows.iter().any(|r| r.len() != shape.1) {
        let cols: Vec<usize> = rows.iter().map(|r| r.len()).collect();
        return Err(ModelError::ShapeMismatch(format!(
            "{name}: expected {}x{}, found {got_rows} rows with lengths {cols:?}",
            shape.0, shape.1
        )));
    }
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(Array2::from_shape_vec(shape, flat).expect("shape checked"))
}

impl From<&GrowlModel> for Checkpoint {
    fn from(m: &GrowlModel) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            config: m.config,
            w1: rows_of(&m.w1),
            w2: rows_of(&m.w2),
            m1: rows_of(&m.m1),
            b1: m.b1.to_vec(),
            m2: vec![m.m2.to_vec()],
            b2: m.b2,
        }
    }
}

impl Checkpoint {
    fn into_model(self) -> Result<GrowlModel, ModelError> {
        let c = self.config;
        c.validate()?;
        let [l1, l2] = c.layer_shapes();
        let w1 = matrix_from("W1", self.w1, l1)?;
        let w2 = matrix_from("W2", self.w2, l2)?;
        let m1 = matrix_from("M1", self.m1, (c.mlp_hidden, c.mlp_in()))?;
        let m2 = matrix_from("M2", self.m2, (1, c.mlp_hidden))?;
        if self.b1.len() != c.mlp_hidden {
            return Err(ModelError::ShapeMismatch(format!(
                "b1: expected {}, found {}",
                c.mlp_hidden,
                self.b1.len()
            )));
        }
        Ok(GrowlModel {
            config: c,
            w1,
            w2,
            m1,
            b1: Array1::from(self.b1),
            m2: m2.row(0).to_owned(),
            b2: self.b2,
        })
    }
}
