//! End-to-end training with binary cross-entropy and Adam, k-fold grid
//! search, and the repeated random-split experiment.

use ndarray::{s, Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::{evaluate, mean_and_std, EvalConfig, EvalError};
use crate::graph::{build_graph, build_inference_graph, GraphError, Injection, SceneGraph};
use crate::grouping::{extract_groups, GroupSet, GroupingError, ScenePrediction};
use crate::model::{aggregate_backward, logistic, EdgeScope, GrowlModel, ModelConfig, ModelError};
use crate::scene::{split_dataset, Dataset, Scene, SceneError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("no labeled edges to train on")]
    NoTrainingEdges,
    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    DivergenceDetected { epoch: usize, loss: f64 },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Grouping(#[from] GroupingError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub negative_injection: bool,
    /// Train every edge in both concatenation orders.
    pub order_augmentation: bool,
    /// Loss weight of positive samples relative to negatives.
    pub positive_weight: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            learning_rate: 0.01,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            negative_injection: true,
            order_augmentation: true,
            positive_weight: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 {
            return Err(TrainError::InvalidConfig("epochs must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(TrainError::InvalidConfig(
                "learning_rate must be > 0".into(),
            ));
        }
        if !(self.positive_weight > 0.0) {
            return Err(TrainError::InvalidConfig(
                "positive_weight must be > 0".into(),
            ));
        }
        Ok(())
    }

    pub fn injection(&self) -> Injection {
        if self.negative_injection {
            Injection::FullNegative
        } else {
            Injection::PositivesOnly
        }
    }
}

/// Gradients for every trainable tensor, shaped like the model.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    pub w1: Array2<f64>,
    pub w2: Array2<f64>,
    pub m1: Array2<f64>,
    pub b1: Array1<f64>,
    pub m2: Array1<f64>,
    pub b2: f64,
}

impl GradientBundle {
    pub const NAMES: [&'static str; 6] = ["W1", "W2", "M1", "b1", "M2", "b2"];

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
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Mean weighted binary cross-entropy over the graph's labeled edges and its
/// exact gradient, with embeddings computed on the training graph.
pub fn loss_and_gradients(
    g: &SceneGraph,
    m: &GrowlModel,
    cfg: &TrainConfig,
) -> Result<(f64, GradientBundle), TrainError> {
    let labeled = g.labeled_edges();
    if labeled.is_empty() {
        return Err(TrainError::NoTrainingEdges);
    }
    let c = &m.config;
    let e = c.embed_dim;
    let trace = m.embed_trace(g, EdgeScope::TrainGraph)?;
    let h = trace.embeddings();

    let mut ordered: Vec<(usize, usize, f64)> = Vec::with_capacity(labeled.len() * 2);
    for &((i, j), y) in &labeled {
        ordered.push((i, j, y));
        if cfg.order_augmentation {
            ordered.push((j, i, y));
        }
    }
    let n = ordered.len();
    let mut x = Array2::<f64>::zeros((n, c.mlp_in()));
    for (row, &(a, b, _)) in ordered.iter().enumerate() {
        let ef = g.edge_feature(crate::graph::pair(a, b));
        x.row_mut(row)
            .assign(&m.pair_input(h.row(a), h.row(b), ef)?);
    }

    let hidden_pre = x.dot(&m.m1.t()) + &m.b1;
    let hidden = hidden_pre.mapv(|v| v.max(0.0));
    let logits = hidden.dot(&m.m2) + m.b2;

    let weights: Vec<f64> = ordered
        .iter()
        .map(|&(_, _, y)| if y > 0.5 { cfg.positive_weight } else { 1.0 })
        .collect();
    let total_weight: f64 = weights.iter().sum();
    let mut loss = 0.0;
    let mut d_logits = Array1::<f64>::zeros(n);
    for (k, &(_, _, y)) in ordered.iter().enumerate() {
        let z = logits[k];
        loss += weights[k] * (softplus(z) - y * z);
        d_logits[k] = weights[k] * (logistic(z) - y) / total_weight;
    }
    loss /= total_weight;

    // MLP
    let d_m2 = hidden.t().dot(&d_logits);
    let d_b2 = d_logits.sum();
    let mut d_hidden_pre = Array2::<f64>::zeros(hidden_pre.raw_dim());
    for ((r, mut row), &dz) in d_hidden_pre
        .outer_iter_mut()
        .enumerate()
        .zip(d_logits.iter())
    {
        for (col, g) in row.iter_mut().enumerate() {
            if hidden_pre[[r, col]] > 0.0 {
                *g = dz * m.m2[col];
            }
        }
    }
    let d_m1 = d_hidden_pre.t().dot(&x);
    let d_b1 = d_hidden_pre.sum_axis(Axis(0));
    let d_x = d_hidden_pre.dot(&m.m1);

    let mut d_h = Array2::<f64>::zeros(h.raw_dim());
    for (row, &(a, b, _)) in ordered.iter().enumerate() {
        let dx = d_x.row(row);
        d_h.row_mut(a).scaled_add(1.0, &dx.slice(s![..e]));
        d_h.row_mut(b).scaled_add(1.0, &dx.slice(s![e..2 * e]));
    }

    // embedding layers, top down
    let layer2 = &trace.layers[1];
    let d_pre2 = layer2.d_pre(&d_h, c.activation);
    let d_w2 = d_pre2.t().dot(&layer2.input);
    let d_input2 = d_pre2.dot(&m.w2);
    let d_h1 = aggregate_backward(&d_input2, &trace.neighbors, c.aggregator, e);
    let layer1 = &trace.layers[0];
    let d_pre1 = layer1.d_pre(&d_h1, c.activation);
    let d_w1 = d_pre1.t().dot(&layer1.input);

    let (d_b1, d_b2) = if c.mlp_bias {
        (d_b1, d_b2)
    } else {
        (Array1::zeros(c.mlp_hidden), 0.0)
    };
    Ok((
        loss,
        GradientBundle {
            w1: standard(d_w1),
            w2: standard(d_w2),
            m1: standard(d_m1),
            b1: d_b1,
            m2: d_m2,
            b2: d_b2,
        },
    ))
}

fn standard(a: Array2<f64>) -> Array2<f64> {
    if a.is_standard_layout() {
        a
    } else {
        a.as_standard_layout().into_owned()
    }
}

/// The loss alone; used by finite-difference checks.
pub fn loss(g: &SceneGraph, m: &GrowlModel, cfg: &TrainConfig) -> Result<f64, TrainError> {
    Ok(loss_and_gradients(g, m, cfg)?.0)
}

/// Xavier-uniform weights (`a = sqrt(6 / (fan_in + fan_out))`), zero biases.
pub fn init_model<R: Rng>(config: ModelConfig, rng: &mut R) -> Result<GrowlModel, ModelError> {
    let mut m = GrowlModel::zeros(config)?;
    let fill = |w: &mut Array2<f64>, rng: &mut R| {
        let (rows, cols) = w.dim();
        let a = (6.0 / (rows + cols) as f64).sqrt();
        w.mapv_inplace(|_| rng.random_range(-a..=a));
    };
    fill(&mut m.w1, rng);
    fill(&mut m.w2, rng);
    fill(&mut m.m1, rng);
    let a = (6.0 / (config.mlp_hidden + 1) as f64).sqrt();
    m.m2.mapv_inplace(|_| rng.random_range(-a..=a));
    Ok(m)
}

/// Adam with bias correction; one moment pair per model tensor.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(model: &GrowlModel, cfg: &TrainConfig) -> Self {
        let zeros: Vec<Vec<f64>> = model.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        Adam {
            lr: cfg.learning_rate,
            beta1: cfg.adam_beta1,
            beta2: cfg.adam_beta2,
            eps: cfg.adam_eps,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    pub fn step(&mut self, model: &mut GrowlModel, grads: &GradientBundle) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        let bias_frozen = !model.config.mlp_bias;
        for (t, (param, grad)) in model
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .enumerate()
        {
            // b1 and b2 stay at zero when biases are disabled
            if bias_frozen && (t == 3 || t == 5) {
                continue;
            }
            let (m, v) = (&mut self.first[t], &mut self.second[t]);
            for k in 0..param.len() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * grad[k];
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * grad[k] * grad[k];
                let m_hat = m[k] / c1;
                let v_hat = v[k] / c2;
                param[k] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: GrowlModel,
    pub trace: Vec<EpochLog>,
}

impl TrainOutcome {
    /// Line-delimited `{"epoch": n, "mean_loss": x}` records.
    pub fn log_jsonl(&self) -> String {
        self.trace
            .iter()
            .map(|r| serde_json::to_string(r).expect("log record serialization") + "\n")
            .collect()
    }
}

/// Trains from a seeded initialization with one Adam step per graph per
/// epoch; graph order is reshuffled each epoch.
pub fn train(
    graphs: &[SceneGraph],
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    model_cfg.validate()?;
    let usable: Vec<&SceneGraph> = graphs
        .iter()
        .filter(|g| !g.labeled_edges().is_empty())
        .collect();
    if usable.is_empty() {
        return Err(TrainError::NoTrainingEdges);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = init_model(*model_cfg, &mut rng)?;
    let mut adam = Adam::new(&model, cfg);
    let mut order: Vec<usize> = (0..usable.len()).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &gi in &order {
            let (loss, grads) = loss_and_gradients(usable[gi], &model, cfg)?;
            if !loss.is_finite() {
                return Err(TrainError::DivergenceDetected { epoch, loss });
            }
            total += loss;
            adam.step(&mut model, &grads);
        }
        let mean_loss = total / usable.len() as f64;
        if !mean_loss.is_finite() || !model.is_finite() {
            return Err(TrainError::DivergenceDetected {
                epoch,
                loss: mean_loss,
            });
        }
        trace.push(EpochLog { epoch, mean_loss });
    }
    Ok(TrainOutcome { model, trace })
}

/// Builds training graphs from annotated scenes. Scenes without ground truth
/// are rejected.
pub fn training_graphs(
    scenes: &[Scene],
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
) -> Result<Vec<SceneGraph>, TrainError> {
    scenes
        .iter()
        .map(|s| build_graph(s, model_cfg.feature_mode, cfg.injection()).map_err(TrainError::from))
        .collect()
}

pub fn train_on_scenes(
    scenes: &[Scene],
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
) -> Result<TrainOutcome, TrainError> {
    train(&training_graphs(scenes, cfg, model_cfg)?, cfg, model_cfg)
}

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Scores all pairs of each scene, eliminates label-0 edges, and groups.
pub fn predict_dataset(
    model: &GrowlModel,
    ds: &Dataset,
    threshold: f64,
) -> Result<Vec<ScenePrediction>, TrainError> {
    ds.scenes
        .iter()
        .map(|s| {
            let g = build_inference_graph(s, model.config.feature_mode);
            let edges = model.predict_scene(&g, threshold)?;
            let groups = extract_groups(&edges, &g.node_ids)?;
            Ok(ScenePrediction::new(s.frame_id.clone(), groups, edges))
        })
        .collect()
}

pub fn prediction_group_sets(preds: &[ScenePrediction]) -> Vec<(String, GroupSet)> {
    preds
        .iter()
        .map(|p| (p.frame_id.clone(), p.group_set()))
        .collect()
}

/// Fraction of all scored pairs labeled positive across predictions.
pub fn edge_positive_rate(preds: &[ScenePrediction]) -> f64 {
    let (kept, total) = preds.iter().fold((0usize, 0usize), |(k, t), p| {
        (
            k + p.edges.iter().filter(|e| e.kept()).count(),
            t + p.edges.len(),
        )
    });
    if total == 0 {
        0.0
    } else {
        kept as f64 / total as f64
    }
}

/// Mixes a base seed with a stream index (splitmix64 finalizer).
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Train on `train`, predict and evaluate on `test`.
pub fn fit_and_score(
    train: &[Scene],
    test: &Dataset,
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
    eval_cfg: &EvalConfig,
) -> Result<(f64, f64), TrainError> {
    let outcome = train_on_scenes(train, cfg, model_cfg)?;
    let preds = predict_dataset(&outcome.model, test, DEFAULT_THRESHOLD)?;
    let report = evaluate(&prediction_group_sets(&preds), test, eval_cfg)?;
    Ok((report.mean_f1, edge_positive_rate(&preds)))
}

/// Contiguous fold boundaries; the first `n % k` folds hold one extra item.
pub fn kfold_ranges(n: usize, k: usize) -> Vec<std::ops::Range<usize>> {
    let base = n / k;
    let extra = n % k;
    let mut start = 0;
    (0..k)
        .map(|f| {
            let len = base + usize::from(f < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub embed_sizes: Vec<usize>,
    pub epochs: Vec<usize>,
    pub folds: usize,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for GridSpec {
    /// Embedding sizes 2..=20; epochs 10..=50 step 5, then 100..=250 step 50.
    fn default() -> Self {
        let mut epochs: Vec<usize> = (10..=50).step_by(5).collect();
        epochs.extend((100..=250).step_by(50));
        GridSpec {
            embed_sizes: (2..=20).collect(),
            epochs,
            folds: 10,
            repeats: 3,
            seed: 0,
        }
    }
}

/// Cross-validation outcome of one `(embed_dim, epochs)` configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub embed_dim: usize,
    pub epochs: usize,
    /// Mean validation F1 per fold, repeat-major.
    pub fold_f1: Vec<f64>,
    pub mean_f1: f64,
    pub std_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub best_embed_dim: usize,
    pub best_epochs: usize,
    pub table: Vec<CvResult>,
}

impl GridSearchResult {
    /// `embed_dim,epochs,mean_f1,std_f1` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("embed_dim,epochs,mean_f1,std_f1\n");
        for r in &self.table {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.embed_dim, r.epochs, r.mean_f1, r.std_f1
            ));
        }
        out
    }
}

/// Highest mean F1; ties go to the smaller embedding, then fewer epochs.
pub fn select_best(table: &[CvResult]) -> Option<&CvResult> {
    table.iter().min_by(|a, b| {
        b.mean_f1
            .total_cmp(&a.mean_f1)
            .then(a.embed_dim.cmp(&b.embed_dim))
            .then(a.epochs.cmp(&b.epochs))
    })
}

/// Repeated k-fold cross-validation over the `(embed_dim, epochs)` grid.
/// Every configuration sees the same folds.
pub fn grid_search(
    train_set: &[Scene],
    spec: &GridSpec,
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
    eval_cfg: &EvalConfig,
) -> Result<GridSearchResult, TrainError> {
    if spec.folds < 2 || train_set.len() < spec.folds {
        return Err(TrainError::InsufficientData(format!(
            "{} scenes cannot fill {} folds",
            train_set.len(),
            spec.folds
        )));
    }
    if spec.embed_sizes.is_empty() || spec.epochs.is_empty() || spec.repeats == 0 {
        return Err(TrainError::InvalidConfig("empty search grid".into()));
    }
    // (repeat, fold, train scenes, validation dataset)
    let mut splits = Vec::new();
    for r in 0..spec.repeats {
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(
            spec.seed, r as u64,
        )));
        for (f, range) in kfold_ranges(train_set.len(), spec.folds)
            .into_iter()
            .enumerate()
        {
            let val: Vec<Scene> = order[range.clone()]
                .iter()
                .map(|&i| train_set[i].clone())
                .collect();
            let fit: Vec<Scene> = order
                .iter()
                .enumerate()
                .filter(|(pos, _)| !range.contains(pos))
                .map(|(_, &i)| train_set[i].clone())
                .collect();
            splits.push((
                r,
                f,
                fit,
                Dataset::new(format!("fold-{r}-{f}"), Default::default(), val),
            ));
        }
    }
    let configs: Vec<(usize, usize)> = spec
        .embed_sizes
        .iter()
        .flat_map(|&e| spec.epochs.iter().map(move |&ep| (e, ep)))
        .collect();
    let table = configs
        .par_iter()
        .map(|&(embed_dim, epochs)| {
            let mcfg = ModelConfig {
                embed_dim,
                ..*model_cfg
            };
            let fold_f1 = splits
                .iter()
                .map(|(r, f, fit, val)| {
                    let tcfg = TrainConfig {
                        epochs,
                        seed: derive_seed(cfg.seed, (*r * spec.folds + *f) as u64),
                        ..*cfg
                    };
                    fit_and_score(fit, val, &tcfg, &mcfg, eval_cfg).map(|(f1, _)| f1)
                })
                .collect::<Result<Vec<f64>, TrainError>>()?;
            let (mean_f1, std_f1) = mean_and_std(&fold_f1);
            Ok(CvResult {
                embed_dim,
                epochs,
                fold_f1,
                mean_f1,
                std_f1,
            })
        })
        .collect::<Result<Vec<CvResult>, TrainError>>()?;
    let best = select_best(&table).expect("grid is non-empty");
    Ok(GridSearchResult {
        best_embed_dim: best.embed_dim,
        best_epochs: best.epochs,
        table,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub run: usize,
    pub seed: u64,
    pub mean_f1: f64,
    pub edge_positive_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatResult {
    pub runs: Vec<RunResult>,
    pub mean_f1: f64,
    pub std_f1: f64,
}

impl RepeatResult {
    /// `run,seed,mean_f1,edge_positive_rate` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("run,seed,mean_f1,edge_positive_rate\n");
        for r in &self.runs {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.run, r.seed, r.mean_f1, r.edge_positive_rate
            ));
        }
        out
    }
}

/// `n_runs` independent shuffle/split/train/evaluate cycles. Run `i` uses
/// `derive_seed(master_seed, i)` for both the split and the training seed.
pub fn repeat_experiment(
    dataset: &Dataset,
    n_runs: usize,
    train_fraction: f64,
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
    eval_cfg: &EvalConfig,
    master_seed: u64,
) -> Result<RepeatResult, TrainError> {
    if n_runs == 0 {
        return Err(TrainError::InvalidConfig("n_runs must be >= 1".into()));
    }
    let runs = (0..n_runs)
        .into_par_iter()
        .map(|run| {
            let seed = derive_seed(master_seed, run as u64);
            let (train_ds, test_ds) = split_dataset(dataset, train_fraction, seed)?;
            let tcfg = TrainConfig { seed, ..*cfg };
            let (mean_f1, edge_positive_rate) =
                fit_and_score(&train_ds.scenes, &test_ds, &tcfg, model_cfg, eval_cfg)?;
            Ok(RunResult {
                run,
                seed,
                mean_f1,
                edge_positive_rate,
            })
        })
        .collect::<Result<Vec<RunResult>, TrainError>>()?;
    let f1s: Vec<f64> = runs.iter().map(|r| r.mean_f1).collect();
    let (mean_f1, std_f1) = mean_and_std(&f1s);
    Ok(RepeatResult {
        runs,
        mean_f1,
        std_f1,
    })
}
