//! The task-aware meta-learner and the prediction network it parameterizes.
//!
//! A task description `t` is embedded by a small fully connected stack into
//! `e_t`. One affine generator per dynamic layer maps `e_t` to that layer's
//! gain vector, and the prediction network runs the image feature through the
//! modulated layers to obtain the task-aware feature embedding (TAFE), which a
//! single task-independent linear classifier turns into a compatibility logit.

mod layers;

pub use layers::{Dense, FactorizedConvLayer, FactorizedFcLayer};

use std::sync::atomic::{AtomicUsize, Ordering};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Graph, Tensor, Var};
use layers::{linear_logit, relu_in_place};

static EVAL_THREADS: AtomicUsize = AtomicUsize::new(1);

/// Worker threads used by [`TafeNet::score_matrix`]; scores are identical for
/// any value.
pub fn set_eval_threads(n: usize) {
    EVAL_THREADS.store(n.max(1), Ordering::Relaxed);
}

pub fn eval_threads() -> usize {
    EVAL_THREADS.load(Ordering::Relaxed)
}

/// Below this many training tasks the task embedding network drops to two layers.
pub const SHALLOW_TASK_NET_BELOW: usize = 32;

/// Scale of generator weights at initialization relative to fan-in.
const GENERATOR_INIT_SCALE: f64 = 1e-2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    Attribute,
    WordEmbedding,
    OneHot,
    Exemplar,
}

impl std::str::FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "attribute" => Ok(TaskKind::Attribute),
            "word-embedding" => Ok(TaskKind::WordEmbedding),
            "one-hot" => Ok(TaskKind::OneHot),
            "exemplar" => Ok(TaskKind::Exemplar),
            other => Err(Error::Unknown {
                kind: "task kind",
                id: other.to_string(),
            }),
        }
    }
}

/// Frozen backbone feature of one image.
#[derive(Clone, Debug, PartialEq)]
pub struct GenericFeature(pub Vec<f64>);

/// Raw task input fed to the meta-learner.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskDescription {
    kind: TaskKind,
    values: Vec<f64>,
}

impl TaskDescription {
    pub fn new(kind: TaskKind, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("task_description", "empty vector"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("task description".into()));
        }
        if kind == TaskKind::OneHot {
            let ones = values.iter().filter(|&&v| v == 1.0).count();
            let nonzero = values.iter().filter(|&&v| v != 0.0).count();
            if ones != 1 || nonzero != 1 {
                return Err(Error::invalid(
                    "task_description",
                    "one-hot vector needs exactly one entry equal to 1",
                ));
            }
        }
        Ok(TaskDescription { kind, values })
    }

    pub fn one_hot(index: usize, len: usize) -> Result<Self> {
        if index >= len {
            return Err(Error::invalid(
                "one_hot",
                format!("index {index} out of range for {len}"),
            ));
        }
        let mut v = vec![0.0; len];
        v[index] = 1.0;
        Self::new(TaskKind::OneHot, v)
    }

    pub fn kind(&self) -> TaskKind {
        self.kind
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Latent task encoding `e_t`, same dimension as the TAFE.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskEmbedding(pub Vec<f64>);

/// Task-aware feature embedding of one (image, task) pair.
#[derive(Clone, Debug, PartialEq)]
pub struct Tafe(pub Vec<f64>);

/// Architecture hyperparameters; also the checkpoint manifest.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_in: usize,
    pub d_task: usize,
    /// Hidden width of the task embedding network.
    pub task_hidden: usize,
    /// Number of affine layers in the task embedding network.
    pub task_depth: usize,
    /// Output widths of the dynamic feature layers; the last is the TAFE
    /// dimension and also the task embedding dimension.
    pub feature_widths: Vec<usize>,
}

impl ModelConfig {
    /// Widths of 2048 throughout, three dynamic layers, and a task network
    /// of depth 3 (2 when fewer than 32 training tasks are available).
    pub fn full_scale(d_in: usize, d_task: usize, n_train_tasks: usize) -> Self {
        Self::with_width(d_in, d_task, n_train_tasks, 2048)
    }

    pub fn with_width(d_in: usize, d_task: usize, n_train_tasks: usize, width: usize) -> Self {
        ModelConfig {
            d_in,
            d_task,
            task_hidden: width,
            task_depth: task_depth_for(n_train_tasks),
            feature_widths: vec![width; 3],
        }
    }

    pub fn embed_dim(&self) -> usize {
        *self
            .feature_widths
            .last()
            .expect("validated: at least one feature layer")
    }

    pub fn num_dynamic_layers(&self) -> usize {
        self.feature_widths.len()
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("d_in", self.d_in),
            ("d_task", self.d_task),
            ("task_hidden", self.task_hidden),
            ("task_depth", self.task_depth),
        ];
        for (field, v) in positive {
            if v == 0 {
                return Err(Error::config(field, "must be positive"));
            }
        }
        if self.feature_widths.is_empty() || self.feature_widths.contains(&0) {
            return Err(Error::config("feature_widths", "needs at least one positive width"));
        }
        Ok(())
    }

    fn task_layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.task_depth);
        let mut prev = self.d_task;
        for i in 0..self.task_depth {
            let out = if i + 1 == self.task_depth {
                self.embed_dim()
            } else {
                self.task_hidden
            };
            dims.push((prev, out));
            prev = out;
        }
        dims
    }
}

pub fn task_depth_for(n_train_tasks: usize) -> usize {
    if n_train_tasks < SHALLOW_TASK_NET_BELOW {
        2
    } else {
        3
    }
}

/// Learning-rate group of a parameter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParamGroup {
    TaskEmbedding,
    Generators,
    Prediction,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 3] = [
        ParamGroup::TaskEmbedding,
        ParamGroup::Generators,
        ParamGroup::Prediction,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParamGroup::TaskEmbedding => "task-embedding",
            ParamGroup::Generators => "generators",
            ParamGroup::Prediction => "prediction",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TafeNet {
    config: ModelConfig,
    task_net: Vec<Dense>,
    generators: Vec<Dense>,
    features: Vec<FactorizedFcLayer>,
    classifier: Dense,
}

impl TafeNet {
    /// Fan-in scaled weights everywhere except the generators, which start
    /// near zero with unit bias so every task initially sees gains of ~1.
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let d_e = config.embed_dim();
        let task_net = config
            .task_layer_dims()
            .into_iter()
            .map(|(i, o)| Dense::fan_in(i, o, rng))
            .collect();
        let generators = config
            .feature_widths
            .iter()
            .map(|&w| {
                let bound = GENERATOR_INIT_SCALE / (d_e as f64).sqrt();
                Dense {
                    weight: Tensor::uniform(&[d_e, w], bound, rng),
                    bias: Tensor::full(&[1, w], 1.0),
                }
            })
            .collect();
        let mut prev = config.d_in;
        let features = config
            .feature_widths
            .iter()
            .map(|&w| {
                let layer = FactorizedFcLayer::fan_in(prev, w, rng);
                prev = w;
                layer
            })
            .collect();
        let bound = (1.0 / d_e as f64).sqrt();
        let classifier = Dense {
            weight: Tensor::uniform(&[d_e, 1], bound, rng),
            bias: Tensor::zeros(&[1, 1]),
        };
        Ok(TafeNet {
            config,
            task_net,
            generators,
            features,
            classifier,
        })
    }

    /// All parameters zero; generator biases zero too.
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let d_e = config.embed_dim();
        let task_net = config
            .task_layer_dims()
            .into_iter()
            .map(|(i, o)| Dense::zeros(i, o))
            .collect();
        let generators = config.feature_widths.iter().map(|&w| Dense::zeros(d_e, w)).collect();
        let mut prev = config.d_in;
        let features = config
            .feature_widths
            .iter()
            .map(|&w| {
                let l = FactorizedFcLayer::new(Tensor::zeros(&[prev, w]), Tensor::zeros(&[1, w]));
                prev = w;
                l
            })
            .collect::<Result<_>>()?;
        Ok(TafeNet {
            config,
            task_net,
            generators,
            features,
            classifier: Dense::zeros(d_e, 1),
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn task_net(&self) -> &[Dense] {
        &self.task_net
    }

    pub fn task_net_mut(&mut self) -> &mut [Dense] {
        &mut self.task_net
    }

    pub fn generators(&self) -> &[Dense] {
        &self.generators
    }

    pub fn generators_mut(&mut self) -> &mut [Dense] {
        &mut self.generators
    }

    pub fn feature_layers(&self) -> &[FactorizedFcLayer] {
        &self.features
    }

    pub fn feature_layers_mut(&mut self) -> &mut [FactorizedFcLayer] {
        &mut self.features
    }

    pub fn classifier(&self) -> &Dense {
        &self.classifier
    }

    pub fn classifier_mut(&mut self) -> &mut Dense {
        &mut self.classifier
    }

    /// Named parameters in a fixed order, with their learning-rate group.
    pub fn params(&self) -> Vec<(String, ParamGroup, &Tensor)> {
        let mut out = Vec::new();
        for (i, d) in self.task_net.iter().enumerate() {
            out.push((format!("task.{i}.weight"), ParamGroup::TaskEmbedding, &d.weight));
            out.push((format!("task.{i}.bias"), ParamGroup::TaskEmbedding, &d.bias));
        }
        for (i, d) in self.generators.iter().enumerate() {
            out.push((format!("generator.{i}.weight"), ParamGroup::Generators, &d.weight));
            out.push((format!("generator.{i}.bias"), ParamGroup::Generators, &d.bias));
        }
        for (i, l) in self.features.iter().enumerate() {
            out.push((format!("feature.{i}.shared"), ParamGroup::Prediction, &l.shared));
            out.push((format!("feature.{i}.bias"), ParamGroup::Prediction, &l.bias));
        }
        out.push((
            "classifier.weight".into(),
            ParamGroup::Prediction,
            &self.classifier.weight,
        ));
        out.push(("classifier.bias".into(), ParamGroup::Prediction, &self.classifier.bias));
        out
    }

    /// Same order as [`TafeNet::params`].
    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for d in &mut self.task_net {
            out.push(&mut d.weight);
            out.push(&mut d.bias);
        }
        for d in &mut self.generators {
            out.push(&mut d.weight);
            out.push(&mut d.bias);
        }
        for l in &mut self.features {
            out.push(&mut l.shared);
            out.push(&mut l.bias);
        }
        out.push(&mut self.classifier.weight);
        out.push(&mut self.classifier.bias);
        out
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|(_, _, t)| t.len()).sum()
    }

    /// `e_t`: the task network with relu between layers and none after the last.
    pub fn embed_task(&self, t: &TaskDescription) -> Result<TaskEmbedding> {
        if t.values().len() != self.config.d_task {
            return Err(Error::shape("embed_task", &[t.values().len()], &[self.config.d_task]));
        }
        let mut h = t.values().to_vec();
        for (i, layer) in self.task_net.iter().enumerate() {
            h = layer.forward(&h)?;
            if i + 1 < self.task_net.len() {
                relu_in_place(&mut h);
            }
        }
        Ok(TaskEmbedding(h))
    }

    /// Raw affine output of the generator for dynamic layer `layer` (0-based).
    pub fn generate_gains(&self, e: &TaskEmbedding, layer: usize) -> Result<Vec<f64>> {
        let g = self.generators.get(layer).ok_or_else(|| {
            Error::invalid(
                "generate_gains",
                format!(
                    "layer {layer} out of range for {} dynamic layers",
                    self.generators.len()
                ),
            )
        })?;
        g.forward(&e.0)
    }

    /// Values generated per task for each dynamic layer.
    pub fn generated_per_task(&self) -> Vec<usize> {
        self.features.iter().map(FactorizedFcLayer::generated_len).collect()
    }

    fn tafe_with_embedding(&self, x: &GenericFeature, e: &TaskEmbedding) -> Result<Tafe> {
        if x.0.len() != self.config.d_in {
            return Err(Error::shape("compute_tafe", &[x.0.len()], &[self.config.d_in]));
        }
        let mut h = x.0.clone();
        for (i, layer) in self.features.iter().enumerate() {
            let gains = self.generate_gains(e, i)?;
            h = layer.forward_with(&h, &gains)?;
            relu_in_place(&mut h);
        }
        Ok(Tafe(h))
    }

    /// TAFE of `x` under task `t`: the post-relu output of the last dynamic layer.
    pub fn compute_tafe(&self, x: &GenericFeature, t: &TaskDescription) -> Result<Tafe> {
        let e = self.embed_task(t)?;
        self.tafe_with_embedding(x, &e)
    }

    pub fn classify_tafe(&self, tafe: &Tafe) -> f64 {
        linear_logit(&self.classifier.weight, self.classifier.bias.item(), &tafe.0)
    }

    /// Compatibility logit of `x` with task `t`.
    pub fn predict_logit(&self, x: &GenericFeature, t: &TaskDescription) -> Result<f64> {
        Ok(self.classify_tafe(&self.compute_tafe(x, t)?))
    }

    /// Logits for every (sample, task) pair: `features` is `N x d_in`,
    /// `tasks` is `T x d_task`; returns `N x T`.
    pub fn score_matrix(&self, features: &Tensor, tasks: &Tensor) -> Result<Tensor> {
        let n = features.rows();
        let t = tasks.rows();
        if features.cols() != self.config.d_in {
            return Err(Error::shape("score_matrix", features.shape(), &[n, self.config.d_in]));
        }
        // keep each graph around a few thousand pair rows
        let chunk = (4096 / t.max(1)).max(1);
        let d = features.cols();
        let starts: Vec<usize> = (0..n).step_by(chunk).collect();
        let score_chunk = |start: usize| -> Result<Vec<f64>> {
            let end = (start + chunk).min(n);
            let batch = Tensor::new(&[end - start, d], features.data()[start * d..end * d].to_vec())?;
            let mut g = Graph::new();
            let bound = self.bind(&mut g, false);
            let xv = g.constant(batch);
            let tv = g.constant(tasks.clone());
            let outs = bound.pair_forward(&mut g, xv, tv)?;
            Ok(g.value(outs.logits).data().to_vec())
        };
        let threads = eval_threads().min(starts.len()).max(1);
        let parts: Vec<Result<Vec<f64>>> = if threads == 1 {
            starts.iter().map(|&s| score_chunk(s)).collect()
        } else {
            // chunks are independent, so the result does not depend on the thread count
            let per = starts.len().div_ceil(threads);
            std::thread::scope(|scope| {
                let handles: Vec<_> = starts
                    .chunks(per)
                    .map(|group| scope.spawn(|| group.iter().map(|&s| score_chunk(s)).collect::<Vec<_>>()))
                    .collect();
                handles
                    .into_iter()
                    .flat_map(|h| h.join().expect("scoring thread panicked"))
                    .collect()
            })
        };
        let mut out = Vec::with_capacity(n * t);
        for part in parts {
            out.extend(part?);
        }
        Tensor::new(&[n, t], out)
    }

    /// Registers every parameter as a graph leaf, trainable or constant.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> BoundNet<'_> {
        let vars = self
            .params()
            .into_iter()
            .map(|(_, _, t)| {
                if trainable {
                    g.param(t.clone())
                } else {
                    g.constant(t.clone())
                }
            })
            .collect();
        BoundNet { net: self, vars }
    }

    /// Uses existing graph nodes as the parameters, e.g. leaves perturbed by
    /// a gradient check. Only the shapes of the net's own tensors are used.
    pub fn bind_to(&self, g: &Graph, vars: &[Var]) -> Result<BoundNet<'_>> {
        let params = self.params();
        if vars.len() != params.len() {
            return Err(Error::invalid(
                "bind_to",
                format!("expected {} parameters, got {}", params.len(), vars.len()),
            ));
        }
        for ((_, _, t), &v) in params.iter().zip(vars) {
            if g.shape(v) != t.shape() {
                return Err(Error::shape("bind_to", g.shape(v), t.shape()));
            }
        }
        Ok(BoundNet {
            net: self,
            vars: vars.to_vec(),
        })
    }
}

/// Graph handles for a [`TafeNet`]'s parameters.
pub struct BoundNet<'n> {
    net: &'n TafeNet,
    vars: Vec<Var>,
}

/// Outputs of a batched forward over every (sample, task) pair.
#[derive(Clone, Copy, Debug)]
pub struct PairOutputs {
    /// `T x d_e`
    pub embeddings: Var,
    /// `(N·T) x d_e`, row `i·T + t` for sample `i` under task `t`.
    pub tafes: Var,
    /// `N x T`
    pub logits: Var,
}

impl BoundNet<'_> {
    /// Parameter leaves in [`TafeNet::params`] order.
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    fn task_vars(&self, i: usize) -> (Var, Var) {
        (self.vars[2 * i], self.vars[2 * i + 1])
    }

    fn generator_vars(&self, i: usize) -> (Var, Var) {
        let base = 2 * self.net.task_net.len();
        (self.vars[base + 2 * i], self.vars[base + 2 * i + 1])
    }

    fn feature_vars(&self, i: usize) -> (Var, Var) {
        let base = 2 * (self.net.task_net.len() + self.net.generators.len());
        (self.vars[base + 2 * i], self.vars[base + 2 * i + 1])
    }

    fn classifier_vars(&self) -> (Var, Var) {
        let n = self.vars.len();
        (self.vars[n - 2], self.vars[n - 1])
    }

    /// `T x d_task` descriptions to `T x d_e` embeddings.
    pub fn embed_tasks(&self, g: &mut Graph, tasks: Var) -> Result<Var> {
        let depth = self.net.task_net.len();
        let mut h = tasks;
        for i in 0..depth {
            h = self.net.task_net[i].forward_graph(g, h, self.task_vars(i))?;
            if i + 1 < depth {
                h = g.relu(h);
            }
        }
        Ok(h)
    }

    /// `T x width_i` gains for dynamic layer `layer`.
    pub fn gains(&self, g: &mut Graph, embeddings: Var, layer: usize) -> Result<Var> {
        self.net.generators[layer].forward_graph(g, embeddings, self.generator_vars(layer))
    }

    pub fn pair_forward(&self, g: &mut Graph, features: Var, tasks: Var) -> Result<PairOutputs> {
        let n = g.shape(features)[0];
        let t = g.shape(tasks)[0];
        if g.shape(features)[1] != self.net.config.d_in {
            return Err(Error::shape(
                "pair_forward",
                g.shape(features),
                &[n, self.net.config.d_in],
            ));
        }
        if g.shape(tasks)[1] != self.net.config.d_task {
            return Err(Error::shape(
                "pair_forward",
                g.shape(tasks),
                &[t, self.net.config.d_task],
            ));
        }
        let sample_idx: Vec<usize> = (0..n).flat_map(|i| std::iter::repeat_n(i, t)).collect();
        let task_idx: Vec<usize> = (0..n).flat_map(|_| 0..t).collect();

        let embeddings = self.embed_tasks(g, tasks)?;
        let mut h = features;
        for i in 0..self.net.features.len() {
            let (w, b) = self.feature_vars(i);
            let mut z = g.matmul(h, w)?;
            if i == 0 {
                // the first product is task independent; expand to pairs after it
                z = g.gather_rows(z, &sample_idx)?;
            }
            let gains = self.gains(g, embeddings, i)?;
            let pair_gains = g.gather_rows(gains, &task_idx)?;
            let modulated = g.mul(z, pair_gains)?;
            let biased = g.add_row(modulated, b)?;
            h = g.relu(biased);
        }
        let tafes = h;
        let (cw, cb) = self.classifier_vars();
        let col = g.matmul(tafes, cw)?;
        let col = g.add_row(col, cb)?;
        let logits = g.reshape(col, &[n, t])?;
        Ok(PairOutputs {
            embeddings,
            tafes,
            logits,
        })
    }
}
