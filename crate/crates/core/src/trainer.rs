//! Joint end-to-end training.
//!
//! Every epoch runs one full-batch step: embed all training graphs, build the
//! complete Gram matrix, evaluate the regularized hinge objective, back-propagate
//! to every parameter (convolution weights and biases, kernel scales and
//! weights, SVM coefficients), take an Adam step and project the kernel
//! parameters back onto `σ ≥ σ_min`, `β ≥ 0`.

use std::fs;
use std::path::Path;

use log::debug;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conv::{stack_backward, stack_forward, stack_forward_traced, ConvStack, EmbeddingSet, LayerGrad, StackTrace};
use crate::data::LabeledGraph;
use crate::error::{Error, Result};
use crate::kernel::{cross_gram, gram, gram_backward, GramMatrix, ScaleParams, SIGMA_MIN};
use crate::svm::{self, objective_with_grad, SignedLabels, SvmParams};

/// Number of convolution layers in the model.
pub const CONV_DEPTH: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    /// Number of kernel scales `s`.
    pub scale_count: usize,
    pub hidden_dim: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            learning_rate: 0.001,
            lambda: 0.5,
            scale_count: 2,
            hidden_dim: 25,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidParameter("epochs must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidParameter(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::InvalidParameter(format!("lambda {} must be non-negative", self.lambda)));
        }
        if self.scale_count == 0 {
            return Err(Error::InvalidParameter("need at least one kernel scale".into()));
        }
        if self.hidden_dim == 0 {
            return Err(Error::InvalidParameter("hidden dimension must be positive".into()));
        }
        Ok(())
    }
}

/// Every trainable parameter of the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub stack: ConvStack,
    pub scales: ScaleParams,
    pub svm: SvmParams,
}

impl ModelParams {
    /// Initial parameters: Kaiming weights, zero biases, `σ_l = 2^-(l-1)`,
    /// `β_l = 1`, and `α = 0`.
    pub fn init(config: &TrainConfig, alphabet_size: usize, n_train: usize) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Self {
            stack: ConvStack::kaiming(alphabet_size, config.hidden_dim, CONV_DEPTH, &mut rng)?,
            scales: ScaleParams::halving(config.scale_count)?,
            svm: SvmParams::zeros(n_train, config.lambda)?,
        })
    }

    /// Flat views of every trainable group, in a fixed order.
    fn groups_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for layer in self.stack.layers_mut() {
            out.push(layer.weight.as_slice_mut().expect("standard layout"));
            out.push(layer.bias.as_slice_mut().expect("standard layout"));
        }
        let (sigmas, betas) = self.scales.both_mut();
        out.push(sigmas);
        out.push(betas);
        out.push(&mut self.svm.alpha);
        out
    }
}

/// Gradients shaped like [`ModelParams`] (λ is not trained).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
    pub sigmas: Vec<f64>,
    pub betas: Vec<f64>,
    pub alpha: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(params: &ModelParams) -> Self {
        Self {
            layers: params.stack.layers().iter().map(LayerGrad::zeros_like).collect(),
            sigmas: vec![0.0; params.scales.len()],
            betas: vec![0.0; params.scales.len()],
            alpha: vec![0.0; params.svm.alpha.len()],
        }
    }

    fn groups(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for layer in &self.layers {
            out.push(layer.weight.as_slice().expect("standard layout"));
            out.push(layer.bias.as_slice().expect("standard layout"));
        }
        out.push(&self.sigmas);
        out.push(&self.betas);
        out.push(&self.alpha);
        out
    }
}

/// Everything [`backward`] needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardArtifacts<'g> {
    graphs: &'g [LabeledGraph],
    labels: SignedLabels,
    traces: Vec<StackTrace>,
    pub sets: Vec<EmbeddingSet>,
    pub gram: GramMatrix,
    pub objective: f64,
}

fn check_training_set(params: &ModelParams, graphs: &[LabeledGraph], labels: &[u8]) -> Result<()> {
    if graphs.len() != labels.len() {
        return Err(Error::dims("training labels", graphs.len(), labels.len()));
    }
    if params.svm.alpha.len() != graphs.len() {
        return Err(Error::dims("alpha", graphs.len(), params.svm.alpha.len()));
    }
    Ok(())
}

/// Embeds every graph, builds the Gram matrix and evaluates the objective.
pub fn full_forward<'g>(
    params: &ModelParams,
    graphs: &'g [LabeledGraph],
    labels: &[u8],
    alphabet_size: usize,
) -> Result<ForwardArtifacts<'g>> {
    check_training_set(params, graphs, labels)?;
    let signed = SignedLabels::from_classes(labels)?;
    let mut sets = Vec::with_capacity(graphs.len());
    let mut traces = Vec::with_capacity(graphs.len());
    for g in graphs {
        let (set, trace) = stack_forward_traced(g, &params.stack, alphabet_size)?;
        sets.push(set);
        traces.push(trace);
    }
    let gram = gram(&sets, &params.scales)?;
    let objective = svm::objective(gram.values(), &params.svm.alpha, &signed, params.svm.lambda)?;
    Ok(ForwardArtifacts {
        graphs,
        labels: signed,
        traces,
        sets,
        gram,
        objective,
    })
}

/// Reverse-mode gradient of the objective w.r.t. every parameter.
///
/// Subgradients: 0 for a hinge term at margin exactly 1 and for a ReLU at
/// input exactly 0.
pub fn backward(params: &ModelParams, fwd: &ForwardArtifacts<'_>) -> Gradients {
    backward_with_decision(params, fwd).0
}

fn backward_with_decision(params: &ModelParams, fwd: &ForwardArtifacts<'_>) -> (Gradients, Vec<f64>) {
    let og = objective_with_grad(fwd.gram.values(), &params.svm.alpha, &fwd.labels, params.svm.lambda)
        .expect("shapes validated by full_forward");
    let kg = gram_backward(&fwd.sets, &params.scales, &fwd.gram, &og.d_k);
    let mut grads = Gradients::zeros_like(params);
    for ((graph, trace), d_set) in fwd.graphs.iter().zip(&fwd.traces).zip(kg.sets) {
        stack_backward(graph, &params.stack, trace, d_set, &mut grads.layers);
    }
    grads.sigmas = kg.sigmas;
    grads.betas = kg.betas;
    grads.alpha = og.d_alpha;
    (grads, og.decision)
}

/// Adam optimizer state: one first/second moment per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step_count: u64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl AdamState {
    /// Zeroed moments shaped like `params`, decay rates 0.9/0.999, ε = 1e-8.
    pub fn new(params: &ModelParams, learning_rate: f64) -> Self {
        let shapes: Vec<usize> = Gradients::zeros_like(params).groups().iter().map(|g| g.len()).collect();
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step_count: 0,
            first_moment: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            second_moment: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(state: &mut AdamState, params: &mut ModelParams, grads: &Gradients) -> Result<()> {
    let grad_groups = grads.groups();
    let mut param_groups = params.groups_mut();
    if grad_groups.len() != param_groups.len() || state.first_moment.len() != param_groups.len() {
        return Err(Error::dims("parameter groups", param_groups.len(), grad_groups.len()));
    }
    for ((p, g), m) in param_groups.iter().zip(&grad_groups).zip(&state.first_moment) {
        if p.len() != g.len() || p.len() != m.len() {
            return Err(Error::dims("parameter group size", p.len(), g.len()));
        }
    }

    state.step_count += 1;
    let t = state.step_count as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let correction1 = 1.0 - b1.powi(t);
    let correction2 = 1.0 - b2.powi(t);
    for (((p, g), m), v) in param_groups
        .iter_mut()
        .zip(&grad_groups)
        .zip(&mut state.first_moment)
        .zip(&mut state.second_moment)
    {
        for i in 0..p.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let m_hat = m[i] / correction1;
            let v_hat = v[i] / correction2;
            p[i] -= state.learning_rate * m_hat / (v_hat.sqrt() + state.epsilon);
        }
    }
    Ok(())
}

/// Clamps kernel weights to `β ≥ 0` and scales to `σ ≥ σ_min`.
pub fn project(params: &mut ModelParams) {
    for b in params.scales.betas_mut() {
        *b = b.max(0.0);
    }
    for s in params.scales.sigmas_mut() {
        *s = s.max(SIGMA_MIN);
    }
}

/// Progress of one epoch, measured on the forward pass that precedes its
/// update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    /// 1-based epoch number.
    pub epoch: usize,
    pub objective: f64,
    pub train_accuracy: f64,
}

impl EpochRecord {
    pub const CSV_HEADER: &'static str = "epoch,objective,train_accuracy";

    pub fn csv_row(&self) -> String {
        format!("{},{},{}", self.epoch, self.objective, self.train_accuracy)
    }
}

/// Trains from scratch and returns the final parameters.
pub fn train(config: &TrainConfig, graphs: &[LabeledGraph], labels: &[u8], alphabet_size: usize) -> Result<ModelParams> {
    train_observed(config, graphs, labels, alphabet_size, |_, _| {})
}

/// Like [`train`], calling `observer` after every projected update with the
/// epoch's record and the updated parameters.
pub fn train_observed<F>(
    config: &TrainConfig,
    graphs: &[LabeledGraph],
    labels: &[u8],
    alphabet_size: usize,
    mut observer: F,
) -> Result<ModelParams>
where
    F: FnMut(&EpochRecord, &ModelParams),
{
    config.validate()?;
    if graphs.is_empty() {
        return Err(Error::Empty("training set"));
    }
    for class in 0..=1u8 {
        if !labels.contains(&class) {
            return Err(Error::SingleClass(1 - class));
        }
    }
    let mut params = ModelParams::init(config, alphabet_size, graphs.len())?;
    let mut adam = AdamState::new(&params, config.learning_rate);
    for epoch in 1..=config.epochs {
        let fwd = full_forward(&params, graphs, labels, alphabet_size)?;
        let (grads, decision) = backward_with_decision(&params, &fwd);
        let correct = decision.iter().zip(labels).filter(|(f, &c)| svm::predict(**f) == c).count();
        let record = EpochRecord {
            epoch,
            objective: fwd.objective,
            train_accuracy: correct as f64 / labels.len() as f64,
        };
        debug!("epoch {epoch}: objective {:.6} train acc {:.4}", record.objective, record.train_accuracy);
        adam_step(&mut adam, &mut params, &grads)?;
        project(&mut params);
        observer(&record, &params);
    }
    Ok(params)
}

/// Embeds each graph with the current convolution stack.
pub fn embed_graphs(params: &ModelParams, graphs: &[LabeledGraph], alphabet_size: usize) -> Result<Vec<EmbeddingSet>> {
    graphs.iter().map(|g| stack_forward(g, &params.stack, alphabet_size)).collect()
}

/// Decision values `f(x) = Σ_j α_j k(x, x_j)` for unseen graphs.
pub fn decision_function(
    params: &ModelParams,
    train_sets: &[EmbeddingSet],
    graphs: &[LabeledGraph],
    alphabet_size: usize,
) -> Result<Vec<f64>> {
    if train_sets.len() != params.svm.alpha.len() {
        return Err(Error::dims("training sets", params.svm.alpha.len(), train_sets.len()));
    }
    if graphs.is_empty() {
        return Ok(Vec::new());
    }
    let sets = embed_graphs(params, graphs, alphabet_size)?;
    let k = cross_gram(&sets, train_sets, &params.scales)?;
    svm::decision_values(&k, &params.svm.alpha)
}

/// Predicted classes for unseen graphs.
pub fn predict_graphs(
    params: &ModelParams,
    train_sets: &[EmbeddingSet],
    graphs: &[LabeledGraph],
    alphabet_size: usize,
) -> Result<Vec<u8>> {
    Ok(decision_function(params, train_sets, graphs, alphabet_size)?
        .into_iter()
        .map(svm::predict)
        .collect())
}

/// Trained parameters bundled with the training-set embeddings the decision
/// function expands over.
#[derive(Debug, Clone)]
pub struct Classifier {
    pub params: ModelParams,
    pub train_sets: Vec<EmbeddingSet>,
    pub alphabet_size: usize,
}

impl Classifier {
    pub fn fit(config: &TrainConfig, graphs: &[LabeledGraph], labels: &[u8], alphabet_size: usize) -> Result<Self> {
        let params = train(config, graphs, labels, alphabet_size)?;
        Self::from_params(params, graphs, alphabet_size)
    }

    pub fn from_params(params: ModelParams, train_graphs: &[LabeledGraph], alphabet_size: usize) -> Result<Self> {
        let train_sets = embed_graphs(&params, train_graphs, alphabet_size)?;
        Ok(Self {
            params,
            train_sets,
            alphabet_size,
        })
    }

    pub fn predict(&self, graphs: &[LabeledGraph]) -> Result<Vec<u8>> {
        predict_graphs(&self.params, &self.train_sets, graphs, self.alphabet_size)
    }
}

/// Where the training graphs of a checkpoint came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRef {
    pub directory: String,
    pub name: String,
    /// Dataset indices of the training graphs, in `α` order.
    pub train_indices: Vec<usize>,
}

/// Self-describing JSON snapshot of a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: TrainConfig,
    pub alphabet_size: usize,
    pub params: ModelParams,
    pub dataset: Option<DatasetRef>,
}

impl Checkpoint {
    pub const FORMAT_VERSION: u32 = 1;

    pub fn new(config: TrainConfig, alphabet_size: usize, params: ModelParams, dataset: Option<DatasetRef>) -> Self {
        Self {
            format_version: Self::FORMAT_VERSION,
            config,
            alphabet_size,
            params,
            dataset,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: Self = serde_json::from_str(text)?;
        if ckpt.format_version != Self::FORMAT_VERSION {
            return Err(Error::InvalidParameter(format!(
                "unsupported checkpoint version {}",
                ckpt.format_version
            )));
        }
        // re-validate invariants serde bypassed
        ConvStack::new(ckpt.params.stack.layers().to_vec())?;
        ScaleParams::new(ckpt.params.scales.sigmas().to_vec(), ckpt.params.scales.betas().to_vec())?;
        Ok(ckpt)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
