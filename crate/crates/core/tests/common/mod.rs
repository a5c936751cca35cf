//! Test oracles: a straight-line re-implementation of the model on plain
//! `Vec`s, instance generators and finite-difference helpers.

#![allow(dead_code)]

use gksvm_core::conv::{ConvLayerParams, ConvStack};
use gksvm_core::data::{DatasetBundle, LabeledGraph};
use gksvm_core::kernel::ScaleParams;
use gksvm_core::svm::SvmParams;
use gksvm_core::trainer::{backward, full_forward, ModelParams};
use ndarray::{Array1, Array2};
use rand::Rng;

/// Model parameters as nested vectors.
#[derive(Debug, Clone)]
pub struct RawModel {
    /// Per layer: weight rows, bias.
    pub layers: Vec<(Vec<Vec<f64>>, Vec<f64>)>,
    pub sigmas: Vec<f64>,
    pub betas: Vec<f64>,
    pub alpha: Vec<f64>,
    pub lambda: f64,
}

impl RawModel {
    pub fn from_params(p: &ModelParams) -> Self {
        let layers = p
            .stack
            .layers()
            .iter()
            .map(|l| (l.weight.outer_iter().map(|r| r.to_vec()).collect(), l.bias.to_vec()))
            .collect();
        Self {
            layers,
            sigmas: p.scales.sigmas().to_vec(),
            betas: p.scales.betas().to_vec(),
            alpha: p.svm.alpha.clone(),
            lambda: p.svm.lambda,
        }
    }

    pub fn to_params(&self) -> ModelParams {
        let layers = self
            .layers
            .iter()
            .map(|(w, b)| {
                let rows = w.len();
                let cols = w[0].len();
                let flat: Vec<f64> = w.iter().flatten().copied().collect();
                ConvLayerParams::new(Array2::from_shape_vec((rows, cols), flat).unwrap(), Array1::from(b.clone())).unwrap()
            })
            .collect();
        ModelParams {
            stack: ConvStack::new(layers).unwrap(),
            scales: ScaleParams::new(self.sigmas.clone(), self.betas.clone()).unwrap(),
            svm: SvmParams {
                alpha: self.alpha.clone(),
                lambda: self.lambda,
            },
        }
    }

    /// Every scalar parameter in a fixed order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in &self.layers {
            for row in w {
                out.extend(row);
            }
            out.extend(b);
        }
        out.extend(&self.sigmas);
        out.extend(&self.betas);
        out.extend(&self.alpha);
        out
    }

    /// Inverse of [`RawModel::flatten`] using `self` for the shapes.
    pub fn with_flat(&self, flat: &[f64]) -> Self {
        let mut it = flat.iter().copied();
        let mut next = || it.next().expect("enough values");
        let mut out = self.clone();
        for (w, b) in &mut out.layers {
            for row in w.iter_mut() {
                for x in row.iter_mut() {
                    *x = next();
                }
            }
            for x in b.iter_mut() {
                *x = next();
            }
        }
        for x in out.sigmas.iter_mut().chain(out.betas.iter_mut()).chain(out.alpha.iter_mut()) {
            *x = next();
        }
        out
    }
}

/// Which parameter group a flat index belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Group {
    Weight(usize),
    Bias(usize),
    Sigma,
    Beta,
    Alpha,
}

pub fn groups(model: &RawModel) -> Vec<Group> {
    let mut out = Vec::new();
    for (l, (w, b)) in model.layers.iter().enumerate() {
        out.extend(std::iter::repeat_n(Group::Weight(l), w.len() * w[0].len()));
        out.extend(std::iter::repeat_n(Group::Bias(l), b.len()));
    }
    out.extend(std::iter::repeat_n(Group::Sigma, model.sigmas.len()));
    out.extend(std::iter::repeat_n(Group::Beta, model.betas.len()));
    out.extend(std::iter::repeat_n(Group::Alpha, model.alpha.len()));
    out
}

/// A graph as plain data.
#[derive(Debug, Clone)]
pub struct ToyGraph {
    pub labels: Vec<usize>,
    pub edges: Vec<(usize, usize)>,
}

impl ToyGraph {
    pub fn to_graph(&self) -> LabeledGraph {
        LabeledGraph::new(self.labels.len(), &self.edges, self.labels.clone()).unwrap()
    }

    fn neighbors(&self, v: usize) -> Vec<usize> {
        let mut out = Vec::new();
        for &(a, b) in &self.edges {
            if a == v && b != v && !out.contains(&b) {
                out.push(b);
            } else if b == v && a != v && !out.contains(&a) {
                out.push(a);
            }
        }
        out
    }
}

/// Result of the straight-line forward pass.
#[derive(Debug, Clone)]
pub struct OracleEval {
    pub objective: f64,
    pub embeddings: Vec<Vec<Vec<f64>>>,
    pub gram: Vec<Vec<f64>>,
    /// Smallest |pre-activation| over every layer, vertex and unit.
    pub min_abs_pre: f64,
    /// Smallest |1 − y_i f_i| over the training set.
    pub min_margin_gap: f64,
}

/// Embeds one graph with explicit loops.
pub fn oracle_embed(model: &RawModel, g: &ToyGraph, alphabet: usize, min_abs_pre: &mut f64) -> Vec<Vec<f64>> {
    let n = g.labels.len();
    let mut h: Vec<Vec<f64>> = (0..n)
        .map(|v| {
            let mut e = vec![0.0; alphabet];
            e[g.labels[v]] = 1.0;
            e
        })
        .collect();
    for (w, b) in &model.layers {
        let mut next = Vec::with_capacity(n);
        for v in 0..n {
            let mut m = vec![0.0; h[v].len()];
            for u in g.neighbors(v) {
                for k in 0..m.len() {
                    m[k] += h[u][k];
                }
            }
            let mut input = h[v].clone();
            input.extend(m);
            let mut out = Vec::with_capacity(w.len());
            for (row, bias) in w.iter().zip(b) {
                let mut pre = *bias;
                for k in 0..row.len() {
                    pre += row[k] * input[k];
                }
                *min_abs_pre = min_abs_pre.min(pre.abs());
                out.push(if pre > 0.0 { pre } else { 0.0 });
            }
            next.push(out);
        }
        h = next;
    }
    h
}

/// Σ_{a∈x} Σ_{b∈y} exp(-‖a-b‖²/2σ²), written out.
pub fn oracle_set_kernel(x: &[Vec<f64>], y: &[Vec<f64>], sigma: f64) -> f64 {
    let mut total = 0.0;
    for a in x {
        for b in y {
            let mut d2 = 0.0;
            for k in 0..a.len() {
                d2 += (a[k] - b[k]) * (a[k] - b[k]);
            }
            total += (-d2 / (2.0 * sigma * sigma)).exp();
        }
    }
    total
}

/// Full objective with explicit loops.
pub fn oracle_objective(model: &RawModel, graphs: &[ToyGraph], classes: &[u8], alphabet: usize) -> OracleEval {
    let mut min_abs_pre = f64::INFINITY;
    let embeddings: Vec<_> = graphs.iter().map(|g| oracle_embed(model, g, alphabet, &mut min_abs_pre)).collect();
    let n = graphs.len();
    let mut gram = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            for l in 0..model.sigmas.len() {
                gram[i][j] += model.betas[l] * oracle_set_kernel(&embeddings[i], &embeddings[j], model.sigmas[l]);
            }
        }
    }
    let mut objective = 0.0;
    let mut min_margin_gap = f64::INFINITY;
    for i in 0..n {
        let y = if classes[i] == 1 { 1.0 } else { -1.0 };
        let mut f = 0.0;
        for j in 0..n {
            f += gram[i][j] * model.alpha[j];
        }
        let slack = 1.0 - y * f;
        min_margin_gap = min_margin_gap.min(slack.abs());
        if slack > 0.0 {
            objective += slack;
        }
    }
    let mut reg = 0.0;
    for i in 0..n {
        for j in 0..n {
            reg += model.alpha[i] * gram[i][j] * model.alpha[j];
        }
    }
    objective += model.lambda * reg;
    OracleEval {
        objective,
        embeddings,
        gram,
        min_abs_pre,
        min_margin_gap,
    }
}

/// Random connected-ish graph with up to `max_vertices` vertices.
pub fn random_toy_graph<R: Rng>(rng: &mut R, max_vertices: usize, alphabet: usize) -> ToyGraph {
    let n = rng.random_range(1..=max_vertices);
    let labels = (0..n).map(|_| rng.random_range(0..alphabet)).collect();
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.random_bool(0.5) {
                edges.push((a, b));
            }
        }
    }
    ToyGraph { labels, edges }
}

/// A random small training instance: graphs, classes with both present, and
/// a model with random parameters.
pub struct Instance {
    pub graphs: Vec<ToyGraph>,
    pub classes: Vec<u8>,
    pub alphabet: usize,
    pub model: RawModel,
}

impl Instance {
    pub fn random<R: Rng>(rng: &mut R) -> Self {
        let alphabet = rng.random_range(2..=3);
        let n = rng.random_range(3..=6);
        let graphs: Vec<ToyGraph> = (0..n).map(|_| random_toy_graph(rng, 4, alphabet)).collect();
        let mut classes: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        classes[0] = 0;
        classes[1] = 1;
        let hidden = rng.random_range(1..=3);
        let s = rng.random_range(1..=2);
        let dims = [alphabet, hidden, hidden];
        let layers = (0..2)
            .map(|l| {
                let w = (0..dims[l + 1])
                    .map(|_| (0..2 * dims[l]).map(|_| rng.random_range(-1.0..1.0)).collect())
                    .collect();
                let b = (0..dims[l + 1]).map(|_| rng.random_range(-0.5..0.5)).collect();
                (w, b)
            })
            .collect();
        let model = RawModel {
            layers,
            sigmas: (0..s).map(|_| rng.random_range(0.5..2.0)).collect(),
            betas: (0..s).map(|_| rng.random_range(0.2..1.5)).collect(),
            alpha: (0..n).map(|_| rng.random_range(-0.6..0.6)).collect(),
            lambda: rng.random_range(0.0..2.0),
        };
        Self {
            graphs,
            classes,
            alphabet,
            model,
        }
    }

    pub fn lib_graphs(&self) -> Vec<LabeledGraph> {
        self.graphs.iter().map(ToyGraph::to_graph).collect()
    }

    pub fn oracle(&self, model: &RawModel) -> OracleEval {
        oracle_objective(model, &self.graphs, &self.classes, self.alphabet)
    }
}

/// Worst gradient disagreement of one instance, split by parameter kind.
#[derive(Debug, Clone, Copy, Default)]
pub struct GradCheck {
    pub worst_rel: f64,
    pub worst_rel_beta: f64,
    pub coordinates: usize,
}

/// Relative error with a floor on the scale so that exact zeros compare on
/// an absolute basis.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-4)
}

pub const FD_STEP: f64 = 1e-5;
pub const KINK_MARGIN: f64 = 1e-3;

/// Compares library gradients with central differences of the oracle
/// objective. `None` when the instance is too close to a kink.
pub fn gradient_check(inst: &Instance) -> Option<GradCheck> {
    let base = inst.oracle(&inst.model);
    if base.min_abs_pre < KINK_MARGIN || base.min_margin_gap < KINK_MARGIN {
        return None;
    }
    let params = inst.model.to_params();
    let graphs = inst.lib_graphs();
    let fwd = full_forward(&params, &graphs, &inst.classes, inst.alphabet).unwrap();
    let grads = backward(&params, &fwd);

    let mut analytic = Vec::new();
    for layer in &grads.layers {
        analytic.extend(layer.weight.iter());
        analytic.extend(layer.bias.iter());
    }
    analytic.extend(&grads.sigmas);
    analytic.extend(&grads.betas);
    analytic.extend(&grads.alpha);

    let flat = inst.model.flatten();
    let kinds = groups(&inst.model);
    assert_eq!(analytic.len(), flat.len());
    let mut check = GradCheck::default();
    for (idx, kind) in kinds.iter().enumerate() {
        let mut plus = flat.clone();
        plus[idx] += FD_STEP;
        let mut minus = flat.clone();
        minus[idx] -= FD_STEP;
        let fp = inst.oracle(&inst.model.with_flat(&plus)).objective;
        let fm = inst.oracle(&inst.model.with_flat(&minus)).objective;
        let numeric = (fp - fm) / (2.0 * FD_STEP);
        let err = rel_err(analytic[idx], numeric);
        if *kind == Group::Beta {
            check.worst_rel_beta = check.worst_rel_beta.max(err);
        } else {
            check.worst_rel = check.worst_rel.max(err);
        }
        check.coordinates += 1;
    }
    Some(check)
}

/// Two graph families that differ only in vertex label: paths and cycles
/// over label 0 for class 0, the same shapes over label 1 for class 1.
pub fn separable_dataset(per_class: usize) -> DatasetBundle {
    let mut graphs = Vec::new();
    let mut classes = Vec::new();
    for class in 0..2u8 {
        for k in 0..per_class {
            let n = 3 + k % 4;
            let mut edges: Vec<(usize, usize)> = (0..n - 1).map(|v| (v, v + 1)).collect();
            if k % 2 == 1 {
                edges.push((n - 1, 0));
            }
            graphs.push(LabeledGraph::new(n, &edges, vec![class as usize; n]).unwrap());
            classes.push(class);
        }
    }
    DatasetBundle::new("SEPARABLE", graphs, classes, 2).unwrap()
}
