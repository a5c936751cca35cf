//! Message-passing convolution layers.
//!
//! Layer `t` maps the current vertex representations `H` to
//!
//! ```text
//! h'_v = ReLU(W · [h_v ; Σ_{w ∈ N(v)} h_w] + b)
//! ```
//!
//! i.e. the message from a neighbor is its representation, aggregated by sum
//! over the full neighborhood, and the update concatenates the vertex's own
//! representation with the aggregated message. The input representations of
//! the first layer are the one-hot vertex labels.

use ndarray::{s, Array1, Array2, ArrayView2, ArrayViewMut1, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{one_hot, LabeledGraph};
use crate::error::{Error, Result};

/// Weights and bias of one convolution layer.
///
/// `weight` is `out_dim × 2·in_dim`: the left half multiplies the vertex's
/// own representation, the right half the aggregated message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvLayerParams {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl ConvLayerParams {
    pub fn new(weight: Array2<f64>, bias: Array1<f64>) -> Result<Self> {
        if weight.ncols() == 0 || !weight.ncols().is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "layer weight needs an even, non-zero column count, got {}",
                weight.ncols()
            )));
        }
        if bias.len() != weight.nrows() {
            return Err(Error::dims("layer bias", weight.nrows(), bias.len()));
        }
        Ok(Self { weight, bias })
    }

    pub fn in_dim(&self) -> usize {
        self.weight.ncols() / 2
    }

    pub fn out_dim(&self) -> usize {
        self.weight.nrows()
    }
}

/// The ordered sequence of convolution layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvStack {
    layers: Vec<ConvLayerParams>,
}

impl ConvStack {
    pub fn new(layers: Vec<ConvLayerParams>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Empty("convolution stack has no layers"));
        }
        for pair in layers.windows(2) {
            if pair[1].in_dim() != pair[0].out_dim() {
                return Err(Error::dims("layer input width", pair[0].out_dim(), pair[1].in_dim()));
            }
        }
        Ok(Self { layers })
    }

    /// Kaiming-initialized weights and zero biases for `depth` layers mapping
    /// `input_dim` to `hidden_dim` and then `hidden_dim` to `hidden_dim`.
    pub fn kaiming<R: Rng + ?Sized>(input_dim: usize, hidden_dim: usize, depth: usize, rng: &mut R) -> Result<Self> {
        let mut layers = Vec::with_capacity(depth);
        let mut in_dim = input_dim;
        for _ in 0..depth {
            let weight = kaiming_init(hidden_dim, 2 * in_dim, rng)?;
            layers.push(ConvLayerParams::new(weight, Array1::zeros(hidden_dim))?);
            in_dim = hidden_dim;
        }
        Self::new(layers)
    }

    pub fn layers(&self) -> &[ConvLayerParams] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [ConvLayerParams] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    /// Embedding dimension `m` of the final layer.
    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, ConvLayerParams::out_dim)
    }
}

/// The vertex embeddings of one graph, one row per vertex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSet {
    vectors: Array2<f64>,
}

impl EmbeddingSet {
    pub fn new(vectors: Array2<f64>) -> Self {
        // kernels walk rows as contiguous slices
        let vectors = if vectors.is_standard_layout() {
            vectors
        } else {
            vectors.as_standard_layout().into_owned()
        };
        Self { vectors }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        let mut flat = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::dims("embedding row", dim, row.len()));
            }
            flat.extend_from_slice(row);
        }
        let vectors = Array2::from_shape_vec((rows.len(), dim), flat).expect("shape checked above");
        Ok(Self { vectors })
    }

    pub fn len(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.nrows() == 0
    }

    /// Embedding dimension `m`.
    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn vectors(&self) -> &Array2<f64> {
        &self.vectors
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let m = self.dim();
        &self.vectors.as_slice().expect("standard layout")[i * m..(i + 1) * m]
    }

    pub(crate) fn as_flat(&self) -> &[f64] {
        self.vectors.as_slice().expect("standard layout")
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        let m = self.dim().max(1);
        self.as_flat().chunks_exact(m).take(self.len())
    }
}

/// Sum of the representations of the neighbors of `v`.
pub fn message(graph: &LabeledGraph, h: &Array2<f64>, v: usize) -> Result<Array1<f64>> {
    if h.nrows() != graph.vertex_count() {
        return Err(Error::dims("representation rows", graph.vertex_count(), h.nrows()));
    }
    if v >= graph.vertex_count() {
        return Err(Error::IndexOutOfRange {
            index: v,
            len: graph.vertex_count(),
        });
    }
    let mut out = Array1::zeros(h.ncols());
    add_neighbor_sum(graph, &h.view(), v, out.view_mut());
    Ok(out)
}

/// Adds the rows of `v`'s neighbors to `out`.
///
/// The rows are summed in ascending order of their values rather than of
/// vertex index, so the rounding of the sum depends only on the multiset of
/// neighbor rows. This keeps embeddings bitwise equivariant under vertex
/// relabeling.
fn add_neighbor_sum(graph: &LabeledGraph, h: &ArrayView2<f64>, v: usize, mut out: ArrayViewMut1<f64>) {
    let mut order = graph.neighbors(v).to_vec();
    if order.len() > 1 {
        order.sort_by(|&a, &b| {
            h.row(a)
                .iter()
                .zip(h.row(b))
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
    }
    for w in order {
        out += &h.row(w);
    }
}

/// `[H | A·H]` where `A` is the adjacency matrix.
fn concat_with_messages(graph: &LabeledGraph, h: &ArrayView2<f64>) -> Array2<f64> {
    let (n, d) = h.dim();
    let mut z = Array2::zeros((n, 2 * d));
    z.slice_mut(s![.., ..d]).assign(h);
    for v in 0..n {
        add_neighbor_sum(graph, h, v, z.slice_mut(s![v, d..]));
    }
    z
}

fn check_layer_input(graph: &LabeledGraph, h_in: &Array2<f64>, params: &ConvLayerParams) -> Result<()> {
    if h_in.nrows() != graph.vertex_count() {
        return Err(Error::dims("representation rows", graph.vertex_count(), h_in.nrows()));
    }
    if h_in.ncols() != params.in_dim() {
        return Err(Error::dims("layer input width", params.in_dim(), h_in.ncols()));
    }
    Ok(())
}

/// Applies one convolution layer to every vertex.
pub fn layer_forward(graph: &LabeledGraph, h_in: &Array2<f64>, params: &ConvLayerParams) -> Result<Array2<f64>> {
    check_layer_input(graph, h_in, params)?;
    let z = concat_with_messages(graph, &h_in.view());
    let mut out = z.dot(&params.weight.t()) + &params.bias;
    out.mapv_inplace(relu);
    Ok(out)
}

fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

fn check_stack(stack: &ConvStack, alphabet_size: usize) -> Result<()> {
    if stack.input_dim() != alphabet_size {
        return Err(Error::dims("first layer input width", alphabet_size, stack.input_dim()));
    }
    Ok(())
}

/// Runs the full stack on one graph, starting from its one-hot labels.
pub fn stack_forward(graph: &LabeledGraph, stack: &ConvStack, alphabet_size: usize) -> Result<EmbeddingSet> {
    check_stack(stack, alphabet_size)?;
    let mut h = one_hot(graph, alphabet_size)?;
    for layer in stack.layers() {
        h = layer_forward(graph, &h, layer)?;
    }
    Ok(EmbeddingSet::new(h))
}

/// Intermediate values of one layer kept for the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct LayerTrace {
    /// `[H_in | A·H_in]`
    concat: Array2<f64>,
    /// `concat · Wᵀ + b`, before the ReLU.
    pre: Array2<f64>,
}

/// Forward pass of one graph through the stack, retaining what backward needs.
#[derive(Debug, Clone)]
pub(crate) struct StackTrace {
    layers: Vec<LayerTrace>,
}

pub(crate) fn stack_forward_traced(
    graph: &LabeledGraph,
    stack: &ConvStack,
    alphabet_size: usize,
) -> Result<(EmbeddingSet, StackTrace)> {
    check_stack(stack, alphabet_size)?;
    let mut h = one_hot(graph, alphabet_size)?;
    let mut layers = Vec::with_capacity(stack.layers().len());
    for layer in stack.layers() {
        check_layer_input(graph, &h, layer)?;
        let concat = concat_with_messages(graph, &h.view());
        let pre = concat.dot(&layer.weight.t()) + &layer.bias;
        h = pre.mapv(relu);
        layers.push(LayerTrace { concat, pre });
    }
    Ok((EmbeddingSet::new(h), StackTrace { layers }))
}

/// Gradient of one layer's parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerGrad {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl LayerGrad {
    pub fn zeros_like(layer: &ConvLayerParams) -> Self {
        Self {
            weight: Array2::zeros(layer.weight.raw_dim()),
            bias: Array1::zeros(layer.bias.raw_dim()),
        }
    }
}

/// Back-propagates `d_out` (the gradient w.r.t. the final embeddings of one
/// graph) through the stack, accumulating into `grads`.
///
/// The ReLU derivative is taken as 0 at exactly 0.
pub(crate) fn stack_backward(
    graph: &LabeledGraph,
    stack: &ConvStack,
    trace: &StackTrace,
    d_out: Array2<f64>,
    grads: &mut [LayerGrad],
) {
    let mut delta = d_out;
    for (t, (layer, lt)) in stack.layers().iter().zip(&trace.layers).enumerate().rev() {
        // through the ReLU
        ndarray::Zip::from(&mut delta).and(&lt.pre).for_each(|d, &p| {
            if p <= 0.0 {
                *d = 0.0;
            }
        });
        grads[t].weight += &delta.t().dot(&lt.concat);
        grads[t].bias += &delta.sum_axis(Axis(0));
        if t == 0 {
            break;
        }
        let d_concat = delta.dot(&layer.weight);
        let d = layer.in_dim();
        let mut d_in = d_concat.slice(s![.., ..d]).to_owned();
        // message of v sums neighbors, so its gradient flows back to each neighbor
        for v in 0..graph.vertex_count() {
            let dm = d_concat.slice(s![v, d..]);
            for &w in graph.neighbors(v) {
                let mut row = d_in.row_mut(w);
                row += &dm;
            }
        }
        delta = d_in;
    }
}

/// Kaiming (He) normal initialization: i.i.d. `N(0, 2 / cols)` entries,
/// `cols` being the fan-in.
pub fn kaiming_init<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Result<Array2<f64>> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidParameter(format!(
            "kaiming init needs positive shape, got {rows}x{cols}"
        )));
    }
    let normal = Normal::new(0.0, (2.0 / cols as f64).sqrt()).expect("positive std");
    Ok(Array2::from_shape_simple_fn((rows, cols), || normal.sample(rng)))
}
