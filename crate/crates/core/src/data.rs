//! Graph datasets in the TU Dortmund text format.
//!
//! A dataset `NAME` lives in a directory holding four files:
//!
//! - `NAME_A.txt`: one `i, j` line per directed edge, 1-based global vertex ids.
//! - `NAME_graph_indicator.txt`: the 1-based graph id of every vertex.
//! - `NAME_graph_labels.txt`: one integer class label per graph.
//! - `NAME_node_labels.txt`: one integer label per vertex.
//!
//! Edges are stored in both directions in the files; internally each
//! unordered pair is kept once. Any other files (edge labels, attributes)
//! are ignored.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// An undirected graph with a discrete label on every vertex.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledGraph {
    vertex_count: usize,
    edges: Vec<(usize, usize)>,
    vertex_labels: Vec<usize>,
    adjacency: Vec<Vec<usize>>,
}

impl LabeledGraph {
    /// Builds a graph from 0-based edge endpoints.
    ///
    /// Each unordered pair is kept once (sorted, `u < v`) and self-loops are
    /// dropped with a warning.
    pub fn new(vertex_count: usize, edges: &[(usize, usize)], vertex_labels: Vec<usize>) -> Result<Self> {
        if vertex_count == 0 {
            return Err(Error::Empty("graph with no vertices"));
        }
        if vertex_labels.len() != vertex_count {
            return Err(Error::dims("vertex labels", vertex_count, vertex_labels.len()));
        }
        let mut pairs = BTreeSet::new();
        let mut self_loops = 0usize;
        for &(a, b) in edges {
            if a >= vertex_count || b >= vertex_count {
                return Err(Error::UnknownVertex {
                    from: a + 1,
                    to: b + 1,
                    vertex_count,
                });
            }
            if a == b {
                self_loops += 1;
                continue;
            }
            pairs.insert((a.min(b), a.max(b)));
        }
        if self_loops > 0 {
            warn!("dropped {self_loops} self-loop(s)");
        }
        let edges: Vec<(usize, usize)> = pairs.into_iter().collect();
        let mut adjacency = vec![Vec::new(); vertex_count];
        for &(a, b) in &edges {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok(Self {
            vertex_count,
            edges,
            vertex_labels,
            adjacency,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    /// Undirected edges as sorted `(u, v)` pairs with `u < v`.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn vertex_labels(&self) -> &[usize] {
        &self.vertex_labels
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    /// Relabels vertices: vertex `v` of `self` becomes vertex `perm[v]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.vertex_count {
            return Err(Error::dims("permutation", self.vertex_count, perm.len()));
        }
        let mut seen = vec![false; perm.len()];
        for &p in perm {
            if p >= perm.len() || seen[p] {
                return Err(Error::InvalidParameter("not a permutation".into()));
            }
            seen[p] = true;
        }
        let mut labels = vec![0; self.vertex_count];
        for (v, &p) in perm.iter().enumerate() {
            labels[p] = self.vertex_labels[v];
        }
        let edges: Vec<_> = self.edges.iter().map(|&(a, b)| (perm[a], perm[b])).collect();
        Self::new(self.vertex_count, &edges, labels)
    }
}

/// A labeled binary classification dataset of graphs.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub name: String,
    pub graphs: Vec<LabeledGraph>,
    /// Class of each graph, in `{0, 1}`.
    pub class_labels: Vec<u8>,
    /// Number of distinct vertex labels.
    pub alphabet_size: usize,
}

impl DatasetBundle {
    pub fn new(name: impl Into<String>, graphs: Vec<LabeledGraph>, class_labels: Vec<u8>, alphabet_size: usize) -> Result<Self> {
        if graphs.len() != class_labels.len() {
            return Err(Error::dims("class labels", graphs.len(), class_labels.len()));
        }
        if let Some(&bad) = class_labels.iter().find(|&&c| c > 1) {
            return Err(Error::InvalidParameter(format!("class label {bad} not in {{0,1}}")));
        }
        if alphabet_size == 0 {
            return Err(Error::InvalidParameter("alphabet size must be positive".into()));
        }
        for g in &graphs {
            if let Some(&label) = g.vertex_labels().iter().find(|&&l| l >= alphabet_size) {
                return Err(Error::LabelOutOfRange { label, alphabet_size });
            }
        }
        Ok(Self {
            name: name.into(),
            graphs,
            class_labels,
            alphabet_size,
        })
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    /// Clones the graphs and labels at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> (Vec<LabeledGraph>, Vec<u8>) {
        let graphs = indices.iter().map(|&i| self.graphs[i].clone()).collect();
        let labels = indices.iter().map(|&i| self.class_labels[i]).collect();
        (graphs, labels)
    }
}

fn tu_path(dir: &Path, name: &str, suffix: &str) -> PathBuf {
    dir.join(format!("{name}_{suffix}.txt"))
}

/// Reads the non-empty lines of a file, keeping 1-based line numbers.
fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.trim().to_string()))
        .collect())
}

fn parse_int(path: &Path, line: usize, token: &str) -> Result<i64> {
    token.trim().parse::<i64>().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        message: format!("expected an integer, found {:?}", token.trim()),
    })
}

fn parse_column(path: &Path) -> Result<Vec<i64>> {
    read_lines(path)?
        .iter()
        .map(|(line, text)| parse_int(path, *line, text))
        .collect()
}

/// Parses dataset `name` from `directory`.
///
/// The files may sit directly in `directory` or in a `name` subdirectory of
/// it, the layout of the unpacked TU archives. Graph labels are remapped by ascending raw value onto `{0, 1}` and vertex
/// labels onto the dense range `0..alphabet_size`.
pub fn parse_tu_dataset(directory: impl AsRef<Path>, name: &str) -> Result<DatasetBundle> {
    let mut dir = directory.as_ref().to_path_buf();
    if !tu_path(&dir, name, "A").is_file() && tu_path(&dir.join(name), name, "A").is_file() {
        dir = dir.join(name);
    }
    let dir = dir.as_path();
    let a_path = tu_path(dir, name, "A");
    let indicator_path = tu_path(dir, name, "graph_indicator");
    let graph_label_path = tu_path(dir, name, "graph_labels");
    let node_label_path = tu_path(dir, name, "node_labels");
    for p in [&a_path, &indicator_path, &graph_label_path, &node_label_path] {
        if !p.is_file() {
            return Err(Error::io(
                p.clone(),
                std::io::Error::new(std::io::ErrorKind::NotFound, "missing dataset file"),
            ));
        }
    }

    let indicator = parse_column(&indicator_path)?;
    let raw_graph_labels = parse_column(&graph_label_path)?;
    let raw_node_labels = parse_column(&node_label_path)?;
    let total_vertices = indicator.len();
    let graph_count = raw_graph_labels.len();

    if raw_node_labels.len() != total_vertices {
        return Err(Error::dims("node label lines", total_vertices, raw_node_labels.len()));
    }

    // global vertex -> (graph, local index)
    let mut vertices_per_graph = vec![0usize; graph_count];
    let mut location = Vec::with_capacity(total_vertices);
    for (v, &g) in indicator.iter().enumerate() {
        if g < 1 || g as usize > graph_count {
            return Err(Error::Parse {
                path: indicator_path.clone(),
                line: v + 1,
                message: format!("graph id {g} outside 1..={graph_count}"),
            });
        }
        let g = g as usize - 1;
        location.push((g, vertices_per_graph[g]));
        vertices_per_graph[g] += 1;
    }
    if let Some(empty) = vertices_per_graph.iter().position(|&c| c == 0) {
        return Err(Error::Parse {
            path: indicator_path,
            line: 0,
            message: format!("graph {} has no vertices", empty + 1),
        });
    }

    let mut edges_per_graph: Vec<Vec<(usize, usize)>> = vec![Vec::new(); graph_count];
    for (line, text) in read_lines(&a_path)? {
        let mut parts = text.split(',');
        let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::Parse {
                path: a_path,
                line,
                message: format!("expected `i, j`, found {text:?}"),
            });
        };
        let a = parse_int(&a_path, line, a)?;
        let b = parse_int(&a_path, line, b)?;
        let in_range = |x: i64| x >= 1 && x as usize <= total_vertices;
        if !in_range(a) || !in_range(b) {
            return Err(Error::UnknownVertex {
                from: a.max(0) as usize,
                to: b.max(0) as usize,
                vertex_count: total_vertices,
            });
        }
        let (ga, la) = location[a as usize - 1];
        let (gb, lb) = location[b as usize - 1];
        if ga != gb {
            return Err(Error::Parse {
                path: a_path,
                line,
                message: format!("edge joins graphs {} and {}", ga + 1, gb + 1),
            });
        }
        edges_per_graph[ga].push((la, lb));
    }

    let distinct_graph_labels: BTreeSet<i64> = raw_graph_labels.iter().copied().collect();
    if distinct_graph_labels.len() > 2 {
        return Err(Error::TooManyGraphLabels(distinct_graph_labels.into_iter().collect()));
    }
    let class_of: BTreeMap<i64, u8> = distinct_graph_labels
        .iter()
        .enumerate()
        .map(|(i, &raw)| (raw, i as u8))
        .collect();
    let class_labels = raw_graph_labels.iter().map(|raw| class_of[raw]).collect();

    let alphabet: BTreeMap<i64, usize> = raw_node_labels
        .iter()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .enumerate()
        .map(|(i, raw)| (raw, i))
        .collect();
    let mut labels_per_graph: Vec<Vec<usize>> = vertices_per_graph.iter().map(|&c| Vec::with_capacity(c)).collect();
    for (v, raw) in raw_node_labels.iter().enumerate() {
        labels_per_graph[location[v].0].push(alphabet[raw]);
    }

    let graphs = labels_per_graph
        .into_iter()
        .zip(edges_per_graph)
        .zip(&vertices_per_graph)
        .map(|((labels, edges), &count)| LabeledGraph::new(count, &edges, labels))
        .collect::<Result<Vec<_>>>()?;

    DatasetBundle::new(name, graphs, class_labels, alphabet.len())
}

/// Writes `bundle` as TU-format files into `directory` (which must exist).
///
/// Class labels are written as `0`/`1` and vertex labels as their dense
/// indices, so parsing the output reproduces the bundle.
pub fn write_tu_dataset(bundle: &DatasetBundle, directory: impl AsRef<Path>) -> Result<()> {
    use std::fmt::Write as _;

    let dir = directory.as_ref();
    let name = bundle.name.as_str();
    let (mut a, mut indicator, mut graph_labels, mut node_labels) =
        (String::new(), String::new(), String::new(), String::new());
    let mut offset = 0usize;
    for (g, (graph, class)) in bundle.graphs.iter().zip(&bundle.class_labels).enumerate() {
        for &(u, v) in graph.edges() {
            let (u, v) = (offset + u + 1, offset + v + 1);
            writeln!(a, "{u}, {v}").unwrap();
            writeln!(a, "{v}, {u}").unwrap();
        }
        for &label in graph.vertex_labels() {
            writeln!(indicator, "{}", g + 1).unwrap();
            writeln!(node_labels, "{label}").unwrap();
        }
        writeln!(graph_labels, "{class}").unwrap();
        offset += graph.vertex_count();
    }
    for (suffix, body) in [
        ("A", a),
        ("graph_indicator", indicator),
        ("graph_labels", graph_labels),
        ("node_labels", node_labels),
    ] {
        let path = tu_path(dir, name, suffix);
        fs::write(&path, body).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// One-hot encodes vertex labels: row `v` has a single 1.0 in column `label(v)`.
pub fn one_hot(graph: &LabeledGraph, alphabet_size: usize) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((graph.vertex_count(), alphabet_size));
    for (v, &label) in graph.vertex_labels().iter().enumerate() {
        if label >= alphabet_size {
            return Err(Error::LabelOutOfRange { label, alphabet_size });
        }
        out[[v, label]] = 1.0;
    }
    Ok(out)
}

/// Summary statistics of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetStats {
    pub name: String,
    pub n: usize,
    pub mean_vertices: f64,
    /// Mean number of undirected edges.
    pub mean_edges: f64,
    pub class_counts: [usize; 2],
}

impl DatasetStats {
    pub const CSV_HEADER: &'static str = "dataset,n_graphs,mean_vertices,mean_edges,n_class0,n_class1";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.name, self.n, self.mean_vertices, self.mean_edges, self.class_counts[0], self.class_counts[1]
        )
    }
}

pub fn dataset_stats(bundle: &DatasetBundle) -> Result<DatasetStats> {
    if bundle.is_empty() {
        return Err(Error::Empty("dataset has no graphs"));
    }
    let n = bundle.len();
    let vertices: usize = bundle.graphs.iter().map(LabeledGraph::vertex_count).sum();
    let edges: usize = bundle.graphs.iter().map(LabeledGraph::edge_count).sum();
    let mut class_counts = [0usize; 2];
    for &c in &bundle.class_labels {
        class_counts[c as usize] += 1;
    }
    Ok(DatasetStats {
        name: bundle.name.clone(),
        n,
        mean_vertices: vertices as f64 / n as f64,
        mean_edges: edges as f64 / n as f64,
        class_counts,
    })
}

/// Stratified assignment of graphs to `k` test folds, plus one validation
/// fold per test fold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    pub k: usize,
    /// Test fold of each graph.
    pub test_fold_of: Vec<usize>,
    /// For each outer (test) fold, the fold used for validation.
    pub validation_fold_of: Vec<usize>,
}

impl FoldAssignment {
    fn members(&self, keep: impl Fn(usize) -> bool) -> Vec<usize> {
        self.test_fold_of
            .iter()
            .enumerate()
            .filter(|&(_, &f)| keep(f))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn fold_indices(&self, fold: usize) -> Vec<usize> {
        self.members(|f| f == fold)
    }

    pub fn test_indices(&self, outer: usize) -> Vec<usize> {
        self.fold_indices(outer)
    }

    pub fn validation_indices(&self, outer: usize) -> Vec<usize> {
        self.fold_indices(self.validation_fold_of[outer])
    }

    /// Graphs in neither the test nor the validation fold of `outer`.
    pub fn train_indices(&self, outer: usize) -> Vec<usize> {
        let val = self.validation_fold_of[outer];
        self.members(|f| f != outer && f != val)
    }

    /// Every graph outside the test fold of `outer`.
    pub fn non_test_indices(&self, outer: usize) -> Vec<usize> {
        self.members(|f| f != outer)
    }
}

/// Splits graphs into `k` stratified folds.
///
/// Within each class the indices are shuffled and dealt round-robin, the
/// deal continuing across classes so fold sizes differ by at most one.
pub fn stratified_folds(class_labels: &[u8], k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!("k = {k}, need at least 2 folds")));
    }
    if let Some(&bad) = class_labels.iter().find(|&&c| c > 1) {
        return Err(Error::InvalidParameter(format!("class label {bad} not in {{0,1}}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut test_fold_of = vec![0usize; class_labels.len()];
    let mut position = 0usize;
    for class in 0..=1u8 {
        let mut members: Vec<usize> = (0..class_labels.len()).filter(|&i| class_labels[i] == class).collect();
        if members.len() < k {
            return Err(Error::InsufficientClassMembers {
                class,
                count: members.len(),
                k,
            });
        }
        members.shuffle(&mut rng);
        for i in members {
            test_fold_of[i] = position % k;
            position += 1;
        }
    }
    let validation_fold_of = (0..k)
        .map(|test| {
            let draw = rng.random_range(0..k - 1);
            if draw >= test {
                draw + 1
            } else {
                draw
            }
        })
        .collect();
    Ok(FoldAssignment {
        k,
        test_fold_of,
        validation_fold_of,
    })
}
