//! Undirected attributed graphs, edit overlays, and the symmetric normalized
//! propagation operator `D̃^{-1/2}(A + I)D̃^{-1/2}`.

use std::borrow::Cow;
use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::error::{Error, Result};
use crate::matrix::{CsrMatrix, DenseMatrix};

/// Unordered node pair stored as `(min, max)`.
pub type Edge = (usize, usize);

#[inline]
pub fn edge_key(a: usize, b: usize) -> Edge {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Undirected graph with binary word features, class labels and the
/// vocabulary/class-name tables that give those ids meaning.
///
/// Feature rows are stored as the sorted list of active word indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    node_count: usize,
    edges: BTreeSet<Edge>,
    adjacency: Vec<Vec<usize>>,
    features: Vec<Vec<usize>>,
    feature_dim: usize,
    labels: Vec<usize>,
    vocabulary: Vec<String>,
    class_names: Vec<String>,
}

impl Graph {
    /// Validates and builds a graph. Duplicate edges (in either orientation)
    /// collapse to one; self-loops are rejected.
    pub fn new(
        node_count: usize,
        edges: impl IntoIterator<Item = Edge>,
        features: Vec<Vec<usize>>,
        feature_dim: usize,
        labels: Vec<usize>,
        vocabulary: Vec<String>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        let mut edge_set = BTreeSet::new();
        for (a, b) in edges {
            if a >= node_count || b >= node_count {
                return Err(Error::InvalidGraph(format!(
                    "edge ({a},{b}) has endpoint outside 0..{node_count}"
                )));
            }
            if a == b {
                return Err(Error::InvalidGraph(format!("self-loop on node {a}")));
            }
            edge_set.insert(edge_key(a, b));
        }
        if features.len() != node_count || labels.len() != node_count {
            return Err(Error::InvalidGraph(format!(
                "{} feature rows and {} labels for {node_count} nodes",
                features.len(),
                labels.len()
            )));
        }
        let mut features = features;
        for (v, row) in features.iter_mut().enumerate() {
            row.sort_unstable();
            row.dedup();
            if row.last().is_some_and(|&w| w >= feature_dim) {
                return Err(Error::InvalidGraph(format!(
                    "node {v} has a word index outside 0..{feature_dim}"
                )));
            }
        }
        if vocabulary.len() != feature_dim {
            return Err(Error::InvalidGraph(format!(
                "vocabulary has {} words for feature_dim {feature_dim}",
                vocabulary.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&c| c >= class_names.len()) {
            return Err(Error::InvalidGraph(format!(
                "label {bad} outside 0..{}",
                class_names.len()
            )));
        }
        let distinct: BTreeSet<&String> = class_names.iter().collect();
        if distinct.len() != class_names.len() {
            return Err(Error::InvalidGraph("duplicate class names".into()));
        }
        let distinct: BTreeSet<&String> = vocabulary.iter().collect();
        if distinct.len() != vocabulary.len() {
            return Err(Error::InvalidGraph("duplicate vocabulary words".into()));
        }

        let mut adjacency = vec![Vec::new(); node_count];
        for &(a, b) in &edge_set {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok(Self {
            node_count,
            edges: edge_set,
            adjacency,
            features,
            feature_dim,
            labels,
            vocabulary,
            class_names,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &BTreeSet<Edge> {
        &self.edges
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    /// Active word indices of every node.
    pub fn feature_rows(&self) -> &[Vec<usize>] {
        &self.features
    }

    /// Sorted adjacency list of `v` in the unmodified graph.
    pub fn adjacency(&self, v: usize) -> Result<&[usize]> {
        self.check_node(v)?;
        Ok(&self.adjacency[v])
    }

    pub fn check_node(&self, v: usize) -> Result<()> {
        if v < self.node_count {
            Ok(())
        } else {
            Err(Error::NodeOutOfRange {
                node: v,
                node_count: self.node_count,
            })
        }
    }

    /// Features as a sparse binary `node_count × feature_dim` matrix.
    pub fn feature_matrix(&self) -> CsrMatrix {
        CsrMatrix::from_binary_rows(self.feature_dim, &self.features)
            .expect("feature rows validated on construction")
    }

    pub fn with_vocabulary(mut self, vocabulary: Vec<String>) -> Result<Self> {
        if vocabulary.len() != self.feature_dim {
            return Err(Error::Vocabulary(format!(
                "{} words for feature_dim {}",
                vocabulary.len(),
                self.feature_dim
            )));
        }
        self.vocabulary = vocabulary;
        Ok(self)
    }

    /// An overlay with no edits.
    pub fn view(&self) -> GraphView<'_> {
        GraphView::new(self)
    }
}

/// Read access shared by [`Graph`] and [`GraphView`].
pub trait GraphLike {
    fn base(&self) -> &Graph;

    /// Neighbor ids of `v` after any edits, ascending.
    fn neighbors(&self, v: usize) -> Result<BTreeSet<usize>>;

    /// Active word indices of `v` after any edits, ascending.
    fn feature_row(&self, v: usize) -> Result<Cow<'_, [usize]>>;

    /// Current edge set.
    fn current_edges(&self) -> Vec<Edge>;

    fn node_count(&self) -> usize {
        self.base().node_count
    }

    fn feature_dim(&self) -> usize {
        self.base().feature_dim
    }

    fn class_count(&self) -> usize {
        self.base().class_names.len()
    }

    /// Current features as a sparse binary matrix.
    fn feature_matrix(&self) -> CsrMatrix {
        let rows: Vec<Vec<usize>> = (0..self.node_count())
            .map(|v| self.feature_row(v).expect("in range").into_owned())
            .collect();
        CsrMatrix::from_binary_rows(self.feature_dim(), &rows).expect("rows validated")
    }
}

impl GraphLike for Graph {
    fn base(&self) -> &Graph {
        self
    }

    fn neighbors(&self, v: usize) -> Result<BTreeSet<usize>> {
        Ok(self.adjacency(v)?.iter().copied().collect())
    }

    fn feature_row(&self, v: usize) -> Result<Cow<'_, [usize]>> {
        self.check_node(v)?;
        Ok(Cow::Borrowed(&self.features[v]))
    }

    fn current_edges(&self) -> Vec<Edge> {
        self.edges.iter().copied().collect()
    }

    fn feature_matrix(&self) -> CsrMatrix {
        Graph::feature_matrix(self)
    }
}

/// A perturbed graph `G′`: the base graph with some edges deleted and some
/// feature rows replaced.
#[derive(Debug, Clone)]
pub struct GraphView<'a> {
    base: &'a Graph,
    deleted_edges: BTreeSet<Edge>,
    feature_overrides: BTreeMap<usize, Vec<usize>>,
}

impl<'a> GraphView<'a> {
    pub fn new(base: &'a Graph) -> Self {
        Self {
            base,
            deleted_edges: BTreeSet::new(),
            feature_overrides: BTreeMap::new(),
        }
    }

    /// Deletes an existing edge; deleting a non-edge is an error.
    pub fn delete_edge(&mut self, a: usize, b: usize) -> Result<()> {
        let key = edge_key(a, b);
        if !self.base.edges.contains(&key) {
            return Err(Error::InvalidGraph(format!(
                "cannot delete ({a},{b}): not an edge"
            )));
        }
        self.deleted_edges.insert(key);
        Ok(())
    }

    pub fn with_deleted_edges(mut self, edges: impl IntoIterator<Item = Edge>) -> Result<Self> {
        for (a, b) in edges {
            self.delete_edge(a, b)?;
        }
        Ok(self)
    }

    /// Replaces the feature row of `v` with the given active word indices.
    pub fn override_features(&mut self, v: usize, mut active: Vec<usize>) -> Result<()> {
        self.base.check_node(v)?;
        active.sort_unstable();
        active.dedup();
        if active.last().is_some_and(|&w| w >= self.base.feature_dim) {
            return Err(Error::Dimension(format!(
                "override for node {v} has a word outside 0..{}",
                self.base.feature_dim
            )));
        }
        self.feature_overrides.insert(v, active);
        Ok(())
    }

    /// Replaces the feature row of `v` with a dense binary row.
    pub fn override_binary_row(&mut self, v: usize, row: &[u8]) -> Result<()> {
        if row.len() != self.base.feature_dim {
            return Err(Error::Dimension(format!(
                "override row has {} entries, feature_dim is {}",
                row.len(),
                self.base.feature_dim
            )));
        }
        if row.iter().any(|&b| b > 1) {
            return Err(Error::InvalidGraph("feature rows must be binary".into()));
        }
        let active = row
            .iter()
            .enumerate()
            .filter(|(_, &b)| b == 1)
            .map(|(i, _)| i)
            .collect();
        self.override_features(v, active)
    }

    pub fn deleted_edges(&self) -> &BTreeSet<Edge> {
        &self.deleted_edges
    }

    pub fn feature_overrides(&self) -> &BTreeMap<usize, Vec<usize>> {
        &self.feature_overrides
    }
}

impl GraphLike for GraphView<'_> {
    fn base(&self) -> &Graph {
        self.base
    }

    fn neighbors(&self, v: usize) -> Result<BTreeSet<usize>> {
        Ok(self
            .base
            .adjacency(v)?
            .iter()
            .copied()
            .filter(|&u| !self.deleted_edges.contains(&edge_key(u, v)))
            .collect())
    }

    fn feature_row(&self, v: usize) -> Result<Cow<'_, [usize]>> {
        self.base.check_node(v)?;
        Ok(match self.feature_overrides.get(&v) {
            Some(row) => Cow::Borrowed(row.as_slice()),
            None => Cow::Borrowed(self.base.features[v].as_slice()),
        })
    }

    fn current_edges(&self) -> Vec<Edge> {
        self.base
            .edges
            .iter()
            .filter(|e| !self.deleted_edges.contains(e))
            .copied()
            .collect()
    }
}

/// Free-function form of [`GraphLike::neighbors`].
pub fn neighbors(g: &impl GraphLike, v: usize) -> Result<BTreeSet<usize>> {
    g.neighbors(v)
}

/// Dense `Â = D̃^{-1/2}(A + I)D̃^{-1/2}` for the current edges of `g`.
pub fn normalized_adjacency(g: &impl GraphLike) -> DenseMatrix {
    normalized_adjacency_sparse(g).to_dense()
}

/// Sparse form of [`normalized_adjacency`]; stores the diagonal and both
/// orientations of every edge.
pub fn normalized_adjacency_sparse(g: &impl GraphLike) -> CsrMatrix {
    let edges = g.current_edges();
    let weights = vec![1.0; edges.len()];
    weighted_normalized_adjacency(g.node_count(), &edges, &weights, None)
}

/// Normalized propagation operator for a graph whose edge `e` carries weight
/// `weights[e]` in `[0, 1]`. `extra_degree[i]`, when given, is added to the
/// degree of node `i` to account for edges that are not part of `edges`
/// (e.g. edges leaving a subgraph).
///
/// Every edge keeps its two storage slots even at weight zero so gradients
/// can be read back per edge.
pub fn weighted_normalized_adjacency(
    n: usize,
    edges: &[Edge],
    weights: &[f64],
    extra_degree: Option<&[f64]>,
) -> CsrMatrix {
    let degree = weighted_degrees(n, edges, weights, extra_degree);
    let inv_sqrt: Vec<f64> = degree.iter().map(|d| 1.0 / d.sqrt()).collect();
    let mut triplets = Vec::with_capacity(n + 2 * edges.len());
    for i in 0..n {
        triplets.push((i, i, inv_sqrt[i] * inv_sqrt[i]));
    }
    for (&(a, b), &w) in edges.iter().zip(weights) {
        let v = w * inv_sqrt[a] * inv_sqrt[b];
        triplets.push((a, b, v));
        triplets.push((b, a, v));
    }
    CsrMatrix::from_triplets(n, n, triplets).expect("edge endpoints in range")
}

/// Row sums of `A + I` for a weighted edge list.
pub fn weighted_degrees(
    n: usize,
    edges: &[Edge],
    weights: &[f64],
    extra_degree: Option<&[f64]>,
) -> Vec<f64> {
    let mut degree = match extra_degree {
        Some(extra) => extra.iter().map(|e| 1.0 + e).collect(),
        None => vec![1.0; n],
    };
    for (&(a, b), &w) in edges.iter().zip(weights) {
        degree[a] += w;
        degree[b] += w;
    }
    degree
}

/// The receptive field of a node: every node within `k` hops and every edge
/// among them, renumbered to local ids in ascending global-id order.
#[derive(Debug, Clone)]
pub struct Subgraph {
    pub graph: Graph,
    /// `local_to_global[local] = global`
    pub local_to_global: Vec<usize>,
    /// Local id of the center node.
    pub center: usize,
    /// Per local node, the number of its edges that leave the subgraph.
    pub outside_degree: Vec<f64>,
}

impl Subgraph {
    pub fn global_to_local(&self, global: usize) -> Option<usize> {
        self.local_to_global.binary_search(&global).ok()
    }

    /// Local edges in storage order.
    pub fn local_edges(&self) -> Vec<Edge> {
        self.graph.current_edges()
    }

    pub fn to_global_edge(&self, (a, b): Edge) -> Edge {
        edge_key(self.local_to_global[a], self.local_to_global[b])
    }
}

/// Nodes within `k` hops of `v`, ascending.
pub fn khop_nodes(g: &impl GraphLike, v: usize, k: usize) -> Result<Vec<usize>> {
    let mut dist: BTreeMap<usize, usize> = BTreeMap::new();
    dist.insert(v, 0);
    let mut queue = VecDeque::from([v]);
    while let Some(u) = queue.pop_front() {
        let d = dist[&u];
        if d == k {
            continue;
        }
        for w in g.neighbors(u)? {
            if let std::collections::btree_map::Entry::Vacant(e) = dist.entry(w) {
                e.insert(d + 1);
                queue.push_back(w);
            }
        }
    }
    Ok(dist.into_keys().collect())
}

/// Extracts the `k`-hop subgraph around `v`, carrying over features, labels,
/// vocabulary and class names.
pub fn khop_subgraph(g: &impl GraphLike, v: usize, k: usize) -> Result<Subgraph> {
    if k == 0 {
        return Err(Error::Config("khop must be positive".into()));
    }
    let base = g.base();
    let nodes = khop_nodes(g, v, k)?;
    let local = |global: usize| nodes.binary_search(&global).ok();

    let mut edges = Vec::new();
    let mut outside_degree = vec![0.0; nodes.len()];
    for (li, &gi) in nodes.iter().enumerate() {
        for gj in g.neighbors(gi)? {
            match local(gj) {
                Some(lj) if li < lj => edges.push((li, lj)),
                Some(_) => {}
                None => outside_degree[li] += 1.0,
            }
        }
    }
    let features = nodes
        .iter()
        .map(|&gi| g.feature_row(gi).map(Cow::into_owned))
        .collect::<Result<Vec<_>>>()?;
    let labels = nodes.iter().map(|&gi| base.labels[gi]).collect();
    let graph = Graph::new(
        nodes.len(),
        edges,
        features,
        base.feature_dim,
        labels,
        base.vocabulary.clone(),
        base.class_names.clone(),
    )?;
    let center = local(v).expect("center is in its own neighborhood");
    Ok(Subgraph {
        graph,
        local_to_global: nodes,
        center,
        outside_degree,
    })
}
