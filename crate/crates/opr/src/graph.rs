//! Online observation graphs and their normalized adjacency.
//!
//! Two flavors: a k-nearest-neighbor similarity graph built from feature
//! vectors as they arrive, and a streaming view of a dataset's native edge
//! list where an edge materializes once both endpoints have arrived. Both
//! produce weighted undirected edges over *stream positions*, from which
//! [`normalized_adjacency`] builds the GCN propagation matrix.

use std::collections::{BTreeSet, HashMap};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::{OprError, Result};

/// Undirected weighted edge: endpoints `i < j` plus weight.
pub type WeightedEdge = (usize, usize, f64);

fn squared_distance(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Ascending by squared distance, ties broken by index.
fn cmp_pair(a: &(f64, usize), b: &(f64, usize)) -> std::cmp::Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

fn kernel_weight(d2: f64, sigma: f64) -> f64 {
    if sigma == 0.0 {
        // All neighbor distances are zero when sigma is zero, so the kernel's
        // limit at coincident points applies.
        1.0
    } else {
        (-d2 / (sigma * sigma)).exp()
    }
}

/// Incrementally maintained k-NN similarity graph.
///
/// Each node keeps its `min(k, n-1)` nearest neighbors by squared Euclidean
/// distance (ties broken by index). Edges are the union of the directed
/// neighbor lists; a pair `(i, j)` is connected if either node lists the
/// other. Weights follow a Gaussian kernel `exp(-||xi - xj||^2 / sigma^2)`
/// whose bandwidth `sigma` is the mean distance to the k-th nearest neighbor
/// across all nodes, recomputed after every append unless frozen.
#[derive(Debug, Clone)]
pub struct KnnGraph {
    k: usize,
    points: Vec<Array1<f64>>,
    /// Per node: `(squared distance, neighbor index)` sorted ascending,
    /// at most `k` entries.
    neighbors: Vec<Vec<(f64, usize)>>,
    sigma: Option<f64>,
    frozen: bool,
}

impl KnnGraph {
    pub fn new(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(OprError::BadNeighborCount { k, n: 0 });
        }
        Ok(Self {
            k,
            points: Vec::new(),
            neighbors: Vec::new(),
            sigma: None,
            frozen: false,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Stop recomputing the bandwidth on subsequent appends (or resume).
    pub fn freeze_bandwidth(&mut self, frozen: bool) {
        self.frozen = frozen;
    }

    /// Current kernel bandwidth; defined once the graph has two nodes.
    pub fn sigma(&self) -> Result<f64> {
        self.sigma.ok_or(OprError::BandwidthUndefined)
    }

    pub fn append(&mut self, x: ArrayView1<'_, f64>) -> Result<()> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(OprError::NonFinite("graph node features"));
        }
        if let Some(first) = self.points.first() {
            if first.len() != x.len() {
                return Err(OprError::ShapeMismatch(format!(
                    "node has {} features, graph holds {}",
                    x.len(),
                    first.len()
                )));
            }
        }
        let new_idx = self.points.len();
        let mut dists: Vec<(f64, usize)> = self
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| (squared_distance(p.view(), x), i))
            .collect();

        // Existing nodes adopt the newcomer if it beats their current k-th.
        for &(d2, i) in &dists {
            let list = &mut self.neighbors[i];
            let cand = (d2, new_idx);
            if list.len() < self.k {
                let pos = list.partition_point(|e| cmp_pair(e, &cand).is_lt());
                list.insert(pos, cand);
            } else if cmp_pair(&cand, list.last().expect("non-empty")).is_lt() {
                list.pop();
                let pos = list.partition_point(|e| cmp_pair(e, &cand).is_lt());
                list.insert(pos, cand);
            }
        }

        // The newcomer's own list: the k closest existing nodes.
        dists.sort_by(cmp_pair);
        dists.truncate(self.k);
        self.points.push(x.to_owned());
        self.neighbors.push(dists);

        if !self.frozen || self.sigma.is_none() {
            self.recompute_sigma();
        }
        Ok(())
    }

    fn recompute_sigma(&mut self) {
        if self.points.len() < 2 {
            self.sigma = None;
            return;
        }
        let sum: f64 = self
            .neighbors
            .iter()
            .map(|list| list.last().expect("n >= 2 gives every node a neighbor").0.sqrt())
            .sum();
        self.sigma = Some(sum / self.points.len() as f64);
    }

    /// Union-symmetrized weighted edge list under the current bandwidth.
    pub fn edges(&self) -> Result<Vec<WeightedEdge>> {
        if self.points.len() < 2 {
            return Ok(Vec::new());
        }
        let sigma = self.sigma()?;
        let mut pairs: BTreeSet<(usize, usize)> = BTreeSet::new();
        for (i, list) in self.neighbors.iter().enumerate() {
            for &(_, j) in list {
                pairs.insert((i.min(j), i.max(j)));
            }
        }
        Ok(pairs
            .into_iter()
            .map(|(i, j)| {
                let d2 = squared_distance(self.points[i].view(), self.points[j].view());
                (i, j, kernel_weight(d2, sigma))
            })
            .collect())
    }
}

/// Batch reference for [`KnnGraph`]: rebuild the edge list and bandwidth from
/// scratch. The incremental graph must agree with this on identical input.
pub fn batch_knn_edges(points: ArrayView2<'_, f64>, k: usize) -> Result<(Vec<WeightedEdge>, f64)> {
    let n = points.nrows();
    if k == 0 || n < 2 {
        return Err(OprError::BadNeighborCount { k, n });
    }
    let eff_k = k.min(n - 1);
    let mut lists: Vec<Vec<(f64, usize)>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut dists: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| (squared_distance(points.row(i), points.row(j)), j))
            .collect();
        dists.sort_by(cmp_pair);
        dists.truncate(eff_k);
        lists.push(dists);
    }
    let sigma = lists
        .iter()
        .map(|l| l.last().expect("eff_k >= 1").0.sqrt())
        .sum::<f64>()
        / n as f64;
    let mut pairs: BTreeSet<(usize, usize)> = BTreeSet::new();
    for (i, list) in lists.iter().enumerate() {
        for &(_, j) in list {
            pairs.insert((i.min(j), i.max(j)));
        }
    }
    let edges = pairs
        .into_iter()
        .map(|(i, j)| {
            let d2 = squared_distance(points.row(i), points.row(j));
            (i, j, kernel_weight(d2, sigma))
        })
        .collect();
    Ok((edges, sigma))
}

/// Streaming view of a dataset's native edge list. An edge joins two stream
/// positions once both of its dataset rows have arrived; weights are 1.
#[derive(Debug, Clone)]
pub struct NativeStreamGraph {
    /// Dataset adjacency: row -> rows it shares an edge with.
    dataset_adjacency: HashMap<usize, Vec<usize>>,
    /// Dataset row -> stream position, for rows that have arrived.
    arrived: HashMap<usize, usize>,
    len: usize,
    /// Materialized edges in stream-position space, `i < j`.
    live_edges: Vec<(usize, usize)>,
}

impl NativeStreamGraph {
    pub fn new(dataset_edges: &[(usize, usize)]) -> Self {
        let mut dataset_adjacency: HashMap<usize, Vec<usize>> = HashMap::new();
        for &(a, b) in dataset_edges {
            dataset_adjacency.entry(a).or_default().push(b);
            dataset_adjacency.entry(b).or_default().push(a);
        }
        Self {
            dataset_adjacency,
            arrived: HashMap::new(),
            len: 0,
            live_edges: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn append(&mut self, dataset_row: usize) -> Result<()> {
        if self.arrived.contains_key(&dataset_row) {
            return Err(OprError::UnknownNodeId(format!(
                "dataset row {dataset_row} appended twice"
            )));
        }
        let pos = self.len;
        if let Some(partners) = self.dataset_adjacency.get(&dataset_row) {
            for partner in partners {
                if let Some(&other_pos) = self.arrived.get(partner) {
                    self.live_edges.push((other_pos.min(pos), other_pos.max(pos)));
                }
            }
        }
        self.arrived.insert(dataset_row, pos);
        self.len = pos + 1;
        Ok(())
    }

    pub fn edges(&self) -> Vec<WeightedEdge> {
        let mut edges: Vec<WeightedEdge> =
            self.live_edges.iter().map(|&(i, j)| (i, j, 1.0)).collect();
        edges.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        edges
    }
}

/// Either graph flavor behind one interface, keyed by how a dataset supplies
/// structure: feature similarity (CSV) or a native edge list (citation data).
#[derive(Debug, Clone)]
pub enum ObservationGraph {
    Knn(KnnGraph),
    Native(NativeStreamGraph),
}

impl ObservationGraph {
    pub fn knn(k: usize) -> Result<Self> {
        Ok(Self::Knn(KnnGraph::new(k)?))
    }

    pub fn native(dataset_edges: &[(usize, usize)]) -> Self {
        Self::Native(NativeStreamGraph::new(dataset_edges))
    }

    pub fn len(&self) -> usize {
        match self {
            Self::Knn(g) => g.len(),
            Self::Native(g) => g.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn append(&mut self, x: ArrayView1<'_, f64>, dataset_row: usize) -> Result<()> {
        match self {
            Self::Knn(g) => g.append(x),
            Self::Native(g) => g.append(dataset_row),
        }
    }

    pub fn edges(&self) -> Result<Vec<WeightedEdge>> {
        match self {
            Self::Knn(g) => g.edges(),
            Self::Native(g) => Ok(g.edges()),
        }
    }

    /// Normalized adjacency over the nodes appended so far.
    pub fn normalized(&self) -> Result<CsrMatrix> {
        normalized_adjacency(self.len(), &self.edges()?)
    }
}

/// An [`ObservationGraph`] together with the feature rows of its nodes, in
/// arrival order. GCN-backed components share one of these per policy: the
/// graph structure and feature matrix are common to all heads, only labels
/// differ.
#[derive(Debug, Clone)]
pub struct GrowingGraph {
    graph: ObservationGraph,
    features: Vec<f64>,
    num_features: usize,
}

impl GrowingGraph {
    pub fn new(graph: ObservationGraph, num_features: usize) -> Result<Self> {
        if num_features == 0 {
            return Err(OprError::Config("graph nodes need at least one feature".into()));
        }
        Ok(Self {
            graph,
            features: Vec::new(),
            num_features,
        })
    }

    pub fn len(&self) -> usize {
        self.graph.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graph.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn append(&mut self, x: ArrayView1<'_, f64>, dataset_row: usize) -> Result<usize> {
        if x.len() != self.num_features {
            return Err(OprError::ShapeMismatch(format!(
                "node has {} features, graph expects {}",
                x.len(),
                self.num_features
            )));
        }
        let node = self.graph.len();
        self.graph.append(x, dataset_row)?;
        self.features.extend(x.iter());
        Ok(node)
    }

    /// The `n x d` feature matrix of the nodes appended so far.
    pub fn features(&self) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((self.len(), self.num_features), &self.features)
            .expect("buffer tracks appends")
    }

    pub fn normalized(&self) -> Result<CsrMatrix> {
        self.graph.normalized()
    }
}

/// Compressed sparse row matrix; here always square and symmetric.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    pub n: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// `self * x` for dense `x` with `n` rows.
    pub fn matmul_dense(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        assert_eq!(x.nrows(), self.n, "row count mismatch in sparse matmul");
        let mut out = Array2::<f64>::zeros((self.n, x.ncols()));
        for i in 0..self.n {
            let mut acc = out.row_mut(i);
            for p in self.indptr[i]..self.indptr[i + 1] {
                let j = self.indices[p];
                let v = self.values[p];
                acc.scaled_add(v, &x.row(j));
            }
        }
        out
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::<f64>::zeros((self.n, self.n));
        for i in 0..self.n {
            for p in self.indptr[i]..self.indptr[i + 1] {
                out[[i, self.indices[p]]] = self.values[p];
            }
        }
        out
    }
}

/// Build the renormalized GCN propagation matrix
/// `A_hat[i][j] = (A[i][j] + I[i][j]) / sqrt((d_i + 1)(d_j + 1))`
/// where `d_i` is the weighted degree of node `i` (self-loop excluded).
///
/// `edges` must list each undirected pair once with `i < j`; weights must be
/// finite and non-negative.
pub fn normalized_adjacency(n: usize, edges: &[WeightedEdge]) -> Result<CsrMatrix> {
    let mut adjacency: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut degree = vec![0.0f64; n];
    for &(i, j, w) in edges {
        if i >= n || j >= n {
            return Err(OprError::UnknownNodeId(format!("edge ({i},{j}) in graph of {n}")));
        }
        if i == j {
            return Err(OprError::Config(format!("self edge at node {i}")));
        }
        if !w.is_finite() || w < 0.0 {
            return Err(OprError::NonFinite("edge weight"));
        }
        adjacency[i].push((j, w));
        adjacency[j].push((i, w));
        degree[i] += w;
        degree[j] += w;
    }

    let mut indptr = Vec::with_capacity(n + 1);
    let mut indices = Vec::new();
    let mut values = Vec::new();
    indptr.push(0);
    for i in 0..n {
        let mut row = adjacency[i].clone();
        row.push((i, 0.0)); // self-loop; weight handled below
        row.sort_by_key(|&(j, _)| j);
        for (j, w) in row {
            let numer = if i == j { 1.0 } else { w };
            indices.push(j);
            values.push(numer / ((degree[i] + 1.0) * (degree[j] + 1.0)).sqrt());
        }
        indptr.push(indices.len());
    }
    Ok(CsrMatrix {
        n,
        indptr,
        indices,
        values,
    })
}
