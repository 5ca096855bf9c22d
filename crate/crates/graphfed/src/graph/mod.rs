//! Graph representation, ingestion, synthetic generation, partitioning into
//! client subgraphs, splits, and dataset statistics.

mod io;
mod partition;
mod sbm;
mod split;
mod stats;

pub use io::{load_graph, load_partition};
pub use partition::{make_nonoverlapping, make_overlapping, partition_louvain, Partition};
pub use sbm::generate_sbm;
pub use split::{split_nodes, Split};
pub use stats::{count_missing_links, heterogeneity, DatasetStats};

use ndarray::Array2;

use crate::error::{Error, Result};

/// Immutable sparse undirected graph with node features and labels.
///
/// The adjacency is symmetric with zero diagonal; edges are stored once in
/// canonical `(u, v)` order with `u < v` alongside sorted neighbor lists.
#[derive(Debug, Clone)]
pub struct Graph {
    node_ids: Vec<String>,
    features: Array2<f64>,
    labels: Vec<usize>,
    num_classes: usize,
    edges: Vec<(usize, usize)>,
    adj: Vec<Vec<usize>>,
}

impl Graph {
    /// Build a graph from canonicalizable parts. Edges are symmetrized and
    /// deduplicated; self-loops are dropped.
    pub fn new(
        node_ids: Vec<String>,
        features: Array2<f64>,
        labels: Vec<usize>,
        num_classes: usize,
        raw_edges: &[(usize, usize)],
    ) -> Result<Graph> {
        let n = node_ids.len();
        if features.nrows() != n || labels.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} node ids, {} feature rows, {} labels",
                n,
                features.nrows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::invalid(
                "labels",
                format!("label {bad} out of range for {num_classes} classes"),
            ));
        }
        let mut edges: Vec<(usize, usize)> = Vec::with_capacity(raw_edges.len());
        for &(u, v) in raw_edges {
            if u >= n || v >= n {
                return Err(Error::DimensionMismatch(format!(
                    "edge ({u}, {v}) out of range for {n} nodes"
                )));
            }
            if u == v {
                continue;
            }
            edges.push((u.min(v), u.max(v)));
        }
        edges.sort_unstable();
        edges.dedup();

        let mut adj = vec![Vec::new(); n];
        for &(u, v) in &edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        for list in &mut adj {
            list.sort_unstable();
        }

        Ok(Graph {
            node_ids,
            features,
            labels,
            num_classes,
            edges,
            adj,
        })
    }

    pub fn n(&self) -> usize {
        self.node_ids.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn node_ids(&self) -> &[String] {
        &self.node_ids
    }

    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.adj[u]
    }

    pub fn degree(&self, u: usize) -> usize {
        self.adj[u].len()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adj[u].binary_search(&v).is_ok()
    }

    /// Undirected edges in canonical `(u, v)` order with `u < v`.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }
}

/// One client's induced subgraph: node indices into the parent graph plus the
/// induced edge set in local index space.
#[derive(Debug, Clone)]
pub struct SubgraphSpec {
    client_id: usize,
    node_list: Vec<usize>,
    edges: Vec<(usize, usize)>,
    adj: Vec<Vec<usize>>,
}

impl SubgraphSpec {
    /// Induce the subgraph on `node_list`. The induced edge set is exactly
    /// the set of parent edges with both endpoints in `node_list`.
    pub fn induce(parent: &Graph, client_id: usize, mut node_list: Vec<usize>) -> Result<Self> {
        node_list.sort_unstable();
        let before = node_list.len();
        node_list.dedup();
        if node_list.len() != before {
            return Err(Error::invalid("node_list", "duplicate node indices"));
        }
        if node_list.is_empty() {
            return Err(Error::EmptyClient { client: client_id });
        }
        if let Some(&last) = node_list.last() {
            if last >= parent.n() {
                return Err(Error::DimensionMismatch(format!(
                    "node index {last} out of range for parent with {} nodes",
                    parent.n()
                )));
            }
        }
        let mut local_of = vec![usize::MAX; parent.n()];
        for (local, &global) in node_list.iter().enumerate() {
            local_of[global] = local;
        }
        let mut edges = Vec::new();
        for (local_u, &u) in node_list.iter().enumerate() {
            for &v in parent.neighbors(u) {
                let local_v = local_of[v];
                if local_v != usize::MAX && local_u < local_v {
                    edges.push((local_u, local_v));
                }
            }
        }
        edges.sort_unstable();
        let mut adj = vec![Vec::new(); node_list.len()];
        for &(a, b) in &edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        Ok(SubgraphSpec {
            client_id,
            node_list,
            edges,
            adj,
        })
    }

    pub fn client_id(&self) -> usize {
        self.client_id
    }

    /// Number of nodes in this subgraph.
    pub fn n_nodes(&self) -> usize {
        self.node_list.len()
    }

    /// Parent-graph indices of this subgraph's nodes, ascending.
    pub fn node_list(&self) -> &[usize] {
        &self.node_list
    }

    /// Induced edges in local index space, canonical order.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn neighbors(&self, local: usize) -> &[usize] {
        &self.adj[local]
    }

    pub fn degree(&self, local: usize) -> usize {
        self.adj[local].len()
    }

    /// Induced edges mapped back to parent-graph indices.
    pub fn parent_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges
            .iter()
            .map(move |&(a, b)| (self.node_list[a], self.node_list[b]))
    }

    /// Feature rows for this subgraph's nodes, in local order.
    pub fn feature_matrix(&self, parent: &Graph) -> Array2<f64> {
        let p = parent.feature_dim();
        let mut out = Array2::zeros((self.n_nodes(), p));
        for (local, &global) in self.node_list.iter().enumerate() {
            out.row_mut(local).assign(&parent.features().row(global));
        }
        out
    }

    /// Labels for this subgraph's nodes, in local order.
    pub fn label_vec(&self, parent: &Graph) -> Vec<usize> {
        self.node_list.iter().map(|&g| parent.labels()[g]).collect()
    }
}
