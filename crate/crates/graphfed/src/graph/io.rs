use std::collections::HashMap;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::graph::Graph;

/// Load a graph from a nodes CSV (`id,label,f0,...`) and an edges CSV
/// (`src,dst`). Edges are symmetrized and deduplicated; self-loops dropped.
pub fn load_graph(nodes_path: &Path, edges_path: &Path) -> Result<Graph> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(nodes_path)?;
    let header = rdr.headers()?.clone();
    if header.len() < 3 || header.get(0) != Some("id") || header.get(1) != Some("label") {
        return Err(Error::Parse {
            line: 1,
            msg: "expected node header `id,label,f0,...`".into(),
        });
    }
    let p = header.len() - 2;

    let mut node_ids = Vec::new();
    let mut labels = Vec::new();
    let mut rows: Vec<f64> = Vec::new();
    let mut index_of: HashMap<String, usize> = HashMap::new();
    for record in rdr.records() {
        let record = record?;
        let line = record
            .position()
            .map(|pos| pos.line())
            .unwrap_or(0);
        if record.len() != header.len() {
            return Err(Error::Parse {
                line,
                msg: format!("expected {} fields, got {}", header.len(), record.len()),
            });
        }
        let id = record[0].to_string();
        if index_of.contains_key(&id) {
            return Err(Error::Parse {
                line,
                msg: format!("duplicate node id {id:?}"),
            });
        }
        let label: usize = record[1].parse().map_err(|_| Error::Parse {
            line,
            msg: format!("bad label {:?}", &record[1]),
        })?;
        for field in record.iter().skip(2) {
            let x: f64 = field.parse().map_err(|_| Error::Parse {
                line,
                msg: format!("bad feature value {field:?}"),
            })?;
            rows.push(x);
        }
        index_of.insert(id.clone(), node_ids.len());
        node_ids.push(id);
        labels.push(label);
    }
    let n = node_ids.len();
    let features = Array2::from_shape_vec((n, p), rows)
        .map_err(|e| Error::DimensionMismatch(e.to_string()))?;
    let num_classes = labels.iter().copied().max().map_or(1, |m| m + 1);

    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(edges_path)?;
    let header = rdr.headers()?.clone();
    if header.len() != 2 || header.get(0) != Some("src") || header.get(1) != Some("dst") {
        return Err(Error::Parse {
            line: 1,
            msg: "expected edge header `src,dst`".into(),
        });
    }
    let mut edges = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record
            .position()
            .map(|pos| pos.line())
            .unwrap_or(0);
        let endpoint = |field: &str| {
            index_of.get(field).copied().ok_or(Error::UnknownNode {
                id: field.to_string(),
                line,
            })
        };
        let u = endpoint(&record[0])?;
        let v = endpoint(&record[1])?;
        edges.push((u, v));
    }

    Graph::new(node_ids, features, labels, num_classes, &edges)
}

/// Load a client assignment from a `id,client` CSV. Returns one client id per
/// graph node, in node order. Every node must be assigned exactly once.
pub fn load_partition(g: &Graph, path: &Path) -> Result<Vec<usize>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let header = rdr.headers()?.clone();
    if header.len() != 2 || header.get(0) != Some("id") || header.get(1) != Some("client") {
        return Err(Error::Parse {
            line: 1,
            msg: "expected partition header `id,client`".into(),
        });
    }
    let index_of: HashMap<&str, usize> = g
        .node_ids()
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let mut assignment = vec![usize::MAX; g.n()];
    for record in rdr.records() {
        let record = record?;
        let line = record
            .position()
            .map(|pos| pos.line())
            .unwrap_or(0);
        let node = *index_of.get(&record[0]).ok_or_else(|| Error::UnknownNode {
            id: record[0].to_string(),
            line,
        })?;
        if assignment[node] != usize::MAX {
            return Err(Error::Parse {
                line,
                msg: format!("node {:?} assigned twice", &record[0]),
            });
        }
        assignment[node] = record[1].parse().map_err(|_| Error::Parse {
            line,
            msg: format!("bad client id {:?}", &record[1]),
        })?;
    }
    if let Some(node) = assignment.iter().position(|&c| c == usize::MAX) {
        return Err(Error::invalid(
            "partition",
            format!("node {:?} has no client", g.node_ids()[node]),
        ));
    }
    Ok(assignment)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let path = dir.join(name);
        fs::write(&path, body).unwrap();
        path
    }

    #[test]
    fn path_graph_loads() {
        let dir = tempfile::tempdir().unwrap();
        let nodes = write(
            dir.path(),
            "nodes.csv",
            "id,label,f0,f1\na,0,1.0,0.0\nb,1,0.0,1.0\nc,0,0.5,0.5\n",
        );
        let edges = write(dir.path(), "edges.csv", "src,dst\na,b\nb,c\n");
        let g = load_graph(&nodes, &edges).unwrap();
        assert_eq!(g.n(), 3);
        assert_eq!(g.edge_count(), 2);
        assert_eq!(g.num_classes(), 2);
        assert_eq!(g.feature_dim(), 2);
    }

    #[test]
    fn repeated_and_reversed_edges_collapse() {
        let dir = tempfile::tempdir().unwrap();
        let nodes = write(dir.path(), "nodes.csv", "id,label,f0\na,0,1\nb,0,2\n");
        let edges = write(dir.path(), "edges.csv", "src,dst\na,b\na,b\nb,a\n");
        let g = load_graph(&nodes, &edges).unwrap();
        assert_eq!(g.edge_count(), 1);
    }

    #[test]
    fn unknown_endpoint_is_a_referential_error() {
        let dir = tempfile::tempdir().unwrap();
        let nodes = write(dir.path(), "nodes.csv", "id,label,f0\na,0,1\n");
        let edges = write(dir.path(), "edges.csv", "src,dst\na,zzz\n");
        match load_graph(&nodes, &edges) {
            Err(Error::UnknownNode { id, line }) => {
                assert_eq!(id, "zzz");
                assert_eq!(line, 2);
            }
            other => panic!("expected UnknownNode, got {other:?}"),
        }
    }

    #[test]
    fn malformed_feature_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let nodes = write(dir.path(), "nodes.csv", "id,label,f0\na,0,1\nb,0,oops\n");
        let edges = write(dir.path(), "edges.csv", "src,dst\n");
        match load_graph(&nodes, &edges) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected Parse, got {other:?}"),
        }
    }

    #[test]
    fn partition_roundtrip_and_missing_node() {
        let dir = tempfile::tempdir().unwrap();
        let nodes = write(dir.path(), "nodes.csv", "id,label,f0\na,0,1\nb,0,2\nc,0,3\n");
        let edges = write(dir.path(), "edges.csv", "src,dst\na,b\n");
        let g = load_graph(&nodes, &edges).unwrap();

        let part = write(dir.path(), "part.csv", "id,client\na,0\nb,1\nc,1\n");
        assert_eq!(load_partition(&g, &part).unwrap(), vec![0, 1, 1]);

        let part = write(dir.path(), "bad.csv", "id,client\na,0\nb,1\n");
        assert!(load_partition(&g, &part).is_err());
    }
}
