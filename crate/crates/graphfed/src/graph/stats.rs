use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, SubgraphSpec};

/// Number of parent-graph edges absent from every client's induced edge set.
pub fn count_missing_links(g: &Graph, subgraphs: &[SubgraphSpec]) -> usize {
    let mut covered: HashSet<(usize, usize)> = HashSet::new();
    for s in subgraphs {
        covered.extend(s.parent_edges());
    }
    g.edge_count() - covered.len()
}

/// Mean cosine distance between client label histograms, over unordered
/// client pairs. 0 when all distributions agree, 1 when all are orthogonal.
pub fn heterogeneity(subgraphs: &[SubgraphSpec], labels: &[usize], num_classes: usize) -> Result<f64> {
    if subgraphs.len() < 2 {
        return Err(Error::invalid("subgraphs", "need at least 2 clients"));
    }
    let mut hists = Vec::with_capacity(subgraphs.len());
    for s in subgraphs {
        if s.n_nodes() == 0 {
            return Err(Error::EmptyClient { client: s.client_id() });
        }
        let mut h = vec![0.0f64; num_classes];
        for &u in s.node_list() {
            h[labels[u]] += 1.0;
        }
        hists.push(h);
    }
    let norm = |h: &[f64]| h.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..hists.len() {
        for j in (i + 1)..hists.len() {
            let dot: f64 = hists[i].iter().zip(&hists[j]).map(|(a, b)| a * b).sum();
            total += 1.0 - dot / (norm(&hists[i]) * norm(&hists[j]));
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}

/// Summary of how a federated split fragments the dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetStats {
    pub missing_links: usize,
    pub heterogeneity: f64,
    pub client_sizes: Vec<usize>,
}

impl DatasetStats {
    pub fn compute(g: &Graph, subgraphs: &[SubgraphSpec]) -> Result<DatasetStats> {
        Ok(DatasetStats {
            missing_links: count_missing_links(g, subgraphs),
            heterogeneity: heterogeneity(subgraphs, g.labels(), g.num_classes())?,
            client_sizes: subgraphs.iter().map(|s| s.n_nodes()).collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn labeled(n: usize, edges: &[(usize, usize)], labels: Vec<usize>, k: usize) -> Graph {
        let ids = (0..n).map(|i| format!("n{i}")).collect();
        Graph::new(ids, Array2::zeros((n, 1)), labels, k, edges).unwrap()
    }

    fn induce(g: &Graph, lists: &[Vec<usize>]) -> Vec<SubgraphSpec> {
        lists
            .iter()
            .enumerate()
            .map(|(c, l)| SubgraphSpec::induce(g, c, l.clone()).unwrap())
            .collect()
    }

    #[test]
    fn triangle_split_loses_two_links() {
        let g = labeled(3, &[(0, 1), (1, 2), (0, 2)], vec![0; 3], 1);
        let subs = induce(&g, &[vec![0], vec![1, 2]]);
        assert_eq!(count_missing_links(&g, &subs), 2);
    }

    #[test]
    fn whole_graph_client_loses_nothing() {
        let g = labeled(4, &[(0, 1), (1, 2), (2, 3)], vec![0; 4], 1);
        let subs = induce(&g, &[vec![0, 1, 2, 3]]);
        assert_eq!(count_missing_links(&g, &subs), 0);
    }

    #[test]
    fn overlapping_clients_can_cover_all_edges() {
        let g = labeled(3, &[(0, 1), (1, 2), (0, 2)], vec![0; 3], 1);
        let subs = induce(&g, &[vec![0, 1, 2], vec![1, 2]]);
        assert_eq!(count_missing_links(&g, &subs), 0);
    }

    #[test]
    fn identical_histograms_have_zero_heterogeneity() {
        let g = labeled(4, &[], vec![0, 1, 0, 1], 2);
        let subs = induce(&g, &[vec![0, 1], vec![2, 3]]);
        assert!(heterogeneity(&subs, g.labels(), 2).unwrap().abs() < 1e-12);
    }

    #[test]
    fn orthogonal_histograms_have_unit_heterogeneity() {
        let g = labeled(4, &[], vec![0, 0, 1, 1], 2);
        let subs = induce(&g, &[vec![0, 1], vec![2, 3]]);
        assert!((heterogeneity(&subs, g.labels(), 2).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn three_client_mixed_histograms() {
        // histograms (1,0), (0,1), (1,1): pair distances 1, 1-1/√2, 1-1/√2
        let g = labeled(4, &[], vec![0, 1, 0, 1], 2);
        let subs = induce(&g, &[vec![0], vec![1], vec![2, 3]]);
        let h = heterogeneity(&subs, g.labels(), 2).unwrap();
        assert!((h - 0.5286).abs() < 1e-4, "heterogeneity {h}");
    }

    #[test]
    fn needs_two_clients() {
        let g = labeled(2, &[], vec![0, 1], 2);
        let subs = induce(&g, &[vec![0, 1]]);
        assert!(heterogeneity(&subs, g.labels(), 2).is_err());
    }

    #[test]
    fn stats_report_is_serializable() {
        let g = labeled(3, &[(0, 1), (1, 2), (0, 2)], vec![0, 1, 1], 2);
        let subs = induce(&g, &[vec![0], vec![1, 2]]);
        let stats = DatasetStats::compute(&g, &subs).unwrap();
        let json = serde_json::to_value(&stats).unwrap();
        assert_eq!(json["missing_links"], 2);
        assert_eq!(json["client_sizes"][1], 2);
    }
}
