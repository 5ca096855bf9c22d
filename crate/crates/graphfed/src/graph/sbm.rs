use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::seed;

const EDGE_STREAM: u64 = 1;
const MEAN_STREAM: u64 = 2;
const NOISE_STREAM: u64 = 3;

/// Generate a stochastic block model graph. Node labels are block ids.
/// Features are a per-block mean (a random unit vector scaled by
/// `feature_shift`) plus unit-variance Gaussian noise.
pub fn generate_sbm(
    blocks: &[usize],
    p_in: f64,
    p_out: f64,
    feature_dim: usize,
    feature_shift: f64,
    seed: u64,
) -> Result<Graph> {
    if blocks.is_empty() || blocks.contains(&0) {
        return Err(Error::invalid("blocks", "block sizes must be positive"));
    }
    for (name, p) in [("p_in", p_in), ("p_out", p_out)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::invalid(name, format!("{p} is not a probability")));
        }
    }
    if feature_dim == 0 {
        return Err(Error::invalid("feature_dim", "must be positive"));
    }

    let n: usize = blocks.iter().sum();
    let mut block_of = Vec::with_capacity(n);
    for (b, &size) in blocks.iter().enumerate() {
        block_of.extend(std::iter::repeat(b).take(size));
    }

    let mut edge_rng = seed::rng(seed::derive(seed, &[EDGE_STREAM]));
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            let p = if block_of[u] == block_of[v] { p_in } else { p_out };
            if edge_rng.gen::<f64>() < p {
                edges.push((u, v));
            }
        }
    }

    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut mean_rng = seed::rng(seed::derive(seed, &[MEAN_STREAM]));
    let mut means = Array2::zeros((blocks.len(), feature_dim));
    for mut row in means.rows_mut() {
        let mut norm2: f64 = 0.0;
        while norm2 < 1e-12 {
            for x in row.iter_mut() {
                *x = normal.sample(&mut mean_rng);
            }
            norm2 = row.iter().map(|x| x * x).sum();
        }
        let scale = feature_shift / norm2.sqrt();
        row.mapv_inplace(|x| x * scale);
    }

    let mut noise_rng = seed::rng(seed::derive(seed, &[NOISE_STREAM]));
    let mut features = Array2::zeros((n, feature_dim));
    for (u, mut row) in features.rows_mut().into_iter().enumerate() {
        for (x, &m) in row.iter_mut().zip(means.row(block_of[u])) {
            *x = m + normal.sample(&mut noise_rng);
        }
    }

    let node_ids = (0..n).map(|i| format!("v{i}")).collect();
    Graph::new(node_ids, features, block_of, blocks.len(), &edges)
}
