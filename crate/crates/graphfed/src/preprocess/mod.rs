//! Per-client one-time computation: personalized PageRank, Laplacian
//! positional encodings, and sampling of each center node's local
//! attention context.

mod cache;

pub use cache::{read_matrix, write_matrix};

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array2, ArrayView1};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SubgraphSpec;
use crate::seed;

const SAMPLE_STREAM: u64 = 0x30;

/// Eigenvalues this close to zero are treated as trivial Laplacian modes.
const TRIVIAL_EIGENVALUE: f64 = 1e-8;

/// Personalized PageRank matrix ν(I−(1−ν)Ā)⁻¹ of one client's subgraph,
/// with Ā the column-normalized adjacency. Row u is the sampling
/// distribution of center node u.
#[derive(Debug, Clone)]
pub struct PPRMatrix {
    matrix: Array2<f64>,
    nu: f64,
}

impl PPRMatrix {
    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn row(&self, u: usize) -> ArrayView1<'_, f64> {
        self.matrix.row(u)
    }

    /// Rebuild from a cached matrix.
    pub fn from_parts(matrix: Array2<f64>, nu: f64) -> Result<PPRMatrix> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "PPR matrix {}×{} is not square",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(PPRMatrix { matrix, nu })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PprMethod {
    Exact,
    PowerIteration,
}

/// Compute the PPR matrix of a subgraph. The exact method solves the linear
/// system; power iteration runs π ← νe + (1−ν)Āπ per column until the
/// max-norm change drops below `tol`. Isolated nodes get row = self-mass 1.
pub fn ppr_matrix(s: &SubgraphSpec, nu: f64, method: PprMethod, tol: f64) -> Result<PPRMatrix> {
    if !(nu > 0.0 && nu <= 1.0) {
        return Err(Error::invalid("nu", format!("{nu} not in (0, 1]")));
    }
    if tol <= 0.0 {
        return Err(Error::invalid("tol", format!("{tol} must be positive")));
    }
    let n = s.n_nodes();
    let mut matrix = match method {
        PprMethod::Exact => {
            // M = I − (1−ν)Ā, column c of Ā is neighbors(c) weighted 1/deg(c)
            let mut m = DMatrix::<f64>::identity(n, n);
            for c in 0..n {
                let deg = s.degree(c) as f64;
                for &r in s.neighbors(c) {
                    m[(r, c)] -= (1.0 - nu) / deg;
                }
            }
            let inv = m.lu().try_inverse().ok_or_else(|| {
                Error::invalid("ppr", "I − (1−ν)Ā is singular".to_string())
            })?;
            let mut out = Array2::zeros((n, n));
            for r in 0..n {
                for c in 0..n {
                    out[(r, c)] = nu * inv[(r, c)];
                }
            }
            out
        }
        PprMethod::PowerIteration => {
            let mut out = Array2::zeros((n, n));
            let mut pi = vec![0.0f64; n];
            let mut next = vec![0.0f64; n];
            for c in 0..n {
                pi.fill(0.0);
                pi[c] = 1.0;
                let mut converged = false;
                let mut residual = f64::INFINITY;
                for _ in 0..10_000 {
                    for (u, slot) in next.iter_mut().enumerate() {
                        let mass: f64 = s
                            .neighbors(u)
                            .iter()
                            .map(|&v| pi[v] / s.degree(v) as f64)
                            .sum();
                        *slot = (1.0 - nu) * mass;
                    }
                    next[c] += nu;
                    residual = pi
                        .iter()
                        .zip(&next)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max);
                    std::mem::swap(&mut pi, &mut next);
                    if residual < tol {
                        converged = true;
                        break;
                    }
                }
                if !converged {
                    return Err(Error::NoConvergence {
                        iterations: 10_000,
                        residual,
                    });
                }
                for u in 0..n {
                    out[(u, c)] = pi[u];
                }
            }
            out
        }
    };
    for u in 0..n {
        if s.degree(u) == 0 {
            matrix.row_mut(u).fill(0.0);
            matrix[(u, u)] = 1.0;
        }
    }
    Ok(PPRMatrix { matrix, nu })
}

/// Laplacian positional encodings: one column per eigenvector of
/// L = I − D^{−1/2}AD^{−1/2}.
#[derive(Debug, Clone)]
pub struct PositionalEncoding {
    matrix: Array2<f64>,
}

impl PositionalEncoding {
    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn k(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn from_matrix(matrix: Array2<f64>) -> PositionalEncoding {
        PositionalEncoding { matrix }
    }
}

/// Eigenvectors of the symmetric normalized Laplacian for the k smallest
/// nontrivial eigenvalues. Columns are sign-fixed so the largest-magnitude
/// entry is positive, and zero-padded when fewer eigenpairs are usable.
pub fn laplacian_pe(s: &SubgraphSpec, k: usize) -> Result<PositionalEncoding> {
    if k == 0 {
        return Err(Error::invalid("pe_dim", "must be positive"));
    }
    let n = s.n_nodes();
    if k >= n {
        return Err(Error::invalid(
            "pe_dim",
            format!("k={k} must be smaller than the subgraph size {n}"),
        ));
    }
    let mut lap = DMatrix::<f64>::identity(n, n);
    for u in 0..n {
        for &v in s.neighbors(u) {
            lap[(u, v)] = -1.0 / ((s.degree(u) as f64) * (s.degree(v) as f64)).sqrt();
        }
    }
    let eig = SymmetricEigen::new(lap);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .unwrap()
            .then(a.cmp(&b))
    });

    let mut matrix = Array2::zeros((n, k));
    let mut col = 0;
    for &idx in &order {
        if col == k {
            break;
        }
        if eig.eigenvalues[idx] <= TRIVIAL_EIGENVALUE {
            continue;
        }
        let v = eig.eigenvectors.column(idx);
        let mut lead = 0;
        for r in 1..n {
            if v[r].abs() > v[lead].abs() {
                lead = r;
            }
        }
        let flip = if v[lead] < 0.0 { -1.0 } else { 1.0 };
        for r in 0..n {
            matrix[(r, col)] = flip * v[r];
        }
        col += 1;
    }
    Ok(PositionalEncoding { matrix })
}

/// How center nodes pick their local attention context.
#[derive(Debug, Clone, Copy)]
pub enum SamplingStrategy<'a> {
    /// Weight candidates by the center's PPR row.
    Ppr,
    /// Uniform over candidates with positive PPR mass.
    UniformNeighbor,
    /// Weight candidates by nonnegative feature cosine to the center.
    AttributeSimilarity(&'a Array2<f64>),
}

/// One center node's sampled attention context. Holds up to `n_s` distinct
/// non-center nodes; missing slots are masked padding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalContext {
    center: usize,
    samples: Vec<usize>,
    n_s: usize,
}

impl LocalContext {
    pub fn center(&self) -> usize {
        self.center
    }

    /// Real (non-padding) samples.
    pub fn samples(&self) -> &[usize] {
        &self.samples
    }

    pub fn n_s(&self) -> usize {
        self.n_s
    }

    pub fn padding(&self) -> usize {
        self.n_s - self.samples.len()
    }
}

/// Sample a center node's local context without replacement, weighted by the
/// chosen strategy. Fewer candidates than `n_s` yields all of them plus
/// masked padding.
pub fn sample_local_context(
    center: usize,
    ppr: &PPRMatrix,
    n_s: usize,
    strategy: SamplingStrategy,
    seed: u64,
) -> Result<LocalContext> {
    let n = ppr.n();
    if center >= n {
        return Err(Error::invalid(
            "center",
            format!("node {center} out of range for {n} nodes"),
        ));
    }
    let mut weights: Vec<f64> = match strategy {
        SamplingStrategy::Ppr => ppr.row(center).to_vec(),
        SamplingStrategy::UniformNeighbor => ppr
            .row(center)
            .iter()
            .map(|&w| if w > 0.0 { 1.0 } else { 0.0 })
            .collect(),
        SamplingStrategy::AttributeSimilarity(features) => {
            if features.nrows() != n {
                return Err(Error::DimensionMismatch(format!(
                    "{} feature rows for {n} nodes",
                    features.nrows()
                )));
            }
            let center_row = features.row(center);
            let center_norm = center_row.dot(&center_row).sqrt();
            features
                .rows()
                .into_iter()
                .map(|row| {
                    let norm = row.dot(&row).sqrt();
                    if norm * center_norm > 0.0 {
                        (row.dot(&center_row) / (norm * center_norm)).max(0.0)
                    } else {
                        0.0
                    }
                })
                .collect()
        }
    };
    weights[center] = 0.0;

    let mut rng = seed::rng(seed::derive(seed, &[SAMPLE_STREAM, center as u64]));
    let mut samples = Vec::with_capacity(n_s.min(n));
    for _ in 0..n_s {
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            break;
        }
        let mut draw = rng.gen::<f64>() * total;
        let mut pick = None;
        for (j, &w) in weights.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            draw -= w;
            if draw <= 0.0 {
                pick = Some(j);
                break;
            }
        }
        // guard against accumulated rounding pushing draw past the last bin
        let pick = pick.unwrap_or_else(|| {
            weights.iter().rposition(|&w| w > 0.0).expect("total > 0")
        });
        samples.push(pick);
        weights[pick] = 0.0;
    }
    Ok(LocalContext { center, samples, n_s })
}
