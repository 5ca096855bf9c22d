//! Server-side personalized aggregation.
//!
//! Clients summarize their subgraphs with a small set of global nodes. The
//! server matches the rows of two clients' global-node matrices with an exact
//! assignment that maximizes mean cosine similarity, turns the resulting
//! pairwise scores into per-client mixing weights, and averages parameter
//! vectors and aligned global nodes under those weights.

mod hungarian;

pub use hungarian::min_cost_assignment;

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};

/// Scale of the distance-based tie-break added to the assignment costs.
///
/// Strictly below any meaningful cosine gap, so it only decides ties: among
/// matchings with equal mean cosine the one pairing spatially closer rows
/// wins. Keeps scores within 1e-9 of the unperturbed optimum.
const TIE_BREAK: f64 = 1e-9;

/// Result of matching one client's global nodes onto another's.
#[derive(Debug, Clone)]
pub struct Alignment {
    /// `perm[k]` = row of `mu_j` matched to row `k` of `mu_i`.
    pub perm: Vec<usize>,
    /// Mean cosine similarity over the matched pairs.
    pub score: f64,
    /// True when some row had zero norm; its cosine was taken as 0.
    pub degenerate: bool,
}

fn cosine(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Option<f64> {
    let na = a.dot(&a).sqrt();
    let nb = b.dot(&b).sqrt();
    if na == 0.0 || nb == 0.0 {
        None
    } else {
        Some(a.dot(&b) / (na * nb))
    }
}

/// Matches rows of `mu_i` to rows of `mu_j` maximizing mean cosine similarity.
///
/// Exact over all permutations (assignment solver, not greedy). Zero-norm
/// rows contribute cosine 0 and set the `degenerate` flag.
pub fn align_and_score(mu_i: &Array2<f64>, mu_j: &Array2<f64>) -> Result<Alignment> {
    let (n_g, d) = mu_i.dim();
    if mu_j.dim() != (n_g, d) {
        return Err(Error::DimensionMismatch(format!(
            "global node matrices disagree: {:?} vs {:?}",
            mu_i.dim(),
            mu_j.dim()
        )));
    }
    if n_g == 0 || d == 0 {
        return Err(Error::invalid("mu", "global node matrix must be non-empty"));
    }

    let mut degenerate = false;
    let mut cos = Array2::zeros((n_g, n_g));
    let mut cost = Array2::zeros((n_g, n_g));
    for k in 0..n_g {
        for l in 0..n_g {
            let a = mu_i.row(k);
            let b = mu_j.row(l);
            let c = match cosine(a, b) {
                Some(c) => c,
                None => {
                    degenerate = true;
                    0.0
                }
            };
            cos[(k, l)] = c;
            let d2: f64 = a
                .iter()
                .zip(b.iter())
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            cost[(k, l)] = -c + TIE_BREAK * d2 / (1.0 + d2);
        }
    }

    let perm = min_cost_assignment(&cost);
    let score = perm
        .iter()
        .enumerate()
        .map(|(k, &l)| cos[(k, l)])
        .sum::<f64>()
        / n_g as f64;
    Ok(Alignment {
        perm,
        score,
        degenerate,
    })
}

/// Pairwise alignment scores across all clients, plus the matchings that
/// produced them.
#[derive(Debug, Clone)]
pub struct SimilarityMatrix {
    s: Array2<f64>,
    /// `alignments[i][j][k]` = row of client j's globals matched to row k of
    /// client i's. Diagonal holds the identity.
    alignments: Vec<Vec<Vec<usize>>>,
    degenerate: bool,
}

impl SimilarityMatrix {
    pub fn matrix(&self) -> &Array2<f64> {
        &self.s
    }

    pub fn score(&self, i: usize, j: usize) -> f64 {
        self.s[(i, j)]
    }

    pub fn alignment(&self, i: usize, j: usize) -> &[usize] {
        &self.alignments[i][j]
    }

    pub fn num_clients(&self) -> usize {
        self.s.nrows()
    }

    pub fn degenerate(&self) -> bool {
        self.degenerate
    }
}

/// Computes every pairwise alignment once and mirrors it, so the score matrix
/// is bitwise symmetric with unit diagonal.
pub fn similarity_matrix(mus: &[Array2<f64>]) -> Result<SimilarityMatrix> {
    if mus.is_empty() {
        return Err(Error::invalid("mus", "need at least one client"));
    }
    let shape = mus[0].dim();
    for (i, mu) in mus.iter().enumerate() {
        if mu.dim() != shape {
            return Err(Error::DimensionMismatch(format!(
                "client {i} globals are {:?}, expected {:?}",
                mu.dim(),
                shape
            )));
        }
    }
    let m = mus.len();
    let n_g = shape.0;
    let mut s = Array2::zeros((m, m));
    let mut alignments = vec![vec![Vec::new(); m]; m];
    let mut degenerate = false;
    for i in 0..m {
        s[(i, i)] = 1.0;
        alignments[i][i] = (0..n_g).collect();
    }
    for i in 0..m {
        for j in (i + 1)..m {
            let a = align_and_score(&mus[i], &mus[j])?;
            degenerate |= a.degenerate;
            s[(i, j)] = a.score;
            s[(j, i)] = a.score;
            let mut inv = vec![0usize; n_g];
            for (k, &l) in a.perm.iter().enumerate() {
                inv[l] = k;
            }
            alignments[i][j] = a.perm;
            alignments[j][i] = inv;
        }
    }
    Ok(SimilarityMatrix {
        s,
        alignments,
        degenerate,
    })
}

/// Softmax of `tau * s_row` with max subtraction. The client's own entry
/// stays in the mix, so every weight is strictly positive.
pub fn personalized_weights(s_row: ArrayView1<f64>, tau: f64) -> Result<Array1<f64>> {
    if s_row.is_empty() {
        return Err(Error::invalid("s_row", "empty similarity row"));
    }
    if !tau.is_finite() {
        return Err(Error::invalid("tau", "must be finite"));
    }
    if s_row.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("s_row", "non-finite similarity entry"));
    }
    let hi = s_row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(tau * b));
    let mut w: Array1<f64> = s_row.mapv(|x| (tau * x - hi).exp());
    let z = w.sum();
    w.mapv_inplace(|x| x / z);
    Ok(w)
}

/// Convex combination of flattened parameter vectors, accumulated client by
/// client in index order.
pub fn aggregate_params(thetas: &[Vec<f64>], alpha: &[f64]) -> Result<Vec<f64>> {
    if thetas.len() != alpha.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} parameter vectors but {} weights",
            thetas.len(),
            alpha.len()
        )));
    }
    if thetas.is_empty() {
        return Err(Error::invalid("thetas", "nothing to aggregate"));
    }
    let len = thetas[0].len();
    for (j, th) in thetas.iter().enumerate() {
        if th.len() != len {
            return Err(Error::DimensionMismatch(format!(
                "client {j} sent {} parameters, expected {len}",
                th.len()
            )));
        }
    }
    let mut out = vec![0.0f64; len];
    for (th, &a) in thetas.iter().zip(alpha.iter()) {
        for (o, &t) in out.iter_mut().zip(th.iter()) {
            *o += a * t;
        }
    }
    Ok(out)
}

/// Row-wise convex combination of global-node matrices after alignment.
///
/// `alignments[j][k]` names the row of `mus[j]` that lands in output row `k`;
/// counts are not mixed here, each client keeps its own.
pub fn aggregate_global_nodes(
    mus: &[Array2<f64>],
    alignments: &[Vec<usize>],
    alpha: &[f64],
) -> Result<Array2<f64>> {
    if mus.len() != alpha.len() || mus.len() != alignments.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} matrices, {} alignments, {} weights",
            mus.len(),
            alignments.len(),
            alpha.len()
        )));
    }
    if mus.is_empty() {
        return Err(Error::invalid("mus", "nothing to aggregate"));
    }
    let (n_g, d) = mus[0].dim();
    for (j, mu) in mus.iter().enumerate() {
        if mu.dim() != (n_g, d) {
            return Err(Error::DimensionMismatch(format!(
                "client {j} globals are {:?}, expected {:?}",
                mu.dim(),
                (n_g, d)
            )));
        }
        if alignments[j].len() != n_g || alignments[j].iter().any(|&l| l >= n_g) {
            return Err(Error::DimensionMismatch(format!(
                "client {j} alignment is not a valid row map for {n_g} rows"
            )));
        }
    }
    let mut out = Array2::zeros((n_g, d));
    for ((mu, align), &a) in mus.iter().zip(alignments.iter()).zip(alpha.iter()) {
        for k in 0..n_g {
            let src = mu.row(align[k]);
            let mut dst = out.row_mut(k);
            dst.zip_mut_with(&src, |o, &s| *o += a * s);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use itertools::Itertools;
    use ndarray::{array, Array2};
    use proptest::prelude::*;
    use rand::Rng;

    fn random_mu(n_g: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = crate::seed::rng(seed);
        Array2::from_shape_simple_fn((n_g, d), || rng.gen::<f64>() * 2.0 - 1.0)
    }

    #[test]
    fn row_permutation_scores_one_and_is_recovered() {
        let mu = random_mu(5, 7, 11);
        let p = [2usize, 0, 3, 1, 4];
        let mut permuted = Array2::zeros((5, 7));
        for (l, &src) in p.iter().enumerate() {
            permuted.row_mut(l).assign(&mu.row(src));
        }
        let a = align_and_score(&mu, &permuted).unwrap();
        assert!((a.score - 1.0).abs() < 1e-12, "score {}", a.score);
        assert!(!a.degenerate);
        // perm[k] must point at the row of `permuted` holding mu's row k
        let mut inv = [0usize; 5];
        for (l, &src) in p.iter().enumerate() {
            inv[src] = l;
        }
        assert_eq!(a.perm, inv);
    }

    #[test]
    fn antipodal_rows_score_minus_one() {
        // Negating scores -1 whenever no matching can dodge the antipodal
        // pairs: single row, or rows that are positive multiples of one
        // direction (every cross cosine is already -1).
        let single = random_mu(1, 6, 12);
        let a = align_and_score(&single, &single.mapv(|x| -x)).unwrap();
        assert!((a.score + 1.0).abs() < 1e-12, "score {}", a.score);

        let dir = random_mu(1, 6, 13);
        let mut mu = Array2::zeros((4, 6));
        for (k, scale) in [0.5, 1.0, 2.0, 3.5].into_iter().enumerate() {
            mu.row_mut(k).assign(&dir.row(0).mapv(|x| scale * x));
        }
        let a = align_and_score(&mu, &mu.mapv(|x| -x)).unwrap();
        assert!((a.score + 1.0).abs() < 1e-12, "score {}", a.score);
    }

    #[test]
    fn zero_norm_row_flags_and_ties_break_toward_near_rows() {
        let mu_i = array![[0.0], [10.0]];
        let mu_j = array![[9.0], [1.0]];
        let a = align_and_score(&mu_i, &mu_j).unwrap();
        assert!(a.degenerate);
        // both matchings have mean cosine 0.5; the near pairing 0<->1, 10<->9 wins
        assert_eq!(a.perm, vec![1, 0]);
        assert!((a.score - 0.5).abs() < 1e-12);

        let out = aggregate_global_nodes(
            &[mu_i, mu_j],
            &[vec![0, 1], a.perm.clone()],
            &[0.5, 0.5],
        )
        .unwrap();
        assert!((out[(0, 0)] - 0.5).abs() < 1e-12);
        assert!((out[(1, 0)] - 9.5).abs() < 1e-12);
    }

    #[test]
    fn matches_factorial_search_on_cosine_instances() {
        for n_g in 2..=6 {
            for t in 0..10 {
                let mu_i = random_mu(n_g, 4, 100 + t);
                let mu_j = random_mu(n_g, 4, 200 + t);
                let a = align_and_score(&mu_i, &mu_j).unwrap();
                let best = (0..n_g)
                    .permutations(n_g)
                    .map(|p| {
                        p.iter()
                            .enumerate()
                            .map(|(k, &l)| cosine(mu_i.row(k), mu_j.row(l)).unwrap())
                            .sum::<f64>()
                            / n_g as f64
                    })
                    .fold(f64::NEG_INFINITY, f64::max);
                assert!(
                    (a.score - best).abs() < 1e-9,
                    "n_g={n_g} t={t}: {} vs {best}",
                    a.score
                );
            }
        }
    }

    #[test]
    fn similarity_matrix_is_bitwise_symmetric_with_unit_diagonal() {
        let mus: Vec<_> = (0..4).map(|i| random_mu(3, 5, 300 + i)).collect();
        let sim = similarity_matrix(&mus).unwrap();
        let s = sim.matrix();
        for i in 0..4 {
            assert_eq!(s[(i, i)], 1.0);
            for j in 0..4 {
                assert_eq!(s[(i, j)].to_bits(), s[(j, i)].to_bits());
            }
        }
        // alignment(j, i) is the inverse of alignment(i, j)
        for i in 0..4 {
            for j in 0..4 {
                let fwd = sim.alignment(i, j);
                let bwd = sim.alignment(j, i);
                for k in 0..3 {
                    assert_eq!(bwd[fwd[k]], k);
                }
            }
        }
    }

    #[test]
    fn softmax_two_client_example() {
        let w = personalized_weights(array![1.0, 0.0].view(), 5.0).unwrap();
        assert!((w[0] - 0.99331).abs() < 1e-5, "{}", w[0]);
        assert!((w[1] - 0.00669).abs() < 1e-5, "{}", w[1]);
    }

    #[test]
    fn weighted_scalar_average() {
        let out = aggregate_params(&[vec![4.0], vec![8.0]], &[0.25, 0.75]).unwrap();
        assert_eq!(out, vec![7.0]);
    }

    #[test]
    fn aggregate_params_rejects_ragged_input() {
        let err = aggregate_params(&[vec![1.0, 2.0], vec![3.0]], &[0.5, 0.5]).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch(_)));
    }

    #[test]
    fn tiny_tau_is_uniform() {
        let row = array![0.9, -0.3, 0.4, 0.1];
        let w = personalized_weights(row.view(), 1e-8).unwrap();
        for &x in w.iter() {
            assert!((x - 0.25).abs() < 1e-6, "{x}");
        }
    }

    #[test]
    fn weight_grows_with_similarity() {
        let lo = personalized_weights(array![0.9, 0.2, 0.5].view(), 5.0).unwrap();
        let hi = personalized_weights(array![0.9, 0.3, 0.5].view(), 5.0).unwrap();
        assert!(hi[1] > lo[1]);
    }

    proptest! {
        #[test]
        fn weights_form_a_distribution(
            row in proptest::collection::vec(-1.0f64..1.0, 1..8),
            tau in 0.0f64..10.0,
        ) {
            let row = Array1::from_vec(row);
            let w = personalized_weights(row.view(), tau).unwrap();
            prop_assert!((w.sum() - 1.0).abs() < 1e-9);
            prop_assert!(w.iter().all(|&x| x > 0.0));
        }
    }
}
