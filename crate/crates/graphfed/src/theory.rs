//! Numerical checks for the attention approximation results.
//!
//! The object under study is the unscaled single-head attention
//! A(X) = softmax(H_b W_Q (X W_K)ᵀ), O(X) = A(X) X W_V, where only the key
//! side varies. Replacing nodes H with their assigned summary rows Pμ leaves
//! the output unchanged when the assignment is balanced; the bound check
//! measures how far O(μ) drifts from O(H) on real (unbalanced-fit) data.

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::global_nodes::nearest_indices;
use crate::seed;

/// Random perturbation pairs sampled when estimating the attention map's
/// Lipschitz constant.
pub const C_HAT_TRIALS: usize = 1000;

/// One frozen problem instance: node features, a query block, projection
/// matrices, summary rows μ, and a one-hot node-to-summary assignment P.
#[derive(Debug, Clone)]
pub struct AttentionInstance {
    /// n_i × d node representations.
    pub h: Array2<f64>,
    /// b × d query block.
    pub h_b: Array2<f64>,
    /// d × d' query projection.
    pub w_q: Array2<f64>,
    /// d × d' key projection.
    pub w_k: Array2<f64>,
    /// d × d' value projection.
    pub w_v: Array2<f64>,
    /// n_g × d summary rows.
    pub mu: Array2<f64>,
    /// n_i × n_g assignment, exactly one 1.0 per row.
    pub p: Array2<f64>,
}

impl AttentionInstance {
    pub fn new(
        h: Array2<f64>,
        h_b: Array2<f64>,
        w_q: Array2<f64>,
        w_k: Array2<f64>,
        w_v: Array2<f64>,
        mu: Array2<f64>,
        p: Array2<f64>,
    ) -> Result<Self> {
        let (n_i, d) = h.dim();
        let n_g = mu.nrows();
        if n_i == 0 || d == 0 || n_g == 0 || h_b.nrows() == 0 {
            return Err(Error::invalid("instance", "empty matrix"));
        }
        if h_b.ncols() != d || mu.ncols() != d {
            return Err(Error::DimensionMismatch(format!(
                "h_b/mu want {d} columns, got {} and {}",
                h_b.ncols(),
                mu.ncols()
            )));
        }
        if w_q.nrows() != d || w_k.nrows() != d || w_v.nrows() != d {
            return Err(Error::DimensionMismatch(
                "projection matrices must have d rows".into(),
            ));
        }
        if w_q.ncols() != w_k.ncols() || w_q.ncols() == 0 || w_v.ncols() == 0 {
            return Err(Error::DimensionMismatch(
                "W_Q and W_K must share a nonzero output width".into(),
            ));
        }
        if p.dim() != (n_i, n_g) {
            return Err(Error::DimensionMismatch(format!(
                "assignment is {:?}, expected {:?}",
                p.dim(),
                (n_i, n_g)
            )));
        }
        for (i, row) in p.rows().into_iter().enumerate() {
            let ones = row.iter().filter(|&&x| x == 1.0).count();
            let zeros = row.iter().filter(|&&x| x == 0.0).count();
            if ones != 1 || ones + zeros != n_g {
                return Err(Error::invalid(
                    "p",
                    "assignment rows must be one-hot (exactly one 1.0)",
                ));
            }
            let _ = i;
        }
        Ok(AttentionInstance {
            h,
            h_b,
            w_q,
            w_k,
            w_v,
            mu,
            p,
        })
    }

    /// Group index of each node, read off the one-hot rows.
    pub fn assignment(&self) -> Vec<usize> {
        self.p
            .rows()
            .into_iter()
            .map(|row| row.iter().position(|&x| x == 1.0).expect("one-hot row"))
            .collect()
    }

    /// Pμ as an exact row gather, so P = I reproduces μ bitwise.
    pub fn p_times_mu(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.h.nrows(), self.mu.ncols()));
        for (i, g) in self.assignment().into_iter().enumerate() {
            out.row_mut(i).assign(&self.mu.row(g));
        }
        out
    }

    fn group_sizes(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.mu.nrows()];
        for g in self.assignment() {
            counts[g] += 1;
        }
        counts
    }
}

fn fro(a: &Array2<f64>) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// A(X) = rowwise softmax of H_b W_Q (X W_K)ᵀ. No magnitude scaling on the
/// logits; the deliberately scaled variant lives in the model, not here.
pub fn attention_score(inst: &AttentionInstance, keys: &Array2<f64>) -> Result<Array2<f64>> {
    if keys.ncols() != inst.h.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "keys have {} columns, expected {}",
            keys.ncols(),
            inst.h.ncols()
        )));
    }
    let q = inst.h_b.dot(&inst.w_q);
    let k = keys.dot(&inst.w_k);
    let mut logits = q.dot(&k.t());
    for mut row in logits.rows_mut() {
        let hi = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|x| (x - hi).exp());
        let z = row.sum();
        row.mapv_inplace(|x| x / z);
    }
    Ok(logits)
}

/// O(X) = A(X) X W_V.
pub fn attention_output(inst: &AttentionInstance, keys: &Array2<f64>) -> Result<Array2<f64>> {
    let a = attention_score(inst, keys)?;
    Ok(a.dot(&keys.dot(&inst.w_v)))
}

/// ‖O(Pμ) − O(μ)‖_F. Zero in exact arithmetic when every summary row serves
/// the same number of nodes; the balance requirement is enforced, not assumed.
pub fn lemma_residual(inst: &AttentionInstance) -> Result<f64> {
    let sizes = inst.group_sizes();
    let first = sizes[0];
    if sizes.iter().any(|&c| c != first) {
        return Err(Error::UnbalancedAssignment(format!(
            "group sizes {sizes:?} are not all equal"
        )));
    }
    let o_pmu = attention_output(inst, &inst.p_times_mu())?;
    let o_mu = attention_output(inst, &inst.mu)?;
    Ok(fro(&(o_pmu - o_mu)))
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    /// ‖O(μ) − O(H)‖_F.
    pub lhs: f64,
    /// Ĉ · σ · (2 + σ) · ‖H‖_F² · ‖W_V‖_F.
    pub rhs: f64,
    /// ‖H − Pμ‖_F / ‖H‖_F.
    pub sigma: f64,
    /// Empirical Lipschitz estimate of X ↦ A(X); a lower estimate of the
    /// true constant, so `holds` is a consistency check rather than a proof.
    pub c_hat: f64,
    pub holds: bool,
}

fn gaussian(rows: usize, cols: usize, rng: &mut impl Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample::<f64, _>(StandardNormal))
}

/// Measures how far replacing nodes by their summaries moves the attention
/// output, against the σ-based bound with an empirically estimated constant.
pub fn bound_check(inst: &AttentionInstance, seed: u64) -> Result<BoundReport> {
    let h_norm = fro(&inst.h);
    if h_norm == 0.0 {
        return Err(Error::invalid("h", "zero node matrix"));
    }
    let pmu = inst.p_times_mu();
    let sigma = fro(&(&inst.h - &pmu)) / h_norm;
    let lhs = fro(&(attention_output(inst, &inst.mu)? - attention_output(inst, &inst.h)?));

    // Ratio maximization over perturbation pairs around both H and Pμ, with
    // the anchored pair (H, Pμ) itself as the first candidate.
    let mut c_hat = 0.0f64;
    let den = fro(&(&pmu - &inst.h));
    if den > 1e-12 {
        let num = fro(&(attention_score(inst, &pmu)? - attention_score(inst, &inst.h)?));
        c_hat = num / den;
    }
    let (n_i, d) = inst.h.dim();
    let scales = [1e-3, 1e-2, 1e-1, 1.0];
    let mut rng = seed::rng(seed);
    for t in 0..C_HAT_TRIALS {
        let scale = scales[t % scales.len()];
        let base = if (t / scales.len()) % 2 == 0 {
            &inst.h
        } else {
            &pmu
        };
        let x = base + &(gaussian(n_i, d, &mut rng) * scale);
        let y = base + &(gaussian(n_i, d, &mut rng) * scale);
        let den = fro(&(&x - &y));
        if den < 1e-12 {
            continue;
        }
        let num = fro(&(attention_score(inst, &x)? - attention_score(inst, &y)?));
        c_hat = c_hat.max(num / den);
    }

    let rhs = c_hat * sigma * (2.0 + sigma) * h_norm * h_norm * fro(&inst.w_v);
    Ok(BoundReport {
        lhs,
        rhs,
        sigma,
        c_hat,
        holds: lhs <= rhs,
    })
}

/// Plain Lloyd iterations. `init` rows seed the centroids; empty clusters
/// keep their previous centroid. Returns (centroids, assignment).
pub fn kmeans(
    points: &Array2<f64>,
    init: &Array2<f64>,
    iters: usize,
) -> Result<(Array2<f64>, Vec<usize>)> {
    if points.nrows() == 0 || init.nrows() == 0 {
        return Err(Error::invalid("kmeans", "empty input"));
    }
    if points.ncols() != init.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "points are {}-d, centroids {}-d",
            points.ncols(),
            init.ncols()
        )));
    }
    let k = init.nrows();
    let mut centroids = init.clone();
    let mut assign = nearest_indices(points, &centroids);
    for _ in 0..iters {
        let mut sums = Array2::<f64>::zeros((k, points.ncols()));
        let mut counts = vec![0usize; k];
        for (i, &c) in assign.iter().enumerate() {
            let mut row = sums.row_mut(c);
            row += &points.row(i);
            counts[c] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                let mut row = centroids.row_mut(c);
                row.assign(&(&sums.row(c) / counts[c] as f64));
            }
        }
        let next = nearest_indices(points, &centroids);
        if next == assign {
            break;
        }
        assign = next;
    }
    Ok((centroids, assign))
}

/// All-Gaussian instance with node i assigned to group i mod n_g; requires
/// n_g | n_i so the assignment is balanced.
pub fn random_balanced_instance(
    n_i: usize,
    d: usize,
    d_p: usize,
    n_g: usize,
    b: usize,
    seed: u64,
) -> Result<AttentionInstance> {
    if n_g == 0 || n_i % n_g != 0 {
        return Err(Error::invalid("n_g", "must divide the node count"));
    }
    if b == 0 || b > n_i {
        return Err(Error::invalid("b", "query block must fit in the node set"));
    }
    let mut rng = seed::rng(seed);
    let h = gaussian(n_i, d, &mut rng);
    let h_b = h.slice(ndarray::s![0..b, ..]).to_owned();
    let scale = 1.0 / (d as f64).sqrt();
    let w_q = gaussian(d, d_p, &mut rng) * scale;
    let w_k = gaussian(d, d_p, &mut rng) * scale;
    let w_v = gaussian(d, d_p, &mut rng) * scale;
    let mu = gaussian(n_g, d, &mut rng);
    let mut p = Array2::zeros((n_i, n_g));
    for i in 0..n_i {
        p[(i, i % n_g)] = 1.0;
    }
    AttentionInstance::new(h, h_b, w_q, w_k, w_v, mu, p)
}

/// Blob-structured instance: nodes scatter around n_g well-separated means
/// and μ comes from Lloyd iterations seeded at the per-group means, so σ is
/// small and the group labels stay aligned with P.
pub fn blob_instance(
    n_i: usize,
    d: usize,
    d_p: usize,
    n_g: usize,
    b: usize,
    spread: f64,
    noise_std: f64,
    seed: u64,
) -> Result<AttentionInstance> {
    let mut inst = random_balanced_instance(n_i, d, d_p, n_g, b, seed)?;
    let mut rng = seed::rng(crate::seed::derive(seed, &[0x71]));
    let means = gaussian(n_g, d, &mut rng) * spread;
    for i in 0..n_i {
        let g = i % n_g;
        let noise = gaussian(1, d, &mut rng) * noise_std;
        let row = &means.row(g) + &noise.row(0);
        inst.h.row_mut(i).assign(&row);
    }
    inst.h_b = inst.h.slice(ndarray::s![0..b, ..]).to_owned();

    let mut group_means = Array2::zeros((n_g, d));
    for g in 0..n_g {
        let mut acc = ndarray::Array1::zeros(d);
        let mut count = 0.0;
        for i in (g..n_i).step_by(n_g) {
            acc += &inst.h.row(i);
            count += 1.0;
        }
        group_means.row_mut(g).assign(&(acc / count));
    }
    let (mu, _) = kmeans(&inst.h, &group_means, 20)?;
    inst.mu = mu;
    Ok(inst)
}
