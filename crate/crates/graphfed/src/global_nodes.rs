//! Per-client global nodes maintained by momentum online clustering over
//! batch representations.

use ndarray::{Array1, Array2};
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::seed;

const INIT_STREAM: u64 = 0x60;

/// n_g running centroids in representation space plus their decayed counts.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalNodes {
    mu: Array2<f64>,
    counts: Array1<f64>,
    gamma: f64,
}

impl GlobalNodes {
    pub fn mu(&self) -> &Array2<f64> {
        &self.mu
    }

    pub fn counts(&self) -> &Array1<f64> {
        &self.counts
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn n_g(&self) -> usize {
        self.mu.nrows()
    }

    pub fn d(&self) -> usize {
        self.mu.ncols()
    }

    /// Install server-aggregated centroids; running counts are client state
    /// and stay untouched.
    pub fn set_mu(&mut self, mu: Array2<f64>) -> Result<()> {
        if mu.dim() != self.mu.dim() {
            return Err(Error::DimensionMismatch(format!(
                "centroids {:?}, expected {:?}",
                mu.dim(),
                self.mu.dim()
            )));
        }
        self.mu = mu;
        Ok(())
    }

    /// One Algorithm-1 step: assign each batch row to its nearest centroid,
    /// then blend means and counts with momentum γ. Clusters receiving no
    /// rows keep their centroid bitwise and only decay their count.
    pub fn online_update(&mut self, h_b: &Array2<f64>) -> Result<()> {
        if h_b.nrows() == 0 {
            return Err(Error::invalid("batch", "online update needs a nonempty batch"));
        }
        if h_b.ncols() != self.d() {
            return Err(Error::DimensionMismatch(format!(
                "batch width {}, centroids have {}",
                h_b.ncols(),
                self.d()
            )));
        }
        let assign = nearest_indices(h_b, &self.mu);
        let g = self.gamma;
        let mut sums = Array2::<f64>::zeros(self.mu.dim());
        let mut hits = vec![0.0f64; self.n_g()];
        for (row, &j) in h_b.rows().into_iter().zip(&assign) {
            let mut acc = sums.row_mut(j);
            acc += &row;
            hits[j] += 1.0;
        }
        for j in 0..self.n_g() {
            if hits[j] == 0.0 {
                self.counts[j] *= g;
                continue;
            }
            let c_new = self.counts[j] * g + hits[j] * (1.0 - g);
            let blended =
                &self.mu.row(j).mapv(|m| m * self.counts[j] * g) + &sums.row(j).mapv(|s| s * (1.0 - g));
            self.mu.row_mut(j).assign(&(&blended / c_new));
            self.counts[j] = c_new;
        }
        Ok(())
    }
}

/// Random centroids at scale 1/√d with unit counts.
pub fn init_global_nodes(n_g: usize, d: usize, gamma: f64, init_seed: u64) -> Result<GlobalNodes> {
    if n_g == 0 || d == 0 {
        return Err(Error::invalid("global_nodes", "n_g and d must be positive"));
    }
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::invalid("gamma", format!("{gamma} not in [0, 1]")));
    }
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut rng = seed::rng(seed::derive(init_seed, &[INIT_STREAM]));
    let scale = 1.0 / (d as f64).sqrt();
    let mu = Array2::from_shape_simple_fn((n_g, d), || normal.sample(&mut rng) * scale);
    Ok(GlobalNodes {
        mu,
        counts: Array1::ones(n_g),
        gamma,
    })
}

/// Index of the Euclidean-nearest centroid per batch row, ties to the
/// lowest index.
pub fn nearest_indices(h_b: &Array2<f64>, mu: &Array2<f64>) -> Vec<usize> {
    h_b.rows()
        .into_iter()
        .map(|row| {
            let mut best = (0usize, f64::INFINITY);
            for (j, c) in mu.rows().into_iter().enumerate() {
                let d2: f64 = row
                    .iter()
                    .zip(c.iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                if d2 < best.1 {
                    best = (j, d2);
                }
            }
            best.0
        })
        .collect()
}

/// One-hot assignment matrix P with P[i, j] = 1 iff row i's nearest
/// centroid is j.
pub fn find_nearest(h_b: &Array2<f64>, mu: &Array2<f64>) -> Array2<f64> {
    let assign = nearest_indices(h_b, mu);
    let mut p = Array2::zeros((h_b.nrows(), mu.nrows()));
    for (i, &j) in assign.iter().enumerate() {
        p[(i, j)] = 1.0;
    }
    p
}
