use ndarray::Array2;

/// Exact minimum-cost perfect assignment on a square cost matrix via the
/// O(n³) potentials algorithm. Returns `assign` with `assign[row] = col`.
pub fn min_cost_assignment(cost: &Array2<f64>) -> Vec<usize> {
    let n = cost.nrows();
    assert_eq!(n, cost.ncols(), "cost matrix must be square");
    if n == 0 {
        return Vec::new();
    }
    // 1-indexed arrays; p[j] = row matched to column j, 0 = free
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0usize; n];
    for j in 1..=n {
        assign[p[j] - 1] = j - 1;
    }
    assign
}

#[cfg(test)]
mod tests {
    use super::*;
    use itertools::Itertools;
    use ndarray::array;
    use rand::Rng;

    fn total(cost: &Array2<f64>, assign: &[usize]) -> f64 {
        assign.iter().enumerate().map(|(r, &c)| cost[(r, c)]).sum()
    }

    fn brute_force_min(cost: &Array2<f64>) -> f64 {
        (0..cost.nrows())
            .permutations(cost.nrows())
            .map(|p| total(cost, &p))
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn diagonal_dominant_picks_diagonal() {
        let cost = array![[0.0, 9.0, 9.0], [9.0, 0.0, 9.0], [9.0, 9.0, 0.0]];
        assert_eq!(min_cost_assignment(&cost), vec![0, 1, 2]);
    }

    #[test]
    fn known_three_by_three() {
        let cost = array![[4.0, 1.0, 3.0], [2.0, 0.0, 5.0], [3.0, 2.0, 2.0]];
        let assign = min_cost_assignment(&cost);
        assert_eq!(total(&cost, &assign), 5.0);
    }

    #[test]
    fn matches_brute_force_on_random_instances() {
        let mut rng = crate::seed::rng(31);
        for n in 2..=7 {
            for _ in 0..50 {
                let cost = Array2::from_shape_simple_fn((n, n), || rng.gen::<f64>() * 10.0 - 5.0);
                let assign = min_cost_assignment(&cost);
                let mut sorted = assign.clone();
                sorted.sort_unstable();
                assert_eq!(sorted, (0..n).collect::<Vec<_>>(), "not a permutation");
                let diff = total(&cost, &assign) - brute_force_min(&cost);
                assert!(diff.abs() < 1e-9, "n={n}: off optimum by {diff}");
            }
        }
    }

    #[test]
    fn empty_and_singleton() {
        assert!(min_cost_assignment(&Array2::zeros((0, 0))).is_empty());
        assert_eq!(min_cost_assignment(&array![[3.0]]), vec![0]);
    }
}
