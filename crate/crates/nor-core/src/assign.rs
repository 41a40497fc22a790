//! Exact linear assignment via shortest augmenting paths with potentials
//! (the O(n^3) Hungarian variant).

use ndarray::Array2;

/// Minimum-cost perfect assignment of a square cost matrix; returns
/// `row -> column`.
pub fn min_cost_assignment(cost: &Array2<f64>) -> Vec<usize> {
    let n = cost.nrows();
    assert_eq!(n, cost.ncols(), "cost matrix must be square");
    if n == 0 {
        return Vec::new();
    }
    // 1-indexed potentials and matching, the classic formulation.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1]; // column -> row
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
                if !used[j] {
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
    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        assignment[p[j] - 1] = j - 1;
    }
    assignment
}

/// Maximum-sum assignment; returns `row -> column`.
pub fn max_sum_assignment(score: &Array2<f64>) -> Vec<usize> {
    min_cost_assignment(&score.mapv(|s| -s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    fn brute_force_max(score: &Array2<f64>) -> (Vec<usize>, f64) {
        let n = score.nrows();
        let mut best = (Vec::new(), f64::NEG_INFINITY);
        let mut perm: Vec<usize> = (0..n).collect();
        permute(&mut perm, 0, score, &mut best);
        best
    }

    fn permute(perm: &mut Vec<usize>, k: usize, score: &Array2<f64>, best: &mut (Vec<usize>, f64)) {
        let n = perm.len();
        if k == n {
            let total: f64 = (0..n).map(|i| score[(i, perm[i])]).sum();
            if total > best.1 {
                *best = (perm.clone(), total);
            }
            return;
        }
        for i in k..n {
            perm.swap(k, i);
            permute(perm, k + 1, score, best);
            perm.swap(k, i);
        }
    }

    #[test]
    fn matches_brute_force_on_random_matrices() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for n in 1..=7 {
            for _ in 0..20 {
                let m = Array2::from_shape_fn((n, n), |_| rng.random_range(-5.0..5.0));
                let got = max_sum_assignment(&m);
                let got_total: f64 = (0..n).map(|i| m[(i, got[i])]).sum();
                let (_, best_total) = brute_force_max(&m);
                assert!(
                    (got_total - best_total).abs() < 1e-9,
                    "n={n}: {got_total} vs {best_total}"
                );
            }
        }
    }

    #[test]
    fn identity_on_diagonal_dominant() {
        let m = arr2(&[[5.0, 0.0, 0.0], [0.0, 5.0, 0.0], [0.0, 0.0, 5.0]]);
        assert_eq!(max_sum_assignment(&m), vec![0, 1, 2]);
    }
}
