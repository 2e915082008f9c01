//! Minimum-cost perfect matching on a dense square cost matrix
//! (Hungarian method with row/column potentials, O(n³)).

use alloc::vec;
use alloc::vec::Vec;

/// Returns `(total_cost, col_of_row)` for the `n x n` row-major `cost`.
pub fn min_cost_assignment(cost: &[f64], n: usize) -> (f64, Vec<usize>) {
    debug_assert_eq!(cost.len(), n * n);
    if n == 0 {
        return (0.0, Vec::new());
    }
    let at = |i: usize, j: usize| cost[(i - 1) * n + (j - 1)];
    // 1-based with a virtual column 0, as in the classic formulation
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = at(i0, j) - u[i0] - v[j];
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
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of_row = vec![0usize; n];
    for j in 1..=n {
        col_of_row[row_of[j] - 1] = j - 1;
    }
    // summed from the matching itself rather than the potentials
    let total = col_of_row
        .iter()
        .enumerate()
        .map(|(i, &j)| cost[i * n + j])
        .sum();
    (total, col_of_row)
}
