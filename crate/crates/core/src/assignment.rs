//! Minimum-cost rectangular assignment (Hungarian method with potentials).

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Optimal assignment of rows to distinct columns minimising the summed
/// cost. Every row is assigned when rows ≤ cols, every column otherwise.
/// Returns `assignment[row] = Some(col)`.
pub fn min_cost_assignment<T: Real>(cost: &DMatrix<T>) -> Result<Vec<Option<usize>>> {
    if cost.iter().any(|c| !c.is_finite_value()) {
        return Err(Error::NonFinite("assignment cost".into()));
    }
    let (r, c) = cost.shape();
    if r == 0 || c == 0 {
        return Ok(vec![None; r]);
    }
    if r <= c {
        return Ok(solve(cost).into_iter().map(Some).collect());
    }
    let cols = solve(&cost.transpose());
    let mut out = vec![None; r];
    for (col, row) in cols.into_iter().enumerate() {
        out[row] = Some(col);
    }
    Ok(out)
}

/// Maximises the summed score instead.
pub fn max_score_assignment<T: Real>(score: &DMatrix<T>) -> Result<Vec<Option<usize>>> {
    min_cost_assignment(&score.map(|v| -v))
}

/// Sum of `cost[(i, assignment[i])]` in row order.
pub fn assignment_cost<T: Real>(cost: &DMatrix<T>, assignment: &[Option<usize>]) -> T {
    assignment
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.map(|c| cost[(i, c)]))
        .fold(T::zero(), |a, b| a + b)
}

/// n ≤ m; returns the column of each row.
fn solve<T: Real>(a: &DMatrix<T>) -> Vec<usize> {
    let (n, m) = a.shape();
    let inf = T::infinity();
    // 1-based potentials as in the classical formulation; p[j] = row matched to column j
    let mut u = vec![T::zero(); n + 1];
    let mut v = vec![T::zero(); m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = a[(i0 - 1, j - 1)] - u[i0] - v[j];
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
            for j in 0..=m {
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
    let mut out = vec![0usize; n];
    for j in 1..=m {
        if p[j] != 0 {
            out[p[j] - 1] = j - 1;
        }
    }
    out
}
