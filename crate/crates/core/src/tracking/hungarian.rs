//! Minimum-cost assignment (Kuhn-Munkres with potentials) with a
//! deterministic choice among equal-cost optima.

const INF: f64 = f64::INFINITY;

/// Solves a square problem. Returns `(total, row_to_col, row_potentials, col_potentials)`.
fn solve_square(c: &[Vec<f64>]) -> (f64, Vec<usize>, Vec<f64>, Vec<f64>) {
    let n = c.len();
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![INF; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = INF;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = c[i0 - 1][j - 1] - u[i0] - v[j];
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
        if p[j] > 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    let total = assignment.iter().enumerate().map(|(i, &j)| c[i][j]).sum();
    (total, assignment, u[1..].to_vec(), v[1..].to_vec())
}

fn optimal_cost(c: &[Vec<f64>], rows: &[usize], cols: &[usize]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    let sub: Vec<Vec<f64>> = rows.iter().map(|&i| cols.iter().map(|&j| c[i][j]).collect()).collect();
    solve_square(&sub).0
}

/// Minimum-cost matching of size `min(n, m)` on an `n x m` cost matrix.
///
/// Returns `(row, col)` pairs sorted by row. Among all optimal matchings the one
/// whose row-by-row column sequence is lexicographically smallest is returned.
/// Costs must be finite; encode forbidden pairs with a large sentinel.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<(usize, usize)> {
    let n = cost.len();
    let m = cost.first().map_or(0, |r| r.len());
    if n == 0 || m == 0 {
        return Vec::new();
    }
    let size = n.max(m);
    let padded: Vec<Vec<f64>> = (0..size)
        .map(|i| (0..size).map(|j| if i < n && j < m { cost[i][j] } else { 0.0 }).collect())
        .collect();
    let scale = padded.iter().flatten().fold(1.0f64, |a, x| a.max(x.abs()));
    let tol = 1e-9 * scale * size as f64;
    let (best, _, u, v) = solve_square(&padded);

    let mut free_cols: Vec<usize> = (0..size).collect();
    let mut acc = 0.0;
    let mut chosen = Vec::with_capacity(size);
    for i in 0..size {
        let rest_rows: Vec<usize> = (i + 1..size).collect();
        let mut pick = None;
        for (slot, &j) in free_cols.iter().enumerate() {
            // Every optimal matching uses only edges that are tight under any
            // optimal dual, so slack edges can be skipped without a solve.
            if padded[i][j] - u[i] - v[j] > tol {
                continue;
            }
            let rest_cols: Vec<usize> = free_cols.iter().copied().filter(|&c| c != j).collect();
            let total = acc + padded[i][j] + optimal_cost(&padded, &rest_rows, &rest_cols);
            if total <= best + tol {
                pick = Some(slot);
                break;
            }
        }
        // Tolerance corner cases: fall back to the cheapest remaining column.
        let slot = pick.unwrap_or_else(|| {
            (0..free_cols.len())
                .min_by(|&a, &b| padded[i][free_cols[a]].total_cmp(&padded[i][free_cols[b]]))
                .unwrap()
        });
        let j = free_cols.remove(slot);
        acc += padded[i][j];
        chosen.push((i, j));
    }
    chosen.into_iter().filter(|&(i, j)| i < n && j < m).collect()
}

pub fn assignment_cost(cost: &[Vec<f64>], pairs: &[(usize, usize)]) -> f64 {
    pairs.iter().map(|&(i, j)| cost[i][j]).sum()
}
