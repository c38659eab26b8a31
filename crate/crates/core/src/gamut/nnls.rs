//! Lawson–Hanson non-negative least squares for short, wide systems.

/// Minimizes `‖A x − b‖` subject to `x ≥ 0`. `columns[j]` is column `j` of
/// `A`, each of length `b.len()`.
pub(crate) fn nnls(columns: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = columns.len();
    let mut x = vec![0.0; n];
    let mut passive = vec![false; n];
    let scale = columns
        .iter()
        .flat_map(|c| c.iter())
        .chain(b)
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1e-300);
    let tol = 1e-12 * scale * scale * n as f64;

    for _ in 0..(3 * n + 10) {
        let residual = residual(columns, &x, b);
        let gradient: Vec<f64> = columns.iter().map(|c| dot(c, &residual)).collect();
        let Some(j) = (0..n)
            .filter(|&j| !passive[j] && gradient[j] > tol)
            .max_by(|&a, &b| gradient[a].total_cmp(&gradient[b]))
        else {
            break;
        };
        passive[j] = true;

        loop {
            let set: Vec<usize> = (0..n).filter(|&i| passive[i]).collect();
            let z_p = least_squares(columns, &set, b);
            if set.iter().zip(&z_p).all(|(_, &z)| z > 0.0) {
                for (&i, &z) in set.iter().zip(&z_p) {
                    x[i] = z;
                }
                break;
            }
            let mut alpha = f64::INFINITY;
            for (&i, &z) in set.iter().zip(&z_p) {
                if z <= 0.0 {
                    alpha = alpha.min(x[i] / (x[i] - z));
                }
            }
            for (&i, &z) in set.iter().zip(&z_p) {
                x[i] += alpha * (z - x[i]);
                if x[i] <= 1e-15 {
                    x[i] = 0.0;
                    passive[i] = false;
                }
            }
            // The entering column can leave at once when it is dependent on
            // the others; the outer loop will not pick it again unless its
            // gradient becomes positive.
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
    }
    x
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn residual(columns: &[Vec<f64>], x: &[f64], b: &[f64]) -> Vec<f64> {
    let mut r = b.to_vec();
    for (c, &xj) in columns.iter().zip(x) {
        if xj != 0.0 {
            for (ri, ci) in r.iter_mut().zip(c) {
                *ri -= xj * ci;
            }
        }
    }
    r
}

/// Unconstrained least squares over the columns in `set`, through the
/// normal equations with a tiny ridge for rank-deficient sets.
fn least_squares(columns: &[Vec<f64>], set: &[usize], b: &[f64]) -> Vec<f64> {
    let p = set.len();
    let mut g = vec![vec![0.0; p + 1]; p];
    for (r, &i) in set.iter().enumerate() {
        for (c, &j) in set.iter().enumerate() {
            g[r][c] = dot(&columns[i], &columns[j]);
        }
        g[r][p] = dot(&columns[i], b);
    }
    let trace: f64 = (0..p).map(|i| g[i][i]).sum();
    for (i, row) in g.iter_mut().enumerate() {
        row[i] += 1e-13 * trace.max(1e-300);
    }
    solve_augmented(g)
}

/// Gaussian elimination with partial pivoting on an augmented `p × (p+1)`
/// matrix.
pub(crate) fn solve_augmented(mut m: Vec<Vec<f64>>) -> Vec<f64> {
    let p = m.len();
    for col in 0..p {
        let pivot = (col..p)
            .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
            .unwrap_or(col);
        m.swap(col, pivot);
        let d = m[col][col];
        if d == 0.0 {
            continue;
        }
        for row in (col + 1)..p {
            let f = m[row][col] / d;
            if f != 0.0 {
                for k in col..=p {
                    m[row][k] -= f * m[col][k];
                }
            }
        }
    }
    let mut x = vec![0.0; p];
    for row in (0..p).rev() {
        let s: f64 = ((row + 1)..p).map(|k| m[row][k] * x[k]).sum();
        x[row] = if m[row][row] == 0.0 { 0.0 } else { (m[row][p] - s) / m[row][row] };
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unconstrained_optimum_is_returned_when_feasible() {
        // x = (1, 2) solves exactly.
        let cols = vec![vec![1.0, 0.0, 1.0], vec![0.0, 1.0, 1.0]];
        let x = nnls(&cols, &[1.0, 2.0, 3.0]);
        assert!((x[0] - 1.0).abs() < 1e-9 && (x[1] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn negative_component_is_clamped() {
        // Unconstrained solution is (2, -1); the constrained one puts
        // everything on the first column: x0 = (a·b)/(a·a) = 3/2.
        let cols = vec![vec![1.0, 1.0], vec![0.0, 1.0]];
        let x = nnls(&cols, &[2.0, 1.0]);
        assert!((x[0] - 1.5).abs() < 1e-9, "{x:?}");
        assert_eq!(x[1], 0.0);
    }

    #[test]
    fn wide_system_finds_exact_nonnegative_solution() {
        let cols: Vec<Vec<f64>> = (0..10)
            .map(|j| vec![(j as f64).cos(), (j as f64 * 0.7).sin(), 1.0])
            .collect();
        let truth = [0.0, 0.3, 0.0, 0.0, 0.5, 0.0, 0.0, 0.2, 0.0, 0.0];
        let b: Vec<f64> = (0..3).map(|r| (0..10).map(|j| cols[j][r] * truth[j]).sum()).collect();
        let x = nnls(&cols, &b);
        assert!(x.iter().all(|&v| v >= 0.0));
        let r = residual(&cols, &x, &b);
        assert!(dot(&r, &r).sqrt() < 1e-9);
    }
}
