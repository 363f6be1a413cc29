//! Numeric rank via Householder QR with column pivoting.

use super::Mat;

/// Rank of `m`, counting pivots with |r_kk| above rel_tol times the largest
/// pivot. rel_tol = 1e-8 is the convention used by the observability checks.
pub fn numeric_rank(m: &Mat, rel_tol: f64) -> usize {
    let rows = m.rows();
    let cols = m.cols();
    let mut a: Vec<Vec<f64>> = (0..rows).map(|i| m.row(i).to_vec()).collect();
    let kmax = rows.min(cols);
    let mut col_norm2: Vec<f64> = (0..cols)
        .map(|j| (0..rows).map(|i| a[i][j] * a[i][j]).sum())
        .collect();
    let mut pivots: Vec<f64> = Vec::with_capacity(kmax);
    for k in 0..kmax {
        // pivot: column with largest remaining norm
        let (pj, &pn) = col_norm2
            .iter()
            .enumerate()
            .skip(k)
            .max_by(|x, y| x.1.partial_cmp(y.1).unwrap())
            .unwrap();
        if pn <= 0.0 {
            break;
        }
        if pj != k {
            for row in a.iter_mut() {
                row.swap(k, pj);
            }
            col_norm2.swap(k, pj);
        }
        // Householder zeroing a[k+1..][k]
        let norm = (k..rows).map(|i| a[i][k] * a[i][k]).sum::<f64>().sqrt();
        if norm == 0.0 {
            pivots.push(0.0);
            continue;
        }
        let alpha = if a[k][k] >= 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = vec![0.0; rows];
        v[k] = a[k][k] - alpha;
        for i in k + 1..rows {
            v[i] = a[i][k];
        }
        let vnorm2: f64 = v[k..].iter().map(|x| x * x).sum();
        if vnorm2 > 0.0 {
            for j in k..cols {
                let dot: f64 = (k..rows).map(|i| v[i] * a[i][j]).sum();
                let f = 2.0 * dot / vnorm2;
                for i in k..rows {
                    a[i][j] -= f * v[i];
                }
            }
        }
        a[k][k] = alpha;
        for i in k + 1..rows {
            a[i][k] = 0.0;
        }
        pivots.push(alpha.abs());
        // downdate remaining column norms
        for j in k + 1..cols {
            col_norm2[j] = (k + 1..rows).map(|i| a[i][j] * a[i][j]).sum();
        }
    }
    let pmax = pivots.iter().cloned().fold(0.0f64, f64::max);
    if pmax == 0.0 {
        return 0;
    }
    pivots.iter().filter(|&&p| p > rel_tol * pmax).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_and_deficient_rank() {
        assert_eq!(numeric_rank(&Mat::identity(4), 1e-8), 4);
        assert_eq!(numeric_rank(&Mat::zeros(3, 5), 1e-8), 0);

        // rank-1 outer product
        let mut m = Mat::zeros(3, 3);
        for i in 0..3 {
            for j in 0..3 {
                m.set(i, j, (i as f64 + 1.0) * (j as f64 + 2.0));
            }
        }
        assert_eq!(numeric_rank(&m, 1e-8), 1);
    }

    #[test]
    fn tall_matrix_rank() {
        let m = Mat::from_rows(&[
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 1.0],
            vec![2.0, -1.0],
        ])
        .unwrap();
        assert_eq!(numeric_rank(&m, 1e-8), 2);
    }
}
