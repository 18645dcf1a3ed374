//! Test-only oracles, independent of the library's SVD and Kronecker
//! implementations.

use rankstrat::matrix::MatrixT;

/// Matrix rank by Gaussian elimination with partial pivoting. A pivot
/// counts while its magnitude exceeds `tol` times the largest absolute
/// entry of the original matrix.
pub fn gauss_rank(m: &MatrixT<f64>, tol: f64) -> usize {
    let rows = m.rows();
    let cols = m.cols();
    let mut w: Vec<Vec<f64>> = (0..rows).map(|i| m.row(i).to_vec()).collect();
    let scale = w.iter().flatten().fold(0.0f64, |acc, &x| acc.max(x.abs()));
    if scale == 0.0 {
        return 0;
    }
    let cut = tol * scale;
    let mut rank = 0;
    let mut row = 0;
    for col in 0..cols {
        let pivot =
            (row..rows).max_by(|&a, &b| w[a][col].abs().partial_cmp(&w[b][col].abs()).unwrap());
        let Some(pivot) = pivot else { break };
        if w[pivot][col].abs() <= cut {
            continue;
        }
        w.swap(row, pivot);
        for r in row + 1..rows {
            let f = w[r][col] / w[row][col];
            for c in col..cols {
                w[r][c] -= f * w[row][c];
            }
        }
        rank += 1;
        row += 1;
        if row == rows {
            break;
        }
    }
    rank
}

/// The stacked tangent-space matrix assembled entry by entry from its
/// definition: the top block holds `I[i,k] * B[j,l]`, the bottom block
/// `A[k,i] * I[j,l]`, with row index `i*d + j` and column index `k*d + l`.
/// Shares nothing with `matrix::kron`/`matrix::gamma_matrix`.
pub fn gamma_explicit(a: &MatrixT<f64>, b: &MatrixT<f64>) -> MatrixT<f64> {
    let d = a.rows();
    assert_eq!(a.cols(), d);
    assert_eq!((b.rows(), b.cols()), (d, d));
    MatrixT::from_fn(2 * d * d, d * d, |r, c| {
        let (k, l) = (c / d, c % d);
        if r < d * d {
            let (i, j) = (r / d, r % d);
            if i == k {
                b.get(j, l)
            } else {
                0.0
            }
        } else {
            let rr = r - d * d;
            let (i, j) = (rr / d, rr % d);
            if j == l {
                a.get(k, i)
            } else {
                0.0
            }
        }
    })
}
