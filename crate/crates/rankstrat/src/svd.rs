//! Singular value decomposition by one-sided Jacobi rotations.
//!
//! Jacobi is chosen over bidiagonalization for its simplicity, determinism
//! (fixed sweep order, no branching on data-dependent pivots beyond the
//! rotation test) and high relative accuracy on small singular values —
//! exactly what a rank detector with a relative threshold needs. Matrices
//! here are desk scale (a few thousand rows at most), where the O(n^2 m)
//! sweeps are cheap.
//!
//! `numerical_rank` counts singular values above `rel_tol * sigma_max`.
//! The threshold is relative by design: the spectra this crate inspects
//! have gaps many orders of magnitude wide, and a relative cut makes the
//! count invariant under matrix scaling. The zero matrix has rank 0.

use crate::error::{invalid, Result};
use crate::matrix::MatrixT;
use crate::scalar::Scalar;

const MAX_SWEEPS: usize = 64;

#[derive(Debug, Clone)]
pub struct SvdResultT<S> {
    /// Nonincreasing, nonnegative.
    pub singular_values: Vec<S>,
    /// `rows x k` with orthonormal columns, `k = min(rows, cols)`.
    pub left_vectors: MatrixT<S>,
    /// `cols x k` with orthonormal columns.
    pub right_vectors: MatrixT<S>,
}

impl<S: Scalar> SvdResultT<S> {
    /// `U * diag(sigma) * V^T`, for reconstruction checks.
    pub fn reconstruct(&self) -> MatrixT<S> {
        let m = self.left_vectors.rows();
        let n = self.right_vectors.rows();
        let k = self.singular_values.len();
        MatrixT::from_fn(m, n, |i, j| {
            let mut acc = S::zero();
            for r in 0..k {
                acc += self.left_vectors.get(i, r)
                    * self.singular_values[r]
                    * self.right_vectors.get(j, r);
            }
            acc
        })
    }
}

/// Full SVD with singular vectors. Errors on non-finite entries.
pub fn svd<S: Scalar>(m: &MatrixT<S>) -> Result<SvdResultT<S>> {
    if !m.all_finite() {
        return Err(invalid("svd: non-finite entries"));
    }
    let transposed = m.rows() < m.cols();
    let work = if transposed { m.transpose() } else { m.clone() };
    let (sigma, u, v) = jacobi_tall(&work, true);
    let (u, v) = (u.expect("vectors requested"), v.expect("vectors requested"));
    if transposed {
        Ok(SvdResultT {
            singular_values: sigma,
            left_vectors: v,
            right_vectors: u,
        })
    } else {
        Ok(SvdResultT {
            singular_values: sigma,
            left_vectors: u,
            right_vectors: v,
        })
    }
}

/// Singular values only, nonincreasing. Very rectangular inputs are first
/// reduced by a Householder QR (`sigma(A) = sigma(R)`), which turns the
/// M x n tangent matrices with n >> M into square Jacobi problems.
pub fn singular_values<S: Scalar>(m: &MatrixT<S>) -> Result<Vec<S>> {
    if !m.all_finite() {
        return Err(invalid("singular_values: non-finite entries"));
    }
    let tall = if m.rows() < m.cols() {
        m.transpose()
    } else {
        m.clone()
    };
    let reduced = if tall.rows() > 2 * tall.cols() {
        qr_r_factor(&tall)
    } else {
        tall
    };
    let (sigma, _, _) = jacobi_tall(&reduced, false);
    Ok(sigma)
}

/// Count of singular values strictly above `rel_tol * sigma_max`.
/// `rel_tol` must lie in (0, 1).
pub fn numerical_rank<S: Scalar>(m: &MatrixT<S>, rel_tol: S) -> Result<usize> {
    if !(rel_tol > S::zero() && rel_tol < S::one()) {
        return Err(invalid(format!(
            "numerical_rank: rel_tol must be in (0,1), got {rel_tol}"
        )));
    }
    let sigma = singular_values(m)?;
    let max = sigma[0];
    if max == S::zero() {
        return Ok(0);
    }
    let cut = rel_tol * max;
    Ok(sigma.iter().take_while(|&&s| s > cut).count())
}

/// One-sided Jacobi on a tall matrix (rows >= cols). Returns singular
/// values sorted nonincreasing and, when requested, U (rows x cols) and
/// V (cols x cols) with orthonormal columns.
fn jacobi_tall<S: Scalar>(
    a: &MatrixT<S>,
    want_vectors: bool,
) -> (Vec<S>, Option<MatrixT<S>>, Option<MatrixT<S>>) {
    let m = a.rows();
    let n = a.cols();
    debug_assert!(m >= n);

    let mut cols: Vec<Vec<S>> = (0..n)
        .map(|j| (0..m).map(|i| a.get(i, j)).collect())
        .collect();
    let mut v: Vec<Vec<S>> = (0..n)
        .map(|j| {
            let mut e = vec![S::zero(); n];
            e[j] = S::one();
            e
        })
        .collect();

    let eps = S::epsilon();
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n.saturating_sub(1) {
            for q in p + 1..n {
                let (alpha, beta, gamma) = column_grams(&cols[p], &cols[q]);
                if gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (S::of(2.0) * gamma);
                let sign = if zeta < S::zero() {
                    -S::one()
                } else {
                    S::one()
                };
                let t = sign / (zeta.abs() + (S::one() + zeta * zeta).sqrt());
                let c = S::one() / (S::one() + t * t).sqrt();
                let s = c * t;
                rotate_pair(&mut cols, p, q, c, s);
                rotate_pair(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<S> = cols
        .iter()
        .map(|c| c.iter().fold(S::zero(), |acc, &x| acc + x * x).sqrt())
        .collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap());
    let sigma: Vec<S> = order.iter().map(|&i| norms[i]).collect();

    if !want_vectors {
        return (sigma, None, None);
    }

    let mut u_cols: Vec<Vec<S>> = Vec::with_capacity(n);
    for (rank_pos, &src) in order.iter().enumerate() {
        if norms[src] > S::zero() {
            u_cols.push(cols[src].iter().map(|&x| x / norms[src]).collect());
        } else {
            u_cols.push(complete_orthonormal(&u_cols[..rank_pos], m));
        }
    }
    let u = MatrixT::from_fn(m, n, |i, j| u_cols[j][i]);
    let vm = MatrixT::from_fn(n, n, |i, j| v[order[j]][i]);
    (sigma, Some(u), Some(vm))
}

fn column_grams<S: Scalar>(p: &[S], q: &[S]) -> (S, S, S) {
    let mut alpha = S::zero();
    let mut beta = S::zero();
    let mut gamma = S::zero();
    for (&x, &y) in p.iter().zip(q) {
        alpha += x * x;
        beta += y * y;
        gamma += x * y;
    }
    (alpha, beta, gamma)
}

fn rotate_pair<S: Scalar>(cols: &mut [Vec<S>], p: usize, q: usize, c: S, s: S) {
    let (lo, hi) = cols.split_at_mut(q);
    let cp = &mut lo[p];
    let cq = &mut hi[0];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let xp = c * *x - s * *y;
        let xq = s * *x + c * *y;
        *x = xp;
        *y = xq;
    }
}

/// A unit vector orthogonal to all of `basis` (each of length `m`), found
/// by Gram–Schmidt over standard basis candidates. Used to pad U when a
/// singular value is exactly zero.
fn complete_orthonormal<S: Scalar>(basis: &[Vec<S>], m: usize) -> Vec<S> {
    for k in 0..m {
        let mut cand = vec![S::zero(); m];
        cand[k] = S::one();
        for b in basis {
            let proj = b
                .iter()
                .zip(&cand)
                .fold(S::zero(), |acc, (&x, &y)| acc + x * y);
            for (ci, bi) in cand.iter_mut().zip(b) {
                *ci -= proj * *bi;
            }
        }
        let norm = cand.iter().fold(S::zero(), |acc, &x| acc + x * x).sqrt();
        if norm > S::of(0.5) {
            return cand.iter().map(|&x| x / norm).collect();
        }
    }
    unreachable!("orthonormal completion exists while basis has fewer than m vectors");
}

/// Upper-triangular R factor of a tall matrix via Householder reflections.
fn qr_r_factor<S: Scalar>(a: &MatrixT<S>) -> MatrixT<S> {
    let m = a.rows();
    let n = a.cols();
    debug_assert!(m >= n);
    let mut w: Vec<Vec<S>> = (0..m).map(|i| a.row(i).to_vec()).collect();
    let mut v = vec![S::zero(); m];
    for k in 0..n {
        let mut norm2 = S::zero();
        for i in k..m {
            norm2 += w[i][k] * w[i][k];
        }
        let norm = norm2.sqrt();
        if norm == S::zero() {
            continue;
        }
        let sign = if w[k][k] < S::zero() {
            -S::one()
        } else {
            S::one()
        };
        let alpha = -sign * norm;
        let mut vnorm2 = S::zero();
        for i in k..m {
            v[i] = w[i][k];
            if i == k {
                v[i] -= alpha;
            }
            vnorm2 += v[i] * v[i];
        }
        if vnorm2 == S::zero() {
            continue;
        }
        for j in k..n {
            let mut dot = S::zero();
            for i in k..m {
                dot += v[i] * w[i][j];
            }
            let f = S::of(2.0) * dot / vnorm2;
            for i in k..m {
                w[i][j] -= f * v[i];
            }
        }
    }
    MatrixT::from_fn(n, n, |i, j| if j >= i { w[i][j] } else { S::zero() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{gamma_matrix, kron};
    use crate::rng::Rng;

    type M = MatrixT<f64>;

    fn reconstruction_error(a: &M) -> f64 {
        let res = svd(a).unwrap();
        let diff = a
            .data()
            .iter()
            .zip(res.reconstruct().data())
            .fold(0.0, |acc, (&x, &y)| acc + (x - y) * (x - y))
            .sqrt();
        diff / a.frobenius_norm().max(1e-300)
    }

    #[test]
    fn identity_singular_values() {
        let res = svd(&M::identity(3)).unwrap();
        for s in res.singular_values {
            assert!((s - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn diagonal_singular_values() {
        let a = M::from_rows(&[vec![3.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let res = svd(&a).unwrap();
        assert!((res.singular_values[0] - 3.0).abs() < 1e-14);
        assert_eq!(res.singular_values[1], 0.0);
    }

    #[test]
    fn rank_one_outer_product() {
        // u, v unit vectors; sigma must be [1, 0, ..] and the
        // reconstruction must match to the invariant tolerance.
        let u = [0.5, 0.5, 0.5, 0.5];
        let v = [3.0 / 5.0, 4.0 / 5.0, 0.0];
        let a = M::from_fn(4, 3, |i, j| u[i] * v[j]);
        let res = svd(&a).unwrap();
        assert!((res.singular_values[0] - 1.0).abs() < 1e-12);
        for &s in &res.singular_values[1..] {
            assert!(s.abs() < 1e-13);
        }
        assert!(reconstruction_error(&a) <= 1e-10);
    }

    #[test]
    fn reconstruction_on_random_200x200() {
        let mut rng = Rng::new(2024);
        let a = M::random_normal(200, 200, &mut rng);
        assert!(reconstruction_error(&a) <= 1e-10);
    }

    #[test]
    fn orthonormal_vectors_on_rank_deficient_input() {
        let mut rng = Rng::new(11);
        let a = M::random_with_rank(6, 2, &mut rng);
        let res = svd(&a).unwrap();
        let u = &res.left_vectors;
        for p in 0..u.cols() {
            for q in 0..u.cols() {
                let dot: f64 = (0..u.rows()).map(|i| u.get(i, p) * u.get(i, q)).sum();
                let expect = if p == q { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() < 1e-10, "U^T U [{p}{q}] = {dot}");
            }
        }
    }

    #[test]
    fn zero_matrix_has_rank_zero() {
        assert_eq!(numerical_rank(&M::zeros(4, 4), 1e-8).unwrap(), 0);
    }

    #[test]
    fn threshold_separates_tiny_singular_value() {
        let a = M::from_rows(&[vec![1.0, 0.0], vec![0.0, 1e-12]]).unwrap();
        assert_eq!(numerical_rank(&a, 1e-8).unwrap(), 1);
    }

    #[test]
    fn rel_tol_domain_is_checked() {
        let a = M::identity(2);
        assert!(numerical_rank(&a, 0.0).is_err());
        assert!(numerical_rank(&a, 1.0).is_err());
        assert!(numerical_rank(&a, -0.5).is_err());
    }

    #[test]
    fn gamma_rank_matches_rank_formula_case() {
        // d = 3, rank(A) = 1, rank(B) = 2 -> 9 - (3-1)(3-2) = 7.
        let mut rng = Rng::new(1);
        let a = M::random_with_rank(3, 1, &mut rng);
        let b = M::random_with_rank(3, 2, &mut rng);
        let g = gamma_matrix(&a, &b).unwrap();
        assert_eq!((g.rows(), g.cols()), (18, 9));
        assert_eq!(numerical_rank(&g, 1e-8).unwrap(), 7);
    }

    #[test]
    fn zero_factors_give_zero_gamma() {
        let z = M::zeros(3, 3);
        let g = gamma_matrix(&z, &z).unwrap();
        assert_eq!(numerical_rank(&g, 1e-8).unwrap(), 0);
    }

    #[test]
    fn full_rank_factors_give_full_gamma_rank() {
        let mut rng = Rng::new(9);
        let a = M::random_with_rank(4, 4, &mut rng);
        let b = M::random_with_rank(4, 4, &mut rng);
        let g = gamma_matrix(&a, &b).unwrap();
        assert_eq!(numerical_rank(&g, 1e-8).unwrap(), 16);
    }

    #[test]
    fn qr_reduction_agrees_with_direct_jacobi() {
        let mut rng = Rng::new(31);
        let a = M::random_normal(8, 40, &mut rng);
        let direct = svd(&a).unwrap().singular_values;
        let fast = singular_values(&a).unwrap();
        for (x, y) in direct.iter().zip(&fast) {
            assert!((x - y).abs() < 1e-10 * direct[0], "{x} vs {y}");
        }
    }

    #[test]
    fn kron_rank_is_multiplicative() {
        let mut rng = Rng::new(17);
        let a = M::random_with_rank(4, 2, &mut rng);
        let b = M::random_with_rank(4, 3, &mut rng);
        let k = kron(&a, &b).unwrap();
        assert_eq!(numerical_rank(&k, 1e-8).unwrap(), 6);
    }

    #[test]
    fn works_in_f32() {
        let a = MatrixT::<f32>::identity(3);
        let res = svd(&a).unwrap();
        for s in res.singular_values {
            assert!((s - 1.0).abs() < 1e-6);
        }
        assert_eq!(numerical_rank(&a, 1e-4f32).unwrap(), 3);
    }
}
