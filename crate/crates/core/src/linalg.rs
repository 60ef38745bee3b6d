//! Thin SVD via Householder QR plus one-sided Jacobi iteration.
//!
//! The general-purpose implicit-shift SVD can mis-pair singular vectors on
//! exactly rank-deficient inputs (many zero singular values), which is the
//! common case here: truncated factorizations of low-rank estimates. The
//! one-sided Jacobi route is slower but accurate to machine precision for the
//! small inner dimensions this crate works with (P at most a few hundred).

use nalgebra::{DMatrix, DVector};

/// Thin SVD of an m x n matrix: returns (U, sigma, V) with U m x r,
/// sigma length r, V n x r, r = min(m, n), singular values sorted in
/// descending order. Columns of U belonging to zero singular values are zero.
pub fn thin_svd(m: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    if m.nrows() < m.ncols() {
        let (u, s, v) = thin_svd(&m.transpose());
        return (v, s, u);
    }
    let n = m.ncols();
    let qr = m.clone().qr();
    let q = qr.q();
    let mut a = qr.r();
    let mut v = DMatrix::<f64>::identity(n, n);

    // One-sided Jacobi sweeps: orthogonalize column pairs of R.
    for _ in 0..60 {
        let mut off = 0.0f64;
        for p in 0..n {
            for qi in p + 1..n {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for i in 0..n {
                    let (ap, aq) = (a[(i, p)], a[(i, qi)]);
                    alpha += ap * ap;
                    beta += aq * aq;
                    gamma += ap * aq;
                }
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                let rel = gamma.abs() / (alpha * beta).sqrt();
                off = off.max(rel);
                if rel < 1e-15 {
                    continue;
                }
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..n {
                    let (ap, aq) = (a[(i, p)], a[(i, qi)]);
                    a[(i, p)] = c * ap - s * aq;
                    a[(i, qi)] = s * ap + c * aq;
                }
                for i in 0..n {
                    let (vp, vq) = (v[(i, p)], v[(i, qi)]);
                    v[(i, p)] = c * vp - s * vq;
                    v[(i, qi)] = s * vp + c * vq;
                }
            }
        }
        if off < 1e-15 {
            break;
        }
    }

    let mut sigma = DVector::zeros(n);
    let mut u_small = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let norm = a.column(j).norm();
        sigma[j] = norm;
        if norm > 0.0 {
            for i in 0..n {
                u_small[(i, j)] = a[(i, j)] / norm;
            }
        }
    }

    // sort descending
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| sigma[j].partial_cmp(&sigma[i]).unwrap());
    let sigma_sorted = DVector::from_fn(n, |j, _| sigma[order[j]]);
    let u_sorted = DMatrix::from_fn(n, n, |i, j| u_small[(i, order[j])]);
    let v_sorted = DMatrix::from_fn(n, n, |i, j| v[(i, order[j])]);

    (q * u_sorted, sigma_sorted, v_sorted)
}

/// Singular values only, sorted descending.
pub fn singular_values(m: &DMatrix<f64>) -> DVector<f64> {
    thin_svd(m).1
}

/// Least-squares solution of A X = B (A m x n with m >= n and full column
/// rank) via Householder QR.
pub fn lstsq(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let qr = a.clone().qr();
    let qtb = qr.q().transpose() * b;
    let r = qr.r();
    let mut x = qtb;
    r.solve_upper_triangular_mut(&mut x);
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exact_low_rank_matrix_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = DMatrix::<f64>::from_fn(25, 2, |_, _| rng.gen::<f64>() - 0.5);
        let b = DMatrix::<f64>::from_fn(8, 2, |_, _| rng.gen::<f64>() - 0.5);
        let m = &a * b.transpose();
        let (u, s, v) = thin_svd(&m);
        let rec = &u * DMatrix::from_diagonal(&s) * v.transpose();
        assert!((rec - &m).norm() < 1e-12);
        assert!(s[2] < 1e-12 * s[0], "sigma_3 = {} vs sigma_1 = {}", s[2], s[0]);
        // orthonormality on the nonzero part
        let ut_u = u.columns(0, 2).transpose() * u.columns(0, 2);
        assert!((ut_u - DMatrix::<f64>::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn full_rank_random_matrix_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = DMatrix::<f64>::from_fn(12, 7, |_, _| rng.gen::<f64>() - 0.5);
        let (u, s, v) = thin_svd(&m);
        let rec = &u * DMatrix::from_diagonal(&s) * v.transpose();
        assert!((rec - &m).norm() < 1e-12);
        for j in 1..7 {
            assert!(s[j] <= s[j - 1]);
        }
    }

    #[test]
    fn wide_matrix_transposes_correctly() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = DMatrix::<f64>::from_fn(4, 9, |_, _| rng.gen::<f64>());
        let (u, s, v) = thin_svd(&m);
        assert_eq!((u.nrows(), u.ncols()), (4, 4));
        assert_eq!((v.nrows(), v.ncols()), (9, 4));
        let rec = &u * DMatrix::from_diagonal(&s) * v.transpose();
        assert!((rec - &m).norm() < 1e-12);
    }

    #[test]
    fn lstsq_solves_overdetermined_system() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = DMatrix::<f64>::from_fn(10, 4, |_, _| rng.gen::<f64>());
        let x_true = DMatrix::<f64>::from_fn(4, 2, |_, _| rng.gen::<f64>());
        let b = &a * &x_true;
        let x = lstsq(&a, &b);
        assert!((x - x_true).norm() < 1e-10);
    }

    #[test]
    fn zero_matrix_gives_zero_svd() {
        let m = DMatrix::<f64>::zeros(6, 3);
        let (u, s, _) = thin_svd(&m);
        assert_eq!(s.norm(), 0.0);
        assert_eq!(u.norm(), 0.0);
    }
}
