//! Small dense symmetric-matrix helpers: Cholesky factorization for direct
//! solves and positive-definiteness tests, and Jacobi eigenvalue iteration.
//!
//! Everything here works on row-major `&[f64]` of size n*n with n small
//! (3 or 6 in practice); no attempt is made to be fast for large n.

pub type Mat3 = [[f64; 3]; 3];
pub type Mat6 = [[f64; 6]; 6];

pub fn mat3_to_flat(a: &Mat3) -> Vec<f64> {
    a.iter().flatten().copied().collect()
}

pub fn mat6_to_flat(a: &Mat6) -> Vec<f64> {
    a.iter().flatten().copied().collect()
}

pub fn mat3_max_abs(a: &Mat3) -> f64 {
    a.iter().flatten().fold(0.0, |m, &v| m.max(v.abs()))
}

/// Largest |a_ij - a_ji|.
pub fn mat3_asymmetry(a: &Mat3) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..3 {
        for j in (i + 1)..3 {
            worst = worst.max((a[i][j] - a[j][i]).abs());
        }
    }
    worst
}

pub fn mat3_symmetrize(a: &Mat3) -> Mat3 {
    let mut s = *a;
    for i in 0..3 {
        for j in 0..3 {
            s[i][j] = 0.5 * (a[i][j] + a[j][i]);
        }
    }
    s
}

/// Cholesky factor L (lower triangular, row-major) of a symmetric matrix.
///
/// Returns `None` when a pivot is not strictly positive or falls below
/// 1e-13 times the largest diagonal entry; callers use that as the
/// positive-definiteness test.
pub fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    assert_eq!(a.len(), n * n);
    let max_diag = (0..n).fold(0.0f64, |m, i| m.max(a[i * n + i].abs()));
    let floor = 1e-13 * max_diag;
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(s > floor) || !s.is_finite() {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// Solve L Lᵀ x = b given the factor from [`cholesky`].
pub fn cholesky_solve(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    assert_eq!(b.len(), n);
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    x
}

/// Direct solve of a small symmetric positive definite system; `None` if the
/// matrix fails the Cholesky pivot test.
pub fn solve_spd(a: &[f64], n: usize, b: &[f64]) -> Option<Vec<f64>> {
    cholesky(a, n).map(|l| cholesky_solve(&l, n, b))
}

pub fn is_spd(a: &[f64], n: usize) -> bool {
    cholesky(a, n).is_some()
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations,
/// returned in ascending order.
pub fn sym_eigenvalues(a: &[f64], n: usize) -> Vec<f64> {
    assert_eq!(a.len(), n * n);
    let mut m = a.to_vec();
    let norm: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let tol = 1e-15 * norm.max(f64::MIN_POSITIVE);
    for _sweep in 0..64 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += 2.0 * m[p * n + q] * m[p * n + q];
            }
        }
        if off.sqrt() <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq.abs() <= tol * 1e-2 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = 0.5 * (aqq - app) / apq;
                let t = theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| m[i * n + i]).collect();
    eig.sort_by(|a, b| a.partial_cmp(b).unwrap());
    eig
}

pub fn mat3_eigenvalues(a: &Mat3) -> [f64; 3] {
    let e = sym_eigenvalues(&mat3_to_flat(a), 3);
    [e[0], e[1], e[2]]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_solves_known_3x3_system() {
        // A = [[4,1,0],[1,3,0],[0,0,2]], b = [1,2,3]; solved by hand:
        // x3 = 1.5; 4x1 + x2 = 1, x1 + 3x2 = 2 -> x1 = 1/11, x2 = 7/11.
        let a = [4.0, 1.0, 0.0, 1.0, 3.0, 0.0, 0.0, 0.0, 2.0];
        let x = solve_spd(&a, 3, &[1.0, 2.0, 3.0]).unwrap();
        assert!((x[0] - 1.0 / 11.0).abs() < 1e-14);
        assert!((x[1] - 7.0 / 11.0).abs() < 1e-14);
        assert!((x[2] - 1.5).abs() < 1e-14);
    }

    #[test]
    fn cholesky_rejects_indefinite_matrix() {
        let a = [1.0, 2.0, 2.0, 1.0]; // eigenvalues 3, -1
        assert!(cholesky(&a, 2).is_none());
    }

    #[test]
    fn jacobi_eigenvalues_match_hand_computed_values() {
        let a = [2.0, 1.0, 1.0, 2.0]; // eigenvalues 1, 3
        let e = sym_eigenvalues(&a, 2);
        assert!((e[0] - 1.0).abs() < 1e-12);
        assert!((e[1] - 3.0).abs() < 1e-12);

        // diag(5, -2, 7) permuted by a rotation-free matrix stays put
        let d = [5.0, 0.0, 0.0, 0.0, -2.0, 0.0, 0.0, 0.0, 7.0];
        let e = sym_eigenvalues(&d, 3);
        assert!((e[0] + 2.0).abs() < 1e-12);
        assert!((e[1] - 5.0).abs() < 1e-12);
        assert!((e[2] - 7.0).abs() < 1e-12);
    }

    #[test]
    fn jacobi_and_cholesky_agree_on_positive_definiteness() {
        // M M^T + 0.1 I is SPD by construction.
        let m = [1.0, 2.0, 0.5, -1.0, 0.3, 2.0, 0.7, 0.0, 1.5];
        let mut a = vec![0.0; 9];
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    a[i * 3 + j] += m[i * 3 + k] * m[j * 3 + k];
                }
            }
            a[i * 3 + i] += 0.1;
        }
        assert!(is_spd(&a, 3));
        let e = sym_eigenvalues(&a, 3);
        assert!(e[0] > 0.0);
    }
}
