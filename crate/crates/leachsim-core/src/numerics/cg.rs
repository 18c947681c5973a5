//! Preconditioned conjugate gradients.
//!
//! `cg_solve` uses Jacobi (diagonal) preconditioning when the operator
//! exposes its diagonal; `cg_solve_prec` accepts an arbitrary symmetric
//! positive (semi)definite preconditioner. Singular but compatible systems
//! (all-Neumann or fully periodic operators) are handled by explicit
//! projection: the right-hand side is checked to be orthogonal to the
//! supplied kernel basis, the iterate is projected on convergence, and the
//! recurrence residual is periodically re-orthogonalized against the kernel
//! so rounding drift cannot accumulate.

use super::op::SymmetricOperator;
use crate::error::{Error, Result};

/// Application of an approximate inverse z ≈ A⁻¹ r. Must be symmetric and
/// positive definite on the subspace where residuals live; it may be
/// singular elsewhere (e.g. zeroing rows that the operator pins).
pub trait Preconditioner {
    fn apply_prec(&self, r: &[f64], z: &mut [f64]);
}

pub struct JacobiPreconditioner {
    inv_diag: Vec<f64>,
}

impl JacobiPreconditioner {
    pub fn new(diag: &[f64]) -> Result<Self> {
        for (i, &di) in diag.iter().enumerate() {
            if !(di > 0.0) || !di.is_finite() {
                return Err(Error::Numerical(format!(
                    "cg: nonpositive diagonal entry {di:.3e} at row {i}"
                )));
            }
        }
        Ok(JacobiPreconditioner { inv_diag: diag.iter().map(|&di| 1.0 / di).collect() })
    }
}

impl Preconditioner for JacobiPreconditioner {
    fn apply_prec(&self, r: &[f64], z: &mut [f64]) {
        for ((zi, ri), mi) in z.iter_mut().zip(r).zip(&self.inv_diag) {
            *zi = ri * mi;
        }
    }
}

struct IdentityPreconditioner;

impl Preconditioner for IdentityPreconditioner {
    fn apply_prec(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
    }
}

#[derive(Clone, Debug)]
pub struct CgSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// True relative residual ||b - A x|| / ||b|| measured after the final
    /// iterate (not the recurrence estimate).
    pub residual: f64,
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Subtract from `x` its components along an orthonormal basis; returns the
/// norm of what was removed.
pub fn project_onto_complement(x: &mut [f64], basis: &[Vec<f64>]) -> f64 {
    let mut removed = 0.0;
    for v in basis {
        let c = dot(x, v);
        removed += c * c;
        for (xi, vi) in x.iter_mut().zip(v) {
            *xi -= c * vi;
        }
    }
    removed.sqrt()
}

/// Modified Gram-Schmidt; drops vectors that are numerically dependent.
pub fn orthonormalize(vectors: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(vectors.len());
    for mut v in vectors {
        let scale = norm(&v);
        if scale == 0.0 {
            continue;
        }
        project_onto_complement(&mut v, &basis);
        let n = norm(&v);
        if n > 1e-12 * scale {
            for vi in &mut v {
                *vi /= n;
            }
            basis.push(v);
        }
    }
    basis
}

/// Solve A x = b to a relative residual of `tol`.
///
/// Preconditions: A symmetric positive semidefinite; when A is singular, b
/// must already be orthogonal to the kernel (within tolerance) and the
/// returned x is orthogonal to it as well. Errors: iteration cap exceeded
/// (carrying the last residual) and NaN/indefiniteness detection.
pub fn cg_solve(
    op: &dyn SymmetricOperator,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<CgSolution> {
    match op.diagonal() {
        Some(d) => cg_solve_prec(op, b, tol, max_iter, &JacobiPreconditioner::new(&d)?),
        None => cg_solve_prec(op, b, tol, max_iter, &IdentityPreconditioner),
    }
}

/// Preconditioned variant; `prec` must be symmetric positive definite on the
/// residual subspace.
pub fn cg_solve_prec(
    op: &dyn SymmetricOperator,
    b: &[f64],
    tol: f64,
    max_iter: usize,
    prec: &dyn Preconditioner,
) -> Result<CgSolution> {
    let n = op.dim();
    if b.len() != n {
        return Err(Error::InvalidInput(format!(
            "cg: rhs length {} does not match operator dimension {n}",
            b.len()
        )));
    }
    if !(tol > 0.0) || !tol.is_finite() {
        return Err(Error::InvalidInput(format!("cg: tolerance must be positive, got {tol}")));
    }
    let nb = norm(b);
    if !nb.is_finite() {
        return Err(Error::Numerical("cg: right-hand side contains NaN or Inf".into()));
    }
    if nb == 0.0 {
        return Ok(CgSolution { x: vec![0.0; n], iterations: 0, residual: 0.0 });
    }

    let kernel = op.nullspace();
    let mut rhs = b.to_vec();
    let removed = project_onto_complement(&mut rhs, kernel);
    if removed > 10.0 * tol * nb {
        return Err(Error::InvalidInput(format!(
            "cg: right-hand side has a kernel component of relative size {:.3e}; \
             the system is incompatible",
            removed / nb
        )));
    }

    let mut x = vec![0.0; n];
    let mut r = rhs.clone();
    let mut z = vec![0.0; n];
    prec.apply_prec(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut q = vec![0.0; n];
    let mut rn = norm(&r);

    for it in 1..=max_iter {
        op.apply(&p, &mut q);
        let pq = dot(&p, &q);
        if !pq.is_finite() {
            return Err(Error::Numerical("cg: NaN in operator application".into()));
        }
        if pq <= 0.0 {
            return Err(Error::Numerical(format!(
                "cg: operator is not positive definite along a search direction (p.Ap = {pq:.3e})"
            )));
        }
        let alpha = rz / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        if !kernel.is_empty() && it % 32 == 0 {
            project_onto_complement(&mut r, kernel);
        }
        rn = norm(&r);
        if !rn.is_finite() {
            return Err(Error::Numerical("cg: residual became NaN".into()));
        }
        if rn <= tol * nb {
            project_onto_complement(&mut x, kernel);
            // Verify against the true residual; the recurrence can drift.
            op.apply(&x, &mut q);
            for i in 0..n {
                r[i] = rhs[i] - q[i];
            }
            rn = norm(&r);
            if rn <= tol * nb {
                return Ok(CgSolution { x, iterations: it, residual: rn / nb });
            }
            // Restart from the true residual.
            prec.apply_prec(&r, &mut z);
            p.copy_from_slice(&z);
            rz = dot(&r, &z);
            continue;
        }
        prec.apply_prec(&r, &mut z);
        let rz_new = dot(&r, &z);
        if !rz_new.is_finite() || rz_new <= 0.0 {
            return Err(Error::Numerical(format!(
                "cg: preconditioner is not positive definite on the residual (r.z = {rz_new:.3e})"
            )));
        }
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }

    Err(Error::NoConvergence {
        context: "cg".into(),
        iterations: max_iter,
        residual: rn / nb,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::solve_spd;
    use crate::numerics::{DenseOperator, GridSpec, SplitMix64, StencilOperator};

    #[test]
    fn identity_system_converges_immediately() {
        let op = DenseOperator::new(3, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let sol = cg_solve(&op, &[1.0, -2.0, 3.0], 1e-12, 10).unwrap();
        assert!(sol.iterations <= 2);
        assert!((sol.x[0] - 1.0).abs() < 1e-12);
        assert!((sol.x[1] + 2.0).abs() < 1e-12);
        assert!((sol.x[2] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn small_spd_system_matches_direct_solve() {
        let a = vec![4.0, 1.0, 0.0, 1.0, 3.0, 0.0, 0.0, 0.0, 2.0];
        let b = [1.0, 2.0, 3.0];
        let want = solve_spd(&a, 3, &b).unwrap();
        let op = DenseOperator::new(3, a).unwrap();
        let got = cg_solve(&op, &b, 1e-13, 100).unwrap();
        for i in 0..3 {
            assert!((got.x[i] - want[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn random_spd_systems_match_direct_solve() {
        let mut rng = SplitMix64::new(2024);
        for case in 0..50 {
            let n = 6;
            let mut m = vec![0.0; n * n];
            for v in m.iter_mut() {
                *v = rng.range(-1.0, 1.0);
            }
            // a = m mᵀ + 0.5 I is SPD
            let mut a = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        a[i * n + j] += m[i * n + k] * m[j * n + k];
                    }
                }
                a[i * n + i] += 0.5;
            }
            let b: Vec<f64> = (0..n).map(|_| rng.range(-2.0, 2.0)).collect();
            let want = solve_spd(&a, n, &b).unwrap();
            let op = DenseOperator::new(n, a).unwrap();
            let got = cg_solve(&op, &b, 1e-13, 1000).unwrap();
            for i in 0..n {
                assert!(
                    (got.x[i] - want[i]).abs() < 1e-8,
                    "case {case}: entry {i}: {} vs {}",
                    got.x[i],
                    want[i]
                );
            }
        }
    }

    fn periodic_laplacian(n: usize) -> StencilOperator {
        let grid = GridSpec::periodic_cube(n).unwrap();
        let mut op = StencilOperator::zeros(grid);
        let t = grid.h[0]; // h^2/h for unit coefficient
        for idx in 0..grid.cells() {
            op.diag[idx] = 6.0 * t;
            for d in 0..3 {
                op.off[d][idx] = -t;
            }
        }
        let cells = grid.cells();
        let basis = orthonormalize(vec![vec![1.0; cells]]);
        op.set_nullspace(basis);
        op
    }

    #[test]
    fn singular_periodic_laplacian_returns_zero_mean_solution() {
        let op = periodic_laplacian(6);
        let n = op.dim();
        let mut rng = SplitMix64::new(5);
        let mut b: Vec<f64> = (0..n).map(|_| rng.range(-1.0, 1.0)).collect();
        let mean = b.iter().sum::<f64>() / n as f64;
        for v in &mut b {
            *v -= mean;
        }
        let sol = cg_solve(&op, &b, 1e-11, 10_000).unwrap();
        let xmean: f64 = sol.x.iter().sum::<f64>() / n as f64;
        assert!(xmean.abs() < 1e-12, "solution mean {xmean}");
        assert!(sol.residual <= 1e-11);
    }

    #[test]
    fn incompatible_rhs_for_singular_system_is_rejected() {
        let op = periodic_laplacian(4);
        let b = vec![1.0; op.dim()]; // pure kernel component
        assert!(matches!(cg_solve(&op, &b, 1e-10, 100), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn iteration_cap_reports_final_residual() {
        let op = periodic_laplacian(6);
        let n = op.dim();
        let mut b = vec![0.0; n];
        b[0] = 1.0;
        b[1] = -1.0;
        match cg_solve(&op, &b, 1e-14, 3) {
            Err(Error::NoConvergence { iterations, residual, .. }) => {
                assert_eq!(iterations, 3);
                assert!(residual > 0.0 && residual.is_finite());
            }
            other => panic!("expected NoConvergence, got {other:?}"),
        }
    }

    #[test]
    fn nan_rhs_is_a_numerical_error() {
        let op = DenseOperator::new(2, vec![2.0, 0.0, 0.0, 2.0]).unwrap();
        assert!(matches!(
            cg_solve(&op, &[f64::NAN, 1.0], 1e-10, 10),
            Err(Error::Numerical(_))
        ));
    }
}
