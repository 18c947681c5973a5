//! Preconditioned MINRES for symmetric indefinite systems (Paige–Saunders).
//!
//! Used for saddle-point cell problems where CG does not apply. The
//! preconditioner must be symmetric positive definite. Singular but
//! compatible systems follow the same contract as `cg_solve`: the right-hand
//! side is checked against the operator kernel, the iterate is projected on
//! exit, and convergence is certified against the true residual.

use super::cg::{dot, norm, project_onto_complement, Preconditioner};
use super::op::SymmetricOperator;
use crate::error::{Error, Result};

pub use super::cg::CgSolution as MinresSolution;

pub fn minres_solve(
    op: &dyn SymmetricOperator,
    b: &[f64],
    tol: f64,
    max_iter: usize,
    prec: &dyn Preconditioner,
) -> Result<MinresSolution> {
    let n = op.dim();
    if b.len() != n {
        return Err(Error::InvalidInput(format!(
            "minres: rhs length {} does not match operator dimension {n}",
            b.len()
        )));
    }
    if !(tol > 0.0) || !tol.is_finite() {
        return Err(Error::InvalidInput(format!(
            "minres: tolerance must be positive, got {tol}"
        )));
    }
    let nb = norm(b);
    if !nb.is_finite() {
        return Err(Error::Numerical("minres: right-hand side contains NaN or Inf".into()));
    }
    if nb == 0.0 {
        return Ok(MinresSolution { x: vec![0.0; n], iterations: 0, residual: 0.0 });
    }

    let kernel = op.nullspace();
    let mut rhs = b.to_vec();
    let removed = project_onto_complement(&mut rhs, kernel);
    if removed > 10.0 * tol * nb {
        return Err(Error::InvalidInput(format!(
            "minres: right-hand side has a kernel component of relative size {:.3e}; \
             the system is incompatible",
            removed / nb
        )));
    }

    let mut x = vec![0.0; n];
    let mut total_it = 0usize;
    // The recurrence estimate for ‖r‖ can drift; certify against the true
    // residual and restart from it when short.
    for _round in 0..4 {
        let mut r1 = vec![0.0; n];
        op.apply(&x, &mut r1);
        for i in 0..n {
            r1[i] = rhs[i] - r1[i];
        }
        project_onto_complement(&mut r1, kernel);
        let rn = norm(&r1);
        if !rn.is_finite() {
            return Err(Error::Numerical("minres: residual became NaN".into()));
        }
        if rn <= tol * nb {
            project_onto_complement(&mut x, kernel);
            return Ok(MinresSolution { x, iterations: total_it, residual: rn / nb });
        }
        if total_it >= max_iter {
            break;
        }
        let it = minres_round(
            op,
            prec,
            kernel,
            &r1,
            &mut x,
            0.25 * tol * nb / rn.max(1e-300),
            max_iter - total_it,
        )?;
        total_it += it;
    }

    let mut r = vec![0.0; n];
    op.apply(&x, &mut r);
    for i in 0..n {
        r[i] = rhs[i] - r[i];
    }
    let rn = norm(&r);
    Err(Error::NoConvergence {
        context: "minres".into(),
        iterations: total_it,
        residual: rn / nb,
    })
}

/// One MINRES sweep solving A dx = r0, updating x += dx; stops when the
/// recurrence residual estimate falls below `rel_target`·‖r0‖_P. Returns the
/// iteration count.
fn minres_round(
    op: &dyn SymmetricOperator,
    prec: &dyn Preconditioner,
    kernel: &[Vec<f64>],
    r0: &[f64],
    x: &mut [f64],
    rel_target: f64,
    max_iter: usize,
) -> Result<usize> {
    let n = r0.len();
    let mut r1 = r0.to_vec();
    let mut r2 = r0.to_vec();
    let mut y = vec![0.0; n];
    prec.apply_prec(&r1, &mut y);
    let beta1_sq = dot(&r1, &y);
    if !(beta1_sq > 0.0) {
        return Err(Error::Numerical(format!(
            "minres: preconditioner is not positive definite on the residual (r.z = {beta1_sq:.3e})"
        )));
    }
    let beta1 = beta1_sq.sqrt();

    let mut oldb = 0.0f64;
    let mut beta = beta1;
    let mut dbar = 0.0f64;
    let mut epsln = 0.0f64;
    let mut phibar = beta1;
    let mut cs = -1.0f64;
    let mut sn = 0.0f64;
    let mut w = vec![0.0; n];
    let mut w2 = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut ay = vec![0.0; n];

    let target = rel_target.max(1e-300) * beta1;
    for itn in 1..=max_iter {
        let s = 1.0 / beta;
        for i in 0..n {
            v[i] = s * y[i];
        }
        op.apply(&v, &mut ay);
        if itn >= 2 {
            let c = beta / oldb;
            for i in 0..n {
                ay[i] -= c * r1[i];
            }
        }
        let alfa = dot(&v, &ay);
        if !alfa.is_finite() {
            return Err(Error::Numerical("minres: NaN in operator application".into()));
        }
        let c = alfa / beta;
        for i in 0..n {
            ay[i] -= c * r2[i];
        }
        std::mem::swap(&mut r1, &mut r2);
        r2.copy_from_slice(&ay);
        if !kernel.is_empty() && itn % 32 == 0 {
            project_onto_complement(&mut r2, kernel);
        }
        prec.apply_prec(&r2, &mut y);
        oldb = beta;
        let beta_sq = dot(&r2, &y);
        if !beta_sq.is_finite() || beta_sq < 0.0 {
            return Err(Error::Numerical(format!(
                "minres: preconditioner lost positive definiteness (r.z = {beta_sq:.3e})"
            )));
        }
        beta = beta_sq.sqrt();

        // Plane rotation applied to the tridiagonal factor.
        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = (gbar * gbar + beta * beta).sqrt().max(f64::MIN_POSITIVE);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;

        let denom = 1.0 / gamma;
        for i in 0..n {
            let wi = (v[i] - oldeps * w2[i] - delta * w[i]) * denom;
            w2[i] = w[i];
            w[i] = wi;
            x[i] += phi * wi;
        }

        if phibar <= target || beta <= f64::MIN_POSITIVE {
            return Ok(itn);
        }
    }
    Ok(max_iter)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::cg::orthonormalize;
    use crate::numerics::{DenseOperator, JacobiPreconditioner, SplitMix64};

    struct Identity;
    impl Preconditioner for Identity {
        fn apply_prec(&self, r: &[f64], z: &mut [f64]) {
            z.copy_from_slice(r);
        }
    }

    /// Symmetric indefinite matrix with known spectrum.
    fn indefinite_system(rng: &mut SplitMix64, n: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        // Random orthonormal-ish basis via Gram-Schmidt on random vectors.
        let mut vecs = Vec::new();
        while vecs.len() < n {
            let v: Vec<f64> = (0..n).map(|_| rng.range(-1.0, 1.0)).collect();
            let basis = orthonormalize(vec![v]);
            if basis.is_empty() {
                continue;
            }
            let mut v = basis.into_iter().next().unwrap();
            let removed = crate::numerics::project_onto_complement(&mut v, &vecs);
            let _ = removed;
            let nn = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            if nn > 1e-6 {
                for a in &mut v {
                    *a /= nn;
                }
                vecs.push(v);
            }
        }
        let eigs: Vec<f64> = (0..n)
            .map(|i| {
                let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                sign * rng.range(0.5, 3.0)
            })
            .collect();
        let mut a = vec![0.0; n * n];
        for (v, &e) in vecs.iter().zip(&eigs) {
            for i in 0..n {
                for j in 0..n {
                    a[i * n + j] += e * v[i] * v[j];
                }
            }
        }
        let x_true: Vec<f64> = (0..n).map(|_| rng.range(-2.0, 2.0)).collect();
        let mut b = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                b[i] += a[i * n + j] * x_true[j];
            }
        }
        (a, x_true, b)
    }

    #[test]
    fn indefinite_systems_match_construction() {
        let mut rng = SplitMix64::new(99);
        for case in 0..25 {
            let n = 8;
            let (a, x_true, b) = indefinite_system(&mut rng, n);
            let op = DenseOperator::new(n, a).unwrap();
            let sol = minres_solve(&op, &b, 1e-11, 500, &Identity).unwrap();
            for i in 0..n {
                assert!(
                    (sol.x[i] - x_true[i]).abs() < 1e-7,
                    "case {case} entry {i}: {} vs {}",
                    sol.x[i],
                    x_true[i]
                );
            }
        }
    }

    #[test]
    fn jacobi_preconditioning_preserves_the_solution() {
        let mut rng = SplitMix64::new(7);
        // SPD diagonal-dominant system; Jacobi is a legal SPD preconditioner.
        let n = 6;
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] = rng.range(-0.3, 0.3);
            }
        }
        for i in 0..n {
            let rowsum: f64 = (0..n).map(|j| a[i * n + j].abs()).sum();
            a[i * n + i] = rowsum + rng.range(1.0, 2.0);
        }
        // Symmetrize.
        for i in 0..n {
            for j in 0..i {
                let m = 0.5 * (a[i * n + j] + a[j * n + i]);
                a[i * n + j] = m;
                a[j * n + i] = m;
            }
        }
        let diag: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.range(-1.0, 1.0)).collect();
        let op = DenseOperator::new(n, a).unwrap();
        let plain = minres_solve(&op, &b, 1e-12, 200, &Identity).unwrap();
        let prec = JacobiPreconditioner::new(&diag).unwrap();
        let pc = minres_solve(&op, &b, 1e-12, 200, &prec).unwrap();
        for i in 0..n {
            assert!((plain.x[i] - pc.x[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn singular_compatible_system_is_solved_in_the_complement() {
        // Symmetric singular: A = L (graph Laplacian of a path), kernel = 1.
        let n = 5;
        let mut a = vec![0.0; n * n];
        for i in 0..n - 1 {
            a[i * n + i] += 1.0;
            a[(i + 1) * n + i + 1] += 1.0;
            a[i * n + i + 1] -= 1.0;
            a[(i + 1) * n + i] -= 1.0;
        }
        let kernel = orthonormalize(vec![vec![1.0; n]]);
        let op = DenseOperator::new(n, a).unwrap().with_nullspace(kernel);
        let mut b = vec![1.0, -0.5, 0.0, 0.25, -0.75];
        let mean: f64 = b.iter().sum::<f64>() / n as f64;
        for v in &mut b {
            *v -= mean;
        }
        let sol = minres_solve(&op, &b, 1e-12, 200, &Identity).unwrap();
        let xmean: f64 = sol.x.iter().sum::<f64>() / n as f64;
        assert!(xmean.abs() < 1e-12);
        assert!(sol.residual <= 1e-12);
    }

    #[test]
    fn incompatible_rhs_is_rejected() {
        let n = 4;
        let mut a = vec![0.0; n * n];
        for i in 0..n - 1 {
            a[i * n + i] += 1.0;
            a[(i + 1) * n + i + 1] += 1.0;
            a[i * n + i + 1] -= 1.0;
            a[(i + 1) * n + i] -= 1.0;
        }
        let kernel = orthonormalize(vec![vec![1.0; n]]);
        let op = DenseOperator::new(n, a).unwrap().with_nullspace(kernel);
        let b = vec![1.0; n];
        assert!(matches!(
            minres_solve(&op, &b, 1e-10, 100, &Identity),
            Err(Error::InvalidInput(_))
        ));
    }
}
