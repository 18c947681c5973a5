//! Pressure head and seepage velocity.
//!
//! The head φ solves ∇·(B_w(r(x)) ∇φ) = 0 with Dirichlet data g on the well
//! walls S1 ∪ S2 and zero flux on S0, and the fluid moves with
//! w_f = −(1/μ₁) B_w ∇φ. In the standard well drive (g ≡ 0) the head
//! vanishes identically — the discrete solve reproduces that exactly because
//! the right-hand side is exactly zero.
//!
//! Two-point fluxes use only the axial diagonal of B_w; the tensors come out
//! of the cell problems isotropic up to discretization noise, so the dropped
//! off-diagonal part is far below the flux scale (it is still measured and
//! reported).

use super::{check_radius_field, ReservoirSpec};
use crate::error::{Error, Result};
use crate::numerics::{
    assemble_elliptic, BoxBc, EllipticOperator, FaceBc, ScalarField, SymCoeff, VectorField,
};
use crate::table::CoefficientTable;

#[derive(Clone, Copy, Debug)]
pub struct HeadParams {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for HeadParams {
    fn default() -> Self {
        HeadParams { tol: 1e-12, max_iter: 20_000 }
    }
}

#[derive(Clone, Debug)]
pub struct HeadSolution {
    pub phi: ScalarField,
    pub w_f: VectorField,
    /// Max cellwise defect of the face-flux divergence against the source
    /// (plain divergence when there is none); residual-sized for a converged
    /// solve.
    pub max_divergence: f64,
    /// Largest off-diagonal/diagonal ratio of the permeability tensors that
    /// the two-point scheme dropped.
    pub max_offdiag_ratio: f64,
    pub iterations: usize,
    pub residual: f64,
}

/// Solve for the head with Dirichlet data `g` on the well walls.
pub fn solve_pressure_head(
    r: &ScalarField,
    table: &CoefficientTable,
    spec: &ReservoirSpec,
    mu1: f64,
    g: &dyn Fn([f64; 3]) -> f64,
) -> Result<HeadSolution> {
    solve_pressure_head_with_source(r, table, spec, mu1, g, None, &HeadParams::default())
}

/// Same solve with an explicit volume source f in −∇·(B_w∇φ) = f; the hook
/// exists for manufactured-solution verification.
pub fn solve_pressure_head_with_source(
    r: &ScalarField,
    table: &CoefficientTable,
    spec: &ReservoirSpec,
    mu1: f64,
    g: &dyn Fn([f64; 3]) -> f64,
    source: Option<&ScalarField>,
    params: &HeadParams,
) -> Result<HeadSolution> {
    spec.validate()?;
    check_radius_field(r, &spec.grid)?;
    if !(mu1 > 0.0) || !mu1.is_finite() {
        return Err(Error::InvalidInput(format!("viscosity mu1 must be positive, got {mu1}")));
    }

    let grid = spec.grid;
    let sampler = table.sampler()?;
    let mut coeff = Vec::with_capacity(grid.cells());
    let mut max_ratio = 0.0f64;
    for &rv in &r.data {
        let e = sampler.at(rv)?;
        let k = SymCoeff::from_mat3(&e.b_w);
        let dmin = k.diag().iter().cloned().fold(f64::INFINITY, f64::min);
        max_ratio = max_ratio.max(k.max_offdiag() / dmin);
        coeff.push(k);
    }

    let op = assemble_elliptic(&grid, &coeff, &BoxBc::wells(0.0, 0.0))?;
    let (phi, sol) = op
        .solve_with(Some(g), source, params.tol, params.max_iter)
        .map_err(|e| prefix(e, "pressure head"))?;

    let (w_f, max_divergence) = darcy_velocity(&op, &coeff, &phi, g, source, mu1)?;
    Ok(HeadSolution {
        phi,
        w_f,
        max_divergence,
        max_offdiag_ratio: max_ratio,
        iterations: sol.iterations,
        residual: sol.residual,
    })
}

fn prefix(e: Error, ctx: &str) -> Error {
    match e {
        Error::NoConvergence { context, iterations, residual } => Error::NoConvergence {
            context: format!("{ctx}: {context}"),
            iterations,
            residual,
        },
        other => other,
    }
}

/// Face-flux Darcy velocity averaged to cell centers, plus the max cellwise
/// divergence defect of the face field. Face values reuse the two-point
/// transmissibilities of the assembled operator, so the defect is exactly
/// the solve residual scaled by 1/(μ₁V).
fn darcy_velocity(
    op: &EllipticOperator,
    coeff: &[SymCoeff],
    phi: &ScalarField,
    g: &dyn Fn([f64; 3]) -> f64,
    source: Option<&ScalarField>,
    mu1: f64,
) -> Result<(VectorField, f64)> {
    let grid = phi.grid;
    let mut w = VectorField::zeros(grid);
    // Velocity in the +d direction at a face of cell `ijk`.
    let u_at = |ijk: [usize; 3], d: usize, hi: bool| -> f64 {
        let c = grid.index(ijk);
        let h = grid.h[d];
        let kd = coeff[c].diag()[d];
        if hi {
            if ijk[d] + 1 < grid.n[d] {
                let mut up = ijk;
                up[d] += 1;
                let nb = grid.index(up);
                let kf = 2.0 * kd * coeff[nb].diag()[d] / (kd + coeff[nb].diag()[d]);
                -(kf / mu1) * (phi.data[nb] - phi.data[c]) / h
            } else {
                match op.bc.hi[d] {
                    FaceBc::Dirichlet(_) => {
                        let mut fc = grid.cell_center(ijk);
                        fc[d] += 0.5 * h;
                        -(kd / mu1) * (g(fc) - phi.data[c]) / (0.5 * h)
                    }
                    FaceBc::Neumann(q) => q / mu1,
                }
            }
        } else if ijk[d] > 0 {
            let mut dn = ijk;
            dn[d] -= 1;
            let nb = grid.index(dn);
            let kf = 2.0 * kd * coeff[nb].diag()[d] / (kd + coeff[nb].diag()[d]);
            -(kf / mu1) * (phi.data[c] - phi.data[nb]) / h
        } else {
            match op.bc.lo[d] {
                FaceBc::Dirichlet(_) => {
                    let mut fc = grid.cell_center(ijk);
                    fc[d] -= 0.5 * h;
                    -(kd / mu1) * (phi.data[c] - g(fc)) / (0.5 * h)
                }
                FaceBc::Neumann(q) => -q / mu1,
            }
        }
    };

    let mut max_div = 0.0f64;
    for k in 0..grid.n[2] {
        for j in 0..grid.n[1] {
            for i in 0..grid.n[0] {
                let ijk = [i, j, k];
                let c = grid.index(ijk);
                let mut v = [0.0; 3];
                let mut div = 0.0;
                for d in 0..3 {
                    let ulo = u_at(ijk, d, false);
                    let uhi = u_at(ijk, d, true);
                    v[d] = 0.5 * (ulo + uhi);
                    div += (uhi - ulo) / grid.h[d];
                }
                if let Some(f) = source {
                    div -= f.data[c] / mu1;
                }
                max_div = max_div.max(div.abs());
                w.set(c, v);
            }
        }
    }
    Ok((w, max_div))
}
