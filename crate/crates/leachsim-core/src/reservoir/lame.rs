//! Quasi-static solid displacement under the driving pressure gradient.
//!
//! Find w_s with w_s = 0 on the whole boundary such that
//!   ∇·( N(r(x)):D(w_s) + c_s² (∇·w_s) I ) = ∇p⁰,
//! then reconstruct the solid pressure p_s = p⁰ − c_s² ∇·w_s. The stiffness
//! N comes out of the coefficient table and already carries its λ₀ factor,
//! so it is used as-is; the arguments are cross-checked against the physics
//! recorded in the table to rule out silent double scaling.
//!
//! Q1 elements on the reservoir grid, 2×2×2 Gauss (exact for every product
//! of trilinear gradients). The load enters in divergence form,
//! (p⁰, ∇·v) — integration by parts against a boundary-clamped test space —
//! which keeps the right-hand side exactly orthogonal to discretely
//! divergence-free fields. That matters: a grain with a free surface relaxes
//! all deviatoric loading, so N is volumetric-only (rank one) and the
//! operator is singular-but-consistent exactly like its continuum
//! counterpart. Conjugate gradients started at zero then converges in the
//! range space. Sampled stiffness blocks whose smallest eigenvalue dips
//! below zero (interpolation of a rank-one family is not eigenvalue-exact)
//! are shifted up by that amount — a per-element correction at the rounding
//! level of the table itself.

use super::{check_radius_field, ReservoirSpec};
use crate::cell::elasticity::{element_tables, ElementTables};
use crate::cell::elasticity::{VOIGT_PAIRS, VOIGT_WEIGHT};
use crate::error::{Error, Result};
use crate::linalg::{mat6_to_flat, sym_eigenvalues, Mat6};
use crate::numerics::{cg_solve, ScalarField, SymmetricOperator, VectorField};
use crate::table::CoefficientTable;

#[derive(Clone, Copy, Debug)]
pub struct LameParams {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LameParams {
    fn default() -> Self {
        LameParams { tol: 1e-10, max_iter: 50_000 }
    }
}

#[derive(Clone, Debug)]
pub struct LameSolution {
    /// Displacement averaged to cell centers.
    pub w_s: VectorField,
    /// Solid pressure p⁰ − c_s² ∇·w_s at cell centers.
    pub p_s: ScalarField,
    /// Nodal displacement on the (n+1)³ vertex lattice, x-fastest.
    pub w_nodes: Vec<[f64; 3]>,
    pub iterations: usize,
    pub residual: f64,
    /// a(w, w) by quadrature; equals `load_work` up to the solver residual
    /// (Galerkin identity).
    pub strain_energy: f64,
    /// −∫ ∇p⁰ · w_s.
    pub load_work: f64,
}

struct ElemData {
    nodes: [usize; 8],
    /// Weighted stiffness M[p][q] = w_p N[p][q] w_q (the quadratic form on
    /// tensor-component Voigt strains), shifted PSD if needed.
    m: [[f64; 6]; 6],
}

/// Strain-displacement rows per Gauss point: bm[g][p][3a+i] = ε_p(φ_a e_i),
/// dv[g][3a+i] = div(φ_a e_i).
struct BMatrices {
    bm: Vec<[[f64; 24]; 6]>,
    dv: Vec<[f64; 24]>,
}

fn b_matrices(tab: &ElementTables) -> BMatrices {
    let mut bm = vec![[[0.0; 24]; 6]; 8];
    let mut dv = vec![[0.0; 24]; 8];
    for g in 0..8 {
        for a in 0..8 {
            for i in 0..3 {
                let la = 3 * a + i;
                dv[g][la] = tab.grad[g][a][i];
                for (p, &(pi, pj)) in VOIGT_PAIRS.iter().enumerate() {
                    let mut v = 0.0;
                    if i == pj {
                        v += 0.5 * tab.grad[g][a][pi];
                    }
                    if i == pi {
                        v += 0.5 * tab.grad[g][a][pj];
                    }
                    bm[g][p][la] = v;
                }
            }
        }
    }
    BMatrices { bm, dv }
}

struct LameOp<'a> {
    elems: &'a [ElemData],
    b: &'a BMatrices,
    wq: f64,
    cs2: f64,
    pinned: &'a [bool],
    diag: Vec<f64>,
    ndof: usize,
}

impl LameOp<'_> {
    fn gather(&self, e: &ElemData, x: &[f64], xl: &mut [f64; 24]) {
        for (a, &nd) in e.nodes.iter().enumerate() {
            xl[3 * a] = x[3 * nd];
            xl[3 * a + 1] = x[3 * nd + 1];
            xl[3 * a + 2] = x[3 * nd + 2];
        }
    }
}

impl SymmetricOperator for LameOp<'_> {
    fn dim(&self) -> usize {
        self.ndof
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.fill(0.0);
        let mut xl = [0.0; 24];
        let mut yl = [0.0; 24];
        for e in self.elems {
            self.gather(e, x, &mut xl);
            yl.fill(0.0);
            for g in 0..8 {
                let bm = &self.b.bm[g];
                let dv = &self.b.dv[g];
                let mut eps = [0.0; 6];
                let mut div = 0.0;
                for la in 0..24 {
                    let v = xl[la];
                    if v != 0.0 {
                        for p in 0..6 {
                            eps[p] += bm[p][la] * v;
                        }
                        div += dv[la] * v;
                    }
                }
                let mut sig = [0.0; 6];
                for p in 0..6 {
                    let mut s = 0.0;
                    for q in 0..6 {
                        s += e.m[p][q] * eps[q];
                    }
                    sig[p] = self.wq * s;
                }
                let dw = self.wq * self.cs2 * div;
                for la in 0..24 {
                    let mut acc = dw * dv[la];
                    for p in 0..6 {
                        acc += sig[p] * bm[p][la];
                    }
                    yl[la] += acc;
                }
            }
            for (a, &nd) in e.nodes.iter().enumerate() {
                y[3 * nd] += yl[3 * a];
                y[3 * nd + 1] += yl[3 * a + 1];
                y[3 * nd + 2] += yl[3 * a + 2];
            }
        }
        for (i, &p) in self.pinned.iter().enumerate() {
            if p {
                y[3 * i] = x[3 * i];
                y[3 * i + 1] = x[3 * i + 1];
                y[3 * i + 2] = x[3 * i + 2];
            }
        }
    }

    fn diagonal(&self) -> Option<Vec<f64>> {
        Some(self.diag.clone())
    }
}

pub fn solve_lame(
    r: &ScalarField,
    table: &CoefficientTable,
    spec: &ReservoirSpec,
    lambda0: f64,
    c_s: f64,
) -> Result<LameSolution> {
    solve_lame_with(r, table, spec, lambda0, c_s, &LameParams::default())
}

pub fn solve_lame_with(
    r: &ScalarField,
    table: &CoefficientTable,
    spec: &ReservoirSpec,
    lambda0: f64,
    c_s: f64,
    params: &LameParams,
) -> Result<LameSolution> {
    spec.validate()?;
    check_radius_field(r, &spec.grid)?;
    if !(lambda0 > 0.0) || !(c_s > 0.0) || !lambda0.is_finite() || !c_s.is_finite() {
        return Err(Error::InvalidInput(format!(
            "solid constants must be positive, got lambda0 = {lambda0}, c_s = {c_s}"
        )));
    }
    let phys = table.physics;
    if rel_diff(lambda0, phys.lambda0) > 1e-12 || rel_diff(c_s, phys.c_s) > 1e-12 {
        return Err(Error::InvalidInput(format!(
            "solid constants (lambda0 = {lambda0}, c_s = {c_s}) differ from the ones the table \
             was built with (lambda0 = {}, c_s = {}); the stiffness entries bake in their λ₀ and \
             the correctors depend on c_s, so the table must be rebuilt instead of rescaled",
            phys.lambda0, phys.c_s
        )));
    }
    let grid = spec.grid;
    if grid.h[0] != grid.h[1] || grid.h[0] != grid.h[2] {
        return Err(Error::InvalidInput("solid solve expects cubic cells".into()));
    }

    let h = grid.h[0];
    let cs2 = c_s * c_s;
    let tab = element_tables(h, cs2);
    let bmat = b_matrices(&tab);
    let [n0, n1, n2] = grid.n;
    let (m0, m1) = (n0 + 1, n1 + 1);
    let nnodes = (n0 + 1) * (n1 + 1) * (n2 + 1);
    let node = |v: [usize; 3]| v[0] + m0 * (v[1] + m1 * v[2]);

    let sampler = table.sampler()?;
    let mut elems = Vec::with_capacity(grid.cells());
    for k in 0..n2 {
        for j in 0..n1 {
            for i in 0..n0 {
                let c = grid.index([i, j, k]);
                let m = weighted_stiffness(&sampler.at(r.data[c])?.n_s);
                let mut nodes = [0usize; 8];
                for (a, nd) in nodes.iter_mut().enumerate() {
                    *nd = node([i + (a & 1), j + ((a >> 1) & 1), k + ((a >> 2) & 1)]);
                }
                elems.push(ElemData { nodes, m });
            }
        }
    }

    let mut pinned = vec![false; nnodes];
    for k in 0..=n2 {
        for j in 0..=n1 {
            for i in 0..=n0 {
                if i == 0 || j == 0 || k == 0 || i == n0 || j == n1 || k == n2 {
                    pinned[node([i, j, k])] = true;
                }
            }
        }
    }

    let ndof = 3 * nnodes;
    let mut diag = vec![0.0; ndof];
    for e in &elems {
        for g in 0..8 {
            let bm = &bmat.bm[g];
            let dv = &bmat.dv[g];
            for (a, &nd) in e.nodes.iter().enumerate() {
                for i in 0..3 {
                    let la = 3 * a + i;
                    let mut s = cs2 * dv[la] * dv[la];
                    for p in 0..6 {
                        for q in 0..6 {
                            s += bm[p][la] * e.m[p][q] * bm[q][la];
                        }
                    }
                    diag[3 * nd + i] += tab.wq * s;
                }
            }
        }
    }
    for (i, &p) in pinned.iter().enumerate() {
        if p {
            diag[3 * i] = 1.0;
            diag[3 * i + 1] = 1.0;
            diag[3 * i + 2] = 1.0;
        }
    }

    // Load (p⁰, ∇·v), evaluated analytically at the Gauss points.
    let mut b = vec![0.0; ndof];
    for k in 0..n2 {
        for j in 0..n1 {
            for i in 0..n0 {
                let c = grid.index([i, j, k]);
                let e = &elems[c];
                let mut lo = grid.cell_center([i, j, k]);
                for d in 0..3 {
                    lo[d] -= 0.5 * grid.h[d];
                }
                let mut bl = [0.0; 24];
                for g in 0..8 {
                    let xg =
                        [lo[0] + tab.gauss[g][0], lo[1] + tab.gauss[g][1], lo[2] + tab.gauss[g][2]];
                    let p0 = spec.p0.eval(xg);
                    let dv = &bmat.dv[g];
                    for la in 0..24 {
                        bl[la] += tab.wq * p0 * dv[la];
                    }
                }
                for (a, &nd) in e.nodes.iter().enumerate() {
                    b[3 * nd] += bl[3 * a];
                    b[3 * nd + 1] += bl[3 * a + 1];
                    b[3 * nd + 2] += bl[3 * a + 2];
                }
            }
        }
    }
    for (i, &p) in pinned.iter().enumerate() {
        if p {
            b[3 * i] = 0.0;
            b[3 * i + 1] = 0.0;
            b[3 * i + 2] = 0.0;
        }
    }

    let op = LameOp { elems: &elems, b: &bmat, wq: tab.wq, cs2, pinned: &pinned, diag, ndof };
    let sol = cg_solve(&op, &b, params.tol, params.max_iter).map_err(|e| match e {
        Error::NoConvergence { context, iterations, residual } => Error::NoConvergence {
            context: format!("lame: {context}"),
            iterations,
            residual,
        },
        other => other,
    })?;
    let x = sol.x;

    // Outputs: cell-centred displacement, centre divergence → solid pressure,
    // and the two sides of the energy identity.
    let mut w_s = VectorField::zeros(grid);
    let mut p_s = ScalarField::constant(grid, 0.0);
    let mut energy = 0.0;
    let mut work = 0.0;
    let gp0 = spec.p0.gradient();
    let mut xl = [0.0; 24];
    for k in 0..n2 {
        for j in 0..n1 {
            for i in 0..n0 {
                let c = grid.index([i, j, k]);
                let e = &elems[c];
                for (a, &nd) in e.nodes.iter().enumerate() {
                    xl[3 * a] = x[3 * nd];
                    xl[3 * a + 1] = x[3 * nd + 1];
                    xl[3 * a + 2] = x[3 * nd + 2];
                }
                let mut cvals = [0.0; 3];
                for &nd in &e.nodes {
                    cvals[0] += 0.125 * x[3 * nd];
                    cvals[1] += 0.125 * x[3 * nd + 1];
                    cvals[2] += 0.125 * x[3 * nd + 2];
                }
                w_s.set(c, cvals);
                let mut div_mean = 0.0;
                for g in 0..8 {
                    let bm = &bmat.bm[g];
                    let dv = &bmat.dv[g];
                    let mut eps = [0.0; 6];
                    let mut div = 0.0;
                    for la in 0..24 {
                        let v = xl[la];
                        for p in 0..6 {
                            eps[p] += bm[p][la] * v;
                        }
                        div += dv[la] * v;
                    }
                    div_mean += 0.125 * div;
                    let mut q = 0.0;
                    for p in 0..6 {
                        for s in 0..6 {
                            q += eps[p] * e.m[p][s] * eps[s];
                        }
                    }
                    energy += tab.wq * (q + cs2 * div * div);
                    // w at the Gauss point.
                    let mut wg = [0.0; 3];
                    for a in 0..8 {
                        let v = tab.val[g][a];
                        wg[0] += v * xl[3 * a];
                        wg[1] += v * xl[3 * a + 1];
                        wg[2] += v * xl[3 * a + 2];
                    }
                    work -= tab.wq * (gp0[0] * wg[0] + gp0[1] * wg[1] + gp0[2] * wg[2]);
                }
                let center = grid.cell_center([i, j, k]);
                p_s.data[c] = spec.p0.eval(center) - cs2 * div_mean;
            }
        }
    }

    let mut w_nodes = Vec::with_capacity(nnodes);
    for nd in 0..nnodes {
        w_nodes.push([x[3 * nd], x[3 * nd + 1], x[3 * nd + 2]]);
    }
    Ok(LameSolution {
        w_s,
        p_s,
        w_nodes,
        iterations: sol.iterations,
        residual: sol.residual,
        strain_energy: energy,
        load_work: work,
    })
}

fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

/// Weighted quadratic form of a sampled stiffness block, with the PSD shift
/// described in the module docs.
fn weighted_stiffness(n_s: &Mat6) -> [[f64; 6]; 6] {
    let mut m = [[0.0; 6]; 6];
    for p in 0..6 {
        for q in 0..6 {
            m[p][q] = VOIGT_WEIGHT[p] * n_s[p][q] * VOIGT_WEIGHT[q];
        }
    }
    let eig = sym_eigenvalues(&mat6_to_flat(&m), 6);
    if eig[0] < 0.0 {
        for p in 0..6 {
            m[p][p] -= eig[0];
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::GridSpec;
    use crate::reservoir::AxisProfile;
    use crate::test_util::shared_table;

    fn spec_with(p0: AxisProfile, n: usize) -> ReservoirSpec {
        ReservoirSpec::new(GridSpec::box_cube(n).unwrap(), p0, AxisProfile::Constant(0.5)).unwrap()
    }

    #[test]
    fn constant_pressure_leaves_the_solid_at_rest() {
        let table = shared_table();
        let spec = spec_with(AxisProfile::Constant(2.0), 8);
        let r = ScalarField::constant(spec.grid, 0.3);
        let sol = solve_lame(&r, table, &spec, 1.0, 1.0).unwrap();
        for v in &sol.w_nodes {
            assert!(v.iter().all(|&c| c.abs() < 1e-12), "{v:?}");
        }
        for &p in &sol.p_s.data {
            assert!((p - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_pressure_satisfies_the_energy_identity() {
        let table = shared_table();
        let spec = spec_with(AxisProfile::Linear { axis: 2, lo: -0.5, hi: 0.5 }, 8);
        let r = ScalarField::from_fn(spec.grid, |x| 0.25 + 0.1 * (x[2] + 0.5));
        let sol = solve_lame(&r, table, &spec, 1.0, 1.0).unwrap();
        assert!(sol.residual <= 1e-10);
        assert!(sol.load_work > 0.0, "load work {}", sol.load_work);
        let rel = (sol.strain_energy - sol.load_work).abs() / sol.load_work;
        assert!(rel < 1e-8, "energy {} vs work {}", sol.strain_energy, sol.load_work);
        // Clamped boundary.
        let m = spec.grid.n[0] + 1;
        for k in 0..m {
            for j in 0..m {
                for i in 0..m {
                    if i == 0 || j == 0 || k == 0 || i + 1 == m || j + 1 == m || k + 1 == m {
                        let v = sol.w_nodes[i + m * (j + m * k)];
                        assert_eq!(v, [0.0; 3]);
                    }
                }
            }
        }
        // The solid is actually displaced.
        assert!(sol.w_s.max_norm() > 1e-6);
    }

    #[test]
    fn doubling_the_drive_doubles_the_displacement() {
        let table = shared_table();
        let r_of = |spec: &ReservoirSpec| ScalarField::constant(spec.grid, 0.32);
        let s1 = spec_with(AxisProfile::Linear { axis: 0, lo: 0.0, hi: 1.0 }, 6);
        let s2 = spec_with(AxisProfile::Linear { axis: 0, lo: 0.0, hi: 2.0 }, 6);
        let a = solve_lame(&r_of(&s1), table, &s1, 1.0, 1.0).unwrap();
        let b = solve_lame(&r_of(&s2), table, &s2, 1.0, 1.0).unwrap();
        let scale = a.w_s.max_norm();
        assert!(scale > 0.0);
        for (va, vb) in a.w_nodes.iter().zip(&b.w_nodes) {
            for d in 0..3 {
                assert!(
                    (2.0 * va[d] - vb[d]).abs() <= 1e-12 * scale,
                    "{va:?} vs {vb:?}"
                );
            }
        }
    }

    #[test]
    fn physics_mismatch_is_rejected() {
        let table = shared_table();
        let spec = spec_with(AxisProfile::Constant(1.0), 6);
        let r = ScalarField::constant(spec.grid, 0.3);
        assert!(matches!(
            solve_lame(&r, table, &spec, 2.0, 1.0),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            solve_lame(&r, table, &spec, 1.0, 0.5),
            Err(Error::InvalidInput(_))
        ));
    }
}
