//! Tabulation of the effective coefficients over a knot grid of grain radii,
//! and monotone interpolation in r for the macroscopic solvers.
//!
//! Each knot runs the three cell problems at the same resolution; knots are
//! independent and solved in parallel. Interpolation is shape-preserving
//! cubic per independent tensor entry (upper triangles, mirrored back), so
//! symmetric inputs stay symmetric and strictly decreasing scalar columns
//! stay decreasing between knots. Queries outside the knot range clamp to
//! the nearest endpoint and are counted on the table.

use crate::cell::{
    build_cell_mask, porosity, solve_diffusion_cell, solve_elasticity_cell_with,
    solve_stokes_cell_with, ElasticParams, RadiusBounds, StokesParams,
};
use crate::error::{Error, Result};
use crate::linalg::{is_spd, mat3_to_flat, mat6_to_flat, sym_eigenvalues, Mat3, Mat6};
use crate::numerics::MonotoneCubic;
use rayon::prelude::*;
use std::sync::atomic::{AtomicUsize, Ordering};

/// Physics constants shared by every knot of a table.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellPhysics {
    /// Fluid viscosity constant μ₁.
    pub mu1: f64,
    /// Solid shear constant λ₀.
    pub lambda0: f64,
    /// Sound speed c_s (enters as c_s²).
    pub c_s: f64,
}

impl Default for CellPhysics {
    fn default() -> Self {
        CellPhysics { mu1: 1.0, lambda0: 1.0, c_s: 1.0 }
    }
}

/// Effective coefficients at one radius: porosity, permeability B_w,
/// diffusivity B_c (energy form), stiffness N_s (energy form), plus the
/// literal-formula diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct EffectiveCoefficients {
    pub r: f64,
    pub m: f64,
    pub b_w: Mat3,
    pub b_c: Mat3,
    pub n_s: Mat6,
    pub b_c_quadratic: Mat3,
    pub n_paper: Mat6,
}

impl EffectiveCoefficients {
    /// Scalar permeability tr(B_w)/3.
    pub fn k_scalar(&self) -> f64 {
        (self.b_w[0][0] + self.b_w[1][1] + self.b_w[2][2]) / 3.0
    }

    /// Scalar diffusivity tr(B_c)/3.
    pub fn d_scalar(&self) -> f64 {
        (self.b_c[0][0] + self.b_c[1][1] + self.b_c[2][2]) / 3.0
    }
}

/// Solver settings recorded alongside the table so a file on disk is
/// reproducible.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TableProvenance {
    pub stokes_tol: f64,
    pub diffusion_tol: f64,
    pub elastic_tol: f64,
}

impl Default for TableProvenance {
    fn default() -> Self {
        TableProvenance {
            stokes_tol: StokesParams::default().tol,
            diffusion_tol: 1e-10,
            elastic_tol: ElasticParams::default().tol,
        }
    }
}

#[derive(Debug)]
pub struct CoefficientTable {
    pub knots: Vec<f64>,
    pub entries: Vec<EffectiveCoefficients>,
    pub cell_resolution: usize,
    pub physics: CellPhysics,
    pub provenance: TableProvenance,
    clamp_warnings: AtomicUsize,
}

impl CoefficientTable {
    /// Assemble a table from parts (used by the file loader); runs the full
    /// invariant validation.
    pub fn from_parts(
        knots: Vec<f64>,
        entries: Vec<EffectiveCoefficients>,
        cell_resolution: usize,
        physics: CellPhysics,
        provenance: TableProvenance,
    ) -> Result<Self> {
        let table = CoefficientTable {
            knots,
            entries,
            cell_resolution,
            physics,
            provenance,
            clamp_warnings: AtomicUsize::new(0),
        };
        table.validate()?;
        Ok(table)
    }

    pub fn r_min(&self) -> f64 {
        self.knots[0]
    }

    pub fn r_max(&self) -> f64 {
        *self.knots.last().unwrap()
    }

    /// Number of interpolation queries that fell outside the knot range and
    /// were clamped.
    pub fn clamp_warnings(&self) -> usize {
        self.clamp_warnings.load(Ordering::Relaxed)
    }

    fn validate(&self) -> Result<()> {
        if self.knots.len() < 5 {
            return Err(Error::InvalidInput(format!(
                "coefficient table needs at least 5 knots, got {}",
                self.knots.len()
            )));
        }
        if self.knots.len() != self.entries.len() {
            return Err(Error::InvalidInput(format!(
                "knot/entry count mismatch: {} vs {}",
                self.knots.len(),
                self.entries.len()
            )));
        }
        if self.knots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("table knots must be strictly increasing".into()));
        }
        for (i, (r, e)) in self.knots.iter().zip(&self.entries).enumerate() {
            if e.r != *r {
                return Err(Error::InvalidInput(format!(
                    "knot {i}: entry radius {} does not match knot {r}",
                    e.r
                )));
            }
            let m_exact = porosity(*r)?;
            if (e.m - m_exact).abs() > 1e-14 {
                return Err(Error::Numerical(format!(
                    "knot {i} (r = {r}): porosity {} deviates from the closed form {m_exact}",
                    e.m
                )));
            }
            check_entry_definite(e)
                .map_err(|err| prefix_error(err, &format!("knot {i} (r = {r})")))?;
        }
        for i in 1..self.entries.len() {
            let (ka, kb) = (self.entries[i - 1].k_scalar(), self.entries[i].k_scalar());
            if kb >= ka {
                return Err(Error::Numerical(format!(
                    "permeability not strictly decreasing between knots {} and {i}: \
                     k({}) = {ka:.6e} vs k({}) = {kb:.6e}; increase the cell resolution",
                    i - 1,
                    self.knots[i - 1],
                    self.knots[i]
                )));
            }
            let (da, db) = (self.entries[i - 1].d_scalar(), self.entries[i].d_scalar());
            if db >= da {
                return Err(Error::Numerical(format!(
                    "diffusivity not strictly decreasing between knots {} and {i}: \
                     d({}) = {da:.6e} vs d({}) = {db:.6e}; increase the cell resolution",
                    i - 1,
                    self.knots[i - 1],
                    self.knots[i]
                )));
            }
        }
        Ok(())
    }

    /// Effective coefficients at radius r: exact table entry on a knot,
    /// entrywise shape-preserving interpolation between knots, clamped (and
    /// counted) outside the range. Porosity always comes from the closed
    /// form so its invariant is exact everywhere.
    pub fn interpolate(&self, r: f64) -> Result<EffectiveCoefficients> {
        let out = self.sampler()?.at(r)?;
        if !self.knots.contains(&out.r) {
            check_entry_definite(&out)
                .map_err(|e| prefix_error(e, &format!("interpolated entry at r = {}", out.r)))?;
        }
        Ok(out)
    }

    /// Prebuild the interpolation splines for repeated queries. The
    /// macroscopic solvers evaluate the table once per cell per step; going
    /// through `interpolate` would rebuild sixty splines each time.
    pub fn sampler(&self) -> Result<CoeffSampler<'_>> {
        let spline = |get: &dyn Fn(&EffectiveCoefficients) -> f64| {
            MonotoneCubic::new(self.knots.clone(), self.entries.iter().map(get).collect())
        };
        let tri3 = |m: fn(&EffectiveCoefficients) -> &Mat3| -> Result<Vec<MonotoneCubic>> {
            let mut s = Vec::with_capacity(6);
            for i in 0..3 {
                for j in i..3 {
                    s.push(spline(&|e| m(e)[i][j])?);
                }
            }
            Ok(s)
        };
        let tri6 = |m: fn(&EffectiveCoefficients) -> &Mat6| -> Result<Vec<MonotoneCubic>> {
            let mut s = Vec::with_capacity(21);
            for p in 0..6 {
                for q in p..6 {
                    s.push(spline(&|e| m(e)[p][q])?);
                }
            }
            Ok(s)
        };
        Ok(CoeffSampler {
            table: self,
            b_w: tri3(|e| &e.b_w)?,
            b_c: tri3(|e| &e.b_c)?,
            b_c_quadratic: tri3(|e| &e.b_c_quadratic)?,
            n_s: tri6(|e| &e.n_s)?,
            n_paper: tri6(|e| &e.n_paper)?,
        })
    }
}

/// Prebuilt splines over one table, one per independent tensor entry.
///
/// `at` follows the same clamp/knot semantics as
/// [`CoefficientTable::interpolate`] but skips the per-query definiteness
/// re-check: the envelope is verified at the knots by `validate` and spot
/// checked by `interpolate`, while inner loops query the sampler millions of
/// times.
pub struct CoeffSampler<'a> {
    table: &'a CoefficientTable,
    b_w: Vec<MonotoneCubic>,
    b_c: Vec<MonotoneCubic>,
    b_c_quadratic: Vec<MonotoneCubic>,
    n_s: Vec<MonotoneCubic>,
    n_paper: Vec<MonotoneCubic>,
}

impl CoeffSampler<'_> {
    pub fn at(&self, r: f64) -> Result<EffectiveCoefficients> {
        if !r.is_finite() {
            return Err(Error::InvalidInput(format!("interpolation radius must be finite, got {r}")));
        }
        let t = self.table;
        let rc = r.clamp(t.r_min(), t.r_max());
        if rc != r {
            t.clamp_warnings.fetch_add(1, Ordering::Relaxed);
        }
        if let Some(i) = t.knots.iter().position(|&k| k == rc) {
            return Ok(t.entries[i].clone());
        }

        let eval3 = |s: &[MonotoneCubic]| -> Mat3 {
            let mut m = [[0.0; 3]; 3];
            let mut k = 0;
            for i in 0..3 {
                for j in i..3 {
                    let v = s[k].eval(rc);
                    m[i][j] = v;
                    m[j][i] = v;
                    k += 1;
                }
            }
            m
        };
        let eval6 = |s: &[MonotoneCubic]| -> Mat6 {
            let mut m = [[0.0; 6]; 6];
            let mut k = 0;
            for p in 0..6 {
                for q in p..6 {
                    let v = s[k].eval(rc);
                    m[p][q] = v;
                    m[q][p] = v;
                    k += 1;
                }
            }
            m
        };
        Ok(EffectiveCoefficients {
            r: rc,
            m: porosity(rc)?,
            b_w: eval3(&self.b_w),
            b_c: eval3(&self.b_c),
            n_s: eval6(&self.n_s),
            b_c_quadratic: eval3(&self.b_c_quadratic),
            n_paper: eval6(&self.n_paper),
        })
    }
}

/// B_w and B_c must be strictly positive definite. The stiffness of a
/// free-surface grain is volumetric-only (rank one), so it is held to the
/// weaker honest standard: no eigenvalue below rounding and a strictly
/// positive response to the identity strain.
fn check_entry_definite(e: &EffectiveCoefficients) -> Result<()> {
    if !is_spd(&mat3_to_flat(&e.b_w), 3) {
        return Err(Error::Numerical("B_w is not positive definite".into()));
    }
    if !is_spd(&mat3_to_flat(&e.b_c), 3) {
        return Err(Error::Numerical("B_c is not positive definite".into()));
    }
    let eig = sym_eigenvalues(&mat6_to_flat(&e.n_s), 6);
    let scale = eig.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    if eig[0] < -1e-10 * scale {
        return Err(Error::Numerical(format!(
            "stiffness tensor has a negative eigenvalue {:.3e}",
            eig[0]
        )));
    }
    // Identity-strain response Σ_{p,q ∈ volumetric} N[p][q] > 0.
    let vol_response: f64 = (0..3).map(|p| (0..3).map(|q| e.n_s[p][q]).sum::<f64>()).sum();
    if !(vol_response > 0.0) {
        return Err(Error::Numerical(format!(
            "stiffness tensor lost its volumetric response ({vol_response:.3e})"
        )));
    }
    Ok(())
}

fn prefix_error(e: Error, ctx: &str) -> Error {
    match e {
        Error::InvalidInput(s) => Error::InvalidInput(format!("{ctx}: {s}")),
        Error::Numerical(s) => Error::Numerical(format!("{ctx}: {s}")),
        Error::NoConvergence { context, iterations, residual } => Error::NoConvergence {
            context: format!("{ctx}: {context}"),
            iterations,
            residual,
        },
        other => other,
    }
}

/// Run all three cell problems at one radius.
pub fn compute_entry(
    r: f64,
    n: usize,
    physics: &CellPhysics,
    prov: &TableProvenance,
) -> Result<EffectiveCoefficients> {
    let mask = build_cell_mask(r, n)?;
    let stokes = solve_stokes_cell_with(
        &mask,
        physics.mu1,
        &StokesParams { tol: prov.stokes_tol, ..StokesParams::default() },
    )?;
    let diffusion = solve_diffusion_cell(&mask, prov.diffusion_tol, 50_000)?;
    let elastic = solve_elasticity_cell_with(
        &mask,
        physics.lambda0,
        physics.c_s,
        &ElasticParams { tol: prov.elastic_tol, ..ElasticParams::default() },
    )?;
    Ok(EffectiveCoefficients {
        r,
        m: porosity(r)?,
        b_w: stokes.b_w,
        b_c: diffusion.b_energy,
        n_s: elastic.n_energy,
        b_c_quadratic: diffusion.b_quadratic,
        n_paper: elastic.n_paper,
    })
}

/// Tabulate the effective coefficients at `knots` equally spaced radii in
/// [bounds.r_min, bounds.r_max], running the cell problems at resolution `n`.
/// Fails naming the knot if any cell solve fails or if the scalar columns
/// are not strictly decreasing (a sign of under-resolution).
pub fn tabulate(
    bounds: &RadiusBounds,
    knots: usize,
    n: usize,
    physics: &CellPhysics,
) -> Result<CoefficientTable> {
    tabulate_with(bounds, knots, n, physics, &TableProvenance::default())
}

pub fn tabulate_with(
    bounds: &RadiusBounds,
    knots: usize,
    n: usize,
    physics: &CellPhysics,
    provenance: &TableProvenance,
) -> Result<CoefficientTable> {
    bounds.validate()?;
    if knots < 5 {
        return Err(Error::InvalidInput(format!("tabulate needs at least 5 knots, got {knots}")));
    }
    if n < 16 {
        return Err(Error::InvalidInput(format!(
            "tabulate needs cell resolution n >= 16, got {n}"
        )));
    }
    let step = (bounds.r_max - bounds.r_min) / (knots - 1) as f64;
    let radii: Vec<f64> = (0..knots).map(|i| bounds.r_min + i as f64 * step).collect();

    let entries: Vec<EffectiveCoefficients> = radii
        .par_iter()
        .enumerate()
        .map(|(i, &r)| {
            compute_entry(r, n, physics, provenance)
                .map_err(|e| prefix_error(e, &format!("tabulate: knot {i} (r = {r:.6})")))
        })
        .collect::<Result<_>>()?;

    CoefficientTable::from_parts(radii, entries, n, *physics, *provenance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::mat3_eigenvalues;
    use crate::test_util::{shared_table, test_bounds};

    #[test]
    fn table_has_decreasing_scalars_and_exact_porosity() {
        let t = shared_table();
        assert_eq!(t.entries.len(), 5);
        for i in 1..5 {
            assert!(t.entries[i].k_scalar() < t.entries[i - 1].k_scalar());
            assert!(t.entries[i].d_scalar() < t.entries[i - 1].d_scalar());
        }
        for e in &t.entries {
            assert!((e.m - porosity(e.r).unwrap()).abs() <= 1e-14);
        }
    }

    #[test]
    fn knot_queries_reproduce_entries_exactly() {
        let t = shared_table();
        for (i, &r) in t.knots.iter().enumerate() {
            let e = t.interpolate(r).unwrap();
            assert_eq!(e, t.entries[i]);
        }
        assert_eq!(t.clamp_warnings(), 0);
    }

    #[test]
    fn out_of_range_queries_clamp_and_are_counted() {
        let t = tabulate(&test_bounds(), 5, 16, &CellPhysics::default()).unwrap();
        let e = t.interpolate(0.01).unwrap();
        assert_eq!(e, t.entries[0]);
        let e = t.interpolate(0.7).unwrap();
        assert_eq!(e, *t.entries.last().unwrap());
        assert_eq!(t.clamp_warnings(), 2);
    }

    #[test]
    fn midpoints_stay_between_neighbors_and_definite() {
        let t = shared_table();
        for i in 1..t.knots.len() {
            let rm = 0.5 * (t.knots[i - 1] + t.knots[i]);
            let e = t.interpolate(rm).unwrap();
            let (klo, khi) =
                (t.entries[i].k_scalar(), t.entries[i - 1].k_scalar());
            assert!(e.k_scalar() >= klo && e.k_scalar() <= khi, "k at {rm}");
            let (dlo, dhi) =
                (t.entries[i].d_scalar(), t.entries[i - 1].d_scalar());
            assert!(e.d_scalar() >= dlo && e.d_scalar() <= dhi, "d at {rm}");
            // Eigenvalues within the envelope of the adjacent knots.
            let elo = mat3_eigenvalues(&t.entries[i].b_w);
            let ehi = mat3_eigenvalues(&t.entries[i - 1].b_w);
            let em = mat3_eigenvalues(&e.b_w);
            assert!(em[0] >= elo[0] * (1.0 - 1e-9));
            assert!(em[2] <= ehi[2] * (1.0 + 1e-9));
            // Symmetry preserved bitwise by triangle interpolation.
            for a in 0..3 {
                for b in 0..3 {
                    assert_eq!(e.b_w[a][b], e.b_w[b][a]);
                    assert_eq!(e.b_c[a][b], e.b_c[b][a]);
                }
            }
            for p in 0..6 {
                for q in 0..6 {
                    assert_eq!(e.n_s[p][q], e.n_s[q][p]);
                }
            }
        }
    }

    #[test]
    fn sampler_matches_interpolate() {
        let t = shared_table();
        let s = t.sampler().unwrap();
        for &r in &[0.2, 0.3141, 0.42] {
            assert_eq!(s.at(r).unwrap(), t.interpolate(r).unwrap());
        }
    }

    #[test]
    fn tabulate_is_deterministic() {
        let a = tabulate(&test_bounds(), 5, 16, &CellPhysics::default()).unwrap();
        let b = shared_table();
        assert_eq!(a.knots, b.knots);
        for (ea, eb) in a.entries.iter().zip(&b.entries) {
            assert_eq!(ea, eb);
        }
    }

    #[test]
    fn bad_arguments_are_rejected() {
        let phys = CellPhysics::default();
        assert!(matches!(
            tabulate(&test_bounds(), 4, 16, &phys),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            tabulate(&test_bounds(), 5, 8, &phys),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn unresolvable_knot_is_named() {
        // r_min = 0.05 at n = 16 is below the mask resolution threshold.
        let bounds = RadiusBounds { r_min: 0.05, r_max: 0.45, ..RadiusBounds::default() };
        let err = tabulate(&bounds, 5, 16, &CellPhysics::default()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("knot 0"), "message: {msg}");
    }
}
