//! Implicit acid transport through the evolving pore space.
//!
//! One backward-Euler step of
//!   ( m(r_new) c_new − m(r_old) c_old ) / dt = ∇·( α_c B_c(r_new) ∇(c_new − c⁰) )
//! with c = c⁰ on the well walls and zero flux on S0. The solve runs in the
//! deviation v = c_new − c⁰, which makes the well condition homogeneous; the
//! gradient of c⁰ rides along in the flux, so any c⁰ is an exact steady
//! state of the discrete step while the radius is frozen.
//!
//! The step is an M-matrix system (positive storage diagonal plus two-point
//! diffusion), so concentrations stay in [0, 1] up to rounding as long as the
//! radius is nonincreasing — the porosity can only grow, which dilutes.
//! Values are clipped back to the unit interval only when the overshoot is
//! at rounding level; anything larger is a genuine max-principle violation
//! and comes back as an error.

use super::{check_radius_field, ReservoirSpec};
use crate::cell::porosity;
use crate::error::{Error, Result};
use crate::numerics::{
    assemble_elliptic, cg_solve, neumaier_sum, BoxBc, ScalarField, SymCoeff,
};
use crate::table::CoefficientTable;

#[derive(Clone, Copy, Debug)]
pub struct TransportParams {
    pub tol: f64,
    pub max_iter: usize,
    /// Largest tolerated excursion of c outside [0, 1] before the step is
    /// declared non-physical.
    pub overshoot_tol: f64,
}

impl Default for TransportParams {
    fn default() -> Self {
        TransportParams { tol: 1e-12, max_iter: 50_000, overshoot_tol: 1e-10 }
    }
}

/// Balance bookkeeping for one step, all in stored-mass units (∫ m c).
#[derive(Clone, Copy, Debug)]
pub struct StepReport {
    /// Σ (m_new c_new − m_old c_old) V before clipping.
    pub mass_change: f64,
    /// Mass entering through the well walls over the step.
    pub boundary_mass: f64,
    /// Mass added by the volume source over the step (zero without one).
    pub source_mass: f64,
    /// |mass_change − boundary_mass − source_mass| relative to the largest
    /// of the three; bounded by the linear-solve residual.
    pub balance_defect: f64,
    /// Largest clipped excursion outside [0, 1].
    pub max_clip: f64,
    pub iterations: usize,
    pub residual: f64,
}

pub fn step_diffusion(
    c_old: &ScalarField,
    r_old: &ScalarField,
    r_new: &ScalarField,
    dt: f64,
    table: &CoefficientTable,
    spec: &ReservoirSpec,
    alpha_c: f64,
) -> Result<ScalarField> {
    let (c, _) = step_diffusion_with_source(
        c_old,
        r_old,
        r_new,
        dt,
        table,
        spec,
        alpha_c,
        None,
        &TransportParams::default(),
    )?;
    Ok(c)
}

/// Full-control variant: explicit parameters, balance report, and an
/// optional volume source (manufactured-solution hook).
#[allow(clippy::too_many_arguments)]
pub fn step_diffusion_with_source(
    c_old: &ScalarField,
    r_old: &ScalarField,
    r_new: &ScalarField,
    dt: f64,
    table: &CoefficientTable,
    spec: &ReservoirSpec,
    alpha_c: f64,
    source: Option<&ScalarField>,
    params: &TransportParams,
) -> Result<(ScalarField, StepReport)> {
    spec.validate()?;
    let grid = spec.grid;
    check_radius_field(r_old, &grid)?;
    check_radius_field(r_new, &grid)?;
    if c_old.grid != grid {
        return Err(Error::InvalidInput("c_old grid does not match the reservoir".into()));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidInput(format!("time step must be positive, got {dt}")));
    }
    if !(alpha_c > 0.0) || !alpha_c.is_finite() {
        return Err(Error::InvalidInput(format!("alpha_c must be positive, got {alpha_c}")));
    }
    for (c, (&ro, &rn)) in r_old.data.iter().zip(&r_new.data).enumerate() {
        if rn > ro + 1e-14 {
            return Err(Error::InvalidInput(format!(
                "radius grows at cell {c} ({ro} -> {rn}); dissolution cannot regrow grains"
            )));
        }
    }
    for (i, &c) in c_old.data.iter().enumerate() {
        if !(-1e-12..=1.0 + 1e-12).contains(&c) {
            return Err(Error::InvalidInput(format!(
                "c_old = {c} at cell {i} leaves [0, 1]"
            )));
        }
    }

    let c0 = spec.c0_field();
    let vol = grid.volume();
    let sampler = table.sampler()?;
    let mut coeff = Vec::with_capacity(grid.cells());
    let mut m_new = Vec::with_capacity(grid.cells());
    let mut m_old = Vec::with_capacity(grid.cells());
    for c in 0..grid.cells() {
        let e = sampler.at(r_new.data[c])?;
        let d = SymCoeff::from_mat3(&e.b_c).diag();
        coeff.push(SymCoeff::from_diag([alpha_c * d[0], alpha_c * d[1], alpha_c * d[2]]));
        m_new.push(porosity(r_new.data[c])?);
        m_old.push(porosity(r_old.data[c])?);
    }

    // v = c_new − c⁰ with homogeneous well data; add the storage diagonal.
    let mut ell = assemble_elliptic(&grid, &coeff, &BoxBc::wells(0.0, 0.0))?;
    for c in 0..grid.cells() {
        ell.op.diag[c] += m_new[c] * vol / dt;
    }
    let mut b: Vec<f64> =
        (0..grid.cells())
            .map(|c| (m_old[c] * c_old.data[c] - m_new[c] * c0.data[c]) * vol / dt)
            .collect();
    if let Some(f) = source {
        if f.grid != grid {
            return Err(Error::InvalidInput("source grid mismatch".into()));
        }
        for (bi, fi) in b.iter_mut().zip(&f.data) {
            *bi += vol * fi;
        }
    }

    let sol = cg_solve(&ell.op, &b, params.tol, params.max_iter).map_err(|e| match e {
        Error::NoConvergence { context, iterations, residual } => Error::NoConvergence {
            context: format!("transport: {context}"),
            iterations,
            residual,
        },
        other => other,
    })?;
    let v = sol.x;

    // Balance before clipping: interior transmissibilities cancel in the
    // cell sum, leaving exactly the wall fluxes plus the source.
    let mass_change = neumaier_sum(
        (0..grid.cells())
            .map(|c| (m_new[c] * (c0.data[c] + v[c]) - m_old[c] * c_old.data[c]) * vol),
    );
    let boundary_mass =
        -dt * neumaier_sum(ell.dirichlet_faces().iter().map(|f| f.t * v[f.cell]));
    let source_mass = match source {
        Some(f) => dt * vol * neumaier_sum(f.data.iter().copied()),
        None => 0.0,
    };
    let scale = mass_change.abs().max(boundary_mass.abs()).max(source_mass.abs()).max(1e-300);
    let balance_defect = (mass_change - boundary_mass - source_mass).abs() / scale;

    let mut c_new = ScalarField { grid, data: vec![0.0; grid.cells()] };
    let mut max_clip = 0.0f64;
    for c in 0..grid.cells() {
        let val = c0.data[c] + v[c];
        let clipped = val.clamp(0.0, 1.0);
        let over = (val - clipped).abs();
        if over > params.overshoot_tol {
            return Err(Error::Numerical(format!(
                "transport max principle violated: c = {val} at cell {c} \
                 (overshoot {over:.3e}); refine dt or the grid"
            )));
        }
        max_clip = max_clip.max(over);
        c_new.data[c] = clipped;
    }

    Ok((
        c_new,
        StepReport {
            mass_change,
            boundary_mass,
            source_mass,
            balance_defect,
            max_clip,
            iterations: sol.iterations,
            residual: sol.residual,
        },
    ))
}

/// March the transport across a prescribed radius history: one backward
/// Euler step per history interval. Returns one concentration per level,
/// starting from c⁰.
pub fn run_diffusion(
    r_history: &[ScalarField],
    spec: &ReservoirSpec,
    table: &CoefficientTable,
    alpha_c: f64,
    dt: f64,
    params: &TransportParams,
) -> Result<Vec<ScalarField>> {
    run_diffusion_from(&spec.c0_field(), r_history, spec, table, alpha_c, dt, params)
}

/// `run_diffusion` from an explicit starting concentration; slab chaining
/// continues each slab from where the previous one ended.
pub fn run_diffusion_from(
    c_start: &ScalarField,
    r_history: &[ScalarField],
    spec: &ReservoirSpec,
    table: &CoefficientTable,
    alpha_c: f64,
    dt: f64,
    params: &TransportParams,
) -> Result<Vec<ScalarField>> {
    if r_history.is_empty() {
        return Err(Error::InvalidInput("radius history is empty".into()));
    }
    spec.validate()?;
    if c_start.grid != spec.grid {
        return Err(Error::InvalidInput(
            "starting concentration grid does not match the reservoir grid".into(),
        ));
    }
    let mut history = Vec::with_capacity(r_history.len());
    history.push(c_start.clone());
    for k in 1..r_history.len() {
        let (c, _) = step_diffusion_with_source(
            &history[k - 1],
            &r_history[k - 1],
            &r_history[k],
            dt,
            table,
            spec,
            alpha_c,
            None,
            params,
        )
        .map_err(|e| prefix_step(e, k))?;
        history.push(c);
    }
    Ok(history)
}

fn prefix_step(e: Error, step: usize) -> Error {
    match e {
        Error::InvalidInput(s) => Error::InvalidInput(format!("transport step {step}: {s}")),
        Error::Numerical(s) => Error::Numerical(format!("transport step {step}: {s}")),
        Error::NoConvergence { context, iterations, residual } => Error::NoConvergence {
            context: format!("transport step {step}: {context}"),
            iterations,
            residual,
        },
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::GridSpec;
    use crate::reservoir::AxisProfile;
    use crate::test_util::shared_table;
    use std::f64::consts::PI;

    fn spec_with(c0: AxisProfile, n: usize) -> ReservoirSpec {
        ReservoirSpec::new(GridSpec::box_cube(n).unwrap(), AxisProfile::Constant(1.0), c0).unwrap()
    }

    #[test]
    fn any_well_profile_is_a_steady_state_while_the_radius_is_frozen() {
        let table = shared_table();
        let spec = spec_with(AxisProfile::Linear { axis: 0, lo: 0.2, hi: 0.8 }, 8);
        let r = ScalarField::from_fn(spec.grid, |x| 0.3 + 0.05 * (x[1] + 0.5));
        let hist = vec![r.clone(), r.clone(), r.clone(), r];
        let cs = run_diffusion(&hist, &spec, table, 0.7, 0.05, &TransportParams::default())
            .unwrap();
        let c0 = spec.c0_field();
        for c in &cs {
            assert_eq!(c.data, c0.data);
        }
    }

    #[test]
    fn step_balances_stored_mass_against_well_influx() {
        let table = shared_table();
        let spec = spec_with(AxisProfile::Constant(0.5), 10);
        let r_old = ScalarField::from_fn(spec.grid, |x| 0.35 + 0.05 * (x[0] + 0.5));
        let mut r_new = r_old.clone();
        for v in &mut r_new.data {
            *v -= 0.01;
        }
        let c_old = ScalarField::constant(spec.grid, 0.5);
        let params = TransportParams { tol: 1e-14, ..TransportParams::default() };
        let (_, rep) = step_diffusion_with_source(
            &c_old, &r_old, &r_new, 0.05, table, &spec, 1.0, None, &params,
        )
        .unwrap();
        assert!(rep.balance_defect < 1e-12, "defect {:.3e}", rep.balance_defect);
        assert!(rep.mass_change.abs() > 0.0);
    }

    #[test]
    fn dissolution_dilutes_the_acid_within_bounds() {
        let table = shared_table();
        let spec = spec_with(AxisProfile::Constant(1.0), 10);
        let r_old = ScalarField::constant(spec.grid, 0.35);
        let r_new = ScalarField::constant(spec.grid, 0.34);
        let c_old = ScalarField::constant(spec.grid, 1.0);
        let c = step_diffusion(&c_old, &r_old, &r_new, 0.05, table, &spec, 1.0).unwrap();
        assert!(c.max() <= 1.0 && c.min() >= 0.0);
        let mid = spec.grid.index([5, 5, 5]);
        assert!(c.data[mid] < 0.999, "interior c = {}", c.data[mid]);
    }

    #[test]
    fn manufactured_steady_transport_converges_at_second_order() {
        let table = shared_table();
        let e = table.interpolate(0.3).unwrap();
        let (d1, d2) = (e.b_c[0][0], e.b_c[1][1]);
        let alpha = 0.8;
        // v* vanishes on the well walls (where the step pins c = c⁰) and has
        // zero normal derivative on the no-flux walls.
        let vstar = |x: [f64; 3]| (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).cos();
        let mut errs = Vec::new();
        for n in [8usize, 16, 32] {
            let spec = spec_with(AxisProfile::Constant(0.5), n);
            let r = ScalarField::constant(spec.grid, 0.3);
            let c_star = ScalarField::from_fn(spec.grid, |x| 0.5 + 0.4 * vstar(x));
            let src = ScalarField::from_fn(spec.grid, |x| {
                alpha * (d1 + d2) * 4.0 * PI * PI * 0.4 * vstar(x)
            });
            let params = TransportParams { tol: 1e-13, ..TransportParams::default() };
            let (c, _) = step_diffusion_with_source(
                &c_star, &r, &r, 0.1, table, &spec, alpha, Some(&src), &params,
            )
            .unwrap();
            let mut l2 = 0.0;
            for i in 0..spec.grid.cells() {
                l2 += (c.data[i] - c_star.data[i]).powi(2) * spec.grid.volume();
            }
            errs.push(l2.sqrt());
        }
        let o1 = (errs[0] / errs[1]).log2();
        let o2 = (errs[1] / errs[2]).log2();
        assert!(o1 > 1.8 && o2 > 1.8, "orders {o1:.2}, {o2:.2}; errors {errs:?}");
    }

    #[test]
    fn backward_euler_is_first_order_in_time() {
        let table = shared_table();
        let spec = spec_with(AxisProfile::Constant(0.3), 8);
        let r_at = |t: f64| ScalarField::constant(spec.grid, 0.35 - 0.08 * t);
        let run = |steps: usize| {
            let dt = 1.0 / steps as f64;
            let hist: Vec<_> = (0..=steps).map(|k| r_at(k as f64 * dt)).collect();
            run_diffusion(&hist, &spec, table, 1.0, dt, &TransportParams::default())
                .unwrap()
                .pop()
                .unwrap()
        };
        let reference = run(64);
        let errs: Vec<f64> = [4usize, 8, 16]
            .iter()
            .map(|&s| {
                let c = run(s);
                c.data
                    .iter()
                    .zip(&reference.data)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0f64, f64::max)
            })
            .collect();
        let o1 = (errs[0] / errs[1]).log2();
        let o2 = (errs[1] / errs[2]).log2();
        assert!(o1 > 0.9 && o2 > 0.9, "orders {o1:.2}, {o2:.2}; errors {errs:?}");
    }

    #[test]
    fn bad_inputs_are_rejected() {
        let table = shared_table();
        let spec = spec_with(AxisProfile::Constant(0.5), 6);
        let r = ScalarField::constant(spec.grid, 0.3);
        let c = ScalarField::constant(spec.grid, 0.5);
        let grown = ScalarField::constant(spec.grid, 0.31);
        assert!(step_diffusion(&c, &r, &grown, 0.1, table, &spec, 1.0).is_err());
        let mut bad_c = c.clone();
        bad_c.data[0] = 1.5;
        assert!(step_diffusion(&bad_c, &r, &r, 0.1, table, &spec, 1.0).is_err());
        assert!(step_diffusion(&c, &r, &r, -0.1, table, &spec, 1.0).is_err());
        assert!(step_diffusion(&c, &r, &r, 0.1, table, &spec, 0.0).is_err());
        assert!(run_diffusion(&[], &spec, table, 1.0, 0.1, &TransportParams::default()).is_err());
    }
}
