//! Micro–macro coupling. The grain radius is slaved to the acid history
//! through the dissolution law
//!
//!   r(x, t) = max(0, r₀(x) − θ ∫₀ᵗ c(x, s) ds),
//!
//! while the acid transport coefficients depend on the radius — a fixed
//! point per time slab. `picard_slab` resolves it by alternating transport
//! solves with dissolution updates; the map is a contraction when θ·T_slab
//! is small, so `default_slab_length` caps the slab at 0.5/θ. Slabs chain
//! through their end states: each slab starts from the previous slab's
//! final radius and concentration. `run_simulation` drives the whole march
//! and evaluates the stationary head and displacement fields at every slab
//! boundary.

use crate::error::{Error, Result};
use crate::numerics::{neumaier_sum, GridSpec, ScalarField};
use crate::reservoir::{
    check_radius_field, run_diffusion_from, solve_lame_with, solve_pressure_head_with_source,
    AxisProfile, HeadParams, LameParams, MacroState, ReservoirSpec, TransportParams,
};
use crate::table::CoefficientTable;

/// Radius history over one time window: `levels[k]` holds the grain radius
/// in every reservoir cell at time offset k·dt from the window start.
#[derive(Clone, Debug, PartialEq)]
pub struct RadiusField {
    pub grid: GridSpec,
    pub levels: Vec<ScalarField>,
}

impl RadiusField {
    /// Constant-in-time extension of a single field: `steps + 1` identical
    /// levels. This is the standard Picard starting guess.
    pub fn constant_in_time(r0: ScalarField, steps: usize) -> Result<Self> {
        let grid = r0.grid;
        let field = RadiusField { grid, levels: vec![r0; steps + 1] };
        field.validate()?;
        Ok(field)
    }

    pub fn from_levels(levels: Vec<ScalarField>) -> Result<Self> {
        let grid = match levels.first() {
            Some(f) => f.grid,
            None => return Err(Error::InvalidInput("radius history has no levels".into())),
        };
        let field = RadiusField { grid, levels };
        field.validate()?;
        Ok(field)
    }

    /// Every level lives on the same grid with values in [0, 1/2], and the
    /// radius never grows in time (dissolution only removes material).
    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(Error::InvalidInput("radius history has no levels".into()));
        }
        for level in &self.levels {
            check_radius_field(level, &self.grid)?;
        }
        for k in 1..self.levels.len() {
            for (c, (&a, &b)) in
                self.levels[k - 1].data.iter().zip(&self.levels[k].data).enumerate()
            {
                if b > a + 1e-12 {
                    return Err(Error::InvalidInput(format!(
                        "radius grows in time at cell {c}, level {k}: {a} -> {b}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Initial level.
    pub fn r0(&self) -> &ScalarField {
        &self.levels[0]
    }

    /// Final level.
    pub fn end(&self) -> &ScalarField {
        &self.levels[self.levels.len() - 1]
    }

    /// Number of time steps spanned (levels − 1).
    pub fn steps(&self) -> usize {
        self.levels.len() - 1
    }

    /// Sup-norm distance across all levels and cells; the Picard metric.
    fn sup_distance(&self, other: &RadiusField) -> f64 {
        debug_assert_eq!(self.levels.len(), other.levels.len());
        let mut d: f64 = 0.0;
        for (a, b) in self.levels.iter().zip(&other.levels) {
            for (&x, &y) in a.data.iter().zip(&b.data) {
                d = d.max((x - y).abs());
            }
        }
        d
    }
}

/// Dissolution update: shrink `r0` by θ times the cumulative trapezoid
/// integral of the concentration history (uniform step `dt`), clamping at
/// zero once a grain is fully dissolved. One output level per input level.
pub fn apply_dissolution(
    r0: &ScalarField,
    c_history: &[ScalarField],
    theta: f64,
    dt: f64,
) -> Result<RadiusField> {
    if !(theta > 0.0) || !theta.is_finite() {
        return Err(Error::InvalidInput(format!("dissolution rate theta = {theta} must be > 0")));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidInput(format!("time step dt = {dt} must be > 0")));
    }
    if c_history.is_empty() {
        return Err(Error::InvalidInput("concentration history has no levels".into()));
    }
    check_radius_field(r0, &r0.grid)?;
    for (k, c) in c_history.iter().enumerate() {
        if c.grid != r0.grid {
            return Err(Error::InvalidInput(format!(
                "concentration level {k} grid does not match the radius grid"
            )));
        }
        for (cell, &v) in c.data.iter().enumerate() {
            if !v.is_finite() || !(-1e-12..=1.0 + 1e-12).contains(&v) {
                return Err(Error::InvalidInput(format!(
                    "concentration {v} at cell {cell}, level {k} leaves [0, 1]"
                )));
            }
        }
    }

    let n = r0.data.len();
    let mut integral = vec![0.0f64; n];
    let mut levels = Vec::with_capacity(c_history.len());
    levels.push(r0.clone());
    for k in 1..c_history.len() {
        let (prev, next) = (&c_history[k - 1].data, &c_history[k].data);
        let mut level = r0.clone();
        for cell in 0..n {
            integral[cell] += 0.5 * dt * (prev[cell] + next[cell]);
            level.data[cell] = (r0.data[cell] - theta * integral[cell]).max(0.0);
        }
        levels.push(level);
    }
    RadiusField::from_levels(levels)
}

/// Dissolved solid volume per unit bulk volume between two radius fields:
/// (4π/3)·mean(r₀³ − r³). Errors if the "later" field is anywhere larger.
pub fn dissolved_volume(r0: &ScalarField, r: &ScalarField) -> Result<f64> {
    if r0.grid != r.grid {
        return Err(Error::InvalidInput("radius fields live on different grids".into()));
    }
    for (cell, (&a, &b)) in r0.data.iter().zip(&r.data).enumerate() {
        if b > a + 1e-12 {
            return Err(Error::Numerical(format!(
                "radius grew from {a} to {b} at cell {cell}; dissolution cannot add material"
            )));
        }
    }
    let sum = neumaier_sum(r0.data.iter().zip(&r.data).map(|(&a, &b)| a * a * a - b * b * b));
    Ok(4.0 * std::f64::consts::PI / 3.0 * sum / r0.data.len() as f64)
}

/// Conservative slab-length cap: the fixed-point map contracts when θ·T_slab
/// is order one-half or less, so default to min(T, 0.5/θ).
pub fn default_slab_length(t_end: f64, theta: f64) -> f64 {
    t_end.min(0.5 / theta)
}

#[derive(Clone, Debug)]
pub struct PicardParams {
    /// Sup-norm tolerance on successive radius iterates.
    pub tol: f64,
    pub max_iter: usize,
    pub transport: TransportParams,
}

impl Default for PicardParams {
    fn default() -> Self {
        PicardParams { tol: 1e-9, max_iter: 25, transport: TransportParams::default() }
    }
}

/// Convergence record for one slab.
#[derive(Clone, Debug)]
pub struct PicardReport {
    pub slab: usize,
    pub iterations: usize,
    /// Sup-norm differences between successive radius iterates.
    pub diffs: Vec<f64>,
    /// Successive-difference ratios diffs[k+1]/diffs[k]; the measured
    /// contraction factor.
    pub ratios: Vec<f64>,
    /// ‖r − F(c(r))‖_∞ for the returned pair.
    pub residual: f64,
    pub converged: bool,
}

#[derive(Debug)]
pub struct PicardOutcome {
    pub radius: RadiusField,
    /// Transport history consistent with the returned radius.
    pub c_history: Vec<ScalarField>,
    pub report: PicardReport,
}

/// Resolve the radius–concentration fixed point on one slab.
///
/// Starting from `r_guess` (usually the constant-in-time extension of the
/// slab's initial radius), alternate a full transport solve from `c_start`
/// with a dissolution update of the slab-initial radius until successive
/// radius iterates agree to `tol` in sup norm. On success the returned
/// history is recomputed from the accepted radius, so the pair satisfies
/// ‖r − F(c(r))‖_∞ ≤ tol by contraction. Iteration counts, differences and
/// ratios are reported; if the differences stop decreasing the slab is too
/// long for the map to contract and the error says so.
#[allow(clippy::too_many_arguments)]
pub fn picard_slab(
    c_start: &ScalarField,
    r_guess: &RadiusField,
    spec: &ReservoirSpec,
    table: &CoefficientTable,
    theta: f64,
    alpha_c: f64,
    dt: f64,
    params: &PicardParams,
    slab: usize,
) -> Result<PicardOutcome> {
    spec.validate()?;
    r_guess.validate().map_err(|e| prefix_slab(e, slab))?;
    if r_guess.grid != spec.grid {
        return Err(Error::InvalidInput(format!(
            "slab {slab}: radius guess grid does not match the reservoir grid"
        )));
    }
    if r_guess.steps() == 0 {
        return Err(Error::InvalidInput(format!("slab {slab}: radius guess spans zero steps")));
    }
    if !(params.tol > 0.0) || params.max_iter == 0 {
        return Err(Error::InvalidInput(
            "picard tolerance must be > 0 and max_iter at least 1".into(),
        ));
    }

    let r0 = r_guess.r0().clone();
    let mut current = r_guess.clone();
    let mut diffs: Vec<f64> = Vec::new();
    let mut ratios: Vec<f64> = Vec::new();

    for it in 1..=params.max_iter {
        let c = run_diffusion_from(
            c_start,
            &current.levels,
            spec,
            table,
            alpha_c,
            dt,
            &params.transport,
        )
        .map_err(|e| prefix_slab(e, slab))?;
        let next = apply_dissolution(&r0, &c, theta, dt).map_err(|e| prefix_slab(e, slab))?;
        let diff = next.sup_distance(&current);
        if let Some(&prev) = diffs.last() {
            ratios.push(if prev > 0.0 { diff / prev } else { 0.0 });
        }
        diffs.push(diff);
        current = next;

        if diff <= params.tol {
            let c_final = run_diffusion_from(
                c_start,
                &current.levels,
                spec,
                table,
                alpha_c,
                dt,
                &params.transport,
            )
            .map_err(|e| prefix_slab(e, slab))?;
            let r_check =
                apply_dissolution(&r0, &c_final, theta, dt).map_err(|e| prefix_slab(e, slab))?;
            let residual = r_check.sup_distance(&current);
            return Ok(PicardOutcome {
                radius: current,
                c_history: c_final,
                report: PicardReport {
                    slab,
                    iterations: it,
                    diffs,
                    ratios,
                    residual,
                    converged: true,
                },
            });
        }

        let k = diffs.len();
        if k >= 3 && diffs[k - 1] > diffs[k - 2] && diffs[k - 2] > diffs[k - 3] {
            return Err(Error::NoConvergence {
                context: format!(
                    "picard slab {slab}: iterate differences grew twice in a row \
                     ({:.3e}, {:.3e}, {:.3e}); the fixed-point map is not contracting — \
                     shorten the slab",
                    diffs[k - 3],
                    diffs[k - 2],
                    diffs[k - 1]
                ),
                iterations: it,
                residual: diff,
            });
        }
    }

    let last = *diffs.last().unwrap();
    Err(Error::NoConvergence {
        context: format!(
            "picard slab {slab}: {} iterates without reaching tol = {:.3e} \
             (last difference {last:.3e}); shorten the slab or raise max_iter",
            params.max_iter, params.tol
        ),
        iterations: params.max_iter,
        residual: last,
    })
}

fn prefix_slab(e: Error, slab: usize) -> Error {
    match e {
        Error::InvalidInput(s) => Error::InvalidInput(format!("slab {slab}: {s}")),
        Error::Numerical(s) => Error::Numerical(format!("slab {slab}: {s}")),
        Error::NoConvergence { context, iterations, residual } => Error::NoConvergence {
            context: format!("slab {slab}: {context}"),
            iterations,
            residual,
        },
        other => other,
    }
}

/// Full-run parameters. The physics constants must match the ones the table
/// was built with; the solvers refuse silently inconsistent inputs because
/// the tabulated tensors cannot be rescaled after the fact.
#[derive(Clone, Debug)]
pub struct RunParams {
    /// Dissolution rate θ.
    pub theta: f64,
    /// Acid diffusivity scale α_c.
    pub alpha_c: f64,
    /// Fluid viscosity μ₁.
    pub mu1: f64,
    /// Solid shear constant λ₀.
    pub lambda0: f64,
    /// Sound speed c_s.
    pub c_s: f64,
    /// Initial grain radius profile, sampled at cell centers.
    pub r0: AxisProfile,
    pub t_end: f64,
    pub dt: f64,
    pub t_slab: f64,
    /// Dirichlet head data on the injection / production walls. The
    /// standard drive is (0, 0): the linear background pressure p⁰ carries
    /// the wells and the head is its correction.
    pub head_data: (f64, f64),
    pub picard: PicardParams,
    pub head: HeadParams,
    pub lame: LameParams,
}

impl RunParams {
    /// Sensible defaults for everything but the schedule: θ and the clock
    /// are the caller's problem.
    pub fn new(theta: f64, t_end: f64, dt: f64) -> Self {
        RunParams {
            theta,
            alpha_c: 1.0,
            mu1: 1.0,
            lambda0: 1.0,
            c_s: 1.0,
            r0: AxisProfile::Constant(0.35),
            t_end,
            dt,
            t_slab: default_slab_length(t_end, theta),
            head_data: (0.0, 0.0),
            picard: PicardParams::default(),
            head: HeadParams::default(),
            lame: LameParams::default(),
        }
    }

    fn validate(&self, table: &CoefficientTable) -> Result<()> {
        let mut problems = Vec::new();
        for (name, v) in [
            ("theta", self.theta),
            ("alpha_c", self.alpha_c),
            ("mu1", self.mu1),
            ("lambda0", self.lambda0),
            ("c_s", self.c_s),
            ("dt", self.dt),
            ("t_slab", self.t_slab),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                problems.push(format!("{name} = {v} must be a positive finite number"));
            }
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            problems.push(format!("t_end = {} must be finite and >= 0", self.t_end));
        }
        if !self.head_data.0.is_finite() || !self.head_data.1.is_finite() {
            problems.push("head_data must be finite".into());
        }
        if self.t_end > 0.0 {
            if self.dt > self.t_slab {
                problems.push(format!(
                    "dt = {} exceeds t_slab = {}; every slab must hold at least one step",
                    self.dt, self.t_slab
                ));
            }
            if self.t_slab > self.t_end * (1.0 + 1e-9) {
                problems.push(format!(
                    "t_slab = {} exceeds t_end = {}",
                    self.t_slab, self.t_end
                ));
            }
        }
        for (pair, ours, theirs) in [
            ("mu1", self.mu1, table.physics.mu1),
            ("lambda0", self.lambda0, table.physics.lambda0),
            ("c_s", self.c_s, table.physics.c_s),
        ] {
            if (ours - theirs).abs() > 1e-12 * theirs.abs().max(ours.abs()) {
                problems.push(format!(
                    "{pair} = {ours} does not match the table's {theirs}; \
                     re-tabulate rather than rescale"
                ));
            }
        }
        if let Some((lo, hi)) = table.knots.first().zip(table.knots.last()) {
            let (rmin, rmax) = self.r0.range();
            if rmin < *lo - 1e-12 || rmax > *hi + 1e-12 {
                problems.push(format!(
                    "initial radius range [{rmin}, {rmax}] leaves the table range [{lo}, {hi}]"
                ));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }

    /// Steps per full slab and total steps; both durations must be integer
    /// multiples of dt (to 1e-9 relative).
    fn schedule(&self) -> Result<(usize, usize)> {
        let total = checked_steps(self.t_end, self.dt, "t_end")?;
        if total == 0 {
            return Ok((0, 0));
        }
        let slab = checked_steps(self.t_slab, self.dt, "t_slab")?;
        if slab == 0 {
            return Err(Error::InvalidInput(
                "t_slab shorter than a single time step".into(),
            ));
        }
        Ok((slab, total))
    }
}

fn checked_steps(duration: f64, dt: f64, name: &str) -> Result<usize> {
    let raw = duration / dt;
    let steps = raw.round();
    if (raw - steps).abs() > 1e-9 * raw.max(1.0) {
        return Err(Error::InvalidInput(format!(
            "{name} = {duration} is not an integer multiple of dt = {dt}"
        )));
    }
    Ok(steps as usize)
}

/// One row of the per-step time series.
#[derive(Clone, Copy, Debug)]
pub struct SeriesPoint {
    pub t: f64,
    pub r_min: f64,
    pub r_mean: f64,
    pub r_max: f64,
    pub c_min: f64,
    pub c_mean: f64,
    pub c_max: f64,
    pub porosity_mean: f64,
    /// Cumulative dissolved solid volume per unit bulk volume since t = 0.
    pub dissolved: f64,
}

#[derive(Debug)]
pub struct SimulationOutcome {
    /// Global time levels 0, dt, 2·dt, …, T.
    pub times: Vec<f64>,
    /// Radius at every time level.
    pub radius: RadiusField,
    /// Concentration at every time level.
    pub c_history: Vec<ScalarField>,
    /// Full field states at the slab boundaries (t = 0 included).
    pub states: Vec<MacroState>,
    pub reports: Vec<PicardReport>,
    pub series: Vec<SeriesPoint>,
}

/// March the coupled model from 0 to T in Picard-resolved slabs.
///
/// Each slab starts from the previous slab's final radius and concentration;
/// the stationary head and displacement problems are solved at every slab
/// boundary (including t = 0, and T even when a shorter final slab is
/// needed). T = 0 degenerates to the initial state alone.
pub fn run_simulation(
    spec: &ReservoirSpec,
    table: &CoefficientTable,
    params: &RunParams,
) -> Result<SimulationOutcome> {
    spec.validate()?;
    params.validate(table)?;
    let (steps_per_slab, total_steps) = params.schedule()?;

    let r0_field = params.r0.sample(spec.grid);
    check_radius_field(&r0_field, &spec.grid)?;
    let c0 = spec.c0_field();

    let mut times = vec![0.0];
    let mut levels = vec![r0_field.clone()];
    let mut c_history = vec![c0.clone()];
    let mut series = vec![series_point(0.0, &r0_field, &r0_field, &c0)?];
    let mut states = vec![macro_state(0.0, &r0_field, &c0, spec, table, params, 0)?];
    let mut reports = Vec::new();

    let mut slab_r = r0_field.clone();
    let mut slab_c = c0;
    let mut done = 0usize;
    let mut slab = 0usize;
    while done < total_steps {
        let steps = steps_per_slab.min(total_steps - done);
        let guess = RadiusField::constant_in_time(slab_r.clone(), steps)?;
        let out = picard_slab(
            &slab_c,
            &guess,
            spec,
            table,
            params.theta,
            params.alpha_c,
            params.dt,
            &params.picard,
            slab,
        )?;
        for k in 1..=steps {
            let t = (done + k) as f64 * params.dt;
            times.push(t);
            series.push(series_point(t, &r0_field, &out.radius.levels[k], &out.c_history[k])?);
            levels.push(out.radius.levels[k].clone());
            c_history.push(out.c_history[k].clone());
        }
        slab_r = out.radius.end().clone();
        slab_c = out.c_history[steps].clone();
        done += steps;
        slab += 1;
        reports.push(out.report);
        states.push(macro_state(done as f64 * params.dt, &slab_r, &slab_c, spec, table, params, slab)?);
    }

    Ok(SimulationOutcome {
        times,
        radius: RadiusField { grid: spec.grid, levels },
        c_history,
        states,
        reports,
        series,
    })
}

/// Solve the stationary head and displacement problems for one time level
/// and bundle every field the output layer wants.
fn macro_state(
    t: f64,
    r: &ScalarField,
    c: &ScalarField,
    spec: &ReservoirSpec,
    table: &CoefficientTable,
    params: &RunParams,
    slab: usize,
) -> Result<MacroState> {
    let (g1, g2) = params.head_data;
    let g = move |x: [f64; 3]| if x[0] < 0.0 { g1 } else { g2 };
    let head = solve_pressure_head_with_source(r, table, spec, params.mu1, &g, None, &params.head)
        .map_err(|e| prefix_stage(e, "head", slab))?;
    let lame = solve_lame_with(r, table, spec, params.lambda0, params.c_s, &params.lame)
        .map_err(|e| prefix_stage(e, "displacement", slab))?;
    let mut p_f = spec.p0_field();
    for (v, &phi) in p_f.data.iter_mut().zip(&head.phi.data) {
        *v += phi;
    }
    Ok(MacroState {
        t,
        r: r.clone(),
        c: c.clone(),
        phi: head.phi,
        p_f,
        p_s: lame.p_s,
        w_f: head.w_f,
        w_s: lame.w_s,
    })
}

fn prefix_stage(e: Error, stage: &str, slab: usize) -> Error {
    match e {
        Error::InvalidInput(s) => Error::InvalidInput(format!("slab {slab}, stage {stage}: {s}")),
        Error::Numerical(s) => Error::Numerical(format!("slab {slab}, stage {stage}: {s}")),
        Error::NoConvergence { context, iterations, residual } => Error::NoConvergence {
            context: format!("slab {slab}, stage {stage}: {context}"),
            iterations,
            residual,
        },
        other => other,
    }
}

fn series_point(t: f64, r0: &ScalarField, r: &ScalarField, c: &ScalarField) -> Result<SeriesPoint> {
    let n = r.data.len() as f64;
    let porosity_mean =
        neumaier_sum(r.data.iter().map(|&v| crate::cell::porosity(v).unwrap_or(f64::NAN))) / n;
    if !porosity_mean.is_finite() {
        return Err(Error::Numerical(format!("non-physical radius in the series at t = {t}")));
    }
    Ok(SeriesPoint {
        t,
        r_min: r.min(),
        r_mean: neumaier_sum(r.data.iter().copied()) / n,
        r_max: r.max(),
        c_min: c.min(),
        c_mean: neumaier_sum(c.data.iter().copied()) / n,
        c_max: c.max(),
        porosity_mean,
        dissolved: dissolved_volume(r0, r)?,
    })
}
