//! Macroscopic reservoir model on the unit box: pressure head and seepage
//! velocity, quasi-static solid displacement, and implicit acid transport.
//! All three consume the tabulated effective tensors through a per-cell
//! radius field.
//!
//! Boundary roles are fixed by the well layout: the x₁ = −1/2 wall is the
//! injection side (S1), x₁ = +1/2 the production side (S2), and the four
//! remaining walls (S0) are impermeable for flow/transport and clamped for
//! the solid.

pub mod diffusion;
pub mod head;
pub mod lame;

pub use diffusion::{
    run_diffusion, run_diffusion_from, step_diffusion, step_diffusion_with_source, StepReport,
    TransportParams,
};
pub use head::{solve_pressure_head, solve_pressure_head_with_source, HeadParams, HeadSolution};
pub use lame::{solve_lame, solve_lame_with, LameParams, LameSolution};

use crate::error::{Error, Result};
use crate::numerics::{GridSpec, ScalarField, VectorField};

/// Closed-form scalar data over the box: either constant or affine along one
/// axis. Enough for well-driven pressure and inlet-concentration profiles
/// while staying exactly representable in a config file.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AxisProfile {
    Constant(f64),
    /// `lo` at x_axis = −1/2, `hi` at x_axis = +1/2, affine in between.
    Linear { axis: usize, lo: f64, hi: f64 },
}

impl AxisProfile {
    pub fn eval(&self, x: [f64; 3]) -> f64 {
        match *self {
            AxisProfile::Constant(v) => v,
            AxisProfile::Linear { axis, lo, hi } => lo + (x[axis] + 0.5) * (hi - lo),
        }
    }

    /// Gradient (constant for both variants).
    pub fn gradient(&self) -> [f64; 3] {
        match *self {
            AxisProfile::Constant(_) => [0.0; 3],
            AxisProfile::Linear { axis, lo, hi } => {
                let mut g = [0.0; 3];
                g[axis] = hi - lo;
                g
            }
        }
    }

    /// Extremes over the box, used for range validation.
    pub fn range(&self) -> (f64, f64) {
        match *self {
            AxisProfile::Constant(v) => (v, v),
            AxisProfile::Linear { lo, hi, .. } => (lo.min(hi), lo.max(hi)),
        }
    }

    pub fn sample(&self, grid: GridSpec) -> ScalarField {
        ScalarField::from_fn(grid, |x| self.eval(x))
    }

    fn validate(&self, name: &str, errors: &mut Vec<String>) {
        match *self {
            AxisProfile::Constant(v) => {
                if !v.is_finite() {
                    errors.push(format!("{name}: value {v} is not finite"));
                }
            }
            AxisProfile::Linear { axis, lo, hi } => {
                if axis > 2 {
                    errors.push(format!("{name}: axis {axis} out of range 0..3"));
                }
                if !lo.is_finite() || !hi.is_finite() {
                    errors.push(format!("{name}: endpoints ({lo}, {hi}) must be finite"));
                }
            }
        }
    }
}

/// The reservoir domain and its prescribed data: grid, driving pressure p⁰
/// and well concentration c⁰.
#[derive(Clone, Debug)]
pub struct ReservoirSpec {
    pub grid: GridSpec,
    /// Driving fluid pressure p⁰ (analytic so the solid load is evaluated at
    /// quadrature points without sampling error).
    pub p0: AxisProfile,
    /// Concentration held at the wells and used as the initial state; must
    /// stay within [0, 1].
    pub c0: AxisProfile,
}

impl ReservoirSpec {
    pub fn new(grid: GridSpec, p0: AxisProfile, c0: AxisProfile) -> Result<Self> {
        let spec = ReservoirSpec { grid, p0, c0 };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let mut errors = Vec::new();
        if self.grid.periodic.iter().any(|&p| p) {
            errors.push("grid: reservoir grid must be non-periodic".into());
        }
        if self.grid.n.iter().any(|&n| n < 2) {
            errors.push(format!(
                "grid: needs at least 2 cells per axis, got {:?}",
                self.grid.n
            ));
        }
        self.p0.validate("p0", &mut errors);
        self.c0.validate("c0", &mut errors);
        let (lo, hi) = self.c0.range();
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) {
            errors.push(format!("c0: range [{lo}, {hi}] leaves [0, 1]"));
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errors))
        }
    }

    pub fn c0_field(&self) -> ScalarField {
        self.c0.sample(self.grid)
    }

    pub fn p0_field(&self) -> ScalarField {
        self.p0.sample(self.grid)
    }
}

/// Everything the model knows at one output time, all cell-centered.
#[derive(Clone, Debug, PartialEq)]
pub struct MacroState {
    pub t: f64,
    /// Grain radius field.
    pub r: ScalarField,
    /// Acid concentration.
    pub c: ScalarField,
    /// Pressure head (deviation of the pressure antiderivative from p⁰t).
    pub phi: ScalarField,
    /// Fluid pressure p⁰ + φ.
    pub p_f: ScalarField,
    /// Solid pressure p⁰ − c_s² ∇·w_s.
    pub p_s: ScalarField,
    /// Seepage velocity.
    pub w_f: VectorField,
    /// Solid displacement.
    pub w_s: VectorField,
}

/// Reject a radius field that does not live on the expected grid or carries
/// non-physical values. Shared by the three solvers.
pub(crate) fn check_radius_field(r: &ScalarField, grid: &GridSpec) -> Result<()> {
    if r.grid != *grid {
        return Err(Error::InvalidInput("radius field grid does not match the reservoir".into()));
    }
    for (c, &v) in r.data.iter().enumerate() {
        if !v.is_finite() || !(0.0..=0.5).contains(&v) {
            return Err(Error::InvalidInput(format!(
                "radius field value {v} at cell {c} leaves [0, 1/2]"
            )));
        }
    }
    Ok(())
}
