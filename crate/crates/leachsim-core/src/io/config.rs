//! Flat key = value configuration with a strict schema: every key has a
//! default, unknown or duplicate keys are errors, and validation reports
//! every violation at once instead of stopping at the first. Lines starting
//! with `#` and blank lines are ignored; values must not carry trailing
//! comments.
//!
//! Schema (defaults in parentheses):
//!
//! ```text
//! physics.theta        (0.1)    dissolution rate θ
//! physics.mu1          (1.0)    fluid viscosity μ₁
//! physics.lambda0      (1.0)    solid shear constant λ₀
//! physics.c_s          (1.0)    sound speed c_s
//! physics.alpha_c      (1.0)    acid diffusivity scale α_c
//! fields.p0_injection  (1.0)    background pressure p¹ at x₁ = −1/2
//! fields.p0_production (0.0)    background pressure p² at x₁ = +1/2
//! fields.p0_profile    (linear) linear | uniform
//! fields.c0_profile    (constant) constant | linear
//! fields.c0_value      (1.0)    used when constant; clamped to [0, 1]
//! fields.c0_axis       (x1)     x1 | x2 | x3
//! fields.c0_lo         (1.0)    value at axis = −1/2 when linear
//! fields.c0_hi         (0.0)    value at axis = +1/2 when linear
//! fields.r0_profile    (constant)
//! fields.r0_value      (0.35)
//! fields.r0_axis       (x1)
//! fields.r0_lo         (0.4)
//! fields.r0_hi         (0.3)
//! grid.reservoir_n     (16)     cells per axis of the reservoir box
//! grid.cell_n          (16)     cells per axis of the unit cell
//! table.knots          (9)      number of radius knots
//! table.r_min          (0.05)
//! table.r_max          (0.45)
//! time.t_end           (1.0)
//! time.dt              (0.05)
//! time.t_slab          (min(t_end, 0.5/theta) when absent)
//! tolerances.linear    (1e-10)  macro linear-solver tolerance
//! tolerances.picard    (1e-9)   fixed-point tolerance
//! tolerances.max_iter  (25)     fixed-point iteration cap
//! head_bc.enabled      (false)  non-standard Dirichlet head data
//! head_bc.injection    (0.0)
//! head_bc.production   (0.0)
//! ```

use std::collections::HashMap;
use std::path::Path;

use crate::cell::RadiusBounds;
use crate::coupling::{default_slab_length, PicardParams, RunParams};
use crate::error::{Error, Result};
use crate::numerics::GridSpec;
use crate::reservoir::{AxisProfile, HeadParams, LameParams, ReservoirSpec, TransportParams};
use crate::table::CellPhysics;

/// Constant-or-linear profile as spelled in the config file; kept raw (all
/// keys, used or not) so an echoed config reloads to an equal value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProfileSpec {
    pub linear: bool,
    pub value: f64,
    pub axis: usize,
    pub lo: f64,
    pub hi: f64,
}

impl ProfileSpec {
    pub fn profile(&self) -> AxisProfile {
        if self.linear {
            AxisProfile::Linear { axis: self.axis, lo: self.lo, hi: self.hi }
        } else {
            AxisProfile::Constant(self.value)
        }
    }

    fn range(&self) -> (f64, f64) {
        self.profile().range()
    }

    fn clamp(&mut self, lo: f64, hi: f64) {
        self.value = self.value.clamp(lo, hi);
        self.lo = self.lo.clamp(lo, hi);
        self.hi = self.hi.clamp(lo, hi);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationConfig {
    pub theta: f64,
    pub mu1: f64,
    pub lambda0: f64,
    pub c_s: f64,
    pub alpha_c: f64,
    pub p0_injection: f64,
    pub p0_production: f64,
    pub p0_uniform: bool,
    pub c0: ProfileSpec,
    pub r0: ProfileSpec,
    pub reservoir_n: usize,
    pub cell_n: usize,
    pub knots: usize,
    pub r_min: f64,
    pub r_max: f64,
    pub t_end: f64,
    pub dt: f64,
    pub t_slab: f64,
    pub linear_tol: f64,
    pub picard_tol: f64,
    pub max_iter: usize,
    pub head_enabled: bool,
    pub head_injection: f64,
    pub head_production: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            theta: 0.1,
            mu1: 1.0,
            lambda0: 1.0,
            c_s: 1.0,
            alpha_c: 1.0,
            p0_injection: 1.0,
            p0_production: 0.0,
            p0_uniform: false,
            c0: ProfileSpec { linear: false, value: 1.0, axis: 0, lo: 1.0, hi: 0.0 },
            r0: ProfileSpec { linear: false, value: 0.35, axis: 0, lo: 0.4, hi: 0.3 },
            reservoir_n: 16,
            cell_n: 16,
            knots: 9,
            r_min: 0.05,
            r_max: 0.45,
            t_end: 1.0,
            dt: 0.05,
            t_slab: default_slab_length(1.0, 0.1),
            linear_tol: 1e-10,
            picard_tol: 1e-9,
            max_iter: 25,
            head_enabled: false,
            head_injection: 0.0,
            head_production: 0.0,
        }
    }
}

impl SimulationConfig {
    /// Background pressure profile p⁰.
    pub fn p0_profile(&self) -> AxisProfile {
        if self.p0_uniform {
            AxisProfile::Constant(self.p0_injection)
        } else {
            AxisProfile::Linear { axis: 0, lo: self.p0_injection, hi: self.p0_production }
        }
    }

    pub fn reservoir_spec(&self) -> Result<ReservoirSpec> {
        ReservoirSpec::new(
            GridSpec::box_cube(self.reservoir_n)?,
            self.p0_profile(),
            self.c0.profile(),
        )
    }

    pub fn cell_physics(&self) -> CellPhysics {
        CellPhysics { mu1: self.mu1, lambda0: self.lambda0, c_s: self.c_s }
    }

    pub fn radius_bounds(&self) -> RadiusBounds {
        RadiusBounds { r_min: self.r_min, r_max: self.r_max, theta: self.theta, m0: 1.0 }
    }

    pub fn run_params(&self) -> RunParams {
        RunParams {
            theta: self.theta,
            alpha_c: self.alpha_c,
            mu1: self.mu1,
            lambda0: self.lambda0,
            c_s: self.c_s,
            r0: self.r0.profile(),
            t_end: self.t_end,
            dt: self.dt,
            t_slab: self.t_slab,
            head_data: if self.head_enabled {
                (self.head_injection, self.head_production)
            } else {
                (0.0, 0.0)
            },
            picard: PicardParams {
                tol: self.picard_tol,
                max_iter: self.max_iter,
                transport: TransportParams { tol: self.linear_tol, ..TransportParams::default() },
            },
            head: HeadParams { tol: self.linear_tol, ..HeadParams::default() },
            lame: LameParams { tol: self.linear_tol, ..LameParams::default() },
        }
    }

    /// Render the full schema, every key explicit. Reloading the text yields
    /// an equal config, so echoed configs are self-contained.
    pub fn to_text(&self) -> String {
        let axis = |a: usize| format!("x{}", a + 1);
        let profile = |linear: bool| if linear { "linear" } else { "constant" };
        let mut s = String::new();
        s.push_str("# leaching simulator configuration\n");
        s.push_str(&format!("physics.theta = {}\n", self.theta));
        s.push_str(&format!("physics.mu1 = {}\n", self.mu1));
        s.push_str(&format!("physics.lambda0 = {}\n", self.lambda0));
        s.push_str(&format!("physics.c_s = {}\n", self.c_s));
        s.push_str(&format!("physics.alpha_c = {}\n", self.alpha_c));
        s.push_str(&format!("fields.p0_injection = {}\n", self.p0_injection));
        s.push_str(&format!("fields.p0_production = {}\n", self.p0_production));
        s.push_str(&format!(
            "fields.p0_profile = {}\n",
            if self.p0_uniform { "uniform" } else { "linear" }
        ));
        s.push_str(&format!("fields.c0_profile = {}\n", profile(self.c0.linear)));
        s.push_str(&format!("fields.c0_value = {}\n", self.c0.value));
        s.push_str(&format!("fields.c0_axis = {}\n", axis(self.c0.axis)));
        s.push_str(&format!("fields.c0_lo = {}\n", self.c0.lo));
        s.push_str(&format!("fields.c0_hi = {}\n", self.c0.hi));
        s.push_str(&format!("fields.r0_profile = {}\n", profile(self.r0.linear)));
        s.push_str(&format!("fields.r0_value = {}\n", self.r0.value));
        s.push_str(&format!("fields.r0_axis = {}\n", axis(self.r0.axis)));
        s.push_str(&format!("fields.r0_lo = {}\n", self.r0.lo));
        s.push_str(&format!("fields.r0_hi = {}\n", self.r0.hi));
        s.push_str(&format!("grid.reservoir_n = {}\n", self.reservoir_n));
        s.push_str(&format!("grid.cell_n = {}\n", self.cell_n));
        s.push_str(&format!("table.knots = {}\n", self.knots));
        s.push_str(&format!("table.r_min = {}\n", self.r_min));
        s.push_str(&format!("table.r_max = {}\n", self.r_max));
        s.push_str(&format!("time.t_end = {}\n", self.t_end));
        s.push_str(&format!("time.dt = {}\n", self.dt));
        s.push_str(&format!("time.t_slab = {}\n", self.t_slab));
        s.push_str(&format!("tolerances.linear = {}\n", self.linear_tol));
        s.push_str(&format!("tolerances.picard = {}\n", self.picard_tol));
        s.push_str(&format!("tolerances.max_iter = {}\n", self.max_iter));
        s.push_str(&format!("head_bc.enabled = {}\n", self.head_enabled));
        s.push_str(&format!("head_bc.injection = {}\n", self.head_injection));
        s.push_str(&format!("head_bc.production = {}\n", self.head_production));
        s
    }

    /// Every constraint, all violations reported together.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        for (key, v) in [
            ("physics.theta", self.theta),
            ("physics.mu1", self.mu1),
            ("physics.lambda0", self.lambda0),
            ("physics.c_s", self.c_s),
            ("physics.alpha_c", self.alpha_c),
            ("time.dt", self.dt),
            ("time.t_slab", self.t_slab),
            ("tolerances.linear", self.linear_tol),
            ("tolerances.picard", self.picard_tol),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                problems.push(format!("{key} = {v} must be a positive finite number"));
            }
        }
        for (key, v) in [
            ("fields.p0_injection", self.p0_injection),
            ("fields.p0_production", self.p0_production),
            ("head_bc.injection", self.head_injection),
            ("head_bc.production", self.head_production),
        ] {
            if !v.is_finite() {
                problems.push(format!("{key} = {v} must be finite"));
            }
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            problems.push(format!("time.t_end = {} must be finite and >= 0", self.t_end));
        }
        if self.p0_uniform && self.p0_injection != self.p0_production {
            problems.push(
                "fields.p0_production must equal fields.p0_injection when \
                 fields.p0_profile = uniform"
                    .into(),
            );
        }
        if self.reservoir_n < 2 {
            problems.push(format!(
                "grid.reservoir_n = {} must be at least 2",
                self.reservoir_n
            ));
        }
        if self.cell_n < 16 {
            problems.push(format!("grid.cell_n = {} must be at least 16", self.cell_n));
        }
        if self.knots < 5 {
            problems.push(format!("table.knots = {} must be at least 5", self.knots));
        }
        if self.max_iter == 0 {
            problems.push("tolerances.max_iter must be at least 1".into());
        }
        match self.radius_bounds().validate() {
            Err(Error::Validation(items)) => {
                problems.extend(items.into_iter().map(|i| format!("table bounds: {i}")))
            }
            Err(e) => problems.push(format!("table bounds: {e}")),
            Ok(()) => {}
        }
        if self.t_end > 0.0 && self.dt > 0.0 && self.t_slab > 0.0 {
            if self.dt > self.t_slab {
                problems.push(format!(
                    "time.dt = {} exceeds time.t_slab = {}",
                    self.dt, self.t_slab
                ));
            }
            if self.t_slab > self.t_end * (1.0 + 1e-9) {
                problems.push(format!(
                    "time.t_slab = {} exceeds time.t_end = {}",
                    self.t_slab, self.t_end
                ));
            }
        }
        let (clo, chi) = self.c0.range();
        if clo < 0.0 || chi > 1.0 {
            problems.push(format!(
                "fields.c0 range [{clo}, {chi}] leaves [0, 1]"
            ));
        }
        let (rlo, rhi) = self.r0.range();
        if rlo < self.r_min || rhi > self.r_max {
            problems.push(format!(
                "fields.r0 range [{rlo}, {rhi}] leaves [table.r_min, table.r_max] = [{}, {}]",
                self.r_min, self.r_max
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }
}

pub fn load_config(path: &Path) -> Result<SimulationConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

/// Parse and validate a config document; all problems (syntax, unknown
/// keys, bad values, constraint violations) are aggregated.
pub fn parse_config(text: &str) -> Result<SimulationConfig> {
    let mut map: HashMap<String, String> = HashMap::new();
    let mut problems = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            problems.push(format!("line {}: expected `key = value`, got `{line}`", no + 1));
            continue;
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if map.insert(key.clone(), value).is_some() {
            problems.push(format!("line {}: duplicate key `{key}`", no + 1));
        }
    }

    let mut rd = Reader { map, problems };
    let mut cfg = SimulationConfig {
        theta: rd.f64("physics.theta", 0.1),
        mu1: rd.f64("physics.mu1", 1.0),
        lambda0: rd.f64("physics.lambda0", 1.0),
        c_s: rd.f64("physics.c_s", 1.0),
        alpha_c: rd.f64("physics.alpha_c", 1.0),
        p0_injection: rd.f64("fields.p0_injection", 1.0),
        p0_production: rd.f64("fields.p0_production", 0.0),
        p0_uniform: rd.choice("fields.p0_profile", &["linear", "uniform"], "linear") == "uniform",
        c0: ProfileSpec {
            linear: rd.choice("fields.c0_profile", &["constant", "linear"], "constant")
                == "linear",
            value: rd.f64("fields.c0_value", 1.0),
            axis: rd.axis("fields.c0_axis"),
            lo: rd.f64("fields.c0_lo", 1.0),
            hi: rd.f64("fields.c0_hi", 0.0),
        },
        r0: ProfileSpec {
            linear: rd.choice("fields.r0_profile", &["constant", "linear"], "constant")
                == "linear",
            value: rd.f64("fields.r0_value", 0.35),
            axis: rd.axis("fields.r0_axis"),
            lo: rd.f64("fields.r0_lo", 0.4),
            hi: rd.f64("fields.r0_hi", 0.3),
        },
        reservoir_n: rd.usize("grid.reservoir_n", 16),
        cell_n: rd.usize("grid.cell_n", 16),
        knots: rd.usize("table.knots", 9),
        r_min: rd.f64("table.r_min", 0.05),
        r_max: rd.f64("table.r_max", 0.45),
        t_end: rd.f64("time.t_end", 1.0),
        dt: rd.f64("time.dt", 0.05),
        t_slab: f64::NAN,
        linear_tol: rd.f64("tolerances.linear", 1e-10),
        picard_tol: rd.f64("tolerances.picard", 1e-9),
        max_iter: rd.usize("tolerances.max_iter", 25),
        head_enabled: rd.bool("head_bc.enabled", false),
        head_injection: rd.f64("head_bc.injection", 0.0),
        head_production: rd.f64("head_bc.production", 0.0),
    };
    cfg.t_slab = match rd.opt_f64("time.t_slab") {
        Some(v) => v,
        None if cfg.theta > 0.0 && cfg.t_end > 0.0 => {
            default_slab_length(cfg.t_end, cfg.theta)
        }
        None => cfg.t_end.max(cfg.dt),
    };
    // The inlet concentration is clamped, not rejected: the well data is
    // a fraction by definition.
    cfg.c0.clamp(0.0, 1.0);

    let mut problems = rd.finish();
    if let Err(Error::Validation(more)) = cfg.validate() {
        problems.extend(more);
    }
    if problems.is_empty() {
        Ok(cfg)
    } else {
        Err(Error::Validation(problems))
    }
}

/// Schema-driven key consumption: every getter removes its key, so whatever
/// is left at the end is unknown.
struct Reader {
    map: HashMap<String, String>,
    problems: Vec<String>,
}

impl Reader {
    fn take(&mut self, key: &str) -> Option<String> {
        self.map.remove(key)
    }

    fn f64(&mut self, key: &str, default: f64) -> f64 {
        match self.take(key) {
            None => default,
            Some(v) => v.parse().unwrap_or_else(|_| {
                self.problems.push(format!("{key}: cannot parse `{v}` as a number"));
                default
            }),
        }
    }

    fn opt_f64(&mut self, key: &str) -> Option<f64> {
        let v = self.take(key)?;
        match v.parse() {
            Ok(x) => Some(x),
            Err(_) => {
                self.problems.push(format!("{key}: cannot parse `{v}` as a number"));
                None
            }
        }
    }

    fn usize(&mut self, key: &str, default: usize) -> usize {
        match self.take(key) {
            None => default,
            Some(v) => v.parse().unwrap_or_else(|_| {
                self.problems.push(format!("{key}: cannot parse `{v}` as a positive integer"));
                default
            }),
        }
    }

    fn bool(&mut self, key: &str, default: bool) -> bool {
        match self.take(key).as_deref() {
            None => default,
            Some("true") => true,
            Some("false") => false,
            Some(v) => {
                self.problems.push(format!("{key}: expected true or false, got `{v}`"));
                default
            }
        }
    }

    fn choice(&mut self, key: &str, options: &[&str], default: &str) -> String {
        match self.take(key) {
            None => default.to_string(),
            Some(v) if options.contains(&v.as_str()) => v,
            Some(v) => {
                self.problems.push(format!(
                    "{key}: expected one of {options:?}, got `{v}`"
                ));
                default.to_string()
            }
        }
    }

    fn axis(&mut self, key: &str) -> usize {
        match self.take(key).as_deref() {
            None => 0,
            Some("x1") => 0,
            Some("x2") => 1,
            Some("x3") => 2,
            Some(v) => {
                self.problems.push(format!("{key}: expected x1, x2 or x3, got `{v}`"));
                0
            }
        }
    }

    fn finish(mut self) -> Vec<String> {
        let mut unknown: Vec<_> = self.map.keys().cloned().collect();
        unknown.sort();
        for key in unknown {
            self.problems.push(format!("unknown key `{key}`"));
        }
        self.problems
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_yields_the_documented_defaults() {
        let cfg = parse_config("").unwrap();
        assert_eq!(cfg, SimulationConfig::default());
        assert_eq!(cfg.t_slab, 1.0, "min(t_end, 0.5/theta) with theta = 0.1");
    }

    #[test]
    fn echo_round_trips_to_an_equal_config() {
        let mut cfg = SimulationConfig::default();
        cfg.theta = 0.3;
        cfg.t_slab = 0.2;
        cfg.t_end = 0.4;
        cfg.dt = 0.05;
        cfg.r0 = ProfileSpec { linear: true, value: 0.35, axis: 2, lo: 0.4, hi: 0.3 };
        let text = cfg.to_text();
        let back = parse_config(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_text(), text, "echo of the echo is bit-identical");
    }

    #[test]
    fn negative_rate_names_the_key() {
        let err = parse_config("physics.theta = -1\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("physics.theta"), "{msg}");
    }

    #[test]
    fn slab_shorter_than_a_step_names_both_keys() {
        let err = parse_config("time.dt = 0.2\ntime.t_slab = 0.1\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("time.dt") && msg.contains("time.t_slab"), "{msg}");
    }

    #[test]
    fn unknown_and_duplicate_keys_are_rejected_together() {
        let text = "physics.theta = 0.2\nphysics.theta = 0.3\nnot.a.key = 1\nbroken line\n";
        let err = parse_config(text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("duplicate key `physics.theta`"), "{msg}");
        assert!(msg.contains("unknown key `not.a.key`"), "{msg}");
        assert!(msg.contains("line 4"), "{msg}");
    }

    #[test]
    fn all_violations_are_reported_not_just_the_first() {
        let text = "physics.theta = -1\nphysics.mu1 = 0\ngrid.reservoir_n = 1\n";
        match parse_config(text).unwrap_err() {
            Error::Validation(list) => {
                assert!(list.len() >= 3, "expected three problems, got {list:?}");
            }
            other => panic!("expected Validation, got {other}"),
        }
    }

    #[test]
    fn inlet_concentration_is_clamped_into_the_unit_interval() {
        let cfg = parse_config("fields.c0_value = 1.5\n").unwrap();
        assert_eq!(cfg.c0.value, 1.0);
        let cfg = parse_config("fields.c0_profile = linear\nfields.c0_lo = -0.2\n").unwrap();
        assert_eq!(cfg.c0.lo, 0.0);
    }

    #[test]
    fn initial_radius_must_sit_inside_the_table_range() {
        let err = parse_config("fields.r0_value = 0.49\n").unwrap_err();
        assert!(err.to_string().contains("table.r_max"), "{err}");
    }

    #[test]
    fn conversions_feed_the_solver_types() {
        let text = "physics.theta = 0.25\ntime.t_end = 0.4\ntime.dt = 0.05\ntime.t_slab = 0.2\n\
                    tolerances.linear = 1e-11\nhead_bc.enabled = true\nhead_bc.injection = 2.5\n";
        let cfg = parse_config(text).unwrap();
        let spec = cfg.reservoir_spec().unwrap();
        assert_eq!(spec.grid.n, [16, 16, 16]);
        let rp = cfg.run_params();
        assert_eq!(rp.theta, 0.25);
        assert_eq!(rp.t_slab, 0.2);
        assert_eq!(rp.head_data, (2.5, 0.0));
        assert_eq!(rp.head.tol, 1e-11);
        assert_eq!(rp.picard.transport.tol, 1e-11);
        assert_eq!(cfg.radius_bounds().theta, 0.25);
        assert_eq!(cfg.cell_physics().mu1, 1.0);
    }
}
