//! Shape-preserving cubic interpolation (Fritsch–Carlson derivative choice).
//!
//! The interpolant is monotone on every interval with monotone data and never
//! leaves the range of the data values, which is what the coefficient table
//! needs: interpolated permeabilities stay positive and strictly-decreasing
//! tables stay decreasing. Evaluation clamps to the knot range.

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct MonotoneCubic {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl MonotoneCubic {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::InvalidInput(format!(
                "interpolation knots/values length mismatch: {} vs {}",
                x.len(),
                y.len()
            )));
        }
        if x.len() < 2 {
            return Err(Error::InvalidInput("interpolation needs at least two knots".into()));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("interpolation data must be finite".into()));
        }
        if x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("interpolation knots must be strictly increasing".into()));
        }
        let d = fritsch_carlson(&x, &y);
        Ok(MonotoneCubic { x, y, d })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.x[0], *self.x.last().unwrap())
    }

    /// Evaluate at t, clamped to the knot range. Returns the clamped
    /// argument alongside the value so callers can flag out-of-range use.
    pub fn eval_clamped(&self, t: f64) -> (f64, f64) {
        let (a, b) = self.domain();
        let tc = t.clamp(a, b);
        (tc, self.eval_inside(tc))
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.eval_clamped(t).1
    }

    fn eval_inside(&self, t: f64) -> f64 {
        // partition_point returns the first knot > t; interval k = that − 1.
        let k = self.x.partition_point(|&xi| xi <= t).clamp(1, self.x.len() - 1) - 1;
        let h = self.x[k + 1] - self.x[k];
        let s = (t - self.x[k]) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        self.y[k] * (2.0 * s3 - 3.0 * s2 + 1.0)
            + self.d[k] * h * (s3 - 2.0 * s2 + s)
            + self.y[k + 1] * (-2.0 * s3 + 3.0 * s2)
            + self.d[k + 1] * h * (s3 - s2)
    }
}

fn fritsch_carlson(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let sec: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
    if n == 2 {
        return vec![sec[0], sec[0]];
    }
    let mut d = vec![0.0; n];
    for k in 1..n - 1 {
        if sec[k - 1] * sec[k] > 0.0 {
            // Brodlie's weighted harmonic mean keeps |d| ≤ 3·min(|secants|).
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            d[k] = (w1 + w2) / (w1 / sec[k - 1] + w2 / sec[k]);
        }
        // Local extremum or flat data: d[k] stays 0.
    }
    d[0] = edge_derivative(h[0], h[1], sec[0], sec[1]);
    d[n - 1] = edge_derivative(h[n - 2], h[n - 3], sec[n - 2], sec[n - 3]);
    d
}

/// One-sided three-point estimate, clipped so the boundary interval stays
/// shape-preserving.
fn edge_derivative(h0: f64, h1: f64, s0: f64, s1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * s0 - h0 * s1) / (h0 + h1);
    if d * s0 <= 0.0 {
        0.0
    } else if s0 * s1 < 0.0 && d.abs() > 3.0 * s0.abs() {
        3.0 * s0
    } else {
        d
    }
}
