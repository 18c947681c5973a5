//! Shared discretization layer: structured grids on the centered unit cube,
//! cell-centered fields, the symmetric-operator interface with its
//! finite-volume assembler, a preconditioned conjugate-gradient solver, and
//! monotone cubic interpolation.
//!
//! Every domain in the model (the periodic unit cell and the reservoir) is
//! the cube (-1/2, 1/2)^3, so `GridSpec` hard-codes that box and stores only
//! the cell counts, spacings and periodicity flags.

mod assemble;
mod cg;
mod fft;
mod interp;
mod minres;
mod op;

pub use assemble::{assemble_elliptic, BoxBc, EllipticOperator, FaceBc, SymCoeff};
pub use cg::{
    cg_solve, cg_solve_prec, orthonormalize, project_onto_complement, CgSolution,
    JacobiPreconditioner, Preconditioner,
};
pub use fft::Spectral3;
pub use interp::MonotoneCubic;
pub use minres::{minres_solve, MinresSolution};
pub use op::{symmetry_defect, DenseOperator, StencilOperator, SymmetricOperator};

use crate::error::{Error, Result};

/// A structured, cell-centered grid over the cube (-1/2, 1/2)^3.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    /// Cells per axis.
    pub n: [usize; 3],
    /// Cell spacing per axis (1/n, kept explicit because it is used in every
    /// stencil weight).
    pub h: [f64; 3],
    /// Periodic wrap per axis.
    pub periodic: [bool; 3],
}

impl GridSpec {
    pub fn unit_cube(n: [usize; 3], periodic: [bool; 3]) -> Result<Self> {
        for (axis, &ni) in n.iter().enumerate() {
            if ni < 2 {
                return Err(Error::InvalidInput(format!(
                    "grid axis {axis}: at least 2 cells required, got {ni}"
                )));
            }
        }
        Ok(GridSpec {
            n,
            h: [1.0 / n[0] as f64, 1.0 / n[1] as f64, 1.0 / n[2] as f64],
            periodic,
        })
    }

    /// Fully periodic cube with n cells per axis (the unit cell).
    pub fn periodic_cube(n: usize) -> Result<Self> {
        Self::unit_cube([n, n, n], [true, true, true])
    }

    /// Non-periodic cube with n cells per axis (the reservoir).
    pub fn box_cube(n: usize) -> Result<Self> {
        Self::unit_cube([n, n, n], [false, false, false])
    }

    pub fn cells(&self) -> usize {
        self.n[0] * self.n[1] * self.n[2]
    }

    /// Cell volume.
    pub fn volume(&self) -> f64 {
        self.h[0] * self.h[1] * self.h[2]
    }

    #[inline]
    pub fn index(&self, c: [usize; 3]) -> usize {
        debug_assert!(c[0] < self.n[0] && c[1] < self.n[1] && c[2] < self.n[2]);
        c[0] + self.n[0] * (c[1] + self.n[1] * c[2])
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.n[0];
        let j = (idx / self.n[0]) % self.n[1];
        let k = idx / (self.n[0] * self.n[1]);
        [i, j, k]
    }

    /// Coordinate of the cell center along one axis.
    #[inline]
    pub fn center(&self, axis: usize, i: usize) -> f64 {
        (i as f64 + 0.5) * self.h[axis] - 0.5
    }

    pub fn cell_center(&self, c: [usize; 3]) -> [f64; 3] {
        [self.center(0, c[0]), self.center(1, c[1]), self.center(2, c[2])]
    }

    /// Linear strides per axis for neighbor arithmetic.
    #[inline]
    pub fn strides(&self) -> [usize; 3] {
        [1, self.n[0], self.n[0] * self.n[1]]
    }
}

/// One scalar value per cell.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    pub grid: GridSpec,
    pub data: Vec<f64>,
}

impl ScalarField {
    pub fn constant(grid: GridSpec, value: f64) -> Self {
        ScalarField { grid, data: vec![value; grid.cells()] }
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn([f64; 3]) -> f64) -> Self {
        let mut data = Vec::with_capacity(grid.cells());
        for k in 0..grid.n[2] {
            for j in 0..grid.n[1] {
                for i in 0..grid.n[0] {
                    data.push(f(grid.cell_center([i, j, k])));
                }
            }
        }
        ScalarField { grid, data }
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        neumaier_sum(self.data.iter().copied()) / self.data.len() as f64
    }
}

/// One 3-vector per cell, stored interleaved: component d of cell c sits at
/// data[3 c + d].
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    pub grid: GridSpec,
    pub data: Vec<f64>,
}

impl VectorField {
    pub fn zeros(grid: GridSpec) -> Self {
        VectorField { grid, data: vec![0.0; 3 * grid.cells()] }
    }

    #[inline]
    pub fn get(&self, cell: usize) -> [f64; 3] {
        [self.data[3 * cell], self.data[3 * cell + 1], self.data[3 * cell + 2]]
    }

    #[inline]
    pub fn set(&mut self, cell: usize, v: [f64; 3]) {
        self.data[3 * cell] = v[0];
        self.data[3 * cell + 1] = v[1];
        self.data[3 * cell + 2] = v[2];
    }

    pub fn max_norm(&self) -> f64 {
        (0..self.grid.cells()).fold(0.0f64, |m, c| {
            let v = self.get(c);
            m.max((v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt())
        })
    }
}

/// Compensated (Neumaier) summation; used where quadratures and balance
/// checks must not drown in rounding noise.
pub fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = Accumulator::default();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Accumulator {
    sum: f64,
    comp: f64,
}

impl Accumulator {
    #[inline]
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Tiny deterministic PRNG (SplitMix64) for symmetry probes and randomized
/// self-checks; deliberately dependency-free so library behavior is
/// bit-reproducible everywhere.
#[derive(Clone, Debug)]
pub struct SplitMix64(u64);

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64(seed)
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1).
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_index_and_coords_round_trip() {
        let g = GridSpec::unit_cube([4, 3, 5], [false, true, false]).unwrap();
        for idx in 0..g.cells() {
            assert_eq!(g.index(g.coords(idx)), idx);
        }
        assert_eq!(g.cells(), 60);
        assert!((g.h[0] - 0.25).abs() < 1e-16);
    }

    #[test]
    fn cell_centers_span_the_centered_unit_cube() {
        let g = GridSpec::box_cube(8).unwrap();
        assert!((g.center(0, 0) + 0.5 - 0.5 * g.h[0]).abs() < 1e-15);
        assert!((g.center(0, 7) - (0.5 - 0.5 * g.h[0])).abs() < 1e-15);
        // symmetric about the origin
        assert!((g.center(1, 3) + g.center(1, 4)).abs() < 1e-15);
    }

    #[test]
    fn grid_rejects_degenerate_axis() {
        assert!(GridSpec::unit_cube([1, 8, 8], [false; 3]).is_err());
    }

    #[test]
    fn neumaier_sum_handles_cancellation() {
        // 1 + 1e100 - 1e100 = 1 exactly under compensation
        assert_eq!(neumaier_sum([1.0, 1e100, -1e100]), 1.0);
    }

    #[test]
    fn splitmix_is_deterministic_and_in_range() {
        let mut a = SplitMix64::new(42);
        let mut b = SplitMix64::new(42);
        for _ in 0..100 {
            let x = a.next_f64();
            assert_eq!(x, b.next_f64());
            assert!((0.0..1.0).contains(&x));
        }
    }
}
