//! Fluid/solid split of the unit cell by grain radius, and porosity.

use crate::error::{Error, Result};
use crate::numerics::GridSpec;
use std::collections::VecDeque;

/// Admissible radius interval and dissolution parameters. The defaults keep
/// the grain strictly inside the cell and away from the degenerate r → 0
/// limit where the Stokes problem loses its obstacle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadiusBounds {
    pub r_min: f64,
    pub r_max: f64,
    /// Dissolution rate constant θ in ∂r/∂t = −θc.
    pub theta: f64,
    /// Order-one smoothness budget; only enters the time-slab heuristic.
    pub m0: f64,
}

impl Default for RadiusBounds {
    fn default() -> Self {
        RadiusBounds { r_min: 0.05, r_max: 0.45, theta: 0.1, m0: 1.0 }
    }
}

impl RadiusBounds {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.r_min > 0.0) {
            errs.push(format!("r_min must be positive, got {}", self.r_min));
        }
        if !(self.r_min < self.r_max) {
            errs.push(format!("need r_min < r_max, got {} >= {}", self.r_min, self.r_max));
        }
        if !(self.r_max < 0.5) {
            errs.push(format!("r_max must stay below 1/2, got {}", self.r_max));
        }
        if !(self.theta > 0.0) {
            errs.push(format!("theta must be positive, got {}", self.theta));
        }
        if !(self.m0 > 0.0) {
            errs.push(format!("m0 must be positive, got {}", self.m0));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }

    pub fn clamp(&self, r: f64) -> f64 {
        r.clamp(self.r_min, self.r_max)
    }
}

/// Characteristic function of the fluid: 1 for |y| > r, 0 for |y| ≤ r (the
/// measure-zero sphere |y| = r counts as solid so the no-slip surface is
/// never lost).
pub fn chi(r: f64, y: [f64; 3]) -> Result<u8> {
    if !(0.0..=0.5).contains(&r) {
        return Err(Error::InvalidInput(format!("radius {r} outside [0, 1/2]")));
    }
    for c in y {
        if !(-0.5..=0.5).contains(&c) {
            return Err(Error::InvalidInput(format!("point {y:?} outside the unit cell")));
        }
    }
    let d2 = y[0] * y[0] + y[1] * y[1] + y[2] * y[2];
    Ok(if d2 > r * r { 1 } else { 0 })
}

/// Fluid volume fraction m(r) = 1 − (4π/3)r³ of the cell, exact.
pub fn porosity(r: f64) -> Result<f64> {
    if !(0.0..=0.5).contains(&r) {
        return Err(Error::InvalidInput(format!("radius {r} outside [0, 1/2]")));
    }
    Ok(1.0 - 4.0 * std::f64::consts::PI / 3.0 * r * r * r)
}

#[derive(Clone, Debug)]
pub struct UnitCellMask {
    pub r: f64,
    pub grid: GridSpec,
    /// true = inside the grain; indexed like the grid.
    pub solid: Vec<bool>,
    /// Subcell-sampled fluid fraction, diagnostic only — the macroscopic
    /// model always uses the exact `porosity`.
    pub fluid_volume_fraction: f64,
}

impl UnitCellMask {
    #[inline]
    pub fn is_solid(&self, idx: usize) -> bool {
        self.solid[idx]
    }

    pub fn fluid_cells(&self) -> usize {
        self.solid.iter().filter(|&&s| !s).count()
    }

    pub fn solid_cells(&self) -> usize {
        self.solid.len() - self.fluid_cells()
    }
}

/// Voxelize the grain of radius r on an n³ periodic grid. The solid flag is
/// chi at the cell center; the stored fluid fraction refines that with 8
/// subsamples per cell. Rejects grains the grid cannot resolve (r < 1.5h)
/// and masks whose fluid region is not 6-connected across periodic faces.
pub fn build_cell_mask(r: f64, n: usize) -> Result<UnitCellMask> {
    if !(r > 0.0 && r < 0.5) {
        return Err(Error::InvalidInput(format!("radius {r} outside (0, 1/2)")));
    }
    if n < 8 {
        return Err(Error::InvalidInput(format!("cell resolution {n} below the minimum of 8")));
    }
    let grid = GridSpec::periodic_cube(n)?;
    let h = grid.h[0];
    if r / h < 1.5 {
        return Err(Error::InvalidInput(format!(
            "cell resolution {n} cannot resolve a grain of radius {r} (need r/h >= 1.5, got {:.3})",
            r / h
        )));
    }

    let cells = grid.cells();
    let mut solid = vec![false; cells];
    let mut fluid_samples = 0u64;
    let quarter = 0.25 * h;
    for idx in 0..cells {
        let c = grid.cell_center(grid.coords(idx));
        solid[idx] = chi(r, c)? == 0;
        for s in 0..8 {
            let y = [
                c[0] + if s & 1 == 0 { -quarter } else { quarter },
                c[1] + if s & 2 == 0 { -quarter } else { quarter },
                c[2] + if s & 4 == 0 { -quarter } else { quarter },
            ];
            fluid_samples += u64::from(chi(r, y)?);
        }
    }
    let fluid_volume_fraction = fluid_samples as f64 / (8 * cells) as f64;
    if !(0.0..1.0).contains(&fluid_volume_fraction) || fluid_volume_fraction == 0.0 {
        return Err(Error::InvalidInput(format!(
            "degenerate mask: fluid fraction {fluid_volume_fraction}"
        )));
    }

    let mask = UnitCellMask { r, grid, solid, fluid_volume_fraction };
    if !fluid_connected(&mask) {
        return Err(Error::InvalidInput(format!(
            "fluid region disconnected at r = {r}, n = {n}"
        )));
    }
    Ok(mask)
}

/// 6-connected flood fill over fluid voxels with periodic wrap.
fn fluid_connected(mask: &UnitCellMask) -> bool {
    let grid = &mask.grid;
    let cells = grid.cells();
    let Some(start) = mask.solid.iter().position(|&s| !s) else {
        return false;
    };
    let mut seen = vec![false; cells];
    let mut queue = VecDeque::new();
    seen[start] = true;
    queue.push_back(start);
    let mut reached = 1usize;
    while let Some(idx) = queue.pop_front() {
        let c = grid.coords(idx);
        for d in 0..3 {
            for dir in [-1isize, 1] {
                let mut nb = c;
                nb[d] = (c[d] as isize + dir).rem_euclid(grid.n[d] as isize) as usize;
                let nidx = grid.index(nb);
                if !seen[nidx] && !mask.solid[nidx] {
                    seen[nidx] = true;
                    reached += 1;
                    queue.push_back(nidx);
                }
            }
        }
    }
    reached == cells - mask.solid_cells()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chi_classifies_center_surface_and_corner() {
        assert_eq!(chi(0.3, [0.0, 0.0, 0.0]).unwrap(), 0);
        assert_eq!(chi(0.3, [0.5, 0.5, 0.5]).unwrap(), 1);
        assert_eq!(chi(0.3, [0.3, 0.0, 0.0]).unwrap(), 0); // tie → solid
        assert!(chi(0.6, [0.0; 3]).is_err());
        assert!(chi(0.3, [0.6, 0.0, 0.0]).is_err());
    }

    #[test]
    fn porosity_matches_the_closed_form() {
        assert_eq!(porosity(0.0).unwrap(), 1.0);
        let p25 = porosity(0.25).unwrap();
        assert!((p25 - (1.0 - 4.0 * std::f64::consts::PI / 3.0 * 0.015625)).abs() == 0.0);
        assert!((p25 - 0.9345501530502127).abs() < 1e-15);
        let p50 = porosity(0.5).unwrap();
        assert!((p50 - (1.0 - std::f64::consts::PI / 6.0)).abs() < 1e-15);
        assert!(porosity(-0.1).is_err());
        assert!(porosity(0.51).is_err());
    }

    #[test]
    fn porosity_plus_grain_volume_is_one() {
        for i in 0..=50 {
            let r = 0.5 * i as f64 / 50.0;
            let m = porosity(r).unwrap();
            let grain = 4.0 * std::f64::consts::PI / 3.0 * r * r * r;
            assert!((m + grain - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn mask_fraction_converges_to_porosity() {
        let m = porosity(0.25).unwrap();
        let mut prev = f64::INFINITY;
        for n in [16usize, 32, 64] {
            let mask = build_cell_mask(0.25, n).unwrap();
            let err = (mask.fluid_volume_fraction - m).abs();
            assert!(err <= 5.0 / n as f64, "n={n}: err={err}");
            assert!(err <= prev, "n={n}: err {err} did not decrease from {prev}");
            prev = err;
        }
    }

    #[test]
    fn mask_is_symmetric_under_cube_symmetries() {
        let n = 32;
        let mask = build_cell_mask(0.3, n).unwrap();
        let grid = mask.grid;
        let flip = |i: usize| n - 1 - i;
        for idx in 0..grid.cells() {
            let [i, j, k] = grid.coords(idx);
            // Axis permutation (i,j,k) → (j,k,i) and reflection of each axis.
            assert_eq!(mask.solid[idx], mask.solid[grid.index([j, k, i])]);
            assert_eq!(mask.solid[idx], mask.solid[grid.index([flip(i), j, k])]);
            assert_eq!(mask.solid[idx], mask.solid[grid.index([i, flip(j), flip(k)])]);
        }
    }

    #[test]
    fn mask_fluid_region_is_connected_for_admissible_radii() {
        for r in [0.05, 0.25, 0.45] {
            let n = 32;
            let mask = build_cell_mask(r, n).unwrap();
            assert!(mask.fluid_volume_fraction > 0.5);
        }
    }

    #[test]
    fn unresolvable_masks_are_rejected() {
        assert!(build_cell_mask(0.05, 16).is_err()); // r/h = 0.8
        assert!(build_cell_mask(0.10, 16).is_ok()); // r/h = 1.6
        assert!(build_cell_mask(0.3, 4).is_err());
        assert!(build_cell_mask(0.0, 32).is_err());
        assert!(build_cell_mask(0.5, 32).is_err());
    }

    #[test]
    fn masks_are_deterministic() {
        let a = build_cell_mask(0.27, 16).unwrap();
        let b = build_cell_mask(0.27, 16).unwrap();
        assert_eq!(a.solid, b.solid);
        assert_eq!(a.fluid_volume_fraction, b.fluid_volume_fraction);
    }

    #[test]
    fn default_bounds_are_valid() {
        RadiusBounds::default().validate().unwrap();
        let bad = RadiusBounds { r_min: 0.4, r_max: 0.3, theta: -1.0, ..Default::default() };
        match bad.validate() {
            Err(crate::error::Error::Validation(v)) => assert!(v.len() >= 2),
            other => panic!("expected aggregated validation errors, got {other:?}"),
        }
    }
}
