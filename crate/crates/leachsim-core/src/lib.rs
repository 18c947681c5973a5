//! Solvers for an in-situ leaching simulator built from periodic
//! homogenization: unit-cell corrector problems produce effective
//! permeability, diffusivity and stiffness tensors as functions of the grain
//! radius; a reservoir model consumes the tabulated tensors; and a Picard
//! fixed-point loop couples acid transport to grain dissolution.
//!
//! Layering, bottom to top: [`numerics`] (grids, fields, CG, assembly,
//! interpolation), [`cell`] (unit-cell geometry and the three corrector
//! problems), [`table`] (tabulation + interpolation of effective tensors),
//! [`reservoir`] (head, Lamé and acid-diffusion solvers), [`coupling`]
//! (dissolution law and the slab-chained Picard iteration), [`io`]
//! (config, table and snapshot persistence).

pub mod error;
pub mod linalg;
pub mod numerics;

pub mod cell;
pub mod coupling;
pub mod io;
pub mod reservoir;
pub mod table;

pub use error::{Error, Result};

/// Cap the global worker pool used by tabulation. Call once, before any
/// parallel work; `None` keeps the default (available parallelism).
pub fn init_worker_threads(n: Option<usize>) -> Result<()> {
    let Some(n) = n else { return Ok(()) };
    if n == 0 {
        return Err(Error::InvalidInput("worker thread count must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::InvalidInput(format!("worker pool: {e}")))
}

#[cfg(test)]
pub(crate) mod test_util {
    //! One shared coefficient table for the unit tests; tabulation runs the
    //! full cell-problem stack and is by far the most expensive fixture.

    use crate::cell::RadiusBounds;
    use crate::table::{tabulate, CellPhysics, CoefficientTable};
    use std::sync::OnceLock;

    pub fn test_bounds() -> RadiusBounds {
        RadiusBounds { r_min: 0.15, r_max: 0.45, ..RadiusBounds::default() }
    }

    pub fn shared_table() -> &'static CoefficientTable {
        static TABLE: OnceLock<CoefficientTable> = OnceLock::new();
        TABLE.get_or_init(|| tabulate(&test_bounds(), 5, 16, &CellPhysics::default()).unwrap())
    }
}
